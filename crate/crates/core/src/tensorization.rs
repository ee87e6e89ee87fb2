//! Approximate tensorization: the rotated-Petz integral bound, weak and strong constants,
//! clustering norms, per-state certificates, and the entropic uncertainty relations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{condexp_tau, ConditionalExpectationRep};
use crate::entropy::{dmax, imax_bipartite, relative_entropy, von_neumann_entropy};
use crate::error::{AtlabError, Result};
use crate::linops::{
    self, complex_power, eigh, hermitian_eig, hermitian_part, identity, psd_log, r, spectral_norm,
    tensor_product, Operator, SupportPolicy, C64,
};
use crate::maps::{choi, compose, hs_adjoint, pinch, state_pinching_projectors, subtract, SuperOperator};
use crate::sampling::{self, haar_vector, random_hermitian, Rng};
use crate::sdp::{self, SdpBracket};
use crate::tol;

/// Absolute tolerance for the inclusion `E_i ∘ E_M = E_M ∘ E_i = E_M`.
pub const INCLUSION_TOL: f64 = 1e-9;
/// Absolute tolerance for the shared invariant state.
pub const SHARED_STATE_TOL: f64 = 1e-10;
/// Relative SDP gap used for the weak constants.
const WEAK_SDP_GAP: f64 = 1e-10;

/// `M ⊂ N_1, N_2 ⊂ B(H)` given by their conditional expectations with a common invariant state.
#[derive(Debug, Clone)]
pub struct ATQuadruple {
    pub e_m: ConditionalExpectationRep,
    pub e1: ConditionalExpectationRep,
    pub e2: ConditionalExpectationRep,
    pub sigma: Operator,
    /// Largest inclusion residual found at construction.
    pub inclusion_residual: f64,
}

/// `ρ_M`, `ρ_1`, `ρ_2` for one state.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub rho_m: Operator,
    pub rho_1: Operator,
    pub rho_2: Operator,
}

impl ATQuadruple {
    pub fn new(
        e_m: ConditionalExpectationRep,
        e1: ConditionalExpectationRep,
        e2: ConditionalExpectationRep,
    ) -> Result<Self> {
        let d = e_m.dim;
        if e1.dim != d || e2.dim != d {
            return Err(AtlabError::Dimension(format!(
                "conditional expectations act on dimensions {d}, {}, {}",
                e1.dim, e2.dim
            )));
        }
        let sigma = e_m.sigma.clone();
        for (name, e) in [("E_M", &e_m), ("E_1", &e1), ("E_2", &e2)] {
            let drift = (e.apply_dual(&sigma) - &sigma).norm();
            if drift > SHARED_STATE_TOL {
                return Err(AtlabError::Contract(format!(
                    "{name} does not leave the shared state invariant (residual {drift:.3e})"
                )));
            }
        }
        let mut worst: f64 = 0.0;
        for e in [&e1, &e2] {
            // M ⊂ N_i: E_i fixes every element of M.
            for f in &e_m.kms_basis {
                worst = worst.max((e.apply(f) - f).norm() / f.norm().max(1.0));
            }
            // E_M ∘ E_i = E_M iff E_{i*} fixes the duals W_k of E_M = Σ F_k ⟨W_k, ·⟩.
            for (f, w) in e_m.kms_basis.iter().zip(&e_m.duals) {
                worst = worst.max((e.apply_dual(w) - w).norm() * f.norm());
            }
        }
        if worst > INCLUSION_TOL {
            return Err(AtlabError::Contract(format!(
                "ranges are not nested (residual {worst:.3e})"
            )));
        }
        Ok(Self {
            e_m,
            e1,
            e2,
            sigma,
            inclusion_residual: worst,
        })
    }

    pub fn dim(&self) -> usize {
        self.e_m.dim
    }

    pub fn marginals(&self, rho: &Operator) -> Marginals {
        Marginals {
            rho_m: self.e_m.apply_dual(rho),
            rho_1: self.e1.apply_dual(rho),
            rho_2: self.e2.apply_dual(rho),
        }
    }

    /// `E_{1*} ∘ E_{2*}(ρ)`.
    pub fn double_dual(&self, rho: &Operator) -> Operator {
        self.e1.apply_dual(&self.e2.apply_dual(rho))
    }

    /// The same algebras with tracial conditional expectations.
    pub fn tracial(&self) -> Result<Self> {
        Self::new(
            condexp_tau(&self.e_m.range)?,
            condexp_tau(&self.e1.range)?,
            condexp_tau(&self.e2.range)?,
        )
    }

    /// `(E_1 ∘ E_2 − E_M)` as a dense superoperator.
    pub fn deviation_superop(&self) -> Result<SuperOperator> {
        let prod = compose(self.e1.superop()?, self.e2.superop()?);
        Ok(subtract(&prod, self.e_m.superop()?))
    }
}

/// Two-sided estimate of a supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// Set when the bounds differ by more than `BRACKET_WIDE` relative to the upper bound.
    pub wide: bool,
}

impl Bracket {
    pub fn new(lower: f64, upper: f64) -> Self {
        let scale = upper.abs().max(lower.abs()).max(1e-12);
        Self {
            lower,
            upper,
            wide: (upper - lower) > tol::BRACKET_WIDE * scale,
        }
    }

    pub fn exact(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Settings for the seeded nonconvex ascents behind every lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub restarts: usize,
    pub step: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            step: 0.1,
            max_iterations: 500,
            seed: 0x5eed,
        }
    }
}

fn normalized(v: DVector<C64>) -> DVector<C64> {
    let n = v.norm();
    v / r(n)
}

/// Maximizes `f` over unit vectors by random-direction ascent with step halving.
fn pure_state_ascent(
    dim: usize,
    opts: &AscentOptions,
    candidates: &[DVector<C64>],
    f: impl Fn(&DVector<C64>) -> f64,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for c in candidates {
        best = best.max(f(c));
    }
    let mut g = sampling::rng(opts.seed);
    for _ in 0..opts.restarts {
        let mut psi = haar_vector(dim, &mut g);
        let mut val = f(&psi);
        let mut step = opts.step;
        // A single random direction rarely improves near an optimum in many real dimensions, so
        // the step shrinks only after a run of failures comparable to the real dimension.
        let patience = 2 * dim;
        let mut failures = 0;
        for _ in 0..opts.max_iterations {
            let dir = haar_vector(dim, &mut g);
            let cand = normalized(&psi + dir * r(step));
            let v = f(&cand);
            if v > val {
                psi = cand;
                val = v;
                step = (step * 1.5).min(1.0);
                failures = 0;
            } else {
                failures += 1;
                if failures >= patience {
                    failures = 0;
                    step *= 0.5;
                    if step < 1e-6 {
                        break;
                    }
                }
            }
        }
        best = best.max(val);
    }
    best
}

// ---------------------------------------------------------------------------------------------
// Rotated-Petz integral
// ---------------------------------------------------------------------------------------------

/// `β₀(t) = (π/2)(cosh πt + 1)⁻¹`, a probability density on the real line.
pub fn beta0(t: f64) -> f64 {
    let c = (PI * t).cosh();
    if c.is_finite() {
        0.5 * PI / (c + 1.0)
    } else {
        0.0
    }
}

/// `∫_{|t|>T} β₀(t) dt = 2 / (1 + e^{πT})`.
pub fn beta0_tail(t: f64) -> f64 {
    2.0 / (1.0 + (PI * t).exp())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let legendre = |z: f64| -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        (p1, dp)
    };
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Target for the certified tail mass.
    pub tail: f64,
    /// Convergence threshold between successive node doublings.
    pub doubling_tol: f64,
    pub initial_nodes: usize,
    pub max_nodes: usize,
    /// Largest truncation considered overflow-safe.
    pub max_truncation: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            tail: tol::QUAD_TAIL,
            doubling_tol: tol::QUAD_DOUBLING,
            initial_nodes: 32,
            max_nodes: 1 << 14,
            max_truncation: 200.0,
        }
    }
}

/// `ln ∫ Tr[ρ₁ ρ_M^{(−1−it)/2} ρ₂ ρ_M^{(−1+it)/2}] β₀(t) dt` with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapIntegral {
    pub integral: f64,
    pub log_value: f64,
    /// Bound on `|integral − computed|` (tail plus last doubling difference).
    pub error_bound: f64,
    /// The corresponding bound on the logarithm.
    pub log_error_bound: f64,
    pub truncation: f64,
    pub nodes: usize,
    pub tail_bound: f64,
    pub warning: bool,
}

/// Spectral form `f(t) = Σ c_jk e^{−i t ω_jk / 2}` of the integrand.
#[derive(Debug, Clone)]
pub struct GapIntegrand {
    pub coefficients: Vec<C64>,
    pub frequencies: Vec<f64>,
    /// `e^{D_max(ρ₁‖ρ_M) + D_max(ρ₂‖ρ_M)}`, a bound on `|f(t)|`.
    pub sup_bound: f64,
}

impl GapIntegrand {
    pub fn new(rho_m: &Operator, rho_1: &Operator, rho_2: &Operator) -> Result<Self> {
        let (vals, vecs) = eigh(&hermitian_part(rho_m))?;
        let top = vals.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..vals.len())
            .filter(|&k| vals[k] > tol::SUPPORT_REL * top.max(f64::MIN_POSITIVE))
            .collect();
        let v = vecs.select_columns(keep.iter());
        let a = v.adjoint() * rho_1 * &v;
        let b = v.adjoint() * rho_2 * &v;
        let lam: Vec<f64> = keep.iter().map(|&k| vals[k]).collect();
        let n = lam.len();
        let mut coefficients = Vec::with_capacity(n * n);
        let mut frequencies = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                coefficients.push(a[(k, j)] * b[(j, k)] / r((lam[j] * lam[k]).sqrt()));
                frequencies.push(lam[j].ln() - lam[k].ln());
            }
        }
        let d1 = dmax(rho_1, rho_m)?.value;
        let d2 = dmax(rho_2, rho_m)?.value;
        Ok(Self {
            coefficients,
            frequencies,
            sup_bound: (d1 + d2).exp(),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.frequencies)
            .map(|(c, &w)| (c * C64::from_polar(1.0, -0.5 * t * w)).re)
            .sum()
    }

    fn quadrature(&self, truncation: f64, nodes: &[f64], weights: &[f64]) -> f64 {
        nodes
            .iter()
            .zip(weights)
            .map(|(&x, &w)| {
                let t = truncation * x;
                w * self.eval(t) * beta0(t)
            })
            .sum::<f64>()
            * truncation
    }
}

/// Evaluates the integral for given `ρ_M, ρ₁, ρ₂`.
pub fn gap_integral_from_marginals(m: &Marginals, opts: &QuadratureOptions) -> Result<GapIntegral> {
    let f = GapIntegrand::new(&m.rho_m, &m.rho_1, &m.rho_2)?;
    let mut warning = false;
    // 2M/(1+e^{πT}) ≤ tail  ⇐  T = ln(2M/tail)/π.
    let mut truncation = ((2.0 * f.sup_bound / opts.tail).ln() / PI).max(1.0);
    if !truncation.is_finite() || truncation > opts.max_truncation {
        truncation = opts.max_truncation;
        warning = true;
    }
    let tail_bound = f.sup_bound * beta0_tail(truncation);
    let mut n = opts.initial_nodes.max(2);
    let (x, w) = gauss_legendre(n);
    let mut prev = f.quadrature(truncation, &x, &w);
    let mut diff;
    loop {
        n *= 2;
        let (x, w) = gauss_legendre(n);
        let cur = f.quadrature(truncation, &x, &w);
        diff = (cur - prev).abs();
        prev = cur;
        if diff <= opts.doubling_tol {
            break;
        }
        if n >= opts.max_nodes {
            warning = true;
            break;
        }
    }
    let integral = prev;
    let error_bound = tail_bound + diff;
    let log_error_bound = if integral > error_bound {
        error_bound / (integral - error_bound)
    } else {
        warning = true;
        f64::INFINITY
    };
    Ok(GapIntegral {
        integral,
        log_value: integral.max(f64::MIN_POSITIVE).ln(),
        error_bound,
        log_error_bound,
        truncation,
        nodes: n,
        tail_bound,
        warning: warning || error_bound > tol::QUAD_ERROR,
    })
}

pub fn entropic_gap_integral(
    quad: &ATQuadruple,
    rho: &Operator,
    opts: &QuadratureOptions,
) -> Result<GapIntegral> {
    gap_integral_from_marginals(&quad.marginals(rho), opts)
}

/// Divergences `D(ρ‖ρ_M)`, `D(ρ‖ρ₁)`, `D(ρ‖ρ₂)`.
fn divergences(rho: &Operator, m: &Marginals) -> Result<(f64, f64, f64)> {
    Ok((
        relative_entropy(rho, &m.rho_m)?.value,
        relative_entropy(rho, &m.rho_1)?.value,
        relative_entropy(rho, &m.rho_2)?.value,
    ))
}

// ---------------------------------------------------------------------------------------------
// Weak constant of the integral bound
// ---------------------------------------------------------------------------------------------

/// `ρ ↦ ln min{Tr Y : Y = ⊕ y_i ⊗ τ_i ≥ ρ}` over the state space of `M`.
struct RangeDomination {
    stack: DMatrix<C64>,
    weight: Operator,
    shapes: Vec<sdp::BlockShape>,
}

impl RangeDomination {
    fn new(e_m: &ConditionalExpectationRep) -> Result<Self> {
        let d = e_m.dim;
        let mut stack = DMatrix::<C64>::zeros(d, d);
        let mut weight = linops::zeros(d);
        let mut shapes = Vec::new();
        let mut row = 0;
        for (block, tau) in e_m.range.blocks.iter().zip(&e_m.tau_blocks) {
            let n = block.dh * block.dk;
            stack.rows_mut(row, n).copy_from(&block.factorizer);
            let t = complex_power(tau, r(-0.5), SupportPolicy::Error)?;
            let local = tensor_product(&identity(block.dh), &t);
            weight.view_mut((row, row), (n, n)).copy_from(&local);
            shapes.push((block.dh, block.dk));
            row += n;
        }
        if row != d {
            return Err(AtlabError::Contract("range algebra blocks do not cover the space".into()));
        }
        Ok(Self {
            stack,
            weight,
            shapes,
        })
    }

    fn solve(&self, x: &Operator) -> SdpBracket {
        let w = &self.weight * (&self.stack * x * self.stack.adjoint()) * &self.weight;
        sdp::min_trace_dominating_with(&hermitian_part(&w), &self.shapes, WEAK_SDP_GAP, tol::SDP_BUDGET)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakConstant {
    pub bracket: Bracket,
    /// `ln max_l min{Tr Y : Y ≥ E_{1*}(1_{H_l} ⊗ τ_l)}` over the blocks of `N₂`.
    pub block_upper: f64,
    /// `ln min{c : c·E_{M*} − E_{1*}∘E_{2*} completely positive}`; absent without dense maps.
    pub cp_upper: Option<f64>,
}

/// `d = sup_{ρ∈D(N₂)} inf_{η∈D(M)} D_max(E_{1*}ρ‖η)`.
///
/// Both upper bounds are rigorous: the supremum of this convex functional is attained at pure
/// block states `ψ ⊗ τ_l`, each dominated by `1 ⊗ τ_l`; and a completely positive
/// `c·E_{M*} − E_{1*}∘E_{2*}` makes `Y = c·ρ_M` feasible.
pub fn weak_d_corollary(quad: &ATQuadruple, opts: &AscentOptions) -> Result<WeakConstant> {
    let dom = RangeDomination::new(&quad.e_m)?;
    let n2 = &quad.e2.range;
    let mut lower = f64::NEG_INFINITY;
    let mut block_upper = f64::NEG_INFINITY;
    for (l, (block, tau)) in n2.blocks.iter().zip(&quad.e2.tau_blocks).enumerate() {
        let lift = |psi: &DVector<C64>| -> Operator {
            let local = tensor_product(&(psi * psi.adjoint()), tau);
            n2.expand(l, &local)
        };
        let whole = n2.expand(l, &tensor_product(&identity(block.dh), tau));
        block_upper = block_upper.max(dom.solve(&quad.e1.apply_dual(&whole)).ln_upper());
        let value = |psi: &DVector<C64>| dom.solve(&quad.e1.apply_dual(&lift(psi))).ln_lower();
        let basis: Vec<DVector<C64>> = (0..block.dh)
            .map(|k| DVector::from_fn(block.dh, |i, _| r(if i == k { 1.0 } else { 0.0 })))
            .collect();
        let sub = if block.dh == 1 {
            AscentOptions { restarts: 0, ..*opts }
        } else {
            AscentOptions {
                seed: opts.seed.wrapping_add(l as u64),
                ..*opts
            }
        };
        lower = lower.max(pure_state_ascent(block.dh, &sub, &basis, value));
    }
    let cp_upper = match (quad.e1.superop(), quad.e2.superop(), quad.e_m.superop()) {
        (Ok(e1), Ok(e2), Ok(em)) => Some(cp_domination(&hs_adjoint(&compose(e2, e1)), &hs_adjoint(em))?),
        _ => None,
    };
    let upper = cp_upper.map_or(block_upper, |c| c.min(block_upper));
    Ok(WeakConstant {
        bracket: Bracket::new(lower.min(upper), upper),
        block_upper,
        cp_upper,
    })
}

/// `ln min{c : c·ψ − φ is completely positive}` from Choi matrices.
pub fn cp_domination(phi: &SuperOperator, psi: &SuperOperator) -> Result<f64> {
    let jp = hermitian_part(&choi(phi));
    let jq = hermitian_part(&choi(psi));
    let support = linops::support_projector(&jq)?;
    let outside = identity(jq.nrows()) - &support;
    if (&outside * &jp * &outside).norm() > 1e-9 * jp.norm().max(1.0) {
        return Ok(f64::INFINITY);
    }
    let s = complex_power(&jq, r(-0.5), SupportPolicy::RestrictToSupport)?;
    let (vals, _) = eigh(&hermitian_part(&(&s * jp * &s)))?;
    Ok(vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE).ln())
}

/// Closed form `max_l ln(Σ_k min(a_kl, n_k) s_k / t_l)` for doubly stochastic inclusions.
///
/// `a[k][l]` is the multiplicity of the `k`-th block of `M` (size `n_k`, commutant size `s_k`)
/// inside the `l`-th block of `N₂` (commutant size `t_l`).
pub fn doubly_stochastic_closed_form(
    a: &[Vec<usize>],
    n: &[usize],
    s: &[usize],
    t: &[usize],
) -> f64 {
    (0..t.len())
        .map(|l| {
            let sum: f64 = (0..n.len())
                .map(|k| a[k][l].min(n[k]) as f64 * s[k] as f64)
                .sum();
            (sum / t[l] as f64).ln()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------------------------
// Clustering norms
// ---------------------------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockNorm {
    pub block: usize,
    pub norm_lower: f64,
    pub norm_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringEstimate {
    pub per_block: Vec<BlockNorm>,
    /// Largest upper bound over blocks.
    pub c1: f64,
    pub notes: String,
}

impl ClusteringEstimate {
    pub fn bracket(&self) -> Bracket {
        let lower = self.per_block.iter().map(|b| b.norm_lower).fold(0.0, f64::max);
        Bracket::new(lower, self.c1)
    }
}

/// Matrix of `Y ↦ E^{(i)}(Y)` on `B(K_i)`, read off from `E(U_i†(|0⟩⟨0| ⊗ Y)U_i)`.
fn block_restriction(
    quad: &ATQuadruple,
    i: usize,
    map: impl Fn(&Operator) -> Operator,
) -> DMatrix<C64> {
    let dec = &quad.e_m.range;
    let b = &dec.blocks[i];
    let dk = b.dk;
    let e00 = linops::matrix_unit(b.dh, 0, 0);
    let mut m = DMatrix::<C64>::zeros(dk * dk, dk * dk);
    for k in 0..dk {
        for l in 0..dk {
            let x = dec.expand(i, &tensor_product(&e00, &linops::matrix_unit(dk, k, l)));
            let y = dec.compress(i, &map(&x));
            let out = y.view((0, 0), (dk, dk));
            for a in 0..dk {
                for c in 0..dk {
                    m[(a * dk + c, k * dk + l)] = out[(a, c)];
                }
            }
        }
    }
    m
}

/// `T^{(i)} = E_1^{(i)} ∘ E_2^{(i)} − E_M^{(i)}` on `B(K_i)`.
pub fn block_deviation(quad: &ATQuadruple, i: usize) -> DMatrix<C64> {
    let prod = block_restriction(quad, i, |x| quad.e1.apply(&quad.e2.apply(x)));
    let em = block_restriction(quad, i, |x| quad.e_m.apply(x));
    prod - em
}

/// `S_{(ac),(bd)} ↦ R_{(ab),(cd)}`.
fn reshuffle(s: &DMatrix<C64>, n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n * n, n * n, |row, col| {
        let (a, b) = (row / n, row % n);
        let (c, d) = (col / n, col % n);
        s[(a * n + c, b * n + d)]
    })
}

/// Largest `|(w̄ ⊗ u)ᵀ R (z ⊗ v̄)|` over unit vectors found by alternating maximization.
fn product_vector_ascent(rm: &DMatrix<C64>, n: usize, opts: &AscentOptions) -> f64 {
    let idx = |a: usize, b: usize, c: usize, d: usize| (a * n + b, c * n + d);
    let mut g = sampling::rng(opts.seed);
    let mut best: f64 = 0.0;
    let unit = |v: DVector<C64>| {
        let nv = v.norm();
        if nv > 0.0 {
            v / r(nv)
        } else {
            v
        }
    };
    for _ in 0..opts.restarts.max(1) {
        let mut w: DVector<C64>;
        let mut u = haar_vector(n, &mut g);
        let mut z = haar_vector(n, &mut g);
        let mut v = haar_vector(n, &mut g);
        let mut val = 0.0;
        for _ in 0..opts.max_iterations {
            // Optimal w given the rest: w ∝ Σ u_b z_c v̄_d R[(ab),(cd)].
            let mut gw = DVector::<C64>::zeros(n);
            for a in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            acc += u[b] * z[c] * v[d].conj() * rm[idx(a, b, c, d)];
                        }
                    }
                }
                gw[a] = acc;
            }
            w = unit(gw);
            let mut gu = DVector::<C64>::zeros(n);
            for b in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            acc += w[a].conj() * z[c] * v[d].conj() * rm[idx(a, b, c, d)];
                        }
                    }
                }
                gu[b] = acc.conj();
            }
            u = unit(gu);
            let mut gz = DVector::<C64>::zeros(n);
            for c in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        for d in 0..n {
                            acc += w[a].conj() * u[b] * v[d].conj() * rm[idx(a, b, c, d)];
                        }
                    }
                }
                gz[c] = acc.conj();
            }
            z = unit(gz);
            let mut gv = DVector::<C64>::zeros(n);
            for d in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            acc += w[a].conj() * u[b] * z[c] * rm[idx(a, b, c, d)];
                        }
                    }
                }
                gv[d] = acc;
            }
            let new_val = gv.norm();
            v = unit(gv);
            let improved = new_val - val;
            val = new_val;
            if improved <= 1e-14 * val.max(1.0) {
                break;
            }
        }
        best = best.max(val);
    }
    best
}

/// `max_i ‖E_1^{(i)}∘E_2^{(i)} − E_M^{(i)} : L₁(τ_i) → L_∞‖` with per-block brackets.
pub fn c1_conditional_l1(quad: &ATQuadruple, opts: &AscentOptions) -> Result<ClusteringEstimate> {
    let mut per_block = Vec::new();
    for (i, (block, tau)) in quad.e_m.range.blocks.iter().zip(&quad.e_m.tau_blocks).enumerate() {
        let n = block.dk;
        let t = block_deviation(quad, i);
        let ti = complex_power(tau, r(-0.5), SupportPolicy::Error)?;
        let gamma_inv = tensor_product(&ti, &ti.transpose());
        let s = t * gamma_inv;
        let rm = reshuffle(&s, n);
        let upper = spectral_norm(&rm);
        let sub = AscentOptions {
            seed: opts.seed.wrapping_add(i as u64),
            ..*opts
        };
        // The ascent value is attained, so it can exceed the upper bound only by rounding.
        let lower = product_vector_ascent(&rm, n, &sub).min(upper);
        per_block.push(BlockNorm {
            block: i,
            norm_lower: lower,
            norm_upper: upper,
        });
    }
    let c1 = per_block.iter().map(|b| b.norm_upper).fold(0.0, f64::max);
    Ok(ClusteringEstimate {
        per_block,
        c1,
        notes: "upper: spectral norm of the reshuffled matrix of T∘Γ_τ⁻¹; lower: alternating \
                ascent over rank-one inputs and outputs"
            .into(),
    })
}

/// Sampled `|⟨Y, T X⟩_τ| / (‖X‖_{L₁(τ)} ‖Y‖_{L₁(τ)})` per block, a lower bound on each block norm.
pub fn covariance_lower_bounds(quad: &ATQuadruple, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let mut g = sampling::rng(seed);
    let mut out = Vec::new();
    for (i, (block, tau)) in quad.e_m.range.blocks.iter().zip(&quad.e_m.tau_blocks).enumerate() {
        let n = block.dk;
        let t = block_deviation(quad, i);
        let th = complex_power(tau, r(0.5), SupportPolicy::Error)?;
        let gamma = |x: &Operator| &th * x * &th;
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let x = sampling::ginibre(n, n, &mut g);
            let y = sampling::ginibre(n, n, &mut g);
            let tx = linops::unvectorize_slice((&t * linops::vectorize(&x)).as_slice(), n);
            let cov = (gamma(&y).adjoint() * tx).trace().norm();
            let denom = linops::trace_norm(&gamma(&x)) * linops::trace_norm(&gamma(&y));
            best = best.max(cov / denom);
        }
        out.push(best);
    }
    Ok(out)
}

/// `Γ_σ^{1/2} ∘ Φ ∘ Γ_σ^{−1/2}` for `Γ_σ^{1/2}(X) = σ^{1/4} X σ^{1/4}`.
pub fn modular_symmetrization(phi: &DMatrix<C64>, sigma: &Operator) -> Result<DMatrix<C64>> {
    let q = complex_power(sigma, r(0.25), SupportPolicy::Error)?;
    let qi = complex_power(sigma, r(-0.25), SupportPolicy::Error)?;
    let g = tensor_product(&q, &q.transpose());
    let gi = tensor_product(&qi, &qi.transpose());
    Ok(g * phi * gi)
}

/// `‖E₁∘E₂ − E_M : L₂(σ′) → L₂(σ′)‖`, defaulting to the shared state.
pub fn c2_strong_l2(quad: &ATQuadruple, sigma_prime: Option<&Operator>) -> Result<f64> {
    let t = quad.deviation_superop()?;
    let s = sigma_prime.unwrap_or(&quad.sigma);
    Ok(spectral_norm(&modular_symmetrization(&t.matrix, s)?))
}

/// Per-block `‖T^{(i)} : L₂(τ_i) → L₂(τ_i)‖` and their maximum.
pub fn conditional_l2(quad: &ATQuadruple) -> Result<(Vec<f64>, f64)> {
    let mut norms = Vec::new();
    for (i, tau) in quad.e_m.tau_blocks.iter().enumerate() {
        let t = block_deviation(quad, i);
        norms.push(spectral_norm(&modular_symmetrization(&t, tau)?));
    }
    let max = norms.iter().copied().fold(0.0, f64::max);
    Ok((norms, max))
}

/// `‖Γ_ρ^{1/2} E Γ_ρ^{−1/2} − Γ_σ^{1/2} E Γ_σ^{−1/2}‖` for two invariant states.
pub fn symmetrization_residual(e: &SuperOperator, rho: &Operator, sigma: &Operator) -> Result<f64> {
    let a = modular_symmetrization(&e.matrix, rho)?;
    let b = modular_symmetrization(&e.matrix, sigma)?;
    Ok(spectral_norm(&(a - b)))
}

/// Random state invariant under all three conditional expectations: `E_{M*}(ρ)` for random `ρ`.
pub fn random_invariant_state(quad: &ATQuadruple, g: &mut Rng) -> Operator {
    let rho = sampling::random_density(quad.dim(), g);
    quad.e_m.apply_dual(&rho)
}

// ---------------------------------------------------------------------------------------------
// d₁, d₂
// ---------------------------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct D1D2Report {
    pub d1: Bracket,
    pub d2: Bracket,
    /// `max_i ln |I_M^{(i)}|` with `N = B(H)`.
    pub d1_dim_bound: f64,
    /// `2 max_i min(ln dH_i, ln dK_i)`.
    pub d2_dim_bound: f64,
    /// `max ‖E_{1*}E_{2*}(X) − E_{1*}E_{2*}(P_M X)‖` over matrix units.
    pub off_diagonal_residual: f64,
    pub off_diagonal_cancels: bool,
}

pub fn d1_d2(quad: &ATQuadruple, opts: &AscentOptions) -> Result<D1D2Report> {
    let d = quad.dim();
    let centrals = quad.e_m.range.central_projectors();
    let p_m = |x: &Operator| pinch(&centrals, x);
    let mut residual: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let x = linops::matrix_unit(d, a, b);
            residual = residual.max((quad.double_dual(&x) - quad.double_dual(&p_m(&x))).norm());
        }
    }
    let cancels = residual <= INCLUSION_TOL;
    let d1_dim_bound = (centrals.len() as f64).ln();
    let d1 = if cancels {
        Bracket::exact(0.0)
    } else {
        let f = |psi: &DVector<C64>| {
            let rho = psi * psi.adjoint();
            dmax(&quad.double_dual(&rho), &quad.double_dual(&p_m(&rho)))
                .map_or(f64::NEG_INFINITY, |v| v.value)
        };
        let lower = pure_state_ascent(d, opts, &[], f);
        Bracket::new(lower.min(d1_dim_bound), d1_dim_bound)
    };
    let mut d2_lower: f64 = 0.0;
    let mut d2_dim_bound: f64 = 0.0;
    let mut g = sampling::rng(opts.seed ^ 0xd2);
    for block in &quad.e_m.range.blocks {
        let (dh, dk) = (block.dh, block.dk);
        let m = dh.min(dk);
        d2_dim_bound = d2_dim_bound.max(2.0 * (m as f64).ln());
        if m == 1 {
            continue;
        }
        let mut ent = DVector::<C64>::zeros(dh * dk);
        for j in 0..m {
            ent[j * dk + j] = r(1.0 / (m as f64).sqrt());
        }
        let mut cands = vec![ent];
        for _ in 0..8 {
            cands.push(haar_vector(dh * dk, &mut g));
        }
        for psi in cands {
            let rho = &psi * psi.adjoint();
            let v = imax_bipartite(&rho, dh, dk)?.result.certified_lower;
            d2_lower = d2_lower.max(v);
        }
    }
    Ok(D1D2Report {
        d1,
        d2: Bracket::new(d2_lower.min(d2_dim_bound), d2_dim_bound),
        d1_dim_bound,
        d2_dim_bound,
        off_diagonal_residual: residual,
        off_diagonal_cancels: cancels,
    })
}

// ---------------------------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMargin {
    pub state_id: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub check_name: String,
}

impl StateMargin {
    pub fn new(state_id: usize, lhs: f64, rhs: f64, check_name: &str) -> Self {
        Self {
            state_id,
            lhs,
            rhs,
            margin: rhs - lhs,
            check_name: check_name.to_string(),
        }
    }
}

/// Status of one named inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateStatus {
    pub check_name: String,
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub violations: usize,
    pub min_margin: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ATConstants {
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub c1: Option<Bracket>,
    pub c2: Option<f64>,
    pub d1: Option<Bracket>,
    pub d2: Option<Bracket>,
    pub weak_d: Option<Bracket>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ATReport {
    pub constants: ATConstants,
    pub per_state_margins: Vec<StateMargin>,
    pub certificates: Vec<CertificateStatus>,
    pub violations: usize,
    pub integration_error: f64,
    pub tolerance: f64,
}

impl ATReport {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    /// Records the margins of one check and updates the violation count.
    pub fn push_check(&mut self, name: &str, margins: Vec<StateMargin>) {
        let violations = margins.iter().filter(|m| !(m.margin >= -self.tolerance)).count();
        let min_margin = margins.iter().map(|m| m.margin).reduce(f64::min);
        self.violations += violations;
        self.certificates.push(CertificateStatus {
            check_name: name.to_string(),
            applicable: true,
            reason: None,
            violations,
            min_margin,
        });
        self.per_state_margins.extend(margins);
    }

    pub fn push_not_applicable(&mut self, name: &str, reason: String) {
        self.certificates.push(CertificateStatus {
            check_name: name.to_string(),
            applicable: false,
            reason: Some(reason),
            violations: 0,
            min_margin: None,
        });
    }

    pub fn certificate(&self, name: &str) -> Option<&CertificateStatus> {
        self.certificates.iter().find(|c| c.check_name == name)
    }

    pub fn merge(&mut self, other: ATReport) {
        self.violations += other.violations;
        self.integration_error = self.integration_error.max(other.integration_error);
        self.per_state_margins.extend(other.per_state_margins);
        self.certificates.extend(other.certificates);
    }

    /// Rows for the flat CSV export.
    pub fn csv_rows(&self) -> &[StateMargin] {
        &self.per_state_margins
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tolerance: f64,
    pub quadrature: QuadratureOptions,
    pub ascent: AscentOptions,
    /// Coordinate-descent sweeps over `τ_i′` for the free state in the pinching certificate.
    pub eta_sweeps: usize,
    /// Also bracket `d₁`, `d₂` and the weak constant.
    pub weak_constants: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tolerance: -tol::CERTIFICATE_MARGIN,
            quadrature: QuadratureOptions::default(),
            ascent: AscentOptions::default(),
            eta_sweeps: 20,
            weak_constants: true,
        }
    }
}

/// `D(ρ‖ρ_M) ≤ c·(D(ρ‖ρ₁) + D(ρ‖ρ₂)) + d` per state.
pub fn at_margins(
    quad: &ATQuadruple,
    c: f64,
    d: f64,
    states: &[Operator],
    check_name: &str,
) -> Result<Vec<StateMargin>> {
    states
        .par_iter()
        .enumerate()
        .map(|(id, rho)| {
            let (dm, d1, d2) = divergences(rho, &quad.marginals(rho))?;
            Ok(StateMargin::new(id, dm, c * (d1 + d2) + d, check_name))
        })
        .collect()
}

/// Certifies `AT(c, d)` over the given states.
pub fn at_certify(
    quad: &ATQuadruple,
    c: f64,
    d: f64,
    states: &[Operator],
    tolerance: f64,
) -> Result<ATReport> {
    if c < 1.0 || d < 0.0 {
        return Err(AtlabError::Contract(format!("constants c = {c}, d = {d} are outside c ≥ 1, d ≥ 0")));
    }
    let mut report = ATReport::new(tolerance);
    report.constants.c = Some(c);
    report.constants.d = Some(d);
    report.push_check("at", at_margins(quad, c, d, states, "at")?);
    Ok(report)
}

/// `D(ρ‖E_{M*}ρ) ≤ (2c/k) Σ_j D(ρ‖E_{j*}ρ) + d` for `k` intermediate algebras.
pub fn at_certify_averaged(
    e_m: &ConditionalExpectationRep,
    es: &[ConditionalExpectationRep],
    c: f64,
    d: f64,
    states: &[Operator],
    tolerance: f64,
) -> Result<ATReport> {
    let k = es.len() as f64;
    let margins = states
        .par_iter()
        .enumerate()
        .map(|(id, rho)| {
            let lhs = relative_entropy(rho, &e_m.apply_dual(rho))?.value;
            let mut sum = 0.0;
            for e in es {
                sum += relative_entropy(rho, &e.apply_dual(rho))?.value;
            }
            Ok(StateMargin::new(id, lhs, 2.0 * c / k * sum + d, "averaged"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ATReport::new(tolerance);
    report.constants.c = Some(c);
    report.constants.d = Some(d);
    report.push_check("averaged", margins);
    Ok(report)
}

/// `D(ρ‖ρ_M) ≤ D(ρ‖ρ₁) + D(ρ‖ρ₂) + ln ∫ …` per state, with the integration error.
pub fn lemma_margins(
    quad: &ATQuadruple,
    states: &[Operator],
    opts: &QuadratureOptions,
) -> Result<(Vec<StateMargin>, f64)> {
    let rows = states
        .par_iter()
        .enumerate()
        .map(|(id, rho)| {
            let m = quad.marginals(rho);
            let (dm, d1, d2) = divergences(rho, &m)?;
            let gi = gap_integral_from_marginals(&m, opts)?;
            Ok((StateMargin::new(id, dm, d1 + d2 + gi.log_value, "lemma"), gi.log_error_bound))
        })
        .collect::<Result<Vec<_>>>()?;
    let err = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((rows.into_iter().map(|r| r.0).collect(), err))
}

/// Weak term of the pinching certificate for the free state `η = Σ ρ_{H_i} ⊗ τ_i′`.
struct PinchingWeakTerm<'a> {
    quad: &'a ATQuadruple,
    c1: f64,
    target: Operator,
    pinched: Operator,
    marginals_h: Vec<Operator>,
}

impl PinchingWeakTerm<'_> {
    fn eta(&self, taus: &[Operator]) -> Operator {
        let dec = &self.quad.e_m.range;
        let mut eta = linops::zeros(dec.dim);
        for (i, (mh, t)) in self.marginals_h.iter().zip(taus).enumerate() {
            eta += dec.expand(i, &tensor_product(mh, t));
        }
        eta
    }

    fn value(&self, taus: &[Operator]) -> f64 {
        let eta = self.eta(taus);
        let a = dmax(&self.target, &self.quad.double_dual(&eta)).map_or(f64::INFINITY, |v| v.value);
        let b = relative_entropy(&eta, &self.pinched).map_or(f64::INFINITY, |v| v.value);
        a + self.c1 * b
    }
}

fn exp_normalized(h: &Operator) -> Result<Operator> {
    let e = linops::matrix_function(h, f64::exp, SupportPolicy::Error)?;
    let t = e.trace();
    Ok(e / t)
}

/// Runs every certificate that applies to the quadruple over the given states.
pub fn certify_theorems(
    quad: &ATQuadruple,
    states: &[Operator],
    opts: &CertifyOptions,
) -> Result<ATReport> {
    let mut report = ATReport::new(opts.tolerance);
    let (lemma, err) = lemma_margins(quad, states, &opts.quadrature)?;
    report.integration_error = err;
    report.push_check("lemma", lemma);

    let clustering = c1_conditional_l1(quad, &opts.ascent)?;
    let c1 = clustering.c1;
    report.constants.c1 = Some(clustering.bracket());
    report.constants.c2 = c2_strong_l2(quad, None).ok();
    if opts.weak_constants {
        let dd = d1_d2(quad, &opts.ascent)?;
        report.constants.d1 = Some(dd.d1);
        report.constants.d2 = Some(dd.d2);
        report.constants.weak_d = Some(weak_d_corollary(quad, &opts.ascent)?.bracket);
    }

    if 1.0 - 2.0 * c1 > 0.0 {
        let scale = 1.0 / (1.0 - 2.0 * c1);
        report.constants.c = Some(scale);
        let rows = states
            .par_iter()
            .enumerate()
            .map(|(id, rho)| pinching_rows(quad, rho, id, c1, scale, opts))
            .collect::<Result<Vec<_>>>()?;
        let mut remark = Vec::new();
        let mut optimized = Vec::new();
        let mut additive = Vec::new();
        for [a, b, c] in rows {
            remark.push(a);
            optimized.push(b);
            additive.push(c);
        }
        report.push_check("pinching_eta_remark", remark);
        report.push_check("pinching_eta_optimized", optimized);
        report.push_check("pinching_additive", additive);
    } else {
        let reason = format!("c1 upper bound {c1:.6} is not below 1/2");
        for name in ["pinching_eta_remark", "pinching_eta_optimized", "pinching_additive"] {
            report.push_not_applicable(name, reason.clone());
        }
    }

    match change_of_measure_constants(quad, &opts.ascent) {
        Ok((c, d)) => report.push_check(
            "change_of_measure",
            at_margins(quad, c, d, states, "change_of_measure")?,
        ),
        Err(e) => report.push_not_applicable("change_of_measure", e.to_string()),
    }
    Ok(report)
}

fn pinching_rows(
    quad: &ATQuadruple,
    rho: &Operator,
    id: usize,
    c1: f64,
    scale: f64,
    opts: &CertifyOptions,
) -> Result<[StateMargin; 3]> {
    let m = quad.marginals(rho);
    let (dm, d1, d2) = divergences(rho, &m)?;
    let dec = &quad.e_m.range;
    let projs = state_pinching_projectors(&m.rho_m, dec)?;
    let pinched = pinch(&projs, rho);
    let marginals_h = (0..dec.blocks.len())
        .map(|i| dec.block_marginal_h(i, rho))
        .collect::<Result<Vec<_>>>()?;
    let term = PinchingWeakTerm {
        quad,
        c1,
        target: quad.double_dual(rho),
        pinched: pinched.clone(),
        marginals_h,
    };
    let mut taus = quad.e_m.tau_blocks.clone();
    let base = term.value(&taus);
    let mut best = base;
    let mut g = sampling::rng(opts.ascent.seed.wrapping_add(id as u64));
    let mut logs = taus
        .iter()
        .map(|t| psd_log(t).map(|l| hermitian_part(&l)))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..opts.eta_sweeps {
        for i in 0..taus.len() {
            let n = taus[i].nrows();
            if n == 1 {
                continue;
            }
            let mut step = 0.5;
            while step > 1e-3 {
                let cand_log = &logs[i] + random_hermitian(n, &mut g) * r(step);
                let mut cand = taus.clone();
                cand[i] = exp_normalized(&cand_log)?;
                let v = term.value(&cand);
                if v < best {
                    best = v;
                    taus = cand;
                    logs[i] = cand_log;
                    break;
                }
                step *= 0.5;
            }
        }
    }
    let gap = relative_entropy(rho, &pinched)?.value;
    Ok([
        StateMargin::new(id, dm, scale * (d1 + d2 + base), "pinching_eta_remark"),
        StateMargin::new(id, dm, scale * (d1 + d2 + best), "pinching_eta_optimized"),
        StateMargin::new(id, dm, scale * (d1 + d2) + gap, "pinching_additive"),
    ])
}

/// `c = λ_max/λ_min`, `d′ = λ_max · dim H · d⁽⁰⁾` with `d⁽⁰⁾` the certified tracial weak constant.
pub fn change_of_measure_constants(quad: &ATQuadruple, opts: &AscentOptions) -> Result<(f64, f64)> {
    let tracial = quad.tracial()?;
    let d0 = weak_d_corollary(&tracial, opts)?.bracket.upper.max(0.0);
    let (vals, _) = eigh(&quad.sigma)?;
    let lo = vals[0];
    let hi = vals[vals.len() - 1];
    Ok((hi / lo, hi * quad.dim() as f64 * d0))
}

// ---------------------------------------------------------------------------------------------
// Energy blocks
// ---------------------------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBlockReport {
    /// Largest `‖E(X) − 𝒫_H(E(X))‖` over block-diagonal matrix units, for `E_M, E_1, E_2`.
    pub invariance_residual: f64,
    pub max_block_dim: usize,
    /// `c` used in the certificate: the unrestricted conditional L₁ → L_∞ upper bound,
    /// which dominates the norm restricted to block-diagonal operators.
    pub c: f64,
    pub weak_term: Option<f64>,
    pub report: ATReport,
}

/// Certifies the block-diagonal tensorization over `n_states` energy-block samples.
pub fn energy_block_at(
    quad: &ATQuadruple,
    h: &Operator,
    n_states: usize,
    seed: u64,
    opts: &CertifyOptions,
) -> Result<EnergyBlockReport> {
    let spec = hermitian_eig(h)?;
    let projs = &spec.projectors;
    let mut residual: f64 = 0.0;
    for space in &spec.eigenspaces {
        let m = space.ncols();
        for a in 0..m {
            for b in 0..m {
                let x = space.column(a) * space.column(b).adjoint();
                for e in [&quad.e_m, &quad.e1, &quad.e2] {
                    let y = e.apply(&x);
                    residual = residual.max((&y - pinch(projs, &y)).norm());
                }
            }
        }
    }
    let max_block_dim = spec.eigenspaces.iter().map(|s| s.ncols()).max().unwrap_or(1);
    let c = c1_conditional_l1(quad, &opts.ascent)?.c1;
    let mut g = sampling::rng(seed);
    let states = (0..n_states)
        .map(|_| sampling::energy_block_density(projs, &mut g))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ATReport::new(opts.tolerance);
    report.constants.c1 = Some(Bracket::new(0.0, c));
    let weak_term = if 1.0 - 2.0 * c > 0.0 {
        let scale = 1.0 / (1.0 - 2.0 * c);
        let extra = 3.0 * (max_block_dim as f64).ln() + 4.0 * c;
        let margins = states
            .par_iter()
            .enumerate()
            .map(|(id, rho)| {
                let (dm, d1, d2) = divergences(rho, &quad.marginals(rho))?;
                Ok(StateMargin::new(id, dm, scale * (d1 + d2 + extra), "energy_block"))
            })
            .collect::<Result<Vec<_>>>()?;
        report.constants.c = Some(scale);
        report.constants.d = Some(scale * extra);
        report.push_check("energy_block", margins);
        Some(extra)
    } else {
        report.push_not_applicable(
            "energy_block",
            format!("clustering constant {c:.6} is not below 1/2"),
        );
        None
    };
    Ok(EnergyBlockReport {
        invariance_residual: residual,
        max_block_dim,
        c,
        weak_term,
        report,
    })
}

// ---------------------------------------------------------------------------------------------
// Uncertainty relations and pinching decay
// ---------------------------------------------------------------------------------------------

fn check_basis(u: &Operator) -> Result<()> {
    let d = u.nrows();
    if u.ncols() != d || (u.adjoint() * u - identity(d)).norm() > 1e-9 {
        return Err(AtlabError::Contract("basis matrix is not unitary".into()));
    }
    Ok(())
}

/// `d · max |‖⟨e_x|f_y⟩|² − 1/d|` over all pairs of bases.
pub fn overlap_constant(bases: &[Operator]) -> f64 {
    let d = bases[0].nrows() as f64;
    let mut worst: f64 = 0.0;
    for (a, u) in bases.iter().enumerate() {
        for v in &bases[a + 1..] {
            let o = u.adjoint() * v;
            for z in o.iter() {
                worst = worst.max((z.norm_sqr() - 1.0 / d).abs());
            }
        }
    }
    d * worst
}

/// `max |⟨e_x|f_y⟩|²` for two bases.
pub fn max_overlap(u: &Operator, v: &Operator) -> f64 {
    (u.adjoint() * v).iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
}

/// Shannon entropy of the outcome distribution of measuring `rho` in the columns of `u`.
pub fn measurement_entropy(rho: &Operator, u: &Operator) -> f64 {
    let p = u.adjoint() * rho * u;
    -(0..p.nrows())
        .map(|k| p[(k, k)].re.max(0.0))
        .map(|v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum::<f64>()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub n_bases: usize,
    pub dim: usize,
    pub c1: f64,
    pub strengthened_applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    pub min_slack_strengthened: Option<f64>,
    pub min_slack_memoryless: f64,
    pub violations: usize,
    pub margins: Vec<StateMargin>,
}

/// Checks the strengthened relation for two or three bases and the memoryless relation per pair.
pub fn uncertainty_check(bases: &[Operator], states: &[Operator], tolerance: f64) -> Result<UncertaintyReport> {
    if !(2..=3).contains(&bases.len()) {
        return Err(AtlabError::Contract(format!("expected 2 or 3 bases, got {}", bases.len())));
    }
    for u in bases {
        check_basis(u)?;
    }
    let d = bases[0].nrows();
    let ln_d = (d as f64).ln();
    let c1 = overlap_constant(bases);
    let applicable = c1 < 0.5;
    let k = bases.len() as f64;
    let mut margins = Vec::new();
    for (id, rho) in states.iter().enumerate() {
        let s_a = von_neumann_entropy(rho)?;
        let s: Vec<f64> = bases.iter().map(|u| measurement_entropy(rho, u)).collect();
        if applicable {
            let lhs: f64 = s.iter().sum();
            let rhs = (k - 1.0 + 2.0 * c1) * s_a + (1.0 - 2.0 * c1) * ln_d;
            margins.push(StateMargin::new(id, rhs, lhs, "strengthened"));
        }
        for a in 0..bases.len() {
            for b in (a + 1)..bases.len() {
                let dd = (d as f64 * max_overlap(&bases[a], &bases[b])).ln();
                let name = format!("memoryless_{a}{b}");
                margins.push(StateMargin::new(id, s_a - dd + ln_d, s[a] + s[b], &name));
            }
        }
    }
    let min_of = |pred: &dyn Fn(&StateMargin) -> bool| {
        margins.iter().filter(|m| pred(m)).map(|m| m.margin).reduce(f64::min)
    };
    let violations = margins.iter().filter(|m| !(m.margin >= -tolerance)).count();
    Ok(UncertaintyReport {
        n_bases: bases.len(),
        dim: d,
        c1,
        strengthened_applicable: applicable,
        skip_reason: (!applicable).then(|| format!("c1 = {c1:.6} is not below 1/2")),
        min_slack_strengthened: min_of(&|m| m.check_name == "strengthened"),
        min_slack_memoryless: min_of(&|m| m.check_name.starts_with("memoryless")).unwrap_or(f64::INFINITY),
        violations,
        margins,
    })
}

/// Pinching onto the columns of `u` as a conditional expectation.
pub fn basis_pinching(u: &Operator) -> Result<ConditionalExpectationRep> {
    check_basis(u)?;
    let d = u.nrows();
    let projs: Vec<Operator> = (0..d)
        .map(|k| {
            let v = u.column(k).into_owned();
            &v * v.adjoint()
        })
        .collect();
    ConditionalExpectationRep::from_range(&(identity(d) / r(d as f64)), &projs, None)
}

/// `M = C·1`, `N₁`, `N₂` the diagonal algebras of two bases.
pub fn two_basis_quadruple(u: &Operator, v: &Operator) -> Result<ATQuadruple> {
    let d = u.nrows();
    let scalars = ConditionalExpectationRep::from_range(&(identity(d) / r(d as f64)), &[identity(d)], None)?;
    ATQuadruple::new(scalars, basis_pinching(u)?, basis_pinching(v)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub epsilon: f64,
    pub applicable: bool,
    pub margins: Vec<StateMargin>,
    pub violations: usize,
}

/// `D(e^{tL_*}ρ‖1/ℓ) ≤ e^{−(1−2ε)t} D(ρ‖1/ℓ)` for `L = E₁ + E₂ − 2·id` built from two bases.
pub fn pinching_decay_check(
    u: &Operator,
    v: &Operator,
    states: &[Operator],
    times: &[f64],
    tolerance: f64,
) -> Result<DecayReport> {
    let q = two_basis_quadruple(u, v)?;
    let d = u.nrows();
    let eps = overlap_constant(&[u.clone(), v.clone()]);
    let gen = q.e1.superop()?.matrix.clone() + &q.e2.superop()?.matrix
        - DMatrix::<C64>::identity(d * d, d * d) * r(2.0);
    let mixed = identity(d) / r(d as f64);
    let mut margins = Vec::new();
    let applicable = eps < 0.5;
    if applicable {
        for &t in times {
            // Pinchings are self-dual, so the Heisenberg and Schrödinger semigroups coincide.
            let flow = (gen.clone() * r(t)).exp();
            for (id, rho) in states.iter().enumerate() {
                let rt = linops::unvectorize_slice((&flow * linops::vectorize(rho)).as_slice(), d);
                let lhs = relative_entropy(&hermitian_part(&rt), &mixed)?.value;
                let rhs = (-(1.0 - 2.0 * eps) * t).exp() * relative_entropy(rho, &mixed)?.value;
                margins.push(StateMargin::new(id, lhs, rhs, &format!("decay_t{t}")));
            }
        }
    }
    let violations = margins.iter().filter(|m| !(m.margin >= -tolerance)).count();
    Ok(DecayReport {
        epsilon: eps,
        applicable,
        margins,
        violations,
    })
}

/// Columns are the eigenvectors of `X` (`k = 0`), `Y` (`k = 1`) or `Z` (`k = 2`) on a qubit.
pub fn qubit_basis(k: usize) -> Operator {
    let s = 1.0 / 2f64.sqrt();
    match k {
        0 => Operator::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]),
        1 => Operator::from_row_slice(2, 2, &[r(s), r(s), C64::new(0.0, s), C64::new(0.0, -s)]),
        _ => identity(2),
    }
}

/// Discrete Fourier basis on `C^d`.
pub fn fourier_basis(d: usize) -> Operator {
    let s = 1.0 / (d as f64).sqrt();
    Operator::from_fn(d, d, |j, k| C64::from_polar(s, 2.0 * PI * (j * k) as f64 / d as f64))
}

/// Member `k` of a complete family of mutually unbiased bases for `d = 2` (`k < 3`) or an odd
/// prime `d` (`k ≤ d`): the standard basis for `k = 0`, otherwise `diag(ω^{(k−1)j²})·F`.
pub fn mub_basis(d: usize, k: usize) -> Result<Operator> {
    if d == 2 {
        return match k {
            0 => Ok(identity(2)),
            1 => Ok(qubit_basis(0)),
            2 => Ok(qubit_basis(1)),
            _ => Err(AtlabError::Domain(format!("a qubit has 3 mutually unbiased bases, asked for index {k}"))),
        };
    }
    let prime = d >= 3 && (2..d).take_while(|p| p * p <= d).all(|p| d % p != 0);
    if !prime || k > d {
        return Err(AtlabError::Domain(format!("no mutually unbiased basis {k} available in dimension {d}")));
    }
    if k == 0 {
        return Ok(identity(d));
    }
    let a = (k - 1) as f64;
    let phase = DVector::from_fn(d, |j, _| C64::from_polar(1.0, 2.0 * PI * a * (j * j) as f64 / d as f64));
    Ok(Operator::from_diagonal(&phase) * fourier_basis(d))
}

/// `exp(−iθ·G)·u` for a fixed Hermitian generator, used to tilt a basis away from unbiasedness.
pub fn tilted_basis(u: &Operator, theta: f64, seed: u64) -> Result<Operator> {
    let mut g = sampling::rng(seed);
    let h = random_hermitian(u.nrows(), &mut g);
    let n = spectral_norm(&h);
    let (vals, vecs) = eigh(&(h / r(n)))?;
    let ph = Operator::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| C64::from_polar(1.0, -theta * l)),
    ));
    Ok(&vecs * ph * vecs.adjoint() * u)
}
