//! Quantum Markov semigroup generators: Davies, heat-bath and embedded classical Glauber dynamics.
//!
//! Generators act in the Heisenberg picture, `L(X) = i[H, X] + Σ_k (L_k† X L_k − ½{L_k† L_k, X})`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{commutant, ConditionalExpectationRep, MatrixAlgebra};
use crate::error::{AtlabError, Result};
use crate::linops::{
    self, complex_power, eigh_unchecked, hermitian_eig, hermitian_part, identity, matrix_function,
    r, vectorize, FactorPair, Operator, SupportPolicy, C64, I,
};
use crate::maps::{compose, hs_adjoint, subtract, MapTags, SuperOperator};
use crate::sampling::{random_hermitian, rng};
use crate::tol;

/// Largest dimension for which generators are assembled as dense superoperators.
pub const DENSE_GENERATOR_MAX_DIM: usize = 32;

/// `σ = e^{-βH} / Tr e^{-βH}`, computed with a shifted spectrum for stability.
pub fn gibbs_state(h: &Operator, beta: f64) -> Result<Operator> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(AtlabError::Domain(format!("inverse temperature {beta}")));
    }
    let (vals, _) = linops::eigh(h)?;
    let shift = vals.first().copied().unwrap_or(0.0);
    let w = matrix_function(h, |x| (-beta * (x - shift)).exp(), SupportPolicy::Error)?;
    let t = w.trace();
    Ok(w / t)
}

/// Hamiltonian with its inverse temperature and Gibbs state.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub h: Operator,
    pub beta: f64,
    pub gibbs: Operator,
}

impl HamiltonianSpec {
    pub fn new(h: Operator, beta: f64) -> Result<Self> {
        let gibbs = gibbs_state(&h, beta)?;
        Ok(Self { h, beta, gibbs })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
}

/// Bohr-frequency components `S(ω) = Σ_{ε−ε′=ω} P_ε S P_{ε′}` of one coupling.
#[derive(Debug, Clone)]
pub struct FourierComponents {
    /// Ascending Bohr frequencies.
    pub frequencies: Vec<f64>,
    pub components: Vec<Operator>,
}

impl FourierComponents {
    /// Component at the frequency closest to `omega` within `tol`.
    pub fn component(&self, omega: f64, tol: f64) -> Option<&Operator> {
        self.frequencies
            .iter()
            .position(|&w| (w - omega).abs() <= tol)
            .map(|k| &self.components[k])
    }

    /// `‖Σ_ω S(ω) − S‖`.
    pub fn reconstruction_residual(&self, s: &Operator) -> f64 {
        let sum = self
            .components
            .iter()
            .fold(linops::zeros(s.nrows()), |acc, c| acc + c);
        (sum - s).norm()
    }
}

/// Frequencies are merged when closer than `rel_tol·max(‖H‖, 1)`.
pub fn fourier_components(s: &Operator, spec: &HamiltonianSpec, rel_tol: f64) -> Result<FourierComponents> {
    if s.nrows() != spec.dim() || s.ncols() != spec.dim() {
        return Err(AtlabError::Dimension("coupling and Hamiltonian sizes differ".into()));
    }
    let eig = hermitian_eig(&spec.h)?;
    let scale = eig.eigenvalues.iter().map(|e| e.abs()).fold(1.0, f64::max);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (a, &ea) in eig.eigenvalues.iter().enumerate() {
        for (b, &eb) in eig.eigenvalues.iter().enumerate() {
            pairs.push((ea - eb, a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let omegas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let groups = linops::group_sorted(&omegas, rel_tol * scale);
    let mut frequencies = Vec::new();
    let mut components = Vec::new();
    for g in groups {
        let mean = g.iter().map(|&k| omegas[k]).sum::<f64>() / g.len() as f64;
        let mut comp = linops::zeros(spec.dim());
        for &k in &g {
            let (_, a, b) = pairs[k];
            comp += &eig.projectors[a] * s * &eig.projectors[b];
        }
        frequencies.push(if mean.abs() <= rel_tol * scale { 0.0 } else { mean });
        components.push(comp);
    }
    Ok(FourierComponents {
        frequencies,
        components,
    })
}

/// Bath rate function `χ(ω)`, required to satisfy `χ(−ω) = e^{−βω} χ(ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateProfile {
    /// `χ(ω) = e^{βω/2}`.
    Glauber,
    /// `χ(ω) = min(1, e^{βω})`.
    Metropolis,
    /// Tabulated `(ω, χ(ω))` pairs; every frequency used must be present.
    Custom { table: Vec<(f64, f64)> },
}

impl RateProfile {
    pub fn rate(&self, beta: f64, omega: f64) -> Result<f64> {
        match self {
            RateProfile::Glauber => Ok((beta * omega / 2.0).exp()),
            RateProfile::Metropolis => Ok((beta * omega).exp().min(1.0)),
            RateProfile::Custom { table } => table
                .iter()
                .find(|(w, _)| (w - omega).abs() <= 1e-9 * omega.abs().max(1.0))
                .map(|&(_, v)| v)
                .ok_or_else(|| AtlabError::Contract(format!("no tabulated rate at ω = {omega}"))),
        }
    }

    /// Checks positivity and the KMS relation at every listed frequency.
    pub fn check_kms(&self, beta: f64, frequencies: &[f64]) -> Result<()> {
        for &w in frequencies {
            let plus = self.rate(beta, w)?;
            let minus = self.rate(beta, -w)?;
            if !(plus > 0.0 && minus > 0.0) {
                return Err(AtlabError::Contract(format!("non-positive rate at ω = {w}")));
            }
            let want = (-beta * w).exp() * plus;
            if (minus - want).abs() > tol::RATE_KMS_REL * want.abs().max(minus.abs()) {
                return Err(AtlabError::Contract(format!(
                    "rates violate the KMS relation at ω = {w}: χ(−ω) = {minus}, e^(−βω)χ(ω) = {want}"
                )));
            }
        }
        Ok(())
    }
}

/// GKLS generator with its invariant state.
#[derive(Debug, Clone)]
pub struct LindbladianRep {
    pub dim: usize,
    /// Full generator including the Hamiltonian part (dense, Heisenberg picture).
    pub superop: SuperOperator,
    /// Dissipative part only.
    pub dissipative: SuperOperator,
    pub lindblad_ops: Vec<Operator>,
    pub hamiltonian_part: Operator,
    pub invariant_state: Operator,
}

fn dissipator(ops: &[Operator], d: usize) -> SuperOperator {
    let one = identity(d);
    let mut m = DMatrix::<C64>::zeros(d * d, d * d);
    for l in ops {
        let ld = l.adjoint();
        let n = &ld * l;
        m += SuperOperator::sandwich(&ld, l).matrix;
        m -= SuperOperator::sandwich(&n, &one).matrix * r(0.5);
        m -= SuperOperator::sandwich(&one, &n).matrix * r(0.5);
    }
    SuperOperator {
        dim: d,
        matrix: m,
        tags: MapTags::default(),
    }
}

fn hamiltonian_superop(h: &Operator) -> SuperOperator {
    let d = h.nrows();
    let one = identity(d);
    let m = (SuperOperator::sandwich(h, &one).matrix - SuperOperator::sandwich(&one, h).matrix) * I;
    SuperOperator {
        dim: d,
        matrix: m,
        tags: MapTags::default(),
    }
}

impl LindbladianRep {
    /// Generator with Lindblad operators `ops`, Hamiltonian `h` and declared invariant state.
    pub fn from_parts(ops: Vec<Operator>, h: Operator, invariant_state: Operator) -> Result<Self> {
        let d = invariant_state.nrows();
        if d > DENSE_GENERATOR_MAX_DIM {
            return Err(AtlabError::TooLarge(format!(
                "dense generator requested in dimension {d} (limit {DENSE_GENERATOR_MAX_DIM})"
            )));
        }
        if ops.iter().any(|l| l.nrows() != d) || h.nrows() != d {
            return Err(AtlabError::Dimension("generator parts of unequal size".into()));
        }
        let dissipative = dissipator(&ops, d);
        let superop = dissipative.add(&hamiltonian_superop(&h));
        Ok(Self {
            dim: d,
            superop,
            dissipative,
            lindblad_ops: ops,
            hamiltonian_part: h,
            invariant_state,
        })
    }

    /// Same dissipative part with Hamiltonian part `h`.
    pub fn with_hamiltonian(self, h: Operator) -> Result<Self> {
        Self::from_parts(self.lindblad_ops, h, self.invariant_state)
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        self.superop.apply(x)
    }

    /// Schrödinger-picture generator `L_*`.
    pub fn dual(&self) -> SuperOperator {
        hs_adjoint(&self.superop)
    }

    /// `‖L(1)‖`.
    pub fn unitality_residual(&self) -> f64 {
        self.superop.apply(&identity(self.dim)).norm()
    }

    /// Hilbert–Schmidt distance of the `σ^{1/4}`-symmetrized dissipative part from its adjoint.
    pub fn kms_residual(&self) -> Result<f64> {
        let sym = symmetrize(&self.dissipative, &self.invariant_state)?;
        Ok((&sym.matrix - sym.matrix.adjoint()).norm())
    }

    /// Largest `|Tr[σ L(X)]|` over `samples` random Hermitian `X` of unit norm.
    pub fn stationarity_residual(&self, samples: usize, seed: u64) -> f64 {
        let mut g = rng(seed);
        (0..samples)
            .map(|_| {
                let x = random_hermitian(self.dim, &mut g);
                let x = &x / r(x.norm());
                (&self.invariant_state * self.apply(&x)).trace().norm()
            })
            .fold(0.0, f64::max)
    }

    /// Smallest Choi eigenvalue of the jump part `X ↦ Σ L_k† X L_k`.
    pub fn jump_choi_min_eigenvalue(&self) -> f64 {
        let d = self.dim;
        let mut m = DMatrix::<C64>::zeros(d * d, d * d);
        for l in &self.lindblad_ops {
            m += SuperOperator::sandwich(&l.adjoint(), l).matrix;
        }
        SuperOperator {
            dim: d,
            matrix: m,
            tags: MapTags::default(),
        }
        .choi_min_eigenvalue()
    }
}

/// `Γ_σ^{1/2} ∘ L ∘ Γ_σ^{-1/2}` with `Γ_σ^{1/2}(X) = σ^{1/4} X σ^{1/4}`.
fn symmetrize(l: &SuperOperator, sigma: &Operator) -> Result<SuperOperator> {
    let q = complex_power(sigma, r(0.25), SupportPolicy::Error)?;
    let qi = complex_power(sigma, r(-0.25), SupportPolicy::Error)?;
    Ok(compose(
        &compose(&SuperOperator::sandwich(&q, &q), l),
        &SuperOperator::sandwich(&qi, &qi),
    ))
}

/// Lindblad operators `√χ(−ω) S_α(ω)` of the Davies generator.
///
/// With `S(ω)` defined by spectral projectors, `Δ_σ S(ω) = e^{−βω} S(ω)`, so the rate `χ(ω)`
/// obeying `χ(−ω) = e^{−βω} χ(ω)` belongs to the component at `−ω` for `σ` to be invariant.
pub fn davies_jump_operators(
    spec: &HamiltonianSpec,
    couplings: &[Operator],
    rates: &RateProfile,
) -> Result<Vec<Operator>> {
    let mut ops = Vec::new();
    for (a, s) in couplings.iter().enumerate() {
        if !linops::is_hermitian(s) {
            return Err(AtlabError::Contract(format!("coupling {a} is not self-adjoint")));
        }
        let f = fourier_components(s, spec, tol::FREQ_MERGE_REL)?;
        rates.check_kms(spec.beta, &f.frequencies)?;
        for (&w, comp) in f.frequencies.iter().zip(&f.components) {
            if comp.norm() == 0.0 {
                continue;
            }
            let chi = rates.rate(spec.beta, -w)?;
            ops.push(comp * r(chi.sqrt()));
        }
    }
    Ok(ops)
}

/// Davies generator `Σ_{α,ω} χ(ω) D[S_α(−ω)]`.
pub fn davies_generator(
    spec: &HamiltonianSpec,
    couplings: &[Operator],
    rates: &RateProfile,
) -> Result<LindbladianRep> {
    let ops = davies_jump_operators(spec, couplings, rates)?;
    LindbladianRep::from_parts(ops, linops::zeros(spec.dim()), spec.gibbs.clone())
}

/// Lindblad operators of the heat-bath generator: `A_{k,σ}(X) = Σ_{j,m} V_{jm}† X V_{jm}` with `V_{jm} = σ^{1/2}((Tr_k σ)^{-1/2} ⊗ |j⟩⟨m|_k)`.
pub fn heat_bath_jump_operators(
    sigma: &Operator,
    site_factors: &FactorPair,
    region: &[usize],
) -> Result<Vec<Operator>> {
    crate::entropy::check_density(sigma)?;
    let dims = &site_factors.dims;
    let d = sigma.nrows();
    if site_factors.total_dim() != d {
        return Err(AtlabError::Dimension("site sizes do not match the state".into()));
    }
    let s_half = complex_power(sigma, r(0.5), SupportPolicy::Error)?;
    let mut ops = Vec::new();
    for &site in region {
        let k = site_factors
            .labels
            .iter()
            .position(|&l| l == site)
            .ok_or_else(|| AtlabError::Dimension(format!("unknown site {site}")))?;
        let rest: Vec<usize> = (0..dims.len()).filter(|&j| j != k).collect();
        let rest_labels: Vec<usize> = rest.iter().map(|&j| site_factors.labels[j]).collect();
        let marg = linops::partial_trace(sigma, site_factors, &rest_labels)?;
        let marg_inv_half = complex_power(&marg, r(-0.5), SupportPolicy::Error)?;
        let dk = dims[k];
        // Operator on (rest ⊗ site) reordered back to the original factor order.
        let mut order = rest.clone();
        order.push(k);
        let mut inv = vec![0; dims.len()];
        for (pos, &f) in order.iter().enumerate() {
            inv[f] = pos;
        }
        let reordered_dims: Vec<usize> = order.iter().map(|&f| dims[f]).collect();
        for j in 0..dk {
            for m in 0..dk {
                let local = linops::tensor_product(&marg_inv_half, &linops::matrix_unit(dk, j, m));
                let op = linops::permute_factors(&local, &reordered_dims, &inv);
                ops.push(&s_half * op);
            }
        }
    }
    Ok(ops)
}

/// Heat-bath generator `Σ_{k∈region} (A_{k,σ} − id)` on sites with sizes `site_factors.dims`.
pub fn heat_bath_generator(sigma: &Operator, site_factors: &FactorPair, region: &[usize]) -> Result<LindbladianRep> {
    let ops = heat_bath_jump_operators(sigma, site_factors, region)?;
    LindbladianRep::from_parts(ops, linops::zeros(sigma.nrows()), sigma.clone())
}

/// Transition-rate rule for embedded Glauber dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GlauberRule {
    /// `c = (1 + e^{β ΔH})^{-1}`.
    #[default]
    HeatBath,
    /// `c = min(1, e^{−β ΔH})`.
    Metropolis,
}

impl GlauberRule {
    /// Flip rate for the energy change `delta = H(η^x) − H(η)`.
    pub fn rate(self, beta: f64, delta: f64) -> f64 {
        match self {
            GlauberRule::HeatBath => 1.0 / (1.0 + (beta * delta).exp()),
            GlauberRule::Metropolis => (-beta * delta).exp().min(1.0),
        }
    }
}

/// Classical spin system on `n_sites` binary spins with a diagonal energy.
#[derive(Debug, Clone)]
pub struct ClassicalSpec {
    pub n_sites: usize,
    pub beta: f64,
    /// `H(η)` indexed by configuration (site 0 most significant).
    pub energy: Vec<f64>,
    /// Sites on which the flip rate at each site may depend, including the site itself.
    pub neighborhoods: Vec<Vec<usize>>,
}

impl ClassicalSpec {
    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn gibbs(&self) -> Operator {
        let emin = self.energy.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = self.energy.iter().map(|&e| (-self.beta * (e - emin)).exp()).collect();
        let z: f64 = w.iter().sum();
        Operator::from_diagonal(&nalgebra::DVector::from_iterator(
            w.len(),
            w.iter().map(|&v| r(v / z)),
        ))
    }
}

/// Lindblad operators `√c(x,η) |η^x⟩⟨η| ⊗ 1` for `x ∈ region`, `η` ranging over neighborhood configurations.
pub fn glauber_jump_operators(spec: &ClassicalSpec, region: &[usize], rule: GlauberRule) -> Result<Vec<Operator>> {
    let n = spec.n_sites;
    let d = spec.dim();
    if spec.energy.len() != d || spec.neighborhoods.len() != n {
        return Err(AtlabError::Dimension("classical spec sizes are inconsistent".into()));
    }
    let bit = |x: usize| 1usize << (n - 1 - x);
    let mut ops = Vec::new();
    for &x in region {
        if x >= n {
            return Err(AtlabError::Dimension(format!("site {x} outside the lattice")));
        }
        let ball = &spec.neighborhoods[x];
        if !ball.contains(&x) {
            return Err(AtlabError::Contract(format!("neighborhood of {x} must contain it")));
        }
        let mask: usize = ball.iter().map(|&y| bit(y)).sum();
        for local in 0..(1usize << ball.len()) {
            // Ball configuration embedded with zeros elsewhere fixes the rate.
            let mut eta = 0usize;
            for (p, &y) in ball.iter().enumerate() {
                if local >> (ball.len() - 1 - p) & 1 == 1 {
                    eta |= bit(y);
                }
            }
            let flipped = eta ^ bit(x);
            let delta = spec.energy[flipped] - spec.energy[eta];
            let c_fwd = rule.rate(spec.beta, delta);
            let c_bwd = rule.rate(spec.beta, -delta);
            let balance = c_fwd - c_bwd * (-spec.beta * delta).exp();
            if balance.abs() > tol::DETAILED_BALANCE * c_fwd.max(1.0) {
                return Err(AtlabError::DetailedBalance {
                    residual: balance.abs(),
                });
            }
            let mut op = linops::zeros(d);
            for z in 0..d {
                if z & mask == eta {
                    op[(z ^ bit(x), z)] = r(c_fwd.sqrt());
                }
            }
            ops.push(op);
        }
    }
    Ok(ops)
}

/// Dense quantum embedding of Glauber dynamics on `region`.
pub fn glauber_embedding(spec: &ClassicalSpec, region: &[usize], rule: GlauberRule) -> Result<LindbladianRep> {
    let ops = glauber_jump_operators(spec, region, rule)?;
    LindbladianRep::from_parts(ops, linops::zeros(spec.dim()), spec.gibbs())
}

/// `e^{tL}` in the Heisenberg picture.
pub fn semigroup(l: &LindbladianRep, t: f64) -> SuperOperator {
    SuperOperator {
        dim: l.dim,
        matrix: (&l.superop.matrix * r(t)).exp(),
        tags: MapTags {
            cp: Some(true),
            unital: Some(true),
            trace_preserving: None,
        },
    }
}

/// `e^{t L_*}(ρ)`.
pub fn semigroup_evolve(l: &LindbladianRep, rho: &Operator, t: f64) -> Operator {
    semigroup(l, t).apply_adjoint(rho)
}

/// Spectrum of the symmetrized dissipative part, ascending; all entries are `≤ 0` for a valid generator.
pub fn symmetrized_spectrum(l: &LindbladianRep) -> Result<(Vec<f64>, Operator)> {
    let sym = symmetrize(&l.dissipative, &l.invariant_state)?;
    let resid = (&sym.matrix - sym.matrix.adjoint()).norm();
    let scale = sym.matrix.norm().max(1.0);
    if resid > tol::GENERATOR_KERNEL * scale {
        return Err(AtlabError::DetailedBalance { residual: resid });
    }
    Ok(eigh_unchecked(&hermitian_part(&sym.matrix)))
}

/// Smallest nonzero `−λ` of the symmetrized generator, `None` when the generator vanishes.
pub fn spectral_gap(l: &LindbladianRep) -> Result<Option<f64>> {
    let (vals, _) = symmetrized_spectrum(l)?;
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    Ok(vals
        .iter()
        .filter(|&&v| v < -tol::GENERATOR_KERNEL * scale)
        .map(|v| -v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v)))))
}

/// `lim_{t→∞} e^{tL}` as the kernel projector of the symmetrized generator.
pub fn fixed_point_projection(l: &LindbladianRep) -> Result<ConditionalExpectationRep> {
    let d = l.dim;
    let (vals, vecs) = symmetrized_spectrum(l)?;
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if let Some(&top) = vals.last() {
        if top > tol::GENERATOR_INSTABILITY * scale {
            return Err(AtlabError::Instability { eigenvalue: top });
        }
    }
    let cols: Vec<usize> = (0..vals.len())
        .filter(|&k| vals[k] >= -tol::GENERATOR_KERNEL * scale)
        .collect();
    let mut kernel = vecs.select_columns(cols.iter());
    if l.hamiltonian_part.norm() > 0.0 {
        // Restrict to the part of the kernel commuting with H; the conjugation by σ^{1/4} commutes with ad_H.
        let ad = hamiltonian_superop(&l.hamiltonian_part).matrix;
        let m = (&ad * &kernel).adjoint() * (&ad * &kernel);
        let (mv, mvec) = eigh_unchecked(&hermitian_part(&m));
        let mscale = mv.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        let keep: Vec<usize> = (0..mv.len())
            .filter(|&k| mv[k] <= tol::GENERATOR_KERNEL * mscale)
            .collect();
        kernel = &kernel * mvec.select_columns(keep.iter());
    }
    let qi = complex_power(&l.invariant_state, r(-0.25), SupportPolicy::Error)?;
    let range: Vec<Operator> = (0..kernel.ncols())
        .map(|k| {
            let y = linops::unvectorize_slice(kernel.column(k).as_slice(), d);
            &qi * y * &qi
        })
        .collect();
    ConditionalExpectationRep::from_range(&l.invariant_state, &range, None)
}

/// Fixed-point algebra `{L_k, L_k†, H}′` of a KMS-symmetric generator given by its parts.
pub fn fixed_point_algebra(ops: &[Operator], h: Option<&Operator>, dim: usize) -> Result<MatrixAlgebra> {
    let mut gens: Vec<Operator> = Vec::with_capacity(2 * ops.len() + 1);
    for l in ops {
        gens.push(l.clone());
        gens.push(l.adjoint());
    }
    if let Some(h) = h {
        gens.push(h.clone());
    }
    commutant(&gens, dim)
}

/// Fixed-point conditional expectation via the commutant of the Lindblad operators, for any dimension.
pub fn fixed_point_condexp_from_ops(
    ops: &[Operator],
    h: Option<&Operator>,
    sigma: &Operator,
) -> Result<ConditionalExpectationRep> {
    let alg = fixed_point_algebra(ops, h, sigma.nrows())?;
    ConditionalExpectationRep::from_range(sigma, &alg.basis, None)
}

/// Davies fixed-point algebra `{S_α(ω)}′`.
pub fn davies_fixed_point_algebra(spec: &HamiltonianSpec, couplings: &[Operator]) -> Result<MatrixAlgebra> {
    let mut gens = Vec::new();
    for s in couplings {
        let f = fourier_components(s, spec, tol::FREQ_MERGE_REL)?;
        for c in f.components {
            if c.norm() > 0.0 {
                gens.push(c.adjoint());
                gens.push(c);
            }
        }
    }
    commutant(&gens, spec.dim())
}

/// Commutant of the modular orbit `{σ^{it} S_α σ^{−it}}` sampled on `2N` times, `N` the number of frequencies.
pub fn modular_orbit_commutant(spec: &HamiltonianSpec, couplings: &[Operator]) -> Result<MatrixAlgebra> {
    if spec.beta <= 0.0 {
        return commutant(couplings, spec.dim());
    }
    let mut gens = Vec::new();
    for s in couplings {
        let f = fourier_components(s, spec, tol::FREQ_MERGE_REL)?;
        let n = f.frequencies.len();
        let wmax = f.frequencies.iter().map(|w| w.abs()).fold(0.0, f64::max);
        // Keeps β·step·(ω − ω′) inside (−2π, 2π) so distinct frequencies give distinct phases.
        let step = 0.9 * std::f64::consts::PI / (spec.beta * wmax.max(1e-12));
        for k in 0..(2 * n) {
            let t = k as f64 * step;
            let u = complex_power(&spec.gibbs, C64::new(0.0, t), SupportPolicy::Error)?;
            let ui = complex_power(&spec.gibbs, C64::new(0.0, -t), SupportPolicy::Error)?;
            gens.push(&u * s * &ui);
        }
    }
    commutant(&gens, spec.dim())
}

/// HS-orthogonal projector (on vectorized operators) onto the span of `ops`.
fn span_projector(ops: &[Operator]) -> DMatrix<C64> {
    let vecs: Vec<_> = ops.iter().map(vectorize).collect();
    let q = linops::orthonormal_span(&vecs, 1e-10);
    &q * q.adjoint()
}

/// Result of comparing the Davies and Petz conditional expectations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaviesPetzReport {
    pub commutant_dimension: usize,
    pub kernel_dimension: usize,
    /// Distance between the projectors onto the two fixed-point spaces.
    pub algebra_distance: f64,
    /// `‖E^D − E_σ‖` as an operator on vectorized matrices.
    pub superop_distance: f64,
}

/// Compares `lim e^{tL^D}` with the Petz conditional expectation onto `{S_α(ω)}′`.
pub fn davies_equals_petz_check(
    spec: &HamiltonianSpec,
    couplings: &[Operator],
    rates: &RateProfile,
) -> Result<DaviesPetzReport> {
    let l = davies_generator(spec, couplings, rates)?;
    let e_d = fixed_point_projection(&l)?;
    let alg = davies_fixed_point_algebra(spec, couplings)?;
    let dec = crate::algebra::decompose_algebra(&alg)?;
    let e_p = crate::algebra::condexp_petz(&dec, &spec.gibbs)?;
    let algebra_distance = linops::spectral_norm(&(span_projector(&e_d.kms_basis) - span_projector(&alg.basis)));
    let diff = subtract(e_d.superop()?, e_p.superop()?);
    Ok(DaviesPetzReport {
        commutant_dimension: alg.dimension(),
        kernel_dimension: e_d.rank(),
        algebra_distance,
        superop_distance: linops::spectral_norm(&diff.matrix),
    })
}
