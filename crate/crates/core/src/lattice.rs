//! Finite spin systems with commuting local potentials and their region conditional expectations.
//!
//! The generator of a region `A` only touches the sites `A∂` within distance `r` of `A`, so every
//! region conditional expectation is computed on `A∂` and extended by the identity. Comparisons
//! between maps on up to seven sites use low-rank factorizations instead of dense superoperators.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::ConditionalExpectationRep;
use crate::entropy::{dmax, relative_entropy};
use crate::error::{AtlabError, Result};
use crate::generators::{
    davies_jump_operators, fixed_point_condexp_from_ops, fixed_point_projection, gibbs_state,
    glauber_jump_operators, heat_bath_jump_operators, ClassicalSpec, GlauberRule, HamiltonianSpec,
    LindbladianRep, RateProfile,
};
use crate::linops::{
    self, identity, operator_serde, permute_factors, spectral_norm, tensor_product, vectorize,
    FactorPair, Operator, C64,
};
use crate::sampling;
use crate::tensorization::{
    at_margins, c1_conditional_l1, weak_d_corollary, ATQuadruple, ATReport, AscentOptions, Bracket, StateMargin,
};
use crate::tol;

/// Largest number of sites handled.
pub const MAX_SITES: usize = 7;
/// Largest support dimension for which region conditional expectations come from the generator
/// spectrum; larger supports use the commutant of the Lindblad operators.
pub const SPECTRAL_ROUTE_MAX_DIM: usize = 16;
/// Residual below which `E_A∘E_B = E_B∘E_A = E_{A∪B}` is accepted.
pub const COMMUTING_SQUARE_TOL: f64 = 1e-9;
/// Clustering values at or below this are reported as numerically zero.
pub const CLUSTERING_FLOOR: f64 = 1e-10;

fn default_local_dim() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Chain,
    Ring,
}

impl Geometry {
    pub fn distance(self, n: usize, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        match self {
            Geometry::Chain => d,
            Geometry::Ring => d.min(n - d),
        }
    }
}

/// One potential term `Φ` acting on `sites` (in the listed order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTerm {
    pub sites: Vec<usize>,
    #[serde(with = "operator_serde")]
    pub op: Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n: usize,
    #[serde(default = "default_local_dim")]
    pub local_dim: usize,
    pub geometry: Geometry,
    pub beta: f64,
    pub terms: Vec<PotentialTerm>,
    /// Interaction range; derived from the term supports when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<usize>,
}

impl LatticeSpec {
    /// Ising model `−J Σ Z_j Z_{j+1} − h Σ Z_j`.
    pub fn ising(n: usize, coupling: f64, field: f64, beta: f64, geometry: Geometry) -> Self {
        let [_, _, z] = linops::pauli();
        let zz = tensor_product(&z, &z);
        let mut terms = Vec::new();
        let bonds = match geometry {
            Geometry::Ring if n > 2 => n,
            _ => n.saturating_sub(1),
        };
        for j in 0..bonds {
            terms.push(PotentialTerm {
                sites: vec![j, (j + 1) % n],
                op: &zz * linops::r(-coupling),
            });
        }
        if field != 0.0 {
            for j in 0..n {
                terms.push(PotentialTerm {
                    sites: vec![j],
                    op: &z * linops::r(-field),
                });
            }
        }
        Self {
            n,
            local_dim: 2,
            geometry,
            beta,
            terms,
            range: None,
        }
    }
}

/// Sites of a region and its thickening `A∂ = {k : d(k, A) ≤ r}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub sites: Vec<usize>,
    /// `A∂`, ascending; contains `sites`.
    pub boundary: Vec<usize>,
}

impl Region {
    /// `∂A = A∂ \ A`.
    pub fn outer_boundary(&self) -> Vec<usize> {
        self.boundary
            .iter()
            .copied()
            .filter(|k| !self.sites.contains(k))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Validated lattice with its global Hamiltonian and Gibbs state.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub spec: LatticeSpec,
    pub dims: Vec<usize>,
    pub range: usize,
    /// `K = max_j ‖Φ(j)‖`.
    pub bound: f64,
    /// Largest `‖[Φ(i), Φ(j)]‖_F` found.
    pub commutation_residual: f64,
    /// Qubits with every term diagonal in the computational basis.
    pub classical: bool,
    pub hamiltonian: Operator,
    pub gibbs: Operator,
}

/// Validates `spec` and assembles `H_Λ` and `σ_Λ`.
pub fn build(spec: &LatticeSpec) -> Result<Lattice> {
    Lattice::new(spec.clone())
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        let n = spec.n;
        if n == 0 {
            return Err(AtlabError::Domain("a lattice needs at least one site".into()));
        }
        if n > MAX_SITES {
            return Err(AtlabError::TooLarge(format!(
                "{n} sites requested; superoperator-level work is capped at {MAX_SITES} sites"
            )));
        }
        if spec.local_dim < 2 {
            return Err(AtlabError::Domain(format!("local dimension {}", spec.local_dim)));
        }
        if !(spec.beta.is_finite() && spec.beta >= 0.0) {
            return Err(AtlabError::Domain(format!("inverse temperature {}", spec.beta)));
        }
        let dims = vec![spec.local_dim; n];
        let mut diameter = 0;
        let mut bound: f64 = 0.0;
        let mut classical = spec.local_dim == 2;
        let mut embedded = Vec::with_capacity(spec.terms.len());
        for (t, term) in spec.terms.iter().enumerate() {
            let mut sorted = term.sites.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if term.sites.is_empty() || sorted.len() != term.sites.len() {
                return Err(AtlabError::Schema(format!("terms[{t}].sites must be distinct and non-empty")));
            }
            if let Some(&s) = sorted.iter().find(|&&s| s >= n) {
                return Err(AtlabError::Schema(format!("terms[{t}].sites: site {s} outside 0..{n}")));
            }
            let want = spec.local_dim.pow(term.sites.len() as u32);
            if term.op.nrows() != want || term.op.ncols() != want {
                return Err(AtlabError::Dimension(format!(
                    "terms[{t}].op has dimension {} but its sites need {want}",
                    term.op.nrows()
                )));
            }
            if !linops::is_hermitian(&term.op) {
                return Err(AtlabError::NotHermitian {
                    residual: linops::hermiticity_residual(&term.op),
                });
            }
            for &i in &term.sites {
                for &j in &term.sites {
                    diameter = diameter.max(spec.geometry.distance(n, i, j));
                }
            }
            bound = bound.max(spectral_norm(&term.op));
            let off_diagonal = (0..want)
                .flat_map(|a| (0..want).map(move |b| (a, b)))
                .filter(|(a, b)| a != b)
                .map(|(a, b)| term.op[(a, b)].norm())
                .fold(0.0, f64::max);
            classical &= off_diagonal <= 1e-14;
            embedded.push(linops::embed(&term.op, &dims, &term.sites)?);
        }
        let range = match spec.range {
            Some(r) if r < diameter => {
                return Err(AtlabError::Contract(format!(
                    "a term spans distance {diameter}, beyond the declared range {r}"
                )))
            }
            Some(r) => r,
            None => diameter,
        };
        let mut commutation_residual: f64 = 0.0;
        for i in 0..embedded.len() {
            for j in (i + 1)..embedded.len() {
                let res = linops::commutator(&embedded[i], &embedded[j]).norm();
                if res > tol::POTENTIAL_COMMUTE {
                    return Err(AtlabError::Contract(format!(
                        "terms {i} and {j} do not commute (residual {res:.3e})"
                    )));
                }
                commutation_residual = commutation_residual.max(res);
            }
        }
        let d = spec.local_dim.pow(n as u32);
        let hamiltonian = embedded.iter().fold(linops::zeros(d), |acc, t| acc + t);
        let gibbs = gibbs_state(&hamiltonian, spec.beta)?;
        Ok(Self {
            spec,
            dims,
            range,
            bound,
            commutation_residual,
            classical,
            hamiltonian,
            gibbs,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.spec.n
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn distance(&self, i: usize, j: usize) -> usize {
        self.spec.geometry.distance(self.spec.n, i, j)
    }

    /// Smallest distance between two site sets, `None` when either is empty.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> Option<usize> {
        a.iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.distance(i, j))
            .min()
    }

    pub fn region(&self, sites: &[usize]) -> Result<Region> {
        let mut s = sites.to_vec();
        s.sort_unstable();
        s.dedup();
        if let Some(&bad) = s.iter().find(|&&k| k >= self.spec.n) {
            return Err(AtlabError::Dimension(format!("site {bad} outside the lattice")));
        }
        let boundary = (0..self.spec.n)
            .filter(|&k| s.iter().any(|&a| self.distance(k, a) <= self.range))
            .collect();
        Ok(Region { sites: s, boundary })
    }

    pub fn union(&self, a: &Region, b: &Region) -> Result<Region> {
        let sites: Vec<usize> = a.sites.iter().chain(&b.sites).copied().collect();
        self.region(&sites)
    }

    /// `H_A`: the terms supported inside `sites`, as an operator on those sites in ascending order.
    pub fn region_hamiltonian(&self, sites: &[usize]) -> Result<Operator> {
        let region = self.region(sites)?;
        let local_dims = vec![self.spec.local_dim; region.sites.len()];
        let mut h = linops::zeros(self.spec.local_dim.pow(region.sites.len() as u32));
        for term in &self.spec.terms {
            if let Some(pos) = positions(&term.sites, &region.sites) {
                h += linops::embed(&term.op, &local_dims, &pos)?;
            }
        }
        Ok(h)
    }

    /// `σ_A = e^{−βH_A} / Tr e^{−βH_A}` on the sites of `sites`.
    pub fn region_gibbs(&self, sites: &[usize]) -> Result<Operator> {
        gibbs_state(&self.region_hamiltonian(sites)?, self.spec.beta)
    }

    /// `‖σ_A − Tr_{A^c} σ_Λ‖₁`; the two differ in general because of boundary terms.
    pub fn marginal_discrepancy(&self, sites: &[usize]) -> Result<f64> {
        let region = self.region(sites)?;
        let marginal = linops::partial_trace(&self.gibbs, &FactorPair::new(self.dims.clone()), &region.sites)?;
        Ok(linops::trace_norm(&(self.region_gibbs(&region.sites)? - marginal)))
    }

    /// Sum of the terms touching `region`, as an operator on `support` (which must contain them).
    fn interaction_on(&self, region: &Region, support: &[usize]) -> Result<Operator> {
        let local_dims = vec![self.spec.local_dim; support.len()];
        let mut h = linops::zeros(self.spec.local_dim.pow(support.len() as u32));
        for term in &self.spec.terms {
            if !term.sites.iter().any(|s| region.sites.contains(s)) {
                continue;
            }
            let pos = positions(&term.sites, support).ok_or_else(|| {
                AtlabError::Contract(format!("term on {:?} leaves the region boundary", term.sites))
            })?;
            h += linops::embed(&term.op, &local_dims, &pos)?;
        }
        Ok(h)
    }

    /// `‖H^{A∂}‖`: the norm of the terms touching `region`.
    pub fn interaction_norm(&self, region: &Region) -> Result<f64> {
        Ok(spectral_norm(&self.interaction_on(region, &region.boundary)?))
    }
}

/// Indices of `sites` within `within`, `None` if some site is missing.
fn positions(sites: &[usize], within: &[usize]) -> Option<Vec<usize>> {
    sites
        .iter()
        .map(|s| within.iter().position(|w| w == s))
        .collect()
}

/// Dynamics used to define region conditional expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Davies,
    HeatBath,
    Glauber,
}

/// The region dynamics restricted to `A∂`.
struct LocalDynamics {
    support: Vec<usize>,
    sigma: Operator,
    ops: Vec<Operator>,
    hamiltonian: Option<Operator>,
}

fn local_dynamics(lattice: &Lattice, region: &Region, flavor: Flavor) -> Result<LocalDynamics> {
    if flavor == Flavor::Glauber && !lattice.classical {
        return Err(AtlabError::Contract(
            "Glauber dynamics needs qubits and a diagonal potential".into(),
        ));
    }
    let support = region.boundary.clone();
    let ld = lattice.spec.local_dim;
    let dims = vec![ld; support.len()];
    let beta = lattice.spec.beta;
    // Terms away from A commute with every jump operator, so the terms touching A fix the dynamics.
    let h = lattice.interaction_on(region, &support)?;
    let sigma = gibbs_state(&h, beta)?;
    let region_pos = positions(&region.sites, &support).expect("A ⊂ A∂");
    let (ops, hamiltonian) = match flavor {
        Flavor::Davies => {
            let spec = HamiltonianSpec::new(h.clone(), beta)?;
            let mut couplings = Vec::new();
            for &p in &region_pos {
                for g in linops::gell_mann(ld) {
                    couplings.push(linops::embed(&g, &dims, &[p])?);
                }
            }
            let ops = davies_jump_operators(&spec, &couplings, &RateProfile::Glauber)?;
            (ops, Some(h))
        }
        Flavor::HeatBath => {
            let factors = FactorPair::with_labels(dims, support.clone())?;
            (heat_bath_jump_operators(&sigma, &factors, &region.sites)?, None)
        }
        Flavor::Glauber => {
            let energy: Vec<f64> = (0..h.nrows()).map(|k| h[(k, k)].re).collect();
            let neighborhoods = (0..support.len())
                .map(|p| {
                    let site = support[p];
                    let mut ball = vec![p];
                    if region.sites.contains(&site) {
                        for term in lattice.spec.terms.iter().filter(|t| t.sites.contains(&site)) {
                            ball.extend(positions(&term.sites, &support).expect("terms touching A lie in A∂"));
                        }
                    }
                    ball.sort_unstable();
                    ball.dedup();
                    ball
                })
                .collect();
            let spec = ClassicalSpec {
                n_sites: support.len(),
                beta,
                energy,
                neighborhoods,
            };
            (glauber_jump_operators(&spec, &region_pos, GlauberRule::HeatBath)?, None)
        }
    };
    Ok(LocalDynamics {
        support,
        sigma,
        ops,
        hamiltonian,
    })
}

/// Region generator `L_A` on the whole lattice, with invariant state `σ_Λ`.
pub fn region_generator(lattice: &Lattice, region: &Region, flavor: Flavor) -> Result<LindbladianRep> {
    let local = local_dynamics(lattice, region, flavor)?;
    let ops = local
        .ops
        .iter()
        .map(|l| linops::embed(l, &lattice.dims, &local.support))
        .collect::<Result<Vec<_>>>()?;
    let h = match &local.hamiltonian {
        Some(h) => linops::embed(h, &lattice.dims, &local.support)?,
        None => linops::zeros(lattice.dim()),
    };
    LindbladianRep::from_parts(ops, h, lattice.gibbs.clone())
}

/// `E_A = E_loc ⊗ id`, with `E_loc` acting on the sites `support = A∂`.
#[derive(Debug, Clone)]
pub struct RegionCondExp {
    pub region: Region,
    pub flavor: Flavor,
    pub support: Vec<usize>,
    pub local: ConditionalExpectationRep,
    dims: Vec<usize>,
}

/// `lim_{t→∞} e^{tL_A}` for the chosen dynamics; the empty region gives the identity.
pub fn region_condexp(lattice: &Lattice, region: &Region, flavor: Flavor) -> Result<RegionCondExp> {
    let local = if region.is_empty() {
        ConditionalExpectationRep::from_range(&identity(1), &[identity(1)], None)?
    } else {
        let dynamics = local_dynamics(lattice, region, flavor)?;
        let d = dynamics.sigma.nrows();
        if d <= SPECTRAL_ROUTE_MAX_DIM {
            let h = dynamics.hamiltonian.unwrap_or_else(|| linops::zeros(d));
            let l = LindbladianRep::from_parts(dynamics.ops, h, dynamics.sigma)?;
            fixed_point_projection(&l)?
        } else {
            fixed_point_condexp_from_ops(&dynamics.ops, dynamics.hamiltonian.as_ref(), &dynamics.sigma)?
        }
    };
    Ok(RegionCondExp {
        region: region.clone(),
        flavor,
        support: if region.is_empty() { Vec::new() } else { region.boundary.clone() },
        local,
        dims: lattice.dims.clone(),
    })
}

/// Applies `f` to the factors at `positions` of every block of `x`, leaving the others untouched.
fn act_on_support(x: &Operator, dims: &[usize], positions: &[usize], f: impl Fn(&Operator) -> Operator) -> Operator {
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !positions.contains(k)).collect();
    let perm: Vec<usize> = positions.iter().chain(&rest).copied().collect();
    let perm_dims: Vec<usize> = perm.iter().map(|&k| dims[k]).collect();
    let ds: usize = positions.iter().map(|&k| dims[k]).product();
    let dr: usize = rest.iter().map(|&k| dims[k]).product();
    let y = permute_factors(x, dims, &perm);
    let mut out = linops::zeros(ds * dr);
    for a in 0..dr {
        for b in 0..dr {
            let block = Operator::from_fn(ds, ds, |i, j| y[(i * dr + a, j * dr + b)]);
            let fb = f(&block);
            for i in 0..ds {
                for j in 0..ds {
                    out[(i * dr + a, j * dr + b)] = fb[(i, j)];
                }
            }
        }
    }
    let mut inv = vec![0; dims.len()];
    for (slot, &k) in perm.iter().enumerate() {
        inv[k] = slot;
    }
    permute_factors(&out, &perm_dims, &inv)
}

/// `op ⊗ rest_op` with `op` on the factors at `positions` and `rest_op` on the others in order.
fn place(op: &Operator, rest_op: &Operator, dims: &[usize], positions: &[usize]) -> Operator {
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !positions.contains(k)).collect();
    let order: Vec<usize> = positions.iter().chain(&rest).copied().collect();
    let big_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut inv = vec![0; dims.len()];
    for (slot, &k) in order.iter().enumerate() {
        inv[k] = slot;
    }
    permute_factors(&tensor_product(op, rest_op), &big_dims, &inv)
}

impl RegionCondExp {
    /// `E_A(X)` for an operator on the whole lattice.
    pub fn apply(&self, x: &Operator) -> Operator {
        if self.support.is_empty() {
            return x.clone();
        }
        act_on_support(x, &self.dims, &self.support, |b| self.local.apply(b))
    }

    /// `E_{A*}(ρ)` for a state on the whole lattice.
    pub fn apply_dual(&self, rho: &Operator) -> Operator {
        if self.support.is_empty() {
            return rho.clone();
        }
        act_on_support(rho, &self.dims, &self.support, |b| self.local.apply_dual(b))
    }

    /// Dimension of the fixed-point algebra on the support.
    pub fn local_rank(&self) -> usize {
        self.local.rank()
    }

    /// Range operators `F_k ⊗ e_ab` on the ordered site list `sites ⊇ support`, paired with their duals.
    fn lifted_pairs(&self, sites: &[usize]) -> Result<Vec<(Operator, Operator)>> {
        let pos = positions(&self.support, sites)
            .ok_or_else(|| AtlabError::Dimension("site list does not contain the support".into()))?;
        let ld = self.dims.first().copied().unwrap_or(2);
        let dims = vec![ld; sites.len()];
        let dr = ld.pow((sites.len() - pos.len()) as u32);
        let mut out = Vec::with_capacity(self.local.rank() * dr * dr);
        for (f, w) in self.local.kms_basis.iter().zip(&self.local.duals) {
            for a in 0..dr {
                for b in 0..dr {
                    let e = linops::matrix_unit(dr, a, b);
                    out.push((place(f, &e, &dims, &pos), place(w, &e, &dims, &pos)));
                }
            }
        }
        Ok(out)
    }

    /// Low-rank form of the map on the sites `sites ⊇ support`, identity on the others.
    pub fn low_rank(&self, sites: &[usize]) -> Result<LowRankMap> {
        let pairs = self.lifted_pairs(sites)?;
        let ld = self.dims.first().copied().unwrap_or(2);
        let d = ld.pow(sites.len() as u32);
        let mut left = DMatrix::<C64>::zeros(d * d, pairs.len());
        let mut right = DMatrix::<C64>::zeros(d * d, pairs.len());
        for (k, (f, w)) in pairs.iter().enumerate() {
            left.set_column(k, &vectorize(f));
            right.set_column(k, &vectorize(w));
        }
        Ok(LowRankMap { dim: d, left, right })
    }

    /// The same map as a conditional expectation on the whole lattice for the state `sigma`.
    pub fn to_global(&self, sigma: &Operator) -> Result<ConditionalExpectationRep> {
        let all: Vec<usize> = (0..self.dims.len()).collect();
        let range: Vec<Operator> = if self.support.is_empty() {
            let d = sigma.nrows();
            (0..d)
                .flat_map(|a| (0..d).map(move |b| linops::matrix_unit(d, a, b)))
                .collect()
        } else {
            self.lifted_pairs(&all)?.into_iter().map(|(f, _)| f).collect()
        };
        ConditionalExpectationRep::from_range(sigma, &range, None)
    }
}

/// `X ↦ Σ_k F_k ⟨W_k, X⟩`, stored as `vec(F_k)` and `vec(W_k)` columns.
#[derive(Debug, Clone)]
pub struct LowRankMap {
    pub dim: usize,
    left: DMatrix<C64>,
    right: DMatrix<C64>,
}

impl LowRankMap {
    pub fn apply(&self, x: &Operator) -> Operator {
        let v = &self.left * (self.right.adjoint() * vectorize(x));
        linops::unvectorize_slice(v.as_slice(), self.dim)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            left: &self.left * (self.right.adjoint() * &other.left),
            right: other.right.clone(),
        }
    }

    /// Operator norm of `self − other` on Hilbert–Schmidt space.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut a = DMatrix::<C64>::zeros(self.left.nrows(), self.left.ncols() + other.left.ncols());
        a.columns_mut(0, self.left.ncols()).copy_from(&self.left);
        a.columns_mut(self.left.ncols(), other.left.ncols()).copy_from(&(-&other.left));
        let mut b = DMatrix::<C64>::zeros(self.right.nrows(), self.right.ncols() + other.right.ncols());
        b.columns_mut(0, self.right.ncols()).copy_from(&self.right);
        b.columns_mut(self.right.ncols(), other.right.ncols()).copy_from(&other.right);
        let ra = a.qr().r();
        let rb = b.qr().r();
        spectral_norm(&(ra * rb.adjoint()))
    }
}

/// Sampling parameters for the certificates attached to lattice checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0x1a77,
            tolerance: -tol::CERTIFICATE_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutingSquareReport {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub flavor: Flavor,
    /// `A∂ ∩ B∂ = ∅`.
    pub disjoint_boundaries: bool,
    /// `‖E_A∘E_B − E_{A∪B}‖`.
    pub residual_ab: f64,
    /// `‖E_B∘E_A − E_{A∪B}‖`.
    pub residual_ba: f64,
    /// `‖E_A∘E_B − E_B∘E_A‖`.
    pub commutator: f64,
    pub holds: bool,
    /// `D(ρ‖E_{A∪B*}ρ) ≤ D(ρ‖E_{A*}ρ) + D(ρ‖E_{B*}ρ)` per sampled state, when the square holds.
    pub at_margins: Vec<StateMargin>,
    pub at_violations: usize,
    pub note: Option<String>,
}

impl CommutingSquareReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_ab.max(self.residual_ba).max(self.commutator)
    }
}

/// Compares `E_A∘E_B`, `E_B∘E_A` and `E_{A∪B}` and, when they agree, samples `AT(1, 0)`.
pub fn commuting_square_check(
    lattice: &Lattice,
    a: &Region,
    b: &Region,
    flavor: Flavor,
    opts: &SampleOptions,
) -> Result<CommutingSquareReport> {
    let ab = lattice.union(a, b)?;
    let ea = region_condexp(lattice, a, flavor)?;
    let eb = region_condexp(lattice, b, flavor)?;
    let eab = region_condexp(lattice, &ab, flavor)?;
    let mut sites: Vec<usize> = ea.support.iter().chain(&eb.support).chain(&eab.support).copied().collect();
    sites.sort_unstable();
    sites.dedup();
    let la = ea.low_rank(&sites)?;
    let lb = eb.low_rank(&sites)?;
    let lab = eab.low_rank(&sites)?;
    let a_then_b = la.compose(&lb);
    let b_then_a = lb.compose(&la);
    let residual_ab = a_then_b.distance(&lab);
    let residual_ba = b_then_a.distance(&lab);
    let commutator = a_then_b.distance(&b_then_a);
    let disjoint_boundaries = !a.boundary.iter().any(|k| b.boundary.contains(k));
    let holds = residual_ab.max(residual_ba).max(commutator) <= COMMUTING_SQUARE_TOL;
    let mut at_margins = Vec::new();
    if holds {
        let mut g = sampling::rng(opts.seed);
        let states: Vec<Operator> = (0..opts.samples)
            .map(|_| sampling::random_density(lattice.dim(), &mut g))
            .collect();
        at_margins = states
            .par_iter()
            .enumerate()
            .map(|(id, rho)| {
                let lhs = relative_entropy(rho, &eab.apply_dual(rho))?.value;
                let rhs = relative_entropy(rho, &ea.apply_dual(rho))?.value
                    + relative_entropy(rho, &eb.apply_dual(rho))?.value;
                Ok(StateMargin::new(id, lhs, rhs, "at_1_0"))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    let at_violations = at_margins.iter().filter(|m| m.margin < -opts.tolerance).count();
    let note = match (holds, disjoint_boundaries) {
        (true, _) => None,
        (false, true) => Some("boundaries are disjoint but the residual exceeds the tolerance".into()),
        (false, false) => Some("boundaries overlap; the residual measures the failure of the commuting square".into()),
    };
    Ok(CommutingSquareReport {
        a: a.sites.clone(),
        b: b.sites.clone(),
        flavor,
        disjoint_boundaries,
        residual_ab,
        residual_ba,
        commutator,
        holds,
        at_margins,
        at_violations,
        note,
    })
}

/// `(E_{A∪B}, E_A, E_B)` as conditional expectations on the whole lattice.
pub fn region_quadruple(lattice: &Lattice, a: &Region, b: &Region, flavor: Flavor) -> Result<ATQuadruple> {
    let ab = lattice.union(a, b)?;
    let global = |r: &Region| region_condexp(lattice, r, flavor)?.to_global(&lattice.gibbs);
    ATQuadruple::new(global(&ab)?, global(a)?, global(b)?)
}

/// Change-of-measure certificate for two regions of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeChangeOfMeasure {
    /// `‖H^{A∂}‖`.
    pub interaction_norm: f64,
    /// `e^{4β‖H^{A∂}‖}`.
    pub c: f64,
    /// Weak constant of the same regions at `β = 0`.
    pub d0: Bracket,
    /// `e^{2β‖H^{A∂}‖}` times the upper end of `d0`.
    pub d: f64,
    pub report: ATReport,
}

/// Certifies `D(ρ‖E_{A∪B*}ρ) ≤ c·(D(ρ‖E_{A*}ρ) + D(ρ‖E_{B*}ρ)) + d` with the constants obtained by
/// comparing `σ_Λ` with the infinite-temperature state.
pub fn lattice_change_of_measure(
    lattice: &Lattice,
    a: &Region,
    b: &Region,
    flavor: Flavor,
    states: &[Operator],
    ascent: &AscentOptions,
    tolerance: f64,
) -> Result<LatticeChangeOfMeasure> {
    let norm = lattice.interaction_norm(a)?;
    let beta = lattice.spec.beta;
    let hot = Lattice::new(LatticeSpec {
        beta: 0.0,
        ..lattice.spec.clone()
    })?;
    let d0 = weak_d_corollary(&region_quadruple(&hot, a, b, flavor)?, ascent)?.bracket;
    let c = (4.0 * beta * norm).exp();
    let d = (2.0 * beta * norm).exp() * d0.upper.max(0.0);
    let quad = region_quadruple(lattice, a, b, flavor)?;
    let mut report = ATReport::new(tolerance);
    report.constants.c = Some(c);
    report.constants.d = Some(d);
    report.constants.weak_d = Some(d0);
    report.push_check(
        "lattice_change_of_measure",
        at_margins(&quad, c, d, states, "lattice_change_of_measure")?,
    );
    Ok(LatticeChangeOfMeasure {
        interaction_norm: norm,
        c,
        d0,
        d,
        report,
    })
}

/// Least-squares fit `ln c ≈ ln κ − ξ·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kappa: f64,
    pub xi: f64,
    /// `ln c − (ln κ − ξ d)` per fitted pair.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPair {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// `d(A\B, B\A)`; `None` when one region contains the other.
    pub separation: Option<usize>,
    pub c: Bracket,
    /// The upper bound sits at the numerical floor.
    pub at_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScan {
    pub flavor: Flavor,
    pub pairs: Vec<ClusterPair>,
    pub fit: Option<DecayFit>,
    pub fit_note: Option<String>,
}

impl ClusteringScan {
    /// Upper bounds never increase with the separation (up to `slack`).
    pub fn nonincreasing(&self, slack: f64) -> bool {
        let mut pts: Vec<(usize, f64)> = self
            .pairs
            .iter()
            .filter_map(|p| p.separation.map(|s| (s, p.c.upper)))
            .collect();
        pts.sort_by(|x, y| x.0.cmp(&y.0));
        pts.windows(2).all(|w| w[1].1 <= w[0].1 + slack)
    }
}

/// Fits `ln c` against the separation; needs three distinct separations above the floor.
pub fn fit_decay(points: &[(usize, f64)]) -> std::result::Result<DecayFit, String> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, c)| *c > CLUSTERING_FLOOR)
        .map(|&(s, c)| (s as f64, c.ln()))
        .collect();
    let mut distinct: Vec<usize> = points.iter().filter(|(_, c)| *c > CLUSTERING_FLOOR).map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(format!(
            "{} distinct separations above the numerical floor; at least 3 are needed for a fit",
            distinct.len()
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(DecayFit {
        kappa: intercept.exp(),
        xi: -slope,
        residuals: pts.iter().map(|p| p.1 - (intercept + slope * p.0)).collect(),
    })
}

/// `c(A, B)` for overlapping pairs, with an exponential fit against `d(A\B, B\A)`.
pub fn clustering_decay_scan(
    lattice: &Lattice,
    pairs: &[(Region, Region)],
    flavor: Flavor,
    opts: &AscentOptions,
) -> Result<ClusteringScan> {
    for (a, b) in pairs {
        if !a.sites.iter().any(|k| b.sites.contains(k)) {
            return Err(AtlabError::Contract(format!(
                "regions {:?} and {:?} do not overlap",
                a.sites, b.sites
            )));
        }
    }
    let results = pairs
        .par_iter()
        .map(|(a, b)| {
            let quad = region_quadruple(lattice, a, b, flavor)?;
            let c = c1_conditional_l1(&quad, opts)?.bracket();
            let a_only: Vec<usize> = a.sites.iter().copied().filter(|k| !b.sites.contains(k)).collect();
            let b_only: Vec<usize> = b.sites.iter().copied().filter(|k| !a.sites.contains(k)).collect();
            Ok(ClusterPair {
                a: a.sites.clone(),
                b: b.sites.clone(),
                separation: lattice.set_distance(&a_only, &b_only),
                at_floor: c.upper <= CLUSTERING_FLOOR,
                c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(usize, f64)> = results
        .iter()
        .filter_map(|p| p.separation.map(|s| (s, p.c.upper)))
        .collect();
    let (fit, fit_note) = match fit_decay(&points) {
        Ok(f) => (Some(f), None),
        Err(note) => (None, Some(note)),
    };
    Ok(ClusteringScan {
        flavor,
        pairs: results,
        fit,
        fit_note,
    })
}

/// Stochastic matrix `K[y, x]` of the classical conditional expectation onto the outside of `sites`:
/// the spins in `sites` are resampled from the Gibbs measure conditioned on the rest.
fn classical_kernel(lattice: &Lattice, sites: &[usize]) -> DMatrix<f64> {
    let n = lattice.n_sites();
    let d = lattice.dim();
    let mask: usize = sites.iter().map(|&s| 1usize << (n - 1 - s)).sum();
    let energy: Vec<f64> = (0..d).map(|k| lattice.hamiltonian[(k, k)].re).collect();
    let emin = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let weight: Vec<f64> = energy.iter().map(|e| (-lattice.spec.beta * (e - emin)).exp()).collect();
    let mut k = DMatrix::<f64>::zeros(d, d);
    for x in 0..d {
        let z: f64 = (0..d).filter(|y| y & !mask == x & !mask).map(|y| weight[y]).sum();
        for y in (0..d).filter(|y| y & !mask == x & !mask) {
            k[(y, x)] = weight[y] / z;
        }
    }
    k
}

fn require_classical(lattice: &Lattice) -> Result<()> {
    if lattice.classical {
        Ok(())
    } else {
        Err(AtlabError::Contract(
            "the potential is not classical (qubits with diagonal terms)".into(),
        ))
    }
}

/// `sup_ρ D_max(E_{A*}E_{B*}ρ ‖ E_{A∪B*}ρ)` for Glauber dynamics.
///
/// Both maps dephase `A∪B∪∂(A∪B)` and act there by the Markov kernels of resampling `B` then `A`
/// and resampling `A∪B` from the conditional Gibbs measures, so the supremum is the largest
/// log-ratio of kernel entries, attained on computational basis states.
pub fn glauber_dmax_bound(lattice: &Lattice, a: &Region, b: &Region) -> Result<f64> {
    require_classical(lattice)?;
    let ka = classical_kernel(lattice, &a.sites);
    let kb = classical_kernel(lattice, &b.sites);
    let ab = lattice.union(a, b)?;
    let kab = classical_kernel(lattice, &ab.sites);
    let two_step = ka * kb;
    let mut worst = f64::NEG_INFINITY;
    for (p, q) in two_step.iter().zip(kab.iter()) {
        if *p <= 0.0 {
            continue;
        }
        if *q <= 0.0 {
            return Ok(f64::INFINITY);
        }
        worst = worst.max((p / q).ln());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlauberReport {
    pub square: CommutingSquareReport,
    pub dmax_bound: f64,
    /// Largest `D_max(E_{A*}E_{B*}ρ ‖ E_{A∪B*}ρ)` over the sampled states.
    pub sampled_dmax: f64,
    pub bound_holds: bool,
}

/// Glauber commuting square (exact at `β = 0`) together with the boundary-conditioned `D_max` bound.
pub fn glauber_infinite_temp_check(
    lattice: &Lattice,
    a: &Region,
    b: &Region,
    opts: &SampleOptions,
) -> Result<GlauberReport> {
    require_classical(lattice)?;
    let square = commuting_square_check(lattice, a, b, Flavor::Glauber, opts)?;
    let dmax_bound = glauber_dmax_bound(lattice, a, b)?;
    let sampled_dmax = sampled_glauber_dmax(lattice, a, b, opts.samples, opts.seed)?;
    Ok(GlauberReport {
        bound_holds: sampled_dmax <= dmax_bound + opts.tolerance,
        square,
        dmax_bound,
        sampled_dmax,
    })
}

/// Largest sampled `D_max(E_{A*}E_{B*}ρ ‖ E_{A∪B*}ρ)` over random states.
pub fn sampled_glauber_dmax(lattice: &Lattice, a: &Region, b: &Region, samples: usize, seed: u64) -> Result<f64> {
    let ea = region_condexp(lattice, a, Flavor::Glauber)?;
    let eb = region_condexp(lattice, b, Flavor::Glauber)?;
    let eab = region_condexp(lattice, &lattice.union(a, b)?, Flavor::Glauber)?;
    let mut g = sampling::rng(seed);
    let states: Vec<Operator> = (0..samples)
        .map(|_| sampling::random_density(lattice.dim(), &mut g))
        .collect();
    let values = states
        .par_iter()
        .map(|rho| Ok(dmax(&ea.apply_dual(&eb.apply_dual(rho)), &eab.apply_dual(rho))?.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}
