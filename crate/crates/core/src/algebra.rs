//! Finite-dimensional *-algebras, their block structure, and conditional expectations onto them.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{AtlabError, Result};
use crate::linops::{
    self, complex_power, eigh_unchecked, group_sorted, hermitian_part, hs_inner, identity,
    orthonormal_span, r, tensor_product, vectorize, Operator, OperatorJson, SupportPolicy, C64,
};
use crate::maps::{a_sigma, compose, subtract, MapTags, SuperOperator};
use crate::sampling::{random_density, random_hermitian, rng, Rng};
use crate::tol;

const DECOMPOSITION_SEED: u64 = 0x5eed_a16e;
const SPAN_REL_TOL: f64 = 1e-10;
const NULLSPACE_REL_TOL: f64 = 1e-10;
/// Generators whose traceless part is this small relative to their norm are treated as scalars.
const IDENTITY_REL_TOL: f64 = 1e-10;
/// Generous eigenvalue merge for the random-probe step; over-merging only enlarges the search space.
const PROBE_MERGE_REL: f64 = 1e-8;

/// Unital *-subalgebra of `B(C^dim)` given by a Hilbert–Schmidt orthonormal basis.
#[derive(Debug, Clone)]
pub struct MatrixAlgebra {
    pub dim: usize,
    pub basis: Vec<Operator>,
}

impl MatrixAlgebra {
    /// Orthonormalizes `ops` and checks closure, adjoints and the unit.
    pub fn new(ops: &[Operator], dim: usize) -> Result<Self> {
        let alg = Self::from_span(ops, dim);
        let res = alg.closure_residual();
        if res > tol::ALGEBRA_CLOSURE {
            return Err(AtlabError::NotAnAlgebra(format!(
                "closure residual {res:.3e}"
            )));
        }
        Ok(alg)
    }

    /// Orthonormal basis of the linear span, without algebra checks.
    pub fn from_span(ops: &[Operator], dim: usize) -> Self {
        let vecs: Vec<DVector<C64>> = ops.iter().map(vectorize).collect();
        let q = orthonormal_span(&vecs, SPAN_REL_TOL);
        let basis = (0..q.ncols())
            .map(|k| linops::unvectorize_slice(q.column(k).as_slice(), dim))
            .collect();
        Self { dim, basis }
    }

    pub fn full(dim: usize) -> Self {
        let basis = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| linops::matrix_unit(dim, i, j)))
            .collect();
        Self { dim, basis }
    }

    pub fn scalars(dim: usize) -> Self {
        Self {
            dim,
            basis: vec![identity(dim) / r((dim as f64).sqrt())],
        }
    }

    /// Diagonal matrices in the computational basis.
    pub fn diagonal(dim: usize) -> Self {
        Self {
            dim,
            basis: (0..dim).map(|i| linops::matrix_unit(dim, i, i)).collect(),
        }
    }

    /// Algebra generated by the projectors of a complete orthogonal family.
    pub fn from_projectors(projs: &[Operator]) -> Result<Self> {
        let dim = projs
            .first()
            .map(|p| p.nrows())
            .ok_or_else(|| AtlabError::Contract("empty projector family".into()))?;
        Self::new(projs, dim)
    }

    /// Smallest *-algebra containing `gens` and the identity, as a double commutant.
    pub fn generated(gens: &[Operator], dim: usize) -> Result<Self> {
        let first = commutant(gens, dim)?;
        commutant(&first.basis, dim)
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Hilbert–Schmidt orthogonal projection onto the algebra.
    pub fn project(&self, x: &Operator) -> Operator {
        self.basis
            .iter()
            .fold(linops::zeros(self.dim), |acc, b| acc + b * hs_inner(b, x))
    }

    pub fn membership_residual(&self, x: &Operator) -> f64 {
        (x - self.project(x)).norm()
    }

    /// Largest failure of unit membership, adjoint closure and product closure, probed on random elements.
    pub fn closure_residual(&self) -> f64 {
        if self.basis.is_empty() {
            return f64::INFINITY;
        }
        let mut worst = self.membership_residual(&identity(self.dim)) / (self.dim as f64).sqrt();
        let mut g = rng(DECOMPOSITION_SEED ^ 0x11);
        let probes: Vec<Operator> = (0..6).map(|_| self.random_element(&mut g)).collect();
        for a in &probes {
            let na = a.norm();
            worst = worst.max(self.membership_residual(&a.adjoint()) / na);
            for b in &probes {
                let ab = a * b;
                worst = worst.max(self.membership_residual(&ab) / (na * b.norm()));
            }
        }
        worst
    }

    pub fn random_element(&self, g: &mut Rng) -> Operator {
        self.basis.iter().fold(linops::zeros(self.dim), |acc, b| {
            acc + b * crate::sampling::gaussian(g)
        })
    }

    /// Random Hermitian element, assuming the algebra is closed under adjoints.
    pub fn random_hermitian_element(&self, g: &mut Rng) -> Operator {
        hermitian_part(&self.random_element(g))
    }
}

/// Commutant `{X : [X, g] = [X, g†] = 0 for all g}`.
///
/// A random Hermitian combination `h` of the generators restricts the commutant to
/// `⊕_j B(V_j)` over the eigenspaces `V_j` of `h`; the remaining linear constraints are solved
/// as the null space of their Gram matrix.
pub fn commutant(gens: &[Operator], dim: usize) -> Result<MatrixAlgebra> {
    for g in gens {
        if g.nrows() != dim || g.ncols() != dim {
            return Err(AtlabError::Dimension(format!(
                "generator has shape {:?}, expected {dim}",
                g.shape()
            )));
        }
    }
    // Drop multiples of the identity; they constrain nothing. Rounding noise on a numerically
    // computed identity would otherwise act as a spurious generator.
    let mut gs: Vec<Operator> = Vec::new();
    for g in gens {
        let t = g.trace() / r(dim as f64);
        let traceless = g - identity(dim) * t;
        if traceless.norm() > IDENTITY_REL_TOL * g.norm().max(1.0) {
            gs.push(traceless.adjoint());
            gs.push(traceless);
        }
    }
    if gs.is_empty() {
        return Ok(MatrixAlgebra::full(dim));
    }
    let mut g = rng(DECOMPOSITION_SEED);
    let mut h = linops::zeros(dim);
    for x in &gs {
        let scale = x.norm();
        let coef = r(g.gen_range(-1.0..1.0));
        h += x * (coef / r(scale));
    }
    let h = hermitian_part(&h);
    let (vals, vecs) = eigh_unchecked(&h);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let groups = group_sorted(&vals, PROBE_MERGE_REL * scale.max(f64::MIN_POSITIVE));
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for grp in &groups {
        for &a in grp {
            for &b in grp {
                pairs.push((a, b));
            }
        }
    }
    let n = pairs.len();
    let vd = vecs.adjoint();
    let mut k = DMatrix::<C64>::zeros(n, n);
    for x in &gs {
        let gt = &vd * x * &vecs;
        let ggd = &gt * gt.adjoint();
        let gdg = gt.adjoint() * &gt;
        for (p, &(a, b)) in pairs.iter().enumerate() {
            for (q, &(a2, b2)) in pairs.iter().enumerate() {
                let mut v = -gt[(b, b2)].conj() * gt[(a, a2)] - gt[(a2, a)].conj() * gt[(b2, b)];
                if a == a2 {
                    v += ggd[(b2, b)];
                }
                if b == b2 {
                    v += gdg[(a, a2)];
                }
                k[(p, q)] += v;
            }
        }
    }
    let (kv, kvec) = eigh_unchecked(&hermitian_part(&k));
    // Scale by the generators, not by the top eigenvalue, which is pure rounding when every
    // candidate already commutes.
    let top = gs.iter().map(|x| x.norm_squared()).sum::<f64>().max(1e-300);
    let mut basis = Vec::new();
    for (col, &ev) in kv.iter().enumerate() {
        if ev > NULLSPACE_REL_TOL * top {
            break;
        }
        let mut xt = linops::zeros(dim);
        for (p, &(a, b)) in pairs.iter().enumerate() {
            xt[(a, b)] = kvec[(p, col)];
        }
        basis.push(&vecs * xt * &vd);
    }
    Ok(MatrixAlgebra { dim, basis })
}

/// One block `P_i B(H) P_i ≅ B(H_i) ⊗ 1_{K_i}`.
#[derive(Debug, Clone)]
pub struct Block {
    pub projector: Operator,
    pub dh: usize,
    pub dk: usize,
    /// Co-isometry `(dh·dk) × dim` whose rows are the basis `|j⟩ ⊗ |m⟩` of the block, index `j·dk + m`.
    pub factorizer: DMatrix<C64>,
}

/// Wedderburn decomposition `⊕_i B(H_i) ⊗ 1_{K_i}` of a unital *-algebra.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub dim: usize,
    pub blocks: Vec<Block>,
}

#[derive(Serialize, Deserialize)]
struct BlockDecompositionJson {
    #[serde(rename = "dH")]
    dh: Vec<usize>,
    #[serde(rename = "dK")]
    dk: Vec<usize>,
    #[serde(rename = "P")]
    p: Vec<OperatorJson>,
    #[serde(rename = "U")]
    u: Vec<OperatorJson>,
}

impl Serialize for BlockDecomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let padded = |b: &Block| {
            let mut u = linops::zeros(self.dim);
            u.rows_mut(0, b.dh * b.dk).copy_from(&b.factorizer);
            OperatorJson::from(&u)
        };
        BlockDecompositionJson {
            dh: self.blocks.iter().map(|b| b.dh).collect(),
            dk: self.blocks.iter().map(|b| b.dk).collect(),
            p: self.blocks.iter().map(|b| OperatorJson::from(&b.projector)).collect(),
            u: self.blocks.iter().map(padded).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockDecomposition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let j = BlockDecompositionJson::deserialize(d)?;
        let n = j.dh.len();
        if j.dk.len() != n || j.p.len() != n || j.u.len() != n {
            return Err(D::Error::custom("block decomposition lists differ in length"));
        }
        let mut blocks = Vec::new();
        let mut dim = 0;
        for k in 0..n {
            let p = Operator::try_from(&j.p[k]).map_err(D::Error::custom)?;
            let u = Operator::try_from(&j.u[k]).map_err(D::Error::custom)?;
            dim = p.nrows();
            let rows = j.dh[k] * j.dk[k];
            if rows > dim || u.nrows() != dim {
                return Err(D::Error::custom("block sizes exceed the ambient dimension"));
            }
            blocks.push(Block {
                projector: p,
                dh: j.dh[k],
                dk: j.dk[k],
                factorizer: u.rows(0, rows).into_owned(),
            });
        }
        Ok(BlockDecomposition { dim, blocks })
    }
}

impl BlockDecomposition {
    /// `B(H_kept) ⊗ 1_rest` for a tensor product space with factor sizes `dims`.
    pub fn local(dims: &[usize], kept: &[usize]) -> Result<Self> {
        if kept.iter().any(|&k| k >= dims.len()) {
            return Err(AtlabError::Dimension(format!(
                "factor positions {kept:?} out of range for {} factors",
                dims.len()
            )));
        }
        let rest: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
        let dh: usize = kept.iter().map(|&k| dims[k]).product();
        let dk: usize = rest.iter().map(|&k| dims[k]).product();
        let d = dh * dk;
        let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
        let rest_dims: Vec<usize> = rest.iter().map(|&k| dims[k]).collect();
        let mut factorizer = DMatrix::<C64>::zeros(d, d);
        for col in 0..d {
            let digs = linops::digits(col, dims);
            let h: Vec<usize> = kept.iter().map(|&k| digs[k]).collect();
            let k: Vec<usize> = rest.iter().map(|&k| digs[k]).collect();
            let row = linops::from_digits(&h, &kept_dims) * dk + linops::from_digits(&k, &rest_dims);
            factorizer[(row, col)] = C64::new(1.0, 0.0);
        }
        Ok(Self {
            dim: d,
            blocks: vec![Block {
                projector: identity(d),
                dh,
                dk,
                factorizer,
            }],
        })
    }

    /// `U_i X U_i†` as an operator on `H_i ⊗ K_i`.
    pub fn compress(&self, i: usize, x: &Operator) -> Operator {
        let u = &self.blocks[i].factorizer;
        u * x * u.adjoint()
    }

    /// `U_i† Y U_i` for `Y` on `H_i ⊗ K_i`.
    pub fn expand(&self, i: usize, y: &Operator) -> Operator {
        let u = &self.blocks[i].factorizer;
        u.adjoint() * y * u
    }

    fn block_factors(&self, i: usize) -> linops::FactorPair {
        linops::FactorPair::new(vec![self.blocks[i].dh, self.blocks[i].dk])
    }

    /// `Tr_{K_i}[P_i X P_i]`.
    pub fn block_marginal_h(&self, i: usize, x: &Operator) -> Result<Operator> {
        linops::partial_trace(&self.compress(i, x), &self.block_factors(i), &[0])
    }

    /// `Tr_{H_i}[P_i X P_i]`.
    pub fn block_marginal_k(&self, i: usize, x: &Operator) -> Result<Operator> {
        linops::partial_trace(&self.compress(i, x), &self.block_factors(i), &[1])
    }

    /// Hilbert–Schmidt orthonormal basis `U_i†(e_{jj'} ⊗ 1) U_i / √dK`.
    pub fn algebra_basis(&self) -> Vec<Operator> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let one_k = identity(b.dk) / r((b.dk as f64).sqrt());
            for j in 0..b.dh {
                for j2 in 0..b.dh {
                    let e = tensor_product(&linops::matrix_unit(b.dh, j, j2), &one_k);
                    out.push(self.expand(i, &e));
                }
            }
        }
        out
    }

    pub fn to_algebra(&self) -> MatrixAlgebra {
        MatrixAlgebra {
            dim: self.dim,
            basis: self.algebra_basis(),
        }
    }

    pub fn central_projectors(&self) -> Vec<Operator> {
        self.blocks.iter().map(|b| b.projector.clone()).collect()
    }

    /// `⊕_i ρ_{H_i} ⊗ 1_{K_i}/dK_i`, the tracial conditional expectation in the Schrödinger picture.
    pub fn tracial_state_projection(&self, rho: &Operator) -> Operator {
        let mut out = linops::zeros(self.dim);
        for (i, b) in self.blocks.iter().enumerate() {
            let m = self
                .block_marginal_h(i, rho)
                .expect("block factor dimensions are consistent");
            let y = tensor_product(&m, &(identity(b.dk) / r(b.dk as f64)));
            out += self.expand(i, &y);
        }
        out
    }

    /// Largest `‖U B U† − b ⊗ 1‖` over the algebra basis, a self-check of the decomposition.
    pub fn factorization_residual(&self, alg: &MatrixAlgebra) -> f64 {
        let mut worst: f64 = 0.0;
        for x in &alg.basis {
            let mut rebuilt = linops::zeros(self.dim);
            for (i, b) in self.blocks.iter().enumerate() {
                let c = self.compress(i, x);
                let m = self.block_marginal_h(i, x).expect("consistent dims") / r(b.dk as f64);
                let y = tensor_product(&m, &identity(b.dk));
                worst = worst.max((c - &y).norm());
                rebuilt += self.expand(i, &y);
            }
            worst = worst.max((x - rebuilt).norm());
        }
        worst
    }
}

/// Wedderburn decomposition of a unital *-algebra.
pub fn decompose_algebra(alg: &MatrixAlgebra) -> Result<BlockDecomposition> {
    let res = alg.closure_residual();
    if res > tol::ALGEBRA_CLOSURE {
        return Err(AtlabError::NotAnAlgebra(format!("closure residual {res:.3e}")));
    }
    let d = alg.dim;
    let comm = commutant(&alg.basis, d)?;
    let mut both = alg.basis.clone();
    both.extend(comm.basis.iter().cloned());
    let center = commutant(&both, d)?;
    let mut g = rng(DECOMPOSITION_SEED ^ 0x22);
    let z = center.random_hermitian_element(&mut g);
    let (vals, vecs) = eigh_unchecked(&z);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let groups = group_sorted(&vals, PROBE_MERGE_REL * scale.max(f64::MIN_POSITIVE));
    if groups.len() != center.dimension() {
        return Err(AtlabError::NotAnAlgebra(format!(
            "center has dimension {} but yields {} minimal projections",
            center.dimension(),
            groups.len()
        )));
    }
    let mut blocks = Vec::new();
    for grp in groups {
        let w = vecs.select_columns(grp.iter());
        blocks.push(decompose_block(alg, &w, &mut g)?);
    }
    let dec = BlockDecomposition { dim: d, blocks };
    let fres = dec.factorization_residual(alg);
    if fres > 1e-7 {
        return Err(AtlabError::NotAnAlgebra(format!(
            "block factorization residual {fres:.3e}"
        )));
    }
    Ok(dec)
}

/// Factorizes the algebra restricted to the range of `w` (orthonormal columns of a central projection).
fn decompose_block(alg: &MatrixAlgebra, w: &DMatrix<C64>, g: &mut Rng) -> Result<Block> {
    let rank = w.ncols();
    let wd = w.adjoint();
    let local: Vec<Operator> = alg.basis.iter().map(|b| &wd * b * w).collect();
    let local_alg = MatrixAlgebra::from_span(&local, rank);
    let n = local_alg.dimension();
    let dh = (n as f64).sqrt().round() as usize;
    if dh * dh != n || dh == 0 || rank % dh != 0 {
        return Err(AtlabError::NotAnAlgebra(format!(
            "block of rank {rank} carries a {n}-dimensional algebra"
        )));
    }
    let dk = rank / dh;
    for _attempt in 0..8 {
        let a = local_alg.random_hermitian_element(g);
        let (vals, vecs) = eigh_unchecked(&a);
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let groups = group_sorted(&vals, PROBE_MERGE_REL * scale.max(f64::MIN_POSITIVE));
        if groups.len() != dh || groups.iter().any(|gr| gr.len() != dk) {
            continue;
        }
        let qs: Vec<DMatrix<C64>> = groups.iter().map(|gr| vecs.select_columns(gr.iter())).collect();
        let b = local_alg.random_element(g);
        let mut rows = DMatrix::<C64>::zeros(rank, w.nrows());
        let mut ok = true;
        for (j, q) in qs.iter().enumerate() {
            let frame = if j == 0 {
                q.clone()
            } else {
                let t = q.adjoint() * &b * &qs[0];
                let tt = t.adjoint() * &t;
                let cnorm = tt[(0, 0)].re;
                if cnorm < 1e-10 || (tt - identity(dk) * r(cnorm)).norm() > 1e-8 * cnorm.max(1.0) {
                    ok = false;
                    break;
                }
                q * t / r(cnorm.sqrt())
            };
            let global = w * frame;
            for m in 0..dk {
                let col = global.column(m).adjoint();
                rows.set_row(j * dk + m, &col);
            }
        }
        if ok {
            return Ok(Block {
                projector: w * &wd,
                dh,
                dk,
                factorizer: rows,
            });
        }
    }
    Err(AtlabError::NotAnAlgebra(
        "could not separate the block into matrix units".into(),
    ))
}

/// Conditional expectation given as a KMS-orthogonal projection onto its range algebra.
#[derive(Debug, Clone)]
pub struct ConditionalExpectationRep {
    pub dim: usize,
    /// Faithful invariant state for which the map is KMS-self-adjoint.
    pub sigma: Operator,
    /// `E_*(1/d)`.
    pub sigma_tr: Operator,
    pub range: BlockDecomposition,
    /// Normalized `K_i` parts of invariant states, one per block.
    pub tau_blocks: Vec<Operator>,
    /// Range basis, orthonormal for `⟨X, Y⟩_σ = Tr[σ^{1/2} X† σ^{1/2} Y]`.
    pub kms_basis: Vec<Operator>,
    /// `σ^{1/2} F_k σ^{1/2}` for each basis element `F_k`.
    pub duals: Vec<Operator>,
    pub dense: Option<SuperOperator>,
}

impl ConditionalExpectationRep {
    /// Builds the KMS-orthogonal projection onto `span(range_ops)` for the faithful state `sigma`.
    pub fn from_range(
        sigma: &Operator,
        range_ops: &[Operator],
        known: Option<&BlockDecomposition>,
    ) -> Result<Self> {
        let d = sigma.nrows();
        let s_half = complex_power(sigma, r(0.5), SupportPolicy::Error)?;
        let s_quarter = complex_power(sigma, r(0.25), SupportPolicy::Error)?;
        let s_inv_quarter = complex_power(sigma, r(-0.25), SupportPolicy::Error)?;
        // KMS orthonormalization is HS orthonormalization of σ^{1/4} F σ^{1/4}.
        let sym: Vec<DVector<C64>> = range_ops
            .iter()
            .map(|f| vectorize(&(&s_quarter * f * &s_quarter)))
            .collect();
        let q = orthonormal_span(&sym, SPAN_REL_TOL);
        let kms_basis: Vec<Operator> = (0..q.ncols())
            .map(|k| {
                let y = linops::unvectorize_slice(q.column(k).as_slice(), d);
                &s_inv_quarter * y * &s_inv_quarter
            })
            .collect();
        let duals: Vec<Operator> = kms_basis.iter().map(|f| &s_half * f * &s_half).collect();
        let range = match known {
            Some(dec) if dec.to_algebra().dimension() == kms_basis.len() => dec.clone(),
            _ => decompose_algebra(&MatrixAlgebra::from_span(&kms_basis, d))?,
        };
        let dense = if d <= tol::DENSE_SUPEROP_MAX_DIM {
            let mut m = DMatrix::<C64>::zeros(d * d, d * d);
            for (f, w) in kms_basis.iter().zip(&duals) {
                m += vectorize(f) * vectorize(w).adjoint();
            }
            Some(SuperOperator::from_matrix(d, m)?.with_tags(MapTags {
                cp: Some(true),
                unital: Some(true),
                trace_preserving: None,
            }))
        } else {
            None
        };
        let mut rep = Self {
            dim: d,
            sigma: sigma.clone(),
            sigma_tr: linops::zeros(d),
            range,
            tau_blocks: Vec::new(),
            kms_basis,
            duals,
            dense,
        };
        rep.sigma_tr = rep.apply_dual(&(identity(d) / r(d as f64)));
        rep.tau_blocks = (0..rep.range.blocks.len())
            .map(|i| {
                let t = rep.range.block_marginal_k(i, &rep.sigma_tr)?;
                let tr = t.trace();
                Ok(t / tr)
            })
            .collect::<Result<_>>()?;
        Ok(rep)
    }

    /// Heisenberg-picture action `E(X)`.
    pub fn apply(&self, x: &Operator) -> Operator {
        if let Some(s) = &self.dense {
            return s.apply(x);
        }
        self.kms_basis
            .iter()
            .zip(&self.duals)
            .fold(linops::zeros(self.dim), |acc, (f, w)| acc + f * hs_inner(w, x))
    }

    /// Schrödinger-picture action `E_*(ρ)`.
    pub fn apply_dual(&self, rho: &Operator) -> Operator {
        if let Some(s) = &self.dense {
            return s.apply_adjoint(rho);
        }
        self.kms_basis
            .iter()
            .zip(&self.duals)
            .fold(linops::zeros(self.dim), |acc, (f, w)| acc + w * hs_inner(f, rho))
    }

    pub fn superop(&self) -> Result<&SuperOperator> {
        self.dense.as_ref().ok_or_else(|| {
            AtlabError::TooLarge(format!(
                "dense superoperator not stored for dimension {}",
                self.dim
            ))
        })
    }

    pub fn rank(&self) -> usize {
        self.kms_basis.len()
    }
}

/// Tracial conditional expectation onto the algebra of `dec` (each `τ_i = 1/dK_i`).
pub fn condexp_tau(dec: &BlockDecomposition) -> Result<ConditionalExpectationRep> {
    let d = dec.dim;
    let sigma = identity(d) / r(d as f64);
    ConditionalExpectationRep::from_range(&sigma, &dec.algebra_basis(), Some(dec))
}

/// `E_σ = lim A_σ^n`, computed as the eigenvalue-one spectral projector of the
/// `Γ_σ^{1/2}`-symmetrized map, which is Hilbert–Schmidt self-adjoint with spectrum in `[0, 1]`.
pub fn condexp_petz(dec: &BlockDecomposition, sigma: &Operator) -> Result<ConditionalExpectationRep> {
    crate::entropy::check_density(sigma)?;
    let d = dec.dim;
    let a = a_sigma(sigma, dec)?;
    let s_quarter = complex_power(sigma, r(0.25), SupportPolicy::Error)?;
    let s_inv_quarter = complex_power(sigma, r(-0.25), SupportPolicy::Error)?;
    let g_half = SuperOperator::sandwich(&s_quarter, &s_quarter);
    let g_inv_half = SuperOperator::sandwich(&s_inv_quarter, &s_inv_quarter);
    let sym = compose(&compose(&g_half, &a), &g_inv_half);
    let (vals, vecs) = eigh_unchecked(&hermitian_part(&sym.matrix));
    let mut range = Vec::new();
    for (k, &v) in vals.iter().enumerate() {
        if v >= 1.0 - tol::GENERATOR_KERNEL {
            let y = linops::unvectorize_slice(vecs.column(k).as_slice(), d);
            range.push(&s_inv_quarter * y * &s_inv_quarter);
        }
    }
    ConditionalExpectationRep::from_range(sigma, &range, Some(dec))
}

/// `A_σ^steps` by binary exponentiation; converges to `E_σ` since the spectrum of `A_σ` lies in `[0, 1]`.
pub fn petz_power_iteration(
    dec: &BlockDecomposition,
    sigma: &Operator,
    steps: u32,
) -> Result<SuperOperator> {
    let a = a_sigma(sigma, dec)?;
    let mut result = SuperOperator::identity(dec.dim);
    let mut base = a;
    let mut e = steps;
    while e > 0 {
        if e & 1 == 1 {
            result = compose(&result, &base);
        }
        base = compose(&base, &base);
        e >>= 1;
    }
    Ok(result)
}

/// Modular data of a faithful state `σ`.
#[derive(Debug, Clone)]
pub struct ModularMaps {
    eigenvalues: Vec<f64>,
    eigenvectors: Operator,
}

impl ModularMaps {
    fn power(&self, z: C64) -> Operator {
        let vals: Vec<C64> = self.eigenvalues.iter().map(|&l| (z * l.ln()).exp()).collect();
        let mut scaled = self.eigenvectors.clone();
        for (j, v) in vals.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= v;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// `Γ_σ^s(X) = σ^{s/2} X σ^{s/2}`.
    pub fn gamma_power(&self, s: f64, x: &Operator) -> Operator {
        let p = self.power(r(s / 2.0));
        &p * x * &p
    }

    /// `Γ_σ(X) = σ^{1/2} X σ^{1/2}`.
    pub fn gamma(&self, x: &Operator) -> Operator {
        self.gamma_power(1.0, x)
    }

    /// `Γ_σ^{1/2}(X) = σ^{1/4} X σ^{1/4}`.
    pub fn gamma_half(&self, x: &Operator) -> Operator {
        self.gamma_power(0.5, x)
    }

    pub fn gamma_inv_half(&self, x: &Operator) -> Operator {
        self.gamma_power(-0.5, x)
    }

    /// `Δ_σ^s(X) = σ^s X σ^{-s}` for complex `s`.
    pub fn delta_power(&self, s: C64, x: &Operator) -> Operator {
        &self.power(s) * x * &self.power(-s)
    }

    pub fn gamma_power_superop(&self, s: f64) -> SuperOperator {
        let p = self.power(r(s / 2.0));
        SuperOperator::sandwich(&p, &p)
    }

    pub fn delta_power_superop(&self, s: C64) -> SuperOperator {
        SuperOperator::sandwich(&self.power(s), &self.power(-s))
    }
}

pub fn modular_maps(sigma: &Operator) -> Result<ModularMaps> {
    crate::entropy::check_density(sigma)?;
    let (vals, vecs) = linops::eigh(sigma)?;
    if vals.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(AtlabError::Domain("modular maps need a faithful state".into()));
    }
    Ok(ModularMaps {
        eigenvalues: vals,
        eigenvectors: vecs,
    })
}

/// Residuals of the defining properties of a conditional expectation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CondExpValidation {
    pub idempotence: f64,
    pub unitality: f64,
    pub module_property: f64,
    pub contraction: f64,
    pub complete_positivity: f64,
    pub kms_symmetry: f64,
    pub modular_covariance: f64,
    pub invariance: f64,
}

impl CondExpValidation {
    pub fn max_residual(&self) -> f64 {
        [
            self.idempotence,
            self.unitality,
            self.module_property,
            self.contraction,
            self.complete_positivity,
            self.kms_symmetry,
            self.modular_covariance,
            self.invariance,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn validate_condexp(
    e: &ConditionalExpectationRep,
    samples: usize,
    seed: u64,
) -> Result<CondExpValidation> {
    validate_map(e.superop()?, &e.sigma, &e.kms_basis, samples, seed)
}

/// Checks a dense map against the conditional expectation axioms for state `sigma`,
/// with module elements drawn from `range`.
pub fn validate_map(
    e: &SuperOperator,
    sigma: &Operator,
    range: &[Operator],
    samples: usize,
    seed: u64,
) -> Result<CondExpValidation> {
    let d = e.dim;
    let mm = modular_maps(sigma)?;
    let mut out = CondExpValidation {
        idempotence: (compose(e, e).matrix - &e.matrix).norm(),
        unitality: (e.apply(&identity(d)) - identity(d)).norm(),
        complete_positivity: (-e.choi_min_eigenvalue()).max(0.0),
        invariance: (e.apply_adjoint(sigma) - sigma).norm(),
        ..Default::default()
    };
    let gamma = mm.gamma_power_superop(1.0);
    let lhs = compose(&gamma, e);
    let rhs = compose(&crate::maps::hs_adjoint(e), &gamma);
    out.kms_symmetry = subtract(&lhs, &rhs).matrix.norm();
    let delta = mm.delta_power_superop(C64::new(0.0, 0.7));
    out.modular_covariance = subtract(&compose(e, &delta), &compose(&delta, e)).matrix.norm();
    let mut g = rng(seed);
    for _ in 0..samples {
        let x = crate::sampling::ginibre(d, d, &mut g);
        let ex = e.apply(&x);
        let excess = linops::spectral_norm(&ex) - linops::spectral_norm(&x);
        out.contraction = out.contraction.max(excess.max(0.0));
        let combo = |g: &mut Rng| {
            range
                .iter()
                .fold(linops::zeros(d), |acc, f| acc + f * crate::sampling::gaussian(g))
        };
        let a = combo(&mut g);
        let b = combo(&mut g);
        let lhs = e.apply(&(&a * &x * &b));
        let rhs = &a * &ex * &b;
        let scale = a.norm() * b.norm() * x.norm();
        out.module_property = out.module_property.max((lhs - rhs).norm() / scale.max(1e-300));
    }
    Ok(out)
}

/// `U (⊕_i B(C^{dh_i}) ⊗ 1_{dk_i}) U†` for a random unitary `U`, given the block shapes `(dh_i, dk_i)`.
pub fn random_block_algebra(shapes: &[(usize, usize)], seed: u64) -> Result<MatrixAlgebra> {
    if shapes.is_empty() || shapes.iter().any(|&(h, k)| h == 0 || k == 0) {
        return Err(AtlabError::Domain(format!("invalid block shapes {shapes:?}")));
    }
    let d: usize = shapes.iter().map(|&(h, k)| h * k).sum();
    let u = crate::sampling::random_unitary(d, &mut rng(seed));
    let mut basis = Vec::new();
    let mut offset = 0;
    for &(dh, dk) in shapes {
        for a in 0..dh {
            for b in 0..dh {
                let local = linops::tensor_product(&linops::matrix_unit(dh, a, b), &identity(dk));
                let mut x = linops::zeros(d);
                x.view_mut((offset, offset), (dh * dk, dh * dk)).copy_from(&local);
                basis.push(&u * x * u.adjoint());
            }
        }
        offset += dh * dk;
    }
    MatrixAlgebra::new(&basis, d)
}

/// Random full-rank state used when a faithful reference is needed for tests and probes.
pub fn random_faithful_state(d: usize, seed: u64) -> Operator {
    let mut g = rng(seed);
    let s = random_density(d, &mut g);
    (s * r(0.9)) + identity(d) * r(0.1 / d as f64)
}

/// Random Hermitian element of `B(C^d)`, exposed for probes.
pub fn random_observable(d: usize, seed: u64) -> Operator {
    let mut g = rng(seed);
    random_hermitian(d, &mut g)
}
