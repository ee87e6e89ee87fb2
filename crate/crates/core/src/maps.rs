//! Superoperators on `B(H)`: pinchings, Petz recovery, adjoints, Choi and Kraus forms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{condexp_tau, BlockDecomposition};
use crate::error::{AtlabError, Result};
use crate::linops::{
    self, complex_power, eigh_unchecked, hermitian_eig, identity, r, tensor_product, vectorize,
    Operator, OperatorJson, SupportPolicy, C64,
};
use crate::tol;

/// Properties claimed for a map; `None` means not asserted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapTags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unital: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_preserving: Option<bool>,
}

/// Linear map on `B(C^dim)` acting on row-major vectorized operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    pub dim: usize,
    pub matrix: DMatrix<C64>,
    pub tags: MapTags,
}

#[derive(Serialize, Deserialize)]
struct SuperOperatorJson {
    dim: usize,
    matrix: OperatorJson,
    #[serde(default)]
    tags: MapTags,
}

impl Serialize for SuperOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SuperOperatorJson {
            dim: self.dim,
            matrix: OperatorJson::from(&self.matrix),
            tags: self.tags,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SuperOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SuperOperatorJson::deserialize(d)?;
        let m = Operator::try_from(&j.matrix).map_err(serde::de::Error::custom)?;
        let mut out = SuperOperator::from_matrix(j.dim, m).map_err(serde::de::Error::custom)?;
        out.tags = j.tags;
        Ok(out)
    }
}

impl SuperOperator {
    pub fn from_matrix(dim: usize, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(AtlabError::Dimension(format!(
                "superoperator matrix is {}x{}, expected {}",
                matrix.nrows(),
                matrix.ncols(),
                dim * dim
            )));
        }
        Ok(Self {
            dim,
            matrix,
            tags: MapTags::default(),
        })
    }

    pub fn with_tags(mut self, tags: MapTags) -> Self {
        self.tags = tags;
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: identity(dim * dim),
            tags: MapTags {
                cp: Some(true),
                unital: Some(true),
                trace_preserving: Some(true),
            },
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            matrix: DMatrix::zeros(dim * dim, dim * dim),
            tags: MapTags::default(),
        }
    }

    /// Builds the matrix of a linear map by evaluating it on matrix units.
    pub fn from_fn(dim: usize, f: impl Fn(&Operator) -> Operator) -> Self {
        let n = dim * dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..dim {
            for j in 0..dim {
                let y = f(&linops::matrix_unit(dim, i, j));
                m.set_column(i * dim + j, &vectorize(&y));
            }
        }
        Self {
            dim,
            matrix: m,
            tags: MapTags::default(),
        }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &Operator, b: &Operator) -> Self {
        Self {
            dim: a.nrows(),
            matrix: tensor_product(a, &b.transpose()),
            tags: MapTags::default(),
        }
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        let v = &self.matrix * vectorize(x);
        linops::unvectorize_slice(v.as_slice(), self.dim)
    }

    /// Action of the Hilbert–Schmidt adjoint (the Schrödinger-picture map).
    pub fn apply_adjoint(&self, x: &Operator) -> Operator {
        let v = self.matrix.adjoint() * vectorize(x);
        linops::unvectorize_slice(v.as_slice(), self.dim)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            matrix: &self.matrix * r(s),
            tags: MapTags::default(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            matrix: &self.matrix + &other.matrix,
            tags: MapTags::default(),
        }
    }

    /// Operator norm as a map on Hilbert–Schmidt space.
    pub fn hs_norm(&self) -> f64 {
        linops::spectral_norm(&self.matrix)
    }

    /// Smallest eigenvalue of the Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> f64 {
        let (vals, _) = eigh_unchecked(&linops::hermitian_part(&choi(self)));
        vals.first().copied().unwrap_or(0.0)
    }

    pub fn unitality_residual(&self) -> f64 {
        (self.apply(&identity(self.dim)) - identity(self.dim)).norm()
    }

    pub fn trace_preservation_residual(&self) -> f64 {
        (self.apply_adjoint(&identity(self.dim)) - identity(self.dim)).norm()
    }

    /// Checks every claimed tag; returns the first violated one.
    pub fn verify_tags(&self) -> Result<()> {
        if self.tags.cp == Some(true) && self.choi_min_eigenvalue() < -tol::PSD_TOL {
            return Err(AtlabError::Contract("map tagged CP has a non-PSD Choi matrix".into()));
        }
        if self.tags.unital == Some(true) && self.unitality_residual() > tol::TRACE_TOL {
            return Err(AtlabError::Contract("map tagged unital is not unital".into()));
        }
        if self.tags.trace_preserving == Some(true)
            && self.trace_preservation_residual() > tol::TRACE_TOL
        {
            return Err(AtlabError::Contract(
                "map tagged trace preserving is not".into(),
            ));
        }
        Ok(())
    }
}

/// `a ∘ b`.
pub fn compose(a: &SuperOperator, b: &SuperOperator) -> SuperOperator {
    SuperOperator {
        dim: a.dim,
        matrix: &a.matrix * &b.matrix,
        tags: MapTags::default(),
    }
}

pub fn subtract(a: &SuperOperator, b: &SuperOperator) -> SuperOperator {
    SuperOperator {
        dim: a.dim,
        matrix: &a.matrix - &b.matrix,
        tags: MapTags::default(),
    }
}

pub fn hs_adjoint(phi: &SuperOperator) -> SuperOperator {
    SuperOperator {
        dim: phi.dim,
        matrix: phi.matrix.adjoint(),
        tags: MapTags {
            cp: phi.tags.cp,
            unital: phi.tags.trace_preserving,
            trace_preserving: phi.tags.unital,
        },
    }
}

/// Adjoint for the KMS inner product `⟨X, Y⟩_σ = Tr[σ^{1/2} X† σ^{1/2} Y]`: `Γ_σ⁻¹ ∘ Φ_* ∘ Γ_σ`.
pub fn kms_adjoint(phi: &SuperOperator, sigma: &Operator) -> Result<SuperOperator> {
    let s_half = complex_power(sigma, r(0.5), SupportPolicy::Error)?;
    let s_inv_half = complex_power(sigma, r(-0.5), SupportPolicy::Error)?;
    let gamma = SuperOperator::sandwich(&s_half, &s_half);
    let gamma_inv = SuperOperator::sandwich(&s_inv_half, &s_inv_half);
    Ok(compose(&compose(&gamma_inv, &hs_adjoint(phi)), &gamma))
}

/// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.
pub fn choi(phi: &SuperOperator) -> Operator {
    let d = phi.dim;
    Operator::from_fn(d * d, d * d, |row, col| {
        let (i, a) = (row / d, row % d);
        let (j, b) = (col / d, col % d);
        phi.matrix[(a * d + b, i * d + j)]
    })
}

/// Schrödinger-picture map `X ↦ Σ_k K_k X K_k†`.
pub fn superop_from_kraus(kraus: &[Operator]) -> Result<SuperOperator> {
    let d = kraus
        .first()
        .map(|k| k.nrows())
        .ok_or_else(|| AtlabError::Contract("empty Kraus family".into()))?;
    let mut m = DMatrix::zeros(d * d, d * d);
    for k in kraus {
        if k.nrows() != d || k.ncols() != d {
            return Err(AtlabError::Dimension("Kraus operators of unequal size".into()));
        }
        m += tensor_product(k, &k.map(|z| z.conj()));
    }
    Ok(SuperOperator {
        dim: d,
        matrix: m,
        tags: MapTags {
            cp: Some(true),
            ..MapTags::default()
        },
    })
}

/// Pinching `X ↦ Σ P X P` for a complete family of orthogonal projectors.
pub fn pinching_from_projectors(projs: &[Operator]) -> Result<SuperOperator> {
    let d = projs
        .first()
        .map(|p| p.nrows())
        .ok_or_else(|| AtlabError::Contract("empty projector family".into()))?;
    let mut sum = linops::zeros(d);
    for (a, p) in projs.iter().enumerate() {
        if (p * p - p).norm() > 1e-9 || !linops::is_hermitian(p) {
            return Err(AtlabError::Contract(format!("element {a} is not a projector")));
        }
        for q in &projs[a + 1..] {
            if (p * q).norm() > 1e-9 {
                return Err(AtlabError::Contract("projectors are not orthogonal".into()));
            }
        }
        sum += p;
    }
    if (sum - identity(d)).norm() > 1e-9 {
        return Err(AtlabError::Contract(
            "projectors do not sum to the identity".into(),
        ));
    }
    let mut m = DMatrix::zeros(d * d, d * d);
    for p in projs {
        m += tensor_product(p, &p.transpose());
    }
    Ok(SuperOperator {
        dim: d,
        matrix: m,
        tags: MapTags {
            cp: Some(true),
            unital: Some(true),
            trace_preserving: Some(true),
        },
    })
}

/// Projectors `|λ⁽ⁱ⁾⟩⟨λ⁽ⁱ⁾| ⊗ 1_{K_i}` built from the spectra of the block marginals of `rho`.
pub fn state_pinching_projectors(rho: &Operator, dec: &BlockDecomposition) -> Result<Vec<Operator>> {
    let mut projs = Vec::new();
    for (i, block) in dec.blocks.iter().enumerate() {
        let marginal = dec.block_marginal_h(i, rho)?;
        let spec = hermitian_eig(&marginal)?;
        for space in &spec.eigenspaces {
            let local = space * space.adjoint();
            let lifted = tensor_product(&local, &identity(block.dk));
            projs.push(dec.expand(i, &lifted));
        }
    }
    Ok(projs)
}

/// `Σ P X P` without forming the superoperator.
pub fn pinch(projs: &[Operator], x: &Operator) -> Operator {
    projs
        .iter()
        .fold(linops::zeros(x.nrows()), |acc, p| acc + p * x * p)
}

/// Pinching onto `|λ⁽ⁱ⁾⟩⟨λ⁽ⁱ⁾| ⊗ 1_{K_i}` built from the spectra of the block marginals of `rho`.
pub fn pinching_for_state(rho: &Operator, dec: &BlockDecomposition) -> Result<SuperOperator> {
    pinching_from_projectors(&state_pinching_projectors(rho, dec)?)
}

/// Petz recovery `R_σ(X) = σ^{1/2} σ_M^{-1/2} E_τ*(X) σ_M^{-1/2} σ^{1/2}` with `σ_M = E_τ*(σ)`.
pub fn petz_recovery(sigma: &Operator, dec: &BlockDecomposition) -> Result<SuperOperator> {
    let (k, e_tau) = petz_pieces(sigma, dec)?;
    let ad = SuperOperator::sandwich(&k, &k.adjoint());
    let e_star = hs_adjoint(e_tau.superop()?);
    Ok(compose(&ad, &e_star).with_tags(MapTags {
        cp: Some(true),
        unital: None,
        trace_preserving: Some(true),
    }))
}

/// Hilbert–Schmidt adjoint of [`petz_recovery`]: `X ↦ E_τ[σ_M^{-1/2} σ^{1/2} X σ^{1/2} σ_M^{-1/2}]`.
pub fn a_sigma(sigma: &Operator, dec: &BlockDecomposition) -> Result<SuperOperator> {
    let (k, e_tau) = petz_pieces(sigma, dec)?;
    let ad = SuperOperator::sandwich(&k.adjoint(), &k);
    Ok(compose(e_tau.superop()?, &ad).with_tags(MapTags {
        cp: Some(true),
        unital: Some(true),
        trace_preserving: None,
    }))
}

fn petz_pieces(
    sigma: &Operator,
    dec: &BlockDecomposition,
) -> Result<(Operator, crate::algebra::ConditionalExpectationRep)> {
    let e_tau = condexp_tau(dec)?;
    let sigma_m = e_tau.apply_dual(sigma);
    let sm_inv_half = complex_power(&sigma_m, r(-0.5), SupportPolicy::Error)?;
    let s_half = complex_power(sigma, r(0.5), SupportPolicy::Error)?;
    Ok((s_half * sm_inv_half, e_tau))
}

/// `σ_Tr = E_*(1/d)` for a conditional expectation given in the Heisenberg picture.
pub fn sigma_tr(e: &SuperOperator) -> Operator {
    let d = e.dim;
    e.apply_adjoint(&(identity(d) / r(d as f64)))
}
