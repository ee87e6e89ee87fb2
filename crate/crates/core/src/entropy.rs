//! Entropies, divergences, weighted norms and covariances (natural logarithms throughout).

use serde::{Deserialize, Serialize};

use crate::algebra::ConditionalExpectationRep;
use crate::error::{AtlabError, Result};
use crate::linops::{
    self, complex_power, eigh, hermitian_part, identity, partial_trace, permute_factors, psd_log,
    r, support_projector, FactorPair, Operator, SupportPolicy, C64,
};
use crate::sdp::{min_trace_dominating, SdpBracket};
use crate::tol;

/// Checks that `rho` is a normalized density matrix.
pub fn check_density(rho: &Operator) -> Result<()> {
    check_subnormalized(rho)?;
    let t = rho.trace().re;
    if (t - 1.0).abs() > tol::TRACE_TOL {
        return Err(AtlabError::Contract(format!("state has trace {t}")));
    }
    Ok(())
}

/// Checks that `rho` is PSD with trace at most one.
pub fn check_subnormalized(rho: &Operator) -> Result<()> {
    let (vals, _) = eigh(rho)?;
    let lo = vals.first().copied().unwrap_or(0.0);
    if lo < -tol::PSD_TOL {
        return Err(AtlabError::Contract(format!(
            "state has negative eigenvalue {lo:.3e}"
        )));
    }
    let t = rho.trace().re;
    if t > 1.0 + tol::TRACE_TOL {
        return Err(AtlabError::Contract(format!("state has trace {t}")));
    }
    Ok(())
}

/// A divergence value in nats, with a flag recording a support violation (value `+∞`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    pub support_violation: bool,
}

impl EntropyValue {
    fn finite(value: f64) -> Self {
        Self {
            value,
            support_violation: false,
        }
    }

    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            support_violation: true,
        }
    }
}

fn leakage(rho: &Operator, sigma: &Operator) -> Result<f64> {
    let p = support_projector(sigma)?;
    Ok((rho.trace() - (rho * &p).trace()).re)
}

fn x_ln_x(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// `S(ρ) = -Tr[ρ ln ρ]`.
pub fn von_neumann_entropy(rho: &Operator) -> Result<f64> {
    let (vals, _) = eigh(rho)?;
    Ok(-vals.iter().map(|&v| x_ln_x(v)).sum::<f64>())
}

/// `D(ρ‖σ) = Tr[ρ(ln ρ − ln σ)]`, infinite when `ρ` leaks outside `supp σ`.
pub fn relative_entropy(rho: &Operator, sigma: &Operator) -> Result<EntropyValue> {
    if leakage(rho, sigma)? > tol::SUPPORT_LEAKAGE {
        return Ok(EntropyValue::infinite());
    }
    let (vals, _) = eigh(rho)?;
    let neg_s: f64 = vals.iter().map(|&v| x_ln_x(v)).sum();
    let cross = (rho * psd_log(sigma)?).trace().re;
    Ok(EntropyValue::finite(neg_s - cross))
}

/// `S(A|B) = S(ρ_AB) − S(ρ_B)` where `conditioning` lists the labels of `B`.
pub fn conditional_entropy(rho: &Operator, factors: &FactorPair, conditioning: &[usize]) -> Result<f64> {
    let rho_b = partial_trace(rho, factors, conditioning)?;
    Ok(von_neumann_entropy(rho)? - von_neumann_entropy(&rho_b)?)
}

/// `D_max(ρ‖σ) = ln ‖σ^{-1/2} ρ σ^{-1/2}‖_∞`, computed on `supp σ`.
pub fn dmax(rho: &Operator, sigma: &Operator) -> Result<EntropyValue> {
    if leakage(rho, sigma)? > tol::SUPPORT_LEAKAGE {
        return Ok(EntropyValue::infinite());
    }
    let s = complex_power(sigma, r(-0.5), SupportPolicy::RestrictToSupport)?;
    let (vals, _) = eigh(&hermitian_part(&(&s * rho * &s)))?;
    let top = vals.last().copied().unwrap_or(0.0);
    Ok(EntropyValue::finite(top.max(f64::MIN_POSITIVE).ln()))
}

/// Max-information with its certified bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImaxResult {
    pub value: f64,
    pub certified_upper: f64,
    pub certified_lower: f64,
    pub warning: bool,
}

/// Max-information with the optimal second marginal `τ_B`.
#[derive(Debug, Clone)]
pub struct ImaxSolution {
    pub result: ImaxResult,
    pub tau_b: Operator,
}

/// `I_max(A:B) = inf_{τ_B} D_max(ρ_AB ‖ ρ_A ⊗ τ_B)`, where `a_labels` name the factors of `A`.
pub fn imax(rho: &Operator, factors: &FactorPair, a_labels: &[usize]) -> Result<ImaxResult> {
    Ok(imax_solution(rho, factors, a_labels)?.result)
}

pub fn imax_solution(rho: &Operator, factors: &FactorPair, a_labels: &[usize]) -> Result<ImaxSolution> {
    let mut a_pos = Vec::new();
    for &l in a_labels {
        a_pos.push(
            factors
                .labels
                .iter()
                .position(|&x| x == l)
                .ok_or_else(|| AtlabError::Dimension(format!("unknown factor label {l}")))?,
        );
    }
    a_pos.sort_unstable();
    let b_pos: Vec<usize> = (0..factors.dims.len()).filter(|k| !a_pos.contains(k)).collect();
    let perm: Vec<usize> = a_pos.iter().chain(b_pos.iter()).copied().collect();
    let da: usize = a_pos.iter().map(|&k| factors.dims[k]).product();
    let db: usize = b_pos.iter().map(|&k| factors.dims[k]).product();
    let ordered = permute_factors(rho, &factors.dims, &perm);
    imax_bipartite(&ordered, da, db)
}

/// Max-information of a (possibly subnormalized) state on `C^da ⊗ C^db`.
pub fn imax_bipartite(rho: &Operator, da: usize, db: usize) -> Result<ImaxSolution> {
    check_subnormalized(rho)?;
    let ab = FactorPair::new(vec![da, db]);
    let rho_a = partial_trace(rho, &ab, &[0])?;
    let inv = complex_power(&rho_a, r(-0.5), SupportPolicy::RestrictToSupport)?;
    let lift = linops::tensor_product(&inv, &identity(db));
    let w = &lift * rho * &lift;
    // Put B first so the variable acts as y ⊗ 1_A.
    let swapped = permute_factors(&w, &[da, db], &[1, 0]);
    let b: SdpBracket = min_trace_dominating(&swapped, &[(db, da)]);
    let y = b.blocks[0].clone();
    let t = y.trace();
    let tau_b = if t.re > 0.0 { y / t } else { identity(db) / r(db as f64) };
    Ok(ImaxSolution {
        result: ImaxResult {
            value: b.ln_upper(),
            certified_upper: b.ln_upper(),
            certified_lower: b.ln_lower(),
            warning: b.warning,
        },
        tau_b,
    })
}

/// Which weighted norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LpIndex {
    One,
    Two,
    Infinity,
}

/// `‖X‖_{L_p(σ)} = Tr[|σ^{1/2p} X σ^{1/2p}|^p]^{1/p}`; `p = ∞` is the operator norm.
pub fn lp_norm(x: &Operator, p: LpIndex, sigma: &Operator) -> Result<f64> {
    let weighted = |q: f64| -> Result<Operator> {
        let s = complex_power(sigma, r(1.0 / (2.0 * q)), SupportPolicy::Error)?;
        Ok(&s * x * &s)
    };
    // Full rank is required even where the weight is trivial.
    complex_power(sigma, r(-1.0), SupportPolicy::Error)?;
    Ok(match p {
        LpIndex::One => linops::trace_norm(&weighted(1.0)?),
        LpIndex::Two => weighted(2.0)?.norm(),
        LpIndex::Infinity => linops::spectral_norm(x),
    })
}

/// `⟨X, Y⟩_σ = Tr[σ^{1/2} X† σ^{1/2} Y]`.
pub fn kms_inner(x: &Operator, y: &Operator, sigma: &Operator) -> Result<C64> {
    let s = complex_power(sigma, r(0.5), SupportPolicy::Error)?;
    Ok((&s * x.adjoint() * &s * y).trace())
}

/// `⟨X − E[X], Y − E[Y]⟩_σ` with `σ` the invariant state of `E`.
pub fn conditional_covariance(e: &ConditionalExpectationRep, x: &Operator, y: &Operator) -> Result<C64> {
    let dx = x - e.apply(x);
    let dy = y - e.apply(y);
    kms_inner(&dx, &dy, &e.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{condexp_petz, decompose_algebra, random_faithful_state, MatrixAlgebra};
    use crate::linops::{pauli, tensor_product};
    use crate::sampling::{random_density, random_pure_density, rng};

    #[test]
    fn relative_entropy_basics() {
        let mut g = rng(1);
        let rho = random_density(3, &mut g);
        assert!(relative_entropy(&rho, &rho).unwrap().value.abs() < 1e-12);
        let mixed = identity(3) / r(3.0);
        let d = relative_entropy(&rho, &mixed).unwrap().value;
        assert!((d - (3f64.ln() - von_neumann_entropy(&rho).unwrap())).abs() < 1e-12);
        let pure = random_pure_density(3, &mut g);
        let other = random_pure_density(3, &mut g);
        assert!(relative_entropy(&mixed, &pure).unwrap().support_violation);
        assert!(relative_entropy(&pure, &other).unwrap().value.is_infinite());
    }

    #[test]
    fn dmax_dominates_relative_entropy() {
        let mut g = rng(2);
        for _ in 0..50 {
            let rho = random_density(3, &mut g);
            let sigma = random_density(3, &mut g);
            let d = relative_entropy(&rho, &sigma).unwrap().value;
            let m = dmax(&rho, &sigma).unwrap().value;
            assert!(d <= m + 1e-10);
        }
        let sigma = random_faithful_state(3, 4);
        let (vals, _) = eigh(&sigma).unwrap();
        let want = (1.0 / (3.0 * vals[0])).ln();
        assert!((dmax(&(identity(3) / r(3.0)), &sigma).unwrap().value - want).abs() < 1e-10);
    }

    #[test]
    fn imax_of_product_state_vanishes() {
        let mut g = rng(3);
        let a = random_density(2, &mut g);
        let b = random_density(2, &mut g);
        let res = imax(&tensor_product(&a, &b), &FactorPair::new(vec![2, 2]), &[0]).unwrap();
        assert!(res.certified_lower <= res.value && res.value <= res.certified_upper);
        assert!(res.value.abs() <= 1e-6 && res.certified_lower.abs() <= 1e-6, "{res:?}");
    }

    #[test]
    fn imax_of_maximally_entangled_qubits() {
        let mut v = nalgebra::DVector::<C64>::zeros(4);
        v[0] = r(0.5f64.sqrt());
        v[3] = r(0.5f64.sqrt());
        let phi = &v * v.adjoint();
        let res = imax(&phi, &FactorPair::new(vec![2, 2]), &[0]).unwrap();
        assert!((res.value - 2.0 * 2f64.ln()).abs() < 1e-6, "{res:?}");
        assert!(res.certified_upper - res.certified_lower <= 1e-6);
    }

    #[test]
    fn weighted_norms() {
        let sigma = random_faithful_state(3, 5);
        for p in [LpIndex::One, LpIndex::Two, LpIndex::Infinity] {
            assert!((lp_norm(&identity(3), p, &sigma).unwrap() - 1.0).abs() < 1e-10);
        }
        let [x, ..] = pauli();
        let tr = identity(2) / r(2.0);
        assert!((lp_norm(&x, LpIndex::One, &tr).unwrap() - 1.0).abs() < 1e-12);
        let singular = crate::linops::matrix_unit(2, 0, 0);
        assert!(lp_norm(&x, LpIndex::Two, &singular).is_err());
    }

    #[test]
    fn covariance_vanishes_on_range() {
        let [_, _, z] = pauli();
        let alg = MatrixAlgebra::generated(&[tensor_product(&z, &identity(2))], 4).unwrap();
        let dec = decompose_algebra(&alg).unwrap();
        let sigma = random_faithful_state(4, 6);
        let e = condexp_petz(&dec, &sigma).unwrap();
        let in_range = e.kms_basis[0].clone();
        let y = crate::algebra::random_observable(4, 7);
        assert!(conditional_covariance(&e, &in_range, &y).unwrap().norm() < 1e-10);
        assert!(conditional_covariance(&e, &y, &y).unwrap().re >= -1e-12);
    }
}
