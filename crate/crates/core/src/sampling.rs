//! Seeded random operators and states.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::BlockDecomposition;
use crate::linops::{c, r, Operator, C64};
use crate::maps::pinching_from_projectors;
use crate::error::Result;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut Rng) -> C64 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    c(a, b)
}

pub fn ginibre(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random unit vector.
pub fn haar_vector(d: usize, rng: &mut Rng) -> DVector<C64> {
    let v = DVector::from_fn(d, |_, _| gaussian(rng));
    let n = v.norm();
    v / r(n)
}

pub fn random_pure_density(d: usize, rng: &mut Rng) -> Operator {
    let v = haar_vector(d, rng);
    &v * v.adjoint()
}

/// Hilbert–Schmidt random state `G G† / Tr[G G†]`.
pub fn random_density(d: usize, rng: &mut Rng) -> Operator {
    let g = ginibre(d, d, rng);
    let p = &g * g.adjoint();
    let t = p.trace();
    p / t
}

pub fn random_hermitian(d: usize, rng: &mut Rng) -> Operator {
    let g = ginibre(d, d, rng);
    (&g + g.adjoint()) * r(0.5)
}

/// Haar-random unitary via QR with phase correction.
pub fn random_unitary(d: usize, rng: &mut Rng) -> Operator {
    let qr = ginibre(d, d, rng).qr();
    let (q, rr) = (qr.q(), qr.r());
    let mut u = q.clone();
    for j in 0..d {
        let ph = rr[(j, j)] / r(rr[(j, j)].norm());
        for i in 0..d {
            u[(i, j)] = q[(i, j)] * ph;
        }
    }
    u
}

/// Random state in the state space `⊕ p_i ρ_{H_i} ⊗ τ_i` of a block decomposition, with `τ_i` maximally mixed.
pub fn algebra_restricted_density(dec: &BlockDecomposition, rng: &mut Rng) -> Operator {
    let rho = random_density(dec.dim, rng);
    dec.tracial_state_projection(&rho)
}

/// Random state pinched by the given spectral projectors.
pub fn energy_block_density(projectors: &[Operator], rng: &mut Rng) -> Result<Operator> {
    let d = projectors[0].nrows();
    let p = pinching_from_projectors(projectors)?;
    Ok(p.apply(&random_density(d, rng)))
}

/// State families offered to experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    HaarPure,
    HilbertSchmidt,
    AlgebraRestricted,
    EnergyBlock,
}

/// Context required by the structured families.
#[derive(Debug, Clone, Default)]
pub struct SamplingContext<'a> {
    pub decomposition: Option<&'a BlockDecomposition>,
    pub energy_projectors: Option<&'a [Operator]>,
}

/// `n` states of dimension `d`, deterministic per seed.
pub fn sample_states(
    kind: StateKind,
    d: usize,
    n: usize,
    seed: u64,
    ctx: &SamplingContext<'_>,
) -> Result<Vec<Operator>> {
    let mut g = rng(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s = match kind {
            StateKind::HaarPure => random_pure_density(d, &mut g),
            StateKind::HilbertSchmidt => random_density(d, &mut g),
            StateKind::AlgebraRestricted => match ctx.decomposition {
                Some(dec) => algebra_restricted_density(dec, &mut g),
                None => {
                    return Err(crate::AtlabError::Contract(
                        "algebra_restricted sampling needs a block decomposition".into(),
                    ))
                }
            },
            StateKind::EnergyBlock => match ctx.energy_projectors {
                Some(p) => energy_block_density(p, &mut g)?,
                None => {
                    return Err(crate::AtlabError::Contract(
                        "energy_block sampling needs spectral projectors".into(),
                    ))
                }
            },
        };
        out.push(s);
    }
    Ok(out)
}
