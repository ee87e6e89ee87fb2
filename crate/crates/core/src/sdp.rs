//! Certified solver for `min Σ_i Tr y_i` subject to `⊕_i y_i ⊗ 1_{K_i} ≥ W`.
//!
//! This is the semidefinite program behind the max-information and the weak constants.
//! A log-barrier path-following method produces strictly feasible primal points (upper bounds)
//! and, after normalization, exactly feasible dual points `Z ≥ 0`, `Tr_{K_i} Z_ii = 1`
//! (lower bounds `Tr[W Z]`).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linops::{self, eigh_unchecked, hermitian_part, identity, psd_power, r, Operator, C64, I};
use crate::tol;

const MAX_CENTERING_STEPS: usize = 100;

/// Shape `(dh, dk)` of one block of the constraint.
pub type BlockShape = (usize, usize);

#[derive(Debug, Clone)]
pub struct SdpBracket {
    /// Certified lower bound on the optimal value.
    pub lower: f64,
    /// Certified upper bound (value of a strictly feasible point).
    pub upper: f64,
    /// Optimal blocks `y_i`, each `dh × dh`.
    pub blocks: Vec<Operator>,
    pub iterations: usize,
    /// Set when the relative gap target was not met within the budget.
    pub warning: bool,
}

impl SdpBracket {
    pub fn ln_upper(&self) -> f64 {
        self.upper.ln()
    }

    pub fn ln_lower(&self) -> f64 {
        self.lower.max(f64::MIN_POSITIVE).ln()
    }
}

fn hermitian_basis(n: usize) -> Vec<Operator> {
    let mut out = Vec::with_capacity(n * n);
    let s = 1.0 / 2f64.sqrt();
    for j in 0..n {
        out.push(linops::matrix_unit(n, j, j));
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let mut a = linops::zeros(n);
            a[(j, k)] = r(s);
            a[(k, j)] = r(s);
            out.push(a);
            let mut b = linops::zeros(n);
            b[(j, k)] = I * s;
            b[(k, j)] = -I * s;
            out.push(b);
        }
    }
    out
}

struct Layout {
    shapes: Vec<BlockShape>,
    offsets: Vec<usize>,
    dim: usize,
    /// Embedded basis elements `J(b_a)` and their trace weights.
    lifted: Vec<Operator>,
    costs: Vec<f64>,
    /// (block index, local basis element) per variable.
    local: Vec<(usize, Operator)>,
}

impl Layout {
    fn new(shapes: &[BlockShape]) -> Self {
        let mut offsets = Vec::new();
        let mut dim = 0;
        for &(dh, dk) in shapes {
            offsets.push(dim);
            dim += dh * dk;
        }
        let mut lifted = Vec::new();
        let mut costs = Vec::new();
        let mut local = Vec::new();
        for (i, &(dh, dk)) in shapes.iter().enumerate() {
            for b in hermitian_basis(dh) {
                let mut big = linops::zeros(dim);
                let t = linops::tensor_product(&b, &identity(dk));
                big.view_mut((offsets[i], offsets[i]), (dh * dk, dh * dk)).copy_from(&t);
                lifted.push(big);
                costs.push(b.trace().re);
                local.push((i, b));
            }
        }
        Self {
            shapes: shapes.to_vec(),
            offsets,
            dim,
            lifted,
            costs,
            local,
        }
    }

    fn embed(&self, x: &DVector<f64>) -> Operator {
        self.lifted
            .iter()
            .zip(x.iter())
            .fold(linops::zeros(self.dim), |acc, (b, &v)| acc + b * r(v))
    }

    fn blocks(&self, x: &DVector<f64>) -> Vec<Operator> {
        let mut out: Vec<Operator> = self.shapes.iter().map(|&(dh, _)| linops::zeros(dh)).collect();
        for ((i, b), &v) in self.local.iter().zip(x.iter()) {
            out[*i] += b * r(v);
        }
        out
    }

    /// `J*(Z) = ⊕ Tr_{K_i} Z_ii`.
    fn partial_traces(&self, z: &Operator) -> Vec<Operator> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(i, &(dh, dk))| {
                let o = self.offsets[i];
                let zi = z.view((o, o), (dh * dk, dh * dk)).into_owned();
                linops::partial_trace(&zi, &linops::FactorPair::new(vec![dh, dk]), &[0])
                    .expect("block shape is consistent")
            })
            .collect()
    }

    /// `J(a) Z J(a)` for block-diagonal `a`.
    fn conjugate(&self, a: &[Operator], z: &Operator) -> Operator {
        let mut big = linops::zeros(self.dim);
        for (i, &(dh, dk)) in self.shapes.iter().enumerate() {
            let o = self.offsets[i];
            let t = linops::tensor_product(&a[i], &identity(dk));
            big.view_mut((o, o), (dh * dk, dh * dk)).copy_from(&t);
        }
        &big * z * &big
    }
}

fn cholesky(s: &Operator) -> Option<Cholesky<C64, nalgebra::Dyn>> {
    Cholesky::new(hermitian_part(s))
}

fn log_det(ch: &Cholesky<C64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    2.0 * (0..l.nrows()).map(|k| l[(k, k)].re.ln()).sum::<f64>()
}

/// Normalizes `Z ≥ 0` so that `J*(Z) = 1` and returns the certified lower bound `Tr[W Z']`.
fn dual_bound(layout: &Layout, w: &Operator, z: &Operator) -> f64 {
    let m = layout.partial_traces(z);
    let mut inv_roots = Vec::new();
    for mi in &m {
        match psd_power(&hermitian_part(mi), -0.5) {
            Ok(p) if (&p * mi * &p - identity(mi.nrows())).norm() < 1e-8 => inv_roots.push(p),
            _ => return 0.0,
        }
    }
    let zn = layout.conjugate(&inv_roots, z);
    linops::hs_inner(w, &zn).re.max(0.0)
}

/// Solves `min Σ Tr y_i` subject to `⊕ y_i ⊗ 1_{K_i} ≥ W` with `W ≥ 0` given in block order.
pub fn min_trace_dominating(w: &Operator, shapes: &[BlockShape]) -> SdpBracket {
    min_trace_dominating_with(w, shapes, tol::SDP_GAP * 0.1, tol::SDP_BUDGET)
}

pub fn min_trace_dominating_with(
    w: &Operator,
    shapes: &[BlockShape],
    rel_gap: f64,
    budget: usize,
) -> SdpBracket {
    let layout = Layout::new(shapes);
    let d = layout.dim;
    assert_eq!(w.nrows(), d, "constraint size must match the block layout");
    let w = hermitian_part(w);
    let (wv, _) = eigh_unchecked(&w);
    let wmax = wv.last().copied().unwrap_or(0.0).max(0.0);
    if wmax <= 0.0 {
        let blocks = shapes.iter().map(|&(dh, _)| linops::zeros(dh)).collect();
        return SdpBracket {
            lower: 0.0,
            upper: 0.0,
            blocks,
            iterations: 0,
            warning: false,
        };
    }
    let nv = layout.lifted.len();
    let cost = DVector::from_vec(layout.costs.clone());
    let mut x = DVector::<f64>::zeros(nv);
    let kappa = 2.0 * wmax;
    for (a, &c) in layout.costs.iter().enumerate() {
        if c > 0.5 {
            x[a] = kappa;
        }
    }
    let objective = |x: &DVector<f64>| cost.dot(x);
    let mut t = d as f64 / objective(&x).max(1e-300);
    let mut iterations = 0;
    let mut best_upper = objective(&x);
    let mut best_x = x.clone();
    let mut best_lower = 0.0f64;
    let barrier = |x: &DVector<f64>, t: f64| -> Option<f64> {
        let s = layout.embed(x) - &w;
        cholesky(&s).map(|ch| t * cost.dot(x) - log_det(&ch))
    };
    'outer: loop {
        // Centering by damped Newton steps.
        for _ in 0..MAX_CENTERING_STEPS {
            iterations += 1;
            if iterations > budget {
                break 'outer;
            }
            let s = layout.embed(&x) - &w;
            let Some(ch) = cholesky(&s) else { break 'outer };
            let sinv = ch.inverse();
            let ms: Vec<Operator> = layout.lifted.iter().map(|b| &sinv * b).collect();
            let mut grad = DVector::<f64>::zeros(nv);
            let mut hess = DMatrix::<f64>::zeros(nv, nv);
            for a in 0..nv {
                grad[a] = t * cost[a] - ms[a].trace().re;
                for b in a..nv {
                    let v: f64 = ms[a]
                        .iter()
                        .zip(ms[b].transpose().iter())
                        .map(|(p, q)| (p * q).re)
                        .sum();
                    hess[(a, b)] = v;
                    hess[(b, a)] = v;
                }
            }
            let Some(hch) = Cholesky::new(hess) else { break 'outer };
            let step = -hch.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement < 1e-14 {
                break;
            }
            let phi0 = barrier(&x, t).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let cand = &x + &step * alpha;
                if let Some(phi) = barrier(&cand, t) {
                    if phi <= phi0 - 0.25 * alpha * decrement {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved || decrement < 1e-10 {
                break;
            }
        }
        let upper = objective(&x);
        if upper < best_upper {
            best_upper = upper;
            best_x = x.clone();
        }
        if let Some(ch) = cholesky(&(layout.embed(&x) - &w)) {
            let z = ch.inverse() / r(t);
            best_lower = best_lower.max(dual_bound(&layout, &w, &z));
        }
        if best_upper - best_lower <= rel_gap * best_upper {
            break;
        }
        // The central-path gap d/t has fallen below rounding; further steps cannot help.
        if (d as f64) / t < 1e-15 * best_upper {
            break;
        }
        t *= 8.0;
    }
    SdpBracket {
        lower: best_lower,
        upper: best_upper,
        blocks: layout.blocks(&best_x),
        iterations,
        warning: best_upper - best_lower > rel_gap.max(tol::SDP_GAP) * best_upper,
    }
}
