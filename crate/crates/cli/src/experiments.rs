//! The named experiments.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Result};
use atlab_core::algebra::{
    commutant, condexp_petz, condexp_tau, decompose_algebra, random_block_algebra, random_faithful_state,
    validate_condexp, BlockDecomposition, ConditionalExpectationRep,
};
use atlab_core::entropy::von_neumann_entropy;
use atlab_core::generators::{davies_equals_petz_check, davies_generator, fixed_point_projection, HamiltonianSpec, RateProfile};
use atlab_core::lattice::{
    build, clustering_decay_scan, glauber_infinite_temp_check, lattice_change_of_measure, region_quadruple, Flavor,
    Geometry, Lattice, LatticeSpec, Region, SampleOptions,
};
use atlab_core::linops::{self, identity, pauli_string, r, FactorPair, Operator};
use atlab_core::sampling::{self, sample_states, SamplingContext, StateKind};
use atlab_core::tensorization::{
    at_margins, c1_conditional_l1, certify_theorems, energy_block_at, mub_basis, overlap_constant,
    pinching_decay_check, tilted_basis, two_basis_quadruple, uncertainty_check, ATQuadruple, AscentOptions, Bracket,
    CertifyOptions, StateMargin,
};
use atlab_core::tol;
use rayon::prelude::*;

use crate::config::{AlgebraCase, ConfigError, DaviesCase, Experiment, ExperimentConfig, QuadrupleSpec, RegionPair};
use crate::report::ReportDocument;

/// Thresholds that are properties of the checked statements rather than tunable tolerances.
pub mod limits {
    /// Superoperator distance between the Davies and Petz conditional expectations.
    pub const DAVIES_PETZ: f64 = 1e-8;
    /// Conditional expectation axioms, commuting squares and energy-block invariance.
    pub const EXACT_IDENTITY: f64 = 1e-9;
    /// Closed-form values.
    pub const CLOSED_FORM: f64 = 1e-12;
    /// Slack in the monotonicity of clustering constants.
    pub const MONOTONE_SLACK: f64 = 1e-9;
}

/// States are evaluated in chunks of this size so the wall-clock cap can stop a run between chunks.
const CHUNK: usize = 100;

/// Shared state of one run.
struct Ctx {
    cfg: ExperimentConfig,
    tolerance: f64,
    start: Instant,
    cap: Option<Duration>,
    doc: ReportDocument,
}

impl Ctx {
    fn seed(&self) -> Result<u64> {
        self.cfg.seed.ok_or_else(|| {
            ConfigError::new("seed", "required by experiments that sample states; set it or pass --seed").into()
        })
    }

    /// Independent stream `k` derived from the experiment seed.
    fn stream(&self, k: u64) -> Result<u64> {
        Ok(self.seed()?.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }

    fn samples(&self, default: usize) -> Result<usize> {
        match self.cfg.samples {
            Some(0) => Err(ConfigError::new("samples", "must be at least 1").into()),
            Some(n) => Ok(n),
            None => Ok(default),
        }
    }

    fn ascent(&self, base: AscentOptions) -> Result<AscentOptions> {
        let seed = self.stream(0xa5c)?;
        Ok(self.cfg.ascent.unwrap_or_default().resolve(base, seed))
    }

    /// Marks the run truncated once the cap is exceeded.
    fn out_of_time(&mut self) -> bool {
        if let Some(cap) = self.cap {
            if self.start.elapsed() > cap {
                self.doc.truncated = true;
            }
        }
        self.doc.truncated
    }

    fn state_kind(&self) -> Result<StateKind> {
        match self.cfg.state_kind.unwrap_or(StateKind::HilbertSchmidt) {
            k @ (StateKind::HilbertSchmidt | StateKind::HaarPure) => Ok(k),
            other => Err(ConfigError::new(
                "state_kind",
                format!("{other:?} needs structure this experiment does not provide; use hilbert_schmidt or haar_pure"),
            )
            .into()),
        }
    }

    fn states(&self, d: usize, n: usize, stream: u64) -> Result<Vec<Operator>> {
        let kind = self.state_kind()?;
        Ok(sample_states(kind, d, n, self.stream(stream)?, &SamplingContext::default())?)
    }

    /// Evaluates `f` over consecutive chunks of `states`, stopping at the wall-clock cap.
    fn chunked(
        &mut self,
        name: &str,
        states: &[Operator],
        tolerance: f64,
        f: impl Fn(&[Operator]) -> atlab_core::Result<Vec<StateMargin>>,
    ) -> Result<()> {
        for (k, chunk) in states.chunks(CHUNK).enumerate() {
            if self.out_of_time() {
                break;
            }
            let mut rows = f(chunk)?;
            for row in &mut rows {
                row.state_id += k * CHUNK;
            }
            self.doc.push(name, rows, tolerance);
        }
        Ok(())
    }

    fn lattice(&self, default: impl FnOnce() -> LatticeSpec) -> Result<Lattice> {
        let spec = self.cfg.lattice.clone().unwrap_or_else(default);
        build(&spec).map_err(|e| ConfigError::new("lattice", e.to_string()).into())
    }

    fn region_pairs(&self, lattice: &Lattice, default: &[(&[usize], &[usize])]) -> Result<Vec<(Region, Region)>> {
        let pairs: Vec<RegionPair> = match &self.cfg.regions {
            Some(p) => p.clone(),
            None => default
                .iter()
                .map(|(a, b)| RegionPair { a: a.to_vec(), b: b.to_vec() })
                .collect(),
        };
        pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let a = lattice.region(&p.a).map_err(|e| ConfigError::new(format!("regions[{i}].a"), e.to_string()))?;
                let b = lattice.region(&p.b).map_err(|e| ConfigError::new(format!("regions[{i}].b"), e.to_string()))?;
                Ok((a, b))
            })
            .collect()
    }
}

/// Runs one experiment; the caller owns the thread pool.
pub fn run_experiment(cfg: ExperimentConfig, threads: usize) -> Result<ReportDocument> {
    let start = Instant::now();
    let tolerance = cfg.tolerance.unwrap_or(-tol::CERTIFICATE_MARGIN);
    if !(tolerance >= 0.0) {
        return Err(ConfigError::new("tolerance", "must be a nonnegative number").into());
    }
    let cap = match cfg.max_seconds {
        Some(s) if s > 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
        Some(_) => return Err(ConfigError::new("max_seconds", "must be a positive number").into()),
        None => None,
    };
    let doc = ReportDocument::new(cfg.clone(), threads);
    let mut ctx = Ctx {
        cfg,
        tolerance,
        start,
        cap,
        doc,
    };
    match ctx.cfg.experiment {
        Experiment::VerifySsa => verify_ssa(&mut ctx)?,
        Experiment::PinchingExample => pinching_example(&mut ctx)?,
        Experiment::DaviesVsPetz => davies_vs_petz(&mut ctx)?,
        Experiment::AtConstants => at_constants(&mut ctx)?,
        Experiment::ClusteringDecay => clustering_decay(&mut ctx)?,
        Experiment::Uncertainty => uncertainty(&mut ctx)?,
        Experiment::GlauberBeta0 => glauber_beta0(&mut ctx)?,
        Experiment::EnergyBlockAt => energy_block(&mut ctx)?,
        Experiment::CondexpAxioms => condexp_axioms(&mut ctx)?,
    }
    if ctx.doc.checks.is_empty() && !ctx.doc.truncated {
        return Err(anyhow!("experiment produced no checks"));
    }
    ctx.doc.finish(start.elapsed().as_secs_f64());
    Ok(ctx.doc)
}

// ---------------------------------------------------------------------------------------------

fn verify_ssa(ctx: &mut Ctx) -> Result<()> {
    let dims = ctx.cfg.dims.clone().unwrap_or_else(|| vec![2, 2, 2]);
    if dims.len() != 3 || dims.iter().any(|&d| d < 2) {
        return Err(ConfigError::new("dims", "expected three local dimensions, each at least 2").into());
    }
    let n = ctx.samples(500)?;
    let d: usize = dims.iter().product();
    let states = ctx.states(d, n, 1)?;
    let factors = FactorPair::new(dims.clone());
    let tolerance = ctx.tolerance;
    ctx.chunked("ssa_entropies", &states, tolerance, |chunk| {
        chunk
            .par_iter()
            .enumerate()
            .map(|(id, rho)| {
                let s = |keep: &[usize]| -> atlab_core::Result<f64> {
                    von_neumann_entropy(&linops::partial_trace(rho, &factors, keep)?)
                };
                let lhs = s(&[1])? + von_neumann_entropy(rho)?;
                let rhs = s(&[0, 1])? + s(&[1, 2])?;
                Ok(StateMargin::new(id, lhs, rhs, "ssa_entropies"))
            })
            .collect()
    })?;
    let e = |kept: &[usize]| -> atlab_core::Result<ConditionalExpectationRep> {
        condexp_tau(&BlockDecomposition::local(&dims, kept)?)
    };
    let quad = ATQuadruple::new(e(&[1])?, e(&[0, 1])?, e(&[1, 2])?)?;
    ctx.chunked("ssa_at_1_0", &states, tolerance, |chunk| at_margins(&quad, 1.0, 0.0, chunk, "ssa_at_1_0"))?;
    ctx.doc.set_value("dims", &dims);
    Ok(())
}

/// Standard basis against the real rotation by `angle`.
fn rotated_basis(angle: f64) -> Operator {
    let (s, c) = angle.sin_cos();
    Operator::from_row_slice(2, 2, &[r(c), r(-s), r(s), r(c)])
}

fn pinching_example(ctx: &mut Ctx) -> Result<()> {
    let angle = ctx.cfg.basis_angle.unwrap_or(PI / 4.0);
    let u = identity(2);
    let v = rotated_basis(angle);
    let ell = 2.0;
    let eps = overlap_constant(&[u.clone(), v.clone()]);
    ctx.doc.push_bound("epsilon_closed_form", 0, (eps - (2.0 * angle).cos().abs()).abs(), limits::CLOSED_FORM);
    ctx.doc.set_value("epsilon", eps);
    ctx.doc.set_value("ell", ell);
    ctx.doc.set_value("epsilon_is_ell_minus_one", (eps - (ell - 1.0)).abs() <= limits::CLOSED_FORM);
    let quad = two_basis_quadruple(&u, &v)?;
    let c1 = c1_conditional_l1(&quad, &AscentOptions::default())?.bracket();
    ctx.doc.set_value("c1", c1);
    if eps >= 0.5 {
        let reason = format!("epsilon = {eps:.6} is not below 1/2, so 1 - 2 epsilon <= 0");
        ctx.doc.push_not_applicable("at_pinching", reason.clone());
        ctx.doc.push_not_applicable("decay", reason);
        return Ok(());
    }
    let c = 1.0 / (1.0 - 2.0 * eps);
    ctx.doc.set_value("c", c);
    let states = ctx.states(2, ctx.samples(500)?, 1)?;
    let tolerance = ctx.tolerance;
    ctx.chunked("at_pinching", &states, tolerance, |chunk| at_margins(&quad, c, 0.0, chunk, "at_pinching"))?;
    let times = ctx.cfg.times.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let m = ctx.cfg.decay_samples.unwrap_or(100);
    let decay_states = ctx.states(2, m, 2)?;
    if !ctx.out_of_time() {
        let rep = pinching_decay_check(&u, &v, &decay_states, &times, tolerance)?;
        ctx.doc.push("decay", rep.margins, tolerance);
    }
    Ok(())
}

fn default_davies_cases() -> Vec<DaviesCase> {
    let case = |n: usize, beta: f64, h: &[(f64, &str)], c: &[&str]| DaviesCase {
        n_qubits: n,
        beta,
        hamiltonian: h.iter().map(|(x, s)| (*x, s.to_string())).collect(),
        couplings: c.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        case(1, 0.5, &[(1.0, "Z")], &["X"]),
        case(2, 1.5, &[(1.0, "ZZ"), (0.5, "ZI")], &["XI"]),
        case(2, 0.0, &[(1.0, "ZI"), (0.7, "IZ")], &["XI", "IY"]),
        case(3, 0.5, &[(1.0, "ZZI"), (1.0, "IZZ")], &["XII", "IXI"]),
        case(3, 1.5, &[(1.0, "ZZI"), (1.0, "IZZ"), (0.3, "ZII")], &["IXI"]),
    ]
}

fn pauli_operator(name: &str, n: usize, path: String) -> Result<Operator> {
    if name.len() != n {
        return Err(ConfigError::new(path, format!("expected {n} Pauli letters, got {name:?}")).into());
    }
    pauli_string(name).map_err(|e| ConfigError::new(path, e.to_string()).into())
}

fn davies_vs_petz(ctx: &mut Ctx) -> Result<()> {
    let cases = ctx.cfg.davies.clone().unwrap_or_else(default_davies_cases);
    let mut details = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        if ctx.out_of_time() {
            break;
        }
        let n = case.n_qubits;
        if n == 0 || n > 3 {
            return Err(ConfigError::new(format!("davies[{i}].n_qubits"), "supported range is 1 to 3").into());
        }
        let mut h = linops::zeros(1 << n);
        for (j, (coef, name)) in case.hamiltonian.iter().enumerate() {
            h += pauli_operator(name, n, format!("davies[{i}].hamiltonian[{j}]"))? * r(*coef);
        }
        let couplings = case
            .couplings
            .iter()
            .enumerate()
            .map(|(j, name)| pauli_operator(name, n, format!("davies[{i}].couplings[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let spec = HamiltonianSpec::new(h, case.beta).map_err(|e| ConfigError::new(format!("davies[{i}].beta"), e.to_string()))?;
        let t = Instant::now();
        let rep = davies_equals_petz_check(&spec, &couplings, &RateProfile::Glauber)?;
        ctx.doc.push_bound("davies_equals_petz", i, rep.superop_distance, limits::DAVIES_PETZ);
        details.push(serde_json::json!({
            "case": i,
            "commutant_dimension": rep.commutant_dimension,
            "kernel_dimension": rep.kernel_dimension,
            "algebra_distance": rep.algebra_distance,
            "superop_distance": rep.superop_distance,
            "seconds": t.elapsed().as_secs_f64(),
        }));
    }
    ctx.doc.set_value("cases", details);
    Ok(())
}

fn quadruple_from_spec(ctx: &Ctx, spec: &QuadrupleSpec) -> Result<ATQuadruple> {
    match spec {
        QuadrupleSpec::TwoBases { dim, tilt } => {
            let base = mub_basis(*dim, 1).map_err(|e| ConfigError::new("quadruple.dim", e.to_string()))?;
            let v = if *tilt == 0.0 { base } else { tilted_basis(&base, *tilt, ctx.stream(7)?)? };
            Ok(two_basis_quadruple(&identity(*dim), &v)?)
        }
        QuadrupleSpec::Local {
            dims,
            m,
            n1,
            n2,
            faithful_state,
        } => {
            let d: usize = dims.iter().product();
            if dims.is_empty() || d > 16 {
                return Err(ConfigError::new("quadruple.dims", "total dimension must be between 1 and 16").into());
            }
            let sigma = if *faithful_state {
                random_faithful_state(d, ctx.stream(8)?)
            } else {
                identity(d) / r(d as f64)
            };
            let e = |kept: &[usize], field: &str| -> Result<ConditionalExpectationRep> {
                let dec = BlockDecomposition::local(dims, kept)
                    .map_err(|e| ConfigError::new(format!("quadruple.{field}"), e.to_string()))?;
                Ok(condexp_petz(&dec, &sigma)?)
            };
            Ok(ATQuadruple::new(e(m, "m")?, e(n1, "n1")?, e(n2, "n2")?)?)
        }
    }
}

fn bracket_order(ctx: &mut Ctx, name: &str, b: &Bracket) {
    ctx.doc.push_bound("bracket_order", ctx.doc.check("bracket_order").map_or(0, |c| c.evaluations), b.lower, b.upper + limits::CLOSED_FORM);
    if b.wide {
        ctx.doc.note(format!("{name} bracket [{:.6e}, {:.6e}] is wider than 10%", b.lower, b.upper));
    }
}

fn at_constants(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.samples(100)?;
    let ascent = ctx.ascent(AscentOptions::default())?;
    let opts = CertifyOptions {
        tolerance: ctx.tolerance,
        ascent,
        ..CertifyOptions::default()
    };
    let lattice_case = match (&ctx.cfg.lattice, &ctx.cfg.quadruple) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::new("quadruple", "give either a quadruple or a lattice, not both").into())
        }
        (Some(_), None) => {
            let lattice = ctx.lattice(|| unreachable!())?;
            let pair = ctx.region_pairs(&lattice, &[])?;
            let Some((a, b)) = pair.into_iter().next() else {
                return Err(ConfigError::new("regions", "a lattice run needs one region pair").into());
            };
            Some((lattice, a, b))
        }
        (None, _) => None,
    };
    let flavor = ctx.cfg.flavor.unwrap_or(Flavor::Davies);
    let quad = match &lattice_case {
        Some((lattice, a, b)) => region_quadruple(lattice, a, b, flavor)?,
        None => {
            let spec = ctx.cfg.quadruple.clone().unwrap_or(QuadrupleSpec::TwoBases { dim: 2, tilt: 0.3 });
            quadruple_from_spec(ctx, &spec)?
        }
    };
    let states = ctx.states(quad.dim(), n, 1)?;
    let report = certify_theorems(&quad, &states, &opts)?;
    ctx.doc.absorb(&report);
    ctx.doc.push_bound("integration_error", 0, report.integration_error, tol::QUAD_ERROR);
    let k = report.constants.clone();
    for (name, b) in [("c1", k.c1), ("d1", k.d1), ("d2", k.d2), ("weak_d", k.weak_d)] {
        if let Some(b) = b {
            bracket_order(ctx, name, &b);
        }
    }
    ctx.doc.set_value("constants", &k);
    if let Some((lattice, a, b)) = &lattice_case {
        let lat = lattice_change_of_measure(lattice, a, b, flavor, &states, &ascent, ctx.tolerance)?;
        ctx.doc.absorb(&lat.report);
        ctx.doc.set_value(
            "lattice_change_of_measure",
            serde_json::json!({ "interaction_norm": lat.interaction_norm, "c": lat.c, "d0": lat.d0, "d": lat.d }),
        );
    }
    Ok(())
}

fn clustering_decay(ctx: &mut Ctx) -> Result<()> {
    let lattice = ctx.lattice(|| LatticeSpec::ising(5, 1.0, 0.0, 0.2, Geometry::Chain))?;
    let pairs = ctx.region_pairs(
        &lattice,
        &[(&[0, 1], &[1, 2]), (&[0, 1, 2], &[1, 2, 3]), (&[0, 1, 2, 3], &[1, 2, 3, 4])],
    )?;
    let flavor = ctx.cfg.flavor.unwrap_or(Flavor::Davies);
    let ascent = ctx.ascent(AscentOptions {
        restarts: 8,
        max_iterations: 200,
        ..AscentOptions::default()
    })?;
    let scan = clustering_decay_scan(&lattice, &pairs, flavor, &ascent)
        .map_err(|e| match e {
            atlab_core::AtlabError::Contract(m) => anyhow::Error::from(ConfigError::new("regions", m)),
            other => other.into(),
        })?;
    let mut ordered: Vec<(usize, f64)> = scan.pairs.iter().filter_map(|p| p.separation.map(|s| (s, p.c.upper))).collect();
    ordered.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    for (k, w) in ordered.windows(2).enumerate() {
        if w[1].0 > w[0].0 {
            ctx.doc.push_bound("monotone_in_separation", k, w[1].1, w[0].1 + limits::MONOTONE_SLACK);
        }
    }
    if ordered.len() < 2 {
        ctx.doc.push_not_applicable("monotone_in_separation", "fewer than two pairs with a separation");
    }
    if lattice.classical && lattice.spec.beta == 0.0 && flavor == Flavor::Glauber {
        for (i, p) in scan.pairs.iter().enumerate() {
            ctx.doc.push_bound("infinite_temperature_floor", i, p.c.upper, atlab_core::lattice::CLUSTERING_FLOOR);
        }
    }
    for (name, p) in scan.pairs.iter().map(|p| (format!("c({:?},{:?})", p.a, p.b), p)) {
        bracket_order(ctx, &name, &p.c);
        if p.at_floor {
            ctx.doc.note(format!("{name} upper bound is at the numerical floor"));
        }
    }
    if let Some(note) = &scan.fit_note {
        ctx.doc.note(format!("decay fit skipped: {note}"));
    }
    ctx.doc.set_value("scan", &scan);
    Ok(())
}

fn uncertainty(ctx: &mut Ctx) -> Result<()> {
    let d = ctx.cfg.dim.unwrap_or(2);
    let k = ctx.cfg.n_bases.unwrap_or(2);
    if !(2..=3).contains(&k) {
        return Err(ConfigError::new("n_bases", "expected 2 or 3").into());
    }
    let tilt = ctx.cfg.tilt.unwrap_or(0.0);
    let mut bases = (0..k)
        .map(|j| mub_basis(d, j).map_err(|e| ConfigError::new("dim", e.to_string()).into()))
        .collect::<Result<Vec<_>>>()?;
    if tilt != 0.0 {
        let last = bases.pop().expect("at least two bases");
        bases.push(tilted_basis(&last, tilt, ctx.stream(7)?)?);
    }
    let states = ctx.states(d, ctx.samples(1000)?, 1)?;
    let tolerance = ctx.tolerance;
    let mut c1 = 0.0;
    let mut skip = None;
    for (j, chunk) in states.chunks(CHUNK).enumerate() {
        if ctx.out_of_time() {
            break;
        }
        let rep = uncertainty_check(&bases, chunk, tolerance)?;
        c1 = rep.c1;
        skip = rep.skip_reason.clone();
        let mut names: Vec<String> = rep.margins.iter().map(|m| m.check_name.clone()).collect();
        names.sort();
        names.dedup();
        for name in names {
            let rows = rep
                .margins
                .iter()
                .filter(|m| m.check_name == name)
                .cloned()
                .map(|mut m| {
                    m.state_id += j * CHUNK;
                    m
                })
                .collect();
            ctx.doc.push(&name, rows, tolerance);
        }
    }
    let mixed = uncertainty_check(&bases, &[identity(d) / r(d as f64)], tolerance)?;
    match (skip, mixed.min_slack_strengthened) {
        (None, Some(slack)) => {
            ctx.doc.push_bound("maximally_mixed_equality", 0, slack.abs(), limits::EXACT_IDENTITY);
        }
        (reason, _) => {
            let reason = reason.unwrap_or_else(|| "strengthened relation not evaluated".into());
            ctx.doc.push_not_applicable("strengthened", reason.clone());
            ctx.doc.push_not_applicable("maximally_mixed_equality", reason);
        }
    }
    ctx.doc.set_value("c1", c1);
    ctx.doc.set_value("dim", d);
    ctx.doc.set_value("n_bases", k);
    Ok(())
}

/// Unordered pairs of nonempty subsets of `{0, …, n−1}`, including `A = B`.
fn all_region_pairs(n: usize) -> Vec<RegionPair> {
    let subsets: Vec<Vec<usize>> = (1..(1usize << n))
        .map(|mask| (0..n).filter(|k| mask >> k & 1 == 1).collect())
        .collect();
    let mut out = Vec::new();
    for (i, a) in subsets.iter().enumerate() {
        for b in &subsets[i..] {
            out.push(RegionPair { a: a.clone(), b: b.clone() });
        }
    }
    out
}

fn glauber_beta0(ctx: &mut Ctx) -> Result<()> {
    let lattice = ctx.lattice(|| LatticeSpec::ising(4, 1.0, 0.0, 0.0, Geometry::Chain))?;
    if !lattice.classical {
        return Err(ConfigError::new("lattice.terms", "Glauber dynamics needs qubits and diagonal terms").into());
    }
    if ctx.cfg.regions.is_none() {
        ctx.cfg.regions = Some(all_region_pairs(lattice.n_sites()));
    }
    let pairs = ctx.region_pairs(&lattice, &[])?;
    let samples = ctx.samples(20)?;
    let beta0 = lattice.spec.beta == 0.0;
    let mut held = 0;
    let mut evaluated = 0;
    let base_seed = ctx.stream(3)?;
    for (chunk_index, chunk) in pairs.chunks(8).enumerate() {
        if ctx.out_of_time() {
            break;
        }
        let reports = chunk
            .par_iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let opts = SampleOptions {
                    samples,
                    seed: base_seed.wrapping_add((chunk_index * 8 + k) as u64),
                    tolerance: ctx.tolerance,
                };
                glauber_infinite_temp_check(&lattice, a, b, &opts)
            })
            .collect::<atlab_core::Result<Vec<_>>>()?;
        for (k, rep) in reports.into_iter().enumerate() {
            let id = chunk_index * 8 + k;
            evaluated += 1;
            held += usize::from(rep.square.holds);
            if beta0 {
                ctx.doc.push_bound("commuting_square", id, rep.square.max_residual(), limits::EXACT_IDENTITY);
                ctx.doc.push_bound("dmax_bound_zero", id, rep.dmax_bound.abs(), limits::CLOSED_FORM);
            }
            let dmax = StateMargin::new(id, rep.sampled_dmax, rep.dmax_bound, "dmax_bound");
            ctx.doc.push("dmax_bound", vec![dmax], ctx.tolerance);
            let rows = rep
                .square
                .at_margins
                .into_iter()
                .map(|mut m| {
                    m.state_id = id * samples + m.state_id;
                    m
                })
                .collect();
            ctx.doc.push("at_1_0", rows, ctx.tolerance);
        }
    }
    if !beta0 {
        ctx.doc.note("beta > 0: commuting squares are reported, not required");
    }
    ctx.doc.set_value("pairs_evaluated", evaluated);
    ctx.doc.set_value("commuting_squares", held);
    Ok(())
}

fn energy_block(ctx: &mut Ctx) -> Result<()> {
    let lattice = ctx.lattice(|| LatticeSpec::ising(3, 1.0, 0.0, 0.5, Geometry::Chain))?;
    let pairs = ctx.region_pairs(&lattice, &[(&[0, 1], &[1, 2])])?;
    let (a, b) = pairs
        .into_iter()
        .next()
        .ok_or_else(|| ConfigError::new("regions", "needs one region pair"))?;
    let flavor = ctx.cfg.flavor.unwrap_or(Flavor::Davies);
    let quad = region_quadruple(&lattice, &a, &b, flavor)?;
    let opts = CertifyOptions {
        tolerance: ctx.tolerance,
        ascent: ctx.ascent(AscentOptions::default())?,
        ..CertifyOptions::default()
    };
    let rep = energy_block_at(&quad, &lattice.hamiltonian, ctx.samples(200)?, ctx.stream(1)?, &opts)?;
    ctx.doc.push_bound("energy_block_invariance", 0, rep.invariance_residual, limits::EXACT_IDENTITY);
    ctx.doc.absorb(&rep.report);
    ctx.doc.set_value("max_block_dim", rep.max_block_dim);
    ctx.doc.set_value("c", rep.c);
    ctx.doc.set_value("weak_term", rep.weak_term);
    Ok(())
}

fn default_algebra_cases() -> Vec<AlgebraCase> {
    let shapes: [&[(usize, usize)]; 10] = [
        &[(1, 1), (1, 1)],
        &[(2, 1)],
        &[(1, 2)],
        &[(2, 1), (1, 1)],
        &[(1, 2), (1, 1)],
        &[(2, 2)],
        &[(1, 1), (1, 1), (1, 1), (1, 1)],
        &[(2, 1), (1, 2)],
        &[(2, 2), (1, 3)],
        &[(2, 4), (2, 2), (1, 4)],
    ];
    shapes.iter().map(|s| AlgebraCase { blocks: s.to_vec() }).collect()
}

fn condexp_axioms(ctx: &mut Ctx) -> Result<()> {
    let cases = ctx.cfg.algebras.clone().unwrap_or_else(default_algebra_cases);
    let samples = ctx.samples(10)?;
    let mut details = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        if ctx.out_of_time() {
            break;
        }
        let path = format!("algebras[{i}].blocks");
        let d: usize = case.blocks.iter().map(|&(h, k)| h * k).sum();
        if d > 16 {
            return Err(ConfigError::new(path, "total dimension must be at most 16").into());
        }
        let alg = random_block_algebra(&case.blocks, ctx.stream(100 + i as u64)?)
            .map_err(|e| ConfigError::new(path.clone(), e.to_string()))?;
        let dec = decompose_algebra(&alg)?;
        let sigma = random_faithful_state(d, ctx.stream(200 + i as u64)?);
        // A Davies generator whose Hamiltonian and couplings lie in the commutant fixes the algebra.
        let comm = commutant(&alg.basis, d)?;
        let mut g = sampling::rng(ctx.stream(300 + i as u64)?);
        let h = comm.random_hermitian_element(&mut g);
        let couplings = [comm.random_hermitian_element(&mut g), comm.random_hermitian_element(&mut g)];
        let spec = HamiltonianSpec::new(h, 1.0)?;
        let fixed = fixed_point_projection(&davies_generator(&spec, &couplings, &RateProfile::Glauber)?)?;
        let maps = [
            ("axioms_tracial", condexp_tau(&dec)?),
            ("axioms_petz", condexp_petz(&dec, &sigma)?),
            ("axioms_fixed_point", fixed),
        ];
        let mut row = serde_json::json!({ "case": i, "dim": d, "algebra_dimension": alg.dimension() });
        for (k, (name, e)) in maps.iter().enumerate() {
            let v = validate_condexp(e, samples, ctx.stream(400 + (3 * i + k) as u64)?)?;
            ctx.doc.push_bound(name, i, v.max_residual(), limits::EXACT_IDENTITY);
            row[*name] = serde_json::to_value(v)?;
        }
        row["fixed_point_rank"] = serde_json::Value::from(maps[2].1.rank());
        details.push(row);
    }
    ctx.doc.set_value("cases", details);
    Ok(())
}
