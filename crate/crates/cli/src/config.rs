//! Experiment configuration files.

use std::fmt;
use std::path::PathBuf;

use atlab_core::lattice::{Flavor, LatticeSpec};
use atlab_core::sampling::StateKind;
use atlab_core::tensorization::AscentOptions;
use serde::{Deserialize, Serialize};

/// Names accepted in the `experiment` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifySsa,
    PinchingExample,
    DaviesVsPetz,
    AtConstants,
    ClusteringDecay,
    Uncertainty,
    GlauberBeta0,
    EnergyBlockAt,
    CondexpAxioms,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::VerifySsa,
        Experiment::PinchingExample,
        Experiment::DaviesVsPetz,
        Experiment::AtConstants,
        Experiment::ClusteringDecay,
        Experiment::Uncertainty,
        Experiment::GlauberBeta0,
        Experiment::EnergyBlockAt,
        Experiment::CondexpAxioms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifySsa => "verify-ssa",
            Experiment::PinchingExample => "pinching-example",
            Experiment::DaviesVsPetz => "davies-vs-petz",
            Experiment::AtConstants => "at-constants",
            Experiment::ClusteringDecay => "clustering-decay",
            Experiment::Uncertainty => "uncertainty",
            Experiment::GlauberBeta0 => "glauber-beta0",
            Experiment::EnergyBlockAt => "energy-block-at",
            Experiment::CondexpAxioms => "condexp-axioms",
        }
    }
}

/// A pair of lattice regions `(A, B)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionPair {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

/// Three nested conditional expectations `E_M`, `E_1`, `E_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadrupleSpec {
    /// `M = C·1` and the pinchings onto two bases: the standard basis and a mutually unbiased
    /// basis tilted by `tilt`.
    TwoBases {
        dim: usize,
        #[serde(default)]
        tilt: f64,
    },
    /// Local algebras `B(H_S) ⊗ 1` on a tensor product, keeping the factors listed in `m`, `n1`, `n2`.
    Local {
        dims: Vec<usize>,
        m: Vec<usize>,
        n1: Vec<usize>,
        n2: Vec<usize>,
        /// Use a random faithful state instead of the normalized trace.
        #[serde(default)]
        faithful_state: bool,
    },
}

/// One Davies generator on qubits, with Hamiltonian and couplings given as Pauli strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaviesCase {
    pub n_qubits: usize,
    pub beta: f64,
    /// Terms `(coefficient, Pauli string)`.
    pub hamiltonian: Vec<(f64, String)>,
    pub couplings: Vec<String>,
}

/// Block shapes `(dh, dk)` of a randomly rotated algebra `⊕ B(C^dh) ⊗ 1_dk`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraCase {
    pub blocks: Vec<(usize, usize)>,
}

/// Overrides for the randomized ascent used by lower bounds; the seed comes from the experiment seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AscentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl AscentConfig {
    pub fn resolve(&self, base: AscentOptions, seed: u64) -> AscentOptions {
        AscentOptions {
            restarts: self.restarts.unwrap_or(base.restarts),
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            step: self.step.unwrap_or(base.step),
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

/// Contents of a configuration file. Every field except `experiment` is optional; each experiment
/// documents the fields it reads and their defaults in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Absolute violation tolerance for margins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Wall-clock cap; the run stops between work units once it is exceeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_kind: Option<StateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bases: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavor: Option<Flavor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<RegionPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadruple: Option<QuadrupleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub davies: Option<Vec<DaviesCase>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebras: Option<Vec<AlgebraCase>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ascent: Option<AscentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

impl ExperimentConfig {
    /// A configuration naming only the experiment.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: None,
            samples: None,
            tolerance: None,
            max_seconds: None,
            state_kind: None,
            dims: None,
            basis_angle: None,
            dim: None,
            n_bases: None,
            tilt: None,
            times: None,
            decay_samples: None,
            lattice: None,
            flavor: None,
            regions: None,
            quadruple: None,
            davies: None,
            algebras: None,
            ascent: None,
            output: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// An invalid configuration, located by the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parses a configuration, reporting the path of the first invalid field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(path, e.into_inner().to_string())
    })
}
