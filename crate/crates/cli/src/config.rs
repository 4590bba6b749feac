//! Scenario configuration schema. A scenario file is a JSON document with a
//! name, an optional machine-readable `paper_ref` label naming the bound it
//! exercises, an optional seed, and exactly one experiment section.

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use qmslab_core::certificates::{ell_photon_certificate, StabilityCertificate};
use qmslab_core::fock::{
    coherent_state, random_density, random_pure_ket, DensityMatrix, FockCutoff, ModeSpace,
};
use qmslab_core::gksl::{GeneratorSpec, HamiltonianSpec1M, HamiltonianSpec2Local};
use qmslab_core::lattice::LatticeSpec;

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Which analytic statement this scenario tests, as a stable label.
    #[serde(default)]
    pub paper_ref: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catcode: Option<CatcodeCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multimode: Option<MultimodeCfg>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Failure::Schema(format!("config: {e}")))?;
        let sections = [
            cfg.evolve.is_some(),
            cfg.certify.is_some(),
            cfg.catcode.is_some(),
            cfg.multimode.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if sections != 1 {
            return Err(Failure::Schema(format!(
                "scenario '{}' must contain exactly one experiment section, found {sections}",
                cfg.name
            )));
        }
        if cfg.name.is_empty() || !cfg.name.chars().all(|c| c.is_alphanumeric() || "-_.".contains(c))
        {
            return Err(Failure::Schema(format!(
                "scenario name '{}' must be nonempty and filesystem-safe",
                cfg.name
            )));
        }
        Ok(cfg)
    }

    pub fn kind(&self) -> &'static str {
        if self.evolve.is_some() {
            "evolve"
        } else if self.certify.is_some() {
            "certify"
        } else if self.catcode.is_some() {
            "catcode"
        } else {
            "multimode"
        }
    }
}

/// Time grid: explicit list or a uniform linspace.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    Explicit(Vec<f64>),
    Linspace { start: f64, stop: f64, points: usize },
}

impl TimeGrid {
    pub fn materialize(&self) -> Result<Vec<f64>, Failure> {
        let grid = match self {
            TimeGrid::Explicit(v) => v.clone(),
            TimeGrid::Linspace { start, stop, points } => {
                if *points < 1 || stop < start {
                    return Err(Failure::Schema("bad linspace time grid".into()));
                }
                if *points == 1 {
                    vec![*start]
                } else {
                    (0..*points)
                        .map(|i| start + (stop - start) * i as f64 / (*points - 1) as f64)
                        .collect()
                }
            }
        };
        if grid.is_empty() || grid.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Failure::Schema(
                "time grid must be nonempty with positive finite entries".into(),
            ));
        }
        Ok(grid)
    }
}

/// Initial-state descriptions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Coherent { alpha: [f64; 2] },
    Number { n: Vec<usize> },
    Random { support: usize, count: usize },
    RandomPure { support: usize, count: usize },
    /// Even cat state of the scenario's codespace (catcode scenarios only).
    Cat,
}

pub fn materialize_probes<R: Rng>(
    probes: &[ProbeSpec],
    space: ModeSpace,
    cat: Option<&qmslab_core::catcode::Codespace>,
    rng: &mut R,
) -> Result<Vec<DensityMatrix>, Failure> {
    let mut out = Vec::new();
    for p in probes {
        match p {
            ProbeSpec::Coherent { alpha } => {
                if space.modes != 1 {
                    return Err(Failure::Schema(
                        "coherent probe needs a single-mode space".into(),
                    ));
                }
                out.push(
                    coherent_state(C64::new(alpha[0], alpha[1]), space.cutoff)
                        .map_err(Failure::from_core)?,
                );
            }
            ProbeSpec::Number { n } => {
                out.push(DensityMatrix::number_state(space, n).map_err(Failure::from_core)?);
            }
            ProbeSpec::Random { support, count } => {
                for _ in 0..*count {
                    out.push(random_density(space, *support, rng));
                }
            }
            ProbeSpec::RandomPure { support, count } => {
                for _ in 0..*count {
                    let ket = random_pure_ket(space, *support, rng);
                    out.push(
                        DensityMatrix::from_ket(space, &ket).map_err(Failure::from_core)?,
                    );
                }
            }
            ProbeSpec::Cat => match cat {
                Some(cs) => out.push(cs.cat_state().map_err(Failure::from_core)?),
                None => {
                    return Err(Failure::Schema(
                        "cat probe is only available in catcode scenarios".into(),
                    ))
                }
            },
        }
    }
    if out.is_empty() {
        return Err(Failure::Schema("scenario needs at least one probe".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveCfg {
    pub model: GeneratorSpec,
    pub probes: Vec<ProbeSpec>,
    pub t_end: f64,
    /// Times at which full states are stored (subset of the run).
    #[serde(default)]
    pub checkpoints: Option<TimeGrid>,
    #[serde(default)]
    pub track_ks: Vec<f64>,
    /// Weighted moments (v, k) to track; needs a lattice in the model.
    #[serde(default)]
    pub track_weighted: Vec<(usize, f64)>,
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Write checkpoint states as JSON matrices.
    #[serde(default)]
    pub dump_states: bool,
}

/// Certificate: explicit constants or a named closed-form preset.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CertSpec {
    Preset {
        preset: String,
        k: f64,
        #[serde(default)]
        ell: Option<usize>,
        #[serde(default)]
        alpha: Option<[f64; 2]>,
        #[serde(default)]
        lambda: Option<f64>,
    },
    Explicit(StabilityCertificate),
}

impl CertSpec {
    pub fn build(&self) -> Result<StabilityCertificate, Failure> {
        match self {
            CertSpec::Explicit(c) => {
                c.validate().map_err(Failure::from_core)?;
                Ok(*c)
            }
            CertSpec::Preset { preset, k, ell, alpha, lambda } => match preset.as_str() {
                // 2-photon dissipation: μ = 1, δ = 1, c = 6^{k+1}
                "two-photon" => StabilityCertificate::new(*k, 1.0, 1.0, 6f64.powf(k + 1.0))
                    .map_err(Failure::from_core),
                // shifted ℓ-photon dissipation via μ_k^{(ℓ)}
                "ell-photon" => {
                    let ell = ell.ok_or_else(|| {
                        Failure::Schema("ell-photon preset needs 'ell'".into())
                    })?;
                    let a = alpha.map(|a| C64::new(a[0], a[1])).unwrap_or_default();
                    ell_photon_certificate(ell, *k, a, *lambda).map_err(Failure::from_core)
                }
                other => Err(Failure::Schema(format!("unknown certificate preset '{other}'"))),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyCfg {
    pub model: GeneratorSpec,
    pub certificate: CertSpec,
    pub probes: Vec<ProbeSpec>,
    pub time_grid: TimeGrid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatcodeMode {
    Convergence,
    Perturbed,
    Steady,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatcodeCfg {
    pub ell: usize,
    pub alpha: [f64; 2],
    #[serde(default)]
    pub cutoff: Option<usize>,
    pub mode: CatcodeMode,
    pub probes: Vec<ProbeSpec>,
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub perturbation: Option<PerturbationCfg>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationCfg {
    pub hamiltonian: HamiltonianSpec1M,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultimodeCfg {
    pub lattice: LatticeSpec,
    pub ell: usize,
    pub alphas: Vec<[f64; 2]>,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianSpec2Local>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub cutoff: usize,
    pub kappa: f64,
    pub k: f64,
    pub samples: usize,
    #[serde(default)]
    pub support: Option<usize>,
    /// Weight centers to test; default all nodes.
    #[serde(default)]
    pub centers: Option<Vec<usize>>,
    pub mode: MultimodeModeCfg,
}

/// Which branch of the multi-mode stability statement to check; the with-η
/// branch uses the scenario's `eta` as the dissipation strength.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultimodeModeCfg {
    WithEta,
    DegreeRestricted,
}

fn default_eta() -> f64 {
    1.0
}
