use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Numerical knobs shared by every experiment kind. Missing entries take
/// the defaults of [`Tolerances::resolved`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    /// Finite-difference step of the Cauchy–Riemann residual.
    pub h: Option<f64>,
    pub band: Option<f64>,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h: f64,
    pub band: f64,
    pub bins: usize,
}

impl Tolerances {
    pub fn resolved(&self) -> ResolvedTolerances {
        ResolvedTolerances {
            rtol: self.rtol.unwrap_or(1e-8),
            atol: self.atol.unwrap_or(1e-10),
            h: self.h.unwrap_or(1e-4),
            band: self.band.unwrap_or(0.05),
            bins: self.bins.unwrap_or(36),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnergyModel {
    /// `f ≡ c` on `R²`.
    Trivial { c: f64 },
    /// `β = x dy`, `f = arctan x`, integrated over `s ∈ [−s_half, s_half]`.
    Arctan {
        #[serde(default = "default_arctan_half")]
        s_half: f64,
    },
}

fn default_arctan_half() -> f64 {
    2e5
}

/// Kind-specific parameters. The `kind` tag selects the variant and serde
/// reports any missing required field by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Flow {
        #[serde(default = "one")]
        delta: f64,
        #[serde(default = "twenty")]
        metrics: usize,
        #[serde(default = "five")]
        starts: usize,
        #[serde(default = "three")]
        fourier_modes: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "one")]
        amplitude: f64,
        /// Starts are drawn with `s` uniform in this interval.
        #[serde(default = "default_start_s")]
        start_s: (f64, f64),
        #[serde(default = "default_barrier_c")]
        barrier_c: f64,
        #[serde(default = "default_s_star")]
        barrier_s_star: f64,
    },
    AnnulusCylinder {
        #[serde(default = "one_usize")]
        n: usize,
        r_minus: f64,
        r_plus: f64,
        start: Option<Vec<f64>>,
        #[serde(default = "default_annulus_range")]
        s_range: (f64, f64),
    },
    Plane {
        #[serde(default = "one_usize")]
        n: usize,
        r0: f64,
        start: Option<Vec<f64>>,
    },
    Identities {
        n: usize,
        #[serde(default = "hundred")]
        points: usize,
    },
    Energy(EnergyModel),
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn three() -> usize {
    3
}
fn five() -> usize {
    5
}
fn twenty() -> usize {
    20
}
fn hundred() -> usize {
    100
}
fn default_mu() -> f64 {
    0.2
}
fn default_start_s() -> (f64, f64) {
    (-0.8, -0.2)
}
fn default_barrier_c() -> f64 {
    1.25
}
fn default_s_star() -> f64 {
    -0.3
}
fn default_annulus_range() -> (f64, f64) {
    (-20.0, 20.0)
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Flow { .. } => "flow",
            Experiment::AnnulusCylinder { .. } => "annulus-cylinder",
            Experiment::Plane { .. } => "plane",
            Experiment::Identities { .. } => "identities",
            Experiment::Energy(_) => "energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Defaults to the kind; names must be unique within a manifest.
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub rtol: Option<f64>,
    pub band: Option<f64>,
    pub bins: Option<usize>,
}

impl ExperimentConfig {
    pub fn name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.experiment.kind().to_string())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
        if o.rtol.is_some() {
            self.tolerances.rtol = o.rtol;
        }
        if o.band.is_some() {
            self.tolerances.band = o.band;
        }
        if o.bins.is_some() {
            self.tolerances.bins = o.bins;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tolerances.resolved();
        for (field, v) in [
            ("rtol", t.rtol),
            ("atol", t.atol),
            ("h", t.h),
            ("band", t.band),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("tolerances.{field} must be positive and finite, got {v}");
            }
        }
        if t.bins == 0 {
            bail!("tolerances.bins must be positive");
        }
        let name = self.name();
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            bail!("name {name:?} is not a valid directory name");
        }
        let positive = |field: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bail!("{field} must be positive, got {v}")
            }
        };
        let dimension = |n: usize| -> Result<()> {
            if (1..=3).contains(&n) {
                Ok(())
            } else {
                bail!("n must be in 1..=3, got {n}")
            }
        };
        match &self.experiment {
            Experiment::Flow {
                delta,
                metrics,
                starts,
                fourier_modes,
                mu,
                amplitude,
                start_s,
                ..
            } => {
                positive("delta", *delta)?;
                positive("mu", *mu)?;
                if *amplitude < 0.0 {
                    bail!("amplitude must be nonnegative, got {amplitude}");
                }
                if *metrics == 0 || *starts == 0 || *fourier_modes == 0 {
                    bail!("metrics, starts and fourier_modes must be positive");
                }
                if !(start_s.0 < start_s.1 && start_s.1 < 0.0) {
                    bail!("start_s must be an interval of negative s, got {start_s:?}");
                }
            }
            Experiment::AnnulusCylinder {
                n,
                r_minus,
                r_plus,
                start,
                s_range,
            } => {
                dimension(*n)?;
                positive("r_minus", *r_minus)?;
                if r_plus <= r_minus {
                    bail!("r_plus must exceed r_minus");
                }
                if let Some(s) = start {
                    if s.len() != 2 * n {
                        bail!("start must have {} coordinates", 2 * n);
                    }
                }
                if !(s_range.0 < 0.0 && s_range.1 > 0.0) {
                    bail!("s_range must contain 0, got {s_range:?}");
                }
            }
            Experiment::Plane { n, r0, start } => {
                dimension(*n)?;
                positive("r0", *r0)?;
                if let Some(s) = start {
                    if s.len() != 2 * n {
                        bail!("start must have {} coordinates", 2 * n);
                    }
                }
            }
            Experiment::Identities { n, points } => {
                dimension(*n)?;
                if *points == 0 {
                    bail!("points must be positive");
                }
            }
            Experiment::Energy(EnergyModel::Arctan { s_half }) => positive("s_half", *s_half)?,
            Experiment::Energy(EnergyModel::Trivial { c }) => {
                if !c.is_finite() {
                    bail!("c must be finite");
                }
            }
        }
        Ok(())
    }

    /// Directory receiving this experiment's report and CSV files.
    pub fn artifact_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("pqflow-out"))
            .join(self.name())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid configuration in {}", path.display()))
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_json(path)?;
    cfg.apply(o);
    cfg.validate()?;
    Ok(cfg)
}

/// Experiments inherit the manifest's output directory unless they set
/// their own; command-line overrides apply to every experiment.
pub fn load_manifest(path: &Path, o: &Overrides) -> Result<Vec<ExperimentConfig>> {
    let manifest: Manifest = read_json(path)?;
    let mut out = Vec::with_capacity(manifest.experiments.len());
    let mut names = HashSet::new();
    for (i, mut cfg) in manifest.experiments.into_iter().enumerate() {
        if cfg.output_dir.is_none() {
            cfg.output_dir = manifest.output_dir.clone();
        }
        cfg.apply(o);
        cfg.validate()
            .with_context(|| format!("experiments[{i}]"))?;
        if !names.insert(cfg.name()) {
            bail!("experiments[{i}]: duplicate name {:?}", cfg.name());
        }
        out.push(cfg);
    }
    Ok(out)
}

/// One step of the splitmix64 generator.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the named stream of an experiment. Streams depend only on the
/// experiment seed and the stream label, never on which other experiments
/// run alongside.
pub fn stream_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01B3);
    }
    splitmix64(splitmix64(seed) ^ h)
}
