//! Experiment specification files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use arms_core::ams::{c_min, AmsParams, CheckPolicy};
use arms_core::driver::ArmsConfig;
use arms_core::mcmc::KernelConfig;
use arms_core::rng::mix_seed;
use arms_core::surrogates::Toy1DModel;
use arms_core::ReferenceDistribution;
use serde::{Deserialize, Serialize};

/// Version of the trace and summary layout written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Where traces and summaries go; defaults to `out/<name>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Known rare-event probability, used for error metrics. Computed from
    /// the problem when it has an oracle and this is absent.
    #[serde(default)]
    pub p_star: Option<f64>,
    /// Also write the snapshot parameters of every run as JSON.
    #[serde(default)]
    pub write_snapshots: bool,
    pub problem: ProblemSpec,
    pub arms: ArmsSettings,
    #[serde(default)]
    pub sweep: Sweep,
}

fn one() -> usize {
    1
}

/// How the second log-normal parameter is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    #[default]
    Std,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(default = "default_mu")]
    pub mu_log: f64,
    #[serde(default = "default_mu")]
    pub spread: f64,
    #[serde(default)]
    pub spread_is: Spread,
}

fn default_mu() -> f64 {
    1.5
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            mu_log: 1.5,
            spread: 1.5,
            spread_is: Spread::Std,
        }
    }
}

impl ReferenceSpec {
    pub fn build(&self, dim: usize) -> arms_core::Result<ReferenceDistribution> {
        match self.spread_is {
            Spread::Std => ReferenceDistribution::new(dim, self.mu_log, self.spread),
            Spread::Variance => ReferenceDistribution::from_variance(dim, self.mu_log, self.spread),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Toy1d {
        #[serde(default)]
        model: Toy1DModel,
        #[serde(default)]
        reference: ReferenceSpec,
        #[serde(default = "ten")]
        initial_snapshots: usize,
    },
    ThermalBlock {
        d: usize,
        n: usize,
        l_max: f64,
        #[serde(default = "five")]
        initial_basis: usize,
        #[serde(default = "drop_tol")]
        drop_tol: f64,
        #[serde(default)]
        reference: ReferenceSpec,
    },
    Tabular {
        fixture: PathBuf,
        #[serde(default = "standard")]
        reference: ReferenceSpec,
    },
}

fn ten() -> usize {
    10
}
fn five() -> usize {
    5
}
fn drop_tol() -> f64 {
    1e-9
}
fn standard() -> ReferenceSpec {
    ReferenceSpec {
        mu_log: 0.0,
        spread: 1.0,
        spread_is: Spread::Std,
    }
}

/// Engine settings shared by every sweep combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsSettings {
    pub n_particles: usize,
    pub kill_fraction: f64,
    /// Absolute threshold `c`; exclusive with `c_multiplier`.
    #[serde(default)]
    pub c_threshold: Option<f64>,
    /// Threshold as a multiple of `c_min(M, N)`.
    #[serde(default)]
    pub c_multiplier: Option<f64>,
    pub t_mutations: usize,
    pub snapshot_budget: usize,
    pub j0: usize,
    #[serde(default = "infinite", with = "arms_core::serde_ext")]
    pub tau0: f64,
    #[serde(default = "disabled")]
    pub epsilon_stop: f64,
    #[serde(default)]
    pub use_bridge: bool,
    #[serde(default)]
    pub gain: f64,
    #[serde(default)]
    pub checks: CheckPolicy,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub history_capacity: Option<usize>,
}

fn infinite() -> f64 {
    f64::INFINITY
}
fn disabled() -> f64 {
    -1.0
}

/// Lists of values to sweep; an empty list keeps the base setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub n_particles: Vec<usize>,
    #[serde(default)]
    pub c_multiplier: Vec<f64>,
    #[serde(default)]
    pub gain: Vec<f64>,
    #[serde(default)]
    pub use_bridge: Vec<bool>,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub index: usize,
    pub n_particles: usize,
    pub c_multiplier: Option<f64>,
    pub c_threshold: f64,
    pub gain: f64,
    pub use_bridge: bool,
}

impl Combination {
    pub fn label(&self) -> String {
        format!("c{:03}", self.index)
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut spec =
            Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // Fixture paths are relative to the spec file.
        if let ProblemSpec::Tabular { fixture, .. } = &mut spec.problem {
            if fixture.is_relative() {
                if let Some(dir) = path.parent() {
                    *fixture = dir.join(&*fixture);
                }
            }
        }
        Ok(spec)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    /// Cartesian product of the sweep lists, in a fixed order.
    pub fn combinations(&self) -> anyhow::Result<Vec<Combination>> {
        let a = &self.arms;
        let ns = or_base(&self.sweep.n_particles, a.n_particles);
        let mults: Vec<Option<f64>> = if self.sweep.c_multiplier.is_empty() {
            vec![a.c_multiplier]
        } else {
            self.sweep.c_multiplier.iter().map(|m| Some(*m)).collect()
        };
        let gains = or_base(&self.sweep.gain, a.gain);
        let bridges = or_base(&self.sweep.use_bridge, a.use_bridge);
        let mut out = Vec::new();
        for &n in &ns {
            for &mult in &mults {
                for &gain in &gains {
                    for &use_bridge in &bridges {
                        let c_threshold = match (mult, a.c_threshold) {
                            (Some(_), Some(_)) if self.sweep.c_multiplier.is_empty() => {
                                bail!("set either c_threshold or c_multiplier, not both")
                            }
                            (Some(m), _) => m * c_min(m_of(n, a.kill_fraction), n)?,
                            (None, Some(c)) => c,
                            (None, None) => bail!("one of c_threshold or c_multiplier is required"),
                        };
                        out.push(Combination {
                            index: out.len(),
                            n_particles: n,
                            c_multiplier: mult,
                            c_threshold,
                            gain,
                            use_bridge,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Seed of replicate `r` of combination `combo`.
    pub fn run_seed(&self, combo: usize, r: usize) -> u64 {
        mix_seed(self.seed, combo as u64, r as u64)
    }

    pub fn arms_config(&self, combo: &Combination, l_max: f64, seed: u64) -> ArmsConfig {
        let a = &self.arms;
        ArmsConfig {
            ams: AmsParams {
                n_particles: combo.n_particles,
                kill_fraction: a.kill_fraction,
                l_max,
                c_threshold: combo.c_threshold,
                t_mutations: a.t_mutations,
                checks: a.checks,
            },
            kernel: a.kernel,
            snapshot_budget: a.snapshot_budget,
            j0: a.j0,
            tau0: a.tau0,
            epsilon_stop: a.epsilon_stop,
            use_bridge: combo.use_bridge,
            gain: combo.gain,
            seed,
            history_capacity: a.history_capacity,
        }
    }
}

fn or_base<T: Copy>(list: &[T], base: T) -> Vec<T> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}

fn m_of(n: usize, theta: f64) -> usize {
    (theta * n as f64).floor() as usize
}

/// Problems found by [`validate_config`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks every sweep combination without running anything.
pub fn validate_config(spec: &ExperimentSpec) -> Validation {
    let mut v = Validation::default();
    if spec.replicates == 0 {
        v.errors.push("replicates must be >= 1".into());
    }
    if let Some(p) = spec.p_star {
        if !(p > 0.0 && p <= 1.0) {
            v.errors.push(format!("p_star = {p} is not a probability"));
        }
    }
    let a = &spec.arms;
    if a.c_threshold.is_some() && a.c_multiplier.is_some() {
        v.errors
            .push("set either c_threshold or c_multiplier, not both".into());
    }
    if !(a.kill_fraction > 0.0 && a.kill_fraction < 1.0) {
        v.errors.push(format!(
            "kill_fraction = {} must lie in (0, 1)",
            a.kill_fraction
        ));
        return v;
    }
    let combos = match spec.combinations() {
        Ok(c) => c,
        Err(e) => {
            v.errors.push(e.to_string());
            return v;
        }
    };
    for combo in &combos {
        let cfg = spec.arms_config(combo, f64::INFINITY, 0);
        let tag = combo.label();
        if let Err(e) = cfg.validate() {
            v.errors.push(format!("{tag}: {e}"));
            continue;
        }
        for w in cfg.warnings() {
            v.warnings.push(format!("{tag}: {w}"));
        }
    }
    v.warnings.dedup();
    v
}
