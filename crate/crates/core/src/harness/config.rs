//! Strict experiment configuration.
//!
//! A config is a flat TOML document. Every key is deserialized on its own so
//! errors carry the offending key; unknown keys, keys that the chosen
//! subcommand does not read, and out-of-range values are all rejected before
//! any computation starts.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{LabError, Result};
use crate::spot_gap::SmoothingAnchor;

use super::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Random,
    Gap,
    NoisyGap,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::Gap => "gap",
            InitMode::NoisyGap => "noisy-gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    Adam,
    Gd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionName {
    DirectionB,
    GaussianA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    CalibSize,
    Composition,
    Noise,
}

/// Out-of-domain source for the composition ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodKind {
    /// Same `μ_v`, gap orthogonal to the in-domain gap, same norm.
    Orthogonal,
    /// Same `μ_v` and gap, noise level `ood_sigma`.
    Wider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum AnchorName {
    Visual,
    Textual,
    Joint,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    pub d: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub sigma: Option<f64>,
    pub gap_norm: Option<f64>,
    pub mu_norm: Option<f64>,
    pub n_samples: Option<usize>,
    pub n_steps: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub rank: Option<usize>,
    pub alpha: Option<f64>,
    pub k_neighbors: Option<usize>,
    pub alpha_sem: Option<f64>,
    pub alpha_geom: Option<f64>,
    pub anchor: Option<SmoothingAnchor>,
    pub smoothing: Option<bool>,
    pub safety_margin: Option<usize>,
    pub top_k_layers: Option<usize>,
    pub eps_list: Option<Vec<f64>>,
    pub calib_sizes: Option<Vec<usize>>,
    pub calib_size: Option<usize>,
    pub trials: Option<usize>,
    pub init: Option<InitMode>,
    pub init_eps: Option<f64>,
    pub random_convention: Option<ConventionName>,
    pub optimizer: Option<OptimizerName>,
    pub gaps_file: Option<PathBuf>,
    pub gap_layer: Option<usize>,
    pub num_layers: Option<usize>,
    pub planted_layers: Option<Vec<usize>>,
    pub high_gap_norm: Option<f64>,
    pub base_gap_norm: Option<f64>,
    pub shuffle_fraction: Option<f64>,
    pub bins: Option<usize>,
    pub mode: Option<AblationMode>,
    pub mix_list: Option<Vec<f64>>,
    pub ood: Option<OodKind>,
    pub ood_sigma: Option<f64>,
}

const COMMON_KEYS: &[&str] = &["experiment", "seed", "output_dir"];

/// Keys each subcommand reads besides the common ones.
pub fn keys_for(cmd: Command) -> &'static [&'static str] {
    match cmd {
        Command::Suppression => &["dims", "n_samples"],
        Command::Concentration => &["dims", "n_samples", "eps_list", "bins"],
        Command::Spectrum => &["d", "sigma", "gap_norm", "mu_norm", "n_samples"],
        Command::Cone => &["d", "sigma", "gap_norm", "mu_norm", "n_samples", "bins"],
        Command::Calibrate => &[
            "d", "sigma", "n_samples", "num_layers", "planted_layers", "high_gap_norm",
            "base_gap_norm", "k_neighbors", "alpha_sem", "alpha_geom", "anchor", "smoothing",
            "safety_margin", "top_k_layers", "shuffle_fraction",
        ],
        Command::Train => &[
            "seeds", "d", "sigma", "gap_norm", "mu_norm", "n_samples", "n_steps", "lr",
            "batch_size", "rank", "alpha", "init", "init_eps", "random_convention", "optimizer",
            "gaps_file", "gap_layer", "calib_size",
        ],
        Command::Ablate => &[
            "mode", "d", "sigma", "gap_norm", "mu_norm", "n_samples", "n_steps", "lr",
            "batch_size", "rank", "alpha", "optimizer", "eps_list", "calib_sizes", "trials",
            "mix_list", "ood", "ood_sigma",
        ],
    }
}

fn take<T: DeserializeOwned>(key: &str, value: toml::Value) -> Result<T> {
    value.try_into().map_err(|e: toml::de::Error| LabError::config(key, e.message().trim().to_string()))
}

fn check(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(LabError::config(key, message))
    }
}

fn finite_at_least(key: &str, v: f64, lo: f64) -> Result<()> {
    check(v.is_finite() && v >= lo, key, &format!("must be finite and >= {lo}"))
}

fn positive(key: &str, v: f64) -> Result<()> {
    check(v.is_finite() && v > 0.0, key, "must be finite and > 0")
}

fn count_at_least(key: &str, v: usize, lo: usize) -> Result<()> {
    check(v >= lo, key, &format!("must be >= {lo}"))
}

fn each<T: Copy>(key: &str, xs: &[T], f: impl Fn(&str, T) -> Result<()>) -> Result<()> {
    check(!xs.is_empty(), key, "list must be nonempty")?;
    for (i, &x) in xs.iter().enumerate() {
        f(&format!("{key}[{i}]"), x)?;
    }
    Ok(())
}

/// Largest dimension accepted anywhere, to keep accidental inputs bounded.
pub const MAX_DIM: usize = 1 << 16;

impl ExperimentConfig {
    pub fn parse(text: &str, cmd: Command) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".into());
            LabError::config(at, e.message().trim().to_string())
        })?;
        let allowed = keys_for(cmd);
        let mut c = ExperimentConfig::default();
        for (key, value) in table {
            let k = key.as_str();
            if !COMMON_KEYS.contains(&k) && !allowed.contains(&k) {
                let known = COMMON_KEYS.iter().chain(keys_for_all()).any(|x| *x == k);
                let msg = if known {
                    format!("not used by `{}`", cmd.name())
                } else {
                    "unknown key".to_string()
                };
                return Err(LabError::config(k, msg));
            }
            match k {
                "experiment" => {
                    let name: String = take(k, value)?;
                    check(name == cmd.name(), k, &format!("names `{name}` but the subcommand is `{}`", cmd.name()))?;
                    c.experiment = Some(name);
                }
                "seed" => c.seed = Some(take(k, value)?),
                "seeds" => {
                    let s: Vec<u64> = take(k, value)?;
                    check(!s.is_empty(), k, "list must be nonempty")?;
                    c.seeds = Some(s);
                }
                "output_dir" => c.output_dir = Some(take::<String>(k, value)?.into()),
                "d" => {
                    let d: usize = take(k, value)?;
                    check((2..=MAX_DIM).contains(&d), k, &format!("must lie in [2, {MAX_DIM}]"))?;
                    c.d = Some(d);
                }
                "dims" => {
                    let v: Vec<usize> = take(k, value)?;
                    each(k, &v, |kk, d| check((2..=MAX_DIM).contains(&d), kk, &format!("must lie in [2, {MAX_DIM}]")))?;
                    c.dims = Some(v);
                }
                "sigma" => {
                    let v: f64 = take(k, value)?;
                    finite_at_least(k, v, 0.0)?;
                    c.sigma = Some(v);
                }
                "gap_norm" => {
                    let v: f64 = take(k, value)?;
                    positive(k, v)?;
                    c.gap_norm = Some(v);
                }
                "mu_norm" => {
                    let v: f64 = take(k, value)?;
                    finite_at_least(k, v, 0.0)?;
                    c.mu_norm = Some(v);
                }
                "n_samples" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.n_samples = Some(v);
                }
                "n_steps" => c.n_steps = Some(take(k, value)?),
                "lr" => {
                    let v: f64 = take(k, value)?;
                    positive(k, v)?;
                    c.lr = Some(v);
                }
                "batch_size" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.batch_size = Some(v);
                }
                "rank" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.rank = Some(v);
                }
                "alpha" => {
                    let v: f64 = take(k, value)?;
                    positive(k, v)?;
                    c.alpha = Some(v);
                }
                "k_neighbors" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.k_neighbors = Some(v);
                }
                "alpha_sem" => {
                    let v: f64 = take(k, value)?;
                    finite_at_least(k, v, 0.0)?;
                    c.alpha_sem = Some(v);
                }
                "alpha_geom" => {
                    let v: f64 = take(k, value)?;
                    finite_at_least(k, v, 0.0)?;
                    c.alpha_geom = Some(v);
                }
                "anchor" => {
                    c.anchor = Some(match take::<AnchorName>(k, value)? {
                        AnchorName::Visual => SmoothingAnchor::Visual,
                        AnchorName::Textual => SmoothingAnchor::Textual,
                        AnchorName::Joint => SmoothingAnchor::Joint,
                    })
                }
                "smoothing" => c.smoothing = Some(take(k, value)?),
                "safety_margin" => c.safety_margin = Some(take(k, value)?),
                "top_k_layers" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.top_k_layers = Some(v);
                }
                "eps_list" => {
                    let v: Vec<f64> = take(k, value)?;
                    each(k, &v, |kk, x| finite_at_least(kk, x, 0.0))?;
                    c.eps_list = Some(v);
                }
                "calib_sizes" => {
                    let v: Vec<usize> = take(k, value)?;
                    each(k, &v, |kk, x| count_at_least(kk, x, 1))?;
                    c.calib_sizes = Some(v);
                }
                "calib_size" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.calib_size = Some(v);
                }
                "trials" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.trials = Some(v);
                }
                "init" => c.init = Some(take(k, value)?),
                "init_eps" => {
                    let v: f64 = take(k, value)?;
                    finite_at_least(k, v, 0.0)?;
                    c.init_eps = Some(v);
                }
                "random_convention" => c.random_convention = Some(take(k, value)?),
                "optimizer" => c.optimizer = Some(take(k, value)?),
                "gaps_file" => c.gaps_file = Some(take::<String>(k, value)?.into()),
                "gap_layer" => c.gap_layer = Some(take(k, value)?),
                "num_layers" => {
                    let v: usize = take(k, value)?;
                    count_at_least(k, v, 1)?;
                    c.num_layers = Some(v);
                }
                "planted_layers" => c.planted_layers = Some(take(k, value)?),
                "high_gap_norm" => {
                    let v: f64 = take(k, value)?;
                    positive(k, v)?;
                    c.high_gap_norm = Some(v);
                }
                "base_gap_norm" => {
                    let v: f64 = take(k, value)?;
                    positive(k, v)?;
                    c.base_gap_norm = Some(v);
                }
                "shuffle_fraction" => {
                    let v: f64 = take(k, value)?;
                    check((0.0..=1.0).contains(&v), k, "must lie in [0, 1]")?;
                    c.shuffle_fraction = Some(v);
                }
                "bins" => {
                    let v: usize = take(k, value)?;
                    check((1..=10_000).contains(&v), k, "must lie in [1, 10000]")?;
                    c.bins = Some(v);
                }
                "mode" => c.mode = Some(take(k, value)?),
                "mix_list" => {
                    let v: Vec<f64> = take(k, value)?;
                    each(k, &v, |kk, x| check((0.0..=1.0).contains(&x), kk, "must lie in [0, 1]"))?;
                    c.mix_list = Some(v);
                }
                "ood" => c.ood = Some(take(k, value)?),
                "ood_sigma" => {
                    let v: f64 = take(k, value)?;
                    finite_at_least(k, v, 0.0)?;
                    c.ood_sigma = Some(v);
                }
                _ => unreachable!("key lists and match arms agree"),
            }
        }
        c.cross_validate(cmd)?;
        Ok(c)
    }

    pub fn load(path: &Path, cmd: Command) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, cmd)
    }

    fn cross_validate(&self, cmd: Command) -> Result<()> {
        if cmd == Command::Suppression {
            if let Some(dims) = &self.dims {
                check(dims.len() >= 2, "dims", "a slope needs at least two dims")?;
            }
            if let Some(n) = self.n_samples {
                count_at_least("n_samples", n, 100)?;
            }
        }
        if cmd == Command::Calibrate {
            let layers = self.num_layers.unwrap_or(crate::calibration::DEFAULT_NUM_LAYERS);
            if let Some(p) = &self.planted_layers {
                each("planted_layers", p, |kk, l| check(l < layers, kk, "must be < num_layers"))?;
            }
            let margin = self.safety_margin.unwrap_or(super::DEFAULT_SAFETY_MARGIN);
            let top = self.top_k_layers.unwrap_or(super::DEFAULT_TOP_K_LAYERS);
            check(margin < layers, "safety_margin", "must be < num_layers")?;
            check(top <= layers - margin, "top_k_layers", "must be <= num_layers - safety_margin")?;
            let n = self.n_samples.unwrap_or(crate::calibration::DEFAULT_CALIBRATION_SIZE);
            if self.smoothing.unwrap_or(true) {
                count_at_least("n_samples", n, 2)?;
            }
            let sem = self.alpha_sem.unwrap_or(1.0);
            let geom = self.alpha_geom.unwrap_or(1.0);
            check(sem > 0.0 || geom > 0.0, "alpha_sem", "alpha_sem and alpha_geom cannot both be 0")?;
        }
        if matches!(cmd, Command::Train | Command::Ablate) {
            let d = self.d.unwrap_or(super::DEFAULT_TRAIN_DIM);
            let r = self.rank.unwrap_or(1);
            check(r <= d, "rank", "must be <= d")?;
        }
        if cmd == Command::Train {
            if self.init_eps.is_some() && self.init != Some(InitMode::NoisyGap) {
                return Err(LabError::config("init_eps", "only used with init = \"noisy-gap\""));
            }
            if self.init == Some(InitMode::Random) && (self.gaps_file.is_some() || self.gap_layer.is_some()) {
                return Err(LabError::config("gaps_file", "not used with init = \"random\""));
            }
            if self.random_convention.is_some() && self.init.unwrap_or(InitMode::Gap) != InitMode::Random {
                return Err(LabError::config("random_convention", "only used with init = \"random\""));
            }
        }
        if cmd == Command::Ablate {
            let mode = self
                .mode
                .ok_or_else(|| LabError::config("mode", "required: calib-size, composition or noise"))?;
            let unused: &[(&str, bool)] = match mode {
                AblationMode::CalibSize => &[
                    ("eps_list", self.eps_list.is_some()),
                    ("mix_list", self.mix_list.is_some()),
                    ("ood", self.ood.is_some()),
                    ("ood_sigma", self.ood_sigma.is_some()),
                    ("n_steps", self.n_steps.is_some()),
                ],
                AblationMode::Composition => &[
                    ("eps_list", self.eps_list.is_some()),
                    ("calib_sizes", self.calib_sizes.is_some()),
                    ("trials", self.trials.is_some()),
                    ("n_steps", self.n_steps.is_some()),
                ],
                AblationMode::Noise => &[
                    ("calib_sizes", self.calib_sizes.is_some()),
                    ("mix_list", self.mix_list.is_some()),
                    ("ood", self.ood.is_some()),
                    ("ood_sigma", self.ood_sigma.is_some()),
                ],
            };
            if let Some((key, _)) = unused.iter().find(|(_, set)| *set) {
                return Err(LabError::config(*key, "not used by this ablation mode"));
            }
            if self.ood_sigma.is_some() && self.ood != Some(OodKind::Wider) {
                return Err(LabError::config("ood_sigma", "only used with ood = \"wider\""));
            }
        }
        Ok(())
    }
}

fn keys_for_all() -> impl Iterator<Item = &'static &'static str> {
    Command::ALL.iter().flat_map(|&c| keys_for(c).iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: LabError) -> String {
        match err {
            LabError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_config_is_valid_everywhere_but_ablate() {
        for &cmd in Command::ALL {
            let r = ExperimentConfig::parse("", cmd);
            assert_eq!(r.is_ok(), cmd != Command::Ablate, "{cmd:?}");
        }
    }

    #[test]
    fn parses_typed_values() {
        let c = ExperimentConfig::parse(
            "experiment = \"train\"\nseed = 7\nseeds = [1, 2]\nlr = 1\ninit = \"noisy-gap\"\ninit_eps = 0.2\noptimizer = \"gd\"\n",
            Command::Train,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.lr, Some(1.0));
        assert_eq!(c.init, Some(InitMode::NoisyGap));
        assert_eq!(c.optimizer, Some(OptimizerName::Gd));
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("bogus = 1", Command::Suppression, "bogus"),
            ("d = 10", Command::Suppression, "d"),
            ("dims = [64, 1]", Command::Suppression, "dims[1]"),
            ("dims = [64]", Command::Suppression, "dims"),
            ("sigma = -0.1", Command::Spectrum, "sigma"),
            ("lr = \"fast\"", Command::Train, "lr"),
            ("init = \"zeros\"", Command::Train, "init"),
            ("n_samples = -3", Command::Cone, "n_samples"),
            ("experiment = \"cone\"", Command::Train, "experiment"),
            ("planted_layers = [3, 9]", Command::Calibrate, "planted_layers[1]"),
            ("top_k_layers = 7", Command::Calibrate, "top_k_layers"),
            ("mode = \"noise\"\nmix_list = [0.5]", Command::Ablate, "mix_list"),
            ("eps_list = [0.1]", Command::Ablate, "mode"),
            ("init_eps = 0.3", Command::Train, "init_eps"),
            ("d = 4\nrank = 5", Command::Train, "rank"),
        ];
        for (text, cmd, key) in cases {
            let err = ExperimentConfig::parse(text, cmd).unwrap_err();
            assert_eq!(err.exit_code(), 2);
            assert_eq!(key_of(err), key, "{text}");
        }
    }

    #[test]
    fn syntax_errors_report_a_line() {
        let err = ExperimentConfig::parse("seed = 1\nd = = 3\n", Command::Spectrum).unwrap_err();
        assert_eq!(key_of(err), "line 2");
    }
}
