//! TOML experiment configuration with line-numbered diagnostics.
//!
//! ```toml
//! model = "single-queue"        # or an inline [gsse] table
//! reward = "mean-queue"         # "weighted" with `weights`, "alpha-moment" with `alpha`
//! truncation = 40
//! truncation_cap = 80
//! t_grid = [16, 64, 256, 1024]
//! init = "maxweight"
//! seed = 7
//! z = -0.99
//!
//! [ledger]                      # overrides by entry name
//! c_2 = 0.0
//!
//! [gsse]
//! arrivals = [[[0, 0.7], [1, 0.3]]]          # per class: (value, probability) pairs
//! services = [[[[0, 0.4], [1, 0.6]]]]       # per option, per class
//! option_names = ["only"]
//! ```

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::gsse::{Distribution, GsseModel, GsseParams, Preset, RewardKind};
use crate::verify::{InitKind, VerificationConfig, DEFAULT_INIT_MIX};

pub const DEFAULT_T_GRID: [usize; 3] = [16, 64, 256];
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_DRIFT_RADIUS: u32 = 30;
pub const DEFAULT_REGRET_TRIALS: usize = 1000;
/// Truncation for inline models without one.
pub const DEFAULT_INLINE_TRUNCATION: u32 = 20;
pub const OUT_DIR_ENV: &str = "NPG_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "npg-out";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<Spanned<String>>,
    reward: Option<Spanned<String>>,
    weights: Option<Spanned<Vec<f64>>>,
    alpha: Option<Spanned<f64>>,
    truncation: Option<Spanned<i64>>,
    truncation_cap: Option<Spanned<i64>>,
    t_grid: Option<Spanned<Vec<i64>>>,
    init: Option<Spanned<String>>,
    init_mix: Option<Spanned<f64>>,
    z: Option<f64>,
    exact_optimum_in_ledger: Option<bool>,
    seed: Option<Spanned<i64>>,
    out: Option<String>,
    drift_radius: Option<Spanned<i64>>,
    regret_trials: Option<Spanned<i64>>,
    ledger: Option<Spanned<BTreeMap<String, f64>>>,
    gsse: Option<Spanned<RawGsse>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGsse {
    arrivals: Vec<Vec<(u32, f64)>>,
    services: Vec<Vec<Vec<(u32, f64)>>>,
    #[serde(default)]
    option_names: Vec<String>,
}

/// Settings from a file and command-line flags before resolution. Flags are
/// applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub model: Option<ModelSource>,
    pub reward: Option<RewardKind>,
    pub truncation: Option<u32>,
    pub truncation_cap: Option<u32>,
    pub t_grid: Option<Vec<usize>>,
    pub init: Option<InitKind>,
    pub init_mix: Option<f64>,
    pub z: Option<f64>,
    pub exact_optimum_in_ledger: bool,
    pub overrides: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub drift_radius: Option<u32>,
    pub regret_trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Preset(Preset),
    Inline(Box<GsseModel>),
}

/// Flag values; `None` leaves the file value in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverrides {
    pub model: Option<String>,
    pub t_grid: Option<Vec<usize>>,
    pub truncation: Option<u32>,
    pub truncation_cap: Option<u32>,
    pub init: Option<String>,
    pub alpha: Option<f64>,
    pub z: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

struct Diag<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Diag<'_> {
    fn at(&self, span: Range<usize>, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{}:{}: {msg}", self.origin, line_of(self.text, span)))
    }
}

fn positive_u32(d: &Diag, v: &Spanned<i64>, what: &str) -> Result<u32> {
    let x = *v.get_ref();
    if x < 1 || x > u32::MAX as i64 {
        return Err(d.at(v.span(), format!("{what} must be a positive integer, got {x}")));
    }
    Ok(x as u32)
}

fn reward_from(name: &str, weights: Option<Vec<f64>>, alpha: Option<f64>) -> std::result::Result<RewardKind, String> {
    match name {
        "mean-queue" => Ok(RewardKind::MeanQueue),
        "weighted" => weights
            .map(|weights| RewardKind::Weighted { weights })
            .ok_or_else(|| "weighted reward needs `weights`".to_string()),
        "alpha-moment" => alpha
            .map(|alpha| RewardKind::AlphaMoment { alpha })
            .ok_or_else(|| "alpha-moment reward needs `alpha`".to_string()),
        other => Err(format!("unknown reward '{other}' (expected mean-queue, weighted or alpha-moment)")),
    }
}

fn distribution(d: &Diag, span: Range<usize>, pairs: &[(u32, f64)], what: &str) -> Result<Distribution> {
    Distribution::new(pairs.to_vec()).map_err(|e| d.at(span, format!("{what}: {e}")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses TOML text; `origin` prefixes diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let d = Diag { text, origin };
        let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => d.at(span, e.message()),
            None => Error::Config(format!("{origin}: {}", e.message())),
        })?;
        let mut cfg = ExperimentConfig::default();

        let reward = match &raw.reward {
            Some(r) => Some(
                reward_from(r.get_ref(), raw.weights.as_ref().map(|w| w.get_ref().clone()), raw.alpha.as_ref().map(|a| *a.get_ref()))
                    .map_err(|e| d.at(r.span(), e))?,
            ),
            None => match (&raw.alpha, &raw.weights) {
                (Some(a), None) => Some(RewardKind::AlphaMoment { alpha: *a.get_ref() }),
                (None, Some(w)) => Some(RewardKind::Weighted { weights: w.get_ref().clone() }),
                (Some(a), Some(_)) => return Err(d.at(a.span(), "give either `alpha` or `weights`, not both")),
                (None, None) => None,
            },
        };
        if let Some(RewardKind::AlphaMoment { alpha }) = &reward {
            if !(*alpha >= 1.0) {
                let span = raw.alpha.as_ref().map_or(0..0, |a| a.span());
                return Err(d.at(span, format!("alpha must be at least 1, got {alpha}")));
            }
        }
        cfg.reward = reward;

        match (&raw.model, &raw.gsse) {
            (Some(m), Some(_)) => return Err(d.at(m.span(), "give either `model` or a [gsse] table, not both")),
            (Some(m), None) => {
                cfg.model = Some(ModelSource::Preset(Preset::from_name(m.get_ref()).map_err(|e| d.at(m.span(), e))?));
            }
            (None, Some(g)) => {
                let span = g.span();
                let raw_g = g.get_ref();
                let arrivals = raw_g
                    .arrivals
                    .iter()
                    .enumerate()
                    .map(|(i, p)| distribution(&d, span.clone(), p, &format!("arrivals of class {i}")))
                    .collect::<Result<Vec<_>>>()?;
                let services = raw_g
                    .services
                    .iter()
                    .enumerate()
                    .map(|(j, option)| {
                        option
                            .iter()
                            .enumerate()
                            .map(|(i, p)| distribution(&d, span.clone(), p, &format!("service of option {j}, class {i}")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let params = GsseParams {
                    arrivals,
                    services,
                    option_names: raw_g.option_names.clone(),
                    reward: cfg.reward.clone().unwrap_or(RewardKind::MeanQueue),
                };
                let model = GsseModel::new(params).map_err(|e| d.at(span, e))?;
                cfg.model = Some(ModelSource::Inline(Box::new(model)));
            }
            (None, None) => {}
        }

        if let Some(t) = &raw.truncation {
            cfg.truncation = Some(positive_u32(&d, t, "truncation")?);
        }
        if let Some(t) = &raw.truncation_cap {
            cfg.truncation_cap = Some(positive_u32(&d, t, "truncation_cap")?);
        }
        if let Some(g) = &raw.t_grid {
            let grid = g.get_ref();
            if grid.is_empty() {
                return Err(d.at(g.span(), "t_grid must not be empty"));
            }
            if grid.iter().any(|&t| t < 1) || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(d.at(g.span(), "t_grid must hold positive, strictly increasing horizons"));
            }
            cfg.t_grid = Some(grid.iter().map(|&t| t as usize).collect());
        }
        if let Some(i) = &raw.init {
            cfg.init = Some(InitKind::parse(i.get_ref()).map_err(|e| d.at(i.span(), e))?);
        }
        if let Some(m) = &raw.init_mix {
            let v = *m.get_ref();
            if !(v > 0.0 && v <= 1.0) {
                return Err(d.at(m.span(), format!("init_mix must lie in (0, 1], got {v}")));
            }
            cfg.init_mix = Some(v);
        }
        cfg.z = raw.z;
        cfg.exact_optimum_in_ledger = raw.exact_optimum_in_ledger.unwrap_or(false);
        if let Some(s) = &raw.seed {
            let v = *s.get_ref();
            if v < 0 {
                return Err(d.at(s.span(), "seed must be nonnegative"));
            }
            cfg.seed = Some(v as u64);
        }
        cfg.out = raw.out.map(PathBuf::from);
        if let Some(r) = &raw.drift_radius {
            cfg.drift_radius = Some(positive_u32(&d, r, "drift_radius")?);
        }
        if let Some(r) = &raw.regret_trials {
            let v = *r.get_ref();
            if v < 0 {
                return Err(d.at(r.span(), "regret_trials must be nonnegative"));
            }
            cfg.regret_trials = Some(v as usize);
        }
        if let Some(l) = &raw.ledger {
            if let Some(bad) = l.get_ref().keys().find(|k| !crate::npg::ledger::NAMES.contains(&k.as_str())) {
                return Err(d.at(l.span(), format!("unknown ledger entry '{bad}'")));
            }
            cfg.overrides = l.get_ref().clone();
        }
        Ok(cfg)
    }

    pub fn apply_flags(&mut self, flags: &FlagOverrides) -> Result<()> {
        if let Some(m) = &flags.model {
            self.model = Some(ModelSource::Preset(Preset::from_name(m).map_err(|e| Error::Config(e.to_string()))?));
        }
        if let Some(a) = flags.alpha {
            if !(a >= 1.0) {
                return Err(Error::Config(format!("--alpha must be at least 1, got {a}")));
            }
            self.reward = Some(RewardKind::AlphaMoment { alpha: a });
        }
        if let Some(g) = &flags.t_grid {
            if g.is_empty() || g[0] == 0 || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("--T must list positive, strictly increasing horizons".into()));
            }
            self.t_grid = Some(g.clone());
        }
        if let Some(t) = flags.truncation {
            if t == 0 {
                return Err(Error::Config("--truncation must be at least 1".into()));
            }
            self.truncation = Some(t);
        }
        if let Some(t) = flags.truncation_cap {
            self.truncation_cap = Some(t);
        }
        if let Some(i) = &flags.init {
            self.init = Some(InitKind::parse(i).map_err(|e| Error::Config(e.to_string()))?);
        }
        if flags.z.is_some() {
            self.z = flags.z;
        }
        if flags.seed.is_some() {
            self.seed = flags.seed;
        }
        if flags.out.is_some() {
            self.out = flags.out.clone();
        }
        Ok(())
    }

    /// Output directory: flag or file value, then the environment, then the default.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Fills defaults and builds the model.
    pub fn resolve(&self) -> Result<VerificationConfig> {
        let source = self.model.as_ref().ok_or_else(|| Error::Config("no model given (use --model or a config file)".into()))?;
        let reward = self.reward.clone().unwrap_or(RewardKind::MeanQueue);
        let (name, model, default_truncation) = match source {
            ModelSource::Preset(p) => (p.name().to_string(), p.build(reward)?, p.default_truncation()),
            ModelSource::Inline(m) => ("inline".to_string(), m.with_reward(reward)?, DEFAULT_INLINE_TRUNCATION),
        };
        let truncation = self.truncation.unwrap_or(default_truncation);
        let cfg = VerificationConfig {
            model_name: name,
            model,
            truncation,
            truncation_cap: self.truncation_cap.unwrap_or(truncation),
            t_grid: self.t_grid.clone().unwrap_or_else(|| DEFAULT_T_GRID.to_vec()),
            init: self.init.clone().unwrap_or(InitKind::Maxweight),
            init_mix: self.init_mix.unwrap_or(DEFAULT_INIT_MIX),
            z: self.z,
            exact_optimum_in_ledger: self.exact_optimum_in_ledger,
            overrides: self.overrides.clone(),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            drift_radius: self.drift_radius.unwrap_or(DEFAULT_DRIFT_RADIUS),
            regret_trials: self.regret_trials.unwrap_or(DEFAULT_REGRET_TRIALS),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_preset_config() {
        let cfg = ExperimentConfig::parse(
            "model = \"nsystem\"\nt_grid = [4, 8]\ntruncation = 10\ninit = \"uniform\"\n[ledger]\nc_2 = 1.5\n",
            "t.toml",
        )
        .unwrap();
        assert_eq!(cfg.model, Some(ModelSource::Preset(Preset::Nsystem)));
        assert_eq!(cfg.overrides.get("c_2"), Some(&1.5));
        let v = cfg.resolve().unwrap();
        assert_eq!((v.truncation, v.truncation_cap), (10, 10));
        assert_eq!(v.t_grid, vec![4, 8]);
        assert_eq!(v.init, InitKind::Uniform);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = ExperimentConfig::parse("model = \"single-queue\"\n\nt_grid = [8, 4]\n", "c.toml").unwrap_err();
        assert!(err.to_string().contains("c.toml:3:"), "{err}");
        let err = ExperimentConfig::parse("model = \"single-queue\"\ncolour = 1\n", "c.toml").unwrap_err();
        assert!(err.to_string().contains("c.toml:2:"), "{err}");
        let err = ExperimentConfig::parse("model = \"nope\"\n", "c.toml").unwrap_err();
        assert!(err.to_string().contains("c.toml:1:"), "{err}");
        let err = ExperimentConfig::parse("\n[ledger]\nc_9 = 1.0\n", "c.toml").unwrap_err();
        assert!(err.to_string().contains("unknown ledger entry"), "{err}");
    }

    #[test]
    fn inline_model_and_distribution_sum() {
        let good = "[gsse]\narrivals = [[[0, 0.7], [1, 0.3]]]\nservices = [[[[0, 0.4], [1, 0.6]]]]\n";
        let cfg = ExperimentConfig::parse(good, "g.toml").unwrap();
        let v = cfg.resolve().unwrap();
        assert_eq!(v.model.class_count(), 1);
        assert_eq!(v.truncation, DEFAULT_INLINE_TRUNCATION);
        let bad = "\n[gsse]\narrivals = [[[0, 0.7], [1, 0.31]]]\nservices = [[[[0, 0.4], [1, 0.6]]]]\n";
        let err = ExperimentConfig::parse(bad, "g.toml").unwrap_err();
        assert!(err.to_string().contains("g.toml:2:"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = ExperimentConfig::parse("model = \"nsystem\"\nseed = 3\nalpha = 2.0\n", "f.toml").unwrap();
        cfg.apply_flags(&FlagOverrides { model: Some("single-queue".into()), seed: Some(9), ..Default::default() }).unwrap();
        let v = cfg.resolve().unwrap();
        assert_eq!(v.model_name, "single-queue");
        assert_eq!(v.seed, 9);
        assert_eq!(v.model.reward_kind(), &RewardKind::AlphaMoment { alpha: 2.0 });
        assert!(ExperimentConfig::parse("alpha = 0.5\n", "f.toml").is_err());
    }

    #[test]
    fn missing_model_is_an_error() {
        assert!(matches!(ExperimentConfig::default().resolve(), Err(Error::Config(_))));
    }
}
