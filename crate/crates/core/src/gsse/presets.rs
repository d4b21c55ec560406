//! Named model families with default parameters.

use serde::{Deserialize, Serialize};

use super::model::{Distribution, GsseModel, GsseParams, RewardKind};
use crate::error::{Error, Result};

/// Service probability given to a class an option does not target. Every
/// option must be able to complete every class with positive probability.
pub const LEAK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SingleQueue,
    Nsystem,
    Switch2x2,
    MultiserverJob,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::SingleQueue, Preset::Nsystem, Preset::Switch2x2, Preset::MultiserverJob];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SingleQueue => "single-queue",
            Preset::Nsystem => "nsystem",
            Preset::Switch2x2 => "switch2x2",
            Preset::MultiserverJob => "multiserver-job",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model preset '{name}'")))
    }

    /// Per-class buffer at which MaxWeight-initialized runs put less than
    /// `1e-8` stationary mass on truncation-modified states.
    pub fn default_truncation(self) -> u32 {
        match self {
            Preset::SingleQueue => 40,
            Preset::Nsystem => 30,
            Preset::Switch2x2 => 5,
            Preset::MultiserverJob => 24,
        }
    }

    pub fn build(self, reward: RewardKind) -> Result<GsseModel> {
        match self {
            Preset::SingleQueue => single_queue(0.3, 0.6, 0.2, reward),
            Preset::Nsystem => nsystem(0.4, 0.3, 0.6, 0.5, reward),
            Preset::Switch2x2 => switch_2x2(0.05, 0.9, reward),
            Preset::MultiserverJob => multiserver_job(0.3, 0.2, 0.5, 0.6, reward),
        }
    }
}

fn bern(p: f64) -> Result<Distribution> {
    Distribution::bernoulli(p)
}

/// One queue, Bernoulli arrivals, a fast and a slow Bernoulli server.
pub fn single_queue(arrival: f64, fast: f64, slow: f64, reward: RewardKind) -> Result<GsseModel> {
    GsseModel::new(GsseParams {
        arrivals: vec![bern(arrival)?],
        services: vec![vec![bern(fast)?], vec![bern(slow)?]],
        option_names: vec!["fast".into(), "slow".into()],
        reward,
    })
}

/// Two classes and two servers. The dedicated server only handles class 0;
/// the flexible server is assigned to class 0 (option 0) or class 1 (option 1).
pub fn nsystem(arrival0: f64, arrival1: f64, dedicated: f64, flexible: f64, reward: RewardKind) -> Result<GsseModel> {
    // class 0 completes if either server assigned to it completes
    let both = 1.0 - (1.0 - dedicated) * (1.0 - flexible);
    GsseModel::new(GsseParams {
        arrivals: vec![bern(arrival0)?, bern(arrival1)?],
        services: vec![vec![bern(both)?, bern(LEAK)?], vec![bern(dedicated)?, bern(flexible)?]],
        option_names: vec!["flex-to-0".into(), "flex-to-1".into()],
        reward,
    })
}

/// 2x2 input-queued switch. Class `2 * input + output` is the queue of
/// packets from `input` to `output`; the options are the two perfect matchings.
pub fn switch_2x2(arrival: f64, service: f64, reward: RewardKind) -> Result<GsseModel> {
    let on = bern(service)?;
    let off = bern(LEAK)?;
    GsseModel::new(GsseParams {
        arrivals: vec![bern(arrival)?; 4],
        services: vec![
            vec![on.clone(), off.clone(), off.clone(), on.clone()],
            vec![off.clone(), on.clone(), on, off],
        ],
        option_names: vec!["identity".into(), "cross".into()],
        reward,
    })
}

/// Two servers; class 0 jobs need one server, class 1 jobs need both. The
/// options are the packings: two class-0 jobs, or one class-1 job.
pub fn multiserver_job(arrival0: f64, arrival1: f64, small: f64, large: f64, reward: RewardKind) -> Result<GsseModel> {
    let two_small = Distribution::new(vec![
        (0, (1.0 - small) * (1.0 - small)),
        (1, 2.0 * small * (1.0 - small)),
        (2, small * small),
    ])?;
    GsseModel::new(GsseParams {
        arrivals: vec![bern(arrival0)?, bern(arrival1)?],
        services: vec![vec![two_small, bern(LEAK)?], vec![bern(LEAK)?, bern(large)?]],
        option_names: vec!["two-small".into(), "one-large".into()],
        reward,
    })
}
