//! Generalized switch with a static environment: model, MaxWeight policies,
//! capacity margin, drift certificates and assumption checks.

pub mod assumptions;
pub mod capacity;
pub mod drift;
pub mod maxweight;
pub mod model;
pub mod presets;

pub use assumptions::{fit_initial_policy_constants, verify_assumptions, AssumptionReport, InitialFit};
pub use capacity::{capacity_margin, CapacityMargin};
pub use drift::{drift_certificate, lyapunov_value_bound, DriftCertificate, LyapunovBound, PotentialKind};
pub use maxweight::{maxweight_action, maxweight_policy, MaxWeightVariant};
pub use model::{gsse_transition, Distribution, GsseModel, GsseParams, RewardKind};
pub use presets::Preset;
