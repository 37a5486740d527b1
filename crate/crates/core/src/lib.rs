//! Counterfactual robustness testing of image classifiers.
//!
//! A sweep varies one scene parameter θ away from a reference condition while
//! the trial parameters (object model, lighting, occluder) are held fixed per
//! trial. Given the classifier's ranked predictions for every rendered frame,
//! the metrics measure how often predictions survive the change:
//!
//! - [`metrics::accuracy_curve`]: top-k accuracy at each θ, averaged over trials.
//! - [`metrics::pccp_curve`]: among trials classified correctly at the
//!   reference, the fraction still correct (conserved) at θ.
//! - [`metrics::pacp_curve`]: the fraction of all trials whose prediction at
//!   θ matches their prediction at the reference.
//! - [`metrics::pibc_curve`]: among trials wrong at the reference, the
//!   fraction that become correct at θ.
//!
//! Rendering and inference are external; this crate plans the sweeps, reads
//! the prediction logs and turns them into curves, tables and plots.

pub mod metrics;
pub mod nvd;
pub mod patch_drop;
pub mod predictions;
pub mod report;
pub mod sweep;
