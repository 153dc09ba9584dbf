//! Performance model of decoy-state QKD links whose receiver is an array of
//! afterpulsing single-photon avalanche detectors.
//!
//! * [`model`]: afterpulse aggregation over the detector array, yields, error
//!   rates, gains, the afterpulse-inclusive baseline error and visibility.
//! * [`decoy`]: weak+vacuum single-photon bounds and the secure key rate.
//! * [`optimize`]: optimal signal intensity and iso-QBER dark-count thresholds.
//! * [`sweep`]: deterministic grid evaluation with CSV output.
//!
//! ```
//! use afterpulse_qkd::{evaluate_link, ChannelModel, IntensitySet, ReceiverModel, Scenario};
//!
//! let scenario = Scenario {
//!     receiver: ReceiverModel::builder().identical_detectors(2, 0.008).intrinsic_error(0.02).build()?,
//!     channel: ChannelModel::from_loss_db(5.0)?,
//!     intensities: IntensitySet::weak_vacuum(0.5, 0.05)?,
//!     ..Default::default()
//! };
//! let metrics = evaluate_link(&scenario)?;
//! assert!(metrics.skr_lower > 0.0);
//! # Ok::<(), afterpulse_qkd::Error>(())
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoy;
pub mod error;
pub mod model;
pub mod optimize;
pub mod sweep;

pub use decoy::{
    binary_entropy, estimate_single_photon, evaluate_link, skr_approx, skr_lower_bound, DecoyObservations,
    KeyRateBound, KeyRateInputs, LinkMetrics, SinglePhotonEstimate, ZeroKeyReason,
};
pub use error::{Error, ErrorKind, Result};
pub use model::{
    aggregate_afterpulse, baseline_error_change, decoy_consistency_check, effective_baseline_error, gain_total, qber_i,
    qber_total, visibility, yield_background, yield_i, ChannelModel, DetectorUnit, EcEfficiency, IntensitySet,
    ProtocolParams, ReceiverModel, Scenario,
};
pub use optimize::{
    dark_count_threshold, maximize_skr_over_mu, solve_optimal_mu, trace_iso_qber_surface, ContourPoint,
    IntensityOptimum, IsoQberGrid, OptimalMu, SolverConfig, ThresholdOutcome,
};
pub use sweep::{distance_to_loss, run_sweep, Axis, Metric, ResultRecord, SweepParam, SweepSpec};
