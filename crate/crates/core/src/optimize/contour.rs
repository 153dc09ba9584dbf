//! Dark-count thresholds that hold the total QBER at a target value.

use rayon::prelude::*;

use super::{bisect, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{ChannelModel, Operating, ReceiverModel};

/// Dark count probabilities are searched on `[0, DARK_COUNT_SEARCH_UPPER]`.
pub const DARK_COUNT_SEARCH_UPPER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdOutcome {
    /// Largest total dark count probability meeting the target.
    Threshold { dark_count_prob: f64, achieved_qber: f64 },
    /// Even a dark-count-free receiver exceeds the target.
    Infeasible { qber_floor: f64 },
    /// The target is still met at the top of the search range.
    AboveSearchRange { qber_at_upper: f64 },
}

/// Largest total dark count probability for which the total QBER of a pulse
/// with `mean_photon` equals `target_qber`.
///
/// The receiver template supplies the array layout, detector efficiency and
/// background error; its afterpulse probability, intrinsic error and dark
/// count are replaced by the arguments. The QBER grows with the dark count
/// whenever `e0` exceeds the afterpulse-inclusive baseline error, which makes
/// the threshold a bisection on `[0, 0.1]`.
pub fn dark_count_threshold(
    p_ap: f64,
    intrinsic_error: f64,
    loss_db: f64,
    target_qber: f64,
    template: &ReceiverModel,
    mean_photon: f64,
    config: &SolverConfig,
) -> Result<ThresholdOutcome> {
    if !(target_qber > 0.0 && target_qber < 0.5) {
        return Err(Error::invalid("target_qber", format!("{target_qber} must lie in (0, 0.5)")));
    }
    if !(mean_photon.is_finite() && mean_photon > 0.0) {
        return Err(Error::invalid("mean_photon", format!("{mean_photon} must be > 0")));
    }
    config.validate()?;
    let receiver =
        template.with_afterpulse_prob(p_ap)?.with_intrinsic_error(intrinsic_error)?.with_dark_count_prob_total(0.0)?;
    let channel = ChannelModel::from_loss_db(loss_db)?;
    let base = Operating::new(&receiver, &channel)?;

    let qber_at = |p_dc: f64| -> Result<f64> {
        let op = Operating { y0: (1.0 + base.p_ap) * p_dc, ..base };
        op.qber(mean_photon)
    };

    let floor = qber_at(0.0)?;
    if floor > target_qber {
        return Ok(ThresholdOutcome::Infeasible { qber_floor: floor });
    }
    let top = qber_at(DARK_COUNT_SEARCH_UPPER)?;
    if top <= target_qber {
        return Ok(ThresholdOutcome::AboveSearchRange { qber_at_upper: top });
    }
    let p_dc = bisect(
        |p| qber_at(p).map_or(f64::NAN, |e| e - target_qber),
        0.0,
        DARK_COUNT_SEARCH_UPPER,
        config.abs_tolerance,
        config.max_iterations,
    )?;
    Ok(ThresholdOutcome::Threshold { dark_count_prob: p_dc, achieved_qber: qber_at(p_dc)? })
}

/// Nodes of an iso-QBER surface: every afterpulse probability is paired with
/// every intrinsic error.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IsoQberGrid {
    pub afterpulse_probs: Vec<f64>,
    pub intrinsic_errors: Vec<f64>,
}

impl IsoQberGrid {
    pub fn len(&self) -> usize {
        self.afterpulse_probs.len() * self.intrinsic_errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContourStatus {
    Feasible,
    Infeasible,
    AboveSearchRange,
    /// The node could not be evaluated; holds an error code.
    Error(&'static str),
}

impl ContourStatus {
    pub fn code(&self) -> &'static str {
        match self {
            ContourStatus::Feasible => "ok",
            ContourStatus::Infeasible => "infeasible",
            ContourStatus::AboveSearchRange => "above-search-range",
            ContourStatus::Error(code) => code,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourPoint {
    pub p_ap: f64,
    pub intrinsic_error: f64,
    /// Threshold dark count probability; the search upper bound for
    /// [`ContourStatus::AboveSearchRange`], `None` otherwise.
    pub dark_count_prob: Option<f64>,
    pub loss_db: f64,
    /// QBER at the reported dark count, or the dark-count-free floor when
    /// infeasible.
    pub achieved_qber: Option<f64>,
    pub status: ContourStatus,
}

/// Dark-count threshold at every node, in row-major order (afterpulse
/// probability outer, intrinsic error inner).
pub fn trace_iso_qber_surface(
    grid: &IsoQberGrid,
    loss_db: f64,
    target_qber: f64,
    template: &ReceiverModel,
    mean_photon: f64,
    config: &SolverConfig,
) -> Result<Vec<ContourPoint>> {
    if !(target_qber > 0.0 && target_qber < 0.5) {
        return Err(Error::invalid("target_qber", format!("{target_qber} must lie in (0, 0.5)")));
    }
    ChannelModel::from_loss_db(loss_db)?;
    config.validate()?;
    let cols = grid.intrinsic_errors.len();
    let points = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let p_ap = grid.afterpulse_probs[k / cols];
            let intrinsic_error = grid.intrinsic_errors[k % cols];
            let (dark_count_prob, achieved_qber, status) = match dark_count_threshold(
                p_ap,
                intrinsic_error,
                loss_db,
                target_qber,
                template,
                mean_photon,
                config,
            ) {
                Ok(ThresholdOutcome::Threshold { dark_count_prob, achieved_qber }) => {
                    (Some(dark_count_prob), Some(achieved_qber), ContourStatus::Feasible)
                }
                Ok(ThresholdOutcome::Infeasible { qber_floor }) => (None, Some(qber_floor), ContourStatus::Infeasible),
                Ok(ThresholdOutcome::AboveSearchRange { qber_at_upper }) => {
                    (Some(DARK_COUNT_SEARCH_UPPER), Some(qber_at_upper), ContourStatus::AboveSearchRange)
                }
                Err(e) => (None, None, ContourStatus::Error(e.code())),
            };
            ContourPoint { p_ap, intrinsic_error, dark_count_prob, loss_db, achieved_qber, status }
        })
        .collect();
    Ok(points)
}
