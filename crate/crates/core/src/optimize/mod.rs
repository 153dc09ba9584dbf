//! Optimal signal intensity and iso-QBER threshold solvers.

mod contour;
mod scalar;

pub use contour::{
    dark_count_threshold, trace_iso_qber_surface, ContourPoint, ContourStatus, IsoQberGrid, ThresholdOutcome,
    DARK_COUNT_SEARCH_UPPER,
};
pub use scalar::{bisect, golden_section_max};

use crate::decoy::{binary_entropy, key_rate_at, ZeroKeyReason};
use crate::error::{Error, Result};
use crate::model::{ChannelModel, IntensitySet, Operating, ProtocolParams, ReceiverModel, Scenario};

/// Upper end of the signal intensity search.
pub const MU_SEARCH_UPPER: f64 = 1.5;
/// Gap kept between the weak decoy and the smallest signal intensity tried.
pub const MU_SEARCH_GAP: f64 = 1e-3;
/// Number of grid points used to seed the unimodal refinement.
pub const MU_GRID_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub abs_tolerance: f64,
    pub max_iterations: usize,
    pub bracket: (f64, f64),
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { abs_tolerance: 1e-10, max_iterations: 200, bracket: (0.0, 1.0) }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tolerance.is_finite() && self.abs_tolerance > 0.0) {
            return Err(Error::invalid("abs_tolerance", format!("{} must be > 0", self.abs_tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be >= 1"));
        }
        let (lo, hi) = self.bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("bracket", format!("[{lo}, {hi}] must satisfy lower < upper")));
        }
        Ok(())
    }
}

/// Root of the optimal-intensity condition `(1 - mu) e^-mu = RHS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalMu {
    pub mu: f64,
    /// `(1 - mu) e^-mu - RHS` at the returned `mu`.
    pub residual: f64,
    pub rhs: f64,
    /// Set when `RHS = 0` and the root sits on the `mu -> 1` limit.
    pub boundary: bool,
}

/// Right-hand side `f H2(e) / (1 - H2(e))` of the optimal-intensity condition.
pub fn optimal_mu_rhs(e_detector: f64, protocol: &ProtocolParams) -> Result<f64> {
    let h = binary_entropy(e_detector)?;
    if h >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(protocol.ec_efficiency().at(e_detector) * h / (1.0 - h))
}

/// Solve `(1 - mu) e^-mu = f(e) H2(e) / (1 - H2(e))` for the signal intensity.
///
/// The left side falls strictly from 1 to 0 on `(0, 1)` and stays below zero
/// past `mu = 1`, so any bracket with a sign change holds exactly one root.
/// `e_detector` is taken as given; callers pass the afterpulse-inclusive value.
pub fn solve_optimal_mu(e_detector: f64, protocol: &ProtocolParams, config: &SolverConfig) -> Result<OptimalMu> {
    config.validate()?;
    let rhs = optimal_mu_rhs(e_detector, protocol)?;
    if rhs >= 1.0 {
        return Err(Error::NoSolution { rhs });
    }
    if rhs <= 0.0 {
        return Ok(OptimalMu { mu: 1.0, residual: 0.0, rhs, boundary: true });
    }
    let g = |mu: f64| (1.0 - mu) * (-mu).exp() - rhs;
    let (lo, hi) = config.bracket;
    let mu = bisect(g, lo, hi, config.abs_tolerance, config.max_iterations)?;
    Ok(OptimalMu { mu, residual: g(mu), rhs, boundary: false })
}

/// Signal intensity that maximises the key rate for a fixed weak decoy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityOptimum {
    pub mu: f64,
    pub skr: f64,
    /// Set when no intensity in the search range gives a positive key; `mu`
    /// is then the least-bad grid point.
    pub zero_key: Option<ZeroKeyReason>,
}

/// Maximise the key-rate bound over `mu` in `[nu1 + gap, 1.5]`.
///
/// A 64-point grid locates the best cell, which is then refined by golden
/// section on the unfloored rate. Unimodality within the winning cell is
/// assumed, not proven.
pub fn maximize_skr_over_mu(
    receiver: &ReceiverModel,
    channel: &ChannelModel,
    nu1: f64,
    protocol: &ProtocolParams,
    config: &SolverConfig,
) -> Result<IntensityOptimum> {
    config.validate()?;
    let lo = nu1 + MU_SEARCH_GAP;
    if !(nu1 > 0.0) || lo >= MU_SEARCH_UPPER {
        return Err(Error::invalid("weak_decoy_nu1", format!("{nu1} leaves no room for the signal intensity")));
    }
    let op = Operating::new(receiver, channel)?;
    let scenario = Scenario {
        receiver: receiver.clone(),
        channel: *channel,
        intensities: IntensitySet::weak_vacuum(MU_SEARCH_UPPER, nu1)?,
        protocol: protocol.clone(),
    };
    let rate = |mu: f64| key_rate_at(&scenario, &op, mu).map(|b| b.raw).unwrap_or(f64::NEG_INFINITY);

    let step = (MU_SEARCH_UPPER - lo) / (MU_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..MU_GRID_POINTS).map(|k| lo + step * k as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&mu| rate(mu)).collect();
    let best = values.iter().enumerate().fold(0, |best, (k, v)| if *v > values[best] { k } else { best });

    if !(values[best] > 0.0) {
        let reason = key_rate_at(&scenario, &op, grid[best])
            .ok()
            .map(|_| ZeroKeyReason::NonPositiveRate)
            .unwrap_or(ZeroKeyReason::EstimationInfeasible);
        return Ok(IntensityOptimum { mu: grid[best], skr: 0.0, zero_key: Some(reason) });
    }

    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(MU_GRID_POINTS - 1)];
    let (mu, value) = golden_section_max(rate, a, b, 1e-10, config.max_iterations);
    // Never report worse than the seed.
    let (mu, value) = if value >= values[best] { (mu, value) } else { (grid[best], values[best]) };
    Ok(IntensityOptimum { mu, skr: value.max(0.0), zero_key: None })
}
