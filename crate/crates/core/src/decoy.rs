//! Weak+vacuum decoy-state estimation and secure key rate.
//!
//! The single-photon bounds are the standard weak+vacuum estimates: from the
//! signal gain, the weak-decoy gain and error rate and the vacuum yield they
//! give a lower bound on `Y1` and an upper bound on `e1`. The key rate is
//! then the asymptotic bound
//! `R = q * (-f(E_mu) Q_mu H2(E_mu) + Q1 (1 - H2(e1)))`.

use crate::error::{Error, Result};
use crate::model::{effective_baseline_error, visibility, Operating, ProtocolParams, Scenario};

/// Relative spacing below which the weak decoy is treated as equal to the
/// signal intensity.
pub const MIN_DECOY_SPACING: f64 = 1e-9;

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { what: "binary entropy argument", value: x });
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-(x * x.log2() + (1.0 - x) * (-x).ln_1p() / std::f64::consts::LN_2))
}

/// Entropy charged for an error rate: beyond 1/2 nothing can be distilled,
/// so the entropy is held at its maximum instead of folding back down.
fn saturated_entropy(x: f64) -> f64 {
    if x >= 0.5 {
        1.0
    } else {
        binary_entropy(x.max(0.0)).unwrap_or(1.0)
    }
}

/// Measured (or modelled) statistics of the three pulse classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservations {
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu1: f64,
    pub e_nu1: f64,
    /// Gain of the vacuum decoy.
    pub y0: f64,
    pub mu: f64,
    pub nu1: f64,
    /// Error rate of background clicks.
    pub e0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonEstimate {
    pub y1_lower: f64,
    pub e1_upper: f64,
    /// `y1_lower * mu * exp(-mu)`.
    pub q1_lower: f64,
    /// Set when `y1_lower` or `e1_upper` had to be clamped into `[0, 1]`.
    pub clamped: bool,
}

/// Weak+vacuum lower bound on the single-photon yield and upper bound on the
/// single-photon error rate.
pub fn estimate_single_photon(obs: &DecoyObservations) -> Result<SinglePhotonEstimate> {
    let DecoyObservations { q_mu, q_nu1, e_nu1, y0, mu, nu1, e0, .. } = *obs;
    if !(nu1 > 0.0) {
        return Err(Error::invalid("nu1", format!("{nu1} must be positive")));
    }
    if !(mu - nu1 > MIN_DECOY_SPACING * mu) {
        return Err(Error::DecoySpacing { mu, nu1 });
    }
    let mu2 = mu * mu;
    let nu2 = nu1 * nu1;
    let weak_term = q_nu1 * nu1.exp();
    let y1 = mu / (mu * nu1 - nu2) * (weak_term - q_mu * mu.exp() * (nu2 / mu2) - (mu2 - nu2) / mu2 * y0);
    if !(y1 > 0.0) {
        return Err(Error::EstimationInfeasible { y1_lower: y1 });
    }
    let e1 = (e_nu1 * weak_term - e0 * y0) / (y1 * nu1);

    let y1_lower = y1.min(1.0);
    let e1_upper = e1.clamp(0.0, 1.0);
    let clamped = y1_lower != y1 || e1_upper != e1;
    Ok(SinglePhotonEstimate { y1_lower, e1_upper, q1_lower: y1_lower * mu * (-mu).exp(), clamped })
}

/// Inputs of the key-rate bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateInputs {
    pub q_mu: f64,
    pub e_mu: f64,
    pub q1: f64,
    pub e1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateBound {
    /// The bound as evaluated, possibly negative.
    pub raw: f64,
    /// `max(0, raw)`.
    pub lower: f64,
}

/// Secure key rate per pulse. Error rates at or above 1/2 count as fully
/// disclosed (`H2 = 1`).
pub fn skr_lower_bound(inputs: &KeyRateInputs, protocol: &ProtocolParams) -> KeyRateBound {
    let KeyRateInputs { q_mu, e_mu, q1, e1 } = *inputs;
    let f = protocol.ec_efficiency().at(e_mu);
    let raw = protocol.sifting_factor() * (-f * q_mu * saturated_entropy(e_mu) + q1 * (1.0 - saturated_entropy(e1)));
    KeyRateBound { raw, lower: raw.max(0.0) }
}

/// Closed-form key rate for low background and small transmittance,
/// `eta mu (1 + p_AP) [e^-mu (1 - H2(e)) - f(e) H2(e)]` with `e` the
/// afterpulse-inclusive baseline error. It carries no sifting factor.
pub fn skr_approx(scenario: &Scenario, mu: f64) -> Result<f64> {
    let op = Operating::new(&scenario.receiver, &scenario.channel)?;
    let e_det = effective_baseline_error(op.intrinsic_error, op.background_error, op.p_ap);
    let h = saturated_entropy(e_det);
    let f = scenario.protocol.ec_efficiency().at(e_det);
    let scale = op.eta * mu * (1.0 + op.p_ap);
    Ok(-scale * f * h + scale * (-mu).exp() * (1.0 - h))
}

/// Whether the scenario sits in the regime where [`skr_approx`] is meant to
/// hold (background yield and transmittance both well below their scales).
pub fn approx_is_valid(scenario: &Scenario) -> Result<bool> {
    let op = Operating::new(&scenario.receiver, &scenario.channel)?;
    Ok(op.y0 < 0.01 * op.eta && op.eta < 0.1 + f64::EPSILON)
}

/// Why a link yields no key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroKeyReason {
    EstimationInfeasible,
    DecoySpacing,
    NonPositiveRate,
}

impl ZeroKeyReason {
    pub fn code(&self) -> &'static str {
        match self {
            ZeroKeyReason::EstimationInfeasible => "estimation-infeasible",
            ZeroKeyReason::DecoySpacing => "decoy-spacing",
            ZeroKeyReason::NonPositiveRate => "nonpositive-rate",
        }
    }
}

/// Every computed quantity of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub p_ap: f64,
    pub transmittance: f64,
    pub y0: f64,
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu1: f64,
    pub e_nu1: f64,
    pub y0_measured: f64,
    pub estimate: Option<SinglePhotonEstimate>,
    pub e_detector: f64,
    pub visibility: f64,
    pub skr_raw: f64,
    pub skr_lower: f64,
    pub skr_approx: f64,
    pub zero_key: Option<ZeroKeyReason>,
}

/// Forward-model the decoy statistics of a scenario, estimate the
/// single-photon parameters from them and bound the key rate.
///
/// When the estimate is infeasible the single-photon term is dropped, so
/// `skr_raw` is the (negative) error-correction cost alone and `zero_key`
/// records the reason.
pub fn evaluate_link(scenario: &Scenario) -> Result<LinkMetrics> {
    let op = Operating::new(&scenario.receiver, &scenario.channel)?;
    let mu = scenario.intensities.signal_mu();
    let nu1 = scenario.intensities.weak_decoy_nu1();
    let q_mu = op.gain(mu)?;
    let e_mu = op.qber(mu)?;
    let q_nu1 = op.gain(nu1)?;
    let e_nu1 = op.qber(nu1)?;
    let y0_measured = op.gain(scenario.intensities.vacuum_decoy())?;

    let obs = DecoyObservations { q_mu, e_mu, q_nu1, e_nu1, y0: y0_measured, mu, nu1, e0: op.background_error };
    let (estimate, mut zero_key) = match estimate_single_photon(&obs) {
        Ok(est) => (Some(est), None),
        Err(Error::EstimationInfeasible { .. }) => (None, Some(ZeroKeyReason::EstimationInfeasible)),
        Err(Error::DecoySpacing { .. }) => (None, Some(ZeroKeyReason::DecoySpacing)),
        Err(other) => return Err(other),
    };
    let inputs = KeyRateInputs {
        q_mu,
        e_mu,
        q1: estimate.map_or(0.0, |e| e.q1_lower),
        e1: estimate.map_or(0.5, |e| e.e1_upper),
    };
    let bound = skr_lower_bound(&inputs, &scenario.protocol);
    if zero_key.is_none() && bound.raw <= 0.0 {
        zero_key = Some(ZeroKeyReason::NonPositiveRate);
    }

    Ok(LinkMetrics {
        p_ap: op.p_ap,
        transmittance: op.eta,
        y0: op.y0,
        q_mu,
        e_mu,
        q_nu1,
        e_nu1,
        y0_measured,
        estimate,
        e_detector: effective_baseline_error(op.intrinsic_error, op.background_error, op.p_ap),
        visibility: visibility(op.intrinsic_error, op.background_error, op.p_ap),
        skr_raw: bound.raw,
        skr_lower: bound.lower,
        skr_approx: skr_approx(scenario, mu)?,
        zero_key,
    })
}

/// Key rate at a given signal intensity with everything else taken from the
/// scenario. Used by the intensity optimiser.
pub(crate) fn key_rate_at(scenario: &Scenario, op: &Operating, mu: f64) -> Result<KeyRateBound> {
    let nu1 = scenario.intensities.weak_decoy_nu1();
    let q_mu = op.gain(mu)?;
    let e_mu = op.qber(mu)?;
    let q_nu1 = op.gain(nu1)?;
    let obs = DecoyObservations {
        q_mu,
        e_mu,
        q_nu1,
        e_nu1: op.qber(nu1)?,
        y0: op.gain(scenario.intensities.vacuum_decoy())?,
        mu,
        nu1,
        e0: op.background_error,
    };
    let (q1, e1) = match estimate_single_photon(&obs) {
        Ok(est) => (est.q1_lower, est.e1_upper),
        Err(Error::EstimationInfeasible { .. } | Error::DecoySpacing { .. }) => (0.0, 0.5),
        Err(other) => return Err(other),
    };
    Ok(skr_lower_bound(&KeyRateInputs { q_mu, e_mu, q1, e1 }, &scenario.protocol))
}
