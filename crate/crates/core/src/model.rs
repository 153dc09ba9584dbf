//! Closed-form detector and link quantities for a receiver built from N
//! afterpulsing single-photon avalanche detectors.
//!
//! Afterpulsing is modelled to first order: every detection (dark or
//! photon-induced) triggers one extra click with probability `p_AP`, so
//! yields and gains pick up a factor `(1 + p_AP)`. Higher-order afterpulse
//! chains are not represented, which is why [`gain_total`] refuses to return
//! a gain above one instead of clamping it.

use crate::error::{Error, Result};
use crate::sweep::distance_to_loss;

/// Background error rate of a random click.
pub const RANDOM_BACKGROUND_ERROR: f64 = 0.5;
/// Typical attenuation of standard telecom fibre at 1550 nm.
pub const FIBER_ATTENUATION_DB_PER_KM: f64 = 0.21;
/// Tolerance on the sum of detector biases.
pub const BIAS_SUM_TOLERANCE: f64 = 1e-12;

pub(crate) fn check_probability(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("{value} is not a probability in [0, 1]")))
    }
}

pub(crate) fn check_nonnegative(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("{value} must be finite and >= 0")))
    }
}

/// One detector of Bob's array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorUnit {
    afterpulse_prob: f64,
    bias: f64,
}

impl DetectorUnit {
    /// `bias` is the fractional deviation of this detector's share of the
    /// clicks from the equal share `1/N`. Its admissible range depends on the
    /// array size and is checked when the receiver is built.
    pub fn new(afterpulse_prob: f64, bias: f64) -> Result<Self> {
        check_probability("afterpulse_prob", afterpulse_prob)?;
        if !bias.is_finite() {
            return Err(Error::invalid("bias", "must be finite"));
        }
        Ok(Self { afterpulse_prob, bias })
    }

    pub fn unbiased(afterpulse_prob: f64) -> Result<Self> {
        Self::new(afterpulse_prob, 0.0)
    }

    pub fn afterpulse_prob(&self) -> f64 {
        self.afterpulse_prob
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DarkCount {
    Total(f64),
    PerDetector(f64),
}

/// Builder for [`ReceiverModel`].
///
/// Starts from two identical unbiased detectors without afterpulsing, a total
/// dark count probability of 6e-7 per gate, 10% detector efficiency, a 0.5%
/// intrinsic error and a random background (`e0 = 1/2`).
#[derive(Debug, Clone)]
pub struct ReceiverBuilder {
    detectors: Vec<DetectorUnit>,
    dark_count: DarkCount,
    intrinsic_error: f64,
    background_error: f64,
    detector_efficiency: f64,
}

impl Default for ReceiverBuilder {
    fn default() -> Self {
        Self {
            detectors: vec![DetectorUnit { afterpulse_prob: 0.0, bias: 0.0 }; 2],
            dark_count: DarkCount::Total(6e-7),
            intrinsic_error: 0.005,
            background_error: RANDOM_BACKGROUND_ERROR,
            detector_efficiency: 0.1,
        }
    }
}

impl ReceiverBuilder {
    pub fn detectors(mut self, detectors: Vec<DetectorUnit>) -> Self {
        self.detectors = detectors;
        self
    }

    /// `n` unbiased detectors sharing one afterpulse probability. Invalid
    /// probabilities surface from [`ReceiverBuilder::build`].
    pub fn identical_detectors(mut self, n: usize, afterpulse_prob: f64) -> Self {
        self.detectors = vec![DetectorUnit { afterpulse_prob, bias: 0.0 }; n];
        self
    }

    /// Dark count probability per gate summed over all detectors.
    pub fn dark_count_prob_total(mut self, p: f64) -> Self {
        self.dark_count = DarkCount::Total(p);
        self
    }

    /// Dark count probability of a single detector; multiplied by N on build.
    pub fn dark_count_prob_per_detector(mut self, p: f64) -> Self {
        self.dark_count = DarkCount::PerDetector(p);
        self
    }

    pub fn intrinsic_error(mut self, e: f64) -> Self {
        self.intrinsic_error = e;
        self
    }

    pub fn background_error(mut self, e: f64) -> Self {
        self.background_error = e;
        self
    }

    pub fn detector_efficiency(mut self, eta_bob: f64) -> Self {
        self.detector_efficiency = eta_bob;
        self
    }

    pub fn build(self) -> Result<ReceiverModel> {
        let n = self.detectors.len();
        if n == 0 {
            return Err(Error::invalid("detectors", "at least one detector is required"));
        }
        let max_bias = (n - 1) as f64;
        for (m, d) in self.detectors.iter().enumerate() {
            check_probability(&format!("detectors[{m}].afterpulse_prob"), d.afterpulse_prob)?;
            if !(d.bias.is_finite() && d.bias >= -1.0 && d.bias <= max_bias) {
                return Err(Error::invalid(
                    format!("detectors[{m}].bias"),
                    format!("{} is outside [-1, {max_bias}]", d.bias),
                ));
            }
        }
        let bias_sum: f64 = self.detectors.iter().map(|d| d.bias).sum();
        if bias_sum.abs() > BIAS_SUM_TOLERANCE {
            // Name the detector whose bias moves the sum furthest from zero.
            let worst = self
                .detectors
                .iter()
                .enumerate()
                .max_by(|a, b| (a.1.bias * bias_sum.signum()).total_cmp(&(b.1.bias * bias_sum.signum())))
                .map(|(m, _)| m)
                .unwrap_or(0);
            return Err(Error::invalid(
                format!("detectors[{worst}].bias"),
                format!("biases sum to {bias_sum:e}, must sum to 0"),
            ));
        }
        // A detector receiving every photon forces all others to receive none.
        if n > 1 {
            if let Some(k) = self.detectors.iter().position(|d| (d.bias - max_bias).abs() <= BIAS_SUM_TOLERANCE) {
                if let Some((m, d)) = self
                    .detectors
                    .iter()
                    .enumerate()
                    .find(|(m, d)| *m != k && (d.bias + 1.0).abs() > BIAS_SUM_TOLERANCE)
                {
                    return Err(Error::invalid(
                        format!("detectors[{m}].bias"),
                        format!("detector {k} has bias N-1, so this bias must be -1, got {}", d.bias),
                    ));
                }
            }
        }

        let dark_count_prob_total = match self.dark_count {
            DarkCount::Total(p) => p,
            DarkCount::PerDetector(p) => {
                check_probability("dark_count_prob_per_detector", p)?;
                p * n as f64
            }
        };
        if !(dark_count_prob_total.is_finite() && (0.0..1.0).contains(&dark_count_prob_total)) {
            return Err(Error::invalid("dark_count_prob_total", format!("{dark_count_prob_total} must lie in [0, 1)")));
        }
        check_probability("intrinsic_error", self.intrinsic_error)?;
        check_probability("background_error", self.background_error)?;
        if !(self.detector_efficiency.is_finite() && self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0)
        {
            return Err(Error::invalid(
                "detector_efficiency",
                format!("{} must lie in (0, 1]", self.detector_efficiency),
            ));
        }

        Ok(ReceiverModel {
            detectors: self.detectors,
            dark_count_prob_total,
            intrinsic_error: self.intrinsic_error,
            background_error: self.background_error,
            detector_efficiency: self.detector_efficiency,
        })
    }
}

/// Bob's detector array together with its noise and alignment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverModel {
    detectors: Vec<DetectorUnit>,
    dark_count_prob_total: f64,
    intrinsic_error: f64,
    background_error: f64,
    detector_efficiency: f64,
}

impl Default for ReceiverModel {
    fn default() -> Self {
        ReceiverBuilder::default().build().expect("default receiver is valid")
    }
}

impl ReceiverModel {
    pub fn builder() -> ReceiverBuilder {
        ReceiverBuilder::default()
    }

    /// Builder seeded with this receiver's values.
    pub fn to_builder(&self) -> ReceiverBuilder {
        ReceiverBuilder {
            detectors: self.detectors.clone(),
            dark_count: DarkCount::Total(self.dark_count_prob_total),
            intrinsic_error: self.intrinsic_error,
            background_error: self.background_error,
            detector_efficiency: self.detector_efficiency,
        }
    }

    /// Copy with every detector's afterpulse probability set to `p`, biases kept.
    pub fn with_afterpulse_prob(&self, p: f64) -> Result<Self> {
        let detectors = self.detectors.iter().map(|d| DetectorUnit { afterpulse_prob: p, bias: d.bias }).collect();
        self.to_builder().detectors(detectors).build()
    }

    pub fn with_dark_count_prob_total(&self, p: f64) -> Result<Self> {
        self.to_builder().dark_count_prob_total(p).build()
    }

    pub fn with_intrinsic_error(&self, e: f64) -> Result<Self> {
        self.to_builder().intrinsic_error(e).build()
    }

    pub fn detectors(&self) -> &[DetectorUnit] {
        &self.detectors
    }

    pub fn dark_count_prob_total(&self) -> f64 {
        self.dark_count_prob_total
    }

    pub fn intrinsic_error(&self) -> f64 {
        self.intrinsic_error
    }

    pub fn background_error(&self) -> f64 {
        self.background_error
    }

    pub fn detector_efficiency(&self) -> f64 {
        self.detector_efficiency
    }
}

/// Fibre link between Alice and Bob, given either as attenuation times
/// distance or directly as a loss in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    Fiber { attenuation_db_per_km: f64, distance_km: f64 },
    Loss { loss_db: f64 },
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::Loss { loss_db: 0.0 }
    }
}

impl ChannelModel {
    pub fn fiber(attenuation_db_per_km: f64, distance_km: f64) -> Result<Self> {
        check_nonnegative("attenuation_db_per_km", attenuation_db_per_km)?;
        check_nonnegative("distance_km", distance_km)?;
        Ok(ChannelModel::Fiber { attenuation_db_per_km, distance_km })
    }

    pub fn from_loss_db(loss_db: f64) -> Result<Self> {
        check_nonnegative("loss_db", loss_db)?;
        Ok(ChannelModel::Loss { loss_db })
    }

    pub fn loss_db(&self) -> f64 {
        match *self {
            ChannelModel::Fiber { attenuation_db_per_km, distance_km } => {
                distance_to_loss(distance_km, attenuation_db_per_km).unwrap_or(f64::NAN)
            }
            ChannelModel::Loss { loss_db } => loss_db,
        }
    }

    /// Overall single-photon transmittance `eta = eta_Bob * 10^(-loss/10)`.
    pub fn transmittance(&self, detector_efficiency: f64) -> Result<f64> {
        let eta = detector_efficiency * 10f64.powf(-self.loss_db() / 10.0);
        if eta.is_finite() && eta > 0.0 && eta <= 1.0 {
            Ok(eta)
        } else {
            Err(Error::Domain { what: "transmittance", value: eta })
        }
    }
}

/// Mean photon numbers of the three pulse classes of the weak+vacuum protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySet {
    signal_mu: f64,
    weak_decoy_nu1: f64,
    vacuum_decoy: f64,
}

impl Default for IntensitySet {
    fn default() -> Self {
        Self { signal_mu: 0.48, weak_decoy_nu1: 0.05, vacuum_decoy: 0.0 }
    }
}

impl IntensitySet {
    pub fn new(signal_mu: f64, weak_decoy_nu1: f64, vacuum_decoy: f64) -> Result<Self> {
        check_nonnegative("signal_mu", signal_mu)?;
        check_nonnegative("weak_decoy_nu1", weak_decoy_nu1)?;
        check_nonnegative("vacuum_decoy", vacuum_decoy)?;
        if weak_decoy_nu1 >= signal_mu {
            return Err(Error::invalid(
                "weak_decoy_nu1",
                format!("{weak_decoy_nu1} must be below signal_mu {signal_mu}"),
            ));
        }
        if vacuum_decoy >= weak_decoy_nu1 {
            return Err(Error::invalid(
                "vacuum_decoy",
                format!("{vacuum_decoy} must be below weak_decoy_nu1 {weak_decoy_nu1}"),
            ));
        }
        Ok(Self { signal_mu, weak_decoy_nu1, vacuum_decoy })
    }

    /// Signal and weak decoy with an ideal vacuum decoy.
    pub fn weak_vacuum(signal_mu: f64, weak_decoy_nu1: f64) -> Result<Self> {
        Self::new(signal_mu, weak_decoy_nu1, 0.0)
    }

    pub fn signal_mu(&self) -> f64 {
        self.signal_mu
    }

    pub fn weak_decoy_nu1(&self) -> f64 {
        self.weak_decoy_nu1
    }

    pub fn vacuum_decoy(&self) -> f64 {
        self.vacuum_decoy
    }
}

/// Error-correction efficiency `f(E)` as a function of the error rate.
#[derive(Debug, Clone, PartialEq)]
pub enum EcEfficiency {
    Constant(f64),
    /// Piecewise-linear in the error rate, held constant outside the table.
    Table(Vec<(f64, f64)>),
}

impl Default for EcEfficiency {
    fn default() -> Self {
        EcEfficiency::Constant(1.16)
    }
}

impl EcEfficiency {
    pub fn constant(f: f64) -> Result<Self> {
        if f.is_finite() && f >= 1.0 {
            Ok(EcEfficiency::Constant(f))
        } else {
            Err(Error::invalid("ec_efficiency", format!("{f} must be >= 1")))
        }
    }

    /// `points` are `(error_rate, efficiency)` pairs with strictly increasing
    /// error rates.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("ec_efficiency", "table must not be empty"));
        }
        for (i, &(e, f)) in points.iter().enumerate() {
            check_probability(&format!("ec_efficiency[{i}].error_rate"), e)?;
            if !(f.is_finite() && f >= 1.0) {
                return Err(Error::invalid(format!("ec_efficiency[{i}].efficiency"), format!("{f} must be >= 1")));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("ec_efficiency", "error rates must be strictly increasing"));
        }
        Ok(EcEfficiency::Table(points))
    }

    pub fn at(&self, error_rate: f64) -> f64 {
        match self {
            EcEfficiency::Constant(f) => *f,
            EcEfficiency::Table(points) => {
                let first = points[0];
                let last = points[points.len() - 1];
                if error_rate <= first.0 {
                    return first.1;
                }
                if error_rate >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|p| p.0 <= error_rate);
                let (e0, f0) = points[k - 1];
                let (e1, f1) = points[k];
                f0 + (f1 - f0) * (error_rate - e0) / (e1 - e0)
            }
        }
    }
}

/// Post-processing parameters of the key-rate bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    sifting_factor: f64,
    ec_efficiency: EcEfficiency,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self { sifting_factor: 0.5, ec_efficiency: EcEfficiency::default() }
    }
}

impl ProtocolParams {
    pub fn new(sifting_factor: f64, ec_efficiency: EcEfficiency) -> Result<Self> {
        if !(sifting_factor.is_finite() && sifting_factor > 0.0 && sifting_factor <= 1.0) {
            return Err(Error::invalid("sifting_factor", format!("{sifting_factor} must lie in (0, 1]")));
        }
        // Re-run the constructor checks for hand-built variants.
        let ec_efficiency = match ec_efficiency {
            EcEfficiency::Constant(f) => EcEfficiency::constant(f)?,
            EcEfficiency::Table(points) => EcEfficiency::table(points)?,
        };
        Ok(Self { sifting_factor, ec_efficiency })
    }

    pub fn sifting_factor(&self) -> f64 {
        self.sifting_factor
    }

    pub fn ec_efficiency(&self) -> &EcEfficiency {
        &self.ec_efficiency
    }
}

/// Everything needed to evaluate one operating point of the link.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub receiver: ReceiverModel,
    pub channel: ChannelModel,
    pub intensities: IntensitySet,
    pub protocol: ProtocolParams,
}

/// Aggregated afterpulse probability of the array: the bias-weighted mean
/// `sum_m (1 + r_m) / N * p_AP,m`.
pub fn aggregate_afterpulse(receiver: &ReceiverModel) -> f64 {
    let n = receiver.detectors.len() as f64;
    receiver.detectors.iter().map(|d| (1.0 + d.bias) / n * d.afterpulse_prob).sum()
}

/// Background yield `Y0 = (1 + p_AP) p_DC`.
pub fn yield_background(receiver: &ReceiverModel) -> f64 {
    (1.0 + aggregate_afterpulse(receiver)) * receiver.dark_count_prob_total
}

/// `eta_i = 1 - (1 - eta)^i`, the probability that at least one of `i`
/// independent photons is detected.
pub fn photon_transmittance(eta: f64, photons: u32) -> f64 {
    if photons == 0 {
        return 0.0;
    }
    -(f64::from(photons) * (-eta).ln_1p()).exp_m1()
}

/// `1 - exp(-eta * mean_photon)` without cancellation for tiny arguments.
pub(crate) fn detection_probability(eta: f64, mean_photon: f64) -> f64 {
    -(-eta * mean_photon).exp_m1()
}

/// Receiver-derived quantities that every per-pulse formula needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Operating {
    pub p_ap: f64,
    pub y0: f64,
    pub eta: f64,
    pub intrinsic_error: f64,
    pub background_error: f64,
}

impl Operating {
    pub fn new(receiver: &ReceiverModel, channel: &ChannelModel) -> Result<Self> {
        let p_ap = aggregate_afterpulse(receiver);
        Ok(Self {
            p_ap,
            y0: (1.0 + p_ap) * receiver.dark_count_prob_total,
            eta: channel.transmittance(receiver.detector_efficiency)?,
            intrinsic_error: receiver.intrinsic_error,
            background_error: receiver.background_error,
        })
    }

    /// Error probability carried by photon-induced clicks, afterpulses included.
    fn signal_error_weight(&self) -> f64 {
        self.intrinsic_error + self.background_error * self.p_ap
    }

    /// Yield and error rate of an `i`-photon state.
    pub fn photon_state(&self, photons: u32) -> Result<(f64, f64)> {
        let eta_i = photon_transmittance(self.eta, photons);
        let y = self.y0 + eta_i * (1.0 + self.p_ap);
        if y <= 0.0 {
            return Err(Error::Degenerate { quantity: "Y_i" });
        }
        let e = if photons == 0 {
            self.background_error
        } else if self.y0 == 0.0 {
            self.signal_error_weight() / (1.0 + self.p_ap)
        } else {
            (self.background_error * self.y0 + self.signal_error_weight() * eta_i) / y
        };
        Ok((y, e))
    }

    pub fn gain(&self, mean_photon: f64) -> Result<f64> {
        if !(mean_photon.is_finite() && mean_photon >= 0.0) {
            return Err(Error::invalid("mean_photon", format!("{mean_photon} must be >= 0")));
        }
        if mean_photon == 0.0 {
            return Ok(self.y0);
        }
        let q = self.y0 + detection_probability(self.eta, mean_photon) * (1.0 + self.p_ap);
        if q > 1.0 {
            return Err(Error::GainExceedsUnity { quantity: "Q", value: q });
        }
        Ok(q)
    }

    pub fn qber(&self, mean_photon: f64) -> Result<f64> {
        let q = self.gain(mean_photon)?;
        if q <= 0.0 {
            return Err(Error::Degenerate { quantity: "Q" });
        }
        if mean_photon == 0.0 {
            return Ok(self.background_error);
        }
        if self.y0 == 0.0 {
            return Ok(self.signal_error_weight() / (1.0 + self.p_ap));
        }
        let s = detection_probability(self.eta, mean_photon);
        Ok((self.background_error * self.y0 + self.signal_error_weight() * s) / q)
    }
}

/// Yield `Y_i` of an `i`-photon state.
pub fn yield_i(receiver: &ReceiverModel, channel: &ChannelModel, photons: u32) -> Result<f64> {
    let op = Operating::new(receiver, channel)?;
    Ok(op.y0 + photon_transmittance(op.eta, photons) * (1.0 + op.p_ap))
}

/// Error rate `e_i` of an `i`-photon state.
pub fn qber_i(receiver: &ReceiverModel, channel: &ChannelModel, photons: u32) -> Result<f64> {
    Operating::new(receiver, channel)?.photon_state(photons).map(|(_, e)| e)
}

/// Total gain `Q` of a pulse with the given mean photon number.
pub fn gain_total(receiver: &ReceiverModel, channel: &ChannelModel, mean_photon: f64) -> Result<f64> {
    Operating::new(receiver, channel)?.gain(mean_photon)
}

/// Total QBER `E` of a pulse with the given mean photon number.
pub fn qber_total(receiver: &ReceiverModel, channel: &ChannelModel, mean_photon: f64) -> Result<f64> {
    Operating::new(receiver, channel)?.qber(mean_photon)
}

/// Baseline system error rate including afterpulses,
/// `(e' + e0 p_AP) / (1 + p_AP)`.
///
/// Accepts any non-negative `p_ap`; values above one are outside the
/// detector model but the expression is still the well-defined saturation
/// curve towards `e0`.
pub fn effective_baseline_error(intrinsic_error: f64, background_error: f64, p_ap: f64) -> f64 {
    (intrinsic_error + background_error * p_ap) / (1.0 + p_ap)
}

/// Relative change of the baseline error caused by afterpulsing,
/// `p_AP / (1 + p_AP) * (e0 / e' - 1)`.
pub fn baseline_error_change(intrinsic_error: f64, background_error: f64, p_ap: f64) -> Result<f64> {
    if intrinsic_error <= 0.0 {
        return Err(Error::Domain { what: "intrinsic_error (divisor)", value: intrinsic_error });
    }
    Ok(p_ap / (1.0 + p_ap) * (background_error / intrinsic_error - 1.0))
}

/// Interference visibility implied by the afterpulse-inclusive baseline error.
pub fn visibility(intrinsic_error: f64, background_error: f64, p_ap: f64) -> f64 {
    1.0 - 2.0 * effective_baseline_error(intrinsic_error, background_error, p_ap)
}

/// Pulse classes of the weak+vacuum protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseClass {
    Signal,
    WeakDecoy,
    VacuumDecoy,
}

/// Yield and error rate of an `i`-photon state sent in the given pulse class.
///
/// The class is deliberately unused: photon-number states are
/// indistinguishable to Bob, so decoy and signal states share `Y_i` and `e_i`.
pub fn photon_state_for(
    _class: PulseClass,
    receiver: &ReceiverModel,
    channel: &ChannelModel,
    photons: u32,
) -> Result<(f64, f64)> {
    Operating::new(receiver, channel)?.photon_state(photons)
}

/// True when `Y_i` and `e_i` agree bitwise between signal and decoy pulses.
pub fn decoy_consistency_check(receiver: &ReceiverModel, channel: &ChannelModel, photons: u32) -> bool {
    let signal = photon_state_for(PulseClass::Signal, receiver, channel, photons);
    [PulseClass::WeakDecoy, PulseClass::VacuumDecoy].into_iter().all(|class| {
        match (&signal, photon_state_for(class, receiver, channel, photons)) {
            (Ok((y, e)), Ok((yd, ed))) => y.to_bits() == yd.to_bits() && e.to_bits() == ed.to_bits(),
            (Err(a), Err(b)) => *a == b,
            _ => false,
        }
    })
}
