//! TOML scenario configuration.
//!
//! Every section is optional and every field has a default, so an empty file
//! describes the reference link: two identical unbiased detectors, total dark
//! count probability 6e-7, detector efficiency 0.1, background error 0.5,
//! fiber attenuation 0.21 dB/km, sifting factor 1/2 and error-correction
//! efficiency 1.16.

use afterpulse_qkd::model::{ChannelModel, FIBER_ATTENUATION_DB_PER_KM, RANDOM_BACKGROUND_ERROR};
use afterpulse_qkd::sweep::{AxisValues, DecoyPolicy, MuPolicy, Spacing};
use afterpulse_qkd::{
    Axis, DetectorUnit, EcEfficiency, IntensitySet, IsoQberGrid, Metric, ProtocolParams, ReceiverModel, Scenario,
    SolverConfig, SweepParam, SweepSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub receiver: ReceiverSection,
    pub channel: ChannelSection,
    pub intensities: IntensitySection,
    pub protocol: ProtocolSection,
    pub solver: SolverSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSection {
    /// Number of identical unbiased detectors; defaults to 2. Not allowed
    /// together with `detectors`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_count: Option<usize>,
    /// Afterpulse probability shared by the identical detectors; defaults to 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub afterpulse_prob: Option<f64>,
    pub dark_count_prob_total: f64,
    pub intrinsic_error: f64,
    pub background_error: f64,
    pub detector_efficiency: f64,
    /// Explicit detector array with per-detector click biases.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectors: Option<Vec<DetectorSection>>,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        Self {
            detector_count: None,
            afterpulse_prob: None,
            dark_count_prob_total: 6e-7,
            intrinsic_error: 0.005,
            background_error: RANDOM_BACKGROUND_ERROR,
            detector_efficiency: 0.1,
            detectors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub afterpulse_prob: f64,
    #[serde(default)]
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Total loss. Not allowed together with `distance_km`; 0 dB when
    /// neither is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
    pub attenuation_db_per_km: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { loss_db: None, distance_km: None, attenuation_db_per_km: FIBER_ATTENUATION_DB_PER_KM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensitySection {
    pub signal_mu: f64,
    pub weak_decoy_nu1: f64,
    pub vacuum_decoy: f64,
}

impl Default for IntensitySection {
    fn default() -> Self {
        Self { signal_mu: 0.48, weak_decoy_nu1: 0.05, vacuum_decoy: 0.0 }
    }
}

/// A constant efficiency, or `[[error_rate, efficiency], ...]` interpolated
/// linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EcSetting {
    Constant(f64),
    Table(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub sifting_factor: f64,
    pub ec_efficiency: EcSetting,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self { sifting_factor: 0.5, ec_efficiency: EcSetting::Constant(1.16) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub abs_tolerance: f64,
    pub max_iterations: usize,
    pub bracket: [f64; 2],
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self { abs_tolerance: d.abs_tolerance, max_iterations: d.max_iterations, bracket: [d.bracket.0, d.bracket.1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingSetting {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuPolicySetting {
    #[default]
    Fixed,
    OptimizePerPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoyPolicySetting {
    #[default]
    Fixed,
    LossTable,
}

/// Grid values: either `values = [...]` or `min`, `max`, `count` and an
/// optional `spacing`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<SpacingSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl RangeSection {
    pub fn linear(min: f64, max: f64, count: usize) -> Self {
        Self { min: Some(min), max: Some(max), count: Some(count), ..Default::default() }
    }

    fn to_values(&self, path: &str) -> Result<AxisValues, CliError> {
        match (&self.values, self.min, self.max, self.count) {
            (Some(v), None, None, None) if self.spacing.is_none() => Ok(AxisValues::List(v.clone())),
            (None, Some(min), Some(max), Some(count)) => {
                let spacing = match self.spacing.unwrap_or_default() {
                    SpacingSetting::Linear => Spacing::Linear,
                    SpacingSetting::Log => Spacing::Log,
                };
                Ok(AxisValues::Range { min, max, count, spacing })
            }
            _ => Err(CliError::config(path, "give either `values` or all of `min`, `max`, `count`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    /// One of `p_ap`, `loss_db`, `distance_km`, `intrinsic_error`,
    /// `dark_count_prob`, `signal_mu`, `weak_decoy_nu1`.
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<SpacingSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl AxisSection {
    fn range(&self) -> RangeSection {
        RangeSection {
            min: self.min,
            max: self.max,
            count: self.count,
            spacing: self.spacing,
            values: self.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub outputs: Vec<String>,
    pub mu_policy: MuPolicySetting,
    pub decoy_policy: DecoyPolicySetting,
    pub axes: Vec<AxisSection>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            outputs: vec!["skr_lower".into()],
            mu_policy: MuPolicySetting::Fixed,
            decoy_policy: DecoyPolicySetting::Fixed,
            axes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourSection {
    /// Defaults to the channel loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_db: Option<f64>,
    pub target_qber: f64,
    /// Defaults to `intensities.signal_mu`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_photon: Option<f64>,
    pub afterpulse_probs: RangeSection,
    pub intrinsic_errors: RangeSection,
}

impl Default for ContourSection {
    fn default() -> Self {
        Self {
            loss_db: None,
            target_qber: 0.09,
            mean_photon: None,
            afterpulse_probs: RangeSection::linear(0.0, 0.1, 50),
            intrinsic_errors: RangeSection::linear(0.0, 0.1, 50),
        }
    }
}

/// Everything an iso-QBER surface needs, resolved from the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourJob {
    pub grid: IsoQberGrid,
    pub loss_db: f64,
    pub target_qber: f64,
    pub mean_photon: f64,
    pub template: ReceiverModel,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let location = inner
                .span()
                .map(|s| format!("line {}", text[..s.start.min(text.len())].lines().count().max(1)))
                .unwrap_or_else(|| "config".into());
            let path = if path.is_empty() || path == "." { location } else { path };
            CliError::config(path, inner.message())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn receiver(&self) -> Result<ReceiverModel, CliError> {
        let r = &self.receiver;
        let core = |e| CliError::from_core("receiver", e);
        let mut builder = ReceiverModel::builder();
        match &r.detectors {
            Some(list) => {
                if r.detector_count.is_some() || r.afterpulse_prob.is_some() {
                    return Err(CliError::config(
                        "receiver.detectors",
                        "an explicit detector array excludes `detector_count` and `afterpulse_prob`",
                    ));
                }
                let units = list
                    .iter()
                    .enumerate()
                    .map(|(m, d)| {
                        DetectorUnit::new(d.afterpulse_prob, d.bias)
                            .map_err(|e| CliError::from_core(&format!("receiver.detectors[{m}]"), e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                builder = builder.detectors(units);
            }
            None => {
                builder = builder.identical_detectors(r.detector_count.unwrap_or(2), r.afterpulse_prob.unwrap_or(0.0));
            }
        }
        builder
            .dark_count_prob_total(r.dark_count_prob_total)
            .intrinsic_error(r.intrinsic_error)
            .background_error(r.background_error)
            .detector_efficiency(r.detector_efficiency)
            .build()
            .map_err(core)
    }

    pub fn channel(&self) -> Result<ChannelModel, CliError> {
        let c = &self.channel;
        let core = |e| CliError::from_core("channel", e);
        match (c.loss_db, c.distance_km) {
            (Some(_), Some(_)) => Err(CliError::config("channel", "set either `loss_db` or `distance_km`, not both")),
            (None, Some(d)) => ChannelModel::fiber(c.attenuation_db_per_km, d).map_err(core),
            (loss, None) => ChannelModel::from_loss_db(loss.unwrap_or(0.0)).map_err(core),
        }
    }

    pub fn intensities(&self) -> Result<IntensitySet, CliError> {
        let i = &self.intensities;
        IntensitySet::new(i.signal_mu, i.weak_decoy_nu1, i.vacuum_decoy)
            .map_err(|e| CliError::from_core("intensities", e))
    }

    pub fn protocol(&self) -> Result<ProtocolParams, CliError> {
        let core = |e| CliError::from_core("protocol", e);
        let ec = match &self.protocol.ec_efficiency {
            EcSetting::Constant(f) => EcEfficiency::constant(*f),
            EcSetting::Table(rows) => EcEfficiency::table(rows.iter().map(|r| (r[0], r[1])).collect()),
        }
        .map_err(core)?;
        ProtocolParams::new(self.protocol.sifting_factor, ec).map_err(core)
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let config = SolverConfig {
            abs_tolerance: s.abs_tolerance,
            max_iterations: s.max_iterations,
            bracket: (s.bracket[0], s.bracket[1]),
        };
        config.validate().map_err(|e| CliError::from_core("solver", e))?;
        Ok(config)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario {
            receiver: self.receiver()?,
            channel: self.channel()?,
            intensities: self.intensities()?,
            protocol: self.protocol()?,
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let section =
            self.sweep.as_ref().ok_or_else(|| CliError::config("sweep", "the configuration has no [sweep] section"))?;
        let outputs = section
            .outputs
            .iter()
            .enumerate()
            .map(|(k, name)| {
                name.parse::<Metric>().map_err(|e| CliError::config(format!("sweep.outputs[{k}]"), reason_of(&e)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let axes = section
            .axes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let param = a
                    .param
                    .parse::<SweepParam>()
                    .map_err(|e| CliError::config(format!("sweep.axes[{k}].param"), reason_of(&e)))?;
                Ok(Axis { param, values: a.range().to_values(&format!("sweep.axes[{k}]"))? })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut spec = SweepSpec::new(self.scenario()?, axes, outputs)
            .with_mu_policy(match section.mu_policy {
                MuPolicySetting::Fixed => MuPolicy::Fixed,
                MuPolicySetting::OptimizePerPoint => MuPolicy::OptimizePerPoint,
            })
            .with_decoy_policy(match section.decoy_policy {
                DecoyPolicySetting::Fixed => DecoyPolicy::Fixed,
                DecoyPolicySetting::LossTable => DecoyPolicy::LossTable,
            });
        spec.solver = self.solver()?;
        spec.validate().map_err(|e| CliError::from_core("sweep", e))?;
        Ok(spec)
    }

    /// `target_qber` overrides the configured target when given.
    pub fn contour_job(&self, target_qber: Option<f64>) -> Result<ContourJob, CliError> {
        let section = self.contour.clone().unwrap_or_default();
        let grid_axis = |range: &RangeSection, param: SweepParam, path: &str| -> Result<Vec<f64>, CliError> {
            let axis = Axis { param, values: range.to_values(path)? };
            // Reuse the sweep validator for ranges and lists alike.
            SweepSpec::new(Scenario::default(), vec![axis.clone()], vec![Metric::EDetector]).validate().map_err(
                |e| match e {
                    afterpulse_qkd::Error::InvalidParameter { reason, .. } => CliError::config(path, reason),
                    other => CliError::from_core("contour", other),
                },
            )?;
            Ok(axis.points())
        };
        let grid = IsoQberGrid {
            afterpulse_probs: grid_axis(
                &section.afterpulse_probs,
                SweepParam::AfterpulseProb,
                "contour.afterpulse_probs",
            )?,
            intrinsic_errors: grid_axis(
                &section.intrinsic_errors,
                SweepParam::IntrinsicError,
                "contour.intrinsic_errors",
            )?,
        };
        let loss_db = match section.loss_db {
            Some(l) => l,
            None => self.channel()?.loss_db(),
        };
        let target_qber = target_qber.unwrap_or(section.target_qber);
        if !(target_qber > 0.0 && target_qber < 0.5) {
            return Err(CliError::config("contour.target_qber", format!("{target_qber} must lie in (0, 0.5)")));
        }
        Ok(ContourJob {
            grid,
            loss_db,
            target_qber,
            mean_photon: section.mean_photon.unwrap_or(self.intensities.signal_mu),
            template: self.receiver()?,
            solver: self.solver()?,
        })
    }
}

fn reason_of(e: &afterpulse_qkd::Error) -> String {
    match e {
        afterpulse_qkd::Error::InvalidParameter { reason, .. } => reason.clone(),
        other => other.to_string(),
    }
}
