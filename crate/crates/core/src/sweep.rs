//! Grid evaluation of link metrics and its delimited-text serialisation.
//!
//! A sweep varies up to three parameters of a base [`Scenario`] and records
//! the requested metrics at every node. Nodes are independent and may be
//! evaluated in parallel; records always come back in lexicographic grid
//! order with the first axis outermost.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::decoy::{evaluate_link, LinkMetrics};
use crate::error::{Error, Result};
use crate::model::{
    baseline_error_change, effective_baseline_error, visibility, ChannelModel, IntensitySet, Scenario,
    FIBER_ATTENUATION_DB_PER_KM,
};
use crate::optimize::{maximize_skr_over_mu, SolverConfig, MU_SEARCH_GAP, MU_SEARCH_UPPER};

pub const MAX_GRID_POINTS: usize = 1_000_000;
pub const MAX_AXES: usize = 3;

/// Weak decoy intensities tuned for three reference losses (dB).
pub const WEAK_DECOY_BY_LOSS: [(f64, f64); 3] = [(0.0, 0.038), (5.0, 0.05), (21.0, 0.12)];

/// Fibre loss in dB for a span of `distance_km` at the given attenuation.
pub fn distance_to_loss(distance_km: f64, attenuation_db_per_km: f64) -> Result<f64> {
    if !(distance_km.is_finite() && distance_km >= 0.0) {
        return Err(Error::Domain { what: "distance_km", value: distance_km });
    }
    if !(attenuation_db_per_km.is_finite() && attenuation_db_per_km >= 0.0) {
        return Err(Error::Domain { what: "attenuation_db_per_km", value: attenuation_db_per_km });
    }
    Ok(attenuation_db_per_km * distance_km)
}

/// Tabulated weak decoy intensity for one of the reference losses.
pub fn weak_decoy_for_loss(loss_db: f64) -> Option<f64> {
    WEAK_DECOY_BY_LOSS.iter().find(|(loss, _)| (loss - loss_db).abs() <= 1e-9).map(|&(_, nu)| nu)
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::invalid(
                        stringify!($name),
                        format!("unknown name `{other}`, expected one of: {}", [$($text),+].join(", ")),
                    )),
                }
            }
        }
    };
}

named_enum!(
    /// Scenario parameter that a sweep axis can vary.
    SweepParam {
        AfterpulseProb => "p_ap",
        LossDb => "loss_db",
        DistanceKm => "distance_km",
        IntrinsicError => "intrinsic_error",
        DarkCountProb => "dark_count_prob",
        SignalMu => "signal_mu",
        WeakDecoyNu1 => "weak_decoy_nu1",
    }
);

named_enum!(
    /// Output column of a sweep.
    Metric {
        AfterpulseProb => "p_ap",
        Transmittance => "transmittance",
        Y0 => "y0",
        QMu => "q_mu",
        EMu => "e_mu",
        QNu1 => "q_nu1",
        ENu1 => "e_nu1",
        Y1Lower => "y1_lower",
        E1Upper => "e1_upper",
        Q1Lower => "q1_lower",
        EDetector => "e_detector",
        Visibility => "visibility",
        BaselineChange => "baseline_change",
        SkrRaw => "skr_raw",
        SkrLower => "skr_lower",
        SkrApprox => "skr_approx",
        Mu => "mu",
    }
);

impl Metric {
    /// Metrics that depend only on the baseline error parameters and the
    /// afterpulse probability.
    pub fn is_setup_level(&self) -> bool {
        matches!(self, Metric::AfterpulseProb | Metric::EDetector | Metric::Visibility | Metric::BaselineChange)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValues {
    Range { min: f64, max: f64, count: usize, spacing: Spacing },
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: SweepParam,
    pub values: AxisValues,
}

impl Axis {
    pub fn linear(param: SweepParam, min: f64, max: f64, count: usize) -> Self {
        Self { param, values: AxisValues::Range { min, max, count, spacing: Spacing::Linear } }
    }

    pub fn log(param: SweepParam, min: f64, max: f64, count: usize) -> Self {
        Self { param, values: AxisValues::Range { min, max, count, spacing: Spacing::Log } }
    }

    pub fn list(param: SweepParam, values: Vec<f64>) -> Self {
        Self { param, values: AxisValues::List(values) }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            AxisValues::Range { count, .. } => *count,
            AxisValues::List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let field = format!("axes.{}", self.param);
        match &self.values {
            AxisValues::Range { min, max, count, spacing } => {
                if *count == 0 {
                    return Err(Error::invalid(field, "count must be >= 1"));
                }
                if !(min.is_finite() && max.is_finite() && min <= max) {
                    return Err(Error::invalid(field, format!("range [{min}, {max}] must be finite with min <= max")));
                }
                if *spacing == Spacing::Log && *min <= 0.0 {
                    return Err(Error::invalid(field, format!("log spacing needs positive endpoints, got min {min}")));
                }
            }
            AxisValues::List(values) => {
                if values.is_empty() {
                    return Err(Error::invalid(field, "value list must not be empty"));
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::invalid(field, format!("value {v} is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Grid coordinates along this axis. Range endpoints are reproduced
    /// exactly.
    pub fn points(&self) -> Vec<f64> {
        match &self.values {
            AxisValues::List(v) => v.clone(),
            AxisValues::Range { min, max, count, spacing } => {
                if *count == 1 {
                    return vec![*min];
                }
                let last = (*count - 1) as f64;
                (0..*count)
                    .map(|k| {
                        if k == 0 {
                            return *min;
                        }
                        if k == *count - 1 {
                            return *max;
                        }
                        let t = k as f64 / last;
                        match spacing {
                            Spacing::Linear => min + (max - min) * t,
                            Spacing::Log => (min.ln() + (max.ln() - min.ln()) * t).exp(),
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuPolicy {
    /// Use the scenario's signal intensity (or the swept one).
    #[default]
    Fixed,
    /// Maximise the key rate over the signal intensity at every node.
    OptimizePerPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoyPolicy {
    /// Use the scenario's weak decoy intensity (or the swept one).
    #[default]
    Fixed,
    /// Look the weak decoy up from [`WEAK_DECOY_BY_LOSS`]; every node must
    /// sit at one of the tabulated losses.
    LossTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axes: Vec<Axis>,
    pub outputs: Vec<Metric>,
    pub mu_policy: MuPolicy,
    pub decoy_policy: DecoyPolicy,
    pub solver: SolverConfig,
}

impl SweepSpec {
    pub fn new(base: Scenario, axes: Vec<Axis>, outputs: Vec<Metric>) -> Self {
        Self {
            base,
            axes,
            outputs,
            mu_policy: MuPolicy::default(),
            decoy_policy: DecoyPolicy::default(),
            solver: SolverConfig::default(),
        }
    }

    pub fn with_mu_policy(mut self, policy: MuPolicy) -> Self {
        self.mu_policy = policy;
        self
    }

    pub fn with_decoy_policy(mut self, policy: DecoyPolicy) -> Self {
        self.decoy_policy = policy;
        self
    }

    pub fn grid_len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    fn setup_only(&self) -> bool {
        self.outputs.iter().all(Metric::is_setup_level)
    }

    fn has_axis(&self, param: SweepParam) -> bool {
        self.axes.iter().any(|a| a.param == param)
    }

    /// Check the spec and every grid node before anything is evaluated.
    pub fn validate(&self) -> Result<()> {
        if self.axes.len() > MAX_AXES {
            return Err(Error::invalid("axes", format!("at most {MAX_AXES} axes, got {}", self.axes.len())));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            axis.validate()?;
            if self.axes[..i].iter().any(|a| a.param == axis.param) {
                return Err(Error::invalid(format!("axes.{}", axis.param), "parameter appears on two axes"));
            }
        }
        if self.has_axis(SweepParam::LossDb) && self.has_axis(SweepParam::DistanceKm) {
            return Err(Error::invalid("axes", "loss_db and distance_km cannot both be swept"));
        }
        if self.outputs.is_empty() {
            return Err(Error::invalid("outputs", "at least one metric is required"));
        }
        for (i, m) in self.outputs.iter().enumerate() {
            if self.outputs[..i].contains(m) {
                return Err(Error::invalid("outputs", format!("metric `{m}` listed twice")));
            }
        }
        if self.mu_policy == MuPolicy::OptimizePerPoint && self.has_axis(SweepParam::SignalMu) {
            return Err(Error::invalid("axes.signal_mu", "cannot sweep signal_mu while optimising it"));
        }
        if self.decoy_policy == DecoyPolicy::LossTable && self.has_axis(SweepParam::WeakDecoyNu1) {
            return Err(Error::invalid("axes.weak_decoy_nu1", "cannot sweep weak_decoy_nu1 with the loss table"));
        }
        let len = self.grid_len();
        if len > MAX_GRID_POINTS {
            return Err(Error::invalid("axes", format!("grid has {len} points, limit is {MAX_GRID_POINTS}")));
        }
        self.solver.validate()?;
        let coords: Vec<Vec<f64>> = self.axes.iter().map(Axis::points).collect();
        for k in 0..len {
            self.node(&coords, k)?;
        }
        Ok(())
    }

    fn coordinates(coords: &[Vec<f64>], mut k: usize) -> Vec<f64> {
        let mut out = vec![0.0; coords.len()];
        for (slot, axis) in out.iter_mut().zip(coords).rev() {
            *slot = axis[k % axis.len()];
            k /= axis.len();
        }
        out
    }

    /// Scenario at grid node `k`.
    fn node(&self, coords: &[Vec<f64>], k: usize) -> Result<Node> {
        let values = Self::coordinates(coords, k);
        let setup_only = self.setup_only();
        let mut scenario = self.base.clone();
        let mut p_ap_override = None;
        let mut mu = scenario.intensities.signal_mu();
        let mut nu1 = scenario.intensities.weak_decoy_nu1();
        let field = |p: SweepParam| {
            move |e: Error| match e {
                Error::InvalidParameter { reason, .. } => Error::invalid(format!("axes.{p}"), reason),
                other => other,
            }
        };

        for (axis, &v) in self.axes.iter().zip(&values) {
            let p = axis.param;
            match p {
                SweepParam::AfterpulseProb => {
                    if setup_only {
                        if !(v.is_finite() && v >= 0.0) {
                            return Err(Error::invalid("axes.p_ap", format!("{v} must be >= 0")));
                        }
                        p_ap_override = Some(v);
                    } else {
                        scenario.receiver = scenario.receiver.with_afterpulse_prob(v).map_err(field(p))?;
                    }
                }
                SweepParam::LossDb => scenario.channel = ChannelModel::from_loss_db(v).map_err(field(p))?,
                SweepParam::DistanceKm => {
                    let attenuation = match self.base.channel {
                        ChannelModel::Fiber { attenuation_db_per_km, .. } => attenuation_db_per_km,
                        ChannelModel::Loss { .. } => FIBER_ATTENUATION_DB_PER_KM,
                    };
                    scenario.channel = ChannelModel::fiber(attenuation, v).map_err(field(p))?;
                }
                SweepParam::IntrinsicError => {
                    scenario.receiver = scenario.receiver.with_intrinsic_error(v).map_err(field(p))?;
                }
                SweepParam::DarkCountProb => {
                    scenario.receiver = scenario.receiver.with_dark_count_prob_total(v).map_err(field(p))?;
                }
                SweepParam::SignalMu => mu = v,
                SweepParam::WeakDecoyNu1 => nu1 = v,
            }
        }

        if setup_only {
            return Ok(Node { values, scenario, p_ap_override });
        }
        if self.decoy_policy == DecoyPolicy::LossTable {
            let loss = scenario.channel.loss_db();
            nu1 = weak_decoy_for_loss(loss).ok_or_else(|| {
                Error::invalid(
                    "decoy_policy",
                    format!("no tabulated weak decoy for {loss} dB; tabulated losses are 0, 5 and 21 dB"),
                )
            })?;
        }
        let vacuum = scenario.intensities.vacuum_decoy();
        if self.mu_policy == MuPolicy::OptimizePerPoint {
            if !(nu1 > 0.0 && nu1 + MU_SEARCH_GAP < MU_SEARCH_UPPER) {
                return Err(Error::invalid("weak_decoy_nu1", format!("{nu1} leaves no room for the signal intensity")));
            }
            mu = MU_SEARCH_UPPER;
        }
        scenario.intensities = IntensitySet::new(mu, nu1, vacuum)?;
        // Reject nodes whose transmittance underflows.
        scenario.channel.transmittance(scenario.receiver.detector_efficiency())?;
        Ok(Node { values, scenario, p_ap_override })
    }
}

struct Node {
    values: Vec<f64>,
    scenario: Scenario,
    p_ap_override: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    Infeasible,
    ModelDomainError,
}

impl RecordStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Infeasible => "infeasible",
            RecordStatus::ModelDomainError => "model-domain-error",
        }
    }
}

/// One grid node's outcome. `values` lines up with [`SweepSpec::outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub axis_values: Vec<f64>,
    pub values: Vec<Option<f64>>,
    /// Signal intensity the link metrics were evaluated at (the optimum
    /// under [`MuPolicy::OptimizePerPoint`]); `None` for setup-level sweeps.
    pub mu_used: Option<f64>,
    pub status: RecordStatus,
    pub reason: Option<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRecord>> {
    run_sweep_with(spec, Execution::Parallel)
}

pub fn run_sweep_with(spec: &SweepSpec, execution: Execution) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let coords: Vec<Vec<f64>> = spec.axes.iter().map(Axis::points).collect();
    let eval = |k: usize| {
        let node = spec.node(&coords, k).expect("validated node");
        evaluate_node(spec, node)
    };
    let len = spec.grid_len();
    Ok(match execution {
        Execution::Serial => (0..len).map(eval).collect(),
        Execution::Parallel => (0..len).into_par_iter().map(eval).collect(),
    })
}

fn evaluate_node(spec: &SweepSpec, node: Node) -> ResultRecord {
    let Node { values: axis_values, mut scenario, p_ap_override } = node;
    let rx = &scenario.receiver;
    let (e_prime, e0) = (rx.intrinsic_error(), rx.background_error());

    if spec.setup_only() {
        let p_ap = p_ap_override.unwrap_or_else(|| crate::model::aggregate_afterpulse(rx));
        let change = baseline_error_change(e_prime, e0, p_ap);
        let values = spec
            .outputs
            .iter()
            .map(|m| match m {
                Metric::AfterpulseProb => Some(p_ap),
                Metric::EDetector => Some(effective_baseline_error(e_prime, e0, p_ap)),
                Metric::Visibility => Some(visibility(e_prime, e0, p_ap)),
                Metric::BaselineChange => change.as_ref().ok().copied(),
                _ => None,
            })
            .collect();
        let (status, reason) = match (&change, spec.outputs.contains(&Metric::BaselineChange)) {
            (Err(e), true) => (RecordStatus::ModelDomainError, Some(e.code())),
            _ => (RecordStatus::Ok, None),
        };
        return ResultRecord { axis_values, values, mu_used: None, status, reason };
    }

    let failed = |axis_values: Vec<f64>, mu: Option<f64>, e: Error| ResultRecord {
        values: vec![None; spec.outputs.len()],
        axis_values,
        mu_used: mu,
        status: RecordStatus::ModelDomainError,
        reason: Some(e.code()),
    };

    if spec.mu_policy == MuPolicy::OptimizePerPoint {
        let nu1 = scenario.intensities.weak_decoy_nu1();
        let optimum = match maximize_skr_over_mu(rx, &scenario.channel, nu1, &scenario.protocol, &spec.solver) {
            Ok(o) => o,
            Err(e) => return failed(axis_values, None, e),
        };
        match IntensitySet::new(optimum.mu, nu1, scenario.intensities.vacuum_decoy()) {
            Ok(set) => scenario.intensities = set,
            Err(e) => return failed(axis_values, Some(optimum.mu), e),
        }
    }
    let mu = scenario.intensities.signal_mu();
    let metrics = match evaluate_link(&scenario) {
        Ok(m) => m,
        Err(e) => return failed(axis_values, Some(mu), e),
    };
    let change = baseline_error_change(e_prime, e0, metrics.p_ap).ok();
    let values = spec.outputs.iter().map(|m| link_metric(&metrics, *m, mu, change)).collect();
    let (status, reason) = match metrics.zero_key {
        Some(r) => (RecordStatus::Infeasible, Some(r.code())),
        None => (RecordStatus::Ok, None),
    };
    ResultRecord { axis_values, values, mu_used: Some(mu), status, reason }
}

fn link_metric(m: &LinkMetrics, metric: Metric, mu: f64, change: Option<f64>) -> Option<f64> {
    Some(match metric {
        Metric::AfterpulseProb => m.p_ap,
        Metric::Transmittance => m.transmittance,
        Metric::Y0 => m.y0,
        Metric::QMu => m.q_mu,
        Metric::EMu => m.e_mu,
        Metric::QNu1 => m.q_nu1,
        Metric::ENu1 => m.e_nu1,
        Metric::Y1Lower => m.estimate?.y1_lower,
        Metric::E1Upper => m.estimate?.e1_upper,
        Metric::Q1Lower => m.estimate?.q1_lower,
        Metric::EDetector => m.e_detector,
        Metric::Visibility => m.visibility,
        Metric::BaselineChange => change?,
        Metric::SkrRaw => m.skr_raw,
        Metric::SkrLower => m.skr_lower,
        Metric::SkrApprox => m.skr_approx,
        Metric::Mu => mu,
    })
}

/// Ten significant digits, locale independent.
pub fn format_number(v: f64) -> String {
    format!("{v:.9e}")
}

/// Comma-separated output: a header of axis and metric names followed by
/// `status` and `reason`, then one row per record with `\n` line endings.
/// Missing values are empty fields.
pub fn write_csv<W: Write>(spec: &SweepSpec, records: &[ResultRecord], out: &mut W) -> io::Result<()> {
    let header: Vec<&str> = spec
        .axes
        .iter()
        .map(|a| a.param.name())
        .chain(spec.outputs.iter().map(|m| m.name()))
        .chain(["status", "reason"])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut fields: Vec<String> = r.axis_values.iter().map(|v| format_number(*v)).collect();
        fields.extend(r.values.iter().map(|v| v.map(format_number).unwrap_or_default()));
        fields.push(r.status.name().to_owned());
        fields.push(r.reason.unwrap_or("").to_owned());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
