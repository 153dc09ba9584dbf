//! Subcommand bodies. Each returns the text destined for stdout or the
//! output file, plus warnings for stderr.

use std::fmt::Write as _;

use afterpulse_qkd::decoy::approx_is_valid;
use afterpulse_qkd::sweep::{format_number, write_csv, DecoyPolicy, MuPolicy, ResultRecord};
use afterpulse_qkd::{
    aggregate_afterpulse, baseline_error_change, effective_baseline_error, evaluate_link, run_sweep, solve_optimal_mu,
    trace_iso_qber_surface, Axis, ContourPoint, Metric, SweepParam, SweepSpec,
};

use crate::config::ScenarioConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Pretty,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub body: String,
    pub warnings: Vec<String>,
}

fn model(e: afterpulse_qkd::Error) -> CliError {
    CliError::Model(e)
}

fn quantity_table(rows: &[(&str, &str, String)], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str("quantity,value\n");
            for (key, _, value) in rows {
                let _ = writeln!(out, "{key},{value}");
            }
        }
        Format::Pretty => {
            let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
            for (key, label, value) in rows {
                let value = if value.is_empty() { "-" } else { value };
                let _ = writeln!(out, "{label:<width$}  {value:>17}  ({key})");
            }
        }
    }
    out
}

fn num(v: f64) -> String {
    format_number(v)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

/// Every intermediate quantity of a single operating point.
pub fn report(config: &ScenarioConfig, format: Format) -> Result<Outcome, CliError> {
    let scenario = config.scenario()?;
    let m = evaluate_link(&scenario).map_err(model)?;
    let rx = &scenario.receiver;
    let change = baseline_error_change(rx.intrinsic_error(), rx.background_error(), m.p_ap).ok();
    let est = m.estimate;
    let rows = vec![
        ("p_ap", "aggregate afterpulse probability", num(m.p_ap)),
        ("transmittance", "overall transmittance", num(m.transmittance)),
        ("y0", "background yield", num(m.y0)),
        ("q_mu", "signal gain", num(m.q_mu)),
        ("e_mu", "signal QBER", num(m.e_mu)),
        ("q_nu1", "weak decoy gain", num(m.q_nu1)),
        ("e_nu1", "weak decoy QBER", num(m.e_nu1)),
        ("y0_measured", "vacuum decoy gain", num(m.y0_measured)),
        ("y1_lower", "single-photon yield lower bound", opt(est.map(|e| e.y1_lower))),
        ("e1_upper", "single-photon error upper bound", opt(est.map(|e| e.e1_upper))),
        ("q1_lower", "single-photon gain lower bound", opt(est.map(|e| e.q1_lower))),
        ("e_detector", "baseline error with afterpulsing", num(m.e_detector)),
        ("baseline_change", "relative baseline error change", opt(change)),
        ("visibility", "visibility", num(m.visibility)),
        ("skr_raw", "key rate bound before flooring", num(m.skr_raw)),
        ("skr_lower", "secure key rate lower bound", num(m.skr_lower)),
        ("skr_approx", "closed-form key rate", num(m.skr_approx)),
        ("zero_key", "zero key reason", m.zero_key.map(|z| z.code().to_owned()).unwrap_or_default()),
    ];
    let mut outcome = Outcome { body: quantity_table(&rows, format), warnings: Vec::new() };
    if est.is_some_and(|e| e.clamped) {
        outcome.warnings.push("warning: single-photon error bound clamped to 1/2".into());
    }
    if !approx_is_valid(&scenario).map_err(model)? {
        outcome.warnings.push(
            "warning: skr_approx assumes background yield and transmittance far below their scales; \
             it is outside that regime here"
                .into(),
        );
    }
    Ok(outcome)
}

fn pretty_records(spec: &SweepSpec, records: &[ResultRecord]) -> String {
    let header: Vec<String> = spec
        .axes
        .iter()
        .map(|a| a.param.name().to_owned())
        .chain(spec.outputs.iter().map(|m| m.name().to_owned()))
        .chain(["status".to_owned(), "reason".to_owned()])
        .collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            r.axis_values
                .iter()
                .map(|v| num(*v))
                .chain(r.values.iter().map(|v| v.map(num).unwrap_or_else(|| "-".into())))
                .chain([r.status.name().to_owned(), r.reason.unwrap_or("-").to_owned()])
                .collect()
        })
        .collect();
    table(&header, &rows)
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

fn render_sweep(spec: &SweepSpec, format: Format) -> Result<Outcome, CliError> {
    let records = run_sweep(spec).map_err(|e| CliError::from_core("sweep", e))?;
    let body = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(spec, &records, &mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
        Format::Pretty => pretty_records(spec, &records),
    };
    Ok(Outcome { body, warnings: Vec::new() })
}

/// Evaluate the `[sweep]` section over its grid.
pub fn sweep(config: &ScenarioConfig, format: Format) -> Result<Outcome, CliError> {
    render_sweep(&config.sweep_spec()?, format)
}

/// Key rate against afterpulse probability for two intrinsic errors and the
/// losses 0, 5 and 21 dB, with the weak decoy taken from the loss table and
/// the signal intensity optimised at every point. The configuration supplies
/// everything else.
pub fn skr_vs_afterpulse(config: &ScenarioConfig, format: Format) -> Result<Outcome, CliError> {
    let mut spec = SweepSpec::new(
        config.scenario()?,
        vec![
            Axis::list(SweepParam::IntrinsicError, vec![0.005, 0.02]),
            Axis::list(SweepParam::LossDb, vec![0.0, 5.0, 21.0]),
            Axis::log(SweepParam::AfterpulseProb, 1e-4, 0.2, 40),
        ],
        vec![Metric::SkrLower, Metric::Mu],
    )
    .with_mu_policy(MuPolicy::OptimizePerPoint)
    .with_decoy_policy(DecoyPolicy::LossTable);
    spec.solver = config.solver()?;
    render_sweep(&spec, format)
}

/// Dark-count thresholds over the `[contour]` grid.
pub fn contour(config: &ScenarioConfig, target_qber: Option<f64>, format: Format) -> Result<Outcome, CliError> {
    let job = config.contour_job(target_qber)?;
    let points =
        trace_iso_qber_surface(&job.grid, job.loss_db, job.target_qber, &job.template, job.mean_photon, &job.solver)
            .map_err(|e| CliError::from_core("contour", e))?;
    let header: Vec<String> =
        ["p_ap", "intrinsic_error", "loss_db", "target_qber", "dark_count_prob", "achieved_qber", "status"]
            .map(String::from)
            .to_vec();
    let row = |p: &ContourPoint| -> Vec<String> {
        vec![
            num(p.p_ap),
            num(p.intrinsic_error),
            num(p.loss_db),
            num(job.target_qber),
            opt(p.dark_count_prob),
            opt(p.achieved_qber),
            p.status.code().to_owned(),
        ]
    };
    let rows: Vec<Vec<String>> = points.iter().map(row).collect();
    let body = match format {
        Format::Csv => {
            let mut out = header.join(",") + "\n";
            for r in &rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            out
        }
        Format::Pretty => table(&header, &rows),
    };
    Ok(Outcome { body, warnings: Vec::new() })
}

/// Signal intensity from the closed-form optimality condition at the
/// receiver's afterpulse-inclusive baseline error.
pub fn optimal_mu(config: &ScenarioConfig, format: Format) -> Result<Outcome, CliError> {
    let rx = config.receiver()?;
    let protocol = config.protocol()?;
    let solver = config.solver()?;
    let e_det = effective_baseline_error(rx.intrinsic_error(), rx.background_error(), aggregate_afterpulse(&rx));
    let sol = solve_optimal_mu(e_det, &protocol, &solver).map_err(|e| CliError::from_core("solver", e))?;
    let rows = vec![
        ("mu", "optimal signal intensity", num(sol.mu)),
        ("residual", "optimality residual", num(sol.residual)),
        ("rhs", "condition right-hand side", num(sol.rhs)),
        ("e_detector", "baseline error with afterpulsing", num(e_det)),
        ("boundary", "boundary solution", sol.boundary.to_string()),
    ];
    let mut outcome = Outcome { body: quantity_table(&rows, format), warnings: Vec::new() };
    if sol.boundary {
        outcome
            .warnings
            .push("note: error rate is zero, so the condition is met only at the interval boundary mu = 1".into());
    }
    Ok(outcome)
}
