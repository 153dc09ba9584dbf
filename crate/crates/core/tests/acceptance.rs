//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use afterpulse_qkd::model::{photon_transmittance, PulseClass};
use afterpulse_qkd::sweep::{run_sweep_with, write_csv, DecoyPolicy, Execution, MuPolicy};
use afterpulse_qkd::{
    baseline_error_change, decoy_consistency_check, effective_baseline_error, estimate_single_photon, gain_total,
    maximize_skr_over_mu, qber_i, qber_total, run_sweep, skr_approx, solve_optimal_mu, trace_iso_qber_surface,
    visibility, yield_background, yield_i, Axis, ChannelModel, DecoyObservations, IntensitySet, IsoQberGrid, Metric,
    ProtocolParams, ReceiverModel, Scenario, SolverConfig, SweepParam, SweepSpec,
};
use common::{entropy, optimal_mu_by_bisection, Link};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let elapsed = start.elapsed();
    check(elapsed < budget, format!("took {elapsed:?}, budget {budget:?}"))
}

fn receiver(p_ap: f64, p_dc: f64, e_prime: f64) -> ReceiverModel {
    ReceiverModel::builder()
        .identical_detectors(2, p_ap)
        .dark_count_prob_total(p_dc)
        .intrinsic_error(e_prime)
        .build()
        .expect("valid receiver")
}

fn ac1_worked_example() -> Outcome {
    let e = effective_baseline_error(0.02, 0.5, 0.008);
    let change = (e - 0.02) / 0.02;
    check((change - 0.19).abs() <= 0.002, format!("relative change {change}"))?;
    Ok(format!("e_detector = {e:.7}, change = {:.2}%", 100.0 * change))
}

fn ac2_specialisation() -> Outcome {
    for p in [0.001, 0.01, 0.1] {
        let got = baseline_error_change(0.02, 0.5, p).map_err(|e| e.to_string())?;
        let want = 24.0 * p / (1.0 + p);
        check((got - want).abs() <= 4.0 * f64::EPSILON * want, format!("p_AP={p}: {got} vs {want}"))?;
    }
    Ok("24 p/(1+p) reproduced to within 4 ulp".into())
}

fn ac3_baseline_curves() -> Outcome {
    let start = Instant::now();
    for e_prime in [0.005, 0.02, 0.05, 0.25, 0.75] {
        let base = Scenario { receiver: receiver(0.0, 6e-7, e_prime), ..Default::default() };
        let spec =
            SweepSpec::new(base, vec![Axis::log(SweepParam::AfterpulseProb, 1e-4, 10.0, 200)], vec![Metric::EDetector]);
        let records = run_sweep(&spec).map_err(|e| e.to_string())?;
        let curve: Vec<f64> = records.iter().map(|r| r.values[0].unwrap()).collect();
        let increasing = curve.windows(2).all(|w| w[1] > w[0]);
        let decreasing = curve.windows(2).all(|w| w[1] < w[0]);
        if e_prime < 0.5 {
            check(increasing, format!("e'={e_prime}: not strictly increasing"))?;
        } else {
            check(decreasing, format!("e'={e_prime}: not strictly decreasing"))?;
        }
        let far = effective_baseline_error(e_prime, 0.5, 1e3);
        check((far - 0.5).abs() < 1e-3, format!("e'={e_prime}: {far} at p_AP=1e3"))?;
    }
    within_budget(start, Duration::from_secs(1))?;
    Ok(format!("5 curves monotone as required, saturated at p_AP=1e3 ({:?})", start.elapsed()))
}

fn ac4_iso_qber_thresholds() -> Outcome {
    let start = Instant::now();
    let axis = |max: f64| (0..50).map(|k| max * k as f64 / 49.0).collect::<Vec<_>>();
    let grid = IsoQberGrid { afterpulse_probs: axis(0.1), intrinsic_errors: axis(0.1) };
    let template = ReceiverModel::default();
    let cfg = SolverConfig::default();
    let near = trace_iso_qber_surface(&grid, 10.5, 0.09, &template, 0.48, &cfg).map_err(|e| e.to_string())?;
    let far = trace_iso_qber_surface(&grid, 21.0, 0.09, &template, 0.48, &cfg).map_err(|e| e.to_string())?;
    within_budget(start, Duration::from_secs(10))?;

    let mut feasible = 0;
    let mut boundary = 0;
    for (a, b) in near.iter().zip(&far) {
        match (a.dark_count_prob, b.dark_count_prob) {
            // The dark-count-free QBER equals the target: no dark counts are
            // admissible at either loss.
            (Some(0.0), Some(t_far)) => {
                boundary += 1;
                check(t_far == 0.0, format!("node ({}, {}): boundary mismatch", a.p_ap, a.intrinsic_error))?;
            }
            (Some(t_near), Some(t_far)) => {
                feasible += 1;
                check(t_far < t_near, format!("node ({}, {}): {t_far} !< {t_near}", a.p_ap, a.intrinsic_error))?;
                for (p, loss) in [(a, 10.5), (b, 21.0)] {
                    let rx = ReceiverModel::builder()
                        .identical_detectors(2, p.p_ap)
                        .intrinsic_error(p.intrinsic_error)
                        .dark_count_prob_total(p.dark_count_prob.unwrap())
                        .build()
                        .map_err(|e| e.to_string())?;
                    let e =
                        qber_total(&rx, &ChannelModel::from_loss_db(loss).unwrap(), 0.48).map_err(|e| e.to_string())?;
                    check((e - 0.09).abs() <= 1e-6, format!("re-evaluated QBER {e} at {loss} dB"))?;
                }
            }
            (None, None) => {}
            _ => return Err(format!("feasibility differs at ({}, {})", a.p_ap, a.intrinsic_error)),
        }
    }
    check(feasible > 0, "no feasible nodes")?;
    Ok(format!(
        "{feasible}/2500 feasible nodes, 21 dB strictly below 10.5 dB, {boundary} on the zero-threshold boundary ({:?})",
        start.elapsed()
    ))
}

fn ac5_bound_sandwich() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut infeasible = 0;
    for draw in 0..200 {
        let loss = rng.gen_range(0.0..=25.0);
        let p_ap = rng.gen_range(0.0..=0.05);
        let e_prime = rng.gen_range(0.0..=0.05);
        let p_dc = rng.gen_range(0.0..=1e-5);
        let nu1 = 0.2 * (1.0 - rng.gen::<f64>());
        let mu = nu1 + (1.0 - nu1) * (1.0 - rng.gen::<f64>());
        let rx = receiver(p_ap, p_dc, e_prime);
        let ch = ChannelModel::from_loss_db(loss).unwrap();
        let obs = DecoyObservations {
            q_mu: gain_total(&rx, &ch, mu).unwrap(),
            e_mu: qber_total(&rx, &ch, mu).unwrap(),
            q_nu1: gain_total(&rx, &ch, nu1).unwrap(),
            e_nu1: qber_total(&rx, &ch, nu1).unwrap(),
            y0: gain_total(&rx, &ch, 0.0).unwrap(),
            mu,
            nu1,
            e0: 0.5,
        };
        let Ok(est) = estimate_single_photon(&obs) else {
            infeasible += 1;
            continue;
        };
        let y1 = yield_i(&rx, &ch, 1).unwrap();
        let e1 = qber_i(&rx, &ch, 1).unwrap();
        check(est.y1_lower <= y1, format!("draw {draw}: y1_lower {} > Y1 {y1}", est.y1_lower))?;
        check(est.e1_upper >= e1, format!("draw {draw}: e1_upper {} < e1 {e1}", est.e1_upper))?;
    }
    within_budget(start, Duration::from_secs(1))?;
    Ok(format!("200 draws, 0 violations ({infeasible} without a feasible estimate)"))
}

fn fig3_spec() -> SweepSpec {
    SweepSpec::new(
        Scenario::default(),
        vec![
            Axis::list(SweepParam::IntrinsicError, vec![0.005, 0.02]),
            Axis::list(SweepParam::LossDb, vec![0.0, 5.0, 21.0]),
            Axis::log(SweepParam::AfterpulseProb, 1e-4, 0.2, 40),
        ],
        vec![Metric::SkrLower, Metric::Mu],
    )
    .with_mu_policy(MuPolicy::OptimizePerPoint)
    .with_decoy_policy(DecoyPolicy::LossTable)
}

/// `a` must sit below `b`: strictly while `b` is positive, equal once both
/// curves have reached the zero-key cutoff.
fn below(a: f64, b: f64) -> bool {
    if b > 0.0 {
        a < b
    } else {
        a == 0.0
    }
}

fn ac6_key_rate_curves() -> Outcome {
    let start = Instant::now();
    let spec = fig3_spec();
    let records = run_sweep(&spec).map_err(|e| e.to_string())?;
    within_budget(start, Duration::from_secs(10))?;
    let n = 40;
    let curve = |ei: usize, li: usize| -> Vec<f64> {
        records[(ei * 3 + li) * n..(ei * 3 + li + 1) * n].iter().map(|r| r.values[0].unwrap()).collect()
    };
    for ei in 0..2 {
        for li in 0..3 {
            let c = curve(ei, li);
            check(c[0] > 0.0, format!("curve ({ei},{li}) not positive at p_AP=1e-4"))?;
            check(c.windows(2).all(|w| w[1] <= w[0]), format!("curve ({ei},{li}) increases"))?;
            if li > 0 {
                let nearer = curve(ei, li - 1);
                check(c.iter().zip(&nearer).all(|(a, b)| below(*a, *b)), format!("loss ordering ({ei},{li})"))?;
            }
        }
    }
    for li in 0..3 {
        let (low, high) = (curve(0, li), curve(1, li));
        check(high.iter().zip(&low).all(|(a, b)| below(*a, *b)), format!("e' ordering at loss index {li}"))?;
    }

    let positive: Vec<_> = records.iter().filter(|r| r.values[0].unwrap() > 0.0).collect();
    let step = positive.len() as f64 / 20.0;
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let r = positive[(k as f64 * step) as usize];
        let (e_prime, loss, p_ap) = (r.axis_values[0], r.axis_values[1], r.axis_values[2]);
        let link = Link {
            p_ap,
            p_dc: 6e-7,
            e_prime,
            e0: 0.5,
            eta_bob: 0.1,
            loss_db: loss,
            mu: r.mu_used.unwrap(),
            nu1: [(0.0, 0.038), (5.0, 0.05), (21.0, 0.12)].iter().find(|(l, _)| *l == loss).unwrap().1,
            f: 1.16,
            q: 0.5,
        };
        let want = link.key_rate();
        let rel = (r.values[0].unwrap() - want).abs() / want;
        worst = worst.max(rel);
        check(rel <= 1e-12, format!("oracle mismatch {rel:e} at (e'={e_prime}, {loss} dB, p_AP={p_ap})"))?;
    }
    Ok(format!("6 curves ordered and monotone; worst oracle gap {worst:.1e} ({:?})", start.elapsed()))
}

fn ac7_optimal_mu() -> Outcome {
    let start = Instant::now();
    let protocol = ProtocolParams::default();
    let cfg = SolverConfig::default();
    for k in 0..50 {
        let e = 0.0005 + 0.0970 * k as f64 / 49.0;
        let r = solve_optimal_mu(e, &protocol, &cfg).map_err(|err| format!("e={e}: {err}"))?;
        let residual = (1.0 - r.mu) * (-r.mu).exp() - r.rhs;
        check(residual.abs() < 1e-10, format!("e={e}: residual {residual:e}"))?;
    }
    let r = solve_optimal_mu(0.03, &protocol, &cfg).map_err(|e| e.to_string())?;
    let oracle = optimal_mu_by_bisection(0.03, 1.16);
    check((r.mu - oracle).abs() < 1e-6, format!("mu {} vs oracle {oracle}", r.mu))?;
    check((r.mu - 0.526).abs() < 1e-3, format!("mu {} not near 0.526", r.mu))?;

    let rx = receiver(0.0, 1e-12, 0.02);
    let ch = ChannelModel::from_loss_db(20.0).unwrap();
    let direct = maximize_skr_over_mu(&rx, &ch, 0.01, &protocol, &cfg).map_err(|e| e.to_string())?;
    let closed = solve_optimal_mu(0.02, &protocol, &cfg).map_err(|e| e.to_string())?;
    check((direct.mu - closed.mu).abs() < 0.02, format!("direct {} vs closed form {}", direct.mu, closed.mu))?;
    within_budget(start, Duration::from_secs(5))?;
    Ok(format!("residuals < 1e-10; mu(0.03) = {:.6}; direct {:.4} vs closed form {:.4}", r.mu, direct.mu, closed.mu))
}

fn ac8_structural_identities() -> Outcome {
    for e_prime in [0.0, 0.005, 0.02, 0.3, 0.75, 1.0] {
        for p in [0.0, 1e-4, 0.008, 0.1, 1.0] {
            let v = visibility(e_prime, 0.5, p);
            let e = effective_baseline_error(e_prime, 0.5, p);
            check(
                ((1.0 - v) / 2.0 - e).abs() <= 2.0 * f64::EPSILON,
                format!("visibility round trip at ({e_prime}, {p})"),
            )?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let rx = receiver(rng.gen_range(0.0..0.1), rng.gen_range(0.0..1e-5), rng.gen_range(0.0..0.1));
        let ch = ChannelModel::from_loss_db(rng.gen_range(0.0..30.0)).unwrap();
        for i in 0..6 {
            check(decoy_consistency_check(&rx, &ch, i), format!("state dependence at i={i}"))?;
            let a = afterpulse_qkd::model::photon_state_for(PulseClass::Signal, &rx, &ch, i);
            let b = afterpulse_qkd::model::photon_state_for(PulseClass::WeakDecoy, &rx, &ch, i);
            check(a == b, "signal/decoy photon states differ")?;
        }
    }

    let ulp = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs();
    for (p_dc, e_prime, loss, mu) in [(6e-7, 0.005, 0.0, 0.5), (6e-7, 0.02, 21.0, 0.48), (1e-5, 0.03, 10.5, 0.7)] {
        let rx = receiver(0.0, p_dc, e_prime);
        let ch = ChannelModel::from_loss_db(loss).unwrap();
        let eta = 0.1 * 10f64.powf(-loss / 10.0);
        let s = -(-eta * mu).exp_m1();
        check(yield_background(&rx) == p_dc, "Y0 != p_DC")?;
        for i in 1..5u32 {
            let y = yield_i(&rx, &ch, i).unwrap();
            check(ulp(y, p_dc + photon_transmittance(eta, i)), format!("Y_{i}"))?;
        }
        let q = gain_total(&rx, &ch, mu).unwrap();
        check(ulp(q, p_dc + s), "Q_mu")?;
        let e = qber_total(&rx, &ch, mu).unwrap();
        check(ulp(e, (0.5 * p_dc + e_prime * s) / (p_dc + s)), "E_mu")?;
        let scenario = Scenario {
            receiver: rx.clone(),
            channel: ch,
            intensities: IntensitySet::weak_vacuum(mu, 0.05).unwrap(),
            protocol: ProtocolParams::default(),
        };
        let approx = skr_approx(&scenario, mu).unwrap();
        let h = entropy(e_prime);
        let plain = -eta * mu * 1.16 * h + eta * mu * (-mu).exp() * (1.0 - h);
        check((approx - plain).abs() <= 1e-14 * plain.abs(), format!("approximate key rate {approx} vs {plain}"))?;
    }
    Ok("visibility round trip, state independence and p_AP=0 reductions hold".into())
}

fn ac9_determinism() -> Outcome {
    let spec = fig3_spec();
    let render = |execution| -> Result<Vec<u8>, String> {
        let records = run_sweep_with(&spec, execution).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_csv(&spec, &records, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let first = render(Execution::Parallel)?;
    let second = render(Execution::Parallel)?;
    let serial = render(Execution::Serial)?;
    check(first == second, "two parallel runs differ")?;
    check(first == serial, "parallel and serial runs differ")?;
    Ok(format!("{} bytes identical across runs", first.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 baseline error worked example", ac1_worked_example),
        ("AC2 relative change specialisation", ac2_specialisation),
        ("AC3 baseline error curves", ac3_baseline_curves),
        ("AC4 iso-QBER dark count thresholds", ac4_iso_qber_thresholds),
        ("AC5 decoy bound sandwich", ac5_bound_sandwich),
        ("AC6 key rate versus afterpulsing", ac6_key_rate_curves),
        ("AC7 optimal signal intensity", ac7_optimal_mu),
        ("AC8 structural identities", ac8_structural_identities),
        ("AC9 sweep determinism", ac9_determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
