use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn apqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apqkd")).args(args).output().expect("binary runs")
}

fn config_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn sample(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value(csv: &str, key: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in\n{csv}"))
        .to_owned()
}

/// Asserts the failure carries `code` and prints exactly one line with `prefix`.
fn assert_fails(o: &Output, code: i32, prefix: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(prefix), "{err}");
}

#[test]
fn report_defaults_at_zero_loss_are_finite_with_positive_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), "c.toml", "[intensities]\nsignal_mu = 0.48\nweak_decoy_nu1 = 0.038\n");
    let o = apqkd(&["report", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("quantity,value\n"));
    for line in out.lines().skip(1).filter(|l| !l.starts_with("zero_key")) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.is_finite(), "{line}");
    }
    assert!(value(&out, "skr_lower").parse::<f64>().unwrap() > 0.0);
}

#[test]
fn report_shows_afterpulse_inclusive_baseline_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), "c.toml", "[receiver]\nafterpulse_prob = 0.008\nintrinsic_error = 0.02\n");
    let o = apqkd(&["report", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    let out = stdout(&o);
    let e: f64 = value(&out, "e_detector").parse().unwrap();
    assert!((e - 0.0238095).abs() < 5e-8);
    let change: f64 = value(&out, "baseline_change").parse().unwrap();
    assert!((change - 0.1905).abs() < 1e-4);
}

#[test]
fn report_warns_when_closed_form_is_out_of_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), "c.toml", "[receiver]\ndetector_efficiency = 0.9\n");
    let o = apqkd(&["report", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("skr_approx"));
    assert!(stdout(&o).contains("(skr_approx)"));
}

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = apqkd(&["sweep", "--config", &sample("skr-distance.toml"), "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().next().unwrap(), "distance_km,skr_lower,mu,e_mu,status,reason");
    assert_eq!(text.lines().count(), 32);
}

#[test]
fn single_node_sweep_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(
        dir.path(),
        "c.toml",
        "[sweep]\noutputs = [\"e_mu\"]\n[[sweep.axes]]\nparam = \"loss_db\"\nmin = 3.0\nmax = 3.0\ncount = 1\n",
    );
    let o = apqkd(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn baseline_sweep_runs_past_unit_afterpulse_probability() {
    let o = apqkd(&["sweep", "--config", &sample("baseline-error.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1 + 5 * 60);
    // e' = 0.75 saturates towards 0.5 from above.
    let last: Vec<&str> = out.lines().last().unwrap().split(',').collect();
    let e: f64 = last[2].parse().unwrap();
    assert!(e > 0.5 && e < 0.53);
}

#[test]
fn contour_nodes_sit_on_the_target_qber() {
    let o = apqkd(&["contour", "--config", &sample("iso-qber-10p5db.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1 + 2500);
    let mut feasible = 0;
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[6] == "ok" {
            feasible += 1;
            assert!((f[5].parse::<f64>().unwrap() - 0.09).abs() < 1e-6, "{line}");
        }
    }
    assert!(feasible > 0);
}

#[test]
fn contour_thresholds_shrink_with_loss() {
    let run = |name: &str| stdout(&apqkd(&["contour", "--config", &sample(name)]));
    let (near, far) = (run("iso-qber-10p5db.toml"), run("iso-qber-21db.toml"));
    for (a, b) in near.lines().zip(far.lines()).skip(1) {
        let (a, b): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), b.split(',').collect());
        if a[6] == "ok" && b[6] == "ok" {
            assert!(b[4].parse::<f64>().unwrap() <= a[4].parse::<f64>().unwrap());
        }
    }
}

#[test]
fn target_qber_flag_overrides_configuration() {
    let o = apqkd(&["contour", "--config", &sample("iso-qber-21db.toml"), "--target-qber", "0.05"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().contains(",5.000000000e-2,"));
}

#[test]
fn optimal_mu_reports_residual_and_baseline_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), "c.toml", "[receiver]\nafterpulse_prob = 0.008\nintrinsic_error = 0.02\n");
    let o = apqkd(&["optimal-mu", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mu: f64 = value(&out, "mu").parse().unwrap();
    let residual: f64 = value(&out, "residual").parse().unwrap();
    assert!(mu > 0.0 && mu < 1.0);
    assert!(residual.abs() < 1e-10);
    assert_eq!(value(&out, "e_detector"), "2.380952381e-2");
    assert_eq!(value(&out, "boundary"), "false");
}

#[test]
fn optimal_mu_without_errors_is_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), "c.toml", "[receiver]\nintrinsic_error = 0.0\n");
    let o = apqkd(&["optimal-mu", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    assert_eq!(value(&stdout(&o), "boundary"), "true");
    assert_eq!(value(&stdout(&o), "mu"), "1.000000000e0");
}

#[test]
fn optimal_mu_without_solution_explains_why() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path(), "c.toml", "[receiver]\nintrinsic_error = 0.2\n");
    let o = apqkd(&["optimal-mu", "--config", cfg.to_str().unwrap()]);
    assert_fails(&o, 3, "error[model]: no-solution:");
    assert!(stderr(&o).contains("error rate too high"));
}

#[test]
fn preset_curves_fall_with_afterpulsing() {
    let o = apqkd(&["skr-vs-afterpulse"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "intrinsic_error,loss_db,p_ap,skr_lower,mu,status,reason");
    let rows: Vec<Vec<String>> = out.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2 * 3 * 40);
    for curve in rows.chunks(40) {
        let skr: Vec<f64> = curve.iter().map(|r| r[3].parse().unwrap()).collect();
        assert!(skr[0] > 0.0);
        assert!(skr.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[receiver]\nintrinsic_error = 2.0\n", "error[config]: receiver.intrinsic_error:"),
        ("[receiver]\ncolour = 1\n", "error[config]: receiver.colour:"),
        ("[channel\n", "error[config]: line 1:"),
        ("[intensities]\nsignal_mu = 0.04\n", "error[config]: intensities.weak_decoy_nu1:"),
        ("[solver]\nbracket = [0.5, 0.1]\n", "error[config]: solver.bracket:"),
    ];
    for (k, (text, prefix)) in cases.iter().enumerate() {
        let cfg = config_file(dir.path(), &format!("c{k}.toml"), text);
        assert_fails(&apqkd(&["report", "--config", cfg.to_str().unwrap()]), 2, prefix);
    }
    let cfg = config_file(dir.path(), "s.toml", "[sweep]\n[[sweep.axes]]\nparam = \"colour\"\nvalues = [1.0]\n");
    assert_fails(&apqkd(&["sweep", "--config", cfg.to_str().unwrap()]), 2, "error[config]: sweep.axes[0].param:");
    assert_fails(&apqkd(&["sweep"]), 2, "error[config]: sweep:");
    assert_fails(&apqkd(&["contour", "--target-qber", "0.6"]), 2, "error[config]: --target-qber:");
}

#[test]
fn model_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        config_file(dir.path(), "c.toml", "[receiver]\ndark_count_prob_total = 0.0\n[channel]\nloss_db = 4000.0\n");
    assert_fails(&apqkd(&["report", "--config", cfg.to_str().unwrap()]), 3, "error[model]:");
    let cfg = config_file(dir.path(), "g.toml", "[receiver]\nafterpulse_prob = 1.0\ndark_count_prob_total = 0.5\n");
    assert_fails(&apqkd(&["report", "--config", cfg.to_str().unwrap()]), 3, "error[model]: gain-exceeds-unity:");
}

#[test]
fn io_errors_exit_4_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let o = apqkd(&["report", "--config", missing.to_str().unwrap()]);
    assert_fails(&o, 4, "error[io]:");
    assert!(stderr(&o).contains("missing.toml"));
    let unwritable = dir.path().join("no-such-dir").join("out.csv");
    let o = apqkd(&["sweep", "--config", &sample("skr-distance.toml"), "--output", unwritable.to_str().unwrap()]);
    assert_fails(&o, 4, "error[io]:");
    assert!(stderr(&o).contains("out.csv"));
}

#[test]
fn seedless_changes_nothing() {
    let a = apqkd(&["contour", "--config", &sample("iso-qber-21db.toml")]);
    let b = apqkd(&["contour", "--config", &sample("iso-qber-21db.toml"), "--seedless"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn every_sample_configuration_parses_and_reports() {
    for entry in fs::read_dir(format!("{}/configs", env!("CARGO_MANIFEST_DIR"))).unwrap() {
        let path = entry.unwrap().path();
        let o = apqkd(&["report", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
    }
}
