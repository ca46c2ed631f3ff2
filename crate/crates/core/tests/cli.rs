mod support;

use std::path::Path;
use std::process::Command;

use zeno::cli::{evaluate, CommandKind, RunConfig, SweepAxis, SweepScalar, Table};
use zeno::model::SpectralDensity;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zeno"))
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

/// Set `ZENO_BLESS=1` to rewrite the golden files.
#[test]
fn golden_files_match() {
    let dir = tempfile::tempdir().unwrap();
    let bless = std::env::var_os("ZENO_BLESS").is_some();
    for case in support::CASES {
        let bytes = support::run_case(case, dir.path()).unwrap();
        let golden = support::golden_path(case);
        if bless {
            std::fs::write(&golden, &bytes).unwrap();
        }
        assert_eq!(std::fs::read(&golden).unwrap(), bytes, "{}", case.name);
    }
}

#[test]
fn csv_headers_are_fixed() {
    let expected = [
        ("survival_two_level", "t,p_0,p_1,p_2"),
        ("survival_continuum", "t,re_a,im_a,p"),
        ("rates_pulsed", "tau,gamma_eff,ratio"),
        ("rates_continuous", "gamma_meas,gamma_eff,ratio"),
        ("rates_rabi", "rabi_k,gamma_eff,ratio"),
        ("transition", "tau,gamma_eff,ratio,regime"),
        ("laser_multipoles", "b_over_omega0,ratio_0,ratio_1,ratio_2"),
        ("laser_pole", "b,e_pole_re,e_pole_im,delta,gamma_eff,z_factor"),
        ("sweep_z_factor", "coupling,z_factor,warning"),
        ("oracle_dense", "t,p_volterra,p_dense,amplitude_diff"),
        (
            "oracle_theorem",
            "index,coupling,exponent_n,omega_in,natural_rate,z_factor,tau_star,crossing_defect,status",
        ),
    ];
    for (name, header) in expected {
        let case = support::CASES.iter().find(|c| c.name == name).unwrap();
        let text = std::fs::read_to_string(support::golden_path(case)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{name}");
        assert!(!text.contains('\r'));
    }
}

#[test]
fn two_level_survival_reproduces_the_closed_form() {
    let case = support::CASES.iter().find(|c| c.name == "survival_two_level").unwrap();
    let (_, rows) = read_table(&support::golden_path(case));
    for row in rows {
        let t = row[0];
        for (i, v) in [0.4f64, 2.0, 10.0].iter().enumerate() {
            let eta = num_complex::Complex64::new(v * v - 1.0, 0.0).sqrt();
            let a = (-v * t).exp() * ((eta * t).cosh() + *v / eta * (eta * t).sinh());
            assert!((row[i + 1] - a.norm_sqr()).abs() < 1e-12, "t={t} V={v}");
        }
    }
}

#[test]
fn pulsed_curve_has_the_transition_shape() {
    let case = support::CASES.iter().find(|c| c.name == "rates_pulsed").unwrap();
    let (_, rows) = read_table(&support::golden_path(case));
    let (t0, r0) = (rows[0][0], rows[0][2]);
    let (t1, r1) = (rows[1][0], rows[1][2]);
    // linear at small τ
    assert!(((r1 / r0) / (t1 / t0) - 1.0).abs() < 1e-3);
    assert!(rows.iter().any(|r| r[2] > 1.0));
    assert!((rows.last().unwrap()[2] - 1.0).abs() < 0.02);
}

#[test]
fn multipole_columns_match_closed_forms() {
    let case = support::CASES.iter().find(|c| c.name == "laser_multipoles").unwrap();
    let (_, rows) = read_table(&support::golden_path(case));
    for r in rows {
        let x = r[0];
        assert!((r[1] - 1.0).abs() < 1e-6);
        assert!((r[2] - (1.0 + 3.0 * x * x)).abs() < 1e-6);
        assert!((r[3] - (1.0 + 10.0 * x * x + 5.0 * x.powi(4))).abs() < 1e-6);
    }
}

#[test]
fn single_point_sweep_equals_direct_evaluation() {
    let model = support::golden_dir().join("exp_far.json");
    let mut c = RunConfig::new(CommandKind::Sweep, &model, "unused.csv");
    c.axis = Some(SweepAxis::Coupling);
    c.scalar = Some(SweepScalar::ZFactor);
    c.param_min = Some(0.1);
    c.points = Some(1);
    let table: Table = evaluate(&c).unwrap().table;
    assert_eq!(table.rows.len(), 1);
    let sd = SpectralDensity::multipole_exp(0.1, 0.0, 1.0, 1.0).unwrap();
    let direct = zeno::zeno::z_factor(&sd, 5.0).unwrap();
    assert_eq!(table.column("z_factor").unwrap(), vec![direct]);
}

#[test]
fn sweep_failures_become_nan_rows() {
    let model = support::golden_dir().join("exp_far.json");
    let mut c = RunConfig::new(CommandKind::Sweep, &model, "unused.csv");
    c.axis = Some(SweepAxis::OmegaIn);
    c.scalar = Some(SweepScalar::NaturalRate);
    c.param_min = Some(-1.0);
    c.param_max = Some(1.0);
    c.points = Some(3);
    let out = evaluate(&c).unwrap().table;
    let v = out.column("natural_rate").unwrap();
    assert!(v[0].is_nan() && v[1].is_nan() && v[2] > 0.0);
    let csv = out.to_csv();
    assert!(csv.lines().nth(1).unwrap().contains("model"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("o.csv");
    let r = bin()
        .args(["survival", "--model"])
        .arg(&empty)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("EOF"));

    let r = bin().args(["survival", "--bogus"]).output().unwrap();
    assert_eq!(r.status.code(), Some(1));

    // a step far above 0.1/Λ is a numerical failure of the solver
    let model = support::golden_dir().join("exp_peak.json");
    let r = bin()
        .args(["survival", "--t-max", "50", "--steps", "10", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("volterra"));

    let r = bin()
        .args(["survival", "--t-max", "5", "--steps", "100", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0));
}

#[test]
fn sidecar_replays_to_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = support::golden_dir().join("exp_far.json");
    let first = dir.path().join("first.csv");
    let r = bin()
        .args([
            "rates",
            "--mode",
            "continuous",
            "--points",
            "25",
            "--jobs",
            "2",
            "--model",
        ])
        .arg(&model)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert!(r.status.success());
    // the sidecar embeds the model, so it replays even without the file
    let moved = dir.path().join("sidecar.json");
    std::fs::rename(first.with_extension("json"), &moved).unwrap();
    let second = dir.path().join("second.csv");
    let r = bin()
        .args(["replay", "--config"])
        .arg(&moved)
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let model = support::golden_dir().join("exp_far.json");
    let mut c = RunConfig::new(CommandKind::Transition, &model, "unused.csv");
    c.points = Some(50);
    c.jobs = Some(1);
    let one = evaluate(&c).unwrap();
    c.jobs = Some(4);
    let four = evaluate(&c).unwrap();
    assert_eq!(one.table.to_csv(), four.table.to_csv());
    assert_eq!(one.report, four.report);
}
