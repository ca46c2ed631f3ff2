//! CLI cases shared by the golden-file tests and the acceptance run.

use std::path::{Path, PathBuf};

use clap::Parser;
use zeno::cli::{run, Cli};

pub struct Case {
    pub name: &'static str,
    pub model: &'static str,
    pub args: &'static [&'static str],
}

pub const CASES: &[Case] = &[
    Case {
        name: "survival_two_level",
        model: "two_level.json",
        args: &["survival", "--steps", "200"],
    },
    Case {
        name: "survival_continuum",
        model: "exp_peak.json",
        args: &["survival", "--t-max", "5", "--steps", "100"],
    },
    Case {
        name: "rates_pulsed",
        model: "exp_far.json",
        args: &["rates", "--mode", "pulsed", "--points", "60"],
    },
    Case {
        name: "rates_continuous",
        model: "exp_far.json",
        args: &["rates", "--mode", "continuous", "--points", "40"],
    },
    Case {
        name: "rates_rabi",
        model: "exp_far.json",
        args: &["rates", "--mode", "rabi", "--points", "41"],
    },
    Case {
        name: "transition",
        model: "exp_far.json",
        args: &["transition", "--points", "100"],
    },
    Case {
        name: "laser_multipoles",
        model: "multipoles.json",
        args: &["laser", "--points", "10"],
    },
    Case {
        name: "laser_pole",
        model: "laser_pole.json",
        args: &["laser", "--points", "10"],
    },
    Case {
        name: "sweep_z_factor",
        model: "exp_far.json",
        args: &[
            "sweep",
            "--axis",
            "coupling",
            "--scalar",
            "z_factor",
            "--param-min",
            "0.01",
            "--param-max",
            "0.1",
            "--points",
            "5",
        ],
    },
    Case {
        name: "oracle_dense",
        model: "exp_peak.json",
        args: &["oracle", "--check", "dense", "--modes", "40", "--t-max", "5"],
    },
    Case {
        name: "oracle_theorem",
        model: "exp_far.json",
        args: &["oracle", "--check", "theorem", "--points", "4", "--seed", "3"],
    },
];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Runs a case in-process and returns the CSV bytes.
pub fn run_case(case: &Case, dir: &Path) -> Result<Vec<u8>, String> {
    let model = golden_dir().join(case.model);
    let out = dir.join(format!("{}.csv", case.name));
    let mut args: Vec<String> = vec!["zeno".into()];
    args.extend(case.args.iter().map(|s| s.to_string()));
    args.extend([
        "--model".into(),
        model.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]);
    let cli = Cli::try_parse_from(&args).map_err(|e| e.to_string())?;
    let config = cli.command.into_config().map_err(|e| e.to_string())?;
    run(&config).map_err(|e| e.to_string())?;
    std::fs::read(&out).map_err(|e| e.to_string())
}

pub fn golden_path(case: &Case) -> PathBuf {
    golden_dir().join(format!("{}.csv", case.name))
}
