//! Drives the command-line layer from code: sweeps the Z factor over the
//! coupling and prints the CSV that `zeno sweep` would write.

use serde_json::json;
use zeno::cli::{evaluate, CommandKind, RunConfig, SweepAxis, SweepScalar};

fn main() -> zeno::Result<()> {
    let mut config = RunConfig::new(CommandKind::Sweep, "inline.json", "sweep.csv");
    config.model = Some(json!({
        "family": "multipole-exp",
        "coupling": 0.1,
        "threshold": 0.0,
        "cutoff": 1.0,
        "exponent_n": 1.0,
        "omega_in": 5.0
    }));
    config.axis = Some(SweepAxis::Coupling);
    config.scalar = Some(SweepScalar::ZFactor);
    config.param_min = Some(1e-3);
    config.param_max = Some(1.0);
    config.points = Some(7);
    config.log_scale = true;
    let out = evaluate(&config)?;
    print!("{}", out.table.to_csv());
    Ok(())
}
