//! Locates the measurement interval at which pulsed observation switches
//! from slowing decay down to speeding it up, for two level positions.

use zeno::model::SpectralDensity;
use zeno::zeno::{analyze_transition, TransitionOptions, TransitionOutcome};

fn main() -> zeno::Result<()> {
    for omega_in in [5.0, 1.0] {
        let sd = SpectralDensity::multipole_exp(0.1, 0.0, 1.0, 1.0)?;
        match analyze_transition(&sd, omega_in, &TransitionOptions::default())? {
            TransitionOutcome::Found { report, fit, .. } => {
                println!(
                    "omega_in = {omega_in}: gamma = {:.5e}, Z = {:.6}, fit residual {:.1e}",
                    report.natural_rate, report.z_factor, fit.residual
                );
                match report.tau_star {
                    Some(t) => println!("  tau* = {t:.6} ({} crossings)", report.all_crossings.len()),
                    None => println!("  no crossing"),
                }
                for (tau, regime) in report.regime_samples.iter().step_by(50) {
                    println!("  tau = {tau:10.3e}  {}", regime.name());
                }
            }
            TransitionOutcome::NotApplicable { reason } => println!("omega_in = {omega_in}: {reason}"),
        }
    }
    Ok(())
}
