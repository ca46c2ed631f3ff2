//! Effective decay rates under pulsed, continuous and Rabi-probe
//! measurement, in units of the natural rate.

use zeno::model::SpectralDensity;
use zeno::rates::{parameter_grid, rate_curve, ParameterKind};

fn main() -> zeno::Result<()> {
    let sd = SpectralDensity::multipole_exp(0.1, 0.0, 1.0, 1.0)?;
    let omega_in = 5.0;
    for (kind, lo, hi) in [
        (ParameterKind::Tau, 1e-2, 1e2),
        (ParameterKind::GammaMeas, 1e-2, 1e2),
        (ParameterKind::RabiK, 1e-2, 1e2),
    ] {
        let grid = parameter_grid(lo, hi, 9, true)?;
        let curve = rate_curve(&sd, omega_in, kind, &grid)?;
        println!("{} (gamma = {:.4e})", kind.name(), curve.natural_rate);
        for (p, r) in curve.parameters.iter().zip(&curve.rates) {
            println!("  {p:10.3e}  gamma_eff/gamma = {:.5}", r / curve.natural_rate);
        }
    }
    Ok(())
}
