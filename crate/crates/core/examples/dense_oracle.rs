//! Cross-checks the memory-kernel solver against exact evolution of a
//! discretized continuum.

use zeno::exact::dense_evolve;
use zeno::model::{discretize, golden_rule_rate, SpectralDensity};
use zeno::trace::TimeGrid;
use zeno::volterra::{solve_memory_kernel, KernelSpec, MeasurementMode};

fn main() -> zeno::Result<()> {
    let sd = SpectralDensity::multipole_exp(0.1, 0.0, 1.0, 1.0)?;
    let omega_in = 1.0;
    let gamma = golden_rule_rate(&sd, omega_in)?;
    for modes in [50, 100, 200] {
        let ds = discretize(&sd, omega_in, modes, 20.0)?;
        let spec = KernelSpec::discrete(ds.clone(), MeasurementMode::Plain)?;
        let grid = TimeGrid::covering(5.0 / gamma, spec.max_step())?;
        let volterra = solve_memory_kernel(&spec, &grid)?.trace;
        let dense = dense_evolve(&ds.hamiltonian(omega_in), 0, &grid)?;
        println!(
            "{modes:4} modes: max |A_volterra - A_dense| = {:.2e}, P(t_max) = {:.6}",
            volterra.max_amplitude_diff(&dense),
            dense.probabilities.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
