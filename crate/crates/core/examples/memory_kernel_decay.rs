//! Free decay of a level coupled to a multipole continuum: solves the
//! memory-kernel equation, fits the exponential tail and compares the fitted
//! rate with the golden-rule value.

use zeno::model::{golden_rule_rate, zeno_time, SpectralDensity};
use zeno::trace::TimeGrid;
use zeno::volterra::{
    default_window, fit_exponential_tail, solve_memory_kernel, FitOptions, KernelSpec, MeasurementMode,
};

fn main() -> zeno::Result<()> {
    let sd = SpectralDensity::multipole_exp(0.05, 0.0, 1.0, 1.0)?;
    let omega_in = 3.0;
    let gamma = golden_rule_rate(&sd, omega_in)?;
    println!("golden-rule rate {gamma:.6e}, Zeno time {:.4}", zeno_time(&sd)?);

    let spec = KernelSpec::continuum(sd.clone(), omega_in, MeasurementMode::Plain)?;
    let t_max = 5.0 + 3.0 / gamma;
    let grid = TimeGrid::covering(t_max, spec.max_step())?;
    let sol = solve_memory_kernel(&spec, &grid)?;
    println!(
        "{} steps of {:.4}, error estimate {:.1e}",
        grid.intervals(),
        sol.step,
        sol.error_estimate
    );

    let stride = grid.intervals() / 10;
    for i in (0..grid.len()).step_by(stride.max(1)) {
        println!("t = {:8.3}  P = {:.8}", sol.trace.times[i], sol.trace.probabilities[i]);
    }

    let window = default_window(sd.cutoff(), gamma, t_max);
    let fit = fit_exponential_tail(&sol.trace, window, &FitOptions::for_cutoff(sd.cutoff()))?;
    println!(
        "tail fit on [{:.2}, {:.2}]: gamma = {:.6e} ({:+.3}% from golden rule), Z = {:.6}",
        window.0,
        window.1,
        fit.gamma,
        100.0 * (fit.gamma / gamma - 1.0),
        fit.z_factor
    );
    Ok(())
}
