//! Survival of a level Rabi-coupled to an absorbing partner, in the
//! oscillating, critical and overdamped regimes, plus the undamped
//! three-level Rabi probe.

use zeno::exact::{absorptive_survival, rabi_probe_survival, AbsorptiveTwoLevel, RabiProbeThreeLevel};
use zeno::trace::TimeGrid;

fn main() -> zeno::Result<()> {
    let grid = TimeGrid::new(10.0, 10)?;
    let models = [0.4, 1.0, 10.0]
        .iter()
        .map(|&v| AbsorptiveTwoLevel::new(1.0, v))
        .collect::<zeno::Result<Vec<_>>>()?;
    let traces: Vec<_> = models.iter().map(|m| absorptive_survival(m, &grid)).collect();

    println!("{:>6} {:>12} {:>12} {:>12}", "t", "V=0.4", "V=1", "V=10");
    for (i, t) in grid.times().iter().enumerate() {
        println!(
            "{t:6.2} {:12.6e} {:12.6e} {:12.6e}",
            traces[0].probabilities[i], traces[1].probabilities[i], traces[2].probabilities[i]
        );
    }
    let strong = &models[2];
    println!(
        "V=10 late-time law: P ~ {:.4} exp(-{:.4} t)",
        strong.strong_absorption_intercept(),
        strong.strong_absorption_rate()
    );

    let probe = RabiProbeThreeLevel::new(1.0, 20.0)?;
    let out = rabi_probe_survival(&probe, &TimeGrid::new(probe.poincare_period(), 200)?);
    let p_min = out.trace.probabilities.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "Rabi probe K=20: min P = {p_min:.6} (bound {:.6}), Zeno time {:.3}, period {:.3}",
        probe.min_probability(),
        out.zeno_time,
        out.poincare_period
    );
    Ok(())
}
