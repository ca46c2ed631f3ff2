//! Decay of an atom dressed by a laser of strength B: the small-B multipole
//! laws and the full pole calculation for an electric quadrupole (n = 3).

use zeno::laser::{pole_and_rate, small_b_law, LaserAtomModel, MultipoleKind};
use zeno::model::{golden_rule_rate, SpectralDensity};
use zeno::rates::parameter_grid;

fn main() -> zeno::Result<()> {
    let x = parameter_grid(0.0, 1.5, 7, false)?;
    for (j, kind) in [
        (1, MultipoleKind::Electric),
        (2, MultipoleKind::Electric),
        (1, MultipoleKind::Magnetic),
    ] {
        let curve = small_b_law(j, kind, &x)?;
        let cells: Vec<String> = curve.rates.iter().map(|r| format!("{r:.3}")).collect();
        println!("j={j} {kind:?}: {}", cells.join(" "));
    }

    let omega0 = 1.0;
    let sd = SpectralDensity::multipole_exp(1e-3, 0.0, 10.0, 3.0)?;
    let gamma = golden_rule_rate(&sd, omega0)?;
    println!("\n{:>6} {:>12} {:>12} {:>10}", "B", "delta", "gamma_eff/g", "Z");
    for b in parameter_grid(0.0, 3.0, 7, false)? {
        let m = LaserAtomModel::new(omega0, 2.0, sd.clone(), b)?;
        let p = pole_and_rate(&m)?;
        println!(
            "{b:6.2} {:12.4e} {:12.5} {:10.6}",
            p.delta,
            p.gamma_eff / gamma,
            p.z_factor
        );
    }
    Ok(())
}
