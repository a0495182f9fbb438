//! Mechanical power of a hydro and a steam unit after a held 0.2 Hz
//! underfrequency step. The hydro unit first dips (water inertia).

use gridsim39::machines::{governor_step, MachineDataset};

fn main() -> gridsim39::Result<()> {
    let data = MachineDataset::ieee39();
    let dw = -0.2 / 60.0;
    for name in ["G4", "G6"] {
        let unit = data.unit(name).expect("unit in dataset");
        let gov = &unit.governor;
        let p0 = 0.6;
        let mut x = gov.init(p0)?;
        println!("{name}: droop {:.3}, steady target {:.4} pu", gov.droop(), p0 - dw / gov.droop());
        let dt = 1e-3;
        for k in 1..=30_000 {
            let (next, pm) = governor_step(gov, &x, dw, p0, 0.0, dt);
            x = next;
            if [100, 500, 1000, 2000, 5000, 10_000, 20_000, 30_000].contains(&k) {
                println!("  t = {:5.1} s  Pm = {pm:.4} pu", k as f64 * dt);
            }
        }
    }
    Ok(())
}
