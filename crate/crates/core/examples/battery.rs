//! 200 MW discharge of the 225 MVA battery from half charge.

use gridsim39::storage::{battery_step, dc_current_for_power, soc_update, terminal_voltage, BatteryParams, BatteryState};

fn main() -> gridsim39::Result<()> {
    let params = BatteryParams::shipped();
    let stack = params.stack;
    let mut x = BatteryState::rested(0.5);
    let power = -200e6;
    println!("   t [s]   SOC       V [V]     I [A]");
    for k in 0..=600_000u32 {
        let row = *params.lookup(x.soc)?;
        let (i, capped) = dc_current_for_power(&x, power, &row, stack.parallel);
        if k % 60_000 == 0 {
            let v = terminal_voltage(&x, i, &row, stack.parallel);
            println!("{:8.0} {:8.5} {:9.2} {:9.0}{}", k as f64 * stack.ts, x.soc, v, i, if capped { " (capped)" } else { "" });
        }
        let (next, _) = battery_step(&x, i, stack.ts, &row, stack.parallel);
        x = BatteryState {
            soc: soc_update(x.soc, i, stack.ts, stack.cnom_ah).0,
            ..next
        };
    }
    Ok(())
}
