//! Voltage and frequency dependence of the default load model, and the
//! windowed RMS measurement seen by the load during a sag.

use gridsim39::loads::{load_power, rms_measurement_step, LoadParams, WindowedMeasurement};

fn main() {
    let p = LoadParams::default();
    println!("demand of a 1 + j0.3 pu load");
    for (v, f) in [(1.0, 1.0), (0.95, 1.0), (1.0, 0.99), (0.9, 0.99), (0.2, 1.0)] {
        let (pl, ql) = load_power(1.0, 0.3, v, f, &p);
        println!("  V {v:.2}  f {f:.2}  ->  P {pl:.4}  Q {ql:.4}");
    }
    println!("RMS report during a 0.94 pu sag starting at t = 0");
    let mut meas = WindowedMeasurement::rms(1.0);
    for k in 1..=300 {
        let reported = rms_measurement_step(&mut meas, 0.94);
        if k % 40 == 0 {
            println!("  t = {k:3} ms  reported {reported:.5}");
        }
    }
}
