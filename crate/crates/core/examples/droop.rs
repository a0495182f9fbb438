//! Converter control laws: offset-deadband droop, steady frequency
//! response of both controllers and the grid-forming P-Q coupling.

use gridsim39::converter::{following_droop, forming_reactive_power, steady_droop_response, ControllerKind, FollowingParams};

fn main() -> gridsim39::Result<()> {
    let p = FollowingParams::default();
    println!("grid-following droop commands");
    for (df, dv) in [(0.0005, 0.0), (-0.002, 0.0), (-0.011, -0.03), (0.0, 0.02)] {
        let (dp, dq) = following_droop(df, dv, &p);
        println!("  df {df:+.4}  dv {dv:+.3}  ->  dP {dp:+.3}  dQ {dq:+.3}");
    }
    println!("steady response to an infinite bus at 1 + df");
    for df in [-0.002, -0.004, -0.006] {
        let a = steady_droop_response(ControllerKind::Following, df, 20.0);
        let b = steady_droop_response(ControllerKind::Forming, df, 20.0);
        println!("  df {df:+.3}: following {a:+.6}  forming {b:+.6} pu");
    }
    println!("forming Q at Vg = 1, Rc = 0.005, Xc = 0.15");
    for (vm, delta) in [(1.0, 0.0), (0.95, 0.0), (1.02, 0.1), (1.0, 0.3)] {
        let q = forming_reactive_power(1.0, vm, delta, 0.005, 0.15)?;
        println!("  Vm {vm:.2}  delta {delta:.2}  ->  Q {q:+.4} pu");
    }
    Ok(())
}
