use crate::error::{Error, Result};
use crate::ode::{heun, impl_continuous, limit_rate};

/// IEEE DC1A exciter with exponential saturation `SE(Efd) = Ax exp(Bx Efd)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExciterParams {
    pub tr: f64,
    pub ka: f64,
    pub ta: f64,
    pub ke: f64,
    pub te: f64,
    pub kf: f64,
    pub tf: f64,
    pub ax: f64,
    pub bx: f64,
    pub vr_min: f64,
    pub vr_max: f64,
    pub efd_min: f64,
    pub efd_max: f64,
}

/// Transducer output, regulator output, field voltage and rate-feedback state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExciterState {
    pub vm: f64,
    pub vr: f64,
    pub efd: f64,
    pub rf: f64,
}
impl_continuous!(ExciterState { vm, vr, efd, rf });

impl ExciterParams {
    pub fn validate(&self) -> Result<()> {
        if [self.tr, self.ta, self.te, self.tf].iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Domain("exciter time constants must be positive".into()));
        }
        if self.vr_min >= self.vr_max || self.efd_min >= self.efd_max {
            return Err(Error::Domain("exciter limits are inverted".into()));
        }
        Ok(())
    }

    pub fn saturation(&self, efd: f64) -> f64 {
        self.ax * (self.bx * efd).exp()
    }

    /// Steady state for a given field voltage; returns the state and the
    /// voltage reference that holds it.
    pub fn init(&self, efd: f64, vterm: f64) -> Result<(ExciterState, f64)> {
        if efd < self.efd_min || efd > self.efd_max {
            return Err(Error::Domain(format!(
                "initial Efd {efd:.4} outside [{}, {}]",
                self.efd_min, self.efd_max
            )));
        }
        let vr = (self.ke + self.saturation(efd)) * efd;
        if vr < self.vr_min || vr > self.vr_max {
            return Err(Error::Domain(format!("initial VR {vr:.4} outside limits")));
        }
        let state = ExciterState {
            vm: vterm,
            vr,
            efd,
            rf: self.kf / self.tf * efd,
        };
        Ok((state, vterm + vr / self.ka))
    }

    pub fn feedback(&self, x: &ExciterState) -> f64 {
        self.kf / self.tf * x.efd - x.rf
    }

    pub fn derivatives(&self, x: &ExciterState, vterm: f64, vref: f64) -> ExciterState {
        let vf = self.feedback(x);
        let dvr = (self.ka * (vref - x.vm - vf) - x.vr) / self.ta;
        let defd = (x.vr - (self.ke + self.saturation(x.efd)) * x.efd) / self.te;
        ExciterState {
            vm: (vterm - x.vm) / self.tr,
            vr: limit_rate(x.vr, dvr, self.vr_min, self.vr_max),
            efd: limit_rate(x.efd, defd, self.efd_min, self.efd_max),
            rf: (self.kf / self.tf * x.efd - x.rf) / self.tf,
        }
    }

    /// Enforces the regulator and field-voltage windows.
    pub fn project(&self, x: &mut ExciterState) {
        x.vr = x.vr.clamp(self.vr_min, self.vr_max);
        x.efd = x.efd.clamp(self.efd_min, self.efd_max);
    }
}

/// Advances the exciter by `dt` with the terminal voltage held.
pub fn exciter_step(p: &ExciterParams, x: &ExciterState, vterm: f64, vref: f64, dt: f64) -> (ExciterState, f64) {
    let mut next = heun(x, dt, |s| {
        let mut s = *s;
        p.project(&mut s);
        p.derivatives(&s, vterm, vref)
    });
    p.project(&mut next);
    (next, next.efd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machines::MachineDataset;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64 as C;

    fn params() -> ExciterParams {
        MachineDataset::ieee39().unit("G3").unwrap().exciter.clone()
    }

    #[test]
    fn equilibrium_holds_efd() {
        let p = params();
        let (mut x, vref) = p.init(2.1, 1.03).unwrap();
        for _ in 0..1000 {
            x = exciter_step(&p, &x, 1.03, vref, 1e-3).0;
        }
        assert!((x.efd - 2.1).abs() < 1e-12);
    }

    #[test]
    fn voltage_drop_raises_efd_monotonically() {
        let p = params();
        let (mut x, vref) = p.init(2.1, 1.03).unwrap();
        let mut last = x.efd;
        for _ in 0..100 {
            x = exciter_step(&p, &x, 1.02, vref, 1e-3).0;
            assert!(x.efd >= last);
            last = x.efd;
        }
        assert!(last > 2.1);
    }

    #[test]
    fn limits_hold() {
        let p = params();
        let (mut x, vref) = p.init(2.1, 1.03).unwrap();
        for _ in 0..20000 {
            x = exciter_step(&p, &x, 0.2, vref, 1e-3).0;
            assert!(x.efd <= p.efd_max && x.vr <= p.vr_max);
        }
    }

    fn as_vec(x: &ExciterState) -> [f64; 4] {
        [x.vm, x.vr, x.efd, x.rf]
    }

    fn from_vec(v: &[f64]) -> ExciterState {
        ExciterState {
            vm: v[0],
            vr: v[1],
            efd: v[2],
            rf: v[3],
        }
    }

    #[test]
    fn linearized_response_matches_transfer_function() {
        // Oracle: closed-form Efd/Vt of the DC1A loop linearized at the
        // operating point, versus C (jwI - A)^-1 B of the implemented model.
        let p = params();
        let efd0 = 2.1;
        let (x0, vref) = p.init(efd0, 1.03).unwrap();
        let base = as_vec(&x0);
        let h = 1e-6;
        let mut a = DMatrix::<f64>::zeros(4, 4);
        for j in 0..4 {
            let mut up = base;
            let mut dn = base;
            up[j] += h;
            dn[j] -= h;
            let fu = as_vec(&p.derivatives(&from_vec(&up), 1.03, vref));
            let fd = as_vec(&p.derivatives(&from_vec(&dn), 1.03, vref));
            for i in 0..4 {
                a[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let bu = as_vec(&p.derivatives(&x0, 1.03 + h, vref));
        let bd = as_vec(&p.derivatives(&x0, 1.03 - h, vref));
        let b = DVector::from_iterator(4, (0..4).map(|i| (bu[i] - bd[i]) / (2.0 * h)));

        let se = p.saturation(efd0);
        let keff = p.ke + se + efd0 * se * p.bx;
        for w in [0.5, 5.0, 40.0] {
            let s = C::new(0.0, w);
            let one = C::new(1.0, 0.0);
            let fwd = p.ka / ((one + s * p.ta) * (s * p.te + keff));
            let fb = s * p.kf / (one + s * p.tf);
            let expected = -fwd / (one + s * p.tr) / (one + fwd * fb);

            let m = DMatrix::<C>::from_fn(4, 4, |i, j| {
                let diag = if i == j { s } else { C::new(0.0, 0.0) };
                diag - C::new(a[(i, j)], 0.0)
            });
            let rhs = DVector::<C>::from_iterator(4, b.iter().map(|v| C::new(*v, 0.0)));
            let sol = m.lu().solve(&rhs).unwrap();
            let got = sol[2];
            assert!(
                (got - expected).norm() < 1e-5 * expected.norm(),
                "w={w}: {got} vs {expected}"
            );
        }
    }
}
