//! Small helpers shared by the continuous state blocks.

/// A block of continuous states that explicit integrators can combine
/// linearly: `x + sum(c_i * k_i)`.
pub trait Continuous: Clone {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self;
}

/// Implements [`Continuous`] for a plain struct of `f64` fields.
macro_rules! impl_continuous {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::ode::Continuous for $ty {
            fn combine(&self, terms: &[(f64, &Self)]) -> Self {
                let mut out = self.clone();
                for (c, k) in terms {
                    $( out.$field += c * k.$field; )+
                }
                out
            }
        }
    };
}
pub(crate) use impl_continuous;

impl Continuous for f64 {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        terms.iter().fold(*self, |acc, (c, k)| acc + c * *k)
    }
}

impl<T: Continuous> Continuous for Vec<T> {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        self.iter()
            .enumerate()
            .map(|(i, x)| {
                let parts: Vec<(f64, &T)> = terms.iter().map(|(c, k)| (*c, &k[i])).collect();
                x.combine(&parts)
            })
            .collect()
    }
}

impl<T: Continuous> Continuous for Option<T> {
    fn combine(&self, terms: &[(f64, &Self)]) -> Self {
        self.as_ref().map(|x| {
            let parts: Vec<(f64, &T)> = terms
                .iter()
                .map(|(c, k)| (*c, k.as_ref().expect("matching option shape")))
                .collect();
            x.combine(&parts)
        })
    }
}

/// One explicit trapezoidal (Heun) step of `dx/dt = f(x)`.
pub fn heun<T: Continuous>(x: &T, dt: f64, mut f: impl FnMut(&T) -> T) -> T {
    let k1 = f(x);
    let pred = x.combine(&[(dt, &k1)]);
    let k2 = f(&pred);
    x.combine(&[(0.5 * dt, &k1), (0.5 * dt, &k2)])
}

/// Clamp with a derivative guard: a state sitting on a limit may not be
/// pushed further outward.
pub(crate) fn limit_rate(x: f64, dx: f64, lo: f64, hi: f64) -> f64 {
    if (x >= hi && dx > 0.0) || (x <= lo && dx < 0.0) {
        0.0
    } else {
        dx
    }
}
