use crate::{real, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BracketError {
    #[error("interval [{lo}, {hi}] does not bracket a root: f(lo)={flo}, f(hi)={fhi}")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("root iteration did not converge in {0} steps")]
    NoConvergence(usize),
}

/// Brent's method on a bracketing interval `[a, b]` with `f(a)*f(b) <= 0`.
///
/// `rel_tol` is a relative tolerance on the abscissa; iteration also stops
/// once the bracket shrinks to a few ulps.
pub fn brent<T: Real>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    rel_tol: T,
    max_iter: usize,
) -> Result<T, BracketError> {
    let mut a = a;
    let mut b = b;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa * fb > T::zero() {
        return Err(BracketError::NoSignChange {
            lo: to_f64(a),
            hi: to_f64(b),
            flo: to_f64(fa),
            fhi: to_f64(fb),
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    let two = real::<T>(2.0);
    let half = real::<T>(0.5);
    let eps = T::default_epsilon();

    for _ in 0..max_iter {
        if fb * fc > T::zero() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * eps * b.abs() + half * rel_tol * (b.abs() + T::one());
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, falling back to secant
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = real::<T>(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += if xm > T::zero() { tol1 } else { -tol1 };
        }
        fb = f(b);
    }
    Err(BracketError::NoConvergence(max_iter))
}

fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}
