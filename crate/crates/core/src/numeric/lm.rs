use crate::{real, Real};
use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("residual evaluation failed: {0}")]
    Evaluation(String),
    #[error("residual vector is empty")]
    NoResiduals,
    #[error("non-finite residual encountered")]
    NonFinite,
    #[error("bounds are inconsistent at parameter {0}")]
    BadBounds(usize),
}

#[derive(Debug, Clone)]
pub struct LmOptions<T> {
    pub max_iter: usize,
    /// Relative decrease of the cost below which iteration stops.
    pub ftol: T,
    /// Step-size tolerance relative to the parameter scale.
    pub xtol: T,
    /// Infinity norm of the projected gradient at which iteration stops.
    pub gtol: T,
    /// Relative step for the central-difference Jacobian.
    pub rel_step: T,
    pub lambda0: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            ftol: real(1e-14),
            xtol: real(1e-12),
            gtol: real(1e-12),
            rel_step: real(1e-6),
            lambda0: real(1e-3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome<T: Real> {
    pub params: Vec<T>,
    /// Sum of squared residuals at `params`.
    pub cost: T,
    pub residuals: DVector<T>,
    /// Central-difference Jacobian at `params`.
    pub jacobian: DMatrix<T>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> LmOutcome<T> {
    /// Parameter covariance `s^2 (J^T J)^-1` with `s^2 = cost/dof`.
    /// Returns `None` when there are no spare degrees of freedom or the
    /// normal matrix is singular.
    pub fn covariance(&self) -> Option<DMatrix<T>> {
        let n = self.params.len();
        let m = self.residuals.len();
        if m <= n {
            return None;
        }
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let s2 = self.cost / real::<T>((m - n) as f64);
        jtj.try_inverse().map(|inv| inv * s2)
    }

    /// Condition number of `J^T J` (ratio of extreme eigenvalues).
    pub fn normal_condition(&self) -> T {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let eig = jtj.symmetric_eigen().eigenvalues;
        let mut lo = real::<T>(f64::INFINITY);
        let mut hi = T::zero();
        for v in eig.iter() {
            lo = lo.min(v.abs());
            hi = hi.max(v.abs());
        }
        if lo <= T::zero() {
            real(f64::INFINITY)
        } else {
            hi / lo
        }
    }
}

fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

/// Bound-constrained Levenberg-Marquardt with a central-difference Jacobian.
///
/// `residual_fn` writes the residual vector for a parameter set; steps are
/// clamped into `[lower, upper]` component-wise. Deterministic: no random
/// restarts, fixed damping schedule.
pub fn levenberg_marquardt<T: Real>(
    residual_fn: &dyn Fn(&[T], &mut Vec<T>) -> Result<(), String>,
    x0: &[T],
    lower: &[T],
    upper: &[T],
    opts: &LmOptions<T>,
) -> Result<LmOutcome<T>, LmError> {
    let n = x0.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    for i in 0..n {
        if lower[i] > upper[i] {
            return Err(LmError::BadBounds(i));
        }
    }

    let mut x: Vec<T> = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| clamp(v, lower[i], upper[i]))
        .collect();

    let eval = |p: &[T], out: &mut Vec<T>| -> Result<DVector<T>, LmError> {
        out.clear();
        residual_fn(p, out).map_err(LmError::Evaluation)?;
        if out.is_empty() {
            return Err(LmError::NoResiduals);
        }
        if out.iter().any(|r| !r.is_finite()) {
            return Err(LmError::NonFinite);
        }
        Ok(DVector::from_column_slice(out))
    };

    let mut scratch = Vec::new();
    let mut r = eval(&x, &mut scratch)?;
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda0;
    let mut nu = real::<T>(2.0);
    let mut converged = false;
    let mut iterations = 0;

    let jacobian = |p: &[T], scratch: &mut Vec<T>, m: usize| -> Result<DMatrix<T>, LmError> {
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = opts.rel_step * p[j].abs().max(T::one());
            let xp = clamp(p[j] + h, lower[j], upper[j]);
            let xm = clamp(p[j] - h, lower[j], upper[j]);
            let denom = xp - xm;
            if denom == T::zero() {
                continue; // parameter pinned by coincident bounds
            }
            let mut pp = p.to_vec();
            pp[j] = xp;
            let rp = eval(&pp, scratch)?;
            pp[j] = xm;
            let rm = eval(&pp, scratch)?;
            let col = (rp - rm) / denom;
            jac.set_column(j, &col);
        }
        Ok(jac)
    };

    let projected_gradient_max = |grad: &DVector<T>, x: &[T]| -> T {
        let mut gmax = T::zero();
        for j in 0..n {
            let g = grad[j];
            let at_lower = x[j] <= lower[j] && g > T::zero();
            let at_upper = x[j] >= upper[j] && g < T::zero();
            if !(at_lower || at_upper) {
                gmax = gmax.max(g.abs());
            }
        }
        gmax
    };

    let mut jac = jacobian(&x, &mut scratch, r.len())?;

    // gain-ratio damping: grow lambda geometrically on rejected steps, relax
    // it by the Nielsen factor on accepted ones
    'outer: for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let grad = jac.transpose() * &r;
        if projected_gradient_max(&grad, &x) < opts.gtol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let diag: Vec<T> = (0..n).map(|j| jtj[(j, j)].max(real(1e-30))).collect();

        loop {
            let mut damped = jtj.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * diag[j];
            }
            let step = match Cholesky::new(damped) {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= nu;
                    nu *= real::<T>(2.0);
                    if lambda > real(1e15) {
                        break 'outer;
                    }
                    continue;
                }
            };
            let xc: Vec<T> = (0..n)
                .map(|j| clamp(x[j] + step[j], lower[j], upper[j]))
                .collect();
            let actual: Vec<T> = (0..n).map(|j| xc[j] - x[j]).collect();
            let step_norm = actual
                .iter()
                .fold(T::zero(), |a, s| a.max(s.abs()));
            let xscale = T::one()
                + x.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            if step_norm < opts.xtol * xscale {
                converged = true;
                break 'outer;
            }
            let rc = eval(&xc, &mut scratch)?;
            let cc = rc.norm_squared();
            // predicted decrease of cost/2 is h^T(lambda D h - g)/2
            let mut predicted = T::zero();
            for j in 0..n {
                predicted += actual[j] * (lambda * diag[j] * actual[j] - grad[j]);
            }
            let rho = if predicted > T::zero() {
                (cost - cc) / predicted
            } else {
                -T::one()
            };
            if rho > T::zero() {
                let rel_drop = (cost - cc) / cost.max(real(1e-300));
                x = xc;
                r = rc;
                cost = cc;
                let shrink = T::one()
                    - (real::<T>(2.0) * rho - T::one()).powi(3);
                lambda = (lambda * shrink.max(real(1.0 / 3.0))).max(real(1e-14));
                nu = real(2.0);
                jac = jacobian(&x, &mut scratch, r.len())?;
                if rel_drop < opts.ftol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= nu;
            nu *= real::<T>(2.0);
            if lambda > real(1e15) {
                // cannot improve even with near-gradient steps
                let g = jac.transpose() * &r;
                converged = projected_gradient_max(&g, &x)
                    < real::<T>(1e-7) * (T::one() + cost);
                break 'outer;
            }
        }
    }

    Ok(LmOutcome {
        params: x,
        cost,
        residuals: r,
        jacobian: jac,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        // y = a exp(-k t): recover (a, k) from noise-free samples
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 2.5 * (-1.3 * t).exp()).collect();
        let f = |p: &[f64], out: &mut Vec<f64>| -> Result<(), String> {
            for (ti, yi) in t.iter().zip(&y) {
                out.push(p[0] * (-p[1] * ti).exp() - yi);
            }
            Ok(())
        };
        let sol = levenberg_marquardt(
            &f,
            &[1.0, 0.5],
            &[0.0, 0.0],
            &[f64::INFINITY, f64::INFINITY],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert!((sol.params[0] - 2.5).abs() < 1e-8, "{:?}", sol.params);
        assert!((sol.params[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn respects_lower_bound() {
        // unconstrained optimum at p = -1; box forces p >= 0
        let f = |p: &[f64], out: &mut Vec<f64>| -> Result<(), String> {
            out.push(p[0] + 1.0);
            Ok(())
        };
        let sol = levenberg_marquardt(&f, &[2.0], &[0.0], &[10.0], &LmOptions::default()).unwrap();
        assert!(sol.params[0].abs() < 1e-9, "{:?}", sol.params);
    }
}
