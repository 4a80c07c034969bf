use crate::{real, Real};
use nalgebra::{DMatrix, DVector};

/// Lowest `k` eigenpairs of a symmetric operator given through its
/// matrix-vector product, via Lanczos with full reorthogonalization.
///
/// Deterministic: the start vector is the normalized all-ones vector. The
/// Krylov dimension grows until the wanted Ritz pairs have residuals below
/// `tol * |theta|` or `max_steps` is reached.
pub fn lanczos_lowest<T: Real>(
    dim: usize,
    matvec: &dyn Fn(&DVector<T>, &mut DVector<T>),
    k: usize,
    max_steps: usize,
    tol: T,
) -> (Vec<T>, Vec<DVector<T>>) {
    let k = k.min(dim);
    let m_max = max_steps.min(dim);

    let mut basis: Vec<DVector<T>> = Vec::with_capacity(m_max);
    let mut alphas: Vec<T> = Vec::with_capacity(m_max);
    let mut betas: Vec<T> = Vec::with_capacity(m_max);

    let mut v = DVector::from_element(dim, T::one());
    let nrm = v.norm();
    v /= nrm;
    basis.push(v);

    let mut w = DVector::zeros(dim);
    let check_every = 8;

    for step in 0..m_max {
        matvec(&basis[step], &mut w);
        let alpha = basis[step].dot(&w);
        alphas.push(alpha);
        w.axpy(-alpha, &basis[step], T::one());
        if step > 0 {
            let b = betas[step - 1];
            w.axpy(-b, &basis[step - 1], T::one());
        }
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, T::one());
            }
        }
        let beta = w.norm();
        let have = alphas.len();
        let done = have == m_max || beta < real::<T>(1e-14);
        if done || (have >= k + 2 && have.is_multiple_of(check_every)) {
            let (theta, ritz_small, resid) = ritz_pairs(&alphas, &betas, beta, k);
            let conv = theta
                .iter()
                .zip(&resid)
                .all(|(t, r)| *r <= tol * (t.abs() + T::one()));
            if conv || done {
                let vectors = assemble_ritz(&basis, &ritz_small);
                return (theta, vectors);
            }
        }
        betas.push(beta);
        basis.push(&w / beta);
    }

    let (theta, ritz_small, _) = ritz_pairs(&alphas, &betas, T::zero(), k);
    let vectors = assemble_ritz(&basis, &ritz_small);
    (theta, vectors)
}

/// Eigen-decompose the Lanczos tridiagonal; return the lowest `k` Ritz
/// values, their small-space vectors, and residual estimates `|beta_m * s_m|`.
fn ritz_pairs<T: Real>(
    alphas: &[T],
    betas: &[T],
    last_beta: T,
    k: usize,
) -> (Vec<T>, Vec<DVector<T>>, Vec<T>) {
    let m = alphas.len();
    let mut tri = DMatrix::zeros(m, m);
    for i in 0..m {
        tri[(i, i)] = alphas[i];
        if i + 1 < m {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eig = tri.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let kk = k.min(m);
    let mut theta = Vec::with_capacity(kk);
    let mut vecs = Vec::with_capacity(kk);
    let mut resid = Vec::with_capacity(kk);
    for &idx in order.iter().take(kk) {
        theta.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx).into_owned();
        resid.push(last_beta.abs() * col[m - 1].abs());
        vecs.push(col);
    }
    (theta, vecs, resid)
}

fn assemble_ritz<T: Real>(basis: &[DVector<T>], small: &[DVector<T>]) -> Vec<DVector<T>> {
    let dim = basis[0].len();
    small
        .iter()
        .map(|s| {
            let mut v = DVector::zeros(dim);
            for (coef, q) in s.iter().zip(basis) {
                v.axpy(*coef, q, T::one());
            }
            let nrm = v.norm();
            v / nrm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_lowest_eigenvalues_of_diagonal_operator() {
        let dim = 500;
        let diag: Vec<f64> = (0..dim).map(|i| 0.1 + i as f64).collect();
        let mv = |x: &DVector<f64>, y: &mut DVector<f64>| {
            for i in 0..dim {
                y[i] = diag[i] * x[i];
            }
        };
        let (vals, vecs) = lanczos_lowest(dim, &mv, 4, 200, 1e-12);
        for (i, v) in vals.iter().enumerate() {
            assert!((v - diag[i]).abs() < 1e-9, "eig {i}: {v}");
        }
        assert!((vecs[0][0].abs() - 1.0).abs() < 1e-6);
    }
}
