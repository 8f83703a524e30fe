//! Small dense kernels: Cholesky factorization and one-sided Jacobi SVD.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not
/// symmetric positive definite.
pub fn cholesky<S: Scalar>(a: &Array2<S>) -> Option<Array2<S>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::from_elem((n, n), S::zero());
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > S::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Thin SVD `a = u · diag(sigma) · vt` with singular values descending.
/// `u` is m×k, `vt` is k×n, k = min(m, n).
#[derive(Debug, Clone)]
pub struct Svd<S> {
    pub u: Array2<S>,
    pub sigma: Array1<S>,
    pub vt: Array2<S>,
}

impl<S: Scalar> Svd<S> {
    pub fn reconstruct(&self, rank: usize) -> Array2<S> {
        let (m, n) = (self.u.nrows(), self.vt.ncols());
        let rank = rank.min(self.sigma.len());
        Array2::from_shape_fn((m, n), |(i, j)| {
            (0..rank).fold(S::zero(), |acc, k| {
                acc + self.u[(i, k)] * self.sigma[k] * self.vt[(k, j)]
            })
        })
    }
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD. Orthogonalizes the columns of the
/// taller orientation of `a` by plane rotations until every column pair is
/// orthogonal to working precision.
pub fn svd<S: Scalar>(a: &Array2<S>) -> Svd<S> {
    let (m, n) = a.dim();
    if m < n {
        let t = svd(&a.t().to_owned());
        return Svd {
            u: t.vt.t().to_owned(),
            sigma: t.sigma,
            vt: t.u.t().to_owned(),
        };
    }
    // column-major working copies
    let mut cols: Vec<Vec<S>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    let mut v: Vec<Vec<S>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { S::one() } else { S::zero() }).collect())
        .collect();
    let eps = S::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = cols[p].iter().zip(&cols[q]).fold(
                    (S::zero(), S::zero(), S::zero()),
                    |(a, b, g), (&x, &y)| (a + x * x, b + y * y, g + x * y),
                );
                if gamma == S::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (S::one() + zeta * zeta).sqrt());
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<S> = cols
        .iter()
        .map(|c| c.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = Array2::from_elem((m, n), S::zero());
    let mut sigma = Array1::from_elem(n, S::zero());
    let mut vt = Array2::from_elem((n, n), S::zero());
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma[k] = s;
        if s > S::zero() {
            for i in 0..m {
                u[(i, k)] = cols[j][i] / s;
            }
        }
        for i in 0..n {
            vt[(k, i)] = v[j][i];
        }
    }
    Svd { u, sigma, vt }
}

fn rotate<S: Scalar>(cols: &mut [Vec<S>], p: usize, q: usize, c: S, s: S) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}
