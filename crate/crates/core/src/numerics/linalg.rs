//! Dense linear algebra on row-major `f64` slices.

use crate::error::{Error, Result};

/// Maximum number of jitter doublings before a factorization is abandoned.
pub const MAX_JITTER_DOUBLINGS: u32 = 8;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `A x` for an `rows x cols` row-major matrix.
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    (0..rows)
        .map(|i| dot(&a[i * cols..(i + 1) * cols], x))
        .collect()
}

/// `x^T A x` for a square row-major matrix.
pub fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        s += x[i] * dot(&a[i * n..(i + 1) * n], x);
    }
    s
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// Lower-triangular Cholesky factor `L` with `A + jitter I = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorize a symmetric matrix. A plain factorization is tried first;
    /// on failure `1e-10 * trace(A) / n` is added to the diagonal and doubled
    /// up to [`MAX_JITTER_DOUBLINGS`] times.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension {
                context: "cholesky",
                expected: n * n,
                got: a.len(),
            });
        }
        if n == 0 {
            return Ok(Self {
                n,
                l: Vec::new(),
                jitter: 0.0,
            });
        }
        if let Some(l) = try_factor(a, n, 0.0) {
            return Ok(Self { n, l, jitter: 0.0 });
        }
        let base = (1e-10 * trace(a, n) / n as f64).abs().max(f64::MIN_POSITIVE);
        let mut jitter = base;
        for _ in 0..=MAX_JITTER_DOUBLINGS {
            if let Some(l) = try_factor(a, n, jitter) {
                return Ok(Self { n, l, jitter });
            }
            jitter *= 2.0;
        }
        Err(Error::NotPositiveDefinite { jitter: jitter / 2.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    /// Solve `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = dot(row, &y[..i]);
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }

    /// Solve `L^T x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solve `(L L^T) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// Dense inverse of the factored matrix.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize away rounding asymmetry
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = m;
                inv[j * n + i] = m;
            }
        }
        inv
    }
}

fn try_factor(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                let d = a[i * n + i] + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` for symmetric positive-definite `A` (`n x n`, row-major).
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != n {
        return Err(Error::Dimension {
            context: "cholesky_solve rhs",
            expected: n,
            got: b.len(),
        });
    }
    Ok(Cholesky::factor(a, n)?.solve(b))
}

/// Rank-one update of a stored inverse: `(A + u u^T)^{-1}` from `A^{-1}`.
pub fn sherman_morrison(a_inv: &mut [f64], u: &[f64]) {
    let n = u.len();
    let au: Vec<f64> = mat_vec(a_inv, n, n, u);
    let denom = 1.0 + dot(u, &au);
    for i in 0..n {
        let ai = au[i] / denom;
        let row = &mut a_inv[i * n..(i + 1) * n];
        for (j, r) in row.iter_mut().enumerate() {
            *r -= ai * au[j];
        }
    }
}

/// `A += alpha * u u^T`
pub fn rank_one_update(a: &mut [f64], alpha: f64, u: &[f64]) {
    let n = u.len();
    for i in 0..n {
        let s = alpha * u[i];
        let row = &mut a[i * n..(i + 1) * n];
        for (j, r) in row.iter_mut().enumerate() {
            *r += s * u[j];
        }
    }
}
