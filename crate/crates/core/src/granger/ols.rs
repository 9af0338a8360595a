//! Least squares by Householder QR with rank detection.

/// Column `j` is declared collinear when its residual norm after reflecting
/// out the previous columns falls below this fraction of its original norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Householder factorization of a column-major `rows × cols` matrix.
#[derive(Clone, Debug)]
pub struct Qr {
    rows: usize,
    cols: usize,
    /// Upper triangle holds R; reflectors are kept separately.
    a: Vec<f64>,
    reflectors: Vec<(Vec<f64>, f64)>,
}

impl Qr {
    /// Factors `columns` (each of length `rows`). On rank deficiency returns
    /// the index of the first column that is a combination of earlier ones.
    pub fn factor(columns: &[&[f64]]) -> Result<Qr, usize> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut a = Vec::with_capacity(rows * cols);
        for c in columns {
            debug_assert_eq!(c.len(), rows);
            a.extend_from_slice(c);
        }
        let col_norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let mut reflectors = Vec::with_capacity(cols);
        for j in 0..cols {
            if j >= rows {
                return Err(j);
            }
            let col = &a[j * rows + j..(j + 1) * rows];
            let alpha_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(alpha_norm > RANK_TOLERANCE * col_norms[j]) || alpha_norm == 0.0 {
                return Err(j);
            }
            let alpha = if col[0] >= 0.0 { -alpha_norm } else { alpha_norm };
            let mut v = col.to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            let beta = 2.0 / vnorm2;
            a[j * rows + j] = alpha;
            for x in &mut a[j * rows + j + 1..(j + 1) * rows] {
                *x = 0.0;
            }
            for c in j + 1..cols {
                let tail = &mut a[c * rows + j..(c + 1) * rows];
                let s: f64 = v.iter().zip(tail.iter()).map(|(x, y)| x * y).sum();
                let f = beta * s;
                for (t, x) in tail.iter_mut().zip(&v) {
                    *t -= f * x;
                }
            }
            reflectors.push((v, beta));
        }
        Ok(Qr { rows, cols, a, reflectors })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Overwrites `y` with `Qᵀ y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            let tail = &mut y[j..];
            let s: f64 = v.iter().zip(tail.iter()).map(|(x, y)| x * y).sum();
            let f = beta * s;
            for (t, x) in tail.iter_mut().zip(v) {
                *t -= f * x;
            }
        }
    }

    /// Coefficients from `Qᵀ y` by back substitution.
    pub fn solve_from_qty(&self, qty: &[f64]) -> Vec<f64> {
        let n = self.rows;
        let mut beta = qty[..self.cols].to_vec();
        for i in (0..self.cols).rev() {
            for c in i + 1..self.cols {
                beta[i] -= self.a[c * n + i] * beta[c];
            }
            beta[i] /= self.a[i * n + i];
        }
        beta
    }

    /// Residual sum of squares from `Qᵀ y`.
    pub fn rss_from_qty(&self, qty: &[f64]) -> f64 {
        qty[self.cols..].iter().map(|v| v * v).sum()
    }
}

/// Result of a least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub n_obs: usize,
}

/// Regresses `y` on `columns` (no implicit intercept).
pub fn least_squares(columns: &[&[f64]], y: &[f64]) -> Result<LeastSquares, usize> {
    let qr = Qr::factor(columns)?;
    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);
    Ok(LeastSquares { coefficients: qr.solve_from_qty(&qty), rss: qr.rss_from_qty(&qty), n_obs: y.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_and_collinearity() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7) % 11) as f64 - 3.0).collect();
        let ones = vec![1.0; 50];
        let y: Vec<f64> = x.iter().map(|v| 0.25 + 1.5 * v).collect();
        let fit = least_squares(&[&ones, &x], &y).unwrap();
        assert!(fit.rss < 1e-18);
        assert!((fit.coefficients[0] - 0.25).abs() < 1e-9);
        assert!((fit.coefficients[1] - 1.5).abs() < 1e-9);
        let scaled: Vec<f64> = x.iter().map(|v| 1e6 * v).collect();
        assert_eq!(least_squares(&[&ones, &x, &scaled], &y).unwrap_err(), 2);
        assert_eq!(least_squares(&[&ones, &ones], &y).unwrap_err(), 1);
    }

    #[test]
    fn matches_normal_equations() {
        // Oracle: solve the 2×2 normal equations in closed form.
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.11).cos() + 0.3 * x[i]).collect();
        let n = 40.0;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        let fit = least_squares(&[&vec![1.0; 40], &x], &y).unwrap();
        assert!((fit.coefficients[0] - icpt).abs() < 1e-12);
        assert!((fit.coefficients[1] - slope).abs() < 1e-12);
        let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
        assert!((fit.rss - rss).abs() < 1e-10);
    }
}
