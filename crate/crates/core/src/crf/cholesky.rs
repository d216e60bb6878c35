//! Dense Cholesky factorisation `A = L Lᵀ` for the small symmetric positive
//! definite systems that arise per superpixel graph.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    /// Lower factor, row-major; the strict upper triangle is zero.
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor a row-major symmetric matrix. Only the lower triangle is read.
    pub fn factor(a: &[f64], n: usize) -> Result<Cholesky> {
        if a.len() != n * n {
            return Err(Error::dim("crf", n * n, a.len()));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let row_j = j * n;
            let mut d = a[row_j + j];
            for k in 0..j {
                d -= l[row_j + k] * l[row_j + k];
            }
            if !(d > 0.0) {
                return Err(Error::param("crf", format!("matrix is not positive definite (pivot {j}: {d})")));
            }
            let d = d.sqrt();
            l[row_j + j] = d;
            for i in (j + 1)..n {
                let row_i = i * n;
                let mut s = a[row_i + j];
                for k in 0..j {
                    s -= l[row_i + k] * l[row_j + k];
                }
                l[row_i + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_matrix(&self) -> &[f64] {
        &self.l
    }

    /// `log |A| = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solve `L x = b` in place.
    pub fn forward_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
    }

    /// Solve `Lᵀ x = b` in place.
    pub fn backward_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs length");
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// Columns of `L⁻¹`, stored column-major (`n * n`), so that
    /// `(e_i - e_j)ᵀ A⁻¹ (e_i - e_j) = |col_i - col_j|²`.
    pub fn inverse_factor_columns(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for c in 0..n {
            let col = &mut w[c * n..(c + 1) * n];
            col[c] = 1.0 / self.l[c * n + c];
            for i in (c + 1)..n {
                let mut s = 0.0;
                for k in c..i {
                    s += self.l[i * n + k] * col[k];
                }
                col[i] = -s / self.l[i * n + i];
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_by_hand() {
        let c = Cholesky::factor(&[2.0, -1.0, -1.0, 2.0], 2).unwrap();
        assert!((c.log_det() - 3f64.ln()).abs() < 1e-14);
        let x = c.solve(&[3.0, 0.0]);
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_factor_reproduces_inverse() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let c = Cholesky::factor(&a, 3).unwrap();
        let w = c.inverse_factor_columns();
        // (A⁻¹)_{ij} = col_i · col_j
        for i in 0..3 {
            let e: Vec<f64> = (0..3).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
            let inv_col = c.solve(&e);
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| w[i * 3 + k] * w[j * 3 + k]).sum();
                assert!((dot - inv_col[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        assert!(Cholesky::factor(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }
}
