//! Dense complex matrix helpers shared by the channel, beamspace and precoding code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Singular values below this fraction of the largest one are treated as zero.
pub const RANK_TOL: f64 = 1e-8;

/// Thin SVD `A = U diag(s) V^H` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

impl Svd {
    pub fn new(a: &CMat) -> Svd {
        let (rows, cols) = a.shape();
        let k = rows.min(cols);
        if k == 0 {
            return Svd {
                u: CMat::zeros(rows, 0),
                s: Vec::new(),
                v: CMat::zeros(cols, 0),
            };
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let mut su = CMat::zeros(rows, k);
        let mut sv = CMat::zeros(cols, k);
        let mut s = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            su.set_column(dst, &u.column(src));
            sv.set_column(dst, &v_t.row(src).adjoint());
            s.push(svd.singular_values[src]);
        }
        Svd { u: su, s, v: sv }
    }

    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }

    /// Ratio of smallest to largest singular value (0 for an empty or zero matrix).
    pub fn inverse_condition(&self) -> f64 {
        match (self.s.first(), self.s.last()) {
            (Some(&max), Some(&min)) if max > 0.0 => min / max,
            _ => 0.0,
        }
    }

    pub fn check_full_rank(&self) -> Result<()> {
        let ratio = self.inverse_condition();
        if ratio < RANK_TOL {
            return Err(Error::SingularChannel { ratio });
        }
        Ok(())
    }
}

/// Unitary DFT matrix, `F[p, q] = exp(-j 2 pi p q / n) / sqrt(n)`.
pub fn dft(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |p, q| {
        let angle = -2.0 * std::f64::consts::PI * ((p * q) % n) as f64 / n as f64;
        Complex64::from_polar(scale, angle)
    })
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    CVec::from_fn(a.len() * b.len(), |i, _| a[i / b.len()] * b[i % b.len()])
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace_gram(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Columns of `a` selected in the given order.
pub fn select_columns(a: &CMat, cols: &[usize]) -> CMat {
    CMat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

pub fn select_rows(a: &CMat, rows: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_is_unitary() {
        for n in [1, 2, 5, 10] {
            let f = dft(n);
            let err = max_abs(&(f.adjoint() * &f - CMat::identity(n, n)));
            assert!(err < 1e-12, "n = {n}: {err}");
        }
    }

    #[test]
    fn svd_sorted_and_reconstructs() {
        let a = CMat::from_fn(3, 5, |i, j| {
            Complex64::new((i * 7 + j * 3) as f64 % 5.0 - 2.0, (i + 2 * j) as f64 % 3.0 - 1.0)
        });
        let svd = Svd::new(&a);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(max_abs(&(svd.reconstruct() - &a)) < 1e-10);
        assert!(max_abs(&(svd.u.adjoint() * &svd.u - CMat::identity(3, 3))) < 1e-10);
        assert!(max_abs(&(svd.v.adjoint() * &svd.v - CMat::identity(3, 3))) < 1e-10);
    }

    #[test]
    fn kron_matches_definition() {
        let a = CMat::from_row_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
        let b = CMat::from_row_slice(1, 2, &[Complex64::new(3.0, 0.0), J]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 2));
        assert_eq!(k[(1, 1)], 2.0 * J);
        assert_eq!(k[(0, 0)], Complex64::new(3.0, 0.0));
    }
}
