//! Multiple-access interference between sub-groups that share a subcarrier.

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::precoding::PrecoderFactors;

/// How interference power enters the per-UE effective SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrConvention {
    /// `(1/SNR0 + 1/sum p)^-1`, with `sum p = 0` giving `SNR0`.
    #[default]
    Harmonic,
    /// `SNR0 / (1 + sum p)`, interference added to unit noise.
    Sinr,
}

impl SnrConvention {
    pub fn name(self) -> &'static str {
        match self {
            SnrConvention::Harmonic => "harmonic",
            SnrConvention::Sinr => "sinr",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaiReport {
    /// One covariance per interfering sub-group.
    pub covariances: Vec<CMat>,
    /// `per_source[l][i] = K_l[i, i]`.
    pub per_source: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    pub snr_eff: Vec<f64>,
}

/// `K = H_cross P P^H H_cross^H` for unit-power uncorrelated inputs.
pub fn mai_covariance(h_cross: &CMat, p_int: &CMat) -> Result<CMat> {
    if h_cross.ncols() != p_int.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cross channel has {} beams, interferer precoder drives {}",
            h_cross.ncols(),
            p_int.nrows()
        )));
    }
    let hp = h_cross * p_int;
    Ok(&hp * hp.adjoint())
}

/// Covariance from a factored precoder.
pub fn mai_covariance_from(h_cross: &CMat, p_int: &PrecoderFactors) -> Result<CMat> {
    mai_covariance(h_cross, &p_int.matrix())
}

/// Per-source diagonals and their sums.
pub fn mai_powers(ks: &[CMat]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = ks.first().map_or(0, |k| k.nrows());
    if ks.iter().any(|k| k.nrows() != n || k.ncols() != n) {
        return Err(Error::DimensionMismatch("covariances of unequal size".into()));
    }
    let per_source: Vec<Vec<f64>> = ks
        .iter()
        .map(|k| (0..n).map(|i| k[(i, i)].re.max(0.0)).collect())
        .collect();
    let totals = (0..n).map(|i| per_source.iter().map(|p| p[i]).sum()).collect();
    Ok((per_source, totals))
}

/// Per-UE SNR under interference. `p_total` is relative to unit noise, i.e.
/// already multiplied by the initial SNR.
pub fn effective_snr_jsdm(snr0: f64, p_total: &[f64], convention: SnrConvention) -> Vec<f64> {
    p_total
        .iter()
        .map(|&p| match convention {
            SnrConvention::Harmonic if p > 0.0 => 1.0 / (1.0 / snr0 + 1.0 / p),
            SnrConvention::Harmonic => snr0,
            SnrConvention::Sinr => snr0 / (1.0 + p),
        })
        .collect()
}

/// Full report for one victim sub-group. Each entry of `sources` is the victim's
/// unit-SNR channel over an interferer's beams and that interferer's precoder.
pub fn mai_report(
    snr0: f64,
    sources: &[(CMat, CMat)],
    n_victims: usize,
    convention: SnrConvention,
) -> Result<MaiReport> {
    let covariances = sources
        .iter()
        .map(|(h, p)| mai_covariance(h, p))
        .collect::<Result<Vec<_>>>()?;
    let (per_source, totals) = if covariances.is_empty() {
        (Vec::new(), vec![0.0; n_victims])
    } else {
        mai_powers(&covariances)?
    };
    let scaled: Vec<f64> = totals.iter().map(|p| p * snr0).collect();
    let snr_eff = effective_snr_jsdm(snr0, &scaled, convention);
    Ok(MaiReport {
        covariances,
        per_source,
        totals,
        snr_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
    }

    #[test]
    fn trivial_covariances() {
        let k = mai_covariance(&CMat::zeros(2, 3), &CMat::identity(3, 3)).unwrap();
        assert_eq!(k, CMat::zeros(2, 2));
        let k = mai_covariance(&CMat::identity(3, 3), &CMat::identity(3, 3)).unwrap();
        assert_eq!(k, CMat::identity(3, 3));
        assert!(mai_covariance(&CMat::identity(2, 2), &CMat::identity(3, 3)).is_err());
    }

    #[test]
    fn covariance_matches_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random(3, 4, &mut rng);
        let p = random(4, 4, &mut rng);
        let k = mai_covariance(&h, &p).unwrap();
        let hp = &h * &p;
        let qpsk = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        let n = 1_000_000;
        let mut acc = CMat::zeros(3, 3);
        let mut x = nalgebra::DVector::<Complex64>::zeros(4);
        for _ in 0..n {
            for z in x.iter_mut() {
                let (a, b) = qpsk[rng.random_range(0..4)];
                *z = Complex64::new(a, b) / 2f64.sqrt();
            }
            let y = &hp * &x;
            acc += &y * y.adjoint();
        }
        acc.unscale_mut(n as f64);
        let rel = crate::linalg::frobenius(&(acc - &k)) / crate::linalg::frobenius(&k);
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn totals_and_conventions() {
        let (per, tot) = mai_powers(&[CMat::identity(2, 2), CMat::identity(2, 2)]).unwrap();
        assert_eq!(per.len(), 2);
        assert_eq!(tot, vec![2.0, 2.0]);
        let (_, single) = mai_powers(&[CMat::identity(2, 2).scale(0.3)]).unwrap();
        assert_eq!(single, vec![0.3, 0.3]);

        let h = effective_snr_jsdm(100.0, &[0.0, 100.0, 1e12], SnrConvention::Harmonic);
        assert_eq!(h[0], 100.0);
        assert!((h[1] - 50.0).abs() < 1e-12);
        assert!((h[2] - 100.0).abs() < 1e-6);
        let s = effective_snr_jsdm(100.0, &[0.0, 1.0], SnrConvention::Sinr);
        assert_eq!(s, vec![100.0, 50.0]);
    }

    #[test]
    fn disjoint_beams_give_no_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random(3, 3, &mut rng);
        let r = mai_report(100.0, &[(CMat::zeros(2, 3), p)], 2, SnrConvention::Harmonic).unwrap();
        assert_eq!(r.totals, vec![0.0, 0.0]);
        assert_eq!(r.snr_eff, vec![100.0, 100.0]);
    }

    proptest! {
        #[test]
        fn covariance_is_hermitian_psd(seed in 0u64..10_000, rows in 1usize..5, cols in 1usize..6, streams in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random(rows, cols, &mut rng);
            let p = random(cols, streams, &mut rng);
            let k = mai_covariance(&h, &p).unwrap();
            prop_assert!(crate::linalg::max_abs(&(&k - k.adjoint())) < 1e-9 * (1.0 + crate::linalg::max_abs(&k)));
            let eig = k.symmetric_eigenvalues();
            let trace: f64 = (0..rows).map(|i| k[(i, i)].re).sum();
            prop_assert!(eig.iter().all(|e| *e >= -1e-9 * trace.max(1.0)));
        }
    }
}
