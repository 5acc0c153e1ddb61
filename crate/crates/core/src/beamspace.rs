//! DFT beamspace (virtual channel) representation and beam pre-selection.

use crate::channel::CellGeometry;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dft, kron, CMat, Svd};

/// Orthonormal beam basis `F_{N_uz} (x) F_{N_ux}`; column `i` is beam `i`.
#[derive(Debug, Clone)]
pub struct VcmBasis {
    pub b: CMat,
}

pub fn vcm_basis(geom: &CellGeometry) -> VcmBasis {
    VcmBasis {
        b: kron(&dft(geom.n_uz), &dft(geom.n_ux)),
    }
}

/// Channel in beamspace: `H_v = H_d B`.
pub fn project(h_d: &CMat, basis: &VcmBasis) -> Result<CMat> {
    if h_d.ncols() != basis.b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} antennas, basis has {}",
            h_d.ncols(),
            basis.b.nrows()
        )));
    }
    Ok(h_d * &basis.b)
}

pub fn unproject(h_v: &CMat, basis: &VcmBasis) -> Result<CMat> {
    if h_v.ncols() != basis.b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "beamspace channel has {} beams, basis has {}",
            h_v.ncols(),
            basis.b.ncols()
        )));
    }
    Ok(h_v * basis.b.adjoint())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreselectionResult {
    /// Selected beams (0-based), strongest first.
    pub beams: Vec<usize>,
    pub powers: Vec<f64>,
    pub captured_fraction: f64,
    /// Row `n`: the selected beams re-ordered by UE `n`'s own power, strongest first.
    pub per_ue_order: Vec<Vec<usize>>,
}

/// Per-beam powers `||H_v[:, i]||^2`.
pub fn beam_powers(h_v: &CMat) -> Vec<f64> {
    h_v.column_iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

/// Beam indices sorted by descending power; ties go to the lower index.
pub fn rank_beams(powers: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..powers.len()).collect();
    order.sort_by(|&a, &b| powers[b].total_cmp(&powers[a]).then(a.cmp(&b)));
    order
}

pub fn preselect(h_v: &CMat, n_v_init: usize) -> Result<PreselectionResult> {
    let n_t = h_v.ncols();
    if n_v_init == 0 || n_v_init > n_t {
        return Err(invalid("n_v_init", format!("{n_v_init} outside 1..={n_t}")));
    }
    let all = beam_powers(h_v);
    let order = rank_beams(&all);
    let beams: Vec<usize> = order[..n_v_init].to_vec();
    let powers: Vec<f64> = beams.iter().map(|&b| all[b]).collect();

    let total: f64 = all.iter().sum();
    let captured_fraction = if total > 0.0 {
        if n_v_init == n_t {
            1.0
        } else {
            powers.iter().sum::<f64>() / total
        }
    } else {
        0.0
    };

    let per_ue_order = (0..h_v.nrows())
        .map(|n| {
            let mut row = beams.clone();
            row.sort_by(|&a, &b| {
                h_v[(n, b)]
                    .norm_sqr()
                    .total_cmp(&h_v[(n, a)].norm_sqr())
                    .then(a.cmp(&b))
            });
            row
        })
        .collect();

    Ok(PreselectionResult {
        beams,
        powers,
        captured_fraction,
        per_ue_order,
    })
}

/// Smallest pre-selection whose captured fraction reaches `target`.
pub fn preselect_fraction(h_v: &CMat, target: f64) -> Result<PreselectionResult> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(invalid("capture_fraction", format!("{target} outside (0, 1]")));
    }
    let all = beam_powers(h_v);
    let total: f64 = all.iter().sum();
    let order = rank_beams(&all);
    let mut acc = 0.0;
    let mut n = order.len();
    for (i, &b) in order.iter().enumerate() {
        acc += all[b];
        if acc >= target * total {
            n = i + 1;
            break;
        }
    }
    preselect(h_v, n.max(1))
}

/// Unit-SNR channel of a set of UEs over a set of beams, with its SVD.
#[derive(Debug, Clone)]
pub struct VirtualChannel {
    pub h: CMat,
    pub svd: Svd,
    pub ues: Vec<usize>,
    pub beams: Vec<usize>,
}

impl VirtualChannel {
    pub fn new(h: CMat, ues: Vec<usize>, beams: Vec<usize>) -> VirtualChannel {
        let svd = Svd::new(&h);
        VirtualChannel { h, svd, ues, beams }
    }

    /// Restriction of a full beamspace channel to the given UEs and beams.
    pub fn from_beamspace(h_v: &CMat, ues: &[usize], beams: &[usize]) -> VirtualChannel {
        let h = CMat::from_fn(ues.len(), beams.len(), |i, j| h_v[(ues[i], beams[j])]);
        VirtualChannel::new(h, ues.to_vec(), beams.to_vec())
    }

    pub fn n_ue(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_beams(&self) -> usize {
        self.h.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_cell, PropagationParams};
    use crate::linalg::{frobenius, max_abs};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(n_ux: usize, n_uz: usize) -> CellGeometry {
        CellGeometry {
            n_ux,
            n_uz,
            ..CellGeometry::default()
        }
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn degenerate_and_small_bases() {
        let b1 = vcm_basis(&geom(1, 1)).b;
        assert_eq!(b1.shape(), (1, 1));
        assert!((b1[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        let b2 = vcm_basis(&geom(2, 2)).b;
        for z in b2.iter() {
            assert!((z.re.abs() - 0.5).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
        assert!(max_abs(&(&b2 * b2.adjoint() - CMat::identity(4, 4))) < 1e-12);

        let b10 = vcm_basis(&geom(10, 10)).b;
        assert!(max_abs(&(b10.adjoint() * &b10 - CMat::identity(100, 100))) < 1e-10);
    }

    #[test]
    fn basis_aligned_channel_is_one_hot() {
        let basis = vcm_basis(&geom(3, 2));
        let row = basis.b.adjoint().rows(0, 1).into_owned();
        let hv = project(&row, &basis).unwrap();
        assert!((hv[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(hv.iter().skip(1).all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn projection_preserves_norm_and_inverts() {
        let basis = vcm_basis(&geom(4, 3));
        let h = random_matrix(5, 12, 11);
        let hv = project(&h, &basis).unwrap();
        assert!((frobenius(&hv) - frobenius(&h)).abs() < 1e-9);
        assert!(max_abs(&(unproject(&hv, &basis).unwrap() - &h)) < 1e-12);
        assert!(project(&random_matrix(2, 5, 1), &basis).is_err());
    }

    #[test]
    fn hand_sortable_preselection() {
        // Column powers [4, 1, 9, 0].
        let hv = CMat::from_row_slice(
            1,
            4,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(3.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        let ps = preselect(&hv, 2).unwrap();
        assert_eq!(ps.beams, vec![2, 0]);
        assert_eq!(ps.powers, vec![9.0, 4.0]);
        assert!((ps.captured_fraction - 13.0 / 14.0).abs() < 1e-15);
        assert_eq!(preselect(&hv, 4).unwrap().captured_fraction, 1.0);
        assert!(preselect(&hv, 0).is_err());
        assert!(preselect(&hv, 5).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let one = Complex64::new(1.0, 0.0);
        let hv = CMat::from_row_slice(1, 3, &[one, one, one]);
        assert_eq!(preselect(&hv, 2).unwrap().beams, vec![0, 1]);
    }

    #[test]
    fn per_ue_order_is_descending() {
        let hv = random_matrix(4, 9, 5);
        let ps = preselect(&hv, 5).unwrap();
        for (n, row) in ps.per_ue_order.iter().enumerate() {
            let mut sorted = row.clone();
            sorted.sort();
            let mut beams = ps.beams.clone();
            beams.sort();
            assert_eq!(sorted, beams);
            assert!(row
                .windows(2)
                .all(|w| hv[(n, w[0])].norm_sqr() >= hv[(n, w[1])].norm_sqr()));
        }
    }

    #[test]
    fn fraction_knob_picks_smallest_count() {
        let hv = random_matrix(3, 20, 8);
        let ps = preselect_fraction(&hv, 0.8).unwrap();
        assert!(ps.captured_fraction >= 0.8);
        let fewer = preselect(&hv, ps.beams.len() - 1).unwrap();
        assert!(fewer.captured_fraction < 0.8);
    }

    proptest! {
        #[test]
        fn preselection_takes_top_powers(seed in 0u64..1000, n in 1usize..12) {
            let hv = random_matrix(3, 12, seed);
            let ps = preselect(&hv, n).unwrap();
            let mut all = beam_powers(&hv);
            all.sort_by(|a, b| b.total_cmp(a));
            prop_assert_eq!(&ps.powers[..], &all[..n]);
            if n < 12 {
                let next = preselect(&hv, n + 1).unwrap();
                prop_assert!(next.captured_fraction >= ps.captured_fraction);
            }
            let total: f64 = all.iter().sum();
            prop_assert!((ps.captured_fraction - ps.powers.iter().sum::<f64>() / total).abs() < 1e-12);
        }
    }

    #[test]
    fn virtual_channel_svd_invariants() {
        let hv = random_matrix(4, 7, 3);
        let vc = VirtualChannel::from_beamspace(&hv, &[0, 2, 3], &[1, 4, 5, 6]);
        assert_eq!(vc.h.shape(), (3, 4));
        assert!(max_abs(&(vc.svd.reconstruct() - &vc.h)) < 1e-9);
        assert!(max_abs(&(vc.svd.u.adjoint() * &vc.svd.u - CMat::identity(3, 3))) < 1e-9);
        assert!(vc.svd.s.windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
    }

    #[test]
    fn beamspace_rows_are_sparse() {
        // Per-UE concentration census on scenario-1 draws: median share of
        // each row's power held by its 8 strongest beams.
        let geom = CellGeometry::default();
        let basis = vcm_basis(&geom);
        let mut shares = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cell = sample_cell(10, &geom, &PropagationParams::default(), &mut rng).unwrap();
            let hv = project(&cell.h, &basis).unwrap();
            for n in 0..hv.nrows() {
                let mut p: Vec<f64> = hv.row(n).iter().map(|z| z.norm_sqr()).collect();
                let total: f64 = p.iter().sum();
                p.sort_by(|a, b| b.total_cmp(a));
                shares.push(p[..8].iter().sum::<f64>() / total);
            }
        }
        shares.sort_by(f64::total_cmp);
        let median = shares[shares.len() / 2];
        assert!(median >= 0.9, "median top-8 share {median}");
    }
}
