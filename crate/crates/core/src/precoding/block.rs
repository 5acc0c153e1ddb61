//! Per-UE 2x2 PGP block with a virtual zero-gain second antenna.
//!
//! The UE sees `y = sqrt(snr_eff) * (cos t * x1 + sin t * e^{j p1} * x2) + n`
//! where `snr_eff = 2 s^2 SNR0`: only the first row of the block unitary
//! reaches the physical antenna. The second-row phase `p2` never affects the
//! received signal and is kept at zero. Multiplying `x2` by `j` or conjugating
//! the model leaves the MI unchanged for QAM, and swapping the streams maps
//! `t` to `pi/2 - t`, so the search runs over `t in [0, pi/4]`, `p1 in [0, pi/4]`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::linalg::CMat;
use crate::mi::{mi_gh, Constellation};

const THETA_STEPS: usize = 32;
const PHI_STEPS: usize = 8;
const REFINE_TOL: f64 = 1e-4;

/// Designer table spacing and range, in dB of effective SNR.
pub const TABLE_STEP_DB: f64 = 1.0;
pub const TABLE_MIN_DB: f64 = -30.0;
pub const TABLE_MAX_DB: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgpBlock {
    pub theta: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// MI in bits at the SNR the block was evaluated for.
    pub mi: f64,
}

impl PgpBlock {
    /// Block that sends one symbol and leaves the second stream erased.
    pub fn unmixed(mi: f64) -> PgpBlock {
        PgpBlock {
            theta: 0.0,
            phi1: 0.0,
            phi2: 0.0,
            mi,
        }
    }

    /// Recovers the parameters of a 2x2 unitary, discarding its global phase.
    pub fn from_unitary(u: &CMat) -> PgpBlock {
        let (a, b, cc) = (u[(0, 0)], u[(0, 1)], u[(1, 0)]);
        let theta = b.norm().atan2(a.norm());
        let (pa, pb, pc) = (a.arg(), b.arg(), cc.arg());
        let phi1 = if b.norm() > 0.0 { (pb - pa).rem_euclid(std::f64::consts::TAU) } else { 0.0 };
        let phi2 = if cc.norm() > 0.0 {
            (pc - pa - std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
        } else {
            0.0
        };
        PgpBlock {
            theta,
            phi1,
            phi2,
            mi: f64::NAN,
        }
    }

    /// First row of `V^H`, the part that reaches the physical antenna.
    pub fn row(&self) -> [Complex64; 2] {
        [
            Complex64::new(self.theta.cos(), 0.0),
            Complex64::from_polar(self.theta.sin(), self.phi1),
        ]
    }

    /// Full `V^H = [[c, s e^{j p1}], [-s e^{j p2}, c e^{j (p1 + p2)}]]`.
    pub fn unitary(&self) -> CMat {
        let (s, c) = self.theta.sin_cos();
        CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(c, 0.0),
                Complex64::from_polar(s, self.phi1),
                -Complex64::from_polar(s, self.phi2),
                Complex64::from_polar(c, self.phi1 + self.phi2),
            ],
        )
    }
}

/// MI of the two-symbol single-output block model.
pub fn block_mi(snr_eff: f64, theta: f64, phi1: f64, c: &Constellation, order: usize) -> Result<f64> {
    if !(snr_eff >= 0.0) || !snr_eff.is_finite() {
        return Err(invalid("snr_eff", format!("{snr_eff} is not a finite non-negative SNR")));
    }
    if snr_eff == 0.0 {
        return Ok(0.0);
    }
    let h = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
    let g = CMat::from_row_slice(
        1,
        2,
        &[Complex64::new(theta.cos(), 0.0), Complex64::from_polar(theta.sin(), phi1)],
    );
    Ok(mi_gh(&h, &g, 1.0 / snr_eff.sqrt(), c, order)?.bits)
}

/// Grid search over `(theta, phi1)` followed by a shrinking pattern search.
pub fn optimize_at(snr_eff: f64, c: &Constellation, order: usize) -> Result<PgpBlock> {
    let eval = |t: f64, p: f64| block_mi(snr_eff, t, p, c, order);
    let mut best = (0.0, 0.0, eval(0.0, 0.0)?);
    for i in 1..=THETA_STEPS {
        let t = FRAC_PI_4 * i as f64 / THETA_STEPS as f64;
        for j in 0..=PHI_STEPS {
            let p = FRAC_PI_4 * j as f64 / PHI_STEPS as f64;
            let v = eval(t, p)?;
            if v > best.2 {
                best = (t, p, v);
            }
        }
    }

    let mut step_t = FRAC_PI_4 / THETA_STEPS as f64;
    let mut step_p = FRAC_PI_4 / PHI_STEPS as f64;
    while step_t > REFINE_TOL || step_p > REFINE_TOL {
        let mut moved = false;
        for (dt, dp) in [(step_t, 0.0), (-step_t, 0.0), (0.0, step_p), (0.0, -step_p)] {
            let t = (best.0 + dt).clamp(0.0, FRAC_PI_2);
            let p = best.1 + dp;
            let v = eval(t, p)?;
            if v > best.2 + 1e-7 {
                best = (t, p, v);
                moved = true;
                break;
            }
        }
        if !moved {
            step_t *= 0.5;
            step_p *= 0.5;
        }
    }
    Ok(PgpBlock {
        theta: best.0,
        phi1: best.1.rem_euclid(std::f64::consts::TAU),
        phi2: 0.0,
        mi: best.2,
    })
}

/// Optimal block for a UE whose effective singular value is `s_eff`.
pub fn optimize_pgp_block(s_eff: f64, snr0: f64, c: &Constellation, order: usize) -> Result<PgpBlock> {
    if !(s_eff > 0.0) {
        return Err(invalid("s_eff", "effective singular value must be positive"));
    }
    optimize_at(2.0 * s_eff * s_eff * snr0, c, order)
}

type TableKey = (usize, usize, i32);

fn table() -> &'static Mutex<HashMap<TableKey, PgpBlock>> {
    static TABLE: OnceLock<Mutex<HashMap<TableKey, PgpBlock>>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn table_entry(index: i32, c: &Constellation, order: usize) -> Result<PgpBlock> {
    let key = (c.size(), order, index);
    if let Some(b) = table().lock().expect("designer table poisoned").get(&key) {
        return Ok(*b);
    }
    let snr = 10f64.powf(index as f64 * TABLE_STEP_DB / 10.0);
    let block = optimize_at(snr, c, order)?;
    table()
        .lock()
        .expect("designer table poisoned")
        .entry(key)
        .or_insert(block);
    Ok(block)
}

/// Block for an arbitrary effective SNR using the shared table of optima.
///
/// The optimum depends on the UE only through its effective SNR, so optima
/// are computed once on a fixed dB grid and the better of the two bracketing
/// entries is used at the query SNR.
pub fn design_block(snr_eff: f64, c: &Constellation, order: usize) -> Result<PgpBlock> {
    if !(snr_eff >= 0.0) || !snr_eff.is_finite() {
        return Err(invalid("snr_eff", format!("{snr_eff} is not a finite non-negative SNR")));
    }
    if snr_eff == 0.0 {
        return Ok(PgpBlock::unmixed(0.0));
    }
    let db = (10.0 * snr_eff.log10()).clamp(TABLE_MIN_DB, TABLE_MAX_DB);
    let lo = (db / TABLE_STEP_DB).floor() as i32;
    let hi = (lo + 1).min((TABLE_MAX_DB / TABLE_STEP_DB) as i32);
    let mut best: Option<PgpBlock> = None;
    for index in [lo, hi] {
        let entry = table_entry(index, c, order)?;
        let mi = block_mi(snr_eff, entry.theta, entry.phi1, c, order)?;
        if best.is_none_or(|b| mi > b.mi) {
            best = Some(PgpBlock { mi, ..entry });
        }
    }
    Ok(best.expect("two candidates evaluated"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCheck {
    /// Amplitudes on the useful and the virtual antenna, `a1^2 + a2^2 = 2`.
    pub a1: f64,
    pub a2: f64,
    pub block: PgpBlock,
    pub mi_free: f64,
    pub passes: bool,
}

/// Re-optimizes a block with the amplitude split between the useful and the
/// zero-gain antenna as a free variable, starting from an equal split.
pub fn power_split_check(snr_eff: f64, c: &Constellation, order: usize) -> Result<SplitCheck> {
    // a1 = sqrt(2) cos b; the virtual antenna contributes nothing, so the
    // received amplitude scales with cos b.
    let eval = |b: f64, t: f64, p: f64| block_mi(snr_eff * b.cos().powi(2), t, p, c, order);
    let mut beta = FRAC_PI_4;
    let start = optimize_at(snr_eff * 0.5, c, order)?;
    let (mut t, mut p) = (start.theta, start.phi1);
    let mut value = eval(beta, t, p)?;
    for _ in 0..20 {
        let new_beta = golden_max(|b| eval(b, t, p).unwrap_or(f64::NEG_INFINITY), 0.0, FRAC_PI_2, 1e-9);
        let at_beta = eval(new_beta, t, p)?;
        if at_beta >= value {
            beta = new_beta;
            value = at_beta;
        }
        let local = optimize_at(snr_eff * beta.cos().powi(2), c, order)?;
        let improved = local.mi > value + 1e-12;
        if improved {
            t = local.theta;
            p = local.phi1;
            value = local.mi;
        }
        if !improved && (new_beta - beta).abs() < 1e-9 {
            break;
        }
    }
    let (a1, a2) = (2f64.sqrt() * beta.cos(), 2f64.sqrt() * beta.sin());
    let passes = (a1 - 2f64.sqrt()).abs() <= 1e-6 && a2.abs() <= 1e-6 || value < 1e-9;
    Ok(SplitCheck {
        a1,
        a2,
        block: PgpBlock {
            theta: t,
            phi1: p,
            phi2: 0.0,
            mi: value,
        },
        mi_free: value,
        passes,
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    // endpoints are admissible and a monotone objective peaks there
    [a, mid, b]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        10f64.powf(x / 10.0)
    }

    #[test]
    fn unitary_block() {
        let b = PgpBlock {
            theta: 0.3,
            phi1: 1.1,
            phi2: -0.4,
            mi: 0.0,
        };
        let u = b.unitary();
        let err = crate::linalg::max_abs(&(&u * u.adjoint() - CMat::identity(2, 2)));
        assert!(err < 1e-12);
        let row = b.row();
        assert!((u[(0, 0)] - row[0]).norm() < 1e-15 && (u[(0, 1)] - row[1]).norm() < 1e-15);
    }

    #[test]
    fn vanishing_snr_gives_no_information() {
        let c = Constellation::qam(4).unwrap();
        let b = optimize_at(db(-40.0), &c, 10).unwrap();
        assert!(b.mi < 1e-3);
    }

    #[test]
    fn high_snr_carries_two_symbols() {
        let c = Constellation::qam(4).unwrap();
        let b = optimize_at(db(40.0), &c, 10).unwrap();
        assert!(b.mi >= 3.9, "{}", b.mi);
        let single = block_mi(db(40.0), 0.0, 0.0, &c, 10).unwrap();
        assert!(single <= 2.0 + 1e-9);
        assert!(b.mi > single + 1.0);
    }

    #[test]
    fn beats_a_five_degree_grid() {
        let c = Constellation::qam(4).unwrap();
        for snr_db in [5.0, 15.0] {
            let b = optimize_at(db(snr_db), &c, 10).unwrap();
            let step = 5f64.to_radians();
            let mut oracle: f64 = 0.0;
            for i in 0..=18 {
                for j in 0..=18 {
                    oracle = oracle.max(block_mi(db(snr_db), i as f64 * step, j as f64 * step, &c, 10).unwrap());
                }
            }
            assert!(b.mi >= oracle - 1e-6, "{snr_db} dB: {} vs {oracle}", b.mi);
        }
    }

    #[test]
    fn global_phase_is_invisible() {
        let c = Constellation::qam(16).unwrap();
        let block = PgpBlock {
            theta: 0.25,
            phi1: 0.4,
            phi2: 1.3,
            mi: 0.0,
        };
        let u = block.unitary();
        let reference = block_mi(30.0, block.theta, block.phi1, &c, 10).unwrap();
        for alpha in [0.77, -2.1, 3.0] {
            let rotated = u.map(|z| z * Complex64::from_polar(1.0, alpha));
            let back = PgpBlock::from_unitary(&rotated);
            assert!((back.theta - block.theta).abs() < 1e-12);
            assert!((back.phi1 - block.phi1).abs() < 1e-12 && (back.phi2 - block.phi2).abs() < 1e-12);
            let mi = block_mi(30.0, back.theta, back.phi1, &c, 10).unwrap();
            assert!((mi - reference).abs() < 1e-9);
        }
    }

    #[test]
    fn designer_matches_direct_optimum() {
        let c = Constellation::qam(4).unwrap();
        for snr_db in [3.3, 11.7] {
            let direct = optimize_at(db(snr_db), &c, 10).unwrap();
            let cached = design_block(db(snr_db), &c, 10).unwrap();
            assert!(cached.mi >= direct.mi - 2e-3, "{} vs {}", cached.mi, direct.mi);
        }
    }

    #[test]
    fn free_split_returns_to_useful_antenna() {
        let c = Constellation::qam(4).unwrap();
        let check = power_split_check(db(10.0), &c, 10).unwrap();
        assert!(check.passes, "{check:?}");
        let equal = optimize_at(db(10.0) * 0.5, &c, 10).unwrap();
        assert!(equal.mi < check.mi_free);
    }
}
