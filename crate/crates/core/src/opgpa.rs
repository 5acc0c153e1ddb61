//! Per-group gains that bring every UE of a group to the same QoS target.
//!
//! With the designed block, the MI of a UE depends only on its effective SNR
//! `2 k_m s_m^2` (with `s_m` the effective singular value at the initial SNR),
//! so one required SNR per target serves the whole group.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{invalid, Error, Result};
use crate::mi::Constellation;
use crate::precoding::{design_block, EffectiveChannel};

pub const BISECTION_LOW_DB: f64 = -20.0;
pub const BISECTION_HIGH_DB: f64 = 60.0;
pub const BISECTION_TOL_BITS: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosTarget {
    pub i_s: f64,
    pub snr0: f64,
    pub snr1: Option<f64>,
}

impl QosTarget {
    pub fn new(i_s: f64, snr0: f64, snr1: Option<f64>, c: &Constellation) -> Result<QosTarget> {
        let ceiling = 2.0 * c.bits();
        if !(0.0..=ceiling).contains(&i_s) {
            return Err(invalid("I_S", format!("{i_s} bits outside [0, {ceiling}]")));
        }
        if !(snr0 > 0.0) {
            return Err(invalid("snr0", "initial SNR must be positive"));
        }
        if let Some(cap) = snr1 {
            if !(cap > snr0) {
                return Err(invalid("snr1", "cap must exceed the initial SNR"));
            }
        }
        Ok(QosTarget { i_s, snr0, snr1 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpgpaResult {
    pub k: Vec<f64>,
    pub snr_req: f64,
    pub snr_opgpa: f64,
    pub snr_nopgpa: f64,
    pub feasible: bool,
}

impl OpgpaResult {
    /// `SNR_NOPGPA / SNR_OPGPA` in dB.
    pub fn savings_db(&self) -> f64 {
        10.0 * (self.snr_nopgpa / self.snr_opgpa).log10()
    }
}

type ReqKey = (u64, usize, usize);

fn memo() -> &'static Mutex<HashMap<ReqKey, f64>> {
    static MEMO: OnceLock<Mutex<HashMap<ReqKey, f64>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Best achievable block MI at a linear effective SNR.
pub fn max_mi(snr_eff: f64, c: &Constellation, order: usize) -> Result<f64> {
    Ok(design_block(snr_eff, c, order)?.mi)
}

/// Effective SNR (linear) at which the designed block reaches `i_s` bits,
/// by bisection in dB. Returns the lower bracket when the target is met there.
pub fn snr_required(i_s: f64, c: &Constellation, order: usize) -> Result<f64> {
    let ceiling = 2.0 * c.bits();
    if !(i_s >= 0.0) {
        return Err(invalid("I_S", format!("{i_s} is negative")));
    }
    if i_s >= ceiling - BISECTION_TOL_BITS {
        return Err(Error::InfeasibleTarget {
            target: i_s,
            ceiling,
        });
    }
    let key = (i_s.to_bits(), c.size(), order);
    if let Some(v) = memo().lock().expect("memo poisoned").get(&key) {
        return Ok(*v);
    }
    let lin = |db: f64| 10f64.powf(db / 10.0);
    let (mut lo, mut hi) = (BISECTION_LOW_DB, BISECTION_HIGH_DB);
    let at_lo = max_mi(lin(lo), c, order)?;
    let result = if at_lo >= i_s - BISECTION_TOL_BITS {
        lin(lo)
    } else {
        if max_mi(lin(hi), c, order)? < i_s - BISECTION_TOL_BITS {
            return Err(Error::InfeasibleTarget {
                target: i_s,
                ceiling: max_mi(lin(hi), c, order)?,
            });
        }
        loop {
            let mid = 0.5 * (lo + hi);
            let mi = max_mi(lin(mid), c, order)?;
            if (mi - i_s).abs() <= BISECTION_TOL_BITS || hi - lo < 1e-6 {
                break lin(mid);
            }
            if mi < i_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    };
    memo().lock().expect("memo poisoned").insert(key, result);
    Ok(result)
}

/// Gains `k_m = SNR_req / (2 s_m^2)` with `s_m` the effective singular value
/// scaled to the initial SNR, plus the average-SNR accounting.
pub fn opgpa_gains(eff: &EffectiveChannel, target: &QosTarget, snr_req: f64) -> Result<OpgpaResult> {
    if eff.s_eff.is_empty() || eff.s_eff.iter().any(|s| !(*s > 0.0)) {
        return Err(invalid("s_eff", "all effective singular values must be positive"));
    }
    let scaled = eff.at_snr(target.snr0);
    let k = scaled.iter().map(|s| snr_req / (2.0 * s * s)).collect();
    let (snr_opgpa, snr_nopgpa) = average_snrs(eff, target, snr_req);
    let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let feasible = match target.snr1 {
        Some(cap) => min >= (target.snr0 * snr_req / cap).sqrt(),
        None => true,
    };
    Ok(OpgpaResult {
        k,
        snr_req,
        snr_opgpa,
        snr_nopgpa,
        feasible,
    })
}

/// `SNR_OPGPA = (SNR0 SNR_req / N_g) sum 1/s_m^2` and
/// `SNR_NOPGPA = SNR0 SNR_req / min s_m^2`, `s_m` scaled to the initial SNR.
pub fn average_snrs(eff: &EffectiveChannel, target: &QosTarget, snr_req: f64) -> (f64, f64) {
    let scaled = eff.at_snr(target.snr0);
    let n = scaled.len() as f64;
    let base = target.snr0 * snr_req;
    let mean_inv: f64 = scaled.iter().map(|s| 1.0 / (s * s)).sum::<f64>() / n;
    let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    (base * mean_inv, base / (min * min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::block_mi;
    use proptest::prelude::*;

    fn eff(s: &[f64]) -> EffectiveChannel {
        EffectiveChannel {
            s_eff: s.to_vec(),
            w: s.iter().map(|x| 1.0 / x).collect(),
        }
    }

    fn target(snr0: f64) -> QosTarget {
        QosTarget {
            i_s: 2.0,
            snr0,
            snr1: None,
        }
    }

    #[test]
    fn uniform_and_two_group_gains() {
        let r = opgpa_gains(&eff(&[1.0, 1.0, 1.0]), &target(1.0), 10.0).unwrap();
        assert_eq!(r.k, vec![5.0; 3]);
        assert!((r.snr_opgpa - r.snr_nopgpa).abs() < 1e-12);

        let r = opgpa_gains(&eff(&[2.0, 1.0]), &target(1.0), 8.0).unwrap();
        assert!((r.k[0] - 1.0).abs() < 1e-12 && (r.k[1] - 4.0).abs() < 1e-12);
        for (k, s) in r.k.iter().zip([2.0, 1.0]) {
            assert!((2.0 * k * s * s - 8.0).abs() < 1e-12);
        }

        let r = opgpa_gains(&eff(&[10.0, 1.0]), &target(1.0), 1.0).unwrap();
        assert!((r.snr_nopgpa / r.snr_opgpa - 1.0 / 0.505).abs() < 1e-12);
    }

    #[test]
    fn cap_feasibility() {
        let t = QosTarget {
            i_s: 2.0,
            snr0: 1.0,
            snr1: Some(4.0),
        };
        // need min s >= sqrt(1 * 8 / 4)
        assert!(opgpa_gains(&eff(&[2.0, 1.5]), &t, 8.0).unwrap().feasible);
        assert!(!opgpa_gains(&eff(&[2.0, 1.0]), &t, 8.0).unwrap().feasible);
        let c = Constellation::qam(4).unwrap();
        assert!(QosTarget::new(2.0, 4.0, Some(2.0), &c).is_err());
        assert!(QosTarget::new(5.0, 4.0, None, &c).is_err());
    }

    proptest! {
        #[test]
        fn gains_hit_the_target_and_opgpa_never_costs_more(
            s in proptest::collection::vec(0.01f64..10.0, 1..6),
            snr0 in 0.1f64..1000.0,
            req in 0.01f64..1000.0,
        ) {
            let e = eff(&s);
            let r = opgpa_gains(&e, &target(snr0), req).unwrap();
            for (k, sm) in r.k.iter().zip(e.at_snr(snr0)) {
                prop_assert!((2.0 * k * sm * sm - req).abs() <= 1e-12 * req);
            }
            prop_assert!(r.snr_opgpa <= r.snr_nopgpa * (1.0 + 1e-12));
        }
    }

    #[test]
    fn required_snr_is_monotone_and_reaches_target() {
        let c = Constellation::qam(4).unwrap();
        let floor = snr_required(0.0, &c, 10).unwrap();
        assert!((10.0 * floor.log10() - BISECTION_LOW_DB).abs() < 1e-9);
        let mut last = 0.0;
        for i_s in [1.0, 2.0, 3.0, 3.9] {
            let req = snr_required(i_s, &c, 10).unwrap();
            assert!(req.is_finite() && req >= last);
            last = req;
            assert!((max_mi(req, &c, 10).unwrap() - i_s).abs() <= BISECTION_TOL_BITS);
        }
        assert!(snr_required(1.5, &c, 10).unwrap() <= snr_required(3.0, &c, 10).unwrap());
        assert!(matches!(snr_required(4.0, &c, 10), Err(Error::InfeasibleTarget { .. })));
    }

    #[test]
    fn normalized_model_matches_raw_model() {
        // Raw: y = sqrt(k) s sqrt(2) v x + n with unit noise. Normalized: unit
        // gain with noise std 1 / (sqrt(2 k) s).
        let c = Constellation::qam(4).unwrap();
        let (k, s) = (3.7, 0.6);
        let block = design_block(2.0 * k * s * s, &c, 10).unwrap();
        let one = crate::linalg::CMat::from_element(1, 1, num_complex::Complex64::new(1.0, 0.0));
        let row = block.row();
        let g = crate::linalg::CMat::from_row_slice(1, 2, &row);
        let raw = crate::mi::mi_gh(&one.scale((2.0 * k).sqrt() * s), &g, 1.0, &c, 10).unwrap().bits;
        let norm = crate::mi::mi_gh(&one, &g, 1.0 / ((2.0 * k).sqrt() * s), &c, 10).unwrap().bits;
        assert!((raw - norm).abs() < 1e-6);
        assert!((block_mi(2.0 * k * s * s, block.theta, block.phi1, &c, 10).unwrap() - norm).abs() < 1e-6);
        // scaling the input by sqrt(k) multiplies the effective SNR by k
        let base = crate::mi::mi_gh(&one.scale(2f64.sqrt() * s), &g.scale(k.sqrt()), 1.0, &c, 10).unwrap().bits;
        assert!((base - raw).abs() < 1e-6);
    }
}
