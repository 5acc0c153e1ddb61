//! Outer precoders for a group's virtual channel: zero forcing, ZF combined
//! with per-UE two-symbol blocks, and the singular-basis variant.

pub mod block;

use num_complex::Complex64;
use rayon::prelude::*;

pub use block::{block_mi, design_block, optimize_at, optimize_pgp_block, power_split_check, PgpBlock, SplitCheck};

use crate::beamspace::VirtualChannel;
use crate::error::{invalid, Error, Result};
use crate::linalg::{trace_gram, CMat};
use crate::mi::{mi_gh, Constellation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrecoderKind {
    Zfp,
    ZfPgp,
    VaacPgp,
}

impl PrecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            PrecoderKind::Zfp => "ZFP",
            PrecoderKind::ZfPgp => "ZF_PGP",
            PrecoderKind::VaacPgp => "VAAC_PGP",
        }
    }

    pub fn streams_per_ue(self) -> usize {
        match self {
            PrecoderKind::Zfp => 1,
            _ => 2,
        }
    }
}

/// `P = left * diag(sv) * R`, with `R` block diagonal: one `1 x streams` row
/// per UE taken from `right`.
#[derive(Debug, Clone)]
pub struct PrecoderFactors {
    pub left: CMat,
    pub sv: Vec<f64>,
    pub right: Vec<PgpBlock>,
    pub power_budget: f64,
    pub kind: PrecoderKind,
}

impl PrecoderFactors {
    pub fn n_ue(&self) -> usize {
        self.sv.len()
    }

    pub fn right_matrix(&self) -> CMat {
        let n = self.n_ue();
        let k = self.kind.streams_per_ue();
        let mut r = CMat::zeros(n, n * k);
        for (m, b) in self.right.iter().enumerate() {
            if k == 1 {
                r[(m, m)] = Complex64::new(1.0, 0.0);
            } else {
                let row = b.row();
                r[(m, 2 * m)] = row[0];
                r[(m, 2 * m + 1)] = row[1];
            }
        }
        r
    }

    pub fn matrix(&self) -> CMat {
        let mut left = self.left.clone();
        for (j, s) in self.sv.iter().enumerate() {
            left.column_mut(j).scale_mut(*s);
        }
        left * self.right_matrix()
    }

    /// `|trace(P P^H) - budget|`.
    pub fn trace_error(&self) -> f64 {
        (trace_gram(&self.matrix()) - self.power_budget).abs()
    }
}

/// Per-UE post-inversion gains of a group channel.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub s_eff: Vec<f64>,
    /// `w_m = 1 / s_eff,m`.
    pub w: Vec<f64>,
}

impl EffectiveChannel {
    /// Scaled by `sqrt(snr0)`, the amplitude seen at the given initial SNR.
    pub fn at_snr(&self, snr0: f64) -> Vec<f64> {
        self.s_eff.iter().map(|s| s * snr0.sqrt()).collect()
    }
}

fn require_full_rank(hv: &VirtualChannel) -> Result<()> {
    if hv.n_ue() == 0 {
        return Err(invalid("H_v", "group has no UEs"));
    }
    if hv.n_beams() < hv.n_ue() {
        return Err(Error::DimensionMismatch(format!(
            "{} UEs over only {} beams cannot be separated",
            hv.n_ue(),
            hv.n_beams()
        )));
    }
    hv.svd.check_full_rank()
}

/// `H^+ = V S^-1 U^H` from the stored SVD.
pub fn pseudo_inverse(hv: &VirtualChannel) -> Result<CMat> {
    require_full_rank(hv)?;
    let svd = &hv.svd;
    let mut v = svd.v.clone();
    for (j, s) in svd.s.iter().enumerate() {
        v.column_mut(j).unscale_mut(*s);
    }
    Ok(v * svd.u.adjoint())
}

/// `s_eff,m = (sum_m' |U[m,m']|^2 / s_m'^2)^(-1/2)`, i.e. the inverse norm of
/// column `m` of the pseudo-inverse.
pub fn effective_singular_values(hv: &VirtualChannel) -> Result<EffectiveChannel> {
    require_full_rank(hv)?;
    let svd = &hv.svd;
    let s_eff: Vec<f64> = (0..hv.n_ue())
        .map(|m| {
            let acc: f64 = svd.s.iter().enumerate().map(|(k, s)| svd.u[(m, k)].norm_sqr() / (s * s)).sum();
            acc.sqrt().recip()
        })
        .collect();
    if s_eff.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::SingularChannel {
            ratio: svd.inverse_condition(),
        });
    }
    let w = s_eff.iter().map(|s| s.recip()).collect();
    Ok(EffectiveChannel { s_eff, w })
}

/// Zero forcing `P = w^2 H^+` with `trace(P P^H) = N_g`; returns the factors
/// and the common post-ZF amplitude `w^2`.
pub fn zfp(hv: &VirtualChannel) -> Result<(PrecoderFactors, f64)> {
    let pinv = pseudo_inverse(hv)?;
    let n = hv.n_ue();
    let w2 = (n as f64 / trace_gram(&pinv)).sqrt();
    let factors = PrecoderFactors {
        left: pinv,
        sv: vec![w2; n],
        right: vec![PgpBlock::unmixed(0.0); n],
        power_budget: n as f64,
        kind: PrecoderKind::Zfp,
    };
    Ok((factors, w2))
}

/// Single-symbol MI of a scalar channel at the given linear SNR.
pub fn scalar_mi(snr: f64, c: &Constellation, order: usize) -> Result<f64> {
    if snr <= 0.0 {
        return Ok(0.0);
    }
    let one = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
    Ok(mi_gh(&one, &one, 1.0 / snr.sqrt(), c, order)?.bits)
}

/// Per-UE ZFP MI at initial SNR `snr0`; every UE sees `snr0 * w^4`.
pub fn zfp_mi(hv: &VirtualChannel, snr0: f64, c: &Constellation, order: usize) -> Result<(PrecoderFactors, Vec<f64>)> {
    let (mut factors, w2) = zfp(hv)?;
    let mi = scalar_mi(snr0 * w2 * w2, c, order)?;
    for b in factors.right.iter_mut() {
        b.mi = mi;
    }
    Ok((factors, vec![mi; hv.n_ue()]))
}

fn designed_blocks(snrs: &[f64], c: &Constellation, order: usize) -> Result<Vec<PgpBlock>> {
    snrs.par_iter().map(|&snr| design_block(snr, c, order)).collect()
}

/// Channel inversion with unit-norm columns, then a `sqrt(2)` VAAC amplitude
/// and the per-UE optimized block: UE `m` receives
/// `sqrt(snr0) * s_eff,m * sqrt(2) * v_m x_m + n`.
pub fn zf_pgp(hv: &VirtualChannel, snr0: f64, c: &Constellation, order: usize) -> Result<(PrecoderFactors, Vec<f64>)> {
    let eff = effective_singular_values(hv)?;
    let mut left = pseudo_inverse(hv)?;
    for (j, s) in eff.s_eff.iter().enumerate() {
        left.column_mut(j).scale_mut(*s);
    }
    let snrs: Vec<f64> = eff.s_eff.iter().map(|s| 2.0 * s * s * snr0).collect();
    let blocks = designed_blocks(&snrs, c, order)?;
    let mi = blocks.iter().map(|b| b.mi).collect();
    let n = hv.n_ue();
    Ok((
        PrecoderFactors {
            left,
            sv: vec![2f64.sqrt(); n],
            right: blocks,
            power_budget: 2.0 * n as f64,
            kind: PrecoderKind::ZfPgp,
        },
        mi,
    ))
}

/// Right singular vectors of the group channel drive the blocks directly; UE
/// `m` is credited with singular value `s_m` (decoded on the matching left
/// singular vector). With `rotate`, the assignment cycles over `N_g` symbol
/// slots and each UE gets the mean.
pub fn vaac_pgp(
    hv: &VirtualChannel,
    snr0: f64,
    c: &Constellation,
    order: usize,
    rotate: bool,
) -> Result<(PrecoderFactors, Vec<f64>)> {
    require_full_rank(hv)?;
    let n = hv.n_ue();
    let s = &hv.svd.s;
    let snrs: Vec<f64> = s.iter().map(|s| 2.0 * s * s * snr0).collect();
    let blocks = designed_blocks(&snrs, c, order)?;
    let mut mi: Vec<f64> = blocks.iter().map(|b| b.mi).collect();
    if rotate {
        let mean = mi.iter().sum::<f64>() / n as f64;
        mi = vec![mean; n];
    }
    Ok((
        PrecoderFactors {
            left: hv.svd.v.columns(0, n).into_owned(),
            sv: vec![2f64.sqrt(); n],
            right: blocks,
            power_budget: 2.0 * n as f64,
            kind: PrecoderKind::VaacPgp,
        },
        mi,
    ))
}

/// Precoder for a family with placeholder blocks, plus the per-UE factor
/// `a_m` such that UE `m` sees effective SNR `a_m * snr0`. The Gram matrix
/// `P P^H` does not depend on the blocks, so this is enough for power audits
/// and interference.
pub fn precoder_structure(kind: PrecoderKind, hv: &VirtualChannel) -> Result<(PrecoderFactors, Vec<f64>)> {
    let n = hv.n_ue();
    match kind {
        PrecoderKind::Zfp => {
            let (f, w2) = zfp(hv)?;
            Ok((f, vec![w2 * w2; n]))
        }
        PrecoderKind::ZfPgp => {
            let eff = effective_singular_values(hv)?;
            let mut left = pseudo_inverse(hv)?;
            for (j, s) in eff.s_eff.iter().enumerate() {
                left.column_mut(j).scale_mut(*s);
            }
            let factors = PrecoderFactors {
                left,
                sv: vec![2f64.sqrt(); n],
                right: vec![PgpBlock::unmixed(0.0); n],
                power_budget: 2.0 * n as f64,
                kind,
            };
            Ok((factors, eff.s_eff.iter().map(|s| 2.0 * s * s).collect()))
        }
        PrecoderKind::VaacPgp => {
            require_full_rank(hv)?;
            let factors = PrecoderFactors {
                left: hv.svd.v.columns(0, n).into_owned(),
                sv: vec![2f64.sqrt(); n],
                right: vec![PgpBlock::unmixed(0.0); n],
                power_budget: 2.0 * n as f64,
                kind,
            };
            Ok((factors, hv.svd.s.iter().take(n).map(|s| 2.0 * s * s).collect()))
        }
    }
}

/// Finite-alphabet MI of one UE link at effective SNR `snr` for a family.
pub fn link_mi(kind: PrecoderKind, snr: f64, c: &Constellation, order: usize) -> Result<f64> {
    match kind {
        PrecoderKind::Zfp => scalar_mi(snr, c, order),
        _ => Ok(design_block(snr, c, order)?.mi),
    }
}

/// Gaussian-input MI of each UE's scalar link for the given precoder family.
pub fn gaussian_per_ue(kind: PrecoderKind, hv: &VirtualChannel, snr0: f64) -> Result<Vec<f64>> {
    let (_, gains) = precoder_structure(kind, hv)?;
    Ok(gains.iter().map(|g| (1.0 + g * snr0).log2()).collect())
}
