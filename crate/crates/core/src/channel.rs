//! Downlink channel generation for an annular mmWave cell served by a UPA.
//!
//! UEs sit at ground level, the array is mounted at height `h` above the
//! cell centre. Elevation is measured from the +z axis and azimuth from +x,
//! so a UE below the array has `cos(theta) < 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{invalid, Error, Result};
use crate::linalg::{kron_vec, CMat, CVec};

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub r_inner: f64,
    pub r_outer: f64,
    pub height: f64,
    pub n_ux: usize,
    pub n_uz: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl CellGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_inner > 0.0 && self.r_inner < self.r_outer) {
            return Err(invalid("r_inner/r_outer", "need 0 < r_inner < r_outer"));
        }
        if !(self.height > 0.0) {
            return Err(invalid("height", "must be positive"));
        }
        if self.n_ux == 0 || self.n_uz == 0 {
            return Err(invalid("n_ux/n_uz", "array needs at least one element per axis"));
        }
        if !(self.spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        self.n_ux * self.n_uz
    }

    pub fn area(&self) -> f64 {
        PI * (self.r_outer * self.r_outer - self.r_inner * self.r_inner)
    }
}

impl Default for CellGeometry {
    fn default() -> Self {
        CellGeometry {
            r_inner: 1.0,
            r_outer: 5.0,
            height: 3.0,
            n_ux: 10,
            n_uz: 10,
            spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationParams {
    /// Linear SNR at the breakpoint distance.
    pub snr0: f64,
    pub r_break: f64,
    pub k_los: f64,
    pub k_nlos: f64,
    pub m_los: f64,
    pub m_nlos: f64,
    pub p_block: f64,
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr0 > 0.0) {
            return Err(invalid("snr0", "must be positive"));
        }
        if !(self.r_break > 0.0) {
            return Err(invalid("r_break", "must be positive"));
        }
        if !(self.k_nlos > self.k_los && self.k_los > 0.0) {
            return Err(invalid("k_los/k_nlos", "need 0 < k_los < k_nlos"));
        }
        if !(self.m_nlos < self.m_los && self.m_nlos >= 0.5) {
            return Err(invalid("m_los/m_nlos", "need 0.5 <= m_nlos < m_los"));
        }
        if !(0.0..=1.0).contains(&self.p_block) {
            return Err(invalid("p_block", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn exponent(&self, blocked: bool) -> f64 {
        if blocked {
            self.k_nlos
        } else {
            self.k_los
        }
    }

    pub fn shape(&self, blocked: bool) -> f64 {
        if blocked {
            self.m_nlos
        } else {
            self.m_los
        }
    }
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            snr0: 100.0,
            r_break: 1.0,
            k_los: 2.0,
            k_nlos: 4.0,
            m_los: 4.0,
            m_nlos: 2.0,
            p_block: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    pub index: usize,
    /// Horizontal distance from the array base.
    pub ground_range: f64,
    /// 3-D distance to the array.
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub blocked: bool,
    pub fading: Complex64,
    pub snr: f64,
}

#[derive(Debug, Clone)]
pub struct CellChannel {
    /// `N_UE x N_T`; row `n` is the Hermitian of UE `n`'s channel vector with
    /// fading and path loss folded in. `sqrt(SNR_0)` stays outside.
    pub h: CMat,
    pub ues: Vec<UeState>,
}

impl CellChannel {
    pub fn n_ue(&self) -> usize {
        self.ues.len()
    }

    pub fn blocked(&self) -> Vec<usize> {
        self.ues.iter().filter(|u| u.blocked).map(|u| u.index).collect()
    }

    pub fn unblocked(&self) -> Vec<usize> {
        self.ues.iter().filter(|u| !u.blocked).map(|u| u.index).collect()
    }
}

/// UPA response `a_z(theta) (x) a_x(theta, phi)`; entry `p * n_ux + q` carries
/// phase `-2 pi D (p cos(theta) + q sin(theta) cos(phi))`.
pub fn steering_vector(theta: f64, phi: f64, geom: &CellGeometry) -> CVec {
    let d = geom.spacing;
    let ux = -2.0 * PI * d * theta.sin() * phi.cos();
    let uz = -2.0 * PI * d * theta.cos();
    let a_x = CVec::from_fn(geom.n_ux, |q, _| Complex64::from_polar(1.0, ux * q as f64));
    let a_z = CVec::from_fn(geom.n_uz, |p, _| Complex64::from_polar(1.0, uz * p as f64));
    kron_vec(&a_z, &a_x)
}

/// Nakagami-m amplitude with unit spread and uniform phase.
pub fn sample_fading<R: Rng + ?Sized>(m: f64, rng: &mut R) -> Result<Complex64> {
    if !(m >= 0.5) {
        return Err(invalid("m", format!("Nakagami shape {m} below 0.5")));
    }
    let gamma = Gamma::new(m, 1.0 / m).map_err(|e| invalid("m", e.to_string()))?;
    let power: f64 = gamma.sample(rng);
    let phase = rng.random_range(0.0..2.0 * PI);
    Ok(Complex64::from_polar(power.sqrt(), phase))
}

/// Breakpoint path-loss SNR `g^2 SNR_0 (R_break / R)^k`.
pub fn path_snr(range: f64, blocked: bool, prop: &PropagationParams, g: f64) -> Result<f64> {
    if range < prop.r_break {
        return Err(Error::InsideBreakpoint {
            range,
            breakpoint: prop.r_break,
        });
    }
    let k = prop.exponent(blocked);
    Ok(g * g * prop.snr0 * (prop.r_break / range).powf(k))
}

pub fn sample_cell<R: Rng + ?Sized>(
    n_ue: usize,
    geom: &CellGeometry,
    prop: &PropagationParams,
    rng: &mut R,
) -> Result<CellChannel> {
    if n_ue == 0 {
        return Err(invalid("n_ue", "need at least one UE"));
    }
    geom.validate()?;
    prop.validate()?;

    let (ri2, ro2) = (geom.r_inner.powi(2), geom.r_outer.powi(2));
    let mut h = CMat::zeros(n_ue, geom.n_t());
    let mut ues = Vec::with_capacity(n_ue);
    for n in 0..n_ue {
        let ground_range = rng.random_range(ri2..ro2).sqrt();
        let azimuth = rng.random_range(0.0..2.0 * PI);
        let blocked = rng.random_bool(prop.p_block);
        let fading = sample_fading(prop.shape(blocked), rng)?;

        let range = ground_range.hypot(geom.height);
        // The array sits above the UE: the direction vector has z = -h.
        let elevation = (-geom.height / range).acos();
        let snr = path_snr(range, blocked, prop, fading.norm())?;

        let amplitude = (prop.r_break / range).powf(prop.exponent(blocked) / 2.0);
        let a = steering_vector(elevation, azimuth, geom);
        let scale = fading.conj() * amplitude;
        for (t, z) in a.iter().enumerate() {
            h[(n, t)] = z.conj() * scale;
        }
        ues.push(UeState {
            index: n,
            ground_range,
            range,
            azimuth,
            elevation,
            blocked,
            fading,
            snr,
        });
    }
    Ok(CellChannel { h, ues })
}
