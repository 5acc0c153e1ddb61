//! Finite-alphabet mutual information of `y = H G x + n` by Gauss-Hermite
//! quadrature, with a Monte-Carlo estimator used as an independent check.
//!
//! For input vector `x_k` the quantity
//! `f_k = E_n log2 sum_m exp(-|n - HG(x_k - x_m)|^2 / sigma^2)`
//! is a `2 N_r`-dimensional Gaussian integral. After the substitution
//! `n = sigma v` it becomes `pi^{-N_r} int exp(-|v|^2) z(sigma v) dv`, which is
//! evaluated on a tensor GH grid. The mutual information is then
//! `N_s log2 M - N_r / ln 2 - mean_k f_k`.

pub mod constellation;
pub mod hermite;

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use constellation::Constellation;
pub use hermite::{gh_rule, GhRule};

use crate::error::{invalid, Error, Result};
use crate::linalg::CMat;

pub const DEFAULT_GH_ORDER: usize = 10;
pub const MAX_INPUT_VECTORS: usize = 4096;
pub const MAX_GRID_NODES: usize = 10_000_000;

/// Interferers whose exponent gap to the `m = k` term exceeds this are dropped;
/// `exp(-60)` is far below double precision relative to the retained sum.
const PRUNE_GAP: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub enum MiMethod {
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, std_error: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    pub method: MiMethod,
    /// Per-input-vector `f_k` (empty for Monte-Carlo estimates).
    pub f_hat: Vec<f64>,
    pub sigma: f64,
    pub n_inputs: usize,
    pub n_outputs: usize,
}

impl MiEstimate {
    pub fn std_error(&self) -> f64 {
        match self.method {
            MiMethod::MonteCarlo { std_error, .. } => std_error,
            MiMethod::GaussHermite { .. } => 0.0,
        }
    }
}

/// Noiseless received points `HG x_k`, flattened `K x N_r`.
struct Alphabet {
    points: Vec<Complex64>,
    n_r: usize,
    n_s: usize,
    m: usize,
}

impl Alphabet {
    fn new(h: &CMat, g: &CMat, c: &Constellation) -> Result<Alphabet> {
        if h.ncols() != g.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "H is {}x{}, G is {}x{}",
                h.nrows(),
                h.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        let a = h * g;
        let (n_r, n_s) = a.shape();
        let m = c.size();
        let count = checked_pow(m, n_s).filter(|&k| k <= MAX_INPUT_VECTORS).ok_or(
            Error::Capacity {
                what: "input vectors M^N_s",
                base: m,
                exponent: n_s,
                limit: MAX_INPUT_VECTORS,
            },
        )?;
        let mut points = Vec::with_capacity(count * n_r);
        for k in 0..count {
            let x = digits(k, m, n_s);
            for r in 0..n_r {
                points.push((0..n_s).map(|s| a[(r, s)] * c.points[x[s]]).sum());
            }
        }
        Ok(Alphabet { points, n_r, n_s, m })
    }

    fn len(&self) -> usize {
        self.points.len() / self.n_r.max(1)
    }

    fn point(&self, k: usize) -> &[Complex64] {
        &self.points[k * self.n_r..(k + 1) * self.n_r]
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

fn digits(mut k: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut() {
        *d = k % base;
        k /= base;
    }
    out
}

fn rotate_input(k: usize, m: usize, n_s: usize, rot: &[usize]) -> usize {
    digits(k, m, n_s)
        .iter()
        .rev()
        .fold(0, |acc, &d| acc * m + rot[d])
}

/// Mutual information in bits by `L`-node Gauss-Hermite quadrature per real
/// noise dimension. `sigma` is the noise standard deviation per complex entry.
pub fn mi_gh(h: &CMat, g: &CMat, sigma: f64, c: &Constellation, order: usize) -> Result<MiEstimate> {
    mi_gh_impl(h, g, sigma, c, order, true)
}

fn mi_gh_impl(
    h: &CMat,
    g: &CMat,
    sigma: f64,
    c: &Constellation,
    order: usize,
    use_symmetry: bool,
) -> Result<MiEstimate> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("noise std {sigma} must be positive and finite")));
    }
    let rule = gh_rule(order)?;
    let alphabet = Alphabet::new(h, g, c)?;
    let n_r = alphabet.n_r;
    checked_pow(order, 2 * n_r)
        .filter(|&n| n <= MAX_GRID_NODES)
        .ok_or(Error::Capacity {
            what: "quadrature nodes L^(2 N_r)",
            base: order,
            exponent: 2 * n_r,
            limit: MAX_GRID_NODES,
        })?;

    let k_count = alphabet.len();
    // Multiplying every input by j rotates the received alphabet by a quarter
    // turn; the GH grid is invariant under that rotation, so f_k is shared
    // across each orbit.
    let rep: Vec<usize> = match (use_symmetry, c.rotation()) {
        (true, Some(rot)) => (0..k_count)
            .map(|k| {
                let mut best = k;
                let mut cur = k;
                for _ in 0..3 {
                    cur = rotate_input(cur, alphabet.m, alphabet.n_s, rot);
                    best = best.min(cur);
                }
                best
            })
            .collect(),
        _ => (0..k_count).collect(),
    };
    let reps: Vec<usize> = (0..k_count).filter(|&k| rep[k] == k).collect();
    let rep_values: Vec<f64> = reps
        .par_iter()
        .map(|&k| f_hat_single(&alphabet, k, sigma, &rule))
        .collect();
    let mut lookup = vec![0.0; k_count];
    for (k, v) in reps.iter().zip(&rep_values) {
        lookup[*k] = *v;
    }
    let f_hat: Vec<f64> = (0..k_count).map(|k| lookup[rep[k]]).collect();

    let mean_f = f_hat.iter().sum::<f64>() / k_count as f64;
    let ceiling = alphabet.n_s as f64 * c.bits();
    let bits = (ceiling - n_r as f64 / LN_2 - mean_f).clamp(0.0, ceiling);
    Ok(MiEstimate {
        bits,
        method: MiMethod::GaussHermite { order },
        f_hat,
        sigma,
        n_inputs: alphabet.n_s,
        n_outputs: n_r,
    })
}

/// `f_k` on the tensor grid. The log-sum is accumulated as a sum of products of
/// per-dimension Gaussian factors `exp(-(v - u)^2) <= 1`; the `m = k` term is
/// `exp(-|v|^2)`, bounded below on the grid, so the sum never underflows for
/// admissible orders and needs no rescaling.
fn f_hat_single(alphabet: &Alphabet, k: usize, sigma: f64, rule: &GhRule) -> f64 {
    let n_r = alphabet.n_r;
    let dims = 2 * n_r;
    let l = rule.order();
    let radius = rule.max_node() * (dims as f64).sqrt();
    let sk = alphabet.point(k);

    // Scaled differences u_m = (s_k - s_m) / sigma, real/imag interleaved.
    let mut u: Vec<f64> = Vec::with_capacity(alphabet.len() * dims);
    let mut kept = 0usize;
    for m in 0..alphabet.len() {
        let sm = alphabet.point(m);
        let start = u.len();
        let mut norm2 = 0.0;
        for r in 0..n_r {
            let d = (sk[r] - sm[r]) / sigma;
            u.push(d.re);
            u.push(d.im);
            norm2 += d.norm_sqr();
        }
        let norm = norm2.sqrt();
        if m == k || norm * (norm - 2.0 * radius) <= PRUNE_GAP {
            kept += 1;
        } else {
            u.truncate(start);
        }
    }

    // factors[d][node * kept + j] = exp(-(v_node - u_{j,d})^2)
    let factors: Vec<Vec<f64>> = (0..dims)
        .map(|d| {
            let mut f = Vec::with_capacity(l * kept);
            for &v in &rule.nodes {
                for j in 0..kept {
                    let t = v - u[j * dims + d];
                    f.push((-t * t).exp());
                }
            }
            f
        })
        .collect();

    let mut idx = vec![0usize; dims];
    let mut partial = vec![vec![1.0; kept]; dims.saturating_sub(1)];
    let mut wprod = vec![1.0; dims];
    let refresh = |d: usize, idx: &[usize], partial: &mut Vec<Vec<f64>>, wprod: &mut Vec<f64>| {
        let w_prev = if d == 0 { 1.0 } else { wprod[d - 1] };
        wprod[d] = w_prev * rule.weights[idx[d]];
        if d + 1 < dims {
            let fac = &factors[d][idx[d] * kept..(idx[d] + 1) * kept];
            let (head, tail) = partial.split_at_mut(d);
            let out = &mut tail[0];
            if d == 0 {
                out.copy_from_slice(fac);
            } else {
                let prev = &head[d - 1];
                for j in 0..kept {
                    out[j] = prev[j] * fac[j];
                }
            }
        }
    };
    for d in 0..dims {
        refresh(d, &idx, &mut partial, &mut wprod);
    }

    let mut total = 0.0;
    loop {
        let leaf = &factors[dims - 1][idx[dims - 1] * kept..(idx[dims - 1] + 1) * kept];
        let s: f64 = if dims == 1 {
            leaf.iter().sum()
        } else {
            partial[dims - 2].iter().zip(leaf).map(|(a, b)| a * b).sum()
        };
        let log_s = if s >= f64::MIN_POSITIVE {
            s.log2()
        } else {
            log_sum_fallback(&u, kept, dims, &idx, rule)
        };
        total += wprod[dims - 1] * log_s;

        let mut d = dims;
        loop {
            if d == 0 {
                return total * PI.powi(-(n_r as i32));
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < l {
                break;
            }
            idx[d] = 0;
        }
        for dd in d..dims {
            refresh(dd, &idx, &mut partial, &mut wprod);
        }
    }
}

/// Log-domain evaluation with max subtraction for grid points where the
/// product form underflows.
fn log_sum_fallback(u: &[f64], kept: usize, dims: usize, idx: &[usize], rule: &GhRule) -> f64 {
    let exps: Vec<f64> = (0..kept)
        .map(|j| {
            -(0..dims)
                .map(|d| (rule.nodes[idx[d]] - u[j * dims + d]).powi(2))
                .sum::<f64>()
        })
        .collect();
    log2_sum_exp(&exps)
}

pub(crate) fn log2_sum_exp(exps: &[f64]) -> f64 {
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = exps.iter().map(|e| (e - max).exp()).sum();
    (max + s.ln()) / LN_2
}

/// Sample-mean estimate of the same quantity, drawing the input uniformly and
/// the noise from `CN(0, sigma^2 I)`.
pub fn mi_mc<R: Rng + ?Sized>(
    h: &CMat,
    g: &CMat,
    sigma: f64,
    c: &Constellation,
    n_samples: usize,
    rng: &mut R,
) -> Result<MiEstimate> {
    if n_samples < 10_000 {
        return Err(invalid("n_samples", "Monte-Carlo needs at least 10^4 samples"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("noise std {sigma} must be positive and finite")));
    }
    let alphabet = Alphabet::new(h, g, c)?;
    let (n_r, k_count) = (alphabet.n_r, alphabet.len());
    let noise_std = sigma / 2f64.sqrt();
    let inv_var = 1.0 / (sigma * sigma);

    let mut noise = vec![Complex64::new(0.0, 0.0); n_r];
    let mut exps = vec![0.0; k_count];
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n_samples {
        let k = rng.random_range(0..k_count);
        for z in noise.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z = Complex64::new(re * noise_std, im * noise_std);
        }
        let sk = alphabet.point(k);
        for (m, e) in exps.iter_mut().enumerate() {
            let sm = alphabet.point(m);
            let dist: f64 = (0..n_r).map(|r| (noise[r] + sk[r] - sm[r]).norm_sqr()).sum();
            *e = -dist * inv_var;
        }
        // -log2 p(x_k | y)
        let value = log2_sum_exp(&exps) - exps[k] / LN_2;
        let delta = value - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (value - mean);
    }
    let var = m2 / (n_samples - 1) as f64;
    let std_error = (var / n_samples as f64).sqrt();
    let ceiling = alphabet.n_s as f64 * c.bits();
    Ok(MiEstimate {
        bits: ceiling - mean,
        method: MiMethod::MonteCarlo {
            samples: n_samples,
            std_error,
        },
        f_hat: Vec::new(),
        sigma,
        n_inputs: alphabet.n_s,
        n_outputs: n_r,
    })
}

/// Input-dependent output entropy `H_k(y)` recovered from `f_k`.
pub fn idoe(f_hat_k: f64, sigma: f64, n_outputs: usize, n_inputs: usize, m: usize) -> f64 {
    let n_r = n_outputs as f64;
    -f_hat_k + 2.0 * n_r * sigma.log2() + n_r * PI.log2() + n_inputs as f64 * (m as f64).log2()
}

/// Gaussian-input mutual information `log2 det(I + A A^H / sigma^2)` for `A = HG`.
pub fn gaussian_mi(h: &CMat, g: &CMat, sigma: f64) -> Result<f64> {
    if h.ncols() != g.nrows() {
        return Err(Error::DimensionMismatch("H and G do not chain".into()));
    }
    let a = h * g;
    let n = a.nrows();
    let gram = CMat::identity(n, n) + (&a * a.adjoint()).unscale(sigma * sigma);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Audit("I + AA^H not positive definite".into()))?;
    Ok(chol.l().diagonal().iter().map(|d| 2.0 * d.re.log2()).sum())
}
