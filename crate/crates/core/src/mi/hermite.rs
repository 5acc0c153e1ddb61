//! Gauss-Hermite rules for integrals of the form `int exp(-x^2) f(x) dx`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

pub const MAX_ORDER: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct GhRule {
    /// Roots of the physicists' Hermite polynomial `H_L`, ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GhRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }

    pub fn max_node(&self) -> f64 {
        self.nodes.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// Nodes by Newton iteration on the orthonormal Hermite recurrence.
///
/// With `p_n` orthonormal under `exp(-x^2)`, the weight at a root is
/// `2 / p_n'(x)^2`, which equals `2^(L-1) L! sqrt(pi) / (L^2 H_{L-1}(x)^2)`.
pub fn gh_rule(order: usize) -> Result<GhRule> {
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(invalid(
            "L",
            format!("Gauss-Hermite order {order} outside 2..={MAX_ORDER}"),
        ));
    }
    let n = order;
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..(n + 1) / 2 {
        z = match i {
            0 => {
                let t = (2 * n + 1) as f64;
                t.sqrt() - 1.85575 * t.powf(-0.16667)
            }
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(GhRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence.
pub fn hermite_poly(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}
