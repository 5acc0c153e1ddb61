use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Square QAM alphabet (BPSK for `M = 2`) normalized to unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<Complex64>,
    /// `rotation[i]` is the index of `j * points[i]`; `None` when the alphabet
    /// is not closed under a quarter turn (BPSK).
    rotation: Option<Vec<usize>>,
}

impl Constellation {
    pub fn qam(m: usize) -> Result<Constellation> {
        let points = match m {
            2 => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            4 | 16 | 64 => {
                let side = (m as f64).sqrt().round() as usize;
                let scale = (3.0 / (2.0 * (m as f64 - 1.0))).sqrt();
                let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) * scale;
                (0..m)
                    .map(|i| Complex64::new(level(i % side), level(i / side)))
                    .collect()
            }
            _ => return Err(invalid("M", format!("unsupported constellation size {m}"))),
        };
        let rotation = if m >= 4 {
            Some(
                points
                    .iter()
                    .map(|p| {
                        let target = p * Complex64::new(0.0, 1.0);
                        points
                            .iter()
                            .position(|q| (q - target).norm() < 1e-9)
                            .expect("square QAM is closed under a quarter turn")
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Constellation { points, rotation })
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits(&self) -> f64 {
        (self.size() as f64).log2()
    }

    pub fn rotation(&self) -> Option<&[usize]> {
        self.rotation.as_deref()
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.size() as f64
    }
}
