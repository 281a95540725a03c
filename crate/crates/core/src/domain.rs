use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `Π [lo_i, hi_i]` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a.is_nan() || b.is_nan() || a >= b) {
            return Err(Error::InvalidParameter("box must have lo < hi in every axis".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[-r, r]^d`.
    pub fn cube(d: usize, r: f64) -> Self {
        Self { lo: vec![-r; d], hi: vec![r; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn min_half_width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min)
    }

    /// The box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        Self {
            lo: self.lo.iter().zip(&c).map(|(a, m)| m + factor * (a - m)).collect(),
            hi: self.hi.iter().zip(&c).map(|(b, m)| m + factor * (b - m)).collect(),
        }
    }
}
