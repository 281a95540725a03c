use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Finitely supported map `degree → Z₂-rank`. Zero ranks are never stored.
/// Serializes as a JSON object `{"degree": rank}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradedRanks(BTreeMap<i32, usize>);

impl GradedRanks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rank one in a single degree.
    pub fn single(degree: i32) -> Self {
        Self::from_pairs([(degree, 1)])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (i32, usize)>) -> Self {
        let mut r = Self::new();
        for (d, k) in pairs {
            r.add(d, k);
        }
        r
    }

    pub fn add(&mut self, degree: i32, rank: usize) {
        if rank > 0 {
            *self.0.entry(degree).or_insert(0) += rank;
        }
    }

    pub fn rank(&self, degree: i32) -> usize {
        self.0.get(&degree).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> Vec<i32> {
        self.0.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, usize)> + '_ {
        self.0.iter().map(|(&d, &r)| (d, r))
    }

    pub fn min_degree(&self) -> Option<i32> {
        self.0.keys().next().copied()
    }

    pub fn max_degree(&self) -> Option<i32> {
        self.0.keys().next_back().copied()
    }

    /// `Σ (−1)^d rank_d`.
    pub fn euler_characteristic(&self) -> i64 {
        self.0.iter().map(|(&d, &r)| if d.rem_euclid(2) == 0 { r as i64 } else { -(r as i64) }).sum()
    }

    /// Degrees moved up by `s`: the result has rank `r_d` in degree `d + s`.
    pub fn shifted(&self, s: i32) -> Self {
        Self(self.0.iter().map(|(&d, &r)| (d + s, r)).collect())
    }

    /// Graded tensor product over a field.
    pub fn kunneth(&self, other: &GradedRanks) -> Self {
        let mut out = Self::new();
        for (a, ra) in self.iter() {
            for (b, rb) in other.iter() {
                out.add(a + b, ra * rb);
            }
        }
        out
    }
}

impl fmt::Display for GradedRanks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self.0.iter().map(|(d, r)| format!("{d}:{r}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}
