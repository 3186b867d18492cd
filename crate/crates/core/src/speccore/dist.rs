use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Token identifier: an index into the vocabulary.
pub type TokenId = u32;

/// A normalized probability distribution over a finite vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec {
    probs: Vec<f64>,
}

impl ProbVec {
    /// Validates without renormalizing.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "dimension must be >= 2, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(ProbVec { probs })
    }

    /// Explicit renormalization of non-negative weights.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        ProbVec::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// Numerically stable softmax at temperature 1.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidDistribution("non-finite logits".into()));
        }
        ProbVec::normalized(logits.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn point_mass(vocab: usize, token: TokenId) -> Result<Self> {
        let mut probs = vec![0.0; vocab];
        *probs
            .get_mut(token as usize)
            .ok_or_else(|| Error::InvalidDistribution(format!("token {token} outside vocab {vocab}")))? = 1.0;
        ProbVec::new(probs)
    }

    pub fn uniform(vocab: usize) -> Result<Self> {
        ProbVec::new(vec![1.0 / vocab as f64; vocab])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    /// Index of the largest entry; ties go to the lowest token id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// Total-variation distance `½ Σ |a − b|`.
    pub fn total_variation(&self, other: &ProbVec) -> Result<f64> {
        ensure_same_dim(self, other)?;
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// `Σ min(p[i], q[i])`: the exact acceptance probability of a draft from
    /// `self` verified against `other`.
    pub fn overlap(&self, other: &ProbVec) -> Result<f64> {
        ensure_same_dim(self, other)?;
        Ok(self.probs.iter().zip(&other.probs).map(|(a, b)| a.min(*b)).sum())
    }
}

pub(crate) fn ensure_same_dim(a: &ProbVec, b: &ProbVec) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ProbVec::new(vec![1.0]).is_err());
        assert!(ProbVec::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVec::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVec::new(vec![0.5, f64::NAN]).is_err());
        assert!(ProbVec::new(vec![0.5, 0.5 + 1e-10]).is_ok());
        assert!(ProbVec::normalized(vec![0.0, 0.0]).is_err());
        assert_eq!(ProbVec::normalized(vec![1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = ProbVec::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(p.argmax(), 1);
        assert_eq!(ProbVec::uniform(5).unwrap().argmax(), 0);
    }

    #[test]
    fn softmax_is_valid() {
        let p = ProbVec::softmax(&[1000.0, 999.0, -5.0]).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.argmax(), 0);
    }

    #[test]
    fn overlap_and_tv() {
        let p = ProbVec::new(vec![0.5, 0.5]).unwrap();
        let q = ProbVec::new(vec![0.25, 0.75]).unwrap();
        assert!((p.overlap(&q).unwrap() - 0.75).abs() < 1e-12);
        assert!((p.total_variation(&q).unwrap() - 0.25).abs() < 1e-12);
        assert!(p.overlap(&ProbVec::uniform(3).unwrap()).is_err());
    }
}
