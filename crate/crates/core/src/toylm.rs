//! Deterministic layered toy language model.
//!
//! Hidden states are 64-bit digests: layer 0 hashes the seed and the prefix,
//! and each layer `k` mixes the previous digest with `k`. Propagating a state
//! stage by stage therefore lands on exactly the digest a monolithic pass
//! would produce. Target logits are hashed from the final-layer digest; the
//! early-exit head adds `β`-scaled zero-mean noise hashed from the exit-layer
//! digest, so `β = 0` reproduces the target head bit for bit.

use crate::error::{Error, Result};
use crate::speccore::{mix2, unit_open_closed, ProbVec, RngStream, TokenId};

/// Target logits are uniform on `[-LOGIT_SCALE, LOGIT_SCALE]`.
pub const LOGIT_SCALE: f64 = 3.0;
/// Length of the random gold prefixes used to measure acceptance.
pub const GOLD_PREFIX_LEN: usize = 8;

const EMBED_TAG: u64 = 0x7f4a_7c15_0000_e3b1;
const NOISE_TAG: u64 = 0x0bad_5eed_0000_0001;
const PREFIX_STREAM: u64 = 0xa1fa;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    n_layers: usize,
    vocab: usize,
    seed: u64,
    misalignment: f64,
}

/// Stand-in for the activations handed from one pipeline stage to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrefixState {
    pub digest: u64,
    /// Number of layers applied so far; 0 is the embedding.
    pub layer: usize,
}

impl ToyLm {
    pub fn new(n_layers: usize, vocab: usize, seed: u64, misalignment: f64) -> Result<Self> {
        if n_layers < 1 {
            return Err(Error::param("n_layers", "must be >= 1"));
        }
        if vocab < 2 {
            return Err(Error::param("vocab", format!("must be >= 2, got {vocab}")));
        }
        if !(misalignment.is_finite() && misalignment >= 0.0) {
            return Err(Error::param(
                "beta",
                format!("must be finite and >= 0, got {misalignment}"),
            ));
        }
        Ok(ToyLm {
            n_layers,
            vocab,
            seed,
            misalignment,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn misalignment(&self) -> f64 {
        self.misalignment
    }

    /// Layer-0 state of a prefix.
    pub fn embed(&self, prefix: &[TokenId]) -> PrefixState {
        let mut digest = mix2(self.seed, EMBED_TAG ^ prefix.len() as u64);
        for &t in prefix {
            digest = mix2(digest, t as u64);
        }
        PrefixState { digest, layer: 0 }
    }

    /// Apply layers `state.layer + 1 ..= to_layer`.
    pub fn advance(&self, state: PrefixState, to_layer: usize) -> Result<PrefixState> {
        if to_layer > self.n_layers || to_layer < state.layer {
            return Err(Error::LayerOutOfRange {
                layer: to_layer,
                n_layers: self.n_layers,
            });
        }
        let mut digest = state.digest;
        for k in state.layer + 1..=to_layer {
            digest = mix2(digest, k as u64);
        }
        Ok(PrefixState {
            digest,
            layer: to_layer,
        })
    }

    pub fn layer_state(&self, prefix: &[TokenId], layer: usize) -> Result<PrefixState> {
        if layer < 1 || layer > self.n_layers {
            return Err(Error::LayerOutOfRange {
                layer,
                n_layers: self.n_layers,
            });
        }
        self.advance(self.embed(prefix), layer)
    }

    fn target_logits(&self, top: PrefixState) -> Vec<f64> {
        (0..self.vocab as u64)
            .map(|i| LOGIT_SCALE * (2.0 * unit_open_closed(mix2(top.digest, i)) - 1.0))
            .collect()
    }

    /// Full-depth distribution from a final-layer state.
    pub fn target_from_state(&self, top: PrefixState) -> Result<ProbVec> {
        if top.layer != self.n_layers {
            return Err(Error::LayerOutOfRange {
                layer: top.layer,
                n_layers: self.n_layers,
            });
        }
        ProbVec::softmax(&self.target_logits(top))
    }

    /// Early-exit distribution from the state at the exit layer.
    pub fn exit_from_state(&self, at_exit: PrefixState) -> Result<ProbVec> {
        if at_exit.layer < 1 {
            return Err(Error::LayerOutOfRange {
                layer: 0,
                n_layers: self.n_layers,
            });
        }
        let top = self.advance(at_exit, self.n_layers)?;
        let mut logits = self.target_logits(top);
        let noise_key = mix2(at_exit.digest, NOISE_TAG);
        let amplitude = self.misalignment * 3f64.sqrt();
        for (i, logit) in logits.iter_mut().enumerate() {
            // Uniform on [-√3, √3]: zero mean, unit variance.
            *logit += amplitude * (2.0 * unit_open_closed(mix2(noise_key, i as u64)) - 1.0);
        }
        ProbVec::softmax(&logits)
    }

    pub fn target_dist(&self, prefix: &[TokenId]) -> Result<ProbVec> {
        if prefix.is_empty() {
            return Err(Error::param("prefix", "must be non-empty"));
        }
        self.target_from_state(self.layer_state(prefix, self.n_layers)?)
    }

    pub fn exit_dist(&self, prefix: &[TokenId], exit_depth: usize) -> Result<ProbVec> {
        if prefix.is_empty() {
            return Err(Error::param("prefix", "must be non-empty"));
        }
        self.exit_from_state(self.layer_state(prefix, exit_depth)?)
    }

    /// A random gold prefix drawn uniformly from the vocabulary.
    pub fn random_prefix(&self, len: usize, rng: &mut RngStream) -> Vec<TokenId> {
        (0..len).map(|_| rng.next_below(self.vocab as u64) as TokenId).collect()
    }

    /// Mean exact per-prefix acceptance probability `Σ min(p, q)` over
    /// `n_prefixes` random gold prefixes generated from the model seed.
    pub fn empirical_alpha(&self, exit_depth: usize, n_prefixes: usize) -> Result<f64> {
        if n_prefixes < 1 {
            return Err(Error::param("n_prefixes", "must be >= 1"));
        }
        let mut rng = RngStream::new(self.seed).derive(PREFIX_STREAM);
        let mut total = 0.0;
        for _ in 0..n_prefixes {
            let prefix = self.random_prefix(GOLD_PREFIX_LEN, &mut rng);
            let q = self.target_dist(&prefix)?;
            let p = self.exit_dist(&prefix, exit_depth)?;
            total += p.overlap(&q)?;
        }
        Ok((total / n_prefixes as f64).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(seed: u64, beta: f64) -> ToyLm {
        ToyLm::new(32, 16, seed, beta).unwrap()
    }

    #[test]
    fn construction_errors() {
        assert!(ToyLm::new(0, 16, 0, 0.0).is_err());
        assert!(ToyLm::new(4, 1, 0, 0.0).is_err());
        assert!(ToyLm::new(4, 4, 0, -1.0).is_err());
    }

    #[test]
    fn layer_state_deterministic_and_range_checked() {
        let m = lm(1, 0.5);
        assert_eq!(
            m.layer_state(&[1, 2, 3], 7).unwrap(),
            m.layer_state(&[1, 2, 3], 7).unwrap()
        );
        assert!(m.layer_state(&[1], 0).is_err());
        assert!(m.layer_state(&[1], 33).is_err());
    }

    #[test]
    fn stagewise_equals_monolithic() {
        let m = lm(9, 1.0);
        let prefix = [4, 4, 0, 15, 2];
        let mut state = m.embed(&prefix);
        for boundary in [8, 16, 24, 32] {
            state = m.advance(state, boundary).unwrap();
        }
        assert_eq!(state, m.layer_state(&prefix, 32).unwrap());
        assert!(m.advance(state, 16).is_err());
    }

    #[test]
    fn seeds_separate_digests() {
        let (a, b) = (lm(1, 0.0), lm(2, 0.0));
        let mut rng = RngStream::new(77);
        let n = 10_000;
        let distinct = (0..n)
            .filter(|_| {
                let prefix = a.random_prefix(6, &mut rng);
                a.layer_state(&prefix, 32).unwrap() != b.layer_state(&prefix, 32).unwrap()
            })
            .count();
        assert!(distinct as f64 >= 0.99 * n as f64);
    }

    #[test]
    fn target_sensitive_to_last_token() {
        let m = lm(3, 0.0);
        let mut rng = RngStream::new(5);
        let n = 10_000;
        let changed = (0..n)
            .filter(|_| {
                let mut prefix = m.random_prefix(8, &mut rng);
                let before = m.target_dist(&prefix).unwrap();
                let last = prefix.last_mut().unwrap();
                *last = (*last + 1 + rng.next_below(15) as TokenId) % 16;
                before != m.target_dist(&prefix).unwrap()
            })
            .count();
        assert!(changed as f64 >= 0.99 * n as f64);
    }

    #[test]
    fn distributions_valid_and_deterministic() {
        let m = lm(4, 2.0);
        let q = m.target_dist(&[1, 2]).unwrap();
        assert_eq!(q, m.target_dist(&[1, 2]).unwrap());
        assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let p = m.exit_dist(&[1, 2], 8).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.target_dist(&[]).is_err());
        assert!(m.exit_dist(&[1], 40).is_err());
    }

    #[test]
    fn aligned_head_is_exact() {
        let m = lm(8, 0.0);
        for prefix in [[1u32, 2].as_slice(), &[7, 7, 7], &[0]] {
            assert_eq!(m.exit_dist(prefix, 8).unwrap(), m.target_dist(prefix).unwrap());
        }
        assert_eq!(m.empirical_alpha(8, 50).unwrap(), 1.0);
    }

    #[test]
    fn alpha_non_increasing_in_beta() {
        let alphas: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&b| lm(21, b).empirical_alpha(8, 1000).unwrap())
            .collect();
        assert!(alphas.windows(2).all(|w| w[1] <= w[0]), "{alphas:?}");
        assert!(alphas.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn empirical_alpha_reproducible() {
        let m = lm(13, 1.0);
        assert_eq!(m.empirical_alpha(8, 200).unwrap(), m.empirical_alpha(8, 200).unwrap());
        assert!(m.empirical_alpha(8, 0).is_err());
    }
}
