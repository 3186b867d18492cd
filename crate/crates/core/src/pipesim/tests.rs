use std::collections::{BTreeMap, HashMap};

use super::*;
use crate::analytic::{self, SpeedupParams};

fn cfg(n: usize, e: usize) -> PipelineConfig {
    PipelineConfig::new(n, e).unwrap()
}

fn bernoulli(alpha: f64) -> AcceptanceOracle {
    AcceptanceOracle::Bernoulli { alpha }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want
}

#[test]
fn autoregressive_examples() {
    let m = simulate_autoregressive(&cfg(32, 8), 100).unwrap();
    assert_eq!((m.ticks, m.committed_tokens), (400, 100));
    assert_eq!(m.throughput, 0.25);
    assert_eq!(m.speedup_vs_ar, 1.0);
    assert_eq!(m.alpha_all_measured, None);
    assert_eq!(simulate_autoregressive(&cfg(32, 32), 50).unwrap().ticks, 50);
    assert_eq!(simulate_autoregressive(&cfg(40, 16), 10).unwrap().ticks, 30);
    assert!(simulate_autoregressive(&cfg(32, 8), 0).is_err());
}

#[test]
fn autoregressive_trace_is_strictly_sequential() {
    let (_, trace) = trace_autoregressive(&cfg(32, 8), 5).unwrap();
    let finals: Vec<u64> = trace
        .records()
        .iter()
        .filter(|r| r.kind == MessageKind::FinalToken)
        .map(|r| r.tick)
        .collect();
    assert_eq!(finals, vec![3, 7, 11, 15, 19]);
    // Exactly one stage is busy per tick.
    let mut per_tick: BTreeMap<u64, usize> = BTreeMap::new();
    for (tick, _) in trace.busy_cells().keys() {
        *per_tick.entry(*tick).or_default() += 1;
    }
    assert!(per_tick.values().all(|&n| n == 1));
}

#[test]
fn eesd_all_accepted_matches_closed_form() {
    let c = cfg(32, 8);
    let m = simulate_eesd(&c, 3, &bernoulli(1.0), 10_000, &RngStream::new(1)).unwrap();
    // Each round: 3 draft ticks + 4 verify ticks, 4 tokens.
    assert_eq!(m.ticks * 4, m.committed_tokens * 7);
    assert!(rel_err(m.speedup_vs_ar, 4.0 * 32.0 / 56.0) < 0.02);
    assert_eq!(m.alpha_all_measured, Some(1.0));
}

#[test]
fn eesd_all_rejected_is_pure_overhead() {
    for gamma in [1, 4, 9] {
        let m = simulate_eesd(&cfg(32, 8), gamma, &bernoulli(0.0), 1_000, &RngStream::new(2)).unwrap();
        assert_eq!(m.ticks, 1_000 * (gamma as u64 + 4));
        assert!((m.speedup_vs_ar - 4.0 / (gamma as f64 + 4.0)).abs() < 1e-12);
        assert_eq!(m.accepts, 0);
    }
}

#[test]
fn eesd_partial_acceptance_matches_closed_form() {
    let m = simulate_eesd(&cfg(32, 8), 5, &bernoulli(0.6), 100_000, &RngStream::new(3)).unwrap();
    let want = analytic::eesd_speedup(&SpeedupParams::new(0.6, 5, 32, 8).unwrap()).unwrap();
    assert!(rel_err(m.speedup_vs_ar, want) < 0.02, "{} vs {want}", m.speedup_vs_ar);
    let alpha_all = analytic::overall_acceptance(0.6, 5).unwrap();
    assert!((m.alpha_all_measured.unwrap() - alpha_all).abs() < 0.01);
    assert_eq!(m.committed_tokens, m.accepts + m.rejects + m.bonus);
}

#[test]
fn eesd_cache_reuse_variant_converges() {
    let c = cfg(32, 8).with_cache_reuse(true);
    let m = simulate_eesd(&c, 5, &bernoulli(0.6), 100_000, &RngStream::new(4)).unwrap();
    let want = analytic::eesd_speedup_cache_reuse(&SpeedupParams::new(0.6, 5, 32, 8).unwrap()).unwrap();
    assert!(rel_err(m.speedup_vs_ar, want) < 0.02);
}

#[test]
fn ppsd_examples() {
    let c = cfg(32, 8);
    let full = simulate_ppsd(&c, &bernoulli(1.0), 10_000, &RngStream::new(5)).unwrap();
    // Fill takes S ticks, then one commit per tick.
    assert_eq!(full.ticks, 4 + 10_000 - 1);
    assert!(rel_err(full.speedup_vs_ar, 4.0) < 0.02);
    let none = simulate_ppsd(&c, &bernoulli(0.0), 10_000, &RngStream::new(5)).unwrap();
    assert_eq!(none.ticks, 40_000);
    assert_eq!(none.speedup_vs_ar, 1.0);
    let half = simulate_ppsd(&c, &bernoulli(0.5), 100_000, &RngStream::new(5)).unwrap();
    assert!(rel_err(half.speedup_vs_ar, 1.6) < 0.02);
    assert!((half.alpha_all_measured.unwrap() - 0.5).abs() < 0.01);
}

#[test]
fn ppsd_metrics_invariants() {
    let m = simulate_ppsd(&cfg(40, 10), &bernoulli(0.7), 5_000, &RngStream::new(6)).unwrap();
    assert_eq!(m.committed_tokens, 5_000);
    assert_eq!(m.committed_tokens, m.accepts + m.rejects);
    assert_eq!(m.bonus, 0);
    assert!(m.throughput > 0.0 && m.throughput <= 1.0);
    assert!((m.speedup_vs_ar - m.throughput * 4.0).abs() < 1e-12);
    assert!(m.flushed > 0);
}

#[test]
fn ppsd_single_stage_degenerates_to_autoregressive() {
    let m = simulate_ppsd(&cfg(32, 32), &bernoulli(0.9), 100, &RngStream::new(1)).unwrap();
    assert_eq!(m.ticks, 100);
    assert_eq!(m.drafted, 0);
    assert_eq!(analytic::ppsd_speedup(0.9, 32, 32).unwrap(), 1.0);
}

#[test]
fn ppsd_remainder_stage_costs_a_full_tick() {
    let c = cfg(40, 16);
    let m = simulate_ppsd(&c, &bernoulli(0.0), 1_000, &RngStream::new(7)).unwrap();
    // Three ticks per token, same as the autoregressive baseline on this pipeline.
    assert_eq!(m.ticks, 3_000);
}

#[test]
fn deeper_exit_stage_follows_reference_formula() {
    let c = cfg(32, 8).with_exit_stage(2).unwrap();
    for alpha in [0.0, 0.5, 1.0] {
        let m = simulate_ppsd(&c, &bernoulli(alpha), 50_000, &RngStream::new(8)).unwrap();
        let want = reference_ppsd_speedup(&c, alpha).unwrap();
        assert!(
            rel_err(m.speedup_vs_ar, want) < 0.02,
            "alpha={alpha}: {} vs {want}",
            m.speedup_vs_ar
        );
    }
    let base = cfg(32, 8);
    assert_eq!(
        reference_ppsd_speedup(&base, 0.3).unwrap(),
        analytic::ppsd_speedup(0.3, 32, 8).unwrap()
    );
}

#[test]
fn hop_latency_slows_pipeline() {
    let fast = simulate_ppsd(&cfg(32, 8), &bernoulli(1.0), 1_000, &RngStream::new(9)).unwrap();
    let slow = simulate_ppsd(
        &cfg(32, 8).with_hop_latency(2),
        &bernoulli(1.0),
        1_000,
        &RngStream::new(9),
    )
    .unwrap();
    assert!(slow.ticks > fast.ticks);
    let ar = simulate_autoregressive(&cfg(32, 8).with_hop_latency(1), 10).unwrap();
    // Four forwards, three forward hops and the return hop per token; the
    // last token's return hop is not counted.
    assert_eq!(ar.ticks, 10 * 8 - 1);
}

#[test]
fn steady_state_drops_fill() {
    let c = cfg(32, 8).with_steady_state(true);
    let m = simulate_ppsd(&c, &bernoulli(1.0), 1_000, &RngStream::new(1)).unwrap();
    assert_eq!(m.throughput, 1.0);
    let ar = simulate_autoregressive(&c, 100).unwrap();
    assert_eq!(ar.throughput, 0.25);
}

#[test]
fn one_forward_per_stage_per_tick() {
    let (_, trace) = trace_ppsd(&cfg(32, 8), &bernoulli(0.6), 2_000, &RngStream::new(10)).unwrap();
    assert!(trace.activations_per_stage_tick().values().all(|&n| n == 1));
    let mut checks: HashMap<u64, usize> = HashMap::new();
    for r in trace.records().iter().filter(|r| r.kind == MessageKind::CheckToken) {
        *checks.entry(r.tick).or_default() += 1;
    }
    assert!(checks.values().all(|&n| n == 1));
}

#[test]
fn zero_bubbles_when_every_draft_is_accepted() {
    let c = cfg(40, 10);
    let (m, trace) = trace_ppsd(&c, &bernoulli(1.0), 500, &RngStream::new(11)).unwrap();
    let busy = trace.busy_cells();
    let s = c.n_stages() as u64;
    // Every stage works on every tick between fill and drain.
    for tick in s - 1..=m.ticks - s {
        for stage in 1..=c.n_stages() {
            assert!(busy.contains_key(&(tick, stage)), "idle stage {stage} at tick {tick}");
        }
    }
}

#[test]
fn rollback_discards_all_later_work() {
    let c = cfg(32, 8);
    let (_, trace) = trace_ppsd(&c, &bernoulli(0.5), 3_000, &RngStream::new(12)).unwrap();
    let records = trace.records();
    let rejections: Vec<(u64, u64)> = records
        .iter()
        .filter(|r| r.verdict == Verdict::Reject)
        .map(|r| (r.tick, r.position))
        .collect();
    assert!(!rejections.is_empty());
    let mut launches: HashMap<u64, Vec<u64>> = HashMap::new();
    for r in records.iter().filter(|r| r.is_work() && r.stage == 1) {
        launches.entry(r.position).or_default().push(r.tick);
    }
    for &(t_rej, y) in &rejections {
        for r in records
            .iter()
            .filter(|r| r.is_work() && r.tick > t_rej && r.position > y)
        {
            let relaunched = launches[&r.position].iter().any(|&t| t > t_rej && t <= r.tick);
            assert!(
                relaunched,
                "stale work for position {} at tick {} after rejection at {y}",
                r.position, r.tick
            );
        }
    }
}

#[test]
fn identical_inputs_replay_bit_for_bit() {
    let c = cfg(32, 8);
    let a = trace_ppsd(&c, &bernoulli(0.4), 2_000, &RngStream::new(13)).unwrap();
    let b = trace_ppsd(&c, &bernoulli(0.4), 2_000, &RngStream::new(13)).unwrap();
    assert_eq!(a, b);
    let e1 = trace_eesd(&c, 4, &bernoulli(0.4), 2_000, &RngStream::new(13)).unwrap();
    let e2 = trace_eesd(&c, 4, &bernoulli(0.4), 2_000, &RngStream::new(13)).unwrap();
    assert_eq!(e1, e2);
    let other = trace_ppsd(&c, &bernoulli(0.4), 2_000, &RngStream::new(14)).unwrap();
    assert_ne!(a.0, other.0);
}

#[test]
fn invalid_inputs_rejected() {
    let c = cfg(32, 8);
    assert!(simulate_ppsd(&c, &bernoulli(1.5), 10, &RngStream::new(0)).is_err());
    assert!(simulate_ppsd(&c, &bernoulli(0.5), 0, &RngStream::new(0)).is_err());
    assert!(simulate_eesd(&c, 0, &bernoulli(0.5), 10, &RngStream::new(0)).is_err());
    let lm = ToyLm::new(16, 8, 0, 1.0).unwrap();
    assert!(simulate_ppsd(&c, &AcceptanceOracle::ToyLmGreedy(lm.clone()), 10, &RngStream::new(0)).is_err());
    assert!(decode_ppsd(&lm, &c, &[1], 4, DecodeMode::Greedy, &RngStream::new(0)).is_err());
    let lm32 = ToyLm::new(32, 8, 0, 1.0).unwrap();
    assert!(decode_ppsd(&lm32, &c, &[], 4, DecodeMode::Greedy, &RngStream::new(0)).is_err());
    assert!(decode_ppsd(&lm32, &c, &[9], 4, DecodeMode::Greedy, &RngStream::new(0)).is_err());
}

fn toy(seed: u64, beta: f64) -> ToyLm {
    ToyLm::new(32, 32, seed, beta).unwrap()
}

fn greedy_ar(lm: &ToyLm, prompt: &[TokenId], n: u64) -> Vec<TokenId> {
    decode_autoregressive(lm, prompt, n, DecodeMode::Greedy, &mut RngStream::new(0)).unwrap()
}

#[test]
fn aligned_head_never_rejects() {
    let lm = toy(1, 0.0);
    let out = decode_ppsd(
        &lm,
        &cfg(32, 8),
        &[3, 1, 4],
        128,
        DecodeMode::Greedy,
        &RngStream::new(0),
    )
    .unwrap();
    assert_eq!(out.metrics.rejects, 0);
    assert_eq!(out.tokens, greedy_ar(&lm, &[3, 1, 4], 128));
    let sampled = decode_ppsd(
        &lm,
        &cfg(32, 8),
        &[3, 1, 4],
        128,
        DecodeMode::Sampling,
        &RngStream::new(0),
    )
    .unwrap();
    assert_eq!(sampled.metrics.rejects, 0);
}

#[test]
fn forced_rejection_matches_autoregressive() {
    let lm = toy(2, 1.0);
    let c = cfg(32, 8);
    let options = DecodeOptions { force_reject: true };
    let out = decode_ppsd_with(&lm, &c, &[7], 100, DecodeMode::Greedy, &RngStream::new(3), &options).unwrap();
    assert_eq!(out.tokens, greedy_ar(&lm, &[7], 100));
    assert_eq!(out.metrics.accepts, 0);
    assert!((out.metrics.speedup_vs_ar - 1.0).abs() < 0.02);
}

#[test]
fn misaligned_greedy_decoding_is_exact() {
    let c = cfg(32, 8);
    for seed in 0..10 {
        let lm = toy(seed, 1.0);
        let prompt = lm.random_prefix(5, &mut RngStream::new(seed + 100));
        let out = decode_ppsd(&lm, &c, &prompt, 64, DecodeMode::Greedy, &RngStream::new(seed)).unwrap();
        assert_eq!(out.tokens, greedy_ar(&lm, &prompt, 64));
        assert!(out.metrics.rejects > 0 && out.metrics.accepts > 0);
    }
}

#[test]
fn every_commit_extends_the_oracle_prefix() {
    let lm = toy(31, 1.5);
    let c = cfg(24, 8);
    let lm = ToyLm::new(24, lm.vocab(), lm.seed(), lm.misalignment()).unwrap();
    let prompt = [5, 6];
    let out = decode_ppsd(&lm, &c, &prompt, 40, DecodeMode::Greedy, &RngStream::new(1)).unwrap();
    let mut committed = prompt.to_vec();
    for r in out.trace.records().iter().filter(|r| r.kind == MessageKind::CheckToken) {
        assert_eq!(r.position as usize, committed.len() - prompt.len());
        assert_eq!(r.token.unwrap(), lm.target_dist(&committed).unwrap().argmax());
        committed.push(r.token.unwrap());
    }
    assert_eq!(committed.len(), prompt.len() + 40);
}

#[test]
fn eesd_greedy_decoding_is_exact() {
    let lm = toy(4, 1.0);
    for gamma in [1, 3, 8] {
        let out = decode_eesd(
            &lm,
            &cfg(32, 8),
            gamma,
            &[2, 2],
            77,
            DecodeMode::Greedy,
            &RngStream::new(0),
        )
        .unwrap();
        assert_eq!(out.tokens, greedy_ar(&lm, &[2, 2], 77));
    }
}

#[test]
fn autoregressive_decoder_basics() {
    let lm = toy(5, 1.0);
    assert!(greedy_ar(&lm, &[1], 0).is_empty());
    let reference = greedy_ar(&lm, &[1, 2], 50);
    for seed in 1..=5 {
        let out = decode_autoregressive(&lm, &[1, 2], 50, DecodeMode::Greedy, &mut RngStream::new(seed)).unwrap();
        assert_eq!(out, reference);
    }
    let s1 = decode_autoregressive(&lm, &[1, 2], 50, DecodeMode::Sampling, &mut RngStream::new(9)).unwrap();
    let s2 = decode_autoregressive(&lm, &[1, 2], 50, DecodeMode::Sampling, &mut RngStream::new(9)).unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn zero_max_tokens_is_empty() {
    let lm = toy(6, 1.0);
    let out = decode_ppsd(&lm, &cfg(32, 8), &[1], 0, DecodeMode::Greedy, &RngStream::new(0)).unwrap();
    assert!(out.tokens.is_empty());
}

#[test]
fn sampled_decoding_preserves_first_token_law() {
    // Marginal of the first generated token must equal the target distribution.
    let lm = ToyLm::new(16, 6, 77, 2.0).unwrap();
    let c = cfg(16, 4);
    let prompt = [1, 4, 2];
    let q = lm.target_dist(&prompt).unwrap();
    let trials = 20_000;
    let mut counts = [0usize; 6];
    for i in 0..trials {
        let out = decode_ppsd(&lm, &c, &prompt, 1, DecodeMode::Sampling, &RngStream::new(i)).unwrap();
        counts[out.tokens[0] as usize] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(q.probs())
        .map(|(c, p)| (*c as f64 / trials as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "tv={tv}");
}

#[test]
fn toy_oracle_simulation_runs() {
    let lm = toy(8, 1.0);
    let c = cfg(32, 8);
    let m = simulate_ppsd(&c, &AcceptanceOracle::ToyLmGreedy(lm.clone()), 200, &RngStream::new(2)).unwrap();
    assert_eq!(m.committed_tokens, 200);
    let e = simulate_eesd(&c, 4, &AcceptanceOracle::ToyLmSampling(lm), 200, &RngStream::new(2)).unwrap();
    assert!(e.committed_tokens >= 200);
}
