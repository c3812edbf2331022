//! Two-pass and random-order estimators: average `r̂_x / P̂r[x]` over
//! independent importance samples `x`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sampler::{mixture_prob, sampler_seed, ImportanceSampler};
use super::{check_instance, BucketCache, EstimateReport, GammaInfo, HashChoice, LevelDiag};
use crate::core::{GridPoint, Sign, StreamUpdate, UflInstance};
use crate::error::{Error, Result};
use crate::oracle::BallCounter;
use crate::prf::{keyed_mix, PointKey};
use crate::sketch::{decode_tagged, encode_tagged, Label, Outcome, StateKind};

/// Sample cap of the two-pass and random-order estimators.
pub const TWO_PASS_M_CAP: usize = 4096;

/// `m = 64·L²`, capped.
pub fn default_two_pass_m(levels: usize) -> usize {
    64usize.saturating_mul(levels.saturating_mul(levels)).min(TWO_PASS_M_CAP)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPassConfig {
    /// Number of samples; `None` uses [`default_two_pass_m`].
    pub m: Option<usize>,
    pub hash: HashChoice,
    /// Samplers held in memory at once during pass 1; the stream is replayed
    /// once per batch. Results do not depend on it.
    pub batch: usize,
}

impl Default for TwoPassConfig {
    fn default() -> Self {
        Self { m: None, hash: HashChoice::default(), batch: 1024 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Pass1Outcome {
    Nil,
    Fail,
    Sample {
        coords: Vec<i64>,
        row_sum: i64,
        /// Distinct-bucket estimates of levels `1..=imax`.
        distinct: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pass1Record {
    pub seed: u64,
    pub level: usize,
    pub outcome: Pass1Outcome,
}

/// Everything pass 2 needs; persisted between passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pass1State {
    pub instance: UflInstance,
    pub seed: u64,
    pub m: usize,
    pub config: TwoPassConfig,
    pub gamma: GammaInfo,
    pub records: Vec<Pass1Record>,
    /// Largest number of live sketch cells held by one batch.
    pub space_cells: u64,
    pub stream_len: u64,
    pub stream_digest: u64,
}

impl Pass1State {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_tagged(StateKind::Sidecar, self)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        decode_tagged(StateKind::Sidecar, b)
    }
}

/// Order-sensitive digest of a stream, to catch a pass 2 over other data.
pub(crate) fn stream_digest(updates: &[StreamUpdate]) -> u64 {
    updates.iter().fold(0x7531_u64, |acc, u| {
        let k = PointKey::of(&u.point);
        let s = matches!(u.sign, Sign::Insert) as u64;
        keyed_mix(acc, k.0 ^ k.1.rotate_left(17) ^ s)
    })
}

/// One sample as seen after the second phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub sampler: usize,
    pub level: usize,
    pub coords: Vec<i64>,
    pub row_sum: i64,
    /// `2^{-i*} / (D̂_{i*} · |A_x|)`.
    pub prob_conditional: f64,
    pub prob_mixture: f64,
    pub r_hat: f64,
    pub term: f64,
}

fn run_samplers(
    updates: &[StreamUpdate],
    inst: &UflInstance,
    seed: u64,
    cfg: &TwoPassConfig,
) -> Result<Pass1State> {
    let levels = inst.levels();
    let m = cfg.m.unwrap_or_else(|| default_two_pass_m(levels));
    if m == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let (lh, gamma) = cfg.hash.build(inst, seed)?;
    let mut cache = BucketCache::new(lh);
    let batch = cfg.batch.max(1);
    let mut records = Vec::with_capacity(m);
    let mut space = 0u64;
    let mut reach = vec![0usize; batch];
    for start in (0..m).step_by(batch) {
        let end = (start + batch).min(m);
        let mut samplers: Vec<ImportanceSampler> =
            (start..end).map(|j| ImportanceSampler::new(sampler_seed(seed, j), inst)).collect::<Result<_>>()?;
        for u in updates {
            let key = PointKey::of(&u.point);
            let mut need = 0;
            for (r, s) in reach.iter_mut().zip(&samplers) {
                *r = s.reach(key);
                need = need.max(*r);
            }
            if need == 0 {
                continue;
            }
            let (point, buckets) = cache.labels(&u.point, key, need)?;
            for (s, &r) in samplers.iter_mut().zip(&reach) {
                if r > 0 {
                    s.apply(r, point, buckets, u.sign.delta())?;
                }
            }
        }
        space = space.max(samplers.iter().map(|s| s.live_cells() as u64).sum());
        for s in &samplers {
            let outcome = match s.query() {
                Outcome::Empty => Pass1Outcome::Nil,
                Outcome::Fail => Pass1Outcome::Fail,
                Outcome::Sample(t) => {
                    Pass1Outcome::Sample { coords: t.col.words, row_sum: t.row_sum, distinct: s.distinct_estimates() }
                }
            };
            records.push(Pass1Record { seed: s.seed, level: s.level, outcome });
        }
    }
    Ok(Pass1State {
        instance: *inst,
        seed,
        m,
        config: cfg.clone(),
        gamma,
        records,
        space_cells: space,
        stream_len: updates.len() as u64,
        stream_digest: stream_digest(updates),
    })
}

/// Pass 1: `m` independent importance samplers over the stream.
pub fn two_pass_pass1(
    updates: &[StreamUpdate],
    inst: &UflInstance,
    seed: u64,
    cfg: &TwoPassConfig,
) -> Result<Pass1State> {
    check_instance(updates, inst)?;
    run_samplers(updates, inst, seed, cfg)
}

/// How the second phase sizes the sampled point's buckets.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase2 {
    /// Exact counts over the whole replayed stream.
    Replay,
    /// Counts over the second half only, standing in for the first half.
    SecondHalf,
}

/// State tracked for one sampled point.
struct Tracked {
    sampler: usize,
    level: usize,
    coords: Vec<i64>,
    row_sum: i64,
    distinct: Vec<f64>,
    reach_x: usize,
    buckets_x: Vec<Label>,
    counts: Vec<i64>,
    sampler_fn: ImportanceSampler,
}

fn second_phase(updates: &[StreamUpdate], state: &Pass1State, mode: Phase2) -> Result<Vec<SampleTrace>> {
    let inst = &state.instance;
    let levels = inst.levels();
    let (lh, _) = state.config.hash.build(inst, state.seed)?;
    let mut cache = BucketCache::new(lh);
    let mut tracked = Vec::new();
    let mut balls: BTreeMap<Vec<i64>, BallCounter> = BTreeMap::new();
    for (j, rec) in state.records.iter().enumerate() {
        let Pass1Outcome::Sample { coords, row_sum, distinct } = &rec.outcome else { continue };
        if coords.len() != inst.d {
            return Err(Error::Decode(format!("sample of sampler {j} has the wrong dimension")));
        }
        let x = GridPoint::from_coords(coords.clone());
        let key = PointKey::of(&x);
        let sampler_fn = ImportanceSampler::new(rec.seed, inst)?;
        let imax = distinct.len();
        let buckets_x = cache.labels(&x, key, imax)?.1.to_vec();
        let counter = BallCounter::new(x.clone(), inst);
        balls.entry(coords.clone()).or_insert_with(|| match mode {
            Phase2::Replay => counter,
            Phase2::SecondHalf => counter.with_center(),
        });
        tracked.push(Tracked {
            sampler: j,
            level: rec.level,
            coords: coords.clone(),
            row_sum: *row_sum,
            distinct: distinct.clone(),
            reach_x: sampler_fn.reach(key),
            buckets_x,
            counts: vec![0; imax],
            sampler_fn,
        });
    }
    for u in updates {
        for bc in balls.values_mut() {
            bc.update(u);
        }
        let key = PointKey::of(&u.point);
        for t in tracked.iter_mut() {
            let r = t.sampler_fn.reach(key).min(t.counts.len());
            if r == 0 {
                continue;
            }
            let buckets = cache.labels(&u.point, key, r)?.1;
            for i in 1..=r {
                if buckets[i] == t.buckets_x[i] {
                    t.counts[i - 1] += u.sign.delta();
                }
            }
        }
    }
    let mut out = Vec::with_capacity(tracked.len());
    for t in tracked {
        let (b_plus, d_plus): (Vec<i64>, Vec<f64>) = (1..=t.counts.len())
            .map(|i| {
                let b = t.counts[i - 1];
                let dh = t.distinct[i - 1];
                match mode {
                    Phase2::Replay => (b + (i > t.reach_x) as i64, dh + (b == 0) as i64 as f64),
                    Phase2::SecondHalf => (1 + b, dh + (i > t.reach_x && b == 0) as i64 as f64),
                }
            })
            .unzip();
        let prob_mixture = mixture_prob(levels, &b_plus, &d_plus);
        let dl = t.distinct.get(t.level - 1).copied().unwrap_or(1.0).max(1.0);
        let prob_conditional = 0.5f64.powi(t.level as i32) / (dl * t.row_sum.max(1) as f64);
        let r_hat = balls[&t.coords].estimate()?.1;
        out.push(SampleTrace {
            sampler: t.sampler,
            level: t.level,
            coords: t.coords,
            row_sum: t.row_sum,
            prob_conditional,
            prob_mixture,
            r_hat,
            term: r_hat / prob_mixture,
        });
    }
    Ok(out)
}

pub(crate) fn pass2_traces(updates: &[StreamUpdate], state: &Pass1State) -> Result<Vec<SampleTrace>> {
    if updates.len() as u64 != state.stream_len || stream_digest(updates) != state.stream_digest {
        return Err(Error::InvalidArgument("pass 2 stream differs from the pass 1 stream".into()));
    }
    second_phase(updates, state, Phase2::Replay)
}

fn assemble(algo: &str, state: &Pass1State, traces: Vec<SampleTrace>, extra_space: u64) -> EstimateReport {
    let levels = state.instance.levels();
    let mut diag: Vec<LevelDiag> = (0..=levels)
        .map(|level| LevelDiag { level, z_hat: 0.0, samples: 0, failures: 0, support: 0.0 })
        .collect();
    let mut nil = 0;
    let mut failed = 0;
    for r in &state.records {
        diag[r.level].samples += 1;
        match r.outcome {
            Pass1Outcome::Nil => nil += 1,
            Pass1Outcome::Fail => {
                failed += 1;
                diag[r.level].failures += 1;
            }
            Pass1Outcome::Sample { .. } => diag[r.level].support += 1.0,
        }
    }
    let used = (state.m as u64 - failed).max(1) as f64;
    for t in &traces {
        diag[t.level].z_hat += t.term / used;
    }
    let estimate = diag.iter().map(|l| l.z_hat).sum::<f64>();
    let unreliable = failed as f64 > 0.2 * state.m as f64;
    EstimateReport {
        algo: algo.into(),
        estimate,
        main_estimate: estimate,
        fallback: false,
        unreliable,
        seed: state.seed,
        instance: state.instance,
        params: serde_json::json!({
            "m": state.m,
            "levels": levels,
            "construction": state.config.hash.construction,
            "gamma_requested": state.gamma.requested,
            "gamma": state.gamma.effective,
            "batch": state.config.batch,
        }),
        levels: super::not_empty_levels(diag),
        samples_drawn: state.m as u64,
        nil_samples: nil,
        failed_samples: failed,
        space_cells: state.space_cells + extra_space,
        notes: Vec::new(),
        trace: traces.into_iter().map(super::TraceEntry::Sample).collect(),
    }
}

/// Pass 2: ball counters and exact bucket sizes for the sampled points, then
/// the average of `r̂_x / P̂r[x]` (NIL samples count as zero, failed samplers
/// are left out).
pub fn two_pass_pass2(updates: &[StreamUpdate], state: &Pass1State) -> Result<EstimateReport> {
    let traces = pass2_traces(updates, state)?;
    // Per distinct sample: one ball counter plus one count per level.
    let extra = traces.iter().map(|t| 64 + t.coords.len() as u64).sum();
    Ok(assemble("two-pass", state, traces, extra))
}

pub fn two_pass_estimate(
    updates: &[StreamUpdate],
    inst: &UflInstance,
    seed: u64,
    cfg: &TwoPassConfig,
) -> Result<EstimateReport> {
    let state = two_pass_pass1(updates, inst, seed, cfg)?;
    two_pass_pass2(updates, &state)
}

/// Single pass over an insertion-only stream in random order: samplers over
/// the first `⌈n/2⌉` insertions, ball counters (which also count the sampled
/// point) over the rest.
pub fn random_order_estimate(
    updates: &[StreamUpdate],
    inst: &UflInstance,
    seed: u64,
    cfg: &TwoPassConfig,
) -> Result<EstimateReport> {
    check_instance(updates, inst)?;
    if let Some(i) = updates.iter().position(|u| u.sign == Sign::Delete) {
        return Err(Error::Unsupported(format!(
            "random-order estimation needs an insertion-only stream; update {} is a deletion",
            i + 1
        )));
    }
    let split = updates.len().div_ceil(2);
    let (first, second) = updates.split_at(split);
    let state = run_samplers(first, inst, seed, cfg)?;
    let traces = second_phase(second, &state, Phase2::SecondHalf)?;
    let extra = traces.iter().map(|t| 64 + t.coords.len() as u64).sum();
    let mut rep = assemble("random-order", &state, traces, extra);
    rep.notes.push(format!("first part {} insertions, second part {}", first.len(), second.len()));
    Ok(rep)
}
