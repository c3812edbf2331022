//! One-pass estimator over dynamic streams: per level, sample buckets
//! together with their subsampled populations and enlarged-neighborhood
//! counters, keep the buckets the counters call sparse, and sum
//! `f · |buckets| · n_a` over levels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_instance, EstimateReport, HashChoice, LevelDiag, TraceEntry};
use crate::core::{GridPoint, StreamUpdate, UflInstance};
use crate::error::{Error, Result};
use crate::oracle;
use crate::prf::{derive, domain, PointKey, Prf};
use crate::sketch::{
    presence_weight, simulate_query, DistinctCount, L0Params, L0WithData, Label, Outcome, SparseRecovery, SubsampleFn,
};

/// Sampler cap per level.
pub const ONE_PASS_M_CAP: usize = 8192;
/// Counter cap.
pub const COUNTERS_CAP: usize = 256;
/// Default sparsity threshold on the median counter.
pub const DEFAULT_TESTER_C: f64 = 20.0;
/// Default capacity of the sparse-recovery fallback.
pub const DEFAULT_FALLBACK_K: usize = 4096;

/// `m = 64·Γ²·Λ²`, capped.
pub fn default_one_pass_m(gamma: f64, lambda: u64) -> usize {
    let m = 64.0 * gamma * gamma * (lambda as f64) * (lambda as f64);
    if m >= ONE_PASS_M_CAP as f64 {
        ONE_PASS_M_CAP
    } else {
        (m.ceil() as usize).max(1)
    }
}

/// `T = 8·L`, capped.
pub fn default_counters(levels: usize) -> usize {
    (8 * levels).clamp(1, COUNTERS_CAP)
}

/// How the per-(level, sampler) ℓ0 sketches are realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Keep the exact vector the sketches are linear in and evaluate each
    /// sketch's query on it at the end. Same answers, far less memory.
    Deferred,
    /// Keep every sketch; only practical for small `m` and `L`.
    Materialized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnePassConfig {
    pub hash: HashChoice,
    /// Samplers per level; `None` uses [`default_one_pass_m`].
    pub m: Option<usize>,
    /// Counters per bucket; `None` uses [`default_counters`].
    pub t: Option<usize>,
    pub c: f64,
    /// Fallback capacity; zero disables the fallback.
    pub fallback_k: usize,
    pub backend: Backend,
}

impl Default for OnePassConfig {
    fn default() -> Self {
        Self {
            hash: HashChoice::default(),
            m: None,
            t: None,
            c: DEFAULT_TESTER_C,
            fallback_k: DEFAULT_FALLBACK_K,
            backend: Backend::Deferred,
        }
    }
}

/// A bucket drawn by some sampler of a level, with how often it was drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketTrace {
    pub level: usize,
    pub label: Vec<i64>,
    pub n_a: i64,
    pub c_hat: i64,
    pub accepted: bool,
    pub draws: u64,
}

/// Bucket content: frequency `n_a` and counters `C^{(1..T)}`.
type Entry = (i64, Vec<i64>);

/// State of one level: the vector all samplers of the level are linear in,
/// a distinct counter over its support, and optionally the samplers.
pub struct OnePassLevelState {
    pub level: usize,
    table: BTreeMap<Label, Entry>,
    distinct: DistinctCount,
    distinct_seed: u64,
    samplers: Option<Vec<L0WithData>>,
}

impl OnePassLevelState {
    fn new(level: usize, seed: u64, materialize: Option<(usize, usize)>) -> Self {
        let distinct_seed = derive(seed, domain::DISTINCT, &[level as u64]);
        let samplers = materialize.map(|(m, t)| {
            (0..m).map(|j| L0WithData::with_params(sampler_params(), t, sampler_seed(seed, level, j))).collect()
        });
        Self { level, table: BTreeMap::new(), distinct: DistinctCount::new(distinct_seed), distinct_seed, samplers }
    }

    fn apply(&mut self, label: &Label, freq: i64, data: &[i64]) -> Result<()> {
        let mut v = Vec::with_capacity(data.len() + 1);
        v.push(freq);
        v.extend_from_slice(data);
        self.distinct.update_weight(label.fp, presence_weight(self.distinct_seed, &v));
        if let Some(s) = &mut self.samplers {
            for sk in s.iter_mut() {
                sk.update(label, freq, data)?;
            }
        }
        let e = self.table.entry(label.clone()).or_insert_with(|| (0, vec![0; data.len()]));
        e.0 += freq;
        for (a, b) in e.1.iter_mut().zip(data) {
            *a += b;
        }
        if e.0 == 0 && e.1.iter().all(|&x| x == 0) {
            self.table.remove(label);
        }
        Ok(())
    }

    /// Buckets with nonzero frequency or counters.
    pub fn support(&self) -> usize {
        self.table.len()
    }

    pub fn distinct_estimate(&self) -> f64 {
        self.distinct.estimate()
    }

    pub fn entry(&self, label: &Label) -> Option<&(i64, Vec<i64>)> {
        self.table.get(label)
    }

    fn live_cells(&self) -> usize {
        let t = self.table.values().next().map_or(0, |e| e.1.len());
        self.table.len() * (t + 1) + self.distinct.live_cells()
            + self.samplers.as_ref().map_or(0, |s| s.iter().map(|k| k.core().live_cells()).sum())
    }
}

fn sampler_params() -> L0Params {
    L0Params::new(2)
}

fn sampler_seed(seed: u64, level: usize, j: usize) -> u64 {
    derive(seed, domain::SAMPLER, &[level as u64, j as u64])
}

/// Lower median.
fn median(v: &[i64]) -> i64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    s[(s.len() - 1) / 2]
}

struct Sampled {
    label: Label,
    n_a: i64,
    c_hat: i64,
}

/// `medians[k]` is the median counter of `labels[k]`, computed once per level.
fn query_level(
    st: &OnePassLevelState,
    seed: u64,
    j: usize,
    fps: &[u64],
    labels: &[&Label],
    medians: &[i64],
) -> Outcome<Sampled> {
    match &st.samplers {
        Some(s) => s[j].query().map(|d| Sampled { label: d.label, n_a: d.freq, c_hat: median(&d.data) }),
        None => simulate_query(&sampler_params(), sampler_seed(seed, st.level, j), fps).map(|k| Sampled {
            label: labels[k].clone(),
            n_a: st.table[labels[k]].0,
            c_hat: medians[k],
        }),
    }
}

pub fn one_pass_estimate(
    updates: &[StreamUpdate],
    inst: &UflInstance,
    seed: u64,
    cfg: &OnePassConfig,
) -> Result<EstimateReport> {
    check_instance(updates, inst)?;
    if !(cfg.c >= 0.0) {
        return Err(Error::InvalidArgument(format!("tester threshold must be nonnegative, got {}", cfg.c)));
    }
    let levels = inst.levels();
    let (mut hashes, gamma) = cfg.hash.build(inst, seed)?;
    let lambda = hashes.lambda()?;
    let m = cfg.m.unwrap_or_else(|| default_one_pass_m(gamma.effective, lambda));
    let t = cfg.t.unwrap_or_else(|| default_counters(levels));
    if m == 0 || t == 0 {
        return Err(Error::InvalidArgument("sampler and counter counts must be positive".into()));
    }
    let materialize = (cfg.backend == Backend::Materialized).then_some((m, t));
    let sub = SubsampleFn::new(derive(seed, domain::SUBSAMPLE, &[]));
    let prf: Prf = sub.prf();
    let mut states: Vec<Option<OnePassLevelState>> = (0..=levels).map(|_| None).collect();
    let mut fallback = (cfg.fallback_k > 0)
        .then(|| SparseRecovery::new(inst.d, cfg.fallback_k, derive(seed, domain::FALLBACK, &[])));
    let mut reach = vec![0usize; t + 1];
    for u in updates {
        let delta = u.sign.delta();
        if let Some(fb) = &mut fallback {
            fb.update(&Label::new(u.point.coords().to_vec()), delta);
        }
        let key = PointKey::of(&u.point);
        for (k, r) in reach.iter_mut().enumerate() {
            *r = (sub.max_level_with(&prf, k as u64, key) as usize).min(levels);
        }
        let top = *reach.iter().max().expect("t + 1 >= 1");
        for i in 0..=top {
            let data: Vec<i64> = reach[1..].iter().map(|&r| if r >= i { delta } else { 0 }).collect();
            let counted = data.iter().any(|&x| x != 0);
            let own_freq = if reach[0] >= i { delta } else { 0 };
            if !counted && own_freq == 0 {
                continue;
            }
            let st = states[i].get_or_insert_with(|| OnePassLevelState::new(i, seed, materialize));
            let own = hashes.bucket(&u.point, i)?;
            let mut own_done = false;
            if counted {
                for b in hashes.enlarged(&u.point, i)? {
                    let f = if b == own { own_freq } else { 0 };
                    own_done |= b == own;
                    st.apply(&b, f, &data)?;
                }
            }
            if !own_done && own_freq != 0 {
                st.apply(&own, own_freq, &vec![0; t])?;
            }
        }
    }

    let mut diag = Vec::new();
    let mut trace = Vec::new();
    let mut main = 0.0;
    let mut failed = 0u64;
    let mut drawn = 0u64;
    let mut nil = 0u64;
    let mut space = 0u64;
    for st in states.iter().flatten() {
        space += st.live_cells() as u64;
        if st.table.is_empty() {
            continue;
        }
        let labels: Vec<&Label> = st.table.keys().collect();
        let fps: Vec<u64> = labels.iter().map(|l| l.fp).collect();
        let medians: Vec<i64> = labels.iter().map(|l| median(&st.table[*l].1)).collect();
        let size = st.distinct_estimate();
        let mut sum = 0.0;
        let mut ok = 0u64;
        let mut lvl_fail = 0u64;
        let mut seen: BTreeMap<Label, BucketTrace> = BTreeMap::new();
        for j in 0..m {
            drawn += 1;
            match query_level(st, seed, j, &fps, &labels, &medians) {
                Outcome::Empty => {
                    nil += 1;
                    ok += 1;
                }
                Outcome::Fail => lvl_fail += 1,
                Outcome::Sample(s) => {
                    ok += 1;
                    let c_hat = s.c_hat;
                    let accepted = s.n_a != 0 && c_hat as f64 <= cfg.c;
                    if accepted {
                        sum += size * s.n_a as f64 * inst.f;
                    }
                    seen.entry(s.label.clone())
                        .or_insert_with(|| BucketTrace {
                            level: st.level,
                            label: s.label.words.clone(),
                            n_a: s.n_a,
                            c_hat,
                            accepted,
                            draws: 0,
                        })
                        .draws += 1;
                }
            }
        }
        failed += lvl_fail;
        let z = if ok > 0 { sum / ok as f64 } else { 0.0 };
        main += z;
        diag.push(LevelDiag { level: st.level, z_hat: z, samples: m as u64, failures: lvl_fail, support: size });
        trace.extend(seen.into_values().map(TraceEntry::Bucket));
    }

    let mut notes = Vec::new();
    if gamma.raised_to_floor {
        notes.push(format!("gamma raised to the face-hash floor {}", gamma.effective));
    }
    let mut estimate = main;
    let mut used_fallback = false;
    if let Some(fb) = &fallback {
        space += fb.live_cells() as u64;
        if let Some(items) = fb.recover() {
            if items.len() <= fb.capacity() && items.iter().all(|(_, f)| *f == 1) {
                let pts: Vec<GridPoint> = items.into_iter().map(|(l, _)| GridPoint::from_coords(l.words)).collect();
                estimate = if pts.is_empty() {
                    0.0
                } else {
                    let rp = oracle::compute_rp(&pts, inst.f)?;
                    oracle::mp_facilities(&pts, inst.f, &rp)?.cost
                };
                used_fallback = true;
                notes.push(format!("sparse recovery returned all {} points", pts.len()));
            }
        }
    }
    if cfg.backend == Backend::Deferred {
        notes.push("samplers evaluated on their exact input vector".into());
    }
    Ok(EstimateReport {
        algo: "one-pass".into(),
        estimate,
        main_estimate: main,
        fallback: used_fallback,
        unreliable: failed as f64 > 0.2 * drawn.max(1) as f64,
        seed,
        instance: *inst,
        params: serde_json::json!({
            "m": m,
            "t": t,
            "c": cfg.c,
            "levels": levels,
            "construction": cfg.hash.construction,
            "gamma_requested": gamma.requested,
            "gamma": gamma.effective,
            "lambda": lambda,
            "fallback_k": cfg.fallback_k,
            "backend": cfg.backend,
        }),
        levels: super::not_empty_levels(diag),
        samples_drawn: drawn,
        nil_samples: nil,
        failed_samples: failed,
        space_cells: space,
        notes,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[i64]) -> GridPoint {
        GridPoint::from_coords(c.to_vec())
    }

    #[test]
    fn singleton_level_zero_term() {
        let inst = UflInstance::new(2, 16, 1.0).unwrap();
        let s = vec![StreamUpdate::insert(pt(&[4, 4]))];
        let cfg = OnePassConfig { m: Some(16), fallback_k: 0, ..Default::default() };
        let rep = one_pass_estimate(&s, &inst, 5, &cfg).unwrap();
        let l0 = rep.levels.iter().find(|l| l.level == 0).unwrap();
        assert_eq!(l0.z_hat, 1.0);
        assert!(rep.estimate >= 1.0 && rep.estimate <= 4.0, "{}", rep.estimate);
    }

    #[test]
    fn empty_is_zero() {
        let inst = UflInstance::new(2, 16, 1.0).unwrap();
        let p = pt(&[4, 4]);
        let s = vec![StreamUpdate::insert(p.clone()), StreamUpdate::delete(p)];
        let rep = one_pass_estimate(&s, &inst, 5, &OnePassConfig::default()).unwrap();
        assert_eq!(rep.estimate, 0.0);
        assert_eq!(rep.main_estimate, 0.0);
    }

    #[test]
    fn deferred_matches_materialized() {
        let inst = UflInstance::new(2, 16, 6.0).unwrap();
        let mut s: Vec<StreamUpdate> =
            (0..14).map(|k| StreamUpdate::insert(pt(&[1 + k % 5 * 3, 1 + k / 5 * 4]))).collect();
        s.push(StreamUpdate::delete(pt(&[4, 1])));
        let base = OnePassConfig { m: Some(6), t: Some(5), fallback_k: 0, ..Default::default() };
        let a = one_pass_estimate(&s, &inst, 11, &base).unwrap();
        let b = one_pass_estimate(&s, &inst, 11, &OnePassConfig { backend: Backend::Materialized, ..base }).unwrap();
        assert_eq!(a.main_estimate, b.main_estimate);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.levels, b.levels);
    }

    #[test]
    fn fallback_returns_mp_cost() {
        let inst = UflInstance::new(2, 64, 10.0).unwrap();
        let pts: Vec<GridPoint> = (0..20).map(|k| pt(&[1 + k * 3, 1 + (k * 7) % 60])).collect();
        let s: Vec<StreamUpdate> = pts.iter().cloned().map(StreamUpdate::insert).collect();
        let cfg = OnePassConfig { m: Some(8), ..Default::default() };
        let rep = one_pass_estimate(&s, &inst, 1, &cfg).unwrap();
        let rp = oracle::compute_rp(&pts, 10.0).unwrap();
        let mp = oracle::mp_facilities(&pts, 10.0, &rp).unwrap().cost;
        assert!(rep.fallback);
        assert_eq!(rep.estimate, mp);
    }

    #[test]
    fn median_is_lower() {
        assert_eq!(median(&[3, 1, 2, 4]), 2);
        assert_eq!(median(&[5]), 5);
    }
}
