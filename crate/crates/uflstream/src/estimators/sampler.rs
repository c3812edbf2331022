//! Level-wise importance sampling of points by their `r_p` contribution.

use serde::{Deserialize, Serialize};

use super::{check_instance, BucketCache, HashChoice};
use crate::core::{GridPoint, StreamUpdate, UflInstance};
use crate::error::Result;
use crate::prf::{derive, domain, PointKey, Prf};
use crate::sketch::{DistinctCount, Outcome, SubsampleFn, TwoLevelL0};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Nil,
    Fail,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub status: SampleStatus,
    pub point: Option<GridPoint>,
    /// Estimated probability of drawing `point`; zero unless sampled.
    pub prob_estimate: f64,
    pub level: usize,
    /// Points of the sampled bucket that survive subsampling.
    pub bucket_size: i64,
    /// Estimated number of nonempty buckets after subsampling.
    pub bucket_count: f64,
}

impl SampleResult {
    fn empty(status: SampleStatus, level: usize) -> Self {
        Self { status, point: None, prob_estimate: 0.0, level, bucket_size: 0, bucket_count: 0.0 }
    }
}

/// Sampler for a single level `i`: a uniform nonempty bucket of
/// `φ_i(sub_i(P))`, then a uniform point of that bucket.
pub struct LevelSamplerState {
    pub level: usize,
    sub: SubsampleFn,
    prf: Prf,
    sampler: TwoLevelL0,
    distinct: DistinctCount,
}

impl LevelSamplerState {
    pub fn new(level: usize, d: usize, seed: u64) -> Result<Self> {
        let sub = SubsampleFn::new(seed);
        Ok(Self {
            level,
            prf: sub.prf(),
            sub,
            sampler: TwoLevelL0::new(2, d, derive(seed, domain::SKETCH, &[level as u64]))?,
            distinct: DistinctCount::new(derive(seed, domain::DISTINCT, &[level as u64])),
        })
    }

    pub fn update(&mut self, cache: &mut BucketCache, u: &StreamUpdate) -> Result<()> {
        let key = PointKey::of(&u.point);
        if (self.sub.max_level_with(&self.prf, 0, key) as usize) < self.level {
            return Ok(());
        }
        let (point, buckets) = cache.labels(&u.point, key, self.level)?;
        let bucket = &buckets[self.level];
        let delta = u.sign.delta();
        self.distinct.update(bucket.fp, delta);
        self.sampler.update(bucket, point, delta)
    }

    /// Sample with the conditional estimate `2^{-i} / (D̂ · |A_x|)`.
    pub fn query(&self) -> SampleResult {
        match self.sampler.query() {
            Outcome::Empty => SampleResult::empty(SampleStatus::Nil, self.level),
            Outcome::Fail => SampleResult::empty(SampleStatus::Fail, self.level),
            Outcome::Sample(s) => {
                let count = self.distinct.estimate();
                let size = s.row_sum;
                let prob = 0.5f64.powi(self.level as i32) / (count.max(1.0) * size.max(1) as f64);
                SampleResult {
                    status: SampleStatus::Sampled,
                    point: Some(GridPoint::from_coords(s.col.words)),
                    prob_estimate: prob.min(1.0),
                    level: self.level,
                    bucket_size: size,
                    bucket_count: count,
                }
            }
        }
    }

    pub fn live_cells(&self) -> usize {
        self.sampler.live_cells() + self.distinct.live_cells()
    }
}

/// Draws from level `i` of a stream held in memory.
pub fn level_sample(
    updates: &[StreamUpdate],
    i: usize,
    inst: &UflInstance,
    seed: u64,
    hash: &HashChoice,
) -> Result<SampleResult> {
    check_instance(updates, inst)?;
    let (lh, _) = hash.build(inst, seed)?;
    let mut cache = BucketCache::new(lh);
    let mut st = LevelSamplerState::new(i, inst.d, seed)?;
    for u in updates {
        st.update(&mut cache, u)?;
    }
    Ok(st.query())
}

/// One independent importance sampler: a random level `i* ∈ [1, L]`, the
/// two-level sampler of that level, and distinct counters of every level
/// its subsample reaches (used to evaluate the mixture probability).
pub struct ImportanceSampler {
    pub seed: u64,
    pub level: usize,
    levels: usize,
    prf: Prf,
    sampler: TwoLevelL0,
    /// `distinct[i - 1]` counts the buckets of `φ_i(sub_i(P))`.
    distinct: Vec<DistinctCount>,
}

/// Seed of sampler `j` of a run.
pub(crate) fn sampler_seed(seed: u64, j: usize) -> u64 {
    derive(seed, domain::SAMPLER, &[j as u64])
}

/// Level `i*` drawn by a sampler.
pub(crate) fn sampler_level(sampler_seed: u64, levels: usize) -> usize {
    1 + (derive(sampler_seed, domain::LEVEL, &[]) % levels as u64) as usize
}

impl ImportanceSampler {
    pub fn new(seed: u64, inst: &UflInstance) -> Result<Self> {
        let levels = inst.levels();
        let level = sampler_level(seed, levels);
        Ok(Self {
            seed,
            level,
            levels,
            prf: SubsampleFn::new(seed).prf(),
            sampler: TwoLevelL0::new(2, inst.d, derive(seed, domain::SKETCH, &[]))?,
            distinct: Vec::new(),
        })
    }

    /// Deepest subsampling level of a point, capped at `L`.
    pub fn reach(&self, key: PointKey) -> usize {
        (SubsampleFn::new(self.seed).max_level_with(&self.prf, 0, key) as usize).min(self.levels)
    }

    /// Applies an update whose point reaches level `reach`; `buckets` must
    /// cover levels `0..=max(reach, i*)` where needed.
    pub fn apply(&mut self, reach: usize, point: &crate::sketch::Label, buckets: &[crate::sketch::Label], delta: i64) -> Result<()> {
        for i in 1..=reach {
            if self.distinct.len() < i {
                self.distinct.push(DistinctCount::new(derive(self.seed, domain::DISTINCT, &[i as u64])));
            }
            self.distinct[i - 1].update(buckets[i].fp, delta);
        }
        if reach >= self.level {
            self.sampler.update(&buckets[self.level], point, delta)?;
        }
        Ok(())
    }

    /// Highest level whose subsample is nonempty, with the distinct-count
    /// estimates of levels `1..=imax`.
    pub fn distinct_estimates(&self) -> Vec<f64> {
        let est: Vec<f64> = self.distinct.iter().map(DistinctCount::estimate).collect();
        let imax = est.iter().rposition(|&e| e > 0.0).map_or(0, |k| k + 1);
        est[..imax].to_vec()
    }

    pub fn query(&self) -> Outcome<crate::sketch::TwoLevelSample> {
        self.sampler.query()
    }

    pub fn live_cells(&self) -> usize {
        self.sampler.live_cells() + self.distinct.iter().map(DistinctCount::live_cells).sum::<usize>()
    }
}

/// Probability that the mixture sampler returns `x`, given the subsamples of
/// all other points:
/// `(1/L) Σ_i 2^{-i} / (D_i^{+x} · B_i^{+x})`, where `B_i^{+x}` is the size
/// of `x`'s bucket in `sub_i(P) ∪ {x}` and `D_i^{+x}` the bucket count of
/// that set. Levels above `imax = b_plus.len()` hold `x` alone.
pub(crate) fn mixture_prob(levels: usize, b_plus: &[i64], d_plus: &[f64]) -> f64 {
    let imax = b_plus.len();
    let mut s = 0.0;
    for i in 1..=imax {
        s += 0.5f64.powi(i as i32) / (d_plus[i - 1].max(1.0) * b_plus[i - 1].max(1) as f64);
    }
    s += 0.5f64.powi(imax as i32) - 0.5f64.powi(levels as i32);
    s / levels as f64
}

/// Draws one importance sample from a stream held in memory. The
/// probability estimate is the mixture probability over all levels.
pub fn importance_sample(
    updates: &[StreamUpdate],
    inst: &UflInstance,
    seed: u64,
    hash: &HashChoice,
) -> Result<SampleResult> {
    let cfg = super::TwoPassConfig { m: Some(1), hash: hash.clone(), ..Default::default() };
    let state = super::two_pass_pass1(updates, inst, seed, &cfg)?;
    let traces = super::two_pass::pass2_traces(updates, &state)?;
    let rec = &state.records[0];
    Ok(match (&rec.outcome, traces.first()) {
        (super::two_pass::Pass1Outcome::Sample { row_sum, distinct, .. }, Some(t)) => SampleResult {
            status: SampleStatus::Sampled,
            point: Some(GridPoint::from_coords(t.coords.clone())),
            prob_estimate: t.prob_mixture,
            level: rec.level,
            bucket_size: *row_sum,
            bucket_count: distinct.get(rec.level - 1).copied().unwrap_or(0.0),
        },
        (super::two_pass::Pass1Outcome::Fail, _) => SampleResult::empty(SampleStatus::Fail, rec.level),
        _ => SampleResult::empty(SampleStatus::Nil, rec.level),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst() -> UflInstance {
        UflInstance::new(2, 64, 40.0).unwrap()
    }

    fn pt(c: &[i64]) -> GridPoint {
        GridPoint::from_coords(c.to_vec())
    }

    #[test]
    fn singleton_level_zero() {
        let s = vec![StreamUpdate::insert(pt(&[3, 3]))];
        let r = level_sample(&s, 0, &inst(), 1, &HashChoice::default()).unwrap();
        assert_eq!(r.status, SampleStatus::Sampled);
        assert_eq!(r.point, Some(pt(&[3, 3])));
        assert_eq!(r.prob_estimate, 1.0);
    }

    #[test]
    fn empty_is_nil() {
        let p = pt(&[3, 3]);
        let s = vec![StreamUpdate::insert(p.clone()), StreamUpdate::delete(p)];
        let r = level_sample(&s, 0, &inst(), 1, &HashChoice::default()).unwrap();
        assert_eq!(r.status, SampleStatus::Nil);
        let r = importance_sample(&s, &inst(), 1, &HashChoice::default()).unwrap();
        assert_eq!(r.status, SampleStatus::Nil);
    }

    #[test]
    fn two_points_one_bucket_halves() {
        // ℓ_0 = 4, so a cube of side 4/√2 holds both points.
        let s = vec![StreamUpdate::insert(pt(&[1, 1])), StreamUpdate::insert(pt(&[1, 2]))];
        let mut hits = 0;
        for seed in 0..400 {
            let r = level_sample(&s, 0, &inst(), seed, &HashChoice::default()).unwrap();
            assert_eq!(r.bucket_size, 2);
            assert_eq!(r.prob_estimate, 0.5);
            hits += (r.point == Some(pt(&[1, 1]))) as u32;
        }
        assert!((160..=240).contains(&hits), "{hits}");
    }

    #[test]
    fn mixture_prob_of_lonely_point() {
        // Only x, reaching every level: each level contributes 2^{-i}.
        let l = 6;
        let d = vec![1.0; 6];
        let b = vec![1; 6];
        let p = mixture_prob(l, &b, &d);
        let want: f64 = (1..=6).map(|i| 0.5f64.powi(i)).sum::<f64>() / 6.0;
        assert!((p - want).abs() < 1e-15);
        assert!((mixture_prob(l, &[], &[]) - want).abs() < 1e-15);
    }
}
