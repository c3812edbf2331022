//! Streaming estimators of the facility location cost: the level-wise
//! importance sampler, the two-pass and random-order estimators built on it,
//! and the one-pass estimator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::core::{GridPoint, UflInstance};
use crate::error::{Error, Result};
use crate::hashing::{self, BucketId, Construction, ConsistentHash, HashParams};
use crate::prf::PointKey;
use crate::sketch::Label;

mod one_pass;
mod sampler;
mod two_pass;

pub use one_pass::{
    default_counters, default_one_pass_m, one_pass_estimate, Backend, BucketTrace, OnePassConfig,
    OnePassLevelState,
};
pub use sampler::{
    importance_sample, level_sample, ImportanceSampler, LevelSamplerState, SampleResult,
    SampleStatus,
};
pub use two_pass::{
    default_two_pass_m, random_order_estimate, two_pass_estimate, two_pass_pass1, two_pass_pass2,
    Pass1Outcome, Pass1Record, Pass1State, SampleTrace, TwoPassConfig,
};

/// Coordinates per level beyond which `f64` no longer resolves a cube of
/// side `T_i` to a useful fraction.
const RESOLUTION_LIMIT: f64 = (1u64 << 40) as f64;

/// The consistent hash `φ_i` of every level, with diameter bound
/// `ℓ_i = 0.1·2^{-i}·f`.
///
/// Levels whose cube side is too small for `f64` to resolve relative to the
/// grid extent map every grid point to its own bucket. Such levels have
/// `ℓ_i < 1`, so no two grid points could share a bucket anyway.
pub struct LevelHashes {
    inst: UflInstance,
    construction: Construction,
    gamma: f64,
    seed: u64,
    hashes: Vec<Option<Box<dyn ConsistentHash>>>,
}

impl LevelHashes {
    /// `gamma = None` picks the construction's default gap.
    pub fn new(inst: UflInstance, construction: Construction, gamma: Option<f64>, seed: u64) -> Result<Self> {
        let d = inst.d;
        let gamma = match (construction, gamma) {
            (Construction::Face, None) => hashing::default_face_gamma(d),
            (Construction::Face, Some(g)) => g,
            (Construction::Grid, _) => (d as f64).sqrt(),
            (Construction::Carve, None) => 2.0 * d as f64,
            (Construction::Carve, Some(g)) => g,
        };
        let probe = Self::params_for(construction, d, 1.0, gamma, seed)?;
        let gamma = probe.gamma;
        Ok(Self { inst, construction, gamma, seed, hashes: Vec::new() })
    }

    fn params_for(c: Construction, d: usize, ell: f64, gamma: f64, seed: u64) -> Result<HashParams> {
        match c {
            Construction::Grid => HashParams::grid(d, ell),
            Construction::Face => HashParams::face_with_gamma(d, ell, gamma),
            Construction::Carve => HashParams::carve(d, ell, gamma, seed),
        }
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Consistency bound `Λ` of the configured construction.
    pub fn lambda(&self) -> Result<u64> {
        Ok(Self::params_for(self.construction, self.inst.d, 1.0, self.gamma, self.seed)?.lambda)
    }

    pub fn ell(&self, i: usize) -> f64 {
        0.1 * self.inst.f * 0.5f64.powi(i as i32)
    }

    pub fn eps(&self, i: usize) -> f64 {
        self.ell(i) / self.gamma
    }

    pub fn resolvable(&self, i: usize) -> bool {
        let side = self.ell(i) / (self.inst.d as f64).sqrt();
        (self.inst.delta as f64 + 1.0) / side < RESOLUTION_LIMIT
    }

    pub fn hash(&mut self, i: usize) -> Result<&dyn ConsistentHash> {
        if self.hashes.len() <= i {
            self.hashes.resize_with(i + 1, || None);
        }
        if self.hashes[i].is_none() {
            let p = Self::params_for(self.construction, self.inst.d, self.ell(i), self.gamma, self.seed)?;
            self.hashes[i] = Some(hashing::build(p)?);
        }
        Ok(self.hashes[i].as_deref().expect("just built"))
    }

    fn singleton(p: &GridPoint) -> BucketId {
        BucketId { tag: u64::MAX, words: p.coords().to_vec() }
    }

    pub fn bucket_id(&mut self, p: &GridPoint, i: usize) -> Result<BucketId> {
        if !self.resolvable(i) {
            return Ok(Self::singleton(p));
        }
        let x: Vec<f64> = p.coords().iter().map(|&v| v as f64).collect();
        self.hash(i)?.bucket(&x)
    }

    pub fn bucket(&mut self, p: &GridPoint, i: usize) -> Result<Label> {
        Ok(Label::from_digest(self.bucket_id(p, i)?.key()))
    }

    /// Labels of `φ_i(B(p, ε_i/2))`.
    pub fn enlarged(&mut self, p: &GridPoint, i: usize) -> Result<Vec<Label>> {
        if !self.resolvable(i) {
            return Ok(vec![Label::from_digest(Self::singleton(p).key())]);
        }
        let x: Vec<f64> = p.coords().iter().map(|&v| v as f64).collect();
        let ids = hashing::enumerate_enlarged_buckets(&x, self.hash(i)?)?;
        Ok(ids.into_iter().map(|b| Label::from_digest(b.key())).collect())
    }
}

/// Per-point memo of bucket labels by level.
pub struct BucketCache {
    pub hashes: LevelHashes,
    map: HashMap<PointKey, PointEntry>,
}

struct PointEntry {
    point: Label,
    buckets: Vec<Label>,
}

impl BucketCache {
    pub fn new(hashes: LevelHashes) -> Self {
        Self { hashes, map: HashMap::new() }
    }

    fn entry(&mut self, p: &GridPoint, key: PointKey, upto: usize) -> Result<&PointEntry> {
        if !self.map.contains_key(&key) {
            let e = PointEntry { point: Label::new(p.coords().to_vec()), buckets: Vec::new() };
            self.map.insert(key, e);
        }
        let have = self.map[&key].buckets.len();
        if have <= upto {
            let mut extra = Vec::with_capacity(upto + 1 - have);
            for i in have..=upto {
                extra.push(self.hashes.bucket(p, i)?);
            }
            self.map.get_mut(&key).expect("inserted above").buckets.extend(extra);
        }
        Ok(&self.map[&key])
    }

    pub fn bucket(&mut self, p: &GridPoint, key: PointKey, i: usize) -> Result<&Label> {
        Ok(&self.entry(p, key, i)?.buckets[i])
    }

    /// The point label and the bucket labels of levels `0..=upto`.
    pub fn labels(&mut self, p: &GridPoint, key: PointKey, upto: usize) -> Result<(&Label, &[Label])> {
        let e = self.entry(p, key, upto)?;
        Ok((&e.point, &e.buckets[..=upto]))
    }

    /// The label identifying the point itself.
    pub fn point_label(&mut self, p: &GridPoint, key: PointKey) -> Result<&Label> {
        Ok(&self.entry(p, key, 0)?.point)
    }
}

/// Hash choice shared by all estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashChoice {
    pub construction: Construction,
    /// Requested gap; `None` uses the construction default.
    pub gamma: Option<f64>,
}

impl Default for HashChoice {
    fn default() -> Self {
        Self { construction: Construction::Face, gamma: None }
    }
}

impl HashChoice {
    /// Builds the level hashes. A face-hash gap below the validity floor for
    /// this dimension is raised to the floor; the effective value is
    /// returned.
    pub fn build(&self, inst: &UflInstance, seed: u64) -> Result<(LevelHashes, GammaInfo)> {
        let mut gamma = self.gamma;
        let mut raised = false;
        if let (Construction::Face, Some(g)) = (self.construction, self.gamma) {
            let floor = hashing::min_face_gamma(inst.d);
            if g < floor {
                gamma = Some(floor);
                raised = true;
            }
        }
        let lh = LevelHashes::new(*inst, self.construction, gamma, seed)?;
        let info = GammaInfo { requested: self.gamma, effective: lh.gamma(), raised_to_floor: raised };
        Ok((lh, info))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaInfo {
    pub requested: Option<f64>,
    pub effective: f64,
    pub raised_to_floor: bool,
}

/// Diagnostics of one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDiag {
    pub level: usize,
    pub z_hat: f64,
    pub samples: u64,
    pub failures: u64,
    /// Nonempty buckets (one-pass) or non-NIL samples (sampling estimators).
    pub support: f64,
}

/// Output of every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub algo: String,
    pub estimate: f64,
    /// Sum of the per-level terms; equals `estimate` unless the fallback
    /// branch answered.
    pub main_estimate: f64,
    pub fallback: bool,
    pub unreliable: bool,
    pub seed: u64,
    pub instance: UflInstance,
    pub params: serde_json::Value,
    pub levels: Vec<LevelDiag>,
    pub samples_drawn: u64,
    pub nil_samples: u64,
    pub failed_samples: u64,
    /// Field elements held by live sketch cells at the end of the stream.
    pub space_cells: u64,
    pub notes: Vec<String>,
    pub trace: Vec<TraceEntry>,
}

/// One entry of the sample trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEntry {
    Sample(SampleTrace),
    Bucket(BucketTrace),
}

/// Drops levels where nothing happened.
pub(crate) fn not_empty_levels(levels: Vec<LevelDiag>) -> Vec<LevelDiag> {
    levels.into_iter().filter(|l| l.failures > 0 || l.z_hat != 0.0 || l.support != 0.0).collect()
}

pub(crate) fn check_instance(points: &[crate::core::StreamUpdate], inst: &UflInstance) -> Result<()> {
    crate::core::ensure_valid(points)?;
    for u in points {
        if u.point.coords().len() != inst.d {
            return Err(Error::DimensionMismatch { expected: inst.d, got: u.point.coords().len() });
        }
    }
    Ok(())
}
