//! Consistent geometric hashes: every bucket has diameter at most `ℓ`, and
//! every set of diameter at most `ℓ/Γ` meets at most `Λ` buckets.

use std::cmp::Ordering;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prf::{domain, PointKey, Prf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Grid,
    Face,
    Carve,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "face" => Ok(Self::Face),
            "carve" => Ok(Self::Carve),
            other => Err(Error::InvalidArgument(format!("unknown construction {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashParams {
    pub construction: Construction,
    pub d: usize,
    pub ell: f64,
    pub gamma: f64,
    pub lambda: u64,
    pub seed: u64,
}

/// Largest dimension for which ball carving is a default choice.
pub const CARVE_MAX_DIM: usize = 10;
/// Exponent constant in the carving center budget `2^{⌈c·d·log2 d⌉}`.
pub const CARVE_BUDGET_CONST: f64 = 4.0;
/// Hard cap on the carving center budget.
pub const CARVE_BUDGET_CAP: u64 = 1 << 20;
/// Constant in `Λ = ⌈e^{8d/Γ}·c·d·ln d⌉`.
pub const CARVE_LAMBDA_CONST: f64 = 1.0;

impl HashParams {
    /// Axis-aligned cubes of diameter `ℓ`; gap `√d`, consistency `2^d`.
    pub fn grid(d: usize, ell: f64) -> Result<Self> {
        check_common(d, ell)?;
        let lambda = if d >= 64 { u64::MAX } else { 1u64 << d };
        Ok(Self { construction: Construction::Grid, d, ell, gamma: (d as f64).sqrt(), lambda, seed: 0 })
    }

    /// Face decomposition with the default gap `Γ = 10·d^{1.5}`.
    pub fn face(d: usize, ell: f64) -> Result<Self> {
        Self::face_with_gamma(d, ell, default_face_gamma(d))
    }

    pub fn face_with_gamma(d: usize, ell: f64, gamma: f64) -> Result<Self> {
        check_common(d, ell)?;
        let min = min_face_gamma(d);
        if !(gamma >= min) {
            return Err(Error::InvalidArgument(format!(
                "face hash in d={d} needs gamma >= {min:.3}, got {gamma}"
            )));
        }
        Ok(Self { construction: Construction::Face, d, ell, gamma, lambda: d as u64 + 1, seed: 0 })
    }

    /// Ball carving. `Γ` outside `[8, 2d]` is accepted for measurement; see
    /// [`HashParams::carve_gamma_in_range`].
    pub fn carve(d: usize, ell: f64, gamma: f64, seed: u64) -> Result<Self> {
        check_common(d, ell)?;
        if d < 2 {
            return Err(Error::InvalidArgument("ball carving needs d >= 2".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        let df = d as f64;
        let lambda = ((8.0 * df / gamma).exp() * CARVE_LAMBDA_CONST * df * df.ln()).ceil();
        let lambda = if lambda >= u64::MAX as f64 { u64::MAX } else { lambda as u64 };
        Ok(Self { construction: Construction::Carve, d, ell, gamma, lambda, seed })
    }

    pub fn carve_gamma_in_range(&self) -> bool {
        self.gamma >= 8.0 && self.gamma <= 2.0 * self.d as f64
    }

    pub fn eps(&self) -> f64 {
        self.ell / self.gamma
    }
}

fn check_common(d: usize, ell: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidArgument(format!("diameter bound must be positive, got {ell}")));
    }
    Ok(())
}

pub fn default_face_gamma(d: usize) -> f64 {
    10.0 * (d as f64).powf(1.5)
}

/// Smallest gap for which the face decomposition keeps both guarantees.
pub fn min_face_gamma(d: usize) -> f64 {
    2.0 * (d as f64 + 1.0) * (d as f64).sqrt()
}

/// Identifier of one bucket. `tag` separates groups (face hash) or centers
/// (ball carving); `words` locate the bucket.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BucketId {
    pub tag: u64,
    pub words: Vec<i64>,
}

impl BucketId {
    /// 128-bit digest used as the sketch label of this bucket.
    pub fn key(&self) -> PointKey {
        let mut w = Vec::with_capacity(self.words.len() + 1);
        w.push(self.tag as i64);
        w.extend_from_slice(&self.words);
        PointKey::of_words(&w)
    }
}

pub trait ConsistentHash: Send + Sync {
    fn params(&self) -> &HashParams;

    fn bucket(&self, x: &[f64]) -> Result<BucketId>;

    /// Buckets of several points, same answers as [`ConsistentHash::bucket`]
    /// on each.
    fn bucket_batch(&self, xs: &[Vec<f64>]) -> Vec<Result<BucketId>> {
        xs.iter().map(|x| self.bucket(x)).collect()
    }

    /// Exact image of the closed ball `B(x, r)`.
    fn enlarged(&self, _x: &[f64], _r: f64) -> Result<Vec<BucketId>> {
        Err(Error::Unsupported(format!(
            "{:?} hash has no structured ball enumeration",
            self.params().construction
        )))
    }
}

fn check_dim(p: &HashParams, x: &[f64]) -> Result<()> {
    if x.len() != p.d {
        return Err(Error::DimensionMismatch { expected: p.d, got: x.len() });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GridHash {
    params: HashParams,
    side: f64,
}

impl GridHash {
    pub fn new(params: HashParams) -> Self {
        let side = params.ell / (params.d as f64).sqrt();
        Self { params, side }
    }
}

impl ConsistentHash for GridHash {
    fn params(&self) -> &HashParams {
        &self.params
    }

    fn bucket(&self, x: &[f64]) -> Result<BucketId> {
        check_dim(&self.params, x)?;
        Ok(BucketId { tag: 0, words: x.iter().map(|v| (v / self.side).floor() as i64).collect() })
    }

    /// Cubes meeting the closed ball, found coordinate by coordinate with the
    /// partial squared distance as a bound.
    fn enlarged(&self, x: &[f64], r: f64) -> Result<Vec<BucketId>> {
        check_dim(&self.params, x)?;
        let s = self.side;
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(x.len());
        fn walk(x: &[f64], s: f64, r2: f64, acc: f64, cur: &mut Vec<i64>, out: &mut Vec<BucketId>) -> Result<()> {
            let k = cur.len();
            if k == x.len() {
                if out.len() >= GRID_ENLARGED_CAP {
                    return Err(Error::Unsupported(format!("more than {GRID_ENLARGED_CAP} grid cells meet the ball")));
                }
                out.push(BucketId { tag: 0, words: cur.clone() });
                return Ok(());
            }
            let r = (r2 - acc).max(0.0).sqrt();
            let lo = ((x[k] - r) / s).floor() as i64;
            let hi = ((x[k] + r) / s).floor() as i64;
            for c in lo..=hi {
                let (a, b) = (c as f64 * s, (c + 1) as f64 * s);
                let gap = if x[k] < a { a - x[k] } else if x[k] >= b { x[k] - b } else { 0.0 };
                if acc + gap * gap <= r2 {
                    cur.push(c);
                    walk(x, s, r2, acc + gap * gap, cur, out)?;
                    cur.pop();
                }
            }
            Ok(())
        }
        walk(x, s, r * r, 0.0, &mut cur, &mut out)?;
        sort_ids(&mut out);
        Ok(out)
    }
}

/// Output bound of the grid ball enumeration.
const GRID_ENLARGED_CAP: usize = 1 << 16;

/// Face decomposition of the cube grid of side `T = ℓ/√d`.
///
/// With `δ_k` the distance of coordinate `k` to the nearest cube boundary,
/// sorted ascending, a point belongs to the neighborhood of the face fixing
/// its `k*` nearest coordinates, `k*` being the largest `k` with
/// `δ_(k) ≤ k·ε`. Group `i = d − k*` is the dimension of that face.
#[derive(Clone, Debug)]
pub struct FaceHash {
    params: HashParams,
    side: f64,
    eps: f64,
}

/// Per-point data shared by [`FaceHash::bucket`] and [`FaceHash::enlarged`].
struct FaceLocal {
    cube: Vec<i64>,
    /// Distance to the nearest boundary, per coordinate.
    delta: Vec<f64>,
    /// 1 if the nearest boundary is the upper one.
    upper: Vec<bool>,
    /// Coordinates sorted by `(δ, index)`.
    order: Vec<usize>,
}

impl FaceHash {
    pub fn new(params: HashParams) -> Result<Self> {
        if params.construction != Construction::Face {
            return Err(Error::InvalidArgument("face hash needs face parameters".into()));
        }
        let side = params.ell / (params.d as f64).sqrt();
        let eps = params.eps();
        Ok(Self { params, side, eps })
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn local(&self, x: &[f64]) -> FaceLocal {
        let d = x.len();
        let mut cube = Vec::with_capacity(d);
        let mut delta = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for &v in x {
            let c = (v / self.side).floor();
            let lo = v - c * self.side;
            let hi = self.side - lo;
            cube.push(c as i64);
            delta.push(lo.min(hi).max(0.0));
            upper.push(hi < lo);
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| delta[a].total_cmp(&delta[b]).then(a.cmp(&b)));
        FaceLocal { cube, delta, upper, order }
    }

    fn id(&self, loc: &FaceLocal, fixed: &[usize]) -> BucketId {
        let d = loc.cube.len();
        let mut words = loc.cube.clone();
        let mut mask = vec![0i64; d.div_ceil(32)];
        for &k in fixed {
            words[k] += loc.upper[k] as i64;
            mask[k / 32] |= 1 << (k % 32);
        }
        words.extend(mask);
        BucketId { tag: (d - fixed.len()) as u64, words }
    }

    /// Number of fixed coordinates, `k*`.
    fn fixed_count(&self, loc: &FaceLocal) -> usize {
        (1..=loc.order.len())
            .rev()
            .find(|&k| loc.delta[loc.order[k - 1]] <= k as f64 * self.eps)
            .unwrap_or(0)
    }

    /// Face dimension of the group `x` falls in.
    pub fn group(&self, x: &[f64]) -> Result<usize> {
        check_dim(&self.params, x)?;
        let loc = self.local(x);
        Ok(x.len() - self.fixed_count(&loc))
    }
}

impl ConsistentHash for FaceHash {
    fn params(&self) -> &HashParams {
        &self.params
    }

    fn bucket(&self, x: &[f64]) -> Result<BucketId> {
        check_dim(&self.params, x)?;
        let loc = self.local(x);
        let k = self.fixed_count(&loc);
        Ok(self.id(&loc, &loc.order[..k]))
    }

    /// Requires `r ≤ ε/2`. For each `s`, the only possible face with `s`
    /// fixed coordinates is `S_s = {k : δ_k ≤ sε + r}`; it is hit iff the
    /// cheapest move realizing group `d − s` has length at most `r`.
    fn enlarged(&self, x: &[f64], r: f64) -> Result<Vec<BucketId>> {
        check_dim(&self.params, x)?;
        if !(r >= 0.0) || r > self.eps / 2.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "ball radius {r} exceeds eps/2 = {}",
                self.eps / 2.0
            )));
        }
        let loc = self.local(x);
        let d = x.len();
        let sorted: Vec<f64> = loc.order.iter().map(|&k| loc.delta[k]).collect();
        let r2 = r * r;
        let mut out = Vec::new();
        for s in 0..=d {
            let se = s as f64 * self.eps;
            let size = sorted.partition_point(|&v| v <= se + r);
            if size != s {
                continue;
            }
            let mut cost = 0.0;
            for &v in &sorted[..s] {
                let m = (v - se).max(0.0);
                cost += m * m;
            }
            for (t, &v) in sorted[s..].iter().enumerate() {
                let m = ((s + t + 1) as f64 * self.eps - v).max(0.0);
                cost += m * m;
                if cost > r2 {
                    break;
                }
            }
            if cost <= r2 {
                out.push(self.id(&loc, &loc.order[..s]));
            }
        }
        Ok(out)
    }
}

/// Ball carving: random shifts `v_1, v_2, …` of the lattice `4w·Z^d`, each
/// point going to the first ball of radius `w = ℓ/2` that covers it.
pub struct BallCarving {
    params: HashParams,
    w: f64,
    budget: u64,
    prf: Prf,
    /// Flattened centers generated so far.
    centers: RwLock<Vec<f64>>,
}

const CENTER_CHUNK: usize = 4096;

impl BallCarving {
    pub fn new(params: HashParams) -> Result<Self> {
        if params.construction != Construction::Carve {
            return Err(Error::InvalidArgument("ball carving needs carve parameters".into()));
        }
        let d = params.d as f64;
        let exp = (CARVE_BUDGET_CONST * d * d.log2()).ceil();
        let budget = if exp >= 20.0 { CARVE_BUDGET_CAP } else { (1u64 << exp as u32).min(CARVE_BUDGET_CAP) };
        Ok(Self {
            w: params.ell / 2.0,
            budget,
            prf: Prf::new(params.seed, domain::CARVE),
            centers: RwLock::new(Vec::new()),
            params,
        })
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn radius(&self) -> f64 {
        self.w
    }

    /// Center `k` (0-based) reduced to the fundamental cell `[0, 4w)^d`.
    pub fn center(&self, k: u64) -> Vec<f64> {
        let d = self.params.d;
        (0..d).map(|c| 4.0 * self.w * self.prf.unit(&[k, c as u64])).collect()
    }

    fn ensure(&self, upto: usize) {
        let d = self.params.d;
        if self.centers.read().expect("center cache poisoned").len() >= upto * d {
            return;
        }
        let mut g = self.centers.write().expect("center cache poisoned");
        while g.len() < upto * d {
            let k = (g.len() / d) as u64;
            let end = (k + CENTER_CHUNK as u64).min(self.budget);
            for j in k..end {
                let c = self.center(j);
                g.extend(c);
            }
        }
    }
}

impl ConsistentHash for BallCarving {
    fn params(&self) -> &HashParams {
        &self.params
    }

    fn bucket(&self, x: &[f64]) -> Result<BucketId> {
        check_dim(&self.params, x)?;
        self.scan(&[x]).pop().expect("one result per point")
    }

    fn bucket_batch(&self, xs: &[Vec<f64>]) -> Vec<Result<BucketId>> {
        if let Some(bad) = xs.iter().find(|x| x.len() != self.params.d) {
            let got = bad.len();
            return xs.iter().map(|_| Err(Error::DimensionMismatch { expected: self.params.d, got })).collect();
        }
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        self.scan(&refs)
    }
}

impl BallCarving {
    /// Squared torus distance between two reduced points, or `None` once it
    /// exceeds `cap`.
    fn wrapped_sq(&self, a: &[f64], v: &[f64], cap: f64) -> Option<f64> {
        let cell = 4.0 * self.w;
        let half = 0.5 * cell;
        let mut acc = 0.0;
        for (ai, vi) in a.iter().zip(v) {
            let mut e = ai - vi;
            if e > half {
                e -= cell;
            } else if e < -half {
                e += cell;
            }
            acc += e * e;
            if acc > cap {
                return None;
            }
        }
        Some(acc)
    }

    /// One pass over the centers for all of `xs`. Centers farther than
    /// `w + spread` from the first point cannot cover any of them.
    fn scan(&self, xs: &[&[f64]]) -> Vec<Result<BucketId>> {
        let d = self.params.d;
        let cell = 4.0 * self.w;
        let w2 = self.w * self.w;
        let reduced: Vec<Vec<f64>> =
            xs.iter().map(|x| x.iter().map(|&xi| xi - cell * (xi / cell).floor()).collect()).collect();
        let spread = xs
            .iter()
            .map(|x| x.iter().zip(xs[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let gate = (self.w + spread) * (self.w + spread) * (1.0 + 1e-9);
        let mut out: Vec<Option<Result<BucketId>>> = xs.iter().map(|_| None).collect();
        let mut left = xs.len();
        let mut start = 0usize;
        while left > 0 && (start as u64) < self.budget {
            let end = ((start + CENTER_CHUNK) as u64).min(self.budget) as usize;
            self.ensure(end);
            let g = self.centers.read().expect("center cache poisoned");
            for k in start..end {
                let v = &g[k * d..(k + 1) * d];
                if xs.len() > 1 && self.wrapped_sq(&reduced[0], v, gate).is_none() {
                    continue;
                }
                for (i, slot) in out.iter_mut().enumerate() {
                    if slot.is_none() && self.wrapped_sq(&reduced[i], v, w2).is_some() {
                        let words = xs[i].iter().zip(v).map(|(xi, vi)| ((xi - vi) / cell).round() as i64).collect();
                        *slot = Some(Ok(BucketId { tag: k as u64, words }));
                        left -= 1;
                    }
                }
                if left == 0 {
                    break;
                }
            }
            start = end;
        }
        out.into_iter().map(|r| r.unwrap_or(Err(Error::Uncovered { budget: self.budget }))).collect()
    }
}

/// Builds the hash for `params`.
pub fn build(params: HashParams) -> Result<Box<dyn ConsistentHash>> {
    Ok(match params.construction {
        Construction::Grid => Box::new(GridHash::new(params)),
        Construction::Face => Box::new(FaceHash::new(params)?),
        Construction::Carve => Box::new(BallCarving::new(params)?),
    })
}

pub fn grid_hash(x: &[f64], params: &HashParams) -> Result<BucketId> {
    GridHash::new(params.clone()).bucket(x)
}

pub fn face_hash(x: &[f64], params: &HashParams) -> Result<BucketId> {
    FaceHash::new(params.clone())?.bucket(x)
}

pub fn ball_carving_hash(x: &[f64], params: &HashParams) -> Result<BucketId> {
    BallCarving::new(params.clone())?.bucket(x)
}

/// Image of `B(p, ε/2)` under a face hash.
pub fn enumerate_enlarged_buckets(p: &[f64], hash: &dyn ConsistentHash) -> Result<Vec<BucketId>> {
    let r = hash.params().eps() / 2.0;
    hash.enlarged(p, r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub construction: Construction,
    pub d: usize,
    pub ell: f64,
    pub gamma: f64,
    pub lambda: u64,
    pub trials: u64,
    pub pairs_checked: u64,
    pub same_bucket_pairs: u64,
    pub max_diameter: f64,
    pub max_consistency: u64,
    pub diameter_ok: bool,
    pub consistency_ok: bool,
    pub uncovered: u64,
}

/// Partners per trial for the diameter check.
const DIAMETER_PARTNERS: usize = 4;

/// Points sampled per random set `S`, on top of its center.
fn set_size(d: usize) -> usize {
    2 * d + 16
}

/// Statistical check of both hash conditions.
///
/// Diameter: each trial draws a point `x` and a few partners at distance up to
/// `1.05ℓ`, recording the farthest same-bucket pair. Consistency: each trial
/// draws a set of diameter at most `ℓ/Γ` (center plus sphere and axis points)
/// and counts distinct buckets. Half of the centers are snapped close to
/// cube boundaries of side `ℓ/√d`, where partitions tend to split sets.
pub fn verify_hash(hash: &dyn ConsistentHash, trials: u64, seed: u64) -> VerifyReport {
    let p = hash.params().clone();
    let d = p.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = p.ell / (d as f64).sqrt();
    let span = 8.0 * p.ell;
    let r = 0.5 * p.eps() * (1.0 - 1e-9);
    let mut rep = VerifyReport {
        construction: p.construction,
        d,
        ell: p.ell,
        gamma: p.gamma,
        lambda: p.lambda,
        trials,
        pairs_checked: 0,
        same_bucket_pairs: 0,
        max_diameter: 0.0,
        max_consistency: 0,
        diameter_ok: true,
        consistency_ok: true,
        uncovered: 0,
    };
    for trial in 0..trials {
        let mut x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * span).collect();
        if trial % 2 == 1 {
            for v in x.iter_mut() {
                if rng.gen_bool(0.5) {
                    let near = (*v / side).round() * side;
                    *v = near + (rng.gen::<f64>() - 0.5) * 2.0 * d as f64 * p.eps();
                }
            }
        }
        // consistency
        let mut set = vec![x.clone()];
        for j in 0..set_size(d) {
            set.push(if j < d {
                let mut y = x.clone();
                y[j] += if rng.gen_bool(0.5) { r } else { -r };
                y
            } else {
                let dir = unit_vector(&mut rng, d);
                x.iter().zip(&dir).map(|(a, u)| a + r * u).collect()
            });
        }
        let found = hash.bucket_batch(&set);
        rep.uncovered += found.iter().filter(|b| b.is_err()).count() as u64;
        let Some(Ok(bx)) = found.first().map(|b| b.as_ref().map(|b| b.clone()).map_err(|_| ())) else {
            continue;
        };
        let mut ids: Vec<BucketId> = found.into_iter().filter_map(|b| b.ok()).collect();
        ids.sort();
        ids.dedup();
        rep.max_consistency = rep.max_consistency.max(ids.len() as u64);
        // diameter
        for _ in 0..DIAMETER_PARTNERS {
            let dir = unit_vector(&mut rng, d);
            let len = rng.gen::<f64>() * 1.05 * p.ell;
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + len * u).collect();
            rep.pairs_checked += 1;
            match hash.bucket(&y) {
                Ok(by) if by == bx => {
                    rep.same_bucket_pairs += 1;
                    let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    rep.max_diameter = rep.max_diameter.max(dist);
                }
                Ok(_) => {}
                Err(_) => rep.uncovered += 1,
            }
        }
    }
    rep.diameter_ok = rep.max_diameter <= p.ell + 1e-9;
    rep.consistency_ok = rep.max_consistency <= p.lambda;
    rep
}

pub(crate) fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Standard normal via Box–Muller.
pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Total order on ids for deterministic output.
pub fn sort_ids(ids: &mut [BucketId]) {
    ids.sort_by(|a, b| match a.tag.cmp(&b.tag) {
        Ordering::Equal => a.words.cmp(&b.words),
        o => o,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn grid_examples() {
        let p = HashParams::grid(2, 2f64.sqrt()).unwrap();
        assert_eq!(grid_hash(&[0.5, 0.5], &p).unwrap().words, vec![0, 0]);
        assert_eq!(grid_hash(&[1.0, 1.0], &p).unwrap().words, vec![1, 1]);
        assert_eq!(p.lambda, 4);
    }

    #[test]
    fn face_1d_trace() {
        // d = 1: side ℓ, a grid point claims its ε-neighborhood
        let p = HashParams::face(1, 1.0).unwrap();
        let eps = p.eps();
        let h = FaceHash::new(p).unwrap();
        let a = h.bucket(&[3.0 + 0.5 * eps]).unwrap();
        let b = h.bucket(&[3.0 - 0.5 * eps]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tag, 0);
        let c = h.bucket(&[3.5]).unwrap();
        assert_eq!(c.tag, 1);
        assert_eq!(h.bucket(&[3.0 + 1.5 * eps]).unwrap(), c);
    }

    #[test]
    fn face_corner_claims_edge_band() {
        let p = HashParams::face(2, 1.0).unwrap();
        let eps = p.eps();
        let h = FaceHash::new(p).unwrap();
        let side = h.side();
        // within 2ε of the corner in ℓ∞ and within ε of an edge
        let x = [side + 1.9 * eps, side + 0.5 * eps];
        let b = h.bucket(&x).unwrap();
        assert_eq!(b.tag, 0);
        assert_eq!(b, h.bucket(&[side - 1.5 * eps, side - 1.5 * eps]).unwrap());
        // outside the corner band but within ε of the edge
        let e = h.bucket(&[side + 2.5 * eps, side + 0.5 * eps]).unwrap();
        assert_eq!(e.tag, 1);
    }

    #[test]
    fn face_gamma_floor() {
        assert!(HashParams::face_with_gamma(11, 1.0, 80.0).is_ok());
        assert!(HashParams::face_with_gamma(12, 1.0, 80.0).is_err());
    }

    #[test]
    fn enlarged_interior_is_singleton() {
        let p = HashParams::face(3, 1.0).unwrap();
        let h = FaceHash::new(p).unwrap();
        let mid = h.side() / 2.0;
        let ids = enumerate_enlarged_buckets(&[mid, mid, mid], &h).unwrap();
        assert_eq!(ids, vec![h.bucket(&[mid, mid, mid]).unwrap()]);
    }

    #[test]
    fn enlarged_near_boundary_is_two() {
        let p = HashParams::face(2, 1.0).unwrap();
        let eps = p.eps();
        let h = FaceHash::new(p).unwrap();
        let mid = h.side() / 2.0;
        // ε/4 outside the edge band
        let x = [h.side() + 1.25 * eps, mid];
        let ids = enumerate_enlarged_buckets(&x, &h).unwrap();
        assert_eq!(ids.len(), 2);
        assert!(ids.contains(&h.bucket(&[h.side() + 0.99 * eps, mid]).unwrap()));
        assert!(ids.contains(&h.bucket(&x).unwrap()));
    }

    #[test]
    fn enlarged_rejects_large_radius() {
        let h = FaceHash::new(HashParams::face(2, 1.0).unwrap()).unwrap();
        assert!(h.enlarged(&[0.3, 0.3], h.eps()).is_err());
        let c = BallCarving::new(HashParams::carve(3, 1.0, 6.0, 1).unwrap()).unwrap();
        assert!(matches!(enumerate_enlarged_buckets(&[0.3, 0.3, 0.3], &c), Err(Error::Unsupported(_))));
    }

    #[test]
    fn grid_enlarged_matches_brute_force() {
        let g = GridHash::new(HashParams::grid(2, 2f64.sqrt()).unwrap());
        // side 1, ball radius 1/2 around (0.9, 0.2): cells (0,0), (1,0), (0,-1), (1,-1)
        let ids = g.enlarged(&[0.9, 0.2], 0.5).unwrap();
        let words: Vec<Vec<i64>> = ids.iter().map(|b| b.words.clone()).collect();
        assert_eq!(words, vec![vec![0, -1], vec![0, 0], vec![1, -1], vec![1, 0]]);
        let ids = g.enlarged(&[0.5, 0.5], 0.25).unwrap();
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn carve_bucket_within_radius() {
        let p = HashParams::carve(3, 1.0, 6.0, 11).unwrap();
        let h = BallCarving::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 10.0).collect();
            let b = h.bucket(&x).unwrap();
            let v = h.center(b.tag);
            let c: Vec<f64> = v.iter().zip(&b.words).map(|(vi, u)| vi + 4.0 * h.radius() * *u as f64).collect();
            assert!(dist(&x, &c) <= h.radius() + 1e-12);
        }
    }

    #[test]
    fn carve_is_deterministic() {
        let p = HashParams::carve(4, 2.0, 8.0, 99).unwrap();
        let a = BallCarving::new(p.clone()).unwrap();
        let b = BallCarving::new(p).unwrap();
        let x = [1.3, -2.2, 7.7, 0.1];
        assert_eq!(a.bucket(&x).unwrap(), b.bucket(&x).unwrap());
    }

    #[test]
    fn carve_batch_matches_single() {
        let h = BallCarving::new(HashParams::carve(5, 1.0, 8.0, 3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for spread in [0.01, 0.3, 5.0] {
            let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 10.0).collect();
            let xs: Vec<Vec<f64>> = (0..12)
                .map(|_| x.iter().map(|v| v + spread * (rng.gen::<f64>() - 0.5)).collect())
                .collect();
            let batch = h.bucket_batch(&xs);
            for (y, b) in xs.iter().zip(batch) {
                assert_eq!(b.unwrap(), h.bucket(y).unwrap());
            }
        }
    }

    #[test]
    fn verify_small_dims() {
        let g = GridHash::new(HashParams::grid(3, 1.0).unwrap());
        let r = verify_hash(&g, 2000, 1);
        assert!(r.max_consistency <= 8 && r.diameter_ok, "{r:?}");
        let f = FaceHash::new(HashParams::face(4, 1.0).unwrap()).unwrap();
        let r = verify_hash(&f, 2000, 1);
        assert!(r.max_consistency <= 5 && r.diameter_ok, "{r:?}");
    }
}
