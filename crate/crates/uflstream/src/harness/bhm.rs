//! Point sets built from Boolean Hidden Matching instances, and their
//! optimum over a fixed candidate facility set.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{GridPoint, RealPoint, UflInstance};
use crate::error::{Error, Result};
use crate::oracle::PointMatrix;

/// Opening cost of the gadget, in unscaled units.
pub const BHM_F: f64 = 2.0;

/// Copies of each of Alice's points are spread within this distance of it.
pub const PERTURB_RADIUS: f64 = 1e-6;

/// Grid units per unscaled unit; the smallest power of two that keeps
/// offsets of norm 2 inside [`PERTURB_RADIUS`].
const SCALE: i64 = 1 << 21;
const BASE: i64 = 3;

/// Largest `n` whose grouped optimum is computed exactly.
pub const MAX_EXACT_BHM_N: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BhmAnswer {
    Yes,
    No,
}

/// A BHM instance (`2n` bits, a perfect matching of size `n`) and the
/// facility location point set it induces in dimension `8n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BhmInstance {
    pub n: usize,
    pub x: Vec<bool>,
    pub matching: Vec<(usize, usize)>,
    pub w: Vec<bool>,
    pub answer: BhmAnswer,
    pub instance: UflInstance,
    pub points: Vec<GridPoint>,
    /// Group of every point: `0..2n` are Alice's clusters, `2n + e` is
    /// Bob's client `e` (two per matching edge).
    pub groups: Vec<usize>,
}

/// Coordinate `i_c` of bit `i`.
fn coord(i: usize, c: usize) -> usize {
    4 * i + c
}

fn indicator(d: usize, ones: &[usize]) -> Vec<i64> {
    let mut v = vec![BASE; d];
    for &k in ones {
        v[k] += SCALE;
    }
    v
}

impl BhmInstance {
    pub fn dim(&self) -> usize {
        8 * self.n
    }

    /// Grid units per unscaled unit.
    pub fn scale(&self) -> f64 {
        SCALE as f64
    }

    /// `s_i^b`: ones at `i_0, i_1` for `b = 0`, at `i_2, i_3` for `b = 1`.
    pub fn s_point(&self, i: usize, b: bool) -> Vec<i64> {
        let c = if b { 2 } else { 0 };
        indicator(self.dim(), &[coord(i, c), coord(i, c + 1)])
    }

    /// `t^b_{i,j}` of matching edge `e = (i, j)`.
    pub fn t_point(&self, e: usize, b: bool) -> Vec<i64> {
        let (i, j) = self.matching[e];
        let w = self.w[e] as usize;
        let ones = if b {
            [coord(i, 2), coord(i, 3), coord(j, 2 * w), coord(j, 2 * w + 1)]
        } else {
            [coord(i, 0), coord(i, 1), coord(j, 2 - 2 * w), coord(j, 3 - 2 * w)]
        };
        indicator(self.dim(), &ones)
    }

    /// Whether the promise of the stated answer holds on every edge.
    pub fn promise_holds(&self) -> bool {
        self.matching.iter().zip(&self.w).all(|(&(i, j), &w)| match self.answer {
            BhmAnswer::Yes => (self.x[i] ^ self.x[j]) == w,
            BhmAnswer::No => (self.x[i] ^ self.x[j]) != w,
        })
    }

    /// Bob's clients, in edge order.
    pub fn bob_points(&self) -> Vec<Vec<i64>> {
        (0..self.n).flat_map(|e| [self.t_point(e, false), self.t_point(e, true)]).collect()
    }

    /// All `s_i^b`, all `t^b_{i,j}`, and the coordinate averages of every
    /// subset of 2 to 4 of Bob's clients.
    pub fn candidates(&self) -> Vec<RealPoint> {
        let mut out = Vec::new();
        for i in 0..2 * self.n {
            for b in [false, true] {
                out.push(to_real(&self.s_point(i, b)));
            }
        }
        let bob = self.bob_points();
        out.extend(bob.iter().map(|p| to_real(p)));
        let k = bob.len();
        for mask in 1u32..(1 << k) {
            let size = mask.count_ones() as usize;
            if !(2..=4).contains(&size) {
                continue;
            }
            let mut avg = vec![0.0; self.dim()];
            for (e, p) in bob.iter().enumerate() {
                if mask >> e & 1 == 1 {
                    for (a, &v) in avg.iter_mut().zip(p) {
                        *a += v as f64;
                    }
                }
            }
            out.push(RealPoint(avg.into_iter().map(|a| a / size as f64).collect()));
        }
        out
    }

    /// Largest distance from a copy to its unperturbed point, in grid units.
    pub fn max_offset(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (p, &g) in self.points.iter().zip(&self.groups) {
            if g < 2 * self.n {
                let s = self.s_point(g, self.x[g]);
                let sq: i64 = p.coords().iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum();
                worst = worst.max((sq as f64).sqrt());
            }
        }
        worst
    }
}

fn to_real(v: &[i64]) -> RealPoint {
    RealPoint(v.iter().map(|&c| c as f64).collect())
}

/// Draws a BHM instance with the requested answer and builds its point set:
/// `100n` copies of `s_i^{x_i}` (spread within [`PERTURB_RADIUS`]) for each
/// bit, and `t^0_{i,j}`, `t^1_{i,j}` for each matching edge.
pub fn bhm_instance(n: usize, answer: BhmAnswer, rng: &mut ChaCha8Rng) -> Result<BhmInstance> {
    if n == 0 {
        return Err(Error::InvalidArgument("BHM needs n ≥ 1".into()));
    }
    let d = 8 * n;
    let delta = ((SCALE + 2 * BASE) as u64).next_power_of_two();
    let instance = UflInstance::new(d, delta, BHM_F * SCALE as f64)?;
    let x: Vec<bool> = (0..2 * n).map(|_| rng.gen()).collect();
    let mut perm: Vec<usize> = (0..2 * n).collect();
    perm.shuffle(rng);
    let matching: Vec<(usize, usize)> = perm.chunks(2).map(|c| (c[0], c[1])).collect();
    let w = matching
        .iter()
        .map(|&(i, j)| match answer {
            BhmAnswer::Yes => x[i] ^ x[j],
            BhmAnswer::No => !(x[i] ^ x[j]),
        })
        .collect();
    let mut inst = BhmInstance { n, x, matching, w, answer, instance, points: vec![], groups: vec![] };

    let copies = 100 * n;
    for i in 0..2 * n {
        let s = inst.s_point(i, inst.x[i]);
        let mut offsets: HashSet<Vec<(usize, i64)>> = HashSet::new();
        offsets.insert(vec![]);
        while offsets.len() < copies {
            let support = rng.gen_range(1..=4);
            let mut off: Vec<(usize, i64)> = (0..support)
                .map(|_| (rng.gen_range(0..d), if rng.gen() { 1 } else { -1 }))
                .collect();
            off.sort();
            off.dedup_by_key(|(k, _)| *k);
            offsets.insert(off);
        }
        let mut offsets: Vec<_> = offsets.into_iter().collect();
        offsets.sort();
        for off in offsets {
            let mut p = s.clone();
            for (k, v) in off {
                p[k] += v;
            }
            inst.points.push(GridPoint::from_coords(p));
            inst.groups.push(i);
        }
    }
    for (e, p) in inst.bob_points().into_iter().enumerate() {
        inst.points.push(GridPoint::from_coords(p));
        inst.groups.push(2 * n + e);
    }
    Ok(inst)
}

/// Optimum over the candidate set when each of Alice's clusters is served
/// by a single facility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhmOpt {
    /// Cost in unscaled units (`f = 2`).
    pub cost: f64,
    /// Bound on how far the cluster restriction can be above the candidate
    /// optimum over individual points, in unscaled units.
    pub slack: f64,
    /// Opened candidates, as indices into [`BhmInstance::candidates`].
    pub facilities: Vec<usize>,
    pub candidates: usize,
}

/// Exact optimum over partitions of the `4n` client groups, each block
/// served by its best candidate; dynamic programming over subsets.
pub fn bhm_candidate_opt(inst: &BhmInstance) -> Result<BhmOpt> {
    if inst.n > MAX_EXACT_BHM_N {
        return Err(Error::InvalidArgument(format!(
            "exact BHM optimum supports n ≤ {MAX_EXACT_BHM_N}, got {}",
            inst.n
        )));
    }
    let cands = inst.candidates();
    let cm = PointMatrix::from_points(&cands)?;
    let pm = PointMatrix::from_points(&inst.points)?;
    let g = 4 * inst.n;
    // group_cost[c][g]: connection cost of group g to candidate c
    let mut group_cost = vec![vec![0.0; g]; cands.len()];
    for (c, row) in group_cost.iter_mut().enumerate() {
        for (p, &grp) in inst.groups.iter().enumerate() {
            row[grp] += cm.dist_to(c, pm.row(p));
        }
    }
    let full = 1usize << g;
    let f = inst.instance.f;
    let mut block = vec![f64::INFINITY; full];
    let mut block_cand = vec![0usize; full];
    let mut sum = vec![0.0; full];
    for (c, row) in group_cost.iter().enumerate() {
        for mask in 1..full {
            let low = mask.trailing_zeros() as usize;
            sum[mask] = sum[mask & (mask - 1)] + row[low];
            if sum[mask] + f < block[mask] {
                block[mask] = sum[mask] + f;
                block_cand[mask] = c;
            }
        }
    }
    let mut opt = vec![f64::INFINITY; full];
    let mut choice = vec![0usize; full];
    opt[0] = 0.0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let b = sub | low;
            let v = block[b] + opt[mask ^ b];
            if v < opt[mask] {
                opt[mask] = v;
                choice[mask] = b;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut facilities = Vec::new();
    let mut mask = full - 1;
    while mask != 0 {
        facilities.push(block_cand[choice[mask]]);
        mask ^= choice[mask];
    }
    facilities.sort_unstable();
    let alice = inst.groups.iter().filter(|&&x| x < 2 * inst.n).count() as f64;
    let scale = inst.scale();
    Ok(BhmOpt {
        cost: opt[full - 1] / scale,
        slack: 2.0 * inst.max_offset() * alice / scale,
        facilities,
        candidates: cands.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::validate_stream;
    use crate::core::StreamUpdate;
    use rand::SeedableRng;

    #[test]
    fn shape_and_promise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for answer in [BhmAnswer::Yes, BhmAnswer::No] {
            let b = bhm_instance(2, answer, &mut rng).unwrap();
            assert!(b.promise_holds());
            assert_eq!(b.points.len(), 4 * 200 + 4);
            assert!(b.max_offset() / b.scale() <= PERTURB_RADIUS);
            let ups: Vec<StreamUpdate> = b.points.iter().cloned().map(StreamUpdate::insert).collect();
            assert!(validate_stream(&ups).valid);
            for p in &b.points {
                assert!(GridPoint::new(p.coords().to_vec(), &b.instance).is_ok());
            }
        }
    }

    #[test]
    fn bob_points_are_far_apart() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = bhm_instance(3, BhmAnswer::No, &mut rng).unwrap();
        let bob = b.bob_points();
        let s = b.scale();
        for i in 0..bob.len() {
            for j in i + 1..bob.len() {
                let sq: i64 = bob[i].iter().zip(&bob[j]).map(|(a, c)| (a - c) * (a - c)).sum();
                assert!(((sq as f64).sqrt() / s - 8f64.sqrt()).abs() < 1e-12);
            }
        }
    }
}
