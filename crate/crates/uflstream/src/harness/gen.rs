//! Point-set generators: uniform, clustered and the hard example with one
//! sparse and one dense part.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::core::{GridPoint, UflInstance};
use crate::error::{Error, Result};

/// Size of `[Δ]^d`, or `None` past `u64`.
pub(crate) fn grid_size(d: usize, delta: u64) -> Option<u64> {
    let mut total: u64 = 1;
    for _ in 0..d {
        total = total.checked_mul(delta)?;
    }
    Some(total)
}

fn decode(mut idx: u64, d: usize, delta: u64) -> GridPoint {
    let coords = (0..d)
        .map(|_| {
            let c = (idx % delta) as i64 + 1;
            idx /= delta;
            c
        })
        .collect();
    GridPoint::from_coords(coords)
}

/// `n` distinct uniform points of `[Δ]^d`, avoiding `taken`.
pub(crate) fn uniform_points(
    n: usize,
    inst: &UflInstance,
    taken: &HashSet<GridPoint>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GridPoint>> {
    let total = grid_size(inst.d, inst.delta);
    let room = total.map(|t| t.saturating_sub(taken.len() as u64));
    if matches!(room, Some(r) if (n as u64) > r) {
        return Err(Error::InvalidArgument(format!(
            "cannot place {n} distinct points in [{}]^{}",
            inst.delta, inst.d
        )));
    }
    // dense requests: sample indices without replacement
    if let Some(t) = total.filter(|&t| t <= 4 * (n + taken.len()) as u64 && t <= 1 << 24) {
        let picks = index::sample(rng, t as usize, t as usize);
        return Ok(picks
            .into_iter()
            .map(|i| decode(i as u64, inst.d, inst.delta))
            .filter(|p| !taken.contains(p))
            .take(n)
            .collect());
    }
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = GridPoint::from_coords((0..inst.d).map(|_| rng.gen_range(1..=inst.delta as i64)).collect());
        if !taken.contains(&p) && seen.insert(p.clone()) {
            out.push(p);
        }
    }
    Ok(out)
}

/// `n` distinct points around `k` uniform centers, each within Euclidean
/// distance `radius` of its center (uniform in the ball, then rounded and
/// clipped to the grid).
pub(crate) fn clustered_points(
    n: usize,
    inst: &UflInstance,
    k: usize,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GridPoint>> {
    if n == 0 {
        return Ok(vec![]);
    }
    if k == 0 || !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("need k ≥ 1 and radius ≥ 0, got k={k}, r={radius}")));
    }
    let d = inst.d;
    let hi = inst.delta as f64;
    let centers: Vec<Vec<f64>> =
        (0..k).map(|_| (0..d).map(|_| rng.gen_range(1.0..=hi)).collect()).collect();
    let budget = 200 * n + 1000;
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for _ in 0..budget {
        if out.len() == n {
            return Ok(out);
        }
        let c = &centers[rng.gen_range(0..k)];
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let len = radius * rng.gen::<f64>().powf(1.0 / d as f64);
        let coords: Vec<i64> = c
            .iter()
            .zip(&dir)
            .map(|(ci, di)| (ci + len * di / norm).round().clamp(1.0, hi) as i64)
            .collect();
        let p = GridPoint::from_coords(coords);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    if out.len() == n {
        return Ok(out);
    }
    Err(Error::InvalidArgument(format!(
        "placed only {} of {n} distinct points within radius {radius} of {k} centers",
        out.len()
    )))
}

/// Intended class of `r_x` for a point of the hard example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RClass {
    /// Far from everything; `r_x = f`.
    Isolated,
    /// Inside the dense cluster; `r_x = Θ(f/n)`.
    Dense,
}

/// The hard example in grid units, with the class of every point.
#[derive(Clone, Debug)]
pub struct ExampleHard {
    pub instance: UflInstance,
    pub points: Vec<GridPoint>,
    pub classes: Vec<RClass>,
    /// Grid units per unit of the unscaled construction.
    pub scale: f64,
}

fn sign_vector(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn hamming(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Dimension used for `n` points: `⌈8·log2 n⌉`.
pub fn example_hard_dim(n: usize) -> usize {
    (8.0 * (n as f64).log2()).ceil() as usize
}

/// `√n` isolated points at pairwise distance above 1 and `n − √n` points in a
/// cluster of pairwise distances about `1/n`, with `f = 1`. Both parts are
/// sign vectors `±1/√d` scaled, then quantized with error below `1/(10n)`.
pub fn example_hard(n: usize, rng: &mut ChaCha8Rng) -> Result<ExampleHard> {
    let k = (n as f64).sqrt().round() as usize;
    if n < 4 || k * k != n {
        return Err(Error::InvalidArgument(format!("n must be a perfect square ≥ 4, got {n}")));
    }
    let d = example_hard_dim(n);
    let sd = (d as f64).sqrt();

    // k isolated codewords plus the cluster center; no two may coincide
    let mut words: Vec<Vec<f64>> = Vec::new();
    let mut min_h = 0;
    for _ in 0..1000 {
        words = (0..=k).map(|_| sign_vector(d, rng)).collect();
        min_h = (0..=k)
            .flat_map(|a| (a + 1..=k).map(move |b| (a, b)))
            .map(|(a, b)| hamming(&words[a], &words[b]))
            .min()
            .unwrap_or(d);
        if min_h > 0 {
            break;
        }
    }
    if min_h == 0 {
        return Err(Error::InvalidArgument(format!("no separated codewords found in d={d}")));
    }
    // scaled pairwise distance is amp · 2√(h/d); keep it above 1 with room for
    // the cluster radius and quantization
    let target = 1.0 + 1.5 / n as f64 + 0.01;
    let amp = target / (2.0 * (min_h as f64 / d as f64).sqrt());

    let mut real: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for w in &words[1..] {
        real.push(w.iter().map(|v| amp * v / sd).collect());
        classes.push(RClass::Isolated);
    }
    let center: Vec<f64> = words[0].iter().map(|v| amp * v / sd).collect();
    let tiny = 1.0 / (n as f64 * (2.0 * d as f64).sqrt());
    let mut used = HashSet::new();
    while classes.len() < n {
        let tau = sign_vector(d, rng);
        let key: Vec<bool> = tau.iter().map(|&v| v > 0.0).collect();
        if !used.insert(key) {
            continue;
        }
        real.push(center.iter().zip(&tau).map(|(c, t)| c + tiny * t).collect());
        classes.push(RClass::Dense);
    }

    // per-point rounding error is at most step·√d/2 < 1/(10n)
    let step = 0.9 / (5.0 * n as f64 * sd);
    let lo = real.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let grid: Vec<Vec<i64>> =
        real.iter().map(|p| p.iter().map(|v| 1 + ((v - lo) / step).round() as i64).collect()).collect();
    let top = grid.iter().flatten().copied().max().unwrap_or(1) as u64;
    let delta = top.next_power_of_two().max(2);
    let instance = UflInstance::new(d, delta, 1.0 / step).map_err(|e| {
        Error::InvalidInstance(format!(
            "example_hard n={n} needs d={d} and Δ ≥ {delta}, which is not representable: {e}"
        ))
    })?;
    let points: Vec<GridPoint> = grid.into_iter().map(GridPoint::from_coords).collect();
    let distinct: HashSet<&GridPoint> = points.iter().collect();
    if distinct.len() != n {
        return Err(Error::InvalidInstance(format!(
            "example_hard n={n}: quantization merged points; use a larger n"
        )));
    }
    Ok(ExampleHard { instance, points, classes, scale: 1.0 / step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_dense_and_sparse() {
        let inst = UflInstance::new(2, 4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = uniform_points(16, &inst, &HashSet::new(), &mut rng).unwrap();
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), 16);
        assert!(uniform_points(17, &inst, &HashSet::new(), &mut rng).is_err());
        let inst = UflInstance::new(2, 1024, 1.0).unwrap();
        let pts = uniform_points(100, &inst, &HashSet::new(), &mut rng).unwrap();
        assert_eq!(pts.iter().collect::<HashSet<_>>().len(), 100);
        assert!(pts.iter().all(|p| GridPoint::new(p.coords().to_vec(), &inst).is_ok()));
    }

    #[test]
    fn clustered_stays_near_centers() {
        let inst = UflInstance::new(3, 1024, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = clustered_points(200, &inst, 4, 10.0, &mut rng).unwrap();
        assert_eq!(pts.iter().collect::<HashSet<_>>().len(), 200);
        let tight = clustered_points(50, &inst, 1, 0.0, &mut rng);
        assert!(tight.is_err());
    }

    #[test]
    fn example_hard_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = example_hard(64, &mut rng).unwrap();
        assert_eq!(ex.instance.d, 48);
        assert_eq!(ex.points.len(), 64);
        assert_eq!(ex.classes.iter().filter(|&&c| c == RClass::Isolated).count(), 8);
        assert!(example_hard(10, &mut rng).is_err());
    }
}
