//! Offline ground truth: `r_p` values, the Mettu–Plaxton scan, its extended
//! clustering, exact objective values and candidate-restricted optima.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::core::{ensure_valid, grid_sq_dist, Coords, GridPoint, StreamUpdate, UflInstance};
use crate::error::{Error, Result};

/// Dense row-major copy of a point set.
#[derive(Clone, Debug)]
pub struct PointMatrix {
    d: usize,
    data: Vec<f64>,
}

impl PointMatrix {
    pub fn from_points<P: Coords>(points: &[P]) -> Result<Self> {
        let d = points.first().map_or(0, |p| p.dim());
        let mut data = Vec::with_capacity(d * points.len());
        for p in points {
            if p.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
            }
            data.extend((0..d).map(|i| p.at(i)));
        }
        Ok(Self { d, data })
    }

    pub fn len(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.data.len() / self.d
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        sq(self.row(i), self.row(j)).sqrt()
    }

    pub fn dist_to(&self, i: usize, x: &[f64]) -> f64 {
        sq(self.row(i), x).sqrt()
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `r_p` for every input point, in input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpTable {
    pub f: f64,
    pub values: Vec<f64>,
}

impl RpTable {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Level `j ≥ 1` with `r ∈ (2^{-j} f, 2^{-j+1} f]`.
    pub fn level_of(&self, idx: usize) -> usize {
        level_of(self.values[idx], self.f)
    }
}

pub(crate) fn level_of(r: f64, f: f64) -> usize {
    let mut j = 1usize;
    while r <= f * 0.5f64.powi(j as i32) && j < 2000 {
        j += 1;
    }
    j
}

/// Solves `Σ_{x ∈ B(p,r)} (r − dist(p,x)) = f` given the sorted distances
/// from `p` (the first one is 0).
pub fn solve_rp(sorted: &[f64], f: f64) -> f64 {
    let n = sorted.len();
    let mut prefix = 0.0;
    for k in 1..=n {
        prefix += sorted[k - 1];
        let r = (f + prefix) / k as f64;
        if k == n || r <= sorted[k] {
            return r;
        }
    }
    unreachable!("loop returns at k == n")
}

pub fn compute_rp<P: Coords>(points: &[P], f: f64) -> Result<RpTable> {
    let m = PointMatrix::from_points(points)?;
    compute_rp_matrix(&m, f)
}

pub fn compute_rp_matrix(m: &PointMatrix, f: f64) -> Result<RpTable> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("r_p needs a nonempty point set".into()));
    }
    if !(f > 0.0) {
        return Err(Error::InvalidArgument("opening cost must be positive".into()));
    }
    let n = m.len();
    let mut dists = vec![0.0; n];
    let values = (0..n)
        .map(|i| {
            for (j, slot) in dists.iter_mut().enumerate() {
                *slot = m.dist(i, j);
            }
            dists.sort_by(f64::total_cmp);
            solve_rp(&dists, f)
        })
        .collect();
    Ok(RpTable { f, values })
}

pub fn sum_rp<P: Coords>(points: &[P], f: f64) -> Result<f64> {
    Ok(compute_rp(points, f)?.sum())
}

/// `Σ_{x ∈ B(p,r)} (r − dist(p,x)) − f` for point `i`.
pub fn rp_residual(m: &PointMatrix, i: usize, r: f64, f: f64) -> f64 {
    (0..m.len()).map(|j| (r - m.dist(i, j)).max(0.0)).sum::<f64>() - f
}

/// Streaming ball counter for one known center: keeps `|P ∩ B(p, 2^{-j} f)|`
/// for `j = 0..=J` under insertions and deletions.
#[derive(Clone, Debug)]
pub struct BallCounter {
    center: GridPoint,
    f: f64,
    sq_radii: Vec<f64>,
    /// `hist[j]` counts points whose smallest containing ball is level `j`.
    hist: Vec<i64>,
    extra: i64,
}

/// Counter levels beyond this never reach `2^j` points.
const MAX_COUNT_LEVEL: usize = 62;

impl BallCounter {
    pub fn new(center: GridPoint, inst: &UflInstance) -> Self {
        let top = inst.levels().min(MAX_COUNT_LEVEL);
        let sq_radii = (0..=top)
            .map(|j| {
                let r = inst.f * 0.5f64.powi(j as i32);
                r * r
            })
            .collect();
        Self { center, f: inst.f, sq_radii, hist: vec![0; top + 1], extra: 0 }
    }

    /// Counts the center itself even though it never appears in the stream.
    pub fn with_center(mut self) -> Self {
        self.extra = 1;
        self
    }

    pub fn center(&self) -> &GridPoint {
        &self.center
    }

    pub fn update(&mut self, u: &StreamUpdate) {
        let s = grid_sq_dist(&self.center, &u.point) as f64;
        if s > self.sq_radii[0] {
            return;
        }
        // Radii shrink with j; find the last level still containing the point.
        let j = self.sq_radii.partition_point(|&r2| s <= r2) - 1;
        self.hist[j] += u.sign.delta();
    }

    pub fn counts(&self) -> Vec<i64> {
        let mut out = vec![0; self.hist.len()];
        let mut acc = self.extra;
        for j in (0..self.hist.len()).rev() {
            acc += self.hist[j];
            out[j] = acc;
        }
        out
    }

    /// `(j0, r̂)` with `j0` the largest `j` such that the ball of radius
    /// `2^{-j} f` holds at least `2^j` points, and `r̂ = 2^{-j0+1} f`.
    pub fn estimate(&self) -> Result<(usize, f64)> {
        let counts = self.counts();
        let j0 = (0..counts.len())
            .rev()
            .find(|&j| counts[j] as f64 >= 2f64.powi(j as i32))
            .ok_or_else(|| {
                Error::InvalidArgument(format!("center {} has an empty ball", self.center))
            })?;
        Ok((j0, self.f * 2f64.powi(1 - j0 as i32)))
    }
}

/// Runs a [`BallCounter`] over a whole stream.
pub fn estimate_rp_ball_counting(
    updates: &[StreamUpdate],
    p: &GridPoint,
    inst: &UflInstance,
) -> Result<f64> {
    ensure_valid(updates)?;
    let mut bc = BallCounter::new(p.clone(), inst);
    for u in updates {
        bc.update(u);
    }
    Ok(bc.estimate()?.1)
}

/// Output of [`mp_facilities`]; indices refer to the input point slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpSolution {
    /// Opened points, in opening order.
    pub facilities: Vec<usize>,
    /// For each point, the position in `facilities` of its nearest facility.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

fn lex_cmp(m: &PointMatrix, a: usize, b: usize) -> Ordering {
    m.row(a)
        .iter()
        .zip(m.row(b))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Scan order: non-decreasing `r_p`, ties broken lexicographically.
pub fn mp_order(m: &PointMatrix, rp: &RpTable) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| rp.values[a].total_cmp(&rp.values[b]).then_with(|| lex_cmp(m, a, b)));
    order
}

pub fn mp_facilities<P: Coords>(points: &[P], f: f64, rp: &RpTable) -> Result<MpSolution> {
    let m = PointMatrix::from_points(points)?;
    mp_facilities_matrix(&m, f, rp)
}

pub fn mp_facilities_matrix(m: &PointMatrix, f: f64, rp: &RpTable) -> Result<MpSolution> {
    if rp.values.len() != m.len() {
        return Err(Error::InvalidArgument("r_p table does not match the point set".into()));
    }
    let mut facilities: Vec<usize> = Vec::new();
    for p in mp_order(m, rp) {
        let reach = 2.0 * rp.values[p];
        if facilities.iter().all(|&q| m.dist(p, q) > reach) {
            facilities.push(p);
        }
    }
    let mut assignment = Vec::with_capacity(m.len());
    let mut cost = f * facilities.len() as f64;
    for p in 0..m.len() {
        let (best, dist) = nearest(m, p, &facilities);
        assignment.push(best);
        cost += dist;
    }
    Ok(MpSolution { facilities, assignment, cost })
}

fn nearest(m: &PointMatrix, p: usize, facilities: &[usize]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, &q) in facilities.iter().enumerate() {
        let t = m.dist(p, q);
        if t < best.1 {
            best = (k, t);
        }
    }
    best
}

/// `Σ_p dist(p, F) + f·|F|`.
pub fn ufl_cost<A: Coords, B: Coords>(points: &[A], facilities: &[B], f: f64) -> Result<f64> {
    if points.is_empty() {
        return Ok(f * facilities.len() as f64);
    }
    if facilities.is_empty() {
        return Err(Error::InvalidArgument("nonempty point set needs a facility".into()));
    }
    let pm = PointMatrix::from_points(points)?;
    let fm = PointMatrix::from_points(facilities)?;
    if pm.dim() != fm.dim() {
        return Err(Error::DimensionMismatch { expected: pm.dim(), got: fm.dim() });
    }
    let conn: f64 = (0..pm.len())
        .map(|i| (0..fm.len()).map(|k| fm.dist_to(k, pm.row(i))).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(conn + f * facilities.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    /// Position of the serving facility in the MP solution.
    pub facility: usize,
    pub level: usize,
    pub diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpClustering {
    pub clusters: Vec<Cluster>,
    /// `max |C|·Diam(C)/f` over clusters with positive diameter.
    pub size_constant: f64,
    /// `max Diam(C) / (2^{-j} f)` over clusters.
    pub diameter_constant: f64,
}

pub fn extended_mp_clustering<P: Coords>(
    points: &[P],
    f: f64,
    rp: &RpTable,
    mp: &MpSolution,
) -> Result<MpClustering> {
    let m = PointMatrix::from_points(points)?;
    if rp.values.len() != m.len() || mp.assignment.len() != m.len() {
        return Err(Error::InvalidArgument("inputs describe different point sets".into()));
    }
    // Group by (facility, level), then chunk each group in lexicographic order.
    let mut keyed: Vec<(usize, usize, usize)> =
        (0..m.len()).map(|p| (mp.assignment[p], rp.level_of(p), p)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| lex_cmp(&m, a.2, b.2)));
    let mut clusters = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let (fac, lvl, _) = keyed[start];
        let end = start + keyed[start..].iter().take_while(|k| k.0 == fac && k.1 == lvl).count();
        let chunk = 1usize << lvl.min(62);
        for piece in keyed[start..end].chunks(chunk) {
            let members: Vec<usize> = piece.iter().map(|k| k.2).collect();
            let mut diameter: f64 = 0.0;
            for (a, &x) in members.iter().enumerate() {
                for &y in &members[a + 1..] {
                    diameter = diameter.max(m.dist(x, y));
                }
            }
            clusters.push(Cluster { members, facility: fac, level: lvl, diameter });
        }
        start = end;
    }
    let size_constant = clusters
        .iter()
        .filter(|c| c.diameter > 0.0)
        .map(|c| c.members.len() as f64 * c.diameter / f)
        .fold(0.0, f64::max);
    let diameter_constant = clusters
        .iter()
        .map(|c| c.diameter / (f * 0.5f64.powi(c.level as i32)))
        .fold(0.0, f64::max);
    Ok(MpClustering { clusters, size_constant, diameter_constant })
}

/// Largest candidate set accepted by [`exact_opt_candidates`].
pub const MAX_EXACT_CANDIDATES: usize = 24;

/// Optimum over nonempty facility subsets of `candidates`, with the subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateOpt {
    pub cost: f64,
    pub facilities: Vec<usize>,
}

pub fn exact_opt_candidates<A: Coords, B: Coords>(
    points: &[A],
    f: f64,
    candidates: &[B],
) -> Result<CandidateOpt> {
    if candidates.len() > MAX_EXACT_CANDIDATES {
        return Err(Error::InvalidArgument(format!(
            "{} candidates exceed the exhaustive limit {MAX_EXACT_CANDIDATES}",
            candidates.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate facilities".into()));
    }
    if points.is_empty() {
        return Ok(CandidateOpt { cost: 0.0, facilities: vec![] });
    }
    let dm = DistTable::new(points, candidates)?;
    let k = candidates.len();
    let n = points.len();
    // suffix_min[c][p]: nearest candidate among c.. for point p.
    let mut suffix_min = vec![vec![f64::INFINITY; n]; k + 1];
    for c in (0..k).rev() {
        for p in 0..n {
            suffix_min[c][p] = suffix_min[c + 1][p].min(dm.get(c, p));
        }
    }
    let mut search = Exhaustive {
        dm: &dm,
        f,
        suffix_min: &suffix_min,
        best: f64::INFINITY,
        best_set: vec![],
        chosen: vec![],
    };
    let cur = vec![f64::INFINITY; n];
    search.go(0, &cur);
    Ok(CandidateOpt { cost: search.best, facilities: search.best_set })
}

struct DistTable {
    n: usize,
    d: Vec<f64>,
}

impl DistTable {
    fn new<A: Coords, B: Coords>(points: &[A], candidates: &[B]) -> Result<Self> {
        let pm = PointMatrix::from_points(points)?;
        let cm = PointMatrix::from_points(candidates)?;
        if pm.dim() != cm.dim() {
            return Err(Error::DimensionMismatch { expected: pm.dim(), got: cm.dim() });
        }
        let n = pm.len();
        let mut d = Vec::with_capacity(n * cm.len());
        for c in 0..cm.len() {
            d.extend((0..n).map(|p| cm.dist_to(c, pm.row(p))));
        }
        Ok(Self { n, d })
    }

    fn get(&self, c: usize, p: usize) -> f64 {
        self.d[c * self.n + p]
    }

    fn row(&self, c: usize) -> &[f64] {
        &self.d[c * self.n..(c + 1) * self.n]
    }

    fn candidates(&self) -> usize {
        self.d.len() / self.n.max(1)
    }
}

struct Exhaustive<'a> {
    dm: &'a DistTable,
    f: f64,
    suffix_min: &'a [Vec<f64>],
    best: f64,
    best_set: Vec<usize>,
    chosen: Vec<usize>,
}

impl Exhaustive<'_> {
    fn go(&mut self, c: usize, cur: &[f64]) {
        let open = self.f * self.chosen.len().max(1) as f64;
        let bound: f64 =
            open + cur.iter().zip(&self.suffix_min[c]).map(|(a, b)| a.min(*b)).sum::<f64>();
        if bound >= self.best {
            return;
        }
        if c == self.dm.candidates() {
            // bound is the exact cost here; it beat the incumbent above
            self.best = bound;
            self.best_set = self.chosen.clone();
            return;
        }
        let with: Vec<f64> = cur.iter().zip(self.dm.row(c)).map(|(a, b)| a.min(*b)).collect();
        self.chosen.push(c);
        self.go(c + 1, &with);
        self.chosen.pop();
        self.go(c + 1, cur);
    }
}

/// Lower and upper bounds on the candidate-restricted optimum for candidate
/// sets too large to enumerate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptBounds {
    /// Value of a feasible solution to the dual of the facility location LP.
    pub lower: f64,
    /// Cost of the best facility set found.
    pub upper: f64,
    pub facilities: Vec<usize>,
}

/// Bounds the candidate-restricted optimum: dual ascent on the LP relaxation
/// for the lower bound, greedy opening plus single swaps for the upper bound.
pub fn candidate_opt_bounds<A: Coords, B: Coords>(
    points: &[A],
    f: f64,
    candidates: &[B],
) -> Result<OptBounds> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate facilities".into()));
    }
    if points.is_empty() {
        return Ok(OptBounds { lower: 0.0, upper: 0.0, facilities: vec![] });
    }
    let dm = DistTable::new(points, candidates)?;
    let lower = dual_ascent(&dm, f);
    let (upper, facilities) = local_search(&dm, f);
    Ok(OptBounds { lower, upper, facilities })
}

/// Dual ascent: raise client duals `v_j` breakpoint by breakpoint while every
/// facility keeps `Σ_j max(0, v_j − c_ij) ≤ f`.
fn dual_ascent(dm: &DistTable, f: f64) -> f64 {
    let n = dm.n;
    let k = dm.candidates();
    // per client, candidate distances sorted ascending
    let sorted: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            let mut v: Vec<f64> = (0..k).map(|c| dm.get(c, p)).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let mut v: Vec<f64> = sorted.iter().map(|s| s[0]).collect();
    let mut next: Vec<usize> = vec![1; n];
    let mut slack = vec![f; k];
    let tol = 1e-12 * f.max(1.0);
    loop {
        let mut moved = false;
        for p in 0..n {
            // the next breakpoint, or unbounded growth limited by slack
            let target = if next[p] < k { sorted[p][next[p]] } else { f64::INFINITY };
            // allowed increase: min slack over facilities where v_p ≥ c_ip
            let mut allowed = target - v[p];
            for c in 0..k {
                if dm.get(c, p) <= v[p] + tol {
                    allowed = allowed.min(slack[c]);
                }
            }
            if allowed <= tol {
                continue;
            }
            for c in 0..k {
                if dm.get(c, p) <= v[p] + tol {
                    slack[c] -= allowed;
                }
            }
            v[p] += allowed;
            if next[p] < k && v[p] >= sorted[p][next[p]] - tol {
                v[p] = v[p].max(sorted[p][next[p]]);
                while next[p] < k && sorted[p][next[p]] <= v[p] + tol {
                    next[p] += 1;
                }
            }
            moved = true;
        }
        if !moved {
            break;
        }
    }
    v.iter().sum()
}

fn local_search(dm: &DistTable, f: f64) -> (f64, Vec<usize>) {
    let n = dm.n;
    let k = dm.candidates();
    let eval = |set: &[bool]| -> f64 {
        let open: Vec<usize> = (0..k).filter(|&c| set[c]).collect();
        if open.is_empty() {
            return f64::INFINITY;
        }
        let conn: f64 = (0..n)
            .map(|p| open.iter().map(|&c| dm.get(c, p)).fold(f64::INFINITY, f64::min))
            .sum();
        conn + f * open.len() as f64
    };
    // greedy additions from the best single facility
    let mut set = vec![false; k];
    let mut best = f64::INFINITY;
    loop {
        let mut step: Option<(usize, f64)> = None;
        for c in 0..k {
            if set[c] {
                continue;
            }
            set[c] = true;
            let v = eval(&set);
            set[c] = false;
            if v < best - 1e-12 && step.map_or(true, |s| v < s.1) {
                step = Some((c, v));
            }
        }
        match step {
            Some((c, v)) => {
                set[c] = true;
                best = v;
            }
            None => break,
        }
    }
    // flips and swaps until no move improves
    loop {
        let mut improved = false;
        for c in 0..k {
            set[c] = !set[c];
            let v = eval(&set);
            if v < best - 1e-12 {
                best = v;
                improved = true;
            } else {
                set[c] = !set[c];
            }
        }
        'swap: for a in 0..k {
            for b in 0..k {
                if !set[a] || set[b] {
                    continue;
                }
                set[a] = false;
                set[b] = true;
                let v = eval(&set);
                if v < best - 1e-12 {
                    best = v;
                    improved = true;
                    continue 'swap;
                }
                set[a] = true;
                set[b] = false;
            }
        }
        if !improved {
            break;
        }
    }
    (best, (0..k).filter(|&c| set[c]).collect())
}
