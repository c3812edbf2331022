//! Instance generators, stream assembly and the experiment runner that
//! compares estimators against the exact oracle.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{GridPoint, Sign, StreamUpdate, UflInstance};
use crate::error::{Error, Result};
use crate::estimators::{
    one_pass_estimate, random_order_estimate, two_pass_estimate, BucketTrace, EstimateReport,
    HashChoice, OnePassConfig, TraceEntry, TwoPassConfig,
};
use crate::oracle::{compute_rp_matrix, mp_facilities_matrix, PointMatrix};
use crate::prf::{derive, domain, PointKey};
use crate::sketch::SubsampleFn;

mod bhm;
mod gen;

pub use bhm::{
    bhm_candidate_opt, bhm_instance, BhmAnswer, BhmInstance, BhmOpt, BHM_F, MAX_EXACT_BHM_N,
    PERTURB_RADIUS,
};
pub use gen::{example_hard, example_hard_dim, ExampleHard, RClass};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    Uniform,
    /// `k` uniform centers, points within Euclidean distance `radius`.
    Clustered { k: usize, radius: f64 },
    /// Derives its own `d`, `Δ` and `f`; `n` must be a perfect square.
    ExampleHard,
    /// `n` is the matching size; derives its own `d`, `Δ` and `f`.
    Bhm { answer: BhmAnswer },
}

impl GenKind {
    pub fn name(&self) -> &'static str {
        match self {
            GenKind::Uniform => "uniform",
            GenKind::Clustered { .. } => "clustered",
            GenKind::ExampleHard => "example_hard",
            GenKind::Bhm { .. } => "bhm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Given,
    Shuffled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GenKind,
    pub n: usize,
    pub d: usize,
    pub delta: u64,
    pub f: f64,
    pub seed: u64,
    pub order: Order,
    /// Fraction of inserted points that are deleted later. The deleted
    /// points are extra uniform points, so the final set is the same as
    /// without deletions.
    pub deletion_rate: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GenKind, n: usize, d: usize, delta: u64, f: f64, seed: u64) -> Self {
        Self { kind, n, d, delta, f, seed, order: Order::Given, deletion_rate: 0.0 }
    }

    pub fn label(&self) -> String {
        format!("{}-n{}-s{}", self.kind.name(), self.n, self.seed)
    }
}

/// A generated stream with its final point set.
#[derive(Clone, Debug)]
pub struct Generated {
    pub spec: GeneratorSpec,
    pub instance: UflInstance,
    pub updates: Vec<StreamUpdate>,
    /// Final points in generation order.
    pub points: Vec<GridPoint>,
    /// Intended `r_x` class per point (hard example only).
    pub classes: Option<Vec<RClass>>,
    pub bhm: Option<BhmInstance>,
}

pub fn gen_uniform(n: usize, inst: &UflInstance, seed: u64) -> Result<Vec<GridPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, domain::GENERATOR, &[0]));
    gen::uniform_points(n, inst, &HashSet::new(), &mut rng)
}

pub fn gen_clustered(n: usize, inst: &UflInstance, k: usize, radius: f64, seed: u64) -> Result<Vec<GridPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, domain::GENERATOR, &[0]));
    gen::clustered_points(n, inst, k, radius, &mut rng)
}

pub fn gen_example_hard(n: usize, seed: u64) -> Result<ExampleHard> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, domain::GENERATOR, &[0]));
    example_hard(n, &mut rng)
}

pub fn gen_bhm_instance(n: usize, answer: BhmAnswer, seed: u64) -> Result<BhmInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, domain::GENERATOR, &[0]));
    bhm_instance(n, answer, &mut rng)
}

/// Generates the point set of `spec` and turns it into a stream.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    if !(0.0..1.0).contains(&spec.deletion_rate) {
        return Err(Error::InvalidArgument(format!(
            "deletion rate must lie in [0, 1), got {}",
            spec.deletion_rate
        )));
    }
    let (instance, points, classes, bhm) = match &spec.kind {
        GenKind::Uniform => {
            let inst = UflInstance::new(spec.d, spec.delta, spec.f)?;
            (inst, gen_uniform(spec.n, &inst, spec.seed)?, None, None)
        }
        GenKind::Clustered { k, radius } => {
            let inst = UflInstance::new(spec.d, spec.delta, spec.f)?;
            (inst, gen_clustered(spec.n, &inst, *k, *radius, spec.seed)?, None, None)
        }
        GenKind::ExampleHard => {
            let ex = gen_example_hard(spec.n, spec.seed)?;
            (ex.instance, ex.points, Some(ex.classes), None)
        }
        GenKind::Bhm { answer } => {
            let b = gen_bhm_instance(spec.n, *answer, spec.seed)?;
            (b.instance, b.points.clone(), None, Some(b))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, domain::GENERATOR, &[1]));
    let updates = assemble_stream(&points, &instance, spec.deletion_rate, spec.order, &mut rng)?;
    Ok(Generated { spec: spec.clone(), instance, updates, points, classes, bhm })
}

/// Inserts `points` plus `rate/(1−rate)·|points|` extra uniform points, and
/// deletes each extra point at a uniform position after its insertion.
pub fn assemble_stream(
    points: &[GridPoint],
    inst: &UflInstance,
    rate: f64,
    order: Order,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StreamUpdate>> {
    let extra = (rate * points.len() as f64 / (1.0 - rate)).round() as usize;
    let taken: HashSet<GridPoint> = points.iter().cloned().collect();
    let decoys = gen::uniform_points(extra, inst, &taken, rng)?;
    let mut inserts: Vec<(GridPoint, bool)> =
        points.iter().map(|p| (p.clone(), false)).chain(decoys.into_iter().map(|p| (p, true))).collect();
    if order == Order::Shuffled {
        inserts.shuffle(rng);
    }
    let total = inserts.len();
    // deletes_after[k]: deletions emitted right after insert k
    let mut deletes_after: Vec<Vec<GridPoint>> = vec![Vec::new(); total];
    for (k, (p, decoy)) in inserts.iter().enumerate() {
        if *decoy {
            deletes_after[rng.gen_range(k..total)].push(p.clone());
        }
    }
    let mut out = Vec::with_capacity(total + extra);
    for ((p, _), dels) in inserts.into_iter().zip(deletes_after) {
        out.push(StreamUpdate::insert(p));
        out.extend(dels.into_iter().map(StreamUpdate::delete));
    }
    Ok(out)
}

/// Fraction of points whose oracle `r_x` matches the intended class:
/// `r_x ≥ 0.9 f` for isolated points, `r_x ≤ 10 f / n` for dense ones.
pub fn class_agreement(points: &[GridPoint], classes: &[RClass], f: f64) -> Result<f64> {
    if points.is_empty() {
        return Ok(1.0);
    }
    let rp = compute_rp_matrix(&PointMatrix::from_points(points)?, f)?;
    let n = points.len() as f64;
    let ok = rp
        .values
        .iter()
        .zip(classes)
        .filter(|(&r, c)| match c {
            RClass::Isolated => r >= 0.9 * f && r <= f,
            RClass::Dense => r <= 10.0 * f / n,
        })
        .count();
    Ok(ok as f64 / n)
}

/// Outcome of checking the one-pass tester decisions against the oracle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TesterAudit {
    pub buckets: usize,
    /// Buckets holding a subsampled point with `r_p > 2^{-i} f` that were
    /// rejected.
    pub missed: usize,
    /// Accepted buckets holding a subsampled point with `r_p ≤ ε_i / 2`.
    pub unsound: usize,
    /// Accepted buckets holding a subsampled point with
    /// `r_p ≤ 2^{-(i+α)} f`, `α = ⌈log2 Γ⌉`.
    pub unsound_alpha: usize,
}

impl TesterAudit {
    pub fn add(&mut self, other: &TesterAudit) {
        self.buckets += other.buckets;
        self.missed += other.missed;
        self.unsound += other.unsound;
        self.unsound_alpha += other.unsound_alpha;
    }
}

/// Checks every bucket in the trace of a one-pass report. `points` is the
/// final point set and `hash` the choice the run used.
pub fn audit_tester(report: &EstimateReport, points: &[GridPoint], hash: &HashChoice) -> Result<TesterAudit> {
    let inst = &report.instance;
    let mut audit = TesterAudit::default();
    let buckets: Vec<&BucketTrace> = report
        .trace
        .iter()
        .filter_map(|t| match t {
            TraceEntry::Bucket(b) => Some(b),
            TraceEntry::Sample(_) => None,
        })
        .collect();
    if buckets.is_empty() || points.is_empty() {
        return Ok(audit);
    }
    let (mut hashes, gamma) = hash.build(inst, report.seed)?;
    let alpha = gamma.effective.log2().ceil() as i32;
    let rp = compute_rp_matrix(&PointMatrix::from_points(points)?, inst.f)?;
    let sub = SubsampleFn::new(derive(report.seed, domain::SUBSAMPLE, &[]));
    let prf = sub.prf();
    let reach: Vec<usize> =
        points.iter().map(|p| sub.max_level_with(&prf, 0, PointKey::of(p)) as usize).collect();
    for b in buckets {
        audit.buckets += 1;
        let i = b.level;
        let mut members = Vec::new();
        for (k, p) in points.iter().enumerate() {
            if reach[k] >= i && hashes.bucket(p, i)?.words == b.label {
                members.push(rp.values[k]);
            }
        }
        let top = 0.5f64.powi(i as i32) * inst.f;
        if !b.accepted && b.n_a != 0 && members.iter().any(|&r| r > top) {
            audit.missed += 1;
        }
        if b.accepted {
            let eps = hashes.eps(i);
            if members.iter().any(|&r| r <= eps / 2.0) {
                audit.unsound += 1;
            }
            if members.iter().any(|&r| r <= top * 0.5f64.powi(alpha)) {
                audit.unsound_alpha += 1;
            }
        }
    }
    Ok(audit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Exact `Σ r_p` from the oracle.
    Offline,
    TwoPass,
    RandomOrder,
    OnePass,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Offline => "offline",
            Algo::TwoPass => "two-pass",
            Algo::RandomOrder => "random-order",
            Algo::OnePass => "one-pass",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algos: Vec<Algo>,
    pub repetitions: usize,
    pub two_pass: TwoPassConfig,
    pub one_pass: OnePassConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algos: vec![Algo::Offline, Algo::TwoPass],
            repetitions: 5,
            two_pass: TwoPassConfig::default(),
            one_pass: OnePassConfig::default(),
        }
    }
}

/// One (instance, algorithm, repetition) measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub instance: String,
    pub algo: Algo,
    pub rep: usize,
    pub seed: u64,
    pub n: usize,
    pub estimate: Option<f64>,
    pub sum_rp: f64,
    pub mp_cost: f64,
    /// `estimate / Σ r_p`.
    pub ratio: Option<f64>,
    pub space_cells: u64,
    pub space_bytes: u64,
    pub unreliable: bool,
    pub fallback: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub instance: String,
    pub algo: Algo,
    pub runs: usize,
    pub errors: usize,
    pub unreliable: usize,
    /// Ratio quantiles at 0, 0.1, 0.25, 0.5, 0.75, 0.9 and 1.
    pub ratio_quantiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<ExperimentSummary>,
}

/// Wall-clock milliseconds per row, kept apart so that tables compare
/// byte for byte.
pub type Timings = Vec<f64>;

pub const QUANTILES: [f64; 7] = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];

/// Linear interpolation between order statistics of `sorted`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Seed of repetition `rep` of an experiment on `spec`.
pub fn rep_seed(spec: &GeneratorSpec, rep: usize) -> u64 {
    derive(spec.seed, domain::ESTIMATOR, &[rep as u64])
}

fn run_one(g: &Generated, algo: Algo, rep: usize, cfg: &ExperimentConfig) -> Result<EstimateReport> {
    let seed = rep_seed(&g.spec, rep);
    match algo {
        Algo::Offline => Err(Error::Unsupported("offline runs are not estimator runs".into())),
        Algo::TwoPass => two_pass_estimate(&g.updates, &g.instance, seed, &cfg.two_pass),
        Algo::RandomOrder => {
            if g.updates.iter().any(|u| u.sign == Sign::Delete) {
                return random_order_estimate(&g.updates, &g.instance, seed, &cfg.two_pass);
            }
            // a fresh arrival order per repetition
            let mut ups = g.updates.clone();
            ups.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(seed, domain::GENERATOR, &[2])));
            random_order_estimate(&ups, &g.instance, seed, &cfg.two_pass)
        }
        Algo::OnePass => one_pass_estimate(&g.updates, &g.instance, seed, &cfg.one_pass),
    }
}

/// Runs every algorithm `repetitions` times on every instance.
pub fn run_experiment(specs: &[GeneratorSpec], cfg: &ExperimentConfig) -> Result<(ExperimentTable, Timings)> {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for spec in specs {
        let g = generate(spec)?;
        let (sum_rp, mp_cost) = if g.points.is_empty() {
            (0.0, 0.0)
        } else {
            let m = PointMatrix::from_points(&g.points)?;
            let rp = compute_rp_matrix(&m, g.instance.f)?;
            (rp.sum(), mp_facilities_matrix(&m, g.instance.f, &rp)?.cost)
        };
        let label = spec.label();
        for &algo in &cfg.algos {
            let reps = if algo == Algo::Offline { 1 } else { cfg.repetitions };
            for rep in 0..reps {
                let start = Instant::now();
                let mut row = ExperimentRow {
                    instance: label.clone(),
                    algo,
                    rep,
                    seed: rep_seed(spec, rep),
                    n: g.points.len(),
                    estimate: None,
                    sum_rp,
                    mp_cost,
                    ratio: None,
                    space_cells: 0,
                    space_bytes: 0,
                    unreliable: false,
                    fallback: false,
                    error: None,
                };
                if algo == Algo::Offline {
                    row.estimate = Some(sum_rp);
                } else {
                    match run_one(&g, algo, rep, cfg) {
                        Ok(r) => {
                            row.estimate = Some(r.estimate);
                            row.space_cells = r.space_cells;
                            row.space_bytes = 8 * r.space_cells;
                            row.unreliable = r.unreliable;
                            row.fallback = r.fallback;
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                }
                row.ratio = row.estimate.filter(|_| sum_rp > 0.0).map(|e| e / sum_rp);
                timings.push(start.elapsed().as_secs_f64() * 1e3);
                rows.push(row);
            }
        }
    }
    let summary = summarize(&rows);
    Ok((ExperimentTable { rows, summary }, timings))
}

fn summarize(rows: &[ExperimentRow]) -> Vec<ExperimentSummary> {
    let mut out: Vec<ExperimentSummary> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].instance, rows[start].algo);
        let end = start + rows[start..].iter().take_while(|r| (&r.instance, r.algo) == key).count();
        let group = &rows[start..end];
        let mut ratios: Vec<f64> = group.iter().filter_map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        out.push(ExperimentSummary {
            instance: key.0.clone(),
            algo: key.1,
            runs: group.len(),
            errors: group.iter().filter(|r| r.error.is_some()).count(),
            unreliable: group.iter().filter(|r| r.unreliable).count(),
            ratio_quantiles: QUANTILES.iter().map(|&q| quantile(&ratios, q)).collect(),
        });
        start = end;
    }
    out
}

/// The table as CSV, one line per row.
pub fn to_csv(table: &ExperimentTable) -> String {
    let mut s = String::from(
        "instance,algo,rep,seed,n,estimate,sum_rp,mp_cost,ratio,space_cells,space_bytes,unreliable,fallback,error\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &table.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.instance,
            r.algo.name(),
            r.rep,
            r.seed,
            r.n,
            opt(r.estimate),
            r.sum_rp,
            r.mp_cost,
            opt(r.ratio),
            r.space_cells,
            r.space_bytes,
            r.unreliable,
            r.fallback,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{final_points, validate_stream};

    fn uniform(n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec::new(GenKind::Uniform, n, 2, 1024, 50.0, seed)
    }

    #[test]
    fn empty_uniform() {
        let g = generate(&uniform(0, 1)).unwrap();
        assert!(g.updates.is_empty());
    }

    #[test]
    fn deletions_keep_final_set() {
        let mut spec = uniform(100, 2);
        spec.deletion_rate = 0.2;
        spec.order = Order::Shuffled;
        let g = generate(&spec).unwrap();
        assert!(validate_stream(&g.updates).valid);
        let dels = g.updates.iter().filter(|u| u.sign == crate::core::Sign::Delete).count();
        assert_eq!(dels, 25);
        let mut want = g.points.clone();
        want.sort();
        assert_eq!(final_points(&g.updates), want);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec {
            kind: GenKind::Clustered { k: 3, radius: 20.0 },
            order: Order::Shuffled,
            deletion_rate: 0.3,
            ..uniform(60, 9)
        };
        assert_eq!(generate(&spec).unwrap().updates, generate(&spec).unwrap().updates);
    }

    #[test]
    fn offline_ratio_is_one() {
        let cfg = ExperimentConfig { algos: vec![Algo::Offline], ..Default::default() };
        let (t, times) = run_experiment(&[uniform(30, 4)], &cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(times.len(), 1);
        assert_eq!(t.rows[0].ratio, Some(1.0));
        assert_eq!(t.summary[0].ratio_quantiles, vec![1.0; 7]);
    }

    #[test]
    fn random_order_error_propagates() {
        let mut spec = uniform(20, 5);
        spec.deletion_rate = 0.2;
        let cfg = ExperimentConfig { algos: vec![Algo::RandomOrder], repetitions: 2, ..Default::default() };
        let (t, _) = run_experiment(&[spec], &cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.error.is_some() && r.ratio.is_none()));
        assert_eq!(t.summary[0].errors, 2);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }
}
