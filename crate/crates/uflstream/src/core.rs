//! Domain types, Euclidean geometry and the text stream format.
//!
//! A stream file starts with a header `# ufl d=<d> delta=<Δ> f=<f>` followed
//! by one update per line: `+` or `-` and then `d` integer coordinates.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest squared distance that is still exact in an `f64` accumulator.
const EXACT_SQ_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

/// Parameters of a facility location instance over the grid `[Δ]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UflInstance {
    pub d: usize,
    pub delta: u64,
    pub f: f64,
}

impl UflInstance {
    pub fn new(d: usize, delta: u64, f: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInstance("dimension must be positive".into()));
        }
        if delta < 2 || !delta.is_power_of_two() {
            return Err(Error::InvalidInstance(format!(
                "delta must be a power of two >= 2, got {delta}"
            )));
        }
        let span = (delta - 1) as f64;
        if d as f64 * span * span >= EXACT_SQ_LIMIT {
            return Err(Error::InvalidInstance(format!(
                "d={d}, delta={delta}: squared distances would not be exact"
            )));
        }
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidInstance(format!("opening cost must be positive, got {f}")));
        }
        Ok(Self { d, delta, f })
    }

    pub fn log_delta(&self) -> usize {
        self.delta.trailing_zeros() as usize
    }

    /// `L = d · log2 Δ`.
    pub fn levels(&self) -> usize {
        self.d * self.log_delta()
    }

    pub fn header(&self) -> String {
        format!("# ufl d={} delta={} f={}", self.d, self.delta, self.f)
    }

    pub fn parse_header(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse { line: 1, msg: msg.to_string() };
        let rest = line
            .trim()
            .strip_prefix('#')
            .map(str::trim_start)
            .and_then(|s| s.strip_prefix("ufl"))
            .ok_or_else(|| bad("expected header `# ufl d=<d> delta=<delta> f=<f>`"))?;
        let (mut d, mut delta, mut f) = (None, None, None);
        for tok in rest.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| bad("malformed header field"))?;
            match k {
                "d" => d = Some(v.parse::<usize>().map_err(|_| bad("bad d"))?),
                "delta" => delta = Some(v.parse::<u64>().map_err(|_| bad("bad delta"))?),
                "f" => f = Some(v.parse::<f64>().map_err(|_| bad("bad f"))?),
                _ => return Err(bad(&format!("unknown header field `{k}`"))),
            }
        }
        match (d, delta, f) {
            (Some(d), Some(delta), Some(f)) => Self::new(d, delta, f),
            _ => Err(bad("header needs d, delta and f")),
        }
    }
}

/// Anything with real coordinates.
pub trait Coords {
    fn dim(&self) -> usize;
    fn at(&self, i: usize) -> f64;
}

/// A point of the grid `[Δ]^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint(Vec<i64>);

impl GridPoint {
    /// Builds a point and checks it against the instance bounds.
    pub fn new(coords: Vec<i64>, inst: &UflInstance) -> Result<Self> {
        if coords.len() != inst.d {
            return Err(Error::DimensionMismatch { expected: inst.d, got: coords.len() });
        }
        if let Some(c) = coords.iter().find(|&&c| c < 1 || c as u64 > inst.delta) {
            return Err(Error::InvalidArgument(format!(
                "coordinate {c} outside [1, {}]",
                inst.delta
            )));
        }
        Ok(Self(coords))
    }

    /// Builds a point without bound checks; callers own the invariant.
    pub fn from_coords(coords: Vec<i64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn to_real(&self) -> RealPoint {
        RealPoint(self.0.iter().map(|&c| c as f64).collect())
    }
}

impl Coords for GridPoint {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn at(&self, i: usize) -> f64 {
        self.0[i] as f64
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A point of `R^d`, used for facilities and real-valued instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealPoint(pub Vec<f64>);

impl RealPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl Coords for RealPoint {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn at(&self, i: usize) -> f64 {
        self.0[i]
    }
}

impl Coords for [f64] {
    fn dim(&self) -> usize {
        self.len()
    }
    fn at(&self, i: usize) -> f64 {
        self[i]
    }
}

/// Euclidean distance between two points of equal dimension.
pub fn distance<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(sq_dist(a, b).sqrt())
}

pub(crate) fn sq_dist<A, B>(a: &A, b: &B) -> f64
where
    A: Coords + ?Sized,
    B: Coords + ?Sized,
{
    (0..a.dim()).map(|i| {
        let t = a.at(i) - b.at(i);
        t * t
    }).sum()
}

/// Exact squared distance between grid points.
pub(crate) fn grid_sq_dist(a: &GridPoint, b: &GridPoint) -> i64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Insert,
    Delete,
}

impl Sign {
    pub fn delta(self) -> i64 {
        match self {
            Sign::Insert => 1,
            Sign::Delete => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamUpdate {
    pub sign: Sign,
    pub point: GridPoint,
}

impl StreamUpdate {
    pub fn insert(point: GridPoint) -> Self {
        Self { sign: Sign::Insert, point }
    }
    pub fn delete(point: GridPoint) -> Self {
        Self { sign: Sign::Delete, point }
    }
}

/// Parses one update line; `line_no` is only used in error messages.
pub fn parse_update(line: &str, inst: &UflInstance, line_no: usize) -> Result<StreamUpdate> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let mut toks = line.split_whitespace();
    let sign = match toks.next() {
        Some("+") => Sign::Insert,
        Some("-") => Sign::Delete,
        Some(t) => return Err(err(format!("expected `+` or `-`, got `{t}`"))),
        None => return Err(err("empty line".into())),
    };
    let coords = toks
        .map(|t| t.parse::<i64>().map_err(|_| err(format!("bad coordinate `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    let point = GridPoint::new(coords, inst).map_err(|e| err(e.to_string()))?;
    Ok(StreamUpdate { sign, point })
}

pub fn format_update(u: &StreamUpdate) -> String {
    let mut s = String::with_capacity(4 * u.point.0.len() + 2);
    s.push(match u.sign {
        Sign::Insert => '+',
        Sign::Delete => '-',
    });
    for c in &u.point.0 {
        s.push(' ');
        s.push_str(&c.to_string());
    }
    s
}

/// A fully materialized stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub instance: UflInstance,
    pub updates: Vec<StreamUpdate>,
}

impl Stream {
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(Error::Parse { line: 1, msg: "empty stream file".into() })??;
        let instance = UflInstance::parse_header(&header)?;
        let mut updates = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            updates.push(parse_update(t, &instance, k + 2)?);
        }
        Ok(Self { instance, updates })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.instance.header())?;
        for u in &self.updates {
            writeln!(w, "{}", format_update(u))?;
        }
        Ok(())
    }

    /// Net point set after all updates, sorted.
    pub fn final_points(&self) -> Vec<GridPoint> {
        final_points(&self.updates)
    }
}

/// Outcome of [`validate_stream`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCheck {
    pub valid: bool,
    /// 1-based index of the first update that leaves `{0,1}`.
    pub first_violation: Option<usize>,
    pub final_size: usize,
}

pub fn validate_stream(updates: &[StreamUpdate]) -> StreamCheck {
    let mut mult: HashMap<&GridPoint, i64> = HashMap::new();
    let mut live = 0usize;
    for (k, u) in updates.iter().enumerate() {
        let m = mult.entry(&u.point).or_insert(0);
        *m += u.sign.delta();
        if !(0..=1).contains(m) {
            return StreamCheck { valid: false, first_violation: Some(k + 1), final_size: live };
        }
        if u.sign == Sign::Insert {
            live += 1;
        } else {
            live -= 1;
        }
    }
    StreamCheck { valid: true, first_violation: None, final_size: live }
}

/// Errors with the violating index unless the stream is valid.
pub fn ensure_valid(updates: &[StreamUpdate]) -> Result<()> {
    match validate_stream(updates).first_violation {
        None => Ok(()),
        Some(index) => Err(Error::InvalidStream { index }),
    }
}

/// Net point set of a stream (points with multiplicity 1), sorted.
pub fn final_points(updates: &[StreamUpdate]) -> Vec<GridPoint> {
    let mut mult: HashMap<&GridPoint, i64> = HashMap::new();
    for u in updates {
        *mult.entry(&u.point).or_insert(0) += u.sign.delta();
    }
    let mut pts: Vec<GridPoint> =
        mult.into_iter().filter(|&(_, m)| m > 0).map(|(p, _)| p.clone()).collect();
    pts.sort();
    pts
}
