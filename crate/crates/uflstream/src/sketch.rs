//! Linear sketches over dynamic streams: ℓ0 samplers (plain, with data
//! fields, two-level), seeded level subsampling and distinct counting.
//!
//! All sketch cells live in the prime field `F_p`, `p = 2^61 − 1`, so every
//! state is an exact linear function of the underlying frequency vector.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prf::{derive, domain, keyed_mix, mix64, PointKey, Prf};

pub mod field {
    //! Arithmetic modulo the Mersenne prime `2^61 − 1`.

    pub const P: u64 = (1 << 61) - 1;

    #[inline]
    pub fn add(a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= P {
            s - P
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + P - b
        }
    }

    #[inline]
    pub fn neg(a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            P - a
        }
    }

    #[inline]
    pub fn mul(a: u64, b: u64) -> u64 {
        let x = a as u128 * b as u128;
        let r = (x as u64 & P) + (x >> 61) as u64;
        let r = (r & P) + (r >> 61);
        if r >= P {
            r - P
        } else {
            r
        }
    }

    pub fn pow(mut b: u64, mut e: u64) -> u64 {
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    }

    pub fn inv(a: u64) -> u64 {
        pow(a, P - 2)
    }

    pub fn from_i64(v: i64) -> u64 {
        let m = v.unsigned_abs() % P;
        if v < 0 {
            neg(m)
        } else {
            m
        }
    }

    /// Centered representative in `(−p/2, p/2)`.
    pub fn to_i64(x: u64) -> i64 {
        if x > P / 2 {
            x as i64 - P as i64
        } else {
            x as i64
        }
    }

    /// Reduces an arbitrary word into the field.
    pub fn reduce(x: u64) -> u64 {
        let r = (x & P) + (x >> 61);
        if r >= P {
            r - P
        } else {
            r
        }
    }
}

/// Global fingerprint of a label vector, in `[0, p)`.
pub fn fingerprint(words: &[i64]) -> u64 {
    fingerprint_of_key(PointKey::of_words(words))
}

pub fn fingerprint_of_key(k: PointKey) -> u64 {
    field::reduce(k.0 ^ k.1.rotate_left(29))
}

/// Sketch item: label words plus their cached fingerprint.
///
/// Label words must lie in `(−2^60, 2^60)` to be recoverable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub words: Vec<i64>,
    pub fp: u64,
}

impl Label {
    pub fn new(words: Vec<i64>) -> Self {
        let fp = fingerprint(&words);
        Self { words, fp }
    }

    /// Label of an opaque 128-bit key, stored as two 59-bit words.
    pub fn from_digest(k: PointKey) -> Self {
        Self::new(vec![(k.0 >> 5) as i64, (k.1 >> 5) as i64])
    }
}

/// Result of a sampling query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome<T> {
    Empty,
    Fail,
    Sample(T),
}

impl<T> Outcome<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Outcome<U> {
        match self {
            Outcome::Empty => Outcome::Empty,
            Outcome::Fail => Outcome::Fail,
            Outcome::Sample(t) => Outcome::Sample(f(t)),
        }
    }

    pub fn sample(self) -> Option<T> {
        match self {
            Outcome::Sample(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct L0Params {
    /// Independent hash rows per level.
    pub rows: usize,
    /// Cells per row.
    pub cells: usize,
    /// Sampling levels.
    pub levels: usize,
    /// Independent repetitions; the first successful one answers.
    pub reps: usize,
    pub label_len: usize,
}

/// Universe bits of the fingerprint space.
pub const UNIVERSE_BITS: usize = 61;

impl L0Params {
    pub fn new(label_len: usize) -> Self {
        Self { rows: 3, cells: 16, levels: UNIVERSE_BITS + 2, reps: 2, label_len }
    }

    fn width(&self) -> usize {
        self.rows * self.cells
    }
}

/// Per-repetition hash keys, derived from the sketch seed.
#[derive(Clone, Debug)]
struct RepKeys {
    level: u64,
    rank: u64,
    rows: Vec<u64>,
    z: u64,
    zpow: Box<[[u64; 16]; 16]>,
}

impl RepKeys {
    fn new(seed: u64, rep: usize, rows: usize) -> Self {
        let prf = Prf::new(seed, domain::SKETCH);
        let r = rep as u64;
        let z = 2 + prf.eval(&[r, 0]) % (field::P - 3);
        let mut zpow = Box::new([[0u64; 16]; 16]);
        let mut base = z;
        for w in zpow.iter_mut() {
            w[0] = 1;
            for v in 1..16 {
                w[v] = field::mul(w[v - 1], base);
            }
            base = field::mul(w[15], base);
        }
        Self {
            level: prf.eval(&[r, 1]),
            rank: prf.eval(&[r, 2]),
            rows: (0..rows as u64).map(|k| prf.eval(&[r, 3, k])).collect(),
            z,
            zpow,
        }
    }

    #[inline]
    fn z_to(&self, e: u64) -> u64 {
        let mut acc = self.zpow[0][(e & 15) as usize];
        for w in 1..16 {
            let nib = ((e >> (4 * w)) & 15) as usize;
            if nib != 0 {
                acc = field::mul(acc, self.zpow[w][nib]);
            }
        }
        acc
    }

    #[inline]
    fn level_of(&self, fp: u64, levels: usize) -> usize {
        (keyed_mix(self.level, fp).trailing_zeros() as usize).min(levels - 1)
    }

    #[inline]
    fn cell_of(&self, fp: u64, row: usize, cells: usize) -> usize {
        row * cells + (keyed_mix(self.rows[row], fp) % cells as u64) as usize
    }

    fn rank_of(&self, fp: u64) -> u64 {
        keyed_mix(self.rank, fp)
    }
}

/// Auxiliary per-item content summed alongside the recovery fields.
pub trait Payload: Clone + Debug + PartialEq + Serialize + DeserializeOwned {
    fn zero(width: usize) -> Self;
    fn add_signed(&mut self, other: &Self, negate: bool);
    fn is_zero(&self) -> bool;
}

/// Fixed-width field vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense(pub Vec<u64>);

impl Payload for Dense {
    fn zero(width: usize) -> Self {
        Dense(vec![0; width])
    }

    fn add_signed(&mut self, other: &Self, negate: bool) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = if negate { field::sub(*a, *b) } else { field::add(*a, *b) };
        }
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }
}

/// Sparse field vector stored as fixed-width blocks of consecutive keys.
/// Key `k` lives at offset `k % width` of block `k / width`; all-zero blocks
/// are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sparse {
    width: u32,
    blocks: BTreeMap<u32, Vec<u64>>,
}

impl Default for Sparse {
    fn default() -> Self {
        Self::new(1)
    }
}

impl Sparse {
    pub fn new(width: usize) -> Self {
        Self { width: width.max(1) as u32, blocks: BTreeMap::new() }
    }

    /// Builds from unsorted entries, adding up repeated keys.
    pub fn from_entries(width: usize, e: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut s = Self::new(width);
        let w = s.width;
        for (k, v) in e {
            let b = s.blocks.entry(k / w).or_insert_with(|| vec![0; w as usize]);
            let slot = &mut b[(k % w) as usize];
            *slot = field::add(*slot, v);
        }
        s.blocks.retain(|_, b| b.iter().any(|&v| v != 0));
        s
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn get(&self, key: u32) -> u64 {
        self.blocks.get(&(key / self.width)).map_or(0, |b| b[(key % self.width) as usize])
    }

    /// Nonzero entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        let w = self.width;
        self.blocks
            .iter()
            .flat_map(move |(&bk, b)| b.iter().enumerate().map(move |(o, &v)| (bk * w + o as u32, v)))
            .filter(|&(_, v)| v != 0)
    }

    /// Whether the layout is canonical: every block has the stated width
    /// and at least one nonzero entry.
    pub fn is_well_formed(&self) -> bool {
        self.width > 0
            && self.blocks.values().all(|b| b.len() == self.width as usize && b.iter().any(|&v| v != 0))
    }
}

impl Payload for Sparse {
    fn zero(width: usize) -> Self {
        Self::new(width)
    }

    fn add_signed(&mut self, other: &Self, negate: bool) {
        debug_assert_eq!(self.width, other.width);
        let w = self.width as usize;
        for (&bk, ob) in &other.blocks {
            let b = self.blocks.entry(bk).or_insert_with(|| vec![0; w]);
            for (a, &v) in b.iter_mut().zip(ob) {
                *a = if negate { field::sub(*a, v) } else { field::add(*a, v) };
            }
            if b.iter().all(|&v| v == 0) {
                self.blocks.remove(&bk);
            }
        }
    }

    fn is_zero(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Cell<P> {
    /// `Σw`, `Σw·fp`, `Σw·z^fp`.
    s: [u64; 3],
    /// `Σw·label_k`.
    labels: Vec<u64>,
    payload: P,
}

impl<P: Payload> Cell<P> {
    fn zero(label_len: usize, width: usize) -> Self {
        Self { s: [0; 3], labels: vec![0; label_len], payload: P::zero(width) }
    }

    fn is_zero(&self) -> bool {
        self.s == [0; 3] && self.labels.iter().all(|&v| v == 0) && self.payload.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Level<P> {
    cells: Vec<Cell<P>>,
    nonzero: u32,
}

/// One item as applied to the cells.
struct ItemDelta<'a, P> {
    label: &'a Label,
    w: u64,
    payload: &'a P,
    negate_payload: bool,
}

/// Sampler core shared by the plain, data-field and two-level samplers.
#[derive(Clone, Debug)]
pub struct L0Core<P> {
    params: L0Params,
    seed: u64,
    payload_width: usize,
    keys: Vec<RepKeys>,
    reps: Vec<Vec<Option<Level<P>>>>,
}

#[derive(Serialize, Deserialize)]
struct L0Raw<P> {
    params: L0Params,
    seed: u64,
    payload_width: usize,
    reps: Vec<Vec<Option<Level<P>>>>,
}

/// A fully recovered item.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovered<P> {
    pub label: Label,
    pub payload: P,
}

impl<P: Payload> L0Core<P> {
    pub fn new(params: L0Params, payload_width: usize, seed: u64) -> Self {
        let keys = (0..params.reps).map(|r| RepKeys::new(seed, r, params.rows)).collect();
        let reps = vec![vec![None; params.levels]; params.reps];
        Self { params, seed, payload_width, keys, reps }
    }

    pub fn params(&self) -> &L0Params {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn apply(&mut self, item: ItemDelta<'_, P>, negate: bool) {
        let fp = item.label.fp;
        let w = if negate { field::neg(item.w) } else { item.w };
        let neg_payload = negate ^ item.negate_payload;
        let label_f: Vec<u64> = item.label.words.iter().map(|&v| field::from_i64(v)).collect();
        let (label_len, width) = (self.params.label_len, self.payload_width);
        let wfp = field::mul(w, fp);
        for (keys, levels) in self.keys.iter().zip(self.reps.iter_mut()) {
            let lvl = keys.level_of(fp, self.params.levels);
            let wz = field::mul(w, keys.z_to(fp));
            let level = levels[lvl].get_or_insert_with(|| Level {
                cells: vec![Cell::zero(label_len, width); self.params.width()],
                nonzero: 0,
            });
            for row in 0..self.params.rows {
                let c = &mut level.cells[keys.cell_of(fp, row, self.params.cells)];
                let was = !c.is_zero();
                c.s[0] = field::add(c.s[0], w);
                c.s[1] = field::add(c.s[1], wfp);
                c.s[2] = field::add(c.s[2], wz);
                for (acc, &l) in c.labels.iter_mut().zip(&label_f) {
                    *acc = field::add(*acc, field::mul(w, l));
                }
                c.payload.add_signed(item.payload, neg_payload);
                let now = !c.is_zero();
                match (was, now) {
                    (false, true) => level.nonzero += 1,
                    (true, false) => level.nonzero -= 1,
                    _ => {}
                }
            }
            if level.nonzero == 0 {
                levels[lvl] = None;
            }
        }
    }

    /// Adds `w` copies of the item's recovery fields and `payload` once.
    pub fn update(&mut self, label: &Label, w: u64, payload: &P) {
        self.apply(ItemDelta { label, w, payload, negate_payload: false }, false);
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.params != other.params || self.seed != other.seed || self.payload_width != other.payload_width {
            return Err(Error::InvalidArgument("merging sketches with different seeds or shapes".into()));
        }
        for (mine, theirs) in self.reps.iter_mut().zip(&other.reps) {
            for (slot, lv) in mine.iter_mut().zip(theirs) {
                let Some(lv) = lv else { continue };
                let level = slot.get_or_insert_with(|| Level {
                    cells: vec![Cell::zero(self.params.label_len, self.payload_width); self.params.width()],
                    nonzero: 0,
                });
                level.nonzero = 0;
                for (a, b) in level.cells.iter_mut().zip(&lv.cells) {
                    for k in 0..3 {
                        a.s[k] = field::add(a.s[k], b.s[k]);
                    }
                    for (x, y) in a.labels.iter_mut().zip(&b.labels) {
                        *x = field::add(*x, *y);
                    }
                    a.payload.add_signed(&b.payload, false);
                    level.nonzero += !a.is_zero() as u32;
                }
                if level.nonzero == 0 {
                    *slot = None;
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.reps.iter().all(|r| r.iter().all(Option::is_none))
    }

    /// Uniform sample from the support, or `Empty` / `Fail`.
    pub fn query(&self) -> Outcome<Recovered<P>> {
        if self.is_empty() {
            return Outcome::Empty;
        }
        for rep in 0..self.reps.len() {
            if let Some(r) = self.query_rep(rep) {
                return Outcome::Sample(r);
            }
        }
        Outcome::Fail
    }

    /// Items recovered from the deepest nonempty level of repetition `rep`.
    pub fn decode_deepest(&self, rep: usize) -> Option<Vec<Recovered<P>>> {
        let keys = &self.keys[rep];
        let (lvl, level) = self.reps[rep].iter().enumerate().rev().find_map(|(i, l)| l.as_ref().map(|l| (i, l)))?;
        let mut level = level.clone();
        let mut out = Vec::new();
        let mut queue: Vec<usize> = (0..level.cells.len()).rev().collect();
        while let Some(ci) = queue.pop() {
            let Some(item) = self.pure(keys, lvl, ci, &level.cells[ci]) else { continue };
            let w = level.cells[ci].s[0];
            let label_f: Vec<u64> = item.label.words.iter().map(|&v| field::from_i64(v)).collect();
            let wz = field::mul(w, keys.z_to(item.label.fp));
            let wfp = field::mul(w, item.label.fp);
            for row in 0..self.params.rows {
                let cj = keys.cell_of(item.label.fp, row, self.params.cells);
                let c = &mut level.cells[cj];
                c.s[0] = field::sub(c.s[0], w);
                c.s[1] = field::sub(c.s[1], wfp);
                c.s[2] = field::sub(c.s[2], wz);
                for (acc, &l) in c.labels.iter_mut().zip(&label_f) {
                    *acc = field::sub(*acc, field::mul(w, l));
                }
                c.payload.add_signed(&item.payload, true);
                if cj != ci {
                    queue.push(cj);
                }
            }
            out.push(item);
        }
        level.cells.iter().all(Cell::is_zero).then_some(out)
    }

    fn query_rep(&self, rep: usize) -> Option<Recovered<P>> {
        let keys = &self.keys[rep];
        let items = self.decode_deepest(rep)?;
        items.into_iter().min_by_key(|it| keys.rank_of(it.label.fp))
    }

    /// Returns the item if `cell` holds exactly one item.
    fn pure(&self, keys: &RepKeys, lvl: usize, ci: usize, cell: &Cell<P>) -> Option<Recovered<P>> {
        let s0 = cell.s[0];
        if s0 == 0 {
            return None;
        }
        let inv = field::inv(s0);
        let fp = field::mul(cell.s[1], inv);
        if cell.s[2] != field::mul(s0, keys.z_to(fp)) {
            return None;
        }
        if keys.level_of(fp, self.params.levels) != lvl {
            return None;
        }
        let row = ci / self.params.cells;
        if keys.cell_of(fp, row, self.params.cells) != ci {
            return None;
        }
        let words: Vec<i64> = cell.labels.iter().map(|&v| field::to_i64(field::mul(v, inv))).collect();
        if fingerprint(&words) != fp {
            return None;
        }
        Some(Recovered { label: Label { words, fp }, payload: cell.payload.clone() })
    }

    /// Level count and cell count of live state, for space reporting.
    pub fn live_cells(&self) -> usize {
        self.reps.iter().flatten().flatten().map(|l| l.cells.len()).sum()
    }

    fn raw(&self) -> L0Raw<P> {
        L0Raw { params: self.params, seed: self.seed, payload_width: self.payload_width, reps: self.reps.clone() }
    }

    fn from_raw(raw: L0Raw<P>) -> Result<Self> {
        let mut s = Self::new(raw.params, raw.payload_width, raw.seed);
        if raw.reps.len() != raw.params.reps || raw.reps.iter().any(|r| r.len() != raw.params.levels) {
            return Err(Error::Decode("sketch shape does not match its parameters".into()));
        }
        s.reps = raw.reps;
        Ok(s)
    }
}

impl<P: Payload> PartialEq for L0Core<P> {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.seed == other.seed
            && self.payload_width == other.payload_width
            && self.reps == other.reps
    }
}

/// Hash keys of one repetition without the checksum power table; enough to
/// place items.
struct PlaceKeys {
    level: u64,
    rank: u64,
    rows: Vec<u64>,
}

impl PlaceKeys {
    fn new(seed: u64, rep: usize, rows: usize) -> Self {
        let prf = Prf::new(seed, domain::SKETCH);
        let r = rep as u64;
        Self {
            level: prf.eval(&[r, 1]),
            rank: prf.eval(&[r, 2]),
            rows: (0..rows as u64).map(|k| prf.eval(&[r, 3, k])).collect(),
        }
    }
}

/// Outcome that an [`L0Core`] with `params` and `seed` returns when its
/// support is exactly the items with fingerprints `fps`, given as an index
/// into `fps`.
///
/// Agrees with a materialized sketch except on checksum collisions, whose
/// probability is about `2^{-61}` per cell.
pub fn simulate_query(params: &L0Params, seed: u64, fps: &[u64]) -> Outcome<usize> {
    if fps.is_empty() {
        return Outcome::Empty;
    }
    let rows = params.rows;
    let mut count = vec![0u32; params.width()];
    let mut xor = vec![0usize; params.width()];
    let mut lv = vec![0usize; fps.len()];
    let mut items = Vec::new();
    let mut queue = Vec::new();
    let mut cells = vec![0usize; rows];
    for rep in 0..params.reps {
        let k = PlaceKeys::new(seed, rep, rows);
        for (l, &fp) in lv.iter_mut().zip(fps) {
            *l = (keyed_mix(k.level, fp).trailing_zeros() as usize).min(params.levels - 1);
        }
        let top = *lv.iter().max().expect("nonempty");
        items.clear();
        items.extend((0..fps.len()).filter(|&x| lv[x] == top));
        count.iter_mut().for_each(|c| *c = 0);
        xor.iter_mut().for_each(|c| *c = 0);
        let cells_of = |x: usize, out: &mut [usize]| {
            for (row, c) in out.iter_mut().enumerate() {
                *c = row * params.cells + (keyed_mix(k.rows[row], fps[x]) % params.cells as u64) as usize;
            }
        };
        for &x in &items {
            cells_of(x, &mut cells);
            for &c in &cells {
                count[c] += 1;
                xor[c] ^= x;
            }
        }
        queue.clear();
        queue.extend((0..count.len()).filter(|&c| count[c] == 1));
        let mut peeled = 0;
        while let Some(c) = queue.pop() {
            if count[c] != 1 {
                continue;
            }
            let x = xor[c];
            cells_of(x, &mut cells);
            for &cj in &cells {
                count[cj] -= 1;
                xor[cj] ^= x;
                if count[cj] == 1 {
                    queue.push(cj);
                }
            }
            peeled += 1;
        }
        if peeled == items.len() {
            let best = items.iter().copied().min_by_key(|&x| keyed_mix(k.rank, fps[x])).expect("nonempty");
            return Outcome::Sample(best);
        }
    }
    Outcome::Fail
}

/// Exact recovery of a sparse signed frequency vector: every item comes
/// back when the support is small enough for the cells to peel.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRecovery {
    core: L0Core<Dense>,
    capacity: usize,
}

impl SparseRecovery {
    /// Cells for up to `capacity` items: three rows of `capacity/2` cells.
    pub fn new(label_len: usize, capacity: usize, seed: u64) -> Self {
        let params = L0Params { rows: 3, cells: (capacity / 2).max(4), levels: 1, reps: 1, label_len };
        Self { core: L0Core::new(params, 1, seed), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn update(&mut self, label: &Label, delta: i64) {
        let d = field::from_i64(delta);
        self.core.update(label, d, &Dense(vec![d]));
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.core.merge(&other.core)
    }

    /// The whole support with frequencies, or `None` when it does not peel.
    pub fn recover(&self) -> Option<Vec<(Label, i64)>> {
        if self.core.is_empty() {
            return Some(Vec::new());
        }
        let items = self.core.decode_deepest(0)?;
        let mut out: Vec<(Label, i64)> = items.into_iter().map(|r| (r.label, field::to_i64(r.payload.0[0]))).collect();
        out.sort();
        Some(out)
    }

    pub fn live_cells(&self) -> usize {
        self.core.live_cells()
    }
}

/// Field weight `Σ ρ_k v_k` of a signed vector, nonzero whenever `v` is
/// (up to collisions of probability about `2^{-61}`).
pub fn presence_weight(seed: u64, v: &[i64]) -> u64 {
    v.iter().enumerate().fold(0, |acc, (k, &x)| {
        if x == 0 {
            acc
        } else {
            field::add(acc, field::mul(rho(seed, k as u64), field::from_i64(x)))
        }
    })
}

/// Presence weights `ρ_k` for payload coordinates.
fn rho(seed: u64, k: u64) -> u64 {
    if k == 0 {
        return 1;
    }
    let r = field::reduce(keyed_mix(derive(seed, domain::SKETCH, &[0x7268_6f]), k));
    if r == 0 {
        1
    } else {
        r
    }
}

/// Plain ℓ0 sampler: returns a uniform index of the support with its exact
/// frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct L0Sketch {
    core: L0Core<Dense>,
}

impl L0Sketch {
    pub fn new(label_len: usize, seed: u64) -> Self {
        Self::with_params(L0Params::new(label_len), seed)
    }

    pub fn with_params(params: L0Params, seed: u64) -> Self {
        Self { core: L0Core::new(params, 1, seed) }
    }

    pub fn update(&mut self, label: &Label, delta: i64) {
        let d = field::from_i64(delta);
        self.core.update(label, d, &Dense(vec![d]));
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.core.merge(&other.core)
    }

    /// `(label, frequency)`.
    pub fn query(&self) -> Outcome<(Label, i64)> {
        self.core.query().map(|r| (r.label, field::to_i64(r.payload.0[0])))
    }

    pub fn core(&self) -> &L0Core<Dense> {
        &self.core
    }
}

/// ℓ0 sampler whose items carry additive integer data fields; an item is in
/// the support if its frequency or any data field is nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct L0WithData {
    core: L0Core<Dense>,
    data_len: usize,
}

/// Item returned by [`L0WithData::query`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSample {
    pub label: Label,
    pub freq: i64,
    pub data: Vec<i64>,
}

impl L0WithData {
    pub fn new(label_len: usize, data_len: usize, seed: u64) -> Self {
        Self::with_params(L0Params::new(label_len), data_len, seed)
    }

    pub fn with_params(params: L0Params, data_len: usize, seed: u64) -> Self {
        Self { core: L0Core::new(params, data_len + 1, seed), data_len }
    }

    pub fn data_len(&self) -> usize {
        self.data_len
    }

    pub fn update(&mut self, label: &Label, freq: i64, data: &[i64]) -> Result<()> {
        if data.len() != self.data_len {
            return Err(Error::DimensionMismatch { expected: self.data_len, got: data.len() });
        }
        let mut v = Vec::with_capacity(self.data_len + 1);
        v.push(field::from_i64(freq));
        v.extend(data.iter().map(|&x| field::from_i64(x)));
        let seed = self.core.seed;
        let w = v
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &x)| if x == 0 { acc } else { field::add(acc, field::mul(rho(seed, k as u64), x)) });
        self.core.update(label, w, &Dense(v));
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.core.merge(&other.core)
    }

    pub fn query(&self) -> Outcome<DataSample> {
        self.core.query().map(|r| DataSample {
            label: r.label,
            freq: field::to_i64(r.payload.0[0]),
            data: r.payload.0[1..].iter().map(|&v| field::to_i64(v)).collect(),
        })
    }

    pub fn core(&self) -> &L0Core<Dense> {
        &self.core
    }
}

/// Payload slot holding the true row count.
const ROW_COUNT_KEY: u32 = 0;

/// Two-level ℓ0 sampler over a matrix: a uniform nonzero row, then a uniform
/// nonzero column of that row, plus the exact row sum.
///
/// Each row's payload is its row count together with the full cell state of a
/// column sampler over that row; all column samplers share one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelL0 {
    rows: L0Core<Sparse>,
    col_params: L0Params,
    col_seed: u64,
    col_keys: Vec<RepKeysShared>,
}

/// Column-sketch keys, kept separately so update paths can borrow them.
#[derive(Clone, Debug)]
struct RepKeysShared(RepKeys);

impl PartialEq for RepKeysShared {
    fn eq(&self, other: &Self) -> bool {
        self.0.z == other.0.z && self.0.level == other.0.level
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoLevelSample {
    pub row: Label,
    pub col: Label,
    pub entry: i64,
    pub row_sum: i64,
}

/// Largest column label width the payload encoding supports.
const MAX_COL_FIELDS: usize = 1 << 12;

impl TwoLevelL0 {
    pub fn new(row_label_len: usize, col_label_len: usize, seed: u64) -> Result<Self> {
        let col_params = L0Params::new(col_label_len);
        if 3 + col_label_len + 1 > MAX_COL_FIELDS {
            return Err(Error::Overflow(format!("column label width {col_label_len} exceeds payload encoding")));
        }
        let col_seed = derive(seed, domain::SKETCH, &[0x636f6c]);
        let col_keys = (0..col_params.reps).map(|r| RepKeysShared(RepKeys::new(col_seed, r, col_params.rows))).collect();
        let rows = L0Core::new(L0Params::new(row_label_len), 3 + col_label_len + 1, seed);
        Ok(Self { rows, col_params, col_seed, col_keys })
    }

    fn col_fields(&self) -> usize {
        3 + self.col_params.label_len + 1
    }

    fn payload_key(&self, rep: usize, level: usize, cell: usize, field_ix: usize) -> u32 {
        let p = &self.col_params;
        // block 0 holds the row count alone
        let block = (rep * p.levels + level) * p.width() + cell + 1;
        (block * self.col_fields() + field_ix) as u32
    }

    /// Encodes `delta` copies of `col` in the row's column sampler.
    fn column_delta(&self, col: &Label, delta: i64) -> Sparse {
        let d = field::from_i64(delta);
        let mut m = vec![(ROW_COUNT_KEY, d)];
        let fp = col.fp;
        let label_f: Vec<u64> = col.words.iter().map(|&v| field::from_i64(v)).collect();
        for (rep, k) in self.col_keys.iter().enumerate() {
            let k = &k.0;
            let lvl = k.level_of(fp, self.col_params.levels);
            let vals = {
                let mut v = vec![d, field::mul(d, fp), field::mul(d, k.z_to(fp))];
                v.extend(label_f.iter().map(|&l| field::mul(d, l)));
                v.push(d);
                v
            };
            for row in 0..self.col_params.rows {
                let cell = k.cell_of(fp, row, self.col_params.cells);
                for (f, &v) in vals.iter().enumerate() {
                    if v != 0 {
                        m.push((self.payload_key(rep, lvl, cell, f), v));
                    }
                }
            }
        }
        Sparse::from_entries(self.col_fields(), m)
    }

    pub fn update(&mut self, row: &Label, col: &Label, delta: i64) -> Result<()> {
        if col.words.len() != self.col_params.label_len {
            return Err(Error::DimensionMismatch { expected: self.col_params.label_len, got: col.words.len() });
        }
        let payload = self.column_delta(col, delta);
        let seed = self.rows.seed;
        let w = payload.entries().fold(0, |acc, (k, v)| field::add(acc, field::mul(rho(seed, k as u64), v)));
        self.rows.update(row, w, &payload);
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.col_seed != other.col_seed || self.col_params != other.col_params {
            return Err(Error::InvalidArgument("merging two-level sketches with different seeds".into()));
        }
        self.rows.merge(&other.rows)
    }

    /// Rebuilds a row's column sampler from its payload.
    fn column_core(&self, payload: &Sparse) -> Result<L0Core<Dense>> {
        let mut core: L0Core<Dense> = L0Core::new(self.col_params, 1, self.col_seed);
        let p = self.col_params;
        let fields = self.col_fields();
        for (key, v) in payload.entries() {
            if (key as usize) < fields {
                if key == ROW_COUNT_KEY {
                    continue;
                }
                return Err(Error::Decode(format!("payload key {key} out of range")));
            }
            let slot = key as usize - fields;
            let f = slot % fields;
            let cell = (slot / fields) % p.width();
            let lvl = (slot / fields / p.width()) % p.levels;
            let rep = slot / fields / p.width() / p.levels;
            if rep >= p.reps {
                return Err(Error::Decode(format!("payload key {key} out of range")));
            }
            let level = core.reps[rep][lvl].get_or_insert_with(|| Level {
                cells: vec![Cell::zero(p.label_len, 1); p.width()],
                nonzero: 0,
            });
            let c = &mut level.cells[cell];
            match f {
                0..=2 => c.s[f] = v,
                _ if f < 3 + p.label_len => c.labels[f - 3] = v,
                _ => c.payload.0[0] = v,
            }
        }
        for level in core.reps.iter_mut().flatten().flatten() {
            level.nonzero = level.cells.iter().filter(|c| !c.is_zero()).count() as u32;
        }
        Ok(core)
    }

    pub fn query(&self) -> Outcome<TwoLevelSample> {
        let row = match self.rows.query() {
            Outcome::Sample(r) => r,
            Outcome::Empty => return Outcome::Empty,
            Outcome::Fail => return Outcome::Fail,
        };
        let row_sum = field::to_i64(row.payload.get(ROW_COUNT_KEY));
        let Ok(core) = self.column_core(&row.payload) else {
            return Outcome::Fail;
        };
        match core.query() {
            Outcome::Sample(c) => Outcome::Sample(TwoLevelSample {
                row: row.label,
                col: c.label,
                entry: field::to_i64(c.payload.0[0]),
                row_sum,
            }),
            _ => Outcome::Fail,
        }
    }

    pub fn live_cells(&self) -> usize {
        self.rows.live_cells()
    }
}

/// Seeded nested subsampling: `h_i^{(t)}(p) = 1` with probability `2^{-i}`,
/// and membership at level `i` implies membership at every level below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleFn {
    pub seed: u64,
}

impl SubsampleFn {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Largest level `i` with `h_i^{(t)}(p) = 1`.
    pub fn max_level(&self, t: u64, key: PointKey) -> u32 {
        let prf = Prf::new(self.seed, domain::SUBSAMPLE);
        self.max_level_with(&prf, t, key)
    }

    /// As [`SubsampleFn::max_level`] with a prebuilt PRF.
    pub fn max_level_with(&self, prf: &Prf, t: u64, key: PointKey) -> u32 {
        let h = prf.eval(&[t, key.0, key.1]);
        if h != 0 {
            return h.leading_zeros();
        }
        64 + prf.eval(&[t, key.0, key.1, 1]).leading_zeros()
    }

    pub fn prf(&self) -> Prf {
        Prf::new(self.seed, domain::SUBSAMPLE)
    }

    pub fn member(&self, i: u32, t: u64, key: PointKey) -> bool {
        i == 0 || self.max_level(t, key) >= i
    }
}

/// Convenience form: `h_i^{(t)}` applied to a grid point.
pub fn subsample_member(p: &crate::core::GridPoint, i: u32, t: u64, f: &SubsampleFn) -> bool {
    f.member(i, t, PointKey::of(p))
}

/// Distinct-element counter over labels with signed weights.
///
/// Single row of `B` cells per nested level. Exact when every nonzero cell of
/// level 0 holds one label, otherwise linear counting at the lowest level
/// whose occupancy is at most `occupancy_limit`.
#[derive(Clone, Debug)]
pub struct DistinctCount {
    seed: u64,
    cells: usize,
    occupancy_limit: usize,
    levels: Vec<Option<DcLevel>>,
    keys: RepKeys,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct DcLevel {
    cells: Vec<[u64; 3]>,
    nonzero: u32,
}

#[derive(Serialize, Deserialize)]
struct DcRaw {
    seed: u64,
    cells: usize,
    occupancy_limit: usize,
    levels: Vec<Option<DcLevel>>,
}

pub const DC_CELLS: usize = 64;
pub const DC_OCCUPANCY: usize = 40;

impl PartialEq for DistinctCount {
    fn eq(&self, o: &Self) -> bool {
        self.seed == o.seed && self.cells == o.cells && self.levels == o.levels
    }
}

impl DistinctCount {
    pub fn new(seed: u64) -> Self {
        Self::with_cells(seed, DC_CELLS, DC_OCCUPANCY)
    }

    pub fn with_cells(seed: u64, cells: usize, occupancy_limit: usize) -> Self {
        let keys = RepKeys::new(derive(seed, domain::DISTINCT, &[]), 0, 1);
        Self { seed, cells, occupancy_limit, levels: vec![None; UNIVERSE_BITS + 2], keys }
    }

    fn cell_of(&self, fp: u64, lvl: usize) -> usize {
        (keyed_mix(self.keys.rows[0].wrapping_add(mix64(lvl as u64)), fp) % self.cells as u64) as usize
    }

    pub fn update(&mut self, fp: u64, delta: i64) {
        self.update_weight(fp, field::from_i64(delta));
    }

    /// Adds field weight `w` to the label; a label counts as present while
    /// its accumulated weight is nonzero.
    pub fn update_weight(&mut self, fp: u64, w: u64) {
        if w == 0 {
            return;
        }
        let top = self.keys.level_of(fp, self.levels.len());
        let wfp = field::mul(w, fp);
        let wz = field::mul(w, self.keys.z_to(fp));
        for lvl in 0..=top {
            let ci = self.cell_of(fp, lvl);
            let cells = self.cells;
            let level = self.levels[lvl].get_or_insert_with(|| DcLevel { cells: vec![[0; 3]; cells], nonzero: 0 });
            let c = &mut level.cells[ci];
            let was = *c != [0; 3];
            c[0] = field::add(c[0], w);
            c[1] = field::add(c[1], wfp);
            c[2] = field::add(c[2], wz);
            let now = *c != [0; 3];
            match (was, now) {
                (false, true) => level.nonzero += 1,
                (true, false) => level.nonzero -= 1,
                _ => {}
            }
            if level.nonzero == 0 {
                self.levels[lvl] = None;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.seed != other.seed || self.cells != other.cells {
            return Err(Error::InvalidArgument("merging counters with different seeds".into()));
        }
        for (slot, lv) in self.levels.iter_mut().zip(&other.levels) {
            let Some(lv) = lv else { continue };
            let level = slot.get_or_insert_with(|| DcLevel { cells: vec![[0; 3]; lv.cells.len()], nonzero: 0 });
            for (a, b) in level.cells.iter_mut().zip(&lv.cells) {
                for k in 0..3 {
                    a[k] = field::add(a[k], b[k]);
                }
            }
            level.nonzero = level.cells.iter().filter(|c| **c != [0; 3]).count() as u32;
            if level.nonzero == 0 {
                *slot = None;
            }
        }
        Ok(())
    }

    fn pure(&self, lvl: usize, ci: usize, c: &[u64; 3]) -> bool {
        if c[0] == 0 {
            return false;
        }
        let fp = field::mul(c[1], field::inv(c[0]));
        c[2] == field::mul(c[0], self.keys.z_to(fp))
            && self.keys.level_of(fp, self.levels.len()) >= lvl
            && self.cell_of(fp, lvl) == ci
    }

    /// Whether the answer is an exact count.
    pub fn is_exact(&self) -> bool {
        match &self.levels[0] {
            None => true,
            Some(l) => l.cells.iter().enumerate().all(|(ci, c)| *c == [0; 3] || self.pure(0, ci, c)),
        }
    }

    pub fn estimate(&self) -> f64 {
        let Some(l0) = &self.levels[0] else {
            return 0.0;
        };
        if self.is_exact() {
            return l0.nonzero as f64;
        }
        for (lvl, level) in self.levels.iter().enumerate() {
            let k = level.as_ref().map_or(0, |l| l.nonzero as usize);
            if k <= self.occupancy_limit {
                let b = self.cells as f64;
                return 2f64.powi(lvl as i32) * (-b * (1.0 - k as f64 / b).ln());
            }
        }
        f64::INFINITY
    }

    pub fn live_cells(&self) -> usize {
        self.levels.iter().flatten().map(|l| l.cells.len()).sum()
    }

    fn raw(&self) -> DcRaw {
        DcRaw { seed: self.seed, cells: self.cells, occupancy_limit: self.occupancy_limit, levels: self.levels.clone() }
    }

    fn from_raw(r: DcRaw) -> Result<Self> {
        let mut s = Self::with_cells(r.seed, r.cells, r.occupancy_limit);
        if r.levels.len() != s.levels.len() {
            return Err(Error::Decode("distinct counter level count mismatch".into()));
        }
        s.levels = r.levels;
        Ok(s)
    }
}

/// Magic bytes of the binary state format.
pub const MAGIC: &[u8; 4] = b"UFLS";
pub const FORMAT_VERSION: u16 = 1;

/// Kind tags of serialized states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StateKind {
    L0 = 1,
    L0Data = 2,
    TwoLevel = 3,
    Distinct = 4,
    Sidecar = 5,
}

pub fn encode_tagged<T: Serialize>(kind: StateKind, value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out)
}

pub fn decode_tagged<T: DeserializeOwned>(kind: StateKind, bytes: &[u8]) -> Result<T> {
    if bytes.len() < 7 || &bytes[..4] != MAGIC {
        return Err(Error::Decode("missing state header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Decode(format!("unsupported state version {version}")));
    }
    if bytes[6] != kind as u8 {
        return Err(Error::Decode(format!("state kind {} where {} was expected", bytes[6], kind as u8)));
    }
    bincode::deserialize(&bytes[7..]).map_err(|e| Error::Decode(e.to_string()))
}

impl L0Sketch {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_tagged(StateKind::L0, &self.core.raw())
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        Ok(Self { core: L0Core::from_raw(decode_tagged(StateKind::L0, b)?)? })
    }
}

impl L0WithData {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_tagged(StateKind::L0Data, &self.core.raw())
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let core: L0Core<Dense> = L0Core::from_raw(decode_tagged(StateKind::L0Data, b)?)?;
        let data_len = core.payload_width - 1;
        Ok(Self { core, data_len })
    }
}

impl TwoLevelL0 {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_tagged(StateKind::TwoLevel, &(self.rows.raw(), self.col_params.label_len))
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let (raw, col_len): (L0Raw<Sparse>, usize) = decode_tagged(StateKind::TwoLevel, b)?;
        let mut s = Self::new(raw.params.label_len, col_len, raw.seed)?;
        let fields = s.col_fields();
        let payloads_ok = raw.payload_width == fields
            && raw.reps.iter().flatten().flatten().flat_map(|l| &l.cells).all(|c| {
                c.payload.width() == fields && c.payload.is_well_formed()
            });
        if !payloads_ok {
            return Err(Error::Decode("two-level payload does not match the column layout".into()));
        }
        s.rows = L0Core::from_raw(raw)?;
        Ok(s)
    }
}

impl DistinctCount {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_tagged(StateKind::Distinct, &self.raw())
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        Self::from_raw(decode_tagged(StateKind::Distinct, b)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(v: i64) -> Label {
        Label::new(vec![v, -v, 7])
    }

    #[test]
    fn field_basics() {
        assert_eq!(field::mul(field::P - 1, field::P - 1), 1);
        assert_eq!(field::mul(3, field::inv(3)), 1);
        assert_eq!(field::to_i64(field::from_i64(-5)), -5);
        assert_eq!(field::to_i64(field::from_i64(1 << 59)), 1 << 59);
    }

    #[test]
    fn z_table_matches_pow() {
        let k = RepKeys::new(5, 0, 3);
        for e in [0u64, 1, 15, 16, 12345, field::P - 1] {
            assert_eq!(k.z_to(e), field::pow(k.z, e));
        }
    }

    #[test]
    fn insert_delete_restores() {
        let mut s = L0Sketch::new(3, 1);
        let empty = s.clone();
        s.update(&lab(4), 1);
        assert_ne!(s, empty);
        s.update(&lab(4), -1);
        assert_eq!(s, empty);
        assert_eq!(s.query(), Outcome::Empty);
    }

    #[test]
    fn single_item_exact() {
        let mut s = L0Sketch::new(3, 9);
        s.update(&lab(-12), 5);
        assert_eq!(s.query(), Outcome::Sample((lab(-12), 5)));
    }

    #[test]
    fn recovers_from_many() {
        let mut s = L0Sketch::new(3, 2);
        for i in 0..1000 {
            s.update(&lab(i), 1);
        }
        let (l, f) = s.query().sample().expect("sample");
        assert!(l.words[0] >= 0 && l.words[0] < 1000);
        assert_eq!(f, 1);
    }

    #[test]
    fn data_field_only_item_is_present() {
        let mut s = L0WithData::new(3, 3, 4);
        s.update(&lab(1), 0, &[3, 0, 0]).unwrap();
        let got = s.query().sample().unwrap();
        assert_eq!((got.freq, got.data), (0, vec![3, 0, 0]));
        let mut s = L0WithData::new(3, 3, 4);
        s.update(&lab(2), 2, &[1, 0, 4]).unwrap();
        assert_eq!(s.query().sample().unwrap().data, vec![1, 0, 4]);
    }

    #[test]
    fn two_level_single_cell() {
        let mut s = TwoLevelL0::new(2, 3, 8).unwrap();
        s.update(&Label::new(vec![1, 2]), &lab(3), 5).unwrap();
        let got = s.query().sample().unwrap();
        assert_eq!((got.col, got.entry, got.row_sum), (lab(3), 5, 5));
    }

    #[test]
    fn two_level_deleted_row_excluded() {
        let mut s = TwoLevelL0::new(1, 3, 8).unwrap();
        let (r1, r2) = (Label::new(vec![1]), Label::new(vec![2]));
        s.update(&r1, &lab(1), 1).unwrap();
        s.update(&r2, &lab(2), 1).unwrap();
        s.update(&r2, &lab(3), 1).unwrap();
        s.update(&r2, &lab(2), -1).unwrap();
        s.update(&r2, &lab(3), -1).unwrap();
        for _ in 0..3 {
            assert_eq!(s.query().sample().unwrap().row, r1);
        }
    }

    #[test]
    fn distinct_small_exact() {
        let mut d = DistinctCount::new(3);
        assert_eq!(d.estimate(), 0.0);
        d.update(fingerprint(&[1]), 1);
        d.update(fingerprint(&[1]), 1);
        assert_eq!(d.estimate(), 1.0);
        d.update(fingerprint(&[2]), 1);
        assert_eq!(d.estimate(), 2.0);
    }

    #[test]
    fn distinct_large_within_half() {
        let mut ok = 0;
        for seed in 0..20 {
            let mut d = DistinctCount::new(seed);
            for i in 0..1000 {
                d.update(fingerprint(&[i]), 1);
            }
            let e = d.estimate();
            ok += (500.0..=1500.0).contains(&e) as usize;
        }
        assert!(ok >= 18, "{ok}");
    }

    #[test]
    fn subsample_rates() {
        let f = SubsampleFn::new(3);
        let prf = f.prf();
        let n = 100_000u64;
        let hits = (0..n).filter(|&i| f.max_level_with(&prf, 0, PointKey(i, 0)) >= 3).count();
        let expect = n as f64 / 8.0;
        let sd = (n as f64 * 0.125 * 0.875).sqrt();
        assert!((hits as f64 - expect).abs() < 4.0 * sd);
        assert!(f.member(0, 0, PointKey(1, 1)));
    }

    #[test]
    fn round_trips() {
        let mut s = L0WithData::new(3, 2, 1);
        s.update(&lab(1), 1, &[1, 2]).unwrap();
        assert_eq!(L0WithData::from_bytes(&s.to_bytes().unwrap()).unwrap(), s);
        let mut t = TwoLevelL0::new(1, 3, 2).unwrap();
        t.update(&Label::new(vec![9]), &lab(5), 1).unwrap();
        assert_eq!(TwoLevelL0::from_bytes(&t.to_bytes().unwrap()).unwrap(), t);
        let mut d = DistinctCount::new(4);
        d.update(77, 1);
        assert_eq!(DistinctCount::from_bytes(&d.to_bytes().unwrap()).unwrap(), d);
        assert!(L0Sketch::from_bytes(&d.to_bytes().unwrap()).is_err());
    }
}
