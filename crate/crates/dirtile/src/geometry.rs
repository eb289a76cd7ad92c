//! Slope intervals, the sheared tile lattice, the order `≤`, and trees.
//!
//! A tile at `(l, k, i, j)` has slope interval `ω = [−2 + k·2^{−l}, −2 + (k+1)·2^{−l}]`,
//! x-interval `[i·len, (i+1)·len)` with `len = w·2^l`, and occupies the shear cell
//! `x₂ − c(ω)·x₁ ∈ [j·w, (j+1)·w) mod L`.

use std::sync::{Arc, OnceLock};

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Slack used by every geometric predicate.
pub const GEOM_TOL: f64 = 1e-12;

/// Support radius of the tile multipliers in units of `1/w`: the annulus
/// profile reaches `5/2` and the slope window reaches `|ξ/η| ≤ 9/4`.
pub const MULTIPLIER_REACH: f64 = 2.5 * 2.25;

#[inline]
pub fn wrap(x: f64, l: f64) -> f64 {
    let y = x.rem_euclid(l);
    if y > l / 2.0 {
        y - l
    } else {
        y
    }
}

/// Dyadic slope interval of length `2^{−l}` inside `[−2, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrequencyInterval {
    pub level: u32,
    pub index: u32,
}

impl FrequencyInterval {
    pub fn new(level: u32, index: u32) -> Result<Self> {
        if level > 24 || (index as u64) >= 4u64 << level {
            return Err(Error::config("omega", format!("no interval ({level}, {index})")));
        }
        Ok(FrequencyInterval { level, index })
    }

    pub fn count_at(level: u32) -> u32 {
        4 << level
    }

    pub fn length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn left(&self) -> f64 {
        -2.0 + self.index as f64 * self.length()
    }

    pub fn right(&self) -> f64 {
        self.left() + self.length()
    }

    pub fn center(&self) -> f64 {
        self.left() + 0.5 * self.length()
    }

    /// Right half `ω₁`.
    pub fn right_half(&self) -> FrequencyInterval {
        FrequencyInterval {
            level: self.level + 1,
            index: 2 * self.index + 1,
        }
    }

    /// Left half `ω₂`.
    pub fn left_half(&self) -> FrequencyInterval {
        FrequencyInterval {
            level: self.level + 1,
            index: 2 * self.index,
        }
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &FrequencyInterval) -> bool {
        other.level >= self.level && (other.index >> (other.level - self.level)) == self.index
    }

    /// Dyadic intervals are nested or have disjoint interiors; this tests the former.
    pub fn overlaps(&self, other: &FrequencyInterval) -> bool {
        self.contains(other) || other.contains(self)
    }

    pub fn contains_point(&self, x: f64) -> bool {
        x >= self.left() - GEOM_TOL && x <= self.right() + GEOM_TOL
    }
}

/// Per-column slope field `v = (1, u(x₁))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    u: Vec<f64>,
}

impl VectorField {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some(x) = u.iter().find(|x| !(x.abs() <= 1.0)) {
            return Err(Error::config("field", format!("slope {x} outside [−1, 1]")));
        }
        Ok(VectorField { u })
    }

    pub fn constant(spec: &GridSpec, u0: f64) -> Result<Self> {
        Self::new(vec![u0; spec.n()])
    }

    /// `segments` are `(x_start, value)` pairs sorted by start; the first value
    /// also covers `[0, x_start₀)`.
    pub fn piecewise(spec: &GridSpec, segments: &[(f64, f64)]) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::config("field.segments", "empty segment list"));
        }
        let u = (0..spec.n())
            .map(|i| {
                let x = spec.coord(i);
                segments
                    .iter()
                    .rev()
                    .find(|(s, _)| *s <= x)
                    .unwrap_or(&segments[0])
                    .1
            })
            .collect();
        Self::new(u)
    }

    /// Seeded random walk with step size `step`, clipped to `[−1, 1]`.
    pub fn random_walk(spec: &GridSpec, seed: u64, step: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: f64 = rng.gen_range(-1.0..1.0);
        let u = (0..spec.n())
            .map(|_| {
                let v = x;
                x = (x + rng.gen_range(-step..=step)).clamp(-1.0, 1.0);
                v
            })
            .collect();
        VectorField { u }
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    #[inline]
    pub fn at(&self, column: usize) -> f64 {
        self.u[column]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tile {
    pub l: u32,
    pub k: u32,
    pub i: u32,
    pub j: u32,
}

impl Tile {
    pub fn omega(&self) -> FrequencyInterval {
        FrequencyInterval {
            level: self.l,
            index: self.k,
        }
    }
}

/// Filled parallelogram `{c + t·(1, slope) + r·(0, 1) : |t| ≤ half_len, |r| ≤ half_w}` on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parallelogram {
    pub cx: f64,
    pub cy: f64,
    pub half_len: f64,
    pub half_w: f64,
    pub slope: f64,
}

impl Parallelogram {
    pub fn dilate(&self, c: f64) -> Parallelogram {
        Parallelogram {
            half_len: self.half_len * c,
            half_w: self.half_w * c,
            ..*self
        }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_len * self.half_w
    }

    /// Coordinates of the lift `(d₁, d₂)` of a point offset in this frame.
    #[inline]
    fn frame(&self, d1: f64, d2: f64) -> (f64, f64) {
        (d1, d2 - self.slope * d1)
    }

    pub fn contains_point(&self, x: f64, y: f64, l: f64) -> bool {
        let p = Parallelogram {
            cx: x,
            cy: y,
            half_len: 0.0,
            half_w: 0.0,
            slope: self.slope,
        };
        self.contains(&p, l)
    }

    /// Lifts of `other` relative to `self`: calls `f(e1, e2)` with the offset of
    /// other's center in `self`'s frame, for every lift whose x-range can meet
    /// the given reach.
    fn for_each_lift(&self, other: &Parallelogram, l: f64, reach1: f64, reach2: f64, mut f: impl FnMut(f64, f64) -> bool) -> bool {
        let d1 = wrap(other.cx - self.cx, l);
        let d2 = other.cy - self.cy;
        let m_lo = ((-reach1 - d1) / l).floor() as i64 - 1;
        let m_hi = ((reach1 - d1) / l).ceil() as i64 + 1;
        for m in m_lo..=m_hi {
            let e1 = d1 + m as f64 * l;
            if e1.abs() > reach1 + GEOM_TOL {
                continue;
            }
            let (_, y) = self.frame(e1, d2);
            let y = wrap(y, l);
            let q_lo = ((-reach2 - y) / l).floor() as i64 - 1;
            let q_hi = ((reach2 - y) / l).ceil() as i64 + 1;
            for q in q_lo..=q_hi {
                let e2 = y + q as f64 * l;
                if e2.abs() > reach2 + GEOM_TOL {
                    continue;
                }
                if f(e1, e2) {
                    return true;
                }
            }
        }
        false
    }

    /// Some lift of `inner` lies inside `self` (closed, with slack).
    pub fn contains(&self, inner: &Parallelogram, l: f64) -> bool {
        let ds = inner.slope - self.slope;
        let reach1 = self.half_len + inner.half_len;
        let reach2 = self.half_w + ds.abs() * inner.half_len + inner.half_w;
        self.for_each_lift(inner, l, reach1, reach2, |e1, e2| {
            [-1.0, 1.0].iter().all(|&s1: &f64| {
                let t = s1 * inner.half_len;
                (e1 + t).abs() <= self.half_len + GEOM_TOL
                    && [-1.0, 1.0].iter().all(|&s2: &f64| {
                        (e2 + ds * t + s2 * inner.half_w).abs() <= self.half_w + GEOM_TOL
                    })
            })
        })
    }

    /// Interiors meet on the torus (separating-axis test over lifts).
    pub fn intersects(&self, other: &Parallelogram, l: f64) -> bool {
        let ds = other.slope - self.slope;
        let reach1 = self.half_len + other.half_len;
        let reach2 = self.half_w + ds.abs() * other.half_len + other.half_w;
        self.for_each_lift(other, l, reach1, reach2, |e1, e2| {
            // axis x₁
            if e1.abs() >= reach1 - GEOM_TOL {
                return false;
            }
            // axis normal to self's long side: y − s_self·x
            if e2.abs() >= reach2 - GEOM_TOL {
                return false;
            }
            // axis normal to other's long side: y − s_other·x, in coordinates relative to self's center
            let v = e2 - ds * e1;
            let r = other.half_w + self.half_w + ds.abs() * self.half_len;
            v.abs() < r - GEOM_TOL
        })
    }
}

/// Tile universe `U` on the torus for one grid, band width `w` and level range.
#[derive(Debug, Clone)]
pub struct Lattice {
    spec: GridSpec,
    w: f64,
    l_max: u32,
    c_const: f64,
    cells: u32,
    relations: Arc<OnceLock<Relations>>,
}

impl PartialEq for Lattice {
    fn eq(&self, o: &Self) -> bool {
        self.spec == o.spec && self.w == o.w && self.l_max == o.l_max && self.c_const == o.c_const
    }
}

impl Lattice {
    /// `w` must divide `L` into a power of two and keep the multiplier
    /// supports strictly below Nyquist.
    pub fn new(spec: GridSpec, w: f64, l_max: u32, c_const: f64) -> Result<Self> {
        let l = spec.side_length();
        if !(w.is_finite() && w > 0.0 && w <= l) {
            return Err(Error::config("band.w", format!("{w} is not in (0, L]")));
        }
        let ratio = l / w;
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 || !(cells as u64).is_power_of_two() {
            return Err(Error::config("band.w", format!("L/w = {ratio} is not a power of two")));
        }
        if MULTIPLIER_REACH / w >= spec.nyquist() {
            return Err(Error::config(
                "band.w",
                format!(
                    "multiplier reach {:.4} ≥ Nyquist {:.4}; need w > {:.5}",
                    MULTIPLIER_REACH / w,
                    spec.nyquist(),
                    MULTIPLIER_REACH / spec.nyquist()
                ),
            ));
        }
        let cells = cells as u32;
        if (1u32 << l_max) > cells {
            return Err(Error::config("band.l_max", format!("w·2^{l_max} exceeds L")));
        }
        if !(c_const.is_finite() && c_const >= 1.0) {
            return Err(Error::config("constants.C", format!("{c_const} < 1")));
        }
        Ok(Lattice {
            spec,
            w,
            l_max,
            c_const,
            cells,
            relations: Arc::new(OnceLock::new()),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn c_const(&self) -> f64 {
        self.c_const
    }

    /// `L/w`: number of shear cells per column and of x-cells at level 0.
    pub fn cells(&self) -> u32 {
        self.cells
    }

    pub fn side(&self) -> f64 {
        self.spec.side_length()
    }

    pub fn tile_len(&self, l: u32) -> f64 {
        self.w * (l as f64).exp2()
    }

    pub fn x_cells(&self, l: u32) -> u32 {
        self.cells >> l
    }

    fn per_level(&self) -> usize {
        4 * (self.cells as usize) * (self.cells as usize)
    }

    pub fn tile_count(&self) -> usize {
        self.per_level() * (self.l_max as usize + 1)
    }

    /// Dense id in lexicographic `(l, k, i, j)` order.
    pub fn id(&self, t: &Tile) -> usize {
        let m = self.cells as usize;
        let xc = self.x_cells(t.l) as usize;
        self.per_level() * t.l as usize + ((t.k as usize * xc + t.i as usize) * m + t.j as usize)
    }

    pub fn tile(&self, id: usize) -> Tile {
        let m = self.cells as usize;
        let l = id / self.per_level();
        let r = id % self.per_level();
        let xc = self.x_cells(l as u32) as usize;
        let j = r % m;
        let r = r / m;
        let i = r % xc;
        let k = r / xc;
        Tile {
            l: l as u32,
            k: k as u32,
            i: i as u32,
            j: j as u32,
        }
    }

    pub fn is_valid(&self, t: &Tile) -> bool {
        t.l <= self.l_max
            && t.k < FrequencyInterval::count_at(t.l)
            && t.i < self.x_cells(t.l)
            && t.j < self.cells
    }

    pub fn area(&self, t: &Tile) -> f64 {
        self.w * self.tile_len(t.l)
    }

    pub fn slope(&self, t: &Tile) -> f64 {
        t.omega().center()
    }

    /// Center `c(s)` reduced to `[0, L)²`.
    pub fn center(&self, t: &Tile) -> (f64, f64) {
        let len = self.tile_len(t.l);
        let x = (t.i as f64 + 0.5) * len;
        let y = (t.j as f64 + 0.5) * self.w + self.slope(t) * x;
        (x, y.rem_euclid(self.side()))
    }

    pub fn parallelogram(&self, t: &Tile) -> Parallelogram {
        let (cx, cy) = self.center(t);
        Parallelogram {
            cx,
            cy,
            half_len: 0.5 * self.tile_len(t.l),
            half_w: 0.5 * self.w,
            slope: self.slope(t),
        }
    }

    /// The tile of slope interval `omega` whose cell holds the point.
    pub fn tile_at(&self, omega: FrequencyInterval, x1: f64, x2: f64) -> Tile {
        let l = self.side();
        let x1 = x1.rem_euclid(l);
        let i = ((x1 / self.tile_len(omega.level)).floor() as u32).min(self.x_cells(omega.level) - 1);
        let y = (x2 - omega.center() * x1).rem_euclid(l);
        let j = ((y / self.w).floor() as u32).min(self.cells - 1);
        Tile {
            l: omega.level,
            k: omega.index,
            i,
            j,
        }
    }

    /// All tiles passing `filter`, in `(l, k, i, j)` order.
    pub fn enumerate_tiles(&self, filter: impl Fn(&Tile) -> bool) -> Vec<Tile> {
        (0..self.tile_count()).map(|id| self.tile(id)).filter(|t| filter(t)).collect()
    }

    /// `a ≤ b`: `a ⊆ C·b` on the torus and `ω_b ⊆ ω_a`.
    pub fn tile_leq(&self, a: &Tile, b: &Tile) -> bool {
        a.omega().contains(&b.omega()) && self.spatially_leq(a, b)
    }

    pub fn spatially_leq(&self, a: &Tile, b: &Tile) -> bool {
        self.parallelogram(b)
            .dilate(self.c_const)
            .contains(&self.parallelogram(a), self.side())
    }

    pub fn tiles_intersect(&self, a: &Tile, b: &Tile) -> bool {
        self.parallelogram(a).intersects(&self.parallelogram(b), self.side())
    }

    /// Cells meet and slope intervals are nested.
    pub fn comparable_incident(&self, a: &Tile, b: &Tile) -> bool {
        a.omega().overlaps(&b.omega()) && self.tiles_intersect(a, b)
    }

    pub fn relations(&self) -> &Relations {
        self.relations.get_or_init(|| Relations::build(self))
    }

    pub fn maximal_tree_with_top(&self, t: &Tile, pool: &TileSet, kind: TreeKind) -> Tree {
        let rel = self.relations();
        let tid = self.id(t);
        let members = rel.below[tid]
            .iter()
            .map(|&s| s as usize)
            .filter(|&s| pool.contains(s))
            .map(|s| self.tile(s))
            .filter(|s| kind.admits(t, s))
            .collect();
        Tree {
            top: *t,
            members,
            kind,
        }
    }
}

/// Precomputed order relation over the whole lattice.
#[derive(Debug, Clone)]
pub struct Relations {
    /// `below[t]`: ids `s` with `s ≤ t`, ascending.
    pub below: Vec<Vec<u32>>,
    /// `above[s]`: ids `t` with `s ≤ t`, ascending.
    pub above: Vec<Vec<u32>>,
}

impl Relations {
    fn build(lat: &Lattice) -> Relations {
        use rayon::prelude::*;
        let n = lat.tile_count();
        let below: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|tid| {
                let t = lat.tile(tid);
                let mut out = Vec::new();
                // only coarser-or-equal slope intervals containing ω_t qualify
                for l in 0..=t.l {
                    let k = t.k >> (t.l - l);
                    for i in 0..lat.x_cells(l) {
                        for j in 0..lat.cells {
                            let s = Tile { l, k, i, j };
                            if lat.spatially_leq(&s, &t) {
                                out.push(lat.id(&s) as u32);
                            }
                        }
                    }
                }
                out.sort_unstable();
                out
            })
            .collect();
        let mut above = vec![Vec::new(); n];
        for (tid, list) in below.iter().enumerate() {
            for &s in list {
                above[s as usize].push(tid as u32);
            }
        }
        Relations { below, above }
    }
}

/// Set of tile ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSet {
    bits: FixedBitSet,
}

impl TileSet {
    pub fn new(capacity: usize) -> Self {
        TileSet {
            bits: FixedBitSet::with_capacity(capacity),
        }
    }

    pub fn full(capacity: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(capacity);
        bits.insert_range(..);
        TileSet { bits }
    }

    pub fn from_ids(capacity: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new(capacity);
        for id in ids {
            s.insert(id);
        }
        s
    }

    pub fn from_tiles<'a>(lat: &Lattice, tiles: impl IntoIterator<Item = &'a Tile>) -> Self {
        Self::from_ids(lat.tile_count(), tiles.into_iter().map(|t| lat.id(t)))
    }

    pub fn insert(&mut self, id: usize) {
        self.bits.insert(id);
    }

    pub fn remove(&mut self, id: usize) {
        self.bits.set(id, false);
    }

    pub fn contains(&self, id: usize) -> bool {
        self.bits.contains(id)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    /// Ascending ids.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    pub fn difference_with(&mut self, other: &TileSet) {
        self.bits.difference_with(&other.bits);
    }

    pub fn union_with(&mut self, other: &TileSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn is_disjoint(&self, other: &TileSet) -> bool {
        self.bits.is_disjoint(&other.bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeKind {
    General,
    One,
    Two,
}

impl TreeKind {
    /// Slope condition for membership (the spatial part is `s ≤ top`).
    pub fn admits(&self, top: &Tile, s: &Tile) -> bool {
        let wt = top.omega();
        match self {
            TreeKind::General => true,
            TreeKind::One => !wt.overlaps(&s.omega().right_half()),
            TreeKind::Two => !wt.overlaps(&s.omega().left_half()),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            TreeKind::General => "general",
            TreeKind::One => "1",
            TreeKind::Two => "2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub top: Tile,
    /// Ascending lattice order.
    pub members: Vec<Tile>,
    pub kind: TreeKind,
}

impl Tree {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_top(&self) -> bool {
        self.members.binary_search(&self.top).is_ok()
    }

    /// Checks `s ≤ top` and the kind condition for every member.
    pub fn is_valid(&self, lat: &Lattice) -> bool {
        self.members
            .iter()
            .all(|s| lat.tile_leq(s, &self.top) && self.kind.admits(&self.top, s))
    }
}
