//! Coordinates relative to a tile and grid masks of tiles, dilates and shells.

use crate::geometry::{wrap, Lattice, Tile};
use crate::grid::{GridSpec, IndicatorSet};

/// Sheared frame of a tile: `a` along `x₁`, `b = x₂ − c_y − slope·a`, both as
/// minimal images on the torus.
#[derive(Debug, Clone, Copy)]
pub struct TileFrame {
    pub cx: f64,
    pub cy: f64,
    pub slope: f64,
    pub len: f64,
    pub w: f64,
    pub side: f64,
}

impl TileFrame {
    pub fn new(lat: &Lattice, t: &Tile) -> Self {
        let (cx, cy) = lat.center(t);
        TileFrame {
            cx,
            cy,
            slope: lat.slope(t),
            len: lat.tile_len(t.l),
            w: lat.w(),
            side: lat.side(),
        }
    }

    #[inline]
    pub fn coords(&self, x1: f64, x2: f64) -> (f64, f64) {
        let a = half_open_wrap(x1 - self.cx, self.side);
        let b = half_open_wrap(x2 - self.cy - self.slope * a, self.side);
        (a, b)
    }

    /// Point lies in the half-open dilate `ρ·t`, truncated to one lift.
    #[inline]
    pub fn in_dilate(&self, x1: f64, x2: f64, rho: f64) -> bool {
        let (a, b) = self.coords(x1, x2);
        let (ha, hb) = (0.5 * rho * self.len, 0.5 * rho * self.w);
        a >= -ha && a < ha && b >= -hb && b < hb
    }

    /// Columns variant `π₁(s) × C·π₂(top)`: `x₁ ∈ [x_lo, x_hi)` (mod L) and `|b| < C·w/2`.
    #[inline]
    pub fn in_column_strip(&self, x1: f64, x2: f64, x_lo: f64, len: f64, c: f64) -> bool {
        let (_, b) = self.coords(x1, x2);
        let hb = 0.5 * c * self.w;
        (x1 - x_lo).rem_euclid(self.side) < len && b >= -hb && b < hb
    }
}

/// Minimal image in `[−L/2, L/2)`.
#[inline]
pub fn half_open_wrap(x: f64, l: f64) -> f64 {
    let y = wrap(x, l);
    if y >= l / 2.0 {
        y - l
    } else {
        y
    }
}

/// Grid indices `j·n + i` of the points of tile `t` (the half-open shear cell).
pub fn rasterize(lat: &Lattice, t: &Tile) -> Vec<usize> {
    let spec = lat.spec();
    let n = spec.n();
    let dx = spec.spacing();
    let len = lat.tile_len(t.l);
    let per = (len / dx).round() as usize;
    let rows = (lat.w() / dx).round() as usize;
    let c = lat.slope(t);
    let mut out = Vec::with_capacity(per * rows);
    for ii in 0..per {
        let i = t.i as usize * per + ii;
        let x = spec.coord(i);
        // rows with (y − c·x) mod L in [j·w, (j+1)·w)
        let y0 = t.j as f64 * lat.w() + c * x;
        let b0 = (y0 / dx).ceil() as i64;
        for r in 0..rows as i64 {
            let b = (b0 + r).rem_euclid(n as i64) as usize;
            out.push(b * n + i);
        }
    }
    out
}

pub fn dilate_mask(lat: &Lattice, t: &Tile, rho: f64) -> IndicatorSet {
    let f = TileFrame::new(lat, t);
    IndicatorSet::from_fn(*lat.spec(), |x, y| f.in_dilate(x, y, rho))
}

/// `Ω_0 = b·t`, `Ω_k = 2^k b·t \ 2^{k−1} b·t`, within one lift of the frame
/// (dilates wider than the torus are truncated).
pub fn shell_mask(lat: &Lattice, t: &Tile, base: f64, k: u32) -> IndicatorSet {
    let f = TileFrame::new(lat, t);
    let outer = base * (k as f64).exp2();
    IndicatorSet::from_fn(*lat.spec(), |x, y| {
        f.in_dilate(x, y, outer) && (k == 0 || !f.in_dilate(x, y, 0.5 * outer))
    })
}

/// `2^k·t` fits in the fundamental domain.
pub fn dilate_fits(lat: &Lattice, t: &Tile, rho: f64) -> bool {
    rho * lat.tile_len(t.l) <= lat.side() + 1e-12 && rho * lat.w() <= lat.side() + 1e-12
}

pub fn spec_points(spec: &GridSpec) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
    let n = spec.n();
    (0..spec.len()).map(move |idx| (idx, spec.coord(idx % n), spec.coord(idx / n)))
}
