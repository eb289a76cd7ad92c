//! `χ`-weighted densities, `udense` and the density strata.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Lattice, Tile, TileSet, VectorField};
use crate::grid::IndicatorSet;
use crate::modelop::CoefficientTable;
use crate::wavepackets::active_slope_interval;

use super::frame::TileFrame;

/// `∫_{ℝ²} 1/(1 + |y|^p) dy = (2π/p)·π/sin(2π/p)`.
pub fn chi_integral(p: u32) -> f64 {
    let pf = p as f64;
    let pi = std::f64::consts::PI;
    2.0 * pi / pf * pi / (2.0 * pi / pf).sin()
}

/// `χ_s^{(1)}` at a point: `1/(|s|·I_p·(1 + |A_s(x − c_s)|^p))` with `A_s`
/// mapping `s` to the unit square.
#[derive(Debug, Clone, Copy)]
pub struct Chi {
    frame: TileFrame,
    p: u32,
    norm: f64,
}

impl Chi {
    pub fn new(lat: &Lattice, s: &Tile, p: u32) -> Self {
        Chi {
            frame: TileFrame::new(lat, s),
            p,
            norm: 1.0 / (lat.area(s) * chi_integral(p)),
        }
    }

    #[inline]
    pub fn at(&self, x1: f64, x2: f64) -> f64 {
        let (a, b) = self.frame.coords(x1, x2);
        let r2 = (a / self.frame.len).powi(2) + (b / self.frame.w).powi(2);
        self.norm / (1.0 + r2.powi(self.p as i32 / 2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileStats {
    pub tile: Tile,
    pub dense: f64,
    pub udense: f64,
    pub coeff_f: num_complex::Complex64,
    pub p_chi: u32,
}

/// `dense` and `udense` for every lattice tile.
#[derive(Debug, Clone)]
pub struct DensityStats {
    pub p_chi: u32,
    pub dense: Vec<f64>,
    pub udense: Vec<f64>,
    /// `dx²·Σ_grid χ_s^{(1)}`: the cap for `dense(s)`.
    pub chi_mass: Vec<f64>,
    /// Tiles whose `udense` is attained at level `l_max`, where the lattice sup is truncated.
    pub truncated: TileSet,
}

impl DensityStats {
    pub fn stats(&self, lat: &Lattice, s: &Tile, coeffs: &CoefficientTable) -> TileStats {
        let id = lat.id(s);
        TileStats {
            tile: *s,
            dense: self.dense[id],
            udense: self.udense[id],
            coeff_f: coeffs.at(id),
            p_chi: self.p_chi,
        }
    }
}

/// `u` lies in the slope support of the curved packet `h_t`, an interval of
/// length about `2|ω_t|` containing `ω_t`. Half-open.
#[inline]
pub fn slope_in(t: &Tile, u: f64) -> bool {
    let (lo, hi) = active_slope_interval(&t.omega());
    u >= lo && u < hi
}

/// `dense(s) = ∫_{E_s} χ_s^{(1)}` with `E_s = {x ∈ E : h_s(x₁, ·) ≢ 0}`, i.e.
/// `u(x₁)` in the slope support of `h_s`, for all lattice tiles.
pub fn density_stats(lat: &Lattice, e: &IndicatorSet, v: &VectorField, p_chi: u32) -> Result<DensityStats> {
    if p_chi < 4 || p_chi % 2 != 0 {
        return Err(Error::config("constants.p_chi", format!("{p_chi} is not an even integer ≥ 4")));
    }
    let spec = *lat.spec();
    if e.spec() != &spec || v.values().len() != spec.n() {
        return Err(Error::Dimension("set, field and lattice grids differ".into()));
    }
    let n = spec.n();
    let da = spec.cell_area();
    // E points grouped by column
    let cols: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| e.contains(i, j)).collect()).collect();
    let ids: Vec<usize> = (0..lat.tile_count()).collect();
    let per_tile: Vec<(f64, f64)> = ids
        .par_iter()
        .map(|&id| {
            let s = lat.tile(id);
            let chi = Chi::new(lat, &s, p_chi);
            let mut dense = 0.0;
            let mut mass = 0.0;
            for i in 0..n {
                let x = spec.coord(i);
                for j in 0..n {
                    mass += chi.at(x, spec.coord(j));
                }
                if slope_in(&s, v.at(i)) {
                    for &j in &cols[i] {
                        dense += chi.at(x, spec.coord(j));
                    }
                }
            }
            (dense * da, mass * da)
        })
        .collect();
    let dense: Vec<f64> = per_tile.iter().map(|p| p.0).collect();
    let chi_mass: Vec<f64> = per_tile.iter().map(|p| p.1).collect();
    let rel = lat.relations();
    let mut truncated = TileSet::new(lat.tile_count());
    let udense: Vec<f64> = (0..lat.tile_count())
        .map(|s| {
            let mut best = dense[s];
            let mut arg = s;
            for &t in &rel.above[s] {
                if dense[t as usize] > best {
                    best = dense[t as usize];
                    arg = t as usize;
                }
            }
            if best > 0.0 && lat.tile(arg).l == lat.l_max() {
                truncated.insert(s);
            }
            best
        })
        .collect();
    Ok(DensityStats {
        p_chi,
        dense,
        udense,
        chi_mass,
        truncated,
    })
}

/// Exponent `e` with `x ∈ (2^{e−1}, 2^e]`, for `x > 0`.
pub fn dyadic_exponent(x: f64) -> i32 {
    assert!(x > 0.0 && x.is_finite());
    let mut e = x.log2().ceil() as i32;
    while (e as f64).exp2() < x {
        e += 1;
    }
    while ((e - 1) as f64).exp2() >= x {
        e -= 1;
    }
    e
}

/// Density strata keyed by the exponent of `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    pub strata: BTreeMap<i32, TileSet>,
    /// Tiles with `udense = 0`.
    pub zero: TileSet,
}

/// `S_δ = {s : udense(s) ∈ (δ/2, δ]}` for dyadic `δ`.
pub fn density_stratify(lat: &Lattice, stats: &DensityStats, tiles: &TileSet) -> Strata {
    let mut strata: BTreeMap<i32, TileSet> = BTreeMap::new();
    let mut zero = TileSet::new(lat.tile_count());
    for id in tiles.iter() {
        let u = stats.udense[id];
        if u > 0.0 {
            strata
                .entry(dyadic_exponent(u))
                .or_insert_with(|| TileSet::new(lat.tile_count()))
                .insert(id);
        } else {
            zero.insert(id);
        }
    }
    Strata { strata, zero }
}
