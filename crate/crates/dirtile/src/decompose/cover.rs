//! Greedy cover from the density argument: shell classes `R_k` and a
//! maximal-length disjointification per class.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Lattice, Tile, VectorField};
use crate::grid::IndicatorSet;

use super::density::slope_in;
use crate::wavepackets::active_slope_interval;
use super::frame::{dilate_fits, TileFrame};
use super::size::length_cmp;

/// `|{u ∈ supp_R} ∩ ρ·R ∩ E|`, with `supp_R` the slope support of `h_R`.
pub fn shell_measure(lat: &Lattice, r: &Tile, rho: f64, e: &IndicatorSet, v: &VectorField) -> f64 {
    let spec = lat.spec();
    let n = spec.n();
    let f = TileFrame::new(lat, r);
    let mut count = 0usize;
    for i in 0..n {
        if !slope_in(r, v.at(i)) {
            continue;
        }
        let x = spec.coord(i);
        for j in 0..n {
            if e.contains(i, j) && f.in_dilate(x, spec.coord(j), rho) {
                count += 1;
            }
        }
    }
    count as f64 * spec.cell_area()
}

/// Least `k` with `|{u ∈ supp_R} ∩ 2^k R ∩ E| ≥ factor(k)` among dilates that
/// fit in the torus.
pub fn least_shell(lat: &Lattice, r: &Tile, e: &IndicatorSet, v: &VectorField, factor: impl Fn(u32) -> f64) -> Option<u32> {
    (0..32u32)
        .take_while(|&k| dilate_fits(lat, r, (k as f64).exp2()))
        .find(|&k| shell_measure(lat, r, (k as f64).exp2(), e, v) >= factor(k))
}

/// `2^{20k}` saturating at `f64::MAX`.
pub fn shell_gain(k: u32) -> f64 {
    (20.0 * k as f64).exp2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverDiagnostics {
    pub classes: BTreeMap<u32, Vec<Tile>>,
    /// Inputs in no class: tails of `χ` at finite `p_χ`.
    pub unclassified: Vec<Tile>,
    pub selected: BTreeMap<u32, Vec<Tile>>,
    /// `Σ_{classified} |R| / (|E|/δ)`.
    pub ratio: f64,
    /// Within each `k`, selected pairs have disjoint `2^k R` or disjoint slope supports.
    pub disjoint: bool,
    /// `Σ_{selected} |{u ∈ supp_R} ∩ 2^k R ∩ E| ≤ |E|` per class.
    pub measure_ok: bool,
}

/// Selected `R, R'` conflict when `2^k R ∩ 2^k R' ≠ ∅` and their slope
/// supports overlap.
pub fn cover_conflict(lat: &Lattice, a: &Tile, b: &Tile, k: u32) -> bool {
    let rho = (k as f64).exp2();
    let (a0, a1) = active_slope_interval(&a.omega());
    let (b0, b1) = active_slope_interval(&b.omega());
    a0 < b1 && b0 < a1
        && lat
            .parallelogram(a)
            .dilate(rho)
            .intersects(&lat.parallelogram(b).dilate(rho), lat.side())
}

pub fn pairwise_incomparable(lat: &Lattice, rs: &[Tile]) -> bool {
    rs.iter().enumerate().all(|(a, ra)| {
        rs[a + 1..]
            .iter()
            .all(|rb| !lat.tile_leq(ra, rb) && !lat.tile_leq(rb, ra))
    })
}

pub fn density_cover(lat: &Lattice, rs: &[Tile], e: &IndicatorSet, v: &VectorField, delta: f64) -> Result<CoverDiagnostics> {
    if !(delta > 0.0) {
        return Err(Error::config("delta", "must be positive"));
    }
    if !pairwise_incomparable(lat, rs) {
        return Err(Error::Internal("density cover input is not pairwise incomparable".into()));
    }
    let mut classes: BTreeMap<u32, Vec<Tile>> = BTreeMap::new();
    let mut unclassified = Vec::new();
    for r in rs {
        match least_shell(lat, r, e, v, |k| delta * shell_gain(k) * lat.area(r) * (4f64).powi(k as i32) / 100.0) {
            Some(k) => classes.entry(k).or_default().push(*r),
            None => unclassified.push(*r),
        }
    }
    let mut selected: BTreeMap<u32, Vec<Tile>> = BTreeMap::new();
    for (&k, list) in &classes {
        let mut stock = list.clone();
        stock.sort_by(length_cmp);
        let mut chosen = Vec::new();
        while let Some(&r) = stock.first() {
            stock.retain(|x| !cover_conflict(lat, &r, x, k));
            chosen.push(r);
        }
        selected.insert(k, chosen);
    }
    let mut disjoint = true;
    let mut measure_ok = true;
    let e_measure = e.measure();
    for (&k, list) in &selected {
        for (a, ra) in list.iter().enumerate() {
            for rb in &list[a + 1..] {
                if cover_conflict(lat, ra, rb, k) {
                    disjoint = false;
                }
            }
        }
        let m: f64 = list.iter().map(|r| shell_measure(lat, r, (k as f64).exp2(), e, v)).sum();
        if m > e_measure * (1.0 + 1e-12) {
            measure_ok = false;
        }
    }
    let total: f64 = classes.values().flatten().map(|r| lat.area(r)).sum();
    let ratio = if e_measure > 0.0 { total / (e_measure / delta) } else { 0.0 };
    Ok(CoverDiagnostics {
        classes,
        unclassified,
        selected,
        ratio,
        disjoint,
        measure_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn lat() -> Lattice {
        Lattice::new(GridSpec::new(64, 1.0).unwrap(), 0.25, 2, 10.0).unwrap()
    }

    #[test]
    fn single_and_disjoint_pairs() {
        let lat = lat();
        let spec = *lat.spec();
        let e = IndicatorSet::full(spec);
        let r = Tile { l: 0, k: 2, i: 1, j: 1 };
        let v = VectorField::constant(&spec, r.omega().center()).unwrap();
        let d = density_cover(&lat, &[r], &e, &v, 0.5).unwrap();
        assert_eq!(d.selected[&0], vec![r]);
        // the ratio is |R|·δ/|E|
        assert!((d.ratio - lat.area(&r) * 0.5).abs() < 1e-12);
        // far apart, same slope interval: incomparable only on a large torus
        let big = Lattice::new(GridSpec::new(512, 1.0).unwrap(), 1.0 / 32.0, 0, 3.0).unwrap();
        let spec = *big.spec();
        let a = Tile { l: 0, k: 2, i: 0, j: 0 };
        let b = Tile { l: 0, k: 2, i: 16, j: 16 };
        let v = VectorField::constant(&spec, a.omega().center()).unwrap();
        let d = density_cover(&big, &[a, b], &IndicatorSet::full(spec), &v, 0.5).unwrap();
        assert_eq!(d.selected[&0].len(), 2);
        assert!(d.disjoint && d.measure_ok);
    }

    #[test]
    fn comparable_input_rejected() {
        let lat = lat();
        let spec = *lat.spec();
        let r = Tile { l: 0, k: 2, i: 1, j: 1 };
        let v = VectorField::constant(&spec, 0.0).unwrap();
        assert!(density_cover(&lat, &[r, r], &IndicatorSet::full(spec), &v, 0.5).is_err());
    }
}
