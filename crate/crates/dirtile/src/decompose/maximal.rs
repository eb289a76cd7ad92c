//! Maximal organization of one `(δ, σ)` stratum: the incomparable density
//! family `R`, the assignment `T ↦ R_T`, fibers `T_R`, disjoint-top subfamilies
//! and the strata `R_j`, `R_{j,k}`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Lattice, Tile, VectorField};
use crate::grid::IndicatorSet;

use super::cover::{least_shell, pairwise_incomparable, shell_gain};
use super::density::DensityStats;
use super::forest::ForestTree;
use super::size::length_cmp;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub tree: usize,
    pub r_tilde: Tile,
    pub r: Tile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub r: Tile,
    /// Indices into the stratum's tree list.
    pub trees: Vec<usize>,
    /// Disjoint-top subfamily.
    pub disjoint: Vec<usize>,
    /// `Σ_{T_R} |top|` and `Σ_{T̄_R} |top|`.
    pub top_area: f64,
    pub disjoint_area: f64,
    /// `j` with `Σ_{T_R}|top| ∈ [2^{−j−1}, 2^{−j})·|R|`.
    pub j: i32,
    /// Least shell `k` of the maximal-estimate condition, if any.
    pub k: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalOrganization {
    pub delta: f64,
    pub sigma: f64,
    /// `R̃ = {R : dense(R) ∈ (δ/2, δ]}`.
    pub r_tilde: Vec<Tile>,
    /// Pairwise incomparable subfamily, in selection order.
    pub r: Vec<Tile>,
    pub assignments: Vec<Assignment>,
    pub fibers: Vec<Fiber>,
    pub incomparable: bool,
    pub tops_disjoint: bool,
    pub chains_ok: bool,
    /// `min_R Σ_{T̄_R}|top| / Σ_{T_R}|top|`.
    pub coverage_constant: f64,
}

impl MaximalOrganization {
    /// `R_j`: fibers with the given `j`.
    pub fn r_j(&self, j: i32) -> impl Iterator<Item = &Fiber> {
        self.fibers.iter().filter(move |f| f.j == j)
    }

    pub fn r_jk(&self, j: i32, k: u32) -> impl Iterator<Item = &Fiber> {
        self.fibers.iter().filter(move |f| f.j == j && f.k == Some(k))
    }
}

/// `j` with `ratio ∈ [2^{−j−1}, 2^{−j})`.
pub fn coverage_index(ratio: f64) -> i32 {
    assert!(ratio > 0.0 && ratio.is_finite());
    let mut j = (-ratio.log2()).floor() as i32;
    while ratio >= (-j as f64).exp2() {
        j -= 1;
    }
    while ratio < ((-j - 1) as f64).exp2() {
        j += 1;
    }
    j
}

#[allow(clippy::too_many_arguments)]
pub fn maximal_organize(
    lat: &Lattice,
    trees: &[ForestTree],
    stats: &DensityStats,
    delta: f64,
    sigma: f64,
    e: &IndicatorSet,
    v: &VectorField,
) -> Result<MaximalOrganization> {
    let n = lat.tile_count();
    let r_tilde: Vec<Tile> = (0..n)
        .filter(|&id| stats.dense[id] > delta / 2.0 && stats.dense[id] <= delta)
        .map(|id| lat.tile(id))
        .collect();
    // greedy incomparable selection, remembering who removed each R̃
    let mut stock = r_tilde.clone();
    stock.sort_by(length_cmp);
    let mut remover: BTreeMap<Tile, Tile> = BTreeMap::new();
    let mut r = Vec::new();
    while let Some(&top) = stock.first() {
        stock.retain(|x| {
            if lat.tile_leq(x, &top) {
                remover.insert(*x, top);
                false
            } else {
                true
            }
        });
        if !remover.contains_key(&top) {
            return Err(Error::Internal("R ≤ R failed".into()));
        }
        r.push(top);
    }
    let in_tilde: std::collections::BTreeSet<Tile> = r_tilde.iter().cloned().collect();
    let rel = lat.relations();
    let mut assignments = Vec::new();
    for (idx, t) in trees.iter().enumerate() {
        let top = t.tree.top;
        let first = rel.above[lat.id(&top)]
            .iter()
            .map(|&x| lat.tile(x as usize))
            .find(|x| in_tilde.contains(x));
        let Some(rt) = first else {
            return Err(Error::Internal(format!(
                "tree with top {:?} has no dominating R̃ in the lattice",
                top
            )));
        };
        assignments.push(Assignment {
            tree: idx,
            r_tilde: rt,
            r: remover[&rt],
        });
    }
    let chains_ok = assignments.iter().all(|a| {
        lat.tile_leq(&trees[a.tree].tree.top, &a.r_tilde) && lat.tile_leq(&a.r_tilde, &a.r)
    });
    let mut by_r: BTreeMap<Tile, Vec<usize>> = BTreeMap::new();
    for a in &assignments {
        by_r.entry(a.r).or_default().push(a.tree);
    }
    let mut fibers = Vec::new();
    let mut tops_disjoint = true;
    let mut coverage_constant = f64::INFINITY;
    for rr in &r {
        let Some(list) = by_r.get(rr) else { continue };
        let mut order = list.clone();
        order.sort_by(|&a, &b| length_cmp(&trees[a].tree.top, &trees[b].tree.top).then(a.cmp(&b)));
        let mut disjoint = Vec::new();
        while let Some(&t) = order.first() {
            let tt = trees[t].tree.top;
            order.retain(|&x| {
                let xt = trees[x].tree.top;
                !(xt == tt || lat.tiles_intersect(&xt, &tt))
            });
            disjoint.push(t);
        }
        for (a, &ta) in disjoint.iter().enumerate() {
            for &tb in &disjoint[a + 1..] {
                let (pa, pb) = (trees[ta].tree.top, trees[tb].tree.top);
                if pa == pb || lat.tiles_intersect(&pa, &pb) {
                    tops_disjoint = false;
                }
            }
        }
        let top_area: f64 = list.iter().map(|&t| lat.area(&trees[t].tree.top)).sum();
        let disjoint_area: f64 = disjoint.iter().map(|&t| lat.area(&trees[t].tree.top)).sum();
        coverage_constant = coverage_constant.min(disjoint_area / top_area);
        let j = coverage_index(top_area / lat.area(rr));
        let k = least_shell(lat, rr, e, v, |k| shell_gain(k) * delta * lat.area(rr) / 100.0);
        fibers.push(Fiber {
            r: *rr,
            trees: list.clone(),
            disjoint,
            top_area,
            disjoint_area,
            j,
            k,
        });
    }
    Ok(MaximalOrganization {
        delta,
        sigma,
        incomparable: pairwise_incomparable(lat, &r),
        r_tilde,
        r,
        assignments,
        fibers,
        tops_disjoint,
        chains_ok,
        coverage_constant: if coverage_constant.is_finite() { coverage_constant } else { 1.0 },
    })
}
