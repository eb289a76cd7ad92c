//! John–Nirenberg interval generations for a 1-tree.
//!
//! Intervals are dyadic `x₁`-intervals `(l, i)` of length `w·2^l`; the root is
//! the whole circle.

use std::collections::BTreeMap;

use crate::geometry::{Lattice, Tree};
use crate::modelop::CoefficientTable;

pub type Interval = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct JnLevels {
    pub threshold: f64,
    /// Generation `n` lists `I_n`.
    pub generations: Vec<Vec<Interval>>,
    /// `|∪I_n|`, with entry 0 the root length.
    pub measures: Vec<f64>,
    /// `|∪I_n| ≤ ½|∪I_{n−1}|` for all `n`.
    pub halving_ok: bool,
    /// Largest `|∪I_n| / |∪I_{n−1}|`.
    pub worst_ratio: f64,
}

const MAX_GENERATIONS: usize = 64;

/// `a_{I,K} = Σ_{I ⊆ J ⊆ K} A(J)` with `A(J) = Σ_{s: π₁(s) = J} |⟨f, φ_s⟩|²/|s|`;
/// generations of maximal `I` with `a_{I,K} > 100σ²`.
pub fn john_nirenberg_levels(lat: &Lattice, tree: &Tree, coeffs: &CoefficientTable, sigma: f64) -> JnLevels {
    let threshold = 100.0 * sigma * sigma;
    let root_level = lat.cells().trailing_zeros();
    let mut a: BTreeMap<Interval, f64> = BTreeMap::new();
    for s in &tree.members {
        *a.entry((s.l, s.i)).or_default() += coeffs.abs_sq(lat.id(s)) / lat.area(s);
    }
    let weight = |iv: Interval| a.get(&iv).copied().unwrap_or(0.0);
    // a_{I,K} for I ⊆ K
    let a_ik = |i: Interval, k: Interval| -> f64 {
        (i.0..=k.0).map(|l| weight((l, i.1 >> (l - i.0)))).sum()
    };
    // maximal I strictly inside K
    let maximal_in = |k: Interval| -> Vec<Interval> {
        let mut out = Vec::new();
        let mut stack = if k.0 > 0 { vec![(k.0 - 1, 2 * k.1 + 1), (k.0 - 1, 2 * k.1)] } else { vec![] };
        while let Some(iv) = stack.pop() {
            if a_ik(iv, k) > threshold {
                out.push(iv);
            } else if iv.0 > 0 {
                stack.push((iv.0 - 1, 2 * iv.1 + 1));
                stack.push((iv.0 - 1, 2 * iv.1));
            }
        }
        out.sort();
        out
    };
    let len = |iv: &Interval| lat.tile_len(iv.0);
    let mut generations = Vec::new();
    let mut measures = vec![lat.side()];
    let mut current = maximal_in((root_level, 0));
    let mut worst = 0.0f64;
    while !current.is_empty() && generations.len() < MAX_GENERATIONS {
        let m: f64 = current.iter().map(len).sum();
        worst = worst.max(m / measures.last().unwrap());
        measures.push(m);
        let next: Vec<Interval> = current
            .iter()
            .flat_map(|&k| maximal_in(k))
            .collect();
        generations.push(current);
        current = next;
    }
    JnLevels {
        threshold,
        halving_ok: worst <= 0.5 && current.is_empty(),
        generations,
        measures,
        worst_ratio: worst,
    }
}
