//! Tree square functions `Δ`, `Δ_k` and the column variant `Δ̃`.

use num_complex::Complex64;

use crate::error::Result;
use crate::geometry::{Lattice, Tree, TreeKind};
use crate::grid::{GridFunction, IndicatorSet};
use crate::modelop::{coefficients, CoefficientTable, Source};
use crate::wavepackets::PacketBank;

use super::frame::{rasterize, shell_mask, TileFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SquareKind {
    /// `1_s/|s|`.
    Cells,
    /// `1_{s̃}/|s|` with `s̃ = π₁(s) × C·π₂(top)`.
    Columns,
}

/// `(Σ_{s∈T} |⟨f, φ_s⟩|²·1_s/|s|)^{1/2}` or its column variant.
pub fn tree_square_function(lat: &Lattice, tree: &Tree, coeffs: &CoefficientTable, kind: SquareKind) -> GridFunction {
    let spec = *lat.spec();
    let mut acc = vec![0.0f64; spec.len()];
    match kind {
        SquareKind::Cells => {
            for s in &tree.members {
                let v = coeffs.abs_sq(lat.id(s)) / lat.area(s);
                for p in rasterize(lat, s) {
                    acc[p] += v;
                }
            }
        }
        SquareKind::Columns => {
            let frame = TileFrame::new(lat, &tree.top);
            let n = spec.n();
            for s in &tree.members {
                let v = coeffs.abs_sq(lat.id(s)) / lat.area(s);
                let len = lat.tile_len(s.l);
                let x_lo = s.i as f64 * len;
                for (p, a) in acc.iter_mut().enumerate() {
                    let (x, y) = (spec.coord(p % n), spec.coord(p / n));
                    if frame.in_column_strip(x, y, x_lo, len, lat.c_const()) {
                        *a += v;
                    }
                }
            }
        }
    }
    GridFunction::from_real(spec, &acc.iter().map(|a| a.sqrt()).collect::<Vec<_>>()).expect("grid length")
}

/// Dilation of the top that bounds a core and is the base of the shells.
pub const CORE_DILATION: f64 = 2.0;

/// Members of the maximal 1-subtree lying inside `CORE_DILATION·top`.
pub fn core_one_tree(lat: &Lattice, tree: &Tree) -> Tree {
    let top = lat.parallelogram(&tree.top).dilate(CORE_DILATION);
    let members = tree
        .members
        .iter()
        .filter(|s| TreeKind::One.admits(&tree.top, s) && top.contains(&lat.parallelogram(s), lat.side()))
        .cloned()
        .collect();
    Tree {
        top: tree.top,
        members,
        kind: TreeKind::One,
    }
}

/// Coefficients of `f·1_Ω` on the tree members.
pub fn masked_coefficients(bank: &PacketBank, tree: &Tree, f: &GridFunction, mask: &IndicatorSet) -> Result<CoefficientTable> {
    let g = f.mul(&mask.to_function())?;
    coefficients(bank, &g, &tree.members, Source::Other)
}

/// `Δ_k f` with shell `Ω_k` around `CORE_DILATION·top`; `None` when the shell is empty.
pub fn delta_k(bank: &PacketBank, tree: &Tree, f: &GridFunction, k: u32) -> Result<Option<(GridFunction, IndicatorSet)>> {
    let lat = bank.lattice();
    let shell = shell_mask(lat, &tree.top, CORE_DILATION, k);
    if shell.is_empty() {
        return Ok(None);
    }
    let c = masked_coefficients(bank, tree, f, &shell)?;
    Ok(Some((tree_square_function(lat, tree, &c, SquareKind::Cells), shell)))
}

/// `β_{N,T} = 1/(1 + |a/len|^N + |b/w|^N)` in the frame of the top; sup 1.
pub fn beta_weight(lat: &Lattice, tree: &Tree, n_exp: u32) -> GridFunction {
    let f = TileFrame::new(lat, &tree.top);
    GridFunction::from_fn(*lat.spec(), |x, y| {
        let (a, b) = f.coords(x, y);
        Complex64::new(1.0 / (1.0 + (a / f.len).abs().powi(n_exp as i32) + (b / f.w).abs().powi(n_exp as i32)), 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Tile, TileSet};
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat() -> Lattice {
        Lattice::new(GridSpec::new(64, 1.0).unwrap(), 0.25, 2, 10.0).unwrap()
    }

    fn table(lat: &Lattice, seed: u64) -> CoefficientTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = lat.tile_count();
        CoefficientTable {
            present: TileSet::full(n),
            values: (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
            source: Source::Other,
        }
    }

    #[test]
    fn single_tile_and_parseval() {
        let lat = lat();
        let c = table(&lat, 1);
        let s = Tile { l: 1, k: 3, i: 1, j: 2 };
        let t = Tree { top: s, members: vec![s], kind: TreeKind::General };
        let d = tree_square_function(&lat, &t, &c, SquareKind::Cells);
        let expect = c.at(lat.id(&s)).norm() / lat.area(&s).sqrt();
        let pts = rasterize(&lat, &s);
        for (p, z) in d.samples().iter().enumerate() {
            let want = if pts.contains(&p) { expect } else { 0.0 };
            assert!((z.re - want).abs() < 1e-14);
        }
        let top = Tile { l: 2, k: 9, i: 0, j: 1 };
        let tree = lat.maximal_tree_with_top(&top, &TileSet::full(lat.tile_count()), TreeKind::One);
        let d = tree_square_function(&lat, &tree, &c, SquareKind::Cells);
        let sum: f64 = tree.members.iter().map(|s| c.abs_sq(lat.id(s))).sum();
        assert!((d.norm_sq() - sum).abs() <= 1e-12 * sum);
        // columns dominate cells pointwise
        let dc = tree_square_function(&lat, &core_one_tree(&lat, &tree), &c, SquareKind::Columns);
        let dd = tree_square_function(&lat, &core_one_tree(&lat, &tree), &c, SquareKind::Cells);
        for (a, b) in dc.samples().iter().zip(dd.samples()) {
            assert!(a.re + 1e-14 >= b.re);
        }
    }
}
