//! The `(δ, σ)`-stratified partition of a tile set into trees.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::geometry::{Lattice, TileSet, Tree, TreeKind};
use crate::modelop::CoefficientTable;

use super::density::{density_stratify, DensityStats};
use super::size::{dyadic_above, size_iteration, size_of, LevelDiagnostics};

/// Exponent used for the `udense = 0` stratum.
pub const ZERO_DELTA: i32 = i32::MIN;

pub fn exp_value(e: i32) -> f64 {
    if e == ZERO_DELTA {
        0.0
    } else {
        (e as f64).exp2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestTree {
    pub tree: Tree,
    pub witness_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    /// `(δ exponent, σ exponent) → trees`.
    pub strata: BTreeMap<(i32, i32), Vec<ForestTree>>,
    /// Singleton trees for tiles left once `σ < σ_min`, by `δ` exponent.
    pub residual: BTreeMap<i32, Vec<Tree>>,
    pub diagnostics: BTreeMap<i32, Vec<LevelDiagnostics>>,
}

impl Forest {
    pub fn trees(&self) -> impl Iterator<Item = (&(i32, i32), &ForestTree)> {
        self.strata.iter().flat_map(|(k, v)| v.iter().map(move |t| (k, t)))
    }

    pub fn all_trees(&self) -> Vec<&Tree> {
        self.trees()
            .map(|(_, t)| &t.tree)
            .chain(self.residual.values().flatten())
            .collect()
    }

    /// Tree member sets are pairwise disjoint and cover `tiles`.
    pub fn partitions(&self, lat: &Lattice, tiles: &TileSet) -> bool {
        let mut seen = TileSet::new(lat.tile_count());
        for t in self.all_trees() {
            for s in &t.members {
                let id = lat.id(s);
                if seen.contains(id) {
                    return false;
                }
                seen.insert(id);
            }
        }
        &seen == tiles
    }

    pub fn tree_count(&self) -> usize {
        self.all_trees().len()
    }
}

/// Density strata, then the size iteration inside each stratum.
pub fn organize(lat: &Lattice, stats: &DensityStats, coeffs: &CoefficientTable, tiles: &TileSet, sigma_min: f64) -> Result<Forest> {
    let strata = density_stratify(lat, stats, tiles);
    let mut forest = Forest {
        strata: BTreeMap::new(),
        residual: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
    };
    let mut groups: Vec<(i32, &TileSet)> = strata.strata.iter().map(|(e, s)| (*e, s)).collect();
    if !strata.zero.is_empty() {
        groups.insert(0, (ZERO_DELTA, &strata.zero));
    }
    for (de, set) in groups {
        let s0 = size_of(lat, set, coeffs, None).size;
        let it = size_iteration(lat, set, coeffs, dyadic_above(s0).max(sigma_min), sigma_min)?;
        for (sigma, trees) in it.levels {
            if trees.is_empty() {
                continue;
            }
            let se = sigma.log2().round() as i32;
            forest.strata.entry((de, se)).or_default().extend(trees.into_iter().map(|t| ForestTree {
                tree: t.tree,
                witness_rms: t.witness_rms,
            }));
        }
        let res: Vec<Tree> = it
            .residual
            .iter()
            .map(|id| {
                let t = lat.tile(id);
                Tree {
                    top: t,
                    members: vec![t],
                    kind: TreeKind::General,
                }
            })
            .collect();
        if !res.is_empty() {
            forest.residual.insert(de, res);
        }
        forest.diagnostics.insert(de, it.diagnostics);
    }
    Ok(forest)
}
