//! `size`, the size iteration and the PANTRY partition.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Lattice, Tile, TileSet, Tree, TreeKind};
use crate::modelop::CoefficientTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SizeResult {
    pub size: f64,
    /// Maximal 1-tree realizing the size; `None` when the size is 0.
    pub witness: Option<Tree>,
}

fn sum_sq(ids: impl Iterator<Item = usize>, coeffs: &CoefficientTable) -> f64 {
    ids.map(|id| coeffs.abs_sq(id)).sum()
}

/// Tiles `t` with `s ≤ t` for some `s` in the pool, ascending.
pub fn default_candidates(lat: &Lattice, pool: &TileSet) -> Vec<usize> {
    let rel = lat.relations();
    let mut cand = TileSet::new(lat.tile_count());
    for s in pool.iter() {
        for &t in &rel.above[s] {
            cand.insert(t as usize);
        }
    }
    cand.iter().collect()
}

/// Root-mean-square of the maximal 1-tree with top `t` inside `pool`.
pub fn one_tree_rms(lat: &Lattice, t: usize, pool: &TileSet, coeffs: &CoefficientTable) -> f64 {
    let top = lat.tile(t);
    let ids = lat.relations().below[t]
        .iter()
        .map(|&s| s as usize)
        .filter(|&s| pool.contains(s) && TreeKind::One.admits(&top, &lat.tile(s)));
    (sum_sq(ids, coeffs) / lat.area(&top)).sqrt()
}

/// `size(pool)`: the largest root-mean-square over 1-trees, scanning the
/// maximal 1-tree of every candidate top. Ties go to the smallest id.
pub fn size_of(lat: &Lattice, pool: &TileSet, coeffs: &CoefficientTable, candidates: Option<&[usize]>) -> SizeResult {
    let owned;
    let cand = match candidates {
        Some(c) => c,
        None => {
            owned = default_candidates(lat, pool);
            &owned
        }
    };
    let best = cand
        .par_iter()
        .map(|&t| (one_tree_rms(lat, t, pool, coeffs), t))
        .reduce(
            || (0.0, usize::MAX),
            |a, b| match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
                Ordering::Greater => a,
                Ordering::Less => b,
                Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    if best.0 == 0.0 {
        return SizeResult {
            size: 0.0,
            witness: None,
        };
    }
    let top = lat.tile(best.1);
    SizeResult {
        size: best.0,
        witness: Some(lat.maximal_tree_with_top(&top, pool, TreeKind::One)),
    }
}

/// Exhaustive oracle over every lattice top and every subset of a pool of at
/// most 12 tiles that forms a 1-tree with that top.
pub fn size_bruteforce(lat: &Lattice, pool: &[Tile], coeffs: &CoefficientTable) -> Result<f64> {
    if pool.len() > 12 {
        return Err(Error::config("pool", "brute force limited to 12 tiles"));
    }
    // id order, the summation order of `size_of`
    let mut pool = pool.to_vec();
    pool.sort_by_key(|s| lat.id(s));
    let mut best = 0.0f64;
    for t in 0..lat.tile_count() {
        let top = lat.tile(t);
        let area = lat.area(&top);
        for mask in 1u32..(1 << pool.len()) {
            let mut ok = true;
            let mut acc = 0.0;
            for (b, s) in pool.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    if !(lat.tile_leq(s, &top) && TreeKind::One.admits(&top, s)) {
                        ok = false;
                        break;
                    }
                    acc += coeffs.abs_sq(lat.id(s));
                }
            }
            if ok {
                best = best.max((acc / area).sqrt());
            }
        }
    }
    Ok(best)
}

/// "Most clockwise" order: larger `c(ω)` first, then longer, then lexicographic.
pub fn clockwise_cmp(a: &Tile, b: &Tile) -> Ordering {
    let (ca, cb) = (a.omega().center(), b.omega().center());
    cb.partial_cmp(&ca)
        .unwrap_or(Ordering::Equal)
        .then(b.l.cmp(&a.l))
        .then(a.cmp(b))
}

/// Maximal-length order: longer first, then lexicographic.
pub fn length_cmp(a: &Tile, b: &Tile) -> Ordering {
    b.l.cmp(&a.l).then(a.cmp(b))
}

/// Candidate tree with top `t` and `t` in the tree: members `s ≤ t` with
/// `ω_s = ω_t` or `ω_t ⊆ ω_{s,2}`.
pub fn top_in_tree_members(lat: &Lattice, t: usize, stock: &TileSet) -> Vec<usize> {
    let top = lat.tile(t);
    let wt = top.omega();
    lat.relations().below[t]
        .iter()
        .map(|&s| s as usize)
        .filter(|&s| {
            if !stock.contains(s) {
                return false;
            }
            let ws = lat.tile(s).omega();
            ws == wt || ws.left_half().contains(&wt)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedTree {
    pub tree: Tree,
    /// Root-mean-square of the top-in-tree candidate that triggered the selection.
    pub witness_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagnostics {
    pub sigma: f64,
    pub threshold: f64,
    pub selected: usize,
    pub residual_size: f64,
    /// `size(residual) < σ/2`.
    pub halving_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeIteration {
    /// `(σ, trees)` per dyadic level, in processing order.
    pub levels: Vec<(f64, Vec<SelectedTree>)>,
    pub diagnostics: Vec<LevelDiagnostics>,
    /// Tiles left when `σ` dropped below `σ_min`.
    pub residual: TileSet,
}

/// Smallest power of two strictly above `x`.
pub fn dyadic_above(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::MIN_POSITIVE;
    }
    let mut e = x.log2().floor() as i32;
    while (e as f64).exp2() <= x {
        e += 1;
    }
    while ((e - 1) as f64).exp2() > x {
        e -= 1;
    }
    (e as f64).exp2()
}

/// Selection loop over dyadic `σ` levels starting at `sigma_start`. At level
/// `σ` the threshold is `σ/(2C)`; tops are visited in clockwise order and the
/// maximal general tree under each qualifying top is removed.
pub fn size_iteration(
    lat: &Lattice,
    stratum: &TileSet,
    coeffs: &CoefficientTable,
    sigma_start: f64,
    sigma_min: f64,
) -> Result<SizeIteration> {
    let start_size = size_of(lat, stratum, coeffs, None).size;
    if !(start_size < sigma_start) {
        return Err(Error::config("sigma_start", format!("size {start_size} is not below {sigma_start}")));
    }
    let rel = lat.relations();
    let mut stock = stratum.clone();
    let mut levels = Vec::new();
    let mut diagnostics = Vec::new();
    let mut sigma = sigma_start;
    let mut guard = 0usize;
    while !stock.is_empty() && sigma >= sigma_min {
        let threshold = sigma / (2.0 * lat.c_const());
        let mut order: Vec<Tile> = stock.iter().map(|id| lat.tile(id)).collect();
        order.sort_by(clockwise_cmp);
        let mut trees = Vec::new();
        // rms values only shrink as the stock shrinks, so one ordered pass
        // picks the most clockwise qualifying top at every step
        for top in order {
            let t = lat.id(&top);
            if !stock.contains(t) {
                continue;
            }
            let cand = top_in_tree_members(lat, t, &stock);
            let rms = (sum_sq(cand.iter().cloned(), coeffs) / lat.area(&top)).sqrt();
            if rms >= threshold {
                let members: Vec<Tile> = rel.below[t]
                    .iter()
                    .map(|&s| s as usize)
                    .filter(|&s| stock.contains(s))
                    .map(|s| lat.tile(s))
                    .collect();
                for s in &members {
                    stock.remove(lat.id(s));
                }
                guard += 1;
                if guard > stratum.len() {
                    return Err(Error::Internal("size iteration did not terminate".into()));
                }
                trees.push(SelectedTree {
                    tree: Tree {
                        top,
                        members,
                        kind: TreeKind::General,
                    },
                    witness_rms: rms,
                });
            }
        }
        let residual_size = size_of(lat, &stock, coeffs, None).size;
        diagnostics.push(LevelDiagnostics {
            sigma,
            threshold,
            selected: trees.len(),
            residual_size,
            halving_ok: residual_size < sigma / 2.0,
        });
        levels.push((sigma, trees));
        sigma /= 2.0;
    }
    Ok(SizeIteration {
        levels,
        diagnostics,
        residual: stock,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PantryPartition {
    pub subtrees: Vec<Tree>,
    pub tops_disjoint: bool,
    pub tops_inside: bool,
    /// `Σ|top(T_t)|` and the bound `min(C², L²/|top(T)|)·|top(T)|`.
    pub top_area: f64,
    pub area_bound: f64,
}

/// Repeatedly takes a longest tile `t` left in the pantry and removes the
/// maximal subset `{s ≤ t}`.
pub fn pantry_partition(lat: &Lattice, tree: &Tree) -> PantryPartition {
    let mut pantry: Vec<Tile> = tree.members.clone();
    pantry.sort_by(length_cmp);
    let mut left = TileSet::from_tiles(lat, &tree.members);
    let mut subtrees = Vec::new();
    for t in pantry {
        let tid = lat.id(&t);
        if !left.contains(tid) {
            continue;
        }
        let members: Vec<Tile> = lat.relations().below[tid]
            .iter()
            .map(|&s| s as usize)
            .filter(|&s| left.contains(s))
            .map(|s| lat.tile(s))
            .collect();
        for s in &members {
            left.remove(lat.id(s));
        }
        subtrees.push(Tree {
            top: t,
            members,
            kind: TreeKind::General,
        });
    }
    let tops: Vec<Tile> = subtrees.iter().map(|t| t.top).collect();
    let mut tops_disjoint = true;
    for (a, ta) in tops.iter().enumerate() {
        for tb in &tops[a + 1..] {
            if lat.tiles_intersect(ta, tb) {
                tops_disjoint = false;
            }
        }
    }
    let tops_inside = tops.iter().all(|t| lat.spatially_leq(t, &tree.top));
    let top_area = tops.iter().map(|t| lat.area(t)).sum();
    let a = lat.area(&tree.top);
    let c = lat.c_const();
    let area_bound = (c * c).min(lat.side() * lat.side() / a) * a;
    PantryPartition {
        subtrees,
        tops_disjoint,
        tops_inside,
        top_area,
        area_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridFunction, GridSpec};
    use crate::modelop::{coefficients, Source};
    use crate::wavepackets::PacketBank;
    use num_complex::Complex64;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
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
    fn empty_pool_has_zero_size() {
        let lat = lat();
        let r = size_of(&lat, &TileSet::new(lat.tile_count()), &table(&lat, 1), None);
        assert_eq!(r.size, 0.0);
        assert!(r.witness.is_none());
    }

    #[test]
    fn single_tile_optimal_top_doubles_length() {
        let lat = lat();
        let c = table(&lat, 2);
        for id in [3usize, 40, 100] {
            let s = lat.tile(id);
            assert!(s.l < lat.l_max());
            let pool = TileSet::from_ids(lat.tile_count(), [id]);
            let r = size_of(&lat, &pool, &c, None);
            let expect = c.at(id).norm() / (2.0 * lat.area(&s)).sqrt();
            assert!((r.size - expect).abs() < 1e-14, "{} {}", r.size, expect);
            let w = r.witness.unwrap();
            assert_eq!(w.top.omega(), s.omega().left_half());
        }
    }

    #[test]
    fn matches_bruteforce_on_random_pools() {
        let lat = lat();
        let c = table(&lat, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            let mut ids: Vec<usize> = (0..lat.tile_count()).collect();
            ids.shuffle(&mut rng);
            let pool: Vec<Tile> = ids[..10].iter().map(|&i| lat.tile(i)).collect();
            let set = TileSet::from_tiles(&lat, &pool);
            let fast = size_of(&lat, &set, &c, None).size;
            let slow = size_bruteforce(&lat, &pool, &c).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn iteration_invariants() {
        let lat = lat();
        let bank = PacketBank::new(&lat).unwrap();
        let spec = *lat.spec();
        let f = GridFunction::from_real(
            spec,
            &(0..spec.len())
                .map(|p| {
                    let (x, y) = (spec.coord(p % 64), spec.coord(p / 64));
                    if (x - 0.4).powi(2) + (y - 0.5).powi(2) < 0.06 { 1.0 } else { 0.0 }
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let tiles = lat.enumerate_tiles(|_| true);
        let c = coefficients(&bank, &f, &tiles, Source::F).unwrap();
        let all = TileSet::full(lat.tile_count());
        let s0 = size_of(&lat, &all, &c, None).size;
        let it = size_iteration(&lat, &all, &c, dyadic_above(s0), 2f64.powi(-20)).unwrap();
        let mut seen = it.residual.clone();
        for (sigma, trees) in &it.levels {
            for t in trees {
                assert!(t.tree.contains_top());
                assert!(t.tree.is_valid(&lat));
                assert!(t.witness_rms >= sigma / (2.0 * lat.c_const()));
                assert!(size_of(&lat, &TileSet::from_tiles(&lat, &t.tree.members), &c, None).size < *sigma);
                let m = TileSet::from_tiles(&lat, &t.tree.members);
                assert!(m.is_disjoint(&seen));
                seen.union_with(&m);
            }
        }
        assert_eq!(seen, all);
        assert!(it.diagnostics.iter().all(|d| d.halving_ok));
        // deterministic
        assert_eq!(it, size_iteration(&lat, &all, &c, dyadic_above(s0), 2f64.powi(-20)).unwrap());
        assert!(size_iteration(&lat, &all, &c, s0, 1e-6).is_err());
    }

    #[test]
    fn iteration_on_empty_stratum() {
        let lat = lat();
        let it = size_iteration(&lat, &TileSet::new(lat.tile_count()), &table(&lat, 1), 1.0, 1e-6).unwrap();
        assert!(it.levels.is_empty());
    }

    #[test]
    fn pantry_examples() {
        let lat = lat();
        let top = Tile { l: 2, k: 9, i: 0, j: 1 };
        let single = Tree { top, members: vec![top], kind: TreeKind::General };
        let p = pantry_partition(&lat, &single);
        assert_eq!(p.subtrees, vec![single.clone()]);
        let all = TileSet::full(lat.tile_count());
        let t1 = lat.maximal_tree_with_top(&top, &all, TreeKind::One);
        let p = pantry_partition(&lat, &t1);
        assert!(p.tops_disjoint && p.tops_inside);
        assert!(p.top_area <= p.area_bound + 1e-12);
        let mut union: Vec<Tile> = p.subtrees.iter().flat_map(|t| t.members.clone()).collect();
        union.sort();
        assert_eq!(union, t1.members);
        // same-length tree: each subtree is one ≤-class
        let same: Vec<Tile> = t1.members.iter().cloned().filter(|s| s.l == 1).collect();
        let tr = Tree { top, members: same.clone(), kind: TreeKind::One };
        for sub in pantry_partition(&lat, &tr).subtrees {
            for s in &sub.members {
                assert!(lat.tile_leq(s, &sub.top));
            }
        }
    }

    #[test]
    fn dyadic_above_is_strict() {
        assert_eq!(dyadic_above(0.5), 1.0);
        assert_eq!(dyadic_above(0.3), 0.5);
        assert_eq!(dyadic_above(3.0), 4.0);
    }
}
