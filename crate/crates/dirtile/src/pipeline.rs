//! One instance through the whole chain: packets, coefficients, densities,
//! forest, maximal organizations and the measured constants.

use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::decompose::text::{write_forest, write_organization};
use crate::decompose::{density_stats, maximal_organize, organize, DensityStats, Forest, MaximalOrganization};
use crate::decompose::forest::{exp_value, ZERO_DELTA};
use crate::error::{Error, Result};
use crate::geometry::{Tile, TileSet};
use crate::instance::Instance;
use crate::modelop::{coefficients, curved_pairings, CoefficientTable, Source};
use crate::wavepackets::{PacketBank, PacketKind};

pub struct Decomposition {
    pub tiles: Vec<Tile>,
    pub all: TileSet,
    /// `⟨1_F, φ_s⟩`.
    pub coeff_f: CoefficientTable,
    /// `⟨1_E, h_s⟩`.
    pub pair_e: CoefficientTable,
    pub stats: DensityStats,
    pub forest: Forest,
    /// By `(δ exponent, σ exponent)`, for strata with `δ > 0`.
    pub orgs: BTreeMap<(i32, i32), MaximalOrganization>,
}

/// Packet normalization and the `u ≡ 0` reduction on a few tiles; a miss is
/// an accuracy error.
pub fn accuracy_check(bank: &PacketBank) -> Result<()> {
    let lat = bank.lattice();
    let spec = *lat.spec();
    let zero = crate::geometry::VectorField::constant(&spec, 0.0)?;
    for id in [0, lat.tile_count() / 3, lat.tile_count() - 1] {
        let s = lat.tile(id);
        let phi = bank.make_packet(&s, PacketKind::Phi, None)?;
        let dev = (phi.space.norm_sq() - 1.0).abs();
        if dev > 1e-8 {
            return Err(Error::Accuracy { what: "packet norm".into(), achieved: dev, tolerance: 1e-8 });
        }
        let h = bank.make_packet(&s, PacketKind::Curved, Some(&zero))?;
        let a = bank.make_packet(&s, PacketKind::Alpha, None)?;
        let dev = h.space.sub(&a.space)?.max_abs() / a.space.max_abs().max(f64::MIN_POSITIVE);
        if dev > 1e-6 {
            return Err(Error::Accuracy { what: "curved packet at u = 0".into(), achieved: dev, tolerance: 1e-6 });
        }
    }
    Ok(())
}

pub fn decompose(cfg: &RunConfig, bank: &PacketBank, inst: &Instance) -> Result<Decomposition> {
    assemble(cfg, bank, inst, None)
}

/// Rebuilds a decomposition around a stored forest; coefficient tables,
/// densities and organizations are recomputed.
pub fn with_forest(cfg: &RunConfig, bank: &PacketBank, inst: &Instance, forest: Forest) -> Result<Decomposition> {
    let lat = bank.lattice();
    for t in forest.all_trees() {
        let in_lattice = lat.is_valid(&t.top) && t.members.iter().all(|s| lat.is_valid(s));
        if !in_lattice || !t.is_valid(lat) {
            return Err(Error::Parse(format!("forest tree with top {:?} is not a tree of this lattice", t.top)));
        }
    }
    assemble(cfg, bank, inst, Some(forest))
}

fn assemble(cfg: &RunConfig, bank: &PacketBank, inst: &Instance, forest: Option<Forest>) -> Result<Decomposition> {
    let lat = bank.lattice();
    let tiles = lat.enumerate_tiles(|_| true);
    let all = TileSet::full(lat.tile_count());
    let coeff_f = coefficients(bank, &inst.f.to_function(), &tiles, Source::F)?;
    let pair_e = curved_pairings(bank, &inst.e.to_function(), &tiles, &inst.v)?;
    let stats = density_stats(lat, &inst.e, &inst.v, cfg.constants.p_chi)?;
    let forest = match forest {
        Some(f) => f,
        None => organize(lat, &stats, &coeff_f, &all, cfg.constants.sigma_min)?,
    };
    let mut orgs = BTreeMap::new();
    for (&(de, se), trees) in &forest.strata {
        if de == ZERO_DELTA || trees.is_empty() {
            continue;
        }
        let org = maximal_organize(lat, trees, &stats, exp_value(de), exp_value(se), &inst.e, &inst.v)?;
        orgs.insert((de, se), org);
    }
    Ok(Decomposition { tiles, all, coeff_f, pair_e, stats, forest, orgs })
}

impl Decomposition {
    /// Forest text followed by one organization block per stratum.
    pub fn to_text(&self) -> (String, String) {
        let mut orgs = String::new();
        for ((de, se), org) in &self.orgs {
            orgs.push_str(&format!("stratum {de} {se}\n"));
            orgs.push_str(&write_organization(org));
        }
        (write_forest(&self.forest), orgs)
    }
}
