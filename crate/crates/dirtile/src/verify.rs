//! Measured constants: every `≲` of the argument as an `lhs / rhs` record,
//! plus the structural invariants of the decomposition.
//!
//! CSV columns: `inequality_id, instance_id, delta, sigma, k, j, p, eps, lhs,
//! rhs, ratio`. Empty cells are parameters that do not apply; an empty ratio
//! marks a degenerate record (`rhs` zero or not finite).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::decompose::cover::density_cover;
use crate::decompose::forest::{exp_value, Forest, ZERO_DELTA};
use crate::decompose::frame::{dilate_fits, dilate_mask, shell_mask};
use crate::decompose::jn::john_nirenberg_levels;
use crate::decompose::size::size_of;
use crate::decompose::square::{beta_weight, core_one_tree, tree_square_function, CORE_DILATION};
use crate::decompose::{density_stratify, MaximalOrganization, SquareKind};
use crate::error::{Error, Result};
use crate::geometry::{Lattice, TileSet, Tree, TreeKind};
use crate::grid::{GridFunction, IndicatorSet};
use crate::instance::Instance;
use crate::modelop::{bilinear_terms, coefficients, CoefficientTable, Source};
use crate::pipeline::Decomposition;
use crate::wavepackets::PacketBank;

/// Uniform size precondition: every subtree's root-mean-square is at most
/// this multiple of the tree's.
pub const UNIFORM_SIZE_FACTOR: f64 = 2.0;
/// Shells `k = 0..=MAX_SHELL` for the Bessel and `Δ_k` checks.
pub const MAX_SHELL: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub inequality_id: String,
    pub instance_id: String,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub k: Option<i64>,
    pub j: Option<i64>,
    pub p: Option<f64>,
    pub eps: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
}

impl ConstantReport {
    pub fn new(id: &str, instance: &str, lhs: f64, rhs: f64) -> Self {
        // an empty f64 sum is −0.0
        let (lhs, rhs) = (lhs + 0.0, rhs + 0.0);
        let ratio = (rhs > 0.0 && rhs.is_finite() && lhs.is_finite()).then(|| lhs / rhs);
        ConstantReport {
            inequality_id: id.into(),
            instance_id: instance.into(),
            delta: None,
            sigma: None,
            k: None,
            j: None,
            p: None,
            eps: None,
            lhs,
            rhs,
            ratio,
        }
    }

    pub fn delta(mut self, d: f64) -> Self {
        self.delta = Some(d);
        self
    }
    pub fn sigma(mut self, s: f64) -> Self {
        self.sigma = Some(s);
        self
    }
    pub fn k(mut self, k: i64) -> Self {
        self.k = Some(k);
        self
    }
    pub fn j(mut self, j: i64) -> Self {
        self.j = Some(j);
        self
    }
    pub fn p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }
    pub fn eps(mut self, e: f64) -> Self {
        self.eps = Some(e);
        self
    }

    pub fn is_degenerate(&self) -> bool {
        self.ratio.is_none()
    }
}

/// Exact structural facts about one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structural {
    pub instance_id: String,
    pub partition: bool,
    pub tops_in_trees: bool,
    /// Members sit in their tree's `udense` stratum; `size(T) < σ` and the
    /// selecting witness is at least `σ/(2C)`.
    pub strata_consistent: bool,
    pub residual_halving: bool,
    pub chains_ok: bool,
    pub incomparable: bool,
    pub tops_disjoint: bool,
    pub cover_disjoint: bool,
    pub jn_halving: bool,
    /// Inputs of the density cover that fall in no shell class.
    pub cover_unclassified: usize,
    /// Trees skipped by the `‖Δf‖₂` check for failing the uniform size precondition.
    pub bmo_skipped: usize,
    /// Largest `udense` attained only at `l_max`.
    pub truncated_tiles: usize,
}

impl Structural {
    pub fn all_ok(&self) -> bool {
        self.partition
            && self.tops_in_trees
            && self.strata_consistent
            && self.residual_halving
            && self.chains_ok
            && self.incomparable
            && self.tops_disjoint
            && self.cover_disjoint
            && self.jn_halving
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (ok, name) in [
            (self.partition, "partition"),
            (self.tops_in_trees, "tops_in_trees"),
            (self.strata_consistent, "strata_consistent"),
            (self.residual_halving, "residual_halving"),
            (self.chains_ok, "chains_ok"),
            (self.incomparable, "incomparable"),
            (self.tops_disjoint, "tops_disjoint"),
            (self.cover_disjoint, "cover_disjoint"),
            (self.jn_halving, "jn_halving"),
        ] {
            if !ok {
                v.push(name);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub records: Vec<ConstantReport>,
    pub structural: Structural,
}

/// Estimates 1 to 3 per `(δ, σ)` stratum: `Σ|top(T)|` against `|F|/σ²`,
/// `|E|/δ` and `|F|^{1−ε}|E|^ε/(δσ^{1+ε})`.
pub fn check_estimates(lat: &Lattice, forest: &Forest, e_measure: f64, f_measure: f64, eps: f64, instance: &str) -> Vec<ConstantReport> {
    let mut out = Vec::new();
    for (&(de, se), trees) in &forest.strata {
        let (delta, sigma) = (exp_value(de), exp_value(se));
        let lhs: f64 = trees.iter().map(|t| lat.area(&t.tree.top)).sum();
        out.push(ConstantReport::new("est_orthogonality", instance, lhs, f_measure / (sigma * sigma)).delta(delta).sigma(sigma));
        if de == ZERO_DELTA {
            continue;
        }
        out.push(ConstantReport::new("est_density", instance, lhs, e_measure / delta).delta(delta).sigma(sigma));
        let rhs = f_measure.powf(1.0 - eps) * e_measure.powf(eps) / (delta * sigma.powf(1.0 + eps));
        out.push(ConstantReport::new("est_maximal", instance, lhs, rhs).delta(delta).sigma(sigma).eps(eps));
    }
    out
}

/// `Σ_{s∈T} |⟨1_F, φ_s⟩⟨1_E, h_s⟩|` against `δσ|top(T)|` with `δ` the largest
/// member `udense` and `σ` the realized size.
pub fn check_tree_lemma(lat: &Lattice, tree: &Tree, coeff_f: &CoefficientTable, pair_e: &CoefficientTable, udense: &[f64], sigma: f64, instance: &str) -> ConstantReport {
    let terms = bilinear_terms(coeff_f, pair_e, lat, &tree.members);
    let delta = tree.members.iter().map(|s| udense[lat.id(s)]).fold(0.0, f64::max);
    ConstantReport::new("tree_lemma", instance, terms.total, delta * sigma * lat.area(&tree.top)).delta(delta).sigma(sigma)
}

/// `Ω_k` around `CORE_DILATION·top` (truncated to the torus), `f·1_{Ω_k}` and
/// its coefficients on the core.
pub struct Shell {
    pub k: u32,
    pub mask: IndicatorSet,
    pub restricted: GridFunction,
    pub coeffs: CoefficientTable,
}

/// Non-empty shells `k = 0..=MAX_SHELL`.
pub fn shells(bank: &PacketBank, core: &Tree, f: &GridFunction) -> Result<Vec<Shell>> {
    let lat = bank.lattice();
    let mut out = Vec::new();
    for k in 0..=MAX_SHELL {
        let mask = shell_mask(lat, &core.top, CORE_DILATION, k);
        if mask.is_empty() {
            continue;
        }
        let restricted = f.mul(&mask.to_function())?;
        let coeffs = coefficients(bank, &restricted, &core.members, Source::Other)?;
        out.push(Shell { k, mask, restricted, coeffs });
    }
    Ok(out)
}

/// `Σ_{s∈T} |⟨f1_{Ω_k}, φ_s⟩|²` against `‖f1_{Ω_k}‖²`.
pub fn check_bessel_shells(lat: &Lattice, core: &Tree, shells: &[Shell], instance: &str) -> Vec<ConstantReport> {
    shells
        .iter()
        .map(|sh| {
            let lhs: f64 = core.members.iter().map(|s| sh.coeffs.abs_sq(lat.id(s))).sum();
            ConstantReport::new("bessel_shell", instance, lhs, sh.restricted.norm_sq()).k(sh.k as i64)
        })
        .collect()
}

/// Largest root-mean-square over subtrees `{s ∈ T : s ≤ t}`, `t ∈ T ∪ {top}`.
pub fn uniform_size(lat: &Lattice, tree: &Tree, coeffs: &CoefficientTable) -> f64 {
    let members = TileSet::from_tiles(lat, &tree.members);
    let rel = lat.relations();
    std::iter::once(&tree.top)
        .chain(tree.members.iter())
        .map(|t| {
            let sum: f64 = rel.below[lat.id(t)].iter().map(|&s| s as usize).filter(|&s| members.contains(s)).map(|s| coeffs.abs_sq(s)).sum();
            (sum / lat.area(t)).sqrt()
        })
        .fold(0.0, f64::max)
}

pub struct SquareChecks {
    pub records: Vec<ConstantReport>,
    pub bmo_skipped: bool,
    pub jn_halving: bool,
}

/// `‖Δf‖_p` against `‖fβ_{N,T}‖_p`, `‖Δ_k f‖_p` against `‖1_{Ω_k} f‖_p`,
/// `‖Δf‖₂` against `|top|^{−1/2}∫_{C·top} Δf` under the uniform size
/// precondition, and the interval halving.
#[allow(clippy::too_many_arguments)]
pub fn check_square_function(
    lat: &Lattice,
    core: &Tree,
    f: &GridFunction,
    coeffs: &CoefficientTable,
    shells: &[Shell],
    p_list: &[f64],
    n_decay: u32,
    instance: &str,
) -> Result<SquareChecks> {
    let mut records = Vec::new();
    let delta = tree_square_function(lat, core, coeffs, SquareKind::Cells);
    let fb = f.mul(&beta_weight(lat, core, n_decay))?;
    for ((&p, a), b) in p_list.iter().zip(delta.lp_norms(p_list)).zip(fb.lp_norms(p_list)) {
        records.push(ConstantReport::new("square_lp", instance, a, b).p(p));
    }
    for sh in shells.iter().filter(|sh| sh.k >= 1) {
        let dk = tree_square_function(lat, core, &sh.coeffs, SquareKind::Cells);
        for ((&p, a), b) in p_list.iter().zip(dk.lp_norms(p_list)).zip(sh.restricted.lp_norms(p_list)) {
            records.push(ConstantReport::new("delta_k", instance, a, b).k(sh.k as i64).p(p));
        }
    }
    let total: f64 = core.members.iter().map(|s| coeffs.abs_sq(lat.id(s))).sum();
    let rms = (total / lat.area(&core.top)).sqrt();
    let uni = uniform_size(lat, core, coeffs);
    let bmo_skipped = !(uni <= UNIFORM_SIZE_FACTOR * rms) || total == 0.0;
    if !bmo_skipped {
        let mask = dilate_mask(lat, &core.top, lat.c_const());
        let integral = mask.weighted_measure(&delta)?;
        records.push(ConstantReport::new("square_bmo", instance, delta.l2_norm(), integral / lat.area(&core.top).sqrt()));
    }
    let jn = john_nirenberg_levels(lat, core, coeffs, uni);
    records.push(ConstantReport::new("jn_halving", instance, jn.worst_ratio, 0.5).sigma(uni));
    Ok(SquareChecks { records, bmo_skipped, jn_halving: jn.halving_ok })
}

/// `|σ^{−ε}top ∩ F| / |σ^{−ε}top|` against `σ^{1+ε}`; `None` when the dilate
/// leaves the torus.
pub fn check_intersection_lemma(lat: &Lattice, tree: &Tree, f: &IndicatorSet, sigma: f64, eps: f64, instance: &str) -> Option<ConstantReport> {
    if sigma <= 0.0 {
        return Some(ConstantReport::new("intersection", instance, 0.0, 0.0).sigma(sigma).eps(eps));
    }
    let rho = sigma.powf(-eps);
    if !dilate_fits(lat, &tree.top, rho) {
        return None;
    }
    let m = dilate_mask(lat, &tree.top, rho);
    let inter = m.intersection(f).ok()?.measure();
    Some(ConstantReport::new("intersection", instance, inter / m.measure(), sigma.powf(1.0 + eps)).sigma(sigma).eps(eps))
}

/// `Σ_{δ,σ} Σ_T δσ|top(T)|` against `|F|^{1/p}|E|^{1−1/p}`.
pub fn balance_aggregate(lat: &Lattice, forest: &Forest, e_measure: f64, f_measure: f64, p: f64, instance: &str) -> ConstantReport {
    let lhs: f64 = forest
        .trees()
        .map(|(&(de, se), t)| exp_value(de) * exp_value(se) * lat.area(&t.tree.top))
        .sum();
    ConstantReport::new("balance_aggregate", instance, lhs, f_measure.powf(1.0 / p) * e_measure.powf(1.0 - 1.0 / p)).p(p)
}

/// `Σ_σ δσ·min(|E|/δ, |F|/σ²)` over dyadic `σ ∈ [σ_min, 1]`, divided by `√(δ|E||F|)`.
pub fn claim_basic_ratio(delta: f64, e_measure: f64, f_measure: f64, sigma_min: f64) -> f64 {
    let mut sum = 0.0;
    let mut sigma = 1.0f64;
    while sigma >= sigma_min {
        sum += delta * sigma * (e_measure / delta).min(f_measure / (sigma * sigma));
        sigma /= 2.0;
    }
    sum / (delta * e_measure * f_measure).sqrt()
}

/// `|F ∩ 2^k R| / |2^k R|` against `2^{−j}σ^{1+3ε}(σ^{−ε}/2^k)²` for fibers in `R_{j,k}`.
pub fn claim_rjk(lat: &Lattice, org: &MaximalOrganization, f: &IndicatorSet, eps: f64, instance: &str) -> Vec<ConstantReport> {
    let sigma = org.sigma;
    let mut out = Vec::new();
    for fib in &org.fibers {
        let Some(k) = fib.k else { continue };
        let rho = (k as f64).exp2();
        if !dilate_fits(lat, &fib.r, rho) {
            continue;
        }
        let m = dilate_mask(lat, &fib.r, rho);
        let lhs = m.intersection(f).map(|x| x.measure()).unwrap_or(0.0) / m.measure();
        let rhs = (-(fib.j as f64)).exp2() * sigma.powf(1.0 + 3.0 * eps) * (sigma.powf(-eps) / rho).powi(2);
        out.push(ConstantReport::new("claim_rjk", instance, lhs, rhs).delta(org.delta).sigma(sigma).k(k as i64).j(fib.j as i64).eps(eps));
    }
    out
}

/// Every check on one decomposed instance.
pub fn run_checks(cfg: &RunConfig, bank: &PacketBank, inst: &Instance, d: &Decomposition) -> Result<InstanceReport> {
    let lat = bank.lattice();
    let id = inst.id();
    let id = id.as_str();
    let k = &cfg.constants;
    let (em, fm) = (inst.e.measure(), inst.f.measure());
    let f_fn = inst.f.to_function();
    let mut records = check_estimates(lat, &d.forest, em, fm, k.eps, id);

    // structure
    let partition = d.forest.partitions(lat, &d.all);
    let tops_in_trees = d.forest.all_trees().iter().all(|t| t.contains_top());
    let strata = density_stratify(lat, &d.stats, &d.all);
    let mut strata_consistent = true;
    let residual_halving = d.forest.diagnostics.values().flatten().all(|l| l.halving_ok);

    let mut bmo_skipped = 0;
    let mut jn_halving = true;
    for (&(de, se), trees) in &d.forest.strata {
        let sigma_level = exp_value(se);
        let stratum = if de == ZERO_DELTA { &strata.zero } else { strata.strata.get(&de).unwrap_or(&strata.zero) };
        for t in trees {
            let pool = TileSet::from_tiles(lat, &t.tree.members);
            let realized = size_of(lat, &pool, &d.coeff_f, None).size;
            let in_stratum = t.tree.members.iter().all(|s| stratum.contains(lat.id(s)));
            if !(in_stratum && realized < sigma_level && t.witness_rms >= sigma_level / (2.0 * lat.c_const())) {
                strata_consistent = false;
            }
            records.push(check_tree_lemma(lat, &t.tree, &d.coeff_f, &d.pair_e, &d.stats.udense, realized, id));
            if let Some(r) = check_intersection_lemma(lat, &t.tree, &inst.f, realized, k.eps, id) {
                records.push(r);
            }
            // the 1-tree lemmas apply to the full maximal 1-tree under the top
            let core = core_one_tree(lat, &lat.maximal_tree_with_top(&t.tree.top, &d.all, TreeKind::One));
            if core.is_empty() {
                continue;
            }
            let sh = shells(bank, &core, &f_fn)?;
            records.extend(check_bessel_shells(lat, &core, &sh, id));
            let sq = check_square_function(lat, &core, &f_fn, &d.coeff_f, &sh, &k.p_list, k.n_decay, id)?;
            records.extend(sq.records);
            bmo_skipped += sq.bmo_skipped as usize;
            jn_halving &= sq.jn_halving;
        }
    }

    // maximal organizations and the density cover, once per δ
    let mut chains_ok = true;
    let mut incomparable = true;
    let mut tops_disjoint = true;
    let mut cover_disjoint = true;
    let mut cover_unclassified = 0;
    let mut covered = std::collections::BTreeSet::new();
    for (&(de, _), org) in &d.orgs {
        chains_ok &= org.chains_ok;
        incomparable &= org.incomparable;
        tops_disjoint &= org.tops_disjoint;
        for fib in &org.fibers {
            records.push(ConstantReport::new("disjoint_tops", id, fib.disjoint_area, fib.top_area).delta(org.delta).sigma(org.sigma).j(fib.j as i64));
        }
        records.extend(claim_rjk(lat, org, &inst.f, k.eps, id));
        if covered.insert(de) {
            let cover = density_cover(lat, &org.r, &inst.e, &inst.v, org.delta / 2.0)?;
            cover_disjoint &= cover.disjoint && cover.measure_ok;
            cover_unclassified += cover.unclassified.len();
            let lhs: f64 = cover.classes.values().flatten().map(|r| lat.area(r)).sum();
            records.push(ConstantReport::new("density_cover", id, lhs, em / (org.delta / 2.0)).delta(org.delta));
            records.push(ConstantReport::new("claim_basic", id, claim_basic_ratio(org.delta, em, fm, k.sigma_min), 1.0).delta(org.delta));
        }
    }

    // aggregates
    let terms = bilinear_terms(&d.coeff_f, &d.pair_e, lat, &d.tiles);
    for &p in &k.p_list {
        records.push(balance_aggregate(lat, &d.forest, em, fm, p, id));
        records.push(ConstantReport::new("weak_type", id, terms.total, fm.powf(1.0 / p) * em.powf(1.0 - 1.0 / p)).p(p));
    }
    let size_all = size_of(lat, &d.all, &d.coeff_f, None).size;
    let f_sup = if inst.f.is_empty() { 0.0 } else { 1.0 };
    records.push(ConstantReport::new("size_claim", id, size_all, f_sup));
    records.push(ConstantReport::new("bessel", id, d.coeff_f.bessel_constant(lat, f_fn.norm_sq()) * f_fn.norm_sq(), f_fn.norm_sq()));

    Ok(InstanceReport {
        records,
        structural: Structural {
            instance_id: id.into(),
            partition,
            tops_in_trees,
            strata_consistent,
            residual_halving,
            chains_ok,
            incomparable,
            tops_disjoint,
            cover_disjoint,
            jn_halving,
            cover_unclassified,
            bmo_skipped,
            truncated_tiles: d.stats.truncated.len(),
        },
    })
}

fn opt<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(String::new, |v| v.to_string())
}

pub const CSV_HEADER: [&str; 11] = ["inequality_id", "instance_id", "delta", "sigma", "k", "j", "p", "eps", "lhs", "rhs", "ratio"];

pub fn write_csv<W: Write>(out: W, records: &[ConstantReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.inequality_id.clone(),
            r.instance_id.clone(),
            opt(&r.delta),
            opt(&r.sigma),
            opt(&r.k),
            opt(&r.j),
            opt(&r.p),
            opt(&r.eps),
            r.lhs.to_string(),
            r.rhs.to_string(),
            opt(&r.ratio),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<ConstantReport>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let parse_err = |e: &dyn std::fmt::Display| Error::Parse(format!("csv: {e}"));
    let headers = rd.headers().map_err(|e| parse_err(&e))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse("csv: unexpected header".into()));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| parse_err(&e))?;
        let f = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| parse_err(&e))
            }
        };
        let int = |i: usize| -> Result<Option<i64>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| parse_err(&e))
            }
        };
        out.push(ConstantReport {
            inequality_id: rec[0].to_string(),
            instance_id: rec[1].to_string(),
            delta: f(2)?,
            sigma: f(3)?,
            k: int(4)?,
            j: int(5)?,
            p: f(6)?,
            eps: f(7)?,
            lhs: f(8)?.unwrap_or(f64::NAN),
            rhs: f(9)?.unwrap_or(f64::NAN),
            ratio: f(10)?,
        });
    }
    Ok(out)
}

/// Least-squares decay exponent `N̂` of `ratio ≈ c·2^{−N̂k}`; `None` with fewer
/// than two positive points.
pub fn fit_decay(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0 && p.1.is_finite()).map(|&(k, r)| (k, r.log2())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdSummary {
    pub count: usize,
    pub degenerate: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

/// Per-id extremes plus the fitted shell decay exponents (`bessel_decay`,
/// `delta_k_decay_p<p>`), fitted on the envelope of per-`k` maxima over
/// `k = 1..=3`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub ids: BTreeMap<String, IdSummary>,
    pub fits: BTreeMap<String, f64>,
}

fn envelope(records: &[ConstantReport], id: &str, p: Option<f64>) -> Vec<(f64, f64)> {
    let mut m: BTreeMap<i64, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.inequality_id == id && r.p == p) {
        if let (Some(k), Some(x)) = (r.k, r.ratio) {
            if k >= 1 {
                let e = m.entry(k).or_insert(0.0);
                *e = e.max(x);
            }
        }
    }
    m.into_iter().map(|(k, x)| (k as f64, x)).collect()
}

pub fn summarize(records: &[ConstantReport]) -> Summary {
    let mut ids: BTreeMap<String, IdSummary> = BTreeMap::new();
    for r in records {
        let e = ids.entry(r.inequality_id.clone()).or_insert(IdSummary {
            count: 0,
            degenerate: 0,
            max_ratio: f64::NEG_INFINITY,
            min_ratio: f64::INFINITY,
        });
        e.count += 1;
        match r.ratio {
            Some(x) => {
                e.max_ratio = e.max_ratio.max(x);
                e.min_ratio = e.min_ratio.min(x);
            }
            None => e.degenerate += 1,
        }
    }
    let mut fits = BTreeMap::new();
    if let Some(n) = fit_decay(&envelope(records, "bessel_shell", None)) {
        fits.insert("bessel_decay".to_string(), n);
    }
    let ps: std::collections::BTreeSet<u64> = records.iter().filter(|r| r.inequality_id == "delta_k").filter_map(|r| r.p.map(f64::to_bits)).collect();
    for pb in ps {
        let p = f64::from_bits(pb);
        if let Some(n) = fit_decay(&envelope(records, "delta_k", Some(p))) {
            fits.insert(format!("delta_k_decay_p{p}"), n);
        }
    }
    Summary { ids, fits }
}

/// Regression thresholds: `caps` bound the largest ratio per id (or fit),
/// `floors` the smallest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default)]
    pub caps: BTreeMap<String, f64>,
    #[serde(default)]
    pub floors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub id: String,
    pub value: f64,
    pub limit: f64,
    pub kind: &'static str,
}

impl Caps {
    pub fn from_json(text: &str) -> Result<Caps> {
        let c: Caps = serde_json::from_str(text).map_err(|e| Error::config("cap_file", e.to_string()))?;
        for (k, v) in c.caps.iter().chain(c.floors.iter()) {
            if !v.is_finite() {
                return Err(Error::config("cap_file", format!("{k}: limit must be finite")));
            }
        }
        Ok(c)
    }

    pub fn check(&self, s: &Summary) -> Vec<Violation> {
        let value = |id: &str, max: bool| -> Option<f64> {
            s.fits.get(id).copied().or_else(|| s.ids.get(id).filter(|x| x.count > x.degenerate).map(|x| if max { x.max_ratio } else { x.min_ratio }))
        };
        let mut out = Vec::new();
        for (id, &cap) in &self.caps {
            if let Some(v) = value(id, true) {
                if !(v <= cap) {
                    out.push(Violation { id: id.clone(), value: v, limit: cap, kind: "cap" });
                }
            }
        }
        for (id, &floor) in &self.floors {
            if let Some(v) = value(id, false) {
                if !(v >= floor) {
                    out.push(Violation { id: id.clone(), value: v, limit: floor, kind: "floor" });
                }
            }
        }
        out
    }
}
