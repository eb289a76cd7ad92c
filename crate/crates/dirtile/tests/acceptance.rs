//! Acceptance run: one PASS/FAIL line per criterion, with its parts below it.
//!
//! Runs without the libtest harness so the lines always reach stdout. Exits
//! non-zero when a criterion fails, except for parts listed in
//! `KNOWN_LIMITATIONS` (see README, "Known limitations").

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dirtile::config::RunConfig;
use dirtile::decompose::size::{size_bruteforce, size_of};
use dirtile::decompose::square::tree_square_function;
use dirtile::decompose::SquareKind;
use dirtile::geometry::{FrequencyInterval, Lattice, Tile, TileSet, TreeKind, VectorField};
use dirtile::grid::{GridFunction, GridSpec};
use dirtile::instance::Instance;
use dirtile::modelop::{averaged_model_reconstruction, coefficients, constant_field_oracle, fit_scalar, periodization_check, CoefficientTable, Source};
use dirtile::pipeline::decompose;
use dirtile::verify::{claim_basic_ratio, run_checks, summarize, Caps, ConstantReport, Structural, Summary};
use dirtile::wavepackets::{band_projection, PacketBank, PacketKind};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const STRUCTURAL_BUDGET: Duration = Duration::from_secs(600);
const PARSEVAL_TOL: f64 = 1e-10;
const PACKET_NORM_TOL: f64 = 1e-8;
const ORTHOGONALITY_TOL: f64 = 1e-9;
const DELTA_PARSEVAL_TOL: f64 = 1e-12;
const PERIODIZATION_TOL: f64 = 1e-8;
const ZERO_FIELD_TOL: f64 = 1e-6;
const COEFFICIENT_TOL: f64 = 1e-10;
const ORACLE_REL_TOL: f64 = 0.02;
const STABILITY_FACTOR: f64 = 2.0;
const DECAY_MIN: f64 = 4.0;
const CLAIM_BASIC_MAX: f64 = 4.0;

/// Parts expected to fail at the shipped resolutions.
const KNOWN_LIMITATIONS: [&str; 2] = ["bessel shell decay", "delta_k decay"];

struct Part {
    name: String,
    ok: bool,
    detail: String,
}

fn part(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Part {
    Part { name: name.into(), ok, detail: detail.into() }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lattice(n: usize, w: f64, l_max: u32, c: f64) -> Lattice {
    Lattice::new(GridSpec::new(n, 1.0).unwrap(), w, l_max, c).unwrap()
}

fn random_fn(spec: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    let s = (0..spec.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    GridFunction::from_samples(spec, s).unwrap()
}

fn random_table(lat: &Lattice, rng: &mut ChaCha8Rng) -> CoefficientTable {
    let n = lat.tile_count();
    CoefficientTable {
        present: TileSet::full(n),
        values: (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
        source: Source::Other,
    }
}

struct Sweep {
    records: Vec<ConstantReport>,
    structural: Vec<Structural>,
    summary: Summary,
    elapsed: Duration,
}

fn sweep(config: &str) -> Sweep {
    let cfg = RunConfig::load(&root().join("configs").join(config)).unwrap();
    let t = Instant::now();
    let bank = PacketBank::new(&cfg.lattice().unwrap()).unwrap();
    let per: Vec<(Vec<ConstantReport>, Structural)> = cfg
        .sweep
        .seed_list()
        .par_iter()
        .map(|&seed| {
            let inst = Instance::generate(&cfg, seed).unwrap();
            let d = decompose(&cfg, &bank, &inst).unwrap();
            let r = run_checks(&cfg, &bank, &inst, &d).unwrap();
            (r.records, r.structural)
        })
        .collect();
    let elapsed = t.elapsed();
    let (records, structural): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    let records: Vec<ConstantReport> = records.into_iter().flatten().collect();
    let summary = summarize(&records);
    Sweep { records, structural, summary, elapsed }
}

fn criterion_1(s: &Sweep) -> Vec<Part> {
    let n = s.structural.len();
    let count = |f: fn(&Structural) -> bool| s.structural.iter().filter(|x| f(x)).count();
    let mut parts = vec![part("instances", n == 50, format!("{n} at n = 128"))];
    for (name, c) in [
        ("forest partitions its input", count(|x| x.partition)),
        ("every tree contains its top", count(|x| x.tops_in_trees)),
        ("stratum membership matches udense and size", count(|x| x.strata_consistent)),
        ("size iteration residual < sigma/2", count(|x| x.residual_halving)),
        ("organization tops pairwise disjoint", count(|x| x.tops_disjoint && x.chains_ok && x.incomparable)),
        ("density cover selections disjoint", count(|x| x.cover_disjoint)),
        ("JN generations halve", count(|x| x.jn_halving)),
    ] {
        parts.push(part(name, c == n, format!("{c}/{n} instances")));
    }
    parts.push(part("runtime", s.elapsed < STRUCTURAL_BUDGET, format!("{:.1} s (budget {} s)", s.elapsed.as_secs_f64(), STRUCTURAL_BUDGET.as_secs())));
    parts
}

fn find_witness(lat: &Lattice, tiles: &[Tile]) -> Option<(Tile, Tile, Tile)> {
    for a in tiles {
        for b in tiles.iter().filter(|b| lat.tile_leq(a, b)) {
            if let Some(c) = tiles.iter().find(|c| lat.tile_leq(b, c) && !lat.tile_leq(a, c)) {
                return Some((*a, *b, *c));
            }
        }
    }
    None
}

fn criterion_2() -> Vec<Part> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lat = lattice(64, 0.25, 2, 3.0);
    let c = random_table(&lat, &mut rng);
    let mut ids: Vec<usize> = (0..lat.tile_count()).collect();
    let mut mismatches = 0;
    let pools = 200;
    for p in 0..pools {
        ids.shuffle(&mut rng);
        let pool: Vec<Tile> = ids[..1 + p % 12].iter().map(|&i| lat.tile(i)).collect();
        let fast = size_of(&lat, &TileSet::from_tiles(&lat, &pool), &c, None).size;
        if fast != size_bruteforce(&lat, &pool, &c).unwrap() {
            mismatches += 1;
        }
    }
    let mut parts = vec![part("size_of equals exhaustive enumeration", mismatches == 0, format!("{mismatches} mismatches over {pools} pools of 1..=12 tiles"))];

    let l8 = lattice(128, 0.125, 0, 3.0);
    let w = find_witness(&l8, &l8.enumerate_tiles(|t| t.k == 2));
    parts.push(part(
        "tile_leq non-transitivity witness",
        w.is_some_and(|(a, b, c)| l8.tile_leq(&a, &b) && l8.tile_leq(&b, &c) && !l8.tile_leq(&a, &c)),
        match w {
            Some((a, b, c)) => format!("a = {a:?}, b = {b:?}, c = {c:?}"),
            None => "none found".into(),
        },
    ));

    let bank = PacketBank::new(&lat).unwrap();
    let spec = *lat.spec();
    let f = random_fn(spec, &mut rng);
    let tiles: Vec<Tile> = (0..lat.tile_count()).step_by(5).map(|i| lat.tile(i)).collect();
    let table = coefficients(&bank, &f, &tiles, Source::Other).unwrap();
    let mut worst = 0.0f64;
    for s in &tiles {
        let phi = bank.make_packet(s, PacketKind::Phi, None).unwrap();
        let mut naive = Complex64::new(0.0, 0.0);
        for j in 0..spec.n() {
            for i in 0..spec.n() {
                naive += f.at(i, j) * phi.space.at(i, j).conj();
            }
        }
        naive *= spec.cell_area();
        worst = worst.max((table.at(lat.id(s)) - naive).norm() / f.l2_norm());
    }
    parts.push(part("coefficients match naive double loop", worst <= COEFFICIENT_TOL, format!("max rel deviation {worst:.2e} over {} tiles (tol {COEFFICIENT_TOL:e})", tiles.len())));
    parts
}

fn criterion_3() -> Vec<Part> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lat = lattice(64, 0.25, 2, 3.0);
    let bank = PacketBank::new(&lat).unwrap();
    let spec = *lat.spec();
    let mut parts = Vec::new();

    let worst = (0..200)
        .map(|_| {
            let f = random_fn(spec, &mut rng);
            (f.norm_sq() - f.forward().norm_sq()).abs() / f.norm_sq()
        })
        .fold(0.0, f64::max);
    parts.push(part("Parseval", worst <= PARSEVAL_TOL, format!("max rel deviation {worst:.2e} over 200 functions")));

    let tiles = lat.enumerate_tiles(|_| true);
    let phis: Vec<GridFunction> = tiles.iter().map(|s| bank.make_packet(s, PacketKind::Phi, None).unwrap().space).collect();
    let worst = phis.iter().map(|p| (p.l2_norm() - 1.0).abs()).fold(0.0, f64::max);
    parts.push(part("packet norms", worst <= PACKET_NORM_TOL, format!("max |‖φ_s‖ − 1| = {worst:.2e} over {} tiles", tiles.len())));

    let mut worst = 0.0f64;
    let mut pairs = 0;
    for (a, sa) in tiles.iter().enumerate().step_by(3) {
        for (b, sb) in tiles.iter().enumerate().step_by(5) {
            if sa.l == sb.l && !sa.omega().overlaps(&sb.omega()) {
                worst = worst.max(phis[a].inner_product(&phis[b]).unwrap().norm());
                pairs += 1;
            }
        }
    }
    parts.push(part("same-level disjoint-omega orthogonality", pairs > 0 && worst <= ORTHOGONALITY_TOL, format!("max |⟨φ_s, φ_t⟩| = {worst:.2e} over {pairs} pairs")));

    let lat128 = lattice(128, 0.125, 3, 3.0);
    let n = lat128.tile_count();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let c = random_table(&lat128, &mut rng);
        let top = lat128.tile(rng.gen_range(0..n));
        let tree = lat128.maximal_tree_with_top(&top, &TileSet::full(n), TreeKind::One);
        let d = tree_square_function(&lat128, &tree, &c, SquareKind::Cells);
        let sum: f64 = tree.members.iter().map(|s| c.abs_sq(lat128.id(s))).sum();
        if sum > 0.0 {
            worst = worst.max((d.norm_sq() - sum).abs() / sum);
        }
    }
    parts.push(part("Delta-Parseval", worst <= DELTA_PARSEVAL_TOL, format!("max rel deviation {worst:.2e} over 20 trees")));

    let f = band_projection(&random_fn(spec, &mut rng), &lat);
    let omegas = [(0, 0), (0, 3), (1, 2), (1, 6), (2, 5), (2, 14)];
    let worst = omegas
        .iter()
        .map(|&(l, k)| periodization_check(&bank, &f, &FrequencyInterval::new(l, k).unwrap()).unwrap())
        .fold(0.0, f64::max);
    parts.push(part("periodization identity at n = 64", worst <= PERIODIZATION_TOL, format!("max deviation {worst:.2e} over {} slope intervals", omegas.len())));

    let zero = VectorField::constant(&spec, 0.0).unwrap();
    let worst = tiles
        .iter()
        .map(|s| {
            let h = bank.make_packet(s, PacketKind::Curved, Some(&zero)).unwrap().space;
            let a = bank.make_packet(s, PacketKind::Alpha, None).unwrap().space;
            h.sub(&a).unwrap().max_abs() / a.max_abs()
        })
        .fold(0.0, f64::max);
    parts.push(part("u = 0 curved equals flat", worst <= ZERO_FIELD_TOL, format!("max rel deviation {worst:.2e} over {} tiles", tiles.len())));
    parts
}

fn criterion_4() -> Vec<Part> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lat = lattice(64, 0.25, 2, 3.0);
    let spec = *lat.spec();
    let mut worst = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..20 {
        let f = band_projection(&random_fn(spec, &mut rng), &lat);
        let q = *[1u32, 2, 4].choose(&mut rng).unwrap();
        let u0 = rng.gen_range(-(q as i32)..=q as i32) as f64 / q as f64;
        let o = constant_field_oracle(&f, u0, &lat).unwrap();
        let r = averaged_model_reconstruction(&f, u0, q, &lat).unwrap();
        let (c, rel) = fit_scalar(&r, &o).unwrap();
        worst = worst.max(rel);
        worst_scale = worst_scale.max((c - 1.0).abs());
    }
    vec![part(
        "averaged model vs constant-field multiplier, u0 = p/q",
        worst <= ORACLE_REL_TOL,
        format!("max relative L2 error {:.3}% over 20 inputs (fitted scale within {worst_scale:.1e} of 1)", 100.0 * worst),
    )]
}

/// Max ratio for upper bounds, min for the lower-bound intersection ratio.
fn constant(s: &Sweep, id: &str, p: Option<f64>) -> Option<f64> {
    let vals = s.records.iter().filter(|r| r.inequality_id == id && (p.is_none() || r.p == p)).filter_map(|r| r.ratio);
    if id == "intersection" {
        vals.reduce(f64::min)
    } else {
        vals.reduce(f64::max)
    }
}

fn criterion_5(a: &Sweep, b: &Sweep, caps: &Caps) -> Vec<Part> {
    let mut parts = Vec::new();
    let mut entries: Vec<(String, &str, Option<f64>)> = ["est_orthogonality", "est_density", "est_maximal", "tree_lemma", "bessel_shell", "delta_k", "intersection"]
        .iter()
        .map(|id| (id.to_string(), *id, None))
        .collect();
    for p in [1.25, 1.5, 2.0, 3.0] {
        entries.push((format!("weak_type p={p}"), "weak_type", Some(p)));
    }
    for (label, id, p) in entries {
        let (x, y) = (constant(a, id, p), constant(b, id, p));
        let ok = match (x, y) {
            (Some(x), Some(y)) => x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0 && x.max(y) / x.min(y) <= STABILITY_FACTOR,
            _ => false,
        };
        let show = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:.4e}"));
        parts.push(part(format!("stable {label}"), ok, format!("n128 {} n256 {}", show(x), show(y))));
    }
    for (name, key) in [("bessel shell decay", "bessel_decay".to_string()), ("delta_k decay", "delta_k_decay_p2".to_string())] {
        let keys: Vec<String> = if key == "bessel_decay" {
            vec![key]
        } else {
            [1.25, 1.5, 2.0, 3.0].iter().map(|p| format!("delta_k_decay_p{p}")).collect()
        };
        let vals: Vec<String> = keys
            .iter()
            .map(|k| format!("{k}: n128 {:.2} n256 {:.2}", a.summary.fits.get(k).copied().unwrap_or(f64::NAN), b.summary.fits.get(k).copied().unwrap_or(f64::NAN)))
            .collect();
        let ok = keys.iter().all(|k| [a, b].iter().all(|s| s.summary.fits.get(k).is_some_and(|&v| v >= DECAY_MIN)));
        parts.push(part(format!("{name} exponent >= {DECAY_MIN}"), ok, vals.join("; ")));
    }
    let mut violations = Vec::new();
    for s in [a, b] {
        violations.extend(caps.check(&s.summary).into_iter().map(|v| format!("{} {} {:.3e} vs {:.3e}", v.id, v.kind, v.value, v.limit)));
    }
    parts.push(part("shipped cap file holds on both sweeps", violations.is_empty(), if violations.is_empty() { format!("{} caps, {} floors", caps.caps.len(), caps.floors.len()) } else { violations.join("; ") }));
    parts
}

fn criterion_6(a: &Sweep, b: &Sweep, caps: &Caps) -> Vec<Part> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sigma_min = (-20f64).exp2();
    let worst = (0..100)
        .map(|_| {
            let (d, e, f): (f64, f64, f64) = (rng.gen_range(1e-6..=1.0), rng.gen_range(1e-6..=1.0), rng.gen_range(1e-6..=1.0));
            claim_basic_ratio(d, e, f, sigma_min)
        })
        .fold(0.0, f64::max);
    let cap = caps.caps.get("size_claim").copied().unwrap_or(f64::NAN);
    let sigma = [a, b].iter().filter_map(|s| constant(s, "size_claim", None)).fold(0.0, f64::max);
    vec![
        part("claim-basic summation", worst <= CLAIM_BASIC_MAX, format!("max ratio {worst:.4} over 100 triples (bound {CLAIM_BASIC_MAX})")),
        part("realized sigma within the size-claim cap", sigma <= cap, format!("max size/‖1_F‖_∞ {sigma:.4} (cap {cap:.4})")),
    ]
}

fn print(id: usize, title: &str, parts: &[Part]) -> (bool, bool) {
    let ok = parts.iter().all(|p| p.ok);
    let known = parts.iter().filter(|p| !p.ok).all(|p| KNOWN_LIMITATIONS.iter().any(|k| p.name.starts_with(k)));
    let tag = if ok { "PASS" } else if known { "FAIL (known limitation)" } else { "FAIL" };
    println!("criterion {id} {title}: {tag}");
    for p in parts {
        println!("    [{}] {}: {}", if p.ok { "ok" } else { "fail" }, p.name, p.detail);
    }
    (ok, known)
}

fn main() {
    // `cargo test -- <filter>` style arguments are ignored; `--list` prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let caps_text = std::fs::read_to_string(root().join("configs/caps.json")).expect("configs/caps.json");
    let caps = Caps::from_json(&caps_text).expect("cap file parses");
    let s128 = sweep("n128.json");
    let s256 = sweep("n256.json");
    let mut results = BTreeMap::new();
    results.insert(1, print(1, "structural exactness", &criterion_1(&s128)));
    results.insert(2, print(2, "oracle equivalence at micro scale", &criterion_2()));
    results.insert(3, print(3, "analytic identities", &criterion_3()));
    results.insert(4, print(4, "constant-field oracle", &criterion_4()));
    results.insert(5, print(5, "measured-constant stability", &criterion_5(&s128, &s256, &caps)));
    results.insert(6, print(6, "appendix arithmetic", &criterion_6(&s128, &s256, &caps)));
    let passed = results.values().filter(|r| r.0).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if results.values().any(|&(ok, known)| !ok && !known) {
        std::process::exit(1);
    }
}
