//! Output directory layout and the stages that fill it.
//!
//! ```text
//! <out>/instances/seed<S>.json          instance snapshot
//! <out>/forests/seed<S>.forest.txt      forest text
//! <out>/forests/seed<S>.org.txt         maximal organizations, one block per stratum
//! <out>/reports/seed<S>.csv             constant reports
//! <out>/reports/seed<S>.structural.json structural checks
//! <out>/reports.csv                     all reports, seed order
//! <out>/summary.json, summary.txt       per-id extremes and decay fits
//! <out>/plots/ratio_vs_<axis>.svg       axis in delta, sigma, k, j
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dirtile::config::RunConfig;
use dirtile::decompose::text::parse_forest;
use dirtile::instance::Instance;
use dirtile::pipeline::{accuracy_check, decompose, with_forest};
use dirtile::plot::{scatter_svg, Axis};
use dirtile::verify::{read_csv, run_checks, summarize, write_csv, Caps, ConstantReport, Structural, Summary, Violation};
use dirtile::wavepackets::PacketBank;
use dirtile::{Error, Result};
use rayon::prelude::*;

pub enum Failure {
    Cap(Violation),
    Structural { instance: String, check: &'static str },
}

#[derive(Default)]
pub struct Outcome {
    pub notes: Vec<String>,
    pub failures: Vec<Failure>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn load_caps(path: &Path) -> Result<Caps> {
    let text = fs::read_to_string(path).map_err(|e| Error::config("cap_file", format!("{}: {e}", path.display())))?;
    Caps::from_json(&text)
}

/// `--cap-file`, else `constants.caps` relative to the config's directory.
fn resolve_caps(cfg: Option<(&RunConfig, &Path)>, flag: Option<PathBuf>) -> Result<Option<Caps>> {
    let path = flag.or_else(|| {
        let (cfg, cfg_path) = cfg?;
        let rel = cfg.constants.caps.as_ref()?;
        Some(cfg_path.parent().unwrap_or(Path::new(".")).join(rel))
    });
    path.map(|p| load_caps(&p)).transpose()
}

pub struct Run {
    cfg: RunConfig,
    seeds: Vec<u64>,
    jobs: Option<usize>,
    out: PathBuf,
    caps: Option<Caps>,
}

impl Run {
    pub fn new(config: &Path, seed: Option<u64>, jobs: Option<usize>, out: Option<PathBuf>, cap_file: Option<PathBuf>) -> Result<Run> {
        let cfg = RunConfig::load(config)?;
        let mut seeds = seed.map_or_else(|| cfg.sweep.seed_list(), |s| vec![s]);
        seeds.sort_unstable();
        seeds.dedup();
        if jobs == Some(0) {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        let caps = resolve_caps(Some((&cfg, config)), cap_file)?;
        let out = out.unwrap_or_else(|| PathBuf::from(&cfg.output));
        Ok(Run { cfg, seeds, jobs, out, caps })
    }

    fn path(&self, dir: &str, seed: u64, ext: &str) -> PathBuf {
        self.out.join(dir).join(format!("seed{seed}.{ext}"))
    }

    fn par_seeds<T: Send>(&self, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        let pool = b.build().map_err(|e| Error::Internal(e.to_string()))?;
        pool.install(|| self.seeds.par_iter().map(|&s| f(s)).collect())
    }

    fn bank(&self) -> Result<PacketBank> {
        let bank = PacketBank::new(&self.cfg.lattice()?)?;
        accuracy_check(&bank)?;
        Ok(bank)
    }

    /// Stored snapshot unless `fresh` or missing; a new one is written.
    fn instance(&self, seed: u64, fresh: bool) -> Result<Instance> {
        let path = self.path("instances", seed, "json");
        if !fresh && path.exists() {
            let inst = Instance::from_json(&read(&path)?)?;
            if inst.e.spec() != &self.cfg.spec()? {
                return Err(Error::Parse(format!("{}: grid differs from the config", path.display())));
            }
            return Ok(inst);
        }
        let inst = Instance::generate(&self.cfg, seed)?;
        write(&path, &inst.to_json())?;
        Ok(inst)
    }

    pub fn gen(&self) -> Result<Outcome> {
        self.par_seeds(|s| self.instance(s, true).map(|_| ()))?;
        Ok(Outcome { notes: vec![format!("gen: {} instances in {}", self.seeds.len(), self.out.join("instances").display())], failures: vec![] })
    }

    pub fn decompose(&self) -> Result<Outcome> {
        let bank = self.bank()?;
        let trees = self.par_seeds(|s| {
            let inst = self.instance(s, false)?;
            let d = decompose(&self.cfg, &bank, &inst)?;
            let (forest, orgs) = d.to_text();
            write(&self.path("forests", s, "forest.txt"), &forest)?;
            write(&self.path("forests", s, "org.txt"), &orgs)?;
            Ok(d.forest.tree_count())
        })?;
        let total: usize = trees.iter().sum();
        Ok(Outcome { notes: vec![format!("decompose: {} instances, {total} trees in {}", self.seeds.len(), self.out.join("forests").display())], failures: vec![] })
    }

    /// Checks every seed and writes the reports; `fresh` ignores stored artifacts.
    pub fn verify(&self, fresh: bool) -> Result<Outcome> {
        let bank = self.bank()?;
        let results = self.par_seeds(|s| {
            let inst = self.instance(s, fresh)?;
            let forest_path = self.path("forests", s, "forest.txt");
            let org_path = self.path("forests", s, "org.txt");
            let d = if !fresh && forest_path.exists() {
                let forest = parse_forest(&read(&forest_path)?).map_err(|e| Error::Parse(format!("{}: {e}", forest_path.display())))?;
                with_forest(&self.cfg, &bank, &inst, forest)?
            } else {
                decompose(&self.cfg, &bank, &inst)?
            };
            let (forest, orgs) = d.to_text();
            if fresh || !forest_path.exists() {
                write(&forest_path, &forest)?;
            }
            if fresh || !org_path.exists() {
                write(&org_path, &orgs)?;
            }
            let rep = run_checks(&self.cfg, &bank, &inst, &d)?;
            write(&self.path("reports", s, "csv"), &csv_text(&rep.records)?)?;
            write(&self.path("reports", s, "structural.json"), &structural_json(&rep.structural))?;
            Ok((rep.records, rep.structural))
        })?;
        let (records, structural): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let records: Vec<ConstantReport> = records.into_iter().flatten().collect();
        aggregate(&self.out, &records, &structural, self.caps.as_ref())
    }
}

fn csv_text(records: &[ConstantReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
}

fn structural_json(s: &Structural) -> String {
    serde_json::to_string_pretty(s).expect("structural report serializes") + "\n"
}

fn fmt_ratio(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6e}")
    } else {
        "-".into()
    }
}

fn summary_text(s: &Summary, structural: &[Structural]) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{:<20} {:>7} {:>10} {:>14} {:>14}", "inequality_id", "count", "degenerate", "max_ratio", "min_ratio");
    for (id, x) in &s.ids {
        let _ = writeln!(t, "{:<20} {:>7} {:>10} {:>14} {:>14}", id, x.count, x.degenerate, fmt_ratio(x.max_ratio), fmt_ratio(x.min_ratio));
    }
    for (id, v) in &s.fits {
        let _ = writeln!(t, "fit {id} {v:.4}");
    }
    let bad: Vec<String> = structural.iter().flat_map(|st| st.failures().into_iter().map(move |f| format!("{}:{f}", st.instance_id))).collect();
    let _ = writeln!(t, "instances {}", structural.len());
    let _ = writeln!(t, "structural_failures {}", if bad.is_empty() { "none".to_string() } else { bad.join(" ") });
    t
}

/// Summary, combined CSV and plots under `out`; caps and structural failures
/// become [`Failure`]s.
pub fn aggregate(out: &Path, records: &[ConstantReport], structural: &[Structural], caps: Option<&Caps>) -> Result<Outcome> {
    let summary = summarize(records);
    write(&out.join("reports.csv"), &csv_text(records)?)?;
    write(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    write(&out.join("summary.txt"), &summary_text(&summary, structural))?;
    for axis in Axis::ALL {
        let svg = scatter_svg(records, axis, &format!("ratio vs {}", axis.name()));
        write(&out.join("plots").join(format!("ratio_vs_{}.svg", axis.name())), &svg)?;
    }
    let mut failures = Vec::new();
    for st in structural {
        for check in st.failures() {
            failures.push(Failure::Structural { instance: st.instance_id.clone(), check });
        }
    }
    if let Some(c) = caps {
        failures.extend(c.check(&summary).into_iter().map(Failure::Cap));
    }
    let notes = vec![format!(
        "{} instances, {} records, {} inequality ids; summary in {}",
        structural.len(),
        records.len(),
        summary.ids.len(),
        out.join("summary.txt").display()
    )];
    Ok(Outcome { notes, failures })
}

/// Seed number of `seed<N>.<ext>`, for ordering.
fn seed_key(p: &Path) -> (u64, String) {
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let num = name.strip_prefix("seed").and_then(|r| r.split('.').next()).and_then(|d| d.parse().ok());
    (num.unwrap_or(u64::MAX), name)
}

fn list(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(vec![]);
    }
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort_by_key(|p| seed_key(p));
    Ok(v)
}

pub fn report(config: Option<&Path>, out: Option<PathBuf>, cap_file: Option<PathBuf>) -> Result<Outcome> {
    let cfg = config.map(RunConfig::load).transpose()?;
    let caps = resolve_caps(cfg.as_ref().zip(config), cap_file)?;
    let out = match (out, &cfg) {
        (Some(o), _) => o,
        (None, Some(c)) => PathBuf::from(&c.output),
        (None, None) => return Err(Error::config("out", "report needs --out or --config")),
    };
    let dir = out.join("reports");
    let mut records = Vec::new();
    for p in list(&dir, ".csv")? {
        records.extend(read_csv(&read(&p)?).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?);
    }
    let mut structural = Vec::new();
    for p in list(&dir, ".structural.json")? {
        structural.push(serde_json::from_str(&read(&p)?).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?);
    }
    aggregate(&out, &records, &structural, caps.as_ref())
}
