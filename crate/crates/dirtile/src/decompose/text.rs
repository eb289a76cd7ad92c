//! Line-oriented text form of [`Forest`] and [`MaximalOrganization`].
//!
//! ```text
//! forest v1
//! stratum <δ exp|zero> <σ exp> <δ> <σ>
//! tree <l> <k> <i> <j> <kind> <witness rms>
//! <l> <k> <i> <j>            one line per member, lattice order
//! end
//! residual <δ exp|zero>
//! tree ...                   singleton trees, witness "-"
//! end
//! level <δ exp|zero> <σ> <threshold> <selected> <residual size> <0|1>
//! ```
//!
//! Floats use the shortest round-trip representation, so parsing recovers the
//! forest exactly, level diagnostics included.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Tile, Tree, TreeKind};

use super::forest::{exp_value, Forest, ForestTree, ZERO_DELTA};
use super::maximal::MaximalOrganization;
use super::size::LevelDiagnostics;

fn exp_tag(e: i32) -> String {
    if e == ZERO_DELTA {
        "zero".into()
    } else {
        e.to_string()
    }
}

fn tile_str(t: &Tile) -> String {
    format!("{} {} {} {}", t.l, t.k, t.i, t.j)
}

fn write_tree(out: &mut String, tree: &Tree, witness: Option<f64>) {
    let w = witness.map_or_else(|| "-".to_string(), |x| x.to_string());
    writeln!(out, "tree {} {} {}", tile_str(&tree.top), tree.kind.tag(), w).unwrap();
    for s in &tree.members {
        writeln!(out, "{}", tile_str(s)).unwrap();
    }
    out.push_str("end\n");
}

pub fn write_forest(forest: &Forest) -> String {
    let mut out = String::from("forest v1\n");
    for (&(de, se), trees) in &forest.strata {
        writeln!(out, "stratum {} {} {} {}", exp_tag(de), se, exp_value(de), exp_value(se)).unwrap();
        for t in trees {
            write_tree(&mut out, &t.tree, Some(t.witness_rms));
        }
    }
    for (&de, trees) in &forest.residual {
        writeln!(out, "residual {}", exp_tag(de)).unwrap();
        for t in trees {
            write_tree(&mut out, t, None);
        }
    }
    for (&de, levels) in &forest.diagnostics {
        for d in levels {
            writeln!(out, "level {} {} {} {} {} {}", exp_tag(de), d.sigma, d.threshold, d.selected, d.residual_size, d.halving_ok as u8).unwrap();
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse(format!("line {line}: {}", msg.into()))
}

fn parse_exp(tok: &str, line: usize) -> Result<i32> {
    if tok == "zero" {
        Ok(ZERO_DELTA)
    } else {
        tok.parse().map_err(|_| parse_err(line, format!("bad exponent {tok:?}")))
    }
}

fn parse_tile(toks: &[&str], line: usize) -> Result<Tile> {
    if toks.len() != 4 {
        return Err(parse_err(line, "expected l k i j"));
    }
    let mut v = [0u32; 4];
    for (x, t) in v.iter_mut().zip(toks) {
        *x = t.parse().map_err(|_| parse_err(line, format!("bad integer {t:?}")))?;
    }
    Ok(Tile { l: v[0], k: v[1], i: v[2], j: v[3] })
}

fn parse_kind(tok: &str, line: usize) -> Result<TreeKind> {
    match tok {
        "general" => Ok(TreeKind::General),
        "1" => Ok(TreeKind::One),
        "2" => Ok(TreeKind::Two),
        _ => Err(parse_err(line, format!("bad tree kind {tok:?}"))),
    }
}

enum Section {
    None,
    Stratum((i32, i32)),
    Residual(i32),
}

pub fn parse_forest(text: &str) -> Result<Forest> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "forest v1")) => {}
        Some((n, _)) => return Err(parse_err(n, "expected header \"forest v1\"")),
        None => return Err(parse_err(0, "empty input")),
    }
    let mut forest = Forest { strata: BTreeMap::new(), residual: BTreeMap::new(), diagnostics: BTreeMap::new() };
    let mut section = Section::None;
    while let Some((n, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "stratum" if toks.len() == 5 => {
                let key = (parse_exp(toks[1], n)?, parse_exp(toks[2], n)?);
                forest.strata.entry(key).or_default();
                section = Section::Stratum(key);
            }
            "residual" if toks.len() == 2 => {
                let de = parse_exp(toks[1], n)?;
                forest.residual.entry(de).or_default();
                section = Section::Residual(de);
            }
            "level" if toks.len() == 7 => {
                let de = parse_exp(toks[1], n)?;
                let float = |t: &str| t.parse::<f64>().map_err(|_| parse_err(n, format!("bad number {t:?}")));
                let d = LevelDiagnostics {
                    sigma: float(toks[2])?,
                    threshold: float(toks[3])?,
                    selected: toks[4].parse().map_err(|_| parse_err(n, "bad count"))?,
                    residual_size: float(toks[5])?,
                    halving_ok: match toks[6] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(parse_err(n, "bad flag")),
                    },
                };
                forest.diagnostics.entry(de).or_default().push(d);
            }
            "tree" if toks.len() == 7 => {
                let top = parse_tile(&toks[1..5], n)?;
                let kind = parse_kind(toks[5], n)?;
                let mut members = Vec::new();
                loop {
                    let (m, l) = lines.next().ok_or_else(|| parse_err(n, "unterminated tree"))?;
                    if l == "end" {
                        break;
                    }
                    let t: Vec<&str> = l.split_whitespace().collect();
                    members.push(parse_tile(&t, m)?);
                }
                let tree = Tree { top, members, kind };
                match section {
                    Section::Stratum(key) => {
                        let witness_rms = toks[6].parse().map_err(|_| parse_err(n, "bad witness"))?;
                        forest.strata.get_mut(&key).unwrap().push(ForestTree { tree, witness_rms });
                    }
                    Section::Residual(de) => forest.residual.get_mut(&de).unwrap().push(tree),
                    Section::None => return Err(parse_err(n, "tree outside a section")),
                }
            }
            _ => return Err(parse_err(n, format!("unexpected line {line:?}"))),
        }
    }
    Ok(forest)
}

/// ```text
/// organization <δ> <σ> incomparable=<b> tops_disjoint=<b> chains_ok=<b> coverage=<c>
/// rtilde <l k i j>
/// r <l k i j>
/// assign <tree> <R̃: l k i j> <R: l k i j>
/// fiber <R: l k i j> j=<j> k=<k|-> top_area=<a> disjoint_area=<a>
/// trees <idx ...>
/// disjoint <idx ...>
/// ```
pub fn write_organization(org: &MaximalOrganization) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "organization {} {} incomparable={} tops_disjoint={} chains_ok={} coverage={}",
        org.delta, org.sigma, org.incomparable, org.tops_disjoint, org.chains_ok, org.coverage_constant
    )
    .unwrap();
    for t in &org.r_tilde {
        writeln!(out, "rtilde {}", tile_str(t)).unwrap();
    }
    for t in &org.r {
        writeln!(out, "r {}", tile_str(t)).unwrap();
    }
    for a in &org.assignments {
        writeln!(out, "assign {} {} {}", a.tree, tile_str(&a.r_tilde), tile_str(&a.r)).unwrap();
    }
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    for f in &org.fibers {
        let k = f.k.map_or_else(|| "-".to_string(), |k| k.to_string());
        writeln!(
            out,
            "fiber {} j={} k={} top_area={} disjoint_area={}",
            tile_str(&f.r),
            f.j,
            k,
            f.top_area,
            f.disjoint_area
        )
        .unwrap();
        writeln!(out, "trees {}", join(&f.trees)).unwrap();
        writeln!(out, "disjoint {}", join(&f.disjoint)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(l: u32, k: u32, i: u32, j: u32) -> Tile {
        Tile { l, k, i, j }
    }

    fn sample() -> Forest {
        let mut f = Forest { strata: BTreeMap::new(), residual: BTreeMap::new(), diagnostics: BTreeMap::new() };
        f.strata.insert(
            (-3, -1),
            vec![ForestTree {
                tree: Tree { top: t(1, 2, 0, 3), members: vec![t(0, 4, 1, 3), t(1, 2, 0, 3)], kind: TreeKind::General },
                witness_rms: 0.1 + 0.2,
            }],
        );
        f.strata.insert((ZERO_DELTA, -4), vec![]);
        f.residual.insert(ZERO_DELTA, vec![Tree { top: t(0, 0, 0, 0), members: vec![t(0, 0, 0, 0)], kind: TreeKind::General }]);
        let level = |sigma: f64, ok| LevelDiagnostics { sigma, threshold: sigma / 6.0, selected: 2, residual_size: 0.3 * sigma, halving_ok: ok };
        f.diagnostics.insert(-3, vec![level(0.5, true), level(0.25, false)]);
        f
    }

    #[test]
    fn forest_round_trip() {
        let f = sample();
        let text = write_forest(&f);
        assert!(text.starts_with("forest v1\nstratum zero -4 0 0.0625\nstratum -3 -1 0.125 0.5\n"));
        let g = parse_forest(&text).unwrap();
        assert_eq!(g, f);
        assert_eq!(write_forest(&g), text);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_forest("forest v1\nstratum 1 2 2 4\ntree 0 0 0\n") {
            Err(Error::Parse(m)) => assert!(m.starts_with("line 3:"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(parse_forest("forest v2\n").is_err());
        assert!(parse_forest("forest v1\ntree 0 0 0 0 general -\nend\n").is_err());
    }
}
