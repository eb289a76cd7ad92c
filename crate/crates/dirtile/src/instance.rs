//! Seeded instances `(E, F, v)` and their snapshot files.
//!
//! Sets and fields are drawn in continuous coordinates and then sampled, so
//! the same seed gives comparable instances at every resolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{FieldSpec, RunConfig, SetSpec};
use crate::error::{Error, Result};
use crate::geometry::{wrap, VectorField};
use crate::grid::{GridSpec, IndicatorSet};

const STREAM_E: u64 = 1;
const STREAM_F: u64 = 2;
const STREAM_V: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub e: IndicatorSet,
    pub f: IndicatorSet,
    pub v: VectorField,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn torus_dist(a: f64, b: f64, l: f64) -> f64 {
    let d = wrap(a - b, l).abs();
    d.min(l - d)
}

pub fn sample_set(spec: &GridSpec, s: &SetSpec, rng: &mut ChaCha8Rng) -> IndicatorSet {
    let l = spec.side_length();
    match s {
        SetSpec::Rectangles { rects } => IndicatorSet::from_fn(*spec, |x, y| {
            rects.iter().any(|r| (x - r[0]).rem_euclid(l) < r[2] && (y - r[1]).rem_euclid(l) < r[3])
        }),
        SetSpec::RandomDensity { density, cells } => {
            let on: Vec<bool> = (0..cells * cells).map(|_| rng.gen::<f64>() < *density).collect();
            let c = *cells as f64 / l;
            IndicatorSet::from_fn(*spec, |x, y| {
                let a = ((x * c) as usize).min(cells - 1);
                let b = ((y * c) as usize).min(cells - 1);
                on[b * cells + a]
            })
        }
        SetSpec::Blobs { count, radius } => {
            let blobs: Vec<(f64, f64, f64)> = (0..*count)
                .map(|_| (rng.gen_range(0.0..l), rng.gen_range(0.0..l), rng.gen_range(radius / 2.0..=*radius)))
                .collect();
            IndicatorSet::from_fn(*spec, |x, y| {
                blobs.iter().any(|&(cx, cy, r)| torus_dist(x, cx, l).hypot(torus_dist(y, cy, l)) <= r)
            })
        }
    }
}

pub fn sample_field(spec: &GridSpec, s: &FieldSpec, rng: &mut ChaCha8Rng) -> Result<VectorField> {
    match s {
        FieldSpec::Constant { u0 } => VectorField::constant(spec, *u0),
        FieldSpec::Piecewise { segments } => VectorField::piecewise(spec, segments),
        FieldSpec::RandomWalk { knots, step } => {
            let mut x: f64 = rng.gen_range(-1.0..1.0);
            let vals: Vec<f64> = (0..*knots)
                .map(|_| {
                    let v = x;
                    x = (x + rng.gen_range(-step..=*step)).clamp(-1.0, 1.0);
                    v
                })
                .collect();
            let per = spec.n() / knots;
            VectorField::new((0..spec.n()).map(|i| vals[i / per]).collect())
        }
    }
}

impl Instance {
    pub fn generate(cfg: &RunConfig, seed: u64) -> Result<Instance> {
        let spec = cfg.spec()?;
        Ok(Instance {
            seed,
            e: sample_set(&spec, &cfg.sets.e, &mut rng_for(seed, STREAM_E)),
            f: sample_set(&spec, &cfg.sets.f, &mut rng_for(seed, STREAM_F)),
            v: sample_field(&spec, &cfg.field, &mut rng_for(seed, STREAM_V))?,
        })
    }

    pub fn id(&self) -> String {
        format!("seed{}", self.seed)
    }

    pub fn to_file(&self) -> InstanceFile {
        let rows = |s: &IndicatorSet| -> Vec<String> {
            let n = s.spec().n();
            (0..n).map(|j| (0..n).map(|i| if s.contains(i, j) { '1' } else { '0' }).collect()).collect()
        };
        InstanceFile {
            seed: self.seed,
            n: self.e.spec().n(),
            side: self.e.spec().side_length(),
            v: self.v.values().to_vec(),
            e: rows(&self.e),
            f: rows(&self.f),
        }
    }

    pub fn from_file(file: &InstanceFile) -> Result<Instance> {
        let spec = GridSpec::new(file.n, file.side)?;
        let set = |rows: &[String], name: &str| -> Result<IndicatorSet> {
            let bad = || Error::Parse(format!("instance {name}: expected {n} rows of {n} bits", n = file.n));
            if rows.len() != file.n {
                return Err(bad());
            }
            let mut mask = Vec::with_capacity(file.n * file.n);
            for r in rows {
                if r.len() != file.n {
                    return Err(bad());
                }
                for c in r.chars() {
                    mask.push(match c {
                        '0' => false,
                        '1' => true,
                        _ => return Err(bad()),
                    });
                }
            }
            IndicatorSet::from_mask(spec, mask)
        };
        if file.v.len() != file.n {
            return Err(Error::Parse("instance v: length differs from n".into()));
        }
        Ok(Instance {
            seed: file.seed,
            e: set(&file.e, "E")?,
            f: set(&file.f, "F")?,
            v: VectorField::new(file.v.clone())?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("instance: {e}")))?;
        Self::from_file(&file)
    }
}

/// Snapshot: rows of `E` and `F` as `'0'/'1'` strings (row `j` is `x₂ = j·h`),
/// and `v` per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "L")]
    pub side: f64,
    pub v: Vec<f64>,
    #[serde(rename = "E")]
    pub e: Vec<String>,
    #[serde(rename = "F")]
    pub f: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{
              "grid": {{"n": {n}, "L": 1.0}},
              "band": {{"w": 0.25, "l_max": 2}},
              "field": {{"kind": "random_walk", "knots": 32, "step": 0.2}},
              "sets": {{"E": {{"kind": "blobs", "count": 3, "radius": 0.2}},
                       "F": {{"kind": "random_density", "density": 0.5, "cells": 8}}}},
              "sweep": {{"instances": 1}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn deterministic_and_round_trips() {
        let a = Instance::generate(&cfg(64), 7).unwrap();
        assert_eq!(a, Instance::generate(&cfg(64), 7).unwrap());
        assert_ne!(a, Instance::generate(&cfg(64), 8).unwrap());
        let text = a.to_json();
        let b = Instance::from_json(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_json(), text);
    }

    #[test]
    fn resolutions_agree() {
        let a = Instance::generate(&cfg(64), 3).unwrap();
        let b = Instance::generate(&cfg(128), 3).unwrap();
        // coarse-cell F is resolution independent; v matches on shared columns
        for j in 0..64 {
            for i in 0..64 {
                assert_eq!(a.f.contains(i, j), b.f.contains(2 * i, 2 * j));
            }
        }
        for i in 0..64 {
            assert_eq!(a.v.at(i), b.v.at(2 * i));
        }
        assert!((a.e.measure() - b.e.measure()).abs() < 0.05);
    }

    #[test]
    fn rectangles_wrap() {
        let spec = GridSpec::new(32, 1.0).unwrap();
        let s = SetSpec::Rectangles { rects: vec![[0.75, 0.0, 0.5, 1.0]] };
        let e = sample_set(&spec, &s, &mut rng_for(0, 0));
        assert!((e.measure() - 0.5).abs() < 1e-12);
        assert!(e.contains(0, 5) && e.contains(31, 5) && !e.contains(16, 5));
    }
}
