//! Run configuration (JSON).
//!
//! ```json
//! {
//!   "grid": {"n": 128, "L": 1.0},
//!   "band": {"w": 0.125, "l_max": 3},
//!   "constants": {"C": 10.0, "p_chi": 8, "eps": 0.25, "N": 8,
//!                 "sigma_min": 9.5367431640625e-7, "p_list": [1.25, 1.5, 2.0, 3.0]},
//!   "field": {"kind": "random_walk", "knots": 64, "step": 0.15},
//!   "sets": {"E": {"kind": "blobs", "count": 4, "radius": 0.2},
//!            "F": {"kind": "random_density", "density": 0.4, "cells": 16}},
//!   "sweep": {"base_seed": 1, "instances": 50},
//!   "output": "out/n128"
//! }
//! ```
//!
//! `field.kind` is one of `constant {u0}`, `piecewise {segments: [[x, u], …]}`
//! or `random_walk {knots, step}`. Set kinds are `rectangles {rects: [[x, y,
//! width, height], …]}`, `random_density {density, cells}` and
//! `blobs {count, radius}`. `sweep.seeds` overrides `base_seed`/`instances`.
//! `constants.caps` optionally names a cap file (see [`crate::verify::Caps`]).
//! Rejected configs name the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Lattice;
use crate::grid::GridSpec;
use crate::wavepackets::PacketBank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub w: f64,
    pub l_max: u32,
}

fn default_p_list() -> Vec<f64> {
    vec![1.25, 1.5, 2.0, 3.0]
}

fn default_sigma_min() -> f64 {
    (-20f64).exp2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(rename = "C", default = "Constants::default_c")]
    pub c: f64,
    #[serde(default = "Constants::default_p_chi")]
    pub p_chi: u32,
    #[serde(default = "Constants::default_eps")]
    pub eps: f64,
    /// Decay exponent of `β_{N,T}`.
    #[serde(rename = "N", default = "Constants::default_n")]
    pub n_decay: u32,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Cap file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caps: Option<String>,
}

impl Constants {
    fn default_c() -> f64 {
        10.0
    }
    fn default_p_chi() -> u32 {
        8
    }
    fn default_eps() -> f64 {
        0.25
    }
    fn default_n() -> u32 {
        8
    }
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            c: Self::default_c(),
            p_chi: Self::default_p_chi(),
            eps: Self::default_eps(),
            n_decay: Self::default_n(),
            sigma_min: default_sigma_min(),
            p_list: default_p_list(),
            caps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { u0: f64 },
    /// `(start x₁, value)` pairs, starts increasing from 0.
    Piecewise { segments: Vec<(f64, f64)> },
    /// Walk on `knots` equal sub-intervals of the circle, clipped to `[−1, 1]`.
    RandomWalk { knots: usize, step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// `[x, y, width, height]`, wrapped on the torus.
    Rectangles { rects: Vec<[f64; 4]> },
    /// Each of `cells × cells` squares is in the set with probability `density`.
    RandomDensity { density: f64, cells: usize },
    /// Union of `count` discs with radii uniform in `[radius/2, radius]`.
    Blobs { count: usize, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsConfig {
    #[serde(rename = "E")]
    pub e: SetSpec,
    #[serde(rename = "F")]
    pub f: SetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "SweepConfig::default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

impl SweepConfig {
    fn default_instances() -> usize {
        1
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.instances as u64).map(|i| self.base_seed + i).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub band: BandConfig,
    #[serde(default)]
    pub constants: Constants,
    pub field: FieldSpec,
    pub sets: SetsConfig,
    pub sweep: SweepConfig,
    #[serde(default = "RunConfig::default_output")]
    pub output: String,
}

fn check(ok: bool, field: &str, msg: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, msg))
    }
}

fn finite_in(x: f64, lo: f64, hi: f64) -> bool {
    x.is_finite() && x >= lo && x <= hi
}

fn validate_set(s: &SetSpec, side: f64, name: &str) -> Result<()> {
    match s {
        SetSpec::Rectangles { rects } => {
            for (i, r) in rects.iter().enumerate() {
                let field = format!("sets.{name}.rects[{i}]");
                check(r.iter().all(|x| x.is_finite()), &field, "non-finite entry")?;
                check(r[2] > 0.0 && r[2] <= side && r[3] > 0.0 && r[3] <= side, &field, "width and height must lie in (0, L]")?;
            }
            Ok(())
        }
        SetSpec::RandomDensity { density, cells } => {
            check(finite_in(*density, 0.0, 1.0), &format!("sets.{name}.density"), "must lie in [0, 1]")?;
            check(*cells >= 1, &format!("sets.{name}.cells"), "must be ≥ 1")
        }
        SetSpec::Blobs { count, radius } => {
            check(*count <= 10_000, &format!("sets.{name}.count"), "at most 10000 blobs")?;
            check(finite_in(*radius, 0.0, side / 2.0) && *radius > 0.0, &format!("sets.{name}.radius"), "must lie in (0, L/2]")
        }
    }
}

impl RunConfig {
    fn default_output() -> String {
        "out".into()
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config("json", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n, self.grid.side)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.spec()?, self.band.w, self.band.l_max, self.constants.c)
    }

    /// Every range check, before any computation.
    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        let lat = self.lattice()?;
        PacketBank::check_alignment(&lat)?;
        let side = spec.side_length();
        let k = &self.constants;
        check(k.p_chi >= 4 && k.p_chi <= 64 && k.p_chi % 2 == 0, "constants.p_chi", "must be even and lie in [4, 64]")?;
        check(k.eps > 0.0 && k.eps < 1.0, "constants.eps", "must lie in (0, 1)")?;
        check(k.n_decay >= 1 && k.n_decay <= 64, "constants.N", "must lie in [1, 64]")?;
        check(k.sigma_min > 0.0 && k.sigma_min < 1.0, "constants.sigma_min", "must lie in (0, 1)")?;
        check(!k.p_list.is_empty(), "constants.p_list", "must be non-empty")?;
        check(k.p_list.iter().all(|&p| p.is_finite() && p > 1.0), "constants.p_list", "every p must be finite and > 1")?;
        match &self.field {
            FieldSpec::Constant { u0 } => check(finite_in(*u0, -1.0, 1.0), "field.u0", "must lie in [−1, 1]")?,
            FieldSpec::Piecewise { segments } => {
                check(!segments.is_empty(), "field.segments", "must be non-empty")?;
                check(segments[0].0 == 0.0, "field.segments", "first segment must start at 0")?;
                check(segments.windows(2).all(|p| p[0].0 < p[1].0), "field.segments", "starts must increase")?;
                check(segments.iter().all(|s| finite_in(s.0, 0.0, side) && s.0 < side), "field.segments", "starts must lie in [0, L)")?;
                check(segments.iter().all(|s| finite_in(s.1, -1.0, 1.0)), "field.segments", "values must lie in [−1, 1]")?;
            }
            FieldSpec::RandomWalk { knots, step } => {
                check(*knots >= 1 && spec.n() % knots == 0, "field.knots", "must divide grid.n")?;
                check(finite_in(*step, 0.0, 2.0), "field.step", "must lie in [0, 2]")?;
            }
        }
        validate_set(&self.sets.e, side, "E")?;
        validate_set(&self.sets.f, side, "F")?;
        match &self.sweep.seeds {
            Some(s) => check(!s.is_empty(), "sweep.seeds", "must be non-empty")?,
            None => check(self.sweep.instances >= 1, "sweep.instances", "must be ≥ 1")?,
        }
        check(!self.output.is_empty(), "output", "must be non-empty")
    }
}
