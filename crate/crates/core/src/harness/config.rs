//! Case configuration: `key = value` text with per-case defaults.
//!
//! Resolution order: the case (and dimension) are looked up first among all
//! supplied pairs, the defaults for that case are installed, then every pair
//! is applied in order so later entries win. Unknown keys are errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::levelset::SharpProfile;
use crate::multigrid::{CycleKind, MgConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseId {
    SphereUniform,
    SphereRefined,
    Shape2d,
    Shape3dCyl,
    TwoElectrodes,
    Manufactured,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [
        CaseId::SphereUniform,
        CaseId::SphereRefined,
        CaseId::Shape2d,
        CaseId::Shape3dCyl,
        CaseId::TwoElectrodes,
        CaseId::Manufactured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::SphereUniform => "sphere_uniform",
            CaseId::SphereRefined => "sphere_refined",
            CaseId::Shape2d => "shape2d",
            CaseId::Shape3dCyl => "shape3d_cyl",
            CaseId::TwoElectrodes => "two_electrodes",
            CaseId::Manufactured => "manufactured",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Dimension the case is defined in, if it is fixed.
    fn fixed_dim(self) -> Option<usize> {
        match self {
            CaseId::SphereRefined | CaseId::Shape3dCyl | CaseId::TwoElectrodes => Some(3),
            CaseId::Shape2d => Some(2),
            CaseId::SphereUniform | CaseId::Manufactured => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseConfig {
    pub case: CaseId,
    pub shape: SharpProfile,
    pub dim: usize,
    pub block_size: usize,
    pub max_level: usize,
    /// Uniform level below the local refinement (two-electrode case).
    pub base_level: usize,
    pub cycles: usize,
    pub cycle: CycleKind,
    pub n_up: usize,
    pub n_down: usize,
    pub coarse_rel_tol: f64,
    /// Absolute stop threshold on the max leaf residual.
    pub target_resid: f64,
    /// Stop once the max residual drops by this factor from its initial value.
    pub rel_tol: f64,
    pub radius: f64,
    pub phi_b: f64,
    pub a: f64,
    pub w_min: f64,
    pub thin_search: bool,
    pub safety: f64,
    pub eps_tol: f64,
    pub max_bracket_iters: usize,
    /// Shift of the sharp shapes from the domain center.
    pub offset: [f64; 2],
    pub tip_refine_radius: f64,
    pub threads: usize,
    pub dump: bool,
    pub out: Option<PathBuf>,
}

impl CaseConfig {
    /// Defaults for `case`, matching the published experiment parameters.
    pub fn defaults(case: CaseId, dim: Option<usize>) -> Self {
        let dim = case.fixed_dim().or(dim).unwrap_or(2);
        let mut c = CaseConfig {
            case,
            shape: SharpProfile::Spheroid,
            dim,
            block_size: 8,
            max_level: if dim == 2 { 8 } else { 6 },
            base_level: 5,
            cycles: 10,
            cycle: CycleKind::Fmg,
            n_up: 2,
            n_down: 2,
            coarse_rel_tol: 1e-6,
            target_resid: 0.0,
            rel_tol: 0.0,
            radius: 0.25,
            phi_b: 0.0,
            a: 1.0,
            w_min: 0.0,
            thin_search: false,
            safety: crate::levelset::DEFAULT_SAFETY_FACTOR,
            eps_tol: 1e-8,
            max_bracket_iters: 45,
            offset: [0.0, 0.0],
            tip_refine_radius: 0.1,
            threads: 0,
            dump: true,
            out: None,
        };
        match case {
            CaseId::SphereUniform => {}
            CaseId::SphereRefined => {
                c.radius = 5e-3;
                c.max_level = 9;
                c.w_min = c.radius;
                c.thin_search = true;
            }
            CaseId::Shape2d => {
                c.max_level = 8;
                c.cycles = 12;
                c.w_min = 4e-3;
                c.thin_search = true;
            }
            CaseId::Shape3dCyl => {
                c.max_level = 6;
                c.cycles = 12;
                c.w_min = 8e-3;
                c.thin_search = true;
            }
            CaseId::TwoElectrodes => {
                c.max_level = 7;
                c.base_level = 5;
                c.w_min = 8e-3;
                c.thin_search = true;
            }
            CaseId::Manufactured => {
                c.max_level = if dim == 2 { 6 } else { 4 };
                c.radius = 0.2;
            }
        }
        c
    }

    /// Resolves a configuration from `key = value` pairs.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let last = |k: &str| pairs.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let case_str = last("case").ok_or_else(|| Error::Config("no case given".into()))?;
        let case = CaseId::parse(case_str).ok_or_else(|| Error::Config(format!("unknown case {case_str:?}")))?;
        let dim = last("dim").map(|v| parse_num::<usize>("dim", v)).transpose()?;
        let mut c = Self::defaults(case, dim);
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Applies one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "case" => {
                self.case = CaseId::parse(v).ok_or_else(|| Error::Config(format!("unknown case {v:?}")))?
            }
            "shape" => {
                self.shape = SharpProfile::parse(v).ok_or_else(|| Error::Config(format!("unknown shape {v:?}")))?
            }
            "dim" => self.dim = parse_num(key, v)?,
            "block_size" => self.block_size = parse_num(key, v)?,
            "max_level" => self.max_level = parse_num(key, v)?,
            "base_level" => self.base_level = parse_num(key, v)?,
            "cycles" => self.cycles = parse_num(key, v)?,
            "cycle" => {
                self.cycle = match v {
                    "fmg" => CycleKind::Fmg,
                    "v" => CycleKind::V,
                    _ => return Err(Error::Config(format!("cycle must be fmg or v, got {v:?}"))),
                }
            }
            "n_up" => self.n_up = parse_num(key, v)?,
            "n_down" => self.n_down = parse_num(key, v)?,
            "coarse_rel_tol" => self.coarse_rel_tol = parse_num(key, v)?,
            "target_resid" => self.target_resid = parse_num(key, v)?,
            "rel_tol" => self.rel_tol = parse_num(key, v)?,
            "radius" => self.radius = parse_num(key, v)?,
            "phi_b" => self.phi_b = parse_num(key, v)?,
            "a" => self.a = parse_num(key, v)?,
            "w_min" => self.w_min = parse_num(key, v)?,
            "thin_search" => self.thin_search = parse_bool(key, v)?,
            "safety" => self.safety = parse_num(key, v)?,
            "eps_tol" => self.eps_tol = parse_num(key, v)?,
            "max_bracket_iters" => self.max_bracket_iters = parse_num(key, v)?,
            "offset_x" => self.offset[0] = parse_num(key, v)?,
            "offset_y" => self.offset[1] = parse_num(key, v)?,
            "tip_refine_radius" => self.tip_refine_radius = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            "dump" => self.dump = parse_bool(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn mg_config(&self) -> MgConfig {
        MgConfig {
            n_up: self.n_up,
            n_down: self.n_down,
            cycle: self.cycle,
            coarse_rel_tol: self.coarse_rel_tol,
            max_cycles: self.cycles,
            target_resid: self.target_resid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(d) = self.case.fixed_dim() {
            if d != self.dim {
                return bad(format!("case {} requires dim = {d}", self.case.name()));
            }
        }
        if self.dim != 2 && self.dim != 3 {
            return bad(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.block_size < 2 || self.block_size % 2 != 0 {
            return bad(format!("block_size must be even and at least 2, got {}", self.block_size));
        }
        if self.max_level < 1 || self.max_level > 20 {
            return bad(format!("max_level must lie in 1..=20, got {}", self.max_level));
        }
        if self.case == CaseId::TwoElectrodes && !(1..=self.max_level).contains(&self.base_level) {
            return bad("base_level must lie in 1..=max_level".into());
        }
        for (name, v) in [
            ("radius", self.radius),
            ("safety", self.safety),
            ("eps_tol", self.eps_tol),
            ("tip_refine_radius", self.tip_refine_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.w_min >= 0.0) || (self.thin_search && self.w_min <= 0.0) {
            return bad(format!("w_min must be positive when thin_search is on, got {}", self.w_min));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol < 1.0) {
            return bad(format!("rel_tol must lie in [0, 1), got {}", self.rel_tol));
        }
        if ![self.phi_b, self.a, self.offset[0], self.offset[1]].iter().all(|v| v.is_finite()) {
            return bad("phi_b, a and offsets must be finite".into());
        }
        self.root_config().validate()?;
        self.mg_config().validate()
    }

    pub fn root_config(&self) -> crate::levelset::RootSearchConfig {
        crate::levelset::RootSearchConfig {
            eps_tol: self.eps_tol,
            max_bracket_iters: self.max_bracket_iters,
        }
    }

    /// The resolved configuration in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("case", self.case.name().into());
        kv("shape", self.shape.name().into());
        kv("dim", self.dim.to_string());
        kv("block_size", self.block_size.to_string());
        kv("max_level", self.max_level.to_string());
        kv("base_level", self.base_level.to_string());
        kv("cycles", self.cycles.to_string());
        kv("cycle", if self.cycle == CycleKind::Fmg { "fmg" } else { "v" }.into());
        kv("n_up", self.n_up.to_string());
        kv("n_down", self.n_down.to_string());
        kv("coarse_rel_tol", format!("{:e}", self.coarse_rel_tol));
        kv("target_resid", format!("{:e}", self.target_resid));
        kv("rel_tol", format!("{:e}", self.rel_tol));
        kv("radius", format!("{:e}", self.radius));
        kv("phi_b", format!("{:e}", self.phi_b));
        kv("a", format!("{:e}", self.a));
        kv("w_min", format!("{:e}", self.w_min));
        kv("thin_search", self.thin_search.to_string());
        kv("safety", format!("{:e}", self.safety));
        kv("eps_tol", format!("{:e}", self.eps_tol));
        kv("max_bracket_iters", self.max_bracket_iters.to_string());
        kv("offset_x", format!("{:e}", self.offset[0]));
        kv("offset_y", format!("{:e}", self.offset[1]));
        kv("tip_refine_radius", format!("{:e}", self.tip_refine_radius));
        kv("threads", self.threads.to_string());
        kv("dump", self.dump.to_string());
        if let Some(out) = &self.out {
            kv("out", out.display().to_string());
        }
        s
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Parses a single `key=value` (as given to `--set`).
pub fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key = value, got {s:?}"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_owned(), v.to_owned()))
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text)
}
