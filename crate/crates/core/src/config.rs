//! Run configuration: a flat `key = value` file with `--key value` overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::eigsolve::{DEFAULT_SEED, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::geometry::{HomotopyMap, SymmetryFamily};
use crate::track::{SweepOptions, DEFAULT_MODES, DEFAULT_THRESHOLD};

/// Parameter grid: `Count(n)` is `n` evenly spaced points on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub enum GridSpec {
    Count(usize),
    List(Vec<f64>),
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Count(n) if *n <= 1 => vec![0.0],
            GridSpec::Count(n) => (0..*n).map(|k| k as f64 / (*n - 1) as f64).collect(),
            GridSpec::List(v) => v.clone(),
        }
    }

    fn parse(s: &str) -> Result<GridSpec> {
        let s = s.trim();
        if !s.contains(',') {
            if let Ok(n) = s.parse::<usize>() {
                return Ok(GridSpec::Count(n));
            }
        }
        let v = s
            .split(',')
            .map(|x| parse_real(x.trim()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(GridSpec::List(v))
    }

    fn render(&self) -> String {
        match self {
            GridSpec::Count(n) => n.to_string(),
            GridSpec::List(v) => v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub map: HomotopyMap,
    pub families: Vec<SymmetryFamily>,
    pub grid: GridSpec,
    pub h: f64,
    pub n_modes: usize,
    pub tol: f64,
    pub threshold: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map: HomotopyMap::CircleH,
            families: SymmetryFamily::ALL.to_vec(),
            grid: GridSpec::Count(11),
            h: 1.0 / 64.0,
            n_modes: DEFAULT_MODES,
            tol: DEFAULT_TOL,
            threshold: DEFAULT_THRESHOLD,
            out_dir: PathBuf::from("spectral-homotopy-out"),
            seed: DEFAULT_SEED,
        }
    }
}

pub const KEYS: [&str; 9] = ["map", "families", "grid", "h", "n_modes", "tol", "threshold", "out", "seed"];

/// Reals may be written as fractions, e.g. `1/64`.
fn parse_real(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("'{s}' is not a number"));
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

impl RunConfig {
    /// Parse a config file body; unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    /// Set one key; used by both the file parser and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.replace('-', "_").as_str() {
            "map" => self.map = value.parse()?,
            "families" | "family" => {
                self.families = if value.eq_ignore_ascii_case("all") {
                    SymmetryFamily::ALL.to_vec()
                } else {
                    value.split(',').map(|f| f.parse()).collect::<Result<_>>()?
                }
            }
            "grid" => self.grid = GridSpec::parse(value)?,
            "h" => self.h = parse_real(value)?,
            "n_modes" | "n" => {
                self.n_modes = value
                    .parse()
                    .map_err(|_| Error::Config(format!("n_modes '{value}' is not an integer")))?
            }
            "tol" => self.tol = parse_real(value)?,
            "threshold" => self.threshold = parse_real(value)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("seed '{value}' is not an integer")))?
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 0.25) {
            return Err(Error::Config(format!("h = {} outside (0, 0.25]", self.h)));
        }
        if !(1..=50).contains(&self.n_modes) {
            return Err(Error::Config(format!("n_modes = {} outside [1, 50]", self.n_modes)));
        }
        if self.families.is_empty() {
            return Err(Error::Config("no families selected".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol = {} outside (0, 1)", self.tol)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold = {} must be positive", self.threshold)));
        }
        let pts = self.grid.points();
        if pts.len() < 2 {
            return Err(Error::Config("grid needs at least two points".into()));
        }
        if pts.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("grid points must lie in [0, 1]".into()));
        }
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid must be strictly ascending".into()));
        }
        Ok(())
    }

    pub fn t_grid(&self) -> Vec<f64> {
        self.grid.points()
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            n_modes: self.n_modes,
            tol: self.tol,
            seed: self.seed,
            threshold: self.threshold,
            ..SweepOptions::default()
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let fams: Vec<&str> = self.families.iter().map(|f| f.as_str()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "map = {}", self.map);
        let _ = writeln!(s, "families = {}", fams.join(","));
        let _ = writeln!(s, "grid = {}", self.grid.render());
        let _ = writeln!(s, "h = {:?}", self.h);
        let _ = writeln!(s, "n_modes = {}", self.n_modes);
        let _ = writeln!(s, "tol = {:?}", self.tol);
        let _ = writeln!(s, "threshold = {:?}", self.threshold);
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
