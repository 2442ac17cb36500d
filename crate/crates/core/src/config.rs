//! Run settings read from a plain `key = value` file with optional
//! `[section]` headers and `#` comments.
//!
//! ```text
//! [model]
//! delta = 0.06
//! K = 1e9
//!
//! [grid]
//! M = 200
//! N = 200
//! ```
//!
//! Keys are matched case-insensitively. Before any header every key is
//! accepted; inside a section only that section's keys are. Overrides use
//! the same keys, optionally qualified as `section.key`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{SweepMode, SweepSpec};
use crate::grid::{Field, SpaceTimeGrid};
use crate::model::ModelParams;
use crate::schemes::SchemeKind;
use crate::solver::{default_ladder, LadderPlan, SeedKind, SolverConfig, Stage};

/// `(section, canonical key)` for every recognized setting.
pub const KEYS: &[(&str, &str)] = &[
    ("model", "delta"),
    ("model", "K"),
    ("model", "cutoff"),
    ("grid", "M"),
    ("grid", "N"),
    ("grid", "T"),
    ("solver", "scheme"),
    ("solver", "seed"),
    ("solver", "nu"),
    ("solver", "picard_tol"),
    ("solver", "picard_max"),
    ("solver", "newton_tol"),
    ("solver", "newton_max"),
    ("solver", "max_bisections"),
    ("solver", "bootstrap"),
    ("solver", "ladder"),
    ("solver", "coarse_M"),
    ("solver", "coarse_N"),
    ("sweep", "mode"),
    ("sweep", "resolutions"),
    ("sweep", "fixed"),
    ("sweep", "schemes"),
    ("probe", "scales"),
    ("probe", "directions"),
    ("report", "epsilon"),
    ("report", "snapshots"),
];

/// Explicit ladder rung: `M, N, delta, K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rung {
    pub m: usize,
    pub n: usize,
    pub delta: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub delta: f64,
    pub penalty: f64,
    pub cutoff: Option<f64>,
    pub m: usize,
    pub n: usize,
    pub horizon: f64,
    pub scheme: SchemeKind,
    pub seed: SeedKind,
    pub nu: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub max_bisections: usize,
    pub bootstrap: Option<SchemeKind>,
    /// Replaces the generated ladder; the target stage is appended when the
    /// last rung differs from it.
    pub ladder: Option<Vec<Rung>>,
    pub coarse_m: usize,
    pub coarse_n: usize,
    pub sweep_mode: SweepMode,
    pub resolutions: Vec<usize>,
    pub fixed: usize,
    pub schemes: Vec<SchemeKind>,
    pub scales: Vec<f64>,
    /// Sine mode numbers `k` of the probe directions `sin(k pi x)`.
    pub directions: Vec<usize>,
    pub epsilon: Option<f64>,
    pub snapshots: Vec<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        let solver = SolverConfig::new(Vec::new());
        let plan = LadderPlan::default();
        Settings {
            delta: 0.03,
            penalty: 1e9,
            cutoff: None,
            m: 30,
            n: 200,
            horizon: 1.0,
            scheme: SchemeKind::Forward,
            seed: SeedKind::TwoWall,
            nu: solver.nu,
            picard_tol: solver.picard_tol,
            picard_max: solver.picard_max,
            newton_tol: solver.newton_tol,
            newton_max: solver.newton_max,
            max_bisections: solver.max_bisections,
            bootstrap: solver.bootstrap,
            ladder: None,
            coarse_m: plan.coarse_m,
            coarse_n: plan.coarse_n,
            sweep_mode: SweepMode::Dt,
            resolutions: vec![200, 400, 800],
            fixed: 30,
            schemes: vec![SchemeKind::Forward, SchemeKind::Backward],
            scales: vec![1e-2, 5e-3, 2.5e-3],
            directions: vec![1, 2, 3],
            epsilon: None,
            snapshots: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

fn canonical(key: &str) -> Option<(&'static str, &'static str)> {
    KEYS.iter().copied().find(|(_, k)| k.eq_ignore_ascii_case(key))
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.trim().parse().map_err(|_| format!("expected a number, got {v:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got {v:?}"))
    }
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("expected a nonnegative integer, got {v:?}"))
}

fn parse_list<T>(v: &str, item: fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(item).collect()
}

fn optional(v: &str) -> Option<&str> {
    let t = v.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(t)
    }
}

fn parse_ladder(v: &str) -> std::result::Result<Vec<Rung>, String> {
    v.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| {
            let parts: Vec<&str> = r.split(',').collect();
            if parts.len() != 4 {
                return Err(format!("ladder rung {r:?} needs M, N, delta, K"));
            }
            Ok(Rung {
                m: parse_usize(parts[0])?,
                n: parse_usize(parts[1])?,
                delta: parse_f64(parts[2])?,
                penalty: parse_f64(parts[3])?,
            })
        })
        .collect()
}

fn text<T: std::str::FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|e: Error| match e {
        Error::Argument(m) => m,
        other => other.to_string(),
    })
}

impl Settings {
    /// Reads a settings file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src)
    }

    /// Parses settings text on top of the defaults.
    pub fn parse(src: &str) -> Result<Self> {
        let mut s = Settings::default();
        let mut section: Option<&'static str> = None;
        let mut seen: Vec<&'static str> = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| Error::Config { line, message };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {body:?}")))?
                    .trim();
                let known = KEYS
                    .iter()
                    .map(|(sec, _)| *sec)
                    .find(|sec| sec.eq_ignore_ascii_case(name))
                    .ok_or_else(|| err(format!("unknown section [{name}]")))?;
                section = Some(known);
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {body:?}")))?;
            let key = key.trim();
            let (sec, canon) = canonical(key).ok_or_else(|| err(format!("unknown key {key:?}")))?;
            if let Some(cur) = section {
                if cur != sec {
                    return Err(err(format!("key {canon} belongs in [{sec}], not [{cur}]")));
                }
            }
            if seen.contains(&canon) {
                return Err(err(format!("duplicate key {canon}")));
            }
            seen.push(canon);
            s.assign(canon, value.trim()).map_err(err)?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Applies one `key=value` override. Validation of the whole settings
    /// is left to [`Settings::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let err = |message: String| Error::Config { line: 0, message };
        let key = key.trim();
        let (sec, bare) = match key.split_once('.') {
            Some((s, k)) => (Some(s), k),
            None => (None, key),
        };
        let (home, canon) = canonical(bare).ok_or_else(|| err(format!("unknown key {key:?}")))?;
        if let Some(s) = sec {
            if !s.eq_ignore_ascii_case(home) {
                return Err(err(format!("key {canon} belongs in [{home}], not [{s}]")));
            }
        }
        self.assign(canon, value.trim())
            .map_err(|m| err(format!("override {canon}: {m}")))
    }

    /// Applies a list of `key=value` strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config {
                line: 0,
                message: format!("override {o:?} is not key=value"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    fn assign(&mut self, key: &'static str, v: &str) -> std::result::Result<(), String> {
        match key {
            "delta" => self.delta = parse_f64(v)?,
            "K" => self.penalty = parse_f64(v)?,
            "cutoff" => self.cutoff = optional(v).map(parse_f64).transpose()?,
            "M" => self.m = parse_usize(v)?,
            "N" => self.n = parse_usize(v)?,
            "T" => self.horizon = parse_f64(v)?,
            "scheme" => self.scheme = text(v)?,
            "seed" => self.seed = text(v)?,
            "nu" => self.nu = parse_f64(v)?,
            "picard_tol" => self.picard_tol = parse_f64(v)?,
            "picard_max" => self.picard_max = parse_usize(v)?,
            "newton_tol" => self.newton_tol = parse_f64(v)?,
            "newton_max" => self.newton_max = parse_usize(v)?,
            "max_bisections" => self.max_bisections = parse_usize(v)?,
            "bootstrap" => self.bootstrap = optional(v).map(text).transpose()?,
            "ladder" => self.ladder = optional(v).map(parse_ladder).transpose()?,
            "coarse_M" => self.coarse_m = parse_usize(v)?,
            "coarse_N" => self.coarse_n = parse_usize(v)?,
            "mode" => self.sweep_mode = text(v)?,
            "resolutions" => self.resolutions = parse_list(v, parse_usize)?,
            "fixed" => self.fixed = parse_usize(v)?,
            "schemes" => self.schemes = parse_list(v, text)?,
            "scales" => self.scales = parse_list(v, parse_f64)?,
            "directions" => self.directions = parse_list(v, parse_usize)?,
            "epsilon" => self.epsilon = optional(v).map(parse_f64).transpose()?,
            "snapshots" => self.snapshots = parse_list(v, parse_f64)?,
            other => return Err(format!("unhandled key {other}")),
        }
        Ok(())
    }

    /// Checks every setting, building the solver configuration and the
    /// sweep specification on the way.
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Error::Config { line: 0, message };
        self.solver_config().map_err(|e| err(e.to_string()))?;
        self.sweep_spec().map_err(|e| err(e.to_string()))?;
        if self.scales.is_empty() || self.scales.iter().any(|&h| !(h > 0.0)) {
            return Err(err("probe scales must be positive and nonempty".into()));
        }
        if self.directions.is_empty() || self.directions.contains(&0) {
            return Err(err("probe directions are sine modes k >= 1".into()));
        }
        if self.snapshots.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(err(format!("snapshot times must lie in [0, {}]", self.horizon)));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(err(format!("epsilon must be positive, got {e}")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        self.params_at(self.delta, self.penalty)
    }

    fn params_at(&self, delta: f64, penalty: f64) -> Result<ModelParams> {
        let mut p = ModelParams::new(delta, penalty)?;
        if let Some(s) = self.cutoff {
            p = p.with_cutoff(s)?;
        }
        p.epsilon = self.epsilon;
        p.validate()?;
        Ok(p)
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.m, self.n, self.horizon)
    }

    pub fn target(&self) -> Result<Stage> {
        Ok(Stage {
            grid: self.grid()?,
            params: self.params()?,
        })
    }

    pub fn plan(&self) -> LadderPlan {
        LadderPlan {
            coarse_m: self.coarse_m,
            coarse_n: self.coarse_n,
            ..LadderPlan::default()
        }
    }

    fn with_solver_settings(&self, ladder: Vec<Stage>) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(ladder);
        cfg.nu = self.nu;
        cfg.picard_tol = self.picard_tol;
        cfg.picard_max = self.picard_max;
        cfg.newton_tol = self.newton_tol;
        cfg.newton_max = self.newton_max;
        cfg.max_bisections = self.max_bisections;
        cfg.bootstrap = self.bootstrap;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Solver configuration whose ladder ends at the target stage.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let target = self.target()?;
        let ladder = match &self.ladder {
            None => default_ladder(target, &self.plan())?,
            Some(rungs) => {
                let mut stages = rungs
                    .iter()
                    .map(|r| {
                        Ok(Stage {
                            grid: SpaceTimeGrid::new(r.m, r.n, self.horizon)?,
                            params: self.params_at(r.delta, r.penalty)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if stages.last() != Some(&target) {
                    stages.push(target);
                }
                stages
            }
        };
        self.with_solver_settings(ladder)
    }

    /// Sweep over the configured resolutions; cells reuse the model
    /// parameters and solver settings of the target.
    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let spec = SweepSpec {
            mode: self.sweep_mode,
            resolutions: self.resolutions.clone(),
            fixed: self.fixed,
            base: self.with_solver_settings(vec![self.target()?])?,
            scheme_set: self.schemes.clone(),
            seed: self.seed,
            plan: self.plan(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Probe directions `sin(k pi x)` on `g`.
    pub fn probe_directions(&self, g: &SpaceTimeGrid) -> Vec<Field> {
        self.directions
            .iter()
            .map(|&k| g.sample(|x| (k as f64 * std::f64::consts::PI * x).sin()))
            .collect()
    }

    /// Settings text that parses back to `self`.
    pub fn render(&self) -> String {
        let list = |v: Vec<String>| v.join(", ");
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut out = String::new();
        let mut section = "";
        for &(sec, key) in KEYS {
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let value = match key {
                "delta" => self.delta.to_string(),
                "K" => self.penalty.to_string(),
                "cutoff" => opt(self.cutoff.map(|v| v.to_string())),
                "M" => self.m.to_string(),
                "N" => self.n.to_string(),
                "T" => self.horizon.to_string(),
                "scheme" => self.scheme.tag().to_string(),
                "seed" => self.seed.to_string(),
                "nu" => self.nu.to_string(),
                "picard_tol" => self.picard_tol.to_string(),
                "picard_max" => self.picard_max.to_string(),
                "newton_tol" => self.newton_tol.to_string(),
                "newton_max" => self.newton_max.to_string(),
                "max_bisections" => self.max_bisections.to_string(),
                "bootstrap" => opt(self.bootstrap.map(|k| k.tag().to_string())),
                "ladder" => opt(self.ladder.as_ref().map(|r| {
                    r.iter()
                        .map(|r| format!("{}, {}, {}, {}", r.m, r.n, r.delta, r.penalty))
                        .collect::<Vec<_>>()
                        .join("; ")
                })),
                "coarse_M" => self.coarse_m.to_string(),
                "coarse_N" => self.coarse_n.to_string(),
                "mode" => self.sweep_mode.to_string(),
                "resolutions" => list(self.resolutions.iter().map(|v| v.to_string()).collect()),
                "fixed" => self.fixed.to_string(),
                "schemes" => list(self.schemes.iter().map(|k| k.tag().to_string()).collect()),
                "scales" => list(self.scales.iter().map(|v| v.to_string()).collect()),
                "directions" => list(self.directions.iter().map(|v| v.to_string()).collect()),
                "epsilon" => opt(self.epsilon.map(|v| v.to_string())),
                "snapshots" => list(self.snapshots.iter().map(|v| v.to_string()).collect()),
                _ => unreachable!("every key is rendered"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
