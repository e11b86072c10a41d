//! Flat `key = value` scenario files with `[section]` headers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fourier::{NoiseKernel, Norm};
use crate::maps::{check_expansion, DiffeoFamily, MapFamily, TrigMap, TrigPoly};

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["name"]),
    ("map", &["kind", "a", "epsilon", "degree", "shift", "cos", "sin"]),
    (
        "perturbation",
        &["s1_constant", "s1_cos", "s1_sin", "s2_constant", "s2_cos", "s2_sin", "delta_max"],
    ),
    ("noise", &["xi"]),
    (
        "numerics",
        &[
            "order",
            "quadrature",
            "deltas",
            "weak_norm",
            "mixing_strong",
            "mixing_weak",
            "mixing_steps",
            "ly_k",
            "ly_steps",
            "ulam_bins",
            "mc_steps",
            "mc_burn_in",
            "seed",
            "golden_linear_tol",
            "golden_quadratic_tol",
            "golden_second_tol",
            "slope_first_min",
            "slope_first_max",
            "slope_second_min",
            "markov_tol",
            "residual_tol",
            "neumann_tol",
            "fd_linear_tol",
            "fd_second_tol",
            "ulam_tol",
            "mc_sigmas",
            "regularization_tol",
        ],
    ),
    ("output", &["dir", "grid", "formats"]),
];

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Line(usize, String),
    Override(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n, text) => write!(f, "line {n} `{text}`"),
            Origin::Override(text) => write!(f, "override `{text}`"),
        }
    }
}

/// Raw parsed file: `(section, key) -> (value, origin)`.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: BTreeMap<(String, String), (String, Origin)>,
}

fn known(section: &str, key: &str) -> bool {
    SECTIONS
        .iter()
        .any(|(s, keys)| *s == section && keys.contains(&key))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::Line(i + 1, raw.trim().to_string());
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("{origin}: unterminated section header")))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| !s.is_empty() && *s == name) {
                    return Err(Error::Config(format!("{origin}: unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}: expected `key = value`")))?;
            cfg.insert(&section, key.trim(), value.trim(), origin)?;
        }
        Ok(cfg)
    }

    fn insert(&mut self, section: &str, key: &str, value: &str, origin: Origin) -> Result<()> {
        if !known(section, key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            return Err(Error::Config(format!("{origin}: unknown key `{key}` in {place}")));
        }
        let slot = (section.to_string(), key.to_string());
        if let Some((_, first)) = self.entries.get(&slot) {
            if matches!(origin, Origin::Line(..)) {
                return Err(Error::Config(format!("{origin}: duplicate key `{key}` (first at {first})")));
            }
        }
        self.entries.insert(slot, (value.to_string(), origin));
        Ok(())
    }

    /// Applies `section.key=value` (or `name=value`); `delta`/`deltas` alone
    /// address `numerics.deltas`.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let origin = Origin::Override(spec.to_string());
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{origin}: expected `key=value`")))?;
        let path = path.trim();
        let (section, key) = match path {
            "delta" | "deltas" | "δ" => ("numerics", "deltas"),
            _ => path.split_once('.').unwrap_or(("", path)),
        };
        self.insert(section, key, value.trim(), origin)
    }

    fn raw(&self, section: &str, key: &str) -> Option<&(String, Origin)> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn has_section(&self, section: &str) -> bool {
        self.entries.keys().any(|(s, _)| s == section)
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, origin)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{origin}: cannot parse `{v}` for `{key}`"))),
        }
    }

    fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, origin)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("{origin}: cannot parse `{s}` in list `{key}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn origin(&self, section: &str, key: &str) -> String {
        self.raw(section, key)
            .map_or_else(|| format!("[{section}] {key} (default)"), |(_, o)| o.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Doubling,
    Arnold,
    Custom,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapKind::Doubling => "doubling",
            MapKind::Arnold => "arnold",
            MapKind::Custom => "custom",
        })
    }
}

/// Acceptance thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub golden_linear: f64,
    pub golden_quadratic: f64,
    pub golden_second: f64,
    pub slope_first_min: f64,
    pub slope_first_max: f64,
    pub slope_second_min: f64,
    pub markov: f64,
    pub residual: f64,
    pub neumann: f64,
    pub fd_linear: f64,
    pub fd_second: f64,
    pub ulam: f64,
    pub mc_sigmas: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub order: usize,
    pub quadrature: usize,
    /// Positive steps; the runner also evaluates their negatives.
    pub deltas: Vec<f64>,
    pub weak_norm: Norm,
    pub mixing_strong: Norm,
    pub mixing_weak: Norm,
    pub mixing_steps: usize,
    pub ly_k: u32,
    pub ly_steps: usize,
    /// 0 disables the Ulam oracle.
    pub ulam_bins: usize,
    /// 0 disables the Monte Carlo oracle.
    pub mc_steps: u64,
    pub mc_burn_in: u64,
    pub seed: u64,
    pub tol: Tolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub grid: usize,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: MapKind,
    pub map: TrigMap,
    pub perturbation: DiffeoFamily,
    pub noise: Option<NoiseKernel>,
    pub numerics: Numerics,
    pub output: OutputSpec,
}

pub const DEFAULT_DELTAS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

fn trig(cfg: &ConfigFile, section: &str, prefix: &str) -> Result<TrigPoly> {
    Ok(TrigPoly {
        constant: cfg.get_or(section, &format!("{prefix}constant"), 0.0)?,
        cos: cfg.list(section, &format!("{prefix}cos"))?.unwrap_or_default(),
        sin: cfg.list(section, &format!("{prefix}sin"))?.unwrap_or_default(),
    })
}

fn forbid(cfg: &ConfigFile, section: &str, keys: &[&str], why: &str) -> Result<()> {
    for k in keys {
        if cfg.raw(section, k).is_some() {
            return Err(Error::Config(format!("{}: `{k}` is not used {why}", cfg.origin(section, k))));
        }
    }
    Ok(())
}

fn positive(cfg: &ConfigFile, section: &str, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{}: `{key}` must be positive and finite, got {v}", cfg.origin(section, key))))
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_config(&ConfigFile::parse(text)?)
    }

    pub fn from_config(cfg: &ConfigFile) -> Result<Self> {
        let name: String = cfg
            .get("", "name")?
            .ok_or_else(|| Error::Config("missing top-level `name`".into()))?;
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::Config(format!("{}: invalid scenario name", cfg.origin("", "name"))));
        }

        let kind_s: String = cfg
            .get("map", "kind")?
            .ok_or_else(|| Error::Config("missing [map] kind".into()))?;
        let (kind, map) = match kind_s.as_str() {
            "doubling" => {
                forbid(cfg, "map", &["a", "epsilon", "degree", "shift", "cos", "sin"], "by kind = doubling")?;
                (MapKind::Doubling, TrigMap::doubling())
            }
            "arnold" => {
                forbid(cfg, "map", &["degree", "shift", "cos", "sin"], "by kind = arnold")?;
                let a = cfg.get("map", "a")?.ok_or_else(|| Error::Config("[map] kind = arnold needs `a`".into()))?;
                let eps = cfg
                    .get("map", "epsilon")?
                    .ok_or_else(|| Error::Config("[map] kind = arnold needs `epsilon`".into()))?;
                (MapKind::Arnold, TrigMap::arnold(a, eps))
            }
            "custom" => {
                forbid(cfg, "map", &["a", "epsilon"], "by kind = custom")?;
                let degree: i64 = cfg
                    .get("map", "degree")?
                    .ok_or_else(|| Error::Config("[map] kind = custom needs `degree`".into()))?;
                if degree < 1 {
                    return Err(Error::Config(format!("{}: degree must be >= 1", cfg.origin("map", "degree"))));
                }
                let periodic = TrigPoly {
                    constant: 0.0,
                    cos: cfg.list("map", "cos")?.unwrap_or_default(),
                    sin: cfg.list("map", "sin")?.unwrap_or_default(),
                };
                let shift = cfg.get_or("map", "shift", 0.0)?;
                (MapKind::Custom, TrigMap { degree, shift, periodic })
            }
            other => {
                return Err(Error::Config(format!(
                    "{}: unknown map kind `{other}` (doubling | arnold | custom)",
                    cfg.origin("map", "kind")
                )))
            }
        };

        let delta_max = cfg.get_or("perturbation", "delta_max", 0.05)?;
        let perturbation = DiffeoFamily::new(trig(cfg, "perturbation", "s1_")?, trig(cfg, "perturbation", "s2_")?, delta_max)
            .map_err(|e| Error::Config(format!("[perturbation]: {e}")))?;

        let noise = match cfg.raw("noise", "xi") {
            None if cfg.has_section("noise") => return Err(Error::Config("[noise] needs `xi`".into())),
            None => None,
            Some((v, _)) if v == "none" => None,
            Some(_) => {
                let xi: f64 = cfg.get("noise", "xi")?.unwrap_or(0.0);
                Some(NoiseKernel::new(xi).map_err(|e| Error::Config(format!("{}: {e}", cfg.origin("noise", "xi"))))?)
            }
        };

        let order: usize = cfg.get_or("numerics", "order", 64)?;
        if order < 2 {
            return Err(Error::Config(format!("{}: order must be >= 2", cfg.origin("numerics", "order"))));
        }
        let quadrature: usize = cfg.get_or("numerics", "quadrature", 8 * order)?;
        if quadrature < 4 * order {
            return Err(Error::Config(format!(
                "{}: quadrature {quadrature} must be at least 4 * order = {}",
                cfg.origin("numerics", "quadrature"),
                4 * order
            )));
        }
        let mut deltas = cfg.list("numerics", "deltas")?.unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
        if deltas.len() < 4 {
            return Err(Error::Config(format!(
                "{}: need at least 4 deltas",
                cfg.origin("numerics", "deltas")
            )));
        }
        for d in &mut deltas {
            if !(d.is_finite() && *d != 0.0) {
                return Err(Error::Config(format!("{}: deltas must be nonzero", cfg.origin("numerics", "deltas"))));
            }
            *d = d.abs();
            if *d > delta_max {
                return Err(Error::Config(format!(
                    "{}: delta {d} exceeds delta_max {delta_max}",
                    cfg.origin("numerics", "deltas")
                )));
            }
        }
        deltas.sort_by(|a, b| b.total_cmp(a));
        deltas.dedup();
        if deltas.len() < 4 {
            return Err(Error::Config(format!("{}: need at least 4 distinct |delta|", cfg.origin("numerics", "deltas"))));
        }

        let norm = |key: &str, default: Norm| -> Result<Norm> {
            match cfg.raw("numerics", key) {
                None => Ok(default),
                Some((v, origin)) => v
                    .parse()
                    .map_err(|_| Error::Config(format!("{origin}: unknown norm `{v}` (L1, C<k>, W<k>1)"))),
            }
        };
        let noisy = noise.is_some();
        let weak_norm = norm("weak_norm", Norm::L1)?;
        let mixing_strong = norm("mixing_strong", if noisy { Norm::Ck(1) } else { Norm::Wk1(1) })?;
        let mixing_weak = norm("mixing_weak", if noisy { Norm::Ck(0) } else { Norm::L1 })?;

        let tol = |key: &str, default: f64| -> Result<f64> { positive(cfg, "numerics", key, cfg.get_or("numerics", key, default)?) };
        let tol = Tolerances {
            golden_linear: tol("golden_linear_tol", 1e-10)?,
            golden_quadratic: tol("golden_quadratic_tol", 1e-8)?,
            golden_second: tol("golden_second_tol", 2e-8)?,
            slope_first_min: tol("slope_first_min", 1.9)?,
            slope_first_max: tol("slope_first_max", 2.1)?,
            slope_second_min: tol("slope_second_min", 2.7)?,
            markov: tol("markov_tol", 1e-10)?,
            residual: tol("residual_tol", 1e-10)?,
            neumann: tol("neumann_tol", 1e-8)?,
            fd_linear: tol("fd_linear_tol", 1e-4)?,
            fd_second: tol("fd_second_tol", 5e-4)?,
            ulam: tol("ulam_tol", 2e-3)?,
            mc_sigmas: tol("mc_sigmas", 5.0)?,
            regularization: tol("regularization_tol", 1e-10)?,
        };
        if tol.slope_first_min > tol.slope_first_max {
            return Err(Error::Config("slope_first_min exceeds slope_first_max".into()));
        }

        let mixing_steps: usize = cfg.get_or("numerics", "mixing_steps", 20)?;
        let ly_k: u32 = cfg.get_or("numerics", "ly_k", 1)?;
        let ly_steps: usize = cfg.get_or("numerics", "ly_steps", 10)?;
        if mixing_steps == 0 || ly_k == 0 || ly_steps == 0 {
            return Err(Error::Config("mixing_steps, ly_k and ly_steps must be positive".into()));
        }
        let ulam_bins: usize = cfg.get_or("numerics", "ulam_bins", 4096)?;
        if ulam_bins != 0 && !ulam_bins.is_multiple_of(512) {
            return Err(Error::Config(format!(
                "{}: ulam_bins must be 0 or a multiple of 512",
                cfg.origin("numerics", "ulam_bins")
            )));
        }

        let grid: usize = cfg.get_or("output", "grid", 1024)?;
        if grid == 0 {
            return Err(Error::Config(format!("{}: grid must be positive", cfg.origin("output", "grid"))));
        }
        if let Some((v, origin)) = cfg.raw("output", "formats") {
            if v.split(',').any(|f| f.trim() != "csv") {
                return Err(Error::Config(format!("{origin}: only `csv` output is supported")));
            }
        }
        let dir: String = cfg.get_or("output", "dir", format!("out/{name}"))?;

        let scenario = Self {
            kind,
            map,
            perturbation,
            noise,
            numerics: Numerics {
                order,
                quadrature,
                deltas,
                weak_norm,
                mixing_strong,
                mixing_weak,
                mixing_steps,
                ly_k,
                ly_steps,
                ulam_bins,
                mc_steps: cfg.get_or("numerics", "mc_steps", 1_000_000)?,
                mc_burn_in: cfg.get_or("numerics", "mc_burn_in", 1000)?,
                seed: cfg.get_or("numerics", "seed", 42)?,
                tol,
            },
            output: OutputSpec { dir: PathBuf::from(dir), grid },
            name,
        };
        if scenario.noise.is_none() {
            check_expansion(&scenario.map).map_err(|e| {
                Error::Config(format!("[map]: {e}; a deterministic scenario needs an expanding map or a [noise] section"))
            })?;
        }
        Ok(scenario)
    }

    pub fn family(&self) -> MapFamily {
        MapFamily::new(self.map.clone(), self.perturbation.clone(), self.noise)
    }

    /// Amplitude `b` when the scenario is the doubling map with `S1 = b sin 2 pi x`, `S2 = 0`.
    pub fn doubling_sin_amplitude(&self) -> Option<f64> {
        let s1 = &self.perturbation.s1;
        let plain = self.kind != MapKind::Arnold && self.map == TrigMap::doubling();
        let sin_only = s1.constant == 0.0 && s1.cos.iter().all(|&c| c == 0.0) && s1.sin.iter().skip(1).all(|&c| c == 0.0);
        (plain && self.noise.is_none() && self.perturbation.s2.is_zero() && sin_only)
            .then(|| s1.sin.first().copied().unwrap_or(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLING: &str = "name = d\n[map]\nkind = doubling\n[perturbation]\ns1_sin = 1\n";

    #[test]
    fn defaults() {
        let s = Scenario::parse(DOUBLING).unwrap();
        assert_eq!(s.numerics.order, 64);
        assert_eq!(s.numerics.quadrature, 512);
        assert_eq!(s.numerics.deltas, DEFAULT_DELTAS.to_vec());
        assert_eq!(s.output.grid, 1024);
        assert_eq!(s.output.dir, PathBuf::from("out/d"));
        assert_eq!(s.doubling_sin_amplitude(), Some(1.0));
        assert!(s.noise.is_none());
    }

    #[test]
    fn unknown_key_has_line_context() {
        let err = Scenario::parse("name = d\n[map]\nkind = doubling\nspeed = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("speed"), "{msg}");
        assert!(ConfigFile::parse("[maps]\n").is_err());
        assert!(ConfigFile::parse("name = a\nname = b\n").is_err());
        assert!(ConfigFile::parse("[map]\nkind doubling\n").is_err());
    }

    #[test]
    fn rejects_invalid_ranges() {
        let over = format!("{DOUBLING}[numerics]\ndeltas = 0.1, 0.05, 0.02, 0.01\n");
        assert!(Scenario::parse(&over).unwrap_err().to_string().contains("delta_max"));
        let tol = format!("{DOUBLING}[numerics]\nmarkov_tol = 0\n");
        assert!(Scenario::parse(&tol).is_err());
        let quad = format!("{DOUBLING}[numerics]\norder = 32\nquadrature = 64\n");
        assert!(Scenario::parse(&quad).is_err());
        let fmt = format!("{DOUBLING}[output]\nformats = png\n");
        assert!(Scenario::parse(&fmt).is_err());
    }

    #[test]
    fn non_expanding_needs_noise() {
        let text = "name = a\n[map]\nkind = arnold\na = 0.3\nepsilon = 1.2\n[perturbation]\ns1_constant = 1\n";
        assert!(Scenario::parse(text).is_err());
        let noisy = format!("{text}[noise]\nxi = 0.1\n");
        assert!(Scenario::parse(&noisy).unwrap().noise.is_some());
    }

    #[test]
    fn overrides() {
        let mut cfg = ConfigFile::parse(DOUBLING).unwrap();
        cfg.set_override("delta=2e-2,1e-2,5e-3,2.5e-3").unwrap();
        cfg.set_override("numerics.order=16").unwrap();
        let s = Scenario::from_config(&cfg).unwrap();
        assert_eq!(s.numerics.deltas[0], 2e-2);
        assert_eq!(s.numerics.order, 16);
        assert!(cfg.set_override("numerics.bogus=1").is_err());
    }

    #[test]
    fn custom_map() {
        let text = "name = c\n[map]\nkind = custom\ndegree = 3\nshift = 0.1\nsin = 0, 0.05\n[perturbation]\ns1_cos = 0.5\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.map.degree, 3);
        assert_eq!(s.map.periodic.sin, vec![0.0, 0.05]);
        assert_eq!(s.doubling_sin_amplitude(), None);
    }
}
