//! Run configuration: a flat `key = value` text format with dotted keys.
//!
//! ```text
//! # comment
//! n = 3
//! p = 4
//! source = power:m=2      # or `source = power` plus `source.m = 2`
//! target = euclidean
//! start.r = 1
//! start.alpha = 0.5
//! start.alpha_prime = 0.5
//! rmax = 200
//!
//! [sweep]                 # prefixes the following keys with `sweep.`
//! n = 2, 3
//! source.m = 1, 2
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::integrator::{TerminationEvent, DEFAULT_TOL};
use crate::ode::{ProblemSpec, StatePoint};
use crate::warp::WarpProfile;

pub const MIN_TOL: f64 = 1e-14;
pub const MAX_TOL: f64 = 1e-2;
pub const DEFAULT_OUT: &str = "out";

const WARP_PARAMS: [&str; 3] = ["m", "a", "c2"];
const SIDES: [&str; 2] = ["source", "target"];

/// Checks toggled by `verify.<name> = on|off`.
pub const CHECK_NAMES: [&str; 8] = [
    "monotonicity",
    "energy_slope",
    "cone_bound",
    "cone_separation",
    "energy_floor",
    "vanishing_order",
    "barrier",
    "no_recrossing",
];

/// Raw key/value pairs in file order of precedence: later `set` calls win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::config(format!("line {}", i + 1), format!("unterminated section `{line}`"))
                })?;
                section = name.trim().to_owned();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", i + 1), format!("expected `key = value`, found `{line}`"))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {}", i + 1), "empty key"));
            }
            let key = if section.is_empty() {
                key.to_owned()
            } else {
                format!("{section}.{key}")
            };
            map.set(&key, value.trim());
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_owned(), value.to_owned());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    fn required_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::config(key, "required key is missing"))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "on" | "true" | "yes" | "1" => Ok(true),
                "off" | "false" | "no" | "0" => Ok(false),
                _ => Err(Error::config(key, format!("expected on/off, found `{v}`"))),
            })
            .transpose()
    }

    /// Rejects keys outside the documented grammar so typos are reported.
    fn check_known_keys(&self) -> Result<()> {
        for key in self.keys() {
            if !is_known_key(key) {
                return Err(Error::config(key, "unknown key"));
            }
        }
        Ok(())
    }
}

fn is_known_key(key: &str) -> bool {
    const PLAIN: [&str; 11] = [
        "n", "p", "alpha0", "rmax", "tol", "out", "jobs", "source", "target", "start.r", "start.alpha",
    ];
    const VERIFY: [&str; 11] = [
        "verify.profile",
        "verify.termination",
        "verify.slope.window",
        "verify.slope.a",
        "verify.slope.b",
        "verify.cone.c",
        "verify.cone.cs",
        "verify.floor.c2",
        "verify.floor.c",
        "start.alpha_prime",
        "sweep.alpha0",
    ];
    if PLAIN.contains(&key) || VERIFY.contains(&key) || key == "sweep.n" || key == "sweep.p" {
        return true;
    }
    if let Some(check) = key.strip_prefix("verify.") {
        if CHECK_NAMES.contains(&check) {
            return true;
        }
    }
    let warp_param = |k: &str| {
        k.split_once('.')
            .is_some_and(|(side, param)| SIDES.contains(&side) && WARP_PARAMS.contains(&param))
    };
    warp_param(key) || key.strip_prefix("sweep.").is_some_and(warp_param)
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("`{value}` is not finite")))
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    items.into_iter().map(|s| parse_f64(key, s)).collect()
}

/// A warp family name with its parameters, as written in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpChoice {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl WarpChoice {
    /// Parses `name` or `name:key=value,key=value`.
    pub fn parse(key: &str, text: &str) -> Result<Self> {
        let (name, rest) = match text.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (text.trim(), None),
        };
        let mut params = BTreeMap::new();
        for item in rest.into_iter().flat_map(|r| r.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config(key, format!("expected `param=value`, found `{item}`")))?;
            let k = k.trim();
            if !WARP_PARAMS.contains(&k) {
                return Err(Error::config(format!("{key}.{k}"), "unknown warp parameter"));
            }
            params.insert(k.to_owned(), parse_f64(&format!("{key}.{k}"), v)?);
        }
        Ok(Self {
            name: name.to_owned(),
            params,
        })
    }

    pub fn build(&self, key: &str) -> Result<WarpProfile<f64>> {
        WarpProfile::from_name(&self.name, |k| self.params.get(k).copied()).map_err(|e| match e {
            Error::InvalidWarpParameter { detail, .. } => Error::config(key, detail),
            other => other,
        })
    }
}

/// Where the solution starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    /// Singular startup at the origin with `α'(0) = alpha0`.
    Origin(f64),
    /// Continuation from a given interior state.
    Interior(StatePoint<f64>),
}

/// One swept axis: config key and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub enabled: BTreeMap<String, bool>,
    pub profile: Option<PathBuf>,
    pub termination: TerminationEvent<f64>,
    pub slope_window: Option<(f64, f64)>,
    pub slope_a: Option<f64>,
    pub slope_b: Option<f64>,
    pub cone_c: Option<f64>,
    pub cone_cs: Vec<f64>,
    pub floor_c2: Option<f64>,
    pub floor_c: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            enabled: CHECK_NAMES.iter().map(|&c| (c.to_owned(), true)).collect(),
            profile: None,
            termination: TerminationEvent::ReachedRMax,
            slope_window: None,
            slope_a: None,
            slope_b: None,
            cone_c: None,
            cone_cs: (1..=10).map(|i| f64::from(i) / 10.0).collect(),
            floor_c2: None,
            floor_c: None,
        }
    }
}

impl VerifyConfig {
    pub fn is_enabled(&self, check: &str) -> bool {
        self.enabled.get(check).copied().unwrap_or(false)
    }
}

/// A fully validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub p: f64,
    pub source: WarpChoice,
    pub target: WarpChoice,
    /// `None` only when verifying a stored profile.
    pub start: Option<Start>,
    pub r_max: Option<f64>,
    pub tol: f64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub sweep: Vec<Axis>,
    pub verify: VerifyConfig,
}

fn warp_choice(map: &ConfigMap, side: &str) -> Result<WarpChoice> {
    let text = map.get(side).ok_or_else(|| Error::config(side, "required key is missing"))?;
    let mut choice = WarpChoice::parse(side, text)?;
    for param in WARP_PARAMS {
        let key = format!("{side}.{param}");
        if let Some(v) = map.f64(&key)? {
            choice.params.insert(param.to_owned(), v);
        }
    }
    Ok(choice)
}

fn missing_start() -> Error {
    Error::config(
        "alpha0",
        "required key is missing (or give start.r, start.alpha, start.alpha_prime)",
    )
}

fn dimension(key: &str, v: f64) -> Result<usize> {
    if v.fract() == 0.0 && (2.0..=1e6).contains(&v) {
        Ok(v as usize)
    } else {
        Err(Error::config(key, format!("dimension must be an integer >= 2, found {v}")))
    }
}

impl RunConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        map.check_known_keys()?;
        let n = dimension("n", map.required_f64("n")?)?;
        let p = map.required_f64("p")?;
        if p < 2.0 {
            return Err(Error::config("p", format!("p must be >= 2, found {p}")));
        }
        let source = warp_choice(map, "source")?;
        let target = warp_choice(map, "target")?;

        let has_profile = map.get("verify.profile").is_some();
        let interior = ["start.r", "start.alpha", "start.alpha_prime"];
        let start = match (map.f64("alpha0")?, interior.iter().any(|k| map.get(k).is_some())) {
            (Some(_), true) => {
                return Err(Error::config("alpha0", "give either alpha0 or start.*, not both"))
            }
            (Some(a), false) => {
                if !(a > 0.0) {
                    return Err(Error::config("alpha0", format!("must be positive, found {a}")));
                }
                Some(Start::Origin(a))
            }
            (None, true) => {
                let [r, alpha, ap] = interior.map(|k| map.required_f64(k));
                let (r, alpha, ap) = (r?, alpha?, ap?);
                if !(r > 0.0) {
                    return Err(Error::config("start.r", format!("must be positive, found {r}")));
                }
                Some(Start::Interior(StatePoint::new(r, alpha, ap)))
            }
            (None, false) if has_profile => None,
            (None, false) => return Err(missing_start()),
        };

        let r_max = match (map.f64("rmax")?, start) {
            (Some(r_max), _) => {
                let r_min = match start {
                    Some(Start::Interior(s)) => s.r,
                    _ => 0.0,
                };
                if !(r_max > r_min) {
                    return Err(Error::config(
                        "rmax",
                        format!("must exceed the start radius {r_min}, found {r_max}"),
                    ));
                }
                Some(r_max)
            }
            (None, _) if has_profile => None,
            (None, _) => return Err(Error::config("rmax", "required key is missing")),
        };
        let tol = map.f64("tol")?.unwrap_or(DEFAULT_TOL);
        if !(tol > MIN_TOL && tol < MAX_TOL) {
            return Err(Error::config("tol", format!("must lie in ({MIN_TOL:e}, {MAX_TOL:e}), found {tol:e}")));
        }
        let out = PathBuf::from(map.get("out").unwrap_or(DEFAULT_OUT));
        let jobs = match map.f64("jobs")? {
            None => None,
            Some(j) if j.fract() == 0.0 && (1.0..=4096.0).contains(&j) => Some(j as usize),
            Some(j) => return Err(Error::config("jobs", format!("must be a positive integer, found {j}"))),
        };

        let mut sweep = Vec::new();
        let mut axis_keys = vec!["sweep.n".to_owned(), "sweep.p".to_owned(), "sweep.alpha0".to_owned()];
        for side in SIDES {
            for param in WARP_PARAMS {
                axis_keys.push(format!("sweep.{side}.{param}"));
            }
        }
        for key in axis_keys {
            if let Some(values) = map.list(&key)? {
                if key == "sweep.alpha0" && matches!(start, Some(Start::Interior(_))) {
                    return Err(Error::config(key, "cannot sweep alpha0 for an interior start"));
                }
                sweep.push(Axis {
                    key: key["sweep.".len()..].to_owned(),
                    values,
                });
            }
        }

        let mut verify = VerifyConfig::default();
        for check in CHECK_NAMES {
            if let Some(on) = map.flag(&format!("verify.{check}"))? {
                verify.enabled.insert(check.to_owned(), on);
            }
        }
        verify.profile = map.get("verify.profile").map(PathBuf::from);
        if let Some(t) = map.get("verify.termination") {
            verify.termination = TerminationEvent::parse(t)
                .ok_or_else(|| Error::config("verify.termination", format!("unknown event `{t}`")))?;
        }
        if let Some(w) = map.list("verify.slope.window")? {
            match w[..] {
                [lo, hi] if lo < hi => verify.slope_window = Some((lo, hi)),
                _ => return Err(Error::config("verify.slope.window", "expected `lo, hi` with lo < hi")),
            }
        }
        verify.slope_a = map.f64("verify.slope.a")?;
        verify.slope_b = map.f64("verify.slope.b")?;
        verify.cone_c = map.f64("verify.cone.c")?;
        if let Some(cs) = map.list("verify.cone.cs")? {
            verify.cone_cs = cs;
        }
        verify.floor_c2 = map.f64("verify.floor.c2")?;
        verify.floor_c = map.f64("verify.floor.c")?;

        let config = Self {
            n,
            p,
            source,
            target,
            start,
            r_max,
            tol,
            out,
            jobs,
            sweep,
            verify,
        };
        config.spec()?;
        Ok(config)
    }

    /// Start and end of the run to solve.
    pub fn run(&self) -> Result<(Start, f64)> {
        let start = self.start.ok_or_else(missing_start)?;
        let r_max = self.r_max.ok_or_else(|| Error::config("rmax", "required key is missing"))?;
        Ok((start, r_max))
    }

    pub fn spec(&self) -> Result<ProblemSpec<f64>> {
        let f = self.source.build("source")?;
        let g = self.target.build("target")?;
        ProblemSpec::new(self.n, self.p, f, g).map_err(|e| Error::config("n", e.to_string()))
    }

    /// Copy of this config with one swept value applied.
    pub fn with_axis(&self, key: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match key {
            "n" => c.n = dimension("sweep.n", value)?,
            "p" => c.p = value,
            "alpha0" => c.start = Some(Start::Origin(value)),
            other => {
                let (side, param) = other
                    .split_once('.')
                    .ok_or_else(|| Error::config(format!("sweep.{other}"), "unknown axis"))?;
                let choice = if side == "source" { &mut c.source } else { &mut c.target };
                choice.params.insert(param.to_owned(), value);
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> &'static str {
        "n = 3\np = 4\nsource = power:m=2\ntarget = euclidean\nstart.r = 1\nstart.alpha = 0.5\nstart.alpha_prime = 0.5\nrmax = 200\n"
    }

    #[test]
    fn parses_sections_and_comments() {
        let map = ConfigMap::parse("# c\nn = 3 # dim\n[sweep]\nalpha0 = 1, 2\n").unwrap();
        assert_eq!(map.get("n"), Some("3"));
        assert_eq!(map.get("sweep.alpha0"), Some("1, 2"));
    }

    #[test]
    fn builds_interior_run() {
        let cfg = RunConfig::from_map(&ConfigMap::parse(base()).unwrap()).unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.source.params["m"], 2.0);
        assert_eq!(cfg.start, Some(Start::Interior(StatePoint::new(1.0, 0.5, 0.5))));
        assert_eq!(cfg.tol, DEFAULT_TOL);
        assert!(cfg.spec().is_ok());
    }

    fn error_key(text: &str) -> String {
        match RunConfig::from_map(&ConfigMap::parse(text).unwrap()) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(error_key(&base().replace("p = 4\n", "")), "p");
        assert_eq!(error_key(&format!("{}tol = 1\n", base())), "tol");
        assert_eq!(error_key(&format!("{}tol = 1e-15\n", base())), "tol");
        assert_eq!(error_key(&format!("{}alpha0 = 1\n", base())), "alpha0");
        assert_eq!(error_key(&format!("{}colour = red\n", base())), "colour");
        assert_eq!(error_key(&base().replace("power:m=2", "spiral")), "source");
        assert_eq!(error_key(&base().replace("power:m=2", "power:m=0.5")), "source");
        assert_eq!(error_key(&format!("{}[sweep]\nn = \n", base())), "sweep.n");
        assert_eq!(error_key(&format!("{}verify.cone_bound = maybe\n", base())), "verify.cone_bound");
    }

    #[test]
    fn dotted_params_override_inline_ones() {
        let cfg = RunConfig::from_map(&ConfigMap::parse(&format!("{}source.m = 3\n", base())).unwrap()).unwrap();
        assert_eq!(cfg.source.params["m"], 3.0);
    }

    #[test]
    fn sweep_axes_in_fixed_order() {
        let text = format!("{}[sweep]\nsource.m = 1, 2\nn = 2, 3\n", base());
        let cfg = RunConfig::from_map(&ConfigMap::parse(&text).unwrap()).unwrap();
        let keys: Vec<&str> = cfg.sweep.iter().map(|a| a.key.as_str()).collect();
        assert_eq!(keys, ["n", "source.m"]);
        let point = cfg.with_axis("source.m", 1.0).unwrap();
        assert_eq!(point.source.params["m"], 1.0);
    }
}
