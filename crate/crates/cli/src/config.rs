//! Run configuration: a flat `key = value` file, overridden by flags.
//!
//! Keys: `domain`, `grid`, `caps`, `scheme`, `run`, `out`, `seed`, `verbose`,
//! `residual_tol`, `interior_delta_tol`, `max_newton_iters`, `stencil_width`,
//! `damping`, `alpha`, `samples`, `balls`, `flat_tol`. Blank lines and lines
//! starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use soliton_core::verify::{Experiment, ReportParams};
use soliton_core::{ConvexDomain, Error, Result, Scheme, SolverConfig};

pub const KEYS: [&str; 17] = [
    "domain",
    "grid",
    "caps",
    "scheme",
    "run",
    "out",
    "seed",
    "verbose",
    "residual_tol",
    "interior_delta_tol",
    "max_newton_iters",
    "stencil_width",
    "damping",
    "alpha",
    "samples",
    "balls",
    "flat_tol",
];

pub const MIN_GRID: usize = 33;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: ConvexDomain,
    pub grid: usize,
    pub solver: SolverConfig,
    pub params: ReportParams,
    pub out: Option<PathBuf>,
}

/// Parses `key = value` lines; unknown and repeated keys are errors.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::InvalidConfig(format!("line {}: unknown key '{k}'", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::InvalidConfig(format!("line {}: key '{k}' given twice", n + 1)));
        }
    }
    Ok(out)
}

/// Overlays flag values on file values; a flag that replaces a different
/// file value is reported in the returned warnings.
pub fn merge(file: BTreeMap<String, String>, flags: &[(&str, Option<String>)]) -> (BTreeMap<String, String>, Vec<String>) {
    let mut out = file;
    let mut warnings = Vec::new();
    for (k, v) in flags {
        let Some(v) = v else { continue };
        if let Some(old) = out.insert(k.to_string(), v.clone()) {
            if old != *v {
                warnings.push(format!("flag --{} = {v} overrides config value {old}", k.replace('_', "-")));
            }
        }
    }
    (out, warnings)
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value for '{key}': '{raw}'")))
}

fn list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|s| value(key, s.trim())).collect()
}

/// `disk:R`, `square:a`, `family:delta`, `superellipse:p,blend,level` or
/// `polygon:<vertex file>`, relative paths resolved against `base`.
pub fn parse_domain(text: &str, base: &Path) -> Result<ConvexDomain> {
    let (kind, args) = text.split_once(':').unwrap_or((text, ""));
    let nums = || list("domain", args);
    let one = |default: f64| -> Result<f64> {
        if args.is_empty() {
            Ok(default)
        } else {
            value("domain", args)
        }
    };
    match kind {
        "disk" => ConvexDomain::disk(one(1.0)?),
        "square" => ConvexDomain::square(one(1.0)?),
        "family" => ConvexDomain::standard_family(one(0.2)?),
        "superellipse" => match nums()?.as_slice() {
            [p, b, l] => ConvexDomain::superellipse_blend(*p, *b, *l),
            _ => Err(Error::InvalidConfig("superellipse needs p,blend,level".into())),
        },
        "polygon" => {
            let path = base.join(args);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::InvalidConfig(format!("vertex file {}: {e}", path.display())))?;
            ConvexDomain::polygon_from_str(&text)
        }
        _ => Err(Error::InvalidConfig(format!(
            "unknown domain kind '{kind}' (expected disk, square, family, superellipse or polygon)"
        ))),
    }
}

/// A single cap `M` means the doubling sequence `2, 4, ..., M`; a comma list
/// is taken as given.
pub fn parse_caps(raw: &str) -> Result<Vec<f64>> {
    let caps = list("caps", raw)?;
    if let [top] = caps.as_slice() {
        let seq = SolverConfig::with_caps_to(*top).cap_sequence;
        if seq.is_empty() {
            return Err(Error::InvalidConfig(format!("caps = {top} is below the first cap 2")));
        }
        return Ok(seq);
    }
    Ok(caps)
}

pub fn parse_experiments(raw: &str) -> Result<Vec<Experiment>> {
    let mut out: Vec<Experiment> = Vec::new();
    for name in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let e: Experiment = name.parse()?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

pub fn build(pairs: &BTreeMap<String, String>, base: &Path) -> Result<RunConfig> {
    let get = |k: &str| pairs.get(k).map(String::as_str);
    let domain = parse_domain(get("domain").unwrap_or("disk:1"), base)?;
    let grid: usize = get("grid").map_or(Ok(129), |v| value("grid", v))?;
    if grid < MIN_GRID {
        return Err(Error::InvalidConfig(format!("grid = {grid} is below the minimum {MIN_GRID}")));
    }
    let mut solver = SolverConfig::default();
    if let Some(v) = get("caps") {
        solver.cap_sequence = parse_caps(v)?;
    }
    if let Some(v) = get("scheme") {
        solver.scheme = value::<Scheme>("scheme", v)?;
    }
    if let Some(v) = get("residual_tol") {
        solver.residual_tol = value("residual_tol", v)?;
    }
    if let Some(v) = get("interior_delta_tol") {
        solver.interior_delta_tol = value("interior_delta_tol", v)?;
    }
    if let Some(v) = get("max_newton_iters") {
        solver.max_newton_iters = value("max_newton_iters", v)?;
    }
    if let Some(v) = get("stencil_width") {
        solver.stencil_width = value("stencil_width", v)?;
    }
    if let Some(v) = get("damping") {
        solver.damping = value("damping", v)?;
    }
    if let Some(v) = get("verbose") {
        solver.verbose = value("verbose", v)?;
    }
    solver.validate()?;

    let seed: u64 = get("seed").map_or(Ok(0), |v| value("seed", v))?;
    let mut params = ReportParams {
        seed,
        ..ReportParams::default()
    };
    if let Some(v) = get("run") {
        params.experiments = parse_experiments(v)?;
    }
    if let Some(v) = get("alpha") {
        params.alphas = list("alpha", v)?;
    }
    if let Some(v) = get("samples") {
        params.band_samples = value("samples", v)?;
    }
    if let Some(v) = get("balls") {
        params.balls = value("balls", v)?;
    }
    if let Some(v) = get("flat_tol") {
        params.flat_tol = Some(value("flat_tol", v)?);
    }
    Ok(RunConfig {
        domain,
        grid,
        solver,
        params,
        out: get("out").map(PathBuf::from),
    })
}
