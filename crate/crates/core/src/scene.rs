//! Scene files: a restricted INI dialect (`[section]`, `key = value`, `#` or
//! `;` comments) describing the domain, metric, one-form, connection,
//! potential, boundary fan and solver settings.
//!
//! ```text
//! [domain]
//! shape = disk
//! radius = 1
//!
//! [omega]
//! kind = constant
//! strength = 0.3
//!
//! [connection]
//! kind = su2-gaussian
//! amplitude = 1
//! width = 0.5
//! center = 0.1, 0
//! ```
//!
//! Unknown sections and keys are errors, every number is range-checked, and
//! the scene hash is FNV-1a 64 over a canonical rendering (fixed section
//! order, sorted keys, numbers re-printed), so whitespace, comments and key
//! order do not change it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::connection::{ConnectionData, ConnectionField};
use crate::error::{Error, Result};
use crate::flow::{exit_time, FlowOptions, PhasePoint};
use crate::inversion::CglsOptions;
use crate::interp::{Grid2, GridField};
use crate::linalg::{c64, identity, CMatrix, Point};
use crate::manifold::{ChartDomain, MagneticSystem, MetricField, OneFormField};
use crate::par::Exec;
use crate::rayf::RayArray;
use crate::transform::{BoundaryFan, Bump, Potential, VolumeField};

pub const SECTIONS: [&str; 7] = ["domain", "metric", "omega", "connection", "potential", "fan", "solver"];

/// Every key a section can hold; which ones apply depends on its `kind`.
const KEYS: [(&str, &[&str]); 7] = [
    ("domain", &["shape", "radius", "semi_axes", "exponent"]),
    ("metric", &["kind", "amplitude", "width", "center", "strength", "path", "pad", "grid_cells"]),
    ("omega", &["kind", "strength", "width", "center", "path", "pad", "grid_cells"]),
    ("connection", &["kind", "dim", "phi", "a1", "a2", "amplitude", "width", "center", "path", "pad", "unitary"]),
    ("potential", &["kind", "amplitude", "center", "width", "coeff", "path"]),
    ("fan", &["n_theta", "n_alpha", "glancing_margin"]),
    ("solver", &["step", "s_max", "lambda", "max_iters", "tol", "cells", "sweep", "probe_rays", "seed"]),
];

pub const BUILTINS: [(&str, &str); 5] = [
    ("euclid-disk-b0", EUCLID_B0),
    ("euclid-disk-b03", EUCLID_B03),
    ("euclid-disk-b05", EUCLID_B05),
    ("hyperbolic-disk", HYPERBOLIC),
    ("ellipse-bump", ELLIPSE_BUMP),
];

const EUCLID_B0: &str = "\
[domain]
shape = disk
radius = 1

[potential]
kind = gaussian
center = 0.2, -0.1
width = 0.3
";

const EUCLID_B03: &str = "\
[domain]
shape = disk
radius = 1

[omega]
kind = constant
strength = 0.3

[connection]
kind = su2-gaussian
amplitude = 1
width = 0.5
center = 0.1, 0

[potential]
kind = gaussian
center = -0.15, 0.2
width = 0.35
coeff = 0, 0.5, 1, 0, -1, 0, 0, -0.5

[fan]
n_theta = 96
n_alpha = 48

[solver]
step = 0.02
cells = 32
";

const EUCLID_B05: &str = "\
[domain]
shape = disk
radius = 1

[omega]
kind = constant
strength = 0.5

[connection]
kind = constant-diagonal
phi = 0.4, -0.2
a1 = 0.3, 0.1
a2 = -0.1, 0.25

[potential]
kind = gaussian
center = 0.1, 0.1
width = 0.3
coeff = 1, 0, 0, 0.5, 0, -0.5, 2, 0
";

const HYPERBOLIC: &str = "\
[domain]
shape = disk
radius = 0.5

[metric]
kind = hyperbolic

[omega]
kind = constant
strength = 0.6

[connection]
kind = su2-gaussian
amplitude = 0.8
width = 0.3
center = 0, 0.1

[potential]
kind = gaussian
center = 0.05, -0.05
width = 0.15
coeff = 1, 0, 0, 0, 0, 0, -1, 0
";

const ELLIPSE_BUMP: &str = "\
[domain]
shape = ellipse
semi_axes = 1, 0.8

[metric]
kind = gaussian-bump
amplitude = 0.2
width = 0.4
center = 0.1, 0.05

[omega]
kind = vortex
strength = 0.4
width = 0.5
center = 0, 0

[connection]
kind = su2-gaussian
amplitude = 0.7
width = 0.4
center = -0.1, 0

[potential]
kind = gaussian
center = 0.2, 0
width = 0.3
coeff = 0, 0, 1, 0, 1, 0, 0, 0
";

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    line: usize,
    column: usize,
    key_column: usize,
}

/// One parsed section; keys are consumed as they are read so leftovers can be
/// reported as unknown.
#[derive(Debug, Default)]
struct Section {
    entries: BTreeMap<String, Entry>,
}

struct Reader<'a> {
    origin: &'a str,
    name: &'static str,
    section: Section,
}

impl<'a> Reader<'a> {
    fn syntax(&self, e: &Entry, message: String) -> Error {
        Error::Syntax {
            path: self.origin.to_string(),
            line: e.line,
            column: e.column,
            message,
        }
    }

    fn raw(&mut self, key: &str) -> Option<Entry> {
        self.section.entries.remove(key)
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(|e| e.value)
    }

    fn numbers(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.syntax(&e, format!("{}.{key}: `{}` is not a finite number", self.name, t.trim())))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Scalar with a range check `lo ≤ v ≤ hi` (open ends via `open_lo`).
    fn real(&mut self, key: &str, default: Option<f64>, range: Range) -> Result<f64> {
        let line = self.section.entries.get(key).cloned();
        let v = match self.numbers(key)? {
            Some(v) if v.len() == 1 => v[0],
            Some(v) => {
                let e = line.unwrap();
                return Err(self.syntax(&e, format!("{}.{key}: expected one number, found {}", self.name, v.len())));
            }
            None => default.ok_or_else(|| Error::Scene(format!("[{}] is missing `{key}`", self.name)))?,
        };
        if !range.contains(v) {
            return Err(Error::Scene(format!("{}.{key} = {v} must be {range}", self.name)));
        }
        Ok(v)
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> Result<usize> {
        let v = self.real(key, Some(default as f64), Range::at_least(min as f64))?;
        if v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::Scene(format!("{}.{key} = {v} must be an integer", self.name)));
        }
        Ok(v as usize)
    }

    fn point(&mut self, key: &str) -> Result<Point> {
        match self.numbers(key)? {
            None => Ok(Point::zeros()),
            Some(v) if v.len() == 2 => Ok(Point::new(v[0], v[1])),
            Some(v) => Err(Error::Scene(format!("{}.{key} needs two numbers, found {}", self.name, v.len()))),
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(self.syntax(&e, format!("{}.{key}: `{other}` is not a boolean", self.name))),
            },
        }
    }

    fn kind(&mut self, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let Some(e) = self.raw(key) else {
            return Ok(default.to_string());
        };
        if allowed.contains(&e.value.as_str()) {
            Ok(e.value)
        } else {
            Err(self.syntax(&e, format!("[{}] {key} `{}` is not one of {}", self.name, e.value, allowed.join(", "))))
        }
    }

    fn finish(self) -> Result<()> {
        match self.section.entries.iter().min_by_key(|(_, e)| (e.line, e.column)) {
            None => Ok(()),
            Some((k, e)) => Err(Error::Syntax {
                path: self.origin.to_string(),
                line: e.line,
                column: e.key_column,
                message: format!("key `{k}` does not apply to this [{}] kind", self.name),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Range {
    lo: f64,
    hi: f64,
    open_lo: bool,
}

impl Range {
    fn positive() -> Range {
        Range { lo: 0.0, hi: f64::INFINITY, open_lo: true }
    }
    fn at_least(lo: f64) -> Range {
        Range { lo, hi: f64::INFINITY, open_lo: false }
    }
    fn within(lo: f64, hi: f64) -> Range {
        Range { lo, hi, open_lo: false }
    }
    fn any() -> Range {
        Range::within(f64::NEG_INFINITY, f64::INFINITY)
    }
    fn contains(&self, v: f64) -> bool {
        (if self.open_lo { v > self.lo } else { v >= self.lo }) && v <= self.hi
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = if self.open_lo { ">" } else { "≥" };
        if self.hi.is_finite() {
            write!(f, "in [{}, {}]", self.lo, self.hi)
        } else {
            write!(f, "{op} {}", self.lo)
        }
    }
}

/// Raw parse: section name → entries, plus the canonical text.
fn tokenize(text: &str, origin: &str) -> Result<(BTreeMap<&'static str, Section>, String)> {
    let mut sections: BTreeMap<&'static str, Section> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    let err = |line: usize, column: usize, message: String| Error::Syntax {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("");
        let indent = body.len() - body.trim_start().len();
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, indent + body.len(), "missing `]`".into()))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| err(line, indent + 2, format!("unknown section [{name}]")))?;
            if sections.contains_key(known) {
                return Err(err(line, indent + 1, format!("duplicate section [{name}]")));
            }
            sections.insert(known, Section::default());
            current = Some(known);
            continue;
        }
        let Some(eq) = body.find('=') else {
            return Err(err(line, indent + 1, "expected `key = value`".into()));
        };
        let key = body[..eq].trim();
        let value = body[eq + 1..].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err(line, indent + 1, format!("bad key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(line, indent + eq + 2, format!("`{key}` has no value")));
        }
        let Some(sec) = current else {
            return Err(err(line, indent + 1, format!("`{key}` appears before any section")));
        };
        let entries = &mut sections.get_mut(sec).unwrap().entries;
        if entries.contains_key(key) {
            return Err(err(line, indent + 1, format!("duplicate key `{key}` in [{sec}]")));
        }
        if !KEYS.iter().any(|(s, keys)| *s == sec && keys.contains(&key)) {
            return Err(err(line, indent + 1, format!("unknown key `{key}` in [{sec}]")));
        }
        let value_col = indent + eq + 2 + (body[eq + 1..].len() - body[eq + 1..].trim_start().len());
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                column: value_col,
                key_column: indent + 1,
            },
        );
    }
    let mut canonical = String::new();
    for name in SECTIONS {
        let Some(sec) = sections.get(name) else { continue };
        let _ = writeln!(canonical, "[{name}]");
        for (k, e) in &sec.entries {
            let _ = writeln!(canonical, "{k}={}", canonical_value(&e.value));
        }
    }
    Ok((sections, canonical))
}

fn canonical_value(v: &str) -> String {
    v.split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(x) => format!("{x:?}"),
                Err(_) => t.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub step: f64,
    pub s_max: Option<f64>,
    pub cgls: CglsOptions,
    /// Reconstruction grid nodes per axis.
    pub cells: usize,
    /// Boundary angles in the convexity sweep.
    pub sweep: usize,
    pub probe_rays: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            step: 1e-3,
            s_max: None,
            cgls: CglsOptions::default(),
            cells: 32,
            sweep: 720,
            probe_rays: 200,
            seed: 0,
        }
    }
}

/// A parsed scene with its content hash.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub name: String,
    pub system: MagneticSystem,
    pub connection: ConnectionData,
    pub potential: Potential,
    pub fan: BoundaryFan,
    pub solver: SolverSettings,
    pub canonical: String,
    pub hash: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationReport {
    pub convexity_margin: f64,
    pub omega_sup: f64,
    pub probe_rays: usize,
    pub longest_exit: f64,
}

/// Parses a scene file. Grid paths are resolved relative to the file.
pub fn parse_scene(path: &Path) -> Result<SceneSpec> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Scene(format!("{} is not UTF-8", path.display())))?;
    let origin = path.display().to_string();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    SceneSpec::parse(&text, &origin, &stem, &base)
}

impl SceneSpec {
    pub fn builtin(name: &str) -> Result<SceneSpec> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Scene(format!("no built-in scene `{name}`")))?;
        SceneSpec::parse(text, name, name, Path::new("."))
    }

    pub fn builtins() -> Vec<SceneSpec> {
        BUILTINS.iter().map(|(n, _)| SceneSpec::builtin(n).expect("built-in scenes parse")).collect()
    }

    /// A built-in name or a path to a scene file.
    pub fn resolve(arg: &str) -> Result<SceneSpec> {
        if BUILTINS.iter().any(|(n, _)| *n == arg) {
            SceneSpec::builtin(arg)
        } else {
            parse_scene(Path::new(arg))
        }
    }

    pub fn parse(text: &str, origin: &str, name: &str, base: &Path) -> Result<SceneSpec> {
        let (mut sections, canonical) = tokenize(text, origin)?;
        let mut reader = |name: &'static str| Reader {
            origin,
            name,
            section: sections.remove(name).unwrap_or_default(),
        };
        let domain = parse_domain(reader("domain"))?;
        let metric = parse_metric(reader("metric"), &domain, base)?;
        let omega = parse_omega(reader("omega"), &domain, base)?;
        let connection = parse_connection(reader("connection"), &domain, base)?;
        let potential = parse_potential(reader("potential"), &domain, connection.dim(), base)?;
        let fan = parse_fan(reader("fan"))?;
        let solver = parse_solver(reader("solver"))?;
        let hash = fnv1a(canonical.as_bytes());
        Ok(SceneSpec {
            name: name.to_string(),
            system: MagneticSystem::new(domain, metric, omega),
            connection,
            potential,
            fan,
            solver,
            canonical,
            hash,
        })
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions { s_max: self.solver.s_max, ..FlowOptions::with_step(self.solver.step) }
    }

    /// Convexity sweep, `sup‖ω‖_g < 1`, metric positivity, connection
    /// skew-Hermitian flag, and a nontrapping probe of random interior rays.
    pub fn validate(&self, exec: Exec) -> Result<ValidationReport> {
        let sys = &self.system;
        let margin = sys.convexity_sweep(self.solver.sweep)?;
        if margin.is_nan() || margin <= 0.0 {
            return Err(Error::Validation(format!(
                "boundary not strictly magnetic convex (min margin {margin:.6})"
            )));
        }
        let omega_sup = sys.omega_sup_norm(96);
        if omega_sup.is_nan() || omega_sup >= 1.0 {
            return Err(Error::Validation(format!(
                "null lift not monotone: sup |omega|_g = {omega_sup:.6} ≥ 1"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.solver.seed);
        self.connection.validate(sys, &mut rng, 200)?;
        let starts: Vec<PhasePoint> = (0..self.solver.probe_rays)
            .map(|_| {
                let x = sys.domain.sample_interior(&mut rng, 0.0);
                PhasePoint::at_angle(sys, x, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        for p in &starts {
            let g = sys.metric.eval(&p.x).g;
            if !(g[(0, 0)] > 0.0 && g.determinant() > 0.0) {
                return Err(Error::Validation(format!(
                    "metric not positive definite at ({}, {})",
                    p.x.x, p.x.y
                )));
            }
        }
        // The probe uses a coarser step: it only needs to see the exit.
        let opts = FlowOptions { step: self.solver.step.max(1e-2), ..self.flow_options() };
        let times = exec.map(starts.len(), |i| exit_time(sys, &starts[i], &opts));
        let mut longest = 0.0f64;
        for (i, t) in times.into_iter().enumerate() {
            match t {
                Ok(t) => longest = longest.max(t),
                Err(Error::TrappedRay { s_max }) => {
                    return Err(Error::Validation(format!(
                        "probe ray {i} from ({:.4}, {:.4}) trapped before s_max = {s_max}",
                        starts[i].x.x, starts[i].x.y
                    )))
                }
                Err(e) => return Err(e),
            }
        }
        Ok(ValidationReport {
            convexity_margin: margin,
            omega_sup,
            probe_rays: starts.len(),
            longest_exit: longest,
        })
    }
}

fn parse_domain(mut r: Reader) -> Result<ChartDomain> {
    let shape = r.kind("shape", "disk", &["disk", "ellipse", "superellipse"])?;
    let domain = match shape.as_str() {
        "disk" => ChartDomain::Disk { radius: r.real("radius", Some(1.0), Range::positive())? },
        _ => {
            let axes = r.numbers("semi_axes")?.ok_or_else(|| Error::Scene("[domain] is missing `semi_axes`".into()))?;
            if axes.len() != 2 || axes.iter().any(|a| *a <= 0.0) {
                return Err(Error::Scene("domain.semi_axes needs two positive numbers".into()));
            }
            let exponent = if shape == "ellipse" { 2.0 } else { r.real("exponent", None, Range::at_least(2.0))? };
            ChartDomain::SuperEllipse { exponent, semi_axes: [axes[0], axes[1]] }
        }
    };
    r.finish()?;
    domain.validate()?;
    Ok(domain)
}

/// Grid file covering the bounding box padded by `pad` cells on each side.
fn load_grid(r: &mut Reader, domain: &ChartDomain, base: &Path, lead: &[usize]) -> Result<GridField> {
    let path = r.string("path").ok_or_else(|| Error::Scene(format!("[{}] grid needs `path`", r.name)))?;
    let pad = r.count("pad", 4, 0)?;
    let array = RayArray::load(&resolve_path(base, &path))?;
    let dims: Vec<usize> = array.dims.iter().map(|&d| d as usize).collect();
    if dims.len() != lead.len() + 2 || dims[..lead.len()] != *lead {
        return Err(Error::Format(format!("{path}: dims {dims:?} do not match [{lead:?}.., ny, nx]")));
    }
    let (ny, nx) = (dims[lead.len()], dims[lead.len() + 1]);
    if nx < 2 * pad + 4 || ny < 2 * pad + 4 {
        return Err(Error::Format(format!("{path}: {ny}×{nx} grid too small for pad {pad}")));
    }
    let grid = padded_span(domain, nx, ny, pad);
    let ncomp: usize = lead.iter().product();
    let stride = nx * ny;
    let components = (0..ncomp).map(|c| array.data[c * stride..(c + 1) * stride].to_vec()).collect();
    Ok(GridField { grid, components })
}

fn padded_span(domain: &ChartDomain, nx: usize, ny: usize, pad: usize) -> Grid2 {
    let (lo, hi) = domain.bounding_box();
    let hx = (hi.x - lo.x) / (nx - 1 - 2 * pad) as f64;
    let hy = (hi.y - lo.y) / (ny - 1 - 2 * pad) as f64;
    Grid2 {
        origin: Point::new(lo.x - pad as f64 * hx, lo.y - pad as f64 * hy),
        spacing: [hx, hy],
        nx,
        ny,
    }
}

fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_metric(mut r: Reader, domain: &ChartDomain, base: &Path) -> Result<MetricField> {
    let kind = r.kind("kind", "euclidean", &["euclidean", "hyperbolic", "gaussian-bump", "sheared", "grid"])?;
    let metric = match kind.as_str() {
        "euclidean" => MetricField::Euclidean,
        "hyperbolic" => {
            let (_, hi) = domain.bounding_box();
            if hi.norm() >= 0.95 {
                return Err(Error::Scene("hyperbolic metric needs the domain inside |x| < 0.95".into()));
            }
            MetricField::Hyperbolic
        }
        "gaussian-bump" => MetricField::GaussianBump {
            amplitude: r.real("amplitude", None, Range::within(-0.9, 10.0))?,
            width: r.real("width", None, Range::positive())?,
            center: r.point("center")?,
        },
        "sheared" => MetricField::Sheared { strength: r.real("strength", None, Range::within(0.0, 10.0))? },
        _ => MetricField::Grid(load_grid(&mut r, domain, base, &[3])?),
    };
    let cells = grid_cells(&mut r, &kind)?;
    r.finish()?;
    Ok(match cells {
        Some(c) => metric.to_grid(domain.padded_grid(c, 4)),
        None => metric,
    })
}

/// Optional `grid_cells`: realize a closed-form field on a bicubic grid.
fn grid_cells(r: &mut Reader, kind: &str) -> Result<Option<usize>> {
    if !r.section.entries.contains_key("grid_cells") {
        return Ok(None);
    }
    if kind == "grid" {
        return Err(Error::Scene(format!("[{}] grid_cells applies to closed-form fields only", r.name)));
    }
    Ok(Some(r.count("grid_cells", 128, 8)?))
}

fn parse_omega(mut r: Reader, domain: &ChartDomain, base: &Path) -> Result<OneFormField> {
    let kind = r.kind("kind", "zero", &["zero", "constant", "vortex", "grid"])?;
    let omega = match kind.as_str() {
        "zero" => OneFormField::Zero,
        "constant" => OneFormField::ConstantField {
            strength: r.real("strength", None, Range::any())?,
            center: r.point("center")?,
        },
        "vortex" => OneFormField::Vortex {
            strength: r.real("strength", None, Range::any())?,
            width: r.real("width", None, Range::positive())?,
            center: r.point("center")?,
        },
        _ => OneFormField::Grid(load_grid(&mut r, domain, base, &[2])?),
    };
    let cells = grid_cells(&mut r, &kind)?;
    r.finish()?;
    Ok(match cells {
        Some(c) => omega.to_grid(domain.padded_grid(c, 4)),
        None => omega,
    })
}

fn parse_connection(mut r: Reader, domain: &ChartDomain, base: &Path) -> Result<ConnectionData> {
    let kind = r.kind("kind", "zero", &["zero", "constant-diagonal", "su2-gaussian", "grid"])?;
    let (field, unitary_default) = match kind.as_str() {
        "zero" => (ConnectionField::Zero { dim: r.count("dim", 1, 1)? }, true),
        "constant-diagonal" => {
            let phi = r.numbers("phi")?.ok_or_else(|| Error::Scene("[connection] is missing `phi`".into()))?;
            let n = phi.len();
            let a1 = r.numbers("a1")?.unwrap_or_else(|| vec![0.0; n]);
            let a2 = r.numbers("a2")?.unwrap_or_else(|| vec![0.0; n]);
            if a1.len() != n || a2.len() != n {
                return Err(Error::Scene("connection.phi, a1, a2 must have equal lengths".into()));
            }
            (ConnectionField::constant_diagonal(&phi, &a1, &a2), true)
        }
        "su2-gaussian" => (
            ConnectionField::Su2Gaussian {
                amplitude: r.real("amplitude", None, Range::any())?,
                width: r.real("width", None, Range::positive())?,
                center: r.point("center")?,
            },
            true,
        ),
        _ => {
            let dim = r.count("dim", 1, 1)?;
            let field = load_grid(&mut r, domain, base, &[3, dim, dim, 2])?;
            (ConnectionField::Grid { dim, field }, false)
        }
    };
    let unitary = r.flag("unitary", unitary_default)?;
    r.finish()?;
    Ok(ConnectionData::new(field, unitary))
}

fn parse_potential(mut r: Reader, domain: &ChartDomain, dim: usize, base: &Path) -> Result<Potential> {
    let kind = r.kind("kind", "zero", &["zero", "gaussian", "grid"])?;
    let potential = match kind.as_str() {
        "zero" => Potential::Zero { dim },
        "gaussian" => {
            let amplitude = r.real("amplitude", Some(1.0), Range::any())?;
            let coeff = match r.numbers("coeff")? {
                None => identity(dim),
                Some(v) if v.len() == 2 * dim * dim => {
                    CMatrix::from_fn(dim, dim, |i, j| c64(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]))
                }
                Some(v) => {
                    return Err(Error::Scene(format!(
                        "potential.coeff needs {} numbers (re, im of an {dim}×{dim} matrix), found {}",
                        2 * dim * dim,
                        v.len()
                    )))
                }
            };
            Potential::Bumps(vec![Bump {
                center: r.point("center")?,
                width: r.real("width", None, Range::positive())?,
                coeff: coeff * c64(amplitude, 0.0),
            }])
        }
        _ => {
            let path = r.string("path").ok_or_else(|| Error::Scene("[potential] grid needs `path`".into()))?;
            let array = RayArray::load(&resolve_path(base, &path))?;
            let dims: Vec<usize> = array.dims.iter().map(|&d| d as usize).collect();
            if dims.len() != 5 || dims[..3] != [dim, dim, 2] || dims[3] < 4 || dims[4] < 4 {
                return Err(Error::Format(format!("{path}: dims {dims:?} do not match [{dim}, {dim}, 2, ny, nx]")));
            }
            let (lo, hi) = domain.bounding_box();
            let grid = Grid2::spanning(lo, hi, dims[4], dims[3]);
            let stride = grid.len();
            let mut field = VolumeField::on_grid(domain, dim, grid);
            for node in 0..stride {
                if field.mask[node] {
                    field.values[node] = CMatrix::from_fn(dim, dim, |i, j| {
                        let k = 2 * (i * dim + j);
                        c64(array.data[k * stride + node], array.data[(k + 1) * stride + node])
                    });
                }
            }
            Potential::Grid(field)
        }
    };
    r.finish()?;
    Ok(potential)
}

fn parse_fan(mut r: Reader) -> Result<BoundaryFan> {
    let n_theta = r.count("n_theta", 64, 1)?;
    let n_alpha = r.count("n_alpha", 64, 1)?;
    let margin = r.real("glancing_margin", Some(0.05), Range::within(1e-6, 1.5))?;
    r.finish()?;
    BoundaryFan::new(n_theta, n_alpha, margin)
}

fn parse_solver(mut r: Reader) -> Result<SolverSettings> {
    let d = SolverSettings::default();
    let step = r.real("step", Some(d.step), Range::within(1e-6, 0.1))?;
    let s_max = if r.section.entries.contains_key("s_max") {
        Some(r.real("s_max", None, Range::positive())?)
    } else {
        None
    };
    let cgls = CglsOptions {
        lambda: r.real("lambda", Some(d.cgls.lambda), Range::at_least(0.0))?,
        max_iters: r.count("max_iters", d.cgls.max_iters, 1)?,
        tol: r.real("tol", Some(d.cgls.tol), Range::at_least(0.0))?,
    };
    let s = SolverSettings {
        step,
        s_max,
        cgls,
        cells: r.count("cells", d.cells, 8)?,
        sweep: r.count("sweep", d.sweep, 16)?,
        probe_rays: r.count("probe_rays", d.probe_rays, 0)?,
        seed: r.count("seed", 0, 0)? as u64,
    };
    r.finish()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SceneSpec> {
        SceneSpec::parse(text, "test.ini", "test", Path::new("."))
    }

    #[test]
    fn builtins_parse_and_validate() {
        for spec in SceneSpec::builtins() {
            let report = spec.validate(Exec::default()).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
            assert!(report.convexity_margin > 0.0 && report.omega_sup < 1.0, "{}", spec.name);
            assert_eq!(spec.potential.dim(), spec.connection.dim(), "{}", spec.name);
        }
    }

    #[test]
    fn flat_disk_margin_is_one() {
        let r = SceneSpec::builtin("euclid-disk-b0").unwrap().validate(Exec::Sequential).unwrap();
        assert!((r.convexity_margin - 1.0).abs() < 1e-9);
        assert_eq!(r.omega_sup, 0.0);
    }

    #[test]
    fn strong_field_is_rejected() {
        let spec = parse("[omega]\nkind = constant\nstrength = 2\n").unwrap();
        let err = spec.validate(Exec::Sequential).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = parse("[domain]\nradius = 1\n[omega]\nkind = constant\nstrength = 0.3\n").unwrap();
        let b = parse("# comment\n[omega]\n  strength=0.30   ; trailing\nkind = constant\n\n[domain]\nradius = 1.0\n").unwrap();
        let c = parse("[domain]\nradius = 1\n[omega]\nkind = constant\nstrength = 0.31\n").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn errors_carry_positions() {
        let cases = [
            ("[domain]\nradius = 1\nwobble = 3\n", 3, 1),
            ("[domian]\n", 1, 2),
            ("[domain]\nradius 1\n", 2, 1),
            ("[domain]\nradius = x\n", 2, 10),
            ("radius = 1\n", 1, 1),
            ("[omega]\nkind = constant\nstrenth = 2\n", 3, 1),
            ("[domain]\nshape = ellipse\nsemi_axes = 1, 1\nradius = 1\n", 4, 1),
        ];
        for (text, line, column) in cases {
            match parse(text) {
                Err(Error::Syntax { line: l, column: c, .. }) => assert_eq!((l, c), (line, column), "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for text in [
            "[domain]\nradius = -1\n",
            "[fan]\nn_theta = 0\n",
            "[fan]\nn_theta = 2.5\n",
            "[solver]\nstep = 0.5\n",
            "[domain]\nshape = superellipse\nsemi_axes = 1, 1\nexponent = 1.5\n",
            "[metric]\nkind = hyperbolic\n",
            "[potential]\nkind = gaussian\nwidth = 0.2\ncoeff = 1, 0, 0\n",
        ] {
            let err = parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text:?}: {err}");
        }
    }

    #[test]
    fn grid_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let domain = ChartDomain::unit_disk();
        let grid = domain.padded_grid(64, 4);
        let omega = OneFormField::ConstantField { strength: 0.3, center: Point::zeros() };
        let mut data = Vec::new();
        for c in 0..2 {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let w = omega.eval(&grid.node(i, j)).w;
                    data.push(w[c]);
                }
            }
        }
        RayArray::new(vec![2, grid.ny as u32, grid.nx as u32], data).unwrap().save(&dir.path().join("w.rayf")).unwrap();
        let pad = (grid.nx - 1 - 64) / 2;
        let text = format!("[omega]\nkind = grid\npath = w.rayf\npad = {pad}\n");
        let spec = SceneSpec::parse(&text, "g.ini", "g", dir.path()).unwrap();
        let p = Point::new(0.31, -0.42);
        let got = spec.system.omega.eval(&p);
        let want = omega.eval(&p);
        assert!((got.w - want.w).norm() < 1e-10);
        assert!((got.d - want.d).norm() < 1e-8);
    }

    #[test]
    fn grid_realization_matches_closed_form() {
        let closed = SceneSpec::builtin("ellipse-bump").unwrap();
        let text = ELLIPSE_BUMP.replace("center = 0.1, 0.05\n", "center = 0.1, 0.05\ngrid_cells = 128\n");
        let gridded = parse(&text).unwrap();
        assert!(matches!(gridded.system.metric, MetricField::Grid(_)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = closed.system.domain.sample_interior(&mut rng, 0.0);
            let (a, b) = (closed.system.metric.eval(&x), gridded.system.metric.eval(&x));
            assert!((a.g - b.g).abs().max() < 1e-6 * a.g.abs().max());
            for k in 0..2 {
                assert!((a.dg[k] - b.dg[k]).abs().max() < 1e-5);
            }
        }
    }
}
