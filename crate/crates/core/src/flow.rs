//! Unit-speed magnetic geodesic flow on `SM`, exit/enter times, and the null
//! lift to the spacetime cylinder.

use crate::error::{Error, Result};
use crate::manifold::{ForceSign, MagneticSystem, BOUNDARY_TOL};
use crate::linalg::{bilinear, Point, Tangent};
use crate::quadrature;

/// Starts on `∂M` with `|g(v, ν)|` below this are glancing.
pub const GLANCING_TOL: f64 = 1e-8;

const BISECTION_ITERS: usize = 50;

/// A point of the unit sphere bundle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Point,
    pub v: Tangent,
}

impl PhasePoint {
    /// Renormalizes `v` to unit `g`-length.
    pub fn new(system: &MagneticSystem, x: Point, v: Tangent) -> PhasePoint {
        let n = system.norm(&x, &v);
        PhasePoint { x, v: v / n }
    }

    /// Influx point with boundary angle `θ` and direction angle `α` measured
    /// from the inward normal towards the counter-clockwise tangent.
    pub fn from_fan(system: &MagneticSystem, theta: f64, alpha: f64) -> PhasePoint {
        let (x, nu, tau) = system.boundary_frame(theta);
        PhasePoint::new(system, x, nu * alpha.cos() + tau * alpha.sin())
    }

    /// Direction with angle `β` in the `g`-orthonormal frame at `x`.
    pub fn at_angle(system: &MagneticSystem, x: Point, beta: f64) -> PhasePoint {
        let (e1, e2) = system.orthonormal_frame(&x);
        PhasePoint::new(system, x, e1 * beta.cos() + e2 * beta.sin())
    }

    pub fn reversed(&self) -> PhasePoint {
        PhasePoint { x: self.x, v: -self.v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartKind {
    Interior,
    Influx,
    Outflux,
    Glancing,
}

pub fn classify(system: &MagneticSystem, p: &PhasePoint) -> Result<StartKind> {
    let d = system.domain.signed_distance(&p.x);
    if d > BOUNDARY_TOL {
        return Err(Error::PointOutsideDomain { x: p.x.x, y: p.x.y });
    }
    if d < -BOUNDARY_TOL {
        return Ok(StartKind::Interior);
    }
    let nu = system.inward_normal(&p.x);
    let g = system.metric.eval(&p.x).g;
    let c = bilinear(&g, &p.v, &nu);
    Ok(if c.abs() < GLANCING_TOL {
        StartKind::Glancing
    } else if c > 0.0 {
        StartKind::Influx
    } else {
        StartKind::Outflux
    })
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub step: f64,
    /// Trapping cap; `None` means 100 × the domain diameter.
    pub s_max: Option<f64>,
    pub sign: ForceSign,
}

impl FlowOptions {
    pub fn with_step(step: f64) -> FlowOptions {
        FlowOptions {
            step,
            s_max: None,
            sign: ForceSign::Forward,
        }
    }

    pub fn reversed(self) -> FlowOptions {
        let sign = match self.sign {
            ForceSign::Forward => ForceSign::Reversed,
            ForceSign::Reversed => ForceSign::Forward,
        };
        FlowOptions { sign, ..self }
    }

    fn cap(&self, system: &MagneticSystem) -> f64 {
        self.s_max.unwrap_or(100.0 * system.domain.diameter())
    }
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions::with_step(1e-3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub s: f64,
    pub x: Point,
    pub v: Tangent,
}

/// A sampled magnetic geodesic. Samples sit on a uniform grid of width
/// `step` except for the last interval, which ends on `∂M` (or at the
/// requested stopping parameter).
#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub step: f64,
    pub sign: ForceSign,
    pub samples: Vec<TraceSample>,
    pub exit_time: f64,
    /// Whether the last sample lies on `∂M`.
    pub exited: bool,
    pub initial_time: f64,
    /// Null-lift time coordinate `t(sᵢ)`.
    pub time: Vec<f64>,
}

impl GeodesicTrace {
    pub fn params(&self) -> Vec<f64> {
        self.samples.iter().map(|p| p.s).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn end(&self) -> PhasePoint {
        let last = self.samples.last().expect("trace has a start sample");
        PhasePoint { x: last.x, v: last.v }
    }

    /// Cubic Hermite midpoint states of every interval, with `v` renormalized.
    pub fn midpoints(&self, system: &MagneticSystem) -> Vec<PhasePoint> {
        let acc: Vec<Tangent> = self
            .samples
            .iter()
            .map(|p| system.acceleration(&p.x, &p.v, self.sign))
            .collect();
        self.samples
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let h = w[1].s - w[0].s;
                let x = (w[0].x + w[1].x) * 0.5 + (w[0].v - w[1].v) * (h / 8.0);
                let v = (w[0].v + w[1].v) * 0.5 + (acc[i] - acc[i + 1]) * (h / 8.0);
                PhasePoint::new(system, x, v)
            })
            .collect()
    }
}

/// One classical RK4 step of the magnetic flow followed by `g`-renormalization.
/// Negative `h` steps the flow backwards in time.
pub fn flow_step(system: &MagneticSystem, p: &PhasePoint, h: f64, sign: ForceSign) -> PhasePoint {
    let f = |x: &Point, v: &Tangent| (*v, system.acceleration(x, v, sign));
    let (k1x, k1v) = f(&p.x, &p.v);
    let (k2x, k2v) = f(&(p.x + k1x * (h / 2.0)), &(p.v + k1v * (h / 2.0)));
    let (k3x, k3v) = f(&(p.x + k2x * (h / 2.0)), &(p.v + k2v * (h / 2.0)));
    let (k4x, k4v) = f(&(p.x + k3x * h), &(p.v + k3v * h));
    let x = p.x + (k1x + (k2x + k3x) * 2.0 + k4x) * (h / 6.0);
    let v = p.v + (k1v + (k2v + k3v) * 2.0 + k4v) * (h / 6.0);
    PhasePoint::new(system, x, v)
}

enum Limit {
    Exit { s_max: f64 },
    Stop(f64),
}

fn run(system: &MagneticSystem, start: &PhasePoint, opts: &FlowOptions, limit: Limit) -> Result<GeodesicTrace> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {}", opts.step)));
    }
    let kind = classify(system, start)?;
    let start = PhasePoint::new(system, start.x, start.v);
    let mut samples = vec![TraceSample { s: 0.0, x: start.x, v: start.v }];
    let finish = |samples: Vec<TraceSample>, exited: bool| {
        let exit_time = samples.last().unwrap().s;
        let n = samples.len();
        GeodesicTrace {
            step: opts.step,
            sign: opts.sign,
            samples,
            exit_time,
            exited,
            initial_time: 0.0,
            time: vec![0.0; n],
        }
    };
    if matches!(kind, StartKind::Outflux | StartKind::Glancing) {
        return match limit {
            Limit::Stop(s) if s > 0.0 => Err(Error::OutOfInterval { value: s, limit: 0.0 }),
            _ => Ok(finish(samples, true)),
        };
    }
    let dist = |p: &PhasePoint| system.domain.signed_distance(&p.x);
    let mut cur = start;
    let mut s = 0.0;
    loop {
        let mut h = opts.step;
        let mut last = false;
        match limit {
            Limit::Stop(stop) => {
                let remaining = stop - s;
                if remaining <= opts.step * (1.0 + 1e-12) {
                    h = remaining;
                    last = true;
                }
                if h <= 0.0 {
                    break;
                }
            }
            Limit::Exit { s_max } => {
                if s > s_max {
                    return Err(Error::TrappedRay { s_max });
                }
            }
        }
        let next = flow_step(system, &cur, h, opts.sign);
        let slack = if last { BOUNDARY_TOL } else { 0.0 };
        if dist(&next) > slack {
            let tau = bisect_crossing(system, &cur, h, opts.sign, s)?;
            if let Limit::Stop(stop) = limit {
                return Err(Error::OutOfInterval { value: stop, limit: s + tau });
            }
            let end = flow_step(system, &cur, tau, opts.sign);
            samples.push(TraceSample { s: s + tau, x: end.x, v: end.v });
            return Ok(finish(samples, true));
        }
        s = if last { s + h } else { opts.step * samples.len() as f64 };
        samples.push(TraceSample { s, x: next.x, v: next.v });
        cur = next;
        if last {
            break;
        }
    }
    Ok(finish(samples, false))
}

fn bisect_crossing(system: &MagneticSystem, from: &PhasePoint, h: f64, sign: ForceSign, s: f64) -> Result<f64> {
    let dist = |tau: f64| system.domain.signed_distance(&flow_step(system, from, tau, sign).x);
    let (mut lo, mut hi) = (0.0, h);
    if dist(lo) > BOUNDARY_TOL {
        return Err(Error::StepUnderflow { s });
    }
    for _ in 0..BISECTION_ITERS {
        if hi - lo < 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if dist(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = if dist(hi).abs() < dist(lo).abs() { hi } else { lo };
    if hi - lo > 1e-10 || dist(tau).abs() > BOUNDARY_TOL {
        return Err(Error::StepUnderflow { s: s + tau });
    }
    Ok(tau)
}

/// Integrates from `start` until the geodesic leaves `M`.
pub fn integrate_magnetic_geodesic(system: &MagneticSystem, start: &PhasePoint, opts: &FlowOptions) -> Result<GeodesicTrace> {
    let mut trace = run(system, start, opts, Limit::Exit { s_max: opts.cap(system) })?;
    lift_in_place(system, &mut trace, 0.0);
    Ok(trace)
}

/// Integrates from `start` up to parameter `stop`; fails with
/// [`Error::OutOfInterval`] if the geodesic exits first.
pub fn integrate_until(system: &MagneticSystem, start: &PhasePoint, opts: &FlowOptions, stop: f64) -> Result<GeodesicTrace> {
    if stop < 0.0 {
        return Err(Error::OutOfInterval { value: stop, limit: 0.0 });
    }
    let mut trace = run(system, start, opts, Limit::Stop(stop))?;
    lift_in_place(system, &mut trace, 0.0);
    Ok(trace)
}

/// Exit time `κ(p)`; zero on the outflux and glancing parts of `∂SM`.
pub fn exit_time(system: &MagneticSystem, p: &PhasePoint, opts: &FlowOptions) -> Result<f64> {
    Ok(run(system, p, opts, Limit::Exit { s_max: opts.cap(system) })?.exit_time)
}

/// Enter time `σ(p) ≤ 0`: minus the exit time of the reversed flow from `(x, −v)`.
pub fn enter_time(system: &MagneticSystem, p: &PhasePoint, opts: &FlowOptions) -> Result<f64> {
    Ok(-exit_time(system, &p.reversed(), &opts.reversed())?)
}

/// Recomputes the null lift `t(s) = t₀ + s − ∫₀ˢ ω(ẋ)` by composite Simpson
/// on the trace samples.
pub fn null_lift(system: &MagneticSystem, trace: &GeodesicTrace, t0: f64) -> GeodesicTrace {
    let mut out = trace.clone();
    lift_in_place(system, &mut out, t0);
    out
}

fn lift_in_place(system: &MagneticSystem, trace: &mut GeodesicTrace, t0: f64) {
    let s = trace.params();
    let rate: Vec<f64> = trace.samples.iter().map(|p| 1.0 - system.omega_at(&p.x, &p.v)).collect();
    trace.time = quadrature::cumulative(&s, &rate).into_iter().map(|c| t0 + c).collect();
    trace.initial_time = t0;
}
