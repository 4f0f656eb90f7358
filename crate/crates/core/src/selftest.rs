//! The acceptance suite as a library: each criterion runs at desk scale and
//! reports its measured defects against fixed tolerances.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beams::{self, BeamLine};
use crate::conformal::{conformal_lightray_check, ConformalFactor};
use crate::connection::{cocycle_defect, parallel_transport, ConnectionData, ConnectionField, TransportSign};
use crate::error::Result;
use crate::flow::{exit_time, integrate_magnetic_geodesic, FlowOptions, PhasePoint};
use crate::inversion::{cgls_reconstruct, CglsOptions, LinearForwardMap};
use crate::linalg::{c64, frobenius, identity, perp, CMatrix, Point};
use crate::manifold::MagneticSystem;
use crate::par::Exec;
use crate::scene::SceneSpec;
use crate::transform::{
    lightray_transform, outflux_points, ray_integral, slice_ray, transport_residual, wv_field, xray_transform,
    BoundaryFan, Bump, Potential, SmGrid, TimeDependentPotential, TimeProfile, VolumeField,
};

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "geometry oracle"),
    (2, "straight-line transform"),
    (3, "parallel transport"),
    (4, "transport identity"),
    (5, "Fourier slice"),
    (6, "beam recovery"),
    (7, "conformal invariance"),
    (8, "injectivity witness"),
];

/// Wall-clock budget for the whole suite.
pub const SUITE_BUDGET: Duration = Duration::from_secs(180);

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Collects `(label, value, bound)` checks for one criterion.
#[derive(Default)]
struct Checks(Vec<(String, f64, f64)>);

impl Checks {
    fn below(&mut self, label: &str, value: f64, bound: f64) {
        self.0.push((label.to_string(), value, bound));
    }

    fn passed(&self) -> bool {
        self.0.iter().all(|(_, v, b)| *v < *b)
    }

    fn detail(&self) -> String {
        self.0
            .iter()
            .map(|(l, v, b)| format!("{l} {v:.2e}{}{b:.0e}", if v < b { "<" } else { "≥" }))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub fn run_criterion(id: u8, exec: Exec) -> CriterionResult {
    let name = CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown", |(_, n)| n);
    let started = Instant::now();
    let outcome = match id {
        1 => geometry(exec),
        2 => straight_line(exec),
        3 => transport(exec),
        4 => transport_identity(exec),
        5 => fourier_slice(exec),
        6 => beam_recovery(),
        7 => conformal(exec),
        8 => injectivity(),
        _ => Ok(Checks(vec![("unknown criterion".into(), 1.0, 0.0)])),
    };
    let elapsed = started.elapsed();
    let (passed, detail) = match outcome {
        Ok(c) => (c.passed(), c.detail()),
        Err(e) => (false, format!("error [{}]: {e}", e.code())),
    };
    CriterionResult { id, name, passed, detail, elapsed }
}

pub fn run_all(exec: Exec) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id, exec)).collect()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Constant field `b = 0.5`: 100 rays lie on circles of radius 2.
fn geometry(exec: Exec) -> Result<Checks> {
    let b = 0.5;
    let sys = MagneticSystem::euclidean_disk(b);
    let fan = BoundaryFan::new(10, 10, 0.05)?;
    let opts = FlowOptions::with_step(1e-3);
    let started = Instant::now();
    let devs = exec.try_map(fan.len(), |i| -> Result<(f64, f64)> {
        let p = fan.phase_point(&sys, i);
        let trace = integrate_magnetic_geodesic(&sys, &p, &opts)?;
        let center = p.x + perp(&p.v) / b;
        let dev = trace.samples.iter().map(|s| ((s.x - center).norm() - 1.0 / b).abs()).fold(0.0, f64::max);
        let speed = trace.samples.iter().map(|s| (sys.norm(&s.x, &s.v) - 1.0).abs()).fold(0.0, f64::max);
        Ok((dev, speed))
    })?;
    let runtime = secs(started.elapsed());
    let mut c = Checks::default();
    c.below("circle deviation", devs.iter().map(|d| d.0).fold(0.0, f64::max), 1e-7);
    c.below("unit speed", devs.iter().map(|d| d.1).fold(0.0, f64::max), 1e-8);
    c.below("seconds", runtime, 1.0);
    Ok(c)
}

/// Flat disk, `ω = 0`, `𝒜 = 0`: Gaussian line integrals on a 64×64 fan.
fn straight_line(exec: Exec) -> Result<Checks> {
    let sys = MagneticSystem::euclidean_disk(0.0);
    let (x0, sigma) = (Point::new(0.15, -0.1), 0.25);
    let q = Potential::Bumps(vec![Bump { center: x0, width: sigma, coeff: identity(1) }]);
    let fan = BoundaryFan::new(64, 64, 0.05)?;
    let started = Instant::now();
    let sino = xray_transform(&sys, &ConnectionData::zero(1), &q, &fan, &FlowOptions::with_step(5e-3), exec)?;
    let runtime = secs(started.elapsed());
    let peak = sigma * PI.sqrt();
    let worst = (0..fan.len())
        .map(|i| {
            let p = fan.phase_point(&sys, i);
            let d = perp(&p.v).dot(&(x0 - p.x));
            (sino.values[i][(0, 0)] - c64(peak * (-d * d / (sigma * sigma)).exp(), 0.0)).norm()
        })
        .fold(0.0, f64::max);
    let mut c = Checks::default();
    c.below("relative error", worst / peak, 1e-4);
    c.below("seconds", runtime, 5.0);
    Ok(c)
}

fn random_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
}

fn random_start(rng: &mut impl Rng, sys: &MagneticSystem) -> PhasePoint {
    PhasePoint::from_fan(sys, rng.random_range(0.0..TAU), rng.random_range(-1.4..1.4))
}

fn transport(exec: Exec) -> Result<Checks> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = FlowOptions::with_step(1e-3);
    let mut c = Checks::default();

    let flat = MagneticSystem::euclidean_disk(0.0);
    let mut expm = 0.0f64;
    for _ in 0..10 {
        let m = random_matrix(&mut rng, 2, 0.8);
        let conn = ConnectionData::new(ConnectionField::Constant { phi: m.clone(), a: [CMatrix::zeros(2, 2), CMatrix::zeros(2, 2)] }, false);
        let trace = integrate_magnetic_geodesic(&flat, &random_start(&mut rng, &flat), &opts)?;
        let tm = parallel_transport(&flat, &conn, &trace, TransportSign::Absorbing);
        for (s, p) in tm.s.iter().zip(&tm.p) {
            expm = expm.max(frobenius(&(p - (&m * c64(-s, 0.0)).exp())));
        }
    }
    c.below("constant transport vs exp", expm, 1e-9);

    let scene = SceneSpec::builtin("euclid-disk-b03")?;
    let (sys, conn) = (&scene.system, &scene.connection);
    let starts: Vec<_> = (0..100).map(|_| (random_start(&mut rng, sys), rng.random::<f64>(), rng.random::<f64>())).collect();
    let cocycle = exec.try_map(starts.len(), |i| {
        let (p, u, w) = &starts[i];
        let kappa = exit_time(sys, p, &opts)?;
        cocycle_defect(sys, conn, p, 0.5 * u * kappa, 0.5 * w * kappa, &opts)
    })?;
    c.below("cocycle defect", cocycle.into_iter().fold(0.0, f64::max), 1e-7);

    let mut unitary = 0.0f64;
    for spec in SceneSpec::builtins().into_iter().filter(|s| s.connection.unitary) {
        let sys = &spec.system;
        let starts: Vec<_> = (0..20).map(|_| random_start(&mut rng, sys)).collect();
        let d = exec.try_map(starts.len(), |i| -> Result<f64> {
            let trace = integrate_magnetic_geodesic(sys, &starts[i], &opts)?;
            let tm = parallel_transport(sys, &spec.connection, &trace, TransportSign::Absorbing);
            Ok(tm.unitarity_defect())
        })?;
        unitary = d.into_iter().fold(unitary, f64::max);
    }
    c.below("unitarity defect", unitary, 1e-8);
    Ok(c)
}

/// `GW^V + [𝒜, W^V] + V = 0` inside, `W^V = 0` on the outflux boundary.
fn transport_identity(exec: Exec) -> Result<Checks> {
    let opts = FlowOptions::with_step(5e-3);
    let (mut residual, mut outflux) = (0.0f64, 0.0f64);
    for spec in SceneSpec::builtins() {
        let (sys, conn, v) = (&spec.system, &spec.connection, &spec.potential);
        let pts = SmGrid::interior(&sys.domain, 9, 12).phase_points(sys);
        let w = |p: &PhasePoint| ray_integral(sys, conn, v, p, &opts);
        residual = residual.max(transport_residual(sys, conn, v, &pts, w, 1e-4, exec)?.sup);
        let fan = BoundaryFan::new(16, 8, 0.05)?;
        let out = wv_field(sys, conn, v, &outflux_points(sys, &fan), &opts, exec)?;
        outflux = out.iter().map(frobenius).fold(outflux, f64::max);
    }
    let mut c = Checks::default();
    c.below("interior residual", residual, 5e-4);
    c.below("outflux trace", outflux, 1e-6);
    Ok(c)
}

fn fourier_slice(exec: Exec) -> Result<Checks> {
    let opts = FlowOptions::with_step(2e-3);
    let t0 = 0.4;
    let mut worst = 0.0f64;
    for spec in SceneSpec::builtins() {
        let (sys, conn, q) = (&spec.system, &spec.connection, &spec.potential);
        let fan = BoundaryFan::new(6, 4, 0.1)?;
        for tau in [0.0, 1.0, 2.5] {
            let harm = TimeDependentPotential { spatial: q.clone(), profile: TimeProfile::Harmonic { tau } };
            let d = exec.try_map(fan.len(), |i| -> Result<f64> {
                let p = fan.phase_point(sys, i);
                let l = lightray_transform(sys, conn, &harm, t0, &p, &opts)?;
                let s = slice_ray(sys, conn, q, tau, &p, &opts)? * c64(0.0, tau * t0).exp();
                Ok(frobenius(&(l - s)))
            })?;
            worst = d.into_iter().fold(worst, f64::max);
        }
    }
    let mut c = Checks::default();
    c.below("per-ray defect", worst, 1e-6);
    Ok(c)
}

fn beam_recovery() -> Result<Checks> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut recovery, mut a00) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let rep = beams::verify(&BeamLine::random(&mut rng, 2, 400));
        recovery = recovery.max(rep.recovery);
        a00 = a00.max(rep.a00);
    }
    let mut c = Checks::default();
    c.below("recovery defect", recovery, 1e-7);
    c.below("a00 closed form", a00, 1e-8);
    Ok(c)
}

fn conformal(exec: Exec) -> Result<Checks> {
    let scene = SceneSpec::builtin("euclid-disk-b03")?;
    let (sys, conn) = (&scene.system, &scene.connection);
    let q = TimeDependentPotential { spatial: scene.potential.clone(), profile: TimeProfile::Harmonic { tau: 1.5 } };
    let factor = ConformalFactor::SpatialGaussian { amplitude: 0.6, width: 0.5, center: Point::new(0.2, -0.1) };
    factor.validate()?;
    let fan = BoundaryFan::new(6, 4, 0.1)?;
    let opts = FlowOptions::with_step(1e-3);
    let reps = exec.try_map(fan.len(), |i| conformal_lightray_check(sys, conn, &q, &factor, 0.3, &fan.phase_point(sys, i), &opts))?;
    let mut c = Checks::default();
    c.below("identity defect", reps.iter().map(|r| r.identity).fold(0.0, f64::max), 1e-6);
    c.below("h' vs (c0/c)^2", reps.iter().map(|r| r.h_prime.max(r.h_paths)).fold(0.0, f64::max), 1e-8);
    Ok(c)
}

/// Smooth random `N = 2` potential from a handful of Gaussian bumps.
pub fn random_potential(rng: &mut impl Rng, dim: usize, bumps: usize) -> Potential {
    Potential::Bumps(
        (0..bumps)
            .map(|_| {
                let r = rng.random_range(0.0..0.45);
                let a = rng.random_range(0.0..TAU);
                Bump {
                    center: Point::new(r * a.cos(), r * a.sin()),
                    width: rng.random_range(0.2..0.35),
                    coeff: random_matrix(rng, dim, 1.0),
                }
            })
            .collect(),
    )
}

/// Noiseless reconstruction on the built-in inversion scene, single-threaded.
fn injectivity() -> Result<Checks> {
    let exec = Exec::Sequential;
    let scene = SceneSpec::builtin("euclid-disk-b03")?;
    let started = Instant::now();
    let template = VolumeField::zeros(&scene.system.domain, scene.connection.dim(), scene.solver.cells);
    let map = LinearForwardMap::build(&scene.system, &scene.connection, &template, &scene.fan, &scene.flow_options(), scene.hash, exec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = random_potential(&mut rng, 2, 4).to_volume(&scene.system.domain, template.grid.clone());
    let y = map.forward_apply(&truth, exec)?;
    let opts = CglsOptions { max_iters: 200, ..scene.solver.cgls };
    let (_, rep) = cgls_reconstruct(&map, &y, &opts, Some(&truth), exec)?;
    let runtime = secs(started.elapsed());
    let adjoint = map.adjoint_test(&mut rng, 20, exec);
    let mut c = Checks::default();
    c.below("relative error", rep.relative_error.unwrap_or(f64::INFINITY), 0.05);
    c.below("seconds", runtime, 60.0);
    c.below("adjoint test", adjoint, 1e-10);
    Ok(c)
}
