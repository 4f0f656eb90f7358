//! `rayforge`: batch front end for scenes, transforms, identity checks and
//! reconstruction.
//!
//! Exit codes: 0 ok, 1 tolerance breach, 2 input error, 3 trapped ray or
//! scene validation failure. `RAYFORGE_THREADS` caps worker threads.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rayforge::beams::{self, BeamLine};
use rayforge::conformal::{conformal_lightray_check, ConformalFactor};
use rayforge::connection::{cocycle_defect, parallel_transport, TransportSign};
use rayforge::flow::{exit_time, integrate_magnetic_geodesic, null_lift, PhasePoint};
use rayforge::inversion::{cgls_reconstruct, LinearForwardMap};
use rayforge::linalg::{c64, frobenius, CMatrix, Point, Tangent};
use rayforge::scene::SceneSpec;
use rayforge::selftest;
use rayforge::transform::{
    lightray_transform, outflux_points, ray_integral, slice_transform, transport_residual, wv_field, xray_transform,
    Sinogram, SmGrid, TimeDependentPotential, TimeProfile, VolumeField,
};
use rayforge::{Error, Exec, Result};

use output::{csv_writer, fmt, write_table};

#[derive(Parser)]
#[command(name = "rayforge", version, about = "Magnetic ray transforms with matrix-valued attenuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneArgs {
    /// Built-in scene name or path to a scene file.
    #[arg(long, default_value = "euclid-disk-b03")]
    scene: String,
    /// Affine step; defaults to the scene's solver step.
    #[arg(long)]
    step: Option<f64>,
}

impl SceneArgs {
    fn load(&self) -> Result<SceneSpec> {
        let mut spec = SceneSpec::resolve(&self.scene)?;
        if let Some(h) = self.step {
            if !(h > 0.0 && h <= 0.1) {
                return Err(Error::InvalidParameter(format!("--step {h} must lie in (0, 0.1]")));
            }
            spec.solver.step = h;
        }
        spec.validate(Exec::default())?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Static,
    Harmonic,
    Spline,
}

#[derive(Args)]
struct TimeArgs {
    #[arg(long, value_enum, default_value = "harmonic")]
    profile: Profile,
    /// Temporal frequency for the harmonic profile.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    tau: f64,
    /// Spline bump centre in time.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    time_center: f64,
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    /// Start time of every light ray.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
}

impl TimeArgs {
    fn profile(&self) -> TimeProfile {
        match self.profile {
            Profile::Static => TimeProfile::Static,
            Profile::Harmonic => TimeProfile::Harmonic { tau: self.tau },
            Profile::Spline => TimeProfile::Spline { center: self.time_center, half_width: self.half_width },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Trace one magnetic geodesic from a boundary fan angle (CSV: s, x1, x2, v1, v2, t).
    Geodesic {
        #[command(flatten)]
        scene: SceneArgs,
        /// Boundary angle θ of the start point.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        /// Angle α of the start direction from the inward normal.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t0: f64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sinogram of the scene potential.
    Xray {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also export the sinogram as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Light-ray transform of `χ(t) q(x)` over the fan.
    Lightray {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        time: TimeArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fourier-slice transform at frequency τ.
    Slice {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Transport-equation residual, outflux trace, cocycle and unitarity defects (CSV).
    VerifyTransport {
        #[command(flatten)]
        scene: SceneArgs,
        /// Lattice nodes per axis for interior samples.
        #[arg(long, default_value_t = 9)]
        cells: usize,
        /// Directions per interior node.
        #[arg(long, default_value_t = 12)]
        dirs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Beam-line identities (a00, c1, recovery) per line (CSV).
    BeamVerify {
        /// `random` for random N = 2 lines, or `minkowski` for null lines through the scene data.
        #[arg(long, default_value = "random")]
        line: String,
        #[arg(long, default_value = "euclid-disk-b03")]
        scene: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conformal-invariance defects per fan ray (CSV).
    ConformalCheck {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        time: TimeArgs,
        /// Gaussian conformal factor `1 + a·exp(−|x − c|²/w²)`.
        #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.5)]
        width: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.2,-0.1", allow_negative_numbers = true)]
        center: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        n_theta: usize,
        #[arg(long, default_value_t = 4)]
        n_alpha: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CGLS reconstruction from a sinogram; writes RAYF, PGM images and a CSV report.
    Invert {
        #[arg(long)]
        sinogram: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Reconstruction nodes per axis; defaults to the scene's solver setting.
        #[arg(long)]
        cells: Option<usize>,
        /// Output grid (RAYF).
        #[arg(long)]
        out: PathBuf,
        /// Prefix for per-entry PGM magnitude images (default: output path).
        #[arg(long)]
        pgm: Option<PathBuf>,
        /// Convergence report (CSV).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Selftest {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rayforge: {e} [{}]", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RAYFORGE_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("RAYFORGE_THREADS={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    let exec = Exec::default();
    match command {
        Command::Geodesic { scene, theta, alpha, t0, out } => {
            let spec = scene.load()?;
            let start = PhasePoint::from_fan(&spec.system, theta, alpha);
            let trace = integrate_magnetic_geodesic(&spec.system, &start, &spec.flow_options())?;
            let trace = null_lift(&spec.system, &trace, t0);
            output::write_trace(&mut csv_writer(out.as_deref())?, &trace)
        }
        Command::Xray { scene, out, csv } => {
            let spec = scene.load()?;
            let sino = xray_transform(&spec.system, &spec.connection, &spec.potential, &spec.fan, &spec.flow_options(), exec)?;
            save_sinogram(sino, &spec, &out, csv.as_deref())
        }
        Command::Lightray { scene, time, out, csv } => {
            let spec = scene.load()?;
            let q = TimeDependentPotential { spatial: spec.potential.clone(), profile: time.profile() };
            let opts = spec.flow_options();
            let values = exec.try_map(spec.fan.len(), |i| {
                lightray_transform(&spec.system, &spec.connection, &q, time.t0, &spec.fan.phase_point(&spec.system, i), &opts)
            })?;
            let sino = Sinogram { dim: q.spatial.dim(), fan: spec.fan, values, scene_hash: 0, step: Some(opts.step) };
            save_sinogram(sino, &spec, &out, csv.as_deref())
        }
        Command::Slice { scene, tau, out, csv } => {
            let spec = scene.load()?;
            let sino = slice_transform(&spec.system, &spec.connection, &spec.potential, tau, &spec.fan, &spec.flow_options(), exec)?;
            save_sinogram(sino, &spec, &out, csv.as_deref())
        }
        Command::VerifyTransport { scene, cells, dirs, out } => verify_transport(&scene.load()?, cells, dirs, out.as_deref(), exec),
        Command::BeamVerify { line, scene, count, steps, seed, out } => beam_verify(&line, &scene, count, steps, seed, out.as_deref()),
        Command::ConformalCheck { scene, time, amplitude, width, center, n_theta, n_alpha, out } => {
            let spec = scene.load()?;
            if center.len() != 2 {
                return Err(Error::InvalidParameter("--center needs two numbers".into()));
            }
            let factor = ConformalFactor::SpatialGaussian { amplitude, width, center: Point::new(center[0], center[1]) };
            factor.validate()?;
            let fan = rayforge::transform::BoundaryFan::new(n_theta, n_alpha, spec.fan.glancing_margin)?;
            let q = TimeDependentPotential { spatial: spec.potential.clone(), profile: time.profile() };
            let opts = spec.flow_options();
            let reps = exec.try_map(fan.len(), |i| {
                conformal_lightray_check(&spec.system, &spec.connection, &q, &factor, time.t0, &fan.phase_point(&spec.system, i), &opts)
            })?;
            let rows: Vec<Vec<String>> = reps
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let (theta, alpha) = fan.angles(i);
                    vec![fmt(theta), fmt(alpha), fmt(r.identity), fmt(r.h_paths), fmt(r.h_prime), fmt(r.transport)]
                })
                .collect();
            write_table(
                &mut csv_writer(out.as_deref())?,
                &["theta", "alpha", "identity", "h_paths", "h_prime", "transport"],
                &rows,
            )?;
            let identity = reps.iter().map(|r| r.identity).fold(0.0, f64::max);
            let h = reps.iter().map(|r| r.h_prime.max(r.h_paths)).fold(0.0, f64::max);
            breach(&[("identity", identity, 1e-6), ("h'", h, 1e-8)])
        }
        Command::Invert { sinogram, scene, lambda, iters, cells, out, pgm, report } => {
            invert(&sinogram, &scene, lambda, iters, cells, &out, pgm.as_deref(), report.as_deref(), exec)
        }
        Command::Selftest { only } => {
            let ids: Vec<u8> = if only.is_empty() { selftest::CRITERIA.iter().map(|(i, _)| *i).collect() } else { only };
            let started = Instant::now();
            println!("{:<3} {:<24} {:<6} {:>8}  detail", "id", "criterion", "result", "seconds");
            let mut failed = 0;
            for id in ids {
                let r = selftest::run_criterion(id, exec);
                failed += usize::from(!r.passed);
                println!(
                    "{:<3} {:<24} {:<6} {:>8.2}  {}",
                    r.id,
                    r.name,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.elapsed.as_secs_f64(),
                    r.detail
                );
            }
            let total = started.elapsed();
            println!("total {:.2}s, budget {}s", total.as_secs_f64(), selftest::SUITE_BUDGET.as_secs());
            if failed > 0 {
                return Err(Error::Tolerance(format!("{failed} criteria failed")));
            }
            if total > selftest::SUITE_BUDGET {
                return Err(Error::Tolerance("suite exceeded its time budget".into()));
            }
            Ok(())
        }
    }
}

fn save_sinogram(mut sino: Sinogram, spec: &SceneSpec, out: &Path, csv: Option<&Path>) -> Result<()> {
    sino.scene_hash = spec.hash;
    sino.save(out)?;
    if let Some(p) = csv {
        output::write_sinogram_csv(&mut csv_writer(Some(p))?, &sino)?;
    }
    Ok(())
}

/// Err with a tolerance breach when any `(label, value, bound)` has `value ≥ bound`.
fn breach(checks: &[(&str, f64, f64)]) -> Result<()> {
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, v, b)| v.is_nan() || v >= b)
        .map(|(l, v, b)| format!("{l} {v:.3e} ≥ {b:.0e}"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Tolerance(bad.join(", ")))
    }
}

fn verify_transport(spec: &SceneSpec, cells: usize, dirs: usize, out: Option<&Path>, exec: Exec) -> Result<()> {
    let (sys, conn, v) = (&spec.system, &spec.connection, &spec.potential);
    let opts = spec.flow_options();
    let pts = SmGrid::interior(&sys.domain, cells, dirs).phase_points(sys);
    let residual = transport_residual(sys, conn, v, &pts, |p| ray_integral(sys, conn, v, p, &opts), 1e-4, exec)?;
    let outflux = wv_field(sys, conn, v, &outflux_points(sys, &spec.fan), &opts, exec)?
        .iter()
        .map(frobenius)
        .fold(0.0, f64::max);
    let starts: Vec<PhasePoint> = (0..spec.fan.len()).step_by((spec.fan.len() / 100).max(1)).map(|i| spec.fan.phase_point(sys, i)).collect();
    let per_ray = exec.try_map(starts.len(), |i| -> Result<(f64, f64)> {
        let p = &starts[i];
        let kappa = exit_time(sys, p, &opts)?;
        let cocycle = cocycle_defect(sys, conn, p, 0.37 * kappa, 0.41 * kappa, &opts)?;
        let trace = integrate_magnetic_geodesic(sys, p, &opts)?;
        let tm = parallel_transport(sys, conn, &trace, TransportSign::Absorbing);
        Ok((cocycle, if conn.unitary { tm.unitarity_defect() } else { 0.0 }))
    })?;
    let cocycle = per_ray.iter().map(|r| r.0).fold(0.0, f64::max);
    let unitarity = per_ray.iter().map(|r| r.1).fold(0.0, f64::max);
    let checks = [
        ("transport_residual", residual.sup, 5e-4),
        ("outflux_trace", outflux, 1e-6),
        ("cocycle", cocycle, 1e-7),
        ("unitarity", unitarity, 1e-8),
    ];
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|(l, v, b)| vec![l.to_string(), fmt(*v), format!("{b:e}"), (v < b).to_string()])
        .collect();
    write_table(&mut csv_writer(out)?, &["check", "value", "tolerance", "pass"], &rows)?;
    breach(&checks)
}

fn beam_verify(line: &str, scene: &str, count: usize, steps: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    if steps < 2 {
        return Err(Error::InvalidParameter("--steps must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines: Vec<BeamLine> = match line {
        "random" => (0..count).map(|_| BeamLine::random(&mut rng, 2, steps)).collect::<Vec<_>>(),
        "minkowski" => {
            let spec = SceneSpec::resolve(scene)?;
            let n = spec.connection.dim();
            let q = TimeDependentPotential { spatial: spec.potential.clone(), profile: TimeProfile::Harmonic { tau: 1.0 } };
            (0..count)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / count.max(1) as f64;
                    let dir = Tangent::new(a.cos(), a.sin());
                    let start = Point::new(-0.4 * dir.x + 0.1 * dir.y, -0.4 * dir.y - 0.1 * dir.x);
                    let x0 = CMatrix::from_fn(n, 1, |r, _| c64(1.0 / (r + 1) as f64, 0.3 * r as f64));
                    BeamLine::minkowski(&spec.connection, &q, 0.0, start, dir, 0.8, steps, x0)
                })
                .collect::<Result<Vec<_>>>()?
        }
        other => return Err(Error::InvalidParameter(format!("unknown line scene `{other}` (random, minkowski)"))),
    };
    let reports: Vec<_> = lines.iter().map(beams::verify).collect();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), fmt(r.a00), fmt(r.c1), fmt(r.recovery), fmt(r.matrix)])
        .collect();
    write_table(&mut csv_writer(out)?, &["line", "a00", "c1", "recovery", "matrix"], &rows)?;
    let worst = |f: fn(&beams::BeamReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    breach(&[
        ("recovery", worst(|r| r.recovery), 1e-7),
        ("a00", worst(|r| r.a00), 1e-8),
        ("matrix", worst(|r| r.matrix), 1e-7),
    ])
}

#[allow(clippy::too_many_arguments)]
fn invert(
    sinogram: &Path,
    scene: &SceneArgs,
    lambda: Option<f64>,
    iters: Option<usize>,
    cells: Option<usize>,
    out: &Path,
    pgm: Option<&Path>,
    report: Option<&Path>,
    exec: Exec,
) -> Result<()> {
    let y = Sinogram::load(sinogram)?;
    let spec = SceneSpec::resolve(&scene.scene)?;
    if y.scene_hash != spec.hash {
        return Err(Error::HashMismatch { expected: spec.hash, found: y.scene_hash });
    }
    let spec = scene.load()?;
    let mut opts = spec.solver.cgls;
    if let Some(l) = lambda {
        opts.lambda = l;
    }
    if let Some(n) = iters {
        opts.max_iters = n;
    }
    let cells = cells.unwrap_or(spec.solver.cells);
    if cells < 8 {
        return Err(Error::InvalidParameter("--cells must be at least 8".into()));
    }
    let template = VolumeField::zeros(&spec.system.domain, spec.connection.dim(), cells);
    let map = LinearForwardMap::build(&spec.system, &spec.connection, &template, &y.fan, &spec.flow_options(), spec.hash, exec)?;
    let (q, rep) = cgls_reconstruct(&map, &y, &opts, None, exec)?;
    output::volume_to_rayf(&q)?.save(out)?;
    output::write_pgms(&q, pgm.unwrap_or(out))?;
    let rows: Vec<Vec<String>> = rep.residual_history.iter().enumerate().map(|(i, r)| vec![i.to_string(), fmt(*r)]).collect();
    if let Some(p) = report {
        write_table(&mut csv_writer(Some(p))?, &["iteration", "objective"], &rows)?;
    }
    eprintln!(
        "rayforge: {} iterations, objective {:.3e}, λ = {:e}, {:.2}s",
        rep.iterations,
        rep.residual_history.last().copied().unwrap_or(0.0),
        rep.lambda,
        rep.seconds
    );
    Ok(())
}
