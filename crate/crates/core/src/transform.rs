//! Forward transforms along magnetic geodesics and their null lifts, the
//! field `W^V` on `SM`, transport residuals and the Fourier-slice transform.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{Read, Write};
use std::path::Path;

use crate::connection::{parallel_transport, ConnectionData, TransportMatrix, TransportSign};
use crate::error::{Error, Result};
use crate::flow::{self, FlowOptions, GeodesicTrace, PhasePoint};
use crate::interp::{Grid2, SlopeOrder};
use crate::linalg::{axpy, c64, commutator, frobenius, zeros, CMatrix, Complex64, Point};
use crate::manifold::{ChartDomain, MagneticSystem, BOUNDARY_TOL};
use crate::ode::{self, MatrixPath};
use crate::par::Exec;
use crate::quadrature;
use crate::rayf::{read_f64, read_u32, read_u64};

/// Influx fan-beam coordinates `(θ_j, α_k)`: `θ_j = 2πj/n_θ` on the boundary
/// and `α_k` at the midpoints of `n_α` equal cells of
/// `(−π/2 + ε_g, π/2 − ε_g)`, measured from the inward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFan {
    pub n_theta: usize,
    pub n_alpha: usize,
    pub glancing_margin: f64,
}

impl BoundaryFan {
    pub fn new(n_theta: usize, n_alpha: usize, glancing_margin: f64) -> Result<BoundaryFan> {
        if n_theta == 0 || n_alpha == 0 {
            return Err(Error::InvalidParameter("fan needs at least one angle of each kind".into()));
        }
        if !(glancing_margin > 0.0 && glancing_margin < FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "glancing margin must lie in (0, π/2), got {glancing_margin}"
            )));
        }
        Ok(BoundaryFan { n_theta, n_alpha, glancing_margin })
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_alpha
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    pub fn alpha(&self, k: usize) -> f64 {
        let half = FRAC_PI_2 - self.glancing_margin;
        -half + (k as f64 + 0.5) * (2.0 * half) / self.n_alpha as f64
    }

    /// `(θ, α)` of flat index `j · n_α + k`.
    pub fn angles(&self, idx: usize) -> (f64, f64) {
        (self.theta(idx / self.n_alpha), self.alpha(idx % self.n_alpha))
    }

    pub fn phase_point(&self, system: &MagneticSystem, idx: usize) -> PhasePoint {
        let (theta, alpha) = self.angles(idx);
        PhasePoint::from_fan(system, theta, alpha)
    }
}

/// Matrix-valued transform samples over a fan.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub dim: usize,
    pub fan: BoundaryFan,
    pub values: Vec<CMatrix>,
    pub scene_hash: u64,
    /// Trace/quadrature step, when known (not stored in files).
    pub step: Option<f64>,
}

pub const RSIN_MAGIC: &[u8; 4] = b"RSIN";

impl Sinogram {
    pub fn zeros(dim: usize, fan: BoundaryFan) -> Sinogram {
        Sinogram { dim, fan, values: vec![zeros(dim); fan.len()], scene_hash: 0, step: None }
    }

    pub fn get(&self, j: usize, k: usize) -> &CMatrix {
        &self.values[j * self.fan.n_alpha + k]
    }

    pub fn max_abs_diff(&self, other: &Sinogram) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| frobenius(&(a - b))).fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(frobenius).fold(0.0, f64::max)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(RSIN_MAGIC)?;
        for v in [self.dim, self.fan.n_theta, self.fan.n_alpha] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.fan.glancing_margin.to_le_bytes())?;
        w.write_all(&self.scene_hash.to_le_bytes())?;
        for m in &self.values {
            for r in 0..self.dim {
                for c in 0..self.dim {
                    w.write_all(&m[(r, c)].re.to_le_bytes())?;
                    w.write_all(&m[(r, c)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Sinogram> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RSIN_MAGIC {
            return Err(Error::Format("missing RSIN magic".into()));
        }
        let dim = read_u32(r)? as usize;
        let n_theta = read_u32(r)? as usize;
        let n_alpha = read_u32(r)? as usize;
        let margin = read_f64(r)?;
        let scene_hash = read_u64(r)?;
        if dim == 0 || dim > 64 {
            return Err(Error::Format(format!("implausible matrix dimension {dim}")));
        }
        let fan = BoundaryFan::new(n_theta, n_alpha, margin).map_err(|e| Error::Format(e.to_string()))?;
        let mut values = Vec::with_capacity(fan.len());
        for _ in 0..fan.len() {
            let mut m = zeros(dim);
            for rr in 0..dim {
                for cc in 0..dim {
                    let re = read_f64(r)?;
                    let im = read_f64(r)?;
                    m[(rr, cc)] = c64(re, im);
                }
            }
            values.push(m);
        }
        Ok(Sinogram { dim, fan, values, scene_hash, step: None })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Sinogram> {
        Sinogram::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Matrix-valued potential sampled on a lattice over `M`, interpolated with
/// the Catmull–Rom kernel. Values vanish outside the support mask, which
/// keeps nodes at least `2√2` cells inside `∂M` (the diagonal reach of the
/// 4×4 footprint) so the interpolant is supported in the interior.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeField {
    pub dim: usize,
    pub grid: Grid2,
    pub values: Vec<CMatrix>,
    pub mask: Vec<bool>,
}

impl VolumeField {
    /// Zero field on `cells × cells` nodes spanning the bounding box of `domain`.
    pub fn zeros(domain: &ChartDomain, dim: usize, cells: usize) -> VolumeField {
        let (lo, hi) = domain.bounding_box();
        VolumeField::on_grid(domain, dim, Grid2::spanning(lo, hi, cells, cells))
    }

    pub fn on_grid(domain: &ChartDomain, dim: usize, grid: Grid2) -> VolumeField {
        let clearance = 2.0 * std::f64::consts::SQRT_2 * grid.spacing[0].max(grid.spacing[1]);
        let mask = (0..grid.len()).map(|i| domain.signed_distance(&grid.node_of(i)) <= -clearance).collect();
        VolumeField { dim, values: vec![zeros(dim); grid.len()], grid, mask }
    }

    pub fn sample(domain: &ChartDomain, dim: usize, grid: Grid2, f: impl Fn(&Point) -> CMatrix) -> VolumeField {
        let mut field = VolumeField::on_grid(domain, dim, grid);
        for i in 0..field.grid.len() {
            if field.mask[i] {
                field.values[i] = f(&field.grid.node_of(i));
            }
        }
        field
    }

    /// Visits `(node, weight)` over the interpolation footprint of `x`.
    pub fn for_each_weight(&self, x: &Point, mut f: impl FnMut(usize, f64)) {
        let st = self.grid.stencil(x, SlopeOrder::Second);
        st.for_each(self.grid.nx, |idx, w, _, _| f(idx, w));
    }

    pub fn eval(&self, x: &Point) -> CMatrix {
        let mut acc = zeros(self.dim);
        self.for_each_weight(x, |idx, w| {
            if self.mask[idx] {
                axpy(&mut acc, w, &self.values[idx]);
            }
        });
        acc
    }

    /// Indices of the masked (unknown) nodes.
    pub fn unknowns(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Masked values flattened node-major, each matrix row-major.
    pub fn to_vector(&self) -> Vec<Complex64> {
        self.unknowns().into_iter().flat_map(|i| self.values[i].transpose().iter().copied().collect::<Vec<_>>()).collect()
    }

    pub fn from_vector(&self, v: &[Complex64]) -> VolumeField {
        let n2 = self.dim * self.dim;
        let mut out = VolumeField { values: vec![zeros(self.dim); self.grid.len()], ..self.clone() };
        for (k, i) in self.unknowns().into_iter().enumerate() {
            out.values[i] = CMatrix::from_row_slice(self.dim, self.dim, &v[k * n2..(k + 1) * n2]);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|m| frobenius(m).powi(2)).sum::<f64>().sqrt()
    }
}

/// Gaussian bump `coeff · exp(−|x − center|²/width²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub center: Point,
    pub width: f64,
    pub coeff: CMatrix,
}

/// Time-independent potential `Q`.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Zero { dim: usize },
    Constant(CMatrix),
    Bumps(Vec<Bump>),
    Grid(VolumeField),
}

impl Potential {
    pub fn dim(&self) -> usize {
        match self {
            Potential::Zero { dim } => *dim,
            Potential::Constant(m) => m.nrows(),
            Potential::Bumps(b) => b.first().map_or(1, |b| b.coeff.nrows()),
            Potential::Grid(f) => f.dim,
        }
    }

    pub fn eval(&self, x: &Point) -> CMatrix {
        match self {
            Potential::Zero { dim } => zeros(*dim),
            Potential::Constant(m) => m.clone(),
            Potential::Bumps(bumps) => {
                let mut acc = zeros(self.dim());
                for b in bumps {
                    axpy(&mut acc, (-(x - b.center).norm_squared() / (b.width * b.width)).exp(), &b.coeff);
                }
                acc
            }
            Potential::Grid(f) => f.eval(x),
        }
    }

    /// Samples onto a volume grid (masked nodes only).
    pub fn to_volume(&self, domain: &ChartDomain, grid: Grid2) -> VolumeField {
        VolumeField::sample(domain, self.dim(), grid, |x| self.eval(x))
    }
}

/// Scalar time dependence of a separable potential `Q(t, x) = χ(t) q(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeProfile {
    Static,
    /// `e^{iτt}`
    Harmonic { tau: f64 },
    /// Cubic B-spline supported in `|t − center| < half_width`.
    Spline { center: f64, half_width: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> Complex64 {
        match *self {
            TimeProfile::Static => c64(1.0, 0.0),
            TimeProfile::Harmonic { tau } => Complex64::from_polar(1.0, tau * t),
            TimeProfile::Spline { center, half_width } => {
                let u = 2.0 * (t - center).abs() / half_width;
                let b = if u < 1.0 {
                    (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 6.0
                } else if u < 2.0 {
                    (2.0 - u).powi(3) / 6.0
                } else {
                    0.0
                };
                c64(b, 0.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeDependentPotential {
    pub spatial: Potential,
    pub profile: TimeProfile,
}

impl TimeDependentPotential {
    pub fn eval(&self, t: f64, x: &Point) -> CMatrix {
        match self.profile {
            TimeProfile::Static => self.spatial.eval(x),
            p => self.spatial.eval(x) * p.eval(t),
        }
    }
}

/// A traced ray with its transport and quadrature weights.
#[derive(Clone, Debug)]
pub struct RayGeometry {
    pub trace: GeodesicTrace,
    pub transport: TransportMatrix,
    pub weights: Vec<f64>,
}

impl RayGeometry {
    pub fn new(system: &MagneticSystem, conn: &ConnectionData, start: &PhasePoint, opts: &FlowOptions) -> Result<RayGeometry> {
        let trace = flow::integrate_magnetic_geodesic(system, start, opts)?;
        let transport = parallel_transport(system, conn, &trace, TransportSign::Absorbing);
        let weights = quadrature::weights(&trace.params());
        Ok(RayGeometry { trace, transport, weights })
    }

    /// `Σᵢ wᵢ P(sᵢ)⁻¹ fᵢ P(sᵢ)`, the quadrature of the conjugated integrand.
    pub fn integrate(&self, mut f: impl FnMut(usize) -> CMatrix) -> CMatrix {
        let mut acc = zeros(self.transport.p[0].nrows());
        for (i, w) in self.weights.iter().enumerate() {
            let term = &self.transport.inv[i] * f(i) * &self.transport.p[i];
            axpy(&mut acc, *w, &term);
        }
        acc
    }
}

fn check_dims(conn: &ConnectionData, q: usize) -> Result<()> {
    if conn.dim() != q {
        return Err(Error::DimensionMismatch { expected: conn.dim(), found: q });
    }
    Ok(())
}

/// `I_𝒜 q` along the single ray starting at `start`.
pub fn ray_integral(
    system: &MagneticSystem,
    conn: &ConnectionData,
    q: &Potential,
    start: &PhasePoint,
    opts: &FlowOptions,
) -> Result<CMatrix> {
    check_dims(conn, q.dim())?;
    let geom = RayGeometry::new(system, conn, start, opts)?;
    Ok(geom.integrate(|i| q.eval(&geom.trace.samples[i].x)))
}

pub fn xray_transform(
    system: &MagneticSystem,
    conn: &ConnectionData,
    q: &Potential,
    fan: &BoundaryFan,
    opts: &FlowOptions,
    exec: Exec,
) -> Result<Sinogram> {
    check_dims(conn, q.dim())?;
    let values = exec.try_map(fan.len(), |idx| ray_integral(system, conn, q, &fan.phase_point(system, idx), opts))?;
    Ok(Sinogram { dim: q.dim(), fan: *fan, values, scene_hash: 0, step: Some(opts.step) })
}

/// Phase points of a lattice over `M` times `n_dir` equally spaced directions
/// in the local orthonormal frame.
#[derive(Clone, Debug)]
pub struct SmGrid {
    pub points: Vec<Point>,
    pub n_dir: usize,
}

impl SmGrid {
    /// Interior nodes of a `cells × cells` lattice over the bounding box.
    pub fn interior(domain: &ChartDomain, cells: usize, n_dir: usize) -> SmGrid {
        let (lo, hi) = domain.bounding_box();
        let grid = Grid2::spanning(lo, hi, cells, cells);
        let points = (0..grid.len()).map(|i| grid.node_of(i)).filter(|x| domain.signed_distance(x) < -BOUNDARY_TOL).collect();
        SmGrid { points, n_dir }
    }

    pub fn phase_points(&self, system: &MagneticSystem) -> Vec<PhasePoint> {
        self.points
            .iter()
            .flat_map(|x| (0..self.n_dir).map(move |k| (*x, TAU * k as f64 / self.n_dir as f64)))
            .map(|(x, beta)| PhasePoint::at_angle(system, x, beta))
            .collect()
    }
}

/// `W^V(x, v) = ∫₀^κ P⁻¹ (V∘φ_s) P ds` at each phase point.
pub fn wv_field(
    system: &MagneticSystem,
    conn: &ConnectionData,
    v: &Potential,
    points: &[PhasePoint],
    opts: &FlowOptions,
    exec: Exec,
) -> Result<Vec<CMatrix>> {
    check_dims(conn, v.dim())?;
    exec.try_map(points.len(), |i| ray_integral(system, conn, v, &points[i], opts))
}

#[derive(Clone, Debug)]
pub struct ResidualReport {
    /// `sup ‖GW + [𝒜, W] + V‖_F` over evaluated points.
    pub sup: f64,
    /// Per-point residual; `None` where the centered stencil leaves `M`.
    pub residuals: Vec<Option<f64>>,
    pub skipped: usize,
}

/// Residual of `GW + [𝒜, W] = −V`, with `GW` by a centered difference over
/// one integrator step of `±δ`.
pub fn transport_residual<W>(
    system: &MagneticSystem,
    conn: &ConnectionData,
    v: &Potential,
    points: &[PhasePoint],
    w: W,
    delta: f64,
    exec: Exec,
) -> Result<ResidualReport>
where
    W: Fn(&PhasePoint) -> Result<CMatrix> + Sync + Send,
{
    check_dims(conn, v.dim())?;
    let inside = |p: &PhasePoint| system.domain.signed_distance(&p.x) < -BOUNDARY_TOL;
    let residuals = exec.try_map(points.len(), |i| -> Result<Option<f64>> {
        let p = &points[i];
        let plus = flow::flow_step(system, p, delta, crate::manifold::ForceSign::Forward);
        let minus = flow::flow_step(system, p, -delta, crate::manifold::ForceSign::Forward);
        if !(inside(p) && inside(&plus) && inside(&minus)) {
            return Ok(None);
        }
        let w0 = w(p)?;
        let gw = (w(&plus)? - w(&minus)?) * c64(0.5 / delta, 0.0);
        let a = conn.attenuation(system, &p.x, &p.v);
        Ok(Some(frobenius(&(gw + commutator(&a, &w0) + v.eval(&p.x)))))
    })?;
    let skipped = residuals.iter().filter(|r| r.is_none()).count();
    let sup = residuals.iter().flatten().copied().fold(0.0, f64::max);
    Ok(ResidualReport { sup, residuals, skipped })
}

/// `ℒ_Ā Q` along the null lift through `(t₀, start)`.
pub fn lightray_transform(
    system: &MagneticSystem,
    conn: &ConnectionData,
    q: &TimeDependentPotential,
    t0: f64,
    start: &PhasePoint,
    opts: &FlowOptions,
) -> Result<CMatrix> {
    check_dims(conn, q.spatial.dim())?;
    let mut geom = RayGeometry::new(system, conn, start, opts)?;
    geom.trace = flow::null_lift(system, &geom.trace, t0);
    let (trace, time) = (&geom.trace, &geom.trace.time);
    Ok(geom.integrate(|i| q.eval(time[i], &trace.samples[i].x)))
}

/// Slice transform along one ray: `∫₀^κ E(s) P⁻¹ (q∘φ_s) P ds` with
/// `E' = iτ(1 − Ω)E`, `E(0) = 1` integrated on the trace grid.
pub fn slice_ray(
    system: &MagneticSystem,
    conn: &ConnectionData,
    q: &Potential,
    tau: f64,
    start: &PhasePoint,
    opts: &FlowOptions,
) -> Result<CMatrix> {
    if tau == 0.0 {
        return ray_integral(system, conn, q, start, opts);
    }
    check_dims(conn, q.dim())?;
    let geom = RayGeometry::new(system, conn, start, opts)?;
    let trace = &geom.trace;
    let rate = |p: &PhasePoint| CMatrix::from_element(1, 1, c64(0.0, tau * (1.0 - system.omega_at(&p.x, &p.v))));
    let path = MatrixPath {
        nodes: trace.samples.iter().map(|s| rate(&PhasePoint { x: s.x, v: s.v })).collect(),
        mids: trace.midpoints(system).iter().map(rate).collect(),
        widths: trace.samples.windows(2).map(|w| w[1].s - w[0].s).collect(),
    };
    let phase = ode::propagate_left(&path, CMatrix::from_element(1, 1, c64(1.0, 0.0)));
    Ok(geom.integrate(|i| q.eval(&trace.samples[i].x) * phase[i][(0, 0)]))
}

pub fn slice_transform(
    system: &MagneticSystem,
    conn: &ConnectionData,
    q: &Potential,
    tau: f64,
    fan: &BoundaryFan,
    opts: &FlowOptions,
    exec: Exec,
) -> Result<Sinogram> {
    check_dims(conn, q.dim())?;
    let values = exec.try_map(fan.len(), |idx| slice_ray(system, conn, q, tau, &fan.phase_point(system, idx), opts))?;
    Ok(Sinogram { dim: q.dim(), fan: *fan, values, scene_hash: 0, step: Some(opts.step) })
}

/// Outflux points paired with the fan: same boundary points, directions
/// rotated by π.
pub fn outflux_points(system: &MagneticSystem, fan: &BoundaryFan) -> Vec<PhasePoint> {
    (0..fan.len())
        .map(|idx| {
            let (theta, alpha) = fan.angles(idx);
            PhasePoint::from_fan(system, theta, alpha + PI)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::ConnectionField;
    use crate::linalg::{identity, pauli};

    fn gaussian(center: Point, sigma: f64) -> Potential {
        Potential::Bumps(vec![Bump { center, width: sigma, coeff: identity(1) }])
    }

    #[test]
    fn fan_geometry() {
        let fan = BoundaryFan::new(8, 4, 0.1).unwrap();
        assert_eq!(fan.len(), 32);
        let half = FRAC_PI_2 - 0.1;
        assert!((fan.alpha(0) + half - half / 4.0).abs() < 1e-15);
        assert!((fan.alpha(0) + fan.alpha(3)).abs() < 1e-15);
        let sys = MagneticSystem::euclidean_disk(0.2);
        for idx in 0..fan.len() {
            let p = fan.phase_point(&sys, idx);
            assert_eq!(flow::classify(&sys, &p).unwrap(), flow::StartKind::Influx);
        }
        assert!(BoundaryFan::new(8, 4, 0.0).is_err());
    }

    #[test]
    fn gaussian_line_integral() {
        let sys = MagneticSystem::euclidean_disk(0.0);
        let conn = ConnectionData::zero(1);
        let (x0, sigma) = (Point::new(0.1, -0.05), 0.2);
        let q = gaussian(x0, sigma);
        let fan = BoundaryFan::new(12, 9, 0.05).unwrap();
        let sino = xray_transform(&sys, &conn, &q, &fan, &FlowOptions::with_step(5e-3), Exec::default()).unwrap();
        let mut worst: f64 = 0.0;
        for idx in 0..fan.len() {
            let p = fan.phase_point(&sys, idx);
            let d = crate::linalg::perp(&p.v).dot(&(x0 - p.x));
            let exact = sigma * PI.sqrt() * (-d * d / (sigma * sigma)).exp();
            worst = worst.max((sino.values[idx][(0, 0)].re - exact).abs());
        }
        assert!(worst / (sigma * PI.sqrt()) < 1e-6, "{worst}");
    }

    #[test]
    fn zero_potential_gives_zero_sinogram() {
        let sys = MagneticSystem::euclidean_disk(0.3);
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.0, width: 0.5, center: Point::zeros() },
            true,
        );
        let fan = BoundaryFan::new(4, 3, 0.1).unwrap();
        let s = xray_transform(&sys, &conn, &Potential::Zero { dim: 2 }, &fan, &FlowOptions::with_step(1e-2), Exec::Sequential).unwrap();
        assert_eq!(s.max_norm(), 0.0);
        assert!(matches!(
            xray_transform(&sys, &conn, &Potential::Zero { dim: 3 }, &fan, &FlowOptions::default(), Exec::Sequential),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_attenuation_and_potential() {
        // ∫₀^κ e^{sC} D e^{−sC} ds against a 10⁴-step midpoint oracle
        let sys = MagneticSystem::euclidean_disk(0.0);
        let c = CMatrix::from_row_slice(2, 2, &[c64(0.2, 0.3), c64(-0.4, 0.0), c64(0.5, 0.1), c64(0.0, -0.6)]);
        let d = CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.3, -0.2), c64(0.0, 0.5), c64(-0.7, 0.0)]);
        let conn = ConnectionData::new(ConnectionField::Constant { phi: c.clone(), a: [zeros(2), zeros(2)] }, false);
        let p = PhasePoint::from_fan(&sys, 0.8, 0.35);
        let opts = FlowOptions::default();
        let got = ray_integral(&sys, &conn, &Potential::Constant(d.clone()), &p, &opts).unwrap();
        let kappa = flow::exit_time(&sys, &p, &opts).unwrap();
        let n = 10_000;
        let h = kappa / n as f64;
        let mut oracle = zeros(2);
        for k in 0..n {
            let s = (k as f64 + 0.5) * h;
            let e = (&c * c64(s, 0.0)).exp();
            let ei = (&c * c64(-s, 0.0)).exp();
            oracle += e * &d * ei * c64(h, 0.0);
        }
        assert!(frobenius(&(got - oracle)) < 1e-8);
    }

    #[test]
    fn linearity_and_zero_extension() {
        let sys = MagneticSystem::euclidean_disk(0.3);
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.0, width: 0.5, center: Point::zeros() },
            true,
        );
        let fan = BoundaryFan::new(5, 4, 0.1).unwrap();
        let opts = FlowOptions::with_step(1e-2);
        let grid = Grid2::spanning(Point::new(-1.0, -1.0), Point::new(1.0, 1.0), 33, 33);
        let q1 = Potential::Bumps(vec![Bump { center: Point::new(0.2, 0.1), width: 0.3, coeff: pauli(1) }]).to_volume(&sys.domain, grid.clone());
        let q2 = Potential::Bumps(vec![Bump { center: Point::new(-0.3, 0.0), width: 0.25, coeff: pauli(3) }]).to_volume(&sys.domain, grid.clone());
        let (a, b) = (c64(0.7, -0.2), c64(-1.3, 0.4));
        let mix = VolumeField { values: q1.values.iter().zip(&q2.values).map(|(x, y)| x * a + y * b).collect(), ..q1.clone() };
        let t = |q: VolumeField| xray_transform(&sys, &conn, &Potential::Grid(q), &fan, &opts, Exec::Sequential).unwrap();
        let (t1, t2, tm) = (t(q1.clone()), t(q2.clone()), t(mix));
        let diff = t1.values.iter().zip(&t2.values).zip(&tm.values).map(|((x, y), z)| frobenius(&(x * a + y * b - z))).fold(0.0, f64::max);
        assert!(diff < 1e-10);

        // pad the lattice by three cells on every side
        let h = grid.spacing[0];
        let padded = Grid2 { origin: grid.origin - Point::new(3.0 * h, 3.0 * h), spacing: grid.spacing, nx: 39, ny: 39 };
        let mut big = VolumeField::on_grid(&sys.domain, 2, padded);
        for j in 0..33 {
            for i in 0..33 {
                big.values[big.grid.index(i + 3, j + 3)] = q1.values[grid.index(i, j)].clone();
            }
        }
        assert_eq!(big.unknowns().len(), q1.unknowns().len());
        assert!(t(big).max_abs_diff(&t1) < 1e-12);
    }

    #[test]
    fn rsin_round_trip() {
        let fan = BoundaryFan::new(3, 2, 0.2).unwrap();
        let mut s = Sinogram::zeros(2, fan);
        s.scene_hash = 0xdead_beef;
        s.values[4] = pauli(2);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 12 + 16 + 6 * 4 * 16);
        let back = Sinogram::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
        buf[0] = b'X';
        assert!(Sinogram::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn volume_mask_keeps_support_inside() {
        let sys = MagneticSystem::euclidean_disk(0.0);
        let f = VolumeField::sample(&sys.domain, 1, Grid2::spanning(Point::new(-1.0, -1.0), Point::new(1.0, 1.0), 40, 40), |_| identity(1));
        let h = f.grid.spacing[0];
        for i in f.unknowns() {
            assert!(sys.domain.signed_distance(&f.grid.node_of(i)) <= -2.0 * h);
        }
        // interpolant vanishes on the boundary
        for k in 0..64 {
            let x = sys.domain.boundary_point(TAU * k as f64 / 64.0);
            assert_eq!(frobenius(&f.eval(&x)), 0.0);
        }
        let v = f.to_vector();
        assert_eq!(f.from_vector(&v), f);
    }

    #[test]
    fn wv_boundary_values() {
        let sys = MagneticSystem::euclidean_disk(0.3);
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.0, width: 0.5, center: Point::zeros() },
            true,
        );
        let v = Potential::Bumps(vec![Bump { center: Point::new(0.1, 0.2), width: 0.3, coeff: pauli(1) * c64(0.0, 1.0) }]);
        let fan = BoundaryFan::new(6, 5, 0.1).unwrap();
        let opts = FlowOptions::with_step(5e-3);
        let sino = xray_transform(&sys, &conn, &v, &fan, &opts, Exec::default()).unwrap();
        let influx: Vec<_> = (0..fan.len()).map(|i| fan.phase_point(&sys, i)).collect();
        let w = wv_field(&sys, &conn, &v, &influx, &opts, Exec::default()).unwrap();
        assert!(w.iter().zip(&sino.values).all(|(a, b)| frobenius(&(a - b)) < 1e-9));
        let out = wv_field(&sys, &conn, &v, &outflux_points(&sys, &fan), &opts, Exec::default()).unwrap();
        assert!(out.iter().all(|m| frobenius(m) < 1e-6));
    }

    #[test]
    fn residual_of_exact_field_is_small() {
        let sys = MagneticSystem::euclidean_disk(0.3);
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.0, width: 0.5, center: Point::zeros() },
            true,
        );
        let v = Potential::Bumps(vec![Bump { center: Point::new(0.1, 0.2), width: 0.3, coeff: pauli(1) * c64(0.0, 1.0) }]);
        let opts = FlowOptions::with_step(5e-3);
        let pts = SmGrid::interior(&sys.domain, 6, 8).phase_points(&sys);
        let w = |p: &PhasePoint| ray_integral(&sys, &conn, &v, p, &opts);
        let rep = transport_residual(&sys, &conn, &v, &pts, w, 1e-4, Exec::default()).unwrap();
        assert!(rep.sup < 5e-4, "{}", rep.sup);
        let zero = Potential::Zero { dim: 2 };
        let rep = transport_residual(&sys, &conn, &zero, &pts, |_| Ok(zeros(2)), 1e-4, Exec::Sequential).unwrap();
        assert_eq!(rep.sup, 0.0);
    }

    #[test]
    fn slice_and_lightray() {
        let sys = MagneticSystem::euclidean_disk(0.5);
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.0, width: 0.5, center: Point::zeros() },
            true,
        );
        let q = Potential::Bumps(vec![Bump { center: Point::new(-0.1, 0.2), width: 0.35, coeff: pauli(3) + pauli(1) * c64(0.0, 0.5) }]);
        let opts = FlowOptions::with_step(5e-3);
        let p = PhasePoint::from_fan(&sys, 1.7, 0.25);
        let x = ray_integral(&sys, &conn, &q, &p, &opts).unwrap();
        assert_eq!(slice_ray(&sys, &conn, &q, 0.0, &p, &opts).unwrap(), x);
        let stat = TimeDependentPotential { spatial: q.clone(), profile: TimeProfile::Static };
        assert_eq!(lightray_transform(&sys, &conn, &stat, 3.0, &p, &opts).unwrap(), x);
        let t0 = 0.7;
        for tau in [1.0, 2.5] {
            let harm = TimeDependentPotential { spatial: q.clone(), profile: TimeProfile::Harmonic { tau } };
            let l = lightray_transform(&sys, &conn, &harm, t0, &p, &opts).unwrap();
            let s = slice_ray(&sys, &conn, &q, tau, &p, &opts).unwrap() * Complex64::from_polar(1.0, tau * t0);
            assert!(frobenius(&(l - s)) < 1e-6 * frobenius(&x).max(1.0));
        }
    }

    #[test]
    fn slice_on_straight_lines_matches_dense_quadrature() {
        let sys = MagneticSystem::euclidean_disk(0.0);
        let conn = ConnectionData::zero(1);
        let q = gaussian(Point::new(0.2, 0.1), 0.3);
        let p = PhasePoint::from_fan(&sys, 2.2, -0.3);
        let tau = 2.5;
        let got = slice_ray(&sys, &conn, &q, tau, &p, &FlowOptions::with_step(5e-3)).unwrap()[(0, 0)];
        let kappa = -2.0 * p.x.dot(&p.v);
        let n = 200_000;
        let h = kappa / n as f64;
        let oracle: Complex64 = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) * h;
                Complex64::from_polar(1.0, tau * s) * q.eval(&(p.x + p.v * s))[(0, 0)] * h
            })
            .sum();
        assert!((got - oracle).norm() < 1e-8);
    }

    #[test]
    fn time_profiles() {
        let s = TimeProfile::Spline { center: 1.0, half_width: 0.5 };
        assert_eq!(s.eval(1.6), c64(0.0, 0.0));
        assert!((s.eval(1.0).re - 2.0 / 3.0).abs() < 1e-15);
        assert!((TimeProfile::Harmonic { tau: 2.0 }.eval(0.3) - Complex64::from_polar(1.0, 0.6)).norm() < 1e-15);
    }
}
