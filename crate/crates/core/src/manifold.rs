//! The base surface: a strictly convex planar chart carrying a Riemannian
//! metric `g` and a one-form `ω`, together with the derived pointwise
//! geometry (Christoffel symbols, magnetic map `F`, boundary frame,
//! convexity margin).
//!
//! Sign conventions used throughout the crate:
//!
//! * `(dω)_{ij} = ∂_i ω_j − ∂_j ω_i` (no factor ½) and `F^i_j = −g^{ik}(dω)_{kj}`.
//!   For `ω = (b/2)(x¹dx² − x²dx¹)` on the Euclidean plane this gives
//!   `F(1, 0) = (0, b)`, i.e. unit-speed magnetic geodesics turn
//!   counter-clockwise on circles of radius `1/b` when `b > 0`.
//! * The boundary normal `ν` points inward and the second fundamental form is
//!   `Π(v, v) = g(∇_v V, ν)` for a boundary curve with velocity `v`, so the
//!   unit circle has `Π = 1`.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::interp::{Grid2, GridField};
use crate::linalg::{bilinear, perp, Point, Tangent};

/// Points within this distance of `∂M` count as boundary points.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum ChartDomain {
    Disk { radius: f64 },
    /// `|x/a|^p + |y/b|^p ≤ 1` with `p ≥ 2`.
    SuperEllipse { exponent: f64, semi_axes: [f64; 2] },
}

impl ChartDomain {
    pub fn unit_disk() -> ChartDomain {
        ChartDomain::Disk { radius: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChartDomain::Disk { radius } if *radius > 0.0 && radius.is_finite() => Ok(()),
            ChartDomain::SuperEllipse { exponent, semi_axes }
                if *exponent >= 2.0 && semi_axes.iter().all(|a| *a > 0.0 && a.is_finite()) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!("bad domain {self:?}"))),
        }
    }

    /// Implicit function, negative inside and zero on `∂M`.
    pub fn level(&self, x: &Point) -> f64 {
        match self {
            ChartDomain::Disk { radius } => (x.norm_squared() - radius * radius) / (2.0 * radius),
            ChartDomain::SuperEllipse { exponent: p, semi_axes: [a, b] } => {
                ((x.x / a).abs().powf(*p) + (x.y / b).abs().powf(*p) - 1.0) / p
            }
        }
    }

    pub fn level_gradient(&self, x: &Point) -> Vector2<f64> {
        match self {
            ChartDomain::Disk { radius } => x / *radius,
            ChartDomain::SuperEllipse { exponent: p, semi_axes: [a, b] } => {
                let d = |u: f64, s: f64| (u / s).abs().powf(p - 1.0) * u.signum() / s;
                Vector2::new(d(x.x, *a), d(x.y, *b))
            }
        }
    }

    pub fn level_hessian(&self, x: &Point) -> Matrix2<f64> {
        match self {
            ChartDomain::Disk { radius } => Matrix2::identity() / *radius,
            ChartDomain::SuperEllipse { exponent: p, semi_axes: [a, b] } => {
                let d2 = |u: f64, s: f64| (p - 1.0) * (u / s).abs().powf(p - 2.0) / (s * s);
                Matrix2::new(d2(x.x, *a), 0.0, 0.0, d2(x.y, *b))
            }
        }
    }

    /// Euclidean signed distance estimate `ρ/|∇ρ|` (exact for disks).
    pub fn signed_distance(&self, x: &Point) -> f64 {
        let rho = self.level(x);
        let g = self.level_gradient(x).norm();
        if g < 1e-12 {
            rho
        } else {
            rho / g
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.signed_distance(x) <= BOUNDARY_TOL
    }

    pub fn on_boundary(&self, x: &Point) -> bool {
        self.signed_distance(x).abs() <= BOUNDARY_TOL
    }

    /// Polar boundary parametrization `β(θ) = r(θ)(cos θ, sin θ)`.
    pub fn boundary_point(&self, theta: f64) -> Point {
        let (s, c) = theta.sin_cos();
        let r = match self {
            ChartDomain::Disk { radius } => *radius,
            ChartDomain::SuperEllipse { exponent: p, semi_axes: [a, b] } => {
                ((c / a).abs().powf(*p) + (s / b).abs().powf(*p)).powf(-1.0 / p)
            }
        };
        Point::new(r * c, r * s)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let (a, b) = match self {
            ChartDomain::Disk { radius } => (*radius, *radius),
            ChartDomain::SuperEllipse { semi_axes: [a, b], .. } => (*a, *b),
        };
        (Point::new(-a, -b), Point::new(a, b))
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ChartDomain::Disk { radius } => 2.0 * radius,
            ChartDomain::SuperEllipse { exponent, semi_axes: [a, b] } => {
                // the corner direction can exceed the semi-axes
                let corner = 2.0 * (a * a + b * b).sqrt() * 2f64.powf(-1.0 / exponent);
                corner.max(2.0 * a.max(*b))
            }
        }
    }

    /// Uniform rejection sample from the interior, at least `margin` inside.
    pub fn sample_interior(&self, rng: &mut impl Rng, margin: f64) -> Point {
        let (lo, hi) = self.bounding_box();
        loop {
            let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
            if self.signed_distance(&p) < -margin {
                return p;
            }
        }
    }

    /// Lattice over the bounding box padded by `pad` cells, with spacing
    /// `diameter / cells`.
    pub fn padded_grid(&self, cells: usize, pad: usize) -> Grid2 {
        let h = self.diameter() / cells as f64;
        let (lo, hi) = self.bounding_box();
        let off = Vector2::new(pad as f64 * h, pad as f64 * h);
        let (lo, hi) = (lo - off, hi + off);
        let nx = ((hi.x - lo.x) / h).ceil() as usize + 1;
        let ny = ((hi.y - lo.y) / h).ceil() as usize + 1;
        Grid2 {
            origin: lo,
            spacing: [h, h],
            nx,
            ny,
        }
    }
}

/// Metric value and its first partial derivatives `dg[k] = ∂_k g`.
#[derive(Clone, Copy, Debug)]
pub struct MetricSample {
    pub g: Matrix2<f64>,
    pub dg: [Matrix2<f64>; 2],
}

#[derive(Clone, Debug)]
pub enum MetricField {
    Euclidean,
    /// Poincaré disk `4/(1 − |x|²)² δ`; only defined strictly inside the unit disk.
    Hyperbolic,
    /// Conformal bump `(1 + a·exp(−|x − c|²/w²))² δ`.
    GaussianBump { amplitude: f64, width: f64, center: Point },
    /// `[[1 + s y², s x y], [s x y, 1 + s x²]]`.
    Sheared { strength: f64 },
    /// Components `g11, g12, g22`.
    Grid(GridField),
}

fn conformal(lambda: f64, grad: Vector2<f64>) -> MetricSample {
    let g = Matrix2::identity() * (lambda * lambda);
    let dg = [
        Matrix2::identity() * (2.0 * lambda * grad.x),
        Matrix2::identity() * (2.0 * lambda * grad.y),
    ];
    MetricSample { g, dg }
}

impl MetricField {
    pub fn eval(&self, x: &Point) -> MetricSample {
        match self {
            MetricField::Euclidean => MetricSample {
                g: Matrix2::identity(),
                dg: [Matrix2::zeros(), Matrix2::zeros()],
            },
            MetricField::Hyperbolic => {
                let q = 1.0 - x.norm_squared();
                conformal(2.0 / q, x * (4.0 / (q * q)))
            }
            MetricField::GaussianBump { amplitude, width, center } => {
                let d = x - center;
                let e = (-d.norm_squared() / (width * width)).exp();
                conformal(1.0 + amplitude * e, d * (-2.0 * amplitude * e / (width * width)))
            }
            MetricField::Sheared { strength: s } => MetricSample {
                g: Matrix2::new(1.0 + s * x.y * x.y, s * x.x * x.y, s * x.x * x.y, 1.0 + s * x.x * x.x),
                dg: [
                    Matrix2::new(0.0, s * x.y, s * x.y, 2.0 * s * x.x),
                    Matrix2::new(2.0 * s * x.y, s * x.x, s * x.x, 0.0),
                ],
            },
            MetricField::Grid(field) => {
                let (v, dx, dy) = field.eval(x);
                let m = |c: &[f64]| Matrix2::new(c[0], c[1], c[1], c[2]);
                MetricSample {
                    g: m(&v),
                    dg: [m(&dx), m(&dy)],
                }
            }
        }
    }

    pub fn to_grid(&self, grid: Grid2) -> MetricField {
        MetricField::Grid(GridField::sample(grid, 3, |p| {
            let g = self.eval(p).g;
            vec![g[(0, 0)], g[(0, 1)], g[(1, 1)]]
        }))
    }
}

/// One-form value and Jacobian `d[(i, j)] = ∂_j ω_i`.
#[derive(Clone, Copy, Debug)]
pub struct OneFormSample {
    pub w: Vector2<f64>,
    pub d: Matrix2<f64>,
}

impl OneFormSample {
    /// `(dω)_{ij} = ∂_i ω_j − ∂_j ω_i`.
    pub fn exterior_derivative(&self) -> Matrix2<f64> {
        self.d.transpose() - self.d
    }
}

#[derive(Clone, Debug)]
pub enum OneFormField {
    Zero,
    /// `(b/2)((x¹ − c¹)dx² − (x² − c²)dx¹)`, so `dω = b dx¹∧dx²`.
    ConstantField { strength: f64, center: Point },
    /// `s·exp(−|x − c|²/w²)((x¹ − c¹)dx² − (x² − c²)dx¹)`.
    Vortex { strength: f64, width: f64, center: Point },
    /// Components `ω₁, ω₂`.
    Grid(GridField),
}

impl OneFormField {
    pub fn eval(&self, x: &Point) -> OneFormSample {
        match self {
            OneFormField::Zero => OneFormSample {
                w: Vector2::zeros(),
                d: Matrix2::zeros(),
            },
            OneFormField::ConstantField { strength: b, center } => {
                let r = x - center;
                OneFormSample {
                    w: perp(&r) * (b / 2.0),
                    d: Matrix2::new(0.0, -b / 2.0, b / 2.0, 0.0),
                }
            }
            OneFormField::Vortex { strength: s, width, center } => {
                let r = x - center;
                let e = (-r.norm_squared() / (width * width)).exp();
                let grad_e = r * (-2.0 * e / (width * width));
                let rot = perp(&r);
                // ∂_j(e·rot_i) = ∂_j e·rot_i + e·∂_j rot_i
                let d = (rot * grad_e.transpose() + Matrix2::new(0.0, -1.0, 1.0, 0.0) * e) * *s;
                OneFormSample { w: rot * (s * e), d }
            }
            OneFormField::Grid(field) => {
                let (v, dx, dy) = field.eval(x);
                OneFormSample {
                    w: Vector2::new(v[0], v[1]),
                    d: Matrix2::new(dx[0], dy[0], dx[1], dy[1]),
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, OneFormField::Zero)
    }

    pub fn to_grid(&self, grid: Grid2) -> OneFormField {
        OneFormField::Grid(GridField::sample(grid, 2, |p| {
            let w = self.eval(p).w;
            vec![w.x, w.y]
        }))
    }
}

/// Sign in front of the Lorentz force: `Reversed` integrates `∇_ẋẋ = −F(ẋ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForceSign {
    Forward,
    Reversed,
}

impl ForceSign {
    pub fn factor(self) -> f64 {
        match self {
            ForceSign::Forward => 1.0,
            ForceSign::Reversed => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MagneticSystem {
    pub domain: ChartDomain,
    pub metric: MetricField,
    pub omega: OneFormField,
}

impl MagneticSystem {
    pub fn new(domain: ChartDomain, metric: MetricField, omega: OneFormField) -> MagneticSystem {
        MagneticSystem { domain, metric, omega }
    }

    pub fn euclidean_disk(strength: f64) -> MagneticSystem {
        let omega = if strength == 0.0 {
            OneFormField::Zero
        } else {
            OneFormField::ConstantField {
                strength,
                center: Point::zeros(),
            }
        };
        MagneticSystem::new(ChartDomain::unit_disk(), MetricField::Euclidean, omega)
    }

    /// Same scene with metric and one-form sampled on a grid of spacing
    /// `diameter / cells` (bicubic, padded by four cells).
    pub fn gridded(&self, cells: usize) -> MagneticSystem {
        let grid = self.domain.padded_grid(cells, 4);
        MagneticSystem {
            domain: self.domain.clone(),
            metric: self.metric.to_grid(grid.clone()),
            omega: self.omega.to_grid(grid),
        }
    }

    fn check(&self, x: &Point) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::PointOutsideDomain { x: x.x, y: x.y })
        }
    }

    pub fn metric_eval(&self, x: &Point) -> Result<Matrix2<f64>> {
        self.check(x)?;
        Ok(self.metric.eval(x).g)
    }

    pub fn christoffel(&self, x: &Point) -> Result<[Matrix2<f64>; 2]> {
        self.check(x)?;
        Ok(christoffel_from(&self.metric.eval(x)))
    }

    /// `F_x` as a matrix acting on tangent vectors.
    pub fn magnetic_map(&self, x: &Point) -> Matrix2<f64> {
        if self.omega.is_zero() {
            return Matrix2::zeros();
        }
        let g = self.metric.eval(x).g;
        magnetic_map_from(&g, &self.omega.eval(x))
    }

    pub fn lorentz_force(&self, x: &Point, v: &Tangent) -> Result<Tangent> {
        self.check(x)?;
        Ok(self.magnetic_map(x) * v)
    }

    pub fn omega_at(&self, x: &Point, v: &Tangent) -> f64 {
        if self.omega.is_zero() {
            0.0
        } else {
            self.omega.eval(x).w.dot(v)
        }
    }

    /// Covariant acceleration `−Γ(v, v) ± F(v)` of the magnetic flow.
    pub fn acceleration(&self, x: &Point, v: &Tangent, sign: ForceSign) -> Tangent {
        let ms = self.metric.eval(x);
        let gamma = christoffel_from(&ms);
        let mut a = Vector2::new(-bilinear(&gamma[0], v, v), -bilinear(&gamma[1], v, v));
        if !self.omega.is_zero() {
            a += magnetic_map_from(&ms.g, &self.omega.eval(x)) * v * sign.factor();
        }
        a
    }

    pub fn norm(&self, x: &Point, v: &Tangent) -> f64 {
        bilinear(&self.metric.eval(x).g, v, v).sqrt()
    }

    /// Inward `g`-unit normal at a point of (or near) `∂M`.
    pub fn inward_normal(&self, x: &Point) -> Tangent {
        let g = self.metric.eval(x).g;
        let ginv = g.try_inverse().expect("metric must be invertible");
        let grad = ginv * self.domain.level_gradient(x);
        -grad / bilinear(&g, &grad, &grad).sqrt()
    }

    /// Boundary point `β(θ)` with inward unit normal `ν` and the
    /// counter-clockwise unit tangent `τ` (orthonormal for `g`).
    pub fn boundary_frame(&self, theta: f64) -> (Point, Tangent, Tangent) {
        let x = self.domain.boundary_point(theta);
        let g = self.metric.eval(&x).g;
        let nu = self.inward_normal(&x);
        let t = perp(&self.domain.level_gradient(&x));
        let tau = t / bilinear(&g, &t, &t).sqrt();
        (x, nu, tau)
    }

    /// `g`-orthonormal frame at an arbitrary point, starting from `∂/∂x¹`.
    pub fn orthonormal_frame(&self, x: &Point) -> (Tangent, Tangent) {
        let g = self.metric.eval(x).g;
        let e1 = Vector2::new(1.0, 0.0) / g[(0, 0)].sqrt();
        let y = Vector2::new(0.0, 1.0);
        let e2 = y - e1 * bilinear(&g, &e1, &y);
        (e1, e2 / bilinear(&g, &e2, &e2).sqrt())
    }

    /// `Π_x(v, v) − g_x(F_x(v), ν(x))` at `x = β(θ)` for a unit tangent `v`.
    pub fn convexity_margin(&self, theta: f64, v: &Tangent) -> Result<f64> {
        let (x, nu, _) = self.boundary_frame(theta);
        let ms = self.metric.eval(&x);
        let normal_component = bilinear(&ms.g, v, &nu);
        if normal_component.abs() > 1e-8 {
            return Err(Error::NonTangent { normal_component });
        }
        let norm = bilinear(&ms.g, v, v).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NonUnit { norm });
        }
        Ok(self.second_fundamental_form(&x, v) - bilinear(&ms.g, &(self.magnetic_map(&x) * v), &nu))
    }

    /// `Π(v, v) = ∇²ρ(v, v)/|dρ|_g` for the implicit boundary function `ρ`.
    pub fn second_fundamental_form(&self, x: &Point, v: &Tangent) -> f64 {
        let ms = self.metric.eval(x);
        let gamma = christoffel_from(&ms);
        let drho = self.domain.level_gradient(x);
        let hess = bilinear(&self.domain.level_hessian(x), v, v)
            - (bilinear(&gamma[0], v, v) * drho.x + bilinear(&gamma[1], v, v) * drho.y);
        let ginv = ms.g.try_inverse().expect("metric must be invertible");
        hess / bilinear(&ginv, &drho, &drho).sqrt()
    }

    /// Minimum convexity margin over `n` boundary angles and both tangent
    /// orientations.
    pub fn convexity_sweep(&self, n: usize) -> Result<f64> {
        let mut min = f64::INFINITY;
        for j in 0..n {
            let theta = std::f64::consts::TAU * j as f64 / n as f64;
            let (_, _, tau) = self.boundary_frame(theta);
            for v in [tau, -tau] {
                min = min.min(self.convexity_margin(theta, &v)?);
            }
        }
        Ok(min)
    }

    /// `sup ‖ω‖_g` over interior lattice points (`n × n` over the bounding box)
    /// and `n` boundary points.
    pub fn omega_sup_norm(&self, n: usize) -> f64 {
        if self.omega.is_zero() {
            return 0.0;
        }
        let dual_norm = |x: &Point| {
            let ginv = self.metric.eval(x).g.try_inverse().expect("metric must be invertible");
            let w = self.omega.eval(x).w;
            bilinear(&ginv, &w, &w).sqrt()
        };
        let (lo, hi) = self.domain.bounding_box();
        let mut sup = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let p = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / (n - 1) as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / (n - 1) as f64,
                );
                if self.domain.contains(&p) {
                    sup = sup.max(dual_norm(&p));
                }
            }
            let b = self.domain.boundary_point(std::f64::consts::TAU * j as f64 / n as f64);
            sup = sup.max(dual_norm(&b));
        }
        sup
    }
}

/// `Γ[k][(i, j)] = Γ^k_{ij}`.
pub fn christoffel_from(ms: &MetricSample) -> [Matrix2<f64>; 2] {
    let ginv = ms.g.try_inverse().expect("metric must be invertible");
    let mut lower = [Matrix2::zeros(); 2];
    for (l, low) in lower.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                low[(i, j)] = 0.5 * (ms.dg[i][(j, l)] + ms.dg[j][(i, l)] - ms.dg[l][(i, j)]);
            }
        }
    }
    let mut out = [Matrix2::zeros(); 2];
    for (k, o) in out.iter_mut().enumerate() {
        *o = lower[0] * ginv[(k, 0)] + lower[1] * ginv[(k, 1)];
    }
    out
}

pub fn magnetic_map_from(g: &Matrix2<f64>, omega: &OneFormSample) -> Matrix2<f64> {
    let ginv = g.try_inverse().expect("metric must be invertible");
    -(ginv * omega.exterior_derivative())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyperbolic() -> MagneticSystem {
        MagneticSystem::new(ChartDomain::Disk { radius: 0.6 }, MetricField::Hyperbolic, OneFormField::Zero)
    }

    fn bumpy() -> MagneticSystem {
        MagneticSystem::new(
            ChartDomain::SuperEllipse { exponent: 4.0, semi_axes: [1.0, 0.8] },
            MetricField::GaussianBump { amplitude: 0.3, width: 0.5, center: Point::new(0.1, -0.1) },
            OneFormField::Vortex { strength: 0.4, width: 0.6, center: Point::new(-0.1, 0.05) },
        )
    }

    #[test]
    fn metric_examples() {
        let e = MagneticSystem::euclidean_disk(0.0);
        assert_eq!(e.metric_eval(&Point::new(0.3, -0.1)).unwrap(), Matrix2::identity());
        let h = hyperbolic();
        assert_eq!(h.metric_eval(&Point::zeros()).unwrap(), Matrix2::identity() * 4.0);
        assert!(matches!(
            e.metric_eval(&Point::new(1.5, 0.0)),
            Err(Error::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn gridded_euclidean_is_identity() {
        let grid = MagneticSystem::euclidean_disk(0.0).gridded(128);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = grid.domain.sample_interior(&mut rng, 0.0);
            let g = grid.metric_eval(&x).unwrap();
            assert!((g - Matrix2::identity()).abs().max() < 1e-6);
        }
    }

    #[test]
    fn christoffel_flat_and_hyperbolic_origin() {
        let e = MagneticSystem::euclidean_disk(0.5);
        let g = e.christoffel(&Point::new(0.2, 0.4)).unwrap();
        assert!(g.iter().all(|m| m.abs().max() == 0.0));
        let h = hyperbolic().christoffel(&Point::zeros()).unwrap();
        assert!(h.iter().all(|m| m.abs().max() < 1e-15));
    }

    /// Γ from central differences of `g` (h = 1e-4) as an independent oracle.
    fn christoffel_fd(m: &MetricField, x: &Point) -> [Matrix2<f64>; 2] {
        let h = 1e-4;
        let dg = [0, 1].map(|k| {
            let mut e = Vector2::zeros();
            e[k] = h;
            (m.eval(&(x + e)).g - m.eval(&(x - e)).g) / (2.0 * h)
        });
        christoffel_from(&MetricSample { g: m.eval(x).g, dg })
    }

    #[test]
    fn christoffel_symmetric_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fields = [
            MetricField::Hyperbolic,
            MetricField::Sheared { strength: 0.7 },
            MetricField::GaussianBump { amplitude: 0.4, width: 0.3, center: Point::new(0.1, 0.2) },
        ];
        let domain = ChartDomain::Disk { radius: 0.6 };
        for m in &fields {
            for _ in 0..100 {
                let x = domain.sample_interior(&mut rng, 0.0);
                let exact = christoffel_from(&m.eval(&x));
                let fd = christoffel_fd(m, &x);
                for k in 0..2 {
                    assert_eq!(exact[k][(0, 1)], exact[k][(1, 0)]);
                    assert!((exact[k] - fd[k]).abs().max() < 1e-6, "{m:?}");
                }
            }
        }
    }

    #[test]
    fn grid_christoffels_match_closed_form() {
        let sys = bumpy();
        let grid = sys.gridded(128);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = sys.domain.sample_interior(&mut rng, 0.0);
            let a = sys.christoffel(&x).unwrap();
            let b = grid.christoffel(&x).unwrap();
            worst = worst.max((a[0] - b[0]).abs().max()).max((a[1] - b[1]).abs().max());
            let (ga, gb) = (sys.metric_eval(&x).unwrap(), grid.metric_eval(&x).unwrap());
            assert!((ga - gb).abs().max() < 1e-6 * ga.abs().max());
        }
        assert!(worst < 1e-5, "worst {worst}");
    }

    #[test]
    fn constant_field_direction() {
        let b = 0.5;
        let sys = MagneticSystem::euclidean_disk(b);
        let f = sys.lorentz_force(&Point::new(0.1, 0.2), &Vector2::new(1.0, 0.0)).unwrap();
        assert!((f - Vector2::new(0.0, b)).norm() < 1e-15);
        // finite-difference cross-check of dω = b dx¹∧dx²
        let h = 1e-5;
        let w = |p: Point| sys.omega.eval(&p).w;
        let x = Point::new(0.3, -0.2);
        let d12 = (w(x + Vector2::new(h, 0.0)).y - w(x - Vector2::new(h, 0.0)).y) / (2.0 * h)
            - (w(x + Vector2::new(0.0, h)).x - w(x - Vector2::new(0.0, h)).x) / (2.0 * h);
        assert!((d12 - b).abs() < 1e-9);
        let v = Vector2::new(0.3, -0.8);
        let lin = sys.lorentz_force(&x, &(v * 2.0)).unwrap() - sys.lorentz_force(&x, &v).unwrap() * 2.0;
        assert!(lin.norm() < 1e-15);
        assert_eq!(MagneticSystem::euclidean_disk(0.0).lorentz_force(&x, &v).unwrap(), Vector2::zeros());
    }

    #[test]
    fn vortex_jacobian_matches_finite_differences() {
        let om = OneFormField::Vortex { strength: 0.4, width: 0.6, center: Point::new(-0.1, 0.05) };
        let x = Point::new(0.2, 0.3);
        let h = 1e-6;
        let s = om.eval(&x);
        for j in 0..2 {
            let mut e = Vector2::zeros();
            e[j] = h;
            let fd = (om.eval(&(x + e)).w - om.eval(&(x - e)).w) / (2.0 * h);
            for i in 0..2 {
                assert!((s.d[(i, j)] - fd[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn magnetic_map_is_g_antisymmetric() {
        let sys = bumpy();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = sys.domain.sample_interior(&mut rng, 0.0);
            let u = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let w = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let g = sys.metric_eval(&x).unwrap();
            let f = sys.magnetic_map(&x);
            let defect = bilinear(&g, &(f * u), &w) + bilinear(&g, &u, &(f * w));
            assert!(defect.abs() <= 1e-10 * u.norm() * w.norm());
            assert!(bilinear(&g, &(f * u), &u).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for sys in [bumpy(), hyperbolic(), bumpy().gridded(128)] {
            for _ in 0..1000 {
                let x = sys.domain.sample_interior(&mut rng, 0.0);
                let g = sys.metric_eval(&x).unwrap();
                assert_eq!(g, g.transpose());
                assert!(g.symmetric_eigenvalues().min() > 0.0);
            }
        }
    }

    #[test]
    fn boundary_parametrization_consistent_with_level_set() {
        for d in [ChartDomain::unit_disk(), ChartDomain::SuperEllipse { exponent: 4.0, semi_axes: [1.0, 0.8] }] {
            for j in 0..360 {
                let p = d.boundary_point(j as f64 * 0.0174);
                assert!(d.signed_distance(&p).abs() < 1e-12);
                assert!(d.on_boundary(&p));
            }
        }
    }

    #[test]
    fn convexity_margins() {
        let flat = MagneticSystem::euclidean_disk(0.0);
        assert!((flat.convexity_sweep(360).unwrap() - 1.0).abs() < 1e-12);
        let b = 0.4;
        let field = MagneticSystem::euclidean_disk(b);
        // brute-force sweep oracle: margin is 1 ∓ b depending on orientation
        let m = field.convexity_sweep(720).unwrap();
        assert!(m >= 1.0 - b - 1e-12 && m > 0.0);
        assert!((m - (1.0 - b)).abs() < 1e-12);
        let (_, nu, tau) = flat.boundary_frame(0.3);
        assert!(matches!(flat.convexity_margin(0.3, &nu), Err(Error::NonTangent { .. })));
        assert!(matches!(flat.convexity_margin(0.3, &(tau * 2.0)), Err(Error::NonUnit { .. })));
        // ω = 0 on an ellipse: margin is Π, minimal at the ends of the major
        // axis where the curvature is b/a²
        let se = MagneticSystem::new(
            ChartDomain::SuperEllipse { exponent: 2.0, semi_axes: [1.0, 0.8] },
            MetricField::Euclidean,
            OneFormField::Zero,
        );
        assert!((se.convexity_sweep(720).unwrap() - 0.8).abs() < 1e-12);
        // exponent 4 flattens the boundary to zero curvature on the axes
        let flat_spots = MagneticSystem::new(
            ChartDomain::SuperEllipse { exponent: 4.0, semi_axes: [1.0, 0.8] },
            MetricField::Euclidean,
            OneFormField::Zero,
        );
        assert!(flat_spots.convexity_sweep(720).unwrap().abs() < 1e-12);
        let (x, _, tau) = se.boundary_frame(1.1);
        assert_eq!(se.convexity_margin(1.1, &tau).unwrap(), se.second_fundamental_form(&x, &tau));
    }

    #[test]
    fn hyperbolic_boundary_curvature() {
        // geodesic curvature of |x| = r in the Poincaré disk is (1 + r²)/(2r)
        let sys = hyperbolic();
        let m = sys.convexity_sweep(90).unwrap();
        let r: f64 = 0.6;
        assert!((m - (1.0 + r * r) / (2.0 * r)).abs() < 1e-12);
    }
}
