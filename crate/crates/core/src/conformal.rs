//! Null pregeodesics under a conformal change `c²ḡ` and the matching
//! identity for the light ray transform.
//!
//! A null geodesic `γ` of `ḡ` reparametrized as `γ̃ = γ∘h` is a geodesic of
//! `c²ḡ` when `h′(s̃) = (c₀ / c(γ̃(s̃)))²`, with `c₀` the factor at the start.

use crate::connection::{parallel_transport, ConnectionData, TransportSign};
use crate::error::{Error, Result};
use crate::flow::{self, FlowOptions, GeodesicTrace, PhasePoint};
use crate::linalg::{axpy, c64, frobenius, identity, CMatrix, Point, Tangent};
use crate::manifold::{ForceSign, MagneticSystem, BOUNDARY_TOL};
use crate::ode::{self, MatrixPath};
use crate::quadrature;
use crate::transform::TimeDependentPotential;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConformalFactor {
    Constant(f64),
    /// `1 + a·exp(−|x − x₀|²/s²)` with `a > −1`.
    SpatialGaussian { amplitude: f64, width: f64, center: Point },
}

impl ConformalFactor {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConformalFactor::Constant(k) => k > 0.0 && k.is_finite(),
            ConformalFactor::SpatialGaussian { amplitude, width, .. } => amplitude > -1.0 && width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("conformal factor {self:?} is not positive")))
        }
    }

    pub fn eval(&self, _t: f64, x: &Point) -> f64 {
        match *self {
            ConformalFactor::Constant(k) => k,
            ConformalFactor::SpatialGaussian { amplitude, width, center } => {
                1.0 + amplitude * (-(x - center).norm_squared() / (width * width)).exp()
            }
        }
    }
}

/// `s̃(s) = ∫₀ˢ (c/c₀)²` along a base trace, by cumulative quadrature.
#[derive(Clone, Debug)]
pub struct QuadratureMap {
    pub s: Vec<f64>,
    pub s_tilde: Vec<f64>,
    /// `ds̃/ds` at the samples.
    pub rate: Vec<f64>,
}

impl QuadratureMap {
    pub fn new(trace: &GeodesicTrace, c: &ConformalFactor) -> Result<QuadratureMap> {
        let c0 = c.eval(trace.time[0], &trace.samples[0].x);
        let ratio: Vec<f64> = trace.samples.iter().zip(&trace.time).map(|(p, t)| c.eval(*t, &p.x) / c0).collect();
        let min = ratio.iter().copied().fold(f64::INFINITY, f64::min) * c0;
        if min.is_nan() || min <= 0.0 {
            return Err(Error::ConformalFactor { min });
        }
        let rate: Vec<f64> = ratio.iter().map(|r| r * r).collect();
        let s = trace.params();
        let s_tilde = quadrature::cumulative(&s, &rate);
        Ok(QuadratureMap { s, s_tilde, rate })
    }

    /// `h(s̃)`: inverts the cubic Hermite interpolant of `s̃(s)`.
    pub fn h(&self, st: f64) -> f64 {
        let last = self.s.len() - 1;
        if st <= 0.0 {
            return 0.0;
        }
        if st >= self.s_tilde[last] {
            return self.s[last];
        }
        let i = self.s_tilde.partition_point(|&v| v <= st).saturating_sub(1).min(last - 1);
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let w = s1 - s0;
        let cubic = |u: f64| {
            let (u2, u3) = (u * u, u * u * u);
            (2.0 * u3 - 3.0 * u2 + 1.0) * self.s_tilde[i]
                + (u3 - 2.0 * u2 + u) * w * self.rate[i]
                + (-2.0 * u3 + 3.0 * u2) * self.s_tilde[i + 1]
                + (u3 - u2) * w * self.rate[i + 1]
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cubic(mid) < st {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        s0 + 0.5 * (lo + hi) * w
    }
}

/// The curve `γ̃` integrated directly in `s̃`, carrying `h` and `t` along.
#[derive(Clone, Debug)]
pub struct Reparametrization {
    pub c0: f64,
    pub s_tilde: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub h: Vec<f64>,
    pub time: Vec<f64>,
    /// `h′(s̃)` from the formula at every sample.
    pub rate: Vec<f64>,
    pub transport: Vec<CMatrix>,
    pub inverse: Vec<CMatrix>,
}

#[derive(Clone, Copy, Debug)]
struct State {
    p: PhasePoint,
    h: f64,
    t: f64,
}

struct Joint<'a> {
    system: &'a MagneticSystem,
    c: &'a ConformalFactor,
    c0: f64,
}

impl Joint<'_> {
    fn rate(&self, t: f64, x: &Point) -> f64 {
        let r = self.c0 / self.c.eval(t, x);
        r * r
    }

    fn deriv(&self, x: &Point, v: &Tangent, t: f64) -> (Tangent, Tangent, f64, f64) {
        let r = self.rate(t, x);
        (
            *v * r,
            self.system.acceleration(x, v, ForceSign::Forward) * r,
            r,
            r * (1.0 - self.system.omega_at(x, v)),
        )
    }

    fn step(&self, y: &State, k: f64) -> State {
        let (x, v, t) = (y.p.x, y.p.v, y.t);
        let (k1x, k1v, k1h, k1t) = self.deriv(&x, &v, t);
        let (k2x, k2v, k2h, k2t) = self.deriv(&(x + k1x * (k / 2.0)), &(v + k1v * (k / 2.0)), t + k1t * (k / 2.0));
        let (k3x, k3v, k3h, k3t) = self.deriv(&(x + k2x * (k / 2.0)), &(v + k2v * (k / 2.0)), t + k2t * (k / 2.0));
        let (k4x, k4v, k4h, k4t) = self.deriv(&(x + k3x * k), &(v + k3v * k), t + k3t * k);
        State {
            p: PhasePoint::new(
                self.system,
                x + (k1x + (k2x + k3x) * 2.0 + k4x) * (k / 6.0),
                v + (k1v + (k2v + k3v) * 2.0 + k4v) * (k / 6.0),
            ),
            h: y.h + (k1h + (k2h + k3h) * 2.0 + k4h) * (k / 6.0),
            t: y.t + (k1t + (k2t + k3t) * 2.0 + k4t) * (k / 6.0),
        }
    }
}

/// Integrates `(x, v, h, t)` in `s̃` with velocity scaled by `h′`, stopping on
/// `∂M`, then transports along the new parametrization.
pub fn reparametrize(
    system: &MagneticSystem,
    conn: &ConnectionData,
    c: &ConformalFactor,
    start: &PhasePoint,
    t0: f64,
    opts: &FlowOptions,
) -> Result<Reparametrization> {
    c.validate()?;
    let start = PhasePoint::new(system, start.x, start.v);
    let joint = Joint { system, c, c0: c.eval(t0, &start.x) };
    let dist = |y: &State| system.domain.signed_distance(&y.p.x);
    let cap = opts.s_max.unwrap_or(100.0 * system.domain.diameter());
    let k = opts.step;
    let mut states = vec![State { p: start, h: 0.0, t: t0 }];
    let mut st = vec![0.0];
    let mut cur = states[0];
    let kind = flow::classify(system, &start)?;
    if matches!(kind, flow::StartKind::Interior | flow::StartKind::Influx) {
        loop {
            if cur.h > cap {
                return Err(Error::TrappedRay { s_max: cap });
            }
            let next = joint.step(&cur, k);
            if dist(&next) > 0.0 {
                let (mut lo, mut hi) = (0.0, k);
                for _ in 0..50 {
                    if hi - lo < 1e-13 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if dist(&joint.step(&cur, mid)) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let tau = if dist(&joint.step(&cur, hi)).abs() < dist(&joint.step(&cur, lo)).abs() { hi } else { lo };
                let end = joint.step(&cur, tau);
                if dist(&end).abs() > BOUNDARY_TOL {
                    return Err(Error::StepUnderflow { s: cur.h });
                }
                st.push(st.last().unwrap() + tau);
                states.push(end);
                break;
            }
            st.push(k * states.len() as f64);
            states.push(next);
            cur = next;
        }
    }
    let rate: Vec<f64> = states.iter().map(|y| joint.rate(y.t, &y.p.x)).collect();
    let att = |y: &State| conn.attenuation(system, &y.p.x, &y.p.v);
    // Hermite midpoints in s̃ for the transport generator −h′𝒜
    let mids: Vec<CMatrix> = states
        .windows(2)
        .zip(st.windows(2))
        .map(|(w, s)| {
            let width = s[1] - s[0];
            let (d0, d1) = (joint.deriv(&w[0].p.x, &w[0].p.v, w[0].t), joint.deriv(&w[1].p.x, &w[1].p.v, w[1].t));
            let x = (w[0].p.x + w[1].p.x) * 0.5 + (d0.0 - d1.0) * (width / 8.0);
            let v = (w[0].p.v + w[1].p.v) * 0.5 + (d0.1 - d1.1) * (width / 8.0);
            let t = (w[0].t + w[1].t) * 0.5 + (d0.3 - d1.3) * (width / 8.0);
            let mid = State { p: PhasePoint::new(system, x, v), h: 0.0, t };
            att(&mid) * c64(joint.rate(t, &mid.p.x), 0.0)
        })
        .collect();
    let path = MatrixPath {
        nodes: states.iter().zip(&rate).map(|(y, r)| att(y) * c64(*r, 0.0)).collect(),
        mids,
        widths: st.windows(2).map(|w| w[1] - w[0]).collect(),
    };
    let n = conn.dim();
    Ok(Reparametrization {
        c0: joint.c0,
        transport: ode::propagate_left(&path.negated(), identity(n)),
        inverse: ode::propagate_right(&path, identity(n)),
        s_tilde: st,
        points: states.iter().map(|y| y.p).collect(),
        h: states.iter().map(|y| y.h).collect(),
        time: states.iter().map(|y| y.t).collect(),
        rate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConformalReport {
    /// `‖ℒQ(γ) − c(γ(0))² ℒ̃(Q/c²)(γ̃)‖_F`
    pub identity: f64,
    /// `sup |h_ode − h_quadrature|` over the reparametrized samples.
    pub h_paths: f64,
    /// `sup |dh/ds̃ − (c₀/c)²|` with `dh/ds̃` differenced from the `h` samples.
    pub h_prime: f64,
    /// `‖P(κ) − P̃(end)‖_F`.
    pub transport: f64,
}

impl ConformalReport {
    pub fn worst(&self) -> f64 {
        self.identity.max(self.h_paths).max(self.h_prime).max(self.transport)
    }
}

/// Compares both sides of the conformal identity along the ray from `start`.
pub fn conformal_lightray_check(
    system: &MagneticSystem,
    conn: &ConnectionData,
    q: &TimeDependentPotential,
    c: &ConformalFactor,
    t0: f64,
    start: &PhasePoint,
    opts: &FlowOptions,
) -> Result<ConformalReport> {
    let base = flow::null_lift(system, &flow::integrate_magnetic_geodesic(system, start, opts)?, t0);
    let tm = parallel_transport(system, conn, &base, TransportSign::Absorbing);
    let w = quadrature::weights(&base.params());
    let mut lhs = CMatrix::zeros(conn.dim(), conn.dim());
    for (i, smp) in base.samples.iter().enumerate() {
        axpy(&mut lhs, w[i], &(&tm.inv[i] * q.eval(base.time[i], &smp.x) * &tm.p[i]));
    }

    let re = reparametrize(system, conn, c, start, t0, opts)?;
    let wt = quadrature::weights(&re.s_tilde);
    let mut rhs = CMatrix::zeros(conn.dim(), conn.dim());
    for (i, p) in re.points.iter().enumerate() {
        let ci = c.eval(re.time[i], &p.x);
        axpy(&mut rhs, wt[i] / (ci * ci), &(&re.inverse[i] * q.eval(re.time[i], &p.x) * &re.transport[i]));
    }
    rhs *= c64(re.c0 * re.c0, 0.0);

    let qmap = QuadratureMap::new(&base, c)?;
    let h_paths = re.h.iter().zip(&re.s_tilde).map(|(h, st)| (h - qmap.h(*st)).abs()).fold(0.0, f64::max);

    // fourth-order central differences on the uniform part of the s̃ grid
    let k = opts.step;
    let uniform = re.s_tilde.len().saturating_sub(1);
    let h_prime = (2..uniform.saturating_sub(2))
        .map(|i| {
            let d = (-re.h[i + 2] + 8.0 * re.h[i + 1] - 8.0 * re.h[i - 1] + re.h[i - 2]) / (12.0 * k);
            (d - re.rate[i]).abs()
        })
        .fold(0.0, f64::max);

    Ok(ConformalReport {
        identity: frobenius(&(lhs - rhs)),
        h_paths,
        h_prime,
        transport: frobenius(&(tm.last() - re.transport.last().unwrap())),
    })
}

/// `|∫₀^κ f(γ(s)) ds − ∫ f(γ̃(s̃)) h′(s̃) ds̃|`.
pub fn change_of_variables_defect(base: &GeodesicTrace, re: &Reparametrization, f: impl Fn(&Point) -> f64) -> f64 {
    let lhs: Vec<f64> = base.samples.iter().map(|p| f(&p.x)).collect();
    let rhs: Vec<f64> = re.points.iter().zip(&re.rate).map(|(p, r)| f(&p.x) * r).collect();
    (quadrature::integrate(&base.params(), &lhs) - quadrature::integrate(&re.s_tilde, &rhs)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::ConnectionField;
    use crate::linalg::pauli;
    use crate::transform::{Bump, Potential, TimeProfile};

    fn scene() -> (MagneticSystem, ConnectionData, TimeDependentPotential) {
        let sys = MagneticSystem::euclidean_disk(0.3);
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.0, width: 0.5, center: Point::new(0.1, 0.0) },
            true,
        );
        let q = TimeDependentPotential {
            spatial: Potential::Bumps(vec![Bump { center: Point::new(-0.1, 0.2), width: 0.4, coeff: pauli(1) + pauli(3) * c64(0.0, 0.3) }]),
            profile: TimeProfile::Harmonic { tau: 1.5 },
        };
        (sys, conn, q)
    }

    #[test]
    fn unit_and_constant_factors() {
        let (sys, conn, q) = scene();
        let p = PhasePoint::from_fan(&sys, 0.9, 0.3);
        let opts = FlowOptions::with_step(2e-3);
        let re = reparametrize(&sys, &conn, &ConformalFactor::Constant(1.0), &p, 0.0, &opts).unwrap();
        assert!(re.h.iter().zip(&re.s_tilde).all(|(h, s)| (h - s).abs() < 1e-12));
        let stat = TimeDependentPotential { profile: TimeProfile::Static, ..q.clone() };
        let one = conformal_lightray_check(&sys, &conn, &stat, &ConformalFactor::Constant(1.0), 0.0, &p, &opts).unwrap();
        assert!(one.identity < 1e-12, "{one:?}");
        let k = conformal_lightray_check(&sys, &conn, &q, &ConformalFactor::Constant(2.7), 0.4, &p, &opts).unwrap();
        assert!(k.identity < 1e-10 && k.h_prime < 1e-10, "{k:?}");
    }

    #[test]
    fn gaussian_factor() {
        let (sys, conn, q) = scene();
        let c = ConformalFactor::SpatialGaussian { amplitude: 0.6, width: 0.5, center: Point::new(0.2, -0.1) };
        let opts = FlowOptions::default();
        for (theta, alpha) in [(0.4, 0.1), (2.5, -0.7), (4.4, 0.9)] {
            let p = PhasePoint::from_fan(&sys, theta, alpha);
            let rep = conformal_lightray_check(&sys, &conn, &q, &c, 0.3, &p, &opts).unwrap();
            assert!(rep.identity < 1e-6, "{rep:?}");
            assert!(rep.h_paths < 1e-8 && rep.h_prime < 1e-8, "{rep:?}");
            assert!(rep.transport < 1e-8, "{rep:?}");

            let base = flow::integrate_magnetic_geodesic(&sys, &p, &opts).unwrap();
            let re = reparametrize(&sys, &conn, &c, &p, 0.3, &opts).unwrap();
            assert!(re.h.windows(2).all(|w| w[1] > w[0]));
            let d = change_of_variables_defect(&base, &re, |x| (1.3 * x.x).sin() + (0.7 * x.y).cos() * x.x);
            assert!(d < 1e-8, "{d}");
        }
        assert!(ConformalFactor::SpatialGaussian { amplitude: -1.5, width: 0.5, center: Point::zeros() }.validate().is_err());
    }
}
