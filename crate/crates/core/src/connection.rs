//! Time-independent connections `Ā = Φ dt + Ã`, the attenuation
//! `𝒜(x, v) = Φ(x) + B_x(v)` with `B = Ã − Φω`, and parallel transport
//! along sampled magnetic geodesics.

use rand::Rng;

use crate::error::{Error, Result};
use crate::flow::{self, FlowOptions, GeodesicTrace, PhasePoint};
use crate::interp::GridField;
use crate::linalg::{c64, frobenius, identity, pauli, skew_hermitian_defect, zeros, CMatrix, Point, Tangent};
use crate::manifold::MagneticSystem;
use crate::ode::{self, MatrixPath};

/// Pointwise connection data: the Higgs field and the two components of `Ã`.
#[derive(Clone, Debug)]
pub struct ConnectionSample {
    pub phi: CMatrix,
    pub a: [CMatrix; 2],
}

#[derive(Clone, Debug)]
pub enum ConnectionField {
    Zero { dim: usize },
    Constant { phi: CMatrix, a: [CMatrix; 2] },
    /// `Φ = i f σ₃`, `Ã = (i f/2)(σ₁ dx¹ + σ₂ dx²)` with
    /// `f = amplitude · exp(−|x − center|²/width²)`.
    Su2Gaussian { amplitude: f64, width: f64, center: Point },
    /// `6N²` real components: `Φ`, `Ã₁`, `Ã₂`, each row-major with
    /// interleaved real and imaginary parts.
    Grid { dim: usize, field: GridField },
}

impl ConnectionField {
    /// Constant diagonal skew-Hermitian connection `Φ = i diag(φ)`,
    /// `Ãₖ = i diag(aₖ)`.
    pub fn constant_diagonal(phi: &[f64], a1: &[f64], a2: &[f64]) -> ConnectionField {
        let diag = |d: &[f64]| {
            let mut m = zeros(d.len());
            for (k, &x) in d.iter().enumerate() {
                m[(k, k)] = c64(0.0, x);
            }
            m
        };
        ConnectionField::Constant { phi: diag(phi), a: [diag(a1), diag(a2)] }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConnectionField::Zero { dim } | ConnectionField::Grid { dim, .. } => *dim,
            ConnectionField::Constant { phi, .. } => phi.nrows(),
            ConnectionField::Su2Gaussian { .. } => 2,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ConnectionField::Zero { .. })
    }

    pub fn eval(&self, x: &Point) -> ConnectionSample {
        match self {
            ConnectionField::Zero { dim } => ConnectionSample { phi: zeros(*dim), a: [zeros(*dim), zeros(*dim)] },
            ConnectionField::Constant { phi, a } => ConnectionSample { phi: phi.clone(), a: a.clone() },
            ConnectionField::Su2Gaussian { amplitude, width, center } => {
                let f = amplitude * (-(x - center).norm_squared() / (width * width)).exp();
                let i = c64(0.0, 1.0);
                ConnectionSample {
                    phi: pauli(3) * (i * f),
                    a: [pauli(1) * (i * 0.5 * f), pauli(2) * (i * 0.5 * f)],
                }
            }
            ConnectionField::Grid { dim, field } => {
                let (vals, _, _) = field.eval(x);
                let n2 = dim * dim;
                let block = |b: usize| {
                    CMatrix::from_fn(*dim, *dim, |r, c| {
                        let k = 2 * (b * n2 + r * dim + c);
                        c64(vals[k], vals[k + 1])
                    })
                };
                ConnectionSample { phi: block(0), a: [block(1), block(2)] }
            }
        }
    }
}

/// Selects the sign of the transport equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransportSign {
    /// `dP/ds + 𝒜P = 0`, under which all transform identities are stated.
    #[default]
    Absorbing,
    /// `dP/ds − 𝒜P = 0`.
    Amplifying,
}

#[derive(Clone, Debug)]
pub struct ConnectionData {
    pub field: ConnectionField,
    /// Whether `Φ` and `Ãᵢ` are skew-Hermitian.
    pub unitary: bool,
}

impl ConnectionData {
    pub fn new(field: ConnectionField, unitary: bool) -> ConnectionData {
        ConnectionData { field, unitary }
    }

    pub fn zero(dim: usize) -> ConnectionData {
        ConnectionData::new(ConnectionField::Zero { dim }, true)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Checks the unitary flag against `samples` random points of the domain.
    pub fn validate(&self, system: &MagneticSystem, rng: &mut impl Rng, samples: usize) -> Result<()> {
        if !self.unitary {
            return Ok(());
        }
        for _ in 0..samples {
            let x = system.domain.sample_interior(rng, 0.0);
            let c = self.field.eval(&x);
            let worst = [&c.phi, &c.a[0], &c.a[1]].into_iter().map(skew_hermitian_defect).fold(0.0, f64::max);
            if worst >= 1e-12 {
                return Err(Error::Validation(format!(
                    "connection flagged unitary but not skew-Hermitian at ({}, {}): defect {worst:e}",
                    x.x, x.y
                )));
            }
        }
        Ok(())
    }

    /// `𝒜(x, v) = Φ(x) + Ã_x(v) − Φ(x) ω_x(v)`.
    pub fn attenuation(&self, system: &MagneticSystem, x: &Point, v: &Tangent) -> CMatrix {
        let c = self.field.eval(x);
        let w = system.omega_at(x, v);
        &c.phi * c64(1.0 - w, 0.0) + &c.a[0] * c64(v.x, 0.0) + &c.a[1] * c64(v.y, 0.0)
    }

    /// Attenuation along a trace, at the samples and at the interval midpoints.
    pub fn attenuation_path(&self, system: &MagneticSystem, trace: &GeodesicTrace) -> MatrixPath {
        let mids = trace.midpoints(system);
        MatrixPath {
            nodes: trace.samples.iter().map(|p| self.attenuation(system, &p.x, &p.v)).collect(),
            mids: mids.iter().map(|p| self.attenuation(system, &p.x, &p.v)).collect(),
            widths: trace.samples.windows(2).map(|w| w[1].s - w[0].s).collect(),
        }
    }
}

/// Transport samples `P(sᵢ)` and their inverses `R(sᵢ) = P(sᵢ)⁻¹`, the latter
/// from the adjoint equation rather than matrix inversion.
#[derive(Clone, Debug)]
pub struct TransportMatrix {
    pub s: Vec<f64>,
    pub p: Vec<CMatrix>,
    pub inv: Vec<CMatrix>,
}

impl TransportMatrix {
    pub fn ensure_aligned(&self, trace: &GeodesicTrace) -> Result<()> {
        if self.s.len() != trace.len() || self.s.iter().zip(&trace.samples).any(|(a, b)| *a != b.s) {
            return Err(Error::GridMismatch(format!(
                "transport has {} samples, trace has {}",
                self.s.len(),
                trace.len()
            )));
        }
        Ok(())
    }

    pub fn last(&self) -> &CMatrix {
        self.p.last().expect("transport has a start sample")
    }

    /// `max ‖P†P − Id‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let id = identity(self.p[0].nrows());
        self.p.iter().map(|p| frobenius(&(p.adjoint() * p - &id))).fold(0.0, f64::max)
    }

    /// `max ‖R P − Id‖_F`.
    pub fn inverse_defect(&self) -> f64 {
        let id = identity(self.p[0].nrows());
        self.p.iter().zip(&self.inv).map(|(p, r)| frobenius(&(r * p - &id))).fold(0.0, f64::max)
    }
}

/// Solves the transport equation along `trace` with the integrator's own grid.
pub fn parallel_transport(
    system: &MagneticSystem,
    conn: &ConnectionData,
    trace: &GeodesicTrace,
    sign: TransportSign,
) -> TransportMatrix {
    let s = trace.params();
    let n = conn.dim();
    if conn.field.is_zero() {
        let id = identity(n);
        return TransportMatrix { p: vec![id.clone(); s.len()], inv: vec![id; s.len()], s };
    }
    let path = conn.attenuation_path(system, trace);
    // generator M of dP/ds = MP; the inverse solves dR/ds = −RM
    let (forward, adjoint) = match sign {
        TransportSign::Absorbing => (path.negated(), path),
        TransportSign::Amplifying => {
            let neg = path.negated();
            (path, neg)
        }
    };
    TransportMatrix {
        p: ode::propagate_left(&forward, identity(n)),
        inv: ode::propagate_right(&adjoint, identity(n)),
        s,
    }
}

/// `‖P(s + s′, p) − P(s′, φ_s(p)) P(s, p)‖_F` with each factor from its own
/// integration.
pub fn cocycle_defect(
    system: &MagneticSystem,
    conn: &ConnectionData,
    p: &PhasePoint,
    s: f64,
    s_prime: f64,
    opts: &FlowOptions,
) -> Result<f64> {
    let kappa = flow::exit_time(system, p, opts)?;
    if s < 0.0 || s_prime < 0.0 || s + s_prime > kappa + 1e-12 {
        return Err(Error::OutOfInterval { value: s + s_prime, limit: kappa });
    }
    let transport_to = |start: &PhasePoint, stop: f64| -> Result<(CMatrix, PhasePoint)> {
        let trace = flow::integrate_until(system, start, opts, stop)?;
        let tm = parallel_transport(system, conn, &trace, TransportSign::Absorbing);
        Ok((tm.last().clone(), trace.end()))
    };
    let (whole, _) = transport_to(p, s + s_prime)?;
    let (first, mid) = transport_to(p, s)?;
    let (second, _) = transport_to(&mid, s_prime)?;
    Ok(frobenius(&(whole - second * first)))
}
