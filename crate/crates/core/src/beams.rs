//! On-geodesic amplitude equations for Gaussian beams: the transport of the
//! leading amplitude, the first correction `c₁`, and the recovery of
//! `∫ P⁻¹QP ds` from `c₁` at the end of the line.
//!
//! Transport here follows `∂_sP − (A·γ̇)P = 0`, the opposite sign to the
//! connection module.

use rand::Rng;

use crate::connection::ConnectionData;
use crate::error::{Error, Result};
use crate::linalg::{c64, frobenius, identity, zeros, CMatrix, Complex64, Point, Tangent};
use crate::ode::{self, MatrixPath};
use crate::quadrature;
use crate::transform::TimeDependentPotential;

/// On-geodesic data sampled on a uniform half-step grid over `[a, b]`:
/// `2n + 1` samples, even indices at the `n + 1` nodes.
#[derive(Clone, Debug)]
pub struct BeamLine {
    pub a: f64,
    pub b: f64,
    pub steps: usize,
    /// `A·γ̇`
    pub attenuation: Vec<CMatrix>,
    /// `𝔠`
    pub weight: Vec<Complex64>,
    /// `Q∘γ`
    pub potential: Vec<CMatrix>,
    /// Initial vector, `N × 1`.
    pub x0: CMatrix,
}

impl BeamLine {
    pub fn from_fns(
        (a, b): (f64, f64),
        steps: usize,
        attenuation: impl Fn(f64) -> CMatrix,
        weight: impl Fn(f64) -> Complex64,
        potential: impl Fn(f64) -> CMatrix,
        x0: CMatrix,
    ) -> Result<BeamLine> {
        if steps == 0 || b <= a {
            return Err(Error::InvalidParameter(format!("need a < b and steps > 0, got [{a}, {b}] with {steps}")));
        }
        if frobenius(&x0) == 0.0 {
            return Err(Error::InvalidParameter("initial vector must be nonzero".into()));
        }
        let half: Vec<f64> = (0..=2 * steps).map(|k| a + (b - a) * k as f64 / (2 * steps) as f64).collect();
        let line = BeamLine {
            a,
            b,
            steps,
            attenuation: half.iter().map(|&s| attenuation(s)).collect(),
            weight: half.iter().map(|&s| weight(s)).collect(),
            potential: half.iter().map(|&s| potential(s)).collect(),
            x0,
        };
        let n = line.dim();
        if line.attenuation.iter().chain(&line.potential).any(|m| m.nrows() != n || m.ncols() != n) || line.x0.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: line.x0.nrows() });
        }
        Ok(line)
    }

    /// Null line `s ↦ (t₀ + s, x + s·dir)` in flat spacetime, where
    /// `A·γ̇ = Φ + Ã(dir)` and `𝔠 ≡ 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn minkowski(
        conn: &ConnectionData,
        q: &TimeDependentPotential,
        t0: f64,
        start: Point,
        dir: Tangent,
        length: f64,
        steps: usize,
        x0: CMatrix,
    ) -> Result<BeamLine> {
        let dir = dir / dir.norm();
        let at = |s: f64| start + dir * s;
        BeamLine::from_fns(
            (0.0, length),
            steps,
            |s| {
                let c = conn.field.eval(&at(s));
                c.phi + &c.a[0] * c64(dir.x, 0.0) + &c.a[1] * c64(dir.y, 0.0)
            },
            |_| c64(0.0, 0.0),
            |s| q.eval(t0 + s, &at(s)),
            x0,
        )
    }

    /// Smooth random data: every entry a short random trigonometric sum.
    pub fn random(rng: &mut impl Rng, dim: usize, steps: usize) -> BeamLine {
        let length = rng.random_range(0.5..2.0);
        let mut trig = |scale: f64| -> Vec<(f64, f64, Complex64)> {
            (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.5..4.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        c64(rng.random_range(-scale..scale), rng.random_range(-scale..scale)),
                    )
                })
                .collect()
        };
        let eval = |terms: &[(f64, f64, Complex64)], s: f64| terms.iter().map(|(f, p, c)| c * (f * s + p).cos()).sum::<Complex64>();
        let a_entries: Vec<_> = (0..dim * dim).map(|_| trig(0.6)).collect();
        let q_entries: Vec<_> = (0..dim * dim).map(|_| trig(1.0)).collect();
        let w = trig(0.5);
        let x0 = CMatrix::from_fn(dim, 1, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mat = |entries: &[Vec<(f64, f64, Complex64)>], s: f64| CMatrix::from_fn(dim, dim, |r, c| eval(&entries[r * dim + c], s));
        BeamLine::from_fns((0.0, length), steps, |s| mat(&a_entries, s), |s| eval(&w, s), |s| mat(&q_entries, s), x0)
            .expect("random line data is well formed")
    }

    pub fn dim(&self) -> usize {
        self.attenuation[0].nrows()
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.a + self.step() * k as f64).collect()
    }

    fn half_params(&self) -> Vec<f64> {
        (0..=2 * self.steps).map(|k| self.a + self.step() * k as f64 / 2.0).collect()
    }

    fn with_x0(&self, x0: CMatrix) -> BeamLine {
        BeamLine { x0, ..self.clone() }
    }
}

fn path(line: &BeamLine) -> MatrixPath {
    MatrixPath::from_half_grid(&line.attenuation, line.step())
}

/// `P` at the nodes: `∂_sP = (A·γ̇)P`, `P(a) = Id`.
pub fn transport_p(line: &BeamLine) -> Vec<CMatrix> {
    ode::propagate_left(&path(line), identity(line.dim()))
}

/// `P⁻¹` at the nodes from `∂_sR = −R(A·γ̇)`.
pub fn transport_inverse(line: &BeamLine) -> Vec<CMatrix> {
    ode::propagate_right(&path(line).negated(), identity(line.dim()))
}

/// Leading amplitude: `u' + 𝔠u − (A·γ̇)u = 0`, `u(a) = x₀`.
pub fn solve_a00(line: &BeamLine) -> Vec<CMatrix> {
    let n = line.dim();
    let id = identity(n);
    let gen: Vec<CMatrix> = line.attenuation.iter().zip(&line.weight).map(|(a, c)| a - &id * *c).collect();
    ode::propagate_left(&MatrixPath::from_half_grid(&gen, line.step()), line.x0.clone())
}

/// `r(s) = −∫_a^s 𝔠` at the nodes.
pub fn r_weight(line: &BeamLine) -> Vec<Complex64> {
    let neg: Vec<Complex64> = line.weight.iter().map(|c| -c).collect();
    quadrature::cumulative(&line.half_params(), &neg).into_iter().step_by(2).collect()
}

/// `e^{r(s)} P(s) x₀` at the nodes.
pub fn a00_closed_form(line: &BeamLine) -> Vec<CMatrix> {
    transport_p(line).iter().zip(r_weight(line)).map(|(p, r)| p * &line.x0 * r.exp()).collect()
}

/// `c₁' − (A·γ̇)c₁ = Q P x₀`, `c₁(a) = 0`, solved jointly with `u = P x₀`
/// as one `2N` system.
pub fn solve_c1(line: &BeamLine) -> Vec<CMatrix> {
    let n = line.dim();
    let block: Vec<CMatrix> = line
        .attenuation
        .iter()
        .zip(&line.potential)
        .map(|(a, q)| {
            let mut m = CMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(a);
            m.view_mut((n, n), (n, n)).copy_from(a);
            m.view_mut((n, 0), (n, n)).copy_from(q);
            m
        })
        .collect();
    let mut y0 = CMatrix::zeros(2 * n, 1);
    y0.view_mut((0, 0), (n, 1)).copy_from(&line.x0);
    ode::propagate_left(&MatrixPath::from_half_grid(&block, line.step()), y0)
        .into_iter()
        .map(|y| y.rows(n, n).into_owned())
        .collect()
}

/// `P⁻¹ Q P` at the nodes.
fn conjugated(line: &BeamLine) -> Vec<CMatrix> {
    let p = transport_p(line);
    let r = transport_inverse(line);
    (0..=line.steps).map(|k| &r[k] * &line.potential[2 * k] * &p[k]).collect()
}

/// `c₁(s) = P(s) ∫_a^s P⁻¹QP ds′ x₀` by cumulative quadrature.
pub fn c1_closed_form(line: &BeamLine) -> Vec<CMatrix> {
    let running = quadrature::cumulative(&line.nodes(), &conjugated(line));
    transport_p(line).iter().zip(running).map(|(p, i)| p * i * &line.x0).collect()
}

/// `∫_a^b P⁻¹QP ds` by direct quadrature.
pub fn weighted_integral(line: &BeamLine) -> CMatrix {
    quadrature::integrate(&line.nodes(), &conjugated(line))
}

/// Assembles `∫_a^b P⁻¹QP ds` column by column from `P(b)⁻¹c₁(b)` with
/// `x₀ = e₁, …, e_N`.
pub fn recover_weighted_integral(line: &BeamLine) -> CMatrix {
    let n = line.dim();
    let r_end = transport_inverse(line).pop().expect("line has nodes");
    let mut out = zeros(n);
    for k in 0..n {
        let mut e = CMatrix::zeros(n, 1);
        e[(k, 0)] = c64(1.0, 0.0);
        let c1 = solve_c1(&line.with_x0(e)).pop().expect("line has nodes");
        out.set_column(k, &(&r_end * c1).column(0));
    }
    out
}

/// Defects of every identity on one line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamReport {
    /// `sup ‖a₀₀ − e^r P x₀‖`
    pub a00: f64,
    /// `sup ‖c₁ − P∫P⁻¹QP x₀‖`
    pub c1: f64,
    /// `‖P(b)⁻¹c₁(b) − (∫P⁻¹QP) x₀‖`
    pub recovery: f64,
    /// Frobenius error of the basis-sweep matrix against direct quadrature.
    pub matrix: f64,
}

impl BeamReport {
    pub fn worst(&self) -> f64 {
        self.a00.max(self.c1).max(self.recovery).max(self.matrix)
    }
}

pub fn verify(line: &BeamLine) -> BeamReport {
    let sup = |a: &[CMatrix], b: &[CMatrix]| a.iter().zip(b).map(|(x, y)| frobenius(&(x - y))).fold(0.0, f64::max);
    let c1 = solve_c1(line);
    let direct = weighted_integral(line);
    let r_end = transport_inverse(line).pop().expect("line has nodes");
    BeamReport {
        a00: sup(&solve_a00(line), &a00_closed_form(line)),
        c1: sup(&c1, &c1_closed_form(line)),
        recovery: frobenius(&(r_end * c1.last().unwrap() - &direct * &line.x0)),
        matrix: frobenius(&(recover_weighted_integral(line) - direct)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::{parallel_transport, ConnectionField, TransportSign};
    use crate::flow::{integrate_magnetic_geodesic, FlowOptions, PhasePoint};
    use crate::linalg::pauli;
    use crate::manifold::MagneticSystem;
    use crate::transform::{Potential, TimeProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: Complex64, b: Complex64) -> CMatrix {
        CMatrix::from_column_slice(2, 1, &[a, b])
    }

    fn constant_line(a: CMatrix, c: Complex64, q: CMatrix) -> BeamLine {
        BeamLine::from_fns((0.0, 1.5), 300, |_| a.clone(), |_| c, |_| q.clone(), vec2(c64(1.0, 0.0), c64(0.5, -0.5))).unwrap()
    }

    #[test]
    fn trivial_lines() {
        let x0 = vec2(c64(1.0, 0.0), c64(0.5, -0.5));
        let line = constant_line(zeros(2), c64(0.0, 0.0), zeros(2));
        assert!(transport_p(&line).iter().all(|p| *p == identity(2)));
        assert!(solve_a00(&line).iter().all(|u| *u == x0));
        assert!(solve_c1(&line).iter().all(|c| frobenius(c) == 0.0));
        assert_eq!(recover_weighted_integral(&line), zeros(2));

        // 𝔠 ≡ c: scalar exponential decay
        let c = c64(0.7, 0.3);
        let line = constant_line(zeros(2), c, zeros(2));
        for (s, u) in line.nodes().iter().zip(solve_a00(&line)) {
            assert!(frobenius(&(u - &x0 * (-c * s).exp())) < 1e-10);
        }

        // A ≡ 0, Q ≡ D: c₁ = s D x₀ and the recovered matrix is ∫Q
        let d = pauli(1) + pauli(3) * c64(0.0, 0.4);
        let line = constant_line(zeros(2), c64(0.0, 0.0), d.clone());
        for (s, c1) in line.nodes().iter().zip(solve_c1(&line)) {
            assert!(frobenius(&(c1 - &d * &x0 * c64(*s, 0.0))) < 1e-12);
        }
        assert!(frobenius(&(recover_weighted_integral(&line) - &d * c64(1.5, 0.0))) < 1e-12);
    }

    #[test]
    fn constant_transport_is_exponential_with_growing_sign() {
        let c = CMatrix::from_row_slice(2, 2, &[c64(0.1, 0.5), c64(0.3, 0.0), c64(-0.2, 0.1), c64(0.0, -0.4)]);
        let line = constant_line(c.clone(), c64(0.0, 0.0), zeros(2));
        for (s, p) in line.nodes().iter().zip(transport_p(&line)) {
            assert!(frobenius(&(p - (&c * c64(*s, 0.0)).exp())) < 1e-9);
        }
        // the connection-module transport of −C is the same matrix
        let sys = MagneticSystem::euclidean_disk(0.0);
        let conn = ConnectionData::new(ConnectionField::Constant { phi: -&c, a: [zeros(2), zeros(2)] }, false);
        let trace = integrate_magnetic_geodesic(&sys, &PhasePoint::from_fan(&sys, 0.3, 0.0), &FlowOptions::default()).unwrap();
        let tm = parallel_transport(&sys, &conn, &trace, TransportSign::Absorbing);
        let kappa = trace.exit_time;
        assert!(frobenius(&(tm.last() - (&c * c64(kappa, 0.0)).exp())) < 1e-9);
    }

    #[test]
    fn random_lines_satisfy_every_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let line = BeamLine::random(&mut rng, 2, 400);
            let rep = verify(&line);
            assert!(rep.a00 < 1e-8, "{rep:?}");
            assert!(rep.c1 < 1e-8, "{rep:?}");
            assert!(rep.recovery < 1e-7 && rep.matrix < 1e-7, "{rep:?}");
        }
    }

    #[test]
    fn minkowski_line() {
        let conn = ConnectionData::new(
            ConnectionField::Su2Gaussian { amplitude: 1.2, width: 0.5, center: Point::new(0.2, 0.0) },
            true,
        );
        let q = TimeDependentPotential {
            spatial: Potential::Bumps(vec![crate::transform::Bump { center: Point::zeros(), width: 0.4, coeff: pauli(2) }]),
            profile: TimeProfile::Harmonic { tau: 1.0 },
        };
        let line = BeamLine::minkowski(&conn, &q, 0.3, Point::new(-1.0, 0.1), Tangent::new(1.0, 0.2), 2.0, 400, vec2(c64(1.0, 0.0), c64(0.0, 0.0))).unwrap();
        let rep = verify(&line);
        assert!(rep.worst() < 1e-7, "{rep:?}");
        // unitary connection: r ≡ 0 and |a₀₀| is conserved
        let u = solve_a00(&line);
        assert!(u.iter().all(|v| (frobenius(v) - 1.0).abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(BeamLine::from_fns((0.0, 1.0), 10, |_| zeros(2), |_| c64(0.0, 0.0), |_| zeros(2), CMatrix::zeros(2, 1)).is_err());
        assert!(BeamLine::from_fns((1.0, 0.0), 10, |_| zeros(2), |_| c64(0.0, 0.0), |_| zeros(2), vec2(c64(1.0, 0.0), c64(0.0, 0.0))).is_err());
    }
}
