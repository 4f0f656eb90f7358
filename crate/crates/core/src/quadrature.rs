//! Composite Simpson quadrature on integrator grids.
//!
//! Grids are uniform except possibly for a short final interval (the step that
//! lands on the boundary). Equal-width interval pairs use Simpson's rule; any
//! interval that cannot be paired is integrated with the exact integral of the
//! quadratic through it and one neighbouring node.

use crate::linalg::{CMatrix, Complex64};

/// Values that can be accumulated by a quadrature rule.
pub trait Accumulate: Clone {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, w: f64, other: &Self);
}

impl Accumulate for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += w * other;
    }
}

impl Accumulate for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * w;
    }
}

impl Accumulate for CMatrix {
    fn zero_like(&self) -> Self {
        CMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        crate::linalg::axpy(self, w, other);
    }
}

const PAIR_TOL: f64 = 1e-9;

/// Weights of `∫_a^b q(x) dx` where `q` interpolates at the three `nodes`.
pub fn interval_weights(nodes: [f64; 3], a: f64, b: f64) -> [f64; 3] {
    let c = nodes[1];
    let (u0, u2) = (nodes[0] - c, nodes[2] - c);
    let (lo, hi) = (a - c, b - c);
    let m1 = (hi * hi - lo * lo) / 2.0;
    let m2 = (hi * hi * hi - lo * lo * lo) / 3.0;
    let m0 = hi - lo;
    [
        (m2 - u2 * m1) / (u0 * (u0 - u2)),
        (m2 - (u0 + u2) * m1 + u0 * u2 * m0) / (u0 * u2),
        (m2 - u0 * m1) / (u2 * (u2 - u0)),
    ]
}

enum Piece {
    Pair(usize),
    Single { interval: usize, nodes: [usize; 3] },
    Trapezoid(usize),
}

fn pieces(s: &[f64]) -> Vec<Piece> {
    let m = s.len().saturating_sub(1);
    let mut out = Vec::with_capacity(m / 2 + 2);
    let mut i = 0;
    while i < m {
        let w0 = s[i + 1] - s[i];
        if i + 2 <= m && ((s[i + 2] - s[i + 1]) - w0).abs() <= PAIR_TOL * w0.abs() {
            out.push(Piece::Pair(i));
            i += 2;
        } else if m == 1 || (i == 0 && (s[2] - s[1]) < 0.25 * w0) {
            // a near-coincident third node makes the quadratic ill-conditioned
            out.push(Piece::Trapezoid(i));
            i += 1;
        } else {
            let nodes = if i >= 1 { [i - 1, i, i + 1] } else { [0, 1, 2] };
            out.push(Piece::Single { interval: i, nodes });
            i += 1;
        }
    }
    out
}

/// Quadrature weights such that `∫ f ≈ Σ wᵢ f(sᵢ)`.
pub fn weights(s: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; s.len()];
    for piece in pieces(s) {
        match piece {
            Piece::Pair(i) => {
                let h = (s[i + 2] - s[i]) / 2.0;
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            Piece::Single { interval, nodes } => {
                let ws = interval_weights(
                    [s[nodes[0]], s[nodes[1]], s[nodes[2]]],
                    s[interval],
                    s[interval + 1],
                );
                for (k, &n) in nodes.iter().enumerate() {
                    w[n] += ws[k];
                }
            }
            Piece::Trapezoid(i) => {
                let h = s[i + 1] - s[i];
                w[i] += h / 2.0;
                w[i + 1] += h / 2.0;
            }
        }
    }
    w
}

pub fn integrate<T: Accumulate>(s: &[f64], f: &[T]) -> T {
    assert_eq!(s.len(), f.len());
    let mut acc = f[0].zero_like();
    for (w, v) in weights(s).iter().zip(f) {
        acc.add_scaled(*w, v);
    }
    acc
}

/// Running integral `∫_{s₀}^{sᵢ} f` at every node.
pub fn cumulative<T: Accumulate>(s: &[f64], f: &[T]) -> Vec<T> {
    assert_eq!(s.len(), f.len());
    let mut out = Vec::with_capacity(s.len());
    let mut acc = f[0].zero_like();
    out.push(acc.clone());
    let add = |acc: &mut T, nodes: [usize; 3], ws: [f64; 3]| {
        for k in 0..3 {
            acc.add_scaled(ws[k], &f[nodes[k]]);
        }
    };
    for piece in pieces(s) {
        match piece {
            Piece::Pair(i) => {
                let nodes = [i, i + 1, i + 2];
                let t = [s[i], s[i + 1], s[i + 2]];
                let mut half = acc.clone();
                add(&mut half, nodes, interval_weights(t, s[i], s[i + 1]));
                out.push(half);
                let h = (s[i + 2] - s[i]) / 2.0;
                add(&mut acc, nodes, [h / 3.0, 4.0 * h / 3.0, h / 3.0]);
                out.push(acc.clone());
            }
            Piece::Single { interval, nodes } => {
                let t = [s[nodes[0]], s[nodes[1]], s[nodes[2]]];
                add(
                    &mut acc,
                    nodes,
                    interval_weights(t, s[interval], s[interval + 1]),
                );
                out.push(acc.clone());
            }
            Piece::Trapezoid(i) => {
                let h = s[i + 1] - s[i];
                acc.add_scaled(h / 2.0, &f[i]);
                acc.add_scaled(h / 2.0, &f[i + 1]);
                out.push(acc.clone());
            }
        }
    }
    out
}
