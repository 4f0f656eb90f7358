//! Classical fourth-order Runge–Kutta for linear matrix ODEs whose generator
//! is known at the grid nodes and interval midpoints.

use crate::linalg::{CMatrix, Complex64};

/// Generator samples along a (possibly non-uniform) grid.
#[derive(Clone, Debug)]
pub struct MatrixPath {
    /// Values at the `m + 1` grid nodes.
    pub nodes: Vec<CMatrix>,
    /// Values at the `m` interval midpoints.
    pub mids: Vec<CMatrix>,
    /// The `m` interval widths.
    pub widths: Vec<f64>,
}

impl MatrixPath {
    pub fn steps(&self) -> usize {
        self.widths.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].nrows()
    }

    pub fn negated(&self) -> MatrixPath {
        MatrixPath {
            nodes: self.nodes.iter().map(|m| -m).collect(),
            mids: self.mids.iter().map(|m| -m).collect(),
            widths: self.widths.clone(),
        }
    }

    /// Builds the path from samples on a uniform half-step grid (`2m + 1`
    /// samples, even indices are nodes, odd indices midpoints).
    pub fn from_half_grid(samples: &[CMatrix], step: f64) -> MatrixPath {
        assert!(samples.len() % 2 == 1, "half grid needs an odd sample count");
        let m = samples.len() / 2;
        MatrixPath {
            nodes: samples.iter().step_by(2).cloned().collect(),
            mids: samples.iter().skip(1).step_by(2).cloned().collect(),
            widths: vec![step; m],
        }
    }
}

fn rk4_left(a0: &CMatrix, am: &CMatrix, a1: &CMatrix, y: &CMatrix, w: f64) -> CMatrix {
    let hw = Complex64::new(w / 2.0, 0.0);
    let fw = Complex64::new(w, 0.0);
    let k1 = a0 * y;
    let k2 = am * (y + &k1 * hw);
    let k3 = am * (y + &k2 * hw);
    let k4 = a1 * (y + &k3 * fw);
    y + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(w / 6.0, 0.0)
}

fn rk4_right(a0: &CMatrix, am: &CMatrix, a1: &CMatrix, y: &CMatrix, w: f64) -> CMatrix {
    let hw = Complex64::new(w / 2.0, 0.0);
    let fw = Complex64::new(w, 0.0);
    let k1 = y * a0;
    let k2 = (y + &k1 * hw) * am;
    let k3 = (y + &k2 * hw) * am;
    let k4 = (y + &k3 * fw) * a1;
    y + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(w / 6.0, 0.0)
}

/// Solves `dY/ds = M(s) Y`, `Y(0) = y0`, returning `Y` at every node.
pub fn propagate_left(path: &MatrixPath, y0: CMatrix) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(path.steps() + 1);
    out.push(y0);
    for i in 0..path.steps() {
        let next = rk4_left(
            &path.nodes[i],
            &path.mids[i],
            &path.nodes[i + 1],
            &out[i],
            path.widths[i],
        );
        out.push(next);
    }
    out
}

/// Solves `dY/ds = Y M(s)`, `Y(0) = y0`, returning `Y` at every node.
pub fn propagate_right(path: &MatrixPath, y0: CMatrix) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(path.steps() + 1);
    out.push(y0);
    for i in 0..path.steps() {
        let next = rk4_right(
            &path.nodes[i],
            &path.mids[i],
            &path.nodes[i + 1],
            &out[i],
            path.widths[i],
        );
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, frobenius, identity};

    #[test]
    fn constant_generator_matches_exponential() {
        let c = CMatrix::from_row_slice(2, 2, &[c64(0.1, 0.3), c64(-0.7, 0.0), c64(0.2, 0.1), c64(0.0, -0.4)]);
        let h = 1e-2;
        let m = 100;
        let path = MatrixPath {
            nodes: vec![c.clone(); m + 1],
            mids: vec![c.clone(); m],
            widths: vec![h; m],
        };
        let left = propagate_left(&path, identity(2));
        let right = propagate_right(&path.negated(), identity(2));
        let exact = c.clone().exp();
        assert!(frobenius(&(left[m].clone() - &exact)) < 1e-9);
        // right solution of the negated system is the inverse
        assert!(frobenius(&(&right[m] * &left[m] - identity(2))) < 1e-9);
    }
}
