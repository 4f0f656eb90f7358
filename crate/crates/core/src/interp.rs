//! Bicubic interpolation on regular grids.
//!
//! Both flavours are tensor-product cubic Hermite interpolants whose node
//! slopes come from central differences: second-order slopes give the
//! Catmull–Rom kernel (4-node footprint per axis), fourth-order slopes give a
//! 6-node footprint with derivative error O(h³). Indices are clamped at the
//! grid edges.

use crate::linalg::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlopeOrder {
    Second,
    Fourth,
}

/// A regular node lattice, row-major with `x` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2 {
    pub origin: Point,
    pub spacing: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Grid2 {
    /// Lattice with `nx × ny` nodes spanning `[lo, hi]` inclusive.
    pub fn spanning(lo: Point, hi: Point, nx: usize, ny: usize) -> Grid2 {
        assert!(nx >= 2 && ny >= 2);
        Grid2 {
            origin: lo,
            spacing: [(hi.x - lo.x) / (nx - 1) as f64, (hi.y - lo.y) / (ny - 1) as f64],
            nx,
            ny,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.spacing[0],
            self.origin.y + j as f64 * self.spacing[1],
        )
    }

    pub fn node_of(&self, idx: usize) -> Point {
        self.node(idx % self.nx, idx / self.nx)
    }

    pub fn stencil(&self, x: &Point, order: SlopeOrder) -> Stencil2 {
        Stencil2 {
            x: Stencil1::new(x.x, self.origin.x, self.spacing[0], self.nx, order),
            y: Stencil1::new(x.y, self.origin.y, self.spacing[1], self.ny, order),
        }
    }
}

/// One-dimensional interpolation weights over a contiguous run of nodes.
#[derive(Clone, Copy, Debug)]
pub struct Stencil1 {
    /// Node indices (already clamped).
    pub nodes: [usize; 6],
    pub weights: [f64; 6],
    pub dweights: [f64; 6],
    pub len: usize,
}

impl Stencil1 {
    pub fn new(x: f64, origin: f64, h: f64, n: usize, order: SlopeOrder) -> Stencil1 {
        let u = (x - origin) / h;
        let base = (u.floor() as isize).clamp(0, n as isize - 2);
        let t = u - base as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let (h00, h10, h01, h11) = (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2);
        let (d00, d10, d01, d11) = (6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t);

        // slope at node j (in units of h) as weights over offsets relative to j
        let slope: &[(isize, f64)] = match order {
            SlopeOrder::Second => &[(-1, -0.5), (1, 0.5)],
            SlopeOrder::Fourth => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
        };
        let (first, len) = match order {
            SlopeOrder::Second => (-1isize, 4usize),
            SlopeOrder::Fourth => (-2isize, 6usize),
        };
        let mut weights = [0.0; 6];
        let mut dweights = [0.0; 6];
        let mut put = |off: isize, w: f64, dw: f64| {
            let k = (off - first) as usize;
            weights[k] += w;
            dweights[k] += dw / h;
        };
        put(0, h00, d00);
        put(1, h01, d01);
        for &(o, c) in slope {
            put(o, h10 * c, d10 * c);
            put(1 + o, h11 * c, d11 * c);
        }
        let mut nodes = [0usize; 6];
        for (k, node) in nodes.iter_mut().enumerate().take(len) {
            *node = (base + first + k as isize).clamp(0, n as isize - 1) as usize;
        }
        Stencil1 { nodes, weights, dweights, len }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Stencil2 {
    pub x: Stencil1,
    pub y: Stencil1,
}

impl Stencil2 {
    /// Visits `(flat node index, value weight, ∂x weight, ∂y weight)`.
    pub fn for_each(&self, nx: usize, mut f: impl FnMut(usize, f64, f64, f64)) {
        for b in 0..self.y.len {
            let (wy, dwy) = (self.y.weights[b], self.y.dweights[b]);
            let row = self.y.nodes[b] * nx;
            for a in 0..self.x.len {
                let (wx, dwx) = (self.x.weights[a], self.x.dweights[a]);
                f(row + self.x.nodes[a], wx * wy, dwx * wy, wx * dwy);
            }
        }
    }
}

/// Real-valued multi-component field on a grid with value and gradient
/// evaluation (fourth-order slopes).
#[derive(Clone, Debug)]
pub struct GridField {
    pub grid: Grid2,
    /// `components[c][node]`
    pub components: Vec<Vec<f64>>,
}

impl GridField {
    pub fn sample(grid: Grid2, ncomp: usize, f: impl Fn(&Point) -> Vec<f64>) -> GridField {
        let mut components = vec![Vec::with_capacity(grid.len()); ncomp];
        for idx in 0..grid.len() {
            let vals = f(&grid.node_of(idx));
            for (c, v) in vals.into_iter().enumerate() {
                components[c].push(v);
            }
        }
        GridField { grid, components }
    }

    /// Returns `(values, ∂x values, ∂y values)` per component.
    pub fn eval(&self, x: &Point) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let st = self.grid.stencil(x, SlopeOrder::Fourth);
        let nc = self.components.len();
        let (mut v, mut dx, mut dy) = (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
        st.for_each(self.grid.nx, |idx, w, wx, wy| {
            for c in 0..nc {
                let f = self.components[c][idx];
                v[c] += w * f;
                dx[c] += wx * f;
                dy[c] += wy * f;
            }
        });
        (v, dx, dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity_and_reproduce_linears() {
        for order in [SlopeOrder::Second, SlopeOrder::Fourth] {
            let st = Stencil1::new(0.437, -1.0, 0.1, 40, order);
            let sum: f64 = st.weights[..st.len].iter().sum();
            let dsum: f64 = st.dweights[..st.len].iter().sum();
            assert!((sum - 1.0).abs() < 1e-13);
            assert!(dsum.abs() < 1e-11);
            let lin: f64 = (0..st.len).map(|k| st.weights[k] * (-1.0 + 0.1 * st.nodes[k] as f64)).sum();
            assert!((lin - 0.437).abs() < 1e-13);
        }
    }

    #[test]
    fn fourth_order_slopes_resolve_smooth_gradients() {
        let grid = Grid2::spanning(Point::new(-1.2, -1.2), Point::new(1.2, 1.2), 160, 160);
        let f = |p: &Point| vec![(1.3 * p.x).sin() * (0.7 * p.y).cos()];
        let field = GridField::sample(grid, 1, f);
        let x = Point::new(0.3137, -0.2719);
        let (v, dx, dy) = field.eval(&x);
        assert!((v[0] - f(&x)[0]).abs() < 1e-8);
        assert!((dx[0] - 1.3 * (1.3 * x.x).cos() * (0.7 * x.y).cos()).abs() < 1e-6);
        assert!((dy[0] + 0.7 * (1.3 * x.x).sin() * (0.7 * x.y).sin()).abs() < 1e-6);
    }

    #[test]
    fn interpolates_nodes_exactly() {
        let grid = Grid2::spanning(Point::new(0.0, 0.0), Point::new(1.0, 1.0), 11, 11);
        let field = GridField::sample(grid.clone(), 1, |p| vec![p.x * p.x + 3.0 * p.y]);
        let node = grid.node(4, 7);
        let (v, _, _) = field.eval(&node);
        assert!((v[0] - (node.x * node.x + 3.0 * node.y)).abs() < 1e-14);
    }
}
