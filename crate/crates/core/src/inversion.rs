//! Regularized least-squares reconstruction of a matrix-valued potential
//! from its non-Abelian X-ray transform.
//!
//! The forward map is cached per (scene, fan) as one sparse block row per ray:
//! for each unknown node, an `N² × N²` block acting on the node's matrix
//! entries. Blocks accumulate `w · c · (R ⊗ Pᵀ)` over the ray samples, where
//! `w` is the quadrature weight, `c` the interpolation weight, and `P`, `R`
//! the transport and its inverse.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use crate::connection::ConnectionData;
use crate::error::{Error, Result};
use crate::flow::FlowOptions;
use crate::linalg::{c64, CMatrix, Complex64};
use crate::manifold::MagneticSystem;
use crate::par::Exec;
use crate::transform::{BoundaryFan, RayGeometry, Sinogram, VolumeField};

/// Adjoint partial sums are formed over this many contiguous ray ranges and
/// added in order, so results do not depend on the worker count.
const ADJOINT_CHUNKS: usize = 64;

#[derive(Clone, Debug)]
struct RayRow {
    /// `(unknown index, N² × N² block, row-major)`
    blocks: Vec<(usize, Vec<Complex64>)>,
}

#[derive(Clone, Debug)]
pub struct LinearForwardMap {
    pub dim: usize,
    pub fan: BoundaryFan,
    pub scene_hash: u64,
    pub step: f64,
    /// Grid and support mask of the unknown.
    pub template: VolumeField,
    unknowns: Vec<usize>,
    rows: Vec<RayRow>,
}

impl LinearForwardMap {
    pub fn build(
        system: &MagneticSystem,
        conn: &ConnectionData,
        template: &VolumeField,
        fan: &BoundaryFan,
        opts: &FlowOptions,
        scene_hash: u64,
        exec: Exec,
    ) -> Result<LinearForwardMap> {
        let n = conn.dim();
        if template.dim != n {
            return Err(Error::DimensionMismatch { expected: n, found: template.dim });
        }
        let unknowns = template.unknowns();
        let mut slot = vec![usize::MAX; template.grid.len()];
        for (k, &i) in unknowns.iter().enumerate() {
            slot[i] = k;
        }
        let n2 = n * n;
        let rows = exec.try_map(fan.len(), |idx| -> Result<RayRow> {
            let geom = RayGeometry::new(system, conn, &fan.phase_point(system, idx), opts)?;
            let mut acc: BTreeMap<usize, Vec<Complex64>> = BTreeMap::new();
            let mut kron = vec![c64(0.0, 0.0); n2 * n2];
            for (i, smp) in geom.trace.samples.iter().enumerate() {
                let (p, r) = (&geom.transport.p[i], &geom.transport.inv[i]);
                let w = geom.weights[i];
                // (R E_kl P)_rc = R_rk P_lc
                for rr in 0..n {
                    for cc in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                kron[(rr * n + cc) * n2 + k * n + l] = r[(rr, k)] * p[(l, cc)] * w;
                            }
                        }
                    }
                }
                template.for_each_weight(&smp.x, |node, c| {
                    if slot[node] != usize::MAX {
                        let block = acc.entry(slot[node]).or_insert_with(|| vec![c64(0.0, 0.0); n2 * n2]);
                        for (b, k) in block.iter_mut().zip(&kron) {
                            *b += k * c;
                        }
                    }
                });
            }
            Ok(RayRow { blocks: acc.into_iter().collect() })
        })?;
        Ok(LinearForwardMap {
            dim: n,
            fan: *fan,
            scene_hash,
            step: opts.step,
            template: VolumeField { values: vec![CMatrix::zeros(n, n); template.grid.len()], ..template.clone() },
            unknowns,
            rows,
        })
    }

    pub fn unknown_len(&self) -> usize {
        self.unknowns.len() * self.dim * self.dim
    }

    pub fn data_len(&self) -> usize {
        self.rows.len() * self.dim * self.dim
    }

    /// Number of stored `N² × N²` blocks.
    pub fn block_count(&self) -> usize {
        self.rows.iter().map(|r| r.blocks.len()).sum()
    }

    pub fn forward_vec(&self, x: &[Complex64], exec: Exec) -> Vec<Complex64> {
        let n2 = self.dim * self.dim;
        exec.map(self.rows.len(), |ray| {
            let mut out = vec![c64(0.0, 0.0); n2];
            for (u, block) in &self.rows[ray].blocks {
                let xu = &x[u * n2..(u + 1) * n2];
                for (o, row) in out.iter_mut().zip(block.chunks_exact(n2)) {
                    *o += row.iter().zip(xu).map(|(a, b)| a * b).sum::<Complex64>();
                }
            }
            out
        })
        .concat()
    }

    pub fn adjoint_vec(&self, y: &[Complex64], exec: Exec) -> Vec<Complex64> {
        let n2 = self.dim * self.dim;
        let len = self.unknown_len();
        let rays = self.rows.len();
        let chunks = ADJOINT_CHUNKS.min(rays.max(1));
        let partials = exec.map(chunks, |c| {
            let mut acc = vec![c64(0.0, 0.0); len];
            for ray in (c * rays / chunks)..((c + 1) * rays / chunks) {
                let yr = &y[ray * n2..(ray + 1) * n2];
                for (u, block) in &self.rows[ray].blocks {
                    let xu = &mut acc[u * n2..(u + 1) * n2];
                    for (row, yv) in block.chunks_exact(n2).zip(yr) {
                        for (x, a) in xu.iter_mut().zip(row) {
                            *x += a.conj() * yv;
                        }
                    }
                }
            }
            acc
        });
        let mut out = vec![c64(0.0, 0.0); len];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    fn check_field(&self, q: &VolumeField) -> Result<()> {
        if q.dim != self.dim || q.grid != self.template.grid || q.mask != self.template.mask {
            return Err(Error::CacheMismatch("volume grid differs from the cached forward map".into()));
        }
        Ok(())
    }

    pub fn check_sinogram(&self, y: &Sinogram) -> Result<()> {
        if y.scene_hash != self.scene_hash {
            return Err(Error::HashMismatch { expected: self.scene_hash, found: y.scene_hash });
        }
        if y.dim != self.dim || y.fan != self.fan {
            return Err(Error::CacheMismatch("sinogram fan or dimension differs from the cached forward map".into()));
        }
        Ok(())
    }

    pub fn forward_apply(&self, q: &VolumeField, exec: Exec) -> Result<Sinogram> {
        self.check_field(q)?;
        let data = self.forward_vec(&q.to_vector(), exec);
        Ok(self.to_sinogram(&data))
    }

    pub fn adjoint_apply(&self, y: &Sinogram, exec: Exec) -> Result<VolumeField> {
        self.check_sinogram(y)?;
        Ok(self.template.from_vector(&self.adjoint_vec(&sinogram_vector(y), exec)))
    }

    pub fn to_sinogram(&self, data: &[Complex64]) -> Sinogram {
        let n = self.dim;
        let values = data.chunks_exact(n * n).map(|c| CMatrix::from_row_slice(n, n, c)).collect();
        Sinogram { dim: n, fan: self.fan, values, scene_hash: self.scene_hash, step: Some(self.step) }
    }

    /// Worst `|⟨Tq, y⟩ − ⟨q, T*y⟩| / (‖q‖‖y‖)` over random pairs.
    pub fn adjoint_test(&self, rng: &mut impl Rng, pairs: usize, exec: Exec) -> f64 {
        let mut rand_vec = |len: usize| -> Vec<Complex64> {
            (0..len).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let q = rand_vec(self.unknown_len());
            let y = rand_vec(self.data_len());
            let lhs = inner(&self.forward_vec(&q, exec), &y);
            let rhs = inner(&q, &self.adjoint_vec(&y, exec));
            worst = worst.max((lhs - rhs).abs() / (norm(&q) * norm(&y)));
        }
        worst
    }
}

pub fn sinogram_vector(y: &Sinogram) -> Vec<Complex64> {
    y.values.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect()
}

/// Real inner product over real and imaginary parts.
fn inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    inner(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CglsOptions {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when `‖T*r − λq‖` falls below `tol` times its initial value.
    pub tol: f64,
}

impl Default for CglsOptions {
    fn default() -> Self {
        CglsOptions { lambda: 1e-6, max_iters: 200, tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionReport {
    pub iterations: usize,
    /// `sqrt(‖Tq − y‖² + λ‖q‖²)` after each iteration, starting from `q = 0`.
    pub residual_history: Vec<f64>,
    pub relative_error: Option<f64>,
    pub lambda: f64,
    pub seconds: f64,
}

/// CGLS on the Tikhonov-regularized normal equations. Unknowns live only on
/// the support mask, so every iterate is already projected onto it.
pub fn cgls_reconstruct(
    map: &LinearForwardMap,
    y: &Sinogram,
    opts: &CglsOptions,
    truth: Option<&VolumeField>,
    exec: Exec,
) -> Result<(VolumeField, ReconstructionReport)> {
    map.check_sinogram(y)?;
    if opts.lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("λ must be non-negative, got {}", opts.lambda)));
    }
    let started = Instant::now();
    let lambda = opts.lambda;
    let b = sinogram_vector(y);
    let mut x = vec![c64(0.0, 0.0); map.unknown_len()];
    let mut r = b.clone();
    let mut s = map.adjoint_vec(&r, exec);
    let mut p = s.clone();
    let mut gamma = inner(&s, &s);
    let gamma0 = gamma;
    let objective = |r: &[Complex64], x: &[Complex64]| (inner(r, r) + lambda * inner(x, x)).sqrt();
    let mut history = vec![objective(&r, &x)];
    let mut rises = 0;
    let mut iterations = 0;
    while iterations < opts.max_iters && gamma > opts.tol * opts.tol * gamma0 && gamma0 > 0.0 {
        let q = map.forward_vec(&p, exec);
        let delta = inner(&q, &q) + lambda * inner(&p, &p);
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        s = map.adjoint_vec(&r, exec);
        for (si, xi) in s.iter_mut().zip(&x) {
            *si -= xi * lambda;
        }
        let next = inner(&s, &s);
        let beta = next / gamma;
        gamma = next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
        iterations += 1;
        let obj = objective(&r, &x);
        rises = if obj > *history.last().unwrap() { rises + 1 } else { 0 };
        history.push(obj);
        if rises >= 10 {
            return Err(Error::Divergence(iterations));
        }
    }
    let field = map.template.from_vector(&x);
    let relative_error = truth.map(|t| {
        let tv = t.to_vector();
        let diff: Vec<Complex64> = x.iter().zip(&tv).map(|(a, b)| a - b).collect();
        norm(&diff) / norm(&tv)
    });
    Ok((
        field,
        ReconstructionReport {
            iterations,
            residual_history: history,
            relative_error,
            lambda,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}
