//! Gradient-domain image reconstruction: solve the Poisson equation
//! lap(u) = div(g) with homogeneous Neumann walls and pin the free mean.
//!
//! Convention, stated once and relied on everywhere: `gradients` takes
//! forward differences (gx[x] = I[x+1] - I[x], last column/row zero) and
//! `divergence` takes the adjoint backward differences with zero flux off
//! the grid. Composed, they give exactly the standard 5-point Neumann
//! Laplacian, so reconstructing from exact forward gradients returns the
//! original image up to the anchored constant and solver tolerance, with
//! no half-pixel shift. Mixing in a different gradient stencil without
//! adjusting for its sample locations is how shifted reconstructions
//! happen; see `aop::sd_to_gradient` for the difference-plane case.

use crate::error::{Error, Result};
use crate::plane::Plane;

#[derive(Clone, Debug)]
pub struct GradientField {
    pub gx: Plane,
    pub gy: Plane,
}

impl GradientField {
    pub fn new(gx: Plane, gy: Plane) -> Self {
        assert_eq!(gx.width(), gy.width());
        assert_eq!(gx.height(), gy.height());
        GradientField { gx, gy }
    }

    pub fn width(&self) -> usize {
        self.gx.width()
    }

    pub fn height(&self) -> usize {
        self.gx.height()
    }

    pub fn scaled(&self, s: f64) -> GradientField {
        GradientField { gx: self.gx.scaled(s), gy: self.gy.scaled(s) }
    }
}

/// Forward-difference gradients; last column of gx and last row of gy are
/// zero by convention.
pub fn gradients(img: &Plane) -> GradientField {
    let w = img.width();
    let h = img.height();
    let gx = Plane::from_fn(w, h, |x, y| {
        if x + 1 < w {
            img.get(x + 1, y) - img.get(x, y)
        } else {
            0.0
        }
    });
    let gy = Plane::from_fn(w, h, |x, y| {
        if y + 1 < h {
            img.get(x, y + 1) - img.get(x, y)
        } else {
            0.0
        }
    });
    GradientField::new(gx, gy)
}

/// Backward-difference divergence, the negative adjoint of `gradients`:
/// div[x] = gx[x] - gx[x-1] with zero contributions from off-grid, plus
/// the same in y. A constant field therefore has zero divergence except
/// along the low borders where the flux enters.
pub fn divergence(g: &GradientField) -> Plane {
    let w = g.width();
    let h = g.height();
    Plane::from_fn(w, h, |x, y| {
        let dx = g.gx.get(x, y) - if x > 0 { g.gx.get(x - 1, y) } else { 0.0 };
        let dy = g.gy.get(x, y) - if y > 0 { g.gy.get(x, y - 1) } else { 0.0 };
        dx + dy
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual |r| / |b|.
    pub residual: f64,
}

/// Conjugate gradients with Jacobi preconditioning on the 5-point Neumann
/// Laplacian. The system is singular along constants, so the right-hand
/// side is projected to zero mean and the answer's mean is set to
/// `anchor_mean`. Converges to a relative residual of 1e-8 or fails after
/// 10 * W * H iterations.
pub fn poisson_reconstruct(g: &GradientField, anchor_mean: f64) -> Result<(Plane, SolveStats)> {
    const TOL: f64 = 1e-8;
    let w = g.width();
    let h = g.height();
    let n = w * h;
    if n == 0 {
        return Err(Error::config("empty gradient field"));
    }

    // lap(u) = div(g); with A = -lap positive semidefinite, solve A u = -div(g)
    let d = divergence(g);
    let mut b: Vec<f64> = d.data().iter().map(|v| -v).collect();
    let mean_b = b.iter().sum::<f64>() / n as f64;
    for v in &mut b {
        *v -= mean_b;
    }
    let bnorm = norm(&b);
    if bnorm < 1e-300 {
        let stats = SolveStats { iterations: 0, residual: 0.0 };
        return Ok((Plane::filled(w, h, anchor_mean), stats));
    }

    // Jacobi diagonal: the number of in-grid neighbors
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let x = i % w;
            let y = i / w;
            let mut deg = 0.0;
            if x > 0 {
                deg += 1.0;
            }
            if x + 1 < w {
                deg += 1.0;
            }
            if y > 0 {
                deg += 1.0;
            }
            if y + 1 < h {
                deg += 1.0;
            }
            if deg > 0.0 {
                1.0 / deg
            } else {
                1.0
            }
        })
        .collect();

    let max_iters = 10 * n;
    let mut x = vec![0.0f64; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut q = vec![0.0f64; n];
    let mut residual = 1.0;

    for it in 0..max_iters {
        apply_neumann_laplacian(w, h, &p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            // numerically lost positive definiteness inside the zero-mean
            // subspace; report where we stopped
            return Err(Error::NoConvergence { residual, iterations: it });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if it % 64 == 63 {
            // keep the residual in the zero-mean range space despite drift
            let m = r.iter().sum::<f64>() / n as f64;
            for v in &mut r {
                *v -= m;
            }
        }
        residual = norm(&r) / bnorm;
        if residual <= TOL {
            let mut out = Plane::from_vec(w, h, x);
            let shift = anchor_mean - out.mean();
            out.add_scalar(shift);
            return Ok((out, SolveStats { iterations: it + 1, residual }));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Err(Error::NoConvergence { residual, iterations: max_iters })
}

/// q = A p with A = -lap, homogeneous Neumann: each pixel accumulates
/// (p[self] - p[neighbor]) over in-grid neighbors.
fn apply_neumann_laplacian(w: usize, h: usize, p: &[f64], q: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            let c = p[i];
            let mut acc = 0.0;
            if x > 0 {
                acc += c - p[i - 1];
            }
            if x + 1 < w {
                acc += c - p[i + 1];
            }
            if y > 0 {
                acc += c - p[i - w];
            }
            if y + 1 < h {
                acc += c - p[i + w];
            }
            q[i] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
