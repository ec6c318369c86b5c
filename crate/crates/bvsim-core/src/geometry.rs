//! Planar projective transforms. Matrices are row-major 3x3 and kept
//! normalized so the bottom-right entry is 1; that makes equality and
//! hashing of configs well defined.

use crate::error::{Error, Result};
use crate::plane::Plane;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Homography { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] }
    }

    /// Builds from row-major entries, normalizing so m[8] == 1.
    pub fn from_rows(m: [f64; 9]) -> Result<Self> {
        if m[8].abs() < 1e-12 {
            return Err(Error::Singular("homography with zero scale entry".into()));
        }
        let s = 1.0 / m[8];
        let mut n = m;
        for v in &mut n {
            *v *= s;
        }
        let h = Homography { m: n };
        // reject non-invertible up front so inverse() cannot fail later
        h.inverse()?;
        Ok(h)
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { m: [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0] }
    }

    pub fn rotation_about(cx: f64, cy: f64, angle_rad: f64) -> Self {
        let (s, c) = angle_rad.sin_cos();
        Homography {
            m: [
                c,
                -s,
                cx - c * cx + s * cy,
                s,
                c,
                cy - s * cx - c * cy,
                0.0,
                0.0,
                1.0,
            ],
        }
    }

    /// Mild perspective tilt anchored at (cx, cy): points far from the
    /// anchor along +y foreshorten as if the plane were tipped by
    /// `tilt_deg` at a focal length of `focal_px`. Degenerates to identity
    /// at zero tilt.
    pub fn oblique(cx: f64, cy: f64, tilt_deg: f64, focal_px: f64) -> Self {
        let py = tilt_deg.to_radians().tan() / focal_px.max(1.0);
        // T(c) * P * T(-c), normalized
        let p = Homography { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, py, 1.0] };
        let t_back = Homography::translation(cx, cy);
        let t_fwd = Homography::translation(-cx, -cy);
        t_back.compose(&p).compose(&t_fwd)
    }

    /// self ∘ other: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        let a = &self.m;
        let b = &other.m;
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[r * 3 + c] =
                    a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c] + a[r * 3 + 2] * b[6 + c];
            }
        }
        if m[8].abs() > 1e-12 {
            let s = 1.0 / m[8];
            for v in &mut m {
                *v *= s;
            }
        }
        Homography { m }
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = &self.m;
        let det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6]);
        if det.abs() < 1e-12 {
            return Err(Error::Singular(format!("homography determinant {det:.3e}")));
        }
        let inv_det = 1.0 / det;
        let adj = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        let mut out = [0.0; 9];
        for i in 0..9 {
            out[i] = adj[i] * inv_det;
        }
        if out[8].abs() > 1e-12 {
            let s = 1.0 / out[8];
            for v in &mut out {
                *v *= s;
            }
        }
        Ok(Homography { m: out })
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[6] * x + m[7] * y + m[8];
        let inv_w = 1.0 / w;
        (
            (m[0] * x + m[1] * y + m[2]) * inv_w,
            (m[3] * x + m[4] * y + m[5]) * inv_w,
        )
    }

    /// 2x2 Jacobian of the point map at (x, y), row-major [du/dx, du/dy,
    /// dv/dx, dv/dy]. Pushes velocities through the projection.
    pub fn jacobian(&self, x: f64, y: f64) -> [f64; 4] {
        let m = &self.m;
        let w = m[6] * x + m[7] * y + m[8];
        let u = m[0] * x + m[1] * y + m[2];
        let v = m[3] * x + m[4] * y + m[5];
        let inv_w = 1.0 / w;
        let inv_w2 = inv_w * inv_w;
        [
            m[0] * inv_w - u * m[6] * inv_w2,
            m[1] * inv_w - u * m[7] * inv_w2,
            m[3] * inv_w - v * m[6] * inv_w2,
            m[4] * inv_w - v * m[7] * inv_w2,
        ]
    }

    pub fn is_identity(&self) -> bool {
        let id = Homography::identity();
        self.m
            .iter()
            .zip(id.m.iter())
            .all(|(a, b)| (a - b).abs() < 1e-14)
    }

    pub fn rows(&self) -> [f64; 9] {
        self.m
    }

    /// Resamples `src` so that output pixel p takes the value of
    /// `src` at self^-1(p) (inverse mapping, bilinear). Pixels mapping
    /// outside keep `fill`.
    pub fn warp_plane(&self, src: &Plane, out_w: usize, out_h: usize, fill: f64) -> Result<Plane> {
        let inv = self.inverse()?;
        let mut out = Plane::zeros(out_w, out_h);
        for y in 0..out_h {
            for x in 0..out_w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                let v = if sx < -0.5
                    || sy < -0.5
                    || sx > src.width() as f64 - 0.5
                    || sy > src.height() as f64 - 0.5
                {
                    fill
                } else {
                    src.sample_bilinear(sx, sy)
                };
                out.set(x, y, v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trips_points() {
        let h = Homography::from_rows([1.1, 0.02, 3.0, -0.01, 0.95, -2.0, 1e-4, 2e-4, 1.0]).unwrap();
        let inv = h.inverse().unwrap();
        for &(x, y) in &[(0.0, 0.0), (10.0, 5.0), (-3.0, 40.0), (100.0, 100.0)] {
            let (u, v) = h.apply(x, y);
            let (bx, by) = inv.apply(u, v);
            assert!((bx - x).abs() < 1e-9 && (by - y).abs() < 1e-9, "({x},{y}) -> ({bx},{by})");
        }
    }

    #[test]
    fn rotation_about_fixes_center() {
        let h = Homography::rotation_about(5.0, 7.0, 1.2);
        let (x, y) = h.apply(5.0, 7.0);
        assert!((x - 5.0).abs() < 1e-12 && (y - 7.0).abs() < 1e-12);
        let (x, y) = h.apply(6.0, 7.0);
        assert!(((x - 5.0).hypot(y - 7.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oblique_fixes_anchor_and_inverts() {
        let h = Homography::oblique(64.0, 64.0, 25.0, 128.0);
        let (x, y) = h.apply(64.0, 64.0);
        assert!((x - 64.0).abs() < 1e-9 && (y - 64.0).abs() < 1e-9);
        let inv = h.inverse().unwrap();
        let (u, v) = h.apply(10.0, 100.0);
        let (bx, by) = inv.apply(u, v);
        assert!((bx - 10.0).abs() < 1e-9 && (by - 100.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = Homography::oblique(50.0, 50.0, 30.0, 100.0);
        let (x, y) = (20.0, 80.0);
        let j = h.jacobian(x, y);
        let eps = 1e-6;
        let (u0, v0) = h.apply(x, y);
        let (ux, vx) = h.apply(x + eps, y);
        let (uy, vy) = h.apply(x, y + eps);
        assert!((j[0] - (ux - u0) / eps).abs() < 1e-5);
        assert!((j[1] - (uy - u0) / eps).abs() < 1e-5);
        assert!((j[2] - (vx - v0) / eps).abs() < 1e-5);
        assert!((j[3] - (vy - v0) / eps).abs() < 1e-5);
    }

    #[test]
    fn degenerate_matrix_rejected() {
        assert!(Homography::from_rows([1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0]).is_err());
    }
}
