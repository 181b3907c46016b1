//! Orthonormal frames: `k` orthonormal vectors in `R^d` with a common scale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::fill_normals;
use crate::error::{check_dim, LabError, Result};

/// Orthonormality tolerance enforced at construction.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    ambient_dim: usize,
    count: usize,
    scale: f64,
    /// Row-major `count x ambient_dim`, unit rows.
    vectors: Vec<f64>,
}

impl Frame {
    /// Build a frame from row-major unit vectors, checking orthonormality.
    pub fn new(ambient_dim: usize, vectors: Vec<f64>, scale: f64) -> Result<Self> {
        if ambient_dim == 0 || vectors.len() % ambient_dim != 0 {
            return Err(LabError::param("vectors", "length is not a multiple of the dimension"));
        }
        let count = vectors.len() / ambient_dim;
        if count > ambient_dim {
            return Err(LabError::param("vectors", "more vectors than dimensions"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(LabError::param("scale", "must be positive and finite"));
        }
        let frame = Frame {
            ambient_dim,
            count,
            scale,
            vectors,
        };
        let err = frame.gram_error();
        if err > ORTHO_TOL {
            return Err(LabError::param(
                "vectors",
                format!("not orthonormal (max Gram deviation {err:e})"),
            ));
        }
        Ok(frame)
    }

    pub fn identity(d: usize) -> Self {
        let mut v = vec![0.0; d * d];
        for i in 0..d {
            v[i * d + i] = 1.0;
        }
        Frame {
            ambient_dim: d,
            count: d,
            scale: 1.0,
            vectors: v,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Unit vector `i` (unscaled).
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn as_rows(&self) -> &[f64] {
        &self.vectors
    }

    /// `out[i] = <u_i, x>` for the unit vectors `u_i`.
    pub fn coords_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ambient_dim);
        for (i, o) in out.iter_mut().enumerate().take(self.count) {
            *o = dot(self.vector(i), x);
        }
    }

    pub fn coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.ambient_dim, x.len())?;
        let mut out = vec![0.0; self.count];
        self.coords_into(x, &mut out);
        Ok(out)
    }

    /// `<scale * u_i, x>`.
    pub fn scaled_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut c = self.coords(x)?;
        for v in &mut c {
            *v *= self.scale;
        }
        Ok(c)
    }

    /// `sum_i c_i u_i`.
    pub fn lift(&self, coords: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.count, coords.len())?;
        let mut out = vec![0.0; self.ambient_dim];
        for (i, &c) in coords.iter().enumerate() {
            axpy(c, self.vector(i), &mut out);
        }
        Ok(out)
    }

    /// Largest entry of `|U U^T - I|`.
    pub fn gram_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.count {
            for j in 0..=i {
                let g = dot(self.vector(i), self.vector(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `k` Haar-distributed orthonormal vectors in `R^d`: Gaussian vectors put
/// through modified Gram-Schmidt with one re-orthogonalization pass.
pub fn sample_haar_frame<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Frame> {
    if d == 0 {
        return Err(LabError::param("d", "must be positive"));
    }
    if k > d {
        return Err(LabError::param("k", format!("{k} vectors do not fit in dimension {d}")));
    }
    let mut vectors = vec![0.0; k * d];
    let mut v = vec![0.0; d];
    let mut i = 0;
    while i < k {
        fill_normals(rng, &mut v);
        let raw = norm(&v);
        for _pass in 0..2 {
            for j in 0..i {
                let u = &vectors[j * d..(j + 1) * d];
                let c = dot(u, &v);
                axpy(-c, u, &mut v);
            }
        }
        let nv = norm(&v);
        // a near-dependent draw would lose orthogonality; redraw it
        if nv < 1e-6 * raw {
            continue;
        }
        for (dst, src) in vectors[i * d..(i + 1) * d].iter_mut().zip(&v) {
            *dst = src / nv;
        }
        i += 1;
    }
    Frame::new(d, vectors, 1.0)
}

/// Orthonormal basis of `v^⊥` for a unit vector `v`, read off the rows of
/// the Householder reflection that maps the last basis vector to `v`.
pub fn householder_complement(v: &[f64]) -> Result<Frame> {
    let d = v.len();
    if d < 2 {
        return Err(LabError::param("v", "dimension must be at least 2"));
    }
    let nv = norm(v);
    if (nv - 1.0).abs() > 1e-9 {
        return Err(LabError::param("v", "must be a unit vector"));
    }
    // H = I - 2 w w^T / |w|^2 with w = e_d - v maps e_d to v; if v = ±e_d use a sign flip.
    let mut w = v.iter().map(|x| -x).collect::<Vec<_>>();
    w[d - 1] += 1.0;
    let ww = dot(&w, &w);
    let mut rows = vec![0.0; (d - 1) * d];
    for i in 0..d - 1 {
        let row = &mut rows[i * d..(i + 1) * d];
        row[i] = 1.0;
        if ww > 1e-24 {
            let f = 2.0 * w[i] / ww;
            axpy(-f, &w, row);
        }
    }
    Frame::new(d, rows, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::rng::RngStream;

    #[test]
    fn haar_frame_is_orthonormal() {
        let mut rng = RngStream::new(1, 0).rng();
        let f = sample_haar_frame(50, 50, &mut rng).unwrap();
        assert!(f.gram_error() < 1e-12);
        let g = sample_haar_frame(200, 13, &mut rng).unwrap();
        assert!(g.gram_error() < 1e-12);
    }

    #[test]
    fn haar_first_coordinate_has_sphere_moments() {
        // For u uniform on S^{d-1}: E[u_1^2] = 1/d and E[u_1^4] = 3/(d(d+2)).
        let d = 10;
        let mut rng = RngStream::new(2, 0).rng();
        let trials = 20_000;
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..trials {
            let f = sample_haar_frame(d, 2, &mut rng).unwrap();
            let a = f.vector(1)[0];
            m2 += a * a;
            m4 += a.powi(4);
        }
        m2 /= trials as f64;
        m4 /= trials as f64;
        assert!((m2 - 0.1).abs() < 0.004, "m2 = {m2}");
        assert!((m4 - 3.0 / 120.0).abs() < 0.002, "m4 = {m4}");
    }

    #[test]
    fn coords_and_lift_roundtrip() {
        let mut rng = RngStream::new(3, 0).rng();
        let f = sample_haar_frame(20, 20, &mut rng).unwrap();
        let mut x = vec![0.0; 20];
        fill_normals(&mut rng, &mut x);
        let back = f.lift(&f.coords(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn householder_complement_is_orthogonal_to_v() {
        let mut rng = RngStream::new(4, 0).rng();
        for d in [2usize, 5, 101] {
            let mut v = vec![0.0; d];
            fill_normals(&mut rng, &mut v);
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let f = householder_complement(&v).unwrap();
            assert_eq!(f.count(), d - 1);
            assert!(f.gram_error() < 1e-12);
            for i in 0..d - 1 {
                assert!(dot(f.vector(i), &v).abs() < 1e-12);
            }
        }
        let mut e = vec![0.0; 4];
        e[3] = 1.0;
        let f = householder_complement(&e).unwrap();
        assert!(f.gram_error() < 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal_input() {
        assert!(Frame::new(2, vec![1.0, 0.0, 1.0, 0.0], 1.0).is_err());
        assert!(Frame::new(2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0], 1.0).is_err());
    }
}
