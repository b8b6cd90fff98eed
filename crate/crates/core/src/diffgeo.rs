//! Frames, fundamental forms and the ambient curvature tensor of immersed surfaces.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, SymmetricEigen, Vector3};

use crate::error::{AbcError, Result};
use crate::spline::{Surface, SurfaceJet};

/// Below this norm of `∂₁ × ∂₂` a frame is considered degenerate.
pub const FRAME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFrame {
    pub point: Vector3<f64>,
    pub jacobian: Matrix3x2<f64>,
    pub normal: Vector3<f64>,
}

/// Symmetric 3x3 Weingarten operator pushed to ambient space; annihilates the normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureTensor {
    pub matrix: Matrix3<f64>,
    pub normal: Vector3<f64>,
}

pub fn frame_from_jet(j: &SurfaceJet) -> Result<SurfaceFrame> {
    let c = j.du.cross(&j.dv);
    let len = c.norm();
    if len < FRAME_EPS {
        return Err(AbcError::DegenerateFrame(len));
    }
    Ok(SurfaceFrame {
        point: j.p,
        jacobian: Matrix3x2::from_columns(&[j.du, j.dv]),
        normal: c / len,
    })
}

pub fn frame<S: Surface + ?Sized>(s: &S, sigma: [f64; 2]) -> Result<SurfaceFrame> {
    frame_from_jet(&s.jet(sigma))
}

fn forms(j: &SurfaceJet) -> Result<(SurfaceFrame, Matrix2<f64>, Matrix2<f64>)> {
    let f = frame_from_jet(j)?;
    let d = f.jacobian;
    let g = d.transpose() * d;
    let n = f.normal;
    let b = Matrix2::new(n.dot(&j.duu), n.dot(&j.duv), n.dot(&j.duv), n.dot(&j.dvv));
    Ok((f, g, b))
}

pub fn first_fundamental_form(j: &SurfaceJet) -> Result<Matrix2<f64>> {
    Ok(forms(j)?.1)
}

pub fn second_fundamental_form(j: &SurfaceJet) -> Result<Matrix2<f64>> {
    Ok(forms(j)?.2)
}

pub fn curvature_tensor_from_jet(j: &SurfaceJet) -> Result<CurvatureTensor> {
    let (f, g, b) = forms(j)?;
    let gi = g
        .try_inverse()
        .ok_or(AbcError::DegenerateFrame(g.determinant()))?;
    let d = f.jacobian;
    let e = d * gi * b * gi * d.transpose();
    Ok(CurvatureTensor {
        matrix: 0.5 * (e + e.transpose()),
        normal: f.normal,
    })
}

pub fn curvature_tensor<S: Surface + ?Sized>(s: &S, sigma: [f64; 2]) -> Result<CurvatureTensor> {
    curvature_tensor_from_jet(&s.jet(sigma))
}

/// Gaussian and mean curvature from the 2x2 forms.
pub fn gaussian_mean_from_jet(j: &SurfaceJet) -> Result<(f64, f64)> {
    let (_, g, b) = forms(j)?;
    let k = b.determinant() / g.determinant();
    let gi = g
        .try_inverse()
        .ok_or(AbcError::DegenerateFrame(g.determinant()))?;
    let h = 0.5 * (gi * b).trace();
    Ok((k, h))
}

pub fn gaussian_mean<S: Surface + ?Sized>(s: &S, sigma: [f64; 2]) -> Result<(f64, f64)> {
    gaussian_mean_from_jet(&s.jet(sigma))
}

pub fn isophote_value(f: &SurfaceFrame, light: &Vector3<f64>) -> f64 {
    f.normal.dot(light)
}

impl CurvatureTensor {
    /// The two eigenvalues belonging to tangent directions, ascending.
    pub fn principal_curvatures(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.matrix);
        // drop the eigenvector closest to the normal
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|a, b| {
            let da = eig.eigenvectors.column(*a).dot(&self.normal).abs();
            let db = eig.eigenvectors.column(*b).dot(&self.normal).abs();
            da.partial_cmp(&db).unwrap()
        });
        let (a, b) = (eig.eigenvalues[idx[0]], eig.eigenvalues[idx[1]]);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn gaussian(&self) -> f64 {
        let (a, b) = self.principal_curvatures();
        a * b
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = self.principal_curvatures();
        0.5 * (a + b)
    }

    /// Frobenius distance, tolerant to a flipped normal on either side.
    pub fn distance(&self, other: &CurvatureTensor) -> f64 {
        let same = (self.matrix - other.matrix).norm();
        let flipped = (self.matrix + other.matrix).norm();
        if self.normal.dot(&other.normal) >= 0.0 {
            same
        } else {
            flipped
        }
    }
}

/// Angle between two normals ignoring orientation, plus whether they agree in sign.
pub fn normal_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> (f64, bool) {
    let c = a.dot(b).clamp(-1.0, 1.0);
    let s = a.cross(b).norm();
    let ang = s.atan2(c.abs());
    (ang, c >= 0.0)
}
