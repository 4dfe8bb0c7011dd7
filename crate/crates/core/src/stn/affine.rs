use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Error, Result};
use crate::geometry::{GraspRect, Point};

/// Tolerance used when classifying a transform into a stage-restricted form.
const FORM_TOL: f64 = 1e-9;

/// 2×3 affine map from output normalized coordinates to input normalized
/// coordinates: `(x_i, y_i) = (a11 x + a12 y + a13, a21 x + a22 y + a23)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    pub a11: f64,
    pub a12: f64,
    pub a13: f64,
    pub a21: f64,
    pub a22: f64,
    pub a23: f64,
}

/// The three transform families the pipeline stages emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Translation,
    Rotation,
    ScaleTranslation,
}

impl AffineTransform2D {
    pub const fn identity() -> Self {
        AffineTransform2D {
            a11: 1.0,
            a12: 0.0,
            a13: 0.0,
            a21: 0.0,
            a22: 1.0,
            a23: 0.0,
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform2D {
            a13: tx,
            a23: ty,
            ..Self::identity()
        }
    }

    /// Pure rotation by `theta` radians (visually clockwise in y-down images).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        AffineTransform2D {
            a11: c,
            a12: -s,
            a13: 0.0,
            a21: s,
            a22: c,
            a23: 0.0,
        }
    }

    pub const fn scale_translation(sx: f64, sy: f64, tx: f64, ty: f64) -> Self {
        AffineTransform2D {
            a11: sx,
            a12: 0.0,
            a13: tx,
            a21: 0.0,
            a22: sy,
            a23: ty,
        }
    }

    pub fn from_array(a: [f64; 6]) -> Result<Self> {
        let t = AffineTransform2D {
            a11: a[0],
            a12: a[1],
            a13: a[2],
            a21: a[3],
            a22: a[4],
            a23: a[5],
        };
        t.check_finite()?;
        Ok(t)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a11, self.a12, self.a13, self.a21, self.a22, self.a23]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.to_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric("affine transform", format!("non-finite coefficients {self:?}")))
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        [
            self.a11 * p[0] + self.a12 * p[1] + self.a13,
            self.a21 * p[0] + self.a22 * p[1] + self.a23,
        ]
    }

    /// Which stage-restricted form this transform has, if any. The identity
    /// is reported as a translation.
    pub fn kind(&self) -> Option<TransformKind> {
        let near = |a: f64, b: f64| (a - b).abs() <= FORM_TOL;
        if near(self.a11, 1.0) && near(self.a22, 1.0) && near(self.a12, 0.0) && near(self.a21, 0.0) {
            return Some(TransformKind::Translation);
        }
        if near(self.a13, 0.0)
            && near(self.a23, 0.0)
            && near(self.a11, self.a22)
            && near(self.a12, -self.a21)
            && near(self.a11 * self.a11 + self.a21 * self.a21, 1.0)
        {
            return Some(TransformKind::Rotation);
        }
        if near(self.a12, 0.0) && near(self.a21, 0.0) && self.a11 > 0.0 && self.a22 > 0.0 {
            return Some(TransformKind::ScaleTranslation);
        }
        None
    }
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

/// Chains two stages. `inner` is the earlier stage (applied to the source
/// image), `outer` the later one (applied to `inner`'s output). Sampling the
/// source once through the result equals sampling through `inner` and then
/// through `outer`; as matrices the result is `inner · outer`.
pub fn compose(outer: &AffineTransform2D, inner: &AffineTransform2D) -> AffineTransform2D {
    let (a, b) = (inner, outer);
    AffineTransform2D {
        a11: a.a11 * b.a11 + a.a12 * b.a21,
        a12: a.a11 * b.a12 + a.a12 * b.a22,
        a13: a.a11 * b.a13 + a.a12 * b.a23 + a.a13,
        a21: a.a21 * b.a11 + a.a22 * b.a21,
        a22: a.a21 * b.a12 + a.a22 * b.a22,
        a23: a.a21 * b.a13 + a.a22 * b.a23 + a.a23,
    }
}

/// Decodes a stage chain (first stage first) into a grasp rectangle.
///
/// The canonical rectangle is centred in the image with `θ = 0`, opening
/// `canonical_w` and plate length `canonical_h` pixels. Its corners are
/// expressed in normalized coordinates (pixel `p` ↔ `2p/size − 1`), mapped
/// through the composed chain, converted back to pixels and refit.
pub fn transform_to_grasp(
    chain: &[AffineTransform2D],
    image_w: f64,
    image_h: f64,
    canonical_w: f64,
    canonical_h: f64,
) -> Result<GraspRect> {
    if !(image_w > 0.0 && image_h > 0.0 && canonical_w > 0.0 && canonical_h > 0.0) {
        return Err(contract_err!(
            "transform_to_grasp needs positive sizes, got image {image_w}x{image_h}, canonical {canonical_w}x{canonical_h}"
        ));
    }
    let mut total = AffineTransform2D::identity();
    for (i, t) in chain.iter().enumerate() {
        t.check_finite()?;
        if t.kind().is_none() {
            return Err(contract_err!(
                "chain element {i} is not a translation, rotation or scale+translation: {t:?}"
            ));
        }
        total = compose(t, &total);
    }
    let canonical = GraspRect {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
        w: canonical_w,
        h: canonical_h,
    };
    // Same map written in pixel units so identity chains stay exact.
    let (ax, ay) = (image_w / image_h, image_h / image_w);
    let t = total;
    let corners = canonical.corners().map(|[px, py]| {
        [
            t.a11 * px + t.a12 * py * ax + (t.a13 + 1.0) * image_w / 2.0,
            t.a21 * px * ay + t.a22 * py + (t.a23 + 1.0) * image_h / 2.0,
        ]
    });
    GraspRect::from_corners(&corners)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(t: &AffineTransform2D) -> [[f64; 3]; 3] {
        [[t.a11, t.a12, t.a13], [t.a21, t.a22, t.a23], [0.0, 0.0, 1.0]]
    }

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    #[test]
    fn identity_is_neutral() {
        let t = AffineTransform2D::from_array([0.3, -0.2, 0.1, 0.7, 1.1, -0.4]).unwrap();
        let id = AffineTransform2D::identity();
        assert_eq!(compose(&id, &t), t);
        assert_eq!(compose(&t, &id), t);
    }

    #[test]
    fn translations_add() {
        let c = compose(
            &AffineTransform2D::translation(0.2, 0.0),
            &AffineTransform2D::translation(0.3, 0.0),
        );
        assert!((c.a13 - 0.5).abs() < 1e-15);
        assert_eq!(c.kind(), Some(TransformKind::Translation));
    }

    #[test]
    fn rotation_scale_matches_matrix_product() {
        let rot = AffineTransform2D::rotation(30f64.to_radians());
        let sc = AffineTransform2D::scale_translation(0.5, 0.5, 0.0, 0.0);
        let got = compose(&sc, &rot);
        let want = matmul(mat(&rot), mat(&sc));
        let g = mat(&got);
        for i in 0..2 {
            for j in 0..3 {
                assert!((g[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stage_forms_are_recognized() {
        assert_eq!(AffineTransform2D::rotation(0.7).kind(), Some(TransformKind::Rotation));
        assert_eq!(
            AffineTransform2D::scale_translation(0.5, 2.0, 0.1, 0.0).kind(),
            Some(TransformKind::ScaleTranslation)
        );
        let shear = AffineTransform2D::from_array([1.0, 0.3, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(shear.kind(), None);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(AffineTransform2D::from_array([f64::NAN, 0.0, 0.0, 0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn identity_chain_decodes_canonical() {
        let g = transform_to_grasp(&[AffineTransform2D::identity(); 3], 400.0, 400.0, 100.0, 60.0).unwrap();
        assert_eq!(g, GraspRect { x: 200.0, y: 200.0, theta: 0.0, w: 100.0, h: 60.0 });
    }

    #[test]
    fn half_translation_moves_hundred_pixels() {
        let g = transform_to_grasp(&[AffineTransform2D::translation(0.5, 0.0)], 400.0, 400.0, 100.0, 60.0).unwrap();
        assert!((g.x - 300.0).abs() < 1e-9);
        assert!((g.y - 200.0).abs() < 1e-9);
        assert_eq!(g.theta, 0.0);
    }

    #[test]
    fn rotation_preserves_size() {
        for deg in [-89.0, -30.0, 0.0, 45.0, 89.0] {
            let g = transform_to_grasp(
                &[AffineTransform2D::rotation(f64::to_radians(deg))],
                400.0,
                400.0,
                80.0,
                30.0,
            )
            .unwrap();
            assert!((g.w - 80.0).abs() < 1e-9 && (g.h - 30.0).abs() < 1e-9);
            assert!((g.theta - deg).abs() < 1e-9);
        }
    }

    #[test]
    fn general_transform_rejected() {
        let shear = AffineTransform2D::from_array([1.0, 0.3, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(transform_to_grasp(&[shear], 400.0, 400.0, 10.0, 10.0).is_err());
    }
}
