use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Per-pixel surface normals of a depth map.
///
/// `normal = normalize(−∂z/∂x, −∂z/∂y, 1)` with central differences in the
/// interior and one-sided differences on the border. `depth` is `[H, W]` in
/// any length unit per pixel; the result is `[3, H, W]`.
pub fn surface_normals(depth: &Tensor) -> Result<Tensor> {
    let [h, w] = *depth.shape() else {
        return Err(shape_err!("surface_normals expects [H, W], got {:?}", depth.shape()));
    };
    depth.check_finite("surface_normals")?;
    let out = normals_from_slice(depth.values(), h, w);
    Tensor::new(&[3, h, w], out)
}

fn diff(at: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        (at(i + 1) - at(i - 1)) / 2.0
    }
}

pub(crate) fn normals_from_slice(z: &[f64], h: usize, w: usize) -> Vec<f64> {
    let n = h * w;
    let mut out = vec![0.0; 3 * n];
    for r in 0..h {
        for c in 0..w {
            let dzdx = diff(|j| z[r * w + j], c, w);
            let dzdy = diff(|i| z[i * w + c], r, h);
            let norm = (dzdx * dzdx + dzdy * dzdy + 1.0).sqrt();
            let k = r * w + c;
            out[k] = -dzdx / norm;
            out[n + k] = -dzdy / norm;
            out[2 * n + k] = 1.0 / norm;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_faces_camera() {
        let d = Tensor::full(&[5, 6], 812.5);
        let n = surface_normals(&d).unwrap();
        let v = n.values();
        assert!(v[..30].iter().all(|&x| x == 0.0));
        assert!(v[30..60].iter().all(|&x| x == 0.0));
        assert!(v[60..].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn ramp_in_x() {
        let (h, w) = (4, 7);
        let d = Tensor::new(&[h, w], (0..h * w).map(|k| (k % w) as f64).collect()).unwrap();
        let n = surface_normals(&d).unwrap();
        let v = n.values();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..h * w {
            assert!((v[k] + s).abs() < 1e-15);
            assert!(v[h * w + k].abs() < 1e-15);
            assert!((v[2 * h * w + k] - s).abs() < 1e-15);
        }
    }
}
