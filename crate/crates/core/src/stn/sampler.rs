use super::affine::AffineTransform2D;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Normalized sample positions, `[H_out, W_out, 2]` holding `(x, y)`.
#[derive(Debug, Clone)]
pub struct SamplingGrid {
    pub coords: Tensor,
}

impl SamplingGrid {
    pub fn new(coords: Tensor) -> Result<Self> {
        match *coords.shape() {
            [_, _, 2] => Ok(SamplingGrid { coords }),
            _ => Err(shape_err!("sampling grid must be [H, W, 2], got {:?}", coords.shape())),
        }
    }

    pub fn height(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.coords.shape()[1]
    }
}

fn lattice(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

/// Batched grid generator: `theta [G, 6] -> [G, H_out, W_out, 2]`,
/// differentiable with respect to the coefficients.
pub fn affine_grid_batch(theta: &Tensor, h_out: usize, w_out: usize) -> Result<Tensor> {
    let [g, 6] = *theta.shape() else {
        return Err(shape_err!("affine_grid expects [G, 6], got {:?}", theta.shape()));
    };
    if h_out == 0 || w_out == 0 {
        return Err(shape_err!("affine_grid output size must be positive, got {h_out}x{w_out}"));
    }
    theta.check_finite("affine_grid")?;
    let (xs, ys) = (lattice(w_out), lattice(h_out));
    let mut out = Vec::with_capacity(g * h_out * w_out * 2);
    for a in theta.values().chunks(6) {
        for &y in &ys {
            for &x in &xs {
                out.push(a[0] * x + a[1] * y + a[2]);
                out.push(a[3] * x + a[4] * y + a[5]);
            }
        }
    }
    Tensor::from_op("affine_grid", vec![g, h_out, w_out, 2], out, &[theta], move |gr, _| {
        let mut gt = vec![0.0; g * 6];
        let per = h_out * w_out * 2;
        for (gi, acc) in gt.chunks_mut(6).enumerate() {
            let gg = &gr[gi * per..(gi + 1) * per];
            let mut k = 0;
            for &y in &ys {
                for &x in &xs {
                    let (gx, gy) = (gg[k], gg[k + 1]);
                    acc[0] += gx * x;
                    acc[1] += gx * y;
                    acc[2] += gx;
                    acc[3] += gy * x;
                    acc[4] += gy * y;
                    acc[5] += gy;
                    k += 2;
                }
            }
        }
        vec![Some(gt)]
    })
}

/// Grid for a single fixed transform; `coords[i, j] = t · (x_j, y_i, 1)`.
pub fn affine_grid(t: &AffineTransform2D, h_out: usize, w_out: usize) -> Result<SamplingGrid> {
    t.check_finite()?;
    let theta = Tensor::new(&[1, 6], t.to_array().to_vec())?;
    let g = affine_grid_batch(&theta, h_out, w_out)?;
    SamplingGrid::new(g.reshape(&[h_out, w_out, 2])?)
}

/// Batched `compose` on coefficient tensors: `outer, inner [G, 6] -> [G, 6]`
/// (matrix product `inner · outer` per row).
pub fn compose_batch(outer: &Tensor, inner: &Tensor) -> Result<Tensor> {
    let ([g, 6], [g2, 6]) = (outer.shape(), inner.shape()) else {
        return Err(shape_err!(
            "compose expects [G, 6] operands, got {:?} and {:?}",
            outer.shape(),
            inner.shape()
        ));
    };
    if g != g2 {
        return Err(shape_err!("compose batch sizes differ: {g} vs {g2}"));
    }
    let g = *g;
    let mut out = Vec::with_capacity(g * 6);
    for (b, a) in outer.values().chunks(6).zip(inner.values().chunks(6)) {
        out.extend_from_slice(&[
            a[0] * b[0] + a[1] * b[3],
            a[0] * b[1] + a[1] * b[4],
            a[0] * b[2] + a[1] * b[5] + a[2],
            a[3] * b[0] + a[4] * b[3],
            a[3] * b[1] + a[4] * b[4],
            a[3] * b[2] + a[4] * b[5] + a[5],
        ]);
    }
    Tensor::from_op("compose", vec![g, 6], out, &[outer, inner], move |gr, inputs| {
        let (bo, ai) = (inputs[0].values(), inputs[1].values());
        let mut gb = vec![0.0; g * 6];
        let mut ga = vec![0.0; g * 6];
        for r in 0..g {
            let (b, a, d) = (&bo[r * 6..r * 6 + 6], &ai[r * 6..r * 6 + 6], &gr[r * 6..r * 6 + 6]);
            let gbr = &mut gb[r * 6..r * 6 + 6];
            gbr[0] = d[0] * a[0] + d[3] * a[3];
            gbr[1] = d[1] * a[0] + d[4] * a[3];
            gbr[2] = d[2] * a[0] + d[5] * a[3];
            gbr[3] = d[0] * a[1] + d[3] * a[4];
            gbr[4] = d[1] * a[1] + d[4] * a[4];
            gbr[5] = d[2] * a[1] + d[5] * a[4];
            let gar = &mut ga[r * 6..r * 6 + 6];
            gar[0] = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
            gar[1] = d[0] * b[3] + d[1] * b[4] + d[2] * b[5];
            gar[2] = d[2];
            gar[3] = d[3] * b[0] + d[4] * b[1] + d[5] * b[2];
            gar[4] = d[3] * b[3] + d[4] * b[4] + d[5] * b[5];
            gar[5] = d[5];
        }
        vec![Some(gb), Some(ga)]
    })
}

#[derive(Clone, Copy)]
struct Tap {
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
}

/// Bilinear sampler with zero padding.
///
/// `input [N, C, H, W]` is read at `grid [G, H', W', 2]`; the output is
/// `[B, C, H', W']` with `B = max(N, G)`, where `N` or `G` may be 1 and is
/// then broadcast. Differentiable with respect to the input pixels and the
/// grid coordinates.
pub fn grid_sample(input: &Tensor, grid: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = *input.shape() else {
        return Err(shape_err!("grid_sample input must be [N, C, H, W], got {:?}", input.shape()));
    };
    let [g, ho, wo, 2] = *grid.shape() else {
        return Err(shape_err!("grid_sample grid must be [G, H, W, 2], got {:?}", grid.shape()));
    };
    if n != g && n != 1 && g != 1 {
        return Err(shape_err!("grid_sample batch mismatch: input {n}, grid {g}"));
    }
    grid.check_finite("grid_sample")?;
    let b = n.max(g);
    let npix = ho * wo;
    let sx = (w as f64 - 1.0) / 2.0;
    let sy = (h as f64 - 1.0) / 2.0;
    let taps: Vec<Tap> = grid
        .values()
        .chunks(2)
        .map(|p| {
            let px = (p[0] + 1.0) * sx;
            let py = (p[1] + 1.0) * sy;
            let (x0, y0) = (px.floor(), py.floor());
            Tap {
                x0: x0 as isize,
                y0: y0 as isize,
                fx: px - x0,
                fy: py - y0,
            }
        })
        .collect();

    let inb = move |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h;
    let x = input.values();
    let mut out = vec![0.0; b * c * npix];
    for bi in 0..b {
        let (ni, gi) = (if n == 1 { 0 } else { bi }, if g == 1 { 0 } else { bi });
        let taps = &taps[gi * npix..(gi + 1) * npix];
        for ch in 0..c {
            let plane = &x[(ni * c + ch) * h * w..(ni * c + ch + 1) * h * w];
            let dst = &mut out[(bi * c + ch) * npix..(bi * c + ch + 1) * npix];
            for (d, t) in dst.iter_mut().zip(taps) {
                let mut v = 0.0;
                for (dy, wy) in [(0, 1.0 - t.fy), (1, t.fy)] {
                    for (dx, wx) in [(0, 1.0 - t.fx), (1, t.fx)] {
                        let (xx, yy) = (t.x0 + dx, t.y0 + dy);
                        if inb(xx, yy) {
                            v += wx * wy * plane[yy as usize * w + xx as usize];
                        }
                    }
                }
                *d = v;
            }
        }
    }

    Tensor::from_op("grid_sample", vec![b, c, ho, wo], out, &[input, grid], move |gr, inputs| {
        let x = inputs[0].values();
        let mut gin = inputs[0].requires_grad().then(|| vec![0.0; x.len()]);
        let mut ggrid = inputs[1].requires_grad().then(|| vec![0.0; g * npix * 2]);
        for bi in 0..b {
            let (ni, gi) = (if n == 1 { 0 } else { bi }, if g == 1 { 0 } else { bi });
            for ch in 0..c {
                let pbase = (ni * c + ch) * h * w;
                let plane = &x[pbase..pbase + h * w];
                let go = &gr[(bi * c + ch) * npix..(bi * c + ch + 1) * npix];
                for (k, (&gv, t)) in go.iter().zip(&taps[gi * npix..(gi + 1) * npix]).enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let mut corner = [0.0; 4];
                    for (ci, (dx, dy)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                        let (xx, yy) = (t.x0 + dx, t.y0 + dy);
                        if inb(xx, yy) {
                            let idx = yy as usize * w + xx as usize;
                            corner[ci] = plane[idx];
                            if let Some(gin) = gin.as_mut() {
                                let wx = if dx == 0 { 1.0 - t.fx } else { t.fx };
                                let wy = if dy == 0 { 1.0 - t.fy } else { t.fy };
                                gin[pbase + idx] += gv * wx * wy;
                            }
                        }
                    }
                    if let Some(gg) = ggrid.as_mut() {
                        let [v00, v10, v01, v11] = corner;
                        let dpx = (1.0 - t.fy) * (v10 - v00) + t.fy * (v11 - v01);
                        let dpy = (1.0 - t.fx) * (v01 - v00) + t.fx * (v11 - v10);
                        let at = (gi * npix + k) * 2;
                        gg[at] += gv * dpx * sx;
                        gg[at + 1] += gv * dpy * sy;
                    }
                }
            }
        }
        vec![gin, ggrid]
    })
}

/// Samples every image of `input [N, C, H, W]` at one shared grid.
pub fn bilinear_sample(input: &Tensor, grid: &SamplingGrid) -> Result<Tensor> {
    let coords = grid.coords.reshape(&[1, grid.height(), grid.width(), 2])?;
    grid_sample(input, &coords)
}
