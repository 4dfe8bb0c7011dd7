//! 2-D convolution via im2col and a packed matrix multiply.

use super::Tensor;
use crate::error::{shape_err, Result};

/// `c = a · b + beta · c` with optional transposition of `a` (m×k) and `b` (k×n).
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths checked above; strides describe row-major
    // matrices (or their transposes) laid out inside those slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col(x: &[f64], g: Geom, cols: &mut [f64]) {
    let npix = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let drow = &mut dst[oi * g.wo..(oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, d) in drow.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *d = if jj < 0 || jj >= g.w as isize {
                            0.0
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: Geom, dx: &mut [f64]) {
    let npix = g.cols();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * npix..(row + 1) * npix];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for oj in 0..g.wo {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] += src[oi * g.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded 2-D cross-correlation.
///
/// `input` is `[N, C, H, W]`, `weight` is `[F, C, kH, kW]`, `bias` is `[F]`.
/// Output is `[N, F, (H + 2·pad − kH)/stride + 1, (W + 2·pad − kW)/stride + 1]`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (is, ws) = (input.shape(), weight.shape());
    if is.len() != 4 || ws.len() != 4 {
        return Err(shape_err!(
            "conv2d expects 4-D input and weight, got {:?} and {:?}",
            is,
            ws
        ));
    }
    let (n, c, h, w) = (is[0], is[1], is[2], is[3]);
    let (f, wc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if wc != c {
        return Err(shape_err!(
            "conv2d input has {c} channels but weight expects {wc}"
        ));
    }
    if bias.shape() != [f] {
        return Err(shape_err!(
            "conv2d bias must be [{f}], got {:?}",
            bias.shape()
        ));
    }
    if stride == 0 {
        return Err(shape_err!("conv2d stride must be positive"));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(shape_err!(
            "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        ));
    }
    input.check_finite("conv2d")?;
    let g = Geom {
        c,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        ho: (h + 2 * pad - kh) / stride + 1,
        wo: (w + 2 * pad - kw) / stride + 1,
    };
    let (rows, npix) = (g.rows(), g.cols());
    let mut out = vec![0.0; n * f * npix];
    let mut cols = vec![0.0; rows * npix];
    let x = input.values();
    for s in 0..n {
        im2col(&x[s * c * h * w..(s + 1) * c * h * w], g, &mut cols);
        let o = &mut out[s * f * npix..(s + 1) * f * npix];
        for (fi, chunk) in o.chunks_mut(npix).enumerate() {
            chunk.fill(bias.values()[fi]);
        }
        gemm(f, rows, npix, weight.values(), false, &cols, false, 1.0, o);
    }

    Tensor::from_op(
        "conv2d",
        vec![n, f, g.ho, g.wo],
        out,
        &[input, weight, bias],
        move |gout, inputs| {
            let (x, wt) = (inputs[0].values(), inputs[1].values());
            let need_x = inputs[0].requires_grad();
            let need_w = inputs[1].requires_grad();
            let mut gx = need_x.then(|| vec![0.0; x.len()]);
            let mut gw = need_w.then(|| vec![0.0; wt.len()]);
            let mut gb = vec![0.0; f];
            let mut cols = vec![0.0; rows * npix];
            for s in 0..n {
                let go = &gout[s * f * npix..(s + 1) * f * npix];
                for (fi, chunk) in go.chunks(npix).enumerate() {
                    gb[fi] += chunk.iter().sum::<f64>();
                }
                if let Some(gw) = gw.as_mut() {
                    im2col(&x[s * c * h * w..(s + 1) * c * h * w], g, &mut cols);
                    gemm(f, npix, rows, go, false, &cols, true, 1.0, gw);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm(rows, f, npix, wt, true, go, false, 0.0, &mut cols);
                    col2im(&cols, g, &mut gx[s * c * h * w..(s + 1) * c * h * w]);
                }
            }
            vec![gx, gw, Some(gb)]
        },
    )
}
