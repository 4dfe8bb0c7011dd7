use super::Tensor;
use crate::error::{shape_err, Result};

fn dims4(op: &str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(shape_err!("{op} expects [N, C, H, W], got {:?}", t.shape())),
    }
}

/// Max pooling with a square window. Ties resolve to the first maximum in
/// row-major window order.
pub fn max_pool2d(input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    let (n, c, h, w) = dims4("max_pool2d", input)?;
    if kernel == 0 || stride == 0 || kernel > h || kernel > w {
        return Err(shape_err!(
            "max_pool2d: kernel {kernel} / stride {stride} invalid for {h}x{w}"
        ));
    }
    let (ho, wo) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let x = input.values();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oi in 0..ho {
            for oj in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for ki in 0..kernel {
                    for kj in 0..kernel {
                        let idx = base + (oi * stride + ki) * w + oj * stride + kj;
                        if x[idx] > best {
                            best = x[idx];
                            at = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(at);
            }
        }
    }
    let len = x.len();
    Tensor::from_op("max_pool2d", vec![n, c, ho, wo], out, &[input], move |g, _| {
        let mut gx = vec![0.0; len];
        for (gv, &at) in g.iter().zip(&argmax) {
            gx[at] += gv;
        }
        vec![Some(gx)]
    })
}

/// Non-overlapping average pooling; trailing rows/columns that do not fill a
/// window are dropped.
pub fn avg_pool2d(input: &Tensor, kernel: usize) -> Result<Tensor> {
    let (n, c, h, w) = dims4("avg_pool2d", input)?;
    if kernel == 0 || kernel > h || kernel > w {
        return Err(shape_err!("avg_pool2d: kernel {kernel} invalid for {h}x{w}"));
    }
    if kernel == 1 {
        return Ok(input.clone());
    }
    let (ho, wo) = (h / kernel, w / kernel);
    let inv = 1.0 / (kernel * kernel) as f64;
    let x = input.values();
    let mut out = vec![0.0; n * c * ho * wo];
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
        for i in 0..ho * kernel {
            let row = &src[i * w..i * w + wo * kernel];
            let drow = &mut dst[(i / kernel) * wo..(i / kernel + 1) * wo];
            for (j, v) in row.iter().enumerate() {
                drow[j / kernel] += v;
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv);
    }
    let len = x.len();
    Tensor::from_op("avg_pool2d", vec![n, c, ho, wo], out, &[input], move |g, _| {
        let mut gx = vec![0.0; len];
        for plane in 0..n * c {
            let gsrc = &g[plane * ho * wo..(plane + 1) * ho * wo];
            let dst = &mut gx[plane * h * w..(plane + 1) * h * w];
            for i in 0..ho * kernel {
                for j in 0..wo * kernel {
                    dst[i * w + j] = gsrc[(i / kernel) * wo + j / kernel] * inv;
                }
            }
        }
        vec![Some(gx)]
    })
}

/// Mean over the spatial dimensions: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = dims4("global_avg_pool", input)?;
    let hw = h * w;
    let inv = 1.0 / hw as f64;
    let out: Vec<f64> = input
        .values()
        .chunks(hw)
        .map(|p| p.iter().sum::<f64>() * inv)
        .collect();
    Tensor::from_op("global_avg_pool", vec![n, c], out, &[input], move |g, _| {
        let mut gx = Vec::with_capacity(n * c * hw);
        for gv in g {
            gx.extend(std::iter::repeat(gv * inv).take(hw));
        }
        vec![Some(gx)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_picks_maximum() {
        let x = Tensor::new(&[1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, -1.0, 7.0, 6.0]).unwrap();
        let y = max_pool2d(&x, 2, 2).unwrap();
        assert_eq!(y.values(), &[5.0, 7.0]);
    }

    #[test]
    fn avg_pool_means_windows() {
        let x = Tensor::new(&[1, 1, 2, 4], vec![1.0, 3.0, 2.0, 2.0, 5.0, 7.0, 0.0, 4.0]).unwrap();
        let y = avg_pool2d(&x, 2).unwrap();
        assert_eq!(y.values(), &[4.0, 2.0]);
    }

    #[test]
    fn global_pool_shape() {
        let x = Tensor::full(&[2, 3, 4, 5], 1.5);
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert!(y.values().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }
}
