use super::conv::gemm;
use super::Tensor;
use crate::error::{shape_err, Result};

/// Fully connected layer: `input [N, in] · weightᵀ [in, out] + bias [out]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (is, ws) = (input.shape(), weight.shape());
    if is.len() != 2 || ws.len() != 2 || is[1] != ws[1] {
        return Err(shape_err!(
            "dense: input {:?} incompatible with weight {:?}",
            is,
            ws
        ));
    }
    let (n, din, dout) = (is[0], is[1], ws[0]);
    if bias.shape() != [dout] {
        return Err(shape_err!("dense: bias must be [{dout}], got {:?}", bias.shape()));
    }
    input.check_finite("dense")?;
    let mut out = Vec::with_capacity(n * dout);
    for _ in 0..n {
        out.extend_from_slice(bias.values());
    }
    gemm(n, din, dout, input.values(), false, weight.values(), true, 1.0, &mut out);

    Tensor::from_op("dense", vec![n, dout], out, &[input, weight, bias], move |g, inputs| {
        let (x, w) = (inputs[0].values(), inputs[1].values());
        let gx = inputs[0].requires_grad().then(|| {
            let mut gx = vec![0.0; n * din];
            gemm(n, dout, din, g, false, w, false, 0.0, &mut gx);
            gx
        });
        let gw = inputs[1].requires_grad().then(|| {
            let mut gw = vec![0.0; dout * din];
            gemm(dout, n, din, g, true, x, false, 0.0, &mut gw);
            gw
        });
        let mut gb = vec![0.0; dout];
        for row in g.chunks(dout) {
            gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        vec![gx, gw, Some(gb)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computation() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let w = Tensor::new(&[2, 3], vec![0.1, 0.2, 0.3, -1.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(&[2], vec![0.5, -0.5]).unwrap();
        let y = dense(&x, &w, &b).unwrap();
        let expect = [0.5 + 0.1 + 0.4 + 0.9, -0.5 - 1.0 + 3.0, 0.5 - 0.1 + 0.1, -0.5 + 1.0];
        for (a, e) in y.values().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_width_mismatch() {
        let x = Tensor::zeros(&[1, 4]);
        let w = Tensor::zeros(&[2, 3]);
        assert!(dense(&x, &w, &Tensor::zeros(&[2])).is_err());
    }
}
