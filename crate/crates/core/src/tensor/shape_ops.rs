use super::Tensor;
use crate::error::{shape_err, Result};

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(shape_err!(
                "cannot reshape {:?} into {:?}",
                self.shape(),
                shape
            ));
        }
        Tensor::from_op("reshape", shape.to_vec(), self.values().to_vec(), &[self], |g, _| {
            vec![Some(g.to_vec())]
        })
    }

    /// Columns `start..start + len` of a `[N, M]` tensor.
    pub fn narrow_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        let [n, m] = *self.shape() else {
            return Err(shape_err!("narrow_cols expects [N, M], got {:?}", self.shape()));
        };
        if start + len > m {
            return Err(shape_err!("narrow_cols {start}+{len} exceeds width {m}"));
        }
        let out: Vec<f64> = self
            .values()
            .chunks(m)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Tensor::from_op("narrow_cols", vec![n, len], out, &[self], move |g, _| {
            let mut gx = vec![0.0; n * m];
            for (r, grow) in g.chunks(len).enumerate() {
                gx[r * m + start..r * m + start + len].copy_from_slice(grow);
            }
            vec![Some(gx)]
        })
    }

    /// Concatenates `[N, m_i]` tensors along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let n = match parts.first().map(|t| t.shape()) {
            Some([n, _]) => *n,
            _ => return Err(shape_err!("concat_cols needs at least one [N, M] tensor")),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            match *p.shape() {
                [pn, m] if pn == n => widths.push(m),
                _ => {
                    return Err(shape_err!(
                        "concat_cols: {:?} does not have {n} rows",
                        p.shape()
                    ))
                }
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (p, &m) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.values()[r * m..(r + 1) * m]);
            }
        }
        Tensor::from_op("concat_cols", vec![n, total], out, parts, move |g, _| {
            let mut grads: Vec<Vec<f64>> = widths.iter().map(|&m| Vec::with_capacity(n * m)).collect();
            for grow in g.chunks(total) {
                let mut off = 0;
                for (gp, &m) in grads.iter_mut().zip(&widths) {
                    gp.extend_from_slice(&grow[off..off + m]);
                    off += m;
                }
            }
            grads.into_iter().map(Some).collect()
        })
    }

    /// Concatenates tensors along the leading axis; trailing dims must agree.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Err(shape_err!("concat_rows needs at least one tensor"));
        };
        if first.shape().is_empty() {
            return Err(shape_err!("concat_rows on a rank-0 tensor"));
        }
        let tail = first.shape()[1..].to_vec();
        let mut lead = 0;
        for p in parts {
            if p.shape().is_empty() || p.shape()[1..] != tail[..] {
                return Err(shape_err!(
                    "concat_rows: {:?} incompatible with trailing dims {:?}",
                    p.shape(),
                    tail
                ));
            }
            lead += p.shape()[0];
        }
        let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        for p in parts {
            out.extend_from_slice(p.values());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        Tensor::from_op("concat_rows", shape, out, parts, move |g, _| {
            let mut off = 0;
            lens.iter()
                .map(|&l| {
                    let s = g[off..off + l].to_vec();
                    off += l;
                    Some(s)
                })
                .collect()
        })
    }

    /// Slices `start..start + len` of the leading axis.
    pub fn narrow_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let Some(&lead) = self.shape().first() else {
            return Err(shape_err!("narrow_rows on a rank-0 tensor"));
        };
        if start + len > lead {
            return Err(shape_err!("narrow_rows {start}+{len} exceeds {lead}"));
        }
        let stride = self.len() / lead.max(1);
        let mut shape = self.shape().to_vec();
        shape[0] = len;
        let out = self.values()[start * stride..(start + len) * stride].to_vec();
        let total = self.len();
        Tensor::from_op("narrow_rows", shape, out, &[self], move |g, _| {
            let mut gx = vec![0.0; total];
            gx[start * stride..(start + len) * stride].copy_from_slice(g);
            vec![Some(gx)]
        })
    }

    /// Slice `index` of the leading axis, keeping the axis (size 1).
    pub fn select_row(&self, index: usize) -> Result<Tensor> {
        let Some(&lead) = self.shape().first() else {
            return Err(shape_err!("select_row on a rank-0 tensor"));
        };
        if index >= lead {
            return Err(shape_err!("select_row {index} out of range {lead}"));
        }
        let stride = self.len() / lead;
        let mut shape = self.shape().to_vec();
        shape[0] = 1;
        let out = self.values()[index * stride..(index + 1) * stride].to_vec();
        let total = self.len();
        Tensor::from_op("select_row", shape, out, &[self], move |g, _| {
            let mut gx = vec![0.0; total];
            gx[index * stride..(index + 1) * stride].copy_from_slice(g);
            vec![Some(gx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn narrow_and_concat_are_inverse() {
        let x = Tensor::new(&[2, 5], (0..10).map(f64::from).collect()).unwrap();
        let a = x.narrow_cols(0, 2).unwrap();
        let b = x.narrow_cols(2, 3).unwrap();
        let y = Tensor::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(y.values(), x.values());
        assert_eq!(a.values(), &[0.0, 1.0, 5.0, 6.0]);
    }

    #[test]
    fn concat_rows_stacks() {
        let a = Tensor::full(&[1, 2, 2], 1.0);
        let b = Tensor::full(&[2, 2, 2], 2.0);
        let y = Tensor::concat_rows(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[3, 2, 2]);
        assert!(Tensor::concat_rows(&[&a, &Tensor::zeros(&[1, 3])]).is_err());
    }

    #[test]
    fn select_row_gradient_scatters() {
        let x = Tensor::parameter(&[3, 2], vec![1.0; 6]).unwrap();
        let loss = x.select_row(1).unwrap().sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
