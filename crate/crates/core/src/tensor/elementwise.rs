use super::Tensor;
use crate::error::{shape_err, Result};

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!(
            "{op}: operand shapes differ, {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

impl Tensor {
    /// Unary map with a derivative expressed through the input value `x` and output value `y`.
    fn unary<F, D>(&self, op: &'static str, f: F, df: D) -> Result<Tensor>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let out: Vec<f64> = self.values().iter().map(|&x| f(x)).collect();
        let saved = out.clone();
        Tensor::from_op(op, self.shape().to_vec(), out, &[self], move |g, inputs| {
            let x = inputs[0].values();
            vec![Some(
                g.iter()
                    .zip(x)
                    .zip(&saved)
                    .map(|((g, &x), &y)| g * df(x, y))
                    .collect(),
            )]
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let out = self.values().iter().zip(other.values()).map(|(a, b)| a + b).collect();
        Tensor::from_op("add", self.shape().to_vec(), out, &[self, other], |g, _| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let out = self.values().iter().zip(other.values()).map(|(a, b)| a - b).collect();
        Tensor::from_op("sub", self.shape().to_vec(), out, &[self, other], |g, _| {
            vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]
        })
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let out = self.values().iter().zip(other.values()).map(|(a, b)| a * b).collect();
        Tensor::from_op("mul", self.shape().to_vec(), out, &[self, other], |g, inputs| {
            let (a, b) = (inputs[0].values(), inputs[1].values());
            vec![
                Some(g.iter().zip(b).map(|(g, b)| g * b).collect()),
                Some(g.iter().zip(a).map(|(g, a)| g * a).collect()),
            ]
        })
    }

    pub fn scale(&self, k: f64) -> Result<Tensor> {
        self.unary("scale", |x| k * x, move |_, _| k)
    }

    pub fn add_scalar(&self, k: f64) -> Result<Tensor> {
        self.unary("add_scalar", |x| x + k, |_, _| 1.0)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary("sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn cos(&self) -> Result<Tensor> {
        self.unary("cos", f64::cos, |x, _| -x.sin())
    }

    pub fn sin(&self) -> Result<Tensor> {
        self.unary("sin", f64::sin, |x, _| x.cos())
    }

    /// Smooth saturating map with unit slope at zero: `hi·tanh(x/hi)` for
    /// `x ≥ 0` and `lo·tanh(x/lo)` below, so the range is `(−lo, hi)` and
    /// zero maps to zero exactly.
    pub fn soft_bound(&self, lo: f64, hi: f64) -> Result<Tensor> {
        let k = move |x: f64| if x >= 0.0 { hi } else { lo };
        self.unary(
            "soft_bound",
            move |x| k(x) * (x / k(x)).tanh(),
            move |x, y| 1.0 - (y / k(x)).powi(2),
        )
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    /// Elementwise `atan2(self, x)`, with `self` as the ordinate.
    ///
    /// The derivative at the origin is taken as zero.
    pub fn atan2(&self, x: &Tensor) -> Result<Tensor> {
        same_shape("atan2", self, x)?;
        let out = self
            .values()
            .iter()
            .zip(x.values())
            .map(|(&y, &x)| y.atan2(x))
            .collect();
        Tensor::from_op("atan2", self.shape().to_vec(), out, &[self, x], |g, inputs| {
            let (ys, xs) = (inputs[0].values(), inputs[1].values());
            let mut gy = Vec::with_capacity(g.len());
            let mut gx = Vec::with_capacity(g.len());
            for ((g, &y), &x) in g.iter().zip(ys).zip(xs) {
                let r2 = x * x + y * y;
                if r2 > 0.0 {
                    gy.push(g * x / r2);
                    gx.push(-g * y / r2);
                } else {
                    gy.push(0.0);
                    gx.push(0.0);
                }
            }
            vec![Some(gy), Some(gx)]
        })
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Result<Tensor> {
        let s = self.values().iter().sum();
        let n = self.len();
        Tensor::from_op("sum", Vec::new(), vec![s], &[self], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean(&self) -> Result<Tensor> {
        let n = self.len().max(1);
        self.sum()?.scale(1.0 / n as f64)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
