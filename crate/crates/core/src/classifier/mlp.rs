//! Softmax classifier with an optional rectified hidden layer.
//!
//! Parameters live in one flat buffer in the order `W1, b1, W2, b2`
//! (row-major, `W1` is `D x H`, `W2` is `H x 5`); without a hidden layer
//! the buffer is `W2 (D x 5), b2`. Gradients use the same layout, which
//! keeps optimizers and finite-difference checks elementwise.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::label::NUM_CLASSES;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl Mlp {
    pub fn n_params(dim: usize, hidden: usize) -> usize {
        if hidden == 0 {
            dim * NUM_CLASSES + NUM_CLASSES
        } else {
            dim * hidden + hidden + hidden * NUM_CLASSES + NUM_CLASSES
        }
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            params: vec![0.0; Self::n_params(dim, hidden)],
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut m = Self::zeros(dim, hidden);
        let (w1, w2) = m.weight_ranges();
        for (range, fan_in) in [(w1, dim), (w2, if hidden == 0 { dim } else { hidden })] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut m.params[range] {
                *p = rng.uniform(-bound, bound);
            }
        }
        m
    }

    pub fn from_params(dim: usize, hidden: usize, params: Vec<f64>) -> Option<Self> {
        (params.len() == Self::n_params(dim, hidden)).then_some(Self { dim, hidden, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Ranges of the weight matrices (`W1` empty without a hidden layer).
    fn weight_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (d, h) = (self.dim, self.hidden);
        if h == 0 {
            (0..0, 0..d * NUM_CLASSES)
        } else {
            let w2 = d * h + h;
            (0..d * h, w2..w2 + h * NUM_CLASSES)
        }
    }

    fn views(params: &[f64], d: usize, h: usize) -> Views<'_> {
        let view2 = |off: usize, r: usize, c: usize| {
            ArrayView2::from_shape((r, c), &params[off..off + r * c]).expect("layout")
        };
        let view1 = |off: usize, n: usize| ArrayView1::from(&params[off..off + n]);
        if h == 0 {
            Views {
                layer1: None,
                w2: view2(0, d, NUM_CLASSES),
                b2: view1(d * NUM_CLASSES, NUM_CLASSES),
            }
        } else {
            let o = d * h + h;
            Views {
                layer1: Some((view2(0, d, h), view1(d * h, h))),
                w2: view2(o, h, NUM_CLASSES),
                b2: view1(o + h * NUM_CLASSES, NUM_CLASSES),
            }
        }
    }

    /// Logits for a batch (`B x D` in, `B x 5` out).
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let v = Self::views(&self.params, self.dim, self.hidden);
        match v.layer1 {
            Some((w1, b1)) => {
                let a = (x.dot(&w1) + b1).mapv(relu);
                a.dot(&v.w2) + v.b2
            }
            None => x.dot(&v.w2) + v.b2,
        }
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let z = self.logits(x);
        let mut total = 0.0;
        for (row, &t) in z.outer_iter().zip(y) {
            total -= log_softmax(row)[t];
        }
        total / y.len() as f64
    }

    /// Mean cross-entropy and its gradient, written into `grad` (same
    /// layout as the parameters).
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: &[usize], grad: &mut [f64]) -> f64 {
        assert_eq!(grad.len(), self.params.len());
        let b = y.len() as f64;
        let v = Self::views(&self.params, self.dim, self.hidden);
        let (input, pre) = match v.layer1 {
            Some((w1, b1)) => {
                let pre = x.dot(&w1) + b1;
                (pre.mapv(relu), Some(pre))
            }
            None => (x.to_owned(), None),
        };
        let z = input.dot(&v.w2) + v.b2;

        let mut loss = 0.0;
        let mut dz = Array2::<f64>::zeros(z.raw_dim());
        for ((row, mut drow), &t) in z.outer_iter().zip(dz.outer_iter_mut()).zip(y) {
            let ls = log_softmax(row);
            loss -= ls[t];
            for k in 0..NUM_CLASSES {
                drow[k] = (ls[k].exp() - if k == t { 1.0 } else { 0.0 }) / b;
            }
        }

        let dw2 = input.t().dot(&dz);
        let db2 = dz.sum_axis(Axis(0));
        let (_, w2_range) = self.weight_ranges();
        copy_into(&mut grad[w2_range.clone()], dw2.iter());
        copy_into(&mut grad[w2_range.end..], db2.iter());

        if let (Some(pre), Some(_)) = (pre, v.layer1) {
            let mut da = dz.dot(&v.w2.t());
            da.zip_mut_with(&pre, |g, &p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            });
            let dw1 = x.t().dot(&da);
            let db1 = da.sum_axis(Axis(0));
            let dh = self.dim * self.hidden;
            copy_into(&mut grad[..dh], dw1.iter());
            copy_into(&mut grad[dh..dh + self.hidden], db1.iter());
        }
        loss / b
    }
}

struct Views<'a> {
    layer1: Option<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
}

fn copy_into<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *s;
    }
}

/// Rectifier with a zero subgradient at 0.
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn log_softmax(z: ArrayView1<f64>) -> Array1<f64> {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.mapv(|v| v - lse)
}

/// Probabilities with the maximum subtracted before exponentiation.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes() {
        assert_eq!(Mlp::n_params(80, 0), 405);
        assert_eq!(Mlp::n_params(80, 256), 80 * 256 + 256 + 256 * 5 + 5);
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let mut rng = SeededRng::new(1);
        let m = Mlp::init(16, 4, &mut rng);
        let b = 0.25;
        assert!(m.params[..64].iter().all(|p| p.abs() <= b));
        assert!(m.params[64..68].iter().all(|&p| p == 0.0));
        assert!(m.params[68..88].iter().all(|p| p.abs() <= 0.5));
        assert!(m.params[88..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn softmax_shift_invariant() {
        let z = [1.5, -2.0, 0.3, 7.0, 7.0];
        let a = softmax(&z);
        let b = softmax(&z.map(|v| v + 123.4));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(argmax(&z), 3);
    }
}
