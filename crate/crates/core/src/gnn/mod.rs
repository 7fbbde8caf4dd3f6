//! Polynomial graph filters and single-feature graph neural networks.
//!
//! A filter with taps `h_0..h_K` maps `x` to `sum_k h_k S^k x`, evaluated
//! by repeated sparse mat-vecs. A layer applies a pointwise nonlinearity to
//! a filter output; the network is a stack of layers whose parameter count
//! does not depend on the graph.

mod checkpoint;
pub mod grid;
pub mod multi;
pub mod optim;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, CsrMatrix};
use crate::rng;

pub use checkpoint::{read_checkpoint, write_checkpoint};

/// Filter coefficients `h_0..h_K` (so `K + 1` taps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTaps(pub Vec<f64>);

impl FilterTaps {
    pub fn new(h: Vec<f64>) -> Self {
        Self(h)
    }

    /// `K`, the highest power of the shift operator.
    pub fn order(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "slope", rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    LeakyRelu(f64),
    AbsValue,
}

impl Nonlinearity {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => v.max(0.0),
            Nonlinearity::LeakyRelu(a) => {
                if v > 0.0 {
                    v
                } else {
                    a * v
                }
            }
            Nonlinearity::AbsValue => v.abs(),
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::LeakyRelu(a) => {
                if v > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Nonlinearity::AbsValue => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::LeakyRelu(a) if !(0.0..=1.0).contains(&a) => Err(
                Error::InvalidParameter(format!("leaky slope {a} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Readout applied to the last layer. With `Sigmoid` the final pre-activation
/// is mapped to `(0, 1)` in place of the hidden nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSquash {
    Sigmoid,
    None,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// The learnable coefficients `h_{lk}` plus the fixed architecture choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub layers: Vec<FilterTaps>,
    pub nonlinearity: Nonlinearity,
    pub output_squash: OutputSquash,
}

impl GnnParams {
    pub fn new(
        layers: Vec<FilterTaps>,
        nonlinearity: Nonlinearity,
        output_squash: OutputSquash,
    ) -> Result<Self> {
        let p = Self {
            layers,
            nonlinearity,
            output_squash,
        };
        p.validate()?;
        Ok(p)
    }

    /// Taps drawn uniformly from `[-scale, scale]`.
    pub fn random(
        depth: usize,
        taps: usize,
        nonlinearity: Nonlinearity,
        output_squash: OutputSquash,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::rng(seed);
        let layers = (0..depth)
            .map(|_| {
                FilterTaps(
                    (0..taps)
                        .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
                        .collect(),
                )
            })
            .collect();
        Self::new(layers, nonlinearity, output_squash)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("a network needs at least one layer".into()));
        }
        if let Some(l) = self.layers.iter().position(|t| t.0.is_empty()) {
            return Err(Error::InvalidParameter(format!("layer {l} has no taps")));
        }
        if self.layers.iter().flat_map(|t| &t.0).any(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter("non-finite filter tap".into()));
        }
        self.nonlinearity.validate()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|t| t.0.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|t| t.0.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::dim(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut it = values.iter();
        for t in &mut self.layers {
            for h in &mut t.0 {
                *h = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `params += step * grad`
    pub fn add_scaled(&mut self, grad: &ParamGrad, step: f64) -> Result<()> {
        if !grad.matches(self) {
            return Err(Error::dim("gradient shape does not match parameters"));
        }
        for (t, g) in self.layers.iter_mut().zip(&grad.layers) {
            axpy(step, g, &mut t.0);
        }
        Ok(())
    }
}

/// Gradient with the same layout as [`GnnParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub layers: Vec<Vec<f64>>,
}

impl ParamGrad {
    pub fn zeros_like(p: &GnnParams) -> Self {
        Self {
            layers: p.layers.iter().map(|t| vec![0.0; t.0.len()]).collect(),
        }
    }

    pub fn matches(&self, p: &GnnParams) -> bool {
        self.layers.len() == p.layers.len()
            && self.layers.iter().zip(&p.layers).all(|(g, t)| g.len() == t.0.len())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.layers.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|g| g.is_finite())
    }

    /// `self += c * other`
    pub fn accumulate(&mut self, other: &ParamGrad, c: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(c, b, a);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.layers.iter_mut().flatten().for_each(|g| *g *= c);
    }
}

fn check_signal(gso: &CsrMatrix, x: &[f64]) -> Result<()> {
    if x.len() != gso.n() {
        return Err(Error::dim(format!(
            "signal of length {} on a {}-node graph",
            x.len(),
            gso.n()
        )));
    }
    Ok(())
}

/// `[x, S x, ..., S^K x]`
pub fn shift_powers(gso: &CsrMatrix, x: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
    check_signal(gso, x)?;
    let mut out = Vec::with_capacity(order + 1);
    out.push(x.to_vec());
    for k in 0..order {
        let mut next = vec![0.0; x.len()];
        gso.matvec_into(&out[k], &mut next);
        out.push(next);
    }
    Ok(out)
}

/// `y = sum_k h_k S^k x`
pub fn filter_apply(taps: &FilterTaps, gso: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_signal(gso, x)?;
    let h = taps.coeffs();
    let n = x.len();
    let mut y = vec![0.0; n];
    if h.is_empty() {
        return Ok(y);
    }
    let mut shifted = x.to_vec();
    let mut scratch = vec![0.0; n];
    axpy(h[0], &shifted, &mut y);
    for &hk in &h[1..] {
        gso.matvec_into(&shifted, &mut scratch);
        std::mem::swap(&mut shifted, &mut scratch);
        axpy(hk, &shifted, &mut y);
    }
    Ok(y)
}

/// `sum_k h_k (Sᵀ)^k g`, by Horner's rule.
fn filter_apply_transpose(h: &[f64], gso: &CsrMatrix, g: &[f64]) -> Result<Vec<f64>> {
    let Some((&last, rest)) = h.split_last() else {
        return Ok(vec![0.0; g.len()]);
    };
    let mut acc: Vec<f64> = g.iter().map(|v| last * v).collect();
    for &hk in rest.iter().rev() {
        acc = gso.matvec_transpose(&acc)?;
        axpy(hk, g, &mut acc);
    }
    Ok(acc)
}

struct LayerCache {
    shifts: Vec<Vec<f64>>,
    pre: Vec<f64>,
}

/// Intermediates of one forward pass, consumed by [`gnn_backward`].
pub struct GnnTape<'a> {
    gso: &'a CsrMatrix,
    params: GnnParams,
    layers: Vec<LayerCache>,
    output: Vec<f64>,
}

impl GnnTape<'_> {
    pub fn n(&self) -> usize {
        self.output.len()
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Final-layer filter output before the readout (equals the output when
    /// there is no sigmoid readout).
    pub fn pre_squash(&self) -> Vec<f64> {
        let last = self.layers.last().expect("at least one layer");
        match self.params.output_squash {
            OutputSquash::Sigmoid => last.pre.clone(),
            OutputSquash::None => self.output.clone(),
        }
    }

    pub fn params(&self) -> &GnnParams {
        &self.params
    }
}

/// Runs the network and records everything needed for exact gradients.
pub fn gnn_forward<'a>(
    params: &GnnParams,
    gso: &'a CsrMatrix,
    x: &[f64],
) -> Result<(Vec<f64>, GnnTape<'a>)> {
    params.validate()?;
    check_signal(gso, x)?;
    let depth = params.depth();
    let mut layers = Vec::with_capacity(depth);
    let mut signal = x.to_vec();
    for (l, taps) in params.layers.iter().enumerate() {
        let shifts = shift_powers(gso, &signal, taps.order())?;
        let mut pre = vec![0.0; signal.len()];
        for (hk, s) in taps.coeffs().iter().zip(&shifts) {
            axpy(*hk, s, &mut pre);
        }
        let last = l + 1 == depth;
        signal = if last && params.output_squash == OutputSquash::Sigmoid {
            pre.iter().map(|&v| sigmoid(v)).collect()
        } else {
            pre.iter().map(|&v| params.nonlinearity.apply(v)).collect()
        };
        layers.push(LayerCache { shifts, pre });
    }
    let tape = GnnTape {
        gso,
        params: params.clone(),
        layers,
        output: signal.clone(),
    };
    Ok((signal, tape))
}

/// Forward pass without keeping a tape.
pub fn gnn_apply(params: &GnnParams, gso: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    gnn_forward(params, gso, x).map(|(y, _)| y)
}

/// Reverse-mode gradient of a scalar loss with respect to every tap, given
/// the loss gradient with respect to the network output.
pub fn gnn_backward(tape: GnnTape<'_>, d_output: &[f64]) -> Result<ParamGrad> {
    if d_output.len() != tape.n() {
        return Err(Error::TapeMismatch(format!(
            "upstream gradient has length {} but the tape covers {} nodes",
            d_output.len(),
            tape.n()
        )));
    }
    if tape.layers.len() != tape.params.depth() {
        return Err(Error::TapeMismatch("layer count differs from parameters".into()));
    }
    let depth = tape.params.depth();
    let mut grad = ParamGrad::zeros_like(&tape.params);
    let mut upstream = d_output.to_vec();
    for l in (0..depth).rev() {
        let cache = &tape.layers[l];
        let squash = l + 1 == depth && tape.params.output_squash == OutputSquash::Sigmoid;
        let g_pre: Vec<f64> = cache
            .pre
            .iter()
            .zip(&upstream)
            .map(|(&z, &g)| {
                let slope = if squash {
                    let s = sigmoid(z);
                    s * (1.0 - s)
                } else {
                    tape.params.nonlinearity.derivative(z)
                };
                g * slope
            })
            .collect();
        for (gk, s) in grad.layers[l].iter_mut().zip(&cache.shifts) {
            *gk = dot(&g_pre, s);
        }
        if l > 0 {
            upstream = filter_apply_transpose(tape.params.layers[l].coeffs(), tape.gso, &g_pre)?;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Triplet;
    use nalgebra::{DMatrix, DVector};

    fn random_symmetric(n: usize, density: f64, seed: u64) -> CsrMatrix {
        let mut rng = rng::rng(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < density {
                    let w = rng.random::<f64>() * 0.5;
                    t.push(Triplet { i, j, w });
                    t.push(Triplet { i: j, j: i, w });
                }
            }
        }
        CsrMatrix::from_triplets(n, &t).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::rng(seed);
        (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
    }

    fn dense_filter(h: &[f64], s: &DMatrix<f64>, x: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut power = DMatrix::<f64>::identity(n, n);
        let xv = DVector::from_column_slice(x);
        let mut y = DVector::zeros(n);
        for &hk in h {
            y += hk * &power * &xv;
            power = &power * s;
        }
        y
    }

    #[test]
    fn identity_taps() {
        let s = random_symmetric(6, 0.5, 1);
        let x = random_vec(6, 2);
        assert_eq!(filter_apply(&FilterTaps(vec![1.0, 0.0, 0.0]), &s, &x).unwrap(), x);
    }

    #[test]
    fn one_hop_average() {
        let s = CsrMatrix::from_triplets(
            2,
            &[Triplet { i: 0, j: 1, w: 0.5 }, Triplet { i: 1, j: 0, w: 0.5 }],
        )
        .unwrap();
        let y = filter_apply(&FilterTaps(vec![0.0, 1.0]), &s, &[2.0, 0.0]).unwrap();
        assert_eq!(y, vec![0.0, 1.0]);
    }

    #[test]
    fn filter_matches_dense_powers() {
        let s = random_symmetric(8, 0.4, 3);
        let x = random_vec(8, 4);
        let h = [0.3, -0.7, 0.2, 0.9];
        let y = filter_apply(&FilterTaps(h.to_vec()), &s, &x).unwrap();
        let yd = dense_filter(&h, &s.to_dense(), &x);
        for i in 0..8 {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_rejects_wrong_length() {
        let s = random_symmetric(4, 0.5, 5);
        assert!(matches!(
            filter_apply(&FilterTaps(vec![1.0]), &s, &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn filter_is_linear() {
        let s = random_symmetric(10, 0.3, 6);
        let (x1, x2) = (random_vec(10, 7), random_vec(10, 8));
        let (h1, h2) = (
            FilterTaps(vec![0.2, 0.5, -0.1]),
            FilterTaps(vec![-1.0, 0.3, 0.4]),
        );
        let (a, b) = (1.7, -0.6);
        let mix_x: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let lhs = filter_apply(&h1, &s, &mix_x).unwrap();
        let r1 = filter_apply(&h1, &s, &x1).unwrap();
        let r2 = filter_apply(&h1, &s, &x2).unwrap();
        for i in 0..10 {
            assert!((lhs[i] - (a * r1[i] + b * r2[i])).abs() < 1e-12);
        }
        let mix_h = FilterTaps(h1.0.iter().zip(&h2.0).map(|(p, q)| a * p + b * q).collect());
        let lhs = filter_apply(&mix_h, &s, &x1).unwrap();
        let r2 = filter_apply(&h2, &s, &x1).unwrap();
        for i in 0..10 {
            assert!((lhs[i] - (a * r1[i] + b * r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn single_identity_layer_passes_nonnegative_input() {
        let s = random_symmetric(5, 0.5, 9);
        let x = [0.1, 2.0, 0.0, 3.5, 1.0];
        let p = GnnParams::new(
            vec![FilterTaps(vec![1.0, 0.0])],
            Nonlinearity::Relu,
            OutputSquash::None,
        )
        .unwrap();
        assert_eq!(gnn_apply(&p, &s, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_taps_give_zero_before_squash() {
        let s = random_symmetric(5, 0.5, 9);
        let x = random_vec(5, 10);
        let p = GnnParams::new(
            vec![FilterTaps(vec![0.0; 3]); 2],
            Nonlinearity::AbsValue,
            OutputSquash::Sigmoid,
        )
        .unwrap();
        let (y, tape) = gnn_forward(&p, &s, &x).unwrap();
        assert!(tape.pre_squash().iter().all(|&v| v == 0.0));
        assert!(y.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn two_layers_on_path_match_dense() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push(Triplet { i, j: i + 1, w: 0.5 });
            t.push(Triplet { i: i + 1, j: i, w: 0.5 });
        }
        let s = CsrMatrix::from_triplets(n, &t).unwrap();
        let x = random_vec(n, 11);
        let p = GnnParams::new(
            vec![FilterTaps(vec![0.5, -1.0, 0.3]), FilterTaps(vec![-0.2, 0.8, 1.1])],
            Nonlinearity::LeakyRelu(0.1),
            OutputSquash::None,
        )
        .unwrap();
        let y = gnn_apply(&p, &s, &x).unwrap();
        let sd = s.to_dense();
        let act = |v: DVector<f64>| v.map(|z| if z > 0.0 { z } else { 0.1 * z });
        let h1 = act(dense_filter(&p.layers[0].0, &sd, &x));
        let h2 = act(dense_filter(&p.layers[1].0, &sd, h1.as_slice()));
        for i in 0..n {
            assert!((y[i] - h2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_case_gradient_closed_form() {
        // loss = ½‖y‖², positive pre-activations: dL/dh_k = yᵀ S^k x
        let s = random_symmetric(7, 0.5, 12);
        let x: Vec<f64> = random_vec(7, 13).iter().map(|v| v.abs() + 0.1).collect();
        let p = GnnParams::new(
            vec![FilterTaps(vec![0.5, 0.4, 0.3])],
            Nonlinearity::Relu,
            OutputSquash::None,
        )
        .unwrap();
        let (y, tape) = gnn_forward(&p, &s, &x).unwrap();
        let grad = gnn_backward(tape, &y).unwrap();
        let powers = shift_powers(&s, &x, 2).unwrap();
        assert_eq!(powers.len(), 3);
        for (g, pk) in grad.layers[0].iter().zip(&powers) {
            assert!((g - dot(&y, pk)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let s = random_symmetric(6, 0.5, 14);
        let p = GnnParams::random(3, 3, Nonlinearity::Relu, OutputSquash::Sigmoid, 1.0, 15)
            .unwrap();
        let (_, tape) = gnn_forward(&p, &s, &random_vec(6, 16)).unwrap();
        let g = gnn_backward(tape, &[0.0; 6]).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_upstream_is_rejected() {
        let s = random_symmetric(6, 0.5, 14);
        let p = GnnParams::random(1, 2, Nonlinearity::Relu, OutputSquash::None, 1.0, 15)
            .unwrap();
        let (_, tape) = gnn_forward(&p, &s, &random_vec(6, 16)).unwrap();
        assert!(matches!(gnn_backward(tape, &[1.0; 5]), Err(Error::TapeMismatch(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5u64 {
            let s = random_symmetric(8, 0.4, 100 + seed);
            let x = random_vec(8, 200 + seed);
            let target = random_vec(8, 300 + seed);
            let p = GnnParams::random(
                2,
                3,
                Nonlinearity::LeakyRelu(0.2),
                OutputSquash::Sigmoid,
                1.0,
                400 + seed,
            )
            .unwrap();
            let loss = |p: &GnnParams| {
                let y = gnn_apply(p, &s, &x).unwrap();
                0.5 * y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            };
            let (y, tape) = gnn_forward(&p, &s, &x).unwrap();
            let d: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
            let g = gnn_backward(tape, &d).unwrap().flat();
            let base = p.flat();
            for i in 0..base.len() {
                let step = 1e-5;
                let mut plus = p.clone();
                let mut v = base.clone();
                v[i] += step;
                plus.set_flat(&v).unwrap();
                let mut minus = p.clone();
                v[i] -= 2.0 * step;
                minus.set_flat(&v).unwrap();
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-6);
                assert!(rel < 1e-4, "param {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GnnParams::new(vec![], Nonlinearity::Relu, OutputSquash::None).is_err());
        assert!(GnnParams::new(
            vec![FilterTaps(vec![1.0])],
            Nonlinearity::LeakyRelu(1.5),
            OutputSquash::None
        )
        .is_err());
        assert!(GnnParams::new(
            vec![FilterTaps(vec![f64::NAN])],
            Nonlinearity::Relu,
            OutputSquash::None
        )
        .is_err());
    }
}
