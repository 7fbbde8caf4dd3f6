//! Adam on flattened network taps.

use super::{GnnParams, ParamGrad};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: &GnnParams, lr: f64) -> Self {
        let n = params.num_params();
        Self {
            lr,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Moves against `grad` (minimization).
    pub fn descend(&mut self, params: &mut GnnParams, grad: &ParamGrad) -> Result<()> {
        self.step(params, grad, -1.0)
    }

    /// Moves along `grad` (maximization).
    pub fn ascend(&mut self, params: &mut GnnParams, grad: &ParamGrad) -> Result<()> {
        self.step(params, grad, 1.0)
    }

    fn step(&mut self, params: &mut GnnParams, grad: &ParamGrad, sign: f64) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        if !grad.matches(params) {
            return Err(Error::dim("gradient does not match the parameters"));
        }
        self.t += 1;
        let g = grad.flat();
        let mut p = params.flat();
        for i in 0..p.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g[i] * g[i];
            let mh = self.m[i] / (1.0 - BETA1.powi(self.t));
            let vh = self.v[i] / (1.0 - BETA2.powi(self.t));
            p[i] += sign * self.lr * mh / (vh.sqrt() + EPS);
        }
        params.set_flat(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{FilterTaps, Nonlinearity, OutputSquash};

    #[test]
    fn first_step_moves_each_tap_by_the_rate() {
        let mut p = GnnParams::new(vec![FilterTaps(vec![1.0, -2.0])], Nonlinearity::Relu, OutputSquash::None).unwrap();
        let mut g = ParamGrad::zeros_like(&p);
        g.layers[0] = vec![3.0, -0.5];
        let mut opt = Adam::new(&p, 0.1);
        opt.descend(&mut p, &g).unwrap();
        let f = p.flat();
        assert!((f[0] - 0.9).abs() < 1e-7);
        assert!((f[1] + 1.9).abs() < 1e-7);
        opt.ascend(&mut p, &g).unwrap();
        assert!((p.flat()[0] - 0.9).abs() < 0.11);
    }
}
