//! Exact expectations over all `2^n` allocations, for small `n`.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::gnn::{gnn_backward, gnn_forward, GnnParams, ParamGrad};

use super::{lagrangian, score_bits, score_upstream};

const MAX_USERS: usize = 20;

/// Every bit pattern of length `n`, in binary counting order.
pub fn all_bit_patterns(n: usize) -> Result<Vec<Vec<bool>>> {
    if n > MAX_USERS {
        return Err(Error::InvalidParameter(format!(
            "enumeration over {n} users is too large"
        )));
    }
    Ok((0u32..1 << n)
        .map(|m| (0..n).map(|i| m >> i & 1 == 1).collect())
        .collect())
}

fn pattern_prob(q: &[f64], bits: &[bool]) -> f64 {
    q.iter()
        .zip(bits)
        .map(|(&qi, &b)| if b { qi } else { 1.0 - qi })
        .product()
}

fn pattern_value(
    real: &ChannelRealization,
    q: &[f64],
    bits: &[bool],
    p0: f64,
    lambda: f64,
    pmax: f64,
) -> Result<f64> {
    let s = score_bits(real, q.to_vec(), bits.to_vec(), p0, false)?;
    Ok(lagrangian(&s, lambda, pmax))
}

/// Problem data shared by the enumeration routines.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub params: &'a GnnParams,
    pub real: &'a ChannelRealization,
    pub x: &'a [f64],
    pub p0: f64,
    pub lambda: f64,
    pub pmax: f64,
}

impl Instance<'_> {
    fn probs(&self) -> Result<Vec<f64>> {
        Ok(gnn_forward(self.params, &self.real.gso, self.x)?.0)
    }

    /// `E[Lagrangian]` under the policy's Bernoulli law.
    pub fn expected_lagrangian(&self) -> Result<f64> {
        let q = self.probs()?;
        let mut total = 0.0;
        for bits in all_bit_patterns(q.len())? {
            total += pattern_prob(&q, &bits)
                * pattern_value(self.real, &q, &bits, self.p0, self.lambda, self.pmax)?;
        }
        Ok(total)
    }

    /// `grad E[Lagrangian]` through the chain rule: the expectation is
    /// multilinear in `q`, with `dE/dq_i = E[L | b_i = 1] - E[L | b_i = 0]`.
    pub fn exact_gradient(&self) -> Result<ParamGrad> {
        let (q, tape) = gnn_forward(self.params, &self.real.gso, self.x)?;
        let n = q.len();
        let patterns = all_bit_patterns(n)?;
        let values: Vec<f64> = patterns
            .iter()
            .map(|b| pattern_value(self.real, &q, b, self.p0, self.lambda, self.pmax))
            .collect::<Result<_>>()?;
        let mut d_q = vec![0.0; n];
        for (m, bits) in patterns.iter().enumerate() {
            for i in (0..n).filter(|&i| bits[i]) {
                let partner = m & !(1 << i);
                let others: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| if bits[j] { q[j] } else { 1.0 - q[j] })
                    .product();
                d_q[i] += others * (values[m] - values[partner]);
            }
        }
        gnn_backward(tape, &d_q)
    }

    /// `sum_b P(b) L(b) grad ln P(b)`: the mean of the single-sample score
    /// estimator without a baseline.
    pub fn estimator_expectation(&self) -> Result<ParamGrad> {
        self.weighted_score(|v| v)
    }

    /// `sum_b P(b) c grad ln P(b)` for a constant `c`; zero for any `c`.
    pub fn constant_score(&self, c: f64) -> Result<ParamGrad> {
        self.weighted_score(|_| c)
    }

    fn weighted_score(&self, f: impl Fn(f64) -> f64) -> Result<ParamGrad> {
        let q = self.probs()?;
        let mut grad = ParamGrad::zeros_like(self.params);
        for bits in all_bit_patterns(q.len())? {
            let (_, tape) = gnn_forward(self.params, &self.real.gso, self.x)?;
            let value = pattern_value(self.real, &q, &bits, self.p0, self.lambda, self.pmax)?;
            let g = gnn_backward(tape, &score_upstream(&q, &bits))?;
            grad.accumulate(&g, pattern_prob(&q, &bits) * f(value));
        }
        Ok(grad)
    }

    /// Central differences of [`Self::expected_lagrangian`] in every tap.
    pub fn finite_difference_gradient(&self, step: f64) -> Result<Vec<f64>> {
        let base = self.params.flat();
        let mut out = Vec::with_capacity(base.len());
        let mut shifted = self.params.clone();
        for i in 0..base.len() {
            let mut eval = |delta: f64| -> Result<f64> {
                let mut p = base.clone();
                p[i] += delta;
                shifted.set_flat(&p)?;
                Instance {
                    params: &shifted,
                    ..*self
                }
                .expected_lagrangian()
            };
            let up = eval(step)?;
            let down = eval(-step)?;
            out.push((up - down) / (2.0 * step));
        }
        Ok(out)
    }
}
