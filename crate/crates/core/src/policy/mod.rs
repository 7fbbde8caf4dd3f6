//! Binary power allocation: a sigmoid-readout GNN gives per-user on
//! probabilities, allocations are Bernoulli draws, and training alternates
//! score-function ascent on the taps with projected ascent on the budget
//! multiplier.

pub mod enumerate;
mod wmmse;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, rates, ChannelModel, ChannelRealization, InputSignal};
use crate::error::{Error, Result};
use crate::geometry::GeometricGraph;
use crate::gnn::optim::Adam;
use crate::gnn::{gnn_backward, gnn_forward, GnnParams, OutputSquash, ParamGrad};
use crate::rng;

pub use wmmse::{wmmse_policy, WmmseOutput};

/// Probabilities are kept this far from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-6;

/// Budget and learning rates. The budget scales with the number of users:
/// `Pmax = budget_fraction * n * p0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocationProblem {
    pub p0: f64,
    pub budget_fraction: f64,
    pub dual_step: f64,
    pub primal_step: f64,
    pub batch: usize,
    pub iters: usize,
    /// Rule applied to the primal gradient during [`train`].
    pub optimizer: PrimalOptimizer,
}

/// `Sgd` adds `primal_step` times the gradient estimate; `Adam` feeds the
/// same estimate to Adam with learning rate `primal_step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalOptimizer {
    #[default]
    Sgd,
    Adam,
}

impl Default for AllocationProblem {
    fn default() -> Self {
        Self {
            p0: 1.0,
            budget_fraction: 0.3,
            dual_step: 1e-3,
            primal_step: 1e-2,
            batch: 8,
            iters: 500,
            optimizer: PrimalOptimizer::Sgd,
        }
    }
}

impl AllocationProblem {
    pub fn pmax(&self, n: usize) -> f64 {
        self.budget_fraction * n as f64 * self.p0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.p0 > 0.0) {
            return bad(format!("p0 must be positive, got {}", self.p0));
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return bad(format!(
                "budget fraction must lie in (0, 1], got {}",
                self.budget_fraction
            ));
        }
        if !(self.dual_step >= 0.0) || !(self.primal_step >= 0.0) {
            return bad("step sizes must be nonnegative".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub probs: Vec<f64>,
    pub bits: Vec<bool>,
    pub allocation: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub total_power: f64,
    pub log_prob: f64,
    /// Some probability hit the clamp.
    pub clamped: bool,
}

/// Budget multiplier, kept nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
}

impl DualState {
    /// `lambda <- max(0, lambda + step * violation)`
    pub fn ascend(&mut self, step: f64, violation: f64) {
        self.lambda = (self.lambda + step * violation).max(0.0);
        assert!(self.lambda >= 0.0, "multiplier left the nonnegative orthant");
    }
}

/// Clamps into `[PROB_CLAMP, 1 - PROB_CLAMP]`; the flag reports whether any
/// value moved.
pub fn clamp_probs(q: &[f64]) -> (Vec<f64>, bool) {
    let mut moved = false;
    let out = q
        .iter()
        .map(|&v| {
            let c = v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            moved |= c != v;
            c
        })
        .collect();
    (out, moved)
}

/// `sum_i [b_i ln q_i + (1 - b_i) ln(1 - q_i)]`
pub fn bernoulli_log_prob(q: &[f64], bits: &[bool]) -> f64 {
    q.iter()
        .zip(bits)
        .map(|(&qi, &b)| if b { qi.ln() } else { (1.0 - qi).ln() })
        .sum()
}

/// Evaluates a fixed bit pattern under probabilities `q` (already clamped).
pub fn score_bits(
    real: &ChannelRealization,
    q: Vec<f64>,
    bits: Vec<bool>,
    p0: f64,
    clamped: bool,
) -> Result<PolicySample> {
    let allocation: Vec<f64> = bits.iter().map(|&b| if b { p0 } else { 0.0 }).collect();
    let r = rates(real, &allocation)?;
    let on = bits.iter().filter(|&&b| b).count();
    Ok(PolicySample {
        log_prob: bernoulli_log_prob(&q, &bits),
        probs: q,
        bits,
        allocation,
        sum_rate: r.iter().sum(),
        rates: r,
        total_power: p0 * on as f64,
        clamped,
    })
}

/// Bernoulli allocation from given probabilities.
pub fn sample_from_probs(
    real: &ChannelRealization,
    q: &[f64],
    p0: f64,
    seed: u64,
) -> Result<PolicySample> {
    if q.len() != real.n() {
        return Err(Error::dim(format!("{} probabilities for {} users", q.len(), real.n())));
    }
    let (q, clamped) = clamp_probs(q);
    let mut rng = rng::rng(seed);
    let bits = q.iter().map(|&qi| rng.random::<f64>() < qi).collect();
    score_bits(real, q, bits, p0, clamped)
}

fn require_sigmoid(params: &GnnParams) -> Result<()> {
    if params.output_squash != OutputSquash::Sigmoid {
        return Err(Error::InvalidParameter(
            "allocation policies need a sigmoid readout".into(),
        ));
    }
    Ok(())
}

pub fn sample_policy(
    params: &GnnParams,
    real: &ChannelRealization,
    x: &[f64],
    p0: f64,
    seed: u64,
) -> Result<PolicySample> {
    require_sigmoid(params)?;
    let (q, _) = gnn_forward(params, &real.gso, x)?;
    sample_from_probs(real, &q, p0, seed)
}

/// `sum_rate - lambda (total_power - pmax)`
pub fn lagrangian(sample: &PolicySample, lambda: f64, pmax: f64) -> f64 {
    sample.sum_rate - lambda * (sample.total_power - pmax)
}

/// Gradient of `ln P(bits)` with respect to the network output `q`.
pub fn score_upstream(q: &[f64], bits: &[bool]) -> Vec<f64> {
    q.iter()
        .zip(bits)
        .map(|(&qi, &b)| if b { 1.0 / qi } else { -1.0 / (1.0 - qi) })
        .collect()
}

/// One realization the policy acts on.
#[derive(Debug, Clone, Copy)]
pub struct Episode<'a> {
    pub real: &'a ChannelRealization,
    pub x: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepDiagnostics {
    pub mean_sum_rate: f64,
    /// Mean of `(total_power - Pmax) / n`.
    pub mean_violation: f64,
    /// Mean of `total_power - Pmax`, which drives the multiplier.
    pub mean_excess_power: f64,
    pub lambda: f64,
    pub grad_norm: f64,
}

/// Score-function estimate of `grad E[Lagrangian]` with the batch-mean
/// Lagrangian as baseline. Sample `j` uses seed `derive(seed, [j])`.
pub fn reinforce_gradient(
    params: &GnnParams,
    episodes: &[Episode<'_>],
    lambda: f64,
    problem: &AllocationProblem,
    seed: u64,
) -> Result<(ParamGrad, StepDiagnostics)> {
    require_sigmoid(params)?;
    if episodes.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let per_sample: Vec<(f64, ParamGrad, f64, f64, f64)> = episodes
        .par_iter()
        .enumerate()
        .map(|(j, ep)| {
            let (q, tape) = gnn_forward(params, &ep.real.gso, ep.x)?;
            let sample = sample_from_probs(ep.real, &q, problem.p0, rng::derive(seed, &[j as u64]))?;
            let n = ep.real.n();
            let pmax = problem.pmax(n);
            let value = lagrangian(&sample, lambda, pmax);
            let grad = gnn_backward(tape, &score_upstream(&sample.probs, &sample.bits))?;
            let excess = sample.total_power - pmax;
            Ok((value, grad, sample.sum_rate, excess, excess / n as f64))
        })
        .collect::<Result<_>>()?;
    let count = per_sample.len() as f64;
    let baseline = per_sample.iter().map(|s| s.0).sum::<f64>() / count;
    let mut grad = ParamGrad::zeros_like(params);
    for (value, g, ..) in &per_sample {
        grad.accumulate(g, (value - baseline) / count);
    }
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let mean = |f: fn(&(f64, ParamGrad, f64, f64, f64)) -> f64| {
        per_sample.iter().map(f).sum::<f64>() / count
    };
    let diag = StepDiagnostics {
        mean_sum_rate: mean(|s| s.2),
        mean_excess_power: mean(|s| s.3),
        mean_violation: mean(|s| s.4),
        lambda,
        grad_norm: grad.norm(),
    };
    Ok((grad, diag))
}

/// One primal-dual update. The returned diagnostics carry the multiplier
/// after the update.
pub fn reinforce_step(
    params: &GnnParams,
    dual: DualState,
    episodes: &[Episode<'_>],
    problem: &AllocationProblem,
    seed: u64,
) -> Result<(GnnParams, DualState, StepDiagnostics)> {
    let (grad, mut diag) = reinforce_gradient(params, episodes, dual.lambda, problem, seed)?;
    let mut next = params.clone();
    next.add_scaled(&grad, problem.primal_step)?;
    let mut dual = dual;
    dual.ascend(problem.dual_step, diag.mean_excess_power);
    diag.lambda = dual.lambda;
    Ok((next, dual, diag))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub mean_sum_rate: f64,
    pub mean_violation: f64,
    pub lambda: f64,
    pub grad_norm: f64,
}

/// Runs `problem.iters` primal-dual steps. Iteration `t` draws `batch`
/// graphs with replacement and a fresh channel on each.
pub fn train(
    problem: &AllocationProblem,
    graphs: &[GeometricGraph],
    model: &ChannelModel,
    input: InputSignal,
    init: &GnnParams,
    seed: u64,
) -> Result<(GnnParams, Vec<TraceRow>)> {
    problem.validate()?;
    if graphs.is_empty() {
        return Err(Error::InvalidParameter("no training graphs".into()));
    }
    let mut params = init.clone();
    let mut dual = DualState::default();
    let mut adam = match problem.optimizer {
        PrimalOptimizer::Sgd => None,
        PrimalOptimizer::Adam => Some(Adam::new(init, problem.primal_step)),
    };
    let mut trace = Vec::with_capacity(problem.iters);
    for iter in 0..problem.iters {
        let it = iter as u64;
        let mut pick = rng::rng(rng::derive(seed, &[it, 0]));
        let picks: Vec<usize> = (0..problem.batch)
            .map(|_| pick.random_range(0..graphs.len()))
            .collect();
        let batch: Vec<(ChannelRealization, Vec<f64>)> = picks
            .par_iter()
            .enumerate()
            .map(|(j, &g)| {
                let real = draw_channel(&graphs[g], model, rng::derive(seed, &[it, 1, j as u64]))?;
                let x = real.input_signal(input);
                Ok((real, x))
            })
            .collect::<Result<_>>()?;
        let episodes: Vec<Episode> = batch
            .iter()
            .map(|(real, x)| Episode { real, x })
            .collect();
        let diag = match &mut adam {
            None => {
                let (next, next_dual, diag) =
                    reinforce_step(&params, dual, &episodes, problem, rng::derive(seed, &[it, 2]))?;
                params = next;
                dual = next_dual;
                diag
            }
            Some(opt) => {
                let (grad, mut diag) =
                    reinforce_gradient(&params, &episodes, dual.lambda, problem, rng::derive(seed, &[it, 2]))?;
                opt.ascend(&mut params, &grad)?;
                dual.ascend(problem.dual_step, diag.mean_excess_power);
                diag.lambda = dual.lambda;
                diag
            }
        };
        trace.push(TraceRow {
            iter,
            mean_sum_rate: diag.mean_sum_rate,
            mean_violation: diag.mean_violation,
            lambda: diag.lambda,
            grad_norm: diag.grad_norm,
        });
    }
    Ok((params, trace))
}

/// What produces the on probabilities at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Gnn(GnnParams),
    /// WMMSE powers read as probabilities.
    Wmmse { iters: usize },
    /// Every user switches on with the same probability.
    Constant(f64),
}

impl Policy {
    pub fn probabilities(
        &self,
        real: &ChannelRealization,
        x: &[f64],
        problem: &AllocationProblem,
    ) -> Result<Vec<f64>> {
        match self {
            Policy::Gnn(params) => {
                require_sigmoid(params)?;
                Ok(gnn_forward(params, &real.gso, x)?.0)
            }
            Policy::Wmmse { iters } => {
                Ok(wmmse_policy(real, problem.p0, problem.pmax(real.n()), *iters)?.probs)
            }
            Policy::Constant(q) => Ok(vec![*q; real.n()]),
        }
    }
}

/// Aggregated evaluation at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scale: usize,
    pub policy: String,
    pub sum_rate_mean: f64,
    pub sum_rate_std: f64,
    pub violation_mean: f64,
    pub violation_std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub record: MetricsRecord,
    /// Mean over graphs of `sum_rate / n`, averaged over trials.
    pub per_node_rate_mean: f64,
    pub per_node_rate_std: f64,
    /// Sum rate of every (trial, graph) pair, trial-major.
    pub sum_rates: Vec<f64>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Channel seed shared by every policy evaluated on graph `graph_id`, trial
/// `trial`, so comparisons use common random numbers.
pub fn evaluation_channel_seed(seed: u64, graph_id: u64, trial: usize) -> u64 {
    rng::derive(seed, &[graph_id, trial as u64, 0])
}

/// Evaluates a policy on `graphs` (with their dataset ids) over `trials`
/// independent channel and allocation draws per graph.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    policy: &Policy,
    policy_name: &str,
    scale: usize,
    graphs: &[(u64, &GeometricGraph)],
    model: &ChannelModel,
    problem: &AllocationProblem,
    input: InputSignal,
    trials: usize,
    seed: u64,
) -> Result<Evaluation> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if graphs.is_empty() {
        return Err(Error::InvalidParameter("no evaluation graphs".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..trials)
        .flat_map(|t| (0..graphs.len()).map(move |g| (t, g)))
        .collect();
    let outcomes: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(t, g)| {
            let (id, graph) = graphs[g];
            let real = draw_channel(graph, model, evaluation_channel_seed(seed, id, t))?;
            let x = real.input_signal(input);
            let q = policy.probabilities(&real, &x, problem)?;
            let s = sample_from_probs(&real, &q, problem.p0, rng::derive(seed, &[id, t as u64, 1]))?;
            let n = real.n() as f64;
            Ok((s.sum_rate, (s.total_power - problem.pmax(real.n())) / n, s.sum_rate / n))
        })
        .collect::<Result<_>>()?;
    let per_trial = |f: fn(&(f64, f64, f64)) -> f64| -> Vec<f64> {
        outcomes
            .chunks(graphs.len())
            .map(|c| c.iter().map(f).sum::<f64>() / c.len() as f64)
            .collect()
    };
    let (sum_rate_mean, sum_rate_std) = mean_std(&per_trial(|o| o.0));
    let (violation_mean, violation_std) = mean_std(&per_trial(|o| o.1));
    let (per_node_rate_mean, per_node_rate_std) = mean_std(&per_trial(|o| o.2));
    Ok(Evaluation {
        record: MetricsRecord {
            scale,
            policy: policy_name.to_string(),
            sum_rate_mean,
            sum_rate_std,
            violation_mean,
            violation_std,
            trials,
        },
        per_node_rate_mean,
        per_node_rate_std,
        sum_rates: outcomes.iter().map(|o| o.0).collect(),
    })
}

#[cfg(test)]
mod tests;
