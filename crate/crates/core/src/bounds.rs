//! Constants of the transfer inequalities and Monte-Carlo checks of each
//! inequality against measured quantities.
//!
//! Grid checks run on a padded canvas: a bounded grid large enough that no
//! signal started inside the measured windows reaches the border, so graph
//! filtering on the canvas equals convolution on the infinite plane.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{discrepancy, make_grid, perturb_to_rgg, GeometricGraph, GridSpec};
use crate::gnn::multi::MultiGnn;
use crate::gnn::optim::Adam;
use crate::gnn::{filter_apply, gnn_apply, gnn_backward, gnn_forward, FilterTaps, GnnParams, ParamGrad};
use crate::linalg::{norm_sq, symmetric_spectral_norm, CsrMatrix};
use crate::rng;
use crate::spectral::integral_lipschitz_folded;

/// Samples used when evaluating integral Lipschitz constants.
const LIPSCHITZ_SAMPLES: usize = 64;
/// One-sided 97.5% normal quantile for the upper confidence bound.
const Z_UCB: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    /// Filter outputs on two grid windows of different size.
    GridFilter,
    /// Supervised loss of a GNN on two grid windows.
    GridGnn,
    /// Filter outputs on a perturbed grid and its parent grid.
    FilterRggDgg,
    /// GNN outputs on a perturbed grid and its parent grid.
    GnnRggDgg,
    /// Supervised loss on a perturbed grid and its parent grid.
    LossRggDgg,
    /// Supervised loss on two perturbed grids of different size.
    CrossScale,
}

impl BoundName {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundName::GridFilter => "grid_filter",
            BoundName::GridGnn => "grid_gnn",
            BoundName::FilterRggDgg => "filter_rgg_dgg",
            BoundName::GnnRggDgg => "gnn_rgg_dgg",
            BoundName::LossRggDgg => "loss_rgg_dgg",
            BoundName::CrossScale => "cross_scale",
        }
    }
}

impl fmt::Display for BoundName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: BoundName,
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    /// Largest filter order involved.
    pub k: usize,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    /// `lhs + 1.96 stderr <= rhs (1 + 1e-9)`
    pub holds: bool,
    /// Whether the window sizes satisfy the grid condition `B1 + M K >= B2`;
    /// `None` where it does not apply.
    pub in_regime: Option<bool>,
    pub inputs: BTreeMap<String, f64>,
}

impl BoundReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: BoundName,
        n: usize,
        m: usize,
        sigma: f64,
        k: usize,
        lhs: f64,
        lhs_stderr: f64,
        rhs: f64,
    ) -> Self {
        Self {
            name,
            n,
            m,
            sigma,
            k,
            lhs,
            lhs_stderr,
            rhs,
            holds: upper_confidence(lhs, lhs_stderr) <= rhs * (1.0 + 1e-9),
            in_regime: None,
            inputs: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.inputs.insert(key.to_string(), value);
        self
    }

    pub fn upper_confidence(&self) -> f64 {
        upper_confidence(self.lhs, self.lhs_stderr)
    }
}

fn upper_confidence(mean: f64, stderr: f64) -> f64 {
    mean + Z_UCB * stderr
}

/// Mean and standard error of the mean.
fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `sum_l sum_k |h_lk| |L|_1^k`
pub fn h_k_constant(layers: &[FilterTaps], mask_l1: f64) -> f64 {
    layers
        .iter()
        .map(|t| {
            t.coeffs()
                .iter()
                .enumerate()
                .map(|(k, h)| h.abs() * mask_l1.powi(k as i32))
                .sum::<f64>()
        })
        .sum()
}

/// `H_K^2 / n (2 sqrt(n) K M + K^2 M^2)`
pub fn c_m_constant(n: usize, k: usize, m: usize, h_k: f64) -> f64 {
    let (n, k, m) = (n as f64, k as f64, m as f64);
    h_k * h_k / n * (2.0 * n.sqrt() * k * m + k * k * m * m)
}

/// `sum_{k >= 1} |L|_1^k |h_k|`
pub fn c_k_constant(taps: &FilterTaps, mask_l1: f64) -> f64 {
    taps.coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, h)| h.abs() * mask_l1.powi(k as i32))
        .sum()
}

/// `sup |lambda h'(lambda)|` over `[-lambda_max, lambda_max]` away from 0.
pub fn filter_lipschitz(taps: &FilterTaps, lambda_max: f64) -> Result<f64> {
    if lambda_max == 0.0 {
        return Ok(0.0);
    }
    Ok(integral_lipschitz_folded(taps, lambda_max, LIPSCHITZ_SAMPLES)?.derivative_bound)
}

fn max_lipschitz<'a>(taps: impl IntoIterator<Item = &'a FilterTaps>, lambda_max: f64) -> Result<f64> {
    taps.into_iter()
        .try_fold(0.0f64, |c, t| Ok(c.max(filter_lipschitz(t, lambda_max)?)))
}

fn unit_normal_field(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::rng(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Window sizes and grid geometry for the grid checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPair {
    pub b1: usize,
    pub b2: usize,
    pub spacing: f64,
    pub radius: f64,
}

impl GridPair {
    fn spec(&self, side: usize) -> GridSpec {
        GridSpec::new(side, self.spacing, self.radius, false)
    }

    /// `B1 + M K >= B2` with `M` the mask side from the neighborhood area.
    pub fn in_regime(&self, k: usize) -> bool {
        self.b1 + self.spec(self.b1).formula_mask_side() * k >= self.b2
    }
}

/// A bounded grid with the measured windows `[pad, pad + B)^2` far enough
/// from its border.
struct Canvas {
    graph: GeometricGraph,
    pad: usize,
}

impl Canvas {
    /// Room for `hops` aggregation steps on either side of the larger window.
    fn new(pair: &GridPair, hops: usize) -> Result<Self> {
        let reach = pair.spec(pair.b2.max(1)).reach();
        let pad = hops * reach;
        let graph = make_grid(&pair.spec(pair.b2 + 2 * pad))?;
        Ok(Self { graph, pad })
    }

    fn n(&self) -> usize {
        self.graph.n()
    }

    fn gso(&self) -> &CsrMatrix {
        self.graph.adjacency()
    }

    fn window(&self, b: usize) -> Vec<usize> {
        let spec = self.graph.spec();
        (0..b)
            .flat_map(|n2| (0..b).map(move |n1| (n1, n2)))
            .map(|(n1, n2)| spec.node_index(n1 + self.pad, n2 + self.pad))
            .collect()
    }

    /// `field` zeroed outside the window of side `b`.
    fn restrict(&self, field: &[f64], b: usize) -> Vec<f64> {
        let mut out = vec![0.0; field.len()];
        for i in self.window(b) {
            out[i] = field[i];
        }
        out
    }

    fn window_sq(&self, v: &[f64], b: usize) -> f64 {
        self.window(b).iter().map(|&i| v[i] * v[i]).sum()
    }
}

/// Mask `l1` norm of a grid: each of the `deg` neighbor offsets weighs `1/deg`.
fn mask_l1(pair: &GridPair) -> f64 {
    let d = pair.spec(pair.b1).neighborhood_size();
    if d == 0 {
        0.0
    } else {
        1.0
    }
}

/// `E |window_B1 (h(L, x_B1) - h(L, x_B2))|^2 <= C_K^2 (B2^2 - B1^2) E f^2`
/// with `f` iid unit-variance noise.
pub fn verify_grid_filter(pair: &GridPair, taps: &FilterTaps, trials: usize, seed: u64) -> Result<BoundReport> {
    check_pair(pair, trials)?;
    let k = taps.order();
    let canvas = Canvas::new(pair, k)?;
    let lhs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = unit_normal_field(canvas.n(), rng::derive(seed, &[t as u64]));
            let y1 = filter_apply(taps, canvas.gso(), &canvas.restrict(&f, pair.b1))?;
            let y2 = filter_apply(taps, canvas.gso(), &canvas.restrict(&f, pair.b2))?;
            let d: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - b).collect();
            Ok(canvas.window_sq(&d, pair.b1))
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_stderr(&lhs);
    let l1 = mask_l1(pair);
    let c_k = c_k_constant(taps, l1);
    let area = (pair.b2 * pair.b2 - pair.b1 * pair.b1) as f64;
    let mut r = BoundReport::new(
        BoundName::GridFilter,
        pair.b1 * pair.b1,
        pair.b2 * pair.b2,
        0.0,
        k,
        mean,
        se,
        c_k * c_k * area,
    )
    .with("c_k", c_k)
    .with("mask_l1", l1)
    .with("trials", trials as f64);
    r.in_regime = Some(pair.in_regime(k));
    Ok(r)
}

fn check_pair(pair: &GridPair, trials: usize) -> Result<()> {
    if pair.b1 == 0 || pair.b1 > pair.b2 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < B1 <= B2, got {} and {}",
            pair.b1, pair.b2
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    pair.spec(pair.b1).validate()
}

fn max_order(params: &GnnParams) -> usize {
    params.layers.iter().map(|t| t.order()).max().unwrap_or(0)
}

fn total_hops(params: &GnnParams) -> usize {
    params.layers.iter().map(|t| t.order()).sum()
}

/// Mean-squared error of `student` against `teacher` over the window of side
/// `b`, for a field restricted to that window and a target computed on the
/// whole canvas.
fn window_loss(canvas: &Canvas, student: &GnnParams, field: &[f64], target: &[f64], b: usize) -> Result<f64> {
    let y = gnn_apply(student, canvas.gso(), &canvas.restrict(field, b))?;
    let d: Vec<f64> = y.iter().zip(target).map(|(a, t)| a - t).collect();
    Ok(canvas.window_sq(&d, b) / (b * b) as f64)
}

/// Trains `student` to reproduce `teacher` on the window of side `pair.b1`,
/// by Adam on fresh unit-variance fields. Returns the trained taps.
pub fn fit_grid_student(
    teacher: &GnnParams,
    student: &GnnParams,
    pair: &GridPair,
    fit: &FitSettings,
    seed: u64,
) -> Result<GnnParams> {
    let canvas = Canvas::new(pair, total_hops(teacher).max(total_hops(student)))?;
    let window = canvas.window(pair.b1);
    let scale = 2.0 / window.len() as f64;
    let mut opt = Adam::new(student, fit.learning_rate);
    let mut params = student.clone();
    for it in 0..fit.iters {
        let batch: Vec<ParamGrad> = (0..fit.batch)
            .into_par_iter()
            .map(|j| {
                let f = unit_normal_field(canvas.n(), rng::derive(seed, &[it as u64, j as u64]));
                let target = gnn_apply(teacher, canvas.gso(), &f)?;
                let (y, tape) = gnn_forward(&params, canvas.gso(), &canvas.restrict(&f, pair.b1))?;
                let mut d = vec![0.0; y.len()];
                for &i in &window {
                    d[i] = scale * (y[i] - target[i]);
                }
                gnn_backward(tape, &d)
            })
            .collect::<Result<_>>()?;
        let mut grad = ParamGrad::zeros_like(&params);
        for g in &batch {
            grad.accumulate(g, 1.0 / fit.batch as f64);
        }
        opt.descend(&mut params, &grad)?;
    }
    Ok(params)
}

/// `L_m <= L_n + C_M E|x|^2 + sqrt(L_n C_M E|x|^2)` for a student fitted on
/// the smaller window, with targets from `teacher` on the whole plane.
pub fn verify_grid_gnn(
    teacher: &GnnParams,
    student: &GnnParams,
    pair: &GridPair,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_pair(pair, trials)?;
    let canvas = Canvas::new(pair, total_hops(teacher).max(total_hops(student)))?;
    let losses: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = unit_normal_field(canvas.n(), rng::derive(seed, &[t as u64]));
            let target = gnn_apply(teacher, canvas.gso(), &f)?;
            Ok((
                window_loss(&canvas, student, &f, &target, pair.b1)?,
                window_loss(&canvas, student, &f, &target, pair.b2)?,
            ))
        })
        .collect::<Result<_>>()?;
    let small: Vec<f64> = losses.iter().map(|l| l.0).collect();
    let large: Vec<f64> = losses.iter().map(|l| l.1).collect();
    let (l_n, l_n_se) = mean_stderr(&small);
    let (l_m, l_m_se) = mean_stderr(&large);
    let n = pair.b1 * pair.b1;
    let k = max_order(student);
    let m_side = pair.spec(pair.b1).formula_mask_side();
    let h_k = h_k_constant(&student.layers, mask_l1(pair));
    let c_m = c_m_constant(n, k, m_side, h_k);
    let energy = n as f64;
    let rhs = l_n + c_m * energy + (l_n * c_m * energy).sqrt();
    let per_site = l_n + c_m + (l_n * c_m).sqrt();
    let mut r = BoundReport::new(BoundName::GridGnn, n, pair.b2 * pair.b2, 0.0, k, l_m, l_m_se, rhs)
        .with("loss_n", l_n)
        .with("loss_n_stderr", l_n_se)
        .with("h_k", h_k)
        .with("c_m", c_m)
        .with("mask_side", m_side as f64)
        .with("input_energy", energy)
        .with("rhs_per_site", per_site)
        .with("trials", trials as f64);
    r.in_regime = Some(pair.in_regime(k));
    Ok(r)
}

/// Perturbations of one parent grid, with their discrepancy norms.
pub struct PerturbedFamily {
    pub parent: GeometricGraph,
    pub sigma: f64,
    pub members: Vec<GeometricGraph>,
    /// `|W^2|` per member.
    pub w2: Vec<f64>,
    /// Largest spectral radius over the parent and all members.
    pub lambda_max: f64,
}

impl PerturbedFamily {
    pub fn new(parent: &GeometricGraph, sigma: f64, seeds: &[u64]) -> Result<Self> {
        let members: Vec<GeometricGraph> = seeds
            .par_iter()
            .map(|&s| perturb_to_rgg(parent, sigma, s))
            .collect::<Result<_>>()?;
        let w2: Vec<f64> = members
            .par_iter()
            .map(|g| discrepancy(g).map(|d| d.spectral_norm_w2))
            .collect::<Result<_>>()?;
        let radii: Vec<f64> = members
            .par_iter()
            .map(|g| symmetric_spectral_norm(g.adjacency()))
            .collect();
        let lambda_max = radii
            .into_iter()
            .fold(symmetric_spectral_norm(parent.adjacency()), f64::max);
        Ok(Self {
            parent: parent.clone(),
            sigma,
            members,
            w2,
            lambda_max,
        })
    }

    pub fn mean_w2(&self) -> f64 {
        self.w2.iter().sum::<f64>() / self.w2.len() as f64
    }

    fn n(&self) -> usize {
        self.parent.n()
    }
}

/// `E|h(S_n, x) - h(S_D, x)|^2 <= n C^2 E|W^2| |x|^2`
pub fn verify_filter_rgg_dgg(family: &PerturbedFamily, taps: &FilterTaps, x: &[f64]) -> Result<BoundReport> {
    let base = filter_apply(taps, family.parent.adjacency(), x)?;
    let diffs: Vec<f64> = family
        .members
        .par_iter()
        .map(|g| {
            let y = filter_apply(taps, g.adjacency(), x)?;
            Ok(y.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum())
        })
        .collect::<Result<_>>()?;
    let c = filter_lipschitz(taps, family.lambda_max)?;
    output_report(BoundName::FilterRggDgg, family, &diffs, c, 1.0, taps.order(), x)
}

/// Multi-feature version: `F^L n C^2 E|W^2| |x|^2` with `C` the largest
/// filter constant.
pub fn verify_gnn_rgg_dgg(family: &PerturbedFamily, net: &MultiGnn, x: &[f64]) -> Result<BoundReport> {
    let input = [x.to_vec()];
    let base = net.forward(family.parent.adjacency(), &input)?;
    let diffs: Vec<f64> = family
        .members
        .par_iter()
        .map(|g| {
            let y = net.forward(g.adjacency(), &input)?;
            Ok(y.iter()
                .zip(&base)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>())
                .sum())
        })
        .collect::<Result<_>>()?;
    let c = max_lipschitz(net.filters(), family.lambda_max)?;
    let features = (net.width() as f64).powi(net.depth() as i32);
    let k = net.filters().map(|t| t.order()).max().unwrap_or(0);
    output_report(BoundName::GnnRggDgg, family, &diffs, c, features, k, x)
}

fn output_report(
    name: BoundName,
    family: &PerturbedFamily,
    diffs: &[f64],
    c: f64,
    features: f64,
    k: usize,
    x: &[f64],
) -> Result<BoundReport> {
    if diffs.is_empty() {
        return Err(Error::InvalidParameter("no perturbation seeds".into()));
    }
    let (mean, se) = mean_stderr(diffs);
    let n = family.n();
    let w2 = family.mean_w2();
    let rhs = features * n as f64 * c * c * w2 * norm_sq(x);
    Ok(BoundReport::new(name, n, n, family.sigma, k, mean, se, rhs)
        .with("lipschitz", c)
        .with("mean_w2", w2)
        .with("lambda_max", family.lambda_max)
        .with("features", features)
        .with("x_norm_sq", norm_sq(x))
        .with("seeds", diffs.len() as f64))
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64
}

/// `|L_n - L_n^r| <= D + 2 sqrt(eps D)` with `D = n C^2 E|W^2| |x|^2`, for a
/// single-feature network and targets from `teacher` on the parent grid.
/// `eps` is the measured mean loss on the perturbed graphs.
pub fn verify_loss_rgg_dgg(
    family: &PerturbedFamily,
    teacher: &GnnParams,
    student: &GnnParams,
    x: &[f64],
) -> Result<BoundReport> {
    let target = gnn_apply(teacher, family.parent.adjacency(), x)?;
    let on_grid = mse(&gnn_apply(student, family.parent.adjacency(), x)?, &target);
    let on_rgg: Vec<f64> = family
        .members
        .par_iter()
        .map(|g| Ok(mse(&gnn_apply(student, g.adjacency(), x)?, &target)))
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = on_rgg.iter().map(|l| (on_grid - l).abs()).collect();
    let (mean, se) = mean_stderr(&gaps);
    let eps = on_rgg.iter().sum::<f64>() / on_rgg.len() as f64;
    let c = max_lipschitz(&student.layers, family.lambda_max)?;
    let n = family.n();
    let d = n as f64 * c * c * family.mean_w2() * norm_sq(x);
    let rhs = d + 2.0 * (eps * d).sqrt();
    Ok(BoundReport::new(BoundName::LossRggDgg, n, n, family.sigma, max_order(student), mean, se, rhs)
        .with("loss_grid", on_grid)
        .with("epsilon", eps)
        .with("lipschitz", c)
        .with("mean_w2", family.mean_w2()))
}

/// `|L_n^r - L_m^r| <= c [sqrt(eps)(|x_n|/sqrt(n) + |x_m|/sqrt(m)) +
/// |x_n|^2/n + |x_m|^2/m]` at an explicit constant `c`, with `eps = L_n^r`.
pub fn verify_cross_scale(
    teacher: &GnnParams,
    student: &GnnParams,
    small: (&CsrMatrix, &[f64]),
    large: (&CsrMatrix, &[f64]),
    sigma: f64,
    constant: f64,
) -> Result<BoundReport> {
    let loss = |(gso, x): (&CsrMatrix, &[f64])| -> Result<f64> {
        Ok(mse(&gnn_apply(student, gso, x)?, &gnn_apply(teacher, gso, x)?))
    };
    let l_n = loss(small)?;
    let l_m = loss(large)?;
    let (n, m) = (small.1.len(), large.1.len());
    let (xn, xm) = (norm_sq(small.1), norm_sq(large.1));
    let shape = l_n.sqrt() * (xn.sqrt() / (n as f64).sqrt() + xm.sqrt() / (m as f64).sqrt())
        + xn / n as f64
        + xm / m as f64;
    Ok(BoundReport::new(
        BoundName::CrossScale,
        n,
        m,
        sigma,
        max_order(student),
        (l_n - l_m).abs(),
        0.0,
        constant * shape,
    )
    .with("loss_n", l_n)
    .with("loss_m", l_m)
    .with("constant", constant))
}

/// Least-squares fit of `log mean|W^2|` against `log n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaFit {
    /// Negated slope; infinite when some size had no discrepancy at all.
    pub alpha: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub infinite_alpha: bool,
    pub sizes: Vec<usize>,
    pub mean_w2: Vec<f64>,
}

pub fn fit_alpha(sizes: &[usize], mean_w2: &[f64]) -> Result<AlphaFit> {
    if sizes.len() != mean_w2.len() {
        return Err(Error::dim("one mean per size"));
    }
    if sizes.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least three sizes, got {}",
            sizes.len()
        )));
    }
    if mean_w2.contains(&0.0) {
        return Ok(AlphaFit {
            alpha: f64::INFINITY,
            intercept: f64::NAN,
            r_squared: f64::NAN,
            infinite_alpha: true,
            sizes: sizes.to_vec(),
            mean_w2: mean_w2.to_vec(),
        });
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = mean_w2.iter().map(|w| w.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("sizes must not all be equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(AlphaFit {
        alpha: -slope,
        intercept,
        r_squared,
        infinite_alpha: false,
        sizes: sizes.to_vec(),
        mean_w2: mean_w2.to_vec(),
    })
}

/// Measures `mean |W^2|` on perturbed bounded grids of each side and fits
/// the decay exponent against `n = side^2`.
pub fn estimate_alpha(
    sides: &[usize],
    spacing: f64,
    radius: f64,
    sigma: f64,
    seeds_per_size: usize,
    seed: u64,
) -> Result<AlphaFit> {
    if seeds_per_size == 0 {
        return Err(Error::InvalidParameter("seeds per size must be positive".into()));
    }
    let mut means = Vec::with_capacity(sides.len());
    for &b in sides {
        let parent = make_grid(&GridSpec::new(b, spacing, radius, false))?;
        let seeds: Vec<u64> = (0..seeds_per_size)
            .map(|s| rng::derive(seed, &[b as u64, s as u64]))
            .collect();
        means.push(PerturbedFamily::new(&parent, sigma, &seeds)?.mean_w2());
    }
    let sizes: Vec<usize> = sides.iter().map(|b| b * b).collect();
    fit_alpha(&sizes, &means)
}

/// Full-batch gradient settings for student fitting.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub iters: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            iters: 150,
            batch: 4,
            learning_rate: 0.02,
        }
    }
}

/// Fits `student` to `teacher` on fixed graphs and inputs by Adam on the
/// mean-squared error. Returns the trained taps and the final loss.
pub fn fit_student(
    teacher: &GnnParams,
    student: &GnnParams,
    data: &[(&CsrMatrix, &[f64])],
    fit: &FitSettings,
) -> Result<(GnnParams, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("no training graphs".into()));
    }
    let targets: Vec<Vec<f64>> = data
        .iter()
        .map(|(gso, x)| gnn_apply(teacher, gso, x))
        .collect::<Result<_>>()?;
    let mut params = student.clone();
    let mut opt = Adam::new(student, fit.learning_rate);
    let loss_and_grad = |params: &GnnParams| -> Result<(f64, ParamGrad)> {
        let mut grad = ParamGrad::zeros_like(params);
        let mut loss = 0.0;
        for ((gso, x), target) in data.iter().zip(&targets) {
            let (y, tape) = gnn_forward(params, gso, x)?;
            let scale = 2.0 / (y.len() * data.len()) as f64;
            let d: Vec<f64> = y.iter().zip(target).map(|(a, t)| scale * (a - t)).collect();
            loss += mse(&y, target) / data.len() as f64;
            grad.accumulate(&gnn_backward(tape, &d)?, 1.0);
        }
        Ok((loss, grad))
    };
    for _ in 0..fit.iters {
        let (_, grad) = loss_and_grad(&params)?;
        opt.descend(&mut params, &grad)?;
    }
    let (loss, _) = loss_and_grad(&params)?;
    Ok((params, loss))
}
