//! Eigendecomposition of shift operators, filter frequency responses and
//! integral Lipschitz constants.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gnn::FilterTaps;
use crate::linalg::CsrMatrix;

/// `S = V diag(lambda) Vᵀ` with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `V diag(response) Vᵀ x`
    pub fn apply_response(&self, response: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() || response.len() != self.n() {
            return Err(Error::dim(format!(
                "response of length {} and signal of length {} for {} eigenpairs",
                response.len(),
                x.len(),
                self.n()
            )));
        }
        let xv = DVector::from_column_slice(x);
        let mut coeffs = self.eigenvectors.tr_mul(&xv);
        coeffs
            .iter_mut()
            .zip(response)
            .for_each(|(c, r)| *c *= r);
        Ok((&self.eigenvectors * coeffs).as_slice().to_vec())
    }

    /// Filter application through the spectral route.
    pub fn filter_apply(&self, taps: &FilterTaps, x: &[f64]) -> Result<Vec<f64>> {
        self.apply_response(&frequency_response(taps, &self.eigenvalues), x)
    }
}

pub fn decompose(gso: &CsrMatrix) -> Result<SpectralDecomposition> {
    let asym = gso.max_asymmetry();
    if asym > 1e-12 * gso.max_abs().max(1.0) {
        return Err(Error::AsymmetricGso(asym));
    }
    decompose_dense(gso.to_dense())
}

pub fn decompose_dense(m: DMatrix<f64>) -> Result<SpectralDecomposition> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim("eigendecomposition needs a square matrix"));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: vectors,
    })
}

/// `h(lambda) = sum_k h_k lambda^k` at each point.
pub fn frequency_response(taps: &FilterTaps, lambdas: &[f64]) -> Vec<f64> {
    lambdas.iter().map(|&l| horner(taps.coeffs(), l)).collect()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Both integral Lipschitz estimates of a filter on a positive interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralLipschitz {
    /// `max |h(a) - h(b)| (a + b) / (2 |a - b|)` over sampled pairs.
    pub pairwise: f64,
    /// `sup |lambda h'(lambda)|` over the interval, from the endpoints and
    /// every stationary point of `lambda h'(lambda)`.
    pub derivative_bound: f64,
}

impl IntegralLipschitz {
    pub fn max(&self) -> f64 {
        self.pairwise.max(self.derivative_bound)
    }
}

/// Coefficients of `lambda h'(lambda) = sum_k k h_k lambda^k`.
fn lambda_derivative(h: &[f64]) -> Vec<f64> {
    h.iter().enumerate().map(|(k, &c)| k as f64 * c).collect()
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

/// Real parts of all complex roots, through the companion matrix.
fn root_real_parts(c: &[f64]) -> Vec<f64> {
    let mut c = c.to_vec();
    while c.last().is_some_and(|&v| v == 0.0) {
        c.pop();
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -c[i] / lead;
    }
    companion.complex_eigenvalues().iter().map(|z| z.re).collect()
}

/// `sup_{[lo, hi]} |p|`, exact up to rounding: every extremum of `p` is an
/// endpoint or a real root of `p'`.
fn sup_abs_poly(p: &[f64], lo: f64, hi: f64) -> f64 {
    let mut best = horner(p, lo).abs().max(horner(p, hi).abs());
    for r in root_real_parts(&poly_derivative(p)) {
        if r.is_finite() {
            best = best.max(horner(p, r.clamp(lo, hi)).abs());
        }
    }
    best
}

pub fn integral_lipschitz_constant(
    taps: &FilterTaps,
    domain: (f64, f64),
    samples: usize,
) -> Result<IntegralLipschitz> {
    let (lo, hi) = domain;
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::Domain { lo, hi });
    }
    if samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two samples, got {samples}"
        )));
    }
    let points: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let response = frequency_response(taps, &points);
    let mut pairwise = 0.0f64;
    for i in 0..samples {
        for j in (i + 1)..samples {
            let (a, b) = (points[i], points[j]);
            if a == b {
                continue;
            }
            let q = (response[i] - response[j]).abs() * (a + b) / (2.0 * (a - b).abs());
            pairwise = pairwise.max(q);
        }
    }
    let derivative_bound = sup_abs_poly(&lambda_derivative(taps.coeffs()), lo, hi);
    Ok(IntegralLipschitz {
        pairwise,
        derivative_bound,
    })
}

/// Default interval `(1e-3 lambda_max, lambda_max]` used for shift
/// operators with spectrum in `[-lambda_max, lambda_max]`.
pub fn default_domain(lambda_max: f64) -> (f64, f64) {
    (1e-3 * lambda_max, lambda_max)
}

/// Integral Lipschitz estimates over `[-lambda_max, -delta] ∪ [delta,
/// lambda_max]`. The negative half is folded onto the positive one by
/// reflecting the filter (`h_k -> (-1)^k h_k`), and the larger of the two
/// halves is reported for each estimate.
pub fn integral_lipschitz_folded(
    taps: &FilterTaps,
    lambda_max: f64,
    samples: usize,
) -> Result<IntegralLipschitz> {
    let domain = default_domain(lambda_max);
    let reflected = FilterTaps(
        taps.coeffs()
            .iter()
            .enumerate()
            .map(|(k, &h)| if k % 2 == 1 { -h } else { h })
            .collect(),
    );
    let pos = integral_lipschitz_constant(taps, domain, samples)?;
    let neg = integral_lipschitz_constant(&reflected, domain, samples)?;
    Ok(IntegralLipschitz {
        pairwise: pos.pairwise.max(neg.pairwise),
        derivative_bound: pos.derivative_bound.max(neg.derivative_bound),
    })
}

/// `ln(t) (t + 1) / (2 (t - 1))`: how far the pairwise quotient can exceed
/// `sup |lambda h'|` on an interval with endpoint ratio `t`. Follows from
/// `|h(b) - h(a)| <= C ln(b / a)`.
pub fn pairwise_excess_factor(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else {
        t.ln() * (t + 1.0) / (2.0 * (t - 1.0))
    }
}
