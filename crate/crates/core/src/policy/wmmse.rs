//! Weighted MMSE power control under a sum-power budget and a per-user cap.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};

const MAX_HALVINGS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseOutput {
    /// `v_i^2`, each in `[0, p0]`, summing to at most `Pmax`.
    pub powers: Vec<f64>,
    /// `v_i^2 / p0`
    pub probs: Vec<f64>,
    /// Sum rate of the continuous powers, at the start and after each
    /// iteration.
    pub surrogate: Vec<f64>,
}

struct Amplitudes {
    /// `direct[i] = |h_ii|`
    direct: Vec<f64>,
    /// `cross_out[i]`:`(j, |h_ij|^2)` for links from `i` to `j`
    cross_out: Vec<Vec<(usize, f64)>>,
    /// `cross_in[i]`: `(k, |h_ki|^2)` for links into `i`
    cross_in: Vec<Vec<(usize, f64)>>,
    noise: f64,
}

impl Amplitudes {
    fn new(real: &ChannelRealization) -> Self {
        let n = real.n();
        let cross_out: Vec<Vec<(usize, f64)>> = (0..n).map(|i| real.gains.row(i).collect()).collect();
        let mut cross_in = vec![Vec::new(); n];
        for (i, row) in cross_out.iter().enumerate() {
            for &(j, g) in row {
                cross_in[j].push((i, g));
            }
        }
        Self {
            direct: real.direct.iter().map(|d| d.sqrt()).collect(),
            cross_out,
            cross_in,
            noise: real.noise_power,
        }
    }

    /// Received power at `i` including its own signal.
    fn received(&self, i: usize, v: &[f64]) -> f64 {
        let own = self.direct[i] * v[i];
        self.noise
            + own * own
            + self.cross_in[i].iter().map(|&(k, g)| g * v[k] * v[k]).sum::<f64>()
    }

    fn sum_rate(&self, v: &[f64]) -> f64 {
        (0..v.len())
            .map(|i| {
                let signal = (self.direct[i] * v[i]).powi(2);
                (signal / (self.received(i, v) - signal)).ln_1p()
            })
            .sum()
    }
}

/// `sum_i clip(b_i / (a_i + mu), 0, cap)^2`
fn budget_use(num: &[f64], den: &[f64], mu: f64, cap: f64) -> f64 {
    num.iter()
        .zip(den)
        .map(|(b, a)| clipped(*b, *a + mu, cap).powi(2))
        .sum()
}

fn clipped(num: f64, den: f64, cap: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, cap)
    } else if num > 0.0 {
        cap
    } else {
        0.0
    }
}

/// Smallest multiplier (to bisection accuracy) whose powers fit the budget.
fn budget_multiplier(num: &[f64], den: &[f64], cap: f64, pmax: f64) -> Result<f64> {
    if budget_use(num, den, 0.0, cap) <= pmax {
        return Ok(0.0);
    }
    let mut hi = 1.0f64;
    let mut doublings = 0;
    while budget_use(num, den, hi, cap) > pmax {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Bisection(0));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..MAX_HALVINGS {
        if hi - lo <= 1e-13 * hi {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        let used = budget_use(num, den, mid, cap);
        if used.is_nan() {
            break;
        }
        if used > pmax {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Bisection(MAX_HALVINGS))
}

pub fn wmmse_policy(real: &ChannelRealization, p0: f64, pmax: f64, iters: usize) -> Result<WmmseOutput> {
    if iters == 0 {
        return Err(Error::InvalidParameter("WMMSE needs at least one iteration".into()));
    }
    if !(p0 > 0.0) || !(pmax > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "p0 and Pmax must be positive, got {p0} and {pmax}"
        )));
    }
    let n = real.n();
    let amp = Amplitudes::new(real);
    let cap = p0.sqrt();
    let mut v = vec![p0.min(pmax / n as f64).sqrt(); n];
    let mut surrogate = vec![amp.sum_rate(&v)];
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    for _ in 0..iters {
        for i in 0..n {
            u[i] = amp.direct[i] * v[i] / amp.received(i, &v);
            w[i] = 1.0 / (1.0 - u[i] * amp.direct[i] * v[i]);
        }
        let num: Vec<f64> = (0..n).map(|i| w[i] * u[i] * amp.direct[i]).collect();
        let den: Vec<f64> = (0..n)
            .map(|i| {
                w[i] * (u[i] * amp.direct[i]).powi(2)
                    + amp.cross_out[i]
                        .iter()
                        .map(|&(j, g)| w[j] * u[j] * u[j] * g)
                        .sum::<f64>()
            })
            .collect();
        let mu = budget_multiplier(&num, &den, cap, pmax)?;
        for i in 0..n {
            v[i] = clipped(num[i], den[i] + mu, cap);
        }
        let rate = amp.sum_rate(&v);
        if cfg!(debug_assertions) {
            let prev = *surrogate.last().expect("initial value pushed");
            debug_assert!(
                rate >= prev - 1e-9 * prev.abs().max(1.0),
                "WMMSE sum rate decreased from {prev} to {rate}"
            );
        }
        surrogate.push(rate);
    }
    // (sqrt p0)^2 can round above p0
    let powers: Vec<f64> = v.iter().map(|x| (x * x).min(p0)).collect();
    Ok(WmmseOutput {
        probs: powers.iter().map(|p| (p / p0).min(1.0)).collect(),
        powers,
        surrogate,
    })
}
