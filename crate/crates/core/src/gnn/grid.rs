//! Grid signals as 2D fields and the convolutional form of a grid filter.
//!
//! On a toroidal grid the shift operator is circulant, so one hop equals a
//! circular convolution with the centered [`Mask`], and a filter becomes
//! `sum_k h_k (L *)^k x_B`.

use crate::error::{Error, Result};
use crate::geometry::Mask;

use super::FilterTaps;

/// A `B x B` field; `get(n1, n2)` reads `x[n1 + n2 B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    side: usize,
    data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            data: vec![0.0; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, n1: usize, n2: usize) -> f64 {
        self.data[n1 + n2 * self.side]
    }

    pub fn set(&mut self, n1: usize, n2: usize, v: f64) {
        self.data[n1 + n2 * self.side] = v;
    }

    /// Periodic read.
    pub fn get_wrapped(&self, n1: i64, n2: i64) -> f64 {
        let b = self.side as i64;
        self.get(n1.rem_euclid(b) as usize, n2.rem_euclid(b) as usize)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Back to a node signal.
    pub fn into_signal(self) -> Vec<f64> {
        self.data
    }
}

/// `x_B(n1, n2) = x[n1 + n2 B]`
pub fn reshape_signal(x: &[f64], side: usize) -> Result<Field2> {
    if x.len() != side * side {
        return Err(Error::dim(format!(
            "signal of length {} cannot be a {side}x{side} field",
            x.len()
        )));
    }
    Ok(Field2 {
        side,
        data: x.to_vec(),
    })
}

/// Inverse of [`reshape_signal`].
pub fn flatten_field(field: &Field2) -> Vec<f64> {
    field.data.clone()
}

/// `y(n1, n2) = sum L(k1, k2) x(n1 - k1, n2 - k2)` with periodic indexing.
pub fn circular_convolve(mask: &Mask, x: &Field2) -> Result<Field2> {
    let b = x.side();
    let r = mask.reach();
    if b < 2 * r + 1 {
        return Err(Error::dim(format!(
            "{b}x{b} field is smaller than the {0}x{0} mask",
            mask.side()
        )));
    }
    let taps = mask.taps();
    let mut y = Field2::zeros(b);
    for n2 in 0..b {
        for n1 in 0..b {
            let v = taps
                .iter()
                .map(|&(k1, k2, w)| w * x.get_wrapped(n1 as i64 - k1, n2 as i64 - k2))
                .sum();
            y.set(n1, n2, v);
        }
    }
    Ok(y)
}

/// `y = sum_k h_k (L *)^k x_B`
pub fn grid_filter_apply(taps: &FilterTaps, mask: &Mask, x: &Field2) -> Result<Field2> {
    let b = x.side();
    let mut y = Field2::zeros(b);
    let mut hop = x.clone();
    for (k, &hk) in taps.coeffs().iter().enumerate() {
        if k > 0 {
            hop = circular_convolve(mask, &hop)?;
        }
        y.data.iter_mut().zip(&hop.data).for_each(|(yi, hi)| *yi += hk * hi);
    }
    Ok(y)
}
