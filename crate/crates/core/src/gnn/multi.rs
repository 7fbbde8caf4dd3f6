//! Multi-feature graph networks, forward only.
//!
//! Layer `l` maps `F_in` features to `F_out` features with one filter per
//! `(input, output)` pair: `y_g = sigma(sum_f h^{fg}(S) x_f)`. The core policy
//! is single-feature; this exists for the `F^L` factor in the RGG/grid
//! output bound.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{axpy, CsrMatrix};
use crate::rng;

use super::{filter_apply, FilterTaps, Nonlinearity};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    pub f_in: usize,
    pub f_out: usize,
    /// Filter for input `f`, output `g` at index `g * f_in + f`.
    pub filters: Vec<FilterTaps>,
}

impl FeatureLayer {
    pub fn filter(&self, f: usize, g: usize) -> &FilterTaps {
        &self.filters[g * self.f_in + f]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiGnn {
    pub layers: Vec<FeatureLayer>,
    pub nonlinearity: Nonlinearity,
}

impl MultiGnn {
    /// `depth` layers, one input feature, `width` features afterwards.
    pub fn random(
        depth: usize,
        width: usize,
        taps: usize,
        nonlinearity: Nonlinearity,
        scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = rng::rng(seed);
        let layers = (0..depth)
            .map(|l| {
                let f_in = if l == 0 { 1 } else { width };
                let filters = (0..f_in * width)
                    .map(|_| {
                        FilterTaps(
                            (0..taps)
                                .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
                                .collect(),
                        )
                    })
                    .collect();
                FeatureLayer {
                    f_in,
                    f_out: width,
                    filters,
                }
            })
            .collect();
        Self {
            layers,
            nonlinearity,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Width of the last layer.
    pub fn width(&self) -> usize {
        self.layers.last().map_or(1, |l| l.f_out)
    }

    pub fn filters(&self) -> impl Iterator<Item = &FilterTaps> {
        self.layers.iter().flat_map(|l| &l.filters)
    }

    pub fn forward(&self, gso: &CsrMatrix, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut features = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            if features.len() != layer.f_in {
                return Err(Error::dim(format!(
                    "layer {l} expects {} features, got {}",
                    layer.f_in,
                    features.len()
                )));
            }
            let mut next = vec![vec![0.0; gso.n()]; layer.f_out];
            for (g, out) in next.iter_mut().enumerate() {
                for (f, input) in features.iter().enumerate() {
                    let y = filter_apply(layer.filter(f, g), gso, input)?;
                    axpy(1.0, &y, out);
                }
                out.iter_mut()
                    .for_each(|v| *v = self.nonlinearity.apply(*v));
            }
            features = next;
        }
        Ok(features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, GridSpec};
    use crate::gnn::{gnn_apply, GnnParams, OutputSquash};

    #[test]
    fn width_one_matches_scalar_network() {
        let grid = make_grid(&GridSpec::new(5, 1.0, 1.5, false)).unwrap();
        let m = MultiGnn::random(2, 1, 3, Nonlinearity::Relu, 1.0, 4);
        let p = GnnParams::new(
            m.layers.iter().map(|l| l.filters[0].clone()).collect(),
            Nonlinearity::Relu,
            OutputSquash::None,
        )
        .unwrap();
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.3).sin()).collect();
        let a = m.forward(grid.adjacency(), std::slice::from_ref(&x)).unwrap();
        let b = gnn_apply(&p, grid.adjacency(), &x).unwrap();
        assert_eq!(a[0], b);
    }

    #[test]
    fn feature_count_checked() {
        let grid = make_grid(&GridSpec::new(4, 1.0, 1.0, false)).unwrap();
        let m = MultiGnn::random(1, 2, 2, Nonlinearity::Relu, 1.0, 1);
        assert!(m.forward(grid.adjacency(), &[vec![0.0; 16], vec![0.0; 16]]).is_err());
        assert_eq!(m.forward(grid.adjacency(), &[vec![0.0; 16]]).unwrap().len(), 2);
    }
}
