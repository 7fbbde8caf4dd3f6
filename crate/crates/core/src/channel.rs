//! Interference channels laid over a geometric graph: path loss times
//! fading, per-user rates, and the normalized shift operator the policy
//! runs on.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometricGraph;
use crate::linalg::{nonnegative_spectral_norm, CsrMatrix, Triplet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    Rayleigh,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub pathloss_exponent: f64,
    pub fading: Fading,
    pub noise_power: f64,
    /// Links longer than this carry no gain.
    pub sparsify_radius: Option<f64>,
    pub direct_link_distance: f64,
}

impl ChannelModel {
    /// Exponent 2.2, Rayleigh fading, unit noise, direct links at half the
    /// grid spacing, no sparsification.
    pub fn with_spacing(spacing: f64) -> Self {
        Self {
            pathloss_exponent: 2.2,
            fading: Fading::Rayleigh,
            noise_power: 1.0,
            sparsify_radius: None,
            direct_link_distance: spacing / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("pathloss exponent", self.pathloss_exponent)?;
        positive("noise power", self.noise_power)?;
        positive("direct link distance", self.direct_link_distance)?;
        if let Some(r) = self.sparsify_radius {
            positive("sparsify radius", r)?;
        }
        Ok(())
    }

    fn fade(&self, rng: &mut rng::Rng) -> f64 {
        match self.fading {
            Fading::Rayleigh => rng.sample(Exp1),
            Fading::None => 1.0,
        }
    }
}

/// One draw of all link gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `gains.get(i, j)`: power gain from transmitter `i` to receiver `j`.
    pub gains: CsrMatrix,
    pub direct: Vec<f64>,
    pub noise_power: f64,
    /// `(G + Gᵀ) / 2` scaled to unit spectral norm.
    pub gso: CsrMatrix,
    /// Some pair sat closer than the minimum distance and had its gain capped.
    pub coincident: bool,
}

impl ChannelRealization {
    /// Builds a realization from explicit gains; the shift operator is
    /// derived as in [`draw_channel`].
    pub fn from_parts(gains: CsrMatrix, direct: Vec<f64>, noise_power: f64) -> Result<Self> {
        if direct.len() != gains.n() {
            return Err(Error::dim(format!(
                "{} direct gains for {} users",
                direct.len(),
                gains.n()
            )));
        }
        if !(noise_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        let bad = gains
            .triplets()
            .into_iter()
            .map(|t| t.w)
            .chain(direct.iter().copied())
            .find(|v| !(*v >= 0.0) || !v.is_finite());
        if let Some(v) = bad {
            return Err(Error::InvalidParameter(format!("gain {v} is not a nonnegative number")));
        }
        let gso = normalized_gso(&gains)?;
        Ok(Self {
            gains,
            direct,
            noise_power,
            gso,
            coincident: false,
        })
    }

    pub fn n(&self) -> usize {
        self.direct.len()
    }

    /// Direct gains scaled to unit mean (all ones if every gain is zero).
    pub fn direct_signal(&self) -> Vec<f64> {
        let mean = self.direct.iter().sum::<f64>() / self.n().max(1) as f64;
        if mean > 0.0 {
            self.direct.iter().map(|d| d / mean).collect()
        } else {
            vec![1.0; self.n()]
        }
    }

    pub fn input_signal(&self, kind: InputSignal) -> Vec<f64> {
        match kind {
            InputSignal::DirectGain => self.direct_signal(),
            InputSignal::Ones => vec![1.0; self.n()],
        }
    }

    /// Relabels users: user `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let mut direct = vec![0.0; self.n()];
        for (i, &p) in perm.iter().enumerate() {
            direct[p] = self.direct[i];
        }
        Ok(Self {
            gains: self.gains.permute(perm)?,
            direct,
            noise_power: self.noise_power,
            gso: self.gso.permute(perm)?,
            coincident: self.coincident,
        })
    }
}

/// What the network sees at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSignal {
    #[default]
    DirectGain,
    Ones,
}

fn normalized_gso(gains: &CsrMatrix) -> Result<CsrMatrix> {
    let sym = gains.scale(0.5).add(&gains.transpose().scale(0.5))?;
    let norm = nonnegative_spectral_norm(&sym);
    Ok(if norm > 0.0 { sym.scale(1.0 / norm) } else { sym })
}

pub fn draw_channel(graph: &GeometricGraph, model: &ChannelModel, seed: u64) -> Result<ChannelRealization> {
    model.validate()?;
    let n = graph.n();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let d_min = graph.spec().spacing / 10.0;
    let gamma = model.pathloss_exponent;
    let cutoff_sq = model.sparsify_radius.map(|r| r * r);
    let mut rng = rng::rng(seed);
    let mut coincident = false;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d_sq = graph.distance_sq(i, j);
            if cutoff_sq.is_some_and(|c| d_sq > c) {
                continue;
            }
            let d = if d_sq.sqrt() < d_min {
                coincident = true;
                d_min
            } else {
                d_sq.sqrt()
            };
            row.push((j, d.powf(-gamma) * model.fade(&mut rng)));
        }
    }
    let direct_loss = model.direct_link_distance.powf(-gamma);
    let direct = (0..n).map(|_| direct_loss * model.fade(&mut rng)).collect();
    let gains = CsrMatrix::from_rows(rows);
    let gso = normalized_gso(&gains)?;
    Ok(ChannelRealization {
        gains,
        direct,
        noise_power: model.noise_power,
        gso,
        coincident,
    })
}

/// `r_i = ln(1 + direct_i p_i / (noise + sum_{k != i} gains[k][i] p_k))`
pub fn rates(real: &ChannelRealization, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != real.n() {
        return Err(Error::dim(format!("{} powers for {} users", p.len(), real.n())));
    }
    if let Some((node, &power)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InvalidPower { node, power });
    }
    let received = real.gains.matvec_transpose(p)?;
    Ok((0..real.n())
        .map(|i| {
            if p[i] == 0.0 {
                return 0.0;
            }
            // the diagonal of gains is empty, so received[i] is pure interference
            let interference = received[i] - real.gains.get(i, i) * p[i];
            (real.direct[i] * p[i] / (real.noise_power + interference)).ln_1p()
        })
        .collect())
}

pub fn sum_rate(real: &ChannelRealization, p: &[f64]) -> Result<f64> {
    Ok(rates(real, p)?.iter().sum())
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelFile {
    format: String,
    version: u32,
    n: usize,
    seed: Option<u64>,
    model: Option<ChannelModel>,
    noise_power: f64,
    direct: Vec<f64>,
    gains: Vec<Triplet>,
}

const CHANNEL_FORMAT: &str = "rgg-transfer/channel";

pub fn channel_to_json(
    real: &ChannelRealization,
    seed: Option<u64>,
    model: Option<&ChannelModel>,
) -> Result<String> {
    let file = ChannelFile {
        format: CHANNEL_FORMAT.into(),
        version: 1,
        n: real.n(),
        seed,
        model: model.cloned(),
        noise_power: real.noise_power,
        direct: real.direct.clone(),
        gains: real.gains.triplets(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn channel_from_json(text: &str) -> Result<ChannelRealization> {
    let file: ChannelFile = serde_json::from_str(text)?;
    if file.format != CHANNEL_FORMAT || file.version != 1 {
        return Err(Error::InvalidParameter(format!(
            "unsupported channel file {} v{}",
            file.format, file.version
        )));
    }
    if file.direct.len() != file.n {
        return Err(Error::dim("direct gain count differs from n"));
    }
    ChannelRealization::from_parts(
        CsrMatrix::from_triplets(file.n, &file.gains)?,
        file.direct,
        file.noise_power,
    )
}

pub fn save_channel(path: &Path, real: &ChannelRealization, seed: Option<u64>, model: Option<&ChannelModel>) -> Result<()> {
    fs::write(path, channel_to_json(real, seed, model)?).map_err(|e| Error::io(path, e))
}

pub fn load_channel(path: &Path) -> Result<ChannelRealization> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    channel_from_json(&text)
}
