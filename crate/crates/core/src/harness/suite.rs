//! Randomized verification suites over the transfer inequalities, and the
//! discrepancy decay fit.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::BoundsSection;
use crate::bounds::{
    estimate_alpha, fit_grid_student, fit_student, verify_cross_scale, verify_filter_rgg_dgg, verify_gnn_rgg_dgg,
    verify_grid_filter, verify_grid_gnn, verify_loss_rgg_dgg, AlphaFit, BoundName, BoundReport, GridPair,
    PerturbedFamily,
};
use crate::error::{Error, Result};
use crate::geometry::{make_grid, perturb_to_rgg, GridSpec};
use crate::gnn::multi::MultiGnn;
use crate::gnn::{FilterTaps, GnnParams, Nonlinearity, OutputSquash};
use crate::rng::{self, Rng};

/// Constants at which the cross-scale inequality is reported.
pub const CROSS_SCALE_CONSTANTS: [f64; 2] = [1.0, 10.0];

fn normal_vec(rng: &mut Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_taps(rng: &mut Rng, k: usize, scale: f64) -> FilterTaps {
    FilterTaps(normal_vec(rng, k + 1, scale))
}

fn random_net(rng: &mut Rng, depth: usize, k: usize, scale: f64) -> Result<GnnParams> {
    GnnParams::new(
        (0..depth).map(|_| random_taps(rng, k, scale)).collect(),
        Nonlinearity::Relu,
        OutputSquash::None,
    )
}

/// Per-instance draws shared by the perturbed-grid suites.
struct RggInstance {
    side: usize,
    sigma: f64,
    k: usize,
    rng: Rng,
}

impl RggInstance {
    fn draw(cfg: &BoundsSection, i: usize, seed: u64) -> Self {
        let mut rng = rng::rng(seed);
        let side = cfg.rgg_sides[i % cfg.rgg_sides.len()];
        // (0, sigma_max]
        let sigma = cfg.sigma_max * cfg.spacing * (1.0 - rng.random::<f64>());
        let k = rng.random_range(1..=cfg.max_order);
        Self { side, sigma, k, rng }
    }

    fn family(&mut self, cfg: &BoundsSection) -> Result<PerturbedFamily> {
        let parent = make_grid(&GridSpec::new(self.side, cfg.spacing, cfg.radius, false))?;
        let seeds: Vec<u64> = (0..cfg.rgg_seeds).map(|_| self.rng.random()).collect();
        PerturbedFamily::new(&parent, self.sigma, &seeds)
    }
}

fn check(cfg: &BoundsSection) -> Result<()> {
    if cfg.rgg_instances > 0 && (cfg.rgg_sides.is_empty() || cfg.rgg_seeds == 0 || cfg.max_order == 0) {
        return Err(Error::Config(
            "bounds.rgg_sides, bounds.rgg_seeds and bounds.max_order must be nonempty/positive".into(),
        ));
    }
    if cfg.grid_instances > 0 && (cfg.grid_min_side == 0 || cfg.grid_min_side > cfg.grid_max_side) {
        return Err(Error::Config("need 0 < bounds.grid_min_side <= bounds.grid_max_side".into()));
    }
    Ok(())
}

fn suite_seed(seed: u64, name: BoundName, i: usize) -> u64 {
    rng::derive(seed, &[rng::tag(name.as_str()), i as u64])
}

/// Filter and GNN outputs on perturbed versus parent grids.
pub fn rgg_dgg_suite(cfg: &BoundsSection, seed: u64) -> Result<Vec<BoundReport>> {
    check(cfg)?;
    let filters = (0..cfg.rgg_instances).into_par_iter().map(|i| {
        let mut inst = RggInstance::draw(cfg, i, suite_seed(seed, BoundName::FilterRggDgg, i));
        let taps = random_taps(&mut inst.rng, inst.k, cfg.tap_scale);
        let family = inst.family(cfg)?;
        let x = normal_vec(&mut inst.rng, family.parent.n(), 1.0);
        verify_filter_rgg_dgg(&family, &taps, &x)
    });
    let mut out: Vec<BoundReport> = filters.collect::<Result<_>>()?;
    let gnns = (0..cfg.rgg_instances).into_par_iter().map(|i| {
        let mut inst = RggInstance::draw(cfg, i, suite_seed(seed, BoundName::GnnRggDgg, i));
        let net = MultiGnn::random(
            cfg.gnn_depth,
            cfg.gnn_width,
            inst.k + 1,
            Nonlinearity::Relu,
            cfg.tap_scale,
            inst.rng.random(),
        );
        let family = inst.family(cfg)?;
        let x = normal_vec(&mut inst.rng, family.parent.n(), 1.0);
        verify_gnn_rgg_dgg(&family, &net, &x)
    });
    out.extend(gnns.collect::<Result<Vec<_>>>()?);
    Ok(out)
}

/// Supervised loss on perturbed versus parent grids, for students fitted on
/// the perturbed graphs. One instance per ten output instances.
pub fn loss_suite(cfg: &BoundsSection, seed: u64) -> Result<Vec<BoundReport>> {
    check(cfg)?;
    let count = cfg.rgg_instances.div_ceil(10);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut inst = RggInstance::draw(cfg, i, suite_seed(seed, BoundName::LossRggDgg, i));
            let teacher = random_net(&mut inst.rng, 2, inst.k, cfg.tap_scale)?;
            let student = random_net(&mut inst.rng, 2, inst.k, cfg.tap_scale)?;
            let family = inst.family(cfg)?;
            let x = normal_vec(&mut inst.rng, family.parent.n(), 1.0);
            let data: Vec<_> = family.members.iter().map(|g| (g.adjacency(), x.as_slice())).collect();
            let (fitted, _) = fit_student(&teacher, &student, &data, &cfg.fit())?;
            verify_loss_rgg_dgg(&family, &teacher, &fitted, &x)
        })
        .collect()
}

fn grid_pair(cfg: &BoundsSection, b1: usize, b2: usize) -> GridPair {
    GridPair {
        b1,
        b2,
        spacing: cfg.spacing,
        radius: cfg.radius,
    }
}

/// Grid window checks: fixed degenerate cases followed by randomized
/// instances inside the regime `B1 + M K >= B2`.
pub fn grid_suite(cfg: &BoundsSection, seed: u64) -> Result<Vec<BoundReport>> {
    check(cfg)?;
    if cfg.grid_instances == 0 {
        return Ok(Vec::new());
    }
    let trials = cfg.grid_trials.max(2);
    let b = cfg.grid_min_side;
    let mut out = Vec::new();
    let mut rng = rng::rng(rng::derive(seed, &[rng::tag("grid_degenerate")]));
    // equal windows
    let taps = random_taps(&mut rng, 2, cfg.tap_scale);
    out.push(verify_grid_filter(&grid_pair(cfg, b, b), &taps, trials, rng.random())?);
    // a pointwise filter never sees the extra area
    let taps = random_taps(&mut rng, 0, cfg.tap_scale);
    out.push(verify_grid_filter(&grid_pair(cfg, b, b + 2), &taps, trials, rng.random())?);
    // equal windows with the teacher as its own student
    let teacher = random_net(&mut rng, 2, 1, cfg.tap_scale)?;
    out.push(verify_grid_gnn(&teacher, &teacher, &grid_pair(cfg, b, b), trials, rng.random())?);
    // the teacher as its own student across windows
    let pair = grid_pair(cfg, b, b + 1);
    out.push(verify_grid_gnn(&teacher, &teacher, &pair, trials, rng.random())?);

    let draws: Vec<(GridPair, usize, u64)> = (0..cfg.grid_instances)
        .map(|i| {
            let mut r = rng::rng(suite_seed(seed, BoundName::GridFilter, i));
            let b1 = r.random_range(cfg.grid_min_side..=cfg.grid_max_side);
            let k = r.random_range(1..=cfg.max_order.max(1));
            let m = GridSpec::new(b1, cfg.spacing, cfg.radius, false).formula_mask_side();
            let b2 = b1 + r.random_range(1..=(m * k).max(1));
            (grid_pair(cfg, b1, b2), k, r.random())
        })
        .collect();
    let filters = draws
        .par_iter()
        .map(|&(pair, k, s)| {
            let mut r = rng::rng(s);
            verify_grid_filter(&pair, &random_taps(&mut r, k, cfg.tap_scale), trials, r.random())
        })
        .collect::<Result<Vec<_>>>()?;
    out.extend(filters);
    let gnns = draws
        .par_iter()
        .enumerate()
        .map(|(i, &(pair, k, _))| {
            let mut r = rng::rng(suite_seed(seed, BoundName::GridGnn, i));
            let teacher = random_net(&mut r, 2, k, cfg.tap_scale)?;
            let init = random_net(&mut r, 2, k, cfg.tap_scale)?;
            let student = fit_grid_student(&teacher, &init, &pair, &cfg.fit(), r.random())?;
            verify_grid_gnn(&teacher, &student, &pair, trials, r.random())
        })
        .collect::<Result<Vec<_>>>()?;
    out.extend(gnns);
    Ok(out)
}

/// Loss gap between two perturbed grids of different size, for a student
/// fitted on the smaller one, at each constant in [`CROSS_SCALE_CONSTANTS`].
pub fn cross_scale_suite(cfg: &BoundsSection, seed: u64) -> Result<Vec<BoundReport>> {
    if cfg.cross_small == 0 || cfg.cross_large == 0 {
        return Ok(Vec::new());
    }
    let mut r = rng::rng(rng::derive(seed, &[rng::tag(BoundName::CrossScale.as_str())]));
    let sigma = cfg.cross_sigma * cfg.spacing;
    let graph = |side: usize, r: &mut Rng| -> Result<_> {
        let grid = make_grid(&GridSpec::new(side, cfg.spacing, cfg.radius, false))?;
        let g = perturb_to_rgg(&grid, sigma, r.random())?;
        let x = normal_vec(r, g.n(), 1.0);
        Ok((g.adjacency().clone(), x))
    };
    let (gso_n, x_n) = graph(cfg.cross_small, &mut r)?;
    let (gso_m, x_m) = graph(cfg.cross_large, &mut r)?;
    let teacher = random_net(&mut r, 2, cfg.max_order.max(1), cfg.tap_scale)?;
    let init = random_net(&mut r, 2, cfg.max_order.max(1), cfg.tap_scale)?;
    let (student, _) = fit_student(&teacher, &init, &[(&gso_n, x_n.as_slice())], &cfg.fit())?;
    CROSS_SCALE_CONSTANTS
        .iter()
        .map(|&c| verify_cross_scale(&teacher, &student, (&gso_n, &x_n), (&gso_m, &x_m), sigma, c))
        .collect()
}

/// Every suite, in a fixed order.
pub fn run_bounds_suite(cfg: &BoundsSection, seed: u64) -> Result<Vec<BoundReport>> {
    let mut out = rgg_dgg_suite(cfg, seed)?;
    out.extend(loss_suite(cfg, seed)?);
    out.extend(grid_suite(cfg, seed)?);
    if cfg.rgg_instances > 0 {
        out.extend(cross_scale_suite(cfg, seed)?);
    }
    Ok(out)
}

/// Discrepancy decay fit on the configured ensemble.
pub fn run_alpha(cfg: &BoundsSection, seed: u64) -> Result<AlphaFit> {
    estimate_alpha(
        &cfg.alpha_sides,
        cfg.spacing,
        cfg.radius,
        cfg.alpha_sigma * cfg.spacing,
        cfg.alpha_seeds,
        rng::derive(seed, &[rng::tag("alpha")]),
    )
}

/// `(name, holds, total)` for each bound present in `reports`.
pub fn tally(reports: &[BoundReport]) -> Vec<(BoundName, usize, usize)> {
    let mut out: Vec<(BoundName, usize, usize)> = Vec::new();
    for r in reports {
        match out.iter_mut().find(|t| t.0 == r.name) {
            Some(t) => {
                t.1 += r.holds as usize;
                t.2 += 1;
            }
            None => out.push((r.name, r.holds as usize, 1)),
        }
    }
    out
}
