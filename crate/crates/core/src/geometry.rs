//! Grid graphs, random geometric graphs built by jittering grid nodes, and
//! the adjacency discrepancy between the two.
//!
//! Node `i` of a `B x B` grid sits at lattice coordinates
//! `(i mod B, i div B)`, scaled by the spacing `a`. Every adjacency in this
//! module is binary and divided by the lattice neighborhood size
//! `deg_grid = #{v in Z^2 \ {0} : |v| a <= r_c}`, so a toroidal grid has
//! unit row sums and a circulant structure, and a perturbed graph shares the
//! same weight scale as its parent.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_spectral_norm, CsrMatrix, Triplet};
use crate::rng;

/// A `B x B` lattice with spacing `a` and connection radius `r_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub side: usize,
    pub spacing: f64,
    pub radius: f64,
    pub torus: bool,
}

impl GridSpec {
    pub fn new(side: usize, spacing: f64, radius: f64, torus: bool) -> Self {
        Self {
            side,
            spacing,
            radius,
            torus,
        }
    }

    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::InvalidSpec("side must be positive".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !self.radius.is_finite() || self.radius < self.spacing {
            return Err(Error::EdgelessGraph {
                radius: self.radius,
                spacing: self.spacing,
            });
        }
        if self.torus {
            let need = 2 * self.reach() + 1;
            if self.side < need {
                return Err(Error::TorusTooSmall {
                    side: self.side,
                    reach: self.reach(),
                    need,
                });
            }
        }
        Ok(())
    }

    /// Largest lattice step count `R` with `R a <= r_c`.
    pub fn reach(&self) -> usize {
        let mut r = (self.radius / self.spacing).floor().max(0.0) as usize;
        while lattice_dist_sq(r as i64 + 1, 0, self.spacing) <= self.radius * self.radius {
            r += 1;
        }
        while r > 0 && lattice_dist_sq(r as i64, 0, self.spacing) > self.radius * self.radius {
            r -= 1;
        }
        r
    }

    /// Nonzero lattice offsets inside the connection radius.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let r = self.reach() as i64;
        let r2 = self.radius * self.radius;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx, dy) != (0, 0) && lattice_dist_sq(dx, dy, self.spacing) <= r2 {
                    out.push((dx, dy));
                }
            }
        }
        out
    }

    /// `deg_grid`, the neighborhood size of an interior lattice node.
    pub fn neighborhood_size(&self) -> usize {
        self.offsets().len()
    }

    /// Area per node, `rho = a^2`.
    pub fn density(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// `ceil(sqrt(pi r_c^2 / rho + 1))`, reported alongside the centered
    /// mask side.
    pub fn formula_mask_side(&self) -> usize {
        (std::f64::consts::PI * self.radius * self.radius / self.density() + 1.0)
            .sqrt()
            .ceil() as usize
    }

    pub fn centered_mask_side(&self) -> usize {
        2 * self.reach() + 1
    }

    pub fn node_index(&self, n1: usize, n2: usize) -> usize {
        n1 + n2 * self.side
    }

    pub fn node_coords(&self, i: usize) -> (usize, usize) {
        (i % self.side, i / self.side)
    }
}

fn lattice_dist_sq(dx: i64, dy: i64, a: f64) -> f64 {
    let x = dx as f64 * a;
    let y = dy as f64 * a;
    x * x + y * y
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    Dgg,
    Rgg,
}

/// Node positions plus normalized adjacency. Immutable once built.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    spec: GridSpec,
    kind: GraphKind,
    positions: Vec<[f64; 2]>,
    adjacency: CsrMatrix,
    sigma: f64,
    seed: Option<u64>,
    original_indices: Vec<usize>,
    parent: Option<Arc<GeometricGraph>>,
}

impl GeometricGraph {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// The normalized graph shift operator.
    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Index of each node in the graph it was cut from (identity unless
    /// isolated nodes were dropped).
    pub fn original_indices(&self) -> &[usize] {
        &self.original_indices
    }

    pub fn parent(&self) -> Option<&GeometricGraph> {
        self.parent.as_deref()
    }

    pub fn degree_weight(&self) -> f64 {
        1.0 / self.spec.neighborhood_size() as f64
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.adjacency.row_nnz(i)).collect()
    }

    /// Distance under the graph's own metric: torus-aware for toroidal
    /// grids, Euclidean otherwise.
    pub fn distance_sq(&self, i: usize, j: usize) -> f64 {
        if self.kind == GraphKind::Dgg && self.spec.torus {
            let b = self.spec.side as i64;
            let (x1, y1) = self.spec.node_coords(i);
            let (x2, y2) = self.spec.node_coords(j);
            let wrap = |d: i64| {
                let d = d.rem_euclid(b);
                d.min(b - d)
            };
            lattice_dist_sq(
                wrap(x1 as i64 - x2 as i64),
                wrap(y1 as i64 - y2 as i64),
                self.spec.spacing,
            )
        } else {
            euclid_sq(self.positions[i], self.positions[j])
        }
    }

    fn with_parent(mut self, parent: GeometricGraph) -> Self {
        self.parent = Some(Arc::new(parent));
        self
    }
}

fn euclid_sq(p: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    dx * dx + dy * dy
}

fn lattice_positions(spec: &GridSpec) -> Vec<[f64; 2]> {
    (0..spec.n())
        .map(|i| {
            let (n1, n2) = spec.node_coords(i);
            [n1 as f64 * spec.spacing, n2 as f64 * spec.spacing]
        })
        .collect()
}

/// Binary radius graph on Euclidean positions, scaled by `weight`.
fn radius_adjacency(positions: &[[f64; 2]], radius: f64, weight: f64) -> CsrMatrix {
    let n = positions.len();
    let r2 = radius * radius;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if euclid_sq(positions[i], positions[j]) <= r2 {
                rows[i].push((j, weight));
                rows[j].push((i, weight));
            }
        }
    }
    CsrMatrix::from_rows(rows)
}

/// Builds the deterministic grid graph for `spec`.
pub fn make_grid(spec: &GridSpec) -> Result<GeometricGraph> {
    spec.validate()?;
    let positions = lattice_positions(spec);
    let weight = 1.0 / spec.neighborhood_size() as f64;
    let adjacency = if spec.torus {
        let b = spec.side as i64;
        let offsets = spec.offsets();
        let rows = (0..spec.n())
            .map(|i| {
                let (n1, n2) = spec.node_coords(i);
                offsets
                    .iter()
                    .map(|&(dx, dy)| {
                        let m1 = (n1 as i64 + dx).rem_euclid(b) as usize;
                        let m2 = (n2 as i64 + dy).rem_euclid(b) as usize;
                        (spec.node_index(m1, m2), weight)
                    })
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(rows)
    } else {
        radius_adjacency(&positions, spec.radius, weight)
    };
    Ok(GeometricGraph {
        spec: *spec,
        kind: GraphKind::Dgg,
        original_indices: (0..spec.n()).collect(),
        positions,
        adjacency,
        sigma: 0.0,
        seed: None,
        parent: None,
    })
}

/// Jitters every grid node by iid `N(0, sigma^2)` per coordinate and
/// reconnects by Euclidean radius. Node `i` keeps its index.
pub fn perturb_to_rgg(grid: &GeometricGraph, sigma: f64, seed: u64) -> Result<GeometricGraph> {
    if grid.kind != GraphKind::Dgg {
        return Err(Error::NotAGrid);
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    let mut rng = rng::rng(seed);
    let positions: Vec<[f64; 2]> = if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("validated sigma");
        grid.positions
            .iter()
            .map(|p| [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)])
            .collect()
    } else {
        grid.positions.clone()
    };
    let adjacency = radius_adjacency(&positions, grid.spec.radius, grid.degree_weight());
    Ok(GeometricGraph {
        spec: grid.spec,
        kind: GraphKind::Rgg,
        positions,
        adjacency,
        sigma,
        seed: Some(seed),
        original_indices: grid.original_indices.clone(),
        parent: None,
    }
    .with_parent(grid.clone()))
}

/// Places `B^2` nodes uniformly on the `[0, B a)^2` square at the same
/// density and normalization as the grid. Not used by the experiment or
/// bound pipelines, which jitter grids instead.
pub fn uniform_rgg(spec: &GridSpec, seed: u64) -> Result<GeometricGraph> {
    spec.validate()?;
    let extent = spec.side as f64 * spec.spacing;
    let mut rng = rng::rng(seed);
    let positions: Vec<[f64; 2]> = (0..spec.n())
        .map(|_| [rng.random::<f64>() * extent, rng.random::<f64>() * extent])
        .collect();
    let weight = 1.0 / spec.neighborhood_size() as f64;
    Ok(GeometricGraph {
        spec: *spec,
        kind: GraphKind::Rgg,
        adjacency: radius_adjacency(&positions, spec.radius, weight),
        positions,
        sigma: f64::NAN,
        seed: Some(seed),
        original_indices: (0..spec.n()).collect(),
        parent: None,
    })
}

/// Removes nodes with no neighbors. The result loses its parent link when
/// any node is removed, since indices no longer line up.
pub fn drop_isolated(g: &GeometricGraph) -> Result<GeometricGraph> {
    let keep: Vec<usize> = (0..g.n()).filter(|&i| g.adjacency.row_nnz(i) > 0).collect();
    if keep.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if keep.len() == g.n() {
        return Ok(g.clone());
    }
    Ok(GeometricGraph {
        spec: g.spec,
        kind: g.kind,
        positions: keep.iter().map(|&i| g.positions[i]).collect(),
        adjacency: g.adjacency.submatrix(&keep),
        sigma: g.sigma,
        seed: g.seed,
        original_indices: keep.iter().map(|&i| g.original_indices[i]).collect(),
        parent: None,
    })
}

/// `W_n = S_n - S_{D_n}` together with `||W_n^2||`.
#[derive(Debug, Clone)]
pub struct Discrepancy {
    pub w: CsrMatrix,
    pub spectral_norm_w2: f64,
}

pub fn discrepancy(rgg: &GeometricGraph) -> Result<Discrepancy> {
    let parent = rgg.parent().ok_or(Error::MissingParent)?;
    if parent.n() != rgg.n() {
        return Err(Error::dim(format!(
            "graph has {} nodes but its parent has {}",
            rgg.n(),
            parent.n()
        )));
    }
    let w = rgg.adjacency.sub(&parent.adjacency)?;
    // W is symmetric, so ||W^2|| = ||W||^2.
    let norm = symmetric_spectral_norm(&w);
    Ok(Discrepancy {
        spectral_norm_w2: norm * norm,
        w,
    })
}

/// Number of undirected edges present in exactly one of the two graphs.
pub fn edge_symmetric_difference(a: &GeometricGraph, b: &GeometricGraph) -> Result<usize> {
    if a.n() != b.n() {
        return Err(Error::dim("graphs differ in node count"));
    }
    let mut count = 0;
    for i in 0..a.n() {
        let ea: Vec<usize> = a.adjacency.row(i).map(|(j, _)| j).filter(|&j| j > i).collect();
        let eb: Vec<usize> = b.adjacency.row(i).map(|(j, _)| j).filter(|&j| j > i).collect();
        count += ea.iter().filter(|j| !eb.contains(j)).count();
        count += eb.iter().filter(|j| !ea.contains(j)).count();
    }
    Ok(count)
}

pub fn edge_count(g: &GeometricGraph) -> usize {
    g.adjacency.nnz() / 2
}

/// Centered `(2R+1) x (2R+1)` convolution stencil equivalent to one hop of
/// a toroidal grid's shift operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    reach: usize,
    weights: Vec<f64>,
}

impl Mask {
    pub fn from_offsets(reach: usize, offsets: &[(i64, i64)], weight: f64) -> Self {
        let side = 2 * reach + 1;
        let mut weights = vec![0.0; side * side];
        for &(dx, dy) in offsets {
            let c = (dx + reach as i64) as usize;
            let r = (dy + reach as i64) as usize;
            weights[r * side + c] = weight;
        }
        Self { reach, weights }
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    pub fn side(&self) -> usize {
        2 * self.reach + 1
    }

    /// Weight at offset `(dx, dy)`; zero outside the stencil.
    pub fn get(&self, dx: i64, dy: i64) -> f64 {
        let r = self.reach as i64;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.weights[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    /// Nonzero `(dx, dy, weight)` entries.
    pub fn taps(&self) -> Vec<(i64, i64, f64)> {
        let r = self.reach as i64;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let w = self.get(dx, dy);
                if w != 0.0 {
                    out.push((dx, dy, w));
                }
            }
        }
        out
    }

    /// Sum of absolute entries, the 1-norm used by Young's inequality.
    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

pub fn mask_matrix(grid: &GeometricGraph) -> Result<Mask> {
    if grid.kind != GraphKind::Dgg {
        return Err(Error::NotAGrid);
    }
    if !grid.spec.torus {
        return Err(Error::BoundaryNotCirculant);
    }
    Ok(Mask::from_offsets(
        grid.spec.reach(),
        &grid.spec.offsets(),
        grid.degree_weight(),
    ))
}

const GRAPH_FORMAT: &str = "rgg-transfer/graph";
const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    format: String,
    version: u32,
    n: usize,
    kind: GraphKind,
    sigma: f64,
    seed: Option<u64>,
    spec: GridSpec,
    positions: Vec<[f64; 2]>,
    original_indices: Vec<usize>,
    adjacency: Vec<Triplet>,
}

impl GeometricGraph {
    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            format: GRAPH_FORMAT.into(),
            version: GRAPH_VERSION,
            n: self.n(),
            kind: self.kind,
            // NaN is not representable in JSON; uniform graphs store -1.
            sigma: if self.sigma.is_nan() { -1.0 } else { self.sigma },
            seed: self.seed,
            spec: self.spec,
            positions: self.positions.clone(),
            original_indices: self.original_indices.clone(),
            adjacency: self.adjacency.triplets(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a serialized graph. A perturbed graph that kept all of its
    /// nodes gets its parent grid rebuilt from the stored spec.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let bad = |msg: String| Error::Format {
            path: "<graph>".into(),
            msg,
        };
        if file.format != GRAPH_FORMAT || file.version != GRAPH_VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        if file.positions.len() != file.n || file.original_indices.len() != file.n {
            return Err(bad("node count does not match stored arrays".into()));
        }
        let adjacency = CsrMatrix::from_triplets(file.n, &file.adjacency)?;
        let g = GeometricGraph {
            spec: file.spec,
            kind: file.kind,
            positions: file.positions,
            adjacency,
            sigma: if file.sigma < 0.0 { f64::NAN } else { file.sigma },
            seed: file.seed,
            original_indices: file.original_indices,
            parent: None,
        };
        let complete = g.n() == g.spec.n() && g.original_indices.iter().enumerate().all(|(i, &o)| i == o);
        if g.kind == GraphKind::Rgg && complete && !g.sigma.is_nan() {
            let parent = make_grid(&g.spec)?;
            return Ok(g.with_parent(parent));
        }
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { msg, .. } => Error::Format {
                path: path.into(),
                msg,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(b: usize, r: f64) -> GeometricGraph {
        make_grid(&GridSpec::new(b, 1.0, r, true)).unwrap()
    }

    #[test]
    fn four_neighbor_torus() {
        let g = torus(3, 1.0);
        assert!(g.degrees().iter().all(|&d| d == 4));
        for i in 0..g.n() {
            for (_, w) in g.adjacency().row(i) {
                assert_eq!(w, 0.25);
            }
        }
    }

    #[test]
    fn eight_neighbor_torus_b22() {
        let g = torus(22, 1.5);
        assert_eq!(g.n(), 484);
        // enumeration of lattice points with 0 < |v| <= 1.5
        let mut count = 0;
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                if d > 0.0 && d <= 1.5 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 8);
        assert!(g.degrees().iter().all(|&d| d == count));
        assert!(g.adjacency().row_sums().iter().all(|&s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bounded_grid_corner_and_circulance() {
        let g = make_grid(&GridSpec::new(3, 1.0, 1.0, false)).unwrap();
        assert_eq!(g.degrees()[0], 2);
        assert_eq!(g.degrees()[4], 4);
        // a circulant matrix has constant row sums; corners break that
        let sums = g.adjacency().row_sums();
        assert!(sums[0] < sums[4]);
    }

    #[test]
    fn torus_adjacency_is_circulant_in_2d() {
        let g = torus(5, 1.5);
        let spec = g.spec();
        for i in 0..g.n() {
            let (x1, y1) = spec.node_coords(i);
            for j in 0..g.n() {
                let (x2, y2) = spec.node_coords(j);
                let shifted_i = spec.node_index((x1 + 1) % 5, (y1 + 2) % 5);
                let shifted_j = spec.node_index((x2 + 1) % 5, (y2 + 2) % 5);
                assert_eq!(
                    g.adjacency().get(i, j),
                    g.adjacency().get(shifted_i, shifted_j)
                );
            }
        }
    }

    #[test]
    fn radius_smaller_than_spacing_is_edgeless() {
        let err = make_grid(&GridSpec::new(4, 1.0, 0.9, false)).unwrap_err();
        assert!(matches!(err, Error::EdgelessGraph { .. }));
    }

    #[test]
    fn tiny_torus_rejected() {
        let err = make_grid(&GridSpec::new(2, 1.0, 1.0, true)).unwrap_err();
        assert!(matches!(err, Error::TorusTooSmall { .. }));
    }

    #[test]
    fn zero_sigma_reproduces_bounded_grid() {
        let grid = make_grid(&GridSpec::new(6, 1.0, 1.2, false)).unwrap();
        let rgg = perturb_to_rgg(&grid, 0.0, 3).unwrap();
        assert_eq!(rgg.adjacency(), grid.adjacency());
        let d = discrepancy(&rgg).unwrap();
        assert_eq!(d.w.nnz(), 0);
        assert_eq!(d.spectral_norm_w2, 0.0);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let grid = make_grid(&GridSpec::new(8, 1.0, 1.2, false)).unwrap();
        let a = perturb_to_rgg(&grid, 0.2, 11).unwrap();
        let b = perturb_to_rgg(&grid, 0.2, 11).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_eq!(a.adjacency(), b.adjacency());
        let c = perturb_to_rgg(&grid, 0.2, 12).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn small_perturbation_changes_few_edges() {
        let grid = make_grid(&GridSpec::new(10, 1.0, 1.2, false)).unwrap();
        let rgg = perturb_to_rgg(&grid, 0.05, 7).unwrap();
        let changed = edge_symmetric_difference(&grid, &rgg).unwrap();
        let frac = changed as f64 / edge_count(&grid) as f64;
        // recorded regression value for this seed
        assert_eq!(changed, 0);
        assert!(frac < 0.10);
    }

    #[test]
    fn perturbing_an_rgg_is_rejected() {
        let grid = make_grid(&GridSpec::new(4, 1.0, 1.0, false)).unwrap();
        let rgg = perturb_to_rgg(&grid, 0.1, 1).unwrap();
        assert!(matches!(perturb_to_rgg(&rgg, 0.1, 2), Err(Error::NotAGrid)));
    }

    #[test]
    fn drop_isolated_cases() {
        let grid = make_grid(&GridSpec::new(4, 1.0, 1.0, false)).unwrap();
        let same = drop_isolated(&grid).unwrap();
        assert_eq!(same.adjacency(), grid.adjacency());

        let adjacency = CsrMatrix::from_triplets(
            3,
            &[Triplet { i: 0, j: 1, w: 0.25 }, Triplet { i: 1, j: 0, w: 0.25 }],
        )
        .unwrap();
        let g = GeometricGraph {
            spec: GridSpec::new(2, 1.0, 1.0, false),
            kind: GraphKind::Rgg,
            positions: vec![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]],
            adjacency,
            sigma: 0.1,
            seed: Some(0),
            original_indices: vec![0, 1, 2],
            parent: None,
        };
        let kept = drop_isolated(&g).unwrap();
        assert_eq!(kept.n(), 2);
        assert_eq!(kept.original_indices(), &[0, 1]);
        assert_eq!(kept.adjacency().get(0, 1), 0.25);

        let lonely = GeometricGraph {
            adjacency: CsrMatrix::zeros(3),
            ..g
        };
        assert!(matches!(drop_isolated(&lonely), Err(Error::EmptyGraph)));
    }

    #[test]
    fn single_dropped_edge_discrepancy() {
        // two lattice nodes at distance 1, r_c = 1.2, deg_grid = 4
        let spec = GridSpec::new(2, 1.0, 1.2, false);
        let w = 1.0 / spec.neighborhood_size() as f64;
        let parent = GeometricGraph {
            spec,
            kind: GraphKind::Dgg,
            positions: vec![[0.0, 0.0], [1.0, 0.0]],
            adjacency: radius_adjacency(&[[0.0, 0.0], [1.0, 0.0]], 1.2, w),
            sigma: 0.0,
            seed: None,
            original_indices: vec![0, 1],
            parent: None,
        };
        let moved = [[0.0, 0.0], [1.5, 0.0]];
        let rgg = GeometricGraph {
            kind: GraphKind::Rgg,
            positions: moved.to_vec(),
            adjacency: radius_adjacency(&moved, 1.2, w),
            sigma: 0.3,
            ..parent.clone()
        }
        .with_parent(parent);
        // W = [[0,-w],[-w,0]], W^2 = w^2 I
        let d = discrepancy(&rgg).unwrap();
        assert!((d.spectral_norm_w2 - w * w).abs() < 1e-15);
    }

    #[test]
    fn discrepancy_needs_parent() {
        let grid = make_grid(&GridSpec::new(4, 1.0, 1.0, false)).unwrap();
        assert!(matches!(discrepancy(&grid), Err(Error::MissingParent)));
    }

    #[test]
    fn masks() {
        let m = mask_matrix(&torus(5, 1.0)).unwrap();
        assert_eq!(m.side(), 3);
        assert_eq!(m.get(1, 0), 0.25);
        assert_eq!(m.get(0, -1), 0.25);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.l1_norm(), 1.0);

        let m = mask_matrix(&torus(5, 1.5)).unwrap();
        assert_eq!(m.side(), 3);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let expect = if (dx, dy) == (0, 0) { 0.0 } else { 0.125 };
                assert_eq!(m.get(dx, dy), expect);
            }
        }

        let bounded = make_grid(&GridSpec::new(5, 1.0, 1.0, false)).unwrap();
        assert!(matches!(mask_matrix(&bounded), Err(Error::BoundaryNotCirculant)));
    }

    #[test]
    fn mask_side_statistics() {
        let spec = GridSpec::new(10, 1.0, 1.0, true);
        assert_eq!(spec.formula_mask_side(), 3);
        assert_eq!(spec.centered_mask_side(), 3);
        let spec = GridSpec::new(10, 1.0, 2.5, true);
        assert_eq!(spec.centered_mask_side(), 5);
        assert_eq!(spec.formula_mask_side(), 5);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let grid = make_grid(&GridSpec::new(6, 0.7, 1.0, false)).unwrap();
        let rgg = perturb_to_rgg(&grid, 0.13, 99).unwrap();
        let back = GeometricGraph::from_json(&rgg.to_json().unwrap()).unwrap();
        assert_eq!(back.positions(), rgg.positions());
        assert_eq!(back.adjacency(), rgg.adjacency());
        assert_eq!(back.seed(), Some(99));
        assert_eq!(back.sigma(), 0.13);
        // parent is rebuilt, so the discrepancy survives the round trip
        let a = discrepancy(&rgg).unwrap().spectral_norm_w2;
        let b = discrepancy(&back).unwrap().spectral_norm_w2;
        assert_eq!(a, b);
    }
}
