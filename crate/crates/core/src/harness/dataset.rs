//! Stored graph datasets: perturbed grids per scale, split into training and
//! held-out graphs, indexed by a JSON manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::DatasetSpec;
use crate::error::{Error, Result};
use crate::geometry::{drop_isolated, edge_count, make_grid, perturb_to_rgg, GeometricGraph, GridSpec};
use crate::rng;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "rgg-transfer/dataset";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEntry {
    pub id: u64,
    pub split: Split,
    /// Path relative to the dataset root.
    pub file: String,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub target: usize,
    pub side: usize,
    pub graphs: Vec<GraphEntry>,
}

impl ScaleEntry {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &GraphEntry> {
        self.graphs.iter().filter(move |g| g.split == split)
    }

    pub fn mean_nodes(&self, split: Split) -> f64 {
        let (sum, count) = self
            .split(split)
            .fold((0usize, 0usize), |(s, c), g| (s + g.nodes, c + 1));
        sum as f64 / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub spec: DatasetSpec,
    pub scales: Vec<ScaleEntry>,
}

impl Manifest {
    pub fn scale(&self, target: usize) -> Result<&ScaleEntry> {
        self.scales
            .iter()
            .find(|s| s.target == target)
            .ok_or_else(|| Error::Config(format!("scale {target} is not in the dataset")))
    }

    /// Checks that no graph id is reused, in particular across splits.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for g in self.scales.iter().flat_map(|s| &s.graphs) {
            if !seen.insert(g.id) {
                return Err(Error::Config(format!("graph id {} appears twice in the manifest", g.id)));
            }
        }
        Ok(())
    }
}

fn graph_id(scale_index: usize, split: Split, i: usize) -> u64 {
    let split_bit = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    ((scale_index as u64) << 32) | (split_bit << 31) | i as u64
}

/// Builds one graph: the grid nearest the target, jittered and stripped of
/// isolated nodes.
pub fn build_graph(spec: &DatasetSpec, target: usize, seed: u64) -> Result<GeometricGraph> {
    let grid = make_grid(&GridSpec::new(DatasetSpec::side(target), spec.spacing, spec.radius, false))?;
    drop_isolated(&perturb_to_rgg(&grid, spec.sigma, seed)?)
}

/// Seed of the graph with manifest id `id`.
pub fn graph_seed(master: u64, id: u64) -> u64 {
    rng::derive(master, &[rng::tag("graph"), id])
}

/// Generates and writes a dataset under `root`. Existing files are
/// overwritten.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64, root: &Path) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut scales = Vec::with_capacity(spec.scales.len());
    for (s, &target) in spec.scales.iter().enumerate() {
        let dir = format!("scale_{target}");
        let dir_path = root.join(&dir);
        fs::create_dir_all(&dir_path).map_err(|e| Error::io(&dir_path, e))?;
        let jobs: Vec<(Split, usize)> = (0..spec.graphs_per_scale)
            .map(|i| (Split::Train, i))
            .chain((0..spec.test_graphs_per_scale).map(|i| (Split::Test, i)))
            .collect();
        let graphs = jobs
            .par_iter()
            .map(|&(split, i)| {
                let id = graph_id(s, split, i);
                let g = build_graph(spec, target, graph_seed(seed, id))?;
                let file = format!("{dir}/{}_{i:03}.json", split.as_str());
                g.save(&root.join(&file))?;
                Ok(GraphEntry {
                    id,
                    split,
                    file,
                    nodes: g.n(),
                    edges: edge_count(&g),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        scales.push(ScaleEntry {
            target,
            side: DatasetSpec::side(target),
            graphs,
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        seed,
        spec: spec.clone(),
        scales,
    };
    manifest.check_disjoint()?;
    let path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A dataset on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::DatasetNotFound(root.to_path_buf()));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Format {
                path,
                msg: format!("unsupported manifest {} v{}", manifest.format, manifest.version),
            });
        }
        manifest.check_disjoint()?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    /// Loads the graphs of one split at one scale, in manifest order.
    pub fn load(&self, target: usize, split: Split) -> Result<Vec<(u64, GeometricGraph)>> {
        let entries: Vec<&GraphEntry> = self.manifest.scale(target)?.split(split).collect();
        entries
            .par_iter()
            .map(|e| Ok((e.id, GeometricGraph::load(&self.root.join(&e.file))?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(sigma: f64) -> DatasetSpec {
        DatasetSpec {
            scales: vec![16],
            graphs_per_scale: 2,
            test_graphs_per_scale: 1,
            sigma,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn unjittered_graphs_are_identical_grids() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&tiny(0.0), 3, dir.path()).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest, m);
        let train = ds.load(16, Split::Train).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0].1.n(), 16);
        assert_eq!(train[0].1.positions(), train[1].1.positions());
        assert_eq!(train[0].1.adjacency(), train[1].1.adjacency());
    }

    #[test]
    fn splits_are_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny(0.1);
        spec.scales = vec![16, 25];
        let m = generate_dataset(&spec, 3, dir.path()).unwrap();
        m.check_disjoint().unwrap();
        let train: HashSet<u64> = m.scales.iter().flat_map(|s| s.split(Split::Train)).map(|g| g.id).collect();
        assert!(m.scales.iter().flat_map(|s| s.split(Split::Test)).all(|g| !train.contains(&g.id)));
        let mut dup = m.clone();
        dup.scales[1].graphs[0].id = dup.scales[0].graphs[0].id;
        assert!(dup.check_disjoint().is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&tiny(0.2), 9, a.path()).unwrap();
        generate_dataset(&tiny(0.2), 9, b.path()).unwrap();
        for f in [MANIFEST_FILE, "scale_16/train_000.json", "scale_16/test_000.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn missing_dataset() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::open(dir.path()), Err(Error::DatasetNotFound(_))));
    }
}
