//! Sweep/position datasets and their generators.

use crate::array::Angles;
use crate::channel::Twin;
use crate::codebook::{beam_subset, Codebook};
use crate::exec::Exec;
use crate::measurement::{sweep, NoiseModel};
use crate::scene::{Positions, Scene};
use crate::{Error, Result};
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Number of beams per sweep.
    pub s: usize,
    /// Number of interferers.
    pub k: usize,
    pub scene_hash: u64,
    pub seed: u64,
    pub beams: Vec<Angles>,
    pub noise_sigma_db: f64,
}

/// Row `i` pairs the sweep `inputs[i]` (dB) with the flattened positions
/// `targets[i]` (metres). `groups[i]` tags the measurement location the row
/// was recorded at; generated data uses one group per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub groups: Vec<usize>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, inputs: Array2<f64>, targets: Array2<f64>, groups: Vec<usize>) -> Result<Self> {
        let n = inputs.nrows();
        if targets.nrows() != n || groups.len() != n {
            return Err(Error::DimensionMismatch("dataset row counts differ".into()));
        }
        if inputs.ncols() != meta.s || targets.ncols() != 3 * (meta.k + 1) || meta.beams.len() != meta.s {
            return Err(Error::DimensionMismatch(format!(
                "dataset columns {}+{} do not match S={} K={}",
                inputs.ncols(),
                targets.ncols(),
                meta.s,
                meta.k
            )));
        }
        Ok(Self { meta, inputs, targets, groups })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows at `idx`, in that order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            meta: self.meta.clone(),
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
        }
    }

    /// Keeps only the sweep columns at `cols`, e.g. to derive an S-beam
    /// dataset from a full-codebook one.
    pub fn select_beams(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.meta.s) {
            return Err(Error::SubsetOutOfRange { s: c, max: self.meta.s });
        }
        let mut meta = self.meta.clone();
        meta.s = cols.len();
        meta.beams = cols.iter().map(|&c| self.meta.beams[c]).collect();
        Ok(Dataset { meta, inputs: self.inputs.select(Axis(1), cols), targets: self.targets.clone(), groups: self.groups.clone() })
    }

    /// Distinct group labels in ascending order.
    pub fn group_ids(&self) -> Vec<usize> {
        let mut g = self.groups.clone();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Row indices of group `g`.
    pub fn group_rows(&self, g: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == g).collect()
    }

    pub fn positions(&self, i: usize) -> Positions {
        Positions::from_slice(self.targets.row(i).as_slice().expect("standard layout")).expect("3(K+1) columns")
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.meta.s).map(|i| format!("sinr_db_{i}")).collect();
        for p in 0..=self.meta.k {
            for axis in ["x", "y", "z"] {
                h.push(format!("{axis}{p}"));
            }
        }
        h.push("group".into());
        h
    }

    /// Writes the CSV table and a `.json` sidecar with the metadata.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(i).iter().map(|v| v.to_string()).collect();
            rec.extend(self.targets.row(i).iter().map(|v| v.to_string()));
            rec.push(self.groups[i].to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        std::fs::write(sidecar(path), serde_json::to_vec_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(sidecar(path))?)?;
        let n_out = 3 * (meta.k + 1);
        let mut r = csv::Reader::from_path(path)?;
        let (mut xs, mut ys, mut gs) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != meta.s + n_out + 1 {
                return Err(Error::DimensionMismatch(format!("row has {} fields", rec.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidConfig(format!("bad number {s:?}: {e}")));
            for j in 0..meta.s {
                xs.push(parse(&rec[j])?);
            }
            for j in 0..n_out {
                ys.push(parse(&rec[meta.s + j])?);
            }
            gs.push(rec[meta.s + n_out].parse::<usize>().map_err(|e| Error::InvalidConfig(format!("bad group: {e}")))?);
        }
        let n = gs.len();
        let inputs = Array2::from_shape_vec((n, meta.s), xs).expect("shape");
        let targets = Array2::from_shape_vec((n, n_out), ys).expect("shape");
        Dataset::new(meta, inputs, targets, gs)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Per-row random stream: independent of how rows are scheduled.
pub(crate) fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// `n` noiseless sweeps over the `s`-beam subset of the standard codebook,
/// with the station and every interferer placed uniformly in the placement
/// rectangle.
pub fn gen_dataset(scene: &Scene, n: usize, s: usize, seed: u64, exec: Exec) -> Result<Dataset> {
    let beams = beam_subset(&Codebook::standard(), s)?;
    gen_dataset_with(scene, n, &beams, NoiseModel::OFF, seed, exec)
}

pub fn gen_dataset_with(scene: &Scene, n: usize, beams: &[Angles], noise: NoiseModel, seed: u64, exec: Exec) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidRange("dataset size must be at least 1".into()));
    }
    if beams.is_empty() {
        return Err(Error::InvalidRange("at least one beam is required".into()));
    }
    scene.placement.validate()?;
    let twin = Twin::new(scene.clone())?;
    let k = scene.k();
    let rows = exec.try_map(n, |i| {
        let mut rng = row_rng(seed, i as u64);
        let p = Positions {
            sta: scene.placement.sample(&mut rng),
            interferers: (0..k).map(|_| scene.placement.sample(&mut rng)).collect(),
        };
        let m = sweep(&twin.budget_at(&p)?, beams, noise, &mut rng);
        Ok::<_, Error>((m.sinr_db, p.to_vec()))
    })?;
    assemble(scene, beams, noise, seed, rows, (0..n).collect())
}

/// `sweeps` noisy sweeps at each of the given placements of `truth`; rows
/// of placement `g` are tagged with group `g`.
pub fn location_dataset(
    truth: &Scene,
    locations: &[Positions],
    sweeps: usize,
    beams: &[Angles],
    noise: NoiseModel,
    seed: u64,
    exec: Exec,
) -> Result<Dataset> {
    if locations.is_empty() || sweeps == 0 {
        return Err(Error::InvalidRange("need at least one location and one sweep".into()));
    }
    let twin = Twin::new(truth.clone())?;
    let budgets = exec.try_map(locations.len(), |g| twin.budget_at(&locations[g]))?;
    let rows = exec.map(locations.len() * sweeps, |i| {
        let g = i / sweeps;
        let mut rng = row_rng(seed, i as u64);
        let m = sweep(&budgets[g], beams, noise, &mut rng);
        (m.sinr_db, budgets[g].positions.to_vec())
    });
    let groups = (0..locations.len() * sweeps).map(|i| i / sweeps).collect();
    assemble(truth, beams, noise, seed, rows, groups)
}

fn assemble(scene: &Scene, beams: &[Angles], noise: NoiseModel, seed: u64, rows: Vec<(Vec<f64>, Vec<f64>)>, groups: Vec<usize>) -> Result<Dataset> {
    let n = rows.len();
    let s = beams.len();
    let n_out = 3 * (scene.k() + 1);
    let mut inputs = Array2::zeros((n, s));
    let mut targets = Array2::zeros((n, n_out));
    for (i, (x, y)) in rows.into_iter().enumerate() {
        inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
        targets.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
    }
    let meta = DatasetMeta { s, k: scene.k(), scene_hash: scene.content_hash(), seed, beams: beams.to_vec(), noise_sigma_db: noise.sigma_db };
    Dataset::new(meta, inputs, targets, groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_in_range() {
        let s = Scene::reference();
        let a = gen_dataset(&s, 5, 11, 42, Exec::Parallel).unwrap();
        let b = gen_dataset(&s, 5, 11, 42, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let one = gen_dataset(&s, 1, 11, 42, Exec::Sequential).unwrap();
        assert_eq!(one.inputs.row(0), a.inputs.row(0));
        for i in 0..a.len() {
            let p = a.positions(i);
            for q in std::iter::once(p.sta).chain(p.interferers) {
                assert_eq!(q.z, 0.9);
                assert!((3.4..=6.5).contains(&q.x) && (1.0..=2.9).contains(&q.y));
            }
        }
        assert_eq!(a.inputs.ncols(), 11);
        assert_eq!(a.targets.ncols(), 6);
    }

    #[test]
    fn errors() {
        let s = Scene::reference();
        assert!(matches!(gen_dataset(&s, 0, 3, 0, Exec::Sequential), Err(Error::InvalidRange(_))));
        let mut bad = s.clone();
        bad.placement.x = [6.5, 3.4];
        assert!(matches!(gen_dataset(&bad, 2, 3, 0, Exec::Sequential), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn column_selection_matches_direct_generation() {
        let s = Scene::reference();
        let cb = Codebook::standard();
        let full = gen_dataset(&s, 4, 63, 7, Exec::Sequential).unwrap();
        let full_idx = crate::codebook::beam_subset_indices(&cb, 63).unwrap();
        let sub_idx = crate::codebook::beam_subset_indices(&cb, 5).unwrap();
        let cols: Vec<usize> = sub_idx.iter().map(|i| full_idx.iter().position(|j| j == i).unwrap()).collect();
        let derived = full.select_beams(&cols).unwrap();
        let direct = gen_dataset_with(&s, 4, &beam_subset(&cb, 5).unwrap(), NoiseModel::OFF, 7, Exec::Sequential).unwrap();
        assert_eq!(derived.targets, direct.targets);
        for (a, b) in derived.inputs.iter().zip(direct.inputs.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = Scene::reference();
        let d = gen_dataset(&s, 6, 5, 1, Exec::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.save(&p).unwrap();
        assert!(sidecar(&p).exists());
        assert_eq!(Dataset::load(&p).unwrap(), d);
    }

    #[test]
    fn location_groups() {
        let s = Scene::reference();
        let locs = vec![s.positions(), Positions { sta: crate::geom::Vec3::new(5.5, 2.5, 0.9), interferers: s.positions().interferers }];
        let beams = beam_subset(&Codebook::standard(), 3).unwrap();
        let d = location_dataset(&s, &locs, 4, &beams, NoiseModel { sigma_db: 1.0 }, 3, Exec::Sequential).unwrap();
        assert_eq!(d.len(), 8);
        assert_eq!(d.group_ids(), vec![0, 1]);
        assert_eq!(d.group_rows(1), vec![4, 5, 6, 7]);
        assert_ne!(d.inputs.row(0), d.inputs.row(1));
    }
}
