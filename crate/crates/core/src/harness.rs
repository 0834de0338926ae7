//! Experiment runners behind the CLI: localisation accuracy versus sweep
//! size, the interpolation baseline, measurement-budget curves, per-beam
//! heatmaps, SINR mismatch and fine-tuning studies.
//!
//! Every runner is a pure function of its configuration and seeds. Random
//! streams are derived with [`sub_seed`], loops go through [`Exec`] (which
//! keeps input order), and CSV floats are printed with a fixed precision,
//! so re-running a study reproduces its files byte for byte.

use crate::array::Angles;
use crate::channel::Twin;
use crate::codebook::{beam_subset, beam_subset_indices, Codebook};
use crate::exec::Exec;
use crate::geom::Vec3;
pub use crate::localizer::frozen_identical;
use crate::localizer::{
    evaluate_rmse, fine_tune, gen_dataset, leave_one_location_out, location_dataset, train, Dataset, LooReport, MlpModel, TrainConfig,
    DEFAULT_FROZEN,
};
use crate::measurement::{GroundTruth, NoiseModel};
use crate::optimizer::{optimize, pao_loop, OptResult, OptimizerConfig, OptimizerKind};
use crate::scene::{Positions, Scene};
use crate::svg::{heatmaps, xy_plot, Series};
use crate::{to_dbm, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// Sweep sizes of the localisation study.
pub const S_LIST: [usize; 6] = [3, 5, 7, 11, 21, 63];

/// Size of the full codebook sweep the per-S datasets are cut from.
const FULL_S: usize = 63;

/// SplitMix64 finaliser of `seed ⊕ stream`; independent streams for the
/// different random consumers of one run.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stand-in for the physical environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    /// Relative jitter of every reflection coefficient.
    pub jitter: f64,
    /// Log-normal measurement noise, dB.
    pub noise_sigma_db: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self { jitter: 0.2, noise_sigma_db: 1.0, seed: 7 }
    }
}

/// Which scene answers real measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    /// The twin itself, noiseless.
    Twin,
    /// The perturbed twin with measurement noise.
    Perturbed,
}

/// Fine-tuning measurement layout: two parallel rows of positions plus
/// fixed interferers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocationLayout {
    /// First position of the first row, `(x, y)`.
    pub origin: [f64; 2],
    pub per_row: usize,
    /// Spacing along a row, metres.
    pub spacing: f64,
    /// Distance between the rows along y, metres.
    pub row_gap: f64,
    /// Sweeps recorded at every position.
    pub sweeps: usize,
    pub interferers: Vec<Vec3>,
}

impl Default for LocationLayout {
    fn default() -> Self {
        Self { origin: [4.25, 1.45], per_row: 15, spacing: 0.1, row_gap: 1.0, sweeps: 20, interferers: vec![Vec3::new(6.2, 1.2, 0.9)] }
    }
}

impl LocationLayout {
    /// Row A then row B, at the placement height of `scene`.
    pub fn positions(&self, scene: &Scene) -> Result<Vec<Positions>> {
        if self.interferers.len() != scene.k() {
            return Err(Error::InvalidConfig(format!("layout has {} interferers, scene has {}", self.interferers.len(), scene.k())));
        }
        let z = scene.placement.z;
        Ok((0..2 * self.per_row)
            .map(|i| {
                let (row, j) = (i / self.per_row, i % self.per_row);
                let sta = Vec3::new(self.origin[0] + self.spacing * j as f64, self.origin[1] + self.row_gap * row as f64, z);
                Positions { sta, interferers: self.interferers.clone() }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Scene JSON; the built-in reference office when absent.
    pub scene: Option<PathBuf>,
    pub perturbed: PerturbConfig,
    pub truth: TruthKind,
    pub s_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train: TrainConfig,
    pub fine_tune: TrainConfig,
    pub frozen_layers: usize,
    pub layout: LocationLayout,
    /// Sweep size used by single-model commands (fine-tuning, heatmap,
    /// optimize).
    pub s: usize,
    /// Evaluation placements per seed for the closed-loop studies.
    pub eval_positions: usize,
    /// Optimiser inside the twin for PAO.
    pub pao_optimizer: OptimizerKind,
    pub ga: OptimizerConfig,
    pub gbo: OptimizerConfig,
    /// Multi-start counts of the GBO budget curves.
    pub gbo_starts: Vec<usize>,
    /// Beams measured before the interpolation baseline starts expanding.
    pub interp_initial: usize,
    /// Directory of pre-trained `model_s{S}_seed{seed}.json` files to reuse.
    pub model_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "reference".into(),
            scene: None,
            perturbed: PerturbConfig::default(),
            truth: TruthKind::Perturbed,
            s_list: S_LIST.to_vec(),
            seeds: (0..5).collect(),
            train_samples: 10_000,
            test_samples: 2_000,
            train: TrainConfig::default(),
            fine_tune: TrainConfig::fine_tune(),
            frozen_layers: DEFAULT_FROZEN,
            layout: LocationLayout::default(),
            s: 11,
            eval_positions: 10,
            pao_optimizer: OptimizerKind::Ga,
            ga: OptimizerConfig::new(OptimizerKind::Ga),
            gbo: OptimizerConfig::new(OptimizerKind::Gbo),
            gbo_starts: vec![25, 50, 75, 100],
            interp_initial: 3,
            model_dir: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let max = Codebook::standard().len();
        if let Some(&s) = self.s_list.iter().chain([&self.s]).find(|&&s| s == 0 || s > max) {
            return Err(Error::SubsetOutOfRange { s, max });
        }
        if self.s_list.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("s_list and seeds must be non-empty".into()));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(Error::InvalidRange("train and test sample counts must be positive".into()));
        }
        if let Some(p) = &self.scene {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("scene file {} does not exist", p.display())));
            }
        }
        if let Some(d) = &self.model_dir {
            if !d.is_dir() {
                return Err(Error::InvalidConfig(format!("model directory {} does not exist", d.display())));
            }
        }
        if self.gbo_starts.contains(&0) {
            return Err(Error::InvalidConfig("GBO start counts must be positive".into()));
        }
        self.ga.validate()?;
        self.gbo.validate()
    }

    /// The twin scene.
    pub fn scene(&self) -> Result<Scene> {
        let s = match &self.scene {
            Some(p) => Scene::load(p)?,
            None => Scene::reference(),
        };
        s.validate()?;
        Ok(s)
    }

    /// The scene answering real measurements, and its noise.
    pub fn truth_scene(&self, twin: &Scene) -> (Scene, NoiseModel) {
        match self.truth {
            TruthKind::Twin => (twin.clone(), NoiseModel::OFF),
            TruthKind::Perturbed => (
                twin.perturbed(self.perturbed.jitter, self.perturbed.seed),
                NoiseModel { sigma_db: self.perturbed.noise_sigma_db },
            ),
        }
    }

    /// The configured optimiser of `kind`.
    pub fn optimizer(&self, kind: OptimizerKind) -> OptimizerConfig {
        match kind {
            OptimizerKind::Gbo => self.gbo.clone(),
            OptimizerKind::Ga => self.ga.clone(),
            OptimizerKind::Grid => OptimizerConfig { kind, ..self.ga.clone() },
        }
    }
}

/// Positions of the `s`-beam subset within the full-codebook sweep order.
pub fn subset_columns(s: usize) -> Result<Vec<usize>> {
    let cb = Codebook::standard();
    let full = beam_subset_indices(&cb, FULL_S)?;
    let sub = beam_subset_indices(&cb, s)?;
    Ok(sub.iter().map(|i| full.iter().position(|j| j == i).expect("subset of the full sweep")).collect())
}

/// Models trained on one seed's twin dataset, one per sweep size.
#[derive(Debug, Clone)]
pub struct SeedModels {
    pub seed: u64,
    pub models: Vec<(usize, MlpModel)>,
    /// Held-out rows with the full 63-beam sweep.
    pub test: Dataset,
}

impl SeedModels {
    pub fn model(&self, s: usize) -> Result<&MlpModel> {
        self.models.iter().find(|m| m.0 == s).map(|m| &m.1).ok_or_else(|| Error::InvalidConfig(format!("no model for S = {s}")))
    }

    /// The test rows restricted to the `s`-beam subset.
    pub fn test_for(&self, s: usize) -> Result<Dataset> {
        self.test.select_beams(&subset_columns(s)?)
    }
}

pub fn model_file(s: usize, seed: u64) -> String {
    format!("model_s{s}_seed{seed}.json")
}

/// Generates `train_samples + test_samples` full sweeps for `seed`, splits
/// them and trains one model per S (or loads it from `model_dir`).
pub fn train_models(cfg: &ExperimentConfig, scene: &Scene, seed: u64, s_list: &[usize], exec: Exec) -> Result<SeedModels> {
    let n = cfg.train_samples + cfg.test_samples;
    let full = gen_dataset(scene, n, FULL_S, sub_seed(seed, 1), exec)?;
    let train_rows: Vec<usize> = (0..cfg.train_samples).collect();
    let test_rows: Vec<usize> = (cfg.train_samples..n).collect();
    let train_full = full.rows(&train_rows);
    let models = exec.try_map(s_list.len(), |i| {
        let s = s_list[i];
        if let Some(dir) = &cfg.model_dir {
            let p = dir.join(model_file(s, seed));
            if p.is_file() {
                return Ok::<_, Error>((s, MlpModel::load(p)?));
            }
        }
        let data = train_full.select_beams(&subset_columns(s)?)?;
        let init = MlpModel::for_scene(s, scene, sub_seed(seed, 100 + s as u64))?;
        let tc = TrainConfig { seed: sub_seed(seed, 200 + s as u64), ..cfg.train.clone() };
        Ok((s, train(&init, &data, &tc)?.0))
    })?;
    Ok(SeedModels { seed, models, test: full.rows(&test_rows) })
}

/// Trains models for every configured seed and S.
pub fn train_bank(cfg: &ExperimentConfig, scene: &Scene, exec: Exec) -> Result<Vec<SeedModels>> {
    cfg.seeds.iter().map(|&seed| train_models(cfg, scene, seed, &cfg.s_list, exec)).collect()
}

fn csv_file(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn write_svg(path: &Path, svg: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, svg)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Localisation accuracy versus sweep size

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub s: usize,
    pub seed: u64,
    pub rmse_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseVsS {
    pub rows: Vec<RmseRow>,
    /// Seed-mean RMSE per S, in S order.
    pub mean: Vec<(usize, f64)>,
}

impl RmseVsS {
    /// Mean RMSE never grows by more than `slack` (relative) from one S to
    /// the next.
    pub fn non_increasing(&self, slack: f64) -> bool {
        self.mean.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + slack))
    }

    pub fn mean_at(&self, s: usize) -> Option<f64> {
        self.mean.iter().find(|m| m.0 == s).map(|m| m.1)
    }

    /// `RMSE(a) / RMSE(b)`.
    pub fn ratio(&self, a: usize, b: usize) -> Option<f64> {
        Some(self.mean_at(a)? / self.mean_at(b)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv_file(&dir.join("rmse_vs_s.csv"))?;
        w.write_record(["s", "seed", "rmse_m"])?;
        for r in &self.rows {
            w.write_record([r.s.to_string(), r.seed.to_string(), f6(r.rmse_m)])?;
        }
        for (s, m) in &self.mean {
            w.write_record([s.to_string(), "mean".into(), f6(*m)])?;
        }
        w.flush()?;
        let pts = self.mean.iter().map(|&(s, m)| (s as f64, m)).collect();
        let svg = xy_plot("Position RMSE vs sweep size", "S (measured beams)", "RMSE (m)", &[Series::line("seed mean", pts)], "data=rmse_vs_s.csv");
        write_svg(&dir.join("rmse_vs_s.svg"), &svg)
    }
}

pub fn run_rmse_vs_s(bank: &[SeedModels], s_list: &[usize]) -> Result<RmseVsS> {
    let mut rows = Vec::new();
    for sm in bank {
        for &s in s_list {
            rows.push(RmseRow { s, seed: sm.seed, rmse_m: evaluate_rmse(sm.model(s)?, &sm.test_for(s)?)? });
        }
    }
    let mean = s_list.iter().map(|&s| (s, mean(rows.iter().filter(|r| r.s == s).map(|r| r.rmse_m)))).collect();
    Ok(RmseVsS { rows, mean })
}

// ---------------------------------------------------------------------------
// Closed-loop studies

/// `n` placements of the station and interferers for `seed`.
pub fn eval_placements(scene: &Scene, seed: u64, n: usize) -> Vec<Positions> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2));
    (0..n)
        .map(|_| Positions { sta: scene.placement.sample(&mut rng), interferers: (0..scene.k()).map(|_| scene.placement.sample(&mut rng)).collect() })
        .collect()
}

/// Measurement noise stream `stream` at evaluation placement `position`.
pub fn measurement_rng(seed: u64, position: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 3 + position as u64));
    rng.set_stream(stream);
    rng
}

/// Noise for a single measurement, keyed by the beam so the value does not
/// depend on evaluation order.
fn keyed_rng(seed: u64, a: Angles) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(sub_seed(seed, a.az.to_bits()), a.el.to_bits()))
}

/// Linear interpolation of measured SINR over the codebook grid. Rows are
/// interpolated along azimuth between measured beams (constant beyond the
/// outermost ones); rows without any measurement are interpolated along
/// elevation between the nearest measured rows.
pub fn interpolate_grid(cb: &Codebook, measured: &[(usize, f64)]) -> Vec<f64> {
    let (m, n) = (cb.m(), cb.n_az());
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; m];
    for (r, row) in rows.iter_mut().enumerate() {
        let mut pts: Vec<(f64, f64)> = measured
            .iter()
            .filter(|&&(i, _)| cb.grid_position(i).0 == r)
            .map(|&(i, v)| (cb.azimuths[cb.grid_position(i).1], v))
            .collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        *row = Some(cb.azimuths.iter().map(|&az| interp1(&pts, az)).collect());
    }
    let known: Vec<(f64, usize)> = (0..m).filter(|&r| rows[r].is_some()).map(|r| (cb.elevations[r], r)).collect();
    let mut out = vec![f64::NAN; m * n];
    for r in 0..m {
        for c in 0..n {
            out[cb.index(r, c)] = match &rows[r] {
                Some(v) => v[c],
                None => {
                    let mut pts: Vec<(f64, f64)> = known.iter().map(|&(el, kr)| (el, rows[kr].as_ref().expect("known")[c])).collect();
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    interp1(&pts, cb.elevations[r])
                }
            };
        }
    }
    out
}

/// Piecewise-linear through sorted `(x, y)` points, flat outside.
fn interp1(pts: &[(f64, f64)], x: f64) -> f64 {
    if pts.is_empty() {
        return f64::NAN;
    }
    if x <= pts[0].0 {
        return pts[0].1;
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return if x1 > x0 { y0 + (y1 - y0) * (x - x0) / (x1 - x0) } else { y1 };
        }
    }
    pts[pts.len() - 1].1
}

/// Interpolated argmax; ties go to measured beams, then to the lower index.
fn grid_argmax(values: &[f64], measured: &[(usize, f64)]) -> usize {
    let is_measured = |i: usize| measured.iter().any(|m| m.0 == i);
    (0..values.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(is_measured(a).cmp(&is_measured(b))).then(b.cmp(&a)))
        .expect("non-empty grid")
}

/// Result of the interpolation baseline after each measurement count.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationRun {
    /// Codebook indices in measurement order.
    pub order: Vec<usize>,
    /// `choice[j]` is the selected beam after `j + 1` measurements (only
    /// filled from the initial subset size on).
    pub choice: Vec<Option<usize>>,
}

/// Measures `initial` spread beams, then repeatedly activates the
/// unmeasured grid neighbour closest (Chebyshev distance, then index) to
/// the current interpolated argmax, up to `max_s` measurements.
pub fn interpolation_baseline(truth: &GroundTruth, cb: &Codebook, initial: usize, max_s: usize, rng: &mut ChaCha8Rng) -> Result<InterpolationRun> {
    let initial = initial.clamp(1, max_s);
    let mut order = beam_subset_indices(cb, initial)?;
    let mut measured: Vec<(usize, f64)> = order.iter().map(|&i| (i, truth.measure_db(cb.entries[i], rng))).collect();
    let mut choice = vec![None; initial - 1];
    loop {
        let best = grid_argmax(&interpolate_grid(cb, &measured), &measured);
        choice.push(Some(best));
        if measured.len() >= max_s.min(cb.len()) {
            break;
        }
        let (br, bc) = cb.grid_position(best);
        let next = (0..cb.len())
            .filter(|i| !order.contains(i))
            .min_by_key(|&i| {
                let (r, c) = cb.grid_position(i);
                (r.abs_diff(br).max(c.abs_diff(bc)), i)
            })
            .expect("unmeasured beam left");
        order.push(next);
        measured.push((next, truth.measure_db(cb.entries[next], rng)));
    }
    Ok(InterpolationRun { order, choice })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpRow {
    pub seed: u64,
    pub position: usize,
    pub s: usize,
    pub pao_db: f64,
    pub baseline_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpBench {
    pub rows: Vec<InterpRow>,
    /// `(S, mean PAO dB, mean baseline dB)` over seeds and positions.
    pub mean: Vec<(usize, f64, f64)>,
}

impl InterpBench {
    pub fn at(&self, s: usize) -> Option<(f64, f64)> {
        self.mean.iter().find(|m| m.0 == s).map(|m| (m.1, m.2))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv_file(&dir.join("interp_bench.csv"))?;
        w.write_record(["seed", "position", "s", "pao_sinr_db", "baseline_sinr_db"])?;
        for r in &self.rows {
            w.write_record([r.seed.to_string(), r.position.to_string(), r.s.to_string(), f6(r.pao_db), f6(r.baseline_db)])?;
        }
        w.flush()?;
        let pao = self.mean.iter().map(|m| (m.0 as f64, m.1)).collect();
        let base = self.mean.iter().map(|m| (m.0 as f64, m.2)).collect();
        let svg = xy_plot(
            "PAO vs interpolation baseline",
            "S (measured beams)",
            "SINR (dB)",
            &[Series::line("PAO", pao), Series::line("interpolation", base)],
            "data=interp_bench.csv",
        );
        write_svg(&dir.join("interp_bench.svg"), &svg)
    }
}

/// For each seed and evaluation placement: PAO at every S (localise from
/// the S-beam sweep of the truth, optimise on the twin, score on the truth)
/// and the interpolation baseline after S measurements.
pub fn run_interpolation_benchmark(cfg: &ExperimentConfig, scene: &Scene, bank: &[SeedModels], exec: Exec) -> Result<InterpBench> {
    let twin = Twin::new(scene.clone())?;
    let (truth_scene, noise) = cfg.truth_scene(scene);
    let cb = Codebook::standard();
    let max_s = *cfg.s_list.iter().max().expect("validated");
    let opt = cfg.optimizer(cfg.pao_optimizer);
    let mut rows = Vec::new();
    for sm in bank {
        let places = eval_placements(scene, sm.seed, cfg.eval_positions);
        let per = exec.try_map(places.len(), |p| {
            let truth = GroundTruth::at(&truth_scene, &places[p], noise)?;
            let mut rng = measurement_rng(sm.seed, p, 0);
            let base = interpolation_baseline(&truth, &cb, cfg.interp_initial, max_s, &mut rng)?;
            let mut out = Vec::new();
            for (si, &s) in cfg.s_list.iter().enumerate() {
                let mut rng = measurement_rng(sm.seed, p, 1 + si as u64);
                let sweep = truth.sweep(&beam_subset(&cb, s)?, &mut rng);
                let oc = OptimizerConfig { seed: sub_seed(sm.seed, 1000 + p as u64), ..opt.clone() };
                let r = pao_loop(&sweep, sm.model(s)?, &twin, &oc, Exec::Sequential)?;
                let pick = base.choice.get(s - 1).copied().flatten().or(*base.choice.last().expect("ran")).expect("chosen");
                out.push(InterpRow {
                    seed: sm.seed,
                    position: p,
                    s,
                    pao_db: truth.score_db(r.theta_hat),
                    baseline_db: truth.score_db(cb.entries[pick]),
                });
            }
            Ok::<_, Error>(out)
        })?;
        rows.extend(per.into_iter().flatten());
    }
    let mean = cfg
        .s_list
        .iter()
        .map(|&s| {
            let sel = || rows.iter().filter(move |r| r.s == s);
            (s, mean(sel().map(|r| r.pao_db)), mean(sel().map(|r| r.baseline_db)))
        })
        .collect();
    Ok(InterpBench { rows, mean })
}

// ---------------------------------------------------------------------------
// Measurement budget

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaoPoint {
    pub seed: u64,
    pub position: usize,
    /// `ga` or `gbo{D_MS}`.
    pub optimizer: String,
    pub s: usize,
    /// Real measurements charged, always `s`.
    pub charges: u64,
    pub sinr_db: f64,
}

/// Direct optimisation on the truth. `trace` holds
/// `(charges, measured best, true SINR of the incumbent)` at every
/// evaluation where the incumbent changed, plus the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub seed: u64,
    pub position: usize,
    pub optimizer: String,
    pub charges: u64,
    pub trace: Vec<(u64, f64, f64)>,
}

impl BaselineRun {
    /// Charges until the incumbent's true SINR first reaches `target`;
    /// `None` if it never does.
    pub fn charges_to_reach(&self, target: f64) -> Option<u64> {
        self.trace.iter().find(|t| t.2 >= target).map(|t| t.0)
    }

    /// True SINR of the incumbent after `charges` measurements.
    pub fn true_after(&self, charges: u64) -> Option<f64> {
        self.trace.iter().take_while(|t| t.0 <= charges).last().map(|t| t.2)
    }
}

/// Charges each method needs to come within the margin of PAO's final
/// SINR at one placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub seed: u64,
    pub position: usize,
    /// `ga` or `gbo`.
    pub pair: String,
    pub target_db: f64,
    pub pao_charges: u64,
    pub baseline_charges: u64,
    /// The baseline never reached the target; its full budget is counted.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurves {
    pub pao: Vec<PaoPoint>,
    pub baseline: Vec<BaselineRun>,
    pub costs: Vec<CostRow>,
}

impl BudgetCurves {
    /// Seed-averaged baseline charges over seed-averaged PAO charges.
    pub fn ratio(&self, pair: &str) -> f64 {
        let rows: Vec<&CostRow> = self.costs.iter().filter(|c| c.pair == pair).collect();
        let mut seeds: Vec<u64> = rows.iter().map(|c| c.seed).collect();
        seeds.dedup();
        let per_seed = |f: &dyn Fn(&CostRow) -> f64| mean(seeds.iter().map(|&s| mean(rows.iter().filter(|c| c.seed == s).map(|c| f(c)))));
        per_seed(&|c| c.baseline_charges as f64) / per_seed(&|c| c.pao_charges as f64)
    }

    /// Mean final PAO SINR per optimiser label at sweep size `s`.
    pub fn pao_mean(&self, optimizer: &str, s: usize) -> f64 {
        mean(self.pao.iter().filter(|p| p.optimizer == optimizer && p.s == s).map(|p| p.sinr_db))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv_file(&dir.join("budget_pao.csv"))?;
        w.write_record(["seed", "position", "optimizer", "s", "charges", "sinr_db"])?;
        for p in &self.pao {
            w.write_record([p.seed.to_string(), p.position.to_string(), p.optimizer.clone(), p.s.to_string(), p.charges.to_string(), f6(p.sinr_db)])?;
        }
        w.flush()?;
        let mut w = csv_file(&dir.join("budget_baseline.csv"))?;
        w.write_record(["seed", "position", "optimizer", "charges", "best_measured_db", "incumbent_sinr_db"])?;
        for b in &self.baseline {
            for t in &b.trace {
                w.write_record([b.seed.to_string(), b.position.to_string(), b.optimizer.clone(), t.0.to_string(), f6(t.1), f6(t.2)])?;
            }
        }
        w.flush()?;
        let mut w = csv_file(&dir.join("budget_costs.csv"))?;
        w.write_record(["seed", "position", "pair", "target_db", "pao_charges", "baseline_charges", "censored"])?;
        for c in &self.costs {
            w.write_record([
                c.seed.to_string(),
                c.position.to_string(),
                c.pair.clone(),
                f6(c.target_db),
                c.pao_charges.to_string(),
                c.baseline_charges.to_string(),
                c.censored.to_string(),
            ])?;
        }
        w.flush()?;

        let mut labels: Vec<String> = self.pao.iter().map(|p| p.optimizer.clone()).collect();
        labels.dedup();
        labels.sort();
        labels.dedup();
        let mut series: Vec<Series> = labels
            .iter()
            .map(|l| {
                let mut ss: Vec<usize> = self.pao.iter().filter(|p| &p.optimizer == l).map(|p| p.s).collect();
                ss.sort();
                ss.dedup();
                Series::line(format!("PAO {l}"), ss.iter().map(|&s| (s as f64, self.pao_mean(l, s))).collect())
            })
            .collect();
        let checkpoints: Vec<u64> = [1, 2, 3, 5, 7, 11, 21, 40, 63, 100, 150, 200, 300].into_iter().collect();
        for l in ["direct-ga", "direct-gbo"] {
            let runs: Vec<&BaselineRun> = self.baseline.iter().filter(|b| b.optimizer == l).collect();
            if runs.is_empty() {
                continue;
            }
            let pts = checkpoints.iter().map(|&c| (c as f64, mean(runs.iter().filter_map(|b| b.true_after(c))))).filter(|p| p.1.is_finite()).collect();
            series.push(Series::line(l, pts));
        }
        let svg = xy_plot("SINR vs real measurements", "real measurements", "SINR (dB)", &series, "data=budget_pao.csv,budget_baseline.csv");
        write_svg(&dir.join("budget_curves.svg"), &svg)
    }
}

/// Label of a GBO multi-start count.
fn gbo_label(starts: usize) -> String {
    format!("gbo{starts}")
}

/// PAO curves (GA, and GBO for each start count) over the S list, the
/// direct GA and GBO baselines on the truth, and the charges each needs to
/// come within `margin_db` of PAO's final SINR (the value at the largest S).
/// GBO is compared at its largest start count.
pub fn run_budget_curves(cfg: &ExperimentConfig, scene: &Scene, bank: &[SeedModels], margin_db: f64, exec: Exec) -> Result<BudgetCurves> {
    let twin = Twin::new(scene.clone())?;
    let (truth_scene, noise) = cfg.truth_scene(scene);
    let cb = Codebook::standard();
    let mut s_sorted = cfg.s_list.clone();
    s_sorted.sort();
    s_sorted.dedup();
    let max_starts = *cfg.gbo_starts.iter().max().unwrap_or(&cfg.gbo.gbo.starts);
    let mut variants: Vec<(String, OptimizerConfig)> = vec![("ga".into(), cfg.ga.clone())];
    for &d in &cfg.gbo_starts {
        let mut c = cfg.gbo.clone();
        c.gbo.starts = d;
        variants.push((gbo_label(d), c));
    }

    let mut out = BudgetCurves { pao: Vec::new(), baseline: Vec::new(), costs: Vec::new() };
    for sm in bank {
        let places = eval_placements(scene, sm.seed, cfg.eval_positions);
        let per = exec.try_map(places.len(), |p| {
            let truth = GroundTruth::at(&truth_scene, &places[p], noise)?;
            let mut pao = Vec::new();
            for (si, &s) in s_sorted.iter().enumerate() {
                let mut rng = measurement_rng(sm.seed, p, 1 + si as u64);
                let before = truth.charges();
                let sweep = truth.sweep(&beam_subset(&cb, s)?, &mut rng);
                let charges = truth.charges() - before;
                for (label, oc) in &variants {
                    let oc = OptimizerConfig { seed: sub_seed(sm.seed, 1000 + p as u64), ..oc.clone() };
                    let r = pao_loop(&sweep, sm.model(s)?, &twin, &oc, Exec::Sequential)?;
                    pao.push(PaoPoint { seed: sm.seed, position: p, optimizer: label.clone(), s, charges, sinr_db: truth.score_db(r.theta_hat) });
                }
            }

            let mut baseline = Vec::new();
            for (label, base_cfg) in [("direct-ga", cfg.ga.clone()), ("direct-gbo", {
                let mut c = cfg.gbo.clone();
                c.gbo.starts = max_starts;
                c
            })] {
                let key = sub_seed(sm.seed, 5000 + p as u64);
                let before = truth.charges();
                let oc = OptimizerConfig { seed: sub_seed(sm.seed, 2000 + p as u64), ..base_cfg };
                let r = optimize(|a| truth.measure_db(a, &mut keyed_rng(key, a)), &oc, Exec::Sequential)?;
                debug_assert_eq!(truth.charges() - before, r.evaluations);
                baseline.push(BaselineRun {
                    seed: sm.seed,
                    position: p,
                    optimizer: label.into(),
                    charges: r.evaluations,
                    trace: incumbent_trace(&r, &truth),
                });
            }

            let mut costs = Vec::new();
            for (pair, pao_label, base_idx) in [("ga", "ga".to_string(), 0usize), ("gbo", gbo_label(max_starts), 1)] {
                let curve: Vec<&PaoPoint> = pao.iter().filter(|q| q.optimizer == pao_label).collect();
                let Some(last) = curve.last() else { continue };
                let target = last.sinr_db - margin_db;
                let pao_charges = curve.iter().find(|q| q.sinr_db >= target).map_or(last.charges, |q| q.charges);
                let b = &baseline[base_idx];
                let reached = b.charges_to_reach(target);
                costs.push(CostRow {
                    seed: sm.seed,
                    position: p,
                    pair: pair.into(),
                    target_db: target,
                    pao_charges,
                    baseline_charges: reached.unwrap_or(b.charges),
                    censored: reached.is_none(),
                });
            }
            Ok::<_, Error>((pao, baseline, costs))
        })?;
        for (p, b, c) in per {
            out.pao.extend(p);
            out.baseline.extend(b);
            out.costs.extend(c);
        }
    }
    Ok(out)
}

/// Compresses a per-evaluation trace to the points where the incumbent
/// changed, scoring each incumbent on the truth.
fn incumbent_trace(r: &OptResult, truth: &GroundTruth) -> Vec<(u64, f64, f64)> {
    let mut out: Vec<(u64, f64, f64)> = Vec::new();
    let mut last: Option<Angles> = None;
    for (i, t) in r.trace.iter().enumerate() {
        if last != Some(t.theta) || i + 1 == r.trace.len() {
            out.push((t.evaluations, t.best_db, truth.score_db(t.theta)));
            last = Some(t.theta);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Heatmaps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// Received station power per beam, dBm, `[elevation row][azimuth]`.
    pub true_dbm: Vec<Vec<f64>>,
    pub predicted_dbm: Vec<Vec<f64>>,
    pub pearson: f64,
}

/// Per-beam received power grids of the twin at the true and the
/// predicted positions.
pub fn render_heatmap(twin: &Twin, truth: &Positions, predicted: &Positions, cb: &Codebook) -> Result<Heatmap> {
    let grid = |p: &Positions| -> Result<Vec<Vec<f64>>> {
        let b = twin.budget_at(p)?;
        Ok((0..cb.m()).map(|r| (0..cb.n_az()).map(|c| to_dbm(b.signal_power(cb.entries[cb.index(r, c)]).max(1e-300))).collect()).collect())
    };
    let (t, p) = (grid(truth)?, grid(predicted)?);
    let pearson = pearson(t.iter().flatten().copied(), p.iter().flatten().copied());
    Ok(Heatmap { true_dbm: t, predicted_dbm: p, pearson })
}

/// Sample Pearson correlation; NaN when either side is constant.
pub fn pearson(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    let (a, b): (Vec<f64>, Vec<f64>) = (a.into_iter().collect(), b.into_iter().collect());
    let (ma, mb) = (mean(a.iter().copied()), mean(b.iter().copied()));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

impl Heatmap {
    pub fn write(&self, dir: &Path, cb: &Codebook, provenance: &str) -> Result<()> {
        let mut w = csv_file(&dir.join("heatmap.csv"))?;
        w.write_record(["grid", "el_deg", "az_deg", "power_dbm"])?;
        for (name, g) in [("true", &self.true_dbm), ("predicted", &self.predicted_dbm)] {
            for (r, row) in g.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    w.write_record([name.to_string(), f6(cb.elevations[r]), f6(cb.azimuths[c]), f6(*v)])?;
                }
            }
        }
        w.flush()?;
        let rows: Vec<String> = cb.elevations.iter().map(|e| format!("{e:+.0}°")).collect();
        let cols: Vec<String> = cb.azimuths.iter().map(|a| format!("{a:.1}°")).collect();
        let svg = heatmaps(
            &format!("Received power per beam (r = {:.3})", self.pearson),
            &[("true positions", &self.true_dbm), ("predicted positions", &self.predicted_dbm)],
            &rows,
            &cols,
            &format!("data=heatmap.csv {provenance}"),
        );
        write_svg(&dir.join("heatmap.svg"), &svg)
    }
}

// ---------------------------------------------------------------------------
// SINR mismatch

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchPoint {
    pub seed: u64,
    pub s: usize,
    pub sample: usize,
    /// `‖p̂ − p‖` over all coordinates, metres.
    pub position_error_m: f64,
    /// RMS over the codebook of twin SINR at `p̂` minus at `p`, dB.
    pub sinr_rmse_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrMismatch {
    pub points: Vec<MismatchPoint>,
}

impl SinrMismatch {
    /// Mean `(position error, SINR RMSE)` in `bins` equal-count bins of
    /// increasing position error.
    pub fn binned(&self, bins: usize) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.position_error_m, p.sinr_rmse_db)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let n = pts.len();
        let bins = bins.clamp(1, n.max(1));
        (0..bins)
            .map(|b| {
                let chunk = &pts[b * n / bins..(b + 1) * n / bins];
                (mean(chunk.iter().map(|p| p.0)), mean(chunk.iter().map(|p| p.1)))
            })
            .collect()
    }

    pub fn trend_non_decreasing(&self, bins: usize) -> bool {
        self.binned(bins).windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub fn write(&self, dir: &Path, bins: usize) -> Result<()> {
        let mut w = csv_file(&dir.join("sinr_mismatch.csv"))?;
        w.write_record(["seed", "s", "sample", "position_error_m", "sinr_rmse_db"])?;
        for p in &self.points {
            w.write_record([p.seed.to_string(), p.s.to_string(), p.sample.to_string(), f6(p.position_error_m), f6(p.sinr_rmse_db)])?;
        }
        w.flush()?;
        let scatter = self.points.iter().map(|p| (p.position_error_m, p.sinr_rmse_db)).collect();
        let svg = xy_plot(
            "SINR mismatch vs position error",
            "position error (m)",
            "SINR RMSE (dB)",
            &[Series::scatter("samples", scatter), Series::line("binned mean", self.binned(bins))],
            "data=sinr_mismatch.csv",
        );
        write_svg(&dir.join("sinr_mismatch.svg"), &svg)
    }
}

/// Compares the twin's codebook SINR at predicted and true positions for
/// every test sample, seed and S.
pub fn run_sinr_mismatch(scene: &Scene, bank: &[SeedModels], s_list: &[usize], exec: Exec) -> Result<SinrMismatch> {
    let twin = Twin::new(scene.clone())?;
    let cb = Codebook::standard();
    let mut points = Vec::new();
    for sm in bank {
        let truth_sinr = exec.try_map(sm.test.len(), |i| {
            let b = twin.budget_at(&sm.test.positions(i))?;
            Ok::<_, Error>(cb.entries.iter().map(|&a| b.sinr_db(a)).collect::<Vec<f64>>())
        })?;
        for &s in s_list {
            let test = sm.test_for(s)?;
            let pred = sm.model(s)?.predict(test.inputs.view())?;
            let pts = exec.try_map(test.len(), |i| {
                let p_hat = Positions::from_slice(&pred.row(i).to_vec())?;
                let truth = test.targets.row(i);
                let err = p_hat.to_vec().iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let b = twin.budget_at(&p_hat)?;
                let mse = mean(cb.entries.iter().zip(&truth_sinr[i]).map(|(&a, &t)| (b.sinr_db(a) - t).powi(2)));
                Ok::<_, Error>(MismatchPoint { seed: sm.seed, s, sample: i, position_error_m: err, sinr_rmse_db: mse.sqrt() })
            })?;
            points.extend(pts);
        }
    }
    Ok(SinrMismatch { points })
}

// ---------------------------------------------------------------------------
// Fine-tuning

/// The fine-tuning dataset: sweeps of the perturbed truth over the layout.
pub fn location_data(cfg: &ExperimentConfig, scene: &Scene, s: usize, seed: u64, exec: Exec) -> Result<Dataset> {
    let truth = scene.perturbed(cfg.perturbed.jitter, cfg.perturbed.seed);
    let beams = beam_subset(&Codebook::standard(), s)?;
    let noise = NoiseModel { sigma_db: cfg.perturbed.noise_sigma_db };
    location_dataset(&truth, &cfg.layout.positions(scene)?, cfg.layout.sweeps, &beams, noise, sub_seed(seed, 4), exec)
}

/// Leave-one-location-out fine-tuning of `model` on the layout data.
pub fn run_loo(cfg: &ExperimentConfig, scene: &Scene, model: &MlpModel, seed: u64, exec: Exec) -> Result<LooReport> {
    let data = location_data(cfg, scene, model.n_inputs(), seed, exec)?;
    let tc = TrainConfig { seed: sub_seed(seed, 6), ..cfg.fine_tune.clone() };
    leave_one_location_out(model, &data, cfg.frozen_layers, &tc, exec)
}

pub fn write_loo(report: &LooReport, dir: &Path) -> Result<()> {
    let mut w = csv_file(&dir.join("loo.csv"))?;
    w.write_record(["location", "rmse_pretrained_m", "rmse_finetuned_m", "frozen_intact"])?;
    for f in &report.folds {
        w.write_record([f.group.to_string(), f6(f.rmse_before), f6(f.rmse_after), f.frozen_intact.to_string()])?;
    }
    w.flush()?;
    let before = report.folds.iter().map(|f| (f.group as f64, f.rmse_before)).collect();
    let after = report.folds.iter().map(|f| (f.group as f64, f.rmse_after)).collect();
    let svg = xy_plot(
        "Leave-one-location-out RMSE",
        "held-out location",
        "RMSE (m)",
        &[Series::line("pre-trained", before), Series::line("fine-tuned", after)],
        "data=loo.csv",
    );
    write_svg(&dir.join("loo.svg"), &svg)
}

/// Fine-tunes on the full layout dataset.
pub fn run_fine_tune(cfg: &ExperimentConfig, scene: &Scene, model: &MlpModel, seed: u64, exec: Exec) -> Result<(MlpModel, Vec<f64>)> {
    let data = location_data(cfg, scene, model.n_inputs(), seed, exec)?;
    let tc = TrainConfig { seed: sub_seed(seed, 6), ..cfg.fine_tune.clone() };
    let (m, report) = fine_tune(model, &data, cfg.frozen_layers, &tc)?;
    Ok((m, report.loss_trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            s_list: vec![3, 11],
            seeds: vec![1],
            train_samples: 60,
            test_samples: 20,
            train: TrainConfig { epochs: 2, ..TrainConfig::default() },
            fine_tune: TrainConfig { epochs: 2, ..TrainConfig::fine_tune() },
            eval_positions: 2,
            gbo_starts: vec![2, 4],
            ga: OptimizerConfig { ga: crate::optimizer::GaConfig { population: 8, generations: 3, ..Default::default() }, ..OptimizerConfig::new(OptimizerKind::Ga) },
            gbo: OptimizerConfig { gbo: crate::optimizer::GboConfig { starts: 4, ..Default::default() }, ..OptimizerConfig::new(OptimizerKind::Gbo) },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn sub_seeds_differ() {
        let v: Vec<u64> = (0..100).map(|i| sub_seed(3, i)).collect();
        let mut d = v.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 100);
        assert_ne!(sub_seed(3, 0), sub_seed(4, 0));
    }

    #[test]
    fn config_validation_and_json() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.s_list, S_LIST.to_vec());
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"s_list":[3,5],"seeds":[9]}"#).unwrap();
        assert_eq!(partial.seeds, vec![9]);
        assert!(ExperimentConfig { s_list: vec![0], ..c.clone() }.validate().is_err());
        assert!(ExperimentConfig { s_list: vec![64], ..c.clone() }.validate().is_err());
        assert!(ExperimentConfig { scene: Some("/nonexistent/scene.json".into()), ..c }.validate().is_err());
    }

    #[test]
    fn subset_columns_match_subsets() {
        let cb = Codebook::standard();
        let full = beam_subset(&cb, 63).unwrap();
        for s in S_LIST {
            let cols = subset_columns(s).unwrap();
            let direct = beam_subset(&cb, s).unwrap();
            assert_eq!(cols.iter().map(|&c| full[c]).collect::<Vec<_>>(), direct);
        }
    }

    #[test]
    fn layout_geometry() {
        let scene = Scene::reference();
        let l = LocationLayout::default();
        let p = l.positions(&scene).unwrap();
        assert_eq!(p.len(), 30);
        assert!((p[1].sta.x - p[0].sta.x - 0.1).abs() < 1e-12);
        assert!((p[15].sta.y - p[0].sta.y - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|q| q.sta.z == 0.9 && q.interferers.len() == 1));
        let bad = LocationLayout { interferers: vec![], ..l };
        assert!(bad.positions(&scene).is_err());
    }

    #[test]
    fn interpolation_is_exact_at_measured_and_linear_between() {
        let cb = Codebook::standard();
        let row0 = |c: usize| cb.index(1, c);
        let measured = vec![(row0(0), 0.0), (row0(10), 10.0), (row0(20), 0.0)];
        let g = interpolate_grid(&cb, &measured);
        assert_eq!(g[row0(10)], 10.0);
        assert!((g[row0(5)] - 5.0).abs() < 1e-9);
        // Rows without measurements copy the only measured row.
        assert_eq!(g[cb.index(0, 5)], g[row0(5)]);
        assert_eq!(grid_argmax(&g, &measured), row0(10));
        // Elevation interpolation between two measured rows.
        let m2 = vec![(cb.index(0, 3), 4.0), (cb.index(2, 3), 0.0)];
        let g2 = interpolate_grid(&cb, &m2);
        assert!((g2[cb.index(1, 3)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_baseline_expands_to_full_grid() {
        let scene = Scene::reference();
        let truth = GroundTruth::new(scene, NoiseModel::OFF).unwrap();
        let cb = Codebook::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = interpolation_baseline(&truth, &cb, 3, 63, &mut rng).unwrap();
        assert_eq!(truth.charges(), 63);
        let mut o = run.order.clone();
        o.sort();
        assert_eq!(o, (0..63).collect::<Vec<_>>());
        assert_eq!(run.choice.len(), 63);
        assert!(run.choice[..2].iter().all(Option::is_none));
        // With every beam measured noiselessly the pick is the codebook best.
        let best = (0..63).max_by(|&a, &b| truth.score_db(cb.entries[a]).total_cmp(&truth.score_db(cb.entries[b]))).unwrap();
        assert_eq!(run.choice[62], Some(best));
    }

    #[test]
    fn pearson_properties() {
        let a = [1.0, 2.0, 3.0, 5.0];
        assert!((pearson(a, a) - 1.0).abs() < 1e-12);
        assert!((pearson(a, a.map(|v| -2.0 * v + 1.0)) + 1.0).abs() < 1e-12);
        assert!(pearson(a, [1.0; 4]).is_nan());
    }

    #[test]
    fn heatmap_identical_positions_and_small_errors() {
        let scene = Scene::reference();
        let twin = Twin::new(scene.clone()).unwrap();
        let cb = Codebook::standard();
        let p = scene.positions();
        let h = render_heatmap(&twin, &p, &p, &cb).unwrap();
        assert_eq!(h.true_dbm, h.predicted_dbm);
        assert_eq!(h.true_dbm.len(), 3);
        assert!(h.true_dbm.iter().all(|r| r.len() == 21));
        // Coherent multipath makes the grid fade quickly with the station
        // position, so only the average structure survives displacement.
        let mean_r = |d: f64| {
            let rs: Vec<f64> = eval_placements(&scene, 11, 40)
                .into_iter()
                .enumerate()
                .map(|(i, q)| {
                    let a = i as f64 * 2.4;
                    let off = Positions { sta: q.sta + Vec3::new(d * a.cos(), d * a.sin(), 0.0), interferers: q.interferers.clone() };
                    render_heatmap(&twin, &q, &off, &cb).unwrap().pearson
                })
                .collect();
            mean(rs)
        };
        let (near, far) = (mean_r(0.01), mean_r(0.3));
        assert!(near >= 0.8 && near > far, "{near} {far}");
    }

    #[test]
    fn mismatch_binning() {
        let pts = (0..10).map(|i| MismatchPoint { seed: 0, s: 3, sample: i, position_error_m: i as f64, sinr_rmse_db: 2.0 * i as f64 }).collect();
        let m = SinrMismatch { points: pts };
        let b = m.binned(5);
        assert_eq!(b.len(), 5);
        assert_eq!(b[0], (0.5, 1.0));
        assert!(m.trend_non_decreasing(5));
    }

    #[test]
    fn studies_are_reproducible_and_account_measurements() {
        let cfg = tiny();
        let scene = Scene::reference();
        let bank = train_bank(&cfg, &scene, Exec::Parallel).unwrap();
        let bank2 = train_bank(&cfg, &scene, Exec::Sequential).unwrap();
        assert_eq!(bank[0].models, bank2[0].models);

        let r = run_rmse_vs_s(&bank, &cfg.s_list).unwrap();
        assert_eq!(r.mean.len(), 2);
        assert_eq!(r.rows.len(), 2);

        let mm = run_sinr_mismatch(&scene, &bank, &[3], Exec::Parallel).unwrap();
        assert_eq!(mm.points.len(), cfg.test_samples);

        let ib = run_interpolation_benchmark(&cfg, &scene, &bank, Exec::Parallel).unwrap();
        assert_eq!(ib, run_interpolation_benchmark(&cfg, &scene, &bank2, Exec::Sequential).unwrap());
        assert_eq!(ib.rows.len(), 2 * 2);

        let bc = run_budget_curves(&cfg, &scene, &bank, 0.5, Exec::Parallel).unwrap();
        assert_eq!(bc, run_budget_curves(&cfg, &scene, &bank2, 0.5, Exec::Sequential).unwrap());
        assert!(bc.pao.iter().all(|p| p.charges == p.s as u64));
        assert_eq!(bc.pao.len(), 2 * 2 * 3);
        let ga_run = bc.baseline.iter().find(|b| b.optimizer == "direct-ga").unwrap();
        assert_eq!(ga_run.charges, 8 + 3 * 6);
        assert!(bc.ratio("ga").is_finite());

        let dir = tempfile::tempdir().unwrap();
        bc.write(dir.path()).unwrap();
        ib.write(dir.path()).unwrap();
        for f in ["budget_pao.csv", "budget_baseline.csv", "budget_costs.csv", "budget_curves.svg", "interp_bench.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn fine_tuning_keeps_frozen_layers() {
        let cfg = tiny();
        let scene = Scene::reference();
        let m = MlpModel::for_scene(3, &scene, 1).unwrap();
        let (tuned, trace) = run_fine_tune(&cfg, &scene, &m, 1, Exec::Sequential).unwrap();
        assert_eq!(trace.len(), 2);
        assert!(frozen_identical(&m, &tuned, 2));
        assert!(!frozen_identical(&m, &tuned, 4));
        let loo = run_loo(&cfg, &scene, &m, 1, Exec::Parallel).unwrap();
        assert_eq!(loo.folds.len(), 30);
    }
}
