//! Beam search over continuous steering angles.
//!
//! Every optimiser maximises an objective `Angles -> dB` inside [`Bounds`],
//! counts evaluations against an optional cap and records a best-so-far
//! trace. [`pao_loop`] wires the localizer and the twin in front of them.

mod ga;
mod gbo;

pub use ga::{ga_optimize, GaConfig};
pub use gbo::{gbo_optimize, local_ascent, Ascent, GboConfig};

use crate::array::Angles;
use crate::channel::Twin;
use crate::exec::Exec;
use crate::localizer::MlpModel;
use crate::measurement::MeasurementVector;
use crate::scene::Positions;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Axis-aligned box of beam angles, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub az: [f64; 2],
    pub el: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        let h = 90f64.to_radians();
        Self { az: [-h, h], el: [-h, h] }
    }
}

impl Bounds {
    pub fn from_degrees(az: [f64; 2], el: [f64; 2]) -> Self {
        Self { az: az.map(f64::to_radians), el: el.map(f64::to_radians) }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ok(self.az) || !ok(self.el) {
            return Err(Error::InvalidConfig(format!("empty bounds {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, a: Angles) -> bool {
        (self.az[0]..=self.az[1]).contains(&a.az) && (self.el[0]..=self.el[1]).contains(&a.el)
    }

    pub fn clamp(&self, a: Angles) -> Angles {
        Angles::new(a.az.clamp(self.az[0], self.az[1]), a.el.clamp(self.el[0], self.el[1]))
    }

    pub fn lo(&self, axis: usize) -> f64 {
        [self.az[0], self.el[0]][axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        [self.az[1], self.el[1]][axis]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Ga,
    Gbo,
    /// Exhaustive grid search, the reference optimum.
    Grid,
}

/// Early stop when the best value gains less than `min_gain_db` over
/// `window` consecutive generations or ascent completions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patience {
    pub window: usize,
    pub min_gain_db: f64,
}

impl Default for Patience {
    fn default() -> Self {
        Self { window: 5, min_gain_db: 0.01 }
    }
}

impl Patience {
    /// `history` holds the best value after each round.
    pub fn exhausted(&self, history: &[f64]) -> bool {
        let n = history.len();
        n > self.window && history[n - 1] - history[n - 1 - self.window] < self.min_gain_db
    }
}

/// Missing JSON fields take the [`OptimizerConfig::new`] defaults (GA
/// when `kind` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub bounds: Bounds,
    pub ga: GaConfig,
    pub gbo: GboConfig,
    /// Grid spacing for [`OptimizerKind::Grid`], radians.
    pub grid_step: f64,
    /// Evaluation cap `J`; unlimited when absent.
    pub max_evals: Option<u64>,
    pub patience: Option<Patience>,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::new(OptimizerKind::Ga)
    }
}

fn default_grid_step() -> f64 {
    0.5f64.to_radians()
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            bounds: Bounds::default(),
            ga: GaConfig::default(),
            gbo: GboConfig::default(),
            grid_step: default_grid_step(),
            max_evals: None,
            patience: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.ga.population < 2 {
            return Err(Error::InvalidConfig("GA population must be at least 2".into()));
        }
        if self.ga.elitism > self.ga.population || self.ga.tournament == 0 {
            return Err(Error::InvalidConfig("GA elitism/tournament out of range".into()));
        }
        if self.gbo.starts == 0 {
            return Err(Error::InvalidConfig("GBO needs at least one start".into()));
        }
        if self.max_evals == Some(0) {
            return Err(Error::InvalidConfig("evaluation budget must be at least 1".into()));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::InvalidConfig("grid step must be positive".into()));
        }
        Ok(())
    }

    fn limit(&self) -> u64 {
        self.max_evals.unwrap_or(u64::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluations: u64,
    pub best_db: f64,
    /// Incumbent at this point.
    pub theta: Angles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub theta_hat: Angles,
    pub best_db: f64,
    /// Best-so-far value; non-decreasing.
    pub trace: Vec<TracePoint>,
    pub evaluations: u64,
    /// Distinct local optima found (GBO only, otherwise 0).
    pub unique_optima: usize,
}

impl OptResult {
    /// Best value known after `evals` evaluations, if any.
    pub fn best_after(&self, evals: u64) -> Option<f64> {
        self.trace.iter().take_while(|t| t.evaluations <= evals).last().map(|t| t.best_db)
    }

    /// First evaluation count at which the best reaches `target`.
    pub fn evals_to_reach(&self, target: f64) -> Option<u64> {
        self.trace.iter().find(|t| t.best_db >= target).map(|t| t.evaluations)
    }
}

/// Writes `evaluations,best_sinr_db,az_deg,el_deg` rows.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["evaluations", "best_sinr_db", "az_deg", "el_deg"])?;
    for t in trace {
        out.write_record([
            t.evaluations.to_string(),
            format!("{:.6}", t.best_db),
            format!("{:.6}", t.theta.az_deg()),
            format!("{:.6}", t.theta.el_deg()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Best-so-far bookkeeping shared by the optimisers.
pub(crate) struct Tracker {
    limit: u64,
    evals: u64,
    best: Option<(Angles, f64)>,
    trace: Vec<TracePoint>,
}

impl Tracker {
    pub(crate) fn new(limit: u64) -> Self {
        Self { limit, evals: 0, best: None, trace: Vec::new() }
    }

    pub(crate) fn remaining(&self) -> u64 {
        self.limit - self.evals
    }

    /// Consumes `evals` evaluations that produced the candidate `(a, v)`.
    pub(crate) fn record(&mut self, evals: u64, a: Angles, v: f64) {
        self.evals += evals;
        if self.best.is_none_or(|(_, b)| v > b) {
            self.best = Some((a, v));
        }
        let (theta, best_db) = self.best.expect("set");
        self.trace.push(TracePoint { evaluations: self.evals, best_db, theta });
    }

    pub(crate) fn best_db(&self) -> f64 {
        self.best.map_or(f64::NEG_INFINITY, |b| b.1)
    }

    pub(crate) fn finish(self, unique_optima: usize) -> OptResult {
        let (theta_hat, best_db) = self.best.expect("at least one evaluation");
        OptResult { theta_hat, best_db, trace: self.trace, evaluations: self.evals, unique_optima }
    }
}

/// Evaluates `f` after checking the point lies inside the bounds.
#[inline]
pub(crate) fn eval<F: Fn(Angles) -> f64>(f: &F, bounds: &Bounds, a: Angles) -> f64 {
    assert!(bounds.contains(a), "objective evaluated outside bounds at {a:?}");
    f(a)
}

/// Grid points `lo, lo + step, …` up to and including `hi`.
fn axis_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let mut v: Vec<f64> = (0..n).map(|i| (lo + step * i as f64).min(hi)).collect();
    if hi - v[n - 1] > 1e-12 {
        v.push(hi);
    }
    v
}

/// Exhaustive search on a regular grid, row-major in elevation.
pub fn grid_optimize<F>(f: F, cfg: &OptimizerConfig, exec: Exec) -> Result<OptResult>
where
    F: Fn(Angles) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let b = cfg.bounds;
    let az = axis_points(b.az[0], b.az[1], cfg.grid_step);
    let el = axis_points(b.el[0], b.el[1], cfg.grid_step);
    let n = (az.len() * el.len()).min(cfg.limit().min(usize::MAX as u64) as usize);
    let points: Vec<Angles> = (0..n).map(|i| Angles::new(az[i % az.len()], el[i / az.len()])).collect();
    let values = exec.map_slice(&points, |&a| eval(&f, &b, a));
    let mut t = Tracker::new(cfg.limit());
    for (a, v) in points.into_iter().zip(values) {
        t.record(1, a, v);
    }
    Ok(t.finish(0))
}

/// Dispatches on `cfg.kind`.
pub fn optimize<F>(f: F, cfg: &OptimizerConfig, exec: Exec) -> Result<OptResult>
where
    F: Fn(Angles) -> f64 + Sync + Send,
{
    match cfg.kind {
        OptimizerKind::Ga => ga_optimize(f, cfg, exec),
        OptimizerKind::Gbo => gbo_optimize(f, cfg, exec),
        OptimizerKind::Grid => grid_optimize(f, cfg, exec),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaoResult {
    pub theta_hat: Angles,
    /// Twin-predicted SINR at `theta_hat`, dB.
    pub predicted_db: f64,
    pub sinr_trace: Vec<TracePoint>,
    pub evaluations: u64,
    /// Flattened `[p̂_0, …, p̂_K]` the twin was evaluated at (after clamping
    /// into the room).
    pub positions_used: Vec<f64>,
}

/// Localise from a sweep, then optimise the twin-predicted SINR.
pub fn pao_loop(measurements: &MeasurementVector, model: &MlpModel, twin: &Twin, cfg: &OptimizerConfig, exec: Exec) -> Result<PaoResult> {
    if measurements.len() != model.n_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "sweep has {} beams, model expects {}",
            measurements.len(),
            model.n_inputs()
        )));
    }
    let p_hat = Positions::from_slice(&model.forward(&measurements.sinr_db)?)?;
    let budget = twin.budget_at(&p_hat)?;
    let r = optimize(|a| budget.sinr_db(a), cfg, exec)?;
    Ok(PaoResult {
        theta_hat: r.theta_hat,
        predicted_db: r.best_db,
        sinr_trace: r.trace,
        evaluations: r.evaluations,
        positions_used: budget.positions.to_vec(),
    })
}
