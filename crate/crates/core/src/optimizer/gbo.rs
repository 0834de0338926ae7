//! Multi-start projected gradient ascent with finite-difference gradients.

use super::{eval, Bounds, OptResult, OptimizerConfig, Tracker};
use crate::array::Angles;
use crate::exec::Exec;
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GboConfig {
    /// Number of random starts `D_MS`.
    pub starts: usize,
    /// Central-difference half step, radians.
    pub fd_step: f64,
    /// Largest line-search step, radians.
    pub initial_step: f64,
    pub shrink: f64,
    pub max_trials: usize,
    /// Stop an ascent once an accepted step gains less than this (dB).
    pub tolerance_db: f64,
    pub max_iters: usize,
    /// End points closer than this (degrees) count as one optimum.
    pub dedup_deg: f64,
    /// Draw starts and run the ascents over `(sin az, sin el)`; steps are
    /// then in sine units. Null ridges of the array have near-constant width
    /// in these coordinates.
    pub sine_space: bool,
}

impl Default for GboConfig {
    fn default() -> Self {
        Self {
            starts: 100,
            fd_step: 0.5f64.to_radians(),
            initial_step: 10f64.to_radians(),
            shrink: 0.5,
            max_trials: 20,
            tolerance_db: 1e-4,
            max_iters: 100,
            dedup_deg: 1.0,
            sine_space: true,
        }
    }
}

/// One local ascent. `history[i]` is the `i`-th accepted iterate together
/// with the evaluation count at which it was known; the first entry is the
/// start itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Ascent {
    pub history: Vec<(u64, Angles, f64)>,
    pub evaluations: u64,
}

impl Ascent {
    pub fn end(&self) -> (Angles, f64) {
        let &(_, a, v) = self.history.last().expect("start is recorded");
        (a, v)
    }

    /// Last accepted iterate known within `evals` evaluations.
    pub fn truncated(&self, evals: u64) -> Option<(Angles, f64)> {
        self.history.iter().take_while(|h| h.0 <= evals).last().map(|&(_, a, v)| (a, v))
    }
}

struct Counted<'a, F> {
    f: &'a F,
    bounds: Bounds,
    used: u64,
    limit: u64,
}

impl<F: Fn(Angles) -> f64> Counted<'_, F> {
    fn call(&mut self, a: Angles) -> Option<f64> {
        if self.used >= self.limit {
            return None;
        }
        self.used += 1;
        Some(eval(self.f, &self.bounds, a))
    }
}

fn with_axis(a: Angles, k: usize, v: f64) -> Angles {
    if k == 0 {
        Angles::new(v, a.el)
    } else {
        Angles::new(a.az, v)
    }
}

fn axis(a: Angles, k: usize) -> f64 {
    if k == 0 {
        a.az
    } else {
        a.el
    }
}

/// Projected gradient ascent from `start` with backtracking line search,
/// using at most `limit` evaluations.
pub fn local_ascent<F: Fn(Angles) -> f64>(f: &F, bounds: &Bounds, start: Angles, cfg: &GboConfig, limit: u64) -> Ascent {
    let mut c = Counted { f, bounds: *bounds, used: 0, limit };
    let mut x = bounds.clamp(start);
    let Some(mut fx) = c.call(x) else {
        return Ascent { history: Vec::new(), evaluations: 0 };
    };
    let mut history = vec![(c.used, x, fx)];
    let mut step = cfg.initial_step;
    let h = cfg.fd_step;
    'outer: for _ in 0..cfg.max_iters {
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate() {
            let xk = axis(x, k);
            let p = with_axis(x, k, (xk + h).min(bounds.hi(k)));
            let m = with_axis(x, k, (xk - h).max(bounds.lo(k)));
            let span = axis(p, k) - axis(m, k);
            if span <= 0.0 {
                continue;
            }
            let (Some(fp), Some(fm)) = (c.call(p), c.call(m)) else { break 'outer };
            *gk = (fp - fm) / span;
            // Project out components that push against an active bound.
            if (xk <= bounds.lo(k) && *gk < 0.0) || (xk >= bounds.hi(k) && *gk > 0.0) {
                *gk = 0.0;
            }
        }
        let norm = g[0].hypot(g[1]);
        if !(norm > 0.0) {
            break;
        }
        let d = [g[0] / norm, g[1] / norm];
        step = (2.0 * step).min(cfg.initial_step);
        let mut accepted = None;
        for _ in 0..cfg.max_trials {
            let y = bounds.clamp(Angles::new(x.az + step * d[0], x.el + step * d[1]));
            if y == x {
                break;
            }
            let Some(fy) = c.call(y) else { break 'outer };
            if fy > fx {
                accepted = Some((y, fy));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((y, fy)) = accepted else { break };
        let gain = fy - fx;
        x = y;
        fx = fy;
        history.push((c.used, x, fx));
        if gain < cfg.tolerance_db {
            break;
        }
    }
    Ascent { history, evaluations: c.used }
}

/// `D_MS` ascents from uniform random starts. The best value is updated
/// only when an ascent completes, so the trace is a step function over
/// completion events. With an evaluation cap the ascent that crosses it
/// contributes its last accepted iterate inside the cap.
pub fn gbo_optimize<F>(f: F, cfg: &OptimizerConfig, exec: Exec) -> Result<OptResult>
where
    F: Fn(Angles) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let real = cfg.bounds;
    let sine = cfg.gbo.sine_space;
    let b = if sine { Bounds { az: real.az.map(f64::sin), el: real.el.map(f64::sin) } } else { real };
    let to_angles = move |u: Angles| if sine { real.clamp(Angles::new(u.az.asin(), u.el.asin())) } else { u };
    let g = |u: Angles| f(to_angles(u));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Angles> =
        (0..cfg.gbo.starts).map(|_| Angles::new(rng.random_range(b.az[0]..=b.az[1]), rng.random_range(b.el[0]..=b.el[1]))).collect();
    let limit = cfg.limit();
    let ascents = exec.map_slice(&starts, |&s| {
        let mut a = local_ascent(&g, &b, s, &cfg.gbo, limit);
        for h in &mut a.history {
            h.1 = to_angles(h.1);
        }
        a
    });

    let mut t = Tracker::new(limit);
    let mut optima: Vec<(Angles, f64)> = Vec::new();
    let mut history = Vec::new();
    for asc in &ascents {
        let rem = t.remaining();
        if rem == 0 {
            break;
        }
        let (used, end) = if asc.evaluations <= rem {
            (asc.evaluations, asc.end())
        } else {
            match asc.truncated(rem) {
                Some(e) => (rem, e),
                None => break,
            }
        };
        t.record(used, end.0, end.1);
        match optima.iter_mut().find(|o| o.0.distance_deg(end.0) < cfg.gbo.dedup_deg) {
            Some(o) if end.1 > o.1 => *o = end,
            Some(_) => {}
            None => optima.push(end),
        }
        history.push(t.best_db());
        if cfg.patience.is_some_and(|p| p.exhausted(&history)) {
            break;
        }
    }
    Ok(t.finish(optima.len()))
}

#[cfg(test)]
mod tests {
    use super::super::tests::bowl;
    use super::super::OptimizerKind;
    use super::*;

    fn cfg(starts: usize, seed: u64) -> OptimizerConfig {
        let mut c = OptimizerConfig::new(OptimizerKind::Gbo);
        c.gbo.starts = starts;
        c.seed = seed;
        c
    }

    #[test]
    fn every_start_reaches_bowl_optimum() {
        let target = Angles::from_degrees(17.0, -42.0);
        let f = bowl(target);
        let c = cfg(20, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s = Angles::from_degrees(rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0));
            let a = local_ascent(&f, &c.bounds, s, &c.gbo, u64::MAX);
            assert!(a.end().0.distance_deg(target) < 0.1, "{s:?} -> {:?}", a.end());
        }
        let r = gbo_optimize(&f, &c, Exec::Parallel).unwrap();
        assert!(r.theta_hat.distance_deg(target) < 0.1);
        assert!(r.unique_optima >= 1 && r.unique_optima <= 20);
    }

    #[test]
    fn single_start_is_one_ascent() {
        let f = bowl(Angles::from_degrees(5.0, 5.0));
        let mut c = cfg(1, 3);
        c.gbo.sine_space = false;
        let r = gbo_optimize(&f, &c, Exec::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Angles::new(rng.random_range(c.bounds.az[0]..=c.bounds.az[1]), rng.random_range(c.bounds.el[0]..=c.bounds.el[1]));
        let a = local_ascent(&f, &c.bounds, s, &c.gbo, u64::MAX);
        assert_eq!((r.theta_hat, r.best_db), a.end());
        assert_eq!(r.evaluations, a.evaluations);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn multimodal_dedup_and_argmax() {
        // Two peaks; the taller one must win and both should be found.
        let f = |a: Angles| {
            let p = |az: f64, el: f64, h: f64| h * (-((a.az_deg() - az).powi(2) + (a.el_deg() - el).powi(2)) / 200.0).exp();
            p(-40.0, 0.0, 1.0) + p(40.0, 10.0, 2.0)
        };
        let r = gbo_optimize(f, &cfg(30, 5), Exec::Parallel).unwrap();
        assert!(r.theta_hat.distance_deg(Angles::from_degrees(40.0, 10.0)) < 0.5);
        assert!(r.unique_optima >= 2 && r.unique_optima <= 30);
    }

    #[test]
    fn trace_steps_only_at_completions() {
        let f = bowl(Angles::from_degrees(-5.0, 60.0));
        let mut c = cfg(10, 2);
        c.gbo.sine_space = false;
        let r = gbo_optimize(&f, &c, Exec::Parallel).unwrap();
        assert_eq!(r.trace.len(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut total = 0;
        for (i, _) in (0..10).enumerate() {
            let s = Angles::new(rng.random_range(c.bounds.az[0]..=c.bounds.az[1]), rng.random_range(c.bounds.el[0]..=c.bounds.el[1]));
            total += local_ascent(&f, &c.bounds, s, &c.gbo, u64::MAX).evaluations;
            assert_eq!(r.trace[i].evaluations, total);
        }
        assert!(r.trace.windows(2).all(|w| w[1].best_db >= w[0].best_db));
    }

    #[test]
    fn budget_truncation() {
        let f = bowl(Angles::from_degrees(30.0, 0.0));
        let mut c = cfg(10, 4);
        c.max_evals = Some(1);
        let r = gbo_optimize(&f, &c, Exec::Sequential).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.best_db, f(r.theta_hat));
        c.max_evals = Some(37);
        let r = gbo_optimize(&f, &c, Exec::Sequential).unwrap();
        assert!(r.evaluations <= 37);
        assert_eq!(r.best_db, f(r.theta_hat));
    }

    #[test]
    fn sine_space_reports_angles() {
        let target = Angles::from_degrees(-25.0, 48.0);
        let f = bowl(target);
        let mut c = cfg(10, 6);
        c.bounds = Bounds::from_degrees([-60.0, 60.0], [-10.0, 70.0]);
        let r = gbo_optimize(&f, &c, Exec::Sequential).unwrap();
        assert!(r.theta_hat.distance_deg(target) < 0.1, "{:?}", r.theta_hat);
        assert_eq!(r.best_db, f(r.theta_hat));
    }

    #[test]
    fn deterministic_across_policies() {
        let f = bowl(Angles::from_degrees(1.0, 2.0));
        assert_eq!(gbo_optimize(&f, &cfg(8, 7), Exec::Parallel).unwrap(), gbo_optimize(&f, &cfg(8, 7), Exec::Sequential).unwrap());
    }
}
