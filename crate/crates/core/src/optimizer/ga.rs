//! Real-coded genetic algorithm over (azimuth, elevation).

use super::{eval, Bounds, OptResult, OptimizerConfig, Tracker};
use crate::array::Angles;
use crate::exec::Exec;
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Genes are `(sin az, sin el)` by default. The array response varies
/// evenly in direction sines, so lobes have similar widths in gene space
/// and wide high-elevation plateaus do not crowd out narrow peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Blend-crossover extension factor α.
    pub blend_alpha: f64,
    /// Per-gene Gaussian mutation std in the first generation, gene units.
    pub mutation_std: f64,
    /// Std reached in the last generation, decaying geometrically. A fixed
    /// std when absent.
    pub final_mutation_std: Option<f64>,
    pub mutation_rate: f64,
    pub elitism: usize,
    /// Fraction of each generation's offspring replaced by uniform random
    /// individuals.
    pub immigrant_rate: f64,
    /// Encode angles by their sines instead of radians.
    pub sine_genes: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 60,
            tournament: 2,
            crossover_rate: 0.9,
            blend_alpha: 0.5,
            mutation_std: 0.3,
            final_mutation_std: Some(0.01),
            mutation_rate: 0.5,
            elitism: 2,
            immigrant_rate: 0.25,
            sine_genes: true,
        }
    }
}

/// Maps between angles and the genes the variation operators act on.
struct Encoding {
    sine: bool,
    lo: [f64; 2],
    hi: [f64; 2],
    bounds: Bounds,
}

impl Encoding {
    fn new(bounds: Bounds, sine: bool) -> Self {
        let f = |v: f64| if sine { v.sin() } else { v };
        Self { sine, lo: [f(bounds.az[0]), f(bounds.el[0])], hi: [f(bounds.az[1]), f(bounds.el[1])], bounds }
    }

    fn decode(&self, g: [f64; 2]) -> Angles {
        let f = |v: f64| if self.sine { v.clamp(-1.0, 1.0).asin() } else { v };
        self.bounds.clamp(Angles::new(f(g[0]), f(g[1])))
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        [rng.random_range(self.lo[0]..=self.hi[0]), rng.random_range(self.lo[1]..=self.hi[1])]
    }
}

/// Evaluates `batch` (truncated to the remaining budget) and records every
/// evaluation in index order.
fn evaluate<F>(f: &F, cfg: &OptimizerConfig, exec: Exec, t: &mut Tracker, batch: &[Angles]) -> Vec<f64>
where
    F: Fn(Angles) -> f64 + Sync + Send,
{
    let n = (batch.len() as u64).min(t.remaining()) as usize;
    let values = exec.map_slice(&batch[..n], |&a| eval(f, &cfg.bounds, a));
    for (&a, &v) in batch.iter().zip(&values) {
        t.record(1, a, v);
    }
    values
}

/// Tournament selection, blend crossover, Gaussian mutation, random
/// immigrants and elitism. Elites keep their fitness without re-evaluation, so the best value never
/// drops between generations. Variation runs on one seeded stream; only the
/// fitness evaluations of a generation are spread over `exec`.
pub fn ga_optimize<F>(f: F, cfg: &OptimizerConfig, exec: Exec) -> Result<OptResult>
where
    F: Fn(Angles) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let g = &cfg.ga;
    let enc = Encoding::new(cfg.bounds, g.sine_genes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Tracker::new(cfg.limit());

    let mut pop: Vec<[f64; 2]> = (0..g.population).map(|_| enc.random(&mut rng)).collect();
    let decoded: Vec<Angles> = pop.iter().map(|&x| enc.decode(x)).collect();
    let mut fit = evaluate(&f, cfg, exec, &mut t, &decoded);
    if fit.len() < pop.len() {
        return Ok(t.finish(0));
    }
    let mut history = vec![t.best_db()];

    for gen in 0..g.generations {
        let std = match g.final_mutation_std {
            Some(end) if g.generations > 1 => g.mutation_std * (end / g.mutation_std).powf(gen as f64 / (g.generations - 1) as f64),
            _ => g.mutation_std,
        };
        let mutation = Normal::new(0.0, std.max(0.0)).expect("finite std");
        let mut rank: Vec<usize> = (0..pop.len()).collect();
        rank.sort_by(|&i, &j| fit[j].total_cmp(&fit[i]).then(i.cmp(&j)));
        let mut next: Vec<[f64; 2]> = rank[..g.elitism].iter().map(|&i| pop[i]).collect();
        let mut next_fit: Vec<f64> = rank[..g.elitism].iter().map(|&i| fit[i]).collect();

        let mut children = Vec::with_capacity(g.population - g.elitism);
        while children.len() < g.population - g.elitism {
            if rng.random::<f64>() < g.immigrant_rate {
                children.push(enc.random(&mut rng));
                continue;
            }
            let pa = pop[tournament(&fit, g.tournament, &mut rng)];
            let pb = pop[tournament(&fit, g.tournament, &mut rng)];
            let mut c = pa;
            if rng.random::<f64>() < g.crossover_rate {
                for k in 0..2 {
                    let (lo, hi) = (pa[k].min(pb[k]), pa[k].max(pb[k]));
                    let d = g.blend_alpha * (hi - lo);
                    c[k] = if hi - lo > 0.0 || d > 0.0 { rng.random_range(lo - d..=hi + d) } else { lo };
                }
            }
            for (k, v) in c.iter_mut().enumerate() {
                if rng.random::<f64>() < g.mutation_rate {
                    *v += mutation.sample(&mut rng);
                }
                *v = v.clamp(enc.lo[k], enc.hi[k]);
            }
            children.push(c);
        }
        let decoded: Vec<Angles> = children.iter().map(|&x| enc.decode(x)).collect();
        let child_fit = evaluate(&f, cfg, exec, &mut t, &decoded);
        if child_fit.len() < children.len() {
            break;
        }
        next.extend(children);
        next_fit.extend(child_fit);
        pop = next;
        fit = next_fit;
        history.push(t.best_db());
        if cfg.patience.is_some_and(|p| p.exhausted(&history)) {
            break;
        }
    }
    Ok(t.finish(0))
}

fn tournament(fit: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size {
        let c = rng.random_range(0..fit.len());
        if fit[c] > fit[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::tests::bowl;
    use super::super::{OptimizerKind, Patience};
    use super::*;

    fn cfg(seed: u64) -> OptimizerConfig {
        OptimizerConfig { seed, ..OptimizerConfig::new(OptimizerKind::Ga) }
    }

    #[test]
    fn finds_bowl_optimum() {
        let target = Angles::from_degrees(-33.0, 21.0);
        for seed in 0..3 {
            let r = ga_optimize(bowl(target), &cfg(seed), Exec::Parallel).unwrap();
            assert!(r.theta_hat.distance_deg(target) < 0.5, "seed {seed}: {:?}", r.theta_hat);
            assert_eq!(r.evaluations, 40 + 60 * 38);
        }
    }

    #[test]
    fn best_trace_monotone_and_deterministic() {
        let f = bowl(Angles::from_degrees(10.0, 5.0));
        let a = ga_optimize(&f, &cfg(4), Exec::Parallel).unwrap();
        let b = ga_optimize(&f, &cfg(4), Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1].best_db >= w[0].best_db));
        assert_eq!(a.trace.len() as u64, a.evaluations);
    }

    #[test]
    fn budget_caps_evaluations() {
        let f = bowl(Angles::BROADSIDE);
        let mut c = cfg(1);
        c.max_evals = Some(1);
        let r = ga_optimize(&f, &c, Exec::Sequential).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.best_db, f(r.theta_hat));
        c.max_evals = Some(100);
        assert_eq!(ga_optimize(&f, &c, Exec::Sequential).unwrap().evaluations, 100);
    }

    #[test]
    fn patience_stops_early() {
        let mut c = cfg(2);
        c.patience = Some(Patience::default());
        let r = ga_optimize(|_a: Angles| 1.0, &c, Exec::Sequential).unwrap();
        assert_eq!(r.evaluations, 40 + 5 * 38);
    }

    #[test]
    fn never_leaves_bounds() {
        let mut c = cfg(3);
        c.bounds = crate::optimizer::Bounds::from_degrees([0.0, 10.0], [-5.0, 5.0]);
        // The bounds assertion inside the evaluator panics on violation.
        let r = ga_optimize(bowl(Angles::from_degrees(50.0, 50.0)), &c, Exec::Sequential).unwrap();
        assert!((r.theta_hat.az_deg() - 10.0).abs() < 0.5 && (r.theta_hat.el_deg() - 5.0).abs() < 0.5);
    }
}
