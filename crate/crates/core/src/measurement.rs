//! Beam sweeps and the relay's measurement/communication mode switch.
//!
//! [`GroundTruth`] stands in for the physical environment: it owns a scene
//! the rest of the pipeline cannot read, answers power measurements only,
//! and counts every beam it is asked to measure.

use crate::array::Angles;
use crate::channel::{LinkBudget, Twin};
use crate::scene::{Positions, Scene};
use crate::{to_db, to_dbm, Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

/// Log-domain Gaussian measurement noise on the received signal power.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_db: f64,
}

impl NoiseModel {
    pub const OFF: NoiseModel = NoiseModel { sigma_db: 0.0 };

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_db > 0.0 {
            Normal::new(0.0, self.sigma_db).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub beams: Vec<Angles>,
    pub sinr_db: Vec<f64>,
    pub p_signal_w: Vec<f64>,
    pub p_noise_interf_w: Vec<f64>,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// CSV rows `scene_id, beam, az_deg, el_deg, p_s_dbm, p_in_dbm, sinr_db`.
    pub fn write_csv<W: Write>(&self, scene_id: &str, out: &mut csv::Writer<W>) -> Result<()> {
        for i in 0..self.len() {
            out.write_record([
                scene_id.to_string(),
                i.to_string(),
                format!("{:.6}", self.beams[i].az_deg()),
                format!("{:.6}", self.beams[i].el_deg()),
                format!("{:.6}", to_dbm(self.p_signal_w[i])),
                format!("{:.6}", to_dbm(self.p_noise_interf_w[i])),
                format!("{:.6}", self.sinr_db[i]),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 7] = ["scene_id", "beam", "az_deg", "el_deg", "p_s_dbm", "p_in_dbm", "sinr_db"];
}

/// Sweeps `beams` over a link budget. Noise perturbs the measured signal
/// power; the recorded SINR is always the ratio of the recorded powers.
pub fn sweep<R: Rng + ?Sized>(budget: &LinkBudget, beams: &[Angles], noise: NoiseModel, rng: &mut R) -> MeasurementVector {
    let mut m = MeasurementVector {
        beams: beams.to_vec(),
        sinr_db: Vec::with_capacity(beams.len()),
        p_signal_w: Vec::with_capacity(beams.len()),
        p_noise_interf_w: Vec::with_capacity(beams.len()),
    };
    for &b in beams {
        let (s, i) = budget.powers(b);
        let s = s * 10f64.powf(noise.sample(rng) / 10.0);
        m.p_signal_w.push(s);
        m.p_noise_interf_w.push(i);
        m.sinr_db.push(to_db(s.max(1e-300) / i));
    }
    m
}

/// The hidden environment. Only power measurements leave this type.
#[derive(Debug)]
pub struct GroundTruth {
    budget: LinkBudget,
    noise: NoiseModel,
    charges: AtomicU64,
}

impl GroundTruth {
    pub fn new(scene: Scene, noise: NoiseModel) -> Result<Self> {
        let twin = Twin::new(scene)?;
        Ok(Self { budget: twin.budget()?, noise, charges: AtomicU64::new(0) })
    }

    /// Ground truth at explicit transmitter positions.
    pub fn at(scene: &Scene, positions: &Positions, noise: NoiseModel) -> Result<Self> {
        Self::new(scene.with_positions(positions)?, noise)
    }

    pub fn sweep<R: Rng + ?Sized>(&self, beams: &[Angles], rng: &mut R) -> MeasurementVector {
        self.charges.fetch_add(beams.len() as u64, Ordering::Relaxed);
        sweep(&self.budget, beams, self.noise, rng)
    }

    /// One measured SINR in dB.
    pub fn measure_db<R: Rng + ?Sized>(&self, beam: Angles, rng: &mut R) -> f64 {
        self.sweep(&[beam], rng).sinr_db[0]
    }

    /// Number of real measurements taken so far.
    pub fn charges(&self) -> u64 {
        self.charges.load(Ordering::Relaxed)
    }

    /// Noiseless SINR for scoring a final decision. Not a measurement.
    pub fn score_db(&self, beam: Angles) -> f64 {
        self.budget.sinr_db(beam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Measurement,
    Communication,
}

/// Switching control for the relay: sweeps are allowed only in measurement
/// mode, and the applied combining beam is kept across switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayController {
    pub mode: Mode,
    pub applied: Option<Angles>,
}

impl Default for RelayController {
    fn default() -> Self {
        Self { mode: Mode::Measurement, applied: None }
    }
}

impl RelayController {
    pub fn mode_switch(&mut self) -> Mode {
        self.mode = match self.mode {
            Mode::Measurement => Mode::Communication,
            Mode::Communication => Mode::Measurement,
        };
        self.mode
    }

    /// Sets the combining beam used in communication mode.
    pub fn apply(&mut self, beam: Angles) {
        self.applied = Some(beam);
    }

    pub fn sweep<R: Rng + ?Sized>(&self, truth: &GroundTruth, beams: &[Angles], rng: &mut R) -> Result<MeasurementVector> {
        if self.mode == Mode::Communication {
            return Err(Error::CommunicationMode);
        }
        Ok(truth.sweep(beams, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sinr;
    use crate::codebook::Codebook;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_single_beam_matches_sinr() {
        let s = Scene::reference();
        let twin = Twin::new(s.clone()).unwrap();
        let b = Angles::from_degrees(-10.8, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sweep(&twin.budget().unwrap(), &[b], NoiseModel::OFF, &mut rng);
        assert!((m.sinr_db[0] - to_db(sinr(&twin, b).unwrap())).abs() < 1e-9);
        for i in 0..m.len() {
            assert!((m.sinr_db[i] - to_db(m.p_signal_w[i] / m.p_noise_interf_w[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_beams_identical_readings() {
        let twin = Twin::new(Scene::reference()).unwrap();
        let b = Angles::from_degrees(21.6, 18.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sweep(&twin.budget().unwrap(), &[b, b], NoiseModel::OFF, &mut rng);
        assert_eq!(m.sinr_db[0], m.sinr_db[1]);
    }

    #[test]
    fn noise_std_close_to_sigma() {
        let twin = Twin::new(Scene::reference()).unwrap();
        let budget = twin.budget().unwrap();
        let b = Angles::from_degrees(0.0, 0.0);
        let clean = budget.sinr_db(b);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let xs: Vec<f64> =
            (0..n).map(|_| sweep(&budget, &[b], NoiseModel { sigma_db: 1.0 }, &mut rng).sinr_db[0] - clean).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((0.9..=1.1).contains(&sd), "std {sd}");
    }

    #[test]
    fn sweep_contains_codebook_maximum() {
        let s = Scene::reference();
        let truth = GroundTruth::new(s.clone(), NoiseModel::OFF).unwrap();
        let twin = Twin::new(s).unwrap();
        let cb = Codebook::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = truth.sweep(&cb.entries, &mut rng);
        assert_eq!(truth.charges(), 63);
        let best_sweep = m.sinr_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best_direct = cb.entries.iter().map(|&b| to_db(sinr(&twin, b).unwrap())).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best_sweep.to_bits(), best_direct.to_bits());
    }

    #[test]
    fn mode_switching() {
        let truth = GroundTruth::new(Scene::reference(), NoiseModel::OFF).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctl = RelayController::default();
        let b = Angles::from_degrees(5.4, 0.0);
        ctl.apply(b);
        assert!(ctl.sweep(&truth, &[b], &mut rng).is_ok());
        assert_eq!(ctl.mode_switch(), Mode::Communication);
        assert!(matches!(ctl.sweep(&truth, &[b], &mut rng), Err(Error::CommunicationMode)));
        assert_eq!(ctl.mode_switch(), Mode::Measurement);
        assert!(ctl.sweep(&truth, &[b], &mut rng).is_ok());
        assert_eq!(ctl.applied, Some(b));
        assert_eq!(truth.charges(), 2);
    }
}
