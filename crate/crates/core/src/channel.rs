//! MIMO channel synthesis and the twin's power/SINR predictors.
//!
//! The relay forwards through a rank-one configuration, so for a relay
//! combining beam `w` every received power factors through three fixed
//! quantities: the relay-to-AP scalar `h = w_rᴴ H A w_o`, the station's
//! effective vector `g = G w_t` and one `g_k = G_k w_k` per interferer.
//! [`LinkBudget`] caches them for a placement so a candidate beam costs one
//! steering vector and a few inner products.

use crate::array::{
    beam_steering_vector, link_angles, relay_phase_matrix, steering_vector, to_local_frame, Angles, RelayPhaseMatrix,
    SteeringVector, UpaGeometry,
};
use crate::geom::Vec3;
use crate::scene::{NodeId, Positions, Scene};
use crate::trace::{Geometry, PropPath};
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// Reflection order used by the twin.
pub const MAX_ORDER: usize = 2;

/// Margin kept from the walls when clamping predicted positions.
pub const CLAMP_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// `N_rx × N_tx`.
    pub entries: Array2<Complex64>,
    pub tx: Option<NodeId>,
    pub rx: Option<NodeId>,
}

impl ChannelMatrix {
    pub fn new(entries: Array2<Complex64>) -> Self {
        Self { entries, tx: None, rx: None }
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.entries.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} columns, vector has {} entries",
                self.entries.ncols(),
                v.len()
            )));
        }
        Ok(self.entries.dot(&Array1::from(v.to_vec())).to_vec())
    }
}

/// `Σ_p gain_p · a_rx(arrival_p) · a_tx(departure_p)ᴴ`, with both responses
/// evaluated in the respective array's local frame.
pub fn channel_matrix(paths: &[PropPath], tx: &UpaGeometry, rx: &UpaGeometry, wavelength: f64) -> ChannelMatrix {
    let mut h = Array2::<Complex64>::zeros((rx.len(), tx.len()));
    for p in paths {
        let ar = steering_vector(rx, to_local_frame(p.arrival, rx), wavelength);
        let at = steering_vector(tx, to_local_frame(p.departure, tx), wavelength);
        for (r, &x) in ar.weights.iter().enumerate() {
            let gx = p.gain * x;
            for (t, y) in at.weights.iter().enumerate() {
                h[[r, t]] += gx * y.conj();
            }
        }
    }
    ChannelMatrix::new(h)
}

/// `C = H Φ G`.
pub fn cascaded_channel(h: &ChannelMatrix, phi: &RelayPhaseMatrix, g: &ChannelMatrix) -> Result<ChannelMatrix> {
    let (hr, hc) = h.entries.dim();
    let (pr, pc) = phi.matrix.dim();
    let (gr, gc) = g.entries.dim();
    if hc != pr || pc != gr {
        return Err(Error::DimensionMismatch(format!("H {hr}x{hc} · Φ {pr}x{pc} · G {gr}x{gc}")));
    }
    let entries = h.entries.dot(&phi.matrix).dot(&g.entries);
    Ok(ChannelMatrix { entries, tx: g.tx, rx: h.rx })
}

/// `log₂(1 + γ)`.
pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Effective channel terms for the current placement.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTerms {
    /// `w_rᴴ H A w_o`.
    pub h: Complex64,
    /// `G w_t`.
    pub g: Vec<Complex64>,
    /// `G_k w_k`.
    pub g_k: Vec<Vec<Complex64>>,
}

/// The digital twin of a scene: geometry plus the fixed relay-to-AP link.
#[derive(Debug, Clone)]
pub struct Twin {
    scene: Scene,
    geometry: Geometry,
    relay_rx: UpaGeometry,
    h: Complex64,
}

impl Twin {
    pub fn new(scene: Scene) -> Result<Self> {
        scene.validate()?;
        let geometry = Geometry::new(&scene);
        let relay_rx = scene.array(NodeId::RelayRx)?;
        let h = Self::relay_to_ap(&scene, &geometry)?;
        Ok(Self { scene, geometry, relay_rx, h })
    }

    fn relay_to_ap(scene: &Scene, geometry: &Geometry) -> Result<Complex64> {
        let lambda = scene.wavelength();
        let rtx = scene.array(NodeId::RelayTx)?;
        let ap = scene.array(NodeId::Ap)?;
        let paths = geometry.trace(rtx.position, ap.position, MAX_ORDER, scene.is_blocked(NodeId::RelayTx, NodeId::Ap));
        let hm = channel_matrix(&paths, &rtx, &ap, lambda);
        // Precoder toward the AP, combiner toward the relay.
        let w_o = pointing_vector(&rtx, ap.position, lambda)?;
        let w_r = pointing_vector(&ap, rtx.position, lambda)?;
        let hw = hm.apply(&w_o.weights)?;
        Ok(w_r.inner(&hw) * scene.amplification)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn relay_rx(&self) -> &UpaGeometry {
        &self.relay_rx
    }

    pub fn wavelength(&self) -> f64 {
        self.scene.wavelength()
    }

    /// `w_rᴴ H A w_o`.
    pub fn h(&self) -> Complex64 {
        self.h
    }

    /// Effective vector `G w` for a transmitter at `position` whose array is
    /// aimed at the relay and steered toward it.
    pub fn link_vector(&self, id: NodeId, position: Vec3) -> Result<Vec<Complex64>> {
        let lambda = self.wavelength();
        let spec = match id {
            NodeId::Sta => &self.scene.sta,
            NodeId::Interferer(k) => {
                self.scene.interferers.get(k).ok_or_else(|| Error::InvalidScene(format!("no interferer {k}")))?
            }
            other => return Err(Error::InvalidConfig(format!("{other} is not a transmitter"))),
        };
        let d = spec.array.spacing_m.unwrap_or(lambda / 2.0);
        let boresight = spec.boresight.unwrap_or(self.relay_rx.position - position);
        let tx = UpaGeometry::new(spec.array.nx, spec.array.ny, d, d, boresight, position)?;
        let blocked = self.scene.is_blocked(id, NodeId::RelayRx);
        let paths = self.geometry.trace(position, self.relay_rx.position, MAX_ORDER, blocked);
        let gm = channel_matrix(&paths, &tx, &self.relay_rx, lambda);
        let w_t = pointing_vector(&tx, self.relay_rx.position, lambda)?;
        gm.apply(&w_t.weights)
    }

    pub fn effective_terms(&self, positions: &Positions) -> Result<EffectiveTerms> {
        if positions.k() != self.scene.k() {
            return Err(Error::DimensionMismatch(format!(
                "scene has {} interferers, placement has {}",
                self.scene.k(),
                positions.k()
            )));
        }
        let g = self.link_vector(NodeId::Sta, positions.sta)?;
        let g_k = positions
            .interferers
            .iter()
            .enumerate()
            .map(|(k, &p)| self.link_vector(NodeId::Interferer(k), p))
            .collect::<Result<_>>()?;
        Ok(EffectiveTerms { h: self.h, g, g_k })
    }

    /// Link budget at the scene's own transmitter positions.
    pub fn budget(&self) -> Result<LinkBudget> {
        self.budget_at(&self.scene.positions())
    }

    /// Link budget with transmitters placed at `positions`, clamped into the
    /// room first.
    pub fn budget_at(&self, positions: &Positions) -> Result<LinkBudget> {
        let room = &self.scene.room;
        let clamped = Positions {
            sta: room.clamp(positions.sta, CLAMP_MARGIN),
            interferers: positions.interferers.iter().map(|&p| room.clamp(p, CLAMP_MARGIN)).collect(),
        };
        let terms = self.effective_terms(&clamped)?;
        Ok(LinkBudget {
            terms,
            p_x: self.scene.sta.power_w,
            p_k: self.scene.interferers.iter().map(|t| t.power_w).collect(),
            noise: self.scene.noise_power(),
            relay_rx: self.relay_rx.clone(),
            wavelength: self.wavelength(),
            positions: clamped,
        })
    }
}

/// Steering vector of `geom` toward the LOS direction of `target`.
pub fn pointing_vector(geom: &UpaGeometry, target: Vec3, wavelength: f64) -> Result<SteeringVector> {
    let world = link_angles(geom.position, target)?;
    Ok(steering_vector(geom, to_local_frame(world, geom), wavelength))
}

/// Cached effective terms plus powers for one placement.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    pub terms: EffectiveTerms,
    pub p_x: f64,
    pub p_k: Vec<f64>,
    pub noise: f64,
    pub relay_rx: UpaGeometry,
    pub wavelength: f64,
    pub positions: Positions,
}

impl LinkBudget {
    fn combiner(&self, beam: Angles) -> SteeringVector {
        beam_steering_vector(&self.relay_rx, beam, self.wavelength)
    }

    /// `|h wᴴ g|² P_x`.
    pub fn signal_power(&self, beam: Angles) -> f64 {
        let w = self.combiner(beam);
        (self.terms.h * w.inner(&self.terms.g)).norm_sqr() * self.p_x
    }

    /// `Σ_k |h wᴴ g_k|² P_k + σ²`.
    pub fn interference_power(&self, beam: Angles) -> f64 {
        let w = self.combiner(beam);
        self.interference_with(&w)
    }

    fn interference_with(&self, w: &SteeringVector) -> f64 {
        let i: f64 = self
            .terms
            .g_k
            .iter()
            .zip(&self.p_k)
            .map(|(gk, p)| (self.terms.h * w.inner(gk)).norm_sqr() * p)
            .sum();
        i + self.noise
    }

    /// Signal and interference-plus-noise powers from one steering vector.
    pub fn powers(&self, beam: Angles) -> (f64, f64) {
        let w = self.combiner(beam);
        let s = (self.terms.h * w.inner(&self.terms.g)).norm_sqr() * self.p_x;
        (s, self.interference_with(&w))
    }

    /// Linear SINR.
    pub fn sinr(&self, beam: Angles) -> f64 {
        let (s, i) = self.powers(beam);
        s / i
    }

    /// SINR in dB, floored at -300 dB.
    pub fn sinr_db(&self, beam: Angles) -> f64 {
        crate::to_db(self.sinr(beam).max(1e-30))
    }
}

/// `f(p̂_0, θ)`: predicted signal power with the station at `p0`.
pub fn signal_power_f(twin: &Twin, p0: Vec3, beam: Angles) -> Result<f64> {
    let p0 = twin.scene().room.clamp(p0, CLAMP_MARGIN);
    let g = twin.link_vector(NodeId::Sta, p0)?;
    let w = beam_steering_vector(twin.relay_rx(), beam, twin.wavelength());
    Ok((twin.h() * w.inner(&g)).norm_sqr() * twin.scene().sta.power_w)
}

/// `f'(p̂_k, θ)`: predicted interference-plus-noise power.
pub fn interference_power_f_prime(twin: &Twin, pk: &[Vec3], beam: Angles) -> Result<f64> {
    let scene = twin.scene();
    if pk.len() != scene.k() {
        return Err(Error::DimensionMismatch(format!("expected {} interferer positions, got {}", scene.k(), pk.len())));
    }
    let w = beam_steering_vector(twin.relay_rx(), beam, twin.wavelength());
    let mut total = scene.noise_power();
    for (k, &p) in pk.iter().enumerate() {
        let p = scene.room.clamp(p, CLAMP_MARGIN);
        let g = twin.link_vector(NodeId::Interferer(k), p)?;
        total += (twin.h() * w.inner(&g)).norm_sqr() * scene.interferers[k].power_w;
    }
    Ok(total)
}

/// `γ(θ)` at the scene's true positions.
pub fn sinr(twin: &Twin, beam: Angles) -> Result<f64> {
    Ok(twin.budget()?.sinr(beam))
}

/// Relay phase matrix for a combining beam and the fixed precoder.
pub fn relay_configuration(twin: &Twin, beam: Angles) -> Result<RelayPhaseMatrix> {
    let scene = twin.scene();
    let lambda = scene.wavelength();
    let rtx = scene.array(NodeId::RelayTx)?;
    let w_o = pointing_vector(&rtx, scene.ap.position, lambda)?;
    let w_i = beam_steering_vector(twin.relay_rx(), beam, lambda);
    relay_phase_matrix(&w_o, &w_i, scene.amplification)
}
