//! Indoor scene description and its JSON file format.
//!
//! A scene is an axis-aligned room (six reflecting walls) with optional
//! axis-aligned box obstacles, the node placements (target station,
//! interferers, the relay's receive and transmit arrays, the access point),
//! radio parameters and a list of links whose direct path is forced blocked.
//!
//! Units: meters, watts, hertz, kelvin, dB. Reflection coefficients are
//! amplitude coefficients in `[0, 1]`.
//!
//! ```json
//! {
//!   "room": { "min": [0,0,0], "max": [10,6,3],
//!             "reflection": [0.6,0.6,0.6,0.6,0.6,0.6] },
//!   "obstacles": [ { "min": [1,3.6,0], "max": [2.6,5,0.75], "reflection": 0.3 } ],
//!   "carrier_hz": 60.48e9, "bandwidth_hz": 1.2e9,
//!   "noise": { "temperature_k": 290, "noise_figure_db": 10 },
//!   "amplification": 1.0,
//!   "sta": { "position": [5,2,0.9], "power_w": 0.1 },
//!   "interferers": [ { "position": [4,1.5,0.9], "power_w": 0.1 } ],
//!   "relay_rx": { "position": [7,5.5,2] },
//!   "relay_tx": { "position": [7.2,5.5,2] },
//!   "ap": { "position": [9,2,1.2] },
//!   "placement": { "x": [3.4,6.5], "y": [1,2.9], "z": 0.9 },
//!   "blocked_links": [["sta","ap"]]
//! }
//! ```
//!
//! Wall reflection order is `[x-min, x-max, y-min, y-max, z-min, z-max]`.
//! Array fields (`nx`, `ny`, `spacing_m`) default to a half-wavelength `2 × 8`
//! array. A missing `boresight` aims the array at its default partner:
//! transmitters at the relay receiver, the relay receiver at the centre of
//! the placement region, the relay transmitter at the AP and the AP at the
//! relay transmitter.

use crate::array::UpaGeometry;
use crate::geom::Vec3;
use crate::{Error, Result, BOLTZMANN, SPEED_OF_LIGHT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Identifies a node of the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Sta,
    Interferer(usize),
    RelayRx,
    RelayTx,
    Ap,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sta => write!(f, "sta"),
            NodeId::Interferer(k) => write!(f, "interferer:{k}"),
            NodeId::RelayRx => write!(f, "relay_rx"),
            NodeId::RelayTx => write!(f, "relay_tx"),
            NodeId::Ap => write!(f, "ap"),
        }
    }
}

impl FromStr for NodeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sta" => NodeId::Sta,
            "relay_rx" => NodeId::RelayRx,
            "relay_tx" => NodeId::RelayTx,
            "ap" => NodeId::Ap,
            _ => {
                let k = s
                    .strip_prefix("interferer:")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::InvalidScene(format!("unknown node id {s:?}")))?;
                NodeId::Interferer(k)
            }
        })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: Vec3,
    pub max: Vec3,
    /// Per-wall amplitude reflection coefficient.
    pub reflection: [f64; 6],
}

impl Room {
    pub fn contains_strict(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }

    /// Clamps `p` into the room shrunk by `margin` on every side.
    pub fn clamp(&self, p: Vec3, margin: f64) -> Vec3 {
        let c = |a: usize| p[a].clamp(self.min[a] + margin, self.max[a] - margin);
        Vec3::new(c(0), c(1), c(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: Vec3,
    pub max: Vec3,
    pub reflection: f64,
}

impl Obstacle {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing; `None` means half a wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self { nx: 2, ny: 8, spacing_m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmitter {
    pub position: Vec3,
    pub power_w: f64,
    #[serde(default)]
    pub array: ArraySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boresight: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedNode {
    pub position: Vec3,
    #[serde(default)]
    pub array: ArraySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boresight: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub temperature_k: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal computation when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { temperature_k: 290.0, noise_figure_db: 10.0, power_w: None }
    }
}

/// Region from which transmitter positions are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: f64,
}

impl Placement {
    pub fn center(&self) -> Vec3 {
        Vec3::new((self.x[0] + self.x[1]) / 2.0, (self.y[0] + self.y[1]) / 2.0, self.z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        Vec3::new(rng.random_range(self.x[0]..=self.x[1]), rng.random_range(self.y[0]..=self.y[1]), self.z)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x[0] < self.x[1] && self.y[0] < self.y[1] && self.z.is_finite();
        if !ok {
            return Err(Error::InvalidRange(format!("placement x={:?} y={:?} z={}", self.x, self.y, self.z)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: Room,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_amplification")]
    pub amplification: f64,
    pub sta: Transmitter,
    pub interferers: Vec<Transmitter>,
    pub relay_rx: FixedNode,
    pub relay_tx: FixedNode,
    pub ap: FixedNode,
    pub placement: Placement,
    #[serde(default)]
    pub blocked_links: Vec<(NodeId, NodeId)>,
}

fn default_amplification() -> f64 {
    1.0
}

/// Transmitter positions `[p_0, p_1, …, p_K]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positions {
    pub sta: Vec3,
    pub interferers: Vec<Vec3>,
}

impl Positions {
    pub fn k(&self) -> usize {
        self.interferers.len()
    }

    /// Flattened `3(K+1)` coordinate vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * (self.k() + 1));
        v.extend(self.sta.to_array());
        for p in &self.interferers {
            v.extend(p.to_array());
        }
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 3 || !v.len().is_multiple_of(3) {
            return Err(Error::DimensionMismatch(format!("position vector length {} is not 3(K+1)", v.len())));
        }
        let p = |i: usize| Vec3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        Ok(Self { sta: p(0), interferers: (1..v.len() / 3).map(p).collect() })
    }
}

impl Scene {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Noise power `k_B T B · NF`, unless overridden.
    pub fn noise_power(&self) -> f64 {
        self.noise.power_w.unwrap_or_else(|| {
            BOLTZMANN * self.noise.temperature_k * self.bandwidth_hz * 10f64.powf(self.noise.noise_figure_db / 10.0)
        })
    }

    pub fn k(&self) -> usize {
        self.interferers.len()
    }

    pub fn positions(&self) -> Positions {
        Positions { sta: self.sta.position, interferers: self.interferers.iter().map(|t| t.position).collect() }
    }

    /// Copy of the scene with the transmitters moved to `p`.
    pub fn with_positions(&self, p: &Positions) -> Result<Scene> {
        if p.k() != self.k() {
            return Err(Error::DimensionMismatch(format!("expected {} interferers, got {}", self.k(), p.k())));
        }
        let mut s = self.clone();
        s.sta.position = p.sta;
        for (t, q) in s.interferers.iter_mut().zip(&p.interferers) {
            t.position = *q;
        }
        Ok(s)
    }

    pub fn node_position(&self, id: NodeId) -> Result<Vec3> {
        Ok(match id {
            NodeId::Sta => self.sta.position,
            NodeId::Interferer(k) => {
                self.interferers
                    .get(k)
                    .ok_or_else(|| Error::InvalidScene(format!("no interferer {k}")))?
                    .position
            }
            NodeId::RelayRx => self.relay_rx.position,
            NodeId::RelayTx => self.relay_tx.position,
            NodeId::Ap => self.ap.position,
        })
    }

    fn build_array(&self, spec: &ArraySpec, position: Vec3, boresight: Option<Vec3>, default_aim: Vec3) -> Result<UpaGeometry> {
        let d = spec.spacing_m.unwrap_or(self.wavelength() / 2.0);
        let b = match boresight {
            Some(b) => b,
            None => default_aim - position,
        };
        UpaGeometry::new(spec.nx, spec.ny, d, d, b, position)
    }

    /// Resolved array geometry of a node.
    pub fn array(&self, id: NodeId) -> Result<UpaGeometry> {
        match id {
            NodeId::Sta => self.build_array(&self.sta.array, self.sta.position, self.sta.boresight, self.relay_rx.position),
            NodeId::Interferer(k) => {
                let t = self.interferers.get(k).ok_or_else(|| Error::InvalidScene(format!("no interferer {k}")))?;
                self.build_array(&t.array, t.position, t.boresight, self.relay_rx.position)
            }
            NodeId::RelayRx => {
                self.build_array(&self.relay_rx.array, self.relay_rx.position, self.relay_rx.boresight, self.placement.center())
            }
            NodeId::RelayTx => {
                self.build_array(&self.relay_tx.array, self.relay_tx.position, self.relay_tx.boresight, self.ap.position)
            }
            NodeId::Ap => self.build_array(&self.ap.array, self.ap.position, self.ap.boresight, self.relay_tx.position),
        }
    }

    pub fn is_blocked(&self, a: NodeId, b: NodeId) -> bool {
        self.blocked_links.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if (0..3).any(|a| self.room.max[a] <= self.room.min[a]) {
            return bad("room max must exceed min on every axis".into());
        }
        let coeffs = self.room.reflection.iter().chain(self.obstacles.iter().map(|o| &o.reflection));
        for &r in coeffs {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("reflection coefficient {r} outside [0, 1]"));
            }
        }
        for o in &self.obstacles {
            if (0..3).any(|a| o.max[a] <= o.min[a]) {
                return bad("obstacle max must exceed min on every axis".into());
            }
        }
        if self.interferers.is_empty() {
            return bad("at least one interferer is required".into());
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return bad("carrier and bandwidth must be positive".into());
        }
        if !(self.amplification > 0.0) {
            return bad("amplification must be positive".into());
        }
        if !(self.noise_power() > 0.0) {
            return bad("noise power must be positive".into());
        }
        for t in std::iter::once(&self.sta).chain(&self.interferers) {
            if !(t.power_w >= 0.0 && t.power_w.is_finite()) {
                return bad(format!("transmit power {} must be non-negative", t.power_w));
            }
        }
        let mut ids = vec![NodeId::Sta, NodeId::RelayRx, NodeId::RelayTx, NodeId::Ap];
        ids.extend((0..self.k()).map(NodeId::Interferer));
        for id in ids {
            let p = self.node_position(id)?;
            if !self.room.contains_strict(p) {
                return bad(format!("node {id} at {:?} is not strictly inside the room", p.to_array()));
            }
            if self.obstacles.iter().any(|o| o.contains(p)) {
                return bad(format!("node {id} lies inside an obstacle"));
            }
            self.array(id)?;
        }
        self.placement.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let text = std::fs::read_to_string(path)?;
        let s: Scene = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON encoding.
    pub fn content_hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("scene serializes");
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }

    /// Copy with every reflection coefficient scaled by an independent
    /// uniform factor in `[1 - jitter, 1 + jitter]`, clamped to `[0, 1]`.
    pub fn perturbed(&self, jitter: f64, seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = self.clone();
        let mut j = |r: &mut f64| {
            let f = if jitter > 0.0 { rng.random_range(1.0 - jitter..=1.0 + jitter) } else { 1.0 };
            *r = (*r * f).clamp(0.0, 1.0);
        };
        for r in s.room.reflection.iter_mut() {
            j(r);
        }
        for o in s.obstacles.iter_mut() {
            j(&mut o.reflection);
        }
        s
    }

    /// The reference office: a 10 m × 6 m × 3 m room with a desk and a
    /// cabinet, relay and AP positions as in the hardware testbed, one
    /// interferer, 0.1 W transmitters at 60.48 GHz over 1.2 GHz.
    pub fn reference() -> Scene {
        let tx = |p: Vec3| Transmitter { position: p, power_w: 0.1, array: ArraySpec::default(), boresight: None };
        let fixed = |p: Vec3| FixedNode { position: p, array: ArraySpec::default(), boresight: None };
        Scene {
            room: Room { min: Vec3::new(0.0, 0.0, 0.0), max: Vec3::new(10.0, 6.0, 3.0), reflection: [0.6; 6] },
            obstacles: vec![
                Obstacle { min: Vec3::new(1.0, 3.6, 0.0), max: Vec3::new(2.6, 5.0, 0.75), reflection: 0.3 },
                Obstacle { min: Vec3::new(8.2, 4.4, 0.0), max: Vec3::new(9.8, 5.8, 1.8), reflection: 0.3 },
            ],
            carrier_hz: 60.48e9,
            bandwidth_hz: 1.2e9,
            noise: NoiseSpec::default(),
            amplification: 1.0,
            sta: tx(Vec3::new(5.0, 2.0, 0.9)),
            interferers: vec![tx(Vec3::new(4.0, 1.5, 0.9))],
            relay_rx: fixed(Vec3::new(7.0, 5.5, 2.0)),
            relay_tx: fixed(Vec3::new(7.2, 5.5, 2.0)),
            ap: fixed(Vec3::new(9.0, 2.0, 1.2)),
            placement: Placement { x: [3.4, 6.5], y: [1.0, 2.9], z: 0.9 },
            blocked_links: vec![(NodeId::Sta, NodeId::Ap), (NodeId::Interferer(0), NodeId::Ap)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scene_is_valid() {
        let s = Scene::reference();
        s.validate().unwrap();
        let n = s.noise_power();
        // k T B at 290 K, 1.2 GHz, +10 dB.
        assert!((n - 1.380649e-23 * 290.0 * 1.2e9 * 10.0).abs() / n < 1e-12);
        assert!((s.wavelength() - 299_792_458.0 / 60.48e9).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let s = Scene::reference();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.content_hash(), back.content_hash());
        assert!(text.contains("\"interferer:0\""));
    }

    #[test]
    fn invalid_scenes_rejected() {
        let mut s = Scene::reference();
        s.sta.position = Vec3::new(11.0, 2.0, 0.9);
        assert!(s.validate().is_err());
        let mut s = Scene::reference();
        s.room.reflection[2] = 1.5;
        assert!(s.validate().is_err());
        let mut s = Scene::reference();
        s.interferers.clear();
        assert!(s.validate().is_err());
        let mut s = Scene::reference();
        s.sta.position = Vec3::new(1.5, 4.0, 0.5);
        assert!(s.validate().is_err(), "inside the desk");
    }

    #[test]
    fn node_id_parse() {
        for id in [NodeId::Sta, NodeId::Interferer(3), NodeId::RelayRx, NodeId::RelayTx, NodeId::Ap] {
            assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }
        assert!("relay".parse::<NodeId>().is_err());
    }

    #[test]
    fn perturbation_stays_in_range_and_is_seeded() {
        let s = Scene::reference();
        let a = s.perturbed(0.2, 7);
        let b = s.perturbed(0.2, 7);
        assert_eq!(a, b);
        assert_ne!(a, s);
        for (r, r0) in a.room.reflection.iter().zip(&s.room.reflection) {
            assert!(*r >= r0 * 0.8 - 1e-12 && *r <= r0 * 1.2 + 1e-12);
        }
        assert_eq!(s.perturbed(0.0, 7), s);
    }

    #[test]
    fn default_aims() {
        let s = Scene::reference();
        let sta = s.array(NodeId::Sta).unwrap();
        let to_relay = (s.relay_rx.position - s.sta.position).normalized();
        assert!((sta.boresight - to_relay).norm() < 1e-12);
        let rx = s.array(NodeId::RelayRx).unwrap();
        let to_center = (s.placement.center() - s.relay_rx.position).normalized();
        assert!((rx.boresight - to_center).norm() < 1e-12);
    }

    #[test]
    fn positions_flatten() {
        let p = Positions { sta: Vec3::new(1.0, 2.0, 3.0), interferers: vec![Vec3::new(4.0, 5.0, 6.0)] };
        let v = p.to_vec();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Positions::from_slice(&v).unwrap(), p);
        assert!(Positions::from_slice(&v[..4]).is_err());
    }
}
