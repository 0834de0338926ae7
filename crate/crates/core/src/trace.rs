//! Image-method ray tracing with up to two specular reflections.
//!
//! Reflecting surfaces are the six room walls and the outer faces of every
//! obstacle. For an ordered surface sequence the transmitter is mirrored
//! across each surface in turn; the reflection points are then recovered by
//! walking back from the receiver toward the successive images. A candidate
//! path survives when every reflection point lies on its (finite) surface,
//! every leg stays on the reflecting side of its surfaces and no leg crosses
//! an obstacle interior.

use crate::array::{link_angles, Angles};
use crate::geom::Vec3;
use crate::scene::{NodeId, Scene};
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

const EPS: f64 = 1e-9;

/// A planar axis-aligned rectangle that reflects from one side.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub axis: usize,
    pub coord: f64,
    /// Bounds on the two remaining axes, in increasing axis order.
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// `+1` if the reflecting side is `p[axis] > coord`, `-1` otherwise.
    pub side: f64,
    pub reflection: f64,
}

impl Surface {
    fn other_axes(&self) -> [usize; 2] {
        match self.axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn mirror(&self, p: Vec3) -> Vec3 {
        p.with(self.axis, 2.0 * self.coord - p[self.axis])
    }

    fn on_side(&self, p: Vec3) -> bool {
        (p[self.axis] - self.coord) * self.side > EPS
    }

    fn contains(&self, p: Vec3) -> bool {
        let [a, b] = self.other_axes();
        p[a] >= self.lo[0] - EPS && p[a] <= self.hi[0] + EPS && p[b] >= self.lo[1] - EPS && p[b] <= self.hi[1] + EPS
    }

    /// Intersection of segment `from → to` with the surface plane, if it
    /// crosses strictly between the endpoints.
    fn intersect(&self, from: Vec3, to: Vec3) -> Option<Vec3> {
        let a = self.axis;
        let den = to[a] - from[a];
        if den.abs() < 1e-15 {
            return None;
        }
        let t = (self.coord - from[a]) / den;
        if t <= EPS || t >= 1.0 - EPS {
            return None;
        }
        Some((from + (to - from) * t).with(a, self.coord))
    }
}

/// Box interior used for occlusion tests.
#[derive(Debug, Clone, PartialEq)]
struct Blocker {
    min: Vec3,
    max: Vec3,
}

impl Blocker {
    /// True when the open segment crosses the box interior.
    fn blocks(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for ax in 0..3 {
            if d[ax].abs() < 1e-15 {
                if a[ax] <= self.min[ax] + EPS || a[ax] >= self.max[ax] - EPS {
                    return false;
                }
            } else {
                let u = (self.min[ax] - a[ax]) / d[ax];
                let v = (self.max[ax] - a[ax]) / d[ax];
                t0 = t0.max(u.min(v));
                t1 = t1.min(u.max(v));
            }
        }
        t1 - t0 > EPS && t1 > EPS && t0 < 1.0 - EPS
    }
}

/// Precomputed reflecting surfaces and blockers of a scene.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub surfaces: Vec<Surface>,
    blockers: Vec<Blocker>,
    wavelength: f64,
}

impl Geometry {
    pub fn new(scene: &Scene) -> Self {
        let room = &scene.room;
        let mut surfaces = Vec::new();
        for axis in 0..3 {
            let [a, b] = match axis {
                0 => [1, 2],
                1 => [0, 2],
                _ => [0, 1],
            };
            let lo = [room.min[a], room.min[b]];
            let hi = [room.max[a], room.max[b]];
            surfaces.push(Surface { axis, coord: room.min[axis], lo, hi, side: 1.0, reflection: room.reflection[2 * axis] });
            surfaces.push(Surface {
                axis,
                coord: room.max[axis],
                lo,
                hi,
                side: -1.0,
                reflection: room.reflection[2 * axis + 1],
            });
        }
        for o in &scene.obstacles {
            for axis in 0..3 {
                let [a, b] = match axis {
                    0 => [1, 2],
                    1 => [0, 2],
                    _ => [0, 1],
                };
                let lo = [o.min[a], o.min[b]];
                let hi = [o.max[a], o.max[b]];
                for (coord, side) in [(o.min[axis], -1.0), (o.max[axis], 1.0)] {
                    // Faces flush with a wall cannot be reached.
                    if coord <= room.min[axis] + EPS || coord >= room.max[axis] - EPS {
                        continue;
                    }
                    surfaces.push(Surface { axis, coord, lo, hi, side, reflection: o.reflection });
                }
            }
        }
        let blockers = scene.obstacles.iter().map(|o| Blocker { min: o.min, max: o.max }).collect();
        Self { surfaces, blockers, wavelength: scene.wavelength() }
    }

    fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        self.blockers.iter().any(|o| o.blocks(a, b))
    }

    /// All specular paths from `a` to `b` with at most `max_order`
    /// reflections. The direct path is omitted when `los_blocked`.
    pub fn trace(&self, a: Vec3, b: Vec3, max_order: usize, los_blocked: bool) -> Vec<PropPath> {
        let mut out = Vec::new();
        if a.distance(b) < 1e-9 {
            return out;
        }
        if !los_blocked && !self.occluded(a, b) {
            out.push(self.make_path(vec![a, b], 1.0));
        }
        let n = self.surfaces.len();
        if max_order >= 1 {
            for i in 0..n {
                if let Some(p) = self.reflect(a, b, &[i]) {
                    out.push(p);
                }
            }
        }
        if max_order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        if let Some(p) = self.reflect(a, b, &[i, j]) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    fn reflect(&self, a: Vec3, b: Vec3, seq: &[usize]) -> Option<PropPath> {
        let surf: Vec<&Surface> = seq.iter().map(|&i| &self.surfaces[i]).collect();
        let mut images = vec![a];
        for s in &surf {
            let last = *images.last().unwrap();
            images.push(s.mirror(last));
        }
        // Walk back from the receiver.
        let mut points = vec![b];
        let mut target = b;
        for (k, s) in surf.iter().enumerate().rev() {
            let r = s.intersect(images[k + 1], target)?;
            if !s.contains(r) {
                return None;
            }
            points.push(r);
            target = r;
        }
        points.push(a);
        points.reverse();
        // points = [a, r_1, …, r_m, b]; legs touching surface k must lie on
        // its reflecting side.
        for (k, s) in surf.iter().enumerate() {
            if !s.on_side(points[k]) || !s.on_side(points[k + 2]) {
                return None;
            }
        }
        for w in points.windows(2) {
            if self.occluded(w[0], w[1]) {
                return None;
            }
        }
        let gain = surf.iter().map(|s| s.reflection).product();
        Some(self.make_path(points, gain))
    }

    fn make_path(&self, vertices: Vec<Vec3>, reflection: f64) -> PropPath {
        let length: f64 = vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
        let n = vertices.len();
        let amp = self.wavelength / (4.0 * PI * length) * reflection;
        let gain = Complex64::from_polar(amp, -2.0 * PI * length / self.wavelength);
        let departure = link_angles(vertices[0], vertices[1]).expect("distinct vertices");
        let arrival = link_angles(vertices[n - 1], vertices[n - 2]).expect("distinct vertices");
        PropPath { order: n - 2, vertices, length, gain, departure, arrival }
    }
}

/// One specular propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct PropPath {
    /// `[tx, reflection points…, rx]`.
    pub vertices: Vec<Vec3>,
    pub order: usize,
    pub length: f64,
    /// `λ/(4π·len) · Πρ · exp(-j2π·len/λ)`.
    pub gain: Complex64,
    /// World direction leaving the transmitter.
    pub departure: Angles,
    /// World direction from the receiver back toward the incoming leg.
    pub arrival: Angles,
}

/// Paths between two scene nodes.
pub fn trace_paths(scene: &Scene, a: NodeId, b: NodeId, max_order: usize) -> Result<Vec<PropPath>> {
    if max_order > 2 {
        return Err(Error::InvalidConfig(format!("max_order {max_order} > 2")));
    }
    if a == b {
        return Err(Error::InvalidConfig("trace endpoints must differ".into()));
    }
    let pa = scene.node_position(a)?;
    let pb = scene.node_position(b)?;
    Ok(Geometry::new(scene).trace(pa, pb, max_order, scene.is_blocked(a, b)))
}
