//! Uniform planar arrays, steering vectors and link geometry.
//!
//! Three angle conventions meet here, all carried by [`Angles`]:
//!
//! - **World link angles** from [`link_angles`]: azimuth in the horizontal
//!   plane from +x toward +y, elevation above the horizon.
//! - **Array-local steering angles** consumed by [`steering_vector`]: `el` is
//!   the angle off the array boresight and `az` the direction within the
//!   aperture plane, measured from the array's x axis toward its y axis. The
//!   broadside direction is `(0, 0)`. Directions behind the aperture are
//!   folded onto the front hemisphere (the phase law only sees `sin el`).
//! - **Beam angles** used by codebooks and optimizers: horizontal azimuth and
//!   vertical elevation relative to the boresight, so that `(0, 0)` is
//!   broadside and `(±54°, ±18°)` span the hardware grid. Convert with
//!   [`beam_to_local`].
//!
//! Each array carries an orthonormal frame `(ex, ey, b)`: `b` is the
//! boresight, `ey` is horizontal (world up × boresight) and `ex = ey × b`
//! points downward for a level array. Element index `n_x` runs along `ex` and
//! `n_y` along `ey`, so a `2 × 8` array has its eight-element dimension
//! horizontal.

use crate::geom::Vec3;
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Angles {
    /// Radians.
    pub az: f64,
    /// Radians.
    pub el: f64,
}

impl Angles {
    pub const BROADSIDE: Angles = Angles { az: 0.0, el: 0.0 };

    pub const fn new(az: f64, el: f64) -> Self {
        Self { az, el }
    }

    pub fn from_degrees(az: f64, el: f64) -> Self {
        Self::new(az.to_radians(), el.to_radians())
    }

    pub fn az_deg(self) -> f64 {
        self.az.to_degrees()
    }

    pub fn el_deg(self) -> f64 {
        self.el.to_degrees()
    }

    /// Unit direction for horizon-referenced angles (world link angles, or
    /// beam angles in an array frame with x forward, y left, z up).
    pub fn direction(self) -> Vec3 {
        let (se, ce) = self.el.sin_cos();
        let (sa, ca) = self.az.sin_cos();
        Vec3::new(ce * ca, ce * sa, se)
    }

    /// Euclidean distance in degrees, used for de-duplicating optima.
    pub fn distance_deg(self, o: Angles) -> f64 {
        (self.az_deg() - o.az_deg()).hypot(self.el_deg() - o.el_deg())
    }
}

/// Wraps an angle into `[-π, π]`, mapping `-π` to `+π`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w = PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub boresight: Vec3,
    pub position: Vec3,
}

impl UpaGeometry {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, boresight: Vec3, position: Vec3) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGeometry(format!("element counts must be >= 1, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::InvalidGeometry(format!("spacings must be positive, got dx={dx}, dy={dy}")));
        }
        let n = boresight.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidGeometry("boresight must be a nonzero finite vector".into()));
        }
        if !position.is_finite() {
            return Err(Error::InvalidGeometry("position must be finite".into()));
        }
        Ok(Self { nx, ny, dx, dy, boresight: boresight.normalized(), position })
    }

    /// Half-wavelength spaced array.
    pub fn half_wavelength(nx: usize, ny: usize, wavelength: f64, boresight: Vec3, position: Vec3) -> Result<Self> {
        Self::new(nx, ny, wavelength / 2.0, wavelength / 2.0, boresight, position)
    }

    /// Total element count `N = nx * ny`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the frame `(ex, ey, boresight)`.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let b = self.boresight;
        let mut ey = Vec3::UP.cross(b);
        if ey.norm() < 1e-9 {
            // Vertical boresight: world +y is already in the aperture plane.
            ey = Vec3::new(0.0, 1.0, 0.0);
        }
        let ey = ey.normalized();
        let ex = ey.cross(b).normalized();
        (ex, ey, b)
    }

    /// Same array, boresight re-aimed at `target`.
    pub fn aimed_at(&self, target: Vec3) -> Result<Self> {
        let d = target - self.position;
        if d.norm() < 1e-9 {
            return Err(Error::CoincidentPoints(d.norm()));
        }
        let mut g = self.clone();
        g.boresight = d.normalized();
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub weights: Vec<Complex64>,
    pub wavelength: f64,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `selfᴴ v`.
    pub fn inner(&self, v: &[Complex64]) -> Complex64 {
        self.weights.iter().zip(v).map(|(w, x)| w.conj() * x).sum()
    }
}

/// Array response for local steering angles (`el` off boresight).
///
/// Entry `n = (n_y - 1) N_x + n_x` (1-based) is
/// `exp(j 2π/λ (d_x (n_x-1) sin el cos az + d_y (n_y-1) sin el sin az))`.
pub fn steering_vector(geom: &UpaGeometry, angles: Angles, wavelength: f64) -> SteeringVector {
    let k = 2.0 * PI / wavelength;
    let (se, _) = angles.el.sin_cos();
    let (sa, ca) = angles.az.sin_cos();
    let ux = k * geom.dx * se * ca;
    let uy = k * geom.dy * se * sa;
    let mut weights = Vec::with_capacity(geom.len());
    for iy in 0..geom.ny {
        for ix in 0..geom.nx {
            weights.push(Complex64::from_polar(1.0, ux * ix as f64 + uy * iy as f64));
        }
    }
    SteeringVector { weights, wavelength }
}

/// Steering vector for a beam direction (see module docs).
pub fn beam_steering_vector(geom: &UpaGeometry, beam: Angles, wavelength: f64) -> SteeringVector {
    steering_vector(geom, beam_to_local(beam), wavelength)
}

/// World link angles from `a` toward `b`.
pub fn link_angles(a: Vec3, b: Vec3) -> Result<Angles> {
    let d = b - a;
    let len = d.norm();
    if len < 1e-9 {
        return Err(Error::CoincidentPoints(len));
    }
    let el = (d.z / len).clamp(-1.0, 1.0).asin();
    let az = wrap_angle(d.y.atan2(d.x));
    Ok(Angles { az, el })
}

/// Local steering angles for a unit direction given in array components
/// `(ex, ey, b)`.
fn local_from_components(cx: f64, cy: f64, cb: f64) -> Angles {
    // Fold the back hemisphere onto the front: the phase law depends only on
    // the in-plane projection.
    let off = cb.abs().clamp(0.0, 1.0).acos();
    let inplane = cx.hypot(cy);
    if inplane < 1e-15 {
        return Angles::BROADSIDE;
    }
    let az = wrap_angle(cy.atan2(cx));
    Angles { az, el: off.min(FRAC_PI_2) }
}

/// World direction (link angles) expressed as local steering angles.
pub fn to_local_frame(angles_world: Angles, geom: &UpaGeometry) -> Angles {
    let d = angles_world.direction();
    let (ex, ey, b) = geom.frame();
    local_from_components(d.dot(ex), d.dot(ey), d.dot(b))
}

/// Inverse of [`to_local_frame`] for front-hemisphere directions.
pub fn from_local_frame(local: Angles, geom: &UpaGeometry) -> Angles {
    let (ex, ey, b) = geom.frame();
    let (so, co) = local.el.sin_cos();
    let (sa, ca) = local.az.sin_cos();
    let d = ex * (so * ca) + ey * (so * sa) + b * co;
    let el = d.z.clamp(-1.0, 1.0).asin();
    let az = wrap_angle(d.y.atan2(d.x));
    Angles { az, el }
}

/// Beam angles (horizontal az, vertical el relative to boresight) to local
/// steering angles.
pub fn beam_to_local(beam: Angles) -> Angles {
    let (se, ce) = beam.el.sin_cos();
    let (sa, ca) = beam.az.sin_cos();
    // ex points down, ey left, b forward.
    local_from_components(-se, ce * sa, ce * ca)
}

/// Beam angles under which the array sees the world direction `angles_world`.
pub fn beam_angles_of(angles_world: Angles, geom: &UpaGeometry) -> Angles {
    let d = angles_world.direction();
    let (ex, ey, b) = geom.frame();
    let el = (-d.dot(ex)).clamp(-1.0, 1.0).asin();
    let az = wrap_angle(d.dot(ey).atan2(d.dot(b)));
    Angles { az, el }
}

/// World direction of a beam.
pub fn beam_to_world(beam: Angles, geom: &UpaGeometry) -> Vec3 {
    let (ex, ey, b) = geom.frame();
    let (se, ce) = beam.el.sin_cos();
    let (sa, ca) = beam.az.sin_cos();
    ex * (-se) + ey * (ce * sa) + b * (ce * ca)
}

/// Rank-one relay configuration `Φ = A w_out w_inᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayPhaseMatrix {
    pub matrix: Array2<Complex64>,
    pub amplification: f64,
}

pub fn relay_phase_matrix(w_out: &SteeringVector, w_in: &SteeringVector, amplification: f64) -> Result<RelayPhaseMatrix> {
    if !(amplification > 0.0 && amplification.is_finite()) {
        return Err(Error::InvalidConfig(format!("amplification must be positive, got {amplification}")));
    }
    let matrix = Array2::from_shape_fn((w_out.len(), w_in.len()), |(o, i)| {
        w_out.weights[o] * w_in.weights[i].conj() * amplification
    });
    Ok(RelayPhaseMatrix { matrix, amplification })
}
