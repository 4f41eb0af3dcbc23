//! Spherical-Earth coordinates and the small vector type used throughout.
//!
//! Positions are Earth-centered Cartesian (x toward (0°, 0°), z toward the
//! north pole) in meters. Velocities reuse [`Vec3`] in m/s.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y).hypot(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction; fails for the zero vector.
    pub fn normalized(self) -> Result<Vec3> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain(format!("cannot normalize vector {self:?}")));
        }
        Ok(self / n)
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Component by axis index (0, 1, 2).
    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Longitude and latitude in degrees, altitude in meters above the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticPoint {
    pub longitude: f64,
    pub latitude: f64,
    pub altitude: f64,
}

impl GeodeticPoint {
    pub const fn new(longitude: f64, latitude: f64, altitude: f64) -> Self {
        Self { longitude, latitude, altitude }
    }

    /// Checks the coordinate ranges against `earth`.
    pub fn validate(&self, earth: &EarthModel) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Domain(format!("longitude {} outside [-180, 180]", self.longitude)));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Domain(format!("latitude {} outside [-90, 90]", self.latitude)));
        }
        if !self.altitude.is_finite() || self.altitude < -earth.radius {
            return Err(Error::Domain(format!("altitude {} below Earth center", self.altitude)));
        }
        Ok(())
    }
}

/// Sphere radius and signal propagation speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel {
    pub radius: f64,
    pub c: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self { radius: EARTH_RADIUS_M, c: SPEED_OF_LIGHT }
    }
}

impl EarthModel {
    pub fn new(radius: f64, c: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("earth radius must be positive, got {radius}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("propagation speed must be positive, got {c}")));
        }
        Ok(Self { radius, c })
    }

    /// Radial projection of `v` onto the surface.
    pub fn project_to_surface(&self, v: Vec3) -> Result<Vec3> {
        Ok(v.normalized()? * self.radius)
    }
}

pub fn geodetic_to_ecef(p: GeodeticPoint, earth: &EarthModel) -> Result<Vec3> {
    p.validate(earth)?;
    let r = earth.radius + p.altitude;
    let (slat, clat) = p.latitude.to_radians().sin_cos();
    let (slon, clon) = p.longitude.to_radians().sin_cos();
    Ok(Vec3::new(r * clat * clon, r * clat * slon, r * slat))
}

/// Inverse of [`geodetic_to_ecef`]. Longitude is reported as 0 on the polar axis.
pub fn ecef_to_geodetic(v: Vec3, earth: &EarthModel) -> Result<GeodeticPoint> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("non-finite position {v:?}")));
    }
    let r = v.norm();
    if r == 0.0 {
        return Err(Error::Domain("position at Earth center has no geodetic coordinates".into()));
    }
    let horizontal = v.x.hypot(v.y);
    let longitude = if horizontal == 0.0 { 0.0 } else { v.y.atan2(v.x).to_degrees() };
    let latitude = v.z.atan2(horizontal).to_degrees();
    Ok(GeodeticPoint { longitude, latitude, altitude: r - earth.radius })
}

/// Unit vector pointing from `from` toward `to`.
pub fn unit_vector_between(from: Vec3, to: Vec3) -> Result<Vec3> {
    let d = to - from;
    let n = d.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!("coincident or invalid points {from:?} and {to:?}")));
    }
    Ok(d / n)
}

/// Great-circle separation of two positions as seen from the Earth center, radians.
pub fn central_angle(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
