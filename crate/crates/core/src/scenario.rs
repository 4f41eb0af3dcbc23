//! Satellite trajectories, emitter geometry, ephemeris/oscillator error
//! injection and the `key = value` scenario file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geodesy::{geodetic_to_ecef, EarthModel, GeodeticPoint, Vec3};

/// Longitude step between consecutive samples of a linear pass, degrees.
pub const LINEAR_PASS_STEP_DEG: f64 = 0.5;
/// Radius of the GEO station-keeping circle, meters.
pub const GEO_CIRCLE_RADIUS_M: f64 = 50_000.0;
pub const GEO_ALTITUDE_M: f64 = 35_786_000.0;
pub const GEO_SPEED_MPS: f64 = 3.63;
pub const MEO_ALTITUDE_M: f64 = 23_000_000.0;
pub const MEO_SPEED_MPS: f64 = 1544.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrbitKind {
    Leo,
    Meo,
    RetroGeo,
    Geo,
}

impl OrbitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OrbitKind::Leo => "leo",
            OrbitKind::Meo => "meo",
            OrbitKind::RetroGeo => "retro_geo",
            OrbitKind::Geo => "geo",
        }
    }
}

impl FromStr for OrbitKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "leo" => Ok(OrbitKind::Leo),
            "meo" => Ok(OrbitKind::Meo),
            "retro_geo" | "retrogeo" => Ok(OrbitKind::RetroGeo),
            "geo" => Ok(OrbitKind::Geo),
            other => Err(format!("unknown orbit kind `{other}` (expected leo, meo, retro_geo or geo)")),
        }
    }
}

/// Where the frequencies are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Samples are down-converted and forwarded; frequencies estimated on the ground.
    Gateway,
    /// Frequencies estimated on the satellite itself, before down-conversion.
    Onboard,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gateway => "gateway",
            Mode::Onboard => "onboard",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gateway" => Ok(Mode::Gateway),
            "onboard" | "on_board" | "on-board" => Ok(Mode::Onboard),
            other => Err(format!("unknown mode `{other}` (expected gateway or onboard)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Absolute frequency of arrival.
    Foa,
    /// Differences of consecutive frequency-of-arrival equations.
    Fdoa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Foa => "foa",
            Method::Fdoa => "fdoa",
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "foa" => Ok(Method::Foa),
            "fdoa" => Ok(Method::Fdoa),
            other => Err(format!("unknown method `{other}` (expected foa or fdoa)")),
        }
    }
}

macro_rules! impl_display_as_str {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    )*};
}
impl_display_as_str!(OrbitKind, Mode, Method);

/// Satellite state for one measurement epoch: the true values used to
/// synthesize frequencies, and the erroneous values the gateway believes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteSample {
    pub pos_ul_true: Vec3,
    pub vel_ul_true: Vec3,
    pub pos_dl_true: Vec3,
    pub vel_dl_true: Vec3,
    pub pos_ul_err: Vec3,
    pub vel_ul_err: Vec3,
    pub pos_dl_err: Vec3,
    pub vel_dl_err: Vec3,
    /// Actual down-conversion frequency, Hz.
    pub f_t_true: f64,
    /// Down-conversion frequency assumed at the gateway, Hz.
    pub f_t_assumed: f64,
}

impl SatelliteSample {
    /// Error-free sample with identical uplink and downlink states.
    pub fn exact(pos: Vec3, vel: Vec3, f_t: f64) -> Self {
        Self {
            pos_ul_true: pos,
            vel_ul_true: vel,
            pos_dl_true: pos,
            vel_dl_true: vel,
            pos_ul_err: pos,
            vel_ul_err: vel,
            pos_dl_err: pos,
            vel_dl_err: vel,
            f_t_true: f_t,
            f_t_assumed: f_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub orbit_kind: OrbitKind,
    /// Satellite altitude above the sphere, meters.
    pub altitude: f64,
    /// Satellite speed, m/s.
    pub speed: f64,
    pub n_samples: usize,
    /// Interference carrier, Hz.
    pub f_u: f64,
    /// Reference carrier, Hz.
    pub f_r: f64,
    /// Nominal down-conversion oscillator frequency, Hz.
    pub f_t_nominal: f64,
    pub osc_error_bound: f64,
    /// Per-component position error bound, meters.
    pub e_p: f64,
    /// Per-component velocity error bound, m/s.
    pub e_v: f64,
    pub gateway: GeodeticPoint,
    pub interferer_true: GeodeticPoint,
    pub reference: GeodeticPoint,
    pub mode: Mode,
    pub method: Method,
    pub seed: u64,
    pub trials: usize,
    /// Number of location-related equations per solve.
    pub equations: usize,
    /// Draw independent downlink states instead of reusing the uplink state.
    pub split_ul_dl: bool,
    /// Time between sampling and forwarding when `split_ul_dl` is set, seconds.
    pub forward_delay_s: f64,
    /// Bound of an additive uniform frequency-estimation error, Hz.
    pub frequency_noise_hz: f64,
    /// Candidate reference sites for iterative refinement.
    pub reference_pool: Vec<GeodeticPoint>,
    pub rounds: usize,
    pub earth: EarthModel,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::meo()
    }
}

impl Scenario {
    /// Default MEO pass, carriers, sites and error bounds.
    pub fn meo() -> Self {
        Self {
            orbit_kind: OrbitKind::Meo,
            altitude: MEO_ALTITUDE_M,
            speed: MEO_SPEED_MPS,
            n_samples: 40,
            f_u: 30.0e9,
            f_r: 29.0e9,
            f_t_nominal: 18.0e9,
            osc_error_bound: 50.0,
            e_p: 10.0,
            e_v: 0.1,
            gateway: GeodeticPoint::new(5.0, 14.0, 0.0),
            interferer_true: GeodeticPoint::new(30.0, 20.0, 0.0),
            reference: GeodeticPoint::new(20.0, 20.0, 0.0),
            mode: Mode::Gateway,
            method: Method::Foa,
            seed: 0,
            trials: 500,
            equations: 6,
            split_ul_dl: false,
            forward_delay_s: 0.0,
            frequency_noise_hz: 0.0,
            reference_pool: Vec::new(),
            rounds: 1,
            earth: EarthModel::default(),
        }
    }

    /// The MEO parameters on a GEO station-keeping circle.
    pub fn geo() -> Self {
        Self { orbit_kind: OrbitKind::Geo, altitude: GEO_ALTITUDE_M, speed: GEO_SPEED_MPS, ..Self::meo() }
    }

    /// Same scenario with every error source switched off.
    pub fn without_errors(mut self) -> Self {
        self.e_p = 0.0;
        self.e_v = 0.0;
        self.osc_error_bound = 0.0;
        self.frequency_noise_hz = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.f_u == self.f_r {
            return bad("reference frequency must differ from the interference frequency".into());
        }
        if self.n_samples < 2 {
            return bad(format!("n_samples must be at least 2, got {}", self.n_samples));
        }
        if self.equations < 2 {
            return bad(format!("equations must be at least 2, got {}", self.equations));
        }
        if !(self.altitude > 0.0 && self.altitude.is_finite()) {
            return bad(format!("altitude must be positive, got {} m", self.altitude));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be non-negative, got {} m/s", self.speed));
        }
        for (name, v) in [
            ("uplink_freq_ghz", self.f_u),
            ("reference_freq_ghz", self.f_r),
            ("oscillator_freq_ghz", self.f_t_nominal),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if self.f_u <= 0.0 || self.f_r <= 0.0 {
            return bad("carrier frequencies must be positive".into());
        }
        if self.f_t_nominal >= self.f_u || self.f_t_nominal >= self.f_r {
            return bad("oscillator frequency must be below both carriers".into());
        }
        for (name, v) in [
            ("oscillator_error_hz", self.osc_error_bound),
            ("position_error_m", self.e_p),
            ("velocity_error_mps", self.e_v),
            ("frequency_noise_hz", self.frequency_noise_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative bound, got {v}"));
            }
        }
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        for p in [&self.gateway, &self.interferer_true, &self.reference].into_iter().chain(&self.reference_pool) {
            p.validate(&self.earth)?;
        }
        Ok(())
    }

    pub fn gateway_ecef(&self) -> Result<Vec3> {
        geodetic_to_ecef(self.gateway, &self.earth)
    }

    pub fn interferer_ecef(&self) -> Result<Vec3> {
        geodetic_to_ecef(self.interferer_true, &self.earth)
    }

    pub fn reference_ecef(&self) -> Result<Vec3> {
        geodetic_to_ecef(self.reference, &self.earth)
    }

    /// Applies one `key = value` setting. An empty value restores the default.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        let default = Scenario::for_orbit(self.orbit_kind);
        let empty = value.is_empty();
        match key {
            "orbit_kind" => {
                if !empty {
                    self.orbit_kind = value.parse()?;
                }
            }
            "altitude_km" => self.altitude = if empty { default.altitude } else { parse_f64(value)? * 1e3 },
            "speed_mps" => self.speed = if empty { default.speed } else { parse_f64(value)? },
            "n_samples" => self.n_samples = if empty { default.n_samples } else { parse_usize(value)? },
            "uplink_freq_ghz" => self.f_u = if empty { default.f_u } else { parse_f64(value)? * 1e9 },
            "reference_freq_ghz" => self.f_r = if empty { default.f_r } else { parse_f64(value)? * 1e9 },
            "oscillator_freq_ghz" => {
                self.f_t_nominal = if empty { default.f_t_nominal } else { parse_f64(value)? * 1e9 }
            }
            "oscillator_error_hz" => {
                self.osc_error_bound = if empty { default.osc_error_bound } else { parse_f64(value)? }
            }
            "position_error_m" => self.e_p = if empty { default.e_p } else { parse_f64(value)? },
            "velocity_error_mps" => self.e_v = if empty { default.e_v } else { parse_f64(value)? },
            "gateway" => self.gateway = if empty { default.gateway } else { parse_point(value)? },
            "reference" => self.reference = if empty { default.reference } else { parse_point(value)? },
            "interferer" => {
                self.interferer_true = if empty { default.interferer_true } else { parse_point(value)? }
            }
            "mode" => self.mode = if empty { default.mode } else { value.parse()? },
            "method" => self.method = if empty { default.method } else { value.parse()? },
            "seed" => self.seed = if empty { 0 } else { value.parse().map_err(|_| format!("invalid seed `{value}`"))? },
            "trials" => self.trials = if empty { default.trials } else { parse_usize(value)? },
            "equations" => self.equations = if empty { default.equations } else { parse_usize(value)? },
            "split_ul_dl" => self.split_ul_dl = if empty { false } else { parse_bool(value)? },
            "forward_delay_s" => self.forward_delay_s = if empty { 0.0 } else { parse_f64(value)? },
            "frequency_noise_hz" => self.frequency_noise_hz = if empty { 0.0 } else { parse_f64(value)? },
            "reference_pool" => {
                self.reference_pool = if empty {
                    Vec::new()
                } else {
                    value.split(';').filter(|s| !s.trim().is_empty()).map(parse_point).collect::<Result<_, _>>()?
                }
            }
            "rounds" => self.rounds = if empty { 1 } else { parse_usize(value)? },
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Defaults for an orbit regime. LEO and retro-GEO have no published
    /// pass parameters, so their speed (and LEO altitude) must be configured.
    fn for_orbit(kind: OrbitKind) -> Self {
        match kind {
            OrbitKind::Geo => Self::geo(),
            OrbitKind::Meo => Self::meo(),
            OrbitKind::RetroGeo => Self {
                orbit_kind: kind,
                altitude: GEO_ALTITUDE_M,
                speed: f64::NAN,
                ..Self::meo()
            },
            OrbitKind::Leo => Self { orbit_kind: kind, altitude: f64::NAN, speed: f64::NAN, ..Self::meo() },
        }
    }

    /// Builds a scenario from ordered `key = value` entries. Later entries win.
    pub fn from_entries(entries: &[Entry], source: &str) -> Result<Self> {
        let parse_err = |e: &Entry, message: String| Error::Parse { path: source.to_string(), line: e.line, message };

        // orbit_kind selects the defaults every other key starts from
        let mut kind = OrbitKind::Meo;
        for e in entries.iter().filter(|e| e.key == "orbit_kind" && !e.value.trim().is_empty()) {
            kind = e.value.parse().map_err(|m| parse_err(e, m))?;
        }
        let mut s = Scenario::for_orbit(kind);
        for e in entries {
            s.set(&e.key, &e.value).map_err(|m| parse_err(e, format!("{}: {m}", e.key)))?;
        }
        for (key, value) in [("altitude_km", s.altitude), ("speed_mps", s.speed)] {
            if value.is_nan() {
                return Err(Error::Config(format!(
                    "{source}: missing required key `{key}` for orbit_kind = {}",
                    s.orbit_kind
                )));
            }
        }
        s.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{source}: {m}")),
            other => other,
        })?;
        Ok(s)
    }
}

/// One `key = value` line of a scenario file or command-line override.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based source line; 0 for overrides.
    pub line: usize,
}

/// Splits scenario text into entries, dropping blank lines and `#` comments.
pub fn parse_entries(text: &str, source: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse { path: source.to_string(), line: i + 1, message: "empty key".into() });
        }
        out.push(Entry { key: key.to_string(), value: value.trim().to_string(), line: i + 1 });
    }
    Ok(out)
}

pub fn parse_scenario(text: &str, source: &str) -> Result<Scenario> {
    Scenario::from_entries(&parse_entries(text, source)?, source)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: name.clone(), source })?;
    parse_scenario(&text, &name)
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.trim().parse().map_err(|_| format!("invalid number `{v}`"))?;
    if !x.is_finite() {
        return Err(format!("non-finite number `{v}`"));
    }
    Ok(x)
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.trim().parse().map_err(|_| format!("invalid count `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{v}`")),
    }
}

/// Parses `lon,lat,alt_m`.
pub fn parse_point(v: &str) -> std::result::Result<GeodeticPoint, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected `lon,lat,alt_m`, found `{}`", v.trim()));
    }
    let p = GeodeticPoint::new(parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?);
    p.validate(&EarthModel::default()).map_err(|e| e.to_string())?;
    Ok(p)
}

/// Error-free satellite states along the pass.
///
/// Linear passes run east along the equator from longitude 0 in half-degree
/// steps; retro-GEO flies the same path westward. GEO drifts around a 50 km
/// circle in the plane tangent to the orbit sphere above (0°, 0°).
pub fn build_trajectory(s: &Scenario) -> Result<Vec<SatelliteSample>> {
    if !(s.altitude > 0.0) {
        return Err(Error::Config(format!("altitude must be positive, got {} m", s.altitude)));
    }
    if s.n_samples < 2 {
        return Err(Error::Config(format!("n_samples must be at least 2, got {}", s.n_samples)));
    }
    let earth = &s.earth;
    let mut out = Vec::with_capacity(s.n_samples);
    match s.orbit_kind {
        OrbitKind::Leo | OrbitKind::Meo | OrbitKind::RetroGeo => {
            let sign = if s.orbit_kind == OrbitKind::RetroGeo { -1.0 } else { 1.0 };
            for i in 0..s.n_samples {
                let lon = i as f64 * LINEAR_PASS_STEP_DEG;
                let pos = geodetic_to_ecef(GeodeticPoint::new(lon, 0.0, s.altitude), earth)?;
                let (slon, clon) = lon.to_radians().sin_cos();
                let east = Vec3::new(-slon, clon, 0.0);
                out.push(SatelliteSample::exact(pos, east * (sign * s.speed), s.f_t_nominal));
            }
        }
        OrbitKind::Geo => {
            let center = Vec3::new(earth.radius + s.altitude, 0.0, 0.0);
            let (e1, e2) = (Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
            for i in 0..s.n_samples {
                let theta = std::f64::consts::TAU * i as f64 / s.n_samples as f64;
                let (st, ct) = theta.sin_cos();
                let pos = center + (e1 * ct + e2 * st) * GEO_CIRCLE_RADIUS_M;
                let vel = (e1 * -st + e2 * ct) * s.speed;
                out.push(SatelliteSample::exact(pos, vel, s.f_t_nominal));
            }
        }
    }
    if s.split_ul_dl {
        for smp in &mut out {
            smp.pos_dl_true = smp.pos_ul_true + smp.vel_ul_true * s.forward_delay_s;
            smp.pos_dl_err = smp.pos_dl_true;
        }
    }
    Ok(out)
}

/// Error bounds applied by [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    pub position_m: f64,
    pub velocity_mps: f64,
    pub oscillator_hz: f64,
}

impl ErrorBounds {
    pub fn of(s: &Scenario) -> Self {
        Self { position_m: s.e_p, velocity_mps: s.e_v, oscillator_hz: s.osc_error_bound }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    // a fixed number of draws regardless of the bound keeps streams aligned
    bound * (2.0 * rng.gen::<f64>() - 1.0)
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, v: Vec3, bound: f64) -> Vec3 {
    let dx = uniform(rng, bound);
    let dy = uniform(rng, bound);
    let dz = uniform(rng, bound);
    v + Vec3::new(dx, dy, dz)
}

/// Draws the erroneous ephemeris and the true oscillator frequency for one
/// sample. With `split` unset the downlink state shares the uplink errors.
pub fn perturb<R: Rng + ?Sized>(
    truth: &SatelliteSample,
    bounds: ErrorBounds,
    f_t_nominal: f64,
    split: bool,
    rng: &mut R,
) -> SatelliteSample {
    let mut out = *truth;
    out.pos_ul_err = jitter(rng, truth.pos_ul_true, bounds.position_m);
    out.vel_ul_err = jitter(rng, truth.vel_ul_true, bounds.velocity_mps);
    if split {
        out.pos_dl_err = jitter(rng, truth.pos_dl_true, bounds.position_m);
        out.vel_dl_err = jitter(rng, truth.vel_dl_true, bounds.velocity_mps);
    } else {
        out.pos_dl_err = out.pos_ul_err + (truth.pos_dl_true - truth.pos_ul_true);
        out.vel_dl_err = out.vel_ul_err + (truth.vel_dl_true - truth.vel_ul_true);
    }
    out.f_t_true = f_t_nominal + uniform(rng, bounds.oscillator_hz);
    out.f_t_assumed = f_t_nominal;
    out
}

/// Builds the pass and perturbs every sample with the scenario's bounds.
pub fn perturbed_trajectory<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<Vec<SatelliteSample>> {
    let bounds = ErrorBounds::of(s);
    Ok(build_trajectory(s)?
        .iter()
        .map(|t| perturb(t, bounds, s.f_t_nominal, s.split_ul_dl, rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::ecef_to_geodetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn meo_pass_layout() {
        let s = Scenario::meo();
        let traj = build_trajectory(&s).unwrap();
        assert_eq!(traj.len(), 40);
        let first = ecef_to_geodetic(traj[0].pos_ul_true, &s.earth).unwrap();
        assert!(first.longitude.abs() < 1e-12 && first.latitude.abs() < 1e-12);
        assert!((first.altitude - 23_000_000.0).abs() < 1e-6);
        let last = ecef_to_geodetic(traj[39].pos_ul_true, &s.earth).unwrap();
        assert!((last.longitude - 19.5).abs() < 1e-9);
        assert!(traj[0].vel_ul_true.y > 0.0);
        for t in &traj {
            assert!((t.vel_ul_true.norm() - 1544.0).abs() < 1e-9);
            // tangent to the circular path
            assert!(t.vel_ul_true.dot(t.pos_ul_true).abs() < 1e-3);
            assert_eq!(t.pos_dl_true, t.pos_ul_true);
            assert_eq!(t.vel_dl_true, t.vel_ul_true);
        }
    }

    #[test]
    fn linear_spacing_matches_arc() {
        for kind in [OrbitKind::Leo, OrbitKind::Meo, OrbitKind::RetroGeo] {
            let s = Scenario { orbit_kind: kind, altitude: 1.2e6, speed: 7000.0, ..Scenario::meo() };
            let traj = build_trajectory(&s).unwrap();
            let r = s.earth.radius + s.altitude;
            // chord of a half-degree arc
            let chord = 2.0 * r * (0.25f64.to_radians()).sin();
            for w in traj.windows(2) {
                let d = w[1].pos_ul_true.distance(w[0].pos_ul_true);
                assert!(((d - chord) / chord).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn retro_geo_flies_west() {
        let s = Scenario { orbit_kind: OrbitKind::RetroGeo, altitude: GEO_ALTITUDE_M, speed: 6000.0, ..Scenario::meo() };
        let traj = build_trajectory(&s).unwrap();
        assert!(traj[0].vel_ul_true.y < 0.0);
        assert!((traj[0].vel_ul_true.norm() - 6000.0).abs() < 1e-9);
    }

    #[test]
    fn geo_circle() {
        let s = Scenario::geo();
        let traj = build_trajectory(&s).unwrap();
        assert_eq!(traj.len(), 40);
        let center = Vec3::new(s.earth.radius + GEO_ALTITUDE_M, 0.0, 0.0);
        let chord = 2.0 * GEO_CIRCLE_RADIUS_M * (std::f64::consts::PI / 40.0).sin();
        for (i, t) in traj.iter().enumerate() {
            assert!((t.pos_ul_true.distance(center) - GEO_CIRCLE_RADIUS_M).abs() < 1e-6);
            assert!((t.vel_ul_true.norm() - 3.63).abs() < 1e-12);
            assert!(t.vel_ul_true.dot(t.pos_ul_true - center).abs() < 1e-6);
            let next = &traj[(i + 1) % 40];
            let d = next.pos_ul_true.distance(t.pos_ul_true);
            assert!(((d - chord) / chord).abs() < 1e-6);
        }
    }

    #[test]
    fn trajectory_rejects_bad_config() {
        let s = Scenario { altitude: 0.0, ..Scenario::meo() };
        assert!(build_trajectory(&s).is_err());
        let s = Scenario { n_samples: 1, ..Scenario::meo() };
        assert!(build_trajectory(&s).is_err());
        let s = Scenario { n_samples: 7, ..Scenario::meo() };
        assert_eq!(build_trajectory(&s).unwrap().len(), 7);
    }

    #[test]
    fn zero_bounds_are_identity() {
        let s = Scenario::meo().without_errors();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in build_trajectory(&s).unwrap() {
            let p = perturb(&t, ErrorBounds::of(&s), s.f_t_nominal, false, &mut rng);
            assert_eq!(p.pos_ul_err, t.pos_ul_true);
            assert_eq!(p.vel_ul_err, t.vel_ul_true);
            assert_eq!(p.pos_dl_err, t.pos_dl_true);
            assert_eq!(p.vel_dl_err, t.vel_dl_true);
            assert_eq!(p.f_t_true, s.f_t_nominal);
            assert_eq!(p.f_t_assumed, s.f_t_nominal);
        }
    }

    #[test]
    fn oscillator_within_bound() {
        let s = Scenario::meo();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            for p in perturbed_trajectory(&s, &mut rng).unwrap() {
                assert!((p.f_t_true - 18.0e9).abs() <= 50.0);
                assert_eq!(p.f_t_assumed, 18.0e9);
            }
        }
    }

    #[test]
    fn perturbation_deterministic() {
        let s = Scenario::meo();
        let a = perturbed_trajectory(&s, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = perturbed_trajectory(&s, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_error_statistics() {
        let truth = SatelliteSample::exact(Vec3::new(3.0e7, 0.0, 0.0), Vec3::new(0.0, 1544.0, 0.0), 18e9);
        let bounds = ErrorBounds { position_m: 10.0, velocity_mps: 0.1, oscillator_hz: 50.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut sums = [0.0f64; 7];
        for _ in 0..n {
            let p = perturb(&truth, bounds, 18e9, false, &mut rng);
            let dp = p.pos_ul_err - truth.pos_ul_true;
            let dv = p.vel_ul_err - truth.vel_ul_true;
            let df = p.f_t_true - 18e9;
            let comps = [dp.x, dp.y, dp.z, dv.x, dv.y, dv.z, df];
            let bnd = [10.0, 10.0, 10.0, 0.1, 0.1, 0.1, 50.0];
            for (i, (c, b)) in comps.iter().zip(bnd).enumerate() {
                assert!(c.abs() <= b);
                sums[i] += c / b;
            }
        }
        // standardized uniform on [-1, 1] has variance 1/3
        let sigma = (1.0 / 3.0 / n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64).abs() < 3.0 * sigma, "mean {} exceeds 3 sigma", s / n as f64);
        }
    }

    #[test]
    fn split_draws_independent_downlink() {
        let truth = SatelliteSample::exact(Vec3::new(3.0e7, 0.0, 0.0), Vec3::new(0.0, 1544.0, 0.0), 18e9);
        let bounds = ErrorBounds { position_m: 10.0, velocity_mps: 0.1, oscillator_hz: 50.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shared = perturb(&truth, bounds, 18e9, false, &mut rng);
        assert_eq!(shared.pos_dl_err, shared.pos_ul_err);
        let split = perturb(&truth, bounds, 18e9, true, &mut rng);
        assert_ne!(split.pos_dl_err, split.pos_ul_err);
    }

    #[test]
    fn parses_standard_keys() {
        let text = "# standard pass\norbit_kind = meo\nuplink_freq_ghz = 30\ninterferer = 30,20,0  # unknown\nseed =\n";
        let s = parse_scenario(text, "t.cfg").unwrap();
        assert_eq!(s.f_u, 3.0e10);
        assert_eq!(s.interferer_true, GeodeticPoint::new(30.0, 20.0, 0.0));
        assert_eq!(s.seed, 0);
        assert_eq!(s, Scenario::meo());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_scenario("orbit_kind = meo\nspeed_mps = fast\n", "a.cfg") {
            Err(Error::Parse { line, path, message }) => {
                assert_eq!(line, 2);
                assert_eq!(path, "a.cfg");
                assert!(message.contains("fast"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_scenario("\n\norbit_kind = heo\n", "b.cfg") {
            Err(Error::Parse { line: 3, message, .. }) => assert!(message.contains("heo")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_scenario("bogus_key = 1\n", "c.cfg"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_scenario("no equals sign\n", "d.cfg"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_scenario("gateway = 5,14\n", "e.cfg"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn orbit_specific_requirements() {
        let err = parse_scenario("orbit_kind = retro_geo\n", "r.cfg").unwrap_err();
        assert!(err.to_string().contains("speed_mps"), "{err}");
        let s = parse_scenario("orbit_kind = retro_geo\nspeed_mps = 6000\n", "r.cfg").unwrap();
        assert_eq!(s.altitude, GEO_ALTITUDE_M);
        let err = parse_scenario("orbit_kind = leo\nspeed_mps = 7500\n", "l.cfg").unwrap_err();
        assert!(err.to_string().contains("altitude_km"));
        let s = parse_scenario("speed_mps = 100\norbit_kind = geo\n", "g.cfg").unwrap();
        assert_eq!(s.speed, 100.0);
        assert_eq!(s.altitude, GEO_ALTITUDE_M);
        assert!(parse_scenario("reference_freq_ghz = 30\n", "x.cfg").is_err());
    }

    #[test]
    fn pool_and_flags() {
        let s = parse_scenario("reference_pool = 20,20,0; 30,20,0\nrounds = 3\nsplit_ul_dl = yes\n", "p").unwrap();
        assert_eq!(s.reference_pool.len(), 2);
        assert_eq!(s.rounds, 3);
        assert!(s.split_ul_dl);
    }
}
