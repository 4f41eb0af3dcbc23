//! Forward model of the received interference and reference frequencies.
//!
//! Observed frequencies are carried as an offset from a known nominal
//! carrier: `f_ug = interference_carrier + interference_offset`. At Ka band
//! an absolute f64 only resolves ~2 µHz, while the offsets (Doppler plus
//! oscillator drift, a few hundred kHz at most) keep ~1e-11 Hz resolution.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geodesy::{unit_vector_between, EarthModel, Vec3};
use crate::scenario::{perturbed_trajectory, Mode, SatelliteSample, Scenario};

/// Frequency received by a platform moving with `v` along unit line of sight `k`
/// (pointing from the receiver toward the transmitter).
pub fn uplink_frequency(f_emit: f64, v: Vec3, k: Vec3, c: f64) -> f64 {
    f_emit * (1.0 + v.dot(k) / c)
}

pub fn downconvert(f: f64, f_t: f64) -> Result<f64> {
    let out = f - f_t;
    if !(out > 0.0) {
        return Err(Error::Domain(format!("down-conversion of {f} Hz by {f_t} Hz is not positive")));
    }
    Ok(out)
}

/// Line-of-sight velocity ratio `vᵀk / c`.
pub fn doppler_ratio(v: Vec3, k: Vec3, c: f64) -> f64 {
    v.dot(k) / c
}

/// Uplink and downlink Doppler ratios for one carrier through one satellite state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDoppler {
    pub uplink: f64,
    pub downlink: f64,
}

impl LinkDoppler {
    pub fn new(emitter: Vec3, pos_ul: Vec3, vel_ul: Vec3, pos_dl: Vec3, vel_dl: Vec3, gateway: Vec3, c: f64) -> Result<Self> {
        let k_es = unit_vector_between(pos_ul, emitter)?;
        let k_sg = unit_vector_between(pos_dl, gateway)?;
        Ok(Self { uplink: doppler_ratio(vel_ul, k_es, c), downlink: doppler_ratio(vel_dl, k_sg, c) })
    }

    pub fn true_of(emitter: Vec3, s: &SatelliteSample, gateway: Vec3, c: f64) -> Result<Self> {
        Self::new(emitter, s.pos_ul_true, s.vel_ul_true, s.pos_dl_true, s.vel_dl_true, gateway, c)
    }

    pub fn assumed_of(emitter: Vec3, s: &SatelliteSample, gateway: Vec3, c: f64) -> Result<Self> {
        Self::new(emitter, s.pos_ul_err, s.vel_ul_err, s.pos_dl_err, s.vel_dl_err, gateway, c)
    }
}

/// Gateway frequency minus `f_emit − f_t`: the uplink shift, the downlink
/// shift of the down-converted carrier, and their product term.
pub fn gateway_shift(f_emit: f64, f_t: f64, d: LinkDoppler) -> f64 {
    let f_dl = f_emit - f_t;
    f_emit * d.uplink + f_dl * d.downlink + f_emit * d.uplink * d.downlink
}

/// Second-order uplink × downlink term of the gateway frequency.
pub fn cross_term(f_emit: f64, d: LinkDoppler) -> f64 {
    f_emit * d.uplink * d.downlink
}

/// Gateway-received frequency in product form, from the true satellite state.
pub fn gateway_frequency(f_emit: f64, emitter: Vec3, sample: &SatelliteSample, gateway: Vec3, earth: &EarthModel) -> Result<f64> {
    let d = LinkDoppler::true_of(emitter, sample, gateway, earth.c)?;
    Ok((f_emit + f_emit * d.uplink - sample.f_t_true) * (1.0 + d.downlink))
}

/// Same as [`gateway_frequency`], summed term by term.
pub fn gateway_frequency_expanded(f_emit: f64, emitter: Vec3, sample: &SatelliteSample, gateway: Vec3, earth: &EarthModel) -> Result<f64> {
    let d = LinkDoppler::true_of(emitter, sample, gateway, earth.c)?;
    let f_dl = f_emit - sample.f_t_true;
    Ok(f_dl + f_emit * d.uplink + f_dl * d.downlink + f_emit * d.uplink * d.downlink)
}

/// One epoch as seen by the localizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub mode: Mode,
    /// Nominal interference carrier at the point of measurement, Hz.
    pub interference_carrier: f64,
    /// Observed interference frequency minus `interference_carrier`, Hz.
    pub interference_offset: f64,
    pub reference_carrier: f64,
    pub reference_offset: f64,
    pub sample: SatelliteSample,
}

impl Measurement {
    /// Observed interference frequency (`f_{n_u,g}`, or the satellite-side value on board).
    pub fn f_ug(&self) -> f64 {
        self.interference_carrier + self.interference_offset
    }

    pub fn f_rg(&self) -> f64 {
        self.reference_carrier + self.reference_offset
    }
}

/// Site positions shared by every epoch of a pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sites {
    pub gateway: Vec3,
    pub interferer: Vec3,
    pub reference: Vec3,
}

impl Sites {
    pub fn of(s: &Scenario) -> Result<Self> {
        Ok(Self { gateway: s.gateway_ecef()?, interferer: s.interferer_ecef()?, reference: s.reference_ecef()? })
    }
}

/// Noiseless observation of one perturbed sample.
pub fn observe(s: &Scenario, sites: &Sites, sample: &SatelliteSample) -> Result<Measurement> {
    let c = s.earth.c;
    match s.mode {
        Mode::Gateway => {
            let du = LinkDoppler::true_of(sites.interferer, sample, sites.gateway, c)?;
            let dr = LinkDoppler::true_of(sites.reference, sample, sites.gateway, c)?;
            let drift = s.f_t_nominal - sample.f_t_true;
            Ok(Measurement {
                mode: Mode::Gateway,
                interference_carrier: s.f_u - s.f_t_nominal,
                interference_offset: drift + gateway_shift(s.f_u, sample.f_t_true, du),
                reference_carrier: s.f_r - s.f_t_nominal,
                reference_offset: drift + gateway_shift(s.f_r, sample.f_t_true, dr),
                sample: *sample,
            })
        }
        Mode::Onboard => {
            let ku = unit_vector_between(sample.pos_ul_true, sites.interferer)?;
            let kr = unit_vector_between(sample.pos_ul_true, sites.reference)?;
            Ok(Measurement {
                mode: Mode::Onboard,
                interference_carrier: s.f_u,
                interference_offset: s.f_u * doppler_ratio(sample.vel_ul_true, ku, c),
                reference_carrier: s.f_r,
                reference_offset: s.f_r * doppler_ratio(sample.vel_ul_true, kr, c),
                sample: *sample,
            })
        }
    }
}

/// Observes every sample, adding the optional frequency-estimation error.
pub fn observe_all<R: Rng + ?Sized>(
    s: &Scenario,
    sites: &Sites,
    samples: &[SatelliteSample],
    rng: &mut R,
) -> Result<Vec<Measurement>> {
    samples
        .iter()
        .map(|smp| {
            let mut m = observe(s, sites, smp)?;
            let nu = s.frequency_noise_hz * (2.0 * rng.gen::<f64>() - 1.0);
            let nr = s.frequency_noise_hz * (2.0 * rng.gen::<f64>() - 1.0);
            m.interference_offset += nu;
            m.reference_offset += nr;
            Ok(m)
        })
        .collect()
}

/// Perturbs the pass and observes interference and reference at every epoch.
pub fn synthesize<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<Vec<Measurement>> {
    s.validate()?;
    let sites = Sites::of(s)?;
    let samples = perturbed_trajectory(s, rng)?;
    observe_all(s, &sites, &samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::SPEED_OF_LIGHT;
    use crate::scenario::build_trajectory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uplink_cases() {
        let k = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(uplink_frequency(30e9, Vec3::ZERO, k, SPEED_OF_LIGHT), 30e9);
        assert_eq!(uplink_frequency(30e9, Vec3::new(0.0, 1544.0, 0.0), k, SPEED_OF_LIGHT), 30e9);
        let shift = uplink_frequency(30e9, Vec3::new(1544.0, 0.0, 0.0), k, SPEED_OF_LIGHT) - 30e9;
        let expected = 30e9 * 1544.0 / 299_792_458.0;
        assert!((shift - expected).abs() < 1e-4);
        assert!((shift - 1.54507e5).abs() < 1.0);
        // closing velocity raises, opening lowers
        assert!(uplink_frequency(30e9, Vec3::new(-1.0, 0.0, 0.0), k, SPEED_OF_LIGHT) < 30e9);
    }

    #[test]
    fn downconvert_cases() {
        assert_eq!(downconvert(30e9, 18e9).unwrap(), 12e9);
        assert_eq!(downconvert(12e9, 0.0).unwrap(), 12e9);
        assert_eq!(downconvert(18e9 + 1.0, 18e9).unwrap(), 1.0);
        assert!(downconvert(18e9, 18e9).is_err());
        assert!(downconvert(1e9, 18e9).is_err());
    }

    fn geometry() -> (Scenario, Sites) {
        let s = Scenario::meo();
        let sites = Sites::of(&s).unwrap();
        (s, sites)
    }

    #[test]
    fn static_case_is_pure_downconversion() {
        let (s, sites) = geometry();
        let smp = SatelliteSample::exact(Vec3::new(3e7, 1e6, 0.0), Vec3::ZERO, 18e9);
        let f = gateway_frequency(30e9, sites.interferer, &smp, sites.gateway, &s.earth).unwrap();
        assert_eq!(f, 12e9);
    }

    #[test]
    fn product_and_expansion_agree() {
        let (s, sites) = geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for smp in perturbed_trajectory(&s, &mut rng).unwrap() {
            let a = gateway_frequency(30e9, sites.interferer, &smp, sites.gateway, &s.earth).unwrap();
            let b = gateway_frequency_expanded(30e9, sites.interferer, &smp, sites.gateway, &s.earth).unwrap();
            assert!(((a - b) / a).abs() < 1e-9);
            let d = LinkDoppler::true_of(sites.interferer, &smp, sites.gateway, s.earth.c).unwrap();
            let c = (30e9 - smp.f_t_true) + gateway_shift(30e9, smp.f_t_true, d);
            assert!(((a - c) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_term_scales_with_velocity() {
        let geo = Scenario::geo();
        let sites = Sites::of(&geo).unwrap();
        let max_cross = |s: &Scenario| {
            build_trajectory(s)
                .unwrap()
                .iter()
                .map(|smp| cross_term(s.f_u, LinkDoppler::true_of(sites.interferer, smp, sites.gateway, s.earth.c).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let g = max_cross(&geo);
        let m = max_cross(&Scenario::meo());
        assert!(g < 1e-3, "GEO cross term {g}");
        assert!(m >= 1e4 * g, "MEO cross term {m} vs GEO {g}");
    }

    #[test]
    fn synthesize_zero_error_matches_forward_model() {
        let s = Scenario::meo().without_errors();
        let sites = Sites::of(&s).unwrap();
        let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(ms.len(), 40);
        for (m, smp) in ms.iter().zip(build_trajectory(&s).unwrap()) {
            let du = LinkDoppler::true_of(sites.interferer, &smp, sites.gateway, s.earth.c).unwrap();
            assert_eq!(m.interference_offset, gateway_shift(s.f_u, s.f_t_nominal, du));
            let direct = gateway_frequency(s.f_u, sites.interferer, &smp, sites.gateway, &s.earth).unwrap();
            assert!((m.f_ug() - direct).abs() < 1e-5);
            let direct_r = gateway_frequency(s.f_r, sites.reference, &smp, sites.gateway, &s.earth).unwrap();
            assert!((m.f_rg() - direct_r).abs() < 1e-5);
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let s = Scenario::meo();
        let a = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn measurement_band() {
        let s = Scenario::meo();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in synthesize(&s, &mut rng).unwrap() {
            let bound = s.f_u * (m.sample.vel_ul_true.norm() + m.sample.vel_dl_true.norm()) / s.earth.c * 1.01 + s.osc_error_bound;
            assert!((m.f_ug() - (s.f_u - s.f_t_nominal)).abs() <= bound);
            assert!(m.interference_offset.abs() < 1e6 && m.reference_offset.abs() < 1e6);
            assert!(m.f_ug() > 0.0 && m.f_rg() > 0.0);
        }
    }

    #[test]
    fn onboard_skips_downlink() {
        let s = Scenario { mode: Mode::Onboard, ..Scenario::meo() };
        let sites = Sites::of(&s).unwrap();
        let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for m in &ms {
            let k = unit_vector_between(m.sample.pos_ul_true, sites.interferer).unwrap();
            let expected = uplink_frequency(s.f_u, m.sample.vel_ul_true, k, s.earth.c);
            assert!((m.f_ug() - expected).abs() < 1e-5);
            assert_eq!(m.interference_carrier, s.f_u);
        }
    }

    #[test]
    fn frequency_noise_is_bounded() {
        let s = Scenario { frequency_noise_hz: 2.0, ..Scenario::meo().without_errors() };
        let sites = Sites::of(&s).unwrap();
        let samples = build_trajectory(&s).unwrap();
        let noisy = observe_all(&s, &sites, &samples, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        for (m, smp) in noisy.iter().zip(&samples) {
            let clean = observe(&s, &sites, smp).unwrap();
            let d = m.interference_offset - clean.interference_offset;
            assert!(d.abs() <= 2.0);
        }
    }
}
