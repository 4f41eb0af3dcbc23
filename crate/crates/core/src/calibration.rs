//! Reference-signal calibration of the interference frequency and its
//! reduction to the location-dependent Doppler terms.

use crate::error::{Error, Result};
use crate::geodesy::{unit_vector_between, EarthModel, Vec3};
use crate::measurement::{doppler_ratio, gateway_shift, LinkDoppler, Measurement};
use crate::scenario::{Mode, SatelliteSample, Scenario};

/// Known quantities the gateway uses to calibrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationContext {
    pub f_u: f64,
    pub f_r: f64,
    pub f_t_nominal: f64,
    pub gateway: Vec3,
    pub reference: Vec3,
    pub mode: Mode,
    pub earth: EarthModel,
}

impl CalibrationContext {
    pub fn of(s: &Scenario) -> Result<Self> {
        Ok(Self {
            f_u: s.f_u,
            f_r: s.f_r,
            f_t_nominal: s.f_t_nominal,
            gateway: s.gateway_ecef()?,
            reference: s.reference_ecef()?,
            mode: s.mode,
            earth: s.earth,
        })
    }

    pub fn with_reference(mut self, reference: Vec3) -> Self {
        self.reference = reference;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedObservation {
    /// Frequency mismatch transferred from the reference, Hz.
    pub delta: f64,
    /// Observed interference frequency minus `delta`, Hz.
    pub f_calibrated: f64,
    /// Calibrated frequency with every location-independent term removed, Hz.
    pub f_reduced: f64,
    pub sample: SatelliteSample,
}

/// Reference frequency the gateway expects from its (erroneous) ephemeris,
/// as an offset from `f_r − f_t_assumed`.
pub fn expected_reference_shift(sample: &SatelliteSample, reference: Vec3, gateway: Vec3, f_r: f64, c: f64) -> Result<f64> {
    let d = LinkDoppler::assumed_of(reference, sample, gateway, c)?;
    Ok(gateway_shift(f_r, sample.f_t_assumed, d))
}

pub fn expected_reference_frequency(
    sample: &SatelliteSample,
    reference: Vec3,
    gateway: Vec3,
    f_r: f64,
    earth: &EarthModel,
) -> Result<f64> {
    Ok((f_r - sample.f_t_assumed) + expected_reference_shift(sample, reference, gateway, f_r, earth.c)?)
}

/// Reference mismatch scaled to the interference carrier.
pub fn mismatch(f_rg: f64, f_rg_exp: f64, f_u: f64, f_r: f64) -> Result<f64> {
    if f_r == 0.0 || !f_r.is_finite() {
        return Err(Error::Domain(format!("reference frequency must be non-zero, got {f_r}")));
    }
    Ok(f_u / f_r * (f_rg - f_rg_exp))
}

pub fn calibrate_and_reduce(m: &Measurement, ctx: &CalibrationContext) -> Result<CalibratedObservation> {
    let s = &m.sample;
    let c = ctx.earth.c;
    let (delta, f_reduced) = match m.mode {
        Mode::Gateway => {
            // offsets are relative to carriers built from f_t_nominal
            let assumed_drift = s.f_t_assumed - ctx.f_t_nominal;
            let expected = expected_reference_shift(s, ctx.reference, ctx.gateway, ctx.f_r, c)?;
            let delta = mismatch(m.reference_offset + assumed_drift, expected, ctx.f_u, ctx.f_r)?;
            let k_sg = unit_vector_between(s.pos_dl_err, ctx.gateway)?;
            let f_dl = ctx.f_u - s.f_t_assumed;
            let reduced = m.interference_offset - delta + assumed_drift - f_dl * doppler_ratio(s.vel_dl_err, k_sg, c);
            (delta, reduced)
        }
        Mode::Onboard => {
            let k_rs = unit_vector_between(s.pos_ul_err, ctx.reference)?;
            let expected = ctx.f_r * doppler_ratio(s.vel_ul_err, k_rs, c);
            let delta = mismatch(m.reference_offset, expected, ctx.f_u, ctx.f_r)?;
            (delta, m.interference_offset - delta)
        }
    };
    Ok(CalibratedObservation { delta, f_calibrated: m.f_ug() - delta, f_reduced, sample: *s })
}

pub fn calibrate_all(ms: &[Measurement], ctx: &CalibrationContext) -> Result<Vec<CalibratedObservation>> {
    ms.iter().map(|m| calibrate_and_reduce(m, ctx)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{gateway_frequency, synthesize, Sites};
    use crate::scenario::build_trajectory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Uplink Doppler terms left after reduction, at the true emitter.
    fn uplink_terms(f_u: f64, smp: &SatelliteSample, sites: &Sites, c: f64, mode: Mode) -> f64 {
        let k = unit_vector_between(smp.pos_ul_true, sites.interferer).unwrap();
        let b_ul = smp.vel_ul_true.dot(k) / c;
        match mode {
            Mode::Gateway => {
                let k_sg = unit_vector_between(smp.pos_dl_true, sites.gateway).unwrap();
                let b_dl = smp.vel_dl_true.dot(k_sg) / c;
                f_u * b_ul + f_u * b_ul * b_dl
            }
            Mode::Onboard => f_u * b_ul,
        }
    }

    #[test]
    fn mismatch_cases() {
        assert_eq!(mismatch(5.0, 5.0, 30e9, 29e9).unwrap(), 0.0);
        assert_eq!(mismatch(12.0, 5.0, 29e9, 29e9).unwrap(), 7.0);
        let d = mismatch(29.0, 0.0, 30e9, 29e9).unwrap();
        assert!((d - 30.0).abs() < 1e-12);
        assert!(mismatch(1.0, 0.0, 30e9, 0.0).is_err());
    }

    #[test]
    fn common_offset_cancels() {
        let a = mismatch(1.1e10 + 3.0, 1.1e10, 30e9, 29e9).unwrap();
        let b = mismatch(1.1e10 + 3.0 + 250.0, 1.1e10 + 250.0, 30e9, 29e9).unwrap();
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn expected_reference_mirrors_truth() {
        let s = Scenario::meo();
        let sites = Sites::of(&s).unwrap();
        for smp in build_trajectory(&s).unwrap() {
            let truth = gateway_frequency(s.f_r, sites.reference, &smp, sites.gateway, &s.earth).unwrap();
            let exp = expected_reference_frequency(&smp, sites.reference, sites.gateway, s.f_r, &s.earth).unwrap();
            assert!((truth - exp).abs() < 1e-5);
            let stat = SatelliteSample { vel_ul_err: Vec3::ZERO, vel_dl_err: Vec3::ZERO, ..smp };
            let exp = expected_reference_frequency(&stat, sites.reference, sites.gateway, s.f_r, &s.earth).unwrap();
            assert_eq!(exp, s.f_r - s.f_t_nominal);
        }
    }

    #[test]
    fn perturbed_expected_reference_in_band() {
        let s = Scenario::meo();
        let sites = Sites::of(&s).unwrap();
        let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        for m in &ms {
            let exp = expected_reference_frequency(&m.sample, sites.reference, sites.gateway, s.f_r, &s.earth).unwrap();
            assert!(exp.is_finite());
            assert!((exp - (s.f_r - s.f_t_nominal)).abs() < 1e6);
        }
    }

    #[test]
    fn zero_error_calibration_is_exact() {
        for mode in [Mode::Gateway, Mode::Onboard] {
            let s = Scenario { mode, ..Scenario::meo().without_errors() };
            let sites = Sites::of(&s).unwrap();
            let ctx = CalibrationContext::of(&s).unwrap();
            let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            for m in &ms {
                let o = calibrate_and_reduce(m, &ctx).unwrap();
                assert_eq!(o.delta, 0.0);
                assert_eq!(o.f_calibrated, m.f_ug() - o.delta);
                let oracle = uplink_terms(s.f_u, &m.sample, &sites, s.earth.c, mode);
                assert!((o.f_reduced - oracle).abs() < 1e-9, "{mode}: {} vs {oracle}", o.f_reduced);
            }
        }
    }

    #[test]
    fn static_satellite_reduces_to_zero() {
        let s = Scenario { speed: 0.0, ..Scenario::meo().without_errors() };
        let ctx = CalibrationContext::of(&s).unwrap();
        let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for o in calibrate_all(&ms, &ctx).unwrap() {
            assert_eq!(o.delta, 0.0);
            assert_eq!(o.f_reduced, 0.0);
        }
    }

    #[test]
    fn perturbed_run_has_finite_mismatch() {
        let s = Scenario::meo();
        let ctx = CalibrationContext::of(&s).unwrap();
        let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let obs = calibrate_all(&ms, &ctx).unwrap();
        assert_eq!(obs.len(), 40);
        for (o, m) in obs.iter().zip(&ms) {
            assert!(o.delta.is_finite() && o.delta != 0.0);
            assert_eq!(o.f_calibrated, m.f_ug() - o.delta);
        }
    }

    #[test]
    fn oscillator_drift_mostly_cancels() {
        // only the oscillator is wrong: the residual is (1 − f_u/f_r) of the drift
        let s = Scenario { e_p: 0.0, e_v: 0.0, ..Scenario::meo() };
        let sites = Sites::of(&s).unwrap();
        let ctx = CalibrationContext::of(&s).unwrap();
        let ms = synthesize(&s, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        for m in &ms {
            let o = calibrate_and_reduce(m, &ctx).unwrap();
            let drift = s.f_t_nominal - m.sample.f_t_true;
            let truth = uplink_terms(s.f_u, &m.sample, &sites, s.earth.c, Mode::Gateway);
            let err = o.f_reduced - truth;
            assert!((err - drift * (1.0 - s.f_u / s.f_r)).abs() < 1e-3 * drift.abs().max(1.0), "{err} {drift}");
        }
    }
}
