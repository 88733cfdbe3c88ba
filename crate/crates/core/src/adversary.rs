//! Eve's strategies as per-cycle channel hooks, plus closed-form estimators
//! for probing and damage attacks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::{db_to_transmission, photon_number, sum_wavelength, FilterStack, OpticalPulse, Passband};
use crate::protocol::{encode_phase, AliceChoice, Basis};
use crate::upconversion::{PumpConfig, WaveguideModel};

/// Input power above which the receiver fibre fuses.
pub const FUSE_LIMIT_W: f64 = 10.0;

pub const DEFAULT_BACK_REFLECTION_DB: f64 = 40.0;

fn one() -> f64 {
    1.0
}

fn default_back_reflection() -> f64 {
    DEFAULT_BACK_REFLECTION_DB
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackStrategy {
    #[default]
    None,
    /// Intercept-resend: Eve measures in a random basis and sends a bright
    /// pair encoding her result.
    FakedState {
        peak_power_w: f64,
        #[serde(default)]
        offset_ps: f64,
        /// Pulse width; Alice's signal width when omitted.
        #[serde(default)]
        width_ps: Option<f64>,
        /// Share of cycles attacked.
        #[serde(default = "one")]
        fraction: f64,
    },
    TimeShift {
        offset_ps: f64,
    },
    /// Faked states on top of continuous light at the signal wavelength.
    BlindingPlusFaked {
        cw_power_w: f64,
        peak_power_w: f64,
        #[serde(default)]
        offset_ps: f64,
        #[serde(default)]
        width_ps: Option<f64>,
        #[serde(default = "one")]
        fraction: f64,
    },
    TrojanProbe {
        wavelength_nm: f64,
        peak_power_w: f64,
        #[serde(default)]
        width_ps: Option<f64>,
        #[serde(default)]
        offset_ps: f64,
        #[serde(default = "default_back_reflection")]
        back_reflection_db: f64,
    },
    WavelengthScan {
        wavelength_nm: f64,
        peak_power_w: f64,
        #[serde(default)]
        width_ps: Option<f64>,
        #[serde(default)]
        offset_ps: f64,
    },
    LaserDamage {
        wavelength_nm: f64,
        cw_power_w: f64,
    },
}

impl AttackStrategy {
    pub fn kind(&self) -> &'static str {
        match self {
            AttackStrategy::None => "none",
            AttackStrategy::FakedState { .. } => "faked_state",
            AttackStrategy::TimeShift { .. } => "time_shift",
            AttackStrategy::BlindingPlusFaked { .. } => "blinding_plus_faked",
            AttackStrategy::TrojanProbe { .. } => "trojan_probe",
            AttackStrategy::WavelengthScan { .. } => "wavelength_scan",
            AttackStrategy::LaserDamage { .. } => "laser_damage",
        }
    }

    /// Injected wavelength and power, for strategies that inject light at a
    /// chosen wavelength.
    pub fn injection(&self) -> Option<(f64, f64)> {
        match *self {
            AttackStrategy::TrojanProbe {
                wavelength_nm,
                peak_power_w,
                ..
            }
            | AttackStrategy::WavelengthScan {
                wavelength_nm,
                peak_power_w,
                ..
            } => Some((wavelength_nm, peak_power_w)),
            AttackStrategy::LaserDamage {
                wavelength_nm,
                cw_power_w,
            } => Some((wavelength_nm, cw_power_w)),
            _ => None,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, r: &str| Err((format!("attack.{k}"), r.to_string()));
        let power = |k: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                bad(k, "must be a finite power >= 0")
            }
        };
        let frac = |v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                bad("fraction", "must lie in [0, 1]")
            }
        };
        let width = |w: Option<f64>| match w {
            Some(w) if !(w > 0.0 && w.is_finite()) => bad("width_ps", "must be > 0"),
            _ => Ok(()),
        };
        let lambda = |v: f64| {
            if v > 200.0 && v < 3000.0 {
                Ok(())
            } else {
                bad("wavelength_nm", "must lie in (200, 3000) nm")
            }
        };
        let finite = |k: &str, v: f64| if v.is_finite() { Ok(()) } else { bad(k, "must be finite") };
        match *self {
            AttackStrategy::None => Ok(()),
            AttackStrategy::FakedState {
                peak_power_w,
                offset_ps,
                width_ps,
                fraction,
            } => {
                power("peak_power_w", peak_power_w)?;
                finite("offset_ps", offset_ps)?;
                width(width_ps)?;
                frac(fraction)
            }
            AttackStrategy::TimeShift { offset_ps } => finite("offset_ps", offset_ps),
            AttackStrategy::BlindingPlusFaked {
                cw_power_w,
                peak_power_w,
                offset_ps,
                width_ps,
                fraction,
            } => {
                power("cw_power_w", cw_power_w)?;
                power("peak_power_w", peak_power_w)?;
                finite("offset_ps", offset_ps)?;
                width(width_ps)?;
                frac(fraction)
            }
            AttackStrategy::TrojanProbe {
                wavelength_nm,
                peak_power_w,
                width_ps,
                offset_ps,
                back_reflection_db,
            } => {
                lambda(wavelength_nm)?;
                power("peak_power_w", peak_power_w)?;
                width(width_ps)?;
                finite("offset_ps", offset_ps)?;
                if back_reflection_db >= 0.0 {
                    Ok(())
                } else {
                    bad("back_reflection_db", "must be >= 0")
                }
            }
            AttackStrategy::WavelengthScan {
                wavelength_nm,
                peak_power_w,
                width_ps,
                offset_ps,
            } => {
                lambda(wavelength_nm)?;
                power("peak_power_w", peak_power_w)?;
                width(width_ps)?;
                finite("offset_ps", offset_ps)
            }
            AttackStrategy::LaserDamage {
                wavelength_nm,
                cw_power_w,
            } => {
                lambda(wavelength_nm)?;
                power("cw_power_w", cw_power_w)
            }
        }
    }
}

/// A pulse on the channel. Pulses sharing a `coherence` id come from the
/// same phase-stable source.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedPulse {
    pub pulse: OpticalPulse,
    pub coherence: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwSource {
    pub wavelength_nm: f64,
    pub power_w: f64,
}

/// What reaches Bob's receiver input in one cycle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChannelOutput {
    pub pulses: Vec<TaggedPulse>,
    pub cw: Vec<CwSource>,
    /// The fibre fused; nothing reaches the receiver from now on.
    pub fuse: bool,
    pub attacked: bool,
    pub eve_basis: Option<Basis>,
}

/// Cycle information Eve's hooks may use.
#[derive(Clone, Copy, Debug)]
pub struct AttackContext {
    pub lambda_sig_nm: f64,
    pub tau_sig_ps: f64,
    pub slot_centers_ps: [f64; 2],
    /// Alice's choice, used only to emulate Eve's measurement outcome.
    pub alice: AliceChoice,
}

const EVE_COHERENCE: u32 = 1;

fn faked_pair<R: Rng + ?Sized>(
    ctx: &AttackContext,
    peak_power_w: f64,
    offset_ps: f64,
    width_ps: Option<f64>,
    rng: &mut R,
) -> (Vec<TaggedPulse>, Basis) {
    let basis = Basis::from_index(rng.random_range(0..2usize));
    let coin = rng.random_range(0..2u8);
    let bit = if basis == ctx.alice.basis { ctx.alice.bit } else { coin };
    let phase = encode_phase(bit, basis);
    let w = width_ps.unwrap_or(ctx.tau_sig_ps);
    let pulses = ctx
        .slot_centers_ps
        .iter()
        .zip([phase, 0.0])
        .map(|(&t, ph)| TaggedPulse {
            pulse: OpticalPulse::classical(ctx.lambda_sig_nm, peak_power_w, w, t + offset_ps, ph),
            coherence: Some(EVE_COHERENCE),
        })
        .collect();
    (pulses, basis)
}

/// Apply Eve's per-cycle action to the honest channel output.
pub fn apply_attack<R: Rng + ?Sized>(
    strategy: &AttackStrategy,
    honest: Vec<TaggedPulse>,
    ctx: &AttackContext,
    rng: &mut R,
) -> Result<ChannelOutput> {
    let mut out = ChannelOutput {
        pulses: honest,
        ..ChannelOutput::default()
    };
    let fuse_check = |p: f64| -> bool { p > FUSE_LIMIT_W };
    match *strategy {
        AttackStrategy::None => {}
        AttackStrategy::FakedState {
            peak_power_w,
            offset_ps,
            width_ps,
            fraction,
        } => {
            if rng.random::<f64>() < fraction {
                let (p, b) = faked_pair(ctx, peak_power_w, offset_ps, width_ps, rng);
                out.pulses = p;
                out.eve_basis = Some(b);
                out.attacked = true;
            }
        }
        AttackStrategy::TimeShift { offset_ps } => {
            for tp in &mut out.pulses {
                tp.pulse = tp.pulse.shifted(offset_ps);
            }
            out.attacked = true;
        }
        AttackStrategy::BlindingPlusFaked {
            cw_power_w,
            peak_power_w,
            offset_ps,
            width_ps,
            fraction,
        } => {
            if fuse_check(cw_power_w) {
                out.fuse = true;
                out.pulses.clear();
                return Ok(out);
            }
            out.cw.push(CwSource {
                wavelength_nm: ctx.lambda_sig_nm,
                power_w: cw_power_w,
            });
            if rng.random::<f64>() < fraction {
                let (p, b) = faked_pair(ctx, peak_power_w, offset_ps, width_ps, rng);
                out.pulses = p;
                out.eve_basis = Some(b);
            }
            out.attacked = true;
        }
        AttackStrategy::TrojanProbe {
            wavelength_nm,
            peak_power_w,
            width_ps,
            offset_ps,
            ..
        }
        | AttackStrategy::WavelengthScan {
            wavelength_nm,
            peak_power_w,
            width_ps,
            offset_ps,
        } => {
            out.pulses.push(TaggedPulse {
                pulse: OpticalPulse::classical(
                    wavelength_nm,
                    peak_power_w,
                    width_ps.unwrap_or(ctx.tau_sig_ps),
                    ctx.slot_centers_ps[0] + offset_ps,
                    0.0,
                ),
                coherence: None,
            });
            out.attacked = true;
        }
        AttackStrategy::LaserDamage {
            wavelength_nm,
            cw_power_w,
        } => {
            if fuse_check(cw_power_w) {
                out.fuse = true;
                out.pulses.clear();
                return Ok(out);
            }
            out.cw.push(CwSource {
                wavelength_nm,
                power_w: cw_power_w,
            });
            out.attacked = true;
        }
    }
    if out.pulses.iter().any(|p| !p.pulse.peak_power_w().is_finite()) {
        return Err(Error::domain("non-finite injected power"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrojanEstimate {
    pub wavelength_nm: f64,
    pub probe_power_w: f64,
    pub input_photons: f64,
    pub one_way_isolation_db: f64,
    pub back_reflection_db: f64,
    pub returned_photons: f64,
    /// The probe can reach the pump-path phase modulator.
    pub phase_imprinted: bool,
    /// Returned photons that carry Bob's basis phase.
    pub usable_photons: f64,
}

/// Photons a probe of `power_w` lasting `duration_ps` returns to Eve after a
/// double pass through `stack` and a reflection of `back_reflection_db`.
/// Light inside `signal_band` is routed to the waveguide rather than the pump
/// path, so it never carries the pump phase.
pub fn trojan_leak_estimate(
    wavelength_nm: f64,
    power_w: f64,
    duration_ps: f64,
    stack: &FilterStack,
    back_reflection_db: f64,
    signal_band: &Passband,
) -> Result<TrojanEstimate> {
    let one_way = stack.attenuation_db(wavelength_nm)?;
    let input = photon_number(power_w, duration_ps, wavelength_nm);
    let returned = input * db_to_transmission(2.0 * one_way + back_reflection_db);
    let imprinted = !signal_band.contains(wavelength_nm);
    Ok(TrojanEstimate {
        wavelength_nm,
        probe_power_w: power_w,
        input_photons: input,
        one_way_isolation_db: one_way,
        back_reflection_db,
        returned_photons: returned,
        phase_imprinted: imprinted,
        usable_photons: if imprinted { returned } else { 0.0 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageVerdict {
    Safe,
    Unsafe,
    Fuse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DamageAssessment {
    pub wavelength_nm: f64,
    pub input_power_w: f64,
    /// Eve's light inside the waveguide.
    pub in_waveguide_w: f64,
    /// Eve's light reaching the detectors through the filters.
    pub linear_leak_w: f64,
    /// Sum-frequency light generated with Bob's pump, at unit conversion.
    pub conversion_ceiling_w: f64,
    /// Sum-frequency light if Eve's light played the pump role.
    pub pump_role_w: f64,
    /// Worst-case average power on one detector.
    pub detector_power_w: f64,
    pub verdict: DamageVerdict,
}

/// Receiver parts relevant to a damage estimate.
#[derive(Clone, Copy, Debug)]
pub struct DamageTarget<'a> {
    pub pre: &'a FilterStack,
    pub post: &'a FilterStack,
    pub waveguide: &'a WaveguideModel,
    pub pump: &'a PumpConfig,
    pub lambda_sig_nm: f64,
    pub damage_threshold_w: f64,
}

/// Average sum-frequency power Bob's pump can generate with unlimited
/// signal-band input, after output coupling and the post stack. Every pump
/// photon converting yields `λ_pump/λ_sum` times the pump power.
pub fn conversion_ceiling_w(target: &DamageTarget<'_>, signal_nm: f64) -> Result<f64> {
    let pump = target.pump;
    let lsum = sum_wavelength(pump.lambda_pump_nm, signal_nm)?;
    let duty = pump.nominal_duty().min(1.0);
    let avg_pump = pump.p_peak_w * duty + pump.pedestal_w() * (1.0 - duty);
    Ok(avg_pump * pump.lambda_pump_nm / lsum
        * target.waveguide.output_transmission()
        * target.post.transmission(lsum)?)
}

/// Worst-case average power reaching a detector when Eve injects
/// `cw_power_w` continuously at `wavelength_nm`.
pub fn damage_assessment(wavelength_nm: f64, cw_power_w: f64, target: &DamageTarget<'_>) -> Result<DamageAssessment> {
    if !(cw_power_w >= 0.0) {
        return Err(Error::domain(format!("injected power {cw_power_w} W must be >= 0")));
    }
    let wg = target.waveguide;
    let t_out = wg.output_transmission();
    let in_wg = cw_power_w * target.pre.transmission(wavelength_nm)? * wg.input_transmission();
    let linear = in_wg * t_out * target.post.transmission(wavelength_nm)?;
    let conversion = if cw_power_w > 0.0 && wg.accepts(wavelength_nm) {
        let lsum = sum_wavelength(target.pump.lambda_pump_nm, wavelength_nm)?;
        let signal_limited = in_wg * wavelength_nm / lsum * t_out * target.post.transmission(lsum)?;
        signal_limited.min(conversion_ceiling_w(target, wavelength_nm)?)
    } else {
        0.0
    };
    // Eve's light pairing with signal-band light as an extra pump
    let pump_role = if cw_power_w > 0.0 {
        let lsum = sum_wavelength(wavelength_nm, target.lambda_sig_nm)?;
        if lsum > crate::photonics::MODELED_RANGE_NM.0 {
            in_wg * wavelength_nm / lsum * t_out * target.post.transmission(lsum)?
        } else {
            0.0
        }
    } else {
        0.0
    };
    let detector = linear + conversion + pump_role;
    let verdict = if cw_power_w > FUSE_LIMIT_W {
        DamageVerdict::Fuse
    } else if detector < target.damage_threshold_w {
        DamageVerdict::Safe
    } else {
        DamageVerdict::Unsafe
    };
    Ok(DamageAssessment {
        wavelength_nm,
        input_power_w: cw_power_w,
        in_waveguide_w: in_wg,
        linear_leak_w: linear,
        conversion_ceiling_w: conversion,
        pump_role_w: pump_role,
        detector_power_w: detector,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{StackLocation, WavelengthGrid};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LSUM: f64 = 829.131_736_526_946_2;

    fn ctx(alice: AliceChoice) -> AttackContext {
        AttackContext {
            lambda_sig_nm: 1530.0,
            tau_sig_ps: 90.0,
            slot_centers_ps: [150.0, 500.0],
            alice,
        }
    }

    fn honest() -> Vec<TaggedPulse> {
        [150.0, 500.0]
            .iter()
            .map(|&t| TaggedPulse {
                pulse: OpticalPulse::quantum(1530.0, 0.1, 90.0, t, 0.0),
                coherence: Some(0),
            })
            .collect()
    }

    #[test]
    fn none_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_attack(&AttackStrategy::None, honest(), &ctx(AliceChoice::default()), &mut rng).unwrap();
        assert_eq!(out.pulses, honest());
        assert!(out.cw.is_empty() && !out.fuse && !out.attacked);
    }

    #[test]
    fn intercept_resend_copies_bit_in_matching_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = AttackStrategy::FakedState {
            peak_power_w: 1e-3,
            offset_ps: 0.0,
            width_ps: None,
            fraction: 1.0,
        };
        let alice = AliceChoice::new(1, Basis::X, 0.2);
        for _ in 0..200 {
            let out = apply_attack(&s, honest(), &ctx(alice), &mut rng).unwrap();
            assert_eq!(out.pulses.len(), 2);
            assert!(out.pulses.iter().all(|p| p.pulse.peak_power_w() == 1e-3));
            let rel = (out.pulses[0].pulse.phase_rad() - out.pulses[1].pulse.phase_rad()).rem_euclid(std::f64::consts::TAU);
            if out.eve_basis == Some(Basis::X) {
                assert!((rel - alice.phase_rad).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_shift_moves_pulses() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_attack(
            &AttackStrategy::TimeShift { offset_ps: 110.0 },
            honest(),
            &ctx(AliceChoice::default()),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.pulses[0].pulse.arrival_ps(), 260.0);
    }

    #[test]
    fn fuse_above_ten_watts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = ctx(AliceChoice::default());
        let at = AttackStrategy::LaserDamage {
            wavelength_nm: 1810.0,
            cw_power_w: 10.0,
        };
        assert!(!apply_attack(&at, honest(), &c, &mut rng).unwrap().fuse);
        let over = AttackStrategy::LaserDamage {
            wavelength_nm: 1810.0,
            cw_power_w: 10.5,
        };
        let out = apply_attack(&over, honest(), &c, &mut rng).unwrap();
        assert!(out.fuse && out.pulses.is_empty());
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let j = r#"{"kind":"faked_state","peak_power_w":1.5e-4}"#;
        let s: AttackStrategy = serde_json::from_str(j).unwrap();
        assert_eq!(
            s,
            AttackStrategy::FakedState {
                peak_power_w: 1.5e-4,
                offset_ps: 0.0,
                width_ps: None,
                fraction: 1.0
            }
        );
        let back: AttackStrategy = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<AttackStrategy>(r#"{"kind":"faked_state","peak_power_w":1,"foo":2}"#).is_err());
        assert!(AttackStrategy::WavelengthScan {
            wavelength_nm: 100.0,
            peak_power_w: 1.0,
            width_ps: None,
            offset_ps: 0.0
        }
        .validate()
        .is_err());
    }

    fn pump_block_stack() -> FilterStack {
        FilterStack::reference_pre(1530.0, 15.0)
    }

    fn band() -> Passband {
        Passband::centered(1530.0, 15.0)
    }

    #[test]
    fn trojan_examples() {
        let eighty = FilterStack::new(StackLocation::PreWaveguide)
            .with(crate::photonics::FilterElement::coiled_fiber("c1", 1780.0, 0.1, 40.0))
            .with(crate::photonics::FilterElement::coiled_fiber("c2", 1780.0, 0.1, 40.0));
        let t = trojan_leak_estimate(1810.0, 10.0, 1000.0, &eighty, 40.0, &band()).unwrap();
        assert!(t.returned_photons <= 1e-20 * t.input_photons * (1.0 + 1e-12));
        assert!(t.phase_imprinted);
        assert!(t.usable_photons < 1e-8);
        let s = trojan_leak_estimate(1530.0, 1e-3, 1000.0, &pump_block_stack(), 40.0, &band()).unwrap();
        assert!(s.returned_photons > 0.0 && !s.phase_imprinted && s.usable_photons == 0.0);
        let z = trojan_leak_estimate(1810.0, 0.0, 1000.0, &pump_block_stack(), 40.0, &band()).unwrap();
        assert_eq!(z.returned_photons, 0.0);
    }

    fn ten_percent_pump() -> PumpConfig {
        PumpConfig {
            tau_pump_ps: 50.0,
            ..PumpConfig::default()
        }
    }

    #[test]
    fn damage_examples() {
        let pre = pump_block_stack();
        let post = FilterStack::reference_post(LSUM, 3.5);
        let wg = WaveguideModel {
            eta_max: 1.0,
            ..WaveguideModel::default()
        };
        let pump = ten_percent_pump();
        assert!((pump.nominal_duty() - 0.1).abs() < 1e-12);
        let t = DamageTarget {
            pre: &pre,
            post: &post,
            waveguide: &wg,
            pump: &pump,
            lambda_sig_nm: 1530.0,
            damage_threshold_w: 0.2,
        };
        let a = damage_assessment(1810.0, 10.0, &t).unwrap();
        assert!(a.in_waveguide_w < 100e-9);
        assert!(a.detector_power_w < 5e-6);
        assert_eq!(a.verdict, DamageVerdict::Safe);
        let b = damage_assessment(1530.0, 10.0, &t).unwrap();
        assert!(b.detector_power_w <= 20e-3, "{}", b.detector_power_w);
        assert_eq!(b.verdict, DamageVerdict::Safe);
        let z = damage_assessment(1530.0, 0.0, &t).unwrap();
        assert_eq!(z.detector_power_w, 0.0);
        assert_eq!(z.verdict, DamageVerdict::Safe);
        assert_eq!(damage_assessment(1530.0, 11.0, &t).unwrap().verdict, DamageVerdict::Fuse);
    }

    #[test]
    fn damage_safe_across_grid() {
        let pre = pump_block_stack();
        let post = FilterStack::reference_post(LSUM, 3.5);
        let wg = WaveguideModel::default();
        let pump = ten_percent_pump();
        let t = DamageTarget {
            pre: &pre,
            post: &post,
            waveguide: &wg,
            pump: &pump,
            lambda_sig_nm: 1530.0,
            damage_threshold_w: 0.2,
        };
        for wl in WavelengthGrid::default().points() {
            for p in [1e-3, 1.0, 10.0] {
                let a = damage_assessment(wl, p, &t).unwrap();
                assert_eq!(a.verdict, DamageVerdict::Safe, "{wl} nm {p} W: {a:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn trojan_monotone_and_linear(wl in 300.0..1850.0f64, p in 1e-6..10.0f64, k in 1.0..100.0f64, extra in 0.0..100.0f64) {
            let stack = pump_block_stack();
            let a = trojan_leak_estimate(wl, p, 100.0, &stack, 40.0, &band()).unwrap();
            let b = trojan_leak_estimate(wl, k * p, 100.0, &stack, 40.0, &band()).unwrap();
            prop_assert!((b.returned_photons - k * a.returned_photons).abs() <= 1e-9 * b.returned_photons);
            let more = stack.clone().with(crate::photonics::FilterElement::band_pass("x", 1000.0, 1.0, 0.0, extra));
            let c = trojan_leak_estimate(wl, p, 100.0, &more, 40.0, &band()).unwrap();
            prop_assert!(c.returned_photons <= a.returned_photons);
        }
    }
}
