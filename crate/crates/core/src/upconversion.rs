//! Sum-frequency generation in the pumped waveguide: conversion efficiency,
//! pump depletion, extinction-ratio pedestal and the pump pulse train.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::{db_to_transmission, photon_number, sum_wavelength, OpticalPulse};

/// Periodically poled waveguide used as the nonlinear medium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideModel {
    /// Conversion probability reached at `p_full_w`.
    pub eta_max: f64,
    pub p_full_w: f64,
    pub propagation_loss_db: f64,
    pub in_coupling_db: f64,
    pub out_coupling_db: f64,
    pub pm_center_nm: f64,
    /// Full width of the phase-matching acceptance.
    pub pm_bandwidth_nm: f64,
}

impl Default for WaveguideModel {
    fn default() -> Self {
        WaveguideModel {
            eta_max: 0.9,
            p_full_w: 0.1,
            propagation_loss_db: 0.2,
            in_coupling_db: 0.2,
            out_coupling_db: 0.1,
            pm_center_nm: 1530.0,
            pm_bandwidth_nm: 4.0,
        }
    }
}

impl WaveguideModel {
    /// Lossless, unit-efficiency waveguide phase matched at `pm_center_nm`
    /// and saturating at `p_full_w`.
    pub fn ideal(pm_center_nm: f64, p_full_w: f64) -> Self {
        WaveguideModel {
            eta_max: 1.0,
            p_full_w,
            propagation_loss_db: 0.0,
            in_coupling_db: 0.0,
            out_coupling_db: 0.0,
            pm_center_nm,
            pm_bandwidth_nm: 4.0,
        }
    }

    pub fn accepts(&self, signal_nm: f64) -> bool {
        (signal_nm - self.pm_center_nm).abs() <= 0.5 * self.pm_bandwidth_nm
    }

    /// Transmission from the fibre into the waveguide.
    pub fn input_transmission(&self) -> f64 {
        db_to_transmission(self.in_coupling_db)
    }

    /// Transmission from the interaction region to the output fibre.
    pub fn output_transmission(&self) -> f64 {
        db_to_transmission(self.propagation_loss_db + self.out_coupling_db)
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, r: &str| Err((format!("waveguide.{k}"), r.to_string()));
        if !(0.0..=1.0).contains(&self.eta_max) {
            return bad("eta_max", "must lie in [0, 1]");
        }
        if !(self.p_full_w > 0.0 && self.p_full_w.is_finite()) {
            return bad("p_full_w", "must be > 0");
        }
        for (k, v) in [
            ("propagation_loss_db", self.propagation_loss_db),
            ("in_coupling_db", self.in_coupling_db),
            ("out_coupling_db", self.out_coupling_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(k, "must be >= 0");
            }
        }
        if !(self.pm_center_nm > 0.0) {
            return bad("pm_center_nm", "must be > 0");
        }
        if !(self.pm_bandwidth_nm >= 0.0) {
            return bad("pm_bandwidth_nm", "must be >= 0");
        }
        Ok(())
    }
}

/// Internal conversion probability at instantaneous pump power `p_pump_w`:
/// `eta_max · sin²((π/2)·√(P/p_full))`.
pub fn conversion_efficiency(p_pump_w: f64, wg: &WaveguideModel) -> f64 {
    if !(p_pump_w > 0.0) {
        return 0.0;
    }
    let s = (FRAC_PI_2 * (p_pump_w / wg.p_full_w).sqrt()).sin();
    wg.eta_max * s * s
}

/// Pump laser and its modulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpConfig {
    pub lambda_pump_nm: f64,
    pub tau_pump_ps: f64,
    /// Pump peak power inside the waveguide with no signal present; the
    /// reference level the output monitor compares against.
    pub p_peak_w: f64,
    /// Extinction ratio in dB; `"inf"` for a pedestal-free pump.
    #[serde(with = "crate::serde_util::maybe_inf")]
    pub er_db: f64,
    pub jitter_ps: f64,
    pub delta_t_ps: f64,
    pub rep_rate_hz: f64,
    /// Bob's two basis phases, indexed by basis.
    pub phase_alphabet: Vec<f64>,
    pub single_pulse_prob: f64,
    pub interpulse_randomization: bool,
    /// Put the basis phase on the early pump pulse (negated) instead of the late one.
    pub phase_on_early_pulse: bool,
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig {
            lambda_pump_nm: 1810.0,
            tau_pump_ps: 110.0,
            p_peak_w: 0.1,
            er_db: 30.0,
            jitter_ps: 2.0,
            delta_t_ps: 350.0,
            rep_rate_hz: 1e9,
            phase_alphabet: vec![0.0, FRAC_PI_2],
            single_pulse_prob: 0.01,
            interpulse_randomization: false,
            phase_on_early_pulse: false,
        }
    }
}

impl PumpConfig {
    pub fn period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz
    }

    /// Inter-pulse power level `p_peak·10^(−ER/10)`.
    pub fn pedestal_w(&self) -> f64 {
        if self.er_db.is_infinite() {
            0.0
        } else {
            self.p_peak_w * db_to_transmission(self.er_db)
        }
    }

    /// Nominal centres of the early and late pump pulses within a cycle,
    /// placed so that all three AMZI output bins fit in the period.
    pub fn slot_centers_ps(&self) -> [f64; 2] {
        let t0 = 0.5 * (self.period_ps() - 2.0 * self.delta_t_ps);
        [t0, t0 + self.delta_t_ps]
    }

    /// Fraction of time the pump is "on" for `pulses` pulses per cycle.
    pub fn duty_cycle(&self, pulses: f64) -> f64 {
        pulses * self.tau_pump_ps * 1e-12 * self.rep_rate_hz
    }

    /// Duty cycle of a double-pulse cycle.
    pub fn nominal_duty(&self) -> f64 {
        self.duty_cycle(2.0)
    }

    /// Width of the interval where the pump exceeds ten times its pedestal.
    pub fn gate_width_ps(&self) -> f64 {
        if self.er_db >= 10.0 {
            self.tau_pump_ps
        } else {
            self.period_ps()
        }
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, r: String| Err((format!("pump.{k}"), r));
        for (k, v) in [
            ("lambda_pump_nm", self.lambda_pump_nm),
            ("tau_pump_ps", self.tau_pump_ps),
            ("p_peak_w", self.p_peak_w),
            ("delta_t_ps", self.delta_t_ps),
            ("rep_rate_hz", self.rep_rate_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(k, format!("must be > 0 (got {v})"));
            }
        }
        if !(self.er_db >= 0.0) {
            return bad("er_db", "must be >= 0".into());
        }
        if !(self.jitter_ps >= 0.0 && self.jitter_ps.is_finite()) {
            return bad("jitter_ps", "must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.single_pulse_prob) {
            return bad("single_pulse_prob", "must lie in [0, 1]".into());
        }
        if self.phase_alphabet.len() != 2 || self.phase_alphabet.iter().any(|p| !p.is_finite()) {
            return bad("phase_alphabet", "must hold exactly two finite phases".into());
        }
        if self.tau_pump_ps >= self.delta_t_ps {
            return bad(
                "tau_pump_ps",
                format!(
                    "pump width {} ps must be below the pulse separation delta_t_ps = {} ps",
                    self.tau_pump_ps, self.delta_t_ps
                ),
            );
        }
        if 2.0 * self.delta_t_ps + self.tau_pump_ps > self.period_ps() {
            return bad(
                "delta_t_ps",
                format!(
                    "three output bins (2·{} + {} ps) do not fit in the {} ps period",
                    self.delta_t_ps,
                    self.tau_pump_ps,
                    self.period_ps()
                ),
            );
        }
        Ok(())
    }
}

/// Outcome of one signal pulse meeting one pump pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct SfgResult {
    /// Upconverted light (in-gate plus pedestal contributions).
    pub sfg_pulse: OpticalPulse,
    /// Pump pulse after losing the photons converted inside its window.
    pub depleted_pump: OpticalPulse,
    pub residual_signal: OpticalPulse,
    pub converted_photons: f64,
    /// Part of `converted_photons` produced inside the pump pulse window.
    pub gated_photons: f64,
    /// Part produced by the inter-pulse pedestal.
    pub pedestal_photons: f64,
    /// Fraction of the signal window overlapping the pump window.
    pub overlap: f64,
    /// Pump photons present during the signal window (pulse plus pedestal).
    pub pump_photons_available: f64,
    lambda_pump_nm: f64,
    lambda_sig_nm: f64,
    lambda_sum_nm: f64,
}

impl SfgResult {
    pub fn pump_energy_loss_j(&self) -> f64 {
        self.converted_photons * crate::photonics::photon_energy_j(self.lambda_pump_nm)
    }
    pub fn signal_energy_loss_j(&self) -> f64 {
        self.converted_photons * crate::photonics::photon_energy_j(self.lambda_sig_nm)
    }
    pub fn sfg_energy_j(&self) -> f64 {
        self.sfg_pulse.energy_j()
    }
    pub fn lambda_sum_nm(&self) -> f64 {
        self.lambda_sum_nm
    }
    /// Average power of the pedestal-converted light over the part of the
    /// signal window outside the pump pulse.
    pub fn out_of_gate_sum_power_w(&self) -> f64 {
        let dur = (1.0 - self.overlap) * self.residual_signal.width_ps();
        if dur <= 0.0 || self.pedestal_photons <= 0.0 {
            0.0
        } else {
            crate::photonics::peak_power_w(self.pedestal_photons, dur, self.lambda_sum_nm)
        }
    }
}

/// Fraction of `signal`'s window covered by `pump`'s window.
pub fn overlap_fraction(signal: &OpticalPulse, pump: &OpticalPulse) -> f64 {
    let (s0, s1) = signal.window();
    let (p0, p1) = pump.window();
    ((s1.min(p1) - s0.max(p0)).max(0.0) / signal.width_ps()).min(1.0)
}

/// Mix `signal` with `pump` inside the waveguide. Both pulses are in-waveguide
/// quantities; coupling losses are applied by the caller.
///
/// The part of the signal overlapping the pump converts at the pump peak
/// power and is clipped at the pump photons in the overlap. The rest sees the
/// pedestal `pedestal_w` and is clipped at the pedestal photons in that
/// interval.
pub fn upconvert(signal: &OpticalPulse, pump: &OpticalPulse, pedestal_w: f64, wg: &WaveguideModel) -> Result<SfgResult> {
    let lp = pump.wavelength_nm();
    let ls = signal.wavelength_nm();
    let lsum = sum_wavelength(lp, ls)?;
    if !(pedestal_w >= 0.0) {
        return Err(Error::domain(format!("pedestal power {pedestal_w} W must be >= 0")));
    }
    let f = overlap_fraction(signal, pump);
    let overlap_ps = f * signal.width_ps();
    let outside_ps = signal.width_ps() - overlap_ps;
    let n_sig = signal.mean_photons();

    // pump photons still in the pulse, spread uniformly over its width
    let pump_in_overlap = pump.mean_photons() * overlap_ps / pump.width_ps();
    let ped_in_window = photon_number(pedestal_w, outside_ps, lp);

    let (gated, ped) = if wg.accepts(ls) {
        let g = (n_sig * f * conversion_efficiency(pump.peak_power_w(), wg)).min(pump_in_overlap);
        let p = (n_sig * (1.0 - f) * conversion_efficiency(pedestal_w, wg)).min(ped_in_window);
        (g.max(0.0), p.max(0.0))
    } else {
        (0.0, 0.0)
    };
    let n_c = gated + ped;

    let sfg_width = signal.width_ps().min(pump.width_ps());
    let sfg_arrival = if f > 0.0 {
        let (s0, s1) = signal.window();
        let (p0, p1) = pump.window();
        0.5 * (s0.max(p0) + s1.min(p1))
    } else {
        signal.arrival_ps()
    };
    let sfg_pulse = OpticalPulse::quantum(
        lsum,
        n_c,
        sfg_width,
        sfg_arrival,
        signal.phase_rad() + pump.phase_rad(),
    );
    Ok(SfgResult {
        sfg_pulse,
        depleted_pump: pump.with_photons(pump.mean_photons() - gated),
        residual_signal: signal.with_photons(n_sig - n_c),
        converted_photons: n_c,
        gated_photons: gated,
        pedestal_photons: ped,
        overlap: f,
        pump_photons_available: pump_in_overlap + ped_in_window,
        lambda_pump_nm: lp,
        lambda_sig_nm: ls,
        lambda_sum_nm: lsum,
    })
}

/// Bound on sum-wavelength peak power producible outside the pump pulse:
/// `P_ped·λ_sig/λ_sum`.
pub fn gated_bound_on_sum_power(cfg: &PumpConfig, lambda_sig_nm: f64) -> Result<f64> {
    let lsum = sum_wavelength(cfg.lambda_pump_nm, lambda_sig_nm)?;
    Ok(cfg.pedestal_w() * lambda_sig_nm / lsum)
}

/// Pump-photon-flux ceiling on the same quantity: `P_ped·λ_pump/λ_sum`.
pub fn pedestal_flux_ceiling(cfg: &PumpConfig, lambda_sig_nm: f64) -> Result<f64> {
    let lsum = sum_wavelength(cfg.lambda_pump_nm, lambda_sig_nm)?;
    Ok(cfg.pedestal_w() * cfg.lambda_pump_nm / lsum)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Early,
    Late,
}

impl Slot {
    pub fn index(self) -> usize {
        match self {
            Slot::Early => 0,
            Slot::Late => 1,
        }
    }
    pub fn from_index(i: usize) -> Slot {
        if i == 0 {
            Slot::Early
        } else {
            Slot::Late
        }
    }
}

/// Pump light Bob launches in one cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct PumpTrain {
    /// Pump pulse per slot; `None` for the slot dropped in a single-pulse cycle.
    pub pulses: [Option<OpticalPulse>; 2],
    pub pedestal_w: f64,
    /// Phase carried by the pedestal in each slot region.
    pub pedestal_phase_rad: [f64; 2],
    pub basis: usize,
    pub single_pulse: bool,
}

impl PumpTrain {
    pub fn present(&self) -> impl Iterator<Item = (Slot, &OpticalPulse)> {
        self.pulses
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|p| (Slot::from_index(i), p)))
    }

    pub fn pulse_count(&self) -> usize {
        self.pulses.iter().filter(|p| p.is_some()).count()
    }
}

/// Draw the pump light for one cycle. `_cycle_index` is accepted for
/// symmetry with the rest of the per-cycle API; all randomness comes from
/// `rng`, which the caller seeds per cycle.
pub fn pump_pulse_train<R: Rng + ?Sized>(cfg: &PumpConfig, _cycle_index: u64, rng: &mut R) -> PumpTrain {
    let basis = rng.random_range(0..2usize);
    let phi_b = cfg.phase_alphabet[basis];
    let single = cfg.single_pulse_prob > 0.0 && rng.random::<f64>() < cfg.single_pulse_prob;
    let kept = if single { Some(rng.random_range(0..2usize)) } else { None };
    let jitter = if cfg.jitter_ps > 0.0 {
        Normal::new(0.0, cfg.jitter_ps).expect("validated jitter").sample(rng)
    } else {
        0.0
    };
    let phases = if cfg.phase_on_early_pulse {
        [-phi_b, 0.0]
    } else {
        [0.0, phi_b]
    };
    let centers = cfg.slot_centers_ps();
    let mut pulses = [None, None];
    for (i, pulse) in pulses.iter_mut().enumerate() {
        if kept.is_none_or(|k| k == i) {
            *pulse = Some(OpticalPulse::classical(
                cfg.lambda_pump_nm,
                cfg.p_peak_w,
                cfg.tau_pump_ps,
                centers[i] + jitter,
                phases[i],
            ));
        }
    }
    let pedestal_phase_rad = if cfg.interpulse_randomization {
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        let b = rng.random::<f64>() * std::f64::consts::TAU;
        [a, b]
    } else {
        phases
    };
    PumpTrain {
        pulses,
        pedestal_w: cfg.pedestal_w(),
        pedestal_phase_rad,
        basis,
        single_pulse: single,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{photon_energy_j, HC_J_M};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn ideal() -> WaveguideModel {
        WaveguideModel::ideal(1530.0, 0.1)
    }

    #[test]
    fn efficiency_examples() {
        let wg = ideal();
        assert_eq!(conversion_efficiency(0.0, &wg), 0.0);
        assert_relative_eq!(conversion_efficiency(0.1, &wg), 1.0, max_relative = 1e-15);
        // sin²((π/2)·√1e-3) evaluated independently
        assert_relative_eq!(conversion_efficiency(100e-6, &wg), 2.465_372_411_7e-3, max_relative = 1e-6);
        assert!(conversion_efficiency(100e-6, &wg) < 0.01);
        let d = WaveguideModel::default();
        assert_relative_eq!(conversion_efficiency(d.p_full_w, &d), d.eta_max, max_relative = 1e-15);
    }

    #[test]
    fn single_photon_depletion_is_negligible() {
        let mut wg = ideal();
        wg.eta_max = 0.8;
        let sig = OpticalPulse::quantum(1530.0, 0.5, 80.0, 0.0, 0.0);
        let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, 0.0);
        let r = upconvert(&sig, &pump, 1e-4, &wg).unwrap();
        assert_relative_eq!(r.converted_photons, 0.4, max_relative = 1e-12);
        let zeta = 1.0 - r.depleted_pump.mean_photons() / pump.mean_photons();
        assert!(zeta < 1e-8 && zeta > 1e-9, "zeta = {zeta}");
    }

    #[test]
    fn faked_state_depletes_by_a_tenth_of_a_percent() {
        let sig = OpticalPulse::classical(1530.0, 150e-6, 80.0, 0.0, 0.0);
        let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, 0.0);
        let r = upconvert(&sig, &pump, 0.0, &ideal()).unwrap();
        let zeta = 1.0 - r.depleted_pump.peak_power_w() / pump.peak_power_w();
        // (P_s τ_s λ_s)/(P_p τ_p λ_p)
        let oracle = (150e-6 * 80.0 * 1530.0) / (0.1 * 100.0 * 1810.0);
        assert_relative_eq!(zeta, oracle, max_relative = 1e-9);
        assert_relative_eq!(zeta, 1.014_36e-3, max_relative = 1e-5);
    }

    #[test]
    fn gating_without_pedestal_blocks_shifted_signal() {
        let sig = OpticalPulse::classical(1530.0, 1e-3, 80.0, 500.0, 0.0);
        let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, 0.0);
        let r = upconvert(&sig, &pump, 0.0, &ideal()).unwrap();
        assert_eq!(r.converted_photons, 0.0);
        assert_eq!(r.overlap, 0.0);
    }

    #[test]
    fn out_of_acceptance_does_not_convert() {
        let sig = OpticalPulse::classical(1550.0, 1e-3, 80.0, 0.0, 0.0);
        let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, 0.0);
        let r = upconvert(&sig, &pump, 1e-4, &ideal()).unwrap();
        assert_eq!(r.converted_photons, 0.0);
        assert_eq!(r.residual_signal.mean_photons(), sig.mean_photons());
    }

    #[test]
    fn saturation_clips_at_pump_flux() {
        let sig = OpticalPulse::classical(1530.0, 10.0, 100.0, 0.0, 0.0);
        let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, 0.0);
        let r = upconvert(&sig, &pump, 0.0, &ideal()).unwrap();
        assert_relative_eq!(r.converted_photons, pump.mean_photons(), max_relative = 1e-12);
        assert!(r.depleted_pump.mean_photons().abs() < 1e-6 * pump.mean_photons());
    }

    #[test]
    fn pedestal_bounds() {
        let cfg = PumpConfig {
            p_peak_w: 0.1,
            er_db: 30.0,
            ..PumpConfig::default()
        };
        assert_relative_eq!(cfg.pedestal_w(), 100e-6, max_relative = 1e-12);
        let b = gated_bound_on_sum_power(&cfg, 1530.0).unwrap();
        assert_relative_eq!(b, 1.845_304e-4, max_relative = 1e-6);
        assert_relative_eq!(pedestal_flux_ceiling(&cfg, 1530.0).unwrap(), 2.183_007e-4, max_relative = 1e-6);
        let cfg20 = PumpConfig { er_db: 20.0, ..cfg.clone() };
        assert_relative_eq!(gated_bound_on_sum_power(&cfg20, 1530.0).unwrap(), 1.845_304e-3, max_relative = 1e-6);
        let cfg_inf = PumpConfig {
            er_db: f64::INFINITY,
            ..cfg
        };
        assert_eq!(gated_bound_on_sum_power(&cfg_inf, 1530.0).unwrap(), 0.0);
    }

    #[test]
    fn pump_train_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = PumpConfig {
            single_pulse_prob: 0.0,
            ..PumpConfig::default()
        };
        for i in 0..200 {
            let t = pump_pulse_train(&cfg, i, &mut rng);
            assert_eq!(t.pulse_count(), 2);
            let [e, l] = &t.pulses;
            let (e, l) = (e.as_ref().unwrap(), l.as_ref().unwrap());
            assert_relative_eq!(l.arrival_ps() - e.arrival_ps(), cfg.delta_t_ps, max_relative = 1e-12);
            assert_eq!(e.phase_rad(), 0.0);
            assert_eq!(l.phase_rad(), cfg.phase_alphabet[t.basis]);
            assert_relative_eq!(t.pedestal_w, 1e-4, max_relative = 1e-12);
        }
        let cfg1 = PumpConfig {
            single_pulse_prob: 1.0,
            ..PumpConfig::default()
        };
        let mut kept = [0usize; 2];
        for i in 0..400 {
            let t = pump_pulse_train(&cfg1, i, &mut rng);
            assert!(t.single_pulse);
            assert_eq!(t.pulse_count(), 1);
            kept[t.present().next().unwrap().0.index()] += 1;
        }
        assert!(kept[0] > 120 && kept[1] > 120);
    }

    #[test]
    fn randomized_pedestal_phase_varies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = PumpConfig {
            interpulse_randomization: true,
            ..PumpConfig::default()
        };
        let a = pump_pulse_train(&cfg, 0, &mut rng).pedestal_phase_rad;
        let b = pump_pulse_train(&cfg, 1, &mut rng).pedestal_phase_rad;
        assert_ne!(a, b);
        assert!(a.iter().chain(b.iter()).all(|p| (0.0..TAU).contains(p)));
    }

    #[test]
    fn early_pulse_phase_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PumpConfig {
            phase_on_early_pulse: true,
            single_pulse_prob: 0.0,
            ..PumpConfig::default()
        };
        for i in 0..50 {
            let t = pump_pulse_train(&cfg, i, &mut rng);
            let e = t.pulses[0].as_ref().unwrap();
            let l = t.pulses[1].as_ref().unwrap();
            let rel = (e.phase_rad() - l.phase_rad()).rem_euclid(TAU);
            let want = (-cfg.phase_alphabet[t.basis]).rem_euclid(TAU);
            assert!((rel - want).abs() < 1e-12 || (rel - want).abs() > TAU - 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(PumpConfig::default().validate().is_ok());
        let bad = PumpConfig {
            tau_pump_ps: 400.0,
            ..PumpConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().0, "pump.tau_pump_ps");
        let bad = PumpConfig {
            phase_alphabet: vec![0.0],
            ..PumpConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(WaveguideModel::default().validate().is_ok());
        assert!(WaveguideModel {
            eta_max: 1.5,
            ..WaveguideModel::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn gate_width_follows_extinction() {
        let mut c = PumpConfig::default();
        assert_eq!(c.gate_width_ps(), c.tau_pump_ps);
        c.er_db = 5.0;
        assert_eq!(c.gate_width_ps(), c.period_ps());
    }

    fn arb_case() -> impl Strategy<Value = (OpticalPulse, OpticalPulse, f64, WaveguideModel)> {
        (
            (1528.0..1532.0f64, 1e-3..1e7f64, 10.0..200.0f64, -150.0..150.0f64, 0.0..TAU),
            (1700.0..1900.0f64, 1e-4..1.0f64, 10.0..200.0f64, 0.0..TAU),
            0.0..1e-3f64,
            (0.0..=1.0f64, 1e-3..1.0f64),
        )
            .prop_map(|((ls, ns, ts, t, ps), (lp, pp, tp, pph), ped, (em, pf))| {
                let sig = OpticalPulse::quantum(ls, ns, ts, t, ps);
                let pump = OpticalPulse::classical(lp, pp, tp, 0.0, pph);
                let wg = WaveguideModel {
                    eta_max: em,
                    p_full_w: pf,
                    ..WaveguideModel::ideal(1530.0, pf)
                };
                (sig, pump, ped, wg)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn conservation((sig, pump, ped, wg) in arb_case()) {
            let r = upconvert(&sig, &pump, ped, &wg).unwrap();
            let n_c = r.converted_photons;
            prop_assert!(n_c <= r.pump_photons_available * (1.0 + 1e-12));
            prop_assert!(n_c <= sig.mean_photons() * (1.0 + 1e-12));
            let hc = HC_J_M * 1e9;
            let lsum = r.lambda_sum_nm();
            let e_p = r.pump_energy_loss_j() * pump.wavelength_nm();
            let e_s = r.signal_energy_loss_j() * sig.wavelength_nm();
            let e_u = r.sfg_energy_j() * lsum;
            let want = n_c * hc;
            for e in [e_p, e_s, e_u] {
                prop_assert!((e - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE));
            }
            prop_assert!((r.residual_signal.mean_photons() + n_c - sig.mean_photons()).abs()
                <= 1e-12 * sig.mean_photons());
            prop_assert!((r.depleted_pump.mean_photons() + r.gated_photons - pump.mean_photons()).abs()
                <= 1e-12 * pump.mean_photons());
            let d = (r.sfg_pulse.phase_rad() - sig.phase_rad() - pump.phase_rad()).rem_euclid(TAU);
            prop_assert!(d < 1e-9 || TAU - d < 1e-9);
            prop_assert_eq!(r.sfg_pulse.width_ps(), sig.width_ps().min(pump.width_ps()));
            prop_assert!((r.sfg_pulse.energy_j() - n_c * photon_energy_j(lsum)).abs() <= 1e-12 * r.sfg_pulse.energy_j());
        }

        #[test]
        fn monotone_in_power((sig, pump, ped, wg) in arb_case(), k in 1.0..10.0f64) {
            let a = upconvert(&sig, &pump, ped, &wg).unwrap().converted_photons;
            let b = upconvert(&sig.scaled(k), &pump, ped, &wg).unwrap().converted_photons;
            prop_assert!(b >= a * (1.0 - 1e-12));
        }

        #[test]
        fn monotone_in_overlap(t1 in 0.0..200.0f64, t2 in 0.0..200.0f64, n in 1.0..1e8f64) {
            let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, 0.0);
            let wg = WaveguideModel::ideal(1530.0, 0.1);
            let a = upconvert(&OpticalPulse::quantum(1530.0, n, 80.0, far, 0.0), &pump, 1e-4, &wg).unwrap();
            let b = upconvert(&OpticalPulse::quantum(1530.0, n, 80.0, near, 0.0), &pump, 1e-4, &wg).unwrap();
            prop_assert!(b.overlap >= a.overlap);
            prop_assert!(b.converted_photons >= a.converted_photons * (1.0 - 1e-12));
        }

        #[test]
        fn efficiency_bounded_and_increasing(p in 0.0..0.1f64, q in 0.0..0.1f64) {
            let wg = WaveguideModel::default();
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            let a = conversion_efficiency(lo, &wg);
            let b = conversion_efficiency(hi, &wg);
            prop_assert!((0.0..=wg.eta_max).contains(&a));
            prop_assert!(b >= a);
        }

        #[test]
        fn er_infinite_gates_completely(t in 100.0..400.0f64, n in 1.0..1e9f64) {
            let pump = OpticalPulse::classical(1810.0, 0.1, 100.0, 0.0, PI);
            let sig = OpticalPulse::quantum(1530.0, n, 80.0, t, 0.0);
            let r = upconvert(&sig, &pump, 0.0, &WaveguideModel::default()).unwrap();
            prop_assert_eq!(r.converted_photons, 0.0);
        }
    }
}
