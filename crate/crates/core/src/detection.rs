//! AMZI time-bin decoder and free-running Si SPAD model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::OpticalPulse;
use crate::upconversion::Slot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bin {
    Early,
    Middle,
    Late,
}

impl Bin {
    pub const ALL: [Bin; 3] = [Bin::Early, Bin::Middle, Bin::Late];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Clicks registered in one output bin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinOutcome {
    pub d0_click: bool,
    pub d1_click: bool,
}

impl BinOutcome {
    pub fn any(&self) -> bool {
        self.d0_click || self.d1_click
    }
    pub fn double(&self) -> bool {
        self.d0_click && self.d1_click
    }
    /// `Some(0)` or `Some(1)` for a single click, `None` otherwise.
    pub fn single(&self) -> Option<u8> {
        match (self.d0_click, self.d1_click) {
            (true, false) => Some(0),
            (false, true) => Some(1),
            _ => None,
        }
    }
}

/// Mean photon number reaching each detector in each bin, indexed `[bin][detector]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BinTable(pub [[f64; 2]; 3]);

impl BinTable {
    pub fn get(&self, bin: Bin, detector: usize) -> f64 {
        self.0[bin.index()][detector]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().sum()
    }

    pub fn add(&mut self, bin: Bin, detector: usize, photons: f64) {
        self.0[bin.index()][detector] += photons;
    }

    pub fn scaled(&self, k: f64) -> BinTable {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|v| *v *= k);
        out
    }

    /// D0 share of the middle bin.
    pub fn middle_d0_fraction(&self) -> f64 {
        let [d0, d1] = self.0[Bin::Middle.index()];
        d0 / (d0 + d1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmziConfig {
    /// Arm delay; defaults to the pump pulse separation when omitted.
    pub delay_ps: Option<f64>,
    pub visibility: f64,
    /// Largest accepted mismatch between pulse separation and arm delay.
    pub tolerance_ps: f64,
}

impl Default for AmziConfig {
    fn default() -> Self {
        AmziConfig {
            delay_ps: None,
            visibility: 1.0,
            tolerance_ps: 10.0,
        }
    }
}

/// One contribution of light entering the AMZI.
///
/// Components with the same `coherence` id that sit in different slots
/// interfere in the middle bin; `None` marks incoherent light.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmziComponent {
    pub slot: Slot,
    pub photons: f64,
    pub phase_rad: f64,
    pub coherence: Option<u32>,
}

/// Route light through the AMZI.
///
/// Each slot's light splits evenly between the short and long arm. In a
/// double-pulse cycle the early bin goes to D0 and the late bin to D1; the
/// middle bin holds half of everything and coherent early/late pairs add an
/// interference term `V·√(n_e·n_l)·cos(φ_e − φ_l)/2` to D0 and subtract it
/// from D1. In a single-pulse cycle there is no interference and each bin
/// splits evenly between the detectors.
pub fn amzi_components(components: &[AmziComponent], single_pulse: bool, visibility: f64) -> BinTable {
    let mut t = BinTable::default();
    let mut interference = 0.0;
    for c in components.iter().filter(|c| c.photons > 0.0) {
        let half = 0.5 * c.photons;
        let outer = if c.slot == Slot::Early { Bin::Early } else { Bin::Late };
        if single_pulse {
            t.add(outer, 0, 0.5 * half);
            t.add(outer, 1, 0.5 * half);
        } else {
            t.add(outer, if c.slot == Slot::Early { 0 } else { 1 }, half);
        }
        t.add(Bin::Middle, 0, 0.5 * half);
        t.add(Bin::Middle, 1, 0.5 * half);
        if single_pulse || c.slot != Slot::Early {
            continue;
        }
        let Some(id) = c.coherence else { continue };
        for l in components
            .iter()
            .filter(|l| l.slot == Slot::Late && l.coherence == Some(id) && l.photons > 0.0)
        {
            interference += 0.5 * visibility * (c.photons * l.photons).sqrt() * (c.phase_rad - l.phase_rad).cos();
        }
    }
    let m = Bin::Middle.index();
    t.0[m][0] += interference;
    t.0[m][1] -= interference;
    // rounding can leave -1e-17 on a fully dark port
    t.0[m][0] = t.0[m][0].max(0.0);
    t.0[m][1] = t.0[m][1].max(0.0);
    t
}

/// Probability table for an upconverted pair, or a single pulse when one
/// slot is empty.
pub fn amzi_bin_distribution(
    early: Option<&OpticalPulse>,
    late: Option<&OpticalPulse>,
    delay_ps: f64,
    amzi: &AmziConfig,
) -> Result<BinTable> {
    let single = early.is_none() || late.is_none();
    if let (Some(e), Some(l)) = (early, late) {
        let sep = l.arrival_ps() - e.arrival_ps();
        if (sep - delay_ps).abs() > amzi.tolerance_ps {
            return Err(Error::domain(format!(
                "pulse separation {sep} ps does not match AMZI delay {delay_ps} ps"
            )));
        }
    }
    let comps: Vec<AmziComponent> = [(Slot::Early, early), (Slot::Late, late)]
        .into_iter()
        .filter_map(|(slot, p)| {
            p.map(|p| AmziComponent {
                slot,
                photons: p.mean_photons(),
                phase_rad: p.phase_rad(),
                coherence: Some(0),
            })
        })
        .collect();
    Ok(amzi_components(&comps, single, amzi.visibility))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub eta_d: f64,
    pub dark_cps: f64,
    pub dead_time_ns: f64,
    pub max_rate_cps: f64,
    /// Continuous power above which the SPAD stops operating in Geiger mode.
    pub blind_power_w: f64,
    /// Peak power that produces a click from a blinded SPAD.
    pub click_threshold_w: f64,
    /// Average power causing permanent damage.
    pub damage_threshold_w: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            eta_d: 0.8,
            dark_cps: 50.0,
            dead_time_ns: 20.0,
            max_rate_cps: 5e7,
            blind_power_w: 50e-6,
            click_threshold_w: 250e-6,
            damage_threshold_w: 0.2,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, r: &str| Err((format!("detector.{k}"), r.to_string()));
        if !(0.0..=1.0).contains(&self.eta_d) {
            return bad("eta_d", "must lie in [0, 1]");
        }
        for (k, v) in [
            ("dark_cps", self.dark_cps),
            ("dead_time_ns", self.dead_time_ns),
            ("blind_power_w", self.blind_power_w),
            ("click_threshold_w", self.click_threshold_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(k, "must be >= 0");
            }
        }
        if !(self.max_rate_cps > 0.0) {
            return bad("max_rate_cps", "must be > 0");
        }
        if !(self.damage_threshold_w > self.click_threshold_w) {
            return bad("damage_threshold_w", "must exceed click_threshold_w");
        }
        Ok(())
    }

    pub fn dead_time_ps(&self) -> f64 {
        self.dead_time_ns * 1e3
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectorState {
    pub last_click_ps: Option<f64>,
    pub first_click_ps: Option<f64>,
    pub damaged: bool,
    pub clicks: u64,
}

/// Light hitting one detector during one bin.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Illumination {
    /// Mean photon number in the bin window (before detection efficiency).
    pub photons: f64,
    /// Peak power during the bin.
    pub peak_power_w: f64,
    /// Continuous background power.
    pub cw_power_w: f64,
    /// Time-averaged total power, used for damage.
    pub average_power_w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpadResult {
    pub click: bool,
    pub blinded: bool,
    /// Set on the call that damaged the detector.
    pub newly_damaged: bool,
}

/// One detection opportunity of a free-running SPAD at absolute time `t_ps`
/// with bin width `bin_ps`.
pub fn spad_detect<R: Rng + ?Sized>(
    light: &Illumination,
    t_ps: f64,
    bin_ps: f64,
    det: &DetectorModel,
    state: &mut DetectorState,
    rng: &mut R,
) -> SpadResult {
    let mut out = SpadResult {
        click: false,
        blinded: false,
        newly_damaged: false,
    };
    if state.damaged {
        return out;
    }
    if light.average_power_w >= det.damage_threshold_w {
        state.damaged = true;
        out.newly_damaged = true;
        return out;
    }
    let click = if light.cw_power_w >= det.blind_power_w {
        out.blinded = true;
        light.peak_power_w >= det.click_threshold_w
    } else {
        if !detector_armed(light, t_ps, det, state) {
            return out;
        }
        let m = light.photons * det.eta_d + det.dark_cps * bin_ps * 1e-12;
        m > 0.0 && rng.random::<f64>() < -(-m).exp_m1()
    };
    if click {
        state.last_click_ps = Some(t_ps);
        state.first_click_ps.get_or_insert(t_ps);
        state.clicks += 1;
    }
    out.click = click;
    out
}

/// Whether the SPAD can register a click at `t_ps`: not damaged, and either
/// blinded or past its dead time.
pub fn detector_armed(light: &Illumination, t_ps: f64, det: &DetectorModel, state: &DetectorState) -> bool {
    !state.damaged
        && (light.cw_power_w >= det.blind_power_w
            || !state.last_click_ps.is_some_and(|t| t_ps - t < det.dead_time_ps()))
}

/// Geiger-mode click probability `1 − exp(−(μ·η_d + D·τ_bin))`.
pub fn click_probability(mean_photons: f64, bin_ps: f64, det: &DetectorModel) -> f64 {
    -(-(mean_photons * det.eta_d + det.dark_cps * bin_ps * 1e-12)).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pair(mu: f64, dphi: f64) -> (OpticalPulse, OpticalPulse) {
        (
            OpticalPulse::quantum(829.0, mu / 2.0, 80.0, 150.0, dphi),
            OpticalPulse::quantum(829.0, mu / 2.0, 80.0, 500.0, 0.0),
        )
    }

    fn table(mu: f64, dphi: f64) -> BinTable {
        let (e, l) = pair(mu, dphi);
        amzi_bin_distribution(Some(&e), Some(&l), 350.0, &AmziConfig::default()).unwrap()
    }

    #[test]
    fn middle_bin_examples() {
        let t = table(1.0, 0.0);
        assert_relative_eq!(t.get(Bin::Middle, 0), 0.5, max_relative = 1e-12);
        assert!(t.get(Bin::Middle, 1).abs() < 1e-15);
        assert_relative_eq!(t.get(Bin::Early, 0), 0.25, max_relative = 1e-12);
        assert_eq!(t.get(Bin::Early, 1), 0.0);
        assert_relative_eq!(t.get(Bin::Late, 1), 0.25, max_relative = 1e-12);
        let t = table(1.0, PI);
        assert!(t.get(Bin::Middle, 0) < 1e-15);
        assert_relative_eq!(t.get(Bin::Middle, 1), 0.5, max_relative = 1e-12);
        let t = table(1.0, PI / 2.0);
        assert_relative_eq!(t.get(Bin::Middle, 0), 0.25, max_relative = 1e-12);
        assert_relative_eq!(t.get(Bin::Middle, 1), 0.25, max_relative = 1e-12);
        assert_relative_eq!(t.total(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn single_pulse_has_no_interference() {
        let (e, _) = pair(1.0, 0.3);
        let t = amzi_bin_distribution(Some(&e), None, 350.0, &AmziConfig::default()).unwrap();
        assert_eq!(t.get(Bin::Late, 0) + t.get(Bin::Late, 1), 0.0);
        assert_eq!(t.get(Bin::Middle, 0), t.get(Bin::Middle, 1));
        assert_eq!(t.get(Bin::Early, 0), t.get(Bin::Early, 1));
        assert_relative_eq!(t.get(Bin::Middle, 0) + t.get(Bin::Middle, 1), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn separation_mismatch_is_rejected() {
        let e = OpticalPulse::quantum(829.0, 0.5, 80.0, 0.0, 0.0);
        let l = OpticalPulse::quantum(829.0, 0.5, 80.0, 300.0, 0.0);
        assert!(amzi_bin_distribution(Some(&e), Some(&l), 350.0, &AmziConfig::default()).is_err());
    }

    #[test]
    fn incoherent_light_does_not_interfere() {
        let comps = [
            AmziComponent {
                slot: Slot::Early,
                photons: 1.0,
                phase_rad: 0.0,
                coherence: None,
            },
            AmziComponent {
                slot: Slot::Late,
                photons: 1.0,
                phase_rad: 0.0,
                coherence: None,
            },
        ];
        let t = amzi_components(&comps, false, 1.0);
        assert_eq!(t.get(Bin::Middle, 0), t.get(Bin::Middle, 1));
    }

    #[test]
    fn click_probability_examples() {
        let det = DetectorModel {
            dark_cps: 0.0,
            ..DetectorModel::default()
        };
        assert_eq!(click_probability(0.0, 110.0, &det), 0.0);
        assert_relative_eq!(click_probability(1.0, 110.0, &det), 0.550_671_0, max_relative = 1e-7);
    }

    #[test]
    fn dark_detector_never_clicks() {
        let det = DetectorModel {
            dark_cps: 0.0,
            ..DetectorModel::default()
        };
        let mut st = DetectorState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..10_000 {
            let r = spad_detect(&Illumination::default(), i as f64 * 1000.0, 110.0, &det, &mut st, &mut rng);
            assert!(!r.click);
        }
    }

    #[test]
    fn geiger_frequency_matches_closed_form() {
        let det = DetectorModel {
            dark_cps: 0.0,
            dead_time_ns: 0.0,
            ..DetectorModel::default()
        };
        let mut st = DetectorState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let light = Illumination {
            photons: 1.0,
            ..Illumination::default()
        };
        let clicks = (0..n)
            .filter(|&i| spad_detect(&light, i as f64 * 1000.0, 110.0, &det, &mut st, &mut rng).click)
            .count() as f64;
        let p = 1.0 - (-0.8f64).exp();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((clicks / n as f64 - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn blinded_detector_clicks_on_threshold() {
        let det = DetectorModel {
            click_threshold_w: 150e-6,
            ..DetectorModel::default()
        };
        let mut st = DetectorState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bright = Illumination {
            photons: 0.0,
            peak_power_w: 200e-6,
            cw_power_w: 1e-3,
            average_power_w: 1e-3,
        };
        for i in 0..100 {
            let r = spad_detect(&bright, i as f64, 110.0, &det, &mut st, &mut rng);
            assert!(r.click && r.blinded);
        }
        let faint = Illumination {
            photons: 1e6,
            peak_power_w: 100e-6,
            ..bright
        };
        assert!(!spad_detect(&faint, 1e6, 110.0, &det, &mut st, &mut rng).click);
    }

    #[test]
    fn damage_is_absorbing() {
        let det = DetectorModel::default();
        let mut st = DetectorState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let burn = Illumination {
            average_power_w: 1.0,
            ..Illumination::default()
        };
        assert!(spad_detect(&burn, 0.0, 110.0, &det, &mut st, &mut rng).newly_damaged);
        let bright = Illumination {
            photons: 1e6,
            ..Illumination::default()
        };
        for i in 1..100 {
            let r = spad_detect(&bright, i as f64 * 1e5, 110.0, &det, &mut st, &mut rng);
            assert!(!r.click && !r.newly_damaged);
        }
    }

    #[test]
    fn dead_time_caps_click_rate() {
        let det = DetectorModel::default();
        let mut st = DetectorState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let flood = Illumination {
            photons: 1e3,
            ..Illumination::default()
        };
        let period = 1000.0;
        let n = 100_000u64;
        let clicks = (0..n)
            .filter(|&i| spad_detect(&flood, i as f64 * period, 110.0, &det, &mut st, &mut rng).click)
            .count() as f64;
        let rate = clicks / (n as f64 * period * 1e-12);
        assert!(rate <= 1.0 / (det.dead_time_ns * 1e-9) * (1.0 + 1e-9));
        assert!(rate > 0.9 / (det.dead_time_ns * 1e-9));
    }

    proptest! {
        #[test]
        fn rows_sum_to_mean_photons(mu in 0.0..10.0f64, dphi in -10.0..10.0f64, single in any::<bool>()) {
            let (e, l) = pair(mu, dphi);
            let t = if single {
                amzi_bin_distribution(Some(&e), None, 350.0, &AmziConfig::default()).unwrap()
            } else {
                amzi_bin_distribution(Some(&e), Some(&l), 350.0, &AmziConfig::default()).unwrap()
            };
            let want = if single { mu / 2.0 } else { mu };
            prop_assert!((t.total() - want).abs() <= 1e-12 * want.max(1.0));
        }

        #[test]
        fn middle_fraction_is_cos_squared(dphi in 0.0..(2.0 * PI)) {
            let t = table(1.0, dphi);
            let f = t.middle_d0_fraction();
            prop_assert!((f - (dphi / 2.0).cos().powi(2)).abs() < 1e-12);
        }
    }
}
