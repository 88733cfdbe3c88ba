//! Pump-depletion and residual-signal monitors, the single-pulse sampling
//! test, and alarm aggregation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::photonics::OpticalPulse;
use crate::protocol::CycleRecord;
use crate::upconversion::PumpConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Smallest fractional change of the output pump the monitor resolves.
    pub zeta_min: f64,
    pub signal_monitor_min_photons: f64,
    /// Single-pulse cycles per sampling test.
    pub nabc_window: usize,
    pub nabc_alpha: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            zeta_min: 1e-3,
            signal_monitor_min_photons: 1e3,
            nabc_window: 1000,
            nabc_alpha: 0.01,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, r: &str| Err((format!("monitor.{k}"), r.to_string()));
        if !(self.zeta_min > 0.0 && self.zeta_min < 1.0) {
            return bad("zeta_min", "must lie in (0, 1)");
        }
        if self.nabc_window < 1 {
            return bad("nabc_window", "must be >= 1");
        }
        if !(self.nabc_alpha > 0.0 && self.nabc_alpha < 1.0) {
            return bad("nabc_alpha", "must lie in (0, 1)");
        }
        if !(self.signal_monitor_min_photons > 0.0) {
            return bad("signal_monitor_min_photons", "must be > 0");
        }
        Ok(())
    }

    /// Reading reported by a monitor of resolution `zeta_min`.
    pub fn quantize(&self, zeta: f64) -> f64 {
        if zeta < self.zeta_min {
            0.0
        } else {
            zeta
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlarmKind {
    PumpDepletion,
    SignalResidual,
    NabcStatistics,
    Damage,
    Fuse,
}

impl AlarmKind {
    pub const ALL: [AlarmKind; 5] = [
        AlarmKind::PumpDepletion,
        AlarmKind::SignalResidual,
        AlarmKind::NabcStatistics,
        AlarmKind::Damage,
        AlarmKind::Fuse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlarmKind::PumpDepletion => "pump-depletion",
            AlarmKind::SignalResidual => "signal-residual",
            AlarmKind::NabcStatistics => "nabc-statistics",
            AlarmKind::Damage => "damage",
            AlarmKind::Fuse => "fuse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlarmRecord {
    pub cycle_index: u64,
    pub kind: AlarmKind,
    pub value: f64,
}

/// `|1 − P_meas/P_ref|`.
pub fn depletion(p_out_ref_w: f64, p_out_meas_w: f64) -> Result<f64> {
    if !(p_out_ref_w > 0.0) {
        return Err(Error::domain(format!("reference pump power {p_out_ref_w} W must be > 0")));
    }
    Ok((1.0 - p_out_meas_w / p_out_ref_w).abs())
}

/// Smallest faked-state peak power the depletion monitor catches:
/// `ζ_min·P_out·λ_pump·τ_pump / (λ_sig·τ_sig)`, assuming full overlap and
/// unit conversion.
pub fn min_detectable_peak(cfg: &MonitorConfig, pump: &PumpConfig, tau_sig_ps: f64, lambda_sig_nm: f64) -> f64 {
    cfg.zeta_min * pump.p_peak_w * pump.lambda_pump_nm * pump.tau_pump_ps / (lambda_sig_nm * tau_sig_ps)
}

/// Residual photon count if it reaches the signal-monitor threshold.
pub fn signal_monitor(residual: &OpticalPulse, cfg: &MonitorConfig) -> Option<f64> {
    signal_monitor_photons(residual.mean_photons(), cfg)
}

pub fn signal_monitor_photons(photons: f64, cfg: &MonitorConfig) -> Option<f64> {
    (photons >= cfg.signal_monitor_min_photons).then_some(photons)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum NabcOutcome {
    Inconclusive {
        reason: String,
    },
    Pass {
        p_value: f64,
    },
    Alarm {
        p_value: f64,
        /// Which sub-test fired: `"correlation"` or `"double_click"`.
        test: String,
    },
}

impl NabcOutcome {
    pub fn is_alarm(&self) -> bool {
        matches!(self, NabcOutcome::Alarm { .. })
    }
}

/// Two-sided exact binomial p-value of `k` successes out of `n` at `p = ½`.
fn two_sided_half(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    let lo = k.min(n - k);
    // P(X ≤ lo) + P(X ≥ n − lo), symmetric at p = ½
    (2.0 * b.cdf(lo)).min(1.0)
}

/// One-sided upper-tail p-value `P(X ≥ k)` for `X ~ Bin(n, p)`.
fn upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let b = Binomial::new(p, n).expect("valid binomial");
    b.sf(k - 1)
}

/// Statistical test over single-pulse sampling cycles.
///
/// With a single pump pulse the middle bin cannot interfere, so an honest
/// receiver's D0/D1 choice is independent of Bob's pump phase. For each pump
/// phase the D0 share of single middle-bin clicks is tested against ½
/// (two-sided). Double clicks are counted over the bins in which both
/// detectors were armed, so dead time cannot hide them, and tested against
/// the honest per-bin probability `honest_double_click_prob` (upper tail). The three
/// p-values are Bonferroni-corrected against `nabc_alpha`.
pub fn nabc_sample_test(records: &[CycleRecord], cfg: &MonitorConfig, honest_double_click_prob: f64) -> NabcOutcome {
    let sampled: Vec<&CycleRecord> = records.iter().filter(|r| r.single_pulse).collect();
    if sampled.len() < cfg.nabc_window {
        return NabcOutcome::Inconclusive {
            reason: format!("{} sampled cycles, window {}", sampled.len(), cfg.nabc_window),
        };
    }
    let mut d0 = [0u64; 2];
    let mut singles = [0u64; 2];
    let mut doubles = 0u64;
    let mut coincidence_bins = 0u64;
    let mut any = 0u64;
    for r in &sampled {
        let m = r.outcomes[crate::detection::Bin::Middle.index()];
        if r.outcomes.iter().any(|o| o.any()) {
            any += 1;
        }
        for (o, armed) in r.outcomes.iter().zip(&r.armed) {
            if armed[0] && armed[1] {
                coincidence_bins += 1;
                doubles += u64::from(o.double());
            }
        }
        if let Some(b) = m.single() {
            singles[r.bob_basis] += 1;
            if b == 0 {
                d0[r.bob_basis] += 1;
            }
        }
    }
    if any == 0 {
        return NabcOutcome::Inconclusive {
            reason: "no detections".into(),
        };
    }
    let tests = 3.0;
    let p_corr = [0, 1].map(|b| two_sided_half(d0[b], singles[b]));
    let p_dc = upper_tail(doubles, coincidence_bins, honest_double_click_prob);
    let min_corr = p_corr[0].min(p_corr[1]);
    let level = cfg.nabc_alpha / tests;
    if min_corr <= level || p_dc <= level {
        let (p, test) = if min_corr <= p_dc {
            (min_corr, "correlation")
        } else {
            (p_dc, "double_click")
        };
        NabcOutcome::Alarm {
            p_value: (p * tests).min(1.0),
            test: test.into(),
        }
    } else {
        NabcOutcome::Pass {
            p_value: (min_corr.min(p_dc) * tests).min(1.0),
        }
    }
}

/// Per-cycle monitor readings.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MonitorReading {
    pub cycle_index: u64,
    /// Largest fractional depletion over the cycle's pump pulses.
    pub zeta: f64,
    pub residual_photons: f64,
    pub damage: bool,
    pub fuse: bool,
}

/// Alarms raised by one cycle's readings, in `AlarmKind` order.
pub fn cycle_alarms(r: &MonitorReading, cfg: &MonitorConfig) -> Vec<AlarmRecord> {
    let mut out = Vec::new();
    let z = cfg.quantize(r.zeta);
    if z > 0.0 {
        out.push(AlarmRecord {
            cycle_index: r.cycle_index,
            kind: AlarmKind::PumpDepletion,
            value: z,
        });
    }
    if let Some(n) = signal_monitor_photons(r.residual_photons, cfg) {
        out.push(AlarmRecord {
            cycle_index: r.cycle_index,
            kind: AlarmKind::SignalResidual,
            value: n,
        });
    }
    if r.damage {
        out.push(AlarmRecord {
            cycle_index: r.cycle_index,
            kind: AlarmKind::Damage,
            value: 1.0,
        });
    }
    if r.fuse {
        out.push(AlarmRecord {
            cycle_index: r.cycle_index,
            kind: AlarmKind::Fuse,
            value: 1.0,
        });
    }
    out
}

/// Fold per-cycle readings into an alarm log sorted by cycle then kind.
pub fn aggregate_alarms(readings: &[MonitorReading], cfg: &MonitorConfig) -> Vec<AlarmRecord> {
    let mut out: Vec<AlarmRecord> = readings.iter().flat_map(|r| cycle_alarms(r, cfg)).collect();
    out.sort_by(|a, b| a.cycle_index.cmp(&b.cycle_index).then(a.kind.cmp(&b.kind)));
    out
}
