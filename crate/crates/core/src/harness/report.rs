//! Run report, closed-form analysis section and file emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::engine::{NabcSummary, Stats, SweepRow};
use crate::adversary::{
    conversion_ceiling_w, damage_assessment, trojan_leak_estimate, DamageAssessment, DamageTarget, TrojanEstimate,
    DEFAULT_BACK_REFLECTION_DB, FUSE_LIMIT_W,
};
use crate::error::Result;
use crate::monitors::{min_detectable_peak, AlarmKind, AlarmRecord};
use crate::photonics::{check_lwi, lwi_sweep, LwiPoint, Passband};
use crate::protocol::{CycleRecord, System};
use crate::upconversion::{conversion_efficiency, gated_bound_on_sum_power, pedestal_flux_ceiling};

/// Version of the physical model; bump when simulated statistics change.
pub const MODEL_VERSION: &str = "ucpqkd-model/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub cycle_index: u64,
    pub kind: AlarmKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateSection {
    pub formula: String,
    pub rep_rate_hz: f64,
    pub mu: f64,
    pub channel_transmission: f64,
    pub eta_ov: f64,
    pub sifting_factor: f64,
    pub estimate_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LwiSection {
    pub threshold_db: f64,
    pub grid_points: usize,
    pub violation_count: usize,
    pub violations: Vec<LwiPoint>,
    /// Pre-stack attenuation at the pump wavelength.
    pub pump_isolation_db: f64,
    /// Power inside the waveguide for a fuse-limit input at the pump wavelength.
    pub pump_at_fuse_limit_in_waveguide_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSection {
    pub zeta_min: f64,
    pub formula: String,
    /// In-waveguide faked-state peak power at unit conversion and full overlap.
    pub min_detectable_peak_w: f64,
    /// Same, referred to the receiver input with this receiver's losses and
    /// conversion efficiency.
    pub effective_min_peak_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatingSection {
    pub gate_width_ps: f64,
    pub pedestal_w: f64,
    /// `P_ped·λ_sig/λ_sum`.
    pub gated_bound_w: f64,
    /// `P_ped·λ_pump/λ_sum`.
    pub flux_ceiling_w: f64,
    pub max_simulated_out_of_gate_w: f64,
    pub ceiling_respected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub lambda_sum_nm: f64,
    pub lwi: LwiSection,
    pub thresholds: ThresholdSection,
    pub gating: GatingSection,
    pub damage_conversion_ceiling_w: f64,
    pub damage: Vec<DamageAssessment>,
    pub worst_damage_over_grid: DamageAssessment,
    pub trojan: Vec<TrojanEstimate>,
    pub key_rate: KeyRateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NabcSection {
    pub window: usize,
    pub alpha: f64,
    pub windows_tested: u64,
    pub windows_inconclusive: u64,
    pub alarms: u64,
    pub honest_double_click_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSection {
    pub clicks: [u64; 2],
    pub click_rate_cps: [f64; 2],
    pub saturated: bool,
    pub dead_time_boundary_violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_version: String,
    pub seed: u64,
    pub n_cycles_requested: u64,
    pub n_cycles_run: u64,
    pub partial: bool,
    pub termination: Option<Termination>,
    pub attack_kind: String,
    pub sifted_bits: u64,
    pub sifted_errors: u64,
    pub sifted_rate_bps: f64,
    pub qber: Option<f64>,
    pub double_clicks: u64,
    pub double_click_rate: f64,
    pub middle_clicks: u64,
    pub single_pulse_cycles: u64,
    pub attacked_cycles: u64,
    pub blinded_cycles: u64,
    pub alarm_counts: BTreeMap<String, u64>,
    pub alarm_cycles: u64,
    pub alarm_probability: f64,
    pub max_zeta: f64,
    pub max_residual_photons: f64,
    pub nabc: NabcSection,
    pub detectors: DetectorSection,
    pub dead_time_boundary_violations: u64,
    pub analysis: Analysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTable>,
    pub parameters: ScenarioConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub key: String,
    pub rows: Vec<SweepRow>,
}

impl RunReport {
    pub fn total_alarms(&self) -> u64 {
        self.alarm_counts.values().sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Wall-clock figures, kept out of the report so it stays reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
    pub cycles_per_s: f64,
    pub workers: usize,
}

pub fn build_analysis(cfg: &ScenarioConfig, sys: &System, max_out_of_gate_w: f64) -> Result<Analysis> {
    let rx = &sys.receiver;
    let pump = &rx.pump;
    let ls = sys.source.lambda_sig_nm;
    let lsum = sys.lambda_sum_nm()?;
    let bands = cfg.lwi_bands()?;
    let grid = cfg.filters.lwi_grid;
    let violations = check_lwi(&rx.pre, &rx.post, &bands, &grid)?;
    let pump_iso = rx.pre.attenuation_db(pump.lambda_pump_nm)?;

    let mdp = min_detectable_peak(&rx.monitor, pump, sys.source.tau_sig_ps, ls);
    let eff_scale = rx.pre.transmission(ls)?
        * rx.waveguide.input_transmission()
        * if rx.waveguide.accepts(ls) {
            conversion_efficiency(pump.p_peak_w, &rx.waveguide)
        } else {
            0.0
        };
    let effective = if eff_scale > 0.0 { mdp / eff_scale } else { f64::MAX };

    let flux = pedestal_flux_ceiling(pump, ls)?;
    let target = DamageTarget {
        pre: &rx.pre,
        post: &rx.post,
        waveguide: &rx.waveguide,
        pump,
        lambda_sig_nm: ls,
        damage_threshold_w: rx.detector.damage_threshold_w,
    };
    let damage = [pump.lambda_pump_nm, ls, lsum]
        .into_iter()
        .map(|wl| damage_assessment(wl, FUSE_LIMIT_W, &target))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: Option<DamageAssessment> = None;
    for wl in grid.points() {
        let a = damage_assessment(wl, FUSE_LIMIT_W, &target)?;
        if worst.as_ref().is_none_or(|w| a.detector_power_w > w.detector_power_w) {
            worst = Some(a);
        }
    }
    let worst = match worst {
        Some(w) => w,
        None => damage_assessment(ls, FUSE_LIMIT_W, &target)?,
    };
    let signal_band = Passband::centered(ls, cfg.filters.signal_bandwidth_nm);
    let br = match sys.attack {
        crate::adversary::AttackStrategy::TrojanProbe { back_reflection_db, .. } => back_reflection_db,
        _ => DEFAULT_BACK_REFLECTION_DB,
    };
    let trojan = [pump.lambda_pump_nm, ls]
        .into_iter()
        .map(|wl| trojan_leak_estimate(wl, FUSE_LIMIT_W, pump.period_ps(), &rx.pre, br, &signal_band))
        .collect::<Result<Vec<_>>>()?;

    let channel_t = sys.channel.transmission();
    let eta_ov = sys.eta_ov()?;
    Ok(Analysis {
        lambda_sum_nm: lsum,
        lwi: LwiSection {
            threshold_db: bands.threshold_db,
            grid_points: grid.points().len(),
            violation_count: violations.len(),
            violations,
            pump_isolation_db: pump_iso,
            pump_at_fuse_limit_in_waveguide_w: FUSE_LIMIT_W
                * crate::photonics::db_to_transmission(pump_iso)
                * rx.waveguide.input_transmission(),
        },
        thresholds: ThresholdSection {
            zeta_min: rx.monitor.zeta_min,
            formula: "zeta_min * P_out * lambda_pump * tau_pump / (lambda_sig * tau_sig)".into(),
            min_detectable_peak_w: mdp,
            effective_min_peak_w: effective,
        },
        gating: GatingSection {
            gate_width_ps: pump.gate_width_ps(),
            pedestal_w: pump.pedestal_w(),
            gated_bound_w: gated_bound_on_sum_power(pump, ls)?,
            flux_ceiling_w: flux,
            max_simulated_out_of_gate_w: max_out_of_gate_w,
            ceiling_respected: max_out_of_gate_w <= flux * (1.0 + 1e-9),
        },
        damage_conversion_ceiling_w: conversion_ceiling_w(&target, ls)?,
        damage,
        worst_damage_over_grid: worst,
        trojan,
        key_rate: KeyRateSection {
            formula: "f_R * mu * T_channel * eta_ov * (1/2 basis) * (1/2 middle bin) * (1 - single_pulse_prob)".into(),
            rep_rate_hz: pump.rep_rate_hz,
            mu: sys.source.mu,
            channel_transmission: channel_t,
            eta_ov,
            sifting_factor: sys.sifting_factor(),
            estimate_bps: sys.key_rate_estimate()?,
        },
    })
}

pub(crate) fn build_report(
    cfg: &ScenarioConfig,
    sys: &System,
    stats: &Stats,
    alarms: &[AlarmRecord],
    nabc: &NabcSummary,
    terminal: Option<(u64, AlarmKind)>,
    boundary_violations: u64,
) -> Result<RunReport> {
    let f_r = cfg.pump.rep_rate_hz;
    let seconds = stats.cycles as f64 / f_r;
    let per_sec = |n: u64| if seconds > 0.0 { n as f64 / seconds } else { 0.0 };
    let mut counts: BTreeMap<String, u64> = AlarmKind::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect();
    for a in alarms {
        *counts.entry(a.kind.as_str().to_string()).or_default() += 1;
    }
    let double_pulse = stats.cycles - stats.single_pulse_cycles;
    let click_rate = [per_sec(stats.detector_clicks[0]), per_sec(stats.detector_clicks[1])];
    Ok(RunReport {
        model_version: MODEL_VERSION.into(),
        seed: cfg.seed,
        n_cycles_requested: cfg.n_cycles,
        n_cycles_run: stats.cycles,
        partial: stats.cycles < cfg.n_cycles,
        termination: terminal.map(|(cycle_index, kind)| Termination { cycle_index, kind }),
        attack_kind: sys.attack.kind().into(),
        sifted_bits: stats.sifted_bits,
        sifted_errors: stats.sifted_errors,
        sifted_rate_bps: per_sec(stats.sifted_bits),
        qber: (stats.sifted_bits > 0).then(|| stats.sifted_errors as f64 / stats.sifted_bits as f64),
        double_clicks: stats.double_clicks,
        double_click_rate: if double_pulse > 0 {
            stats.double_clicks as f64 / double_pulse as f64
        } else {
            0.0
        },
        middle_clicks: stats.middle_clicks,
        single_pulse_cycles: stats.single_pulse_cycles,
        attacked_cycles: stats.attacked_cycles,
        blinded_cycles: stats.blinded_cycles,
        alarm_counts: counts,
        alarm_cycles: stats.alarm_cycles,
        alarm_probability: if stats.cycles > 0 {
            stats.alarm_cycles as f64 / stats.cycles as f64
        } else {
            0.0
        },
        max_zeta: stats.max_zeta,
        max_residual_photons: stats.max_residual_photons,
        nabc: NabcSection {
            window: cfg.monitor.nabc_window,
            alpha: cfg.monitor.nabc_alpha,
            windows_tested: nabc.windows_tested,
            windows_inconclusive: nabc.windows_inconclusive,
            alarms: nabc.alarms,
            honest_double_click_bound: nabc.honest_double_click_bound,
        },
        detectors: DetectorSection {
            clicks: stats.detector_clicks,
            click_rate_cps: click_rate,
            saturated: click_rate.iter().any(|&r| r > cfg.detector.max_rate_cps),
            dead_time_boundary_violations: boundary_violations,
        },
        dead_time_boundary_violations: boundary_violations,
        analysis: build_analysis(cfg, sys, stats.max_out_of_gate_sum_power_w)?,
        sweep: None,
        parameters: cfg.clone(),
    })
}

/// Files written by [`emit`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Emitted {
    pub files: Vec<PathBuf>,
}

/// What to write besides the JSON report.
#[derive(Clone, Copy, Debug, Default)]
pub struct EmitOptions {
    pub lwi_chart: bool,
    pub cycles: bool,
    pub timing: bool,
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    fs::write(path, report.to_json()?)?;
    Ok(())
}

pub fn write_alarms_csv(alarms: &[AlarmRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cycle_index", "kind", "value"])?;
    for a in alarms {
        w.write_record([a.cycle_index.to_string(), a.kind.as_str().to_string(), a.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "alarm_prob", "qber", "sifted_rate"])?;
    for r in rows {
        w.write_record([
            r.parameter.to_string(),
            r.alarm_prob.to_string(),
            r.qber.map(|q| q.to_string()).unwrap_or_default(),
            r.sifted_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lwi_csv(points: &[LwiPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["wavelength_nm", "attenuation_db"])?;
    for p in points {
        let db = if p.attenuation_db.is_infinite() {
            "inf".to_string()
        } else {
            p.attenuation_db.to_string()
        };
        w.write_record([p.wavelength_nm.to_string(), db])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cycles_csv(records: &[CycleRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "cycle_index",
        "alice_bit",
        "alice_basis",
        "bob_basis",
        "single_pulse",
        "early_d0",
        "early_d1",
        "middle_d0",
        "middle_d1",
        "late_d0",
        "late_d1",
        "zeta",
        "residual_photons",
        "alarms",
    ])?;
    let b = |x: bool| if x { "1" } else { "0" }.to_string();
    for r in records {
        let [e, m, l] = r.outcomes;
        let alarms: Vec<&str> = r.alarms.iter().map(|a| a.kind.as_str()).collect();
        w.write_record([
            r.cycle_index.to_string(),
            r.alice.bit.to_string(),
            r.alice.basis.index().to_string(),
            r.bob_basis.to_string(),
            b(r.single_pulse),
            b(e.d0_click),
            b(e.d1_click),
            b(m.d0_click),
            b(m.d1_click),
            b(l.d0_click),
            b(l.d1_click),
            r.zeta.to_string(),
            r.residual_photons.to_string(),
            alarms.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write the report and the requested CSVs into `dir`.
pub fn emit(
    out: &super::engine::RunOutput,
    cfg: &ScenarioConfig,
    dir: &Path,
    opts: EmitOptions,
) -> Result<Emitted> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let p = dir.join("report.json");
    write_report(&out.report, &p)?;
    files.push(p);
    let p = dir.join("alarms.csv");
    write_alarms_csv(&out.alarms, &p)?;
    files.push(p);
    if let Some(sweep) = &out.report.sweep {
        let p = dir.join("sweep.csv");
        write_sweep_csv(&sweep.rows, &p)?;
        files.push(p);
    }
    if opts.lwi_chart {
        let sys = cfg.system()?;
        let pts = lwi_sweep(&sys.receiver.pre, &sys.receiver.post, &cfg.lwi_bands()?, &cfg.filters.lwi_grid)?;
        let p = dir.join("lwi_chart.csv");
        write_lwi_csv(&pts, &p)?;
        files.push(p);
    }
    if opts.cycles {
        if let Some(recs) = &out.records {
            let p = dir.join("cycles.csv");
            write_cycles_csv(recs, &p)?;
            files.push(p);
        }
    }
    if opts.timing {
        let p = dir.join("timing.json");
        fs::write(&p, serde_json::to_string_pretty(&out.timing)? + "\n")?;
        files.push(p);
    }
    Ok(Emitted { files })
}
