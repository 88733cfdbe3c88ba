//! Deterministic block-parallel Monte-Carlo driver.
//!
//! Cycle `i` of a run with seed `s` draws all its randomness from a ChaCha8
//! stream seeded with `cycle_seed(s, i)`. Cycles are grouped into fixed
//! blocks of `block_size`; each block starts with fresh detector state and
//! is simulated sequentially, so dead time is tracked inside a block. Blocks
//! run on a rayon pool and are merged in index order, which makes the result
//! independent of the worker count.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::report::{build_report, RunReport, Timing};
use crate::detection::Bin;
use crate::error::{Error, Result};
use crate::monitors::{nabc_sample_test, AlarmKind, AlarmRecord};
use crate::protocol::{run_stream, sift, CycleRecord, System};

/// SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of cycle `index` in a run seeded with `seed`.
pub fn cycle_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}

pub fn cycle_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cycle_seed(seed, index))
}

/// Counters that merge by addition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stats {
    pub cycles: u64,
    pub single_pulse_cycles: u64,
    pub attacked_cycles: u64,
    pub blinded_cycles: u64,
    pub sifted_bits: u64,
    pub sifted_errors: u64,
    /// Middle-bin double clicks in double-pulse cycles.
    pub double_clicks: u64,
    pub middle_clicks: u64,
    pub detector_clicks: [u64; 2],
    pub alarm_cycles: u64,
    pub max_zeta: f64,
    pub max_residual_photons: f64,
    pub max_out_of_gate_sum_power_w: f64,
}

impl Stats {
    fn from_records(records: &[CycleRecord]) -> Stats {
        let mut s = Stats::default();
        for r in records {
            s.cycles += 1;
            s.single_pulse_cycles += u64::from(r.single_pulse);
            s.attacked_cycles += u64::from(r.attacked);
            s.blinded_cycles += u64::from(r.blinded);
            s.alarm_cycles += u64::from(!r.alarms.is_empty());
            s.middle_clicks += u64::from(r.outcomes[Bin::Middle.index()].any());
            for o in &r.outcomes {
                s.detector_clicks[0] += u64::from(o.d0_click);
                s.detector_clicks[1] += u64::from(o.d1_click);
            }
            s.max_zeta = s.max_zeta.max(r.zeta);
            s.max_residual_photons = s.max_residual_photons.max(r.residual_photons);
            s.max_out_of_gate_sum_power_w = s.max_out_of_gate_sum_power_w.max(r.out_of_gate_sum_power_w);
        }
        let sifted = sift(records);
        s.sifted_bits = sifted.pairs.len() as u64;
        s.sifted_errors = sifted.pairs.iter().filter(|(a, b)| a != b).count() as u64;
        s.double_clicks = sifted.double_clicks;
        s
    }

    fn merge(&mut self, o: &Stats) {
        self.cycles += o.cycles;
        self.single_pulse_cycles += o.single_pulse_cycles;
        self.attacked_cycles += o.attacked_cycles;
        self.blinded_cycles += o.blinded_cycles;
        self.sifted_bits += o.sifted_bits;
        self.sifted_errors += o.sifted_errors;
        self.double_clicks += o.double_clicks;
        self.middle_clicks += o.middle_clicks;
        self.detector_clicks[0] += o.detector_clicks[0];
        self.detector_clicks[1] += o.detector_clicks[1];
        self.alarm_cycles += o.alarm_cycles;
        self.max_zeta = self.max_zeta.max(o.max_zeta);
        self.max_residual_photons = self.max_residual_photons.max(o.max_residual_photons);
        self.max_out_of_gate_sum_power_w = self.max_out_of_gate_sum_power_w.max(o.max_out_of_gate_sum_power_w);
    }
}

struct Block {
    stats: Stats,
    /// First fuse or damage event, which ends the run.
    terminal: Option<(u64, AlarmKind)>,
    alarms: Vec<AlarmRecord>,
    sampled: Vec<CycleRecord>,
    records: Option<Vec<CycleRecord>>,
    first_click: [Option<f64>; 2],
    last_click: [Option<f64>; 2],
}

fn run_block(sys: &System, seed: u64, first: u64, n: u64, keep: bool) -> Result<Block> {
    let (mut recs, dets) = run_stream(sys, first, n, |i| cycle_rng(seed, i))?;
    let terminal = recs.iter().find_map(|r| {
        r.alarms
            .iter()
            .find(|a| matches!(a.kind, AlarmKind::Fuse | AlarmKind::Damage))
            .map(|a| (r.cycle_index, a.kind))
    });
    if let Some((idx, _)) = terminal {
        recs.truncate((idx - first + 1) as usize);
    }
    Ok(Block {
        stats: Stats::from_records(&recs),
        terminal,
        alarms: recs.iter().flat_map(|r| r.alarms.iter().copied()).collect(),
        sampled: recs.iter().filter(|r| r.single_pulse).cloned().collect(),
        first_click: dets.each_ref().map(|d| d.first_click_ps),
        last_click: dets.each_ref().map(|d| d.last_click_ps),
        records: keep.then_some(recs),
    })
}

/// Result of the single-pulse sampling test over a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NabcSummary {
    pub windows_tested: u64,
    pub windows_inconclusive: u64,
    pub alarms: u64,
    pub honest_double_click_bound: f64,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub alarms: Vec<AlarmRecord>,
    /// Per-cycle records, kept only when requested.
    pub records: Option<Vec<CycleRecord>>,
    pub timing: Timing,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; the global rayon pool when `None`.
    pub workers: Option<usize>,
    pub keep_records: bool,
}

/// Simulate `cfg.n_cycles` cycles of a resolved scenario.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput> {
    let started = Instant::now();
    let sys = cfg.system()?;
    sys.validate()?;
    let bs = cfg.block_size;
    let n_blocks = cfg.n_cycles.div_ceil(bs);
    let work = || -> Result<Vec<Block>> {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let first = b * bs;
                let n = bs.min(cfg.n_cycles - first);
                run_block(&sys, cfg.seed, first, n, opts.keep_records)
            })
            .collect()
    };
    let blocks = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut stats = Stats::default();
    let mut alarms = Vec::new();
    let mut sampled = Vec::new();
    let mut records: Option<Vec<CycleRecord>> = opts.keep_records.then(Vec::new);
    let mut terminal = None;
    let mut boundary_violations = 0u64;
    let dead_ps = cfg.detector.dead_time_ps();
    let mut prev_last: [Option<f64>; 2] = [None, None];
    for b in blocks {
        for (d, prev) in prev_last.iter_mut().enumerate() {
            if let (Some(l), Some(f)) = (*prev, b.first_click[d]) {
                if f - l < dead_ps {
                    boundary_violations += 1;
                }
            }
            if b.last_click[d].is_some() {
                *prev = b.last_click[d];
            }
        }
        stats.merge(&b.stats);
        alarms.extend(b.alarms);
        sampled.extend(b.sampled);
        if let (Some(all), Some(r)) = (records.as_mut(), b.records) {
            all.extend(r);
        }
        if b.terminal.is_some() {
            terminal = b.terminal;
            break;
        }
    }

    let p_dc = sys.honest_sampling_double_click_prob()?;
    let mut nabc = NabcSummary {
        honest_double_click_bound: p_dc,
        ..NabcSummary::default()
    };
    for w in sampled.chunks(cfg.monitor.nabc_window) {
        if w.len() < cfg.monitor.nabc_window {
            break;
        }
        nabc.windows_tested += 1;
        match nabc_sample_test(w, &cfg.monitor, p_dc) {
            crate::monitors::NabcOutcome::Alarm { p_value, .. } => {
                nabc.alarms += 1;
                alarms.push(AlarmRecord {
                    cycle_index: w.last().map(|r| r.cycle_index).unwrap_or(0),
                    kind: AlarmKind::NabcStatistics,
                    value: p_value,
                });
            }
            crate::monitors::NabcOutcome::Inconclusive { .. } => nabc.windows_inconclusive += 1,
            crate::monitors::NabcOutcome::Pass { .. } => {}
        }
    }
    alarms.sort_by(|a, b| a.cycle_index.cmp(&b.cycle_index).then(a.kind.cmp(&b.kind)));

    let report = build_report(cfg, &sys, &stats, &alarms, &nabc, terminal, boundary_violations)?;
    let elapsed = started.elapsed().as_secs_f64();
    let timing = Timing {
        wall_clock_s: elapsed,
        cycles_per_s: if elapsed > 0.0 {
            stats.cycles as f64 / elapsed
        } else {
            0.0
        },
        workers: opts.workers.unwrap_or_else(rayon::current_num_threads),
    };
    Ok(RunOutput {
        report,
        alarms,
        records,
        timing,
    })
}

/// One point of a parameter scan.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub alarm_prob: f64,
    pub qber: Option<f64>,
    pub sifted_rate: f64,
}

/// `key=start:stop:steps`, `steps` points spaced linearly, inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl std::str::FromStr for SweepSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("--sweep", format!("expected key=start:stop:steps, got `{s}`"));
        let (key, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 || key.is_empty() {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        Ok(SweepSpec {
            key: key.trim().to_string(),
            start,
            stop,
            steps,
        })
    }
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// Run `base` once per sweep value with `scan.key` overridden.
pub fn run_sweep(base: &ScenarioConfig, scan: &SweepSpec, opts: &RunOptions) -> Result<Vec<SweepRow>> {
    let base_value = serde_json::to_value(base)?;
    let opts = RunOptions {
        keep_records: false,
        ..opts.clone()
    };
    scan.values()
        .into_iter()
        .map(|v| {
            let mut val = base_value.clone();
            super::config::set_dotted(&mut val, &scan.key, serde_json::json!(v))?;
            let cfg = super::config::scenario_from_value(val)?;
            let out = run(&cfg, &opts)?;
            let r = &out.report;
            Ok(SweepRow {
                parameter: v,
                alarm_prob: r.alarm_probability,
                qber: r.qber,
                sifted_rate: r.sifted_rate_bps,
            })
        })
        .collect()
}
