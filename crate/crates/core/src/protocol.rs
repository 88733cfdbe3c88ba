//! Time-bin phase BB84: Alice's encoder, the fibre channel, one full
//! receiver cycle, sifting, QBER and the closed-form key rate.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{apply_attack, AttackContext, AttackStrategy, TaggedPulse};
use crate::detection::{
    amzi_components, detector_armed, spad_detect, AmziComponent, AmziConfig, Bin, BinOutcome, DetectorModel, DetectorState,
    Illumination,
};
use crate::error::{Error, Result};
use crate::monitors::{cycle_alarms, depletion, AlarmRecord, MonitorConfig, MonitorReading};
use crate::photonics::{db_to_transmission, photon_energy_j, photon_number, sum_wavelength, FilterStack, OpticalPulse};
use crate::upconversion::{
    conversion_efficiency, pump_pulse_train, upconvert, PumpConfig, PumpTrain, Slot, WaveguideModel,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    #[default]
    Z,
    X,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }
    pub fn from_index(i: usize) -> Basis {
        if i == 0 {
            Basis::Z
        } else {
            Basis::X
        }
    }
}

/// Phase difference between Alice's early and late pulse: `bit·π + basis·π/2`.
pub fn encode_phase(bit: u8, basis: Basis) -> f64 {
    f64::from(bit) * PI + basis.index() as f64 * FRAC_PI_2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AliceChoice {
    pub bit: u8,
    pub basis: Basis,
    pub phase_rad: f64,
    /// Mean photon number of the pair.
    pub mu: f64,
}

impl AliceChoice {
    pub fn new(bit: u8, basis: Basis, mu: f64) -> Self {
        AliceChoice {
            bit,
            basis,
            phase_rad: encode_phase(bit, basis),
            mu,
        }
    }

    pub fn random<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Self {
        let bit = rng.random_range(0..2u8);
        let basis = Basis::from_index(rng.random_range(0..2usize));
        AliceChoice::new(bit, basis, mu)
    }
}

/// Alice's weak-coherent source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub mu: f64,
    pub lambda_sig_nm: f64,
    pub tau_sig_ps: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            mu: 0.2,
            lambda_sig_nm: 1530.0,
            tau_sig_ps: 90.0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |k: &str, r: &str| Err((format!("source.{k}"), r.to_string()));
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", "must be > 0");
        }
        if !(self.lambda_sig_nm > 200.0 && self.lambda_sig_nm < 3000.0) {
            return bad("lambda_sig_nm", "must lie in (200, 3000) nm");
        }
        if !(self.tau_sig_ps > 0.0) {
            return bad("tau_sig_ps", "must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    pub length_km: f64,
    pub loss_db_per_km: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            length_km: 100.0,
            loss_db_per_km: 0.2,
        }
    }
}

impl ChannelModel {
    pub fn loss_db(&self) -> f64 {
        self.length_km * self.loss_db_per_km
    }

    pub fn transmission(&self) -> f64 {
        db_to_transmission(self.loss_db())
    }

    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(("channel.length_km".into(), "must be >= 0".into()));
        }
        if !(self.loss_db_per_km >= 0.0 && self.loss_db_per_km.is_finite()) {
            return Err(("channel.loss_db_per_km".into(), "must be >= 0".into()));
        }
        Ok(())
    }
}

/// Bob's receiver with all filter stacks resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct Receiver {
    pub pump: PumpConfig,
    pub waveguide: WaveguideModel,
    pub pre: FilterStack,
    pub post: FilterStack,
    pub amzi: AmziConfig,
    pub detector: DetectorModel,
    pub monitor: MonitorConfig,
}

/// Everything needed to run cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct System {
    pub source: SourceConfig,
    pub channel: ChannelModel,
    pub attack: AttackStrategy,
    pub receiver: Receiver,
}

/// Cached per-run quantities.
#[derive(Clone, Debug)]
struct Derived {
    lambda_sum_nm: f64,
    t_in: f64,
    t_out: f64,
    t_post_sum: f64,
    period_ps: f64,
    bin_ps: f64,
    amzi_delay_ps: f64,
}

impl System {
    fn derived(&self) -> Result<Derived> {
        let r = &self.receiver;
        let lambda_sum_nm = sum_wavelength(r.pump.lambda_pump_nm, self.source.lambda_sig_nm)?;
        Ok(Derived {
            lambda_sum_nm,
            t_in: r.waveguide.input_transmission(),
            t_out: r.waveguide.output_transmission(),
            t_post_sum: r.post.transmission(lambda_sum_nm)?,
            period_ps: r.pump.period_ps(),
            bin_ps: r.pump.tau_pump_ps,
            amzi_delay_ps: r.amzi.delay_ps.unwrap_or(r.pump.delta_t_ps),
        })
    }

    pub fn lambda_sum_nm(&self) -> Result<f64> {
        sum_wavelength(self.receiver.pump.lambda_pump_nm, self.source.lambda_sig_nm)
    }

    /// Receiver efficiency from the channel output to a click:
    /// `T_pre·T_in·η_c(P_peak)·T_out·T_post·η_d`.
    pub fn eta_ov(&self) -> Result<f64> {
        let r = &self.receiver;
        let ls = self.source.lambda_sig_nm;
        let eta_c = if r.waveguide.accepts(ls) {
            conversion_efficiency(r.pump.p_peak_w, &r.waveguide)
        } else {
            0.0
        };
        Ok(r.pre.transmission(ls)?
            * r.waveguide.input_transmission()
            * eta_c
            * r.waveguide.output_transmission()
            * r.post.transmission(self.lambda_sum_nm()?)?
            * r.detector.eta_d)
    }

    /// Product of the sifting factors: basis match ½, middle bin ½, and the
    /// fraction of double-pulse cycles.
    pub fn sifting_factor(&self) -> f64 {
        0.25 * (1.0 - self.receiver.pump.single_pulse_prob)
    }

    /// Closed-form sifted key rate for this system.
    pub fn key_rate_estimate(&self) -> Result<f64> {
        Ok(key_rate_estimate(
            self.receiver.pump.rep_rate_hz,
            self.source.mu,
            &self.channel,
            self.eta_ov()?,
            self.sifting_factor(),
        ))
    }

    /// Upper bound on the honest probability of a double click in one bin of
    /// a single-pulse cycle with both detectors armed. A bin collects half of
    /// each pulse and a detector half of that, so each detector sees at most
    /// a quarter of Alice's light, taken here as converted at the pump peak.
    pub fn honest_sampling_double_click_prob(&self) -> Result<f64> {
        let d = self.derived()?;
        let r = &self.receiver;
        let ls = self.source.lambda_sig_nm;
        let eta_c = if r.waveguide.accepts(ls) {
            conversion_efficiency(r.pump.p_peak_w, &r.waveguide)
        } else {
            0.0
        };
        let n = self.source.mu
            * self.channel.transmission()
            * r.pre.transmission(ls)?
            * d.t_in
            * eta_c
            * d.t_out
            * d.t_post_sum;
        let m = 0.25 * n * r.detector.eta_d + r.detector.dark_cps * d.bin_ps * 1e-12;
        let p = -(-m).exp_m1();
        Ok(p * p)
    }

    /// Fails if a configured wavelength falls outside the modeled range.
    pub fn validate(&self) -> Result<()> {
        let _ = self.derived()?;
        Ok(())
    }
}

/// `f_R·μ·T_ch·η_ov·sifting_factor`.
pub fn key_rate_estimate(rep_rate_hz: f64, mu: f64, channel: &ChannelModel, eta_ov: f64, sifting_factor: f64) -> f64 {
    rep_rate_hz * mu * channel.transmission() * eta_ov * sifting_factor
}

/// Alice's pulse pair for one cycle: two pulses at the pump slot centres,
/// `μ/2` each, with her phase on the early pulse.
pub fn alice_prepare(choice: &AliceChoice, source: &SourceConfig, pump: &PumpConfig) -> [OpticalPulse; 2] {
    let [te, tl] = pump.slot_centers_ps();
    let half = 0.5 * choice.mu;
    [
        OpticalPulse::quantum(source.lambda_sig_nm, half, source.tau_sig_ps, te, choice.phase_rad),
        OpticalPulse::quantum(source.lambda_sig_nm, half, source.tau_sig_ps, tl, 0.0),
    ]
}

/// One protocol cycle as seen by Bob.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CycleRecord {
    pub cycle_index: u64,
    pub alice: AliceChoice,
    pub bob_basis: usize,
    pub bob_phase_rad: f64,
    pub single_pulse: bool,
    /// Early, middle and late bin.
    pub outcomes: [BinOutcome; 3],
    /// Whether each detector could click in each bin (not dead or damaged).
    pub armed: [[bool; 2]; 3],
    /// Largest fractional depletion over the cycle's pump pulses.
    pub zeta: f64,
    /// Residual-signal photons at the monitor port.
    pub residual_photons: f64,
    /// Average power of pedestal-converted light outside the pump pulse.
    pub out_of_gate_sum_power_w: f64,
    pub attacked: bool,
    pub blinded: bool,
    pub damaged: bool,
    pub fuse: bool,
    pub alarms: Vec<AlarmRecord>,
}

impl CycleRecord {
    pub fn middle(&self) -> BinOutcome {
        self.outcomes[Bin::Middle.index()]
    }
}

fn slot_for(pulse: &OpticalPulse, arrivals: &[f64; 2], pumps: &[OpticalPulse; 2], present: [bool; 2]) -> usize {
    let mut best = None;
    let mut best_f = 0.0;
    for i in 0..2 {
        if present[i] {
            let f = crate::upconversion::overlap_fraction(pulse, &pumps[i]);
            if f > best_f {
                best_f = f;
                best = Some(i);
            }
        }
    }
    best.unwrap_or_else(|| {
        let t = pulse.arrival_ps();
        if (t - arrivals[0]).abs() <= (t - arrivals[1]).abs() {
            0
        } else {
            1
        }
    })
}

/// Run one cycle. `detectors` carries dead-time and damage state across
/// consecutive cycles of one stream.
pub fn run_cycle<R: Rng + ?Sized>(
    sys: &System,
    cycle_index: u64,
    alice: AliceChoice,
    detectors: &mut [DetectorState; 2],
    rng: &mut R,
) -> Result<CycleRecord> {
    let d = sys.derived()?;
    run_cycle_with(sys, &d, cycle_index, alice, detectors, rng)
}

/// Run `n` consecutive cycles starting at `first` with fresh detectors.
pub(crate) fn run_stream<F, R>(
    sys: &System,
    first: u64,
    n: u64,
    mut rng_for: F,
) -> Result<(Vec<CycleRecord>, [DetectorState; 2])>
where
    F: FnMut(u64) -> R,
    R: Rng,
{
    let d = sys.derived()?;
    let mut dets = [DetectorState::default(), DetectorState::default()];
    let mut out = Vec::with_capacity(n as usize);
    for i in first..first + n {
        let mut rng = rng_for(i);
        let alice = AliceChoice::random(sys.source.mu, &mut rng);
        out.push(run_cycle_with(sys, &d, i, alice, &mut dets, &mut rng)?);
    }
    Ok((out, dets))
}

fn run_cycle_with<R: Rng + ?Sized>(
    sys: &System,
    d: &Derived,
    cycle_index: u64,
    alice: AliceChoice,
    detectors: &mut [DetectorState; 2],
    rng: &mut R,
) -> Result<CycleRecord> {
    let rx = &sys.receiver;
    let pump_cfg = &rx.pump;
    let train: PumpTrain = pump_pulse_train(pump_cfg, cycle_index, rng);

    let mut rec = CycleRecord {
        cycle_index,
        alice,
        bob_basis: train.basis,
        bob_phase_rad: pump_cfg.phase_alphabet[train.basis],
        single_pulse: train.single_pulse,
        ..CycleRecord::default()
    };

    // channel
    let t_ch = sys.channel.transmission();
    let honest: Vec<TaggedPulse> = alice_prepare(&alice, &sys.source, pump_cfg)
        .into_iter()
        .map(|p| TaggedPulse {
            pulse: p.scaled(t_ch),
            coherence: Some(0),
        })
        .collect();
    let ctx = AttackContext {
        lambda_sig_nm: sys.source.lambda_sig_nm,
        tau_sig_ps: sys.source.tau_sig_ps,
        slot_centers_ps: pump_cfg.slot_centers_ps(),
        alice,
    };
    let chan = apply_attack(&sys.attack, honest, &ctx, rng)?;
    rec.attacked = chan.attacked;

    let cycle_start = cycle_index as f64 * d.period_ps;
    if chan.fuse {
        rec.fuse = true;
        rec.alarms = cycle_alarms(
            &MonitorReading {
                cycle_index,
                fuse: true,
                ..MonitorReading::default()
            },
            &rx.monitor,
        );
        return Ok(rec);
    }

    // Pump pulses; a slot without a pulse carries only the pedestal, modelled
    // as a pulse at pedestal power so one code path handles both.
    let present = [train.pulses[0].is_some(), train.pulses[1].is_some()];
    let jitter = train
        .present()
        .next()
        .map(|(s, p)| p.arrival_ps() - pump_cfg.slot_centers_ps()[s.index()])
        .unwrap_or(0.0);
    let centers = pump_cfg.slot_centers_ps();
    let arrivals = [centers[0] + jitter, centers[1] + jitter];
    let ped = train.pedestal_w;
    let mut pumps: [OpticalPulse; 2] = [0, 1].map(|i| {
        train.pulses[i].clone().unwrap_or_else(|| {
            OpticalPulse::classical(
                pump_cfg.lambda_pump_nm,
                ped,
                pump_cfg.tau_pump_ps,
                arrivals[i],
                train.pedestal_phase_rad[i],
            )
        })
    });
    let initial: [f64; 2] = [pumps[0].mean_photons(), pumps[1].mean_photons()];

    let wg = &rx.waveguide;
    let sum_scale = d.t_out * d.t_post_sum;
    let mut comps: Vec<AmziComponent> = Vec::with_capacity(8);
    let mut residual_photons = 0.0;
    let mut out_of_gate: f64 = 0.0;

    for tp in &chan.pulses {
        let p = &tp.pulse;
        let pre_db = rx.pre.attenuation_db(p.wavelength_nm())?;
        let inwg = p.attenuated(pre_db).scaled(d.t_in);
        let slot = slot_for(&inwg, &arrivals, &pumps, present);
        let r = upconvert(&inwg, &pumps[slot], ped, wg)?;
        if present[slot] {
            pumps[slot] = r.depleted_pump.clone();
        }
        let sig_phase = inwg.phase_rad();
        let (gated_phase, ped_phase) = if present[slot] {
            (sig_phase + pumps[slot].phase_rad(), sig_phase + train.pedestal_phase_rad[slot])
        } else {
            let ph = sig_phase + train.pedestal_phase_rad[slot];
            (ph, ph)
        };
        for (n, phase) in [(r.gated_photons, gated_phase), (r.pedestal_photons, ped_phase)] {
            if n > 0.0 {
                comps.push(AmziComponent {
                    slot: Slot::from_index(slot),
                    photons: n * sum_scale,
                    phase_rad: phase,
                    coherence: tp.coherence,
                });
            }
        }
        let gate_out = if present[slot] {
            r.out_of_gate_sum_power_w()
        } else {
            crate::photonics::peak_power_w(r.converted_photons, inwg.width_ps(), r.lambda_sum_nm())
        };
        out_of_gate = out_of_gate.max(gate_out);
        let resid = r.residual_signal.mean_photons() * d.t_out;
        residual_photons += resid;
        let post_t = rx.post.transmission(p.wavelength_nm())?;
        if resid * post_t > 0.0 {
            comps.push(AmziComponent {
                slot: Slot::from_index(slot),
                photons: resid * post_t,
                phase_rad: 0.0,
                coherence: None,
            });
        }
    }

    // Continuous light, in detector-plane watts and photons/s.
    let mut cw_det_power = 0.0;
    let mut cw_det_rate = 0.0;
    let pulse_window = pump_cfg.tau_pump_ps;
    let out_frac = (1.0 - 2.0 * pulse_window / d.period_ps).max(0.0);
    for cw in &chan.cw {
        let lam = cw.wavelength_nm;
        let p_wg = cw.power_w * rx.pre.transmission(lam)? * d.t_in;
        if p_wg <= 0.0 {
            continue;
        }
        let mut converted_frac = 0.0;
        if wg.accepts(lam) {
            let lsum = sum_wavelength(pump_cfg.lambda_pump_nm, lam)?;
            for slot in 0..2 {
                let seg = OpticalPulse::classical(lam, p_wg, pulse_window, arrivals[slot], 0.0);
                let r = upconvert(&seg, &pumps[slot], ped, wg)?;
                if present[slot] {
                    pumps[slot] = r.depleted_pump.clone();
                }
                if r.converted_photons > 0.0 {
                    comps.push(AmziComponent {
                        slot: Slot::from_index(slot),
                        photons: r.converted_photons * d.t_out * rx.post.transmission(lsum)?,
                        phase_rad: 0.0,
                        coherence: None,
                    });
                }
                converted_frac += r.converted_photons / seg.mean_photons() * (pulse_window / d.period_ps);
            }
            // between the pulses only the pedestal converts, flux-limited
            let rate_in = p_wg / photon_energy_j(lam);
            let rate_ped = ped / photon_energy_j(pump_cfg.lambda_pump_nm);
            let rate_c = (rate_in * conversion_efficiency(ped, wg)).min(rate_ped);
            let p_sum = rate_c * photon_energy_j(lsum);
            out_of_gate = out_of_gate.max(p_sum);
            let p_det = p_sum * out_frac * d.t_out * rx.post.transmission(lsum)?;
            cw_det_power += p_det;
            cw_det_rate += p_det / photon_energy_j(lsum);
            converted_frac += rate_c / rate_in * out_frac;
        }
        let p_resid = p_wg * (1.0 - converted_frac).max(0.0) * d.t_out;
        residual_photons += photon_number(p_resid, d.period_ps, lam);
        let p_leak = p_resid * rx.post.transmission(lam)?;
        cw_det_power += p_leak;
        cw_det_rate += p_leak / photon_energy_j(lam);
    }

    // depletion monitor
    let mut zeta: f64 = 0.0;
    for i in 0..2 {
        if present[i] && initial[i] > 0.0 {
            let z = depletion(initial[i], pumps[i].mean_photons())?;
            zeta = zeta.max(z);
        }
    }
    rec.zeta = zeta;
    rec.residual_photons = residual_photons;
    rec.out_of_gate_sum_power_w = out_of_gate;

    // AMZI and detectors
    let table = amzi_components(&comps, train.single_pulse, rx.amzi.visibility);
    let e_sum = photon_energy_j(d.lambda_sum_nm);
    let per_det_cw = 0.5 * cw_det_power;
    let per_det_rate = 0.5 * cw_det_rate;
    let mut damage = false;
    for (det_i, state) in detectors.iter_mut().enumerate() {
        let pulsed: f64 = (0..3).map(|b| table.0[b][det_i]).sum();
        let avg = per_det_cw + pulsed * e_sum * pump_cfg.rep_rate_hz;
        // bins are visited in time order per detector; detectors are independent
        for bin in Bin::ALL {
            let n = table.get(bin, det_i);
            let light = Illumination {
                photons: n + per_det_rate * d.bin_ps * 1e-12,
                peak_power_w: n * e_sum / (d.bin_ps * 1e-12) + per_det_cw,
                cw_power_w: per_det_cw,
                average_power_w: avg,
            };
            let t = cycle_start + arrivals[0] + bin.index() as f64 * d.amzi_delay_ps;
            rec.armed[bin.index()][det_i] = detector_armed(&light, t, &rx.detector, state);
            let res = spad_detect(&light, t, d.bin_ps, &rx.detector, state, rng);
            damage |= res.newly_damaged;
            rec.blinded |= res.blinded;
            let o = &mut rec.outcomes[bin.index()];
            if det_i == 0 {
                o.d0_click = res.click;
            } else {
                o.d1_click = res.click;
            }
        }
        rec.damaged |= state.damaged;
    }

    rec.alarms = cycle_alarms(
        &MonitorReading {
            cycle_index,
            zeta,
            residual_photons,
            damage,
            fuse: false,
        },
        &rx.monitor,
    );
    Ok(rec)
}

/// Sifting outcome.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sifted {
    /// (Alice bit, Bob bit) per kept cycle.
    pub pairs: Vec<(u8, u8)>,
    /// Middle-bin double clicks in double-pulse cycles, any basis.
    pub double_clicks: u64,
}

/// Keep double-pulse cycles with a single middle-bin click in the matching
/// basis. D0 reads as bit 0.
pub fn sift(records: &[CycleRecord]) -> Sifted {
    let mut out = Sifted::default();
    for r in records.iter().filter(|r| !r.single_pulse) {
        let m = r.middle();
        if m.double() {
            out.double_clicks += 1;
            continue;
        }
        if r.alice.basis.index() != r.bob_basis {
            continue;
        }
        if let Some(b) = m.single() {
            out.pairs.push((r.alice.bit, b));
        }
    }
    out
}

pub fn qber(pairs: &[(u8, u8)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySiftedKey);
    }
    let errors = pairs.iter().filter(|(a, b)| a != b).count();
    Ok(errors as f64 / pairs.len() as f64)
}
