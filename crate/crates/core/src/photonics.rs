//! Optical data model: pulses, photon bookkeeping, filter stacks and the
//! linear-wavelength-isolation (LWI) sweep.
//!
//! Units follow the lab convention used throughout the crate: wavelengths in
//! nm, durations in ps, powers in W, attenuations in positive dB.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
/// h·c in J·m.
pub const HC_J_M: f64 = PLANCK_J_S * SPEED_OF_LIGHT_M_S;

/// Wavelength range (exclusive, nm) on which filter transmissions are defined.
pub const MODELED_RANGE_NM: (f64, f64) = (200.0, 3000.0);

/// Upper passband limit used for "open-ended" long-pass elements.
pub const OPEN_BAND_NM: f64 = 1.0e5;

pub const DEFAULT_EDGE_WIDTH_NM: f64 = 20.0;

/// Wavelength produced by sum-frequency mixing of `pump_nm` and `signal_nm`.
pub fn sum_wavelength(pump_nm: f64, signal_nm: f64) -> Result<f64> {
    if !(pump_nm > 0.0 && signal_nm > 0.0) || !pump_nm.is_finite() || !signal_nm.is_finite() {
        return Err(Error::domain(format!(
            "wavelengths must be positive and finite (pump {pump_nm} nm, signal {signal_nm} nm)"
        )));
    }
    Ok(1.0 / (1.0 / pump_nm + 1.0 / signal_nm))
}

/// Energy of one photon at `wavelength_nm`, in J.
pub fn photon_energy_j(wavelength_nm: f64) -> f64 {
    HC_J_M / (wavelength_nm * 1e-9)
}

/// Mean photon number of a rectangular pulse with peak power `power_w` lasting `width_ps`.
pub fn photon_number(power_w: f64, width_ps: f64, wavelength_nm: f64) -> f64 {
    power_w * width_ps * 1e-12 * wavelength_nm * 1e-9 / HC_J_M
}

/// Peak power of a rectangular pulse holding `photons` over `width_ps`.
pub fn peak_power_w(photons: f64, width_ps: f64, wavelength_nm: f64) -> f64 {
    photons * photon_energy_j(wavelength_nm) / (width_ps * 1e-12)
}

/// Power transmission for a loss of `db`.
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn normalize_phase(phase_rad: f64) -> f64 {
    let p = phase_rad.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Whether a pulse is tracked by its photon number or by its power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Quantum,
    Classical,
}

/// A rectangular optical pulse within one protocol cycle.
///
/// Both the photon number and the peak power are always populated and kept
/// consistent through `N = P·τ·λ/(h·c)`; `kind` records which one was the
/// source of truth at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticalPulse {
    wavelength_nm: f64,
    peak_power_w: f64,
    width_ps: f64,
    arrival_ps: f64,
    phase_rad: f64,
    mean_photons: f64,
    kind: PulseKind,
}

impl OpticalPulse {
    /// Weak pulse specified by its mean photon number.
    pub fn quantum(wavelength_nm: f64, mean_photons: f64, width_ps: f64, arrival_ps: f64, phase_rad: f64) -> Self {
        debug_assert!(wavelength_nm > 0.0 && width_ps > 0.0 && mean_photons >= 0.0);
        OpticalPulse {
            wavelength_nm,
            peak_power_w: peak_power_w(mean_photons, width_ps, wavelength_nm),
            width_ps,
            arrival_ps,
            phase_rad: normalize_phase(phase_rad),
            mean_photons,
            kind: PulseKind::Quantum,
        }
    }

    /// Bright pulse specified by its peak power.
    pub fn classical(wavelength_nm: f64, peak_power_w: f64, width_ps: f64, arrival_ps: f64, phase_rad: f64) -> Self {
        debug_assert!(wavelength_nm > 0.0 && width_ps > 0.0 && peak_power_w >= 0.0);
        OpticalPulse {
            wavelength_nm,
            peak_power_w,
            width_ps,
            arrival_ps,
            phase_rad: normalize_phase(phase_rad),
            mean_photons: photon_number(peak_power_w, width_ps, wavelength_nm),
            kind: PulseKind::Classical,
        }
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }
    pub fn peak_power_w(&self) -> f64 {
        self.peak_power_w
    }
    pub fn width_ps(&self) -> f64 {
        self.width_ps
    }
    /// Centre of the pulse, relative to the cycle start.
    pub fn arrival_ps(&self) -> f64 {
        self.arrival_ps
    }
    pub fn phase_rad(&self) -> f64 {
        self.phase_rad
    }
    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }
    pub fn kind(&self) -> PulseKind {
        self.kind
    }

    pub fn energy_j(&self) -> f64 {
        self.mean_photons * photon_energy_j(self.wavelength_nm)
    }

    /// `[start, end)` of the rectangular profile in ps.
    pub fn window(&self) -> (f64, f64) {
        let half = 0.5 * self.width_ps;
        (self.arrival_ps - half, self.arrival_ps + half)
    }

    /// Same pulse carrying `photons` instead (power rescaled accordingly).
    pub fn with_photons(&self, photons: f64) -> Self {
        let photons = photons.max(0.0);
        OpticalPulse {
            mean_photons: photons,
            peak_power_w: peak_power_w(photons, self.width_ps, self.wavelength_nm),
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        OpticalPulse {
            mean_photons: self.mean_photons * factor,
            peak_power_w: self.peak_power_w * factor,
            ..self.clone()
        }
    }

    pub fn attenuated(&self, loss_db: f64) -> Self {
        self.scaled(db_to_transmission(loss_db))
    }

    pub fn shifted(&self, dt_ps: f64) -> Self {
        OpticalPulse {
            arrival_ps: self.arrival_ps + dt_ps,
            ..self.clone()
        }
    }

    pub fn with_phase(&self, phase_rad: f64) -> Self {
        OpticalPulse {
            phase_rad: normalize_phase(phase_rad),
            ..self.clone()
        }
    }
}

/// Closed wavelength interval in nm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passband {
    pub lo_nm: f64,
    pub hi_nm: f64,
}

impl Passband {
    pub fn new(lo_nm: f64, hi_nm: f64) -> Self {
        Passband { lo_nm, hi_nm }
    }

    pub fn centered(center_nm: f64, width_nm: f64) -> Self {
        Passband::new(center_nm - 0.5 * width_nm, center_nm + 0.5 * width_nm)
    }

    pub fn contains(&self, wavelength_nm: f64) -> bool {
        wavelength_nm >= self.lo_nm && wavelength_nm <= self.hi_nm
    }

    pub fn widened(&self, by_nm: f64) -> Self {
        Passband::new(self.lo_nm - by_nm, self.hi_nm + by_nm)
    }

    /// Distance from the band, zero inside.
    fn distance(&self, wavelength_nm: f64) -> f64 {
        if wavelength_nm < self.lo_nm {
            self.lo_nm - wavelength_nm
        } else if wavelength_nm > self.hi_nm {
            wavelength_nm - self.hi_nm
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    ShortPass,
    BandPass,
    DichroicPort,
    WaveguideTransparency,
    CoiledFiber,
}

/// One wavelength-selective element: flat passband, flat stopband, and a
/// transition that is linear in dB over `edge_width_nm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterElement {
    #[serde(default)]
    pub name: String,
    pub kind: FilterKind,
    pub passband: Passband,
    pub insertion_loss_db: f64,
    pub stopband_attenuation_db: f64,
    #[serde(default = "default_edge_width")]
    pub edge_width_nm: f64,
}

fn default_edge_width() -> f64 {
    DEFAULT_EDGE_WIDTH_NM
}

impl FilterElement {
    pub fn new(
        name: &str,
        kind: FilterKind,
        passband: Passband,
        insertion_loss_db: f64,
        stopband_attenuation_db: f64,
    ) -> Self {
        FilterElement {
            name: name.to_string(),
            kind,
            passband,
            insertion_loss_db,
            stopband_attenuation_db,
            edge_width_nm: DEFAULT_EDGE_WIDTH_NM,
        }
    }

    /// Short-pass element transmitting up to `pass_edge_nm`; full blocking is
    /// reached one edge width above it.
    pub fn short_pass(name: &str, pass_edge_nm: f64, insertion_loss_db: f64, stop_db: f64) -> Self {
        Self::new(
            name,
            FilterKind::ShortPass,
            Passband::new(0.0, pass_edge_nm),
            insertion_loss_db,
            stop_db,
        )
    }

    pub fn band_pass(name: &str, center_nm: f64, width_nm: f64, insertion_loss_db: f64, stop_db: f64) -> Self {
        Self::new(
            name,
            FilterKind::BandPass,
            Passband::centered(center_nm, width_nm),
            insertion_loss_db,
            stop_db,
        )
    }

    /// Bend-loss short-pass filter made from a coiled fibre.
    pub fn coiled_fiber(name: &str, pass_edge_nm: f64, insertion_loss_db: f64, stop_db: f64) -> Self {
        Self::new(
            name,
            FilterKind::CoiledFiber,
            Passband::new(0.0, pass_edge_nm),
            insertion_loss_db,
            stop_db,
        )
    }

    pub fn dichroic_port(name: &str, passband: Passband, insertion_loss_db: f64, stop_db: f64) -> Self {
        Self::new(name, FilterKind::DichroicPort, passband, insertion_loss_db, stop_db)
    }

    /// Absorption edge of the waveguide material: opaque below `cutoff_nm`.
    pub fn waveguide_transparency(name: &str, cutoff_nm: f64, stop_db: f64) -> Self {
        Self::new(
            name,
            FilterKind::WaveguideTransparency,
            Passband::new(cutoff_nm, OPEN_BAND_NM),
            0.0,
            stop_db,
        )
    }

    /// Attenuation in dB at `wavelength_nm`.
    pub fn transmission_db(&self, wavelength_nm: f64) -> f64 {
        let d = self.passband.distance(wavelength_nm);
        if d <= 0.0 {
            self.insertion_loss_db
        } else if d >= self.edge_width_nm {
            self.stopband_attenuation_db
        } else {
            self.insertion_loss_db + (self.stopband_attenuation_db - self.insertion_loss_db) * d / self.edge_width_nm
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.insertion_loss_db >= 0.0) {
            return Err("insertion_loss_db must be >= 0".into());
        }
        if !(self.stopband_attenuation_db >= self.insertion_loss_db) {
            return Err("stopband_attenuation_db must be >= insertion_loss_db".into());
        }
        if !(self.edge_width_nm > 0.0) {
            return Err("edge_width_nm must be > 0".into());
        }
        if !(self.passband.lo_nm < self.passband.hi_nm) {
            return Err("passband lo_nm must be below hi_nm".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackLocation {
    PreWaveguide,
    PostWaveguide,
    PumpPath,
}

/// Ordered cascade of filter elements. Attenuations add in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterStack {
    pub location: StackLocation,
    pub elements: Vec<FilterElement>,
}

fn check_modeled(wavelength_nm: f64) -> Result<()> {
    let (lo, hi) = MODELED_RANGE_NM;
    if wavelength_nm > lo && wavelength_nm < hi {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "wavelength {wavelength_nm} nm outside modeled range ({lo}, {hi}) nm"
        )))
    }
}

impl FilterStack {
    pub fn new(location: StackLocation) -> Self {
        FilterStack {
            location,
            elements: Vec::new(),
        }
    }

    pub fn with(mut self, element: FilterElement) -> Self {
        self.elements.push(element);
        self
    }

    pub fn push(&mut self, element: FilterElement) {
        self.elements.push(element);
    }

    /// Total attenuation in dB at `wavelength_nm`.
    pub fn attenuation_db(&self, wavelength_nm: f64) -> Result<f64> {
        check_modeled(wavelength_nm)?;
        Ok(self.elements.iter().map(|e| e.transmission_db(wavelength_nm)).sum())
    }

    /// Power transmission at `wavelength_nm`.
    pub fn transmission(&self, wavelength_nm: f64) -> Result<f64> {
        self.attenuation_db(wavelength_nm).map(db_to_transmission)
    }

    /// Elements of `self` followed by those of `other`.
    pub fn concat(&self, other: &FilterStack) -> FilterStack {
        let mut out = self.clone();
        out.elements.extend(other.elements.iter().cloned());
        out
    }

    /// Reference stack between the channel and the waveguide: two coiled-fibre
    /// short-pass sections (blocking from 1800 nm), the input dichroic port and
    /// the signal band-pass filter. Insertion loss at the signal is 1.5 dB.
    pub fn reference_pre(signal_center_nm: f64, signal_bandwidth_nm: f64) -> Self {
        FilterStack::new(StackLocation::PreWaveguide)
            .with(FilterElement::coiled_fiber("SPF coil 1", 1780.0, 0.1, 40.0))
            .with(FilterElement::coiled_fiber("SPF coil 2", 1780.0, 0.1, 40.0))
            .with(FilterElement::dichroic_port(
                "DM_i signal port",
                Passband::new(1400.0, 1700.0),
                0.3,
                30.0,
            ))
            .with(FilterElement::band_pass(
                "BPF_sig",
                signal_center_nm,
                signal_bandwidth_nm,
                1.0,
                60.0,
            ))
    }

    /// Reference stack between the waveguide and the detectors: material
    /// transparency edge at 350 nm, output dichroic port, short-pass filter and
    /// the sum band-pass filter. Insertion loss at the sum wavelength is 1.5 dB.
    pub fn reference_post(sum_center_nm: f64, sum_bandwidth_nm: f64) -> Self {
        FilterStack::new(StackLocation::PostWaveguide)
            .with(FilterElement::waveguide_transparency("PPLN transparency", 350.0, 60.0))
            .with(FilterElement::dichroic_port(
                "DM_o sum port",
                Passband::new(700.0, 1000.0),
                0.3,
                30.0,
            ))
            .with(FilterElement::short_pass("SPF_sig", 1000.0, 0.2, 60.0))
            .with(FilterElement::band_pass("BPF_sum", sum_center_nm, sum_bandwidth_nm, 1.0, 60.0))
    }
}

/// Free-function form of [`FilterStack::attenuation_db`].
pub fn stack_attenuation(stack: &FilterStack, wavelength_nm: f64) -> Result<f64> {
    stack.attenuation_db(wavelength_nm)
}

/// Inclusive sampling grid in nm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        WavelengthGrid {
            start_nm: 300.0,
            stop_nm: 1850.0,
            step_nm: 1.0,
        }
    }
}

impl WavelengthGrid {
    pub fn points(&self) -> Vec<f64> {
        if !(self.step_nm > 0.0) || self.stop_nm < self.start_nm {
            return Vec::new();
        }
        let n = ((self.stop_nm - self.start_nm) / self.step_nm + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start_nm + i as f64 * self.step_nm).collect()
    }
}

/// Exclusion bands and threshold for the isolation check.
///
/// Light in `signal_band` is meant to enter the waveguide, so only the
/// post-waveguide path is checked there; light in `sum_band` is meant to
/// leave it towards the detectors, so only the pre-waveguide path is checked.
/// Everywhere else both stages must isolate on their own.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LwiBands {
    pub signal_band: Passband,
    pub sum_band: Passband,
    pub threshold_db: f64,
}

impl LwiBands {
    /// Guard bands spanning the band-pass filters plus their transition edges.
    pub fn around(signal_nm: f64, signal_bw_nm: f64, sum_nm: f64, sum_bw_nm: f64, edge_nm: f64) -> Self {
        LwiBands {
            signal_band: Passband::centered(signal_nm, signal_bw_nm).widened(edge_nm),
            sum_band: Passband::centered(sum_nm, sum_bw_nm).widened(edge_nm),
            threshold_db: 60.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LwiPoint {
    pub wavelength_nm: f64,
    pub attenuation_db: f64,
}

/// Isolation of the weakest applicable path at each grid wavelength.
pub fn lwi_sweep(pre: &FilterStack, post: &FilterStack, bands: &LwiBands, grid: &WavelengthGrid) -> Result<Vec<LwiPoint>> {
    grid.points()
        .into_iter()
        .map(|wl| {
            let pre_db = pre.attenuation_db(wl)?;
            let post_db = post.attenuation_db(wl)?;
            let in_sig = bands.signal_band.contains(wl);
            let in_sum = bands.sum_band.contains(wl);
            let db = match (in_sig, in_sum) {
                (true, true) => f64::INFINITY,
                (true, false) => post_db,
                (false, true) => pre_db,
                (false, false) => pre_db.min(post_db),
            };
            Ok(LwiPoint {
                wavelength_nm: wl,
                attenuation_db: db,
            })
        })
        .collect()
}

/// Grid wavelengths whose isolation falls below the threshold. Empty means
/// the stacks provide linear wavelength isolation on the grid.
pub fn check_lwi(pre: &FilterStack, post: &FilterStack, bands: &LwiBands, grid: &WavelengthGrid) -> Result<Vec<LwiPoint>> {
    Ok(lwi_sweep(pre, post, bands, grid)?
        .into_iter()
        .filter(|p| p.attenuation_db < bands.threshold_db)
        .collect())
}
