//! Scenario files: JSON schema, defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::AttackStrategy;
use crate::detection::{AmziConfig, DetectorModel};
use crate::error::{Error, Result};
use crate::monitors::MonitorConfig;
use crate::photonics::{sum_wavelength, FilterStack, LwiBands, StackLocation, WavelengthGrid, DEFAULT_EDGE_WIDTH_NM};
use crate::protocol::{ChannelModel, Receiver, SourceConfig, System};
use crate::upconversion::{PumpConfig, WaveguideModel};

/// Filter stacks and the isolation check. Omitted stacks are replaced by the
/// reference stacks built around the signal and sum wavelengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiltersConfig {
    pub signal_bandwidth_nm: f64,
    pub sum_bandwidth_nm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre: Option<FilterStack>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post: Option<FilterStack>,
    pub lwi_grid: WavelengthGrid,
    pub lwi_threshold_db: f64,
    /// Widening of the signal and sum passbands excluded from the check.
    pub lwi_guard_nm: f64,
}

impl Default for FiltersConfig {
    fn default() -> Self {
        FiltersConfig {
            signal_bandwidth_nm: 15.0,
            sum_bandwidth_nm: 3.5,
            pre: None,
            post: None,
            lwi_grid: WavelengthGrid::default(),
            lwi_threshold_db: 60.0,
            lwi_guard_nm: DEFAULT_EDGE_WIDTH_NM,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub emit_lwi_chart: bool,
    pub emit_cycles: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_cycles: u64,
    /// Cycles per independently simulated block.
    pub block_size: u64,
    pub source: SourceConfig,
    pub channel: ChannelModel,
    pub pump: PumpConfig,
    pub waveguide: WaveguideModel,
    pub filters: FiltersConfig,
    pub amzi: AmziConfig,
    pub detector: DetectorModel,
    pub monitor: MonitorConfig,
    pub attack: AttackStrategy,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            n_cycles: 100_000,
            block_size: 4096,
            source: SourceConfig::default(),
            channel: ChannelModel::default(),
            pump: PumpConfig::default(),
            waveguide: WaveguideModel::default(),
            filters: FiltersConfig::default(),
            amzi: AmziConfig::default(),
            detector: DetectorModel::default(),
            monitor: MonitorConfig::default(),
            attack: AttackStrategy::None,
            output: OutputConfig::default(),
        }
    }
}

fn cfg_err((key, reason): (String, String)) -> Error {
    Error::config(key, reason)
}

impl ScenarioConfig {
    /// Fill derived defaults (reference stacks, AMZI delay) and validate.
    pub fn resolve(mut self) -> Result<Self> {
        self.pump.validate().map_err(cfg_err)?;
        self.source.validate().map_err(cfg_err)?;
        self.channel.validate().map_err(cfg_err)?;
        self.waveguide.validate().map_err(cfg_err)?;
        self.detector.validate().map_err(cfg_err)?;
        self.monitor.validate().map_err(cfg_err)?;
        self.attack.validate().map_err(cfg_err)?;
        if self.block_size == 0 {
            return Err(Error::config("block_size", "must be >= 1"));
        }
        let f = &self.filters;
        if !(f.signal_bandwidth_nm > 0.0 && f.sum_bandwidth_nm > 0.0) {
            return Err(Error::config("filters", "bandwidths must be > 0"));
        }
        if !(f.lwi_grid.step_nm > 0.0 && f.lwi_grid.stop_nm >= f.lwi_grid.start_nm) {
            return Err(Error::config("filters.lwi_grid", "needs step_nm > 0 and stop_nm >= start_nm"));
        }
        let (lo, hi) = crate::photonics::MODELED_RANGE_NM;
        if !(f.lwi_grid.start_nm > lo && f.lwi_grid.stop_nm < hi) {
            return Err(Error::config("filters.lwi_grid", format!("must lie inside ({lo}, {hi}) nm")));
        }
        let lsum = self.lambda_sum_nm()?;
        if !(lsum > lo) {
            return Err(Error::config("pump.lambda_pump_nm", "sum wavelength outside the modeled range"));
        }
        if self.filters.pre.is_none() {
            self.filters.pre = Some(FilterStack::reference_pre(
                self.source.lambda_sig_nm,
                self.filters.signal_bandwidth_nm,
            ));
        }
        if self.filters.post.is_none() {
            self.filters.post = Some(FilterStack::reference_post(lsum, self.filters.sum_bandwidth_nm));
        }
        for (name, stack, loc) in [
            ("filters.pre", self.filters.pre.as_ref().unwrap(), StackLocation::PreWaveguide),
            ("filters.post", self.filters.post.as_ref().unwrap(), StackLocation::PostWaveguide),
        ] {
            if stack.location != loc {
                return Err(Error::config(format!("{name}.location"), format!("expected {loc:?}")));
            }
            for (i, e) in stack.elements.iter().enumerate() {
                e.validate()
                    .map_err(|r| Error::config(format!("{name}.elements[{i}]"), r))?;
            }
        }
        if self.amzi.delay_ps.is_none() {
            self.amzi.delay_ps = Some(self.pump.delta_t_ps);
        }
        let delay = self.amzi.delay_ps.unwrap();
        if !(delay > 0.0) || (delay - self.pump.delta_t_ps).abs() > self.amzi.tolerance_ps {
            return Err(Error::config(
                "amzi.delay_ps",
                format!("delay {delay} ps does not match pump separation {} ps", self.pump.delta_t_ps),
            ));
        }
        if !(0.0..=1.0).contains(&self.amzi.visibility) {
            return Err(Error::config("amzi.visibility", "must lie in [0, 1]"));
        }
        if self.source.tau_sig_ps >= self.pump.delta_t_ps {
            return Err(Error::config("source.tau_sig_ps", "signal pulses of a pair would overlap"));
        }
        Ok(self)
    }

    pub fn lambda_sum_nm(&self) -> Result<f64> {
        sum_wavelength(self.pump.lambda_pump_nm, self.source.lambda_sig_nm)
    }

    pub fn pre_stack(&self) -> FilterStack {
        self.filters
            .pre
            .clone()
            .unwrap_or_else(|| FilterStack::reference_pre(self.source.lambda_sig_nm, self.filters.signal_bandwidth_nm))
    }

    pub fn post_stack(&self) -> Result<FilterStack> {
        Ok(match &self.filters.post {
            Some(p) => p.clone(),
            None => FilterStack::reference_post(self.lambda_sum_nm()?, self.filters.sum_bandwidth_nm),
        })
    }

    pub fn lwi_bands(&self) -> Result<LwiBands> {
        let mut b = LwiBands::around(
            self.source.lambda_sig_nm,
            self.filters.signal_bandwidth_nm,
            self.lambda_sum_nm()?,
            self.filters.sum_bandwidth_nm,
            self.filters.lwi_guard_nm,
        );
        b.threshold_db = self.filters.lwi_threshold_db;
        Ok(b)
    }

    pub fn system(&self) -> Result<System> {
        Ok(System {
            source: self.source.clone(),
            channel: self.channel.clone(),
            attack: self.attack.clone(),
            receiver: Receiver {
                pump: self.pump.clone(),
                waveguide: self.waveguide.clone(),
                pre: self.pre_stack(),
                post: self.post_stack()?,
                amzi: self.amzi.clone(),
                detector: self.detector.clone(),
                monitor: self.monitor.clone(),
            },
        })
    }
}

fn path_key(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." || s.is_empty() {
        "<root>".into()
    } else {
        s
    }
}

/// Parse and validate a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = path_key(e.path());
        Error::config(key, e.into_inner().to_string())
    })?;
    cfg.resolve()
}

/// Parse a scenario from a JSON value (used by sweeps).
pub fn scenario_from_value(value: serde_json::Value) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let key = path_key(e.path());
        Error::config(key, e.into_inner().to_string())
    })?;
    cfg.resolve()
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Set `dotted.key` in a JSON object tree, creating objects on the way.
pub fn set_dotted(value: &mut serde_json::Value, key: &str, v: serde_json::Value) -> Result<()> {
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), v);
            return Ok(());
        }
        cur = obj
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split yields at least one segment")
}
