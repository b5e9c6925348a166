//! Run configuration: TOML with named blocks, plus `--set` overrides applied
//! to the parsed document before it is deserialized.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use pdc_core::components::{effective_propagation_length_cm, PropagationLength, WaveguideLoss};
use pdc_core::counting::{BackgroundCorrection, PairStatistics, Topology};
use pdc_core::dispersion::{MaterialCatalog, MaterialModel, DEFAULT_MATERIAL};
use pdc_core::jsa::{FilterProfile, PumpEnvelope, SpectralFilter};
use pdc_core::phasematch::{calibrate_offset, IndexOffsets, PolarizationMap, WaveguideSpec};
use pdc_core::{ComponentChain, OpticalElement};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_directory: PathBuf,
    pub device: DeviceConfig,
    #[serde(default)]
    pub shg: ShgConfig,
    #[serde(default)]
    pub pump: PumpEnvelope,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub filters: BTreeMap<String, FilterConfig>,
    #[serde(default)]
    pub jsa: JsaConfig,
    #[serde(default)]
    pub chains: BTreeMap<String, ChainConfig>,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub experiments: Vec<ExperimentBlock>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    #[serde(default = "default_material")]
    pub material: String,
    /// Extra catalog searched before the builtin one, relative to the config file.
    pub material_file: Option<PathBuf>,
    pub chip_length_mm: f64,
    pub poled_length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    #[serde(default)]
    pub polarization_map: PolarizationMap,
    #[serde(default)]
    pub effective_index_offset: IndexOffsets,
    /// When present the extraordinary offset is fitted to this degeneracy.
    pub observed_degeneracy_nm: Option<f64>,
    #[serde(default)]
    pub propagation_length: PropagationLength,
}

fn default_material() -> String {
    DEFAULT_MATERIAL.to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShgConfig {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub points: usize,
}

impl Default for ShgConfig {
    fn default() -> Self {
        ShgConfig {
            start_nm: 1553.0,
            stop_nm: 1563.5,
            points: 2101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub half_span_nm: f64,
    /// Defaults to the degeneracy of the (calibrated) device.
    pub center_nm: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            points: 512,
            half_span_nm: 9.0,
            center_nm: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub peak_transmission: f64,
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Exponent for `profile = "super_gaussian"`.
    pub order: Option<f64>,
}

fn default_profile() -> String {
    "flat_top".into()
}

impl FilterConfig {
    pub fn to_filter(&self) -> Result<SpectralFilter> {
        let profile = match (self.profile.as_str(), self.order) {
            ("flat_top", None) => FilterProfile::FlatTop,
            ("gaussian", None) => FilterProfile::Gaussian,
            ("super_gaussian", Some(order)) => FilterProfile::SuperGaussian(order),
            ("super_gaussian", None) => bail!("super_gaussian filter needs an `order`"),
            (p, Some(_)) if p != "super_gaussian" => bail!("`order` only applies to super_gaussian filters"),
            (p, _) => bail!("unknown filter profile `{p}`"),
        };
        let f = SpectralFilter {
            center_nm: self.center_nm,
            fwhm_nm: self.fwhm_nm,
            peak_transmission: self.peak_transmission,
            profile,
        };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsaConfig {
    pub signal_filter: Option<String>,
    pub idler_filter: Option<String>,
    #[serde(default = "yes")]
    pub delta_herald: bool,
    #[serde(default = "default_dispersion")]
    pub dispersion_ps_per_nm_km: f64,
    /// Clock of the link used for the fiber-reach figure.
    #[serde(default = "default_link_rate")]
    pub link_repetition_rate_hz: f64,
}

fn yes() -> bool {
    true
}

fn default_dispersion() -> f64 {
    pdc_core::jsa::SMF_DISPERSION_PS_PER_NM_KM
}

fn default_link_rate() -> f64 {
    1e9
}

impl Default for JsaConfig {
    fn default() -> Self {
        JsaConfig {
            signal_filter: None,
            idler_filter: None,
            delta_herald: true,
            dispersion_ps_per_nm_km: default_dispersion(),
            link_repetition_rate_hz: default_link_rate(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default)]
    pub elements: Vec<OpticalElement>,
    #[serde(default)]
    pub loss_db_per_cm: WaveguideLoss,
    /// Defaults to the device's propagation length.
    pub propagation_length_cm: Option<f64>,
    pub detector_efficiency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default = "signal_name")]
    pub signal_chain: String,
    #[serde(default = "idler_name")]
    pub idler_chain: String,
}

fn signal_name() -> String {
    "signal".into()
}

fn idler_name() -> String {
    "idler".into()
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            signal_chain: signal_name(),
            idler_chain: idler_name(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Share of each detector's clicks that come from background.
    #[serde(default)]
    pub background_fraction: f64,
    #[serde(default)]
    pub background_correction: BackgroundCorrection,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 0.85,
            background_fraction: 0.0,
            background_correction: BackgroundCorrection::default(),
        }
    }
}

/// Which Schmidt spectrum feeds a Monte-Carlo experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpectrum {
    #[default]
    Filtered,
    Unfiltered,
    /// `modes` equally weighted modes.
    Uniform,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub name: String,
    pub topology: Topology,
    pub pulses: u64,
    pub seed: u64,
    pub mean_pairs_per_pulse: f64,
    #[serde(default)]
    pub statistics: PairStatistics,
    #[serde(default)]
    pub source: SourceSpectrum,
    pub modes: Option<usize>,
    #[serde(default = "signal_name")]
    pub signal_chain: String,
    #[serde(default = "idler_name")]
    pub idler_chain: String,
    /// Overrides the detector block.
    pub background_fraction: Option<f64>,
    #[serde(default = "half")]
    pub splitter_ratio: f64,
    #[serde(default)]
    pub pump_power_mw: f64,
    /// Bandwidth used by the brightness estimator.
    pub signal_bandwidth_nm: Option<f64>,
}

fn half() -> f64 {
    0.5
}

/// A figure of merit compared against a reference.
///
/// Exactly one acceptance rule may be given: an absolute `tolerance` or a
/// `relative_tolerance` around `reference`, or a `min`/`max` window. With
/// `sigmas` the window is widened by that many statistical standard
/// deviations of the metric. Without a rule the check is informational.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub metric: String,
    pub reference: Option<f64>,
    pub tolerance: Option<f64>,
    pub relative_tolerance: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub sigmas: Option<f64>,
    #[serde(default)]
    pub note: String,
}

/// Parses a `--set` value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies `path=value`, where `path` is dotted and may index arrays.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override path `{path}` has an empty component");
    }
    set_in_table(doc, &keys, parse_value(raw.trim()), path)
}

fn set_in_table(table: &mut Table, keys: &[&str], value: Value, path: &str) -> Result<()> {
    let (key, rest) = keys.split_first().expect("non-empty");
    if rest.is_empty() {
        table.insert(key.to_string(), value);
        return Ok(());
    }
    let child = table
        .entry(key.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    set_in_value(child, rest, value, path)
}

fn set_in_value(node: &mut Value, keys: &[&str], value: Value, path: &str) -> Result<()> {
    match node {
        Value::Table(t) => set_in_table(t, keys, value, path),
        Value::Array(items) => {
            let (key, rest) = keys.split_first().expect("non-empty");
            let i: usize = key
                .parse()
                .with_context(|| format!("`{key}` in `{path}` must index an array"))?;
            let len = items.len();
            let item = items
                .get_mut(i)
                .ok_or_else(|| anyhow!("index {i} out of range (len {len}) in `{path}`"))?;
            if rest.is_empty() {
                *item = value;
                Ok(())
            } else {
                set_in_value(item, rest, value, path)
            }
        }
        _ => bail!("`{path}` descends into a scalar"),
    }
}

/// A loaded configuration with every reference resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    /// Device as described in the file.
    pub nominal: WaveguideSpec,
    /// Device after the optional offset calibration.
    pub device: WaveguideSpec,
    pub chains: BTreeMap<String, ComponentChain>,
    pub filters: BTreeMap<String, SpectralFilter>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut doc: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: RunConfig = Value::Table(doc)
            .try_into()
            .with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    fn material(&self, base: &Path) -> Result<MaterialModel> {
        if let Some(file) = &self.device.material_file {
            let path = base.join(file);
            let catalog = MaterialCatalog::from_path(&path).context("device.material_file")?;
            if let Ok(m) = catalog.get(&self.device.material) {
                return Ok(m.clone());
            }
        }
        MaterialModel::builtin(&self.device.material).context("device.material")
    }

    pub fn resolve(self, base: &Path) -> Result<Resolved> {
        let d = &self.device;
        let nominal = WaveguideSpec {
            chip_length_mm: d.chip_length_mm,
            poled_length_mm: d.poled_length_mm,
            poling_period_um: d.poling_period_um,
            temperature_c: d.temperature_c,
            polarization_map: d.polarization_map,
            effective_index_offset: d.effective_index_offset,
            material: self.material(base)?,
        };
        nominal.validate().context("device")?;
        let device = match d.observed_degeneracy_nm {
            Some(target) => calibrate_offset(&nominal, target).context("phasematch: calibrating device offset")?,
            None => nominal.clone(),
        };
        let length = effective_propagation_length_cm(&device, d.propagation_length);

        let mut chains = BTreeMap::new();
        for (name, c) in &self.chains {
            let chain = ComponentChain {
                elements: c.elements.clone(),
                loss_db_per_cm: c.loss_db_per_cm,
                propagation_length_cm: c.propagation_length_cm.unwrap_or(length),
                detector_efficiency: c.detector_efficiency,
            };
            chain.validate().with_context(|| format!("chains.{name}"))?;
            chains.insert(name.clone(), chain);
        }
        let mut filters = BTreeMap::new();
        for (name, f) in &self.filters {
            filters.insert(name.clone(), f.to_filter().with_context(|| format!("filters.{name}"))?);
        }

        let need_filter = |name: &Option<String>, key: &str| -> Result<()> {
            if let Some(n) = name {
                if !filters.contains_key(n) {
                    bail!("{key} refers to unknown filter `{n}`");
                }
            }
            Ok(())
        };
        need_filter(&self.jsa.signal_filter, "jsa.signal_filter")?;
        need_filter(&self.jsa.idler_filter, "jsa.idler_filter")?;
        let need_chain = |n: &str, key: &str| -> Result<()> {
            if !chains.contains_key(n) {
                bail!("{key} refers to unknown chain `{n}`");
            }
            Ok(())
        };
        if !self.chains.is_empty() {
            need_chain(&self.budget.signal_chain, "budget.signal_chain")?;
            need_chain(&self.budget.idler_chain, "budget.idler_chain")?;
        }
        let mut names = std::collections::BTreeSet::new();
        for (k, e) in self.experiments.iter().enumerate() {
            if !names.insert(e.name.as_str()) {
                bail!("experiments.{k}: duplicate experiment name `{}`", e.name);
            }
            need_chain(&e.signal_chain, &format!("experiments.{k}.signal_chain"))?;
            need_chain(&e.idler_chain, &format!("experiments.{k}.idler_chain"))?;
            if e.source == SourceSpectrum::Uniform && e.modes.is_none_or(|m| m == 0) {
                bail!("experiments.{k}: a uniform source needs `modes` >= 1");
            }
            if e.source != SourceSpectrum::Uniform && e.modes.is_some() {
                bail!("experiments.{k}: `modes` only applies to a uniform source");
            }
        }
        for (k, c) in self.checks.iter().enumerate() {
            crate::report::check_metric_name(&c.metric, &self.experiments).with_context(|| format!("checks.{k}"))?;
            let rules = [
                c.tolerance.is_some(),
                c.relative_tolerance.is_some(),
                c.min.is_some() || c.max.is_some(),
            ];
            if rules.iter().filter(|r| **r).count() > 1 {
                bail!("checks.{k}: give only one of tolerance, relative_tolerance or min/max");
            }
            if (c.tolerance.is_some() || c.relative_tolerance.is_some()) && c.reference.is_none() {
                bail!("checks.{k}: a tolerance needs a reference");
            }
        }
        Ok(Resolved {
            config: self,
            nominal,
            device,
            chains,
            filters,
        })
    }
}
