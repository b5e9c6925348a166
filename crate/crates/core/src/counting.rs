//! Click-level Monte Carlo of the counting experiments and the estimators
//! applied to their records.
//!
//! Pulses are processed in fixed-size blocks. Each block owns an independent
//! ChaCha8 stream derived from the experiment seed and its block index, so a
//! record depends only on the seed and the configuration, never on how many
//! threads ran the blocks. Within a block only the pulses that carry a pair
//! or a background click are visited: gaps between such pulses are drawn from
//! the geometric distribution.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::components::{chain_transmission, ComponentChain};
use crate::error::{Error, Result};
use crate::jsa::SchmidtDecomposition;
use crate::phasematch::PolarizationMap;

/// Pulses per independent random stream.
pub const BLOCK_PULSES: u64 = 1 << 16;

/// Pair-number statistics of a pulse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    /// Independent geometric distribution in each Schmidt mode.
    #[default]
    Thermal,
    Poissonian,
    /// At most one pair per pulse, emitted with probability `⟨n⟩`.
    SinglePair,
}

/// Photon-pair state emitted per pump pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    pub schmidt: SchmidtDecomposition,
    pub mean_pairs_per_pulse: f64,
    #[serde(default)]
    pub statistics: PairStatistics,
}

impl SourceState {
    pub fn new(schmidt: SchmidtDecomposition, mean_pairs_per_pulse: f64, statistics: PairStatistics) -> Result<Self> {
        let s = SourceState {
            schmidt,
            mean_pairs_per_pulse,
            statistics,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn thermal(schmidt: SchmidtDecomposition, mean_pairs_per_pulse: f64) -> Result<Self> {
        Self::new(schmidt, mean_pairs_per_pulse, PairStatistics::Thermal)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean_pairs_per_pulse;
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::arg(format!("mean pair number must be positive, got {n}")));
        }
        if self.statistics == PairStatistics::SinglePair && n > 1.0 {
            return Err(Error::arg("single-pair source needs a mean pair number of at most 1"));
        }
        let norm: f64 = self.schmidt.amplitudes.iter().map(|r| r * r).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "Schmidt amplitudes are not normalized (sum r^2 = {norm})"
            )));
        }
        Ok(())
    }

    pub fn mode_means(&self) -> Vec<f64> {
        self.schmidt.mode_means(self.mean_pairs_per_pulse)
    }
}

/// Pair numbers per Schmidt mode for one pulse.
pub fn sample_pulse<R: Rng + ?Sized>(state: &SourceState, rng: &mut R) -> Vec<u64> {
    let means = state.mode_means();
    match state.statistics {
        PairStatistics::Thermal => means
            .iter()
            .map(|&n| {
                if n > 0.0 {
                    Geometric::new(1.0 / (1.0 + n)).expect("valid probability").sample(rng)
                } else {
                    0
                }
            })
            .collect(),
        PairStatistics::Poissonian => means
            .iter()
            .map(|&n| {
                if n > 0.0 {
                    Poisson::new(n).expect("positive").sample(rng) as u64
                } else {
                    0
                }
            })
            .collect(),
        PairStatistics::SinglePair => {
            let mut out = vec![0; means.len()];
            if rng.random::<f64>() < state.mean_pairs_per_pulse {
                let mut u = rng.random::<f64>() * state.mean_pairs_per_pulse;
                let k = means
                    .iter()
                    .position(|&n| {
                        u -= n;
                        u < 0.0
                    })
                    .unwrap_or(means.len() - 1);
                out[k] = 1;
            }
            out
        }
    }
}

/// Threshold detector with per-pulse background clicks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    #[serde(default)]
    pub background_click_probability: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            efficiency: 0.85,
            background_click_probability: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        DetectorModel {
            efficiency: 1.0,
            background_click_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::arg(format!(
                "detector efficiency {} outside (0, 1]",
                self.efficiency
            )));
        }
        if !(0.0..1.0).contains(&self.background_click_probability) {
            return Err(Error::arg(format!(
                "background click probability {} outside [0, 1)",
                self.background_click_probability
            )));
        }
        Ok(())
    }
}

/// Detector models for the detectors watching each arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmDetectors {
    pub signal: DetectorModel,
    pub idler: DetectorModel,
}

/// Detector layout of an experiment.
///
/// * `direct`: d1 signal, d2 idler.
/// * `signal_splitter_g2`: d1 and d2 on the two outputs of a splitter in the
///   signal arm; the idler is not detected.
/// * `heralded_g2`: d1 and d2 on the split idler, d3 heralds on the signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Direct,
    SignalSplitterG2,
    HeraldedG2,
}

impl Topology {
    pub fn detectors(self) -> usize {
        match self {
            Topology::Direct | Topology::SignalSplitterG2 => 2,
            Topology::HeraldedG2 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Direct => "direct",
            Topology::SignalSplitterG2 => "signal_splitter_g2",
            Topology::HeraldedG2 => "heralded_g2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Topology::Direct),
            "signal_splitter_g2" => Ok(Topology::SignalSplitterG2),
            "heralded_g2" => Ok(Topology::HeraldedG2),
            _ => Err(Error::Parse(format!("unknown topology `{s}`"))),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_ratio() -> f64 {
    0.5
}

fn default_rate() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub pulses: u64,
    pub seed: u64,
    pub signal_chain: ComponentChain,
    pub idler_chain: ComponentChain,
    #[serde(default)]
    pub polarization_map: PolarizationMap,
    #[serde(default = "default_ratio")]
    pub splitter_ratio: f64,
    #[serde(default = "default_rate")]
    pub repetition_rate_hz: f64,
    /// On-chip pump power, only carried into the record.
    #[serde(default)]
    pub pump_power_mw: f64,
}

impl ExperimentConfig {
    /// Lossless chains, ideal splitter, 1 MHz.
    pub fn lossless(topology: Topology, pulses: u64, seed: u64) -> Self {
        ExperimentConfig {
            topology,
            pulses,
            seed,
            signal_chain: ComponentChain::lossless(),
            idler_chain: ComponentChain::lossless(),
            polarization_map: PolarizationMap::default(),
            splitter_ratio: 0.5,
            repetition_rate_hz: 1e6,
            pump_power_mw: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(Error::arg("an experiment needs at least one pulse"));
        }
        if !(self.splitter_ratio > 0.0 && self.splitter_ratio < 1.0) {
            return Err(Error::arg(format!(
                "splitter ratio {} outside (0, 1)",
                self.splitter_ratio
            )));
        }
        if !(self.repetition_rate_hz > 0.0) {
            return Err(Error::arg("repetition rate must be positive"));
        }
        if !(self.pump_power_mw >= 0.0) {
            return Err(Error::arg("pump power must be non-negative"));
        }
        self.polarization_map.validate()?;
        self.signal_chain.validate()?;
        self.idler_chain.validate()
    }

    /// Survival probability of a signal and an idler photon up to and
    /// including detection. The detector efficiency comes from the detector
    /// model, not from the chain.
    pub fn survival(&self, detectors: &ArmDetectors) -> Result<(f64, f64)> {
        let ts = chain_transmission(&self.signal_chain, self.polarization_map.signal.polarization, false)?;
        let ti = chain_transmission(&self.idler_chain, self.polarization_map.idler.polarization, false)?;
        Ok((ts * detectors.signal.efficiency, ti * detectors.idler.efficiency))
    }
}

/// Counts of one experiment.
///
/// Coincidence slots are `[d1d2, d1d3, d2d3]`; unused detectors stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub topology: Topology,
    pub pulses: u64,
    pub singles: [u64; 3],
    pub coincidences: [u64; 3],
    pub triples: u64,
    pub integration_time_s: f64,
    pub pump_power_mw: f64,
}

const PAIR_KEYS: [&str; 3] = ["d1d2", "d1d3", "d2d3"];

impl CountRecord {
    pub fn empty(topology: Topology, pump_power_mw: f64) -> Self {
        CountRecord {
            topology,
            pulses: 0,
            singles: [0; 3],
            coincidences: [0; 3],
            triples: 0,
            integration_time_s: 0.0,
            pump_power_mw,
        }
    }

    pub fn singles(&self, detector: usize) -> u64 {
        self.singles[detector - 1]
    }

    pub fn coincidences(&self, a: usize, b: usize) -> u64 {
        let (a, b) = (a.min(b), a.max(b));
        match (a, b) {
            (1, 2) => self.coincidences[0],
            (1, 3) => self.coincidences[1],
            (2, 3) => self.coincidences[2],
            _ => panic!("no coincidence slot for detectors {a} and {b}"),
        }
    }

    /// Fieldwise sum. Integration times add, the pump power must agree.
    pub fn merge(&self, other: &CountRecord) -> Result<CountRecord> {
        if self.topology != other.topology {
            return Err(Error::arg(format!(
                "cannot merge {} and {} records",
                self.topology, other.topology
            )));
        }
        if self.pump_power_mw != other.pump_power_mw {
            return Err(Error::arg("cannot merge records taken at different pump powers"));
        }
        let mut out = self.clone();
        out.absorb(other);
        out.integration_time_s = self.integration_time_s + other.integration_time_s;
        Ok(out)
    }

    fn absorb(&mut self, t: &CountRecord) {
        self.pulses += t.pulses;
        for k in 0..3 {
            self.singles[k] += t.singles[k];
            self.coincidences[k] += t.coincidences[k];
        }
        self.triples += t.triples;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.topology.detectors();
        let bad = |what: &str| Err(Error::Parse(format!("inconsistent count record: {what}")));
        for d in 1..=3 {
            if self.singles(d) > self.pulses {
                return bad("singles exceed pulses");
            }
            if d > n && self.singles(d) != 0 {
                return bad("counts on an absent detector");
            }
        }
        for (a, b) in [(1, 2), (1, 3), (2, 3)] {
            let c = self.coincidences(a, b);
            if c > self.singles(a).min(self.singles(b)) {
                return bad("coincidences exceed singles");
            }
            if self.triples > c && n == 3 {
                return bad("triples exceed a pairwise coincidence");
            }
        }
        if n < 3 && self.triples != 0 {
            return bad("triples without a third detector");
        }
        Ok(())
    }

    /// Flat key/value document with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let mut map = BTreeMap::new();
        let n = self.topology.detectors();
        for d in 1..=n {
            map.insert(format!("singles.d{d}"), Value::from(self.singles(d)));
        }
        for (k, key) in PAIR_KEYS.iter().enumerate() {
            if k == 0 || n == 3 {
                map.insert(format!("coinc.{key}"), Value::from(self.coincidences[k]));
            }
        }
        map.insert("triples".into(), Value::from(self.triples));
        map.insert("pulses".into(), Value::from(self.pulses));
        map.insert("integration_time_s".into(), Value::from(self.integration_time_s));
        map.insert("pump_power_mw".into(), Value::from(self.pump_power_mw));
        map.insert("topology".into(), Value::from(self.topology.name()));
        let mut s = serde_json::to_string_pretty(&map)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, Value> = serde_json::from_str(text)?;
        let int = |k: &str| -> Result<u64> {
            match map.get(k) {
                None => Ok(0),
                Some(v) => v.as_u64().ok_or_else(|| Error::Parse(format!("`{k}` is not a count"))),
            }
        };
        let float = |k: &str| -> Result<f64> {
            map.get(k)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Parse(format!("missing number `{k}`")))
        };
        let topology = Topology::parse(
            map.get("topology")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Parse("missing `topology`".into()))?,
        )?;
        let known = |k: &str| {
            k.starts_with("singles.d")
                || k.starts_with("coinc.")
                || matches!(
                    k,
                    "triples" | "pulses" | "integration_time_s" | "pump_power_mw" | "topology"
                )
        };
        if let Some(k) = map.keys().find(|k| !known(k)) {
            return Err(Error::Parse(format!("unknown key `{k}`")));
        }
        if !map.contains_key("pulses") {
            return Err(Error::Parse("missing `pulses`".into()));
        }
        let r = CountRecord {
            topology,
            pulses: int("pulses")?,
            singles: [int("singles.d1")?, int("singles.d2")?, int("singles.d3")?],
            coincidences: [int("coinc.d1d2")?, int("coinc.d1d3")?, int("coinc.d2d3")?],
            triples: int("triples")?,
            integration_time_s: float("integration_time_s")?,
            pump_power_mw: float("pump_power_mw")?,
        };
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PulseEvent {
    pairs: u64,
    /// Bit `d` set when detector `d + 1` fires from background.
    background: u8,
}

struct Plan {
    topology: Topology,
    statistics: PairStatistics,
    mode_means: Vec<f64>,
    total_mean: f64,
    survival: (f64, f64),
    ratio: f64,
    background: [f64; 3],
}

/// Failures before the first success by inversion. `rand_distr::Geometric`
/// becomes very slow for the tiny probabilities of weak Schmidt modes.
fn geometric_gap<R: Rng>(rng: &mut R, log_fail: f64) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let g = (u.ln() / log_fail).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Visits every `p`-probability success in `0..len`.
fn skip_sample<R: Rng>(rng: &mut R, p: f64, len: u64, mut hit: impl FnMut(u64, &mut R)) {
    if !(p > 0.0) {
        return;
    }
    if p >= 1.0 {
        for pos in 0..len {
            hit(pos, rng);
        }
        return;
    }
    let log_fail = (-p).ln_1p();
    let mut pos = geometric_gap(rng, log_fail);
    while pos < len {
        hit(pos, rng);
        pos = pos.saturating_add(1).saturating_add(geometric_gap(rng, log_fail));
    }
}

/// Zero-truncated Poisson by inversion.
fn positive_poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 1u64;
    let mut pmf = mean * (-mean).exp() / -(-mean).exp_m1();
    let mut cdf = pmf;
    while u > cdf && k < 10_000 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
        if pmf < 1e-300 {
            break;
        }
    }
    k
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

fn run_block(plan: &Plan, seed: u64, block: u64, len: u64) -> CountRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let mut events: BTreeMap<u64, PulseEvent> = BTreeMap::new();

    match plan.statistics {
        PairStatistics::Thermal => {
            for &n in &plan.mode_means {
                if !(n > 0.0) {
                    continue;
                }
                // P(m) = (1 − q)·q^m, and m − 1 given m ≥ 1 has the same law
                let q = n / (1.0 + n);
                let extra = Geometric::new(1.0 - q).expect("valid probability");
                skip_sample(&mut rng, q, len, |pos, rng| {
                    events.entry(pos).or_default().pairs += 1 + extra.sample(rng);
                });
            }
        }
        PairStatistics::Poissonian => {
            let n = plan.total_mean;
            skip_sample(&mut rng, -(-n).exp_m1(), len, |pos, rng| {
                events.entry(pos).or_default().pairs += positive_poisson(rng, n);
            });
        }
        PairStatistics::SinglePair => {
            skip_sample(&mut rng, plan.total_mean, len, |pos, _| {
                events.entry(pos).or_default().pairs += 1;
            });
        }
    }
    for (d, &p) in plan.background.iter().enumerate() {
        skip_sample(&mut rng, p, len, |pos, _| {
            events.entry(pos).or_default().background |= 1 << d;
        });
    }

    let mut rec = CountRecord::empty(plan.topology, 0.0);
    rec.pulses = len;
    let (ts, ti) = plan.survival;
    for ev in events.values() {
        let s = binomial(&mut rng, ev.pairs, ts);
        let i = binomial(&mut rng, ev.pairs, ti);
        let bg = |d: usize| ev.background & (1 << d) != 0;
        let clicks: [bool; 3] = match plan.topology {
            Topology::Direct => [s > 0 || bg(0), i > 0 || bg(1), false],
            Topology::SignalSplitterG2 => {
                let s1 = binomial(&mut rng, s, plan.ratio);
                [s1 > 0 || bg(0), s - s1 > 0 || bg(1), false]
            }
            Topology::HeraldedG2 => {
                let i1 = binomial(&mut rng, i, plan.ratio);
                [i1 > 0 || bg(0), i - i1 > 0 || bg(1), s > 0 || bg(2)]
            }
        };
        for (n, c) in rec.singles.iter_mut().zip(clicks) {
            *n += c as u64;
        }
        rec.coincidences[0] += (clicks[0] && clicks[1]) as u64;
        rec.coincidences[1] += (clicks[0] && clicks[2]) as u64;
        rec.coincidences[2] += (clicks[1] && clicks[2]) as u64;
        rec.triples += (clicks[0] && clicks[1] && clicks[2]) as u64;
    }
    rec
}

/// Runs the configured experiment. Identical inputs give identical records.
pub fn run_experiment(config: &ExperimentConfig, state: &SourceState, detectors: &ArmDetectors) -> Result<CountRecord> {
    config.validate()?;
    state.validate()?;
    detectors.signal.validate()?;
    detectors.idler.validate()?;

    let (bs, bi) = (
        detectors.signal.background_click_probability,
        detectors.idler.background_click_probability,
    );
    let background = match config.topology {
        Topology::Direct => [bs, bi, 0.0],
        Topology::SignalSplitterG2 => [bs, bs, 0.0],
        Topology::HeraldedG2 => [bi, bi, bs],
    };
    let plan = Plan {
        topology: config.topology,
        statistics: state.statistics,
        mode_means: state.mode_means(),
        total_mean: state.mean_pairs_per_pulse,
        survival: config.survival(detectors)?,
        ratio: config.splitter_ratio,
        background,
    };

    let blocks = config.pulses.div_ceil(BLOCK_PULSES);
    let mut rec = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK_PULSES.min(config.pulses - b * BLOCK_PULSES);
            run_block(&plan, config.seed, b, len)
        })
        .reduce(
            || CountRecord::empty(config.topology, 0.0),
            |mut a, b| {
                a.absorb(&b);
                a
            },
        );
    rec.integration_time_s = config.pulses as f64 / config.repetition_rate_hz;
    rec.pump_power_mw = config.pump_power_mw;
    Ok(rec)
}

/// An estimate with its one-sigma statistical uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    /// Separation from `target` in units of sigma.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.sigma
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.value - target).abs() <= sigmas * self.sigma
    }
}

fn require(record: &CountRecord, topology: Topology) -> Result<()> {
    if record.topology != topology {
        return Err(Error::arg(format!(
            "estimator needs a {topology} record, got {}",
            record.topology
        )));
    }
    Ok(())
}

/// Raw heralding efficiency of the idler, `C/S_s`, with binomial sigma.
pub fn heralding_efficiency(record: &CountRecord) -> Result<Estimate> {
    require(record, Topology::Direct)?;
    let heralds = record.singles(1) as f64;
    if heralds == 0.0 {
        return Err(Error::UndefinedEstimate("no herald counts"));
    }
    let eta = record.coincidences(1, 2) as f64 / heralds;
    Ok(Estimate {
        value: eta,
        sigma: (eta * (1.0 - eta) / heralds).sqrt(),
    })
}

pub fn corrected_heralding(raw: f64, detector_efficiency: f64) -> Result<f64> {
    if !(detector_efficiency > 0.0 && detector_efficiency <= 1.0) {
        return Err(Error::arg(format!(
            "detector efficiency {detector_efficiency} outside (0, 1]"
        )));
    }
    Ok(raw / detector_efficiency)
}

/// `g² = C₁₂·N/(S₁·S₂)` on the split signal arm.
///
/// The sigma treats the exclusive singles and the coincidences as
/// independent Poisson counts.
pub fn unheralded_g2(record: &CountRecord) -> Result<Estimate> {
    require(record, Topology::SignalSplitterG2)?;
    let (s1, s2) = (record.singles(1) as f64, record.singles(2) as f64);
    if s1 == 0.0 || s2 == 0.0 {
        return Err(Error::UndefinedEstimate("no singles on a splitter output"));
    }
    let c = record.coincidences(1, 2) as f64;
    let value = c * record.pulses as f64 / (s1 * s2);
    let sigma = if c > 0.0 {
        let rel = (s1 - c) / (s1 * s1) + (s2 - c) / (s2 * s2) + c * (1.0 / c - 1.0 / s1 - 1.0 / s2).powi(2);
        value * rel.sqrt()
    } else {
        record.pulses as f64 / (s1 * s2)
    };
    Ok(Estimate { value, sigma })
}

/// Convention used to remove uncorrelated background from a measured g².
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundCorrection {
    /// Poissonian background mixed into the signal at fraction `b`:
    /// `1 + (g² − 1)/(1 − b)²`.
    #[default]
    PoissonianAdmixture,
    Uncorrected,
}

pub fn background_corrected_g2(g2_raw: f64, background_fraction: f64, convention: BackgroundCorrection) -> Result<f64> {
    if !(0.0..1.0).contains(&background_fraction) {
        return Err(Error::arg(format!(
            "background fraction {background_fraction} outside [0, 1)"
        )));
    }
    Ok(match convention {
        BackgroundCorrection::PoissonianAdmixture => {
            let rho = 1.0 - background_fraction;
            1.0 + (g2_raw - 1.0) / (rho * rho)
        }
        BackgroundCorrection::Uncorrected => g2_raw,
    })
}

/// `g²_h = C₁₂₃·N₃/(C₁₃·C₂₃)` with d3 the herald.
pub fn heralded_g2(record: &CountRecord) -> Result<Estimate> {
    require(record, Topology::HeraldedG2)?;
    let c13 = record.coincidences(1, 3) as f64;
    let c23 = record.coincidences(2, 3) as f64;
    if c13 == 0.0 || c23 == 0.0 {
        return Err(Error::UndefinedEstimate("no herald coincidences on a splitter output"));
    }
    let c123 = record.triples as f64;
    let value = c123 * record.singles(3) as f64 / (c13 * c23);
    let scale = if c123 > 0.0 {
        value
    } else {
        record.singles(3) as f64 / (c13 * c23)
    };
    Ok(Estimate {
        value,
        sigma: scale * (1.0 / c123.max(1.0) + 1.0 / c13 + 1.0 / c23).sqrt(),
    })
}

/// Pair generation rate per second, mW and nm of signal bandwidth,
/// `S_s·S_i/(C·t·P·Δλ)`.
pub fn brightness(record: &CountRecord, signal_bandwidth_nm: f64) -> Result<Estimate> {
    require(record, Topology::Direct)?;
    let c = record.coincidences(1, 2) as f64;
    if c == 0.0 {
        return Err(Error::UndefinedEstimate("no coincidences"));
    }
    for (name, v) in [
        ("integration time", record.integration_time_s),
        ("pump power", record.pump_power_mw),
        ("signal bandwidth", signal_bandwidth_nm),
    ] {
        if !(v > 0.0) {
            return Err(Error::arg(format!("{name} must be positive, got {v}")));
        }
    }
    let (ss, si) = (record.singles(1) as f64, record.singles(2) as f64);
    let value = ss * si / (c * record.integration_time_s * record.pump_power_mw * signal_bandwidth_nm);
    let rel = (ss - c) / (ss * ss) + (si - c) / (si * si) + c * (1.0 / ss + 1.0 / si - 1.0 / c).powi(2);
    Ok(Estimate {
        value,
        sigma: value * rel.sqrt(),
    })
}

/// Probability that a detector behind transmission `t` sees no photon.
pub fn no_click_probability(state: &SourceState, transmission: f64) -> f64 {
    match state.statistics {
        PairStatistics::Thermal => state
            .mode_means()
            .iter()
            .map(|n| 1.0 / (1.0 + n * transmission))
            .product(),
        PairStatistics::Poissonian => (-state.mean_pairs_per_pulse * transmission).exp(),
        PairStatistics::SinglePair => 1.0 - state.mean_pairs_per_pulse * transmission,
    }
}

/// Per-pulse background probability that makes background a fraction
/// `fraction` of all clicks on a detector whose photon click probability is
/// `photon_click_probability`.
pub fn background_probability_for_fraction(photon_click_probability: f64, fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::arg(format!("background fraction {fraction} outside [0, 1)")));
    }
    let p = photon_click_probability;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::arg(format!("click probability {p} outside [0, 1)")));
    }
    let total = p / (1.0 - fraction);
    if total >= 1.0 {
        return Err(Error::arg(
            "requested background fraction needs a click probability above 1",
        ));
    }
    Ok(1.0 - (1.0 - total) / (1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_mode(n: f64) -> SourceState {
        SourceState::thermal(SchmidtDecomposition::uniform(1), n).unwrap()
    }

    #[test]
    fn vacuum_draws_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = single_mode(0.1);
        s.schmidt.amplitudes = vec![1.0, 0.0];
        let draws = sample_pulse(&s, &mut rng);
        assert_eq!(draws[1], 0);
    }

    #[test]
    fn thermal_moments_single_mode() {
        let n = 0.1;
        let state = single_mode(n);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pulses = 10_000_000u64;
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..pulses {
            let m = sample_pulse(&state, &mut rng)[0] as f64;
            s1 += m;
            s2 += m * m;
        }
        let mean = s1 / pulses as f64;
        let var = s2 / pulses as f64 - mean * mean;
        let var_true = n * (1.0 + n);
        assert!(
            (mean - n).abs() < 4.0 * (var_true / pulses as f64).sqrt(),
            "mean {mean}"
        );
        // fourth central moment of the geometric law
        let m4 = var_true * (1.0 + 9.0 * var_true);
        let sigma_var = ((m4 - var_true * var_true) / pulses as f64).sqrt();
        assert!((var - var_true).abs() < 4.0 * sigma_var, "var {var}");
    }

    #[test]
    fn two_mode_fano_factor() {
        let n = 0.1;
        let state = SourceState::thermal(SchmidtDecomposition::uniform(2), n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pulses = 4_000_000u64;
        let mut xs = Vec::with_capacity(pulses as usize);
        for _ in 0..pulses {
            xs.push(sample_pulse(&state, &mut rng).iter().sum::<u64>() as f64);
        }
        let mean = xs.iter().sum::<f64>() / pulses as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / pulses as f64;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / pulses as f64;
        let fano = var / mean;
        let sigma = ((m4 - var * var) / pulses as f64).sqrt() / mean + fano * (var / pulses as f64).sqrt() / mean;
        let expected = 1.0 + n * state.schmidt.purity();
        assert!(
            (fano - expected).abs() < 4.0 * sigma,
            "fano {fano} vs {expected} ± {sigma}"
        );
        assert!(fano > 1.0 && fano < 1.0 + n);
    }

    #[test]
    fn lossless_direct_heralds_perfectly() {
        let cfg = ExperimentConfig::lossless(Topology::Direct, 1_000_000, 3);
        let rec = run_experiment(
            &cfg,
            &single_mode(0.01),
            &ArmDetectors {
                signal: DetectorModel::ideal(),
                idler: DetectorModel::ideal(),
            },
        )
        .unwrap();
        assert!(rec.singles(1) > 0);
        assert_eq!(heralding_efficiency(&rec).unwrap().value, 1.0);
    }

    #[test]
    fn records_are_deterministic_and_merge() {
        let det = ArmDetectors::default();
        let state = single_mode(0.05);
        let a = ExperimentConfig::lossless(Topology::HeraldedG2, 300_000, 5);
        let r1 = run_experiment(&a, &state, &det).unwrap();
        let r2 = run_experiment(&a, &state, &det).unwrap();
        assert_eq!(r1.to_json().unwrap(), r2.to_json().unwrap());
        let other = run_experiment(&ExperimentConfig { seed: 6, ..a.clone() }, &state, &det).unwrap();
        let m = r1.merge(&other).unwrap();
        assert_eq!(m.pulses, 600_000);
        assert_eq!(m.triples, r1.triples + other.triples);
        assert_relative_eq!(m.integration_time_s, 0.6, max_relative = 1e-12);
        let direct = CountRecord::empty(Topology::Direct, 0.0);
        assert!(r1.merge(&direct).is_err());
    }

    #[test]
    fn json_round_trip() {
        let det = ArmDetectors::default();
        let cfg = ExperimentConfig {
            pump_power_mw: 0.001,
            ..ExperimentConfig::lossless(Topology::HeraldedG2, 100_000, 9)
        };
        let rec = run_experiment(&cfg, &single_mode(0.05), &det).unwrap();
        let text = rec.to_json().unwrap();
        assert!(text.contains("\"coinc.d2d3\""));
        assert_eq!(CountRecord::from_json(&text).unwrap(), rec);
        assert!(CountRecord::from_json("{\"pulses\": 1}").is_err());
    }

    #[test]
    fn inconsistent_record_rejected() {
        let text = r#"{"coinc.d1d2": 5, "singles.d1": 3, "singles.d2": 9, "pulses": 10,
            "triples": 0, "integration_time_s": 1.0, "pump_power_mw": 1.0, "topology": "direct"}"#;
        assert!(CountRecord::from_json(text).is_err());
    }

    #[test]
    fn single_pair_source_has_zero_heralded_g2() {
        let state = SourceState::new(SchmidtDecomposition::uniform(1), 0.3, PairStatistics::SinglePair).unwrap();
        let cfg = ExperimentConfig::lossless(Topology::HeraldedG2, 200_000, 1);
        let rec = run_experiment(
            &cfg,
            &state,
            &ArmDetectors {
                signal: DetectorModel::ideal(),
                idler: DetectorModel::ideal(),
            },
        )
        .unwrap();
        assert_eq!(heralded_g2(&rec).unwrap().value, 0.0);
    }

    #[test]
    fn estimator_arithmetic() {
        let mut rec = CountRecord::empty(Topology::Direct, 0.0);
        rec.pulses = 10_000;
        rec.singles = [1000, 1200, 0];
        rec.coincidences = [462, 0, 0];
        assert_relative_eq!(heralding_efficiency(&rec).unwrap().value, 0.462);
        assert_relative_eq!(corrected_heralding(0.462, 0.85).unwrap(), 0.543_529_411_764_705_9);
        assert_eq!(corrected_heralding(0.5, 0.5).unwrap(), 1.0);
        assert!(corrected_heralding(0.5, 0.0).is_err());
        rec.singles[0] = 0;
        rec.coincidences[0] = 0;
        assert!(matches!(heralding_efficiency(&rec), Err(Error::UndefinedEstimate(_))));
    }

    #[test]
    fn background_correction_convention() {
        let c = BackgroundCorrection::PoissonianAdmixture;
        assert_eq!(background_corrected_g2(1.37, 0.0, c).unwrap(), 1.37);
        assert!((background_corrected_g2(1.37, 0.0913, c).unwrap() - 1.448).abs() < 5e-4);
        assert_eq!(
            background_corrected_g2(1.37, 0.0913, BackgroundCorrection::Uncorrected).unwrap(),
            1.37
        );
        assert!(background_corrected_g2(1.37, 1.0, c).is_err());
    }

    #[test]
    fn brightness_reduces_for_perfect_pairs() {
        let mut rec = CountRecord::empty(Topology::Direct, 2.0);
        rec.pulses = 1000;
        rec.singles = [500, 500, 0];
        rec.coincidences = [500, 0, 0];
        rec.integration_time_s = 0.5;
        assert_relative_eq!(brightness(&rec, 4.0).unwrap().value, 500.0 / (0.5 * 2.0 * 4.0));
        rec.coincidences = [0, 0, 0];
        assert!(brightness(&rec, 4.0).is_err());
    }

    #[test]
    fn background_fraction_is_recovered_analytically() {
        let p_s = 0.004;
        let b = 0.0913;
        let p_b = background_probability_for_fraction(p_s, b).unwrap();
        let total = 1.0 - (1.0 - p_s) * (1.0 - p_b);
        assert_relative_eq!((total - p_s) / total, b, max_relative = 1e-12);
        assert_eq!(background_probability_for_fraction(p_s, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn analytic_click_probability_matches_monte_carlo() {
        let state = SourceState::thermal(SchmidtDecomposition::uniform(2), 0.05).unwrap();
        let cfg = ExperimentConfig::lossless(Topology::Direct, 2_000_000, 21);
        let det = ArmDetectors {
            signal: DetectorModel {
                efficiency: 0.4,
                background_click_probability: 0.0,
            },
            idler: DetectorModel::ideal(),
        };
        let rec = run_experiment(&cfg, &state, &det).unwrap();
        let p = 1.0 - no_click_probability(&state, 0.4);
        let n = rec.pulses as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((rec.singles(1) as f64 / n - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::lossless(Topology::Direct, 0, 1);
        assert!(cfg.validate().is_err());
        cfg.pulses = 10;
        cfg.splitter_ratio = 1.0;
        assert!(cfg.validate().is_err());
        assert!(SourceState::thermal(SchmidtDecomposition::uniform(1), 0.0).is_err());
    }
}
