//! The pipeline stages behind each subcommand. Every stage returns a
//! serializable summary and writes its data files into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use pdc_core::components::{
    arm_transmission, chain_transmission, effective_propagation_length_cm, mode_overlap, predicted_raw_heralding,
    GaussianMode,
};
use pdc_core::counting::{
    background_corrected_g2, background_probability_for_fraction, brightness, corrected_heralding, heralded_g2,
    heralding_efficiency, no_click_probability, run_experiment, unheralded_g2, ArmDetectors, CountRecord,
    DetectorModel, Estimate, ExperimentConfig, SourceState, Topology,
};
use pdc_core::jsa::{
    apply_filter, build_jsa, coherence_time, marginals, max_fiber_distance, purity_from_intensity, schmidt_decompose,
    Arm, CoherenceTime, JointSpectralAmplitude, Marginals, SchmidtDecomposition, SpectralGridAxes,
};
use pdc_core::phasematch::{find_degenerate_wavelength, find_poling_period, shg_tuning_curve};
use pdc_core::Polarization;

use crate::config::{ExperimentBlock, Resolved, SourceSpectrum};

/// Destination of the emitted files.
pub struct Output {
    pub dir: PathBuf,
    pub quiet: bool,
}

impl Output {
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct ShgSummary {
    pub poled_length_mm: f64,
    pub points: usize,
    pub peak_wavelength_nm: f64,
    pub fwhm_nm: f64,
    pub file: String,
}

pub fn shg(r: &Resolved, out: &Output) -> Result<ShgSummary> {
    let s = &r.config.shg;
    let curve = shg_tuning_curve(&r.device, s.start_nm, s.stop_nm, s.points).context("phasematch: SHG tuning curve")?;
    let fwhm_nm = curve.fwhm_nm().context("phasematch: SHG tuning curve")?;
    let path = out.write("shg_tuning.csv", &curve.to_csv()?)?;
    let summary = ShgSummary {
        poled_length_mm: r.device.poled_length_mm,
        points: s.points,
        peak_wavelength_nm: curve.peak_wavelength_nm(),
        fwhm_nm,
        file: file_name(&path),
    };
    out.write_json("shg.json", &summary)?;
    out.say(format!(
        "SHG: peak {:.3} nm, FWHM {:.4} nm ({} mm poled)",
        summary.peak_wavelength_nm, summary.fwhm_nm, summary.poled_length_mm
    ));
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub temperature_c: f64,
    pub poling_period_um: f64,
    pub nominal_degeneracy_nm: f64,
    pub calibration_target_nm: Option<f64>,
    pub extraordinary_index_offset: f64,
    pub calibrated_degeneracy_nm: f64,
    /// Period that makes the nominal device degenerate at the target.
    pub period_for_target_um: Option<f64>,
}

pub fn design(r: &Resolved, out: &Output) -> Result<DesignSummary> {
    let nominal = find_degenerate_wavelength(&r.nominal).context("phasematch: nominal degeneracy")?;
    let calibrated = find_degenerate_wavelength(&r.device).context("phasematch: calibrated degeneracy")?;
    let target = r.config.device.observed_degeneracy_nm;
    let period = target
        .map(|t| find_poling_period(&r.nominal, t / 2.0, t, t))
        .transpose()
        .context("phasematch: poling period")?;
    let summary = DesignSummary {
        temperature_c: r.device.temperature_c,
        poling_period_um: r.device.poling_period_um,
        nominal_degeneracy_nm: nominal,
        calibration_target_nm: target,
        extraordinary_index_offset: r.device.effective_index_offset.extraordinary,
        calibrated_degeneracy_nm: calibrated,
        period_for_target_um: period,
    };
    out.write_json("design.json", &summary)?;
    out.say(format!(
        "design: degeneracy {nominal:.3} nm nominal, {calibrated:.4} nm calibrated (offset {:+.6})",
        summary.extraordinary_index_offset
    ));
    if let Some(p) = period {
        out.say(format!("design: poling period for the target {p:.4} um"));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub signal_fwhm_nm: f64,
    pub idler_fwhm_nm: f64,
    pub purity: f64,
    pub schmidt_number: f64,
    /// Purity of `√JSI`, i.e. with the spectral phase discarded.
    pub flat_phase_purity: f64,
    pub total_probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JsaSummary {
    pub grid_points: usize,
    pub center_nm: f64,
    pub half_span_nm: f64,
    pub unfiltered: SpectrumSummary,
    pub filtered: Option<SpectrumSummary>,
    pub coherence: CoherenceTime,
    pub delta_herald: bool,
    pub max_fiber_distance_km: f64,
    pub files: Vec<String>,
}

pub struct JsaProducts {
    pub unfiltered: SchmidtDecomposition,
    pub filtered: Option<SchmidtDecomposition>,
    pub summary: JsaSummary,
}

fn describe(jsa: &JointSpectralAmplitude, m: &Marginals, d: &SchmidtDecomposition) -> Result<SpectrumSummary> {
    Ok(SpectrumSummary {
        signal_fwhm_nm: m.signal_fwhm_nm()?,
        idler_fwhm_nm: m.idler_fwhm_nm()?,
        purity: d.purity(),
        schmidt_number: d.schmidt_number(),
        flat_phase_purity: purity_from_intensity(&jsa.intensity())?,
        total_probability: jsa.total_probability(),
    })
}

pub fn jsa(r: &Resolved, out: &Output) -> Result<JsaProducts> {
    let c = &r.config;
    let center = match c.grid.center_nm {
        Some(v) => v,
        None => find_degenerate_wavelength(&r.device).context("jsa: grid center")?,
    };
    let axes = SpectralGridAxes::centered(center, center, c.grid.half_span_nm, c.grid.points).context("jsa: grid")?;
    let raw = build_jsa(&r.device, &c.pump, axes).context("jsa: building amplitude")?;
    let mut files = Vec::new();

    let mut emit = |tag: &str, jsa: &JointSpectralAmplitude| -> Result<(Marginals, SchmidtDecomposition)> {
        let m = marginals(jsa);
        let d = schmidt_decompose(jsa).with_context(|| format!("jsa: Schmidt decomposition ({tag})"))?;
        for (name, text) in [
            (format!("jsi_{tag}.csv"), jsa.intensity_csv()?),
            (format!("marginal_{tag}_signal.csv"), m.signal_csv()?),
            (format!("marginal_{tag}_idler.csv"), m.idler_csv()?),
            (format!("schmidt_{tag}.csv"), d.to_csv()?),
        ] {
            files.push(file_name(&out.write(&name, &text)?));
        }
        Ok((m, d))
    };

    let (m_raw, d_raw) = emit("unfiltered", &raw)?;
    let unfiltered = describe(&raw, &m_raw, &d_raw).context("jsa: unfiltered spectrum")?;

    let mut filtered_jsa = None;
    if c.jsa.signal_filter.is_some() || c.jsa.idler_filter.is_some() {
        let mut f = raw.clone();
        for (arm, name) in [(Arm::Signal, &c.jsa.signal_filter), (Arm::Idler, &c.jsa.idler_filter)] {
            if let Some(name) = name {
                f = apply_filter(&f, &r.filters[name], arm).with_context(|| format!("jsa: filter `{name}`"))?;
            }
        }
        filtered_jsa = Some(f);
    }
    let (filtered, d_filtered) = match &filtered_jsa {
        Some(f) => {
            let (m, d) = emit("filtered", f)?;
            (Some(describe(f, &m, &d).context("jsa: filtered spectrum")?), Some(d))
        }
        None => (None, None),
    };

    let heralded = filtered_jsa.as_ref().unwrap_or(&raw);
    let coherence = coherence_time(heralded, c.jsa.delta_herald).context("jsa: coherence time")?;
    let reach = max_fiber_distance(
        coherence.bandwidth_nm,
        c.jsa.dispersion_ps_per_nm_km,
        c.jsa.link_repetition_rate_hz,
    )?;
    let summary = JsaSummary {
        grid_points: c.grid.points,
        center_nm: center,
        half_span_nm: c.grid.half_span_nm,
        unfiltered,
        filtered,
        coherence,
        delta_herald: c.jsa.delta_herald,
        max_fiber_distance_km: reach,
        files,
    };
    out.write_json("jsa.json", &summary)?;
    let u = &summary.unfiltered;
    out.say(format!(
        "JSA: unfiltered marginals {:.3} / {:.3} nm, purity {:.3} (K = {:.2})",
        u.signal_fwhm_nm, u.idler_fwhm_nm, u.purity, u.schmidt_number
    ));
    if let Some(f) = &summary.filtered {
        out.say(format!(
            "JSA: filtered marginals {:.3} / {:.3} nm, purity {:.3} (K = {:.2})",
            f.signal_fwhm_nm, f.idler_fwhm_nm, f.purity, f.schmidt_number
        ));
    }
    out.say(format!(
        "JSA: heralded coherence time {:.2} ps over {:.3} nm, fiber reach {:.1} km",
        coherence.fwhm_ps, coherence.bandwidth_nm, reach
    ));
    Ok(JsaProducts {
        unfiltered: d_raw,
        filtered: d_filtered,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    pub propagation_length_cm: f64,
    pub signal_polarization: Polarization,
    pub idler_polarization: Polarization,
    pub mode_overlap_te: f64,
    pub mode_overlap_tm: f64,
    pub signal_chain_transmission: f64,
    /// Transmission from generation to the idler detector, detector excluded.
    pub idler_chain_transmission: f64,
    pub detector_efficiency: f64,
    pub predicted_raw_signal_heralding: f64,
    pub predicted_raw_idler_heralding: f64,
}

pub fn budget(r: &Resolved, out: &Output) -> Result<BudgetSummary> {
    let b = &r.config.budget;
    let get = |n: &str| {
        r.chains
            .get(n)
            .ok_or_else(|| anyhow!("budget refers to unknown chain `{n}`"))
    };
    let (sig, idl) = (get(&b.signal_chain)?, get(&b.idler_chain)?);
    let map = &r.device.polarization_map;
    let fiber = GaussianMode::fiber();
    let ts = arm_transmission(sig, map, Arm::Signal, false)?;
    let ti = arm_transmission(idl, map, Arm::Idler, false)?;
    let summary = BudgetSummary {
        propagation_length_cm: effective_propagation_length_cm(&r.device, r.config.device.propagation_length),
        signal_polarization: map.signal.polarization,
        idler_polarization: map.idler.polarization,
        mode_overlap_te: mode_overlap(&GaussianMode::te_waveguide(), &fiber)?,
        mode_overlap_tm: mode_overlap(&GaussianMode::tm_waveguide(), &fiber)?,
        signal_chain_transmission: ts,
        idler_chain_transmission: ti,
        detector_efficiency: idl.detector_efficiency,
        predicted_raw_signal_heralding: predicted_raw_heralding(ts, sig.detector_efficiency)?,
        predicted_raw_idler_heralding: predicted_raw_heralding(ti, idl.detector_efficiency)?,
    };
    out.write_json("budget.json", &summary)?;
    out.say(format!(
        "budget: idler chain {:.4}, predicted raw heralding {:.4} (detector {:.2})",
        summary.idler_chain_transmission, summary.predicted_raw_idler_heralding, summary.detector_efficiency
    ));
    out.say(format!(
        "budget: Gaussian fiber overlap TE {:.4}, TM {:.4}",
        summary.mode_overlap_te, summary.mode_overlap_tm
    ));
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub topology: Topology,
    pub pulses: u64,
    pub seed: u64,
    pub mean_pairs_per_pulse: f64,
    pub source_purity: f64,
    pub background_fraction: f64,
    pub background_click_probability: BTreeMap<String, f64>,
    pub estimators: BTreeMap<String, Estimate>,
    pub file: String,
}

pub fn needs_spectrum(r: &Resolved) -> bool {
    r.config.experiments.iter().any(|e| e.source != SourceSpectrum::Uniform)
}

fn source_state(e: &ExperimentBlock, spectra: Option<&JsaProducts>) -> Result<SourceState> {
    let schmidt = match e.source {
        SourceSpectrum::Uniform => SchmidtDecomposition::uniform(e.modes.expect("validated")),
        SourceSpectrum::Unfiltered => spectra.expect("computed").unfiltered.clone(),
        SourceSpectrum::Filtered => {
            let p = spectra.expect("computed");
            p.filtered.clone().ok_or_else(|| {
                anyhow!(
                    "experiment `{}` wants a filtered source but no filter is configured",
                    e.name
                )
            })?
        }
    };
    Ok(SourceState::new(schmidt, e.mean_pairs_per_pulse, e.statistics)?)
}

pub fn experiment_config(r: &Resolved, e: &ExperimentBlock) -> ExperimentConfig {
    ExperimentConfig {
        topology: e.topology,
        pulses: e.pulses,
        seed: e.seed,
        signal_chain: r.chains[&e.signal_chain].clone(),
        idler_chain: r.chains[&e.idler_chain].clone(),
        polarization_map: r.device.polarization_map,
        splitter_ratio: e.splitter_ratio,
        repetition_rate_hz: r.config.pump.repetition_rate_hz,
        pump_power_mw: e.pump_power_mw,
    }
}

/// Detector models whose background makes up the requested share of clicks.
fn detectors(r: &Resolved, cfg: &ExperimentConfig, state: &SourceState, fraction: f64) -> Result<ArmDetectors> {
    let eff = r.config.detector.efficiency;
    let ideal = ArmDetectors {
        signal: DetectorModel {
            efficiency: eff,
            background_click_probability: 0.0,
        },
        idler: DetectorModel {
            efficiency: eff,
            background_click_probability: 0.0,
        },
    };
    let (ts, ti) = cfg.survival(&ideal)?;
    // split arms are calibrated at the mean splitter share
    let (share_s, share_i) = match cfg.topology {
        Topology::Direct => (1.0, 1.0),
        Topology::SignalSplitterG2 => (0.5, 1.0),
        Topology::HeraldedG2 => (1.0, 0.5),
    };
    let prob = |t: f64| -> Result<f64> {
        let p = 1.0 - no_click_probability(state, t);
        Ok(background_probability_for_fraction(p, fraction)?)
    };
    Ok(ArmDetectors {
        signal: DetectorModel {
            background_click_probability: prob(ts * share_s)?,
            ..ideal.signal
        },
        idler: DetectorModel {
            background_click_probability: prob(ti * share_i)?,
            ..ideal.idler
        },
    })
}

fn estimators(
    r: &Resolved,
    cfg: &ExperimentConfig,
    e: &ExperimentBlock,
    state: &SourceState,
    fraction: f64,
    rec: &CountRecord,
) -> Result<BTreeMap<String, Estimate>> {
    let mut out = BTreeMap::new();
    let eff = r.config.detector.efficiency;
    let exact = |value: f64| Estimate { value, sigma: 0.0 };
    match e.topology {
        Topology::Direct => {
            let raw = heralding_efficiency(rec)?;
            let analytic = chain_transmission(&cfg.idler_chain, cfg.polarization_map.idler.polarization, false)? * eff;
            out.insert("heralding_deviation_sigmas".into(), exact(raw.z_score(analytic)));
            out.insert("analytic_heralding".into(), exact(analytic));
            out.insert(
                "corrected_heralding".into(),
                Estimate {
                    value: corrected_heralding(raw.value, eff)?,
                    sigma: raw.sigma / eff,
                },
            );
            out.insert("raw_heralding".into(), raw);
            if let (Some(bw), true) = (e.signal_bandwidth_nm, e.pump_power_mw > 0.0) {
                out.insert("brightness".into(), brightness(rec, bw)?);
            }
        }
        Topology::SignalSplitterG2 => {
            let g2 = unheralded_g2(rec)?;
            let scale = 1.0 / (1.0 - fraction).powi(2);
            let corrected = background_corrected_g2(g2.value, fraction, r.config.detector.background_correction)?;
            out.insert(
                "unheralded_g2_corrected".into(),
                Estimate {
                    value: corrected,
                    sigma: g2.sigma * scale,
                },
            );
            out.insert("unheralded_g2".into(), g2);
            out.insert("model_g2".into(), exact(1.0 + state.schmidt.purity()));
        }
        Topology::HeraldedG2 => {
            out.insert("heralded_g2".into(), heralded_g2(rec)?);
        }
    }
    Ok(out)
}

pub fn simulate(r: &Resolved, spectra: Option<&JsaProducts>, out: &Output) -> Result<Vec<ExperimentSummary>> {
    let mut summaries = Vec::new();
    for e in &r.config.experiments {
        let ctx = || format!("counting: experiment `{}`", e.name);
        let state = source_state(e, spectra).with_context(ctx)?;
        let cfg = experiment_config(r, e);
        let fraction = e.background_fraction.unwrap_or(r.config.detector.background_fraction);
        let det = detectors(r, &cfg, &state, fraction).with_context(ctx)?;
        let rec = run_experiment(&cfg, &state, &det).with_context(ctx)?;
        let path = out.write(&format!("counts_{}.json", e.name), &rec.to_json()?)?;
        let est = estimators(r, &cfg, e, &state, fraction, &rec).with_context(ctx)?;
        let line: Vec<String> = est
            .iter()
            .map(|(k, v)| {
                if v.sigma > 0.0 {
                    format!("{k} {:.5} ± {:.5}", v.value, v.sigma)
                } else {
                    format!("{k} {:.5}", v.value)
                }
            })
            .collect();
        out.say(format!("simulate {} ({}): {}", e.name, e.topology, line.join(", ")));
        summaries.push(ExperimentSummary {
            name: e.name.clone(),
            topology: e.topology,
            pulses: e.pulses,
            seed: e.seed,
            mean_pairs_per_pulse: e.mean_pairs_per_pulse,
            source_purity: state.schmidt.purity(),
            background_fraction: fraction,
            background_click_probability: BTreeMap::from([
                ("signal".to_string(), det.signal.background_click_probability),
                ("idler".to_string(), det.idler.background_click_probability),
            ]),
            estimators: est,
            file: file_name(&path),
        });
    }
    out.write_json("simulate.json", &summaries)?;
    Ok(summaries)
}
