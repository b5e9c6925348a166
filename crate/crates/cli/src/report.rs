//! Figures of merit gathered from every stage and compared against the
//! configured checks.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use serde::Serialize;

use pdc_core::Topology;

use crate::config::{CheckConfig, ExperimentBlock};
use crate::pipeline::{BudgetSummary, DesignSummary, ExperimentSummary, JsaSummary, ShgSummary};

/// Metrics produced by the deterministic stages.
pub const KNOWN_METRICS: &[&str] = &[
    "shg_peak_nm",
    "shg_fwhm_nm",
    "nominal_degeneracy_nm",
    "calibrated_degeneracy_nm",
    "degeneracy_shift_nm",
    "extraordinary_index_offset",
    "period_for_target_um",
    "propagation_length_cm",
    "mode_overlap_te",
    "mode_overlap_tm",
    "signal_chain_transmission",
    "idler_chain_transmission",
    "predicted_raw_heralding",
    "unfiltered_signal_fwhm_nm",
    "unfiltered_idler_fwhm_nm",
    "unfiltered_purity",
    "unfiltered_schmidt_number",
    "filtered_signal_fwhm_nm",
    "filtered_idler_fwhm_nm",
    "filtered_purity",
    "filtered_schmidt_number",
    "coherence_time_ps",
    "conditioned_bandwidth_nm",
    "max_fiber_distance_km",
];

/// Estimators a Monte-Carlo experiment of the given topology can report.
/// They are addressed as `<experiment>.<estimator>`.
pub fn estimator_names(topology: Topology) -> &'static [&'static str] {
    match topology {
        Topology::Direct => &[
            "raw_heralding",
            "corrected_heralding",
            "analytic_heralding",
            "heralding_deviation_sigmas",
            "brightness",
        ],
        Topology::SignalSplitterG2 => &["unheralded_g2", "unheralded_g2_corrected", "model_g2"],
        Topology::HeraldedG2 => &["heralded_g2"],
    }
}

pub fn check_metric_name(metric: &str, experiments: &[ExperimentBlock]) -> Result<()> {
    if KNOWN_METRICS.contains(&metric) {
        return Ok(());
    }
    let Some((name, est)) = metric.split_once('.') else {
        bail!("unknown metric `{metric}`");
    };
    let Some(e) = experiments.iter().find(|e| e.name == name) else {
        bail!("metric `{metric}` refers to unknown experiment `{name}`");
    };
    if !estimator_names(e.topology).contains(&est) {
        bail!(
            "a {} experiment has no estimator `{est}` (expected one of {})",
            e.topology,
            estimator_names(e.topology).join(", ")
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct Metrics {
    pub values: BTreeMap<String, Metric>,
    /// Metrics that could not be produced for this configuration.
    pub unavailable: BTreeMap<String, String>,
}

impl Metrics {
    fn put(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), Metric { value, sigma: 0.0 });
    }

    fn missing(&mut self, name: &str, why: &str) {
        self.unavailable.insert(name.to_string(), why.to_string());
    }

    pub fn collect(
        shg: &ShgSummary,
        design: &DesignSummary,
        budget: Option<&BudgetSummary>,
        jsa: Option<&JsaSummary>,
        experiments: &[ExperimentSummary],
    ) -> Self {
        let mut m = Metrics::default();
        m.put("shg_peak_nm", shg.peak_wavelength_nm);
        m.put("shg_fwhm_nm", shg.fwhm_nm);
        m.put("nominal_degeneracy_nm", design.nominal_degeneracy_nm);
        m.put("calibrated_degeneracy_nm", design.calibrated_degeneracy_nm);
        m.put("extraordinary_index_offset", design.extraordinary_index_offset);
        match (design.calibration_target_nm, design.period_for_target_um) {
            (Some(t), Some(p)) => {
                m.put("degeneracy_shift_nm", (design.nominal_degeneracy_nm - t).abs());
                m.put("period_for_target_um", p);
            }
            _ => {
                m.missing("degeneracy_shift_nm", "no observed degeneracy configured");
                m.missing("period_for_target_um", "no observed degeneracy configured");
            }
        }
        match budget {
            Some(b) => {
                m.put("propagation_length_cm", b.propagation_length_cm);
                m.put("mode_overlap_te", b.mode_overlap_te);
                m.put("mode_overlap_tm", b.mode_overlap_tm);
                m.put("signal_chain_transmission", b.signal_chain_transmission);
                m.put("idler_chain_transmission", b.idler_chain_transmission);
                m.put("predicted_raw_heralding", b.predicted_raw_idler_heralding);
            }
            None => {
                for k in [
                    "propagation_length_cm",
                    "mode_overlap_te",
                    "mode_overlap_tm",
                    "signal_chain_transmission",
                    "idler_chain_transmission",
                    "predicted_raw_heralding",
                ] {
                    m.missing(k, "no component chains configured");
                }
            }
        }
        if let Some(j) = jsa {
            let u = &j.unfiltered;
            m.put("unfiltered_signal_fwhm_nm", u.signal_fwhm_nm);
            m.put("unfiltered_idler_fwhm_nm", u.idler_fwhm_nm);
            m.put("unfiltered_purity", u.purity);
            m.put("unfiltered_schmidt_number", u.schmidt_number);
            let filtered = [
                "filtered_signal_fwhm_nm",
                "filtered_idler_fwhm_nm",
                "filtered_purity",
                "filtered_schmidt_number",
            ];
            match &j.filtered {
                Some(f) => {
                    for (k, v) in filtered
                        .iter()
                        .zip([f.signal_fwhm_nm, f.idler_fwhm_nm, f.purity, f.schmidt_number])
                    {
                        m.put(k, v);
                    }
                }
                None => filtered
                    .iter()
                    .for_each(|k| m.missing(k, "no spectral filter configured")),
            }
            m.put("coherence_time_ps", j.coherence.fwhm_ps);
            m.put("conditioned_bandwidth_nm", j.coherence.bandwidth_nm);
            m.put("max_fiber_distance_km", j.max_fiber_distance_km);
        }
        for e in experiments {
            for name in estimator_names(e.topology) {
                let key = format!("{}.{}", e.name, name);
                match e.estimators.get(*name) {
                    Some(est) => {
                        m.values.insert(
                            key,
                            Metric {
                                value: est.value,
                                sigma: est.sigma,
                            },
                        );
                    }
                    None => m.missing(&key, "needs pump_power_mw and signal_bandwidth_nm on the experiment"),
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Info,
    Skipped,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
            Status::Skipped => "SKIP",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub metric: String,
    pub status: Status,
    pub value: Option<f64>,
    pub sigma: Option<f64>,
    pub reference: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub note: String,
    pub reason: Option<String>,
}

/// Acceptance window of a check, widened by `sigmas` standard deviations.
fn window(c: &CheckConfig, sigma: f64) -> Option<(f64, f64)> {
    let widen = c.sigmas.unwrap_or(0.0) * sigma;
    let (lo, hi) = if let (Some(r), Some(t)) = (c.reference, c.tolerance) {
        (r - t, r + t)
    } else if let (Some(r), Some(t)) = (c.reference, c.relative_tolerance) {
        (r - t * r.abs(), r + t * r.abs())
    } else if c.min.is_some() || c.max.is_some() {
        (c.min.unwrap_or(f64::NEG_INFINITY), c.max.unwrap_or(f64::INFINITY))
    } else {
        return None;
    };
    Some((lo - widen, hi + widen))
}

pub fn evaluate(check: &CheckConfig, metrics: &Metrics) -> CheckOutcome {
    let mut out = CheckOutcome {
        metric: check.metric.clone(),
        status: Status::Info,
        value: None,
        sigma: None,
        reference: check.reference,
        lower: None,
        upper: None,
        note: check.note.clone(),
        reason: None,
    };
    let Some(m) = metrics.values.get(&check.metric) else {
        out.status = Status::Skipped;
        out.reason = Some(
            metrics
                .unavailable
                .get(&check.metric)
                .cloned()
                .unwrap_or_else(|| "metric not produced".into()),
        );
        return out;
    };
    out.value = Some(m.value);
    out.sigma = (m.sigma > 0.0).then_some(m.sigma);
    if let Some((lo, hi)) = window(check, m.sigma) {
        out.lower = lo.is_finite().then_some(lo);
        out.upper = hi.is_finite().then_some(hi);
        out.status = if m.value.is_finite() && (lo..=hi).contains(&m.value) {
            Status::Pass
        } else {
            Status::Fail
        };
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub metrics: BTreeMap<String, Metric>,
    pub unavailable: BTreeMap<String, String>,
    pub checks: Vec<CheckOutcome>,
    pub tally: BTreeMap<String, usize>,
}

impl Report {
    pub fn new(metrics: Metrics, checks: &[CheckConfig]) -> Self {
        let checks: Vec<CheckOutcome> = checks.iter().map(|c| evaluate(c, &metrics)).collect();
        let mut tally = BTreeMap::new();
        for s in [Status::Pass, Status::Fail, Status::Info, Status::Skipped] {
            tally.insert(
                format!("{s:?}").to_lowercase(),
                checks.iter().filter(|c| c.status == s).count(),
            );
        }
        Report {
            metrics: metrics.values,
            unavailable: metrics.unavailable,
            checks,
            tally,
        }
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let value = match (c.value, c.sigma) {
                    (Some(v), Some(s)) => format!("{v:.6} ± {s:.2e}"),
                    (Some(v), None) => format!("{v:.6}"),
                    _ => "-".into(),
                };
                let range = match (c.lower, c.upper) {
                    (None, None) => String::new(),
                    (lo, hi) => format!(
                        " in [{}, {}]",
                        lo.map_or("-inf".into(), |v| format!("{v:.6}")),
                        hi.map_or("inf".into(), |v| format!("{v:.6}"))
                    ),
                };
                let mut line = format!("{:<4} {} = {value}{range}", c.status.label(), c.metric);
                if let Some(r) = &c.reason {
                    line.push_str(&format!(" ({r})"));
                } else if !c.note.is_empty() {
                    line.push_str(&format!(" ({})", c.note));
                }
                line
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(metric: &str) -> CheckConfig {
        CheckConfig {
            metric: metric.into(),
            reference: None,
            tolerance: None,
            relative_tolerance: None,
            min: None,
            max: None,
            sigmas: None,
            note: String::new(),
        }
    }

    fn metrics() -> Metrics {
        let mut m = Metrics::default();
        m.values.insert("a".into(), Metric { value: 1.0, sigma: 0.1 });
        m.missing("b", "not here");
        m
    }

    #[test]
    fn rules_and_widening() {
        let m = metrics();
        let abs = CheckConfig {
            reference: Some(1.15),
            tolerance: Some(0.1),
            ..check("a")
        };
        assert_eq!(evaluate(&abs, &m).status, Status::Fail);
        let widened = CheckConfig {
            sigmas: Some(1.0),
            ..abs.clone()
        };
        assert_eq!(evaluate(&widened, &m).status, Status::Pass);
        let rel = CheckConfig {
            reference: Some(1.2),
            relative_tolerance: Some(0.2),
            ..check("a")
        };
        assert_eq!(evaluate(&rel, &m).status, Status::Pass);
        let lower = CheckConfig {
            min: Some(1.5),
            ..check("a")
        };
        assert_eq!(evaluate(&lower, &m).status, Status::Fail);
        assert_eq!(evaluate(&check("a"), &m).status, Status::Info);
    }

    #[test]
    fn missing_metric_is_skipped_with_reason() {
        let out = evaluate(&check("b"), &metrics());
        assert_eq!(out.status, Status::Skipped);
        assert_eq!(out.reason.as_deref(), Some("not here"));
    }
}
