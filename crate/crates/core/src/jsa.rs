//! Joint spectral amplitude of the photon pairs: construction, filtering,
//! marginals, Schmidt analysis and single-photon coherence time.
//!
//! The amplitude is stored on a signal × idler wavelength grid (rows are
//! signal, columns are idler) and is the product of the pump envelope, taken
//! as a function of the sum frequency, and the poled-section response.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasematch::{pm_amplitude, pump_wavelength, WaveguideSpec};
use crate::spectrum::{self, SPEED_OF_LIGHT_NM_THZ};

/// Smallest grid side accepted by [`build_jsa`].
pub const MIN_GRID_POINTS: usize = 64;
/// Minimum number of frequency bins across the conditioned idler FWHM.
pub const MIN_BINS_PER_FWHM: f64 = 8.0;
/// Standard single-mode fiber dispersion near 1550 nm, ps/(nm·km).
pub const SMF_DISPERSION_PS_PER_NM_KM: f64 = 17.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpShape {
    #[default]
    Gaussian,
    Sech2,
}

/// Spectral envelope of the pulsed pump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpEnvelope {
    pub center_wavelength_nm: f64,
    /// Intensity FWHM.
    pub fwhm_bandwidth_nm: f64,
    #[serde(default)]
    pub shape: PumpShape,
    pub repetition_rate_hz: f64,
}

impl Default for PumpEnvelope {
    fn default() -> Self {
        PumpEnvelope {
            center_wavelength_nm: 779.15,
            fwhm_bandwidth_nm: 0.3,
            shape: PumpShape::Gaussian,
            repetition_rate_hz: 1e6,
        }
    }
}

impl PumpEnvelope {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_bandwidth_nm > 0.0) {
            return Err(Error::arg("pump FWHM must be positive"));
        }
        if !(self.center_wavelength_nm > self.fwhm_bandwidth_nm) {
            return Err(Error::arg("pump center must exceed its bandwidth"));
        }
        if !(self.repetition_rate_hz > 0.0) {
            return Err(Error::arg("repetition rate must be positive"));
        }
        Ok(())
    }

    pub fn center_frequency_thz(&self) -> f64 {
        SPEED_OF_LIGHT_NM_THZ / self.center_wavelength_nm
    }

    /// Intensity FWHM in frequency.
    pub fn fwhm_thz(&self) -> f64 {
        let half = 0.5 * self.fwhm_bandwidth_nm;
        SPEED_OF_LIGHT_NM_THZ / (self.center_wavelength_nm - half)
            - SPEED_OF_LIGHT_NM_THZ / (self.center_wavelength_nm + half)
    }

    /// Field amplitude at a detuning (THz) from the pump center, peak 1.
    pub fn amplitude(&self, detuning_thz: f64) -> f64 {
        let x = detuning_thz / self.fwhm_thz();
        match self.shape {
            PumpShape::Gaussian => (-2.0 * LN_2 * x * x).exp(),
            PumpShape::Sech2 => {
                // sech² intensity FWHM is 2·acosh(√2)·τ
                let k = 2.0 * std::f64::consts::SQRT_2.acosh();
                1.0 / (k * x).cosh()
            }
        }
    }
}

/// Uniform wavelength axes of the joint spectrum, nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGridAxes {
    pub signal_nm: Vec<f64>,
    pub idler_nm: Vec<f64>,
}

impl SpectralGridAxes {
    pub fn new(signal_nm: Vec<f64>, idler_nm: Vec<f64>) -> Result<Self> {
        spectrum::uniform_step(&signal_nm)?;
        spectrum::uniform_step(&idler_nm)?;
        Ok(SpectralGridAxes { signal_nm, idler_nm })
    }

    /// Square grid of `points` samples per axis spanning `center ± half_span`.
    pub fn centered(signal_center_nm: f64, idler_center_nm: f64, half_span_nm: f64, points: usize) -> Result<Self> {
        if !(half_span_nm > 0.0) || points < 2 {
            return Err(Error::arg("grid needs a positive span and at least two points"));
        }
        Self::new(
            spectrum::linspace(signal_center_nm - half_span_nm, signal_center_nm + half_span_nm, points),
            spectrum::linspace(idler_center_nm - half_span_nm, idler_center_nm + half_span_nm, points),
        )
    }

    pub fn signal_step(&self) -> f64 {
        (self.signal_nm[self.signal_nm.len() - 1] - self.signal_nm[0]) / (self.signal_nm.len() - 1) as f64
    }

    pub fn idler_step(&self) -> f64 {
        (self.idler_nm[self.idler_nm.len() - 1] - self.idler_nm[0]) / (self.idler_nm.len() - 1) as f64
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.signal_nm.len(), self.idler_nm.len())
    }

    pub fn axis(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Signal => &self.signal_nm,
            Arm::Idler => &self.idler_nm,
        }
    }

    pub fn transposed(&self) -> Self {
        SpectralGridAxes {
            signal_nm: self.idler_nm.clone(),
            idler_nm: self.signal_nm.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Signal,
    Idler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterProfile {
    /// Fourth-order super-Gaussian.
    FlatTop,
    Gaussian,
    /// `exp(−ln2·|2Δλ/FWHM|^order)`
    SuperGaussian(f64),
}

impl FilterProfile {
    fn exponent(self) -> f64 {
        match self {
            FilterProfile::FlatTop => 4.0,
            FilterProfile::Gaussian => 2.0,
            FilterProfile::SuperGaussian(order) => order,
        }
    }
}

/// Bandpass in one arm, described by center, FWHM and peak transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFilter {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub peak_transmission: f64,
    pub profile: FilterProfile,
}

impl SpectralFilter {
    /// 200 GHz DWDM channel at the degeneracy wavelength.
    pub fn dwdm(center_nm: f64) -> Self {
        SpectralFilter {
            center_nm,
            fwhm_nm: 1.6,
            peak_transmission: 0.86,
            profile: FilterProfile::FlatTop,
        }
    }

    /// Wavelength-independent transmission.
    pub fn uniform(center_nm: f64, transmission: f64) -> Self {
        SpectralFilter {
            center_nm,
            fwhm_nm: f64::INFINITY,
            peak_transmission: transmission,
            profile: FilterProfile::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_transmission > 0.0 && self.peak_transmission <= 1.0) {
            return Err(Error::arg(format!(
                "peak transmission must lie in (0, 1], got {}",
                self.peak_transmission
            )));
        }
        if !(self.fwhm_nm > 0.0) {
            return Err(Error::arg("filter FWHM must be positive"));
        }
        if let FilterProfile::SuperGaussian(order) = self.profile {
            if !(order > 0.0) {
                return Err(Error::arg("super-Gaussian order must be positive"));
            }
        }
        Ok(())
    }

    /// Power transmission at `wavelength_nm`.
    pub fn transmission(&self, wavelength_nm: f64) -> f64 {
        if self.fwhm_nm.is_infinite() {
            return self.peak_transmission;
        }
        let x = (2.0 * (wavelength_nm - self.center_nm) / self.fwhm_nm).abs();
        self.peak_transmission * (-LN_2 * x.powf(self.profile.exponent())).exp()
    }
}

/// Complex joint spectral amplitude on a wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralAmplitude {
    pub axes: SpectralGridAxes,
    /// `amplitude[[signal, idler]]`
    pub amplitude: Array2<Complex64>,
    pub normalized: bool,
    pub filters: Vec<(Arm, SpectralFilter)>,
}

impl JointSpectralAmplitude {
    /// Samples `f(λ_s, λ_i)` on the grid without normalizing.
    pub fn from_fn<F>(axes: SpectralGridAxes, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<Complex64> + Sync,
    {
        let (ns, ni) = axes.shape();
        let values: Vec<Complex64> = axes
            .signal_nm
            .par_iter()
            .map(|&ls| axes.idler_nm.iter().map(|&li| f(ls, li)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let amplitude = Array2::from_shape_vec((ns, ni), values).expect("shape matches axes");
        Ok(JointSpectralAmplitude {
            axes,
            amplitude,
            normalized: false,
            filters: Vec::new(),
        })
    }

    /// `Σ|f|²·Δλ_s·Δλ_i`
    pub fn total_probability(&self) -> f64 {
        self.amplitude.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.axes.signal_step() * self.axes.idler_step()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let total = self.total_probability();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::arg("cannot normalize a zero or non-finite amplitude"));
        }
        let scale = 1.0 / total.sqrt();
        self.amplitude.mapv_inplace(|z| z * scale);
        self.normalized = true;
        Ok(self)
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.amplitude.mapv(|z| z.norm_sqr())
    }

    /// Exchanges the roles of signal and idler.
    pub fn transposed(&self) -> Self {
        JointSpectralAmplitude {
            axes: self.axes.transposed(),
            amplitude: self.amplitude.t().to_owned(),
            normalized: self.normalized,
            filters: self
                .filters
                .iter()
                .map(|(arm, f)| {
                    let other = match arm {
                        Arm::Signal => Arm::Idler,
                        Arm::Idler => Arm::Signal,
                    };
                    (other, f.clone())
                })
                .collect(),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        JointSpectralAmplitude {
            amplitude: self.amplitude.mapv(|z| z * factor),
            normalized: false,
            ..self.clone()
        }
    }

    /// JSI export: the first row carries the idler axis, the first column the
    /// signal axis, the remainder is row-major intensity.
    pub fn intensity_csv(&self) -> Result<String> {
        write_jsi_csv(&self.axes, &self.intensity())
    }
}

/// Writes a joint spectral intensity as CSV.
pub fn write_jsi_csv(axes: &SpectralGridAxes, jsi: &Array2<f64>) -> Result<String> {
    if jsi.dim() != axes.shape() {
        return Err(Error::arg("intensity dimensions do not match axes"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["signal_nm\\idler_nm".to_string()];
    header.extend(axes.idler_nm.iter().map(|v| v.to_string()));
    w.write_record(&header)?;
    for (k, row) in jsi.rows().into_iter().enumerate() {
        let mut rec = vec![axes.signal_nm[k].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    crate::io::finish(w)
}

/// Reads the format produced by [`write_jsi_csv`].
pub fn read_jsi_csv(text: &str) -> Result<(SpectralGridAxes, Array2<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = r.records();
    let header = records.next().ok_or_else(|| Error::Parse("empty JSI file".into()))??;
    let idler_nm = header
        .iter()
        .skip(1)
        .map(crate::io::parse_f64)
        .collect::<Result<Vec<_>>>()?;
    let mut signal_nm = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.len() != idler_nm.len() + 1 {
            return Err(Error::Parse("ragged JSI row".into()));
        }
        signal_nm.push(crate::io::parse_f64(&rec[0])?);
        for v in rec.iter().skip(1) {
            values.push(crate::io::parse_f64(v)?);
        }
    }
    let axes = SpectralGridAxes::new(signal_nm, idler_nm)?;
    let jsi = Array2::from_shape_vec(axes.shape(), values).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((axes, jsi))
}

/// Builds the normalized joint spectral amplitude of the waveguide.
pub fn build_jsa(spec: &WaveguideSpec, pump: &PumpEnvelope, axes: SpectralGridAxes) -> Result<JointSpectralAmplitude> {
    spec.validate()?;
    pump.validate()?;
    let (ns, ni) = axes.shape();
    if ns < MIN_GRID_POINTS || ni < MIN_GRID_POINTS {
        return Err(Error::arg(format!(
            "grid {ns}x{ni} is smaller than {MIN_GRID_POINTS}x{MIN_GRID_POINTS}"
        )));
    }
    let nu_p = pump.center_frequency_thz();
    let jsa = JointSpectralAmplitude::from_fn(axes, |ls, li| {
        let detuning = SPEED_OF_LIGHT_NM_THZ / ls + SPEED_OF_LIGHT_NM_THZ / li - nu_p;
        let alpha = pump.amplitude(detuning);
        let dk = spec.mismatch_unchecked(pump_wavelength(ls, li), ls, li)?;
        Ok(pm_amplitude(dk, spec.poled_length_mm) * alpha)
    })?;
    jsa.normalize()
}

/// Multiplies the amplitude by `√T(λ)` along one arm. The result is not
/// renormalized.
pub fn apply_filter(jsa: &JointSpectralAmplitude, filter: &SpectralFilter, arm: Arm) -> Result<JointSpectralAmplitude> {
    filter.validate()?;
    let axis = jsa.axes.axis(arm);
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    if !(filter.center_nm >= lo && filter.center_nm <= hi) {
        return Err(Error::arg(format!(
            "filter center {} nm lies outside the {:?} axis [{lo}, {hi}] nm",
            filter.center_nm, arm
        )));
    }
    let weights: Vec<f64> = axis.iter().map(|&l| filter.transmission(l).sqrt()).collect();
    let mut out = jsa.clone();
    for ((s, i), z) in out.amplitude.indexed_iter_mut() {
        *z *= match arm {
            Arm::Signal => weights[s],
            Arm::Idler => weights[i],
        };
    }
    out.normalized = false;
    out.filters.push((arm, filter.clone()));
    Ok(out)
}

/// Projections of the joint spectral intensity onto each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub signal_nm: Vec<f64>,
    pub signal: Vec<f64>,
    pub idler_nm: Vec<f64>,
    pub idler: Vec<f64>,
}

impl Marginals {
    pub fn signal_fwhm_nm(&self) -> Result<f64> {
        fwhm(&self.signal_nm, &self.signal)
    }

    pub fn idler_fwhm_nm(&self) -> Result<f64> {
        fwhm(&self.idler_nm, &self.idler)
    }

    pub fn signal_csv(&self) -> Result<String> {
        crate::io::two_column_csv(("wavelength_nm", "signal_marginal"), &self.signal_nm, &self.signal)
    }

    pub fn idler_csv(&self) -> Result<String> {
        crate::io::two_column_csv(("wavelength_nm", "idler_marginal"), &self.idler_nm, &self.idler)
    }
}

pub fn marginals(jsa: &JointSpectralAmplitude) -> Marginals {
    let jsi = jsa.intensity();
    let ds = jsa.axes.signal_step();
    let di = jsa.axes.idler_step();
    Marginals {
        signal_nm: jsa.axes.signal_nm.clone(),
        signal: jsi.rows().into_iter().map(|r| r.sum() * di).collect(),
        idler_nm: jsa.axes.idler_nm.clone(),
        idler: jsi.columns().into_iter().map(|c| c.sum() * ds).collect(),
    }
}

/// FWHM of a sampled spectrum, nm.
pub fn fwhm(wavelength_nm: &[f64], spectrum: &[f64]) -> Result<f64> {
    spectrum::fwhm(wavelength_nm, spectrum)
}

/// Normalized Schmidt coefficients `r_k`, descending, `Σr_k² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtDecomposition {
    pub amplitudes: Vec<f64>,
}

impl SchmidtDecomposition {
    pub fn from_amplitudes(mut amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Decomposition(
                "amplitudes must be finite and non-negative".into(),
            ));
        }
        let norm: f64 = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Decomposition("all amplitudes vanish".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        amplitudes.sort_by(|a, b| b.total_cmp(a));
        Ok(SchmidtDecomposition { amplitudes })
    }

    /// Equal weight over `modes` modes.
    pub fn uniform(modes: usize) -> Self {
        let r = 1.0 / (modes as f64).sqrt();
        SchmidtDecomposition {
            amplitudes: vec![r; modes.max(1)],
        }
    }

    /// `Σr_k⁴`
    pub fn purity(&self) -> f64 {
        self.amplitudes.iter().map(|r| r.powi(4)).sum()
    }

    pub fn schmidt_number(&self) -> f64 {
        1.0 / self.purity()
    }

    /// Mean pair number per mode, `⟨n⟩·r_k²`.
    pub fn mode_means(&self, mean_pairs: f64) -> Vec<f64> {
        self.amplitudes.iter().map(|r| mean_pairs * r * r).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["schmidt_amplitude"])?;
        for a in &self.amplitudes {
            w.write_record([a.to_string()])?;
        }
        crate::io::finish(w)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let amplitudes = r
            .records()
            .map(|rec| crate::io::parse_f64(&rec?[0]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_amplitudes(amplitudes)
    }
}

fn decompose_matrix(m: DMatrix<Complex64>) -> Result<SchmidtDecomposition> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Decomposition("amplitude contains non-finite values".into()));
    }
    let svd = m
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    SchmidtDecomposition::from_amplitudes(svd.singular_values.iter().copied().collect())
}

/// Schmidt decomposition of the (renormalized) amplitude matrix.
///
/// A uniform grid makes the discrete singular values proportional to the
/// continuous Schmidt coefficients, so the grid steps drop out on
/// normalization.
pub fn schmidt_decompose(jsa: &JointSpectralAmplitude) -> Result<SchmidtDecomposition> {
    let (ns, ni) = jsa.amplitude.dim();
    decompose_matrix(DMatrix::from_fn(ns, ni, |s, i| jsa.amplitude[[s, i]]))
}

/// Purity estimated from an intensity alone, assuming a flat spectral phase:
/// the Schmidt analysis is applied to `√JSI`. Any real spectral phase is
/// invisible to this estimate, so it neither bounds nor equals the true
/// purity in general.
pub fn purity_from_intensity(jsi: &Array2<f64>) -> Result<f64> {
    if jsi.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::arg("joint spectral intensity must be finite and non-negative"));
    }
    let (ns, ni) = jsi.dim();
    let m = DMatrix::from_fn(ns, ni, |s, i| Complex64::new(jsi[[s, i]].sqrt(), 0.0));
    Ok(decompose_matrix(m)?.purity())
}

/// Result of [`coherence_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTime {
    /// Intensity FWHM of the heralded idler in time, ps.
    pub fwhm_ps: f64,
    /// FWHM of the conditioned idler spectrum, nm.
    pub bandwidth_nm: f64,
    /// Same, THz.
    pub bandwidth_thz: f64,
}

/// Resamples a row of the JSA (idler axis in nm) onto a uniform frequency grid.
fn idler_row_in_frequency(idler_nm: &[f64], row: &[Complex64]) -> (Vec<f64>, Vec<Complex64>) {
    let n = idler_nm.len();
    let nu_lo = SPEED_OF_LIGHT_NM_THZ / idler_nm[n - 1];
    let nu_hi = SPEED_OF_LIGHT_NM_THZ / idler_nm[0];
    let nu = spectrum::linspace(nu_lo, nu_hi, n);
    let l0 = idler_nm[0];
    let dl = (idler_nm[n - 1] - l0) / (n - 1) as f64;
    let values = nu
        .iter()
        .map(|&v| {
            let l = SPEED_OF_LIGHT_NM_THZ / v;
            let pos = ((l - l0) / dl).clamp(0.0, (n - 1) as f64);
            let k = (pos.floor() as usize).min(n - 2);
            let t = pos - k as f64;
            let a = row[k] * (1.0 - t) + row[k + 1] * t;
            // |A(ν)|²dν = |A(λ)|²dλ
            a * (l / SPEED_OF_LIGHT_NM_THZ.sqrt())
        })
        .collect();
    (nu, values)
}

/// Single-photon coherence time of the heralded idler.
///
/// With `delta_herald` the signal is taken to be detected through a
/// delta-like filter at the peak of the signal marginal, so the idler is the
/// pure state given by that row of the JSA. Otherwise the heralded state is
/// the incoherent mixture over all signal rows and its mean temporal
/// intensity is used.
pub fn coherence_time(jsa: &JointSpectralAmplitude, delta_herald: bool) -> Result<CoherenceTime> {
    spectrum::uniform_step(&jsa.axes.idler_nm)?;
    let m = marginals(jsa);
    let s0 = spectrum::peak_index(&m.signal).ok_or(Error::UndefinedFwhm("empty JSA"))?;
    let rows: Vec<usize> = if delta_herald {
        vec![s0]
    } else {
        (0..jsa.axes.signal_nm.len()).collect()
    };

    let profiles: Vec<(Vec<f64>, Vec<Complex64>)> = rows
        .par_iter()
        .map(|&s| {
            let row: Vec<Complex64> = jsa.amplitude.row(s).to_vec();
            idler_row_in_frequency(&jsa.axes.idler_nm, &row)
        })
        .collect();
    let nu = profiles[0].0.clone();
    let dnu = nu[1] - nu[0];

    let spec_power: Vec<f64> = (0..nu.len())
        .map(|k| profiles.iter().map(|(_, a)| a[k].norm_sqr()).sum())
        .collect();
    let bw_thz = spectrum::fwhm(&nu, &spec_power)?;
    if bw_thz / dnu < MIN_BINS_PER_FWHM {
        return Err(Error::Resolution(format!(
            "conditioned idler FWHM spans {:.1} bins, need at least {MIN_BINS_PER_FWHM}",
            bw_thz / dnu
        )));
    }
    let conditioned_nm: Vec<f64> = if delta_herald {
        jsa.amplitude.row(s0).iter().map(|z| z.norm_sqr()).collect()
    } else {
        m.idler.clone()
    };
    let bandwidth_nm = spectrum::fwhm(&jsa.axes.idler_nm, &conditioned_nm)?;

    let fwhm_ps = if profiles.len() == 1 {
        spectrum::transform_to_time(&nu, &profiles[0].1, 8)?.fwhm_ps()?
    } else {
        mixed_time_fwhm(&nu, &profiles)?
    };
    Ok(CoherenceTime {
        fwhm_ps,
        bandwidth_nm,
        bandwidth_thz: bw_thz,
    })
}

fn mixed_time_fwhm(nu: &[f64], profiles: &[(Vec<f64>, Vec<Complex64>)]) -> Result<f64> {
    // Common time origin: phases are referenced to the first frequency bin
    // in every row, so unrotated transforms share one time axis.
    let len = (nu.len() * 8).next_power_of_two();
    let dnu = nu[1] - nu[0];
    let mut total = vec![0.0; len];
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(len);
    for (_, amp) in profiles {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        buf[..amp.len()].copy_from_slice(amp);
        fft.process(&mut buf);
        for (t, z) in total.iter_mut().zip(&buf) {
            *t += (z * dnu).norm_sqr();
        }
    }
    let peak = spectrum::peak_index(&total).expect("non-empty");
    let mid = len / 2;
    let shift = (peak + len - mid) % len;
    let rolled: Vec<f64> = (0..len).map(|k| total[(k + shift) % len]).collect();
    let step = 1.0 / (len as f64 * dnu);
    let t: Vec<f64> = (0..len).map(|k| (k as f64 - mid as f64) * step).collect();
    spectrum::fwhm(&t, &rolled)
}

/// Fiber length (km) after which chromatic dispersion stretches a photon of
/// the given bandwidth over one pulse period.
pub fn max_fiber_distance(bandwidth_nm: f64, dispersion_ps_per_nm_km: f64, repetition_rate_hz: f64) -> Result<f64> {
    for (name, v) in [
        ("bandwidth", bandwidth_nm),
        ("dispersion", dispersion_ps_per_nm_km),
        ("repetition rate", repetition_rate_hz),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::arg(format!("{name} must be positive, got {v}")));
        }
    }
    let period_ps = 1e12 / repetition_rate_hz;
    Ok(period_ps / (dispersion_ps_per_nm_km * bandwidth_nm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_axes(points: usize) -> SpectralGridAxes {
        SpectralGridAxes::centered(1558.0, 1558.0, 5.0, points).unwrap()
    }

    fn gauss(x: f64, w: f64) -> f64 {
        (-x * x / (2.0 * w * w)).exp()
    }

    #[test]
    fn product_amplitude_has_unit_schmidt_number() {
        let jsa = JointSpectralAmplitude::from_fn(small_axes(40), |s, i| {
            Ok(Complex64::new(gauss(s - 1558.0, 1.0) * gauss(i - 1557.0, 2.0), 0.0))
        })
        .unwrap();
        let d = schmidt_decompose(&jsa).unwrap();
        assert!((d.schmidt_number() - 1.0).abs() < 1e-9);
        assert!((d.purity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_equal_orthogonal_modes() {
        // Two disjoint Gaussian blobs of equal weight.
        let jsa = JointSpectralAmplitude::from_fn(small_axes(60), |s, i| {
            let a = gauss(s - 1555.5, 0.4) * gauss(i - 1555.5, 0.4);
            let b = gauss(s - 1560.5, 0.4) * gauss(i - 1560.5, 0.4);
            Ok(Complex64::new(a + b, 0.0))
        })
        .unwrap();
        let d = schmidt_decompose(&jsa).unwrap();
        assert!((d.schmidt_number() - 2.0).abs() < 1e-9, "{}", d.schmidt_number());
        assert!((d.purity() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identity_and_uniform_filters() {
        let spec = WaveguideSpec::default();
        let axes = SpectralGridAxes::centered(1552.0, 1552.0, 8.0, 64).unwrap();
        let jsa = build_jsa(&spec, &PumpEnvelope::default(), axes).unwrap();
        let same = apply_filter(&jsa, &SpectralFilter::uniform(1552.0, 1.0), Arm::Signal).unwrap();
        assert_eq!(same.amplitude, jsa.amplitude);
        let dimmed = apply_filter(&jsa, &SpectralFilter::uniform(1552.0, 0.86), Arm::Idler).unwrap();
        assert_relative_eq!(
            dimmed.total_probability(),
            0.86 * jsa.total_probability(),
            max_relative = 1e-12
        );
        assert!(!dimmed.normalized);
        assert_eq!(dimmed.filters.len(), 1);
    }

    #[test]
    fn filter_outside_axis_is_rejected() {
        let jsa = JointSpectralAmplitude::from_fn(small_axes(16), |_, _| Ok(Complex64::new(1.0, 0.0))).unwrap();
        let f = SpectralFilter::dwdm(1600.0);
        assert!(matches!(apply_filter(&jsa, &f, Arm::Signal), Err(Error::Argument(_))));
        let bad = SpectralFilter {
            peak_transmission: 1.5,
            ..SpectralFilter::dwdm(1558.0)
        };
        assert!(apply_filter(&jsa, &bad, Arm::Signal).is_err());
    }

    #[test]
    fn small_grid_rejected() {
        let spec = WaveguideSpec::default();
        let axes = SpectralGridAxes::centered(1552.0, 1552.0, 8.0, 32).unwrap();
        assert!(build_jsa(&spec, &PumpEnvelope::default(), axes).is_err());
    }

    #[test]
    fn non_uniform_axes_rejected() {
        assert!(SpectralGridAxes::new(vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zero_jsa_has_no_fwhm_and_no_decomposition() {
        let jsa = JointSpectralAmplitude::from_fn(small_axes(16), |_, _| Ok(Complex64::new(0.0, 0.0))).unwrap();
        let m = marginals(&jsa);
        assert!(matches!(m.signal_fwhm_nm(), Err(Error::UndefinedFwhm(_))));
        assert!(schmidt_decompose(&jsa).is_err());
    }

    #[test]
    fn negative_intensity_rejected() {
        let mut jsi = Array2::from_elem((4, 4), 1.0);
        jsi[[1, 2]] = -1.0;
        assert!(matches!(purity_from_intensity(&jsi), Err(Error::Argument(_))));
    }

    #[test]
    fn fiber_distance_arithmetic() {
        assert_relative_eq!(
            max_fiber_distance(1.0, 17.0, 1e9).unwrap(),
            1000.0 / 17.0,
            max_relative = 1e-12
        );
        let a = max_fiber_distance(0.4, 17.0, 1e9).unwrap();
        let b = max_fiber_distance(0.8, 17.0, 1e9).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-15);
        assert!(max_fiber_distance(0.0, 17.0, 1e9).is_err());
    }

    #[test]
    fn pump_shapes_share_fwhm() {
        for shape in [PumpShape::Gaussian, PumpShape::Sech2] {
            let pump = PumpEnvelope {
                shape,
                ..PumpEnvelope::default()
            };
            let half = 0.5 * pump.fwhm_thz();
            assert_relative_eq!(pump.amplitude(half).powi(2), 0.5, max_relative = 1e-12);
            assert_eq!(pump.amplitude(0.0), 1.0);
        }
    }

    #[test]
    fn schmidt_csv_round_trip() {
        let d = SchmidtDecomposition::from_amplitudes(vec![0.2, 0.9, 0.1]).unwrap();
        let back = SchmidtDecomposition::from_csv(&d.to_csv().unwrap()).unwrap();
        for (a, b) in d.amplitudes.iter().zip(&back.amplitudes) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }
}
