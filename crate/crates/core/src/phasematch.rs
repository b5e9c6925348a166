//! First-order quasi-phasematching in a periodically poled waveguide.
//!
//! Wavelengths at this level are in nanometres; wave-vector mismatches are in
//! rad/µm. Indices are bulk indices plus a per-axis effective-index offset that
//! absorbs unmodelled waveguide dispersion.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{Axis, MaterialModel};
use crate::error::{Error, Result};
use crate::spectrum;

/// Bracket searched for the degenerate phasematching wavelength, nm.
pub const DEFAULT_SEARCH_NM: (f64, f64) = (1400.0, 1700.0);
/// Residual mismatch accepted by the root finders, rad/µm.
pub const MISMATCH_TOLERANCE: f64 = 1e-9;
/// Largest effective-index offset `calibrate_offset` may introduce.
pub const MAX_INDEX_OFFSET: f64 = 0.05;
const ENERGY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    TE,
    TM,
}

impl Polarization {
    pub fn orthogonal(self) -> Self {
        match self {
            Polarization::TE => Polarization::TM,
            Polarization::TM => Polarization::TE,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::TE => f.write_str("TE"),
            Polarization::TM => f.write_str("TM"),
        }
    }
}

/// Polarization and crystal axis of one of the three interacting waves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveMode {
    pub polarization: Polarization,
    pub axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarizationMap {
    pub pump: WaveMode,
    pub signal: WaveMode,
    pub idler: WaveMode,
}

impl Default for PolarizationMap {
    fn default() -> Self {
        PolarizationMap {
            pump: WaveMode {
                polarization: Polarization::TE,
                axis: Axis::Ordinary,
            },
            signal: WaveMode {
                polarization: Polarization::TE,
                axis: Axis::Ordinary,
            },
            idler: WaveMode {
                polarization: Polarization::TM,
                axis: Axis::Extraordinary,
            },
        }
    }
}

impl PolarizationMap {
    /// Type-II: the daughters leave in orthogonal guided polarizations.
    pub fn validate(&self) -> Result<()> {
        if self.signal.polarization == self.idler.polarization {
            return Err(Error::arg(format!(
                "signal and idler must be orthogonally polarized, both are {}",
                self.signal.polarization
            )));
        }
        Ok(())
    }

    /// Exchanges the signal and idler assignments.
    pub fn swapped(&self) -> Self {
        PolarizationMap {
            pump: self.pump,
            signal: self.idler,
            idler: self.signal,
        }
    }
}

/// Constant effective-index offsets added to the bulk indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexOffsets {
    pub ordinary: f64,
    pub extraordinary: f64,
}

impl IndexOffsets {
    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Ordinary => self.ordinary,
            Axis::Extraordinary => self.extraordinary,
        }
    }
}

/// Geometry, poling and dispersion of the nonlinear waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSpec {
    pub chip_length_mm: f64,
    pub poled_length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub polarization_map: PolarizationMap,
    #[serde(default)]
    pub effective_index_offset: IndexOffsets,
    pub material: MaterialModel,
}

impl Default for WaveguideSpec {
    /// The 25 mm Ti:PPLN chip, 21 mm poled at 9.08 µm, at 25 °C.
    fn default() -> Self {
        WaveguideSpec {
            chip_length_mm: 25.0,
            poled_length_mm: 21.0,
            poling_period_um: 9.08,
            temperature_c: 25.0,
            polarization_map: PolarizationMap::default(),
            effective_index_offset: IndexOffsets::default(),
            material: MaterialModel::default(),
        }
    }
}

impl WaveguideSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("chip_length_mm", self.chip_length_mm),
            ("poled_length_mm", self.poled_length_mm),
            ("poling_period_um", self.poling_period_um),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        if self.poled_length_mm > self.chip_length_mm {
            return Err(Error::arg(format!(
                "poled length {} mm exceeds chip length {} mm",
                self.poled_length_mm, self.chip_length_mm
            )));
        }
        self.polarization_map.validate()
    }

    /// Bulk index plus the configured offset.
    pub fn effective_index(&self, axis: Axis, wavelength_nm: f64) -> Result<f64> {
        let n = self
            .material
            .refractive_index(axis, wavelength_nm * 1e-3, self.temperature_c)?;
        Ok(n + self.effective_index_offset.get(axis))
    }

    pub fn effective_group_index(&self, axis: Axis, wavelength_nm: f64) -> Result<f64> {
        let n = self
            .material
            .group_index(axis, wavelength_nm * 1e-3, self.temperature_c)?;
        Ok(n + self.effective_index_offset.get(axis))
    }

    pub fn with_temperature(&self, temperature_c: f64) -> Self {
        WaveguideSpec {
            temperature_c,
            ..self.clone()
        }
    }

    pub fn with_poled_length(&self, poled_length_mm: f64) -> Self {
        WaveguideSpec {
            poled_length_mm,
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let spec: WaveguideSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// `k_p − k_s − k_i` in rad/µm, without the grating term.
    fn material_mismatch(&self, pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<f64> {
        let map = &self.polarization_map;
        let np = self.effective_index(map.pump.axis, pump_nm)?;
        let ns = self.effective_index(map.signal.axis, signal_nm)?;
        let ni = self.effective_index(map.idler.axis, idler_nm)?;
        Ok(2.0 * PI * 1e3 * (np / pump_nm - ns / signal_nm - ni / idler_nm))
    }

    /// Mismatch without the energy-conservation check, for callers that
    /// derive the pump from the daughters themselves.
    pub(crate) fn mismatch_unchecked(&self, pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<f64> {
        Ok(self.material_mismatch(pump_nm, signal_nm, idler_nm)? - 2.0 * PI / self.poling_period_um)
    }
}

/// Pump wavelength fixed by energy conservation, nm.
pub fn pump_wavelength(signal_nm: f64, idler_nm: f64) -> f64 {
    1.0 / (1.0 / signal_nm + 1.0 / idler_nm)
}

fn check_energy(pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<()> {
    for (name, v) in [("pump", pump_nm), ("signal", signal_nm), ("idler", idler_nm)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::arg(format!("{name} wavelength must be positive, got {v}")));
        }
    }
    let residual = (1.0 / pump_nm - 1.0 / signal_nm - 1.0 / idler_nm) * pump_nm;
    if residual.abs() > ENERGY_TOLERANCE {
        return Err(Error::arg(format!(
            "energy not conserved: 1/{pump_nm} - 1/{signal_nm} - 1/{idler_nm} has relative residual {residual:e}"
        )));
    }
    Ok(())
}

/// A phasematching evaluation at one wavelength triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasematchPoint {
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub mismatch_rad_per_um: f64,
}

impl PhasematchPoint {
    /// Completes the triple from the pump and signal wavelengths.
    pub fn from_pump_and_signal(spec: &WaveguideSpec, pump_nm: f64, signal_nm: f64) -> Result<Self> {
        let inv = 1.0 / pump_nm - 1.0 / signal_nm;
        if !(inv > 0.0) {
            return Err(Error::arg("signal wavelength must exceed the pump wavelength"));
        }
        let idler_nm = 1.0 / inv;
        Ok(PhasematchPoint {
            pump_nm,
            signal_nm,
            idler_nm,
            mismatch_rad_per_um: qpm_mismatch(spec, pump_nm, signal_nm, idler_nm)?,
        })
    }
}

/// Quasi-phasematched wave-vector mismatch `Δk = k_p − k_s − k_i − 2π/Λ` in rad/µm.
pub fn qpm_mismatch(spec: &WaveguideSpec, pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<f64> {
    check_energy(pump_nm, signal_nm, idler_nm)?;
    spec.mismatch_unchecked(pump_nm, signal_nm, idler_nm)
}

/// Response of a uniformly poled section: `sinc(ΔkL/2)·exp(iΔkL/2)`.
pub fn pm_amplitude(mismatch_rad_per_um: f64, poled_length_mm: f64) -> Complex64 {
    let x = 0.5 * mismatch_rad_per_um * poled_length_mm * 1e3;
    let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    Complex64::from_polar(sinc, x)
}

/// Normalized second-harmonic intensity versus fundamental wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub wavelength_nm: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl TuningCurve {
    pub fn peak_wavelength_nm(&self) -> f64 {
        let i = spectrum::peak_index(&self.intensity).expect("curve is never empty");
        self.wavelength_nm[i]
    }

    pub fn fwhm_nm(&self) -> Result<f64> {
        spectrum::fwhm(&self.wavelength_nm, &self.intensity)
    }

    pub fn step_nm(&self) -> f64 {
        self.wavelength_nm[1] - self.wavelength_nm[0]
    }

    /// Two-column CSV: `wavelength_nm,normalized_intensity`.
    pub fn to_csv(&self) -> Result<String> {
        crate::io::two_column_csv(
            ("wavelength_nm", "normalized_intensity"),
            &self.wavelength_nm,
            &self.intensity,
        )
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (wavelength_nm, intensity) = crate::io::parse_two_column_csv(text)?;
        Ok(TuningCurve {
            wavelength_nm,
            intensity,
        })
    }
}

/// Samples the SHG tuning curve, treating SHG as degenerate reverse PDC
/// (`λ_p = λ/2`). The curve is normalized to a peak of exactly 1.
pub fn shg_tuning_curve(spec: &WaveguideSpec, start_nm: f64, stop_nm: f64, points: usize) -> Result<TuningCurve> {
    spec.validate()?;
    if !(stop_nm > start_nm) {
        return Err(Error::arg(format!("empty wavelength range [{start_nm}, {stop_nm}] nm")));
    }
    if points < 3 {
        return Err(Error::arg("tuning curve needs at least 3 points"));
    }
    let wavelength_nm = spectrum::linspace(start_nm, stop_nm, points);
    let raw: Vec<f64> = wavelength_nm
        .par_iter()
        .map(|&l| {
            let dk = spec.mismatch_unchecked(0.5 * l, l, l)?;
            Ok(pm_amplitude(dk, spec.poled_length_mm).norm_sqr())
        })
        .collect::<Result<_>>()?;
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::arg("tuning curve is identically zero"));
    }
    let intensity = raw.iter().map(|v| v / max).collect();
    Ok(TuningCurve {
        wavelength_nm,
        intensity,
    })
}

/// Bisection down to a narrow bracket, then secant steps kept inside it.
fn solve_bracketed(mut f: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<Option<f64>> {
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(Some(lo));
    }
    if fhi == 0.0 {
        return Ok(Some(hi));
    }
    if flo.signum() == fhi.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-9 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < tol * 1e-3 {
            return Ok(Some(mid));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if (hi - lo).abs() < 1e-6 * hi.abs().max(1.0) {
            break;
        }
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for _ in 0..50 {
        if best.1.abs() < tol {
            break;
        }
        let x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            break;
        }
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    Ok(Some(best.0))
}

/// Fundamental wavelength (nm) at which degenerate type-II PDC is phasematched.
pub fn find_degenerate_wavelength(spec: &WaveguideSpec) -> Result<f64> {
    find_degenerate_wavelength_in(spec, DEFAULT_SEARCH_NM.0, DEFAULT_SEARCH_NM.1)
}

pub fn find_degenerate_wavelength_in(spec: &WaveguideSpec, lo_nm: f64, hi_nm: f64) -> Result<f64> {
    spec.validate()?;
    if !(hi_nm > lo_nm) {
        return Err(Error::arg(format!("empty search bracket [{lo_nm}, {hi_nm}] nm")));
    }
    let f = |l: f64| spec.mismatch_unchecked(0.5 * l, l, l);
    let root = solve_bracketed(f, lo_nm, hi_nm, MISMATCH_TOLERANCE)?.ok_or(Error::NoPhasematching { lo_nm, hi_nm })?;
    let residual = f(root)?;
    if residual.abs() > MISMATCH_TOLERANCE {
        return Err(Error::Calibration(format!(
            "degeneracy solve stalled at {root} nm with |dk| = {residual:e} rad/um"
        )));
    }
    Ok(root)
}

/// Poling period (µm) that phasematches the given triple, using the waveguide's
/// material, temperature, polarization map and offsets.
pub fn find_poling_period(spec: &WaveguideSpec, pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<f64> {
    check_energy(pump_nm, signal_nm, idler_nm)?;
    let dk = spec.material_mismatch(pump_nm, signal_nm, idler_nm)?;
    if !(dk > 0.0) {
        return Err(Error::QpmImpossible(dk));
    }
    Ok(2.0 * PI / dk)
}

/// Returns a copy of `spec` whose extraordinary-axis offset places the
/// degenerate phasematching point at `observed_degeneracy_nm`.
///
/// The mismatch is linear in the offset, so the offset is solved in closed
/// form and then checked against the degeneracy root finder.
pub fn calibrate_offset(spec: &WaveguideSpec, observed_degeneracy_nm: f64) -> Result<WaveguideSpec> {
    spec.validate()?;
    let (lo, hi) = DEFAULT_SEARCH_NM;
    if !(observed_degeneracy_nm > lo && observed_degeneracy_nm < hi) {
        return Err(Error::arg(format!(
            "observed degeneracy {observed_degeneracy_nm} nm outside search range [{lo}, {hi}] nm"
        )));
    }
    let l = observed_degeneracy_nm;
    let lp = 0.5 * l;
    let map = &spec.polarization_map;
    let weight = |m: &WaveMode, wl: f64| if m.axis == Axis::Extraordinary { 1.0 / wl } else { 0.0 };
    // d(dk)/d(offset), rad/µm per unit index
    let slope = 2.0 * PI * 1e3 * (weight(&map.pump, lp) - weight(&map.signal, l) - weight(&map.idler, l));
    if slope == 0.0 {
        return Err(Error::Calibration(
            "no wave propagates on the extraordinary axis".into(),
        ));
    }
    let dk = spec.mismatch_unchecked(lp, l, l)?;
    let delta = -dk / slope;
    let mut updated = spec.clone();
    updated.effective_index_offset.extraordinary += delta;
    let total = updated.effective_index_offset.extraordinary;
    if total.abs() >= MAX_INDEX_OFFSET {
        return Err(Error::Calibration(format!(
            "required extraordinary offset {total:.4} exceeds {MAX_INDEX_OFFSET}"
        )));
    }
    let check = find_degenerate_wavelength(&updated)?;
    if (check - l).abs() > 1e-3 {
        return Err(Error::Calibration(format!(
            "calibrated degeneracy {check} nm misses target {l} nm"
        )));
    }
    Ok(updated)
}
