//! Sampled-spectrum utilities shared by the tuning-curve and joint-spectrum code.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Speed of light in nm·THz.
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;

/// Index of the first maximum sample.
pub fn peak_index(y: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in y.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Full width at half maximum of a sampled curve.
///
/// Walks outwards from the highest sample to the first samples below half of
/// it and interpolates linearly between the straddling pairs.
pub fn fwhm(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::UndefinedFwhm("need at least three matching samples"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedFwhm("non-finite sample"));
    }
    let peak = peak_index(y).expect("non-empty");
    let ymax = y[peak];
    if !(ymax > 0.0) {
        return Err(Error::UndefinedFwhm("spectrum is identically zero"));
    }
    let half = 0.5 * ymax;
    let cross = |a: usize, b: usize| x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);

    let left = (0..peak)
        .rev()
        .find(|&i| y[i] < half)
        .map(|i| cross(i, i + 1))
        .ok_or(Error::UndefinedFwhm(
            "curve does not fall to half maximum on the low side",
        ))?;
    let right = (peak + 1..y.len())
        .find(|&i| y[i] < half)
        .map(|i| cross(i - 1, i))
        .ok_or(Error::UndefinedFwhm(
            "curve does not fall to half maximum on the high side",
        ))?;
    Ok((right - left).abs())
}

/// Checks that `axis` is strictly increasing with uniform spacing and returns the step.
pub fn uniform_step(axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(Error::arg("axis needs at least two points"));
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::arg("axis must be strictly increasing"));
    }
    for (k, w) in axis.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) || (d - step).abs() > 1e-6 * step {
            return Err(Error::arg(format!("axis is not uniform at index {k}")));
        }
    }
    Ok(step)
}

/// Linearly spaced samples including both end points.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points).map(|k| start + step * k as f64).collect()
        }
    }
}

/// Time-domain intensity of a spectral amplitude.
#[derive(Debug, Clone)]
pub struct TimeProfile {
    /// Time relative to the intensity peak, ps.
    pub time_ps: Vec<f64>,
    pub intensity: Vec<f64>,
    pub step_ps: f64,
}

impl TimeProfile {
    pub fn fwhm_ps(&self) -> Result<f64> {
        fwhm(&self.time_ps, &self.intensity)
    }

    /// `Σ|E(t)|²·Δt`
    pub fn energy(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.step_ps
    }
}

/// Fourier-transforms an amplitude sampled on a uniform frequency grid (THz).
///
/// The spectrum is zero padded to at least `padding` times its length (rounded
/// up to a power of two). The output is scaled so that
/// `Σ|E(t)|²·Δt = Σ|A(ν)|²·Δν` and rotated so that its peak sits in the middle
/// of the window.
pub fn transform_to_time(frequency_thz: &[f64], amplitude: &[Complex64], padding: usize) -> Result<TimeProfile> {
    if frequency_thz.len() != amplitude.len() {
        return Err(Error::arg("frequency axis and amplitude lengths differ"));
    }
    let dnu = uniform_step(frequency_thz)?;
    let len = (amplitude.len() * padding.max(1)).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[..amplitude.len()].copy_from_slice(amplitude);

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);

    let step_ps = 1.0 / (len as f64 * dnu);
    let intensity: Vec<f64> = buf.iter().map(|z| (z * dnu).norm_sqr()).collect();
    let peak = peak_index(&intensity).expect("non-empty");
    let mid = len / 2;
    let shift = (peak + len - mid) % len;
    let rolled: Vec<f64> = (0..len).map(|k| intensity[(k + shift) % len]).collect();
    let time_ps = (0..len).map(|k| (k as f64 - mid as f64) * step_ps).collect();
    Ok(TimeProfile {
        time_ps,
        intensity: rolled,
        step_ps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_fwhm_matches_sigma() {
        let sigma = 1.7;
        let x = linspace(-20.0, 20.0, 801);
        let y: Vec<f64> = x.iter().map(|v| (-v * v / (2.0 * sigma * sigma)).exp()).collect();
        let w = fwhm(&x, &y).unwrap();
        let step = x[1] - x[0];
        assert!((w - 2.354_820_045 * sigma).abs() < 0.1 * step, "{w}");
    }

    #[test]
    fn zero_or_truncated_spectrum_has_no_fwhm() {
        let x = linspace(0.0, 1.0, 10);
        assert!(matches!(fwhm(&x, &[0.0; 10]), Err(Error::UndefinedFwhm(_))));
        let ramp: Vec<f64> = x.clone();
        assert!(fwhm(&x, &ramp).is_err());
    }

    #[test]
    fn non_uniform_axis_rejected() {
        assert!(uniform_step(&[0.0, 1.0, 2.5]).is_err());
        assert!(uniform_step(&[2.0, 1.0, 0.0]).is_err());
        assert_relative_eq!(uniform_step(&[0.0, 0.5, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn gaussian_time_bandwidth_product() {
        // intensity FWHM 0.1 THz -> transform-limited 4.41 ps
        let dnu_fwhm = 0.1;
        let nu = linspace(190.0, 194.0, 1024);
        let amp: Vec<Complex64> = nu
            .iter()
            .map(|v| {
                let d = (v - 192.0) / dnu_fwhm;
                Complex64::new((-2.0 * std::f64::consts::LN_2 * d * d).exp(), 0.0)
            })
            .collect();
        let tp = transform_to_time(&nu, &amp, 8).unwrap();
        let dt = tp.fwhm_ps().unwrap();
        let tbp = dt * dnu_fwhm;
        assert!((tbp - 0.441).abs() < 0.01 * 0.441, "tbp = {tbp}");
    }

    #[test]
    fn parseval_holds_for_chirped_spectrum() {
        let nu = linspace(-1.0, 1.0, 300);
        let dnu = nu[1] - nu[0];
        let amp: Vec<Complex64> = nu
            .iter()
            .map(|v| Complex64::from_polar((-(v / 0.2).powi(2)).exp(), 40.0 * v * v))
            .collect();
        let spectral: f64 = amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * dnu;
        let tp = transform_to_time(&nu, &amp, 4).unwrap();
        assert_relative_eq!(tp.energy(), spectral, max_relative = 1e-6);
    }
}
