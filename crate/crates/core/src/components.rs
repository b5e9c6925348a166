//! Passive optical chain after the poled section: waveguide propagation loss,
//! fiber pigtails, polarization optics, filters and detectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsa::Arm;
use crate::phasematch::{Polarization, PolarizationMap, WaveguideSpec};

/// Fiber mode-field diameter, µm.
pub const FIBER_MFD_UM: f64 = 6.08;

/// Elliptical Gaussian mode described by its 1/e² intensity radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub semi_axis_x_um: f64,
    pub semi_axis_y_um: f64,
}

impl GaussianMode {
    pub fn new(semi_axis_x_um: f64, semi_axis_y_um: f64) -> Result<Self> {
        if !(semi_axis_x_um > 0.0 && semi_axis_y_um > 0.0) || !semi_axis_x_um.is_finite() || !semi_axis_y_um.is_finite()
        {
            return Err(Error::arg(format!(
                "mode semi-axes must be positive, got ({semi_axis_x_um}, {semi_axis_y_um})"
            )));
        }
        Ok(GaussianMode {
            semi_axis_x_um,
            semi_axis_y_um,
        })
    }

    /// From measured 1/e² full width and height.
    pub fn from_full_widths(width_um: f64, height_um: f64) -> Result<Self> {
        Self::new(0.5 * width_um, 0.5 * height_um)
    }

    pub fn te_waveguide() -> Self {
        Self::from_full_widths(7.0, 4.7).expect("positive")
    }

    pub fn tm_waveguide() -> Self {
        Self::from_full_widths(5.3, 3.4).expect("positive")
    }

    pub fn fiber() -> Self {
        Self::from_full_widths(FIBER_MFD_UM, FIBER_MFD_UM).expect("positive")
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.semi_axis_x_um * factor, self.semi_axis_y_um * factor)
    }
}

/// Power coupling between two aligned elliptical Gaussian modes.
pub fn mode_overlap(a: &GaussianMode, b: &GaussianMode) -> Result<f64> {
    let a = GaussianMode::new(a.semi_axis_x_um, a.semi_axis_y_um)?;
    let b = GaussianMode::new(b.semi_axis_x_um, b.semi_axis_y_um)?;
    let one = |p: f64, q: f64| 2.0 * p * q / (p * p + q * q);
    Ok(one(a.semi_axis_x_um, b.semi_axis_x_um) * one(a.semi_axis_y_um, b.semi_axis_y_um))
}

/// A discrete component with separate TE and TM transmissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalElement {
    pub name: String,
    pub te: f64,
    pub tm: f64,
}

impl OpticalElement {
    pub fn new(name: impl Into<String>, te: f64, tm: f64) -> Result<Self> {
        let e = OpticalElement {
            name: name.into(),
            te,
            tm,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        for (pol, t) in [("TE", self.te), ("TM", self.tm)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::arg(format!(
                    "{} {pol} transmission {t} outside [0, 1]",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn transmission(&self, polarization: Polarization) -> f64 {
        match polarization {
            Polarization::TE => self.te,
            Polarization::TM => self.tm,
        }
    }
}

/// Waveguide propagation loss per polarization, dB/cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideLoss {
    pub te: f64,
    pub tm: f64,
}

impl Default for WaveguideLoss {
    fn default() -> Self {
        WaveguideLoss { te: 0.13, tm: 0.18 }
    }
}

impl WaveguideLoss {
    pub fn get(&self, polarization: Polarization) -> f64 {
        match polarization {
            Polarization::TE => self.te,
            Polarization::TM => self.tm,
        }
    }
}

/// How far a generated photon travels inside the chip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationLength {
    /// Half the poled section plus the unpoled remainder.
    #[default]
    MeanGenerationPoint,
    FullChip,
}

/// Propagation length inside the waveguide, cm.
pub fn effective_propagation_length_cm(spec: &WaveguideSpec, mode: PropagationLength) -> f64 {
    let mm = match mode {
        PropagationLength::MeanGenerationPoint => {
            0.5 * spec.poled_length_mm + (spec.chip_length_mm - spec.poled_length_mm)
        }
        PropagationLength::FullChip => spec.chip_length_mm,
    };
    0.1 * mm
}

/// Ordered components seen by one photon from its birth to the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentChain {
    #[serde(default)]
    pub elements: Vec<OpticalElement>,
    #[serde(default)]
    pub loss_db_per_cm: WaveguideLoss,
    pub propagation_length_cm: f64,
    pub detector_efficiency: f64,
}

impl ComponentChain {
    pub fn validate(&self) -> Result<()> {
        for e in &self.elements {
            e.validate()?;
        }
        if !(self.propagation_length_cm >= 0.0) {
            return Err(Error::arg("propagation length must be non-negative"));
        }
        if !(self.loss_db_per_cm.te >= 0.0 && self.loss_db_per_cm.tm >= 0.0) {
            return Err(Error::arg("waveguide loss must be non-negative"));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::arg(format!(
                "detector efficiency {} outside (0, 1]",
                self.detector_efficiency
            )));
        }
        Ok(())
    }

    /// No loss and a perfect detector.
    pub fn lossless() -> Self {
        ComponentChain {
            elements: Vec::new(),
            loss_db_per_cm: WaveguideLoss { te: 0.0, tm: 0.0 },
            propagation_length_cm: 0.0,
            detector_efficiency: 1.0,
        }
    }

    pub fn waveguide_transmission(&self, polarization: Polarization) -> f64 {
        10f64.powf(-self.loss_db_per_cm.get(polarization) * self.propagation_length_cm / 10.0)
    }

    pub fn with_element(mut self, element: OpticalElement) -> Self {
        self.elements.push(element);
        self
    }

    /// Signal arm of the fiber-pigtailed device: TE pigtail, PBS with
    /// isolator, DWDM channel.
    pub fn pigtailed_signal(propagation_length_cm: f64) -> Self {
        ComponentChain {
            elements: vec![
                OpticalElement::new("pigtail", 0.840, 0.757).expect("valid"),
                OpticalElement::new("pbs_isolator", 0.815, 0.840).expect("valid"),
                OpticalElement::new("dwdm", 0.86, 0.86).expect("valid"),
            ],
            loss_db_per_cm: WaveguideLoss::default(),
            propagation_length_cm,
            detector_efficiency: 0.85,
        }
    }

    /// Idler arm: TM pigtail and PBS with isolator.
    pub fn pigtailed_idler(propagation_length_cm: f64) -> Self {
        ComponentChain {
            elements: vec![
                OpticalElement::new("pigtail", 0.840, 0.757).expect("valid"),
                OpticalElement::new("pbs_isolator", 0.815, 0.840).expect("valid"),
            ],
            loss_db_per_cm: WaveguideLoss::default(),
            propagation_length_cm,
            detector_efficiency: 0.85,
        }
    }
}

/// Product of waveguide transmission, every element and optionally the
/// detector efficiency.
pub fn chain_transmission(chain: &ComponentChain, polarization: Polarization, include_detector: bool) -> Result<f64> {
    chain.validate()?;
    let mut t = chain.waveguide_transmission(polarization);
    for e in &chain.elements {
        t *= e.transmission(polarization);
    }
    if include_detector {
        t *= chain.detector_efficiency;
    }
    Ok(t)
}

/// Transmission of the chain attached to `arm`, using that arm's polarization.
pub fn arm_transmission(
    chain: &ComponentChain,
    map: &PolarizationMap,
    arm: Arm,
    include_detector: bool,
) -> Result<f64> {
    let pol = match arm {
        Arm::Signal => map.signal.polarization,
        Arm::Idler => map.idler.polarization,
    };
    chain_transmission(chain, pol, include_detector)
}

/// Raw heralding efficiency expected from a chain transmission and detector.
pub fn predicted_raw_heralding(chain_transmission: f64, detector_efficiency: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&chain_transmission) {
        return Err(Error::arg(format!(
            "chain transmission {chain_transmission} outside [0, 1]"
        )));
    }
    if !(detector_efficiency > 0.0 && detector_efficiency <= 1.0) {
        return Err(Error::arg(format!(
            "detector efficiency {detector_efficiency} outside (0, 1]"
        )));
    }
    Ok(chain_transmission * detector_efficiency)
}
