//! Temperature-dependent bulk dispersion of lithium niobate.
//!
//! Coefficient sets are data: they are parsed from a TOML catalog (one set
//! per `[[material]]` table) and evaluated with a single generalized Sellmeier
//! form. The catalog format is documented in `data/lithium_niobate.toml`,
//! which is also compiled in as the default catalog.
//!
//! Wavelengths are in micrometres and temperatures in degrees Celsius.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The catalog shipped with the crate.
pub const BUILTIN_CATALOG: &str = include_str!("../data/lithium_niobate.toml");

/// Name of the coefficient set used when none is configured.
pub const DEFAULT_MATERIAL: &str = "hobden-warner-1966";

/// Crystal axis seen by a polarized wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Ordinary,
    Extraordinary,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Ordinary => f.write_str("ordinary"),
            Axis::Extraordinary => f.write_str("extraordinary"),
        }
    }
}

/// Coefficients of one crystal axis.
///
/// `n² = a1 + b1·f + (a2 + b2·f)/(λ² − (a3 + b3·f)²) + (a4 + b4·f)/(λ² − a5²) − a6·λ²`
/// with `f = (T − t0)(T + t1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellmeierAxis {
    pub a: [f64; 6],
    pub b: [f64; 4],
    pub temperature_offsets: [f64; 2],
}

impl SellmeierAxis {
    fn temperature_term(&self, temperature_c: f64) -> f64 {
        (temperature_c - self.temperature_offsets[0]) * (temperature_c + self.temperature_offsets[1])
    }

    fn has_infrared_pole(&self) -> bool {
        self.a[3] != 0.0 || self.b[3] != 0.0
    }

    /// Returns `(n², d(n²)/dλ)`.
    fn n_squared(&self, wavelength_um: f64, temperature_c: f64) -> (f64, f64) {
        let [a1, a2, a3, a4, a5, a6] = self.a;
        let [b1, b2, b3, b4] = self.b;
        let f = self.temperature_term(temperature_c);
        let l2 = wavelength_um * wavelength_um;

        let uv_pole = a3 + b3 * f;
        let uv_den = l2 - uv_pole * uv_pole;
        let uv_num = a2 + b2 * f;

        let mut n2 = a1 + b1 * f + uv_num / uv_den - a6 * l2;
        let mut dn2 = -2.0 * wavelength_um * uv_num / (uv_den * uv_den) - 2.0 * a6 * wavelength_um;
        if self.has_infrared_pole() {
            let ir_den = l2 - a5 * a5;
            let ir_num = a4 + b4 * f;
            n2 += ir_num / ir_den;
            dn2 -= 2.0 * wavelength_um * ir_num / (ir_den * ir_den);
        }
        (n2, dn2)
    }
}

/// A named dispersion model with its validity window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub wavelength_range_um: [f64; 2],
    pub temperature_range_c: [f64; 2],
    pub ordinary: SellmeierAxis,
    pub extraordinary: SellmeierAxis,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel::builtin(DEFAULT_MATERIAL).expect("default material is in the builtin catalog")
    }
}

impl MaterialModel {
    /// Looks up a set in the compiled-in catalog.
    pub fn builtin(name: &str) -> Result<Self> {
        MaterialCatalog::builtin().get(name).cloned()
    }

    /// Dispersionless model with the same index on both axes.
    pub fn constant(index: f64) -> Self {
        let axis = SellmeierAxis {
            a: [index * index, 0.0, 0.0, 0.0, 0.0, 0.0],
            b: [0.0; 4],
            temperature_offsets: [0.0; 2],
        };
        MaterialModel {
            name: format!("constant-{index}"),
            description: "constant index test model".into(),
            wavelength_range_um: [0.2, 5.0],
            temperature_range_c: [-273.0, 1000.0],
            ordinary: axis.clone(),
            extraordinary: axis,
        }
    }

    pub fn axis(&self, axis: Axis) -> &SellmeierAxis {
        match axis {
            Axis::Ordinary => &self.ordinary,
            Axis::Extraordinary => &self.extraordinary,
        }
    }

    fn check(&self, wavelength_um: f64, temperature_c: f64, strict: bool) -> Result<()> {
        let [lmin, lmax] = self.wavelength_range_um;
        let [tmin, tmax] = self.temperature_range_c;
        let inside = |v: f64, lo: f64, hi: f64| {
            if strict {
                v > lo && v < hi
            } else {
                v >= lo && v <= hi
            }
        };
        if !wavelength_um.is_finite() || !inside(wavelength_um, lmin, lmax) {
            return Err(Error::Domain {
                quantity: "wavelength (um)",
                value: wavelength_um,
                min: lmin,
                max: lmax,
            });
        }
        if !temperature_c.is_finite() || !inside(temperature_c, tmin, tmax) {
            return Err(Error::Domain {
                quantity: "temperature (degC)",
                value: temperature_c,
                min: tmin,
                max: tmax,
            });
        }
        Ok(())
    }

    /// Refractive index of `axis` at `wavelength_um` and `temperature_c`.
    pub fn refractive_index(&self, axis: Axis, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        self.check(wavelength_um, temperature_c, false)?;
        let (n2, _) = self.axis(axis).n_squared(wavelength_um, temperature_c);
        if !(n2 > 0.0) {
            return Err(Error::arg(format!(
                "{} model `{}` gives n^2 = {n2} at {wavelength_um} um",
                axis, self.name
            )));
        }
        Ok(n2.sqrt())
    }

    /// Group index `n − λ·dn/dλ`, with the derivative taken analytically.
    pub fn group_index(&self, axis: Axis, wavelength_um: f64, temperature_c: f64) -> Result<f64> {
        self.check(wavelength_um, temperature_c, true)?;
        let n = self.refractive_index(axis, wavelength_um, temperature_c)?;
        let (_, dn2) = self.axis(axis).n_squared(wavelength_um, temperature_c);
        Ok(n - wavelength_um * dn2 / (2.0 * n))
    }
}

/// A set of named coefficient tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialCatalog {
    pub material: Vec<MaterialModel>,
}

impl MaterialCatalog {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_CATALOG).expect("builtin catalog parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let catalog: MaterialCatalog = toml::from_str(s)?;
        for m in &catalog.material {
            if m.wavelength_range_um[0] <= 0.0 || m.wavelength_range_um[0] >= m.wavelength_range_um[1] {
                return Err(Error::Parse(format!("material `{}`: bad wavelength range", m.name)));
            }
            if m.temperature_range_c[0] >= m.temperature_range_c[1] {
                return Err(Error::Parse(format!("material `{}`: bad temperature range", m.name)));
            }
        }
        Ok(catalog)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&MaterialModel> {
        self.material
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::UnknownMaterial(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.material.iter().map(|m| m.name.as_str())
    }
}
