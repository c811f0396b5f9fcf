//! Nodal scalar fields on the mesh.

use serde::{Deserialize, Serialize};

/// Physical unit carried by a field, used for labeling exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    /// K
    Kelvin,
    /// W·m⁻²
    WattPerSquareMeter,
    /// W·K⁻¹·m⁻³
    PerfusionRate,
    Dimensionless,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unit::Kelvin => "K",
            Unit::WattPerSquareMeter => "W/m2",
            Unit::PerfusionRate => "W/K/m3",
            Unit::Dimensionless => "1",
        };
        f.write_str(s)
    }
}

/// One scalar per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeField {
    pub values: Vec<f64>,
    pub unit: Unit,
}

impl FeField {
    pub fn constant(n: usize, value: f64, unit: Unit) -> Self {
        Self {
            values: vec![value; n],
            unit,
        }
    }

    pub fn zeros(n: usize, unit: Unit) -> Self {
        Self::constant(n, 0.0, unit)
    }

    pub fn from_values(values: Vec<f64>, unit: Unit) -> Self {
        Self { values, unit }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for FeField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for FeField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}
