//! Synthetic blood-vessel perfusion fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::PerfusionField;
use crate::mesh::AxiMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselKind {
    /// Smooth vessel: 2-d Gaussian kernel with standard deviation `extent`.
    Gaussian,
    /// Square vessel: constant rate inside the square of half-width `extent`.
    Square,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VesselSpec {
    pub kind: VesselKind,
    /// (r, z) center in meters.
    pub center: [f64; 2],
    /// Standard deviation (gaussian) or half-width (square) in meters.
    pub extent: f64,
    /// Peak perfusion rate [W·K⁻¹·m⁻³].
    pub amplitude: f64,
}

impl VesselSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) {
            return Err(Error::Config(format!(
                "vessel extent must be positive, got {}",
                self.extent
            )));
        }
        if self.amplitude < 0.0 {
            return Err(Error::Config(format!(
                "vessel amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    fn value_at(&self, r: f64, z: f64) -> f64 {
        let dr = r - self.center[0];
        let dz = z - self.center[1];
        match self.kind {
            VesselKind::Gaussian => {
                self.amplitude * (-(dr * dr + dz * dz) / (2.0 * self.extent * self.extent)).exp()
            }
            VesselKind::Square => {
                if dr.abs() <= self.extent && dz.abs() <= self.extent {
                    self.amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

/// Nodal sum of the vessel contributions, clamped at each node to the largest
/// single amplitude so overlapping vessels do not stack super-physically.
pub fn synthesize_perfusion(vessels: &[VesselSpec], mesh: &AxiMesh) -> Result<PerfusionField> {
    for v in vessels {
        v.validate()?;
    }
    let cap = vessels.iter().map(|v| v.amplitude).fold(0.0f64, f64::max);
    let values = mesh
        .coords()
        .iter()
        .map(|c| {
            let total: f64 = vessels.iter().map(|v| v.value_at(c[0], c[1])).sum();
            total.min(cap)
        })
        .collect();
    PerfusionField::from_values(values)
}

/// Default vessel layout: two columns of five vessels parallel to the
/// radiating section at radial offsets 4 mm and 8 mm, 5 mm vertical spacing,
/// with the middle vessel of the first column 1.5x wider than the rest.
pub fn default_vessel_layout(kind: VesselKind, xi_max: f64) -> Vec<VesselSpec> {
    let mut vessels = Vec::new();
    let extent = 1e-3;
    for (col, &r) in [4e-3, 8e-3].iter().enumerate() {
        for iz in -2i32..=2 {
            let z = iz as f64 * 5e-3;
            let e = if col == 0 && iz == 0 { 1.5 * extent } else { extent };
            vessels.push(VesselSpec {
                kind,
                center: [r, z],
                extent: e,
                amplitude: xi_max,
            });
        }
    }
    vessels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, GeometryConfig};
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_peak_and_decay() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 1e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let xi_max = 6e4;
        // Center the vessel exactly on a structured-grid node.
        let node = mesh.nearest_node(4e-3, 0.0);
        let center = mesh.coords()[node];
        let vessels = vec![VesselSpec {
            kind: VesselKind::Gaussian,
            center,
            extent: 1e-3,
            amplitude: xi_max,
        }];
        let xi = synthesize_perfusion(&vessels, &mesh).unwrap();
        assert_relative_eq!(xi.as_slice()[node], xi_max, max_relative = 1e-12);
        // Six extents away the contribution is negligible.
        let far = mesh.nearest_node(25e-3, 30e-3);
        assert!(xi.as_slice()[far] <= 1e-7 * xi_max);
    }

    #[test]
    fn square_vessel_is_exactly_binary() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 1e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let xi_max = 6e4;
        let vessels = vec![VesselSpec {
            kind: VesselKind::Square,
            center: [6e-3, 2e-3],
            extent: 1.5e-3,
            amplitude: xi_max,
        }];
        let xi = synthesize_perfusion(&vessels, &mesh).unwrap();
        for (c, &v) in mesh.coords().iter().zip(xi.as_slice()) {
            let inside = (c[0] - 6e-3).abs() <= 1.5e-3 && (c[1] - 2e-3).abs() <= 1.5e-3;
            if inside {
                assert_eq!(v, xi_max);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn overlapping_vessels_clamp_to_the_largest_amplitude() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 2e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let spec = |amp: f64| VesselSpec {
            kind: VesselKind::Square,
            center: [6e-3, 0.0],
            extent: 2e-3,
            amplitude: amp,
        };
        let xi = synthesize_perfusion(&[spec(6e4), spec(4e4)], &mesh).unwrap();
        let peak = xi.as_slice().iter().fold(0.0f64, |a, &v| a.max(v));
        assert_eq!(peak, 6e4);
    }

    #[test]
    fn default_layout_has_ten_vessels_with_one_wide_center() {
        let vessels = default_vessel_layout(VesselKind::Gaussian, 6e4);
        assert_eq!(vessels.len(), 10);
        let wide: Vec<_> = vessels.iter().filter(|v| v.extent > 1.2e-3).collect();
        assert_eq!(wide.len(), 1);
        assert_eq!(wide[0].center, [4e-3, 0.0]);
    }
}
