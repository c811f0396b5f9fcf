//! Axisymmetric liver-with-applicator geometry.
//!
//! The computational domain is the (r, z) half-section of a cylinder of
//! radius `liver_radius` and height 2·`liver_half_height`, with the laser
//! applicator slot removed: a rectangle r ∈ [0, applicator_radius],
//! z ∈ [−radiating_half_length, radiating_half_length + cooled_length].
//! Boundary edges carry one of four tags:
//!
//! - `Rad`  — the radiating section of the applicator wall,
//!   r = applicator_radius, |z| < radiating_half_length;
//! - `Cool` — the remaining applicator interface (upper wall, tip, top face);
//! - `Amb`  — the outer liver surface (r = liver_radius and z = ±half height);
//! - `Axis` — the r = 0 segments above and below the applicator.
//!
//! Meshes come from a structured generator: a rectilinear grid conforming to
//! the slot corners, each quad split into two positively oriented triangles.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::assembly::MeshPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Rad,
    Cool,
    Amb,
    Axis,
}

impl std::fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundaryTag::Rad => "rad",
            BoundaryTag::Cool => "cool",
            BoundaryTag::Amb => "amb",
            BoundaryTag::Axis => "axis",
        };
        f.write_str(s)
    }
}

/// Geometry of the half-section, all lengths in meters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub liver_radius: f64,
    pub liver_half_height: f64,
    pub applicator_radius: f64,
    pub radiating_half_length: f64,
    pub cooled_length: f64,
    pub target_edge_size: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            liver_radius: 30e-3,
            liver_half_height: 40e-3,
            applicator_radius: 1.5e-3,
            radiating_half_length: 10e-3,
            cooled_length: 15e-3,
            target_edge_size: 1e-3,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("liver_radius", self.liver_radius),
            ("liver_half_height", self.liver_half_height),
            ("applicator_radius", self.applicator_radius),
            ("radiating_half_length", self.radiating_half_length),
            ("cooled_length", self.cooled_length),
            ("target_edge_size", self.target_edge_size),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.applicator_radius >= self.liver_radius {
            return Err(Error::InvalidGeometry(format!(
                "applicator_radius {} must be smaller than liver_radius {}",
                self.applicator_radius, self.liver_radius
            )));
        }
        if self.radiating_half_length + self.cooled_length >= self.liver_half_height {
            return Err(Error::InvalidGeometry(format!(
                "radiating_half_length + cooled_length = {} does not fit within liver_half_height {}",
                self.radiating_half_length + self.cooled_length,
                self.liver_half_height
            )));
        }
        Ok(())
    }

    /// z-range of the applicator slot.
    pub fn slot_z_range(&self) -> (f64, f64) {
        (
            -self.radiating_half_length,
            self.radiating_half_length + self.cooled_length,
        )
    }

    /// Area of the half-section (plain, not r-weighted).
    pub fn domain_area(&self) -> f64 {
        let (z_lo, z_hi) = self.slot_z_range();
        self.liver_radius * 2.0 * self.liver_half_height - self.applicator_radius * (z_hi - z_lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Triangulated axisymmetric mesh with tagged boundary edges.
#[derive(Debug)]
pub struct AxiMesh {
    coords: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    pub(crate) pattern: OnceLock<MeshPattern>,
}

impl Clone for AxiMesh {
    fn clone(&self) -> Self {
        Self {
            coords: self.coords.clone(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            pattern: OnceLock::new(),
        }
    }
}

impl AxiMesh {
    /// Assembles a mesh from raw parts, validating the invariants the solvers
    /// rely on (r ≥ 0, positive triangle orientation, in-range indices).
    pub fn from_parts(
        coords: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        for (i, c) in coords.iter().enumerate() {
            if c[0] < 0.0 || !c[0].is_finite() || !c[1].is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "node {i} at (r, z) = ({}, {}) leaves the half-plane r >= 0",
                    c[0], c[1]
                )));
            }
        }
        let mesh = Self {
            coords,
            triangles,
            boundary_edges,
            pattern: OnceLock::new(),
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for &n in tri {
                if n >= mesh.coords.len() {
                    return Err(Error::InvalidGeometry(format!(
                        "triangle {t} references missing node {n}"
                    )));
                }
            }
            if mesh.triangle_area(t) <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {t} is degenerate or negatively oriented"
                )));
            }
        }
        for e in &mesh.boundary_edges {
            for &n in &e.nodes {
                if n >= mesh.coords.len() {
                    return Err(Error::InvalidGeometry(format!(
                        "boundary edge references missing node {n}"
                    )));
                }
            }
        }
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary_edges.iter().any(|e| e.tag == tag)
    }

    /// Signed area of a triangle (positive for the stored orientation).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let pa = self.coords[a];
        let pb = self.coords[b];
        let pc = self.coords[c];
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Index of the node closest to (r, z).
    pub fn nearest_node(&self, r: f64, z: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.coords.iter().enumerate() {
            let d = (c[0] - r).powi(2) + (c[1] - z).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

fn segment_points(breaks: &[f64], target: f64) -> Vec<f64> {
    let mut pts = vec![breaks[0]];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b - a) / target).ceil().max(1.0) as usize;
        for k in 1..=n {
            // Exact endpoint at k == n.
            let t = k as f64 / n as f64;
            pts.push(if k == n { b } else { a + t * (b - a) });
        }
    }
    pts
}

/// Builds the structured triangulation of the half-section with the
/// applicator slot removed and all boundary edges tagged.
pub fn build_mesh(geom: &GeometryConfig) -> Result<AxiMesh> {
    geom.validate()?;
    let (z_lo, z_hi) = geom.slot_z_range();
    let r_breaks = [0.0, geom.applicator_radius, geom.liver_radius];
    let z_breaks = [
        -geom.liver_half_height,
        z_lo,
        geom.radiating_half_length,
        z_hi,
        geom.liver_half_height,
    ];
    let rs = segment_points(&r_breaks, geom.target_edge_size);
    let zs = segment_points(&z_breaks, geom.target_edge_size);

    let tol = 1e-9 * geom.liver_radius.max(geom.liver_half_height);
    let in_slot = |r: f64, z: f64| r < geom.applicator_radius - tol && z > z_lo + tol && z < z_hi - tol;

    // Keep the grid nodes that border at least one kept cell.
    fn grid_node(
        ir: usize,
        iz: usize,
        node_ids: &mut HashMap<(usize, usize), usize>,
        coords: &mut Vec<[f64; 2]>,
        rs: &[f64],
        zs: &[f64],
    ) -> usize {
        *node_ids.entry((ir, iz)).or_insert_with(|| {
            coords.push([rs[ir], zs[iz]]);
            coords.len() - 1
        })
    }

    let mut node_ids = HashMap::new();
    let mut coords = Vec::new();
    let mut triangles = Vec::new();
    for ir in 0..rs.len() - 1 {
        for iz in 0..zs.len() - 1 {
            let rc = 0.5 * (rs[ir] + rs[ir + 1]);
            let zc = 0.5 * (zs[iz] + zs[iz + 1]);
            if in_slot(rc, zc) {
                continue;
            }
            let a = grid_node(ir, iz, &mut node_ids, &mut coords, &rs, &zs);
            let b = grid_node(ir + 1, iz, &mut node_ids, &mut coords, &rs, &zs);
            let c = grid_node(ir + 1, iz + 1, &mut node_ids, &mut coords, &rs, &zs);
            let d = grid_node(ir, iz + 1, &mut node_ids, &mut coords, &rs, &zs);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    // Boundary edges are those owned by exactly one triangle.
    let mut edge_count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
    for tri in &triangles {
        for k in 0..3 {
            let (u, v) = (tri[k], tri[(k + 1) % 3]);
            let key = (u.min(v), u.max(v));
            let entry = edge_count.entry(key).or_insert((0, [u, v]));
            entry.0 += 1;
        }
    }

    let mut boundary_edges = Vec::new();
    for (_, (count, nodes)) in edge_count {
        if count != 1 {
            continue;
        }
        let mid_r = 0.5 * (coords[nodes[0]][0] + coords[nodes[1]][0]);
        let mid_z = 0.5 * (coords[nodes[0]][1] + coords[nodes[1]][1]);
        let tag = if mid_r < tol {
            BoundaryTag::Axis
        } else if mid_r > geom.liver_radius - tol || mid_z.abs() > geom.liver_half_height - tol {
            BoundaryTag::Amb
        } else if (mid_r - geom.applicator_radius).abs() < tol
            && mid_z > -geom.radiating_half_length + tol
            && mid_z < geom.radiating_half_length - tol
        {
            BoundaryTag::Rad
        } else if mid_r < geom.applicator_radius + tol
            && mid_z > z_lo - tol
            && mid_z < z_hi + tol
        {
            BoundaryTag::Cool
        } else {
            return Err(Error::InvalidGeometry(format!(
                "boundary edge at ({mid_r}, {mid_z}) could not be tagged"
            )));
        };
        boundary_edges.push(BoundaryEdge { nodes, tag });
    }
    boundary_edges.sort_by_key(|e| (e.nodes[0], e.nodes[1]));

    AxiMesh::from_parts(coords, triangles, boundary_edges)
}
