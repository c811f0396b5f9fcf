//! r-weighted P1 finite-element assembly on triangles.
//!
//! All domain forms realize ∫ (·) r dr dz and all boundary forms ∫ (·) r ds,
//! with the axisymmetric 2π factor dropped uniformly. Element integrals use
//! the edge-midpoint rule (exact for quadratics), boundary integrals 2-point
//! Gauss (exact for cubics); every form that must pair exactly with another
//! is assembled with the same rule.

use crate::error::{Error, Result};
use crate::mesh::{AxiMesh, BoundaryTag, FeField};
use crate::SparseMatrix;

/// Coefficient of a bilinear form: a constant or a nodal field.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a> {
    Constant(f64),
    Nodal(&'a [f64]),
}

impl From<f64> for Coefficient<'static> {
    fn from(c: f64) -> Self {
        Coefficient::Constant(c)
    }
}

impl<'a> From<&'a FeField> for Coefficient<'a> {
    fn from(f: &'a FeField) -> Self {
        Coefficient::Nodal(&f.values)
    }
}

impl<'a> From<&'a [f64]> for Coefficient<'a> {
    fn from(f: &'a [f64]) -> Self {
        Coefficient::Nodal(f)
    }
}

impl Coefficient<'_> {
    fn check(&self, n_nodes: usize) -> Result<()> {
        if let Coefficient::Nodal(v) = self {
            if v.len() != n_nodes {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient field has {} values on a mesh with {} nodes",
                    v.len(),
                    n_nodes
                )));
            }
        }
        Ok(())
    }

    /// Value at a quadrature point given the element's nodal basis values.
    #[inline]
    fn at(&self, tri: &[usize; 3], basis: &[f64; 3]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Nodal(v) => {
                v[tri[0]] * basis[0] + v[tri[1]] * basis[1] + v[tri[2]] * basis[2]
            }
        }
    }
}

/// Edge-midpoint quadrature on the reference triangle, weights 1/3 each.
const TRI_QP: [[f64; 3]; 3] = [
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
];

/// 2-point Gauss on the unit interval.
const EDGE_QP: [f64; 2] = [0.211_324_865_405_187, 0.788_675_134_594_813];

/// Sparsity pattern shared by every matrix assembled on one mesh, with
/// precomputed CSR slots per element and per boundary edge.
#[derive(Debug)]
pub(crate) struct MeshPattern {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    /// CSR slot of (tri[i], tri[j]) for each triangle, row-major in (i, j).
    tri_slots: Vec<[usize; 9]>,
    /// CSR slot of (edge[i], edge[j]) for each boundary edge.
    edge_slots: Vec<[usize; 4]>,
}

fn find_slot(row_offsets: &[usize], col_indices: &[usize], i: usize, j: usize) -> usize {
    let span = row_offsets[i]..row_offsets[i + 1];
    span.start + col_indices[span.clone()].binary_search(&j).expect("slot in pattern")
}

impl MeshPattern {
    fn build(mesh: &AxiMesh) -> Self {
        let n = mesh.n_nodes();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in mesh.triangles() {
            for &i in tri {
                for &j in tri {
                    neighbors[i].push(j);
                }
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
            col_indices.extend_from_slice(nb);
            row_offsets.push(col_indices.len());
        }
        let tri_slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut slots = [0usize; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        slots[3 * i + j] = find_slot(&row_offsets, &col_indices, tri[i], tri[j]);
                    }
                }
                slots
            })
            .collect();
        let edge_slots = mesh
            .boundary_edges()
            .iter()
            .map(|e| {
                let [a, b] = e.nodes;
                [
                    find_slot(&row_offsets, &col_indices, a, a),
                    find_slot(&row_offsets, &col_indices, a, b),
                    find_slot(&row_offsets, &col_indices, b, a),
                    find_slot(&row_offsets, &col_indices, b, b),
                ]
            })
            .collect();
        Self {
            row_offsets,
            col_indices,
            tri_slots,
            edge_slots,
        }
    }
}

fn pattern(mesh: &AxiMesh) -> &MeshPattern {
    mesh.pattern.get_or_init(|| MeshPattern::build(mesh))
}

fn empty_matrix(mesh: &AxiMesh) -> SparseMatrix {
    let p = pattern(mesh);
    SparseMatrix::from_pattern(
        mesh.n_nodes(),
        mesh.n_nodes(),
        p.row_offsets.clone(),
        p.col_indices.clone(),
        vec![0.0; p.col_indices.len()],
    )
}

/// M_ij = ∫ c φ_i φ_j r dr dz.
pub fn assemble_mass<'a>(mesh: &AxiMesh, coeff: impl Into<Coefficient<'a>>) -> Result<SparseMatrix> {
    let coeff = coeff.into();
    coeff.check(mesh.n_nodes())?;
    let p = pattern(mesh);
    let mut m = empty_matrix(mesh);
    let values = m.values_mut();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let slots = &p.tri_slots[t];
        for q in &TRI_QP {
            let r_q = q[0] * mesh.coords()[tri[0]][0]
                + q[1] * mesh.coords()[tri[1]][0]
                + q[2] * mesh.coords()[tri[2]][0];
            let w = area / 3.0 * coeff.at(tri, q) * r_q;
            for i in 0..3 {
                for j in 0..3 {
                    values[slots[3 * i + j]] += w * q[i] * q[j];
                }
            }
        }
    }
    Ok(m)
}

/// K_ij = ∫ c ∇φ_i·∇φ_j r dr dz.
pub fn assemble_stiffness<'a>(
    mesh: &AxiMesh,
    coeff: impl Into<Coefficient<'a>>,
) -> Result<SparseMatrix> {
    let coeff = coeff.into();
    coeff.check(mesh.n_nodes())?;
    let p = pattern(mesh);
    let mut m = empty_matrix(mesh);
    let values = m.values_mut();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let grads = basis_gradients(mesh, t);
        let slots = &p.tri_slots[t];
        // ∇φ constant per element: the quadrature only weighs c·r.
        let mut cr = 0.0;
        for q in &TRI_QP {
            let r_q = q[0] * mesh.coords()[tri[0]][0]
                + q[1] * mesh.coords()[tri[1]][0]
                + q[2] * mesh.coords()[tri[2]][0];
            cr += area / 3.0 * coeff.at(tri, q) * r_q;
        }
        for i in 0..3 {
            for j in 0..3 {
                let gg = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                values[slots[3 * i + j]] += cr * gg;
            }
        }
    }
    Ok(m)
}

/// Constant gradients of the three P1 basis functions on a triangle.
pub fn basis_gradients(mesh: &AxiMesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.triangles()[t];
    let pa = mesh.coords()[a];
    let pb = mesh.coords()[b];
    let pc = mesh.coords()[c];
    let inv_two_area = 0.5 / mesh.triangle_area(t);
    [
        [
            (pb[1] - pc[1]) * inv_two_area,
            (pc[0] - pb[0]) * inv_two_area,
        ],
        [
            (pc[1] - pa[1]) * inv_two_area,
            (pa[0] - pc[0]) * inv_two_area,
        ],
        [
            (pa[1] - pb[1]) * inv_two_area,
            (pb[0] - pa[0]) * inv_two_area,
        ],
    ]
}

fn check_tag(mesh: &AxiMesh, tag: BoundaryTag) -> Result<()> {
    if mesh.has_tag(tag) {
        Ok(())
    } else {
        Err(Error::UnknownTag(tag))
    }
}

/// B_ij = ∫_Γtag c φ_i φ_j r ds.
pub fn assemble_boundary_mass(mesh: &AxiMesh, tag: BoundaryTag, coeff: f64) -> Result<SparseMatrix> {
    check_tag(mesh, tag)?;
    let p = pattern(mesh);
    let mut m = empty_matrix(mesh);
    let values = m.values_mut();
    for (e, edge) in mesh.boundary_edges().iter().enumerate() {
        if edge.tag != tag {
            continue;
        }
        let [a, b] = edge.nodes;
        let pa = mesh.coords()[a];
        let pb = mesh.coords()[b];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let slots = &p.edge_slots[e];
        for &t in &EDGE_QP {
            let basis = [1.0 - t, t];
            let r_q = basis[0] * pa[0] + basis[1] * pb[0];
            let w = 0.5 * len * coeff * r_q;
            for i in 0..2 {
                for j in 0..2 {
                    values[slots[2 * i + j]] += w * basis[i] * basis[j];
                }
            }
        }
    }
    Ok(m)
}

/// Load vector with entries ∫_Γtag value · φ_i r ds.
pub fn assemble_boundary_load(mesh: &AxiMesh, tag: BoundaryTag, value: f64) -> Result<Vec<f64>> {
    check_tag(mesh, tag)?;
    let mut load = vec![0.0; mesh.n_nodes()];
    for edge in mesh.boundary_edges() {
        if edge.tag != tag {
            continue;
        }
        let [a, b] = edge.nodes;
        let pa = mesh.coords()[a];
        let pb = mesh.coords()[b];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for &t in &EDGE_QP {
            let basis = [1.0 - t, t];
            let r_q = basis[0] * pa[0] + basis[1] * pb[0];
            let w = 0.5 * len * value * r_q;
            load[a] += w * basis[0];
            load[b] += w * basis[1];
        }
    }
    Ok(load)
}

/// ∫_Γtag r ds — the 2π-dropped area of a boundary section.
pub fn boundary_measure(mesh: &AxiMesh, tag: BoundaryTag) -> Result<f64> {
    Ok(assemble_boundary_load(mesh, tag, 1.0)?.iter().sum())
}

/// Load vector with entries ∫ φ_i u_h v_h r dr dz, assembled with the same
/// quadrature as [`assemble_mass`] so it is the exact ξ-derivative of the
/// perfusion form.
pub fn product_load(mesh: &AxiMesh, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != mesh.n_nodes() || v.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "product_load with fields of lengths {} and {} on {} nodes",
            u.len(),
            v.len(),
            mesh.n_nodes()
        )));
    }
    let mut load = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        for q in &TRI_QP {
            let r_q = q[0] * mesh.coords()[tri[0]][0]
                + q[1] * mesh.coords()[tri[1]][0]
                + q[2] * mesh.coords()[tri[2]][0];
            let u_q = q[0] * u[tri[0]] + q[1] * u[tri[1]] + q[2] * u[tri[2]];
            let v_q = q[0] * v[tri[0]] + q[1] * v[tri[1]] + q[2] * v[tri[2]];
            let w = area / 3.0 * u_q * v_q * r_q;
            for i in 0..3 {
                load[tri[i]] += w * q[i];
            }
        }
    }
    Ok(load)
}

/// ∫ u_h r dr dz.
pub fn integrate(mesh: &AxiMesh, u: &[f64]) -> Result<f64> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "integrate with field of length {} on {} nodes",
            u.len(),
            mesh.n_nodes()
        )));
    }
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        for q in &TRI_QP {
            let r_q = q[0] * mesh.coords()[tri[0]][0]
                + q[1] * mesh.coords()[tri[1]][0]
                + q[2] * mesh.coords()[tri[2]][0];
            let u_q = q[0] * u[tri[0]] + q[1] * u[tri[1]] + q[2] * u[tri[2]];
            acc += area / 3.0 * u_q * r_q;
        }
    }
    Ok(acc)
}

/// Diagonal of the r-weighted lumped mass, m_i = ∫ φ_i r dr dz.
pub fn lumped_mass(mesh: &AxiMesh) -> Vec<f64> {
    let mut lumped = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        for q in &TRI_QP {
            let r_q = q[0] * mesh.coords()[tri[0]][0]
                + q[1] * mesh.coords()[tri[1]][0]
                + q[2] * mesh.coords()[tri[2]][0];
            for i in 0..3 {
                lumped[tri[i]] += area / 3.0 * q[i] * r_q;
            }
        }
    }
    lumped
}

/// Per-element constant gradient of a nodal field.
pub fn elementwise_gradient(mesh: &AxiMesh, u: &[f64]) -> Result<Vec<[f64; 2]>> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "gradient of field with length {} on {} nodes",
            u.len(),
            mesh.n_nodes()
        )));
    }
    Ok((0..mesh.n_triangles())
        .map(|t| {
            let tri = mesh.triangles()[t];
            let grads = basis_gradients(mesh, t);
            let mut g = [0.0, 0.0];
            for i in 0..3 {
                g[0] += u[tri[i]] * grads[i][0];
                g[1] += u[tri[i]] * grads[i][1];
            }
            g
        })
        .collect())
}

/// Evaluates the P1 interpolant of `u` at arbitrary (r, z) points by point
/// location and barycentric interpolation; points that miss every triangle by
/// more than a small tolerance (boundary roundoff) fall back to the nearest
/// node value.
pub fn interpolate_at(mesh: &AxiMesh, u: &[f64], points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "field with {} values on {} nodes",
            u.len(),
            mesh.n_nodes()
        )));
    }
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let mut best_defect = f64::INFINITY;
        let mut best_value = 0.0;
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let a = mesh.coords()[tri[0]];
            let b = mesh.coords()[tri[1]];
            let c = mesh.coords()[tri[2]];
            let two_area = 2.0 * mesh.triangle_area(t);
            let l0 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / two_area;
            let l1 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / two_area;
            let l2 = 1.0 - l0 - l1;
            // Negative barycentric mass measures how far outside we are.
            let defect = (-l0).max(0.0) + (-l1).max(0.0) + (-l2).max(0.0);
            if defect < best_defect {
                best_defect = defect;
                best_value = l0 * u[tri[0]] + l1 * u[tri[1]] + l2 * u[tri[2]];
                if defect == 0.0 {
                    break;
                }
            }
        }
        if best_defect <= 1e-9 {
            out.push(best_value);
        } else {
            out.push(u[mesh.nearest_node(p[0], p[1])]);
        }
    }
    Ok(out)
}

/// Projects elementwise values to nodes by r-weighted mass-lumped averaging.
pub fn project_elementwise_to_nodes(mesh: &AxiMesh, elem_values: &[f64]) -> Result<Vec<f64>> {
    if elem_values.len() != mesh.n_triangles() {
        return Err(Error::DimensionMismatch(format!(
            "{} element values on {} triangles",
            elem_values.len(),
            mesh.n_triangles()
        )));
    }
    let mut num = vec![0.0; mesh.n_nodes()];
    let lumped = lumped_mass(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        for q in &TRI_QP {
            let r_q = q[0] * mesh.coords()[tri[0]][0]
                + q[1] * mesh.coords()[tri[1]][0]
                + q[2] * mesh.coords()[tri[2]][0];
            for i in 0..3 {
                num[tri[i]] += area / 3.0 * q[i] * r_q * elem_values[t];
            }
        }
    }
    Ok(num
        .iter()
        .zip(&lumped)
        .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 })
        .collect())
}
