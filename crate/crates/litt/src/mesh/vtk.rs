//! VTK legacy ASCII export of meshes and nodal fields, plus a reader for the
//! files this writer produces (used by the `compare` CLI subcommand).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{AxiMesh, FeField};

/// Writes an UNSTRUCTURED_GRID file with the mesh and the given point fields.
/// The (r, z) plane maps to VTK (x, y), z = 0.
pub fn write_vtk(path: &Path, mesh: &AxiMesh, fields: &[(&str, &FeField)]) -> Result<()> {
    for (name, f) in fields {
        if f.len() != mesh.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "field {name} has {} values on a mesh with {} nodes",
                f.len(),
                mesh.n_nodes()
            )));
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "litt axisymmetric mesh (r, z, 0)")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for c in mesh.coords() {
        writeln!(w, "{:.17e} {:.17e} 0.0", c[0], c[1])?;
    }
    writeln!(w, "CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())?;
    for tri in mesh.triangles() {
        writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.n_triangles())?;
    for _ in 0..mesh.n_triangles() {
        writeln!(w, "5")?;
    }
    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
        for (name, f) in fields {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in &f.values {
                writeln!(w, "{v:.17e}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Point fields read back from a VTK file written by [`write_vtk`].
pub struct VtkFields {
    pub n_points: usize,
    pub coords: Vec<[f64; 2]>,
    /// (name-with-unit-suffix, values) in file order.
    pub fields: Vec<(String, Vec<f64>)>,
}

pub fn read_vtk(path: &Path) -> Result<VtkFields> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));

    let mut n_points = 0usize;
    let mut coords = Vec::new();
    let mut fields = Vec::new();
    while let Some(line) = lines.next() {
        let line = line?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("POINTS") => {
                n_points = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("malformed POINTS header"))?;
                for _ in 0..n_points {
                    let l = lines
                        .next()
                        .transpose()?
                        .ok_or_else(|| bad("truncated POINTS block"))?;
                    let mut t = l.split_whitespace();
                    let x: f64 = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("malformed point"))?;
                    let y: f64 = t
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("malformed point"))?;
                    coords.push([x, y]);
                }
            }
            Some("SCALARS") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| bad("malformed SCALARS header"))?
                    .to_string();
                // Skip the LOOKUP_TABLE line.
                lines
                    .next()
                    .transpose()?
                    .ok_or_else(|| bad("missing LOOKUP_TABLE"))?;
                let mut values = Vec::with_capacity(n_points);
                while values.len() < n_points {
                    let l = lines
                        .next()
                        .transpose()?
                        .ok_or_else(|| bad("truncated SCALARS block"))?;
                    for tok in l.split_whitespace() {
                        values.push(
                            tok.parse::<f64>()
                                .map_err(|_| bad("malformed scalar value"))?,
                        );
                    }
                }
                fields.push((name, values));
            }
            _ => {}
        }
    }
    if n_points == 0 {
        return Err(bad("no POINTS block found"));
    }
    Ok(VtkFields {
        n_points,
        coords,
        fields,
    })
}
