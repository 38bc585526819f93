//! Plain-text mesh files, legacy VTK export and solution CSV.

use std::io::{BufRead, Write};

use crate::control::SolutionPair;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Writes one vertex per line (`x y bflag`) and one triangle per line (`i j k`).
pub fn write_mesh_text<N: Write, E: Write>(mesh: &TriMesh, mut nodes: N, mut elements: E) -> Result<()> {
    for (i, x) in mesh.vertices().iter().enumerate() {
        writeln!(nodes, "{} {} {}", x[0], x[1], u8::from(mesh.is_boundary(i)))?;
    }
    for t in mesh.triangles() {
        writeln!(elements, "{} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize, what: &str, lineno: usize) -> Result<Vec<T>> {
    let fields: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse::<T>().map_err(|_| Error::Parse(format!("{what} line {lineno}: bad field '{f}'"))))
        .collect::<Result<_>>()?;
    if fields.len() != n {
        return Err(Error::Parse(format!("{what} line {lineno}: expected {n} fields, got {}", fields.len())));
    }
    Ok(fields)
}

/// Reads files written by [`write_mesh_text`]. Boundary flags are recomputed
/// from connectivity and must agree with the stored ones.
pub fn read_mesh_text<N: BufRead, E: BufRead>(nodes: N, elements: E, level: u32) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut flags = Vec::new();
    for (n, line) in nodes.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = parse_fields(&line, 3, "node", n + 1)?;
        vertices.push([f[0], f[1]]);
        flags.push(f[2] != 0.0);
    }
    let mut triangles = Vec::new();
    for (n, line) in elements.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<usize> = parse_fields(&line, 3, "element", n + 1)?;
        triangles.push([f[0], f[1], f[2]]);
    }
    let mesh = TriMesh::from_parts(vertices, triangles, level)?;
    if mesh.boundary_flags() != flags.as_slice() {
        return Err(Error::Parse("stored boundary flags disagree with the connectivity".into()));
    }
    Ok(mesh)
}

/// Legacy VTK ASCII unstructured grid with named point-data fields.
pub fn write_vtk<W: Write>(mesh: &TriMesh, title: &str, fields: &[(&str, &[f64])], mut out: W) -> Result<()> {
    let n = mesh.num_vertices();
    for (name, values) in fields {
        if values.len() != n {
            return Err(Error::Index(format!("field '{name}' has {} values for {n} vertices", values.len())));
        }
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(Error::Data(format!("invalid VTK field name '{name}'")));
        }
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for x in mesh.vertices() {
        writeln!(out, "{} {} 0", x[0], x[1])?;
    }
    let nt = mesh.num_triangles();
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {n}")?;
        for (name, values) in fields {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

pub const SOLUTION_CSV_HEADER: &str = "x,y,p_h,y_h,u_h";

/// One line per vertex: coordinates, adjoint, state and control.
pub fn write_solution_csv<W: Write>(mesh: &TriMesh, sol: &SolutionPair, mut out: W) -> Result<()> {
    let n = mesh.num_vertices();
    if sol.p_bar.len() != n || sol.y_bar.len() != n || sol.u_bar.len() != n {
        return Err(Error::Index(format!("solution does not match {n} vertices")));
    }
    writeln!(out, "{SOLUTION_CSV_HEADER}")?;
    for (i, x) in mesh.vertices().iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", x[0], x[1], sol.p_bar[i], sol.y_bar[i], sol.u_bar[i])?;
    }
    Ok(())
}
