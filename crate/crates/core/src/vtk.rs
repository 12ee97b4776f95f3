//! Legacy ASCII VTK output for nodal fields (`DATASET UNSTRUCTURED_GRID`,
//! triangles as cell type 5). Values are written with 17 significant digits
//! so a read-back reproduces them exactly.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

const VTK_TRIANGLE: u32 = 5;

/// Writes `mesh` with the given point scalars.
pub fn write_vtk<W: Write>(mut out: W, mesh: &TriMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<()> {
    let n = mesh.n_vertices();
    for (name, values) in fields {
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: values.len() });
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("invalid VTK field name '{name}'")));
        }
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for p in mesh.vertices() {
        writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1])?;
    }
    let nt = mesh.n_triangles();
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "{VTK_TRIANGLE}")?;
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {n}")?;
        for (name, values) in fields {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    Ok(())
}

/// Contents of a file produced by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Reads the subset of the legacy format that [`write_vtk`] emits.
pub fn read_vtk<R: BufRead>(input: R) -> Result<VtkData> {
    let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
    let mut next = |what: &str| it.next().ok_or_else(|| Error::Parse(format!("unexpected end of VTK file, expected {what}")));

    if !next("header")?.starts_with("# vtk DataFile") {
        return Err(Error::Parse("missing VTK header".into()));
    }
    let title = next("title")?.to_string();
    if next("format")? != "ASCII" {
        return Err(Error::Parse("only ASCII VTK is supported".into()));
    }
    if next("dataset")? != "DATASET UNSTRUCTURED_GRID" {
        return Err(Error::Parse("expected DATASET UNSTRUCTURED_GRID".into()));
    }
    let n = keyword_count(next("POINTS")?, "POINTS")?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let xyz = parse_floats(next("point")?)?;
        if xyz.len() != 3 {
            return Err(Error::Parse("point needs three coordinates".into()));
        }
        points.push([xyz[0], xyz[1]]);
    }
    let nt = keyword_count(next("CELLS")?, "CELLS")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let ids: Vec<usize> = next("cell")?
            .split_whitespace()
            .map(|s| s.parse().map_err(|e| Error::Parse(format!("cell index: {e}"))))
            .collect::<Result<_>>()?;
        if ids.len() != 4 || ids[0] != 3 {
            return Err(Error::Parse("only triangle cells are supported".into()));
        }
        triangles.push([ids[1], ids[2], ids[3]]);
    }
    if keyword_count(next("CELL_TYPES")?, "CELL_TYPES")? != nt {
        return Err(Error::Parse("CELL_TYPES count differs from CELLS".into()));
    }
    for _ in 0..nt {
        if next("cell type")? != "5" {
            return Err(Error::Parse("only cell type 5 is supported".into()));
        }
    }
    let mut scalars = Vec::new();
    if let Ok(line) = next("POINT_DATA") {
        if keyword_count(line, "POINT_DATA")? != n {
            return Err(Error::Parse("POINT_DATA count differs from POINTS".into()));
        }
        while let Ok(line) = next("SCALARS") {
            let mut parts = line.split_whitespace();
            if parts.next() != Some("SCALARS") {
                return Err(Error::Parse(format!("expected SCALARS, found '{line}'")));
            }
            let name = parts.next().ok_or_else(|| Error::Parse("SCALARS without a name".into()))?.to_string();
            if next("LOOKUP_TABLE")? != "LOOKUP_TABLE default" {
                return Err(Error::Parse("expected LOOKUP_TABLE default".into()));
            }
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(parse_floats(next("scalar")?)?[0]);
            }
            scalars.push((name, values));
        }
    }
    Ok(VtkData { title, points, triangles, scalars })
}

fn keyword_count(line: &str, keyword: &str) -> Result<usize> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(Error::Parse(format!("expected {keyword}, found '{line}'")));
    }
    parts
        .next()
        .ok_or_else(|| Error::Parse(format!("{keyword} without a count")))?
        .parse()
        .map_err(|e| Error::Parse(format!("{keyword} count: {e}")))
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("number '{s}': {e}"))))
        .collect()
}
