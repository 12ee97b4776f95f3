//! On-disk trajectories: one legacy VTK file per time level plus a JSON
//! manifest tying the files to a mesh checksum and a time grid.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::fem::NodalField;
use crate::forward::{TimeSeriesField, Trajectory};
use crate::inverse::ObservedData;
use crate::mesh::TriMesh;
use crate::vtk::{read_vtk, write_vtk};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEntry {
    pub level: usize,
    pub t: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dt: f64,
    pub t_end: f64,
    pub mesh_checksum: String,
    pub n_vertices: usize,
    /// Field names present in every file.
    pub fields: Vec<String>,
    pub files: Vec<SnapshotEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes one VTK file to `path` with the given point scalars.
pub fn write_snapshot(path: &Path, mesh: &TriMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_vtk(&mut out, mesh, title, fields).with_context(|| format!("writing {}", path.display()))?;
    out.flush().with_context(|| format!("writing {}", path.display()))
}

fn level_file(level: usize) -> String {
    format!("level_{level:05}.vtk")
}

/// Named series written level by level.
type Columns<'a> = [(&'a str, &'a TimeSeriesField)];

fn save_series(
    dir: &Path,
    mesh: &TriMesh,
    series: &Columns<'_>,
    levels: &[(usize, String)],
    delta: Option<f64>,
    seed: Option<u64>,
) -> Result<Manifest> {
    create_dir(dir)?;
    let first = series[0].1;
    for (_, s) in series {
        first.check_compatible(s)?;
        if s.mesh_id() != mesh.id() {
            return Err(Error::MeshMismatch { expected: mesh.id(), found: s.mesh_id() });
        }
    }
    let mut files = Vec::with_capacity(levels.len());
    for (n, file) in levels.iter().cloned() {
        let t = n as f64 * first.dt();
        let fields: Vec<(&str, &[f64])> = series.iter().map(|(name, s)| (*name, s.field(n).values())).collect();
        write_snapshot(&dir.join(&file), mesh, &format!("level {n} t={t}"), &fields)?;
        files.push(SnapshotEntry { level: n, t, file });
    }
    let manifest = Manifest {
        dt: first.dt(),
        t_end: first.t_end(),
        mesh_checksum: mesh.checksum().to_string(),
        n_vertices: mesh.n_vertices(),
        fields: series.iter().map(|(name, _)| name.to_string()).collect(),
        files,
        delta,
        seed,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Reads every level listed in the manifest, rebuilding the mesh from the
/// first file and checking it against the stored checksum.
fn load_series(dir: &Path) -> Result<(Manifest, TriMesh, Vec<TimeSeriesField>)> {
    let manifest = Manifest::read(dir)?;
    if manifest.files.is_empty() {
        return Err(Error::Parse(format!("{}: manifest lists no files", dir.display())));
    }
    let mut mesh: Option<TriMesh> = None;
    let mut columns: Vec<Vec<NodalField>> = vec![Vec::with_capacity(manifest.files.len()); manifest.fields.len()];
    for (k, entry) in manifest.files.iter().enumerate() {
        if entry.level != k {
            return Err(Error::Parse(format!("manifest entry {k} has level {}", entry.level)));
        }
        let path = dir.join(&entry.file);
        let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let data = read_vtk(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        let mesh = match &mesh {
            Some(m) => {
                if data.points != m.vertices() || data.triangles != m.triangles() {
                    return Err(Error::InvalidMesh(format!("{} uses a different mesh", path.display())));
                }
                m
            }
            None => {
                let m = TriMesh::new(data.points.clone(), data.triangles.clone())?;
                if m.checksum() != manifest.mesh_checksum {
                    return Err(Error::InvalidMesh(format!(
                        "mesh checksum {} does not match manifest {}",
                        m.checksum(),
                        manifest.mesh_checksum
                    )));
                }
                mesh.insert(m)
            }
        };
        for (name, column) in manifest.fields.iter().zip(columns.iter_mut()) {
            let values = data.scalar(name).ok_or_else(|| Error::Parse(format!("{}: missing field '{name}'", path.display())))?;
            column.push(NodalField::new(mesh, values.to_vec())?);
        }
    }
    let series = columns.into_iter().map(|c| TimeSeriesField::new(manifest.dt, c)).collect::<Result<Vec<_>>>()?;
    if (series[0].t_end() - manifest.t_end).abs() > 1e-9 * manifest.t_end.max(1.0) {
        return Err(Error::GridMismatch(format!("manifest t_end {} but files span {}", manifest.t_end, series[0].t_end())));
    }
    Ok((manifest, mesh.expect("at least one file"), series))
}

fn all_levels(series: &TimeSeriesField) -> Vec<(usize, String)> {
    (0..series.len()).map(|n| (n, level_file(n))).collect()
}

/// Every level of `traj`, loadable with [`load_trajectory`].
pub fn save_trajectory(dir: &Path, mesh: &TriMesh, traj: &Trajectory) -> Result<Manifest> {
    save_series(dir, mesh, &[("rho", &traj.rho), ("c", &traj.c)], &all_levels(&traj.rho), None, None)
}

/// The levels at multiples of `every`, named by their time.
pub fn save_snapshots(dir: &Path, mesh: &TriMesh, traj: &Trajectory, every: f64) -> Result<Manifest> {
    let levels: Vec<(usize, String)> =
        traj.rho.sample_levels(every).into_iter().map(|(n, t)| (n, format!("snapshot_t{}.vtk", t.round() as i64))).collect();
    if levels.is_empty() {
        return Err(Error::GridMismatch(format!("no time level falls on a multiple of {every}")));
    }
    save_series(dir, mesh, &[("rho", &traj.rho), ("c", &traj.c)], &levels, None, None)
}

pub fn load_trajectory(dir: &Path) -> Result<(TriMesh, Trajectory)> {
    let (manifest, mesh, mut series) = load_series(dir)?;
    let pos = |name: &str| {
        manifest.fields.iter().position(|f| f == name).ok_or_else(|| Error::Parse(format!("trajectory has no field '{name}'")))
    };
    let (ir, ic) = (pos("rho")?, pos("c")?);
    let c = series[ic].clone();
    let rho = series.swap_remove(ir);
    Ok((mesh, Trajectory { rho, c }))
}

pub fn save_observed(dir: &Path, mesh: &TriMesh, data: &ObservedData) -> Result<Manifest> {
    save_series(dir, mesh, &[("rho", &data.rho_delta)], &all_levels(&data.rho_delta), Some(data.delta), Some(data.seed))
}

pub fn load_observed(dir: &Path) -> Result<(TriMesh, ObservedData)> {
    let (manifest, mesh, mut series) = load_series(dir)?;
    let ir = manifest.fields.iter().position(|f| f == "rho").ok_or_else(|| Error::Parse("observed data has no field 'rho'".into()))?;
    let delta = manifest.delta.ok_or_else(|| Error::Parse("manifest lacks delta".into()))?;
    let seed = manifest.seed.ok_or_else(|| Error::Parse("manifest lacks seed".into()))?;
    Ok((mesh, ObservedData { rho_delta: series.swap_remove(ir), delta, seed }))
}
