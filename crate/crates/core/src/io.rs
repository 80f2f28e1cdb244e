//! Binary/JSON/CSV persistence of trajectories, bases, operators and reports.
//!
//! Matrices are stored as raw little-endian `f64` in column-major order with
//! a JSON sidecar carrying shapes and metadata.

use std::fs;
use std::path::{Component, Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::ErrorReport;
use crate::monolithic::Trajectory;
use crate::newmark::KinematicState;
use crate::opinf::RomOperators;
use crate::pod::{PodBasis, Truncation};
use crate::transmission::Side;

pub const BINARY_LAYOUT: &str = "f64-le column-major";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_f64_bin(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * data.len());
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_bin(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 8 * expected_len {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {} values",
            path.display(),
            bytes.len(),
            expected_len
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// A matrix stored next to its sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

impl MatrixFile {
    pub fn write(dir: &Path, file: &str, m: &DMatrix<f64>) -> Result<Self> {
        let path = dir.join(file);
        write_f64_bin(&path, m.as_slice())?;
        Ok(Self {
            file: file.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            sha256: file_sha256(&path)?,
        })
    }

    pub fn read(&self, dir: &Path) -> Result<DMatrix<f64>> {
        let data = read_f64_bin(&dir.join(&self.file), self.rows * self.cols)?;
        Ok(DMatrix::from_vec(self.rows, self.cols, data))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn stem_file(sidecar: &Path, suffix: &str) -> Result<String> {
    let stem = sidecar
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Format(format!("bad sidecar name {}", sidecar.display())))?;
    Ok(format!("{stem}_{suffix}.bin"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub layout: String,
    pub n_nodes: usize,
    pub n_states: usize,
    pub times: Vec<f64>,
    pub interface_node: usize,
    pub interface_disp: Vec<f64>,
    pub traction_left: Vec<f64>,
    pub traction_right: Vec<f64>,
    pub u: MatrixFile,
    pub v: MatrixFile,
    pub a: MatrixFile,
    pub config_hash: String,
}

/// Writes `<stem>_{u,v,a}.bin` next to the sidecar `path` (`<stem>.json`).
pub fn save_trajectory(path: &Path, traj: &Trajectory, config_hash: &str) -> Result<Vec<PathBuf>> {
    let dir = parent_dir(path);
    let sidecar = TrajectorySidecar {
        layout: BINARY_LAYOUT.into(),
        n_nodes: traj.n_nodes(),
        n_states: traj.n_states(),
        times: traj.times.clone(),
        interface_node: traj.interface_node,
        interface_disp: traj.interface_disp.clone(),
        traction_left: traj.traction_left.clone(),
        traction_right: traj.traction_right.clone(),
        u: MatrixFile::write(dir, &stem_file(path, "u")?, &traj.u)?,
        v: MatrixFile::write(dir, &stem_file(path, "v")?, &traj.v)?,
        a: MatrixFile::write(dir, &stem_file(path, "a")?, &traj.a)?,
        config_hash: config_hash.into(),
    };
    write_json(path, &sidecar)?;
    Ok(vec![
        dir.join(&sidecar.u.file),
        dir.join(&sidecar.v.file),
        dir.join(&sidecar.a.file),
        path.to_path_buf(),
    ])
}

pub fn load_trajectory(path: &Path) -> Result<(Trajectory, TrajectorySidecar)> {
    let sidecar: TrajectorySidecar = read_json(path)?;
    if sidecar.layout != BINARY_LAYOUT {
        return Err(Error::Format(format!("unsupported layout {:?}", sidecar.layout)));
    }
    let dir = parent_dir(path);
    let (u, v, a) = (sidecar.u.read(dir)?, sidecar.v.read(dir)?, sidecar.a.read(dir)?);
    let n = sidecar.n_states;
    let shapes_ok = [&u, &v, &a].iter().all(|m| m.shape() == (sidecar.n_nodes, n))
        && [&sidecar.times, &sidecar.interface_disp, &sidecar.traction_left, &sidecar.traction_right]
            .iter()
            .all(|s| s.len() == n);
    if !shapes_ok {
        return Err(Error::Format(format!("{} is inconsistent with its data", path.display())));
    }
    let traj = Trajectory {
        times: sidecar.times.clone(),
        u,
        v,
        a,
        interface_disp: sidecar.interface_disp.clone(),
        traction_left: sidecar.traction_left.clone(),
        traction_right: sidecar.traction_right.clone(),
        interface_node: sidecar.interface_node,
    };
    Ok((traj, sidecar))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisSidecar {
    pub layout: String,
    #[serde(rename = "N")]
    pub n_rows: usize,
    pub r: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub captured_energy: f64,
    pub energy_target: Option<f64>,
    pub truncation: Truncation,
    pub side: Side,
    pub phi: MatrixFile,
    pub source_trajectory_hash: String,
}

/// Writes `<stem>_phi.bin` next to the sidecar `path`.
pub fn save_basis(path: &Path, basis: &PodBasis, side: Side, source_hash: &str) -> Result<Vec<PathBuf>> {
    let dir = parent_dir(path);
    let sidecar = BasisSidecar {
        layout: BINARY_LAYOUT.into(),
        n_rows: basis.n_rows(),
        r: basis.n_modes(),
        rank: basis.rank,
        singular_values: basis.singular_values.clone(),
        captured_energy: basis.captured_energy,
        energy_target: match basis.truncation {
            Truncation::Energy(e) => Some(e),
            Truncation::Modes(_) => None,
        },
        truncation: basis.truncation,
        side,
        phi: MatrixFile::write(dir, &stem_file(path, "phi")?, &basis.phi)?,
        source_trajectory_hash: source_hash.into(),
    };
    write_json(path, &sidecar)?;
    Ok(vec![dir.join(&sidecar.phi.file), path.to_path_buf()])
}

pub fn load_basis(path: &Path) -> Result<(PodBasis, BasisSidecar)> {
    let sidecar: BasisSidecar = read_json(path)?;
    let phi = sidecar.phi.read(parent_dir(path))?;
    if phi.shape() != (sidecar.n_rows, sidecar.r) {
        return Err(Error::Format(format!("{} is inconsistent with its data", path.display())));
    }
    let basis = PodBasis {
        phi,
        singular_values: sidecar.singular_values.clone(),
        rank: sidecar.rank,
        captured_energy: sidecar.captured_energy,
        truncation: sidecar.truncation,
    };
    Ok((basis, sidecar))
}

pub fn save_operators(path: &Path, ops: &RomOperators) -> Result<()> {
    fs::write(path, ops.to_json()? + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_operators(path: &Path) -> Result<RomOperators> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RomOperators::from_json(&text)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledSidecar {
    pub layout: String,
    pub step_indices: Vec<usize>,
    pub times: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Per subdomain: u, v and a with one column per recorded state.
    pub subdomains: Vec<[MatrixFile; 3]>,
    pub config_hash: String,
}

/// Recorded converged states of both subdomains, written as
/// `<stem>_sub{1,2}_{u,v,a}.bin`.
pub fn save_coupled_states(
    path: &Path,
    states: &[(usize, [KinematicState; 2])],
    iterations: &[usize],
    config_hash: &str,
) -> Result<Vec<PathBuf>> {
    let dir = parent_dir(path);
    let mut written = Vec::new();
    let mut subdomains = Vec::new();
    for sub in 0..2 {
        let n = states.first().map_or(0, |s| s.1[sub].len());
        let field = |f: fn(&KinematicState) -> &nalgebra::DVector<f64>| {
            DMatrix::from_fn(n, states.len(), |i, k| f(&states[k].1[sub])[i])
        };
        let mut files = Vec::new();
        for (name, m) in [("u", field(|s| &s.u)), ("v", field(|s| &s.v)), ("a", field(|s| &s.a))] {
            let mf = MatrixFile::write(dir, &stem_file(path, &format!("sub{}_{name}", sub + 1))?, &m)?;
            written.push(dir.join(&mf.file));
            files.push(mf);
        }
        let [u, v, a]: [MatrixFile; 3] = files.try_into().expect("three fields");
        subdomains.push([u, v, a]);
    }
    let sidecar = CoupledSidecar {
        layout: BINARY_LAYOUT.into(),
        step_indices: states.iter().map(|s| s.0).collect(),
        times: states.iter().map(|s| s.1[0].t).collect(),
        iterations: iterations.to_vec(),
        subdomains,
        config_hash: config_hash.into(),
    };
    write_json(path, &sidecar)?;
    written.push(path.to_path_buf());
    Ok(written)
}

#[derive(Debug, Serialize, Deserialize)]
struct IterationRow {
    step_index: usize,
    time_s: f64,
    iterations: usize,
}

/// One row per window, indexed by the state the window produces.
pub fn write_iterations_csv(path: &Path, times: &[f64], iterations: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (n, &it) in iterations.iter().enumerate() {
        w.serialize(IterationRow {
            step_index: n + 1,
            time_s: times.get(n + 1).copied().unwrap_or(f64::NAN),
            iterations: it,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorRow {
    pub step_index: usize,
    pub time_s: f64,
    pub eps_sub1: f64,
    pub eps_sub2: f64,
    pub eps_total: f64,
}

pub fn write_errors_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for k in 0..report.n_states() {
        w.serialize(ErrorRow {
            step_index: k,
            time_s: report.times[k],
            eps_sub1: report.per_subdomain[0][k],
            eps_sub2: report.per_subdomain[1][k],
            eps_total: report.total(k),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_path: Option<String>,
    pub config_hash: Option<String>,
    pub output_dir: String,
    pub preset: Option<String>,
    pub determinism: String,
    pub files: Vec<FileEntry>,
}

pub const DETERMINISM_NOTE: &str =
    "no random seeds; numeric outputs are bit-identical when re-run with the same command and config on the same platform";

/// Output directory that tracks every file written below it.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of `rel` inside the directory, creating parent directories.
    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        let relative = Path::new(rel);
        if !relative.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(Error::InvalidConfig(format!("{rel} escapes the output directory")));
        }
        let full = self.root.join(relative);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(full)
    }

    /// Marks files as produced by this run.
    pub fn record<I: IntoIterator<Item = PathBuf>>(&mut self, paths: I) {
        for p in paths {
            if !self.files.contains(&p) {
                self.files.push(p);
            }
        }
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(rel)?;
        write_json(&path, value)?;
        self.record([path.clone()]);
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(rel)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record([path.clone()]);
        Ok(path)
    }

    /// Hashes every recorded file and writes `manifest.json` last.
    pub fn finish(
        self,
        command: Vec<String>,
        config_path: Option<String>,
        config_hash: Option<String>,
        preset: Option<String>,
    ) -> Result<RunManifest> {
        let mut files = Vec::with_capacity(self.files.len());
        for p in &self.files {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            files.push(FileEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command,
            config_path,
            config_hash,
            output_dir: self.root.to_string_lossy().into_owned(),
            preset,
            determinism: DETERMINISM_NOTE.into(),
            files,
        };
        write_json(&self.root.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) * (j as f64 - 1.7).exp());
        let mf = MatrixFile::write(dir.path(), "m.bin", &m).unwrap();
        assert_eq!(fs::metadata(dir.path().join("m.bin")).unwrap().len(), 96);
        assert_eq!(mf.read(dir.path()).unwrap(), m);
        let raw = read_f64_bin(&dir.path().join("m.bin"), 12).unwrap();
        assert_eq!(raw[1], m[(1, 0)]);
        assert!(read_f64_bin(&dir.path().join("m.bin"), 11).is_err());
    }

    #[test]
    fn artifact_paths_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        let out = ArtifactDir::create(dir.path()).unwrap();
        assert!(out.path("../x.json").is_err());
        assert!(out.path("/abs.json").is_err());
        assert!(out.path("sub/x.json").unwrap().starts_with(dir.path()));
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = ArtifactDir::create(dir.path()).unwrap();
        out.write_text("a.txt", "abc").unwrap();
        let m = out.finish(vec!["x".into()], None, None, None).unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(
            m.files[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(dir.path().join("manifest.json").exists());
    }
}
