//! CSV and JSON files. Numbers are written in shortest round-trip form so
//! reruns can be compared byte for byte; every write goes through a temp file
//! in the target directory and a rename.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::laplacian::{KernelParams, LaplacianResponse, ProbeDirection};
use crate::manifold::{PointCloud, Scene};
use crate::zeroset::Paving;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn coord_header(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("{prefix}{i}")).collect()
}

/// Header `x0,…,x{N−1}` plus `label` when the cloud carries piece labels.
pub fn cloud_to_csv(cloud: &PointCloud) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = coord_header("x", cloud.dim);
    if cloud.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, p) in cloud.rows().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        if let Some(l) = &cloud.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("line {line}: '{s}' is not a number")))
}

pub fn cloud_from_csv(text: &str) -> Result<PointCloud> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let dim = header.len() - usize::from(has_label);
    if dim == 0 {
        return Err(Error::Parse("point cloud CSV needs at least one coordinate column".into()));
    }
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for j in 0..dim {
            pts.push(parse_f64(&rec[j], i + 2)?);
        }
        if has_label {
            labels.push(rec[dim].trim().parse().map_err(|_| Error::Parse(format!("line {}: bad label", i + 2)))?);
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut cloud = PointCloud::new(dim, pts)?;
    if has_label {
        cloud.labels = Some(labels);
    }
    Ok(cloud)
}

/// Header `x0,…,x{N−1},value`.
pub fn response_to_csv(resp: &LaplacianResponse) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = coord_header("x", resp.eval_points.dim);
    header.push("value".into());
    w.write_record(&header)?;
    for (p, v) in resp.eval_points.rows().zip(&resp.values) {
        let mut rec: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        rec.push(v.to_string());
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Inverse of [`response_to_csv`]; the bandwidth and direction are not stored
/// in the CSV and must be supplied.
pub fn response_from_csv(text: &str, t: f64, direction: ProbeDirection) -> Result<LaplacianResponse> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().next_back() != Some("value") || header.len() < 2 {
        return Err(Error::Parse("response CSV needs coordinate columns followed by 'value'".into()));
    }
    let dim = header.len() - 1;
    let mut pts = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for j in 0..dim {
            pts.push(parse_f64(&rec[j], i + 2)?);
        }
        values.push(parse_f64(&rec[dim], i + 2)?);
    }
    if values.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(LaplacianResponse { eval_points: PointCloud::new(dim, pts)?, values, params: KernelParams::new(t)?, direction })
}

/// One row per accepted box: `lo0,hi0,lo1,hi1,…`.
pub fn paving_to_csv(paving: &Paving) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let dim = paving.accepted.first().map_or(0, |b| b.dim());
    let header: Vec<String> = (0..dim).flat_map(|i| [format!("lo{i}"), format!("hi{i}")]).collect();
    w.write_record(&header)?;
    for b in &paving.accepted {
        w.write_record(b.intervals.iter().flat_map(|i| [i.lo.to_string(), i.hi.to_string()]))?;
    }
    finish(w)
}

/// SHA-256 of the scene's canonical JSON.
pub fn scene_hash(scene: &Scene) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(scene)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_round_trip_is_exact() {
        let mut c = PointCloud::new(2, vec![0.1, -1e-300, 1.0 / 3.0, 5e17]).unwrap();
        c.labels = Some(vec![0, 1]);
        let text = cloud_to_csv(&c).unwrap();
        assert!(text.starts_with("x0,x1,label\n"));
        let back = cloud_from_csv(&text).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.labels, c.labels);
        assert_eq!(cloud_to_csv(&back).unwrap(), text);
    }

    #[test]
    fn response_round_trip() {
        let resp = LaplacianResponse {
            eval_points: PointCloud::new(3, vec![0.0, 0.1, 0.2, 1.0, 1.1, 1.2]).unwrap(),
            values: vec![-0.25, 3.5e-7],
            params: KernelParams::new(0.01).unwrap(),
            direction: ProbeDirection::axis(3, 2),
        };
        let back = response_from_csv(&response_to_csv(&resp).unwrap(), 0.01, ProbeDirection::axis(3, 2)).unwrap();
        assert_eq!(back, resp);
    }

    #[test]
    fn bad_numbers_are_parse_errors() {
        assert!(matches!(cloud_from_csv("x0,x1\n1,abc\n"), Err(Error::Parse(_))));
        assert!(matches!(cloud_from_csv("x0\n"), Err(Error::EmptyCloud)));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_json_atomic(&p, &vec![1, 2]).unwrap();
        write_json_atomic(&p, &vec![3]).unwrap();
        let v: Vec<i32> = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!(v, vec![3]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn scene_hash_is_stable_and_sensitive() {
        let a = Scene::flat_plane(3, 2, 1.0).unwrap();
        let b = Scene::flat_plane(3, 2, 1.5).unwrap();
        assert_eq!(scene_hash(&a).unwrap(), scene_hash(&a.clone()).unwrap());
        assert_ne!(scene_hash(&a).unwrap(), scene_hash(&b).unwrap());
        assert_eq!(scene_hash(&a).unwrap().len(), 64);
    }
}
