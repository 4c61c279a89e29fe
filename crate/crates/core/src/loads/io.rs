//! CSV and JSON persistence of load matrices, models and profile sets.
//!
//! CSV files start with `# key=value` metadata lines followed by a header
//! row and one data row per segment or bus.

use std::collections::HashMap;
use std::io::{BufReader, Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CoefficientDist, LoadError, LoadMatrix, SyntheticLoadSet, TemporalBasisModel, VoltageClass};

fn io_err(e: impl std::fmt::Display) -> LoadError {
    LoadError::Io(e.to_string())
}

fn write_rows<W: Write>(
    mut out: W,
    meta: &[(&str, String)],
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), LoadError> {
    for (k, v) in meta {
        writeln!(out, "# {k}={v}").map_err(io_err)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(io_err)?;
    for r in rows {
        w.write_record(&r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_rows<R: Read>(input: R) -> Result<(HashMap<String, String>, Vec<csv::StringRecord>), LoadError> {
    let mut reader = BufReader::new(input);
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(io_err)?;
    let mut meta = HashMap::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else {
            break;
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(io_err)?;
    Ok((meta, rows))
}

fn meta_f64(meta: &HashMap<String, String>, key: &str) -> Result<f64, LoadError> {
    meta.get(key).ok_or_else(|| io_err(format!("missing `{key}` header")))?.parse().map_err(io_err)
}

fn sample_header(first: &str, leading: &[&str], samples: usize) -> Vec<String> {
    let mut h: Vec<String> = std::iter::once(first).chain(leading.iter().copied()).map(String::from).collect();
    h.extend((0..samples).map(|t| format!("s{t}")));
    h
}

pub fn write_load_matrix_csv<W: Write>(m: &LoadMatrix, out: W) -> Result<(), LoadError> {
    let meta = [("sample_rate_hz", m.sample_rate_hz.to_string()), ("segment_length", m.segment_length.to_string())];
    let rows = (0..m.p.nrows())
        .map(|r| std::iter::once(r.to_string()).chain(m.p.row(r).iter().map(|v| v.to_string())).collect());
    write_rows(out, &meta, sample_header("segment", &[], m.p.ncols()), rows)
}

pub fn read_load_matrix_csv<R: Read>(input: R) -> Result<LoadMatrix, LoadError> {
    let (meta, rows) = read_rows(input)?;
    let sample_rate_hz = meta_f64(&meta, "sample_rate_hz")?;
    let segment_length = meta_f64(&meta, "segment_length")? as usize;
    let data = parse_matrix(&rows, 1, segment_length)?;
    Ok(LoadMatrix { p: data, segment_length, sample_rate_hz })
}

fn parse_matrix(rows: &[csv::StringRecord], skip: usize, cols: usize) -> Result<DMatrix<f64>, LoadError> {
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != skip + cols {
            return Err(io_err(format!("row {r} has {} fields, expected {}", rec.len(), skip + cols)));
        }
        for c in 0..cols {
            m[(r, c)] = rec[skip + c].parse().map_err(io_err)?;
        }
    }
    Ok(m)
}

pub fn write_load_set_csv<W: Write>(set: &SyntheticLoadSet, bus_ids: &[usize], out: W) -> Result<(), LoadError> {
    let meta = [("sample_rate_hz", set.sample_rate_hz.to_string()), ("seed", set.seed.to_string())];
    let rows = (0..set.p_new.nrows()).map(|b| {
        let class = match set.voltage_class[b] {
            VoltageClass::High => "high",
            VoltageClass::Low => "low",
        };
        [bus_ids[b].to_string(), class.to_string()]
            .into_iter()
            .chain(set.p_new.row(b).iter().map(|v| v.to_string()))
            .collect()
    });
    write_rows(out, &meta, sample_header("bus", &["voltage_class"], set.p_new.ncols()), rows)
}

/// Returns the profile set and the bus ids in file order.
pub fn read_load_set_csv<R: Read>(input: R) -> Result<(SyntheticLoadSet, Vec<usize>), LoadError> {
    let (meta, rows) = read_rows(input)?;
    let sample_rate_hz = meta_f64(&meta, "sample_rate_hz")?;
    let seed = meta.get("seed").map(|s| s.parse::<u64>()).transpose().map_err(io_err)?.unwrap_or(0);
    let cols = rows.first().map(|r| r.len().saturating_sub(2)).unwrap_or(0);
    let p_new = parse_matrix(&rows, 2, cols)?;
    let mut ids = Vec::new();
    let mut classes = Vec::new();
    for rec in &rows {
        ids.push(rec[0].parse().map_err(io_err)?);
        classes.push(match &rec[1] {
            "high" => VoltageClass::High,
            "low" => VoltageClass::Low,
            other => return Err(io_err(format!("unknown voltage class `{other}`"))),
        });
    }
    Ok((SyntheticLoadSet { p_new, seed, voltage_class: classes, sample_rate_hz }, ids))
}

/// JSON form of a [`TemporalBasisModel`]; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub sample_rate_hz: f64,
    pub rank_used: usize,
    pub u: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub vt: Vec<Vec<f64>>,
    pub coeff_dists: Vec<CoefficientDist>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, LoadError> {
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != c) {
        return Err(io_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

impl From<&TemporalBasisModel> for ModelFile {
    fn from(m: &TemporalBasisModel) -> Self {
        ModelFile {
            sample_rate_hz: m.sample_rate_hz,
            rank_used: m.rank_used,
            u: rows_of(&m.u),
            s: m.s.clone(),
            vt: rows_of(&m.vt),
            coeff_dists: m.coeff_dists.clone(),
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<TemporalBasisModel, LoadError> {
        let u = matrix_of(&self.u)?;
        let vt = matrix_of(&self.vt)?;
        if u.ncols() != self.s.len() || vt.nrows() != self.s.len() || self.coeff_dists.len() != self.rank_used {
            return Err(io_err("model dimensions disagree"));
        }
        Ok(TemporalBasisModel {
            u,
            s: self.s,
            vt,
            rank_used: self.rank_used,
            coeff_dists: self.coeff_dists,
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_matrix_round_trip() {
        let m = LoadMatrix { p: DMatrix::from_fn(3, 4, |i, j| 1.0 + i as f64 * 0.1 + j as f64 / 7.0), segment_length: 4, sample_rate_hz: 30.0 };
        let mut buf = Vec::new();
        write_load_matrix_csv(&m, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# sample_rate_hz=30\n"));
        assert_eq!(read_load_matrix_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn load_set_round_trip() {
        let set = SyntheticLoadSet {
            p_new: DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 + 0.25),
            seed: 11,
            voltage_class: vec![VoltageClass::High, VoltageClass::Low],
            sample_rate_hz: 30.0,
        };
        let mut buf = Vec::new();
        write_load_set_csv(&set, &[5, 9], &mut buf).unwrap();
        let (back, ids) = read_load_set_csv(buf.as_slice()).unwrap();
        assert_eq!(back, set);
        assert_eq!(ids, vec![5, 9]);
    }
}
