//! Plot-ready CSV bundles assembled from the files of a completed run.

use std::path::Path;

use fdi_core::Complex64;

use crate::config::ScenarioConfig;
use crate::pipeline::{Grid, OutDir};
use crate::BenchError;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, BenchError> {
    if !path.is_file() {
        return Err(BenchError::Config(format!("{} not found; run the `run` verb first", path.display())));
    }
    csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| BenchError::io(path, e))
}

fn records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), BenchError> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| BenchError::io(path, e))?.clone();
    let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(|e| BenchError::io(path, e))?;
    Ok((header, rows))
}

fn write(out: &mut OutDir, name: &str, header: &[String], rows: Vec<Vec<String>>) -> Result<(), BenchError> {
    let e = |e: csv::Error| BenchError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out.writer(name)?);
    w.write_record(header).map_err(e)?;
    for r in rows {
        w.write_record(&r).map_err(e)?;
    }
    w.flush().map_err(|e| BenchError::Io(e.to_string()))
}

/// Writes `plots/*.csv` under `run_dir`:
///
/// * `rmse_vs_rank.csv`: `f, rmse` of the high-voltage model,
/// * `load_profiles.csv`: two adjacent loaded buses,
/// * `measurement_traces.csv`: magnitude and angle of the first phasor,
/// * `residues_<strategy>.csv`: max-abs residue of every filter.
///
/// Returns the bundle file names.
pub fn emit_plot_data(cfg: &ScenarioConfig, run_dir: &Path) -> Result<Vec<String>, BenchError> {
    let grid = Grid::load(cfg)?;
    let mut out = OutDir::create(run_dir)?;

    let (_, rows) = records(&run_dir.join("rmse_vs_rank.csv"))?;
    let rmse = rows.iter().filter(|r| !r[1].is_empty()).map(|r| vec![r[0].to_string(), r[1].to_string()]).collect();
    write(&mut out, "plots/rmse_vs_rank.csv", &["f".into(), "rmse".into()], rmse)?;

    let (_, rows) = records(&run_dir.join("loads.csv"))?;
    let case = &grid.case;
    let pair = case
        .branches
        .iter()
        .find(|b| {
            let l = |id| case.bus_pos(id).map(|k| case.buses[k].load_mw > 0.0).unwrap_or(false);
            l(b.from_bus) && l(b.to_bus)
        })
        .map(|b| (b.from_bus, b.to_bus))
        .ok_or_else(|| BenchError::Config("no branch joins two loaded buses".into()))?;
    let find = |id: usize| rows.iter().find(|r| r[0] == id.to_string()).cloned();
    let (a, b) = (find(pair.0), find(pair.1));
    let (a, b) = a.zip(b).ok_or_else(|| BenchError::Config("loads.csv does not match the case".into()))?;
    let profiles = (2..a.len()).map(|k| vec![(k - 2).to_string(), a[k].to_string(), b[k].to_string()]).collect();
    write(&mut out, "plots/load_profiles.csv", &["sample".into(), format!("bus_{}", pair.0), format!("bus_{}", pair.1)], profiles)?;

    let mut r = reader(&run_dir.join("stream.csv"))?;
    let mut traces = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| BenchError::Io(e.to_string()))?;
        if &rec[1] == "0" {
            let z = Complex64::new(
                rec[2].parse().map_err(|e| BenchError::Io(format!("{e}")))?,
                rec[3].parse().map_err(|e| BenchError::Io(format!("{e}")))?,
            );
            traces.push(vec![rec[0].to_string(), z.norm().to_string(), z.arg().to_string()]);
        }
    }
    write(&mut out, "plots/measurement_traces.csv", &["sample".into(), "magnitude".into(), "angle_rad".into()], traces)?;

    let (header, rows) = records(&run_dir.join("residue_traces.csv"))?;
    let strategy = serde_json::to_value(cfg.attacker.strategy).expect("strategy serialises");
    let name = format!("plots/residues_{}.csv", strategy.as_str().unwrap_or("run"));
    let header: Vec<String> = header.iter().map(String::from).collect();
    write(&mut out, &name, &header, rows.iter().map(|r| r.iter().map(String::from).collect()).collect())?;

    Ok(vec![
        "plots/rmse_vs_rank.csv".into(),
        "plots/load_profiles.csv".into(),
        "plots/measurement_traces.csv".into(),
        name,
    ])
}
