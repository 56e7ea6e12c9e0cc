//! The `compare` subcommand: side-by-side view of two run directories.

use std::collections::BTreeMap;
use std::path::Path;

use crate::manifest::RunManifest;

/// Parses a one-row CSV (header line plus value line) into a name map.
fn parse_single_row_csv(text: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    let values = lines.next().ok_or("csv missing value row")?;
    let mut map = BTreeMap::new();
    for (name, value) in header.split(',').zip(values.split(',')) {
        let parsed: f64 = value
            .parse()
            .map_err(|e| format!("bad value for {name}: {e}"))?;
        map.insert(name.to_string(), parsed);
    }
    Ok(map)
}

/// Parses a per-step summary CSV into (header, rows).
fn parse_table_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty csv")?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| format!("bad row: {e}"))?);
    }
    Ok((header, rows))
}

pub fn run(dir_a: &Path, dir_b: &Path) -> Result<(), String> {
    let manifest_a = RunManifest::load(dir_a)?;
    let manifest_b = RunManifest::load(dir_b)?;
    let overall_a = parse_single_row_csv(
        &std::fs::read_to_string(dir_a.join(&manifest_a.overall)).map_err(|e| e.to_string())?,
    )?;
    let overall_b = parse_single_row_csv(
        &std::fs::read_to_string(dir_b.join(&manifest_b.overall)).map_err(|e| e.to_string())?,
    )?;

    println!(
        "comparison: A = {} ({}), B = {} ({})",
        dir_a.display(),
        manifest_a.filter,
        dir_b.display(),
        manifest_b.filter
    );
    println!("{:<28}{:>14}{:>14}{:>14}", "metric", "A", "B", "B - A");
    let metrics = [
        "pos_rmse",
        "heading_rmse_deg",
        "bias_rmse",
        "reported_std_x",
        "reported_std_y",
        "reported_std_heading_deg",
        "reported_std_bias",
        "empirical_std_x",
        "empirical_std_y",
        "mean_iplf_iters",
        "mean_predict_ms",
        "mean_update_ms",
        "mean_step_ms",
        "final10_gospa_va",
        "final10_gospa_sp",
    ];
    for name in metrics {
        let a = overall_a.get(name).copied().unwrap_or(f64::NAN);
        let b = overall_b.get(name).copied().unwrap_or(f64::NAN);
        println!("{name:<28}{a:>14.5}{b:>14.5}{:>14.5}", b - a);
    }

    // Side-by-side mean GOSPA curves as CSV.
    let (header_a, rows_a) = parse_table_csv(
        &std::fs::read_to_string(dir_a.join(&manifest_a.summary)).map_err(|e| e.to_string())?,
    )?;
    let (_, rows_b) = parse_table_csv(
        &std::fs::read_to_string(dir_b.join(&manifest_b.summary)).map_err(|e| e.to_string())?,
    )?;
    let col = |name: &str| header_a.iter().position(|h| h == name);
    let (Some(c_step), Some(c_va), Some(c_sp)) =
        (col("step"), col("gospa_va"), col("gospa_sp"))
    else {
        return Err("summary csv missing expected columns".to_string());
    };
    println!();
    println!("step,gospa_va_a,gospa_va_b,gospa_sp_a,gospa_sp_b");
    for (ra, rb) in rows_a.iter().zip(&rows_b) {
        println!(
            "{},{},{},{},{}",
            ra[c_step], ra[c_va], rb[c_va], ra[c_sp], rb[c_sp]
        );
    }
    Ok(())
}
