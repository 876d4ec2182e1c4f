//! Rendering and writing of results (CSV or JSON, file or stdout).

use crate::manifest::Manifest;
use crate::{CliError, CliResult, RunArgs};
use cfim::analysis::ComparisonRow;
use cfim::config::SystemConfig;
use cfim::sim::SweepPoint;

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Io(e.to_string()))
}

pub fn render_sweep(points: &[SweepPoint], json: bool) -> CliResult<String> {
    if json {
        return to_json(&points);
    }
    let mut out = String::from(SweepPoint::CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&p.to_csv_row());
        out.push('\n');
    }
    Ok(out)
}

pub fn render_report(report: &cfim::analysis::MetricsReport, json: bool) -> CliResult<String> {
    if json {
        return to_json(report);
    }
    Ok(format!(
        "{}\n{}\n",
        cfim::analysis::MetricsReport::CSV_HEADER,
        report.to_csv_row()
    ))
}

pub fn render_comparison(rows: &[ComparisonRow], json: bool) -> CliResult<String> {
    if json {
        return to_json(&rows);
    }
    let mut out = String::from(ComparisonRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    Ok(out)
}

pub fn render_ccdf(thresholds_db: &[f64], columns: &[(String, Vec<f64>)], json: bool) -> CliResult<String> {
    if json {
        let rows: Vec<serde_json::Value> = thresholds_db
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut obj = serde_json::Map::new();
                obj.insert("threshold_db".to_string(), serde_json::json!(t));
                for (name, values) in columns {
                    obj.insert(name.clone(), serde_json::json!(values[i]));
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        return to_json(&rows);
    }
    let mut out = String::from("threshold_db");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, &t) in thresholds_db.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for (_, values) in columns {
            out.push_str(&format!(",{}", values[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn render_se_curve(rows: &[(usize, f64)], json: bool) -> CliResult<String> {
    if json {
        let v: Vec<serde_json::Value> = rows
            .iter()
            .map(|(u, se)| serde_json::json!({"users": u, "max_se_bps_hz": se}))
            .collect();
        return to_json(&v);
    }
    let mut out = String::from("users,max_se_bps_hz\n");
    for (u, se) in rows {
        out.push_str(&format!("{u},{se}\n"));
    }
    Ok(out)
}

/// Write one body to `--out` (plus manifest) or stdout.
pub fn emit(
    subcommand: &str,
    run: &RunArgs,
    config: &SystemConfig,
    params: serde_json::Value,
    body: &str,
) -> CliResult<()> {
    match &run.out {
        Some(path) => {
            std::fs::write(path, body)?;
            let mut manifest = Manifest::new(subcommand, run.seed, run.threads, config, params);
            manifest.record(path, body.as_bytes());
            manifest.write_sidecar(path)?;
            Ok(())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// Write one body per user to `<out>.userN.<ext>` (single manifest), or
/// all to stdout.
pub fn emit_per_user(
    subcommand: &str,
    run: &RunArgs,
    config: &SystemConfig,
    params: serde_json::Value,
    bodies: &[String],
) -> CliResult<()> {
    match &run.out {
        Some(path) => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "out".to_string());
            let ext = path
                .extension()
                .map(|s| format!(".{}", s.to_string_lossy()))
                .unwrap_or_default();
            let mut manifest = Manifest::new(subcommand, run.seed, run.threads, config, params);
            for (u, body) in bodies.iter().enumerate() {
                let user_path = path.with_file_name(format!("{stem}.user{u}{ext}"));
                std::fs::write(&user_path, body)?;
                manifest.record(&user_path, body.as_bytes());
            }
            manifest.write_sidecar(path)?;
            Ok(())
        }
        None => {
            for (u, body) in bodies.iter().enumerate() {
                println!("# user {u}");
                print!("{body}");
            }
            Ok(())
        }
    }
}
