use std::path::Path;

use super::ResultRow;

pub const HEADER: [&str; 16] = [
    "kind",
    "scenario",
    "seed",
    "point",
    "group_mse",
    "weighted_mse",
    "accuracy",
    "gap",
    "bound",
    "agg_error",
    "iterations",
    "fronthaul_pilot_data",
    "fronthaul_combiners",
    "fronthaul_statistics",
    "seed_count",
    "terminated_by",
];

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn record(row: &ResultRow) -> Vec<String> {
    vec![
        row.kind.as_str().to_string(),
        row.scenario.clone(),
        opt(row.seed),
        fmt_float(row.point),
        fmt_list(&row.group_mse),
        row.weighted_mse.map(fmt_float).unwrap_or_default(),
        fmt_list(&row.accuracy),
        fmt_list(&row.gap),
        fmt_list(&row.bound),
        fmt_list(&row.agg_error),
        opt(row.iterations),
        opt(row.fronthaul.map(|f| f.pilot_data_scalars)),
        opt(row.fronthaul.map(|f| f.combiner_scalars)),
        opt(row.fronthaul.map(|f| f.statistics_display())),
        row.seed_count.to_string(),
        row.terminated_by.clone().unwrap_or_default(),
    ]
}

/// Writes rows sorted by (kind, scenario, seed, point) behind a header line.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<(), csv::Error> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then(a.point.total_cmp(&b.point)));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(HEADER)?;
    for r in sorted {
        w.write_record(record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), csv::Error> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}
