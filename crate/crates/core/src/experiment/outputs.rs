//! Report files: machine-readable CSVs and SVG renderings of them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::svg;
use super::{CrossTestMatrix, CurvePoint, DailyPolicyRow, ExperimentError, TrainingCurve};
use crate::env::Action;

pub const TRAINING_CURVES_CSV: &str = "training_curves.csv";
pub const CROSS_TEST_CSV: &str = "cross_test.csv";
pub const DAILY_POLICY_CSV: &str = "daily_policy.csv";

const CURVES_HEADER: &str = "year,step,greedy_return_cents";
const CROSS_HEADER: &str = "agent_year,test_year,raw_return_cents,normalized";
const DAILY_HEADER: &str = "hour_start_utc,price_cents_per_kwh,action,charge_kwh_after";
const HOUR_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

const ACTION_COLORS: [(&str, &str); 3] = [
    ("charge", "#2ca02c"),
    ("discharge", "#d62728"),
    ("idle", "#999999"),
];

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| output_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| output_err(path, e))
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Output {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| output_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == header => {}
        _ => return Err(output_err(path, format!("row 1: expected header `{header}`"))),
    }
    let columns = header.split(',').count();
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let fields: Vec<String> = l.trim_end_matches('\r').split(',').map(str::to_string).collect();
            if fields.len() != columns {
                return Err(output_err(
                    path,
                    format!("row {}: expected {columns} columns, found {}", i + 1, fields.len()),
                ));
            }
            Ok((i + 1, fields))
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .parse()
        .map_err(|_| output_err(path, format!("row {row}: bad {name} `{value}`")))
}

pub fn write_training_curves_csv(path: &Path, curves: &[TrainingCurve]) -> Result<(), ExperimentError> {
    let mut out = format!("{CURVES_HEADER}\n");
    for curve in curves {
        for p in &curve.points {
            writeln!(out, "{},{},{}", curve.label, p.step, p.greedy_return).unwrap();
        }
    }
    write_file(path, &out)
}

/// Curves in first-appearance order of their labels.
pub fn read_training_curves_csv(path: &Path) -> Result<Vec<TrainingCurve>, ExperimentError> {
    let mut curves: Vec<TrainingCurve> = Vec::new();
    for (row, f) in read_rows(path, CURVES_HEADER)? {
        let point = CurvePoint {
            step: field(path, row, "step", &f[1])?,
            greedy_return: field(path, row, "greedy_return_cents", &f[2])?,
        };
        match curves.iter_mut().find(|c| c.label == f[0]) {
            Some(c) => c.points.push(point),
            None => curves.push(TrainingCurve {
                label: f[0].clone(),
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

pub fn write_cross_test_csv(path: &Path, matrix: &CrossTestMatrix) -> Result<(), ExperimentError> {
    let mut out = format!("{CROSS_HEADER}\n");
    for (a, agent) in matrix.years.iter().enumerate() {
        for (y, test) in matrix.years.iter().enumerate() {
            let normalized = matrix.normalized[a][y].map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{agent},{test},{},{normalized}", matrix.raw[a][y]).unwrap();
        }
    }
    write_file(path, &out)
}

pub fn read_cross_test_csv(path: &Path) -> Result<CrossTestMatrix, ExperimentError> {
    let mut raw: BTreeMap<(i32, i32), f64> = BTreeMap::new();
    let mut years: Vec<i32> = Vec::new();
    for (row, f) in read_rows(path, CROSS_HEADER)? {
        let agent: i32 = field(path, row, "agent_year", &f[0])?;
        let test: i32 = field(path, row, "test_year", &f[1])?;
        let value: f64 = field(path, row, "raw_return_cents", &f[2])?;
        if !years.contains(&agent) {
            years.push(agent);
        }
        raw.insert((agent, test), value);
    }
    let grid = years
        .iter()
        .map(|&a| {
            years
                .iter()
                .map(|&y| {
                    raw.get(&(a, y))
                        .copied()
                        .ok_or_else(|| output_err(path, format!("missing entry for agent {a} on {y}")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CrossTestMatrix::from_raw(years, grid))
}

pub fn write_daily_policy_csv(path: &Path, rows: &[DailyPolicyRow]) -> Result<(), ExperimentError> {
    let mut out = format!("{DAILY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.hour_start_utc.format(HOUR_FORMAT),
            r.price,
            r.action.name(),
            r.charge_after
        )
        .unwrap();
    }
    write_file(path, &out)
}

pub fn read_daily_policy_csv(path: &Path) -> Result<Vec<DailyPolicyRow>, ExperimentError> {
    read_rows(path, DAILY_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            let hour = NaiveDateTime::parse_from_str(&f[0], HOUR_FORMAT)
                .map_err(|e| output_err(path, format!("row {row}: bad timestamp: {e}")))?
                .and_utc();
            let action = Action::ALL
                .into_iter()
                .find(|a| a.name() == f[2])
                .ok_or_else(|| output_err(path, format!("row {row}: unknown action `{}`", f[2])))?;
            Ok(DailyPolicyRow {
                hour_start_utc: hour,
                price: field(path, row, "price", &f[1])?,
                action,
                charge_after: field(path, row, "charge", &f[3])?,
            })
        })
        .collect()
}

fn render_curves(curves: &[TrainingCurve]) -> String {
    let series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|c| {
            (
                c.label.clone(),
                c.points
                    .iter()
                    .map(|p| (p.step as f64, p.greedy_return / 100.0))
                    .collect(),
            )
        })
        .collect();
    svg::line_chart(
        "Greedy evaluation during training",
        "training step (hours)",
        "annual return ($)",
        &series,
    )
}

fn render_cross_test(matrix: &CrossTestMatrix) -> String {
    let bars: Vec<(String, f64)> = matrix
        .years
        .iter()
        .zip(matrix.off_diagonal_means())
        .map(|(y, m)| (y.to_string(), m.unwrap_or(f64::NAN)))
        .filter(|(_, m)| m.is_finite())
        .collect();
    svg::bar_chart(
        "Mean normalized return in non-training years",
        "normalized return",
        &bars,
        Some(1.0),
    )
}

fn render_daily(rows: &[DailyPolicyRow]) -> String {
    let prices: Vec<f64> = rows.iter().map(|r| r.price).collect();
    let markers: Vec<(usize, usize)> = rows.iter().enumerate().map(|(h, r)| (h, r.action.index())).collect();
    let title = rows
        .first()
        .map(|r| format!("Greedy actions on {}", r.hour_start_utc.date_naive()))
        .unwrap_or_else(|| "Greedy actions".into());
    svg::step_chart(&title, &prices, &markers, &ACTION_COLORS)
}

/// Render an SVG next to every report CSV present in `dir`.
pub fn render_plots(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let curves_csv = dir.join(TRAINING_CURVES_CSV);
    if curves_csv.exists() {
        let path = dir.join("training_curves.svg");
        write_file(&path, &render_curves(&read_training_curves_csv(&curves_csv)?))?;
        written.push(path);
    }
    let cross_csv = dir.join(CROSS_TEST_CSV);
    if cross_csv.exists() {
        let path = dir.join("cross_test.svg");
        write_file(&path, &render_cross_test(&read_cross_test_csv(&cross_csv)?))?;
        written.push(path);
    }
    let daily_csv = dir.join(DAILY_POLICY_CSV);
    if daily_csv.exists() {
        let path = dir.join("daily_policy.svg");
        write_file(&path, &render_daily(&read_daily_policy_csv(&daily_csv)?))?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(output_err(dir, "no report CSVs found to plot"));
    }
    Ok(written)
}

/// Write whichever report CSVs have data, then their SVG renderings.
pub fn emit_outputs(
    out_dir: &Path,
    curves: &[TrainingCurve],
    matrix: Option<&CrossTestMatrix>,
    daily: Option<&[DailyPolicyRow]>,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| output_err(out_dir, e))?;
    let mut written = Vec::new();
    if !curves.is_empty() {
        let path = out_dir.join(TRAINING_CURVES_CSV);
        write_training_curves_csv(&path, curves)?;
        written.push(path);
    }
    if let Some(m) = matrix {
        let path = out_dir.join(CROSS_TEST_CSV);
        write_cross_test_csv(&path, m)?;
        written.push(path);
    }
    if let Some(rows) = daily {
        let path = out_dir.join(DAILY_POLICY_CSV);
        write_daily_policy_csv(&path, rows)?;
        written.push(path);
    }
    written.extend(render_plots(out_dir)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::svg::tests::assert_well_formed;
    use chrono::{Duration, TimeZone, Utc};

    fn curve(label: &str, n: u64) -> TrainingCurve {
        TrainingCurve {
            label: label.into(),
            points: (0..n)
                .map(|i| CurvePoint {
                    step: i * 10_000,
                    greedy_return: (i as f64).sqrt() * 1000.0 - 3.0,
                })
                .collect(),
        }
    }

    fn day_rows() -> Vec<DailyPolicyRow> {
        let t0 = Utc.with_ymd_and_hms(2018, 7, 1, 0, 0, 0).unwrap();
        (0..24)
            .map(|h| DailyPolicyRow {
                hour_start_utc: t0 + Duration::hours(h),
                price: if h < 12 { 2.0 } else { 6.5 },
                action: Action::ALL[(h % 3) as usize],
                charge_after: (h % 3) as f64 * 5.0,
            })
            .collect()
    }

    #[test]
    fn full_report_round_trips_and_renders() {
        let dir = tempfile::tempdir().unwrap();
        let curves = vec![curve("2015", 21), curve("2016", 21)];
        let matrix = CrossTestMatrix::from_raw(vec![2015, 2016], vec![vec![100.0, 94.0], vec![-5.0, 80.0]]);
        let rows = day_rows();
        let written = emit_outputs(dir.path(), &curves, Some(&matrix), Some(&rows)).unwrap();
        assert_eq!(written.len(), 6);

        let text = fs::read_to_string(dir.path().join(TRAINING_CURVES_CSV)).unwrap();
        assert_eq!(text.lines().count(), 1 + 42);
        assert_eq!(text.lines().next(), Some(CURVES_HEADER));
        assert_eq!(read_training_curves_csv(&dir.path().join(TRAINING_CURVES_CSV)).unwrap(), curves);

        assert_eq!(read_cross_test_csv(&dir.path().join(CROSS_TEST_CSV)).unwrap(), matrix);
        let cross = fs::read_to_string(dir.path().join(CROSS_TEST_CSV)).unwrap();
        assert!(cross.contains("2015,2016,94,1.175\n"));

        let daily = fs::read_to_string(dir.path().join(DAILY_POLICY_CSV)).unwrap();
        assert_eq!(daily.lines().count(), 25);
        assert!(daily.contains("2018-07-01T01:00:00Z,2,discharge,5\n"));
        assert_eq!(read_daily_policy_csv(&dir.path().join(DAILY_POLICY_CSV)).unwrap(), rows);

        for name in ["training_curves.svg", "cross_test.svg", "daily_policy.svg"] {
            let svg = fs::read_to_string(dir.path().join(name)).unwrap();
            assert_well_formed(&svg);
        }
        let curves_svg = fs::read_to_string(dir.path().join("training_curves.svg")).unwrap();
        assert_eq!(curves_svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn single_curve_has_header_plus_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAINING_CURVES_CSV);
        write_training_curves_csv(&path, &[curve("2018", 21)]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 22);
    }

    #[test]
    fn suppressed_normalization_is_blank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CROSS_TEST_CSV);
        let m = CrossTestMatrix::from_raw(vec![1, 2], vec![vec![-3.0, 1.0], vec![2.0, 4.0]]);
        write_cross_test_csv(&path, &m).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("1,1,-3,\n"));
        assert!(text.contains("2,1,2,\n"));
    }

    #[test]
    fn plotting_an_empty_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_plots(dir.path()).is_err());
    }

    #[test]
    fn unwritable_directory_is_an_output_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_outputs(&blocker.join("sub"), &[curve("x", 2)], None, None).unwrap_err();
        assert!(matches!(err, ExperimentError::Output { .. }));
    }
}
