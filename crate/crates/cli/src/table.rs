//! Combines finished run directories into one architecture-by-method test
//! error table, as CSV and as aligned text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::RunError;

/// Method columns: weight family crossed with readout.
const METHODS: [&str; 4] = ["B-EBP-P", "B-EBP-D", "R-EBP-P", "R-EBP-D"];

/// One table row: a trained configuration with up to four method errors
/// (percent). Rows are keyed by architecture and dropout so binary and
/// real runs of the same shape share a line, as in the published layout.
#[derive(Debug, Default, Clone)]
struct Row {
    cells: [Option<f64>; 4],
}

fn parse_summary(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

/// Reads `summary.txt` from every run directory and assembles the grid.
/// Runs that are missing, unreadable, aborted, or incomplete contribute
/// nothing beyond a note on stderr; their cells stay absent.
fn collect(run_dirs: &[PathBuf]) -> BTreeMap<(String, bool), Row> {
    let mut rows: BTreeMap<(String, bool), Row> = BTreeMap::new();
    for dir in run_dirs {
        let path = dir.join("summary.txt");
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("note: skipping {}: {e}", path.display());
                continue;
            }
        };
        let summary = parse_summary(&text);
        let (Some(mode), Some(arch)) = (summary.get("mode"), summary.get("architecture")) else {
            eprintln!("note: skipping {}: no mode/architecture keys", path.display());
            continue;
        };
        let dropout = summary.get("dropout").map(String::as_str) == Some("true");
        let errs: Option<(f64, f64)> = (|| {
            let p = summary.get("final_test_err_ebp_p")?.parse().ok()?;
            let d = summary.get("final_test_err_ebp_d")?.parse().ok()?;
            Some((p, d))
        })();
        let Some((p, d)) = errs else {
            eprintln!("note: skipping {}: no final test errors (aborted or unfinished run)", path.display());
            continue;
        };
        let base = match mode.as_str() {
            "binary" => 0,
            "real" => 2,
            other => {
                eprintln!("note: skipping {}: unknown mode {other:?}", path.display());
                continue;
            }
        };
        let row = rows.entry((arch.clone(), dropout)).or_default();
        row.cells[base] = Some(p * 100.0);
        row.cells[base + 1] = Some(d * 100.0);
    }
    rows
}

fn cell_text(cell: Option<f64>) -> String {
    cell.map_or_else(|| "absent".to_string(), |v| format!("{v:.2}"))
}

fn render_csv(rows: &BTreeMap<(String, bool), Row>) -> String {
    let mut out = String::from("architecture,dropout,B-EBP-P,B-EBP-D,R-EBP-P,R-EBP-D\n");
    for ((arch, dropout), row) in rows {
        let _ = write!(out, "{arch},{dropout}");
        for cell in row.cells {
            let _ = write!(out, ",{}", cell_text(cell));
        }
        out.push('\n');
    }
    out
}

fn render_text(rows: &BTreeMap<(String, bool), Row>) -> String {
    let mut headers = vec!["architecture".to_string(), "dropout".to_string()];
    headers.extend(METHODS.iter().map(|m| m.to_string()));
    let mut grid = vec![headers];
    for ((arch, dropout), row) in rows {
        let mut line = vec![arch.clone(), dropout.to_string()];
        line.extend(row.cells.iter().map(|&c| cell_text(c)));
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|col| grid.iter().map(|line| line[col].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &grid {
        for (col, (value, width)) in line.iter().zip(&widths).enumerate() {
            if col > 0 {
                out.push_str("  ");
            }
            let _ = write!(out, "{value:>width$}");
        }
        out.push('\n');
    }
    out
}

/// Prints the aligned table and, when `out` is given, writes `table.csv`
/// and `table.txt` there. An empty run list yields a header-only table.
pub fn emit_table(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<(), RunError> {
    let rows = collect(run_dirs);
    let text = render_text(&rows);
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| RunError::data(format!("cannot create output directory {}: {e}", dir.display())))?;
        let csv_path = dir.join("table.csv");
        std::fs::write(&csv_path, render_csv(&rows))
            .map_err(|e| RunError::data(format!("cannot write {}: {e}", csv_path.display())))?;
        let txt_path = dir.join("table.txt");
        std::fs::write(&txt_path, &text)
            .map_err(|e| RunError::data(format!("cannot write {}: {e}", txt_path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_run(dir: &Path, name: &str, summary: &str) -> PathBuf {
        let run = dir.join(name);
        std::fs::create_dir_all(&run).unwrap();
        std::fs::write(run.join("summary.txt"), summary).unwrap();
        run
    }

    #[test]
    fn binary_and_real_runs_of_one_shape_share_a_row() {
        let tmp = tempfile::tempdir().unwrap();
        let a = fake_run(
            tmp.path(),
            "a",
            "mode = binary\narchitecture = 784-800-10\ndropout = false\n\
             final_test_err_ebp_p = 0.030100\nfinal_test_err_ebp_d = 0.041500\n",
        );
        let b = fake_run(
            tmp.path(),
            "b",
            "mode = real\narchitecture = 784-800-10\ndropout = false\n\
             final_test_err_ebp_p = 0.024500\nfinal_test_err_ebp_d = 0.029900\n",
        );
        let rows = collect(&[a, b]);
        assert_eq!(rows.len(), 1);
        let csv = render_csv(&rows);
        assert!(csv.contains("784-800-10,false,3.01,4.15,2.45,2.99"), "{csv}");
    }

    #[test]
    fn missing_runs_leave_absent_cells() {
        let tmp = tempfile::tempdir().unwrap();
        let a = fake_run(
            tmp.path(),
            "a",
            "mode = binary\narchitecture = spatial(14)\ndropout = false\n\
             final_test_err_ebp_p = 0.031000\nfinal_test_err_ebp_d = 0.035600\n",
        );
        let rows = collect(&[a, tmp.path().join("never-ran")]);
        let csv = render_csv(&rows);
        assert!(csv.contains("spatial(14),false,3.10,3.56,absent,absent"), "{csv}");
    }

    #[test]
    fn aborted_runs_are_skipped() {
        let tmp = tempfile::tempdir().unwrap();
        let a = fake_run(
            tmp.path(),
            "a",
            "mode = binary\narchitecture = 784-800-10\ndropout = false\naborted = true\n",
        );
        assert!(collect(&[a]).is_empty());
    }

    #[test]
    fn empty_input_renders_a_header_only_table() {
        let rows = collect(&[]);
        assert_eq!(render_csv(&rows), "architecture,dropout,B-EBP-P,B-EBP-D,R-EBP-P,R-EBP-D\n");
        let text = render_text(&rows);
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("architecture") && text.contains("R-EBP-D"));
    }

    #[test]
    fn text_columns_are_aligned() {
        let tmp = tempfile::tempdir().unwrap();
        let a = fake_run(
            tmp.path(),
            "a",
            "mode = binary\narchitecture = 784-800-800-10\ndropout = true\n\
             final_test_err_ebp_p = 0.021200\nfinal_test_err_ebp_d = 0.024000\n",
        );
        let text = render_text(&collect(&[a]));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].len(), lines[1].len());
        assert!(lines[1].contains("2.12"));
    }
}
