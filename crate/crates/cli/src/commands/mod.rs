pub mod bounds;
pub mod cell;
pub mod geometry;
pub mod laminate;
pub mod twowell;

use complab_core::analytic::CheckReport;

/// Settings taken from global flags rather than the config file.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub tol: Option<f64>,
}

pub fn checks_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from(CheckReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Appends one column to every line of a CSV table.
pub fn append_column(csv: &str, header: &str, values: &[String]) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        out.push_str(line);
        out.push(',');
        out.push_str(if i == 0 { header } else { &values[i - 1] });
        out.push('\n');
    }
    out
}

pub fn failed(reports: &[CheckReport]) -> Vec<&str> {
    reports.iter().filter(|r| !r.passed).map(|r| r.check.as_str()).collect()
}
