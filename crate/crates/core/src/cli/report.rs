//! Report rows and their CSV/JSON serialization.
//!
//! CSV columns, in order: task_id, quantity, value_re, value_im, reference,
//! defect, tolerance, pass, note. Floats carry 17 significant digits;
//! `reference` is a complex literal `re+imi` or empty for informational
//! rows.

use super::scenario::Format;
use crate::linalg::C64;
use serde::Serialize;
use std::fmt::Write as _;

pub const CSV_HEADER: &str = "task_id,quantity,value_re,value_im,reference,defect,tolerance,pass,note";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub task_id: String,
    pub quantity: String,
    pub value_re: f64,
    pub value_im: f64,
    pub reference: Option<[f64; 2]>,
    pub defect: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Row {
    fn base(task: &str, quantity: impl Into<String>, value: C64) -> Self {
        Self {
            task_id: task.to_string(),
            quantity: quantity.into(),
            value_re: value.re,
            value_im: value.im,
            reference: None,
            defect: None,
            tolerance: None,
            pass: true,
            note: String::new(),
        }
    }

    /// Recorded value without a pass criterion.
    pub fn info(task: &str, quantity: impl Into<String>, value: C64) -> Self {
        Self::base(task, quantity, value)
    }

    /// |value − reference| ≤ tolerance.
    pub fn absolute(task: &str, quantity: impl Into<String>, value: C64, reference: C64, tolerance: f64) -> Self {
        Self::with_defect(task, quantity, value, reference, (value - reference).norm(), tolerance)
    }

    /// |value − reference| / max(|reference|, floor) ≤ tolerance.
    pub fn relative(task: &str, quantity: impl Into<String>, value: C64, reference: C64, tolerance: f64, floor: f64) -> Self {
        let d = (value - reference).norm() / reference.norm().max(floor);
        Self::with_defect(task, quantity, value, reference, d, tolerance)
    }

    pub fn with_defect(task: &str, quantity: impl Into<String>, value: C64, reference: C64, defect: f64, tolerance: f64) -> Self {
        let mut r = Self::base(task, quantity, value);
        r.reference = Some([reference.re, reference.im]);
        r.defect = Some(defect);
        r.tolerance = Some(tolerance);
        r.pass = defect <= tolerance;
        r
    }

    pub fn failure(task: &str, message: impl Into<String>) -> Self {
        let mut r = Self::base(task, "error", C64::new(f64::NAN, f64::NAN));
        r.pass = false;
        r.note = message.into();
        r
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.note = n.into();
        self
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // −0 prints as 0
        format!("{:.16e}", x + 0.0)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let reference = r
            .reference
            .map(|[re, im]| {
                let im = num(im);
                format!("{}{}{im}i", num(re), if im.starts_with('-') { "" } else { "+" })
            })
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.task_id),
            csv_field(&r.quantity),
            num(r.value_re),
            num(r.value_im),
            reference,
            r.defect.map(num).unwrap_or_default(),
            r.tolerance.map(num).unwrap_or_default(),
            r.pass,
            csv_field(&r.note)
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub scenario: &'a str,
    pub pass: bool,
    pub rows: &'a [Row],
}

/// JSON numbers use the shortest representation that round-trips, which
/// is as deterministic as fixed 17 digits and exact; non-finite values
/// become null.
pub fn to_json(scenario: &str, rows: &[Row]) -> String {
    let rep = Report { scenario, pass: rows.iter().all(|r| r.pass), rows };
    let mut s = serde_json::to_string_pretty(&rep).expect("rows serialize");
    s.push('\n');
    s
}

pub fn render(scenario: &str, rows: &[Row], format: Format) -> String {
    match format {
        Format::Json => to_json(scenario, rows),
        Format::Csv => to_csv(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_fixed() {
        let rows = vec![
            Row::absolute("t1", "x", C64::new(1.0, -0.5), C64::new(1.0, 0.25), 1.0),
            Row::info("t1", "y, with comma", C64::new(0.1, 0.0)),
            Row::failure("t2", "boom"),
        ];
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "t1,x,1.0000000000000000e0,-5.0000000000000000e-1,1.0000000000000000e0+2.5000000000000000e-1i,7.5000000000000000e-1,1.0000000000000000e0,true,"
        );
        assert!(lines[2].starts_with("t1,\"y, with comma\",1.0000000000000001e-1,"));
        assert!(lines[3].ends_with(",false,boom"));
    }

    #[test]
    fn json_marks_failures() {
        let rows = vec![Row::relative("a", "q", C64::new(2.0, 0.0), C64::new(1.0, 0.0), 0.5, 1e-12)];
        let js: serde_json::Value = serde_json::from_str(&to_json("s", &rows)).unwrap();
        assert_eq!(js["pass"], false);
        assert_eq!(js["rows"][0]["defect"], 1.0);
    }
}
