//! Verification reports: ordered check records plus command output, with
//! JSON as the canonical form and CSV/text projections.

use serde::Serialize;
use serde_json::{Map, Number, Value};

pub const SCHEMA: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub name: String,
    /// Descriptive tag of the statement the check exercises.
    pub anchor: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Record {
    /// Passes when `measured <= bound`.
    pub fn at_most(name: impl Into<String>, anchor: &str, measured: f64, bound: f64) -> Self {
        let status = if measured <= bound { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status,
            measured: Some(measured),
            bound: Some(bound),
            tolerance: None,
            detail: None,
        }
    }

    /// Passes when `|measured - expected| <= tol`.
    pub fn close(name: impl Into<String>, anchor: &str, measured: f64, expected: f64, tol: f64) -> Self {
        let ok = (measured - expected).abs() <= tol;
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            measured: Some(measured),
            bound: Some(expected),
            tolerance: Some(tol),
            detail: None,
        }
    }

    pub fn flag(name: impl Into<String>, anchor: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            measured: None,
            bound: None,
            tolerance: None,
            detail: None,
        }
    }

    pub fn info(name: impl Into<String>, anchor: &str, measured: f64) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: Status::Info,
            measured: Some(measured),
            bound: None,
            tolerance: None,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub info: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub records: Vec<Record>,
    pub summary: Summary,
    pub data: Value,
}

impl Report {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Self {
            schema: SCHEMA,
            version: VERSION,
            command: command.into(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            records: Vec::new(),
            summary: Summary { total: 0, passed: 0, failed: 0, info: 0 },
            data: Value::Object(Map::new()),
        }
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
        self.recount();
    }

    pub fn extend(&mut self, rs: impl IntoIterator<Item = Record>) {
        self.records.extend(rs);
        self.recount();
    }

    /// Attach command output under `data.<key>`.
    pub fn set_data(&mut self, key: &str, value: &impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut self.data {
            m.insert(key.into(), v);
        }
    }

    fn recount(&mut self) {
        let count = |s: Status| self.records.iter().filter(|r| r.status == s).count();
        self.summary = Summary {
            total: self.records.len(),
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            info: count(Status::Info),
        };
    }

    pub fn failed(&self) -> bool {
        self.summary.failed > 0
    }

    /// Pretty JSON with every float printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let v = normalize(serde_json::to_value(self).expect("report serializes"));
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,anchor,status,measured,bound,tolerance\n");
        for r in &self.records {
            let f = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Info => "info",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&r.name),
                csv_field(&r.anchor),
                status,
                f(r.measured),
                f(r.bound),
                f(r.tolerance)
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} (schema {}, version {})\n", self.command, self.schema, self.version);
        for r in &self.records {
            let tag = match r.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Info => "INFO",
            };
            out.push_str(&format!("{tag} {} [{}]", r.name, r.anchor));
            if let Some(m) = r.measured {
                out.push_str(&format!(" measured={}", fmt17(m)));
            }
            if let Some(b) = r.bound {
                out.push_str(&format!(" bound={}", fmt17(b)));
            }
            if let Some(t) = r.tolerance {
                out.push_str(&format!(" tol={}", fmt17(t)));
            }
            if let Some(d) = &r.detail {
                out.push_str(&format!(" ({d})"));
            }
            out.push('\n');
        }
        let s = self.summary;
        out.push_str(&format!("{} checks: {} passed, {} failed, {} info\n", s.total, s.passed, s.failed, s.info));
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Rewrite float leaves with 17 significant digits; integers are kept.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => match n.as_f64() {
            Some(f) if f.is_finite() => Value::Number(float_number(f)),
            _ => Value::Null,
        },
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

fn float_number(f: f64) -> Number {
    serde_json::from_str(&fmt17(f)).expect("formatted float parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_get_seventeen_digits() {
        let mut r = Report::new("test", &serde_json::json!({"x": 0.1}));
        r.push(Record::close("a", "tag", 1.0 / 3.0, 0.3333, 1e-3));
        r.set_data("n", &7u32);
        let j = r.to_json();
        assert!(j.contains("3.3333333333333331e-1"), "{j}");
        assert!(j.contains("1.0000000000000001e-1"));
        assert!(j.contains("\"n\": 7"));
        assert_eq!(r.summary.passed, 1);
        assert!(!r.failed());
    }

    #[test]
    fn failures_and_projections() {
        let mut r = Report::new("t", &());
        r.push(Record::at_most("b", "tag", 2.0, 1.0));
        r.push(Record::info("c", "tag, comma", 5.0));
        assert!(r.failed());
        let csv = r.to_csv();
        assert!(csv.lines().nth(2).unwrap().starts_with("c,\"tag, comma\",info"));
        assert!(r.to_text().contains("FAIL b [tag]"));
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(normalize(serde_json::to_value(f64::NAN).unwrap()), Value::Null);
    }
}
