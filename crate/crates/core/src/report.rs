//! Experiment reports: estimates with confidence half-widths plus checked
//! assertions, serializable to JSON or CSV.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Where an asserted bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// A proven inequality of the lower-bound theory.
    Analytic,
    /// A closed form or numerical identity computed independently.
    Exact,
    /// An engineering threshold chosen for this laboratory.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Relation {
    fn holds(self, observed: f64, bound: f64) -> bool {
        match self {
            Relation::Le => observed <= bound,
            Relation::Ge => observed >= bound,
            Relation::Lt => observed < bound,
            Relation::Gt => observed > bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Lt => "<",
            Relation::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub metric: String,
    pub value: f64,
    pub ci_halfwidth: f64,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub description: String,
    pub source: BoundSource,
    pub relation: Relation,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
    pub estimates: Vec<Estimate>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
    pub wall_time_secs: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        ExperimentReport {
            name: name.into(),
            seed,
            params: BTreeMap::new(),
            estimates: Vec::new(),
            assertions: Vec::new(),
            notes: Vec::new(),
            wall_time_secs: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn param_f(&mut self, key: &str, value: f64) -> &mut Self {
        self.params.insert(key.to_string(), fmt_sig(value));
        self
    }

    pub fn estimate(&mut self, metric: impl Into<String>, value: f64, ci_halfwidth: f64, sample_count: u64) -> &mut Self {
        self.estimates.push(Estimate {
            metric: metric.into(),
            value,
            ci_halfwidth,
            sample_count,
        });
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn check(
        &mut self,
        description: impl Into<String>,
        source: BoundSource,
        observed: f64,
        relation: Relation,
        bound: f64,
    ) -> bool {
        let passed = relation.holds(observed, bound);
        self.assertions.push(Assertion {
            description: description.into(),
            source,
            relation,
            observed,
            bound,
            passed,
        });
        passed
    }

    pub fn check_le(&mut self, description: impl Into<String>, source: BoundSource, observed: f64, bound: f64) -> bool {
        self.check(description, source, observed, Relation::Le, bound)
    }

    pub fn check_ge(&mut self, description: impl Into<String>, source: BoundSource, observed: f64, bound: f64) -> bool {
        self.check(description, source, observed, Relation::Ge, bound)
    }

    pub fn check_true(&mut self, description: impl Into<String>, source: BoundSource, holds: bool) -> bool {
        self.check(description, source, if holds { 1.0 } else { 0.0 }, Relation::Ge, 1.0)
    }

    /// Append another report's estimates and assertions, prefixing names.
    pub fn absorb(&mut self, other: &ExperimentReport) {
        for e in &other.estimates {
            let mut e = e.clone();
            e.metric = format!("{}/{}", other.name, e.metric);
            self.estimates.push(e);
        }
        for a in &other.assertions {
            let mut a = a.clone();
            a.description = format!("{}: {}", other.name, a.description);
            self.assertions.push(a);
        }
        for n in &other.notes {
            self.notes.push(format!("{}: {}", other.name, n));
        }
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.metric == metric).map(|e| e.value)
    }

    /// Stop the clock.
    pub fn finish(mut self) -> Self {
        if let Some(t) = self.started.take() {
            self.wall_time_secs = t.elapsed().as_secs_f64();
        }
        self
    }

    /// Copy with the wall time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_time_secs = 0.0;
        r.started = None;
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment,kind,name,value,ci_halfwidth,sample_count,relation,bound,status\n");
        let name = csv_field(&self.name);
        for (k, v) in &self.params {
            out += &format!("{name},param,{},{},,,,,\n", csv_field(k), csv_field(v));
        }
        for e in &self.estimates {
            out += &format!(
                "{name},estimate,{},{},{},{},,,\n",
                csv_field(&e.metric),
                fmt_sig(e.value),
                fmt_sig(e.ci_halfwidth),
                e.sample_count
            );
        }
        for a in &self.assertions {
            out += &format!(
                "{name},assertion,{},{},,,{},{},{}\n",
                csv_field(&a.description),
                fmt_sig(a.observed),
                a.relation.symbol(),
                fmt_sig(a.bound),
                if a.passed { "pass" } else { "fail" }
            );
        }
        out += &format!("{name},meta,seed,{},,,,,\n", self.seed);
        out += &format!("{name},meta,wall_time_secs,{},,,,,\n", fmt_sig(self.wall_time_secs));
        out
    }

    /// One line per assertion, for terminal summaries.
    pub fn summary_lines(&self) -> Vec<String> {
        self.assertions
            .iter()
            .map(|a| {
                format!(
                    "[{}] {}: observed {} {} {}",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.description,
                    fmt_sig(a.observed),
                    a.relation.symbol(),
                    fmt_sig(a.bound)
                )
            })
            .collect()
    }
}

/// Decimal with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.11e}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_header_and_twelve_digits() {
        let mut r = ExperimentReport::new("demo", 5);
        r.param("n", 100);
        r.estimate("p", 1.0 / 3.0, 0.01, 1000);
        r.check_le("p small, really", BoundSource::Analytic, 0.2, 0.5);
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment,kind,name,value,ci_halfwidth,sample_count,relation,bound,status"
        );
        assert!(csv.contains("3.33333333333e-1"));
        assert!(csv.contains("\"p small, really\""));
        assert!(r.all_passed());
    }

    #[test]
    fn json_roundtrip() {
        let mut r = ExperimentReport::new("demo", 5);
        r.estimate("p", 0.25, 0.0, 4);
        r.check_ge("ok", BoundSource::Exact, 1.0, 0.0);
        let r = r.finish().without_timing();
        let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn failing_assertion_is_recorded() {
        let mut r = ExperimentReport::new("demo", 1);
        assert!(!r.check_le("x", BoundSource::Calibrated, 2.0, 1.0));
        assert!(!r.all_passed());
    }
}
