//! Evaluation report assembly and rendering: line-delimited JSON records for
//! machines, aligned text tables for humans.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::candidate::Method;
use crate::error::Result;
use crate::eval::{Counts, CurvePoint, OverlapRow, Prf, Split};

/// Recall of one system on one split.
#[derive(Debug, Clone, Serialize)]
pub struct RecallRow {
    pub system: String,
    pub split: String,
    pub hits: usize,
    pub total: usize,
    pub recall: f64,
}

impl RecallRow {
    pub fn new(system: &str, split: &str, counts: Counts) -> Self {
        RecallRow {
            system: system.to_string(),
            split: split.to_string(),
            hits: counts.hits,
            total: counts.total,
            recall: counts.recall(),
        }
    }
}

/// Unique-correct counts of one method on one split, under both readings.
#[derive(Debug, Clone, Serialize)]
pub struct UniqueRow {
    pub split: String,
    pub method: Method,
    pub total: usize,
    pub exclusive: usize,
}

/// Overlap row flattened for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapRowOut {
    pub pattern: BTreeMap<String, bool>,
    pub count: usize,
    pub proportion: f64,
}

impl From<&OverlapRow> for OverlapRowOut {
    fn from(row: &OverlapRow) -> Self {
        OverlapRowOut {
            pattern: row
                .pattern
                .iter()
                .map(|(m, p)| (m.as_str().to_string(), *p))
                .collect(),
            count: row.count,
            proportion: row.proportion,
        }
    }
}

/// Disambiguation P/R/F1 of one system on one split.
#[derive(Debug, Clone, Serialize)]
pub struct PrfRow {
    pub system: String,
    pub split: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrfRow {
    pub fn new(system: &str, split: &str, prf: Prf) -> Self {
        PrfRow {
            system: system.to_string(),
            split: split.to_string(),
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            tp: prf.tp,
            fp: prf.fp,
            fn_: prf.fn_,
        }
    }
}

pub const POOLING_NOTE: &str =
    "overall = academic and ood instances pooled before division (not an average of split recalls)";

/// Full evaluation report. Rendering is deterministic: identical reports
/// serialize to identical bytes.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    pub note: String,
    pub config: serde_json::Value,
    pub mode: String,
    pub k: usize,
    pub recall: Vec<RecallRow>,
    pub curves: Vec<CurvePoint>,
    pub unique_correct: Vec<UniqueRow>,
    pub overlap: Vec<OverlapRowOut>,
    pub disambiguation: Vec<PrfRow>,
}

impl EvalReport {
    /// One typed JSON record per line.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        let mut emit = |value: serde_json::Value| -> Result<()> {
            serde_json::to_writer(&mut *w, &value)
                .map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
            w.write_all(b"\n")?;
            Ok(())
        };
        emit(serde_json::json!({
            "type": "header",
            "note": self.note,
            "mode": self.mode,
            "k": self.k,
            "config": self.config,
        }))?;
        for row in &self.recall {
            emit(tagged("recall", row)?)?;
        }
        for point in &self.curves {
            emit(tagged("curve", point)?)?;
        }
        for row in &self.unique_correct {
            emit(tagged("unique_correct", row)?)?;
        }
        for row in &self.overlap {
            emit(tagged("overlap", row)?)?;
        }
        for row in &self.disambiguation {
            emit(tagged("disambiguation", row)?)?;
        }
        Ok(())
    }

    /// Aligned text tables.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# evaluation report (mode: {}, k: {})", self.mode, self.k)?;
        writeln!(w, "# note: {}", self.note)?;

        if !self.recall.is_empty() {
            writeln!(w, "\n== recall@{} ==", self.k)?;
            let systems = ordered_systems(self.recall.iter().map(|r| r.system.as_str()));
            let splits = ordered_splits(self.recall.iter().map(|r| r.split.as_str()));
            write!(w, "{:<10}", "split")?;
            for s in &systems {
                write!(w, " {s:>8}")?;
            }
            writeln!(w)?;
            for split in &splits {
                write!(w, "{split:<10}")?;
                for system in &systems {
                    match self
                        .recall
                        .iter()
                        .find(|r| &r.system == system && &r.split == split)
                    {
                        Some(r) => write!(w, " {:>8.3}", r.recall)?,
                        None => write!(w, " {:>8}", "-")?,
                    }
                }
                writeln!(w)?;
            }
        }

        if !self.curves.is_empty() {
            writeln!(w, "\n== recall@K curve (overall) ==")?;
            let systems = ordered_systems(self.curves.iter().map(|p| p.system.as_str()));
            let mut ks: Vec<usize> = self.curves.iter().map(|p| p.k).collect();
            ks.sort_unstable();
            ks.dedup();
            write!(w, "{:<6}", "k")?;
            for s in &systems {
                write!(w, " {s:>8}")?;
            }
            writeln!(w)?;
            for k in ks {
                write!(w, "{k:<6}")?;
                for system in &systems {
                    match self
                        .curves
                        .iter()
                        .find(|p| &p.system == system && p.k == k)
                    {
                        Some(p) => write!(w, " {:>8.3}", p.recall)?,
                        None => write!(w, " {:>8}", "-")?,
                    }
                }
                writeln!(w)?;
            }
        }

        if !self.unique_correct.is_empty() {
            writeln!(w, "\n== unique correct candidates ==")?;
            writeln!(
                w,
                "{:<10} {:>8} {:>10} {:>10}",
                "split", "method", "total", "exclusive"
            )?;
            for row in &self.unique_correct {
                writeln!(
                    w,
                    "{:<10} {:>8} {:>10} {:>10}",
                    row.split,
                    row.method.as_str(),
                    row.total,
                    row.exclusive
                )?;
            }
        }

        if !self.overlap.is_empty() {
            writeln!(w, "\n== candidate overlap ==")?;
            let methods: Vec<&str> = self.overlap[0]
                .pattern
                .keys()
                .map(String::as_str)
                .collect();
            // column order: lookup, dense, bm25
            let methods = ordered_systems(methods.into_iter());
            for m in &methods {
                write!(w, "{m:>8}")?;
            }
            writeln!(w, " {:>8} {:>8}", "count", "prop")?;
            for row in &self.overlap {
                for m in &methods {
                    write!(w, "{:>8}", if row.pattern[m.as_str()] { "Y" } else { "N" })?;
                }
                writeln!(w, " {:>8} {:>8.2}", row.count, row.proportion)?;
            }
        }

        if !self.disambiguation.is_empty() {
            writeln!(w, "\n== disambiguation ==")?;
            writeln!(
                w,
                "{:<10} {:>8} {:>8} {:>8} {:>8}",
                "split", "system", "prec", "recall", "f1"
            )?;
            for row in &self.disambiguation {
                writeln!(
                    w,
                    "{:<10} {:>8} {:>8.3} {:>8.3} {:>8.3}",
                    row.split, row.system, row.precision, row.recall, row.f1
                )?;
            }
        }
        Ok(())
    }
}

fn tagged<T: Serialize>(tag: &str, value: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("type".into(), serde_json::Value::String(tag.into()));
    }
    Ok(v)
}

/// Deterministic display order: the paper's column order first, then
/// anything else alphabetically.
fn ordered_systems<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    const PREFERRED: [&str; 4] = ["dense", "lookup", "bm25", "hybrid"];
    let mut seen: Vec<String> = Vec::new();
    for n in names {
        if !seen.iter().any(|s| s == n) {
            seen.push(n.to_string());
        }
    }
    seen.sort_by_key(|n| {
        PREFERRED
            .iter()
            .position(|p| p == n)
            .map_or_else(|| (PREFERRED.len(), n.clone()), |i| (i, String::new()))
    });
    seen
}

fn ordered_splits<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let preferred = [
        Split::Academic.as_str(),
        Split::Ood.as_str(),
        Split::Train.as_str(),
        "overall",
    ];
    let mut seen: Vec<String> = Vec::new();
    for n in names {
        if !seen.iter().any(|s| s == n) {
            seen.push(n.to_string());
        }
    }
    seen.sort_by_key(|n| {
        preferred
            .iter()
            .position(|p| p == n)
            .map_or_else(|| (preferred.len(), n.clone()), |i| (i, String::new()))
    });
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EvalReport {
        EvalReport {
            note: POOLING_NOTE.into(),
            config: serde_json::json!({"k": 16}),
            mode: "span_aligned".into(),
            k: 16,
            recall: vec![
                RecallRow::new("dense", "academic", Counts { hits: 3, total: 4 }),
                RecallRow::new("hybrid", "academic", Counts { hits: 4, total: 4 }),
            ],
            curves: vec![CurvePoint {
                system: "dense".into(),
                k: 1,
                recall: 0.5,
            }],
            unique_correct: vec![UniqueRow {
                split: "academic".into(),
                method: Method::Dense,
                total: 3,
                exclusive: 1,
            }],
            overlap: vec![],
            disambiguation: vec![],
        }
    }

    #[test]
    fn jsonl_emits_typed_lines() {
        let mut buf = Vec::new();
        sample_report().write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("\"type\":\"header\""));
        assert!(lines.iter().any(|l| l.contains("\"type\":\"recall\"")));
        assert!(lines.iter().any(|l| l.contains("\"type\":\"curve\"")));
        for line in lines {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }

    #[test]
    fn text_rendering_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        sample_report().write_text(&mut a).unwrap();
        sample_report().write_text(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("== recall@16 =="));
        assert!(text.contains("dense"));
    }

    #[test]
    fn system_order_mirrors_the_tables() {
        let names = ["hybrid", "zeta", "lookup", "dense"];
        let ordered = ordered_systems(names.into_iter());
        assert_eq!(ordered, ["dense", "lookup", "hybrid", "zeta"]);
    }
}
