//! Accuracy tables (one row per model or composition, one column per test
//! set plus their union) and the per-epoch metrics log.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationOp;
use crate::data::{union_all, LabeledDataset};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{Model, ModelSpec, SharedHead};
use crate::params::ParamSet;
use crate::train::{evaluate, MetricsRecord};

pub const UNION_COLUMN: &str = "union";

/// Test sets `D_1..D_n` and their union.
#[derive(Clone, Debug)]
pub struct TestSets {
    pub sets: Vec<LabeledDataset>,
    pub union: LabeledDataset,
}

impl TestSets {
    pub fn new(sets: Vec<LabeledDataset>) -> Result<Self> {
        let union = union_all(&sets)?;
        Ok(TestSets { sets, union })
    }

    pub fn columns(&self) -> Vec<String> {
        self.sets.iter().map(|d| d.name.clone()).chain([UNION_COLUMN.to_string()]).collect()
    }

    /// Accuracy on each set, then on the union.
    pub fn accuracies(&self, model: &Model) -> Result<Vec<f64>> {
        self.sets.iter().chain([&self.union]).map(|d| evaluate(model, d)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
    pub descriptor: String,
    pub accuracy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn new(columns: Vec<String>) -> Self {
        ReportTable { columns, rows: Vec::new() }
    }

    /// Append a row. The descriptor must parse as a composition expression and
    /// every accuracy must lie in `[0, 1]`.
    pub fn push(&mut self, section: Option<&str>, descriptor: &str, accuracy: Vec<f64>) -> Result<()> {
        Expr::parse(descriptor)?;
        if accuracy.len() != self.columns.len() {
            return Err(Error::shape(format!(
                "row {descriptor:?} has {} values for {} columns",
                accuracy.len(),
                self.columns.len()
            )));
        }
        if let Some(bad) = accuracy.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::numerics(format!("row {descriptor:?}: accuracy {bad} outside [0, 1]")));
        }
        self.rows.push(ReportRow {
            section: section.map(str::to_string),
            descriptor: descriptor.to_string(),
            accuracy,
        });
        Ok(())
    }

    /// First row with this descriptor in `section` (any section if `None`).
    pub fn row(&self, section: Option<&str>, descriptor: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.descriptor == descriptor && (section.is_none() || r.section.as_deref() == section))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("section,model,{}\n", self.columns.join(","));
        for r in &self.rows {
            let vals: Vec<String> = r.accuracy.iter().map(|a| format!("{a:.6}")).collect();
            let _ = writeln!(out, "{},{},{}", r.section.as_deref().unwrap_or(""), r.descriptor, vals.join(","));
        }
        out
    }

    /// Aligned plain text, accuracies in percent, section headers on their own lines.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.descriptor.chars().count()).max().unwrap_or(0).max(5);
        let cols: Vec<usize> = self.columns.iter().map(|c| c.chars().count().max(7)).collect();
        let mut out = format!("{:width$}", "");
        for (c, w) in self.columns.iter().zip(&cols) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        let mut section: Option<&str> = None;
        for r in &self.rows {
            if r.section.is_some() && r.section.as_deref() != section {
                section = r.section.as_deref();
                let _ = writeln!(out, "{}", section.unwrap_or_default());
            }
            let pad = width - r.descriptor.chars().count();
            let _ = write!(out, "{}{}", r.descriptor, " ".repeat(pad));
            for (a, w) in r.accuracy.iter().zip(&cols) {
                let _ = write!(out, "  {:>w$}", format!("{:.2}%", 100.0 * a));
            }
            out.push('\n');
        }
        out
    }
}

/// Retention and forgetting after removing one operand from the composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingSummary {
    pub descriptor: String,
    pub retained: String,
    pub forgotten: String,
    /// Accuracy change on the retained dataset vs the retained model's own row.
    pub retained_delta: f64,
    /// Accuracy change on the forgotten dataset vs the retained model's own row.
    pub forgotten_delta: f64,
    /// Accuracy on the forgotten dataset minus the full composition's.
    pub forgotten_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub table: ReportTable,
    pub summaries: Vec<ForgettingSummary>,
}

impl ForgettingReport {
    pub fn to_text(&self) -> String {
        let mut out = self.table.to_text();
        out.push('\n');
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{}: retained {} {:+.2} pts, forgotten {} {:+.2} pts vs reference, {:+.2} pts vs composed",
                s.descriptor,
                s.retained,
                100.0 * s.retained_delta,
                s.forgotten,
                100.0 * s.forgotten_delta,
                100.0 * s.forgotten_drop
            );
        }
        out
    }
}

/// Two trained extractors with the shared head and the donor for composed
/// models' normalisation parameters.
pub struct PairSource<'a> {
    pub spec: Arc<ModelSpec>,
    pub first: &'a ParamSet,
    pub second: &'a ParamSet,
    pub donor: &'a ParamSet,
    pub head: SharedHead,
    pub op: AggregationOp,
}

impl PairSource<'_> {
    /// Model for an expression over `N1` and `N2`. A bare identifier is the
    /// trained model itself; anything else is composed with the donor.
    pub fn model(&self, expr: &Expr) -> Result<Model> {
        let lookup = |id: &str| match id {
            "N1" => Ok(self.first),
            "N2" => Ok(self.second),
            other => Err(Error::config(format!("unknown operand {other:?}; expected N1 or N2"))),
        };
        if let Expr::Ident(id) = expr {
            return Ok(Model::new(self.spec.clone(), lookup(id)?.clone(), self.head.clone()));
        }
        let agg = expr.evaluate(&lookup, self.op)?;
        let extractor = crate::aggregation::with_donor(&agg.params, self.donor)?;
        Ok(Model::new(self.spec.clone(), extractor, self.head.clone()))
    }
}

/// The commutativity and selective-forgetting table: both composition orders,
/// then each reference model followed by the two removals that should leave it.
pub fn forgetting_report(src: &PairSource<'_>, tests: &TestSets) -> Result<ForgettingReport> {
    if tests.sets.len() != 2 {
        return Err(Error::config(format!("forgetting report needs 2 test sets, got {}", tests.sets.len())));
    }
    let mut table = ReportTable::new(tests.columns());
    let mut add = |section: &str, descriptor: &str| -> Result<Vec<f64>> {
        let expr = Expr::parse(descriptor)?;
        let acc = tests.accuracies(&src.model(&expr)?)?;
        table.push(Some(section), &expr.to_symbolic(), acc.clone())?;
        Ok(acc)
    };
    let composed = add("commutativity", "N1+N2")?;
    add("commutativity", "N2+N1")?;
    let mut summaries = Vec::new();
    for (keep, drop) in [(0usize, 1usize), (1, 0)] {
        let (k, d) = (format!("N{}", keep + 1), format!("N{}", drop + 1));
        let reference = add("selective forgetting", &k)?;
        for order in [format!("(N1+N2)-{d}"), format!("(N2+N1)-{d}")] {
            let acc = add("selective forgetting", &order)?;
            summaries.push(ForgettingSummary {
                descriptor: Expr::parse(&order)?.to_symbolic(),
                retained: tests.sets[keep].name.clone(),
                forgotten: tests.sets[drop].name.clone(),
                retained_delta: acc[keep] - reference[keep],
                forgotten_delta: acc[drop] - reference[drop],
                forgotten_drop: acc[drop] - composed[drop],
            });
        }
    }
    Ok(ForgettingReport { table, summaries })
}

pub const METRICS_HEADER: &str = "epoch,model,split,accuracy,loss_task,loss_agg,loss_total";

/// Long-format metrics log: one line per epoch, model and split.
///
/// Train rows carry epoch means of the aggregation loss and objective; val
/// rows carry the end-of-epoch aggregation loss and the validation objective.
pub fn metrics_csv(history: &[MetricsRecord]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for rec in history {
        for m in &rec.models {
            let _ = writeln!(
                out,
                "{},{},train,{},{},{},{}",
                rec.epoch, m.model, m.train_accuracy, m.train_loss, rec.loss_agg, rec.loss_total
            );
            let _ = writeln!(
                out,
                "{},{},val,{},{},{},{}",
                rec.epoch, m.model, m.val_accuracy, m.val_loss, rec.loss_agg_end, rec.val_total
            );
        }
    }
    out
}
