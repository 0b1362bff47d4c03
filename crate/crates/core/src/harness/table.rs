use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    TypeI,
    Power,
    /// Average per-group sample size, n1 + E[n2].
    Asn,
    /// Fraction of replicates on which two methods reach the same decision.
    Agreement,
    /// Rejection probability given the stage-1 responder counts.
    RejectGivenCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub point: String,
    pub method: String,
    pub metric: Metric,
    pub value: f64,
    /// Monte Carlo standard error of `value`.
    pub se: f64,
    pub reps: usize,
    pub published: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn extend(&mut self, other: ResultsTable) {
        self.rows.extend(other.rows);
    }

    /// First row matching all three keys.
    pub fn find(&self, point: &str, method: &str, metric: Metric) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.point == point && r.method == method && r.metric == metric)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ResultsTable> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(ResultsTable { rows })
    }

    /// Fixed-width text rendering for terminals.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<22} {:<44} {:<8} {:<10} {:>10} {:>9} {:>9}\n",
            "experiment", "point", "method", "metric", "value", "se", "published"
        );
        for r in &self.rows {
            let metric = serde_json::to_value(r.metric).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let published = r.published.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<22} {:<44} {:<8} {:<10} {:>10.4} {:>9.5} {:>9}\n",
                r.experiment, r.point, r.method, metric, r.value, r.se, published
            ));
        }
        out
    }
}
