//! Classification reports and the significance test used by the gates.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mapping: String,
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    /// `None` when the class has no test samples.
    pub recall: Vec<Option<f64>>,
    /// sha256 of the backbone state used to produce the predictions.
    pub backbone_digest: String,
    pub config_snapshot: String,
}

impl EvalReport {
    pub fn from_predictions(
        mapping: &str,
        classes: &[String],
        labels: &[usize],
        predictions: &[usize],
        backbone_digest: &str,
        config_snapshot: &str,
    ) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Data("labels and predictions differ in length".into()));
        }
        if labels.is_empty() {
            return Err(Error::Data("cannot evaluate an empty test split".into()));
        }
        let k = classes.len();
        let mut confusion = vec![vec![0u64; k]; k];
        for (&t, &p) in labels.iter().zip(predictions) {
            if t >= k || p >= k {
                return Err(Error::Data(format!("class index out of range for {k} classes")));
            }
            confusion[t][p] += 1;
        }
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..k).map(|c| confusion[c][c]).sum();
        let recall = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            mapping: mapping.to_string(),
            classes: classes.to_vec(),
            confusion,
            accuracy: trace as f64 / total as f64,
            recall,
            backbone_digest: backbone_digest.to_string(),
            config_snapshot: config_snapshot.to_string(),
        })
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|c| self.confusion[c][c]).sum()
    }

    /// Defined recalls, highest first; ties keep class order.
    pub fn sorted_recall(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self
            .classes
            .iter()
            .zip(&self.recall)
            .filter_map(|(c, r)| r.map(|r| (c.clone(), r)))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }

    /// `class,recall` rows sorted by decreasing recall; undefined recalls
    /// follow as `nan`.
    pub fn recall_csv(&self) -> String {
        let mut out = String::from("class,recall\n");
        for (c, r) in self.sorted_recall() {
            writeln!(out, "{c},{r:.6}").unwrap();
        }
        for (c, r) in self.classes.iter().zip(&self.recall) {
            if r.is_none() {
                writeln!(out, "{c},nan").unwrap();
            }
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(c);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "mapping: {}", self.mapping).unwrap();
        writeln!(out, "accuracy: {:.6} ({}/{})", self.accuracy, self.correct(), self.total()).unwrap();
        writeln!(out, "backbone: {}", self.backbone_digest).unwrap();
        writeln!(out, "per-class recall (decreasing):").unwrap();
        for (c, r) in self.sorted_recall() {
            writeln!(out, "  {c}: {r:.4}").unwrap();
        }
        out
    }

    /// Parses the `class,recall` text written by [`EvalReport::recall_csv`].
    pub fn parse_recall_csv(text: &str) -> Result<Vec<(String, Option<f64>)>> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Data(format!("recall table: {e}")))?;
            let (c, r) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
            let v = match r {
                "nan" => None,
                _ => Some(r.parse::<f64>().map_err(|e| Error::Data(format!("recall `{r}`: {e}")))?),
            };
            out.push((c.to_string(), v));
        }
        Ok(out)
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let lg = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
    lg(n) - lg(k) - lg(n - k)
}

/// `P[X ≥ k]` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    (k..=n)
        .map(|i| (ln_choose(n, i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp())
        .sum::<f64>()
        .min(1.0)
}
