use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

/// Evaluation results tagged with the run that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub setting: String,
    pub split: String,
    pub model: String,
    pub seed: u64,
    #[serde(flatten)]
    pub eval: EvalReport,
}

impl Report {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cell(values: &[f64]) -> String {
    let (mean, std) = mean_std(values);
    if values.len() > 1 {
        format!("{mean:.2} ± {std:.2}")
    } else {
        format!("{mean:.2}")
    }
}

/// Aligned text table: one row per setting, a P / R / F1 column group per
/// model. Several reports for the same setting and model (different seeds)
/// are shown as mean ± sample standard deviation.
pub fn render_table(reports: &[Report]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut settings: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(&str, &str), Vec<&Report>> = BTreeMap::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        if !settings.contains(&r.setting.as_str()) {
            settings.push(&r.setting);
        }
        groups.entry((&r.setting, &r.model)).or_default().push(r);
    }

    let mut header = vec!["Setting".to_string()];
    let mut sub = vec![String::new()];
    for m in &models {
        header.extend([m.to_string(), String::new(), String::new()]);
        sub.extend(["P".into(), "R".into(), "F1".into()]);
    }
    let mut rows = vec![header, sub];
    for s in &settings {
        let mut row = vec![s.to_string()];
        for m in &models {
            match groups.get(&(*s, *m)) {
                Some(rs) => {
                    let pick = |f: fn(&Report) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
                    row.push(cell(&pick(|r| r.eval.macro_scores.p)));
                    row.push(cell(&pick(|r| r.eval.macro_scores.r)));
                    row.push(cell(&pick(|r| r.eval.macro_scores.f1)));
                }
                None => row.extend(["-".into(), "-".into(), "-".into()]),
            }
        }
        rows.push(row);
    }

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                let pad = widths[c] - v.chars().count();
                if c == 0 {
                    format!("{v}{}", " ".repeat(pad))
                } else {
                    format!("{}{v}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if i == 1 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out
}
