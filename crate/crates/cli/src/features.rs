//! Feature-matrix files: a header line `n=<dim>`, then one
//! `<id>\t<comma-separated values>` line per function.

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureMatrix {
    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\n", self.dim);
        for (id, values) in &self.rows {
            out.push_str(id);
            out.push('\t');
            let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate();
        let bad =
            |line: usize, msg: &str| CliError::Parse(format!("feature file line {line}: {msg}"));
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing n=<dim> header"))?;
        let dim: usize = header
            .strip_prefix("n=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| bad(1, "expected n=<dim>"))?;
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (id, cells) = line
                .split_once('\t')
                .ok_or_else(|| bad(i + 1, "expected <id>\\t<values>"))?;
            let values = cells
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(i + 1, "non-numeric value"))?;
            if values.len() != dim {
                return Err(bad(
                    i + 1,
                    &format!("{} values, expected {dim}", values.len()),
                ));
            }
            rows.push((id.to_string(), values));
        }
        Ok(Self { dim, rows })
    }
}
