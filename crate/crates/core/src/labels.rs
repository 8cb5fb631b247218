//! Static-analyzer findings to binary labels via a finding-to-CWE table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Finding, FunctionRecord};

const HEADER: [&str; 4] = ["tool", "finding", "cwe", "vulnerable"];

/// Starter mapping bundled with the crate.
pub const DEFAULT_MAPPING_CSV: &str = include_str!("../data/default_mapping.csv");

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("mapping row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("mapping row {row}: duplicate entry for ({tool}, {finding})")]
    DuplicateMappingRow {
        row: usize,
        tool: String,
        finding: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRow {
    pub tool: String,
    pub finding: String,
    pub cwe: String,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CweMapping {
    rows: Vec<MappingRow>,
    index: HashMap<(String, String), usize>,
}

impl CweMapping {
    pub fn from_rows(rows: Vec<MappingRow>) -> Result<Self, LabelError> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let key = (row.tool.clone(), row.finding.clone());
            if index.insert(key, i).is_some() {
                return Err(LabelError::DuplicateMappingRow {
                    // header is row 1
                    row: i + 2,
                    tool: row.tool.clone(),
                    finding: row.finding.clone(),
                });
            }
        }
        Ok(Self { rows, index })
    }

    pub fn default_mapping() -> Self {
        parse_mapping(DEFAULT_MAPPING_CSV.as_bytes()).expect("bundled mapping is valid")
    }

    pub fn rows(&self) -> &[MappingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self, finding: &Finding) -> Option<&MappingRow> {
        self.index
            .get(&(finding.tool.clone(), finding.finding.clone()))
            .map(|&i| &self.rows[i])
    }
}

/// Parses mapping CSV with header `tool,finding,cwe,vulnerable`.
pub fn parse_mapping(reader: impl Read) -> Result<CweMapping, LabelError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = csv.headers().map_err(|e| LabelError::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(LabelError::Parse {
            row: 1,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| LabelError::Parse {
            row,
            message: e.to_string(),
        })?;
        let vulnerable = match record[3].trim() {
            "true" => true,
            "false" => false,
            other => {
                return Err(LabelError::Parse {
                    row,
                    message: format!("vulnerable must be true or false, got {other:?}"),
                })
            }
        };
        rows.push(MappingRow {
            tool: record[0].trim().to_string(),
            finding: record[1].trim().to_string(),
            cwe: record[2].trim().to_string(),
            vulnerable,
        });
    }
    CweMapping::from_rows(rows)
}

pub fn load_mapping(path: impl AsRef<Path>) -> Result<CweMapping, LabelError> {
    parse_mapping(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLabel {
    pub vulnerable: bool,
    pub cwes: BTreeSet<String>,
    /// Findings with no mapping row; ignored for the verdict.
    pub unmapped: usize,
}

/// Vulnerable iff some finding maps to a vulnerable row.
pub fn label_function(findings: &[Finding], mapping: &CweMapping) -> BinaryLabel {
    let mut label = BinaryLabel::default();
    for f in findings {
        match mapping.lookup(f) {
            Some(row) if row.vulnerable => {
                label.cwes.insert(row.cwe.clone());
            }
            Some(_) => {}
            None => label.unmapped += 1,
        }
    }
    label.vulnerable = !label.cwes.is_empty();
    label
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub kept_existing: usize,
    pub labeled_from_findings: usize,
    pub vulnerable: usize,
    pub unmapped_findings: usize,
}

/// Attaches contributing CWEs to every record and fills in `label` where the
/// corpus did not provide one.
pub fn apply_labels(records: &mut [FunctionRecord], mapping: &CweMapping) -> LabelSummary {
    let mut summary = LabelSummary::default();
    for rec in records.iter_mut() {
        let label = label_function(&rec.findings, mapping);
        summary.unmapped_findings += label.unmapped;
        rec.cwes = label.cwes.into_iter().collect();
        if rec.label.is_some() {
            summary.kept_existing += 1;
        } else {
            rec.label = Some(label.vulnerable);
            summary.labeled_from_findings += 1;
        }
        if rec.label == Some(true) {
            summary.vulnerable += 1;
        }
    }
    summary
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CweFrequency {
    pub cwe: String,
    pub count: usize,
    pub percent: f64,
}

/// Share of each CWE among the CWE occurrences of vulnerable records.
/// Sorted by count (descending), then CWE id.
pub fn cwe_frequencies(records: &[FunctionRecord]) -> Vec<CweFrequency> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in records.iter().filter(|r| r.label == Some(true)) {
        for cwe in &rec.cwes {
            *counts.entry(cwe.as_str()).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let mut table: Vec<CweFrequency> = counts
        .into_iter()
        .map(|(cwe, count)| CweFrequency {
            cwe: cwe.to_string(),
            count,
            percent: 100.0 * count as f64 / total as f64,
        })
        .collect();
    table.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.cwe.cmp(&b.cwe)));
    table
}

/// CSV `cwe,count,percent` with percentages to two decimals.
pub fn frequencies_csv(table: &[CweFrequency]) -> String {
    let mut out = String::from("cwe,count,percent\n");
    for row in table {
        out.push_str(&format!("{},{},{:.2}\n", row.cwe, row.count, row.percent));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Origin;

    fn finding(tool: &str, f: &str) -> Finding {
        Finding::new(tool, f)
    }

    #[test]
    fn default_mapping_mixes_verdicts() {
        let m = CweMapping::default_mapping();
        assert!(m.rows().iter().any(|r| r.vulnerable));
        assert!(m.rows().iter().any(|r| !r.vulnerable));
    }

    #[test]
    fn header_only_is_empty() {
        let m = parse_mapping("tool,finding,cwe,vulnerable\n".as_bytes()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn duplicate_rows_rejected() {
        let text =
            "tool,finding,cwe,vulnerable\na,b,CWE-1,true\na,c,CWE-2,false\na,b,CWE-3,false\n";
        match parse_mapping(text.as_bytes()) {
            Err(LabelError::DuplicateMappingRow { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(matches!(
            parse_mapping("tool,finding,cwe,vulnerable\na,b,CWE-1,yes\n".as_bytes()),
            Err(LabelError::Parse { row: 2, .. })
        ));
        assert!(matches!(
            parse_mapping("a,b\n".as_bytes()),
            Err(LabelError::Parse { row: 1, .. })
        ));
        assert!(matches!(
            parse_mapping("tool,finding,cwe,vulnerable\na,b\n".as_bytes()),
            Err(LabelError::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn out_of_bound_access_is_vulnerable() {
        let m = CweMapping::default_mapping();
        let l = label_function(&[finding("clang", "Out-of-bound array access")], &m);
        assert!(l.vulnerable);
        assert_eq!(l.cwes.into_iter().collect::<Vec<_>>(), ["CWE-805"]);
    }

    #[test]
    fn unused_struct_member_is_not_vulnerable() {
        let m = CweMapping::default_mapping();
        let l = label_function(&[finding("cppcheck", "Unused struct member")], &m);
        assert!(!l.vulnerable);
        assert!(l.cwes.is_empty());
        assert_eq!(
            m.lookup(&finding("cppcheck", "Unused struct member"))
                .unwrap()
                .cwe,
            "CWE-563"
        );
    }

    #[test]
    fn no_findings_and_unmapped() {
        let m = CweMapping::default_mapping();
        assert_eq!(label_function(&[], &m), BinaryLabel::default());
        let l = label_function(&[finding("lint", "whatever")], &m);
        assert!(!l.vulnerable);
        assert_eq!(l.unmapped, 1);
    }

    #[test]
    fn existing_labels_win() {
        let m = CweMapping::default_mapping();
        let mut a = FunctionRecord::new("a", "", Origin::Sateiv);
        a.label = Some(false);
        a.findings = vec![finding("clang", "Dereference of null pointer")];
        let mut b = FunctionRecord::new("b", "", Origin::Debian);
        b.findings = vec![finding("clang", "Dereference of null pointer")];
        let mut recs = vec![a, b];
        let summary = apply_labels(&mut recs, &m);
        assert_eq!(recs[0].label, Some(false));
        assert_eq!(recs[1].label, Some(true));
        assert_eq!(recs[1].cwes, ["CWE-476"]);
        assert_eq!(
            (
                summary.kept_existing,
                summary.labeled_from_findings,
                summary.vulnerable
            ),
            (1, 1, 1)
        );
    }

    fn labeled(id: usize, vulnerable: bool, cwes: &[&str]) -> FunctionRecord {
        let mut r = FunctionRecord::new(id.to_string(), "", Origin::Github);
        r.label = Some(vulnerable);
        r.cwes = cwes.iter().map(|s| s.to_string()).collect();
        r
    }

    #[test]
    fn single_cwe_is_everything() {
        let recs: Vec<_> = (0..5).map(|i| labeled(i, true, &["CWE-476"])).collect();
        let t = cwe_frequencies(&recs);
        assert_eq!(
            t,
            vec![CweFrequency {
                cwe: "CWE-476".into(),
                count: 5,
                percent: 100.0
            }]
        );
    }

    #[test]
    fn no_vulnerable_no_table() {
        let recs: Vec<_> = (0..5).map(|i| labeled(i, false, &["CWE-476"])).collect();
        assert!(cwe_frequencies(&recs).is_empty());
    }

    #[test]
    fn planted_distribution_recovered() {
        // 6 x CWE-120, 3 x CWE-119, 1 x CWE-476 among vulnerable functions,
        // plus non-vulnerable noise that must not count
        let mut recs = Vec::new();
        for (i, cwe) in ["CWE-120"; 6]
            .iter()
            .chain(&["CWE-119"; 3])
            .chain(&["CWE-476"])
            .enumerate()
        {
            recs.push(labeled(i, true, &[cwe]));
        }
        recs.push(labeled(100, false, &["CWE-476"]));
        let t = cwe_frequencies(&recs);
        let got: Vec<_> = t
            .iter()
            .map(|r| (r.cwe.as_str(), r.count, r.percent))
            .collect();
        assert_eq!(
            got,
            [
                ("CWE-120", 6, 60.0),
                ("CWE-119", 3, 30.0),
                ("CWE-476", 1, 10.0)
            ]
        );
        assert_eq!(
            frequencies_csv(&t),
            "cwe,count,percent\nCWE-120,6,60.00\nCWE-119,3,30.00\nCWE-476,1,10.00\n"
        );
    }
}
