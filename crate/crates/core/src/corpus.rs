//! Function corpora: JSON-lines ingest, length cuts, duplicate removal by
//! lexed representation, and seeded train/validation/test splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::{lex, LexError, LexedFunction};

/// Inclusive token-length window used for training data.
pub const MIN_LEN: usize = 10;
pub const MAX_LEN: usize = 500;

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("invalid split ratios {0:?}")]
    InvalidRatios((f64, f64, f64)),
    #[error("cannot split an empty corpus")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Sateiv,
    Debian,
    Github,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub tool: String,
    pub finding: String,
}

impl Finding {
    pub fn new(tool: impl Into<String>, finding: impl Into<String>) -> Self {
        Self {
            tool: tool.into(),
            finding: finding.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum LexStatus {
    #[default]
    NotLexed,
    Lexed(LexedFunction),
    /// Tagged dropped-unlexable; curation removes these.
    Unlexable(LexError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: String,
    pub code: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    /// Vulnerability-relevant CWEs contributed by the findings.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cwes: Vec<String>,
    #[serde(skip)]
    pub lex: LexStatus,
}

impl FunctionRecord {
    pub fn new(id: impl Into<String>, code: impl Into<String>, origin: Origin) -> Self {
        Self {
            id: id.into(),
            code: code.into(),
            origin,
            findings: Vec::new(),
            label: None,
            cwes: Vec::new(),
            lex: LexStatus::NotLexed,
        }
    }

    pub fn lexed(&self) -> Option<&LexedFunction> {
        match &self.lex {
            LexStatus::Lexed(l) => Some(l),
            _ => None,
        }
    }

    pub fn lex_in_place(&mut self) {
        self.lex = match lex(&self.code) {
            Ok(l) => LexStatus::Lexed(l),
            Err(e) => LexStatus::Unlexable(e),
        };
    }
}

/// Parses JSON-lines corpus text. Blank lines are skipped; line numbers are 1-based.
/// Records are lexed (in parallel, order preserved).
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<FunctionRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FunctionRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: rec.id,
            });
        }
        records.push(rec);
    }
    records
        .par_iter_mut()
        .for_each(FunctionRecord::lex_in_place);
    Ok(records)
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Vec<FunctionRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(file))
}

/// Serializes records back to JSON lines (lexing state is not persisted).
pub fn write_corpus(records: &[FunctionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Keeps records whose token length lies in `[min, max]`. Unlexed records are dropped.
pub fn length_filter_range(
    records: Vec<FunctionRecord>,
    min: usize,
    max: usize,
) -> Vec<FunctionRecord> {
    records
        .into_iter()
        .filter(|r| r.lexed().is_some_and(|l| (min..=max).contains(&l.len())))
        .collect()
}

pub fn length_filter(records: Vec<FunctionRecord>) -> Vec<FunctionRecord> {
    length_filter_range(records, MIN_LEN, MAX_LEN)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginCounts {
    pub total: usize,
    pub unlexable: usize,
    pub out_of_length: usize,
    pub duplicates: usize,
    pub passing_curation: usize,
    pub not_vulnerable: usize,
    pub vulnerable: usize,
    pub unlabeled: usize,
}

impl OriginCounts {
    fn add(&mut self, other: &OriginCounts) {
        self.total += other.total;
        self.unlexable += other.unlexable;
        self.out_of_length += other.out_of_length;
        self.duplicates += other.duplicates;
        self.passing_curation += other.passing_curation;
        self.not_vulnerable += other.not_vulnerable;
        self.vulnerable += other.vulnerable;
        self.unlabeled += other.unlabeled;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationStats {
    pub before: usize,
    pub after: usize,
    pub per_origin: BTreeMap<Origin, OriginCounts>,
    pub totals: OriginCounts,
}

impl CurationStats {
    fn finish(&mut self) {
        let mut totals = OriginCounts::default();
        for c in self.per_origin.values() {
            totals.add(c);
        }
        self.before = totals.total;
        self.after = totals.passing_curation;
        self.totals = totals;
    }
}

/// Removes records whose lexed representation duplicates an earlier one
/// (first occurrence in input order wins). Unlexable records are dropped
/// and counted.
pub fn curate(records: Vec<FunctionRecord>) -> (Vec<FunctionRecord>, CurationStats) {
    curate_with_cuts(records, None)
}

/// [`curate`] plus an optional inclusive length window, with the drop
/// reasons tallied per origin.
pub fn curate_with_cuts(
    records: Vec<FunctionRecord>,
    window: Option<(usize, usize)>,
) -> (Vec<FunctionRecord>, CurationStats) {
    let mut stats = CurationStats::default();
    // hash -> indices into `kept` sharing that hash; collisions are resolved
    // by comparing whole sequences
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut kept: Vec<FunctionRecord> = Vec::new();
    for rec in records {
        let counts = stats.per_origin.entry(rec.origin).or_default();
        counts.total += 1;
        let Some(lexed) = rec.lexed() else {
            counts.unlexable += 1;
            continue;
        };
        if let Some((min, max)) = window {
            if !(min..=max).contains(&lexed.len()) {
                counts.out_of_length += 1;
                continue;
            }
        }
        let bucket = seen.entry(lexed.hash().0).or_default();
        let duplicate = bucket
            .iter()
            .any(|&k| kept[k].lexed().map(|l| l.tokens()) == Some(lexed.tokens()));
        if duplicate {
            counts.duplicates += 1;
            continue;
        }
        counts.passing_curation += 1;
        match rec.label {
            Some(true) => counts.vulnerable += 1,
            Some(false) => counts.not_vulnerable += 1,
            None => counts.unlabeled += 1,
        }
        bucket.push(kept.len());
        kept.push(rec);
    }
    stats.finish();
    (kept, stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(text).map_err(|e| CorpusError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Seeded shuffle used for splits: ChaCha8 seeded with `seed` (via
/// `seed_from_u64`), Fisher-Yates from the back, with the swap index for
/// position `i` drawn as `(next_u64() * (i + 1)) >> 64`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Shuffles ids (in record order) and cuts at `floor(r_train * N)` and
/// `floor((r_train + r_val) * N)`.
pub fn split(
    records: &[FunctionRecord],
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<SplitAssignment, CorpusError> {
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    split_ids(&ids, seed, ratios)
}

pub fn split_ids(
    ids: &[&str],
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<SplitAssignment, CorpusError> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(ratios));
    }
    if ids.is_empty() {
        return Err(CorpusError::Empty);
    }
    let n = ids.len();
    let cut1 = ((a * n as f64 + 1e-9).floor() as usize).min(n);
    let cut2 = (((a + b) * n as f64 + 1e-9).floor() as usize).clamp(cut1, n);
    let shuffled: Vec<String> = seeded_permutation(n, seed)
        .into_iter()
        .map(|i| ids[i].to_string())
        .collect();
    Ok(SplitAssignment {
        seed,
        train: shuffled[..cut1].to_vec(),
        val: shuffled[cut1..cut2].to_vec(),
        test: shuffled[cut2..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn rec(id: &str, code: &str) -> FunctionRecord {
        let mut r = FunctionRecord::new(id, code, Origin::Github);
        r.lex_in_place();
        r
    }

    /// A function whose lexed length is exactly `n` (n >= 2).
    fn of_len(id: &str, n: usize) -> FunctionRecord {
        // "x ;" repeated gives 2 tokens each; an extra "y" pads odd lengths
        let mut code = "x; ".repeat(n / 2);
        if n % 2 == 1 {
            code.push('y');
        }
        let r = rec(id, &code);
        assert_eq!(r.lexed().unwrap().len(), n);
        r
    }

    #[test]
    fn parse_empty_and_ordered() {
        assert!(parse_corpus(Cursor::new("")).unwrap().is_empty());
        let text = r#"{"id":"a","code":"int x;","origin":"github"}
{"id":"b","code":"int y;","origin":"debian","label":true}

{"id":"c","code":"f();","origin":"sateiv","findings":[{"tool":"clang","finding":"x"}]}
"#;
        let recs = parse_corpus(Cursor::new(text)).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(recs[1].label, Some(true));
        assert_eq!(recs[2].findings, vec![Finding::new("clang", "x")]);
        assert!(recs.iter().all(|r| r.lexed().is_some()));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"code\":\"\",\"origin\":\"github\"}\n{not json}\n";
        match parse_corpus(Cursor::new(text)) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_origin = "{\"id\":\"a\",\"code\":\"\",\"origin\":\"gitlab\"}\n";
        assert!(matches!(
            parse_corpus(Cursor::new(bad_origin)),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"a\",\"code\":\"\",\"origin\":\"github\"}\n{\"id\":\"a\",\"code\":\"\",\"origin\":\"github\"}\n";
        assert!(matches!(
            parse_corpus(Cursor::new(text)),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn unlexable_records_are_tagged() {
        let text = "{\"id\":\"a\",\"code\":\"x @ y\",\"origin\":\"github\"}\n";
        let recs = parse_corpus(Cursor::new(text)).unwrap();
        assert!(matches!(recs[0].lex, LexStatus::Unlexable(_)));
        let (kept, stats) = curate(recs);
        assert!(kept.is_empty());
        assert_eq!(stats.totals.unlexable, 1);
    }

    #[test]
    fn length_boundaries() {
        let recs = vec![
            of_len("9", 9),
            of_len("10", 10),
            of_len("500", 500),
            of_len("501", 501),
        ];
        let kept: Vec<_> = length_filter(recs).into_iter().map(|r| r.id).collect();
        assert_eq!(kept, ["10", "500"]);
    }

    #[test]
    fn length_filter_identity_when_in_range() {
        let recs = vec![of_len("a", 12), of_len("b", 40)];
        assert_eq!(length_filter(recs.clone()), recs);
    }

    #[test]
    fn dedup_identical_and_renamed() {
        let recs = vec![
            rec("a", "int f(int a) { return a + 1; }"),
            rec("b", "int f(int a) { return a + 1; }"),
            rec("c", "int g(int zz) { return zz + 1; }"),
            rec("d", "int g(int zz) { return zz + 2; }"),
        ];
        let (kept, stats) = curate(recs);
        let ids: Vec<_> = kept.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "d"]);
        assert_eq!(stats.before, 4);
        assert_eq!(stats.after, 2);
        assert_eq!(stats.per_origin[&Origin::Github].duplicates, 2);
    }

    #[test]
    fn curate_with_cuts_counts() {
        let recs = vec![of_len("short", 4), of_len("ok", 20), of_len("dup", 20)];
        let (kept, stats) = curate_with_cuts(recs, Some((MIN_LEN, MAX_LEN)));
        assert_eq!(kept.len(), 1);
        let c = &stats.totals;
        assert_eq!(
            (
                c.total,
                c.out_of_length,
                c.duplicates,
                c.passing_curation,
                c.unlabeled
            ),
            (3, 1, 1, 1, 1)
        );
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<String> = (0..1000).map(|i| format!("f{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let s = split_ids(&refs, 7, DEFAULT_RATIOS).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (800, 100, 100));
        let s = split_ids(&refs[..10], 7, DEFAULT_RATIOS).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn split_deterministic_and_seed_sensitive() {
        let ids: Vec<String> = (0..50).map(|i| format!("f{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let a = split_ids(&refs, 3, DEFAULT_RATIOS).unwrap();
        assert_eq!(a, split_ids(&refs, 3, DEFAULT_RATIOS).unwrap());
        assert_ne!(a, split_ids(&refs, 4, DEFAULT_RATIOS).unwrap());
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_ids(&["a"], 0, (0.5, 0.5, 0.5)),
            Err(CorpusError::InvalidRatios(_))
        ));
        assert!(matches!(
            split_ids(&["a"], 0, (1.2, -0.1, -0.1)),
            Err(CorpusError::InvalidRatios(_))
        ));
        assert!(matches!(
            split_ids(&[], 0, DEFAULT_RATIOS),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn split_json_round_trip() {
        let s = split_ids(&["a", "b", "c"], 1, DEFAULT_RATIOS).unwrap();
        assert_eq!(SplitAssignment::from_json(&s.to_json()).unwrap(), s);
    }
}
