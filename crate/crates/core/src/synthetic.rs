//! Seeded generator of labelled toy corpora.
//!
//! Filler code draws only from call families that never appear in the
//! planted patterns (string concatenation, unbounded input, formatted
//! printing), so a function is vulnerable exactly when it contains one of
//! the three planted statements. Labels come from analyzer-style findings
//! that the default CWE mapping turns into verdicts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Finding, FunctionRecord, Origin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub functions: usize,
    pub vulnerable_fraction: f64,
    /// Filler statements per function, inclusive range.
    pub statements: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            functions: 2000,
            vulnerable_fraction: 0.1,
            statements: (3, 12),
            seed: 0,
        }
    }
}

/// A planted vulnerable statement and the finding that flags it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pattern {
    pub name: &'static str,
    pub finding: (&'static str, &'static str),
}

pub const PATTERNS: [Pattern; 3] = [
    Pattern {
        name: "strcat",
        finding: ("flawfinder", "buffer/strcat"),
    },
    Pattern {
        name: "gets",
        finding: ("flawfinder", "buffer/gets"),
    },
    Pattern {
        name: "sprintf",
        finding: ("flawfinder", "buffer/sprintf"),
    },
];

const NAMES: &[&str] = &[
    "buf", "len", "idx", "count", "ptr", "dst", "src", "tmp", "node", "size", "flags", "res",
    "val", "key", "item", "head", "tail", "offset", "limit", "state",
];
const TYPES: &[&str] = &[
    "int", "char", "unsigned", "long", "size_t", "uint32_t", "short", "int64_t",
];
const ARITH: &[&str] = &["+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>"];
const CMP: &[&str] = &["<", ">", "<=", ">=", "==", "!="];

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs[self.rng.random_range(0..xs.len())]
    }

    fn name(&mut self) -> String {
        let base = self.pick(NAMES);
        match self.rng.random_range(0..3) {
            0 => base.to_string(),
            _ => format!("{base}{}", self.rng.random_range(0..10)),
        }
    }

    fn int(&mut self) -> String {
        match self.rng.random_range(0..4) {
            0 => format!("0x{:x}", self.rng.random_range(0..256)),
            _ => self.rng.random_range(0..100).to_string(),
        }
    }

    fn operand(&mut self) -> String {
        if self.rng.random_bool(0.6) {
            self.name()
        } else {
            self.int()
        }
    }

    fn statement(&mut self) -> String {
        let (a, b, c) = (self.name(), self.operand(), self.operand());
        match self.rng.random_range(0..12) {
            0 => format!("{} {a} = {b};", self.pick(TYPES)),
            1 => format!("{a} = {b} {} {c};", self.pick(ARITH)),
            2 => format!("if ({a} {} {b}) {{ {c} = {a}; }}", self.pick(CMP)),
            3 => format!("for (i = 0; i < {b}; i++) {{ {a}[i] = {c}; }}"),
            4 => format!("while ({a} > {b}) {{ {a}--; }}"),
            5 => format!("{a} = malloc({b} * sizeof(int));"),
            6 => format!("free({a});"),
            7 => format!("{a} = strlen({b});"),
            8 => format!("memset({a}, 0, {b});"),
            9 => format!("memcpy({a}, {b}, {c});"),
            10 => format!("if (strcmp({a}, {b}) == 0) return {c};"),
            _ => format!("{a}->{} = {b}; // update", self.pick(NAMES)),
        }
    }

    fn planted(&mut self, which: usize) -> String {
        let (a, b) = (self.name(), self.name());
        match which {
            0 => format!("strcat({a}, {b});"),
            1 => format!("gets({a});"),
            _ => format!("sprintf({a}, \"%s\", {b});"),
        }
    }

    fn function(&mut self, cfg: &SyntheticConfig, planted: Option<usize>) -> String {
        let count = self.rng.random_range(cfg.statements.0..=cfg.statements.1);
        let mut body: Vec<String> = (0..count).map(|_| self.statement()).collect();
        if let Some(which) = planted {
            let at = self.rng.random_range(0..=body.len());
            body.insert(at, self.planted(which));
        }
        let fname = format!("{}_{}", self.pick(NAMES), self.rng.random_range(0..10_000));
        let (p1, p2) = (self.name(), self.name());
        let mut out = format!("static int {fname}(char *{p1}, int {p2})\n{{\n    int i;\n");
        for stmt in body {
            out.push_str("    ");
            out.push_str(&stmt);
            out.push('\n');
        }
        out.push_str(&format!("    return {};\n}}\n", self.operand()));
        out
    }
}

/// Generates `cfg.functions` records with ids `syn-00000`, ... Exactly
/// `round(functions * vulnerable_fraction)` of them carry a planted
/// pattern (cycling through [`PATTERNS`]) and a matching finding; the rest
/// occasionally carry a benign finding. Labels are left unset.
pub fn generate(cfg: &SyntheticConfig) -> Vec<FunctionRecord> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let n = cfg.functions;
    let vulnerable = ((n as f64) * cfg.vulnerable_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut g.rng);
    let mut planted = vec![None; n];
    for (j, &i) in order[..vulnerable.min(n)].iter().enumerate() {
        planted[i] = Some(j % PATTERNS.len());
    }
    (0..n)
        .map(|i| {
            let code = g.function(cfg, planted[i]);
            let mut rec = FunctionRecord::new(format!("syn-{i:05}"), code, Origin::Other);
            match planted[i] {
                Some(p) => {
                    let (tool, finding) = PATTERNS[p].finding;
                    rec.findings.push(Finding::new(tool, finding));
                }
                None if g.rng.random_bool(0.2) => rec
                    .findings
                    .push(Finding::new("cppcheck", "Unread variable")),
                None => {}
            }
            rec
        })
        .collect()
}
