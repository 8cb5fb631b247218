//! The fixed 156-symbol vocabulary.
//!
//! Ids are assigned densely in table order starting at 1. Id 0 is the
//! padding symbol used by the network and never appears in a lexed function.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Number of symbols in the vocabulary (PAD excluded).
pub const VOCAB_SIZE: usize = 156;

/// Reserved padding id.
pub const PAD: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(u8);

impl TokenId {
    /// Returns `None` for 0 (PAD) and anything past the vocabulary.
    pub fn new(id: u8) -> Option<Self> {
        (1..=VOCAB_SIZE as u8).contains(&id).then_some(Self(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Keyword,
    Operator,
    Separator,
    Digit,
    Placeholder,
    GenericType,
    GenericCall,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Keyword => "keyword",
            Category::Operator => "operator",
            Category::Separator => "separator",
            Category::Digit => "digit",
            Category::Placeholder => "placeholder",
            Category::GenericType => "generic-type",
            Category::GenericCall => "generic-call",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenEntry {
    pub id: TokenId,
    pub name: &'static str,
    pub category: Category,
    /// Source spellings that lex to this token. Empty for digits and
    /// placeholders, which are produced by literal/identifier rules.
    pub lexemes: &'static [&'static str],
}

const KEYWORDS: &[&str] = &[
    // C89
    "auto",
    "break",
    "case",
    "char",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extern",
    "float",
    "for",
    "goto",
    "if",
    "int",
    "long",
    "register",
    "return",
    "short",
    "signed",
    "sizeof",
    "static",
    "struct",
    "switch",
    "typedef",
    "union",
    "unsigned",
    "void",
    "volatile",
    "while",
    // C99
    "inline",
    "restrict",
    "_Bool",
    // C++98
    "asm",
    "bool",
    "catch",
    "class",
    "const_cast",
    "delete",
    "dynamic_cast",
    "explicit",
    "false",
    "friend",
    "mutable",
    "namespace",
    "new",
    "operator",
    "private",
    "protected",
    "public",
    "reinterpret_cast",
    "static_cast",
    "template",
    "this",
    "throw",
    "true",
    "try",
    "typeid",
    "typename",
    "using",
    "virtual",
    "wchar_t",
    // C++11
    "nullptr",
    "constexpr",
    "noexcept",
    "decltype",
    "static_assert",
    "alignof",
];

const OPERATORS: &[(&str, &str)] = &[
    ("op_plus", "+"),
    ("op_minus", "-"),
    ("op_star", "*"),
    ("op_slash", "/"),
    ("op_percent", "%"),
    ("op_lt", "<"),
    ("op_gt", ">"),
    ("op_not", "!"),
    ("op_amp", "&"),
    ("op_pipe", "|"),
    ("op_caret", "^"),
    ("op_tilde", "~"),
    ("op_assign", "="),
    ("op_dot", "."),
    ("op_question", "?"),
    ("op_colon", ":"),
    ("op_inc", "++"),
    ("op_dec", "--"),
    ("op_eq", "=="),
    ("op_ne", "!="),
    ("op_le", "<="),
    ("op_ge", ">="),
    ("op_and", "&&"),
    ("op_or", "||"),
    ("op_shl", "<<"),
    ("op_shr", ">>"),
    ("op_add_assign", "+="),
    ("op_sub_assign", "-="),
    ("op_mul_assign", "*="),
    ("op_div_assign", "/="),
    ("op_mod_assign", "%="),
    ("op_and_assign", "&="),
    ("op_or_assign", "|="),
    ("op_xor_assign", "^="),
    ("op_arrow", "->"),
    ("op_scope", "::"),
    ("op_dot_star", ".*"),
    ("op_shl_assign", "<<="),
    ("op_shr_assign", ">>="),
    ("op_ellipsis", "..."),
    ("op_arrow_star", "->*"),
];

const SEPARATORS: &[(&str, &str)] = &[
    ("sep_lparen", "("),
    ("sep_rparen", ")"),
    ("sep_lbracket", "["),
    ("sep_rbracket", "]"),
    ("sep_lbrace", "{"),
    ("sep_rbrace", "}"),
    ("sep_semicolon", ";"),
    ("sep_comma", ","),
];

const DIGITS: &[&str] = &[
    "int_0", "int_1", "int_2", "int_3", "int_4", "int_5", "int_6", "int_7", "int_8", "int_9",
];

pub const IDENT: &str = "IDENT";
pub const STR_LIT: &str = "STR_LIT";
pub const CHAR_LIT: &str = "CHAR_LIT";
pub const FLOAT_LIT: &str = "FLOAT_LIT";

const PLACEHOLDERS: &[&str] = &[IDENT, STR_LIT, CHAR_LIT, FLOAT_LIT];

const GENERIC_TYPES: &[(&str, &[&str])] = &[
    (
        "gen_u8",
        &[
            "uint8_t", "u8", "UINT8", "uint8", "BYTE", "u_int8_t", "guint8", "UCHAR",
        ],
    ),
    (
        "gen_u16",
        &[
            "uint16_t",
            "u16",
            "UINT16",
            "uint16",
            "WORD",
            "u_int16_t",
            "guint16",
            "USHORT",
        ],
    ),
    (
        "gen_u32",
        &[
            "uint32_t",
            "u32",
            "UINT32",
            "uint32",
            "DWORD",
            "u_int32_t",
            "guint32",
            "UINT",
            "ULONG",
        ],
    ),
    (
        "gen_u64",
        &[
            "uint64_t",
            "u64",
            "UINT64",
            "uint64",
            "QWORD",
            "DWORD64",
            "u_int64_t",
            "guint64",
            "ULONGLONG",
            "ULONG64",
        ],
    ),
    ("gen_s8", &["int8_t", "s8", "i8", "INT8", "int8", "gint8"]),
    (
        "gen_s16",
        &["int16_t", "s16", "i16", "INT16", "int16", "gint16", "SHORT"],
    ),
    (
        "gen_s32",
        &[
            "int32_t", "s32", "i32", "INT32", "int32", "gint32", "INT", "LONG",
        ],
    ),
    (
        "gen_s64",
        &[
            "int64_t", "s64", "i64", "INT64", "int64", "gint64", "LONGLONG", "LONG64",
        ],
    ),
    ("gen_size", &["size_t", "SIZE_T", "rsize_t", "gsize"]),
    ("gen_ssize", &["ssize_t", "SSIZE_T", "ptrdiff_t", "gssize"]),
    (
        "gen_uintptr",
        &[
            "uintptr_t",
            "intptr_t",
            "UINT_PTR",
            "ULONG_PTR",
            "DWORD_PTR",
            "INT_PTR",
            "LONG_PTR",
            "guintptr",
        ],
    ),
    ("gen_bool", &["BOOL", "BOOLEAN", "gboolean"]),
    ("gen_file", &["FILE"]),
];

const GENERIC_CALLS: &[(&str, &[&str])] = &[
    (
        "call_alloc",
        &[
            "malloc", "calloc", "realloc", "kmalloc", "kzalloc", "vmalloc", "alloca", "g_malloc",
            "xmalloc",
        ],
    ),
    ("call_free", &["free", "kfree", "vfree", "g_free"]),
    (
        "call_copy",
        &[
            "strcpy", "strncpy", "memcpy", "memmove", "wcscpy", "wcsncpy", "strlcpy", "bcopy",
        ],
    ),
    ("call_concat", &["strcat", "strncat", "wcscat", "strlcat"]),
    (
        "call_print",
        &[
            "printf",
            "fprintf",
            "sprintf",
            "snprintf",
            "vprintf",
            "vfprintf",
            "vsprintf",
            "vsnprintf",
        ],
    ),
    (
        "call_input",
        &["gets", "fgets", "scanf", "fscanf", "sscanf", "getline"],
    ),
    ("call_strlen", &["strlen", "wcslen", "strnlen"]),
    ("call_memset", &["memset", "bzero"]),
    (
        "call_compare",
        &["strcmp", "strncmp", "memcmp", "strcasecmp", "strncasecmp"],
    ),
    (
        "call_exec",
        &[
            "system", "popen", "execl", "execlp", "execle", "execv", "execvp", "execve",
        ],
    ),
];

/// The canonical vocabulary with lookup indexes.
#[derive(Debug)]
pub struct TokenTable {
    entries: Vec<TokenEntry>,
    by_name: HashMap<&'static str, TokenId>,
    /// Keyword and generic spellings (identifier-shaped lexemes).
    words: HashMap<&'static str, TokenId>,
    /// Operator and separator spellings.
    puncts: HashMap<&'static str, TokenId>,
    digits: [TokenId; 10],
    ident: TokenId,
    str_lit: TokenId,
    char_lit: TokenId,
    float_lit: TokenId,
}

static TABLE: OnceLock<TokenTable> = OnceLock::new();

/// Returns the canonical token table. Every call yields the same instance.
pub fn build_token_table() -> &'static TokenTable {
    TABLE.get_or_init(TokenTable::construct)
}

// Leaks the keyword names once; the table lives for the whole process.
fn keyword_name(kw: &'static str) -> &'static str {
    Box::leak(format!("kw_{kw}").into_boxed_str())
}

impl TokenTable {
    fn construct() -> Self {
        let mut rows: Vec<(&'static str, Category, &'static [&'static str])> = Vec::new();
        for kw in KEYWORDS {
            rows.push((
                keyword_name(kw),
                Category::Keyword,
                std::slice::from_ref(kw),
            ));
        }
        for (name, spelling) in OPERATORS {
            rows.push((name, Category::Operator, std::slice::from_ref(spelling)));
        }
        for (name, spelling) in SEPARATORS {
            rows.push((name, Category::Separator, std::slice::from_ref(spelling)));
        }
        for name in DIGITS {
            rows.push((name, Category::Digit, &[]));
        }
        for name in PLACEHOLDERS {
            rows.push((name, Category::Placeholder, &[]));
        }
        for (name, lexemes) in GENERIC_TYPES {
            rows.push((name, Category::GenericType, lexemes));
        }
        for (name, lexemes) in GENERIC_CALLS {
            rows.push((name, Category::GenericCall, lexemes));
        }
        assert_eq!(rows.len(), VOCAB_SIZE, "vocabulary size drifted");

        let entries: Vec<TokenEntry> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (name, category, lexemes))| TokenEntry {
                id: TokenId(i as u8 + 1),
                name,
                category,
                lexemes,
            })
            .collect();

        let mut by_name = HashMap::new();
        let mut words = HashMap::new();
        let mut puncts = HashMap::new();
        for e in &entries {
            let prev = by_name.insert(e.name, e.id);
            assert!(prev.is_none(), "duplicate token name {}", e.name);
            let target = match e.category {
                Category::Operator | Category::Separator => &mut puncts,
                _ => &mut words,
            };
            for lexeme in e.lexemes {
                let prev = target.insert(*lexeme, e.id);
                assert!(prev.is_none(), "lexeme {lexeme} mapped twice");
            }
        }
        let id = |name: &str| by_name[name];
        let digits = std::array::from_fn(|d| id(DIGITS[d]));
        Self {
            ident: id(IDENT),
            str_lit: id(STR_LIT),
            char_lit: id(CHAR_LIT),
            float_lit: id(FLOAT_LIT),
            digits,
            entries,
            by_name,
            words,
            puncts,
        }
    }

    pub fn entries(&self) -> &[TokenEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: TokenId) -> &TokenEntry {
        &self.entries[id.index() - 1]
    }

    pub fn name(&self, id: TokenId) -> &'static str {
        self.entry(id).name
    }

    pub fn id(&self, name: &str) -> Option<TokenId> {
        self.by_name.get(name).copied()
    }

    /// Keyword or generic token for an identifier-shaped word.
    pub fn word(&self, word: &str) -> Option<TokenId> {
        self.words.get(word).copied()
    }

    pub fn punct(&self, spelling: &str) -> Option<TokenId> {
        self.puncts.get(spelling).copied()
    }

    pub fn digit(&self, d: u8) -> TokenId {
        self.digits[d as usize]
    }

    pub fn ident(&self) -> TokenId {
        self.ident
    }

    pub fn str_lit(&self) -> TokenId {
        self.str_lit
    }

    pub fn char_lit(&self) -> TokenId {
        self.char_lit
    }

    pub fn float_lit(&self) -> TokenId {
        self.float_lit
    }

    /// CSV dump with header `id,name,category`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,name,category\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.id, e.name, e.category.as_str()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn exactly_156_unique_rows() {
        let t = build_token_table();
        assert_eq!(t.len(), 156);
        let ids: HashSet<_> = t.entries().iter().map(|e| e.id).collect();
        let names: HashSet<_> = t.entries().iter().map(|e| e.name).collect();
        assert_eq!(ids.len(), 156);
        assert_eq!(names.len(), 156);
        assert_eq!(t.entries().first().unwrap().id.get(), 1);
        assert_eq!(t.entries().last().unwrap().id.get(), 156);
    }

    #[test]
    fn repeated_calls_return_same_table() {
        assert!(std::ptr::eq(build_token_table(), build_token_table()));
    }

    #[test]
    fn digit_tokens_present() {
        let t = build_token_table();
        for d in 0..10u8 {
            let id = t.id(&format!("int_{d}")).expect("digit token");
            assert_eq!(t.digit(d), id);
            assert_eq!(t.entry(id).category, Category::Digit);
        }
    }

    #[test]
    fn u32_family_shares_one_token() {
        let t = build_token_table();
        let family = ["u32", "uint32_t", "UINT32", "uint32", "DWORD"];
        let ids: HashSet<_> = family.iter().map(|w| t.word(w).unwrap()).collect();
        assert_eq!(ids.len(), 1);
        let id = *ids.iter().next().unwrap();
        assert_eq!(t.name(id), "gen_u32");
        assert_eq!(t.entry(id).category, Category::GenericType);
    }

    #[test]
    fn pad_is_not_a_token() {
        assert!(TokenId::new(PAD).is_none());
        assert!(TokenId::new(157).is_none());
        assert!(TokenId::new(156).is_some());
    }

    #[test]
    fn csv_dump_shape() {
        let csv = build_token_table().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 157);
        assert_eq!(lines[0], "id,name,category");
        assert!(lines.contains(&"1,kw_auto,keyword"));
    }
}
