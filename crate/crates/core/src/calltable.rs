//! Library/API call tables: which callees are key points and whether each one
//! is a forward (external-input) or backward call.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const CWE119: &str = include_str!("../data/cwe119.tsv");
const CWE399: &str = include_str!("../data/cwe399.tsv");
const ALL: &str = include_str!("../data/all.tsv");
const KNOWN_NAMES: &str = include_str!("../data/known_names.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn tag(self) -> char {
        match self {
            Direction::Forward => 'F',
            Direction::Backward => 'B',
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CallTableError {
    #[error("call table line {line}: expected `<name>\\t<F|B>`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown table mode {0:?} (expected ALL, SEL-CWE119, SEL-CWE399 or SEL-HYBRID)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEntry {
    /// `istream` in `istream.read*`.
    pub owner: Option<String>,
    pub name: String,
    /// Trailing `*` wildcard.
    pub prefix: bool,
    pub direction: Direction,
}

impl CallEntry {
    fn matches(&self, callee: &str) -> bool {
        if self.prefix {
            callee.starts_with(&self.name)
        } else {
            callee == self.name
        }
    }

    pub fn pattern(&self) -> String {
        let mut s = String::new();
        if let Some(o) = &self.owner {
            s.push_str(o);
            s.push('.');
        }
        s.push_str(&self.name);
        if self.prefix {
            s.push('*');
        }
        s
    }
}

/// Which bundled table(s) to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableMode {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "SEL-CWE119")]
    SelCwe119,
    #[serde(rename = "SEL-CWE399")]
    SelCwe399,
    #[serde(rename = "SEL-HYBRID")]
    SelHybrid,
}

impl FromStr for TableMode {
    type Err = CallTableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ALL" => Ok(TableMode::All),
            "SEL-CWE119" => Ok(TableMode::SelCwe119),
            "SEL-CWE399" => Ok(TableMode::SelCwe399),
            "SEL-HYBRID" => Ok(TableMode::SelHybrid),
            _ => Err(CallTableError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for TableMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableMode::All => "ALL",
            TableMode::SelCwe119 => "SEL-CWE119",
            TableMode::SelCwe399 => "SEL-CWE399",
            TableMode::SelHybrid => "SEL-HYBRID",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct CallTable {
    entries: Vec<CallEntry>,
    exact: HashMap<String, usize>,
}

impl CallTable {
    pub fn parse(text: &str) -> Result<Self, CallTableError> {
        let mut table = CallTable::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = || CallTableError::Malformed { line: i + 1, text: raw.to_string() };
            let (pat, dir) = line.split_once('\t').ok_or_else(malformed)?;
            let direction = match dir.trim() {
                "F" => Direction::Forward,
                "B" => Direction::Backward,
                _ => return Err(malformed()),
            };
            let pat = pat.trim();
            if pat.is_empty() {
                return Err(malformed());
            }
            let (pat, prefix) = match pat.strip_suffix('*') {
                Some(p) => (p, true),
                None => (pat, false),
            };
            let (owner, name) = match pat.split_once('.') {
                Some((o, n)) => (Some(o.to_string()), n.to_string()),
                None => (None, pat.to_string()),
            };
            table.push(CallEntry { owner, name, prefix, direction });
        }
        Ok(table)
    }

    fn push(&mut self, entry: CallEntry) {
        if entry.owner.is_none() && !entry.prefix {
            if self.exact.contains_key(&entry.name) {
                return;
            }
            self.exact.insert(entry.name.clone(), self.entries.len());
        } else if self.entries.contains(&entry) {
            return;
        }
        self.entries.push(entry);
    }

    pub fn bundled(mode: TableMode) -> Self {
        let parse = |t| CallTable::parse(t).expect("bundled call table is well-formed");
        match mode {
            TableMode::All => parse(ALL),
            TableMode::SelCwe119 => parse(CWE119),
            TableMode::SelCwe399 => parse(CWE399),
            TableMode::SelHybrid => {
                let mut t = parse(CWE119);
                t.extend(parse(CWE399));
                t
            }
        }
    }

    /// Merge `other` into `self`; entries already present keep their tag.
    pub fn extend(&mut self, other: CallTable) {
        for e in other.entries {
            self.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CallEntry] {
        &self.entries
    }

    /// Look up a plain call `name(...)`, or a member call `obj.name(...)`
    /// when `member` is set. Member entries match on the method name only;
    /// the receiver's type is not known without a parser.
    pub fn lookup(&self, name: &str, member: bool) -> Option<&CallEntry> {
        if !member {
            if let Some(&i) = self.exact.get(name) {
                return Some(&self.entries[i]);
            }
        }
        self.entries
            .iter()
            .find(|e| e.owner.is_some() == member && (e.prefix || e.owner.is_some()) && e.matches(name))
    }
}

/// Every name in any bundled table plus well-known library macros and
/// typedefs. The symbolizer never renames these.
pub fn known_library_names() -> BTreeSet<String> {
    let mut names: BTreeSet<String> = KNOWN_NAMES
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(str::to_string)
        .collect();
    for mode in [TableMode::All, TableMode::SelHybrid] {
        for e in CallTable::bundled(mode).entries {
            if !e.prefix {
                names.insert(e.name);
            }
        }
    }
    names
}

/// True when `name` matches a wildcard entry of any bundled table, e.g.
/// `GetDlgItemTextA` against `GetDlgItem*`.
pub fn is_library_name(name: &str, known: &BTreeSet<String>) -> bool {
    if known.contains(name) {
        return true;
    }
    static_wildcards().iter().any(|w| name.starts_with(w.as_str()))
}

fn static_wildcards() -> &'static [String] {
    use std::sync::OnceLock;
    static W: OnceLock<Vec<String>> = OnceLock::new();
    W.get_or_init(|| {
        CallTable::bundled(TableMode::All)
            .entries
            .into_iter()
            .filter(|e| e.prefix && e.owner.is_none())
            .map(|e| e.name)
            .collect()
    })
}

/// Library calls that write through an argument: the callee and the index of
/// the destination argument. Used to mark that argument as (weakly) defined.
pub fn destination_arg(callee: &str) -> Option<usize> {
    const FIRST: &[&str] = &[
        "memcpy", "wmemcpy", "_memccpy", "memccpy", "memmove", "wmemmove", "memset", "wmemset",
        "strcpy", "strncpy", "strcat", "strncat", "wcscpy", "wcsncpy", "wcscat", "wcsncat",
        "lstrcpy", "lstrcpyn", "lstrcat", "_tcscpy", "_tcsncpy", "_mbscpy", "_mbsnbcpy",
        "CopyMemory", "sprintf", "snprintf", "_snprintf", "_snwprintf", "vsprintf", "vsnprintf",
        "swprintf", "strlcpy", "strlcat", "strcpy_s", "strncpy_s", "strcat_s", "strncat_s",
        "wcscpy_s", "wcsncpy_s", "wcscat_s", "memcpy_s", "memmove_s", "sprintf_s", "snprintf_s",
        "fgets", "fgetws", "gets", "gets_s", "read", "fread", "recv", "recvfrom", "realpath",
        "getcwd", "StringCchCopy", "StringCchCat", "StringCbCopy", "StringCbCat",
    ];
    match callee {
        "bcopy" => Some(1),
        "readlink" => Some(1),
        _ if FIRST.contains(&callee) => Some(0),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_sizes() {
        assert_eq!(CallTable::bundled(TableMode::SelCwe119).len(), 124);
        assert_eq!(CallTable::bundled(TableMode::SelCwe399).len(), 16);
        // asprintf, vsprintf, vasprintf, snprintf, vsnprintf and malloc overlap
        // exactly; _snprintf/_snwprintf are exact in one list and wildcards in the other.
        assert_eq!(CallTable::bundled(TableMode::SelHybrid).len(), 124 + 16 - 6);
        assert!(CallTable::bundled(TableMode::All).len() > 300);
    }

    #[test]
    fn directions() {
        let t = CallTable::bundled(TableMode::SelCwe119);
        assert_eq!(t.lookup("recv", false).unwrap().direction, Direction::Forward);
        assert_eq!(t.lookup("strcpy", false).unwrap().direction, Direction::Backward);
        assert_eq!(t.lookup("my_helper", false), None);
    }

    #[test]
    fn wildcards_and_members() {
        let t = CallTable::bundled(TableMode::SelCwe119);
        assert_eq!(t.lookup("_snprintf_s", false).unwrap().pattern(), "_snprintf*");
        assert_eq!(t.lookup("GetDlgItemTextA", false).unwrap().pattern(), "GetDlgItem*");
        assert_eq!(t.lookup("readsome", true).unwrap().pattern(), "istream.read*");
        assert_eq!(t.lookup("Format", true).unwrap().pattern(), "CString.Format");
        assert!(t.lookup("read", false).is_none());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(CallTable::parse("foo F"), Err(CallTableError::Malformed { line: 1, .. })));
        assert!(matches!(CallTable::parse("foo\tX"), Err(CallTableError::Malformed { .. })));
        let t = CallTable::parse("# c\n\nfoo*\tF\n").unwrap();
        assert_eq!(t.lookup("foobar", false).unwrap().direction, Direction::Forward);
    }

    #[test]
    fn modes_parse() {
        assert_eq!("sel-cwe399".parse::<TableMode>().unwrap(), TableMode::SelCwe399);
        assert!("bogus".parse::<TableMode>().is_err());
    }

    #[test]
    fn known_names() {
        let k = known_library_names();
        assert!(k.contains("strcpy") && k.contains("NULL") && k.contains("fopen"));
        assert!(is_library_name("GetScrollInfo", &k));
        assert!(!is_library_name("test", &k));
    }
}
