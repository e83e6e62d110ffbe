//! Event traces: `time<TAB>tiebreak<TAB>kind<TAB>details` lines under a
//! `streamckpt-trace v1` header. Lines starting with `#` are comments and
//! do not take part in the hash.

use std::fmt::Write as _;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::time::Ticks;

pub const TRACE_HEADER: &str = "streamckpt-trace v1";

pub struct Trace {
    hasher: FnvHasher,
    lines: Option<Vec<String>>,
    count: u64,
    buf: String,
}

impl Trace {
    pub fn new(keep_lines: bool) -> Self {
        Trace { hasher: FnvHasher::default(), lines: keep_lines.then(Vec::new), count: 0, buf: String::new() }
    }

    pub fn push(&mut self, time: Ticks, tiebreak: u64, kind: &str, details: std::fmt::Arguments<'_>) {
        self.buf.clear();
        let _ = write!(self.buf, "{time}\t{tiebreak}\t{kind}\t{details}");
        self.hasher.write(self.buf.as_bytes());
        self.hasher.write(b"\n");
        self.count += 1;
        if let Some(lines) = &mut self.lines {
            lines.push(self.buf.clone());
        }
    }

    pub fn hash(&self) -> u64 {
        self.hasher.finish()
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn into_lines(self) -> Option<Vec<String>> {
        self.lines
    }
}

/// FNV-1a 64 over body lines, each followed by a newline.
pub fn hash_lines<'a, I: IntoIterator<Item = &'a str>>(lines: I) -> u64 {
    let mut h = FnvHasher::default();
    for l in lines {
        h.write(l.as_bytes());
        h.write(b"\n");
    }
    h.finish()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLine {
    pub time: Ticks,
    pub tiebreak: u64,
    pub kind: String,
    pub details: String,
}

impl TraceLine {
    /// Value of a `key=value` detail field.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.details.split(' ').find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
    }

    pub fn num(&self, key: &str) -> Option<u64> {
        self.field(key)?.parse().ok()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedTrace {
    pub comments: Vec<String>,
    pub lines: Vec<TraceLine>,
    pub hash: u64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("missing `{TRACE_HEADER}` header")]
    MissingHeader,
    #[error("line {0}: malformed trace line")]
    Malformed(usize),
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace, TraceParseError> {
    let mut it = text.lines();
    if it.next().map(str::trim) != Some(TRACE_HEADER) {
        return Err(TraceParseError::MissingHeader);
    }
    let mut out = ParsedTrace::default();
    let mut body = Vec::new();
    for (n, line) in it.enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            out.comments.push(c.to_string());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, '\t');
        let (Some(t), Some(tb), Some(kind)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(TraceParseError::Malformed(n + 2));
        };
        let (Ok(time), Ok(tiebreak)) = (t.parse(), tb.parse()) else {
            return Err(TraceParseError::Malformed(n + 2));
        };
        out.lines.push(TraceLine {
            time,
            tiebreak,
            kind: kind.to_string(),
            details: parts.next().unwrap_or("").to_string(),
        });
        body.push(line);
    }
    out.hash = hash_lines(body);
    Ok(out)
}

/// Renders a trace file; `comments` become `#` lines after the header.
pub fn write_trace(comments: &[String], lines: &[String]) -> String {
    let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum::<usize>() + 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for c in comments {
        out.push('#');
        out.push_str(c);
        out.push('\n');
    }
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}
