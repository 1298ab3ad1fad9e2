//! Plain-text table dumps.
//!
//! ```text
//! # hgpipe lut v1
//! addr_bits 6
//! alpha -1024
//! beta 0
//! shift 4
//! inverted true
//! out_bits 8
//! out_scale 0.007874015748031496
//! entries 127 119 ...
//! ```
//!
//! Segmented tables start with `# hgpipe segmented-lut v1` and `pivot N`,
//! followed by `[low]` and `[high]` sections each holding a full table body.

use super::{LutTable, SegmentedLutTable, TableDomain};
use crate::{Error, Result};

const TABLE_HEADER: &str = "# hgpipe lut v1";
const SEGMENTED_HEADER: &str = "# hgpipe segmented-lut v1";

pub(crate) fn dump_table(t: &LutTable) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    write_body(t, &mut s);
    s
}

fn write_body(t: &LutTable, s: &mut String) {
    use std::fmt::Write;
    let _ = writeln!(s, "addr_bits {}", t.addr_bits);
    let _ = writeln!(s, "alpha {}", t.alpha);
    let _ = writeln!(s, "beta {}", t.beta);
    let _ = writeln!(s, "shift {}", t.shift);
    let _ = writeln!(s, "inverted {}", t.inverted);
    let _ = writeln!(s, "out_bits {}", t.out_bits);
    let _ = writeln!(s, "out_scale {:?}", t.out_scale);
    s.push_str("entries");
    for e in &t.entries {
        let _ = write!(s, " {e}");
    }
    s.push('\n');
}

pub(crate) fn dump_segmented(t: &SegmentedLutTable) -> String {
    let mut s = format!("{SEGMENTED_HEADER}\npivot {}\n[low]\n", t.pivot);
    write_body(&t.low, &mut s);
    s.push_str("[high]\n");
    write_body(&t.high, &mut s);
    s
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Meaningful lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

#[derive(Default)]
struct Body {
    addr_bits: Option<u32>,
    alpha: Option<i64>,
    beta: Option<i64>,
    shift: Option<i32>,
    inverted: Option<bool>,
    out_bits: Option<u32>,
    out_scale: Option<f64>,
    entries: Option<Vec<i32>>,
    last_line: usize,
}

fn set<T>(slot: &mut Option<T>, v: T, line: usize, key: &str) -> Result<()> {
    if slot.is_some() {
        return Err(err(line, format!("duplicate key `{key}`")));
    }
    *slot = Some(v);
    Ok(())
}

fn num<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("bad value `{v}` for `{key}`")))
}

impl Body {
    fn feed(&mut self, line: usize, l: &str) -> Result<()> {
        self.last_line = line;
        let (key, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        let v = rest.trim();
        match key {
            "addr_bits" => set(&mut self.addr_bits, num(v, line, key)?, line, key),
            "alpha" => set(&mut self.alpha, num(v, line, key)?, line, key),
            "beta" => set(&mut self.beta, num(v, line, key)?, line, key),
            "shift" => set(&mut self.shift, num(v, line, key)?, line, key),
            "inverted" => set(&mut self.inverted, num(v, line, key)?, line, key),
            "out_bits" => set(&mut self.out_bits, num(v, line, key)?, line, key),
            "out_scale" => set(&mut self.out_scale, num(v, line, key)?, line, key),
            "entries" => {
                let entries = v
                    .split_whitespace()
                    .map(|e| num(e, line, key))
                    .collect::<Result<Vec<i32>>>()?;
                set(&mut self.entries, entries, line, key)
            }
            other => Err(err(line, format!("unknown key `{other}`"))),
        }
    }

    fn finish(self) -> Result<LutTable> {
        let line = self.last_line;
        let missing = |k: &str| err(line, format!("missing key `{k}`"));
        let addr_bits = self.addr_bits.ok_or_else(|| missing("addr_bits"))?;
        let domain = TableDomain {
            alpha: self.alpha.ok_or_else(|| missing("alpha"))?,
            beta: self.beta.ok_or_else(|| missing("beta"))?,
            addr_bits,
            inverted: self.inverted.ok_or_else(|| missing("inverted"))?,
        };
        LutTable::from_parts(
            self.entries.ok_or_else(|| missing("entries"))?,
            domain,
            self.shift.ok_or_else(|| missing("shift"))?,
            self.out_bits.ok_or_else(|| missing("out_bits"))?,
            self.out_scale.ok_or_else(|| missing("out_scale"))?,
        )
        .map_err(|e| err(line, e.to_string()))
    }
}

pub fn parse_table(text: &str) -> Result<LutTable> {
    let mut it = lines(text);
    match it.next() {
        Some((_, TABLE_HEADER)) => {}
        Some((n, _)) => return Err(err(n, "expected table header")),
        None => return Err(err(0, "empty input")),
    }
    let mut body = Body::default();
    for (n, l) in it {
        if l.starts_with('#') {
            continue;
        }
        body.feed(n, l)?;
    }
    body.finish()
}

pub fn parse_segmented(text: &str) -> Result<SegmentedLutTable> {
    let mut it = lines(text);
    match it.next() {
        Some((_, SEGMENTED_HEADER)) => {}
        Some((n, _)) => return Err(err(n, "expected segmented table header")),
        None => return Err(err(0, "empty input")),
    }
    let mut pivot = None;
    let mut low: Option<Body> = None;
    let mut high: Option<Body> = None;
    let mut current: Option<&str> = None;
    let mut last = 1;
    for (n, l) in it {
        last = n;
        if l.starts_with('#') {
            continue;
        }
        match l {
            "[low]" | "[high]" => {
                let slot = if l == "[low]" { &mut low } else { &mut high };
                if slot.is_some() {
                    return Err(err(n, format!("duplicate section {l}")));
                }
                *slot = Some(Body::default());
                current = Some(if l == "[low]" { "low" } else { "high" });
            }
            _ => match current {
                None => {
                    let (key, v) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
                    if key != "pivot" {
                        return Err(err(n, format!("unexpected `{key}` before sections")));
                    }
                    set(&mut pivot, num::<i64>(v.trim(), n, key)?, n, key)?;
                }
                Some("low") => low.as_mut().unwrap().feed(n, l)?,
                Some(_) => high.as_mut().unwrap().feed(n, l)?,
            },
        }
    }
    let pivot = pivot.ok_or_else(|| err(last, "missing pivot"))?;
    let low = low.ok_or_else(|| err(last, "missing [low] section"))?.finish()?;
    let high = high.ok_or_else(|| err(last, "missing [high] section"))?.finish()?;
    SegmentedLutTable::new(low, high, pivot).map_err(|e| err(last, e.to_string()))
}
