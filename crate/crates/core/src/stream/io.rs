//! Stream files.
//!
//! Text: a header line `n m M`, then one `index delta` line per update.
//! Binary: header of three little-endian `u64` (`n`, `m`, `M`), then `m` records of
//! a little-endian `u32` index followed by a little-endian `i64` delta.

use std::fs;
use std::path::Path;

use super::{Stream, StreamHeader, TurnstileUpdate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Text,
    Binary,
}

impl StreamFormat {
    /// `.bin` selects binary; everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => StreamFormat::Binary,
            _ => StreamFormat::Text,
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_text(text: &str) -> Result<Stream> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let h: Vec<&str> = head.split_whitespace().collect();
    if h.len() != 3 {
        return Err(parse_err(1, "header must be `n m M`"));
    }
    let num = |s: &str| s.parse::<i64>().map_err(|_| parse_err(1, format!("bad number {s:?}")));
    let (n, m, big_m) = (num(h[0])?, num(h[1])?, num(h[2])?);
    if n <= 0 || m < 0 || big_m <= 0 {
        return Err(crate::error::config("header values must be positive"));
    }
    let header = StreamHeader { n: n as usize, m: m as u64, max_delta: big_m };
    let mut updates = Vec::with_capacity(m as usize);
    for (k, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 2 {
            return Err(parse_err(k + 1, "expected `index delta`"));
        }
        let index = f[0].parse::<u64>().map_err(|_| parse_err(k + 1, "bad index"))?;
        let delta = f[1].parse::<i64>().map_err(|_| parse_err(k + 1, "bad delta"))?;
        updates.push(TurnstileUpdate::new(index, delta));
    }
    Stream::new(header, updates)
}

pub fn format_text(s: &Stream) -> String {
    let mut out = format!("{} {} {}\n", s.header.n, s.header.m, s.header.max_delta);
    for u in &s.updates {
        out.push_str(&format!("{} {}\n", u.index, u.delta));
    }
    out
}

pub fn parse_binary(bytes: &[u8]) -> Result<Stream> {
    if bytes.len() < 24 {
        return Err(parse_err(0, "truncated header"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let header = StreamHeader { n: word(0) as usize, m: word(1), max_delta: word(2) as i64 };
    let body = &bytes[24..];
    if !body.len().is_multiple_of(12) || (body.len() / 12) as u64 != header.m {
        return Err(parse_err(0, "record count does not match header"));
    }
    let updates = body
        .chunks_exact(12)
        .map(|r| {
            let index = u32::from_le_bytes(r[..4].try_into().unwrap()) as u64;
            let delta = i64::from_le_bytes(r[4..].try_into().unwrap());
            TurnstileUpdate::new(index, delta)
        })
        .collect();
    Stream::new(header, updates)
}

pub fn format_binary(s: &Stream) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 12 * s.updates.len());
    out.extend_from_slice(&(s.header.n as u64).to_le_bytes());
    out.extend_from_slice(&s.header.m.to_le_bytes());
    out.extend_from_slice(&(s.header.max_delta as u64).to_le_bytes());
    for u in &s.updates {
        out.extend_from_slice(&(u.index as u32).to_le_bytes());
        out.extend_from_slice(&u.delta.to_le_bytes());
    }
    out
}

pub fn read_stream(path: &Path) -> Result<Stream> {
    match StreamFormat::from_path(path) {
        StreamFormat::Binary => parse_binary(&fs::read(path)?),
        StreamFormat::Text => parse_text(&fs::read_to_string(path)?),
    }
}

pub fn write_stream(path: &Path, s: &Stream) -> Result<()> {
    match StreamFormat::from_path(path) {
        StreamFormat::Binary => fs::write(path, format_binary(s))?,
        StreamFormat::Text => fs::write(path, format_text(s))?,
    }
    Ok(())
}
