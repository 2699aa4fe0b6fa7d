//! Stream file formats.
//!
//! Text: a header line `n=<int> m=<int> mode=<ins|turn> order=<rand|arb>` followed by
//! one update per line, `item` or `item delta`.
//!
//! Binary: magic `FPS1`, `u64 n`, `u64 m`, then `m` records of `(u64 item, i64 delta)`,
//! all little-endian. The binary header carries no order claim, so binary streams
//! read as arbitrary order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stream::{check_item, StreamMeta, StreamMode, StreamOrder, Update};

pub const STREAM_MAGIC: &[u8; 4] = b"FPS1";

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile {
    pub meta: StreamMeta,
    pub updates: Vec<Update>,
}

impl StreamFile {
    pub fn new(meta: StreamMeta, updates: Vec<Update>) -> Self {
        Self { meta, updates }
    }
}

fn parse_header(line: &str) -> Result<StreamMeta> {
    let (mut n, mut m, mut mode, mut order) = (None, None, None, None);
    for tok in line.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header token {tok:?}")))?;
        match key {
            "n" => n = Some(val.parse::<u64>().map_err(|e| Error::Format(format!("n: {e}")))?),
            "m" => m = Some(val.parse::<u64>().map_err(|e| Error::Format(format!("m: {e}")))?),
            "mode" => {
                mode = Some(match val {
                    "ins" => StreamMode::InsertionOnly,
                    "turn" => StreamMode::Turnstile,
                    _ => return Err(Error::Format(format!("unknown mode {val:?}"))),
                })
            }
            "order" => {
                order = Some(match val {
                    "rand" => StreamOrder::Random,
                    "arb" => StreamOrder::Arbitrary,
                    _ => return Err(Error::Format(format!("unknown order {val:?}"))),
                })
            }
            _ => return Err(Error::Format(format!("unknown header key {key:?}"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header missing {k}"));
    Ok(StreamMeta {
        n: n.ok_or_else(|| missing("n"))?,
        m: m.ok_or_else(|| missing("m"))?,
        mode: mode.ok_or_else(|| missing("mode"))?,
        order: order.ok_or_else(|| missing("order"))?,
    })
}

fn check_update(meta: &StreamMeta, u: &Update) -> Result<()> {
    check_item(u.item, meta.n)?;
    if meta.mode == StreamMode::InsertionOnly && u.delta != 1 {
        return Err(Error::Mode(format!(
            "delta {} on item {} in an insertion-only stream",
            u.delta, u.item
        )));
    }
    Ok(())
}

pub fn read_text<R: BufRead>(reader: R) -> Result<StreamFile> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Format("empty stream file".into())),
        }
    };
    let meta = parse_header(&header)?;
    let mut updates = Vec::with_capacity(meta.m.min(1 << 24) as usize);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let bad = |what: &str| Error::Format(format!("line {}: {what}", lineno + 2));
        let item = parts
            .next()
            .unwrap()
            .parse::<u64>()
            .map_err(|_| bad("item is not an integer"))?;
        let delta = match parts.next() {
            Some(d) => d.parse::<i64>().map_err(|_| bad("delta is not an integer"))?,
            None => 1,
        };
        if parts.next().is_some() {
            return Err(bad("trailing tokens"));
        }
        let u = Update::new(item, delta);
        check_update(&meta, &u)?;
        updates.push(u);
    }
    if updates.len() as u64 != meta.m {
        return Err(Error::Format(format!(
            "header declares m={} but {} updates follow",
            meta.m,
            updates.len()
        )));
    }
    Ok(StreamFile { meta, updates })
}

pub fn write_text<W: Write>(mut w: W, file: &StreamFile) -> Result<()> {
    let meta = &file.meta;
    let mode = match meta.mode {
        StreamMode::InsertionOnly => "ins",
        StreamMode::Turnstile => "turn",
    };
    let order = match meta.order {
        StreamOrder::Random => "rand",
        StreamOrder::Arbitrary => "arb",
    };
    writeln!(w, "n={} m={} mode={mode} order={order}", meta.n, file.updates.len())?;
    for u in &file.updates {
        if u.delta == 1 {
            writeln!(w, "{}", u.item)?;
        } else {
            writeln!(w, "{} {}", u.item, u.delta)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated binary stream: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads a binary stream whose magic has already been consumed.
fn read_binary_body<R: Read>(mut r: R) -> Result<StreamFile> {
    let n = read_u64(&mut r)?;
    let m = read_u64(&mut r)?;
    let mut updates = Vec::with_capacity(m.min(1 << 24) as usize);
    for _ in 0..m {
        let item = read_u64(&mut r)?;
        let delta = read_u64(&mut r)? as i64;
        check_item(item, n)?;
        updates.push(Update::new(item, delta));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after binary stream".into()));
    }
    let meta = StreamMeta::describe(n, &updates, StreamOrder::Arbitrary);
    Ok(StreamFile { meta, updates })
}

pub fn read_binary<R: Read>(mut r: R) -> Result<StreamFile> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("missing binary magic".into()))?;
    if &magic != STREAM_MAGIC {
        return Err(Error::Format("bad binary magic".into()));
    }
    read_binary_body(r)
}

pub fn write_binary<W: Write>(w: W, n: u64, updates: &[Update]) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(STREAM_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&(updates.len() as u64).to_le_bytes())?;
    for u in updates {
        w.write_all(&u.item.to_le_bytes())?;
        w.write_all(&u.delta.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads either format, chosen by the leading magic bytes.
pub fn read_stream<R: Read>(r: R) -> Result<StreamFile> {
    let mut r = BufReader::new(r);
    let head = r.fill_buf()?;
    if head.len() >= 4 && &head[..4] == STREAM_MAGIC {
        r.consume(4);
        read_binary_body(r)
    } else {
        read_text(r)
    }
}

pub fn read_stream_path(path: impl AsRef<Path>) -> Result<StreamFile> {
    read_stream(File::open(path)?)
}
