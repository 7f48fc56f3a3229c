//! File formats for timestamp streams and coincidence matrices.
//!
//! Tag files come in two flavors:
//! - CSV: an optional one-line JSON header, a `channel,time_ps` column
//!   header, then one record per line with the numeric channel code
//!   (0 = Alice-T, 1 = Alice-F, 2 = Bob-T, 3 = Bob-F).
//! - Binary: magic `BIPTAG01`, then little-endian u64 duration_ps and u64
//!   record count, then packed records of (u8 channel, u64 time_ps).
//!
//! Matrix files carry a one-line JSON header (d, basis_pair, duration,
//! format) followed by either dense rows of counts or sparse `i,j,count`
//! triplets.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BasisPair, CoincidenceMatrix};
use crate::tags::{Channel, TagStream};

const TAG_MAGIC: &[u8; 8] = b"BIPTAG01";

/// Write `contents` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TagHeader {
    format: String,
    duration_ps: u64,
}

fn group_by_channel(mut records: Vec<(u8, u64)>, duration_ps: u64) -> Result<Vec<TagStream>> {
    records.sort_by_key(|&(ch, t)| (ch, t));
    let mut streams = Vec::new();
    let mut iter = records.into_iter().peekable();
    while let Some(&(code, _)) = iter.peek() {
        let channel = Channel::from_code(code)?;
        let mut tags = Vec::new();
        while let Some(&(c, t)) = iter.peek() {
            if c != code {
                break;
            }
            tags.push(t);
            iter.next();
        }
        streams.push(TagStream::new(channel, tags, duration_ps)?);
    }
    Ok(streams)
}

/// Write one or more streams of the same acquisition as CSV.
pub fn write_tags_csv(path: &Path, streams: &[&TagStream]) -> Result<()> {
    let duration_ps = check_common_duration(streams)?;
    let mut out = Vec::new();
    let header = TagHeader {
        format: "tags".to_string(),
        duration_ps,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    writeln!(out, "channel,time_ps")?;
    // Emit in global time order across channels.
    let mut records: Vec<(u64, u8)> = streams
        .iter()
        .flat_map(|s| s.tags().iter().map(|&t| (t, s.channel().code())))
        .collect();
    records.sort_unstable();
    for (t, ch) in records {
        writeln!(out, "{ch},{t}")?;
    }
    atomic_write(path, &out)
}

/// Read a tags CSV; returns one stream per channel present.
pub fn read_tags_csv(path: &Path) -> Result<Vec<TagStream>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::data(format!("{}: empty tag file", path.display()))),
    };
    let mut duration_ps = None;
    let mut records: Vec<(u8, u64)> = Vec::new();
    let mut parse_record = |line: &str| -> Result<()> {
        let line = line.trim();
        if line.is_empty() || line == "channel,time_ps" {
            return Ok(());
        }
        let (ch, t) = line
            .split_once(',')
            .ok_or_else(|| Error::data(format!("malformed tag record {line:?}")))?;
        let ch: u8 = ch
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("malformed channel in tag record {line:?}")))?;
        let t: u64 = t
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("malformed time in tag record {line:?}")))?;
        records.push((ch, t));
        Ok(())
    };
    if first.trim_start().starts_with('{') {
        let header: TagHeader = serde_json::from_str(&first)?;
        duration_ps = Some(header.duration_ps);
    } else {
        parse_record(&first)?;
    }
    for line in lines {
        parse_record(&line?)?;
    }
    // Without a header the acquisition length is taken from the last tag.
    let duration_ps = duration_ps
        .or_else(|| records.iter().map(|&(_, t)| t).max())
        .ok_or_else(|| Error::data(format!("{}: no tag records", path.display())))?;
    group_by_channel(records, duration_ps)
}

/// Write one or more streams of the same acquisition in the binary format.
pub fn write_tags_binary(path: &Path, streams: &[&TagStream]) -> Result<()> {
    let duration_ps = check_common_duration(streams)?;
    let n: u64 = streams.iter().map(|s| s.len() as u64).sum();
    let mut out = Vec::with_capacity(24 + n as usize * 9);
    out.extend_from_slice(TAG_MAGIC);
    out.extend_from_slice(&duration_ps.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    let mut records: Vec<(u64, u8)> = streams
        .iter()
        .flat_map(|s| s.tags().iter().map(|&t| (t, s.channel().code())))
        .collect();
    records.sort_unstable();
    for (t, ch) in records {
        out.push(ch);
        out.extend_from_slice(&t.to_le_bytes());
    }
    atomic_write(path, &out)
}

/// Read a binary tag file; returns one stream per channel present.
pub fn read_tags_binary(path: &Path) -> Result<Vec<TagStream>> {
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != TAG_MAGIC {
        return Err(Error::data(format!(
            "{}: bad magic, not a binary tag file",
            path.display()
        )));
    }
    let mut u64buf = [0u8; 8];
    file.read_exact(&mut u64buf)?;
    let duration_ps = u64::from_le_bytes(u64buf);
    file.read_exact(&mut u64buf)?;
    let n = u64::from_le_bytes(u64buf);
    let mut records = Vec::with_capacity(n as usize);
    let mut rec = [0u8; 9];
    for _ in 0..n {
        file.read_exact(&mut rec)?;
        let t = u64::from_le_bytes(rec[1..9].try_into().expect("8 bytes"));
        records.push((rec[0], t));
    }
    group_by_channel(records, duration_ps)
}

/// Read a tag file, sniffing the binary magic first.
pub fn read_tags(path: &Path) -> Result<Vec<TagStream>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 8];
    let is_binary = match file.read_exact(&mut magic) {
        Ok(()) => &magic == TAG_MAGIC,
        Err(_) => false,
    };
    drop(file);
    if is_binary {
        read_tags_binary(path)
    } else {
        read_tags_csv(path)
    }
}

/// Pick one channel out of a tag file.
pub fn read_channel(path: &Path, channel: Channel) -> Result<TagStream> {
    read_tags(path)?
        .into_iter()
        .find(|s| s.channel() == channel)
        .ok_or_else(|| {
            Error::data(format!(
                "{}: no tags for channel {}",
                path.display(),
                channel.label()
            ))
        })
}

fn check_common_duration(streams: &[&TagStream]) -> Result<u64> {
    let first = streams
        .first()
        .ok_or_else(|| Error::data("no streams to write"))?
        .duration_ps();
    if streams.iter().any(|s| s.duration_ps() != first) {
        return Err(Error::data(
            "streams written together must share a duration",
        ));
    }
    Ok(first)
}

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    format: String,
    d: usize,
    basis_pair: String,
    duration_s: f64,
    duration_ps: u64,
}

/// Write a coincidence matrix; sparse triplets when fewer than a quarter of
/// the cells are occupied, dense rows otherwise.
pub fn write_matrix(path: &Path, m: &CoincidenceMatrix) -> Result<()> {
    let d = m.d();
    let nonzero = m.counts().iter().filter(|&&c| c > 0).count();
    let sparse = nonzero * 4 < d * d;
    let header = MatrixHeader {
        format: if sparse { "sparse" } else { "dense" }.to_string(),
        d,
        basis_pair: m.basis_pair().label().to_string(),
        duration_s: m.duration_s(),
        duration_ps: m.duration_ps(),
    };
    let mut out = Vec::new();
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    if sparse {
        for ((i, j), &c) in m.counts().indexed_iter() {
            if c > 0 {
                writeln!(out, "{i},{j},{c}")?;
            }
        }
    } else {
        let mut line = String::new();
        for i in 0..d {
            line.clear();
            for j in 0..d {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&m.counts()[(i, j)].to_string());
            }
            writeln!(out, "{line}")?;
        }
    }
    atomic_write(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<CoincidenceMatrix> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::data(format!("{}: empty matrix file", path.display())))??;
    let header: MatrixHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::data(format!("{}: bad matrix header: {e}", path.display())))?;
    let d = header.d;
    let basis_pair = BasisPair::from_label(&header.basis_pair)?;
    let duration_ps = if header.duration_ps > 0 {
        header.duration_ps
    } else {
        (header.duration_s * 1e12).round() as u64
    };
    let mut counts = Array2::<u64>::zeros((d, d));
    match header.format.as_str() {
        "dense" => {
            for (i, line) in lines.enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                if i >= d {
                    return Err(Error::data(format!("{}: too many rows", path.display())));
                }
                let row: Vec<&str> = line.split(',').collect();
                if row.len() != d {
                    return Err(Error::data(format!(
                        "{}: row {i} has {} entries, expected {d}",
                        path.display(),
                        row.len()
                    )));
                }
                for (j, v) in row.iter().enumerate() {
                    counts[(i, j)] = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::data(format!("{}: bad count {v:?}", path.display())))?;
                }
            }
        }
        "sparse" => {
            for line in lines {
                let line = line?;
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::data(format!(
                        "{}: bad triplet {line:?}",
                        path.display()
                    )));
                }
                let i: usize = fields[0].trim().parse().map_err(|_| {
                    Error::data(format!("{}: bad row index {line:?}", path.display()))
                })?;
                let j: usize = fields[1].trim().parse().map_err(|_| {
                    Error::data(format!("{}: bad column index {line:?}", path.display()))
                })?;
                let c: u64 = fields[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::data(format!("{}: bad count {line:?}", path.display())))?;
                if i >= d || j >= d {
                    return Err(Error::data(format!(
                        "{}: index ({i}, {j}) outside {d}x{d}",
                        path.display()
                    )));
                }
                counts[(i, j)] += c;
            }
        }
        other => {
            return Err(Error::data(format!(
                "{}: unknown matrix format {other:?}",
                path.display()
            )))
        }
    }
    CoincidenceMatrix::new(counts, basis_pair, duration_ps)
}

/// Serialize any report as pretty JSON, atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    atomic_write(path, &buf)
}

/// Write CSV rows atomically with a column-header line.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = BufWriter::new(&mut out);
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
    }
    atomic_write(path, &out)
}
