//! File formats: event streams (text and binary), PGM/PPM rasters,
//! timestamp and ground-truth lists, tracker output CSV, and the flat
//! `key = value` configuration syntax. All writers go through
//! [`atomic_write`] so interrupted runs never leave truncated artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::events::{BoundingBox, Event, Polarity, SensorGeometry};

/// Write `bytes` to `path` via a temporary sibling file plus rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp = dir.join(file_name);
    tmp.set_extension("tmp-evtrack");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Event text format: one `t_us,x,y,p` line per event, p in {1,-1}.

pub fn write_events_text(path: &Path, events: &[Event]) -> Result<()> {
    let mut buf = String::new();
    for e in events {
        buf.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.polarity.sign()));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_events_text(path: &Path) -> Result<Vec<Event>> {
    let text = fs::read_to_string(path)?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| {
            parts
                .next()
                .ok_or_else(|| Error::parse(path, i + 1, format!("missing field `{name}`")))
        };
        let t = field("t")?
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad timestamp: {e}")))?;
        let x = field("x")?
            .trim()
            .parse::<u16>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad x: {e}")))?;
        let y = field("y")?
            .trim()
            .parse::<u16>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad y: {e}")))?;
        let p = field("p")?
            .trim()
            .parse::<i8>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad polarity: {e}")))?;
        let polarity = Polarity::from_sign(p)
            .map_err(|_| Error::parse(path, i + 1, format!("polarity must be 1 or -1, got {p}")))?;
        events.push(Event::new(t, x, y, polarity));
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Event binary format: magic `SEVT`, version u32 LE = 1, width u16 LE,
// height u16 LE, count u64 LE; per event t u64 LE, x u16 LE, y u16 LE,
// p i8 (+1/-1).

const EVENT_MAGIC: &[u8; 4] = b"SEVT";
const EVENT_VERSION: u32 = 1;

pub fn write_events_binary(path: &Path, events: &[Event], geometry: SensorGeometry) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + events.len() * 13);
    buf.extend_from_slice(EVENT_MAGIC);
    buf.write_u32::<LittleEndian>(EVENT_VERSION).unwrap();
    buf.write_u16::<LittleEndian>(geometry.width() as u16).unwrap();
    buf.write_u16::<LittleEndian>(geometry.height() as u16).unwrap();
    buf.write_u64::<LittleEndian>(events.len() as u64).unwrap();
    for e in events {
        buf.write_u64::<LittleEndian>(e.t).unwrap();
        buf.write_u16::<LittleEndian>(e.x).unwrap();
        buf.write_u16::<LittleEndian>(e.y).unwrap();
        buf.write_i8(e.polarity.sign()).unwrap();
    }
    atomic_write(path, &buf)
}

pub fn read_events_binary(path: &Path) -> Result<(Vec<Event>, SensorGeometry)> {
    let data = fs::read(path)?;
    if data.len() < 20 {
        return Err(Error::format("event file", "shorter than the fixed header"));
    }
    if &data[0..4] != EVENT_MAGIC {
        return Err(Error::format("event file", "bad magic, expected SEVT"));
    }
    let version = LittleEndian::read_u32(&data[4..8]);
    if version != EVENT_VERSION {
        return Err(Error::format(
            "event file",
            format!("unsupported version {version}"),
        ));
    }
    let width = LittleEndian::read_u16(&data[8..10]) as usize;
    let height = LittleEndian::read_u16(&data[10..12]) as usize;
    let count = LittleEndian::read_u64(&data[12..20]) as usize;
    let need = 20 + count.checked_mul(13).ok_or_else(|| {
        Error::format("event file", "event count overflows the record size")
    })?;
    if data.len() != need {
        return Err(Error::format(
            "event file",
            format!("expected {need} bytes for {count} events, file has {}", data.len()),
        ));
    }
    let geometry = SensorGeometry::new(width, height)
        .map_err(|_| Error::format("event file", "zero sensor dimensions in header"))?;
    let mut events = Vec::with_capacity(count);
    for i in 0..count {
        let off = 20 + i * 13;
        let t = LittleEndian::read_u64(&data[off..off + 8]);
        let x = LittleEndian::read_u16(&data[off + 8..off + 10]);
        let y = LittleEndian::read_u16(&data[off + 10..off + 12]);
        let p = data[off + 12] as i8;
        let polarity = Polarity::from_sign(p).map_err(|_| {
            Error::format("event file", format!("event {i} has polarity byte {p}"))
        })?;
        events.push(Event::new(t, x, y, polarity));
    }
    Ok((events, geometry))
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, 8-bit) and PPM (P6) rasters.

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    atomic_write(path, &buf)
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let data = fs::read(path)?;
    let mut pos = 0usize;

    fn token(data: &[u8], pos: &mut usize) -> Option<String> {
        // Skip whitespace and `#` comment lines.
        loop {
            while *pos < data.len() && data[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < data.len() && data[*pos] == b'#' {
                while *pos < data.len() && data[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&data[start..*pos]).into_owned())
    }

    let magic = token(&data, &mut pos).ok_or_else(|| Error::format("PGM file", "empty file"))?;
    if magic != "P5" {
        return Err(Error::format(
            "PGM file",
            format!("expected binary PGM magic P5, got `{magic}`"),
        ));
    }
    let parse_dim = |s: Option<String>, what: &str| -> Result<usize> {
        s.ok_or_else(|| Error::format("PGM file", format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| Error::format("PGM file", format!("bad {what}: {e}")))
    };
    let width = parse_dim(token(&data, &mut pos), "width")?;
    let height = parse_dim(token(&data, &mut pos), "height")?;
    let maxval = parse_dim(token(&data, &mut pos), "maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            "PGM file",
            format!("only 8-bit PGM supported, maxval {maxval}"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if data.len() < pos + width * height {
        return Err(Error::format(
            "PGM file",
            format!(
                "raster truncated: need {} bytes, have {}",
                width * height,
                data.len().saturating_sub(pos)
            ),
        ));
    }
    Ok((width, height, data[pos..pos + width * height].to_vec()))
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    debug_assert_eq!(rgb.len(), width * height * 3);
    let mut buf = format!("P6\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(rgb);
    atomic_write(path, &buf)
}

// ---------------------------------------------------------------------------
// Timestamp and ground-truth lists.

pub fn write_timestamps(path: &Path, timestamps: &[u64]) -> Result<()> {
    let mut buf = String::new();
    for t in timestamps {
        buf.push_str(&format!("{t}\n"));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_timestamps(path: &Path) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse::<u64>()
                .map_err(|e| Error::parse(path, i + 1, format!("bad timestamp: {e}")))?,
        );
    }
    Ok(out)
}

/// Ground-truth boxes, one `cx,cy,w,h` line per timestamp.
pub fn write_groundtruth(path: &Path, boxes: &[BoundingBox]) -> Result<()> {
    let mut buf = String::new();
    for b in boxes {
        buf.push_str(&format!("{},{},{},{}\n", b.cx, b.cy, b.w, b.h));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_groundtruth(path: &Path) -> Result<Vec<BoundingBox>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, i + 1, format!("bad number: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected cx,cy,w,h, got {} fields", vals.len()),
            ));
        }
        out.push(
            BoundingBox::new(vals[0], vals[1], vals[2], vals[3])
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tracker output: one `t_start_us,t_end_us,cx,cy,w,h,skipped` row per step.

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub t_start: u64,
    pub t_end: u64,
    pub bbox: BoundingBox,
    pub skipped: bool,
}

pub fn write_track(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t_start,
            r.t_end,
            r.bbox.cx,
            r.bbox.cy,
            r.bbox.w,
            r.bbox.h,
            r.skipped as u8
        ));
    }
    atomic_write(path, buf.as_bytes())
}

pub fn read_track(path: &Path) -> Result<Vec<TrackRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let parse_u64 = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|e| Error::parse(path, i + 1, format!("bad {what}: {e}")))
        };
        let parse_f64 = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(path, i + 1, format!("bad {what}: {e}")))
        };
        let bbox = BoundingBox::new(
            parse_f64(fields[2], "cx")?,
            parse_f64(fields[3], "cy")?,
            parse_f64(fields[4], "w")?,
            parse_f64(fields[5], "h")?,
        )
        .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let skipped = match fields[6] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("skipped flag must be 0 or 1, got `{other}`"),
                ))
            }
        };
        out.push(TrackRecord {
            t_start: parse_u64(fields[0], "t_start")?,
            t_end: parse_u64(fields[1], "t_end")?,
            bbox,
            skipped,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Flat `key = value` files with `#` comments.

/// Parse a flat key/value file, preserving entry order.
pub fn parse_kv(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(idx) => &raw[..idx],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(path, i + 1, format!("expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(path, i + 1, "empty key"));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    parse_kv(path, &text)
}

pub fn write_kv(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut buf = String::new();
    for (k, v) in entries {
        buf.push_str(&format!("{k} = {v}\n"));
    }
    atomic_write(path, buf.as_bytes())
}
