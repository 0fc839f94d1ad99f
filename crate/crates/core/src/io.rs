//! On-disk formats.
//!
//! **TensorFile** is a concatenation of records, each laid out as
//!
//! ```text
//! "CTT1"            4 bytes magic
//! rank              u32 little-endian
//! dims[rank]        u32 little-endian each, outermost first
//! payload           product(dims) × f32 little-endian, row-major
//! name_len          u32 little-endian (0 when the record is unnamed)
//! name              name_len bytes of UTF-8
//! ```
//!
//! Images are stored as a `[S, S]` record named `image`. Sinograms are a
//! `[S, P]` record named `sinogram` (detector rows, angle columns) followed by
//! a `[P]` record named `angles` in radians. Network checkpoints hold one
//! record per parameter, named after the parameter.
//!
//! **PGM** output is binary P5 with maxval 65535 and big-endian samples;
//! 8-bit (maxval <= 255) files are also accepted on input.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{mismatch, CtError, Result};
use crate::geometry::{Image, Sinogram};

pub const MAGIC: &[u8; 4] = b"CTT1";

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            dims,
            data,
        }
    }

    pub fn from_f64(name: impl Into<String>, dims: Vec<usize>, data: &[f64]) -> Self {
        Self::new(name, dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn write_records<W: Write>(w: &mut W, records: &[TensorRecord]) -> std::io::Result<()> {
    for rec in records {
        w.write_all(MAGIC)?;
        w.write_all(&(rec.dims.len() as u32).to_le_bytes())?;
        for &d in &rec.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(rec.data.len() * 4);
        for v in &rec.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.write_all(&(rec.name.len() as u32).to_le_bytes())?;
        w.write_all(rec.name.as_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    label: &'a str,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> CtError {
        CtError::Format {
            path: self.label.to_string(),
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated file while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses every record in `bytes`; `label` names the source in errors.
pub fn parse_records(bytes: &[u8], label: &str) -> Result<Vec<TensorRecord>> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        label,
    };
    let mut out = Vec::new();
    if bytes.is_empty() {
        return Err(cur.err("empty tensor file"));
    }
    while cur.pos < bytes.len() {
        let start = cur.pos;
        if cur.take(4, "magic")? != MAGIC {
            cur.pos = start;
            return Err(cur.err("bad magic, expected CTT1"));
        }
        let rank = cur.u32("rank")? as usize;
        if rank > 8 {
            return Err(cur.err(format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("dimension")? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| cur.err("dimension product overflows"))?;
        let payload = cur.take(
            count
                .checked_mul(4)
                .ok_or_else(|| cur.err("payload size overflows"))?,
            "payload",
        )?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let name_len = cur.u32("name length")? as usize;
        let name_bytes = cur.take(name_len, "name")?.to_vec();
        let name = String::from_utf8(name_bytes).map_err(|_| cur.err("record name is not UTF-8"))?;
        out.push(TensorRecord { name, dims, data });
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[TensorRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_records(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<TensorRecord>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse_records(&bytes, &path.display().to_string())
}

pub fn find<'a>(records: &'a [TensorRecord], name: &str) -> Option<&'a TensorRecord> {
    records.iter().find(|r| r.name == name)
}

pub fn image_record(img: &Image) -> TensorRecord {
    TensorRecord::from_f64("image", vec![img.size, img.size], &img.pixels)
}

pub fn image_from_record(rec: &TensorRecord) -> Result<Image> {
    match rec.dims.as_slice() {
        [r, c] if r == c => Image::from_vec(*r, rec.to_f64()),
        [1, r, c] | [1, 1, r, c] if r == c => Image::from_vec(*r, rec.to_f64()),
        other => Err(mismatch("image record", "[S, S]", format!("{other:?}"))),
    }
}

pub fn sinogram_records(sino: &Sinogram) -> Vec<TensorRecord> {
    let (s, p) = (sino.num_detectors, sino.num_angles());
    let mut rows = Vec::with_capacity(s * p);
    for j in 0..s {
        for a in 0..p {
            rows.push(sino.get(j, a) as f32);
        }
    }
    vec![
        TensorRecord::new("sinogram", vec![s, p], rows),
        TensorRecord::from_f64("angles", vec![p], &sino.angles),
        TensorRecord::from_f64("detector_spacing", vec![1], &[sino.detector_spacing]),
    ]
}

pub fn sinogram_from_records(records: &[TensorRecord]) -> Result<Sinogram> {
    let rec = find(records, "sinogram").ok_or_else(|| {
        CtError::InvalidArgument("tensor file has no 'sinogram' record".into())
    })?;
    let (s, p) = match rec.dims.as_slice() {
        [s, p] => (*s, *p),
        other => return Err(mismatch("sinogram record", "[S, P]", format!("{other:?}"))),
    };
    let angles = match find(records, "angles") {
        Some(a) if a.data.len() == p => a.to_f64(),
        Some(a) => return Err(mismatch("angles record", p, a.data.len())),
        None => crate::geometry::uniform_angles(p),
    };
    let mut data = vec![0.0; s * p];
    for j in 0..s {
        for a in 0..p {
            data[a * s + j] = rec.data[j * p + a] as f64;
        }
    }
    let mut sino = Sinogram::from_data(s, angles, data)?;
    if let Some(ds) = find(records, "detector_spacing") {
        if let Some(&v) = ds.data.first() {
            sino.detector_spacing = v as f64;
        }
    }
    Ok(sino)
}

/// Writes a 16-bit P5 PGM, mapping `[lo, hi]` linearly onto `0..=65535`.
pub fn write_pgm<W: Write>(
    w: &mut W,
    rows: usize,
    cols: usize,
    data: &[f64],
    lo: f64,
    hi: f64,
) -> std::io::Result<()> {
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut buf = Vec::with_capacity(rows * cols * 2);
    for &v in data {
        let q = (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)
}

/// Reads a binary PGM; samples are scaled to `[0, 1]` by the maxval.
pub fn parse_pgm(bytes: &[u8], label: &str) -> Result<(usize, usize, Vec<f64>)> {
    let err = |offset: usize, message: &str| CtError::Format {
        path: label.to_string(),
        offset: offset as u64,
        message: message.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(0, "not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, "malformed PGM header field"))?;
    }
    pos += 1;
    let [cols, rows, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(err(pos, "PGM maxval out of range"));
    }
    let width = if maxval > 255 { 2 } else { 1 };
    let need = rows * cols * width;
    if bytes.len() < pos + need {
        return Err(err(bytes.len(), "truncated PGM pixel data"));
    }
    let data = bytes[pos..pos + need]
        .chunks_exact(width)
        .map(|b| {
            let v = if width == 2 {
                u16::from_be_bytes([b[0], b[1]]) as f64
            } else {
                b[0] as f64
            };
            v / maxval as f64
        })
        .collect();
    Ok((rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_file_reports_offset() {
        let mut bytes = Vec::new();
        write_records(&mut bytes, &[TensorRecord::new("x", vec![2, 2], vec![1.0; 4])]).unwrap();
        bytes.truncate(bytes.len() - 3);
        match parse_records(&bytes, "t.ctt") {
            Err(CtError::Format { path, offset, .. }) => {
                assert_eq!(path, "t.ctt");
                assert!(offset > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_records(b"XXXX", "bad").is_err());
    }

    #[test]
    fn record_layout_is_exact() {
        let mut bytes = Vec::new();
        write_records(&mut bytes, &[TensorRecord::new("ab", vec![1, 2], vec![1.0, -2.0])]).unwrap();
        let mut expected = b"CTT1".to_vec();
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(b"ab");
        assert_eq!(bytes, expected);
    }

    #[test]
    fn pgm_round_trip() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let mut bytes = Vec::new();
        write_pgm(&mut bytes, 3, 4, &data, 0.0, 1.0).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n65535\n"));
        let (r, c, back) = parse_pgm(&bytes, "mem").unwrap();
        assert_eq!((r, c), (3, 4));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        assert!(parse_pgm(b"P2\n1 1\n255\n0", "p2").is_err());
    }
}
