//! File formats: PGM (P2/P5) and optional PNG image input, headered CSV for
//! scatter points / seeds / truth, and field export as CSV or flat binary
//! with a JSON sidecar header.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::cluster::SeedPoint;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::metrics::TruthSet;
use crate::scalar::{real, Real};

/// Read a grayscale image; PGM always, PNG when the `png` feature is on.
pub fn read_image<T: Real>(path: &Path) -> Result<ScalarField<T>> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") => read_pgm(path),
        #[cfg(feature = "png")]
        Some("png") => read_png(path),
        other => Err(Error::Parse(format!(
            "unsupported image extension {other:?} (expected pgm{})",
            if cfg!(feature = "png") { " or png" } else { "" }
        ))),
    }
}

/// Read a P2 (ASCII) or P5 (binary) PGM into a field of intensities.
pub fn read_pgm<T: Real>(path: &Path) -> Result<ScalarField<T>> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

pub fn parse_pgm<T: Real>(bytes: &[u8]) -> Result<ScalarField<T>> {
    let mut pos = 0usize;

    // PGM header tokens, skipping whitespace and # comments.
    let mut next_token = |bytes: &[u8]| -> Result<String> {
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
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        Ok(std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::Parse("non-UTF8 PGM header".into()))?
            .to_string())
    };

    let magic = next_token(bytes)?;
    if magic != "P2" && magic != "P5" {
        return Err(Error::Parse(format!("not a PGM (magic {magic})")));
    }
    let width: usize = next_token(bytes)?
        .parse()
        .map_err(|_| Error::Parse("bad PGM width".into()))?;
    let height: usize = next_token(bytes)?
        .parse()
        .map_err(|_| Error::Parse("bad PGM height".into()))?;
    let maxval: u32 = next_token(bytes)?
        .parse()
        .map_err(|_| Error::Parse("bad PGM maxval".into()))?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Parse("invalid PGM dimensions".into()));
    }

    let mut values = Vec::with_capacity(width * height);
    if magic == "P2" {
        for _ in 0..width * height {
            let v: u32 = next_token(bytes)?
                .parse()
                .map_err(|_| Error::Parse("bad P2 sample".into()))?;
            values.push(real::<T>(v as f64));
        }
    } else {
        pos += 1; // single whitespace after maxval
        let wide = maxval > 255;
        let per = if wide { 2 } else { 1 };
        let need = width * height * per;
        if bytes.len() < pos + need {
            return Err(Error::Parse("truncated P5 data".into()));
        }
        for i in 0..width * height {
            let v = if wide {
                u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as u32
            } else {
                bytes[pos + i] as u32
            };
            values.push(real::<T>(v as f64));
        }
    }
    Ok(ScalarField::from_values(&[height, width], values))
}

/// Write a binary (P5) 8-bit PGM, clamping values to [0, 255].
pub fn write_pgm<T: Real>(path: &Path, field: &ScalarField<T>) -> Result<()> {
    let dims = field.dims();
    if dims.len() != 2 {
        return Err(Error::ShapeMismatch("PGM output is 2-D only".into()));
    }
    let (height, width) = (dims[0], dims[1]);
    let mut out = Vec::with_capacity(width * height + 32);
    out.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
    for &v in field.values() {
        let b = v.to_f64().unwrap().round().clamp(0.0, 255.0) as u8;
        out.push(b);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(feature = "png")]
pub fn read_png<T: Real>(path: &Path) -> Result<ScalarField<T>> {
    let img = image::open(path)
        .map_err(|e| Error::Parse(format!("png: {e}")))?
        .into_luma16();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let values = img
        .pixels()
        .map(|p| real::<T>(p.0[0] as f64))
        .collect();
    Ok(ScalarField::from_values(&[height, width], values))
}

fn parse_numeric_row<T: Real>(line: &str, path: &Path, lineno: usize) -> Result<Vec<T>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map(real::<T>)
                .map_err(|_| {
                    Error::Parse(format!(
                        "{}:{}: bad number {:?}",
                        path.display(),
                        lineno,
                        tok.trim()
                    ))
                })
        })
        .collect()
}

/// Read scatter points: header row, then one row per point with one column
/// per dimension.
pub fn read_points_csv<T: Real>(path: &Path) -> Result<Vec<Vec<T>>> {
    let file = fs::File::open(path)?;
    let mut points: Vec<Vec<T>> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || lineno == 0 {
            continue; // header
        }
        let row = parse_numeric_row(trimmed, path, lineno + 1)?;
        if let Some(first) = points.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "{}:{}: expected {} columns, got {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::Parse(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(points)
}

pub fn write_points_csv<T: Real>(path: &Path, points: &[Vec<T>]) -> Result<()> {
    let mut out = String::new();
    let n = points.first().map_or(0, |p| p.len());
    let header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Truth CSV: header, then (object_id, x1..xn) per row.
pub fn read_truth_csv<T: Real>(path: &Path) -> Result<TruthSet<T>> {
    let file = fs::File::open(path)?;
    let mut truth = TruthSet::default();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || lineno == 0 {
            continue;
        }
        let row = parse_numeric_row::<f64>(trimmed, path, lineno + 1)?;
        if row.len() < 2 {
            return Err(Error::Parse(format!(
                "{}:{}: truth rows need object_id plus coordinates",
                path.display(),
                lineno + 1
            )));
        }
        let id = row[0] as u32;
        truth
            .objects
            .entry(id)
            .or_default()
            .push(row[1..].iter().map(|&v| real::<T>(v)).collect());
    }
    Ok(truth)
}

pub fn write_truth_csv<T: Real>(path: &Path, truth: &TruthSet<T>) -> Result<()> {
    let n = truth
        .objects
        .values()
        .flat_map(|pts| pts.first())
        .map(|p| p.len())
        .next()
        .unwrap_or(2);
    let mut out = String::from("object_id");
    for i in 0..n {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (id, pts) in &truth.objects {
        for p in pts {
            out.push_str(&format!("{id}"));
            for v in p {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Seeds CSV: header, then (object_id, x1..xn, support) per row.
pub fn write_seeds_csv<T: Real>(path: &Path, seeds: &[SeedPoint<T>]) -> Result<()> {
    fs::write(path, seeds_csv_string(seeds))?;
    Ok(())
}

pub fn seeds_csv_string<T: Real>(seeds: &[SeedPoint<T>]) -> String {
    let n = seeds.first().map_or(2, |s| s.position.len());
    let mut out = String::from("object_id");
    for i in 0..n {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",support\n");
    for s in seeds {
        out.push_str(&format!("{}", s.object_id));
        for v in &s.position {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", s.support));
    }
    out
}

pub fn read_seeds_csv<T: Real>(path: &Path) -> Result<Vec<SeedPoint<T>>> {
    let file = fs::File::open(path)?;
    let mut seeds = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || lineno == 0 {
            continue;
        }
        let row = parse_numeric_row::<f64>(trimmed, path, lineno + 1)?;
        if row.len() < 3 {
            return Err(Error::Parse(format!(
                "{}:{}: seed rows need object_id, coordinates, support",
                path.display(),
                lineno + 1
            )));
        }
        seeds.push(SeedPoint {
            object_id: row[0] as u32,
            position: row[1..row.len() - 1].iter().map(|&v| real::<T>(v)).collect(),
            support: row[row.len() - 1] as usize,
            replicate_id: None,
        });
    }
    Ok(seeds)
}

#[derive(Serialize)]
struct FieldHeader<'a, T> {
    dims: &'a [usize],
    spacing: &'a [T],
    dtype: &'a str,
}

/// Flat little-endian binary dump plus a `<path>.json` sidecar holding
/// {dims, spacing, dtype}.
pub fn write_field_binary<T: Real>(path: &Path, field: &ScalarField<T>) -> Result<()> {
    let header = FieldHeader {
        dims: field.dims(),
        spacing: field.spacing(),
        dtype: "f64le",
    };
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::Parse(format!("header encode: {e}")))?;
    fs::write(path.with_extension("json"), json)?;
    let mut out = fs::File::create(path)?;
    for &v in field.values() {
        out.write_all(&v.to_f64().unwrap().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<T: Real>(path: &Path) -> Result<ScalarField<T>> {
    #[derive(serde::Deserialize)]
    struct Header {
        dims: Vec<usize>,
        spacing: Vec<f64>,
        #[allow(dead_code)]
        dtype: String,
    }
    let json = fs::read_to_string(path.with_extension("json"))?;
    let header: Header =
        serde_json::from_str(&json).map_err(|e| Error::Parse(format!("header: {e}")))?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let expect: usize = header.dims.iter().product::<usize>() * 8;
    if bytes.len() != expect {
        return Err(Error::Parse(format!(
            "field payload is {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let values: Vec<T> = bytes
        .chunks_exact(8)
        .map(|c| real::<T>(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let spacing: Vec<T> = header.spacing.iter().map(|&s| real::<T>(s)).collect();
    Ok(ScalarField::from_values(&header.dims, values).with_spacing(&spacing))
}

/// Index-and-value CSV (i0..ik, value), usable at any dimensionality.
pub fn write_field_csv<T: Real>(path: &Path, field: &ScalarField<T>) -> Result<()> {
    let dims = field.dims();
    let mut out = String::new();
    for axis in 0..dims.len() {
        out.push_str(&format!("i{axis},"));
    }
    out.push_str("value\n");
    for (lin, &v) in field.values().iter().enumerate() {
        let idx = crate::field::decompose(dims, lin);
        for i in idx {
            out.push_str(&format!("{i},"));
        }
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_p2_roundtrip_via_parse() {
        let text = b"P2\n# comment\n3 2\n255\n0 1 2\n20 30 40\n";
        let f: ScalarField<f64> = parse_pgm(text).unwrap();
        assert_eq!(f.dims(), &[2, 3]);
        assert_eq!(f.at(&[1, 2]), 40.0);
    }

    #[test]
    fn pgm_p5_roundtrip() {
        let dir = std::env::temp_dir().join("salr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.pgm");
        let f = ScalarField::from_values(&[2, 2], vec![0.0, 64.0, 128.0, 255.0]);
        write_pgm(&path, &f).unwrap();
        let g: ScalarField<f64> = read_pgm(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn field_binary_roundtrip() {
        let dir = std::env::temp_dir().join("salr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.bin");
        let f = ScalarField::from_values(&[2, 3], vec![0.5, 1.5, -2.0, 3.25, 0.0, 9.0])
            .with_spacing(&[1.0, 0.25]);
        write_field_binary(&path, &f).unwrap();
        let g: ScalarField<f64> = read_field_binary(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn seeds_csv_roundtrip() {
        let dir = std::env::temp_dir().join("salr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("seeds.csv");
        let seeds = vec![
            SeedPoint {
                position: vec![1.5, 2.5],
                support: 7,
                object_id: 1,
                replicate_id: None,
            },
            SeedPoint {
                position: vec![8.0, 3.0],
                support: 3,
                object_id: 2,
                replicate_id: None,
            },
        ];
        write_seeds_csv(&path, &seeds).unwrap();
        let back: Vec<SeedPoint<f64>> = read_seeds_csv(&path).unwrap();
        assert_eq!(back, seeds);
    }
}
