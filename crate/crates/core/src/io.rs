//! On-disk formats.
//!
//! Scenes use a one-line text header followed by raw float64 values:
//!
//! ```text
//! TDRS1 <width> <height> <bands> little-endian\n
//! <width·height·bands little-endian IEEE-754 f64, band-interleaved-by-pixel>
//! ```
//!
//! Everything else is CSV with a header row. Floats are written in Rust's
//! shortest round-trip form, which parses back to the identical `f64`.
//! Config files are `key=value` lines; `#` starts a comment.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{DetectionMap, GroundTruthMask, RocCurve};
use crate::stats::{Scene, TargetSignature};

pub const SCENE_MAGIC: &str = "TDRS1";
const BYTE_ORDER: &str = "little-endian";
/// Headers longer than this are rejected before searching for the newline.
const MAX_HEADER_LEN: usize = 256;

/// Formats a float so it parses back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let header = format!(
        "{SCENE_MAGIC} {} {} {} {BYTE_ORDER}\n",
        scene.width(),
        scene.height(),
        scene.bands()
    );
    let mut out = Vec::with_capacity(header.len() + scene.values().len() * 8);
    out.extend_from_slice(header.as_bytes());
    for v in scene.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scene(bytes: &[u8]) -> Result<Scene> {
    if !bytes.starts_with(SCENE_MAGIC.as_bytes()) {
        return Err(Error::BadMagic);
    }
    let search = &bytes[..bytes.len().min(MAX_HEADER_LEN)];
    let newline = search
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::BadHeader("no newline within the header limit".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::BadHeader("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    let [magic, width, height, bands, order] = fields.as_slice() else {
        return Err(Error::BadHeader(format!(
            "expected 5 fields, found {}",
            fields.len()
        )));
    };
    if *magic != SCENE_MAGIC {
        return Err(Error::BadMagic);
    }
    if *order != BYTE_ORDER {
        return Err(Error::BadHeader(format!(
            "unsupported byte order {order:?}"
        )));
    }
    let dim = |name: &str, s: &str| -> Result<u64> {
        match s.parse::<u64>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::BadHeader(format!(
                "{name} must be a positive integer, got {s:?}"
            ))),
        }
    };
    let (w, h, l) = (
        dim("width", width)?,
        dim("height", height)?,
        dim("bands", bands)?,
    );
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(l))
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or(Error::DimensionOverflow)?;
    let payload = &bytes[newline + 1..];
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes {
            extra: found - expected,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Scene::new(w as usize, h as usize, l as usize, values)
}

pub fn write_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_scene(scene))?;
    Ok(())
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    decode_scene(&fs::read(path)?)
}

/// Writes a CSV file with the given header and pre-formatted rows.
pub fn write_table<I, R, S>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let file = BufWriter::new(File::create(path.as_ref())?);
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header).map_err(csv_io)?;
    for row in rows {
        writer.write_record(row).map_err(csv_io)?;
    }
    writer.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Reads a CSV file whose header must equal `header`; returns each data row
/// with its 1-based line number.
pub fn read_table(path: impl AsRef<Path>, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {:?}, found {found:?}", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name} {value:?}")))
}

pub fn write_spectrum(d: &TargetSignature, path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path,
        &["band", "value"],
        d.as_vector()
            .iter()
            .enumerate()
            .map(|(i, v)| [i.to_string(), fmt_f64(*v)]),
    )
}

/// Reads a `band,value` spectrum; bands must run 0, 1, 2, … in order.
pub fn read_spectrum(path: impl AsRef<Path>) -> Result<TargetSignature> {
    let path = path.as_ref();
    let mut values = Vec::new();
    for (line, row) in read_table(path, &["band", "value"])? {
        let band: usize = parse_field(path, line, "band", &row[0])?;
        if band != values.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected band {}, found {band}", values.len()),
            ));
        }
        let v: f64 = parse_field(path, line, "value", &row[1])?;
        if !v.is_finite() {
            return Err(Error::parse(path, line, "value is not finite"));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::parse(path, 1, "spectrum has no rows"));
    }
    TargetSignature::new(values)
}

fn grid_rows(width: usize, n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).map(move |i| (i % width, i / width))
}

/// Collects `(x, y, value)` rows into a dense row-major grid, requiring
/// every cell exactly once.
fn collect_grid<T: Clone>(
    path: &Path,
    cells: Vec<(u64, usize, usize, T)>,
) -> Result<(usize, usize, Vec<T>)> {
    let width = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let height = cells.iter().map(|c| c.2 + 1).max().unwrap_or(0);
    if width == 0 || width.checked_mul(height) != Some(cells.len()) {
        return Err(Error::parse(
            path,
            1,
            format!("{} rows do not cover a {width}x{height} grid", cells.len()),
        ));
    }
    let mut grid: Vec<Option<T>> = vec![None; cells.len()];
    for (line, x, y, v) in cells {
        let slot = &mut grid[y * width + x];
        if slot.is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate cell ({x}, {y})"),
            ));
        }
        *slot = Some(v);
    }
    Ok((
        width,
        height,
        grid.into_iter()
            .map(|v| v.expect("all cells filled"))
            .collect(),
    ))
}

pub fn write_mask(mask: &GroundTruthMask, path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path,
        &["x", "y", "label"],
        grid_rows(mask.width, mask.labels.len())
            .zip(&mask.labels)
            .map(|((x, y), &l)| [x.to_string(), y.to_string(), u8::from(l).to_string()]),
    )
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    let path = path.as_ref();
    let mut cells = Vec::new();
    for (line, row) in read_table(path, &["x", "y", "label"])? {
        let x = parse_field(path, line, "x", &row[0])?;
        let y = parse_field(path, line, "y", &row[1])?;
        let label = match row[2].as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        cells.push((line, x, y, label));
    }
    let (width, height, labels) = collect_grid(path, cells)?;
    GroundTruthMask::new(width, height, labels)
}

pub fn write_map(map: &DetectionMap, path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path,
        &["x", "y", "score"],
        grid_rows(map.width, map.scores.len())
            .zip(&map.scores)
            .map(|((x, y), &s)| [x.to_string(), y.to_string(), fmt_f64(s)]),
    )
}

/// Reads an `x,y,score` map; the method label is taken from the file stem.
pub fn read_map(path: impl AsRef<Path>) -> Result<DetectionMap> {
    let path = path.as_ref();
    let mut cells = Vec::new();
    for (line, row) in read_table(path, &["x", "y", "score"])? {
        let x = parse_field(path, line, "x", &row[0])?;
        let y = parse_field(path, line, "y", &row[1])?;
        let score: f64 = parse_field(path, line, "score", &row[2])?;
        if !score.is_finite() {
            return Err(Error::parse(path, line, "score is not finite"));
        }
        cells.push((line, x, y, score));
    }
    let (width, height, scores) = collect_grid(path, cells)?;
    let method = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    DetectionMap::new(width, height, scores, method)
}

pub fn write_roc(curve: &RocCurve, path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path,
        &["threshold", "fpr", "tpr"],
        curve
            .thresholds
            .iter()
            .zip(&curve.fpr)
            .zip(&curve.tpr)
            .map(|((t, f), p)| [fmt_f64(*t), fmt_f64(*f), fmt_f64(*p)]),
    )
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(
                path,
                i as u64 + 1,
                format!("expected key=value, got {line:?}"),
            )
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(path, i as u64 + 1, "empty key"));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    parse_key_values(path, &fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_payload() {
        let scene = Scene::new(2, 1, 1, vec![0.1, -2.5]).unwrap();
        let bytes = encode_scene(&scene);
        let header = b"TDRS1 2 1 1 little-endian\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(
            &bytes[header.len()..header.len() + 8],
            &0.1_f64.to_le_bytes()
        );
        assert_eq!(decode_scene(&bytes).unwrap(), scene);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode_scene(b"ENVI 1 1 1 little-endian\n"),
            Err(Error::BadMagic)
        ));
        assert!(matches!(
            decode_scene(b"TDRS1 0 1 1 little-endian\n"),
            Err(Error::BadHeader(_))
        ));
        assert!(matches!(
            decode_scene(b"TDRS1 1 1 1 big-endian\n"),
            Err(Error::BadHeader(_))
        ));
        assert!(matches!(
            decode_scene(b"TDRS1 4294967296 4294967296 4294967296 little-endian\n"),
            Err(Error::DimensionOverflow)
        ));
        let mut bytes = b"TDRS1 10 10 3 little-endian\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 299 * 8));
        assert!(matches!(
            decode_scene(&bytes),
            Err(Error::TruncatedPayload {
                expected: 2400,
                found: 2392
            })
        ));
        bytes.extend(std::iter::repeat_n(0u8, 9));
        assert!(matches!(
            decode_scene(&bytes),
            Err(Error::TrailingBytes { extra: 1 })
        ));
    }

    #[test]
    fn key_values() {
        let parsed = parse_key_values(
            Path::new("run.conf"),
            "# comment\nseed = 42\n\nmethod=cem # trailing\n",
        )
        .unwrap();
        assert_eq!(
            parsed,
            vec![
                ("seed".into(), "42".into()),
                ("method".into(), "cem".into())
            ]
        );
        let err = parse_key_values(Path::new("run.conf"), "seed 42\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.1,
            0.1 + f64::EPSILON,
            1e-300,
            -3.0e200,
            f64::INFINITY,
            5e-324,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
