//! Line-oriented text formats.
//!
//! Scan file, one scan per line after a version header:
//!
//! ```text
//! file      = header { line } ;
//! header    = "#radar-scans v1" newline ;
//! line      = comment | blank | scan ;
//! comment   = "#" { any } newline ;
//! scan      = timestamp "," radar_id { "," range "," azimuth "," range_rate } newline ;
//! radar_id  = 1*( any except "," and whitespace ) ;
//! ```
//!
//! Numbers are decimal floats as printed by Rust's `Display`, which
//! round-trips every finite `f64`. Ranges are meters (> 0), azimuths radians
//! from boresight towards +x, range-rates m/s.
//!
//! Pair file, one synchronized pair per line:
//!
//! ```text
//! header = "#radar-pairs v1" newline ;
//! pair   = timestamp "," estimate "," estimate newline ;
//! estimate = vx "," vy "," c00 "," c01 "," c10 "," c11 "," n_inliers "," n_total ;
//! ```
//!
//! The first estimate belongs to radar a, the second to radar b; both take
//! the pair's timestamp.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::calib::MeasurementPair;
use crate::ego_velocity::{Detection, EgoVelocityEstimate, RadarScan};
use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};

pub const SCAN_HEADER: &str = "#radar-scans v1";
pub const PAIR_HEADER: &str = "#radar-pairs v1";

/// Scans grouped by radar id, each stream sorted by timestamp.
pub type ScanStreams = BTreeMap<String, Vec<RadarScan>>;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn number(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what}: cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} must be finite")));
    }
    Ok(v)
}

fn count(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what}: cannot parse {field:?} as a count")))
}

/// Data lines with their 1-based line numbers, after checking the header.
fn data_lines<'a>(
    text: &'a str,
    path: &'a Path,
    header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim_end() == header => {}
        Some(first) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header {header:?}, found {:?}", first.trim_end()),
            ))
        }
        None => return Err(parse_err(path, 1, format!("missing header {header:?}"))),
    }
    Ok(lines.enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then_some((i + 2, l))
    }))
}

/// Parses scan-file text; `path` only labels errors.
pub fn parse_scans(text: &str, path: &Path) -> Result<ScanStreams> {
    let mut streams = ScanStreams::new();
    let mut seen = HashSet::new();
    for (line, content) in data_lines(text, path, SCAN_HEADER)? {
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() < 2 {
            return Err(parse_err(path, line, "expected timestamp and radar id"));
        }
        let timestamp = number(path, line, fields[0], "timestamp")?;
        let radar_id = fields[1].trim();
        if radar_id.is_empty() || radar_id.contains(char::is_whitespace) {
            return Err(parse_err(path, line, format!("invalid radar id {:?}", fields[1])));
        }
        let rest = &fields[2..];
        if rest.len() % 3 != 0 {
            return Err(parse_err(
                path,
                line,
                format!("{} detection fields is not a multiple of 3", rest.len()),
            ));
        }
        let mut detections = Vec::with_capacity(rest.len() / 3);
        for d in rest.chunks_exact(3) {
            let range = number(path, line, d[0], "range")?;
            if range <= 0.0 {
                return Err(parse_err(path, line, format!("range must be positive, got {range}")));
            }
            detections.push(Detection::new(
                range,
                number(path, line, d[1], "azimuth")?,
                number(path, line, d[2], "range-rate")?,
            ));
        }
        if !seen.insert((radar_id.to_string(), timestamp.to_bits())) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate scan for radar {radar_id:?} at {timestamp}"),
            ));
        }
        streams
            .entry(radar_id.to_string())
            .or_default()
            .push(RadarScan::new(timestamp, radar_id, detections));
    }
    for scans in streams.values_mut() {
        scans.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    Ok(streams)
}

pub fn load_scans(path: impl AsRef<Path>) -> Result<ScanStreams> {
    let path = path.as_ref();
    parse_scans(&read_text(path)?, path)
}

pub fn format_scans<'a>(scans: impl IntoIterator<Item = &'a RadarScan>) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for scan in scans {
        write!(out, "{},{}", scan.timestamp, scan.radar_id).unwrap();
        for d in &scan.detections {
            write!(out, ",{},{},{}", d.range, d.azimuth, d.range_rate).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_scans<'a>(
    path: impl AsRef<Path>,
    scans: impl IntoIterator<Item = &'a RadarScan>,
) -> Result<()> {
    write_text(path.as_ref(), &format_scans(scans))
}

fn estimate_fields(path: &Path, line: usize, f: &[&str], timestamp: f64) -> Result<EgoVelocityEstimate> {
    let v: Vec<f64> = f[..6]
        .iter()
        .map(|x| number(path, line, x, "estimate"))
        .collect::<Result<_>>()?;
    Ok(EgoVelocityEstimate {
        velocity: Vec2::new(v[0], v[1]),
        covariance: Mat2::new(v[2], v[3], v[4], v[5]),
        n_inliers: count(path, line, f[6], "n_inliers")?,
        n_total: count(path, line, f[7], "n_total")?,
        timestamp,
    })
}

pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<MeasurementPair>> {
    let mut pairs = Vec::new();
    for (line, content) in data_lines(text, path, PAIR_HEADER)? {
        let f: Vec<&str> = content.split(',').collect();
        if f.len() != 17 {
            return Err(parse_err(path, line, format!("expected 17 fields, found {}", f.len())));
        }
        let t = number(path, line, f[0], "timestamp")?;
        let a = estimate_fields(path, line, &f[1..9], t)?;
        let b = estimate_fields(path, line, &f[9..17], t)?;
        pairs.push(MeasurementPair::new(t, a, b));
    }
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<MeasurementPair>> {
    let path = path.as_ref();
    parse_pairs(&read_text(path)?, path)
}

pub fn format_pairs(pairs: &[MeasurementPair]) -> String {
    let mut out = String::from(PAIR_HEADER);
    out.push('\n');
    for p in pairs {
        write!(out, "{}", p.timestamp).unwrap();
        for e in [&p.h_a, &p.h_b] {
            let c = &e.covariance;
            write!(
                out,
                ",{},{},{},{},{},{},{},{}",
                e.velocity.x,
                e.velocity.y,
                c[(0, 0)],
                c[(0, 1)],
                c[(1, 0)],
                c[(1, 1)],
                e.n_inliers,
                e.n_total
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[MeasurementPair]) -> Result<()> {
    write_text(path.as_ref(), &format_pairs(pairs))
}

/// Rows of comma-separated numbers with exactly `columns` fields. Blank
/// lines and lines starting with `#` are skipped.
pub fn read_numeric_rows(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != columns {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {columns} fields, found {}", fields.len()),
            ));
        }
        rows.push(
            fields
                .iter()
                .map(|f| number(path, i + 1, f, "value"))
                .collect::<Result<_>>()?,
        );
    }
    Ok(rows)
}

/// Writes rows of numbers under a `#`-prefixed column header.
pub fn write_numeric_rows(path: impl AsRef<Path>, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = format!("# {header}\n");
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    write_text(path.as_ref(), &(text + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.txt")
    }

    #[test]
    fn header_only_gives_empty_streams() {
        assert!(parse_scans("#radar-scans v1\n", &p()).unwrap().is_empty());
        assert!(parse_pairs("#radar-pairs v1\n", &p()).unwrap().is_empty());
        assert!(matches!(parse_scans("", &p()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_scans("#radar-scans v2\n", &p()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn streams_are_grouped_and_sorted() {
        let text = "#radar-scans v1\n# comment\n0.2,b,1,0,0\n0.1,a,2,0.5,-1,3,-0.5,1\n\n0.0,b\n";
        let s = parse_scans(text, &p()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s["a"][0].detections.len(), 2);
        let tb: Vec<f64> = s["b"].iter().map(|x| x.timestamp).collect();
        assert_eq!(tb, vec![0.0, 0.2]);
        assert!(s["b"][0].detections.is_empty());
    }

    #[test]
    fn malformed_line_is_reported_with_its_number() {
        let mut text = String::from("#radar-scans v1\n");
        for i in 0..40 {
            writeln!(text, "{}.0,a,1,0,0,2,0.1,0.3", i).unwrap();
        }
        text.push_str("40.0,a,1,0\n");
        let err = parse_scans(&text, &p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 42, .. }), "{err}");
        assert!(err.to_string().contains(":42:"));

        for bad in ["0.0,a,-1,0,0", "x,a,1,0,0", "0.0,,1,0,0", "0.0,a,1,nan,0", "0.0"] {
            let t = format!("#radar-scans v1\n{bad}\n");
            assert!(matches!(parse_scans(&t, &p()), Err(Error::Parse { line: 2, .. })), "{bad}");
        }
    }

    #[test]
    fn duplicate_scans_are_rejected() {
        let t = "#radar-scans v1\n0.1,a,1,0,0\n0.1,b,1,0,0\n0.1,a,2,0,0\n";
        assert!(matches!(parse_scans(t, &p()), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn scans_round_trip_bitwise() {
        let scans = vec![
            RadarScan::new(0.1 + 0.2, "a", vec![Detection::new(1.0 / 3.0, -0.0, 1e-300)]),
            RadarScan::new(1e-9, "b", vec![]),
            RadarScan::new(2.5, "a", vec![Detection::new(7.25, 1.0471975511965976, -2.0 / 7.0); 3]),
        ];
        let back = parse_scans(&format_scans(&scans), &p()).unwrap();
        assert_eq!(back["a"], vec![scans[0].clone(), scans[2].clone()]);
        assert_eq!(back["b"], vec![scans[1].clone()]);
        assert_eq!(format_scans(back.values().flatten()), format_scans([&scans[0], &scans[2], &scans[1]]));
        assert!(back["a"][0].detections[0].azimuth.is_sign_negative());
    }

    #[test]
    fn pairs_round_trip_bitwise() {
        let est = |t: f64, x: f64| EgoVelocityEstimate {
            velocity: Vec2::new(x, -x / 3.0),
            covariance: Mat2::new(0.1 / 3.0, 1e-7, 1.1e-7, 0.02),
            n_inliers: 17,
            n_total: 23,
            timestamp: t,
        };
        let pairs: Vec<_> = (0..5)
            .map(|i| {
                let t = i as f64 * 0.1;
                MeasurementPair::new(t, est(t, 0.7 * i as f64), est(t, std::f64::consts::PI))
            })
            .collect();
        assert_eq!(parse_pairs(&format_pairs(&pairs), &p()).unwrap(), pairs);
        assert!(matches!(
            parse_pairs("#radar-pairs v1\n0,1,2\n", &p()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
