//! Point cloud files.
//!
//! * Text: one `x,y,z` point per line, optional header line.
//! * Binary: the 16-byte magic `POLECLOUD1` padded with zero bytes, a
//!   little-endian `u64` point count, then `count` triples of little-endian
//!   `f64`.

use std::path::Path;

use crate::error::{PoleError, Result};
use crate::extraction::PointCloud;

pub const BINARY_MAGIC: [u8; 16] = *b"POLECLOUD1\0\0\0\0\0\0";

pub fn parse_csv_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => {
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(PoleError::parse(path, i + 1, "non-finite coordinate"));
                }
                points.push([v[0], v[1], v[2]]);
            }
            Ok(v) => {
                return Err(PoleError::parse(path, i + 1, format!("expected 3 fields, found {}", v.len())));
            }
            // a non-numeric first line is a header
            Err(_) if points.is_empty() && i == first_content_line(text) && fields.len() == 3 => {}
            Err(e) => return Err(PoleError::parse(path, i + 1, format!("`{line}`: {e}"))),
        }
    }
    Ok(PointCloud::new(points))
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty()).unwrap_or(0)
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut out = String::from("x,y,z\n");
    for p in &cloud.points {
        out.push_str(&format!("{},{},{}\n", p[0], p[1], p[2]));
    }
    out
}

pub fn encode_binary(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 24 * cloud.len());
    out.extend_from_slice(&BINARY_MAGIC);
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in &cloud.points {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let err = |m: String| PoleError::parse(path, 0, m);
    if bytes.len() < 24 || bytes[..16] != BINARY_MAGIC {
        return Err(err("missing POLECLOUD1 header".into()));
    }
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if count.checked_mul(24) != Some(body.len()) {
        return Err(err(format!("header declares {count} points but body holds {} bytes", body.len())));
    }
    let mut points = Vec::with_capacity(count);
    for (i, chunk) in body.chunks_exact(24).enumerate() {
        let c = |k: usize| f64::from_le_bytes(chunk[8 * k..8 * k + 8].try_into().unwrap());
        let p = [c(0), c(1), c(2)];
        if p.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("point {i} is not finite")));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

/// Reads either format, chosen by the magic bytes.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| PoleError::io(path, e))?;
    if bytes.starts_with(b"POLECLOUD1") {
        return decode_binary(&bytes, path);
    }
    let text = String::from_utf8(bytes).map_err(|_| PoleError::parse(path, 0, "not UTF-8 text or a binary cloud"))?;
    parse_csv_cloud(&text, path)
}

pub fn save_cloud_csv(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, cloud_to_csv(cloud)).map_err(|e| PoleError::io(path, e))
}

pub fn save_cloud_binary(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, encode_binary(cloud)).map_err(|e| PoleError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_optional() {
        let p = Path::new("c.csv");
        let a = parse_csv_cloud("x,y,z\n1,2,3\n4,5,6\n", p).unwrap();
        let b = parse_csv_cloud("1,2,3\n4,5,6\n", p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(parse_csv_cloud("", p).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_is_reported() {
        let err = parse_csv_cloud("1,2,3\n4,oops,6\n", Path::new("c.csv")).unwrap_err();
        assert!(matches!(err, PoleError::Parse { line: 2, .. }), "{err}");
        let err = parse_csv_cloud("1,2\n", Path::new("c.csv")).unwrap_err();
        assert!(matches!(err, PoleError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn truncated_binary_rejected() {
        let mut bytes = encode_binary(&PointCloud::new(vec![[1.0, 2.0, 3.0]]));
        bytes.pop();
        assert!(decode_binary(&bytes, Path::new("c.bin")).is_err());
        assert!(decode_binary(b"nope", Path::new("c.bin")).is_err());
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(pts in prop::collection::vec(prop::array::uniform3(-1e6..1e6f64), 0..50)) {
            let cloud = PointCloud::new(pts);
            prop_assert_eq!(&decode_binary(&encode_binary(&cloud), Path::new("c")).unwrap(), &cloud);
            prop_assert_eq!(&parse_csv_cloud(&cloud_to_csv(&cloud), Path::new("c")).unwrap(), &cloud);
        }
    }
}
