use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::checksum::sha256_hex;
use crate::error::{Error, Result};
use crate::wave::Grid;

/// Metadata stored beside an array payload.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayHeader {
    pub shape: Vec<usize>,
    pub units: String,
    pub grid: Option<Grid>,
    /// SHA-256 of the payload bytes, lowercase hex.
    pub sha256: String,
    /// Free-form `key = value` entries (e.g. an architecture descriptor).
    pub extra: Vec<(String, String)>,
}

/// `path` with `.hdr` appended.
pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes `values` as raw little-endian f64 (row-major) plus a text header at
/// `path.hdr`. Returns the payload checksum.
pub fn write_array(
    path: &Path,
    values: &[f64],
    shape: &[usize],
    units: &str,
    grid: Option<&Grid>,
    extra: &[(&str, String)],
) -> Result<String> {
    let n: usize = shape.iter().product();
    if n != values.len() {
        return Err(Error::shape("write_array", "payload length", n, values.len()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bytes = to_bytes(values);
    let digest = sha256_hex(&bytes);
    let mut h = String::new();
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    writeln!(h, "format = f64-le-row-major").unwrap();
    writeln!(h, "shape = {}", dims.join(" ")).unwrap();
    writeln!(h, "units = {units}").unwrap();
    if let Some(g) = grid {
        writeln!(h, "grid = {} {} {} {} {} {}", g.nz, g.nx, g.dz, g.dx, g.nt, g.dt).unwrap();
    }
    for (k, v) in extra {
        writeln!(h, "{k} = {v}").unwrap();
    }
    writeln!(h, "sha256 = {digest}").unwrap();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let hp = header_path(path);
    fs::write(&hp, h).map_err(|e| Error::io(&hp, e))?;
    Ok(digest)
}

fn parse_header(path: &Path, text: &str) -> Result<ArrayHeader> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut shape = None;
    let mut units = String::new();
    let mut grid = None;
    let mut sha256 = None;
    let mut extra = Vec::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "format" if v != "f64-le-row-major" => return Err(bad(format!("unsupported format `{v}`"))),
            "format" => {}
            "shape" => {
                let dims = v
                    .split_whitespace()
                    .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape `{v}`"))))
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
            }
            "units" => units = v.to_string(),
            "grid" => {
                let p: Vec<&str> = v.split_whitespace().collect();
                let parse = || -> Option<Grid> {
                    if p.len() != 6 {
                        return None;
                    }
                    Grid::new(
                        p[0].parse().ok()?,
                        p[1].parse().ok()?,
                        p[2].parse().ok()?,
                        p[3].parse().ok()?,
                        p[4].parse().ok()?,
                        p[5].parse().ok()?,
                    )
                    .ok()
                };
                grid = Some(parse().ok_or_else(|| bad(format!("bad grid `{v}`")))?);
            }
            "sha256" => sha256 = Some(v.to_string()),
            _ => extra.push((k.to_string(), v.to_string())),
        }
    }
    Ok(ArrayHeader {
        shape: shape.ok_or_else(|| bad("header has no shape".into()))?,
        units,
        grid,
        sha256: sha256.ok_or_else(|| bad("header has no sha256".into()))?,
        extra,
    })
}

/// Reads an array written by [`write_array`], checking length and checksum.
pub fn read_array(path: &Path) -> Result<(Vec<f64>, ArrayHeader)> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header = parse_header(&hp, &text)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n: usize = header.shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "payload is {} bytes, header shape {:?} needs {}{}",
                bytes.len(),
                header.shape,
                n * 8,
                if bytes.len() < n * 8 { " (truncated)" } else { "" }
            ),
        });
    }
    let digest = sha256_hex(&bytes);
    if digest != header.sha256 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("checksum mismatch: header {} payload {digest}", header.sha256),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((values, header))
}

/// Binary PGM (P5) of an `nz x nx` image, mapping `[-clip, clip]` to
/// `[0, 255]`. A non-positive `clip` falls back to the largest magnitude.
pub fn write_pgm(path: &Path, values: &[f64], nz: usize, nx: usize, clip: f64) -> Result<()> {
    if values.len() != nz * nx {
        return Err(Error::shape("write_pgm", "pixel count", nz * nx, values.len()));
    }
    let clip = if clip > 0.0 && clip.is_finite() {
        clip
    } else {
        values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let mut out = format!("P5\n{nx} {nz}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if clip == 0.0 {
            128
        } else {
            (((v / clip).clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
        }
    }));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// PGM of a nonnegative image scaled from 0 to its maximum.
pub fn write_pgm_positive(path: &Path, values: &[f64], nz: usize, nx: usize) -> Result<()> {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let shifted: Vec<f64> = values.iter().map(|v| 2.0 * v - max).collect();
    write_pgm(path, &shifted, nz, nx, max)
}

/// Writes a CSV with a header row; numbers use Rust's shortest round-trip form.
pub fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = columns.join(",");
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        if r.len() != columns.len() {
            return Err(Error::shape(
                "write_csv",
                format!("row {i} width"),
                columns.len(),
                r.len(),
            ));
        }
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let dir = std::env::temp_dir().join(format!("dip-io-{}", std::process::id()));
        let p = dir.join("a.f64");
        let v = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300, 3.0, -7.25];
        let g = Grid::new(2, 3, 10.0, 12.5, 5, 1e-3).unwrap();
        write_array(&p, &v, &[2, 3], "s2/km2", Some(&g), &[("note", "x".into())]).unwrap();
        let (back, h) = read_array(&p).unwrap();
        assert_eq!(
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(h.shape, vec![2, 3]);
        assert_eq!(h.grid, Some(g));
        assert_eq!(h.extra, vec![("note".to_string(), "x".to_string())]);

        let mut bytes = fs::read(&p).unwrap();
        bytes[3] ^= 1;
        fs::write(&p, &bytes).unwrap();
        assert!(read_array(&p).unwrap_err().to_string().contains("checksum"));
        fs::write(&p, &bytes[..40]).unwrap();
        assert!(read_array(&p).unwrap_err().to_string().contains("truncated"));
        fs::remove_dir_all(dir).ok();
    }
}
