use std::fs;
use std::path::Path;

use super::{read_file, write_atomic};
use crate::analysis::PelletClass;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::postproc::PredictionMaps;

const MAGIC: &[u8] = b"\x93NUMPY";
pub const MAPS_SIDECAR: &str = "maps.txt";

/// Serializes `values` with the given shape as an NPY v1.0 `<f4` array.
pub fn write_npy_f32(path: impl AsRef<Path>, shape: &[usize], values: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let expected: usize = shape.iter().product();
    if expected != values.len() {
        return Err(Error::shape(format!("{expected} values for shape {shape:?}"), values.len()));
    }
    let dims = match shape {
        [d] => format!("({d},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}");
    // magic + version + length field + header + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat(unpadded.next_multiple_of(64) - unpadded));
    header.push('\n');

    let mut bytes = Vec::with_capacity(10 + header.len() + values.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&[1, 0]);
    bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let start = header.find(&format!("'{key}'"))? + key.len() + 2;
    let rest = header[start..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find(',').unwrap_or(rest.len())
    };
    Some(rest[..end].trim())
}

/// Reads an NPY v1.0 `<f4` C-order array; returns its shape and values.
pub fn read_npy_f32(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let bad = |msg: String| Error::format(path, msg);
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("not an NPY file (bad magic)".into()));
    }
    if bytes[6] != 1 {
        return Err(bad(format!("NPY version {}.{} unsupported, expected 1.0", bytes[6], bytes[7])));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + hlen {
        return Err(bad("truncated NPY header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..10 + hlen]).map_err(|_| bad("NPY header is not text".into()))?;
    let descr = dict_value(header, "descr").ok_or_else(|| bad("NPY header lacks 'descr'".into()))?;
    if descr.trim_matches('\'') != "<f4" {
        return Err(bad(format!("dtype must be '<f4' (little-endian float32), found {descr}")));
    }
    match dict_value(header, "fortran_order") {
        Some("False") => {}
        Some("True") => return Err(bad("Fortran-order arrays are not supported; save in C order".into())),
        other => return Err(bad(format!("bad 'fortran_order' entry {other:?}"))),
    }
    let shape_txt = dict_value(header, "shape").ok_or_else(|| bad("NPY header lacks 'shape'".into()))?;
    let shape: Vec<usize> = shape_txt
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(format!("bad shape {shape_txt}"))))
        .collect::<Result<_>>()?;
    let n: usize = shape.iter().product();
    let data = &bytes[10 + hlen..];
    if data.len() != n * 4 {
        return Err(bad(format!(
            "payload holds {} bytes, shape {shape:?} needs {}",
            data.len(),
            n * 4
        )));
    }
    let values = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((shape, values))
}

fn class_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|k| match PelletClass::from_id(k as u8) {
            Some(c) if n == PelletClass::COUNT => c.name().to_string(),
            _ => format!("class{k}"),
        })
        .collect()
}

/// Writes `prob.npy`, `dist.npy`, `type.npy` and the sidecar into `dir`.
pub fn write_maps(maps: &PredictionMaps, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = maps.shape();
    let (r, c) = (maps.n_rays(), maps.n_classes());
    write_npy_f32(dir.join("prob.npy"), &[h, w], maps.prob.as_slice())?;
    write_npy_f32(dir.join("dist.npy"), &[h, w, r], maps.dist.as_slice())?;
    write_npy_f32(dir.join("type.npy"), &[h, w, c], maps.type_scores.as_slice())?;
    let sidecar = format!("n_rays={r}\nn_classes={c}\nclasses={}\n", class_names(c).join(","));
    write_atomic(&dir.join(MAPS_SIDECAR), sidecar.as_bytes())
}

/// Reads maps written by [`write_maps`]. With `expected_rays`, a ray count
/// mismatch is an error.
pub fn read_maps(dir: impl AsRef<Path>, expected_rays: Option<usize>) -> Result<PredictionMaps> {
    let dir = dir.as_ref();
    let side_path = dir.join(MAPS_SIDECAR);
    let sidecar = String::from_utf8(read_file(&side_path)?).map_err(|_| Error::format(&side_path, "not UTF-8"))?;
    let mut n_rays = None;
    let mut n_classes = None;
    for line in sidecar.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(&side_path, format!("expected key=value, got {line:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(&side_path, format!("bad value for {k}: {v:?}")))
        };
        match k.trim() {
            "n_rays" => n_rays = Some(parse(v)?),
            "n_classes" => n_classes = Some(parse(v)?),
            _ => {}
        }
    }
    let n_rays = n_rays.ok_or_else(|| Error::format(&side_path, "missing n_rays"))?;
    let n_classes = n_classes.ok_or_else(|| Error::format(&side_path, "missing n_classes"))?;
    if let Some(exp) = expected_rays {
        if exp != n_rays {
            return Err(Error::format(
                &side_path,
                format!("maps carry {n_rays} rays but the configuration expects {exp}"),
            ));
        }
    }

    let load = |name: &str, channels: Option<usize>| -> Result<(usize, usize, usize, Vec<f32>)> {
        let p = dir.join(name);
        let (shape, values) = read_npy_f32(&p)?;
        let found = format!("{shape:?}");
        match (channels, shape.as_slice()) {
            (None, &[h, w]) => Ok((h, w, 1, values)),
            (Some(ch), &[h, w, c]) if c == ch => Ok((h, w, c, values)),
            (None, _) => Err(Error::format(&p, format!("expected shape (H, W), found {found}"))),
            (Some(ch), _) => Err(Error::format(&p, format!("expected shape (H, W, {ch}), found {found}"))),
        }
    };
    let (h, w, _, prob) = load("prob.npy", None)?;
    let (dh, dw, _, dist) = load("dist.npy", Some(n_rays))?;
    let (th, tw, _, types) = load("type.npy", Some(n_classes))?;
    if (dh, dw) != (h, w) || (th, tw) != (h, w) {
        return Err(Error::format(
            dir,
            format!("map sizes disagree: prob {h}x{w}, dist {dh}x{dw}, type {th}x{tw}"),
        ));
    }
    PredictionMaps::new(
        Grid::from_vec(h, w, 1, prob)?,
        Grid::from_vec(h, w, n_rays, dist)?,
        Grid::from_vec(h, w, n_classes, types)?,
    )
}
