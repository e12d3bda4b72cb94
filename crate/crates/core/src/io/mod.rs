//! On-disk formats.
//!
//! * label maps: 16-bit single-channel PNG, pixel value = instance id;
//! * class maps: 8-bit single-channel PNG, pixel value = class id;
//! * RGB images: 8-bit RGB PNG;
//! * prediction maps: a directory of NPY v1.0 files (`prob.npy`, `dist.npy`,
//!   `type.npy`, little-endian `f32`, C order) plus a `maps.txt` sidecar.
//!
//! Every writer goes through a temporary file and a rename.

mod npy;
mod png_io;

pub use npy::{read_maps, read_npy_f32, write_maps, write_npy_f32, MAPS_SIDECAR};
pub use png_io::{
    read_class_map, read_label_map, read_rgb, write_class_map, write_label_map, write_rgb, MAX_LABEL_ID,
};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::format(path, "not a file path"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
