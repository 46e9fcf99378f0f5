//! File formats: Touchstone and CSV spectra, grid files and JSON run configs.

pub mod config;
pub mod grid;
pub mod spectrum_csv;
pub mod touchstone;

use std::io::Write;
use std::path::Path;

pub use config::{DataFileDescriptor, DataFormat, GridSpec, RunConfig};
pub use grid::{load_grid, parse_grid, write_grid, GridFile, GridKind};
pub use spectrum_csv::{load_csv_spectrum, parse_spectrum_csv, write_spectrum_csv, ColumnMap, CsvKind};
pub use touchstone::{load_touchstone, parse_touchstone};

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| std::io::Error::other("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}
