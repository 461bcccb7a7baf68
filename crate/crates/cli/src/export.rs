use std::path::{Path, PathBuf};

use alpha_measure::grid::io::{read_field_csv, read_field_raw, write_field_csv, write_field_raw};
use alpha_measure::grid::{ComplexGrid, GridFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    /// `index,x1,y1[,x2,y2],value`.
    Csv,
    /// `<stem>.f64` little-endian values plus a `<stem>.json` grid sidecar.
    Raw,
}

/// Writes `field`; for [`FieldFormat::Raw`] `path` is the stem. Returns the
/// files written.
pub fn export_field(field: &GridFunction, path: &Path, format: FieldFormat) -> alpha_measure::Result<Vec<PathBuf>> {
    match format {
        FieldFormat::Csv => {
            write_field_csv(field, path)?;
            Ok(vec![path.to_path_buf()])
        }
        FieldFormat::Raw => {
            let (data, meta) = write_field_raw(field, path)?;
            Ok(vec![data, meta])
        }
    }
}

/// Inverse of [`export_field`]. CSV needs the grid; raw dumps carry their
/// own descriptor and are rebuilt within `budget` nodes.
pub fn import_field(
    path: &Path,
    format: FieldFormat,
    grid: &std::sync::Arc<ComplexGrid>,
) -> alpha_measure::Result<GridFunction> {
    match format {
        FieldFormat::Csv => read_field_csv(path, grid),
        FieldFormat::Raw => {
            let f = read_field_raw(path, grid.len().max(1))?;
            f.ensure_same_grid(grid)?;
            Ok(GridFunction::new(grid.clone(), f.into_values()).expect("same node count"))
        }
    }
}
