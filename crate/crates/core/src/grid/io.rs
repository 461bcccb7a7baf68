//! Field and mask file formats.
//!
//! * field CSV: header `index,x1,y1[,x2,y2],value`, one row per node;
//! * raw dump: `<stem>.f64` holding little-endian `f64` values in node order,
//!   with a `<stem>.json` [`GridDescriptor`] sidecar;
//! * mask CSV: header `index,x1,y1[,x2,y2],class` with class one of
//!   `interior`, `boundary`, `exterior`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! reading a file back reproduces every value bit for bit.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{ComplexGrid, DomainMask, GridDescriptor, GridFunction, NodeClass, AXIS_NAMES};
use crate::error::{Error, Result};

fn header(grid: &ComplexGrid, last: &str) -> String {
    let mut cols = vec!["index".to_string()];
    cols.extend(AXIS_NAMES[..grid.dim()].iter().map(|s| s.to_string()));
    cols.push(last.to_string());
    cols.join(",")
}

fn write_rows<W: Write>(
    out: &mut W,
    grid: &ComplexGrid,
    last: &str,
    mut cell: impl FnMut(usize) -> String,
) -> Result<()> {
    writeln!(out, "{}", header(grid, last))?;
    let mut p = vec![0.0; grid.dim()];
    for i in 0..grid.len() {
        grid.point_into(i, &mut p);
        write!(out, "{i}")?;
        for x in &p {
            write!(out, ",{x:?}")?;
        }
        writeln!(out, ",{}", cell(i))?;
    }
    Ok(())
}

pub fn write_field_csv(field: &GridFunction, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_rows(&mut out, field.grid(), "value", |i| format!("{:?}", field.get(i)))?;
    out.flush()?;
    Ok(())
}

fn read_rows(path: &Path, grid: &ComplexGrid, last: &str) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let head = lines.next().transpose()?.unwrap_or_default();
    if head.trim() != header(grid, last) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {head:?}"),
        });
    }
    let mut cells = vec![None; grid.len()];
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let err = |msg: String| Error::Parse { line: ln + 2, msg };
        if parts.len() != grid.dim() + 2 {
            return Err(err(format!("expected {} columns", grid.dim() + 2)));
        }
        let idx: usize = parts[0].trim().parse().map_err(|e| err(format!("bad index: {e}")))?;
        if idx >= grid.len() {
            return Err(err(format!("index {idx} out of range")));
        }
        cells[idx] = Some(parts[grid.dim() + 1].trim().to_string());
    }
    cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or(Error::Parse {
                line: 0,
                msg: format!("missing row for node {i}"),
            })
        })
        .collect()
}

pub fn read_field_csv(path: &Path, grid: &Arc<ComplexGrid>) -> Result<GridFunction> {
    let cells = read_rows(path, grid, "value")?;
    let values = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 2,
                msg: format!("bad value {c:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(grid.clone(), values)
}

fn raw_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("f64"), stem.with_extension("json"))
}

/// Writes `<stem>.f64` and `<stem>.json`; returns both paths.
pub fn write_field_raw(field: &GridFunction, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let (data, meta) = raw_paths(stem);
    let mut bytes = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&data, bytes)?;
    let desc = field.grid().descriptor();
    fs::write(&meta, serde_json::to_string_pretty(&desc)? + "\n")?;
    Ok((data, meta))
}

pub fn read_field_raw(stem: &Path, budget: usize) -> Result<GridFunction> {
    let (data, meta) = raw_paths(stem);
    let desc: GridDescriptor = serde_json::from_str(&fs::read_to_string(meta)?)?;
    let grid = desc.build(budget)?;
    let bytes = fs::read(data)?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::GridMismatch(format!(
            "raw dump has {} bytes, expected {}",
            bytes.len(),
            8 * grid.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GridFunction::new(grid, values)
}

pub fn write_mask_csv(mask: &DomainMask, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_rows(&mut out, mask.grid(), "class", |i| mask.class(i).as_str().to_string())?;
    out.flush()?;
    Ok(())
}

pub fn read_mask_csv(path: &Path, grid: &Arc<ComplexGrid>) -> Result<DomainMask> {
    let cells = read_rows(path, grid, "class")?;
    let classes = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            NodeClass::parse(c).ok_or(Error::Parse {
                line: i + 2,
                msg: format!("unknown class {c:?}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DomainMask::from_classes(grid, &classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, classify_domain, DomainSpec, Shape, DEFAULT_NODE_BUDGET};
    use proptest::prelude::*;

    #[test]
    fn csv_header_schema() {
        let g = build_grid(2, &[3; 4], 0.5, &[0.0; 4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_field_csv(&GridFunction::zeros(g.clone()), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "index,x1,y1,x2,y2,value");
        assert_eq!(text.lines().count(), 1 + 81);
    }

    #[test]
    fn raw_dump_length_and_sidecar() {
        let g = build_grid(1, &[9, 7], 0.25, &[-1.0, -0.75]).unwrap();
        let f = GridFunction::from_fn(g.clone(), |x| x[0] - 3.0 * x[1]);
        let dir = tempfile::tempdir().unwrap();
        let (data, meta) = write_field_raw(&f, &dir.path().join("omega")).unwrap();
        assert_eq!(fs::metadata(&data).unwrap().len(), 8 * 63);
        let desc: GridDescriptor = serde_json::from_str(&fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(desc.axis_order, vec!["x1", "y1"]);
        let back = read_field_raw(&dir.path().join("omega"), DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn mask_round_trip() {
        let g = build_grid(1, &[33, 33], 1.0 / 16.0, &[-1.0, -1.0]).unwrap();
        let m = classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(2, 0.9))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mask.csv");
        write_mask_csv(&m, &p).unwrap();
        let back = read_mask_csv(&p, &g).unwrap();
        assert_eq!(back.classes(), m.classes());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn field_csv_and_raw_round_trip_bit_exact(values in proptest::collection::vec(
            prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e-300..1e300f64],
            25,
        )) {
            let g = build_grid(1, &[5, 5], 0.1, &[-0.2, -0.2]).unwrap();
            let f = GridFunction::new(g.clone(), values).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.csv");
            write_field_csv(&f, &p).unwrap();
            prop_assert_eq!(&read_field_csv(&p, &g).unwrap(), &f);
            write_field_raw(&f, &dir.path().join("f")).unwrap();
            prop_assert_eq!(&read_field_raw(&dir.path().join("f"), 100).unwrap(), &f);
        }
    }
}
