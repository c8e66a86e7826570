//! Density CSV: a `# grid ...` metadata line, a column header, then one row per node.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::density::DensityField;
use crate::field::grid::{Axis, Grid};

pub fn grid_metadata(grid: &Grid<f64>) -> String {
    let mut s = format!("# grid dim={}", grid.dim());
    for (k, a) in grid.axes().iter().enumerate() {
        let _ = write!(s, " axis{k}={:.16e}:{:.16e}:{}", a.lo, a.hi, a.n);
    }
    s
}

pub fn density_to_csv(d: &DensityField<f64>) -> String {
    let grid = d.grid();
    let mut s = grid_metadata(grid);
    let _ = writeln!(s, " mass={:.16e}", d.mass());
    s.push_str(if grid.dim() == 1 { "x,value\n" } else { "x,y,value\n" });
    for (x, v) in grid.nodes().zip(d.values()) {
        if grid.dim() == 1 {
            let _ = writeln!(s, "{:.16e},{:.16e}", x[0], v);
        } else {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", x[0], x[1], v);
        }
    }
    s
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("density csv: {}", msg.into()))
}

/// Parses the format written by [`density_to_csv`]. The result is not renormalized.
pub fn density_from_csv(text: &str) -> Result<DensityField<f64>> {
    let mut lines = text.lines();
    let meta = lines.next().ok_or_else(|| parse_err("empty input"))?;
    let mut axes = Vec::new();
    for tok in meta.split_whitespace() {
        if let Some(spec) = tok.strip_prefix("axis").and_then(|r| r.split_once('=')) {
            let parts: Vec<&str> = spec.1.split(':').collect();
            if parts.len() != 3 {
                return Err(parse_err(format!("bad axis spec `{tok}`")));
            }
            let lo = parts[0].parse().map_err(|_| parse_err("bad lo"))?;
            let hi = parts[1].parse().map_err(|_| parse_err("bad hi"))?;
            let n = parts[2].parse().map_err(|_| parse_err("bad n"))?;
            axes.push(Axis { lo, hi, n });
        }
    }
    if !meta.starts_with("# grid") || axes.is_empty() {
        return Err(parse_err("missing `# grid` metadata line"));
    }
    let grid = Grid::new(axes)?;
    let _header = lines.next().ok_or_else(|| parse_err("missing header"))?;
    let mut values = Vec::with_capacity(grid.len());
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let last = line
            .rsplit(',')
            .next()
            .ok_or_else(|| parse_err(format!("row {ln} is empty")))?;
        values.push(
            last.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(format!("row {ln}: bad value `{last}`")))?,
        );
    }
    DensityField::new(grid, values)
}

pub fn read_density_csv(path: &Path) -> Result<DensityField<f64>> {
    density_from_csv(&std::fs::read_to_string(path)?)
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
