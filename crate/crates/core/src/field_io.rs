//! CSV and legacy-VTK serialization of grid fields.
//!
//! CSV layout: one header line `# nx ny hx hy x_min y_min` followed by `ny`
//! rows of `nx` comma-separated values, row `j = 0` first. Values are written
//! with 17 significant digits, which round-trips every finite `f64`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

pub fn scalar_to_csv(field: &ScalarField) -> String {
    let s = field.spec;
    let mut out = String::with_capacity(s.n_cells() * 25 + 64);
    writeln!(out, "# {} {} {:e} {:e} {:e} {:e}", s.nx, s.ny, s.hx, s.hy, s.x_min, s.y_min).unwrap();
    for j in 0..s.ny {
        for i in 0..s.nx {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{:.16e}", field.at(i, j)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn scalar_from_csv(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Parse("missing '# nx ny hx hy x_min y_min' header".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(Error::Parse(format!("header needs 6 entries, got {}", parts.len())));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let real = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let (nx, ny) = (int(parts[0])?, int(parts[1])?);
    let (hx, hy, x_min, y_min) = (real(parts[2])?, real(parts[3])?, real(parts[4])?, real(parts[5])?);
    let mut spec = GridSpec::new(x_min, x_min + nx as f64 * hx, y_min, y_min + ny as f64 * hy, nx, ny)?;
    spec.hx = hx;
    spec.hy = hy;

    let mut values = Vec::with_capacity(nx * ny);
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let before = values.len();
        for tok in line.split(',') {
            values.push(real(tok.trim())?);
        }
        if values.len() - before != nx {
            return Err(Error::Parse(format!("row {row} has {} values, expected {nx}", values.len() - before)));
        }
    }
    ScalarField::from_values(spec, values)
}

pub fn write_scalar_csv(path: &Path, field: &ScalarField) -> Result<()> {
    std::fs::write(path, scalar_to_csv(field))?;
    Ok(())
}

pub fn read_scalar_csv(path: &Path) -> Result<ScalarField> {
    scalar_from_csv(&std::fs::read_to_string(path)?)
}

/// Legacy VTK structured-points file with one point per cell center.
pub fn write_vtk(path: &Path, fields: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = fields.first() else {
        return Err(Error::Shape("no fields to write".into()));
    };
    let s = first.spec;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "tissue-flow fields")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET STRUCTURED_POINTS")?;
    writeln!(f, "DIMENSIONS {} {} 1", s.nx, s.ny)?;
    writeln!(f, "ORIGIN {:e} {:e} 0", s.xc(0), s.yc(0))?;
    writeln!(f, "SPACING {:e} {:e} 1", s.hx, s.hy)?;
    writeln!(f, "POINT_DATA {}", s.n_cells())?;
    for (name, field) in fields {
        if field.spec != s {
            return Err(Error::Shape(format!("field {name} is on a different grid")));
        }
        writeln!(f, "SCALARS {name} double 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for v in &field.values {
            writeln!(f, "{v:.16e}")?;
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 20), nx in 4usize..6) {
            let spec = GridSpec::new(-1.0, 1.0, -0.5, 0.75, nx, 5).unwrap();
            let values: Vec<f64> = (0..nx * 5).map(|k| vals[k % vals.len()] / (k as f64 + 1.0)).collect();
            let f = ScalarField::from_values(spec, values).unwrap();
            let back = scalar_from_csv(&scalar_to_csv(&f)).unwrap();
            prop_assert_eq!(back.spec.nx, nx);
            for (a, b) in f.values.iter().zip(&back.values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "# 4 4 0.5 0.5 -1 -1\n1,2,3,4\n1,2,3\n";
        assert!(scalar_from_csv(text).is_err());
    }

    #[test]
    fn vtk_writes_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::unit_square(4, 4).unwrap();
        let f = ScalarField::from_fn(spec, |x, y| x + y);
        let p = dir.path().join("f.vtk");
        write_vtk(&p, &[("n1", &f)]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.contains("DIMENSIONS 4 4 1"));
        assert_eq!(text.lines().count(), 10 + 16);
    }
}
