//! Plain-text kernel tables: a `#!` header line with `z_re z_im grid_n
//! box_radius`, then one `x y z re im` line per offset. Other lines starting
//! with `#` and blank lines are ignored.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::kernel::{KernelMethod, ResolventGrid};
use crate::error::{Error, Result};

/// Largest box radius accepted when reading.
pub const MAX_TEXT_BOX_RADIUS: usize = 64;

pub fn write_kernel_text(grid: &ResolventGrid) -> String {
    let mut out = String::new();
    out.push_str("# lattice resolvent kernel R0(z)(x, 0)\n");
    out.push_str("# z_re z_im grid_n box_radius\n");
    let _ = writeln!(out, "#! {} {} {} {}", grid.z.re, grid.z.im, grid.grid_n, grid.box_radius);
    for (x, v) in grid.iter() {
        let _ = writeln!(out, "{} {} {} {} {}", x[0], x[1], x[2], v.re, v.im);
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {name}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {name} `{tok}`")))
}

fn finite(v: f64, line: usize, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("{name} is not finite")))
    }
}

/// Reads a table written by [`write_kernel_text`]. Every offset of the box must
/// appear exactly once.
pub fn parse_kernel_text(text: &str) -> Result<ResolventGrid> {
    let mut header: Option<(Complex64, usize, usize)> = None;
    let mut entries: Vec<([i64; 3], Complex64, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("#!") {
            if header.is_some() {
                return Err(parse_err(n, "second header line"));
            }
            let mut t = rest.split_whitespace();
            let re = finite(field(t.next(), n, "z_re")?, n, "z_re")?;
            let im = finite(field(t.next(), n, "z_im")?, n, "z_im")?;
            let grid_n = field(t.next(), n, "grid_n")?;
            let box_radius: usize = field(t.next(), n, "box_radius")?;
            if t.next().is_some() {
                return Err(parse_err(n, "trailing fields in header"));
            }
            if box_radius > MAX_TEXT_BOX_RADIUS {
                return Err(parse_err(n, format!("box_radius {box_radius} above {MAX_TEXT_BOX_RADIUS}")));
            }
            header = Some((Complex64::new(re, im), grid_n, box_radius));
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut t = line.split_whitespace();
        let x = [field(t.next(), n, "x")?, field(t.next(), n, "y")?, field(t.next(), n, "z")?];
        let re = finite(field(t.next(), n, "re")?, n, "re")?;
        let im = finite(field(t.next(), n, "im")?, n, "im")?;
        if t.next().is_some() {
            return Err(parse_err(n, "expected 5 fields"));
        }
        entries.push((x, Complex64::new(re, im), n));
    }
    let (z, grid_n, box_radius) = header.ok_or_else(|| parse_err(0, "missing `#!` header"))?;
    let l = box_radius as i64;
    let side = 2 * box_radius + 1;
    let total = side * side * side;
    let mut values = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];
    for (x, v, n) in entries {
        if x.iter().any(|c| c.unsigned_abs() > box_radius as u64) {
            return Err(parse_err(n, format!("offset {x:?} outside box radius {box_radius}")));
        }
        let idx = (((x[0] + l) * (2 * l + 1) + (x[1] + l)) * (2 * l + 1) + (x[2] + l)) as usize;
        if seen[idx] {
            return Err(parse_err(n, format!("offset {x:?} repeated")));
        }
        seen[idx] = true;
        values[idx] = v;
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        return Err(parse_err(0, format!("{missing} offsets missing")));
    }
    Ok(ResolventGrid::from_values(z, grid_n, box_radius, KernelMethod::Imported, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolvent::kernel;

    #[test]
    fn round_trip_is_exact() {
        let g = kernel(Complex64::new(-1.0, 0.3), 64, 3).unwrap();
        let back = parse_kernel_text(&write_kernel_text(&g)).unwrap();
        assert_eq!(back.z, g.z);
        assert_eq!(back.box_radius, 3);
        for (x, v) in g.iter() {
            assert_eq!(back.at(x), v);
        }
    }

    #[test]
    fn reports_line_numbers() {
        let text = "#! -1 0 64 0\n\n0 0 zero 1 0\n";
        assert_eq!(parse_kernel_text(text), Err(Error::Parse { line: 3, message: "bad z `zero`".into() }));
        assert!(matches!(parse_kernel_text("0 0 0 1 0\n"), Err(Error::Parse { line: 0, .. })));
        assert!(matches!(parse_kernel_text("#! -1 0 64 1\n0 0 0 1 0\n"), Err(Error::Parse { line: 0, .. })));
        assert!(matches!(parse_kernel_text("#! -1 0 64 0\n0 0 0 1 0\n0 0 0 1 0\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_kernel_text("#! -1 0 64 0\n0 0 0 NaN 0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_kernel_text("#! -1 0 64 0\n-9223372036854775808 0 0 1 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
