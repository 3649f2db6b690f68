//! Legacy ASCII VTK `STRUCTURED_POINTS` files.

use ddonet::grid::Field;
use std::fmt::Write;

/// VTK orders points with x fastest; grid values have the last axis fastest.
pub fn to_vtk(field: &Field, name: &str, title: &str) -> String {
    let g = &field.grid;
    let d = g.dim();
    let n = |k: usize| if k < d { g.count(k) } else { 1 };
    let h = |k: usize| if k < d { g.spacing(k) } else { 1.0 };
    let o = |k: usize| if k < d { g.bx().lo()[k] } else { 0.0 };
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", n(0), n(1), n(2));
    let _ = writeln!(s, "ORIGIN {:?} {:?} {:?}", o(0), o(1), o(2));
    let _ = writeln!(s, "SPACING {:?} {:?} {:?}", h(0), h(1), h(2));
    let _ = writeln!(s, "POINT_DATA {}", g.len());
    let _ = writeln!(s, "SCALARS {name} double 1");
    s.push_str("LOOKUP_TABLE default\n");
    for k in 0..n(2) {
        for j in 0..n(1) {
            for i in 0..n(0) {
                let v = field.values[g.flat(&[i, j, k])];
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtkInfo {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub name: String,
    /// In VTK order.
    pub values: Vec<f64>,
}

impl VtkInfo {
    /// Far corner implied by origin, spacing and dimensions.
    pub fn extent_hi(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.origin[k] + (self.dims[k] as f64 - 1.0) * self.spacing[k])
    }
}

fn numbers<T: std::str::FromStr>(
    line: Option<&str>,
    key: &str,
    count: usize,
) -> Result<Vec<T>, String> {
    let line = line.ok_or_else(|| format!("missing {key} line"))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(format!("expected `{key}`, found `{line}`"));
    }
    let v: Vec<T> = it
        .map(|t| t.parse().map_err(|_| format!("bad number `{t}` in {key}")))
        .collect::<Result<_, _>>()?;
    if v.len() != count {
        return Err(format!("{key} needs {count} values, found {}", v.len()));
    }
    Ok(v)
}

/// Structural check of a file produced by [`to_vtk`] or any other legacy
/// ASCII structured-points writer with one scalar array.
pub fn validate_vtk(text: &str) -> Result<VtkInfo, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("# vtk DataFile Version 3.0") {
        return Err("missing `# vtk DataFile Version 3.0` header".into());
    }
    lines.next().ok_or("missing title line")?;
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    if lines.next().map(str::trim) != Some("DATASET STRUCTURED_POINTS") {
        return Err("expected `DATASET STRUCTURED_POINTS`".into());
    }
    let dims: Vec<usize> = numbers(lines.next(), "DIMENSIONS", 3)?;
    let origin: Vec<f64> = numbers(lines.next(), "ORIGIN", 3)?;
    let spacing: Vec<f64> = numbers(lines.next(), "SPACING", 3)?;
    if dims.contains(&0) {
        return Err("zero dimension".into());
    }
    if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err("spacing must be positive and finite".into());
    }
    let count: Vec<usize> = numbers(lines.next(), "POINT_DATA", 1)?;
    let nodes: usize = dims.iter().product();
    if count[0] != nodes {
        return Err(format!(
            "POINT_DATA {} differs from {nodes} grid points",
            count[0]
        ));
    }
    let scalars = lines.next().ok_or("missing SCALARS line")?;
    let parts: Vec<&str> = scalars.split_whitespace().collect();
    if parts.len() < 3 || parts[0] != "SCALARS" || !matches!(parts[2], "double" | "float") {
        return Err(format!("bad SCALARS line `{scalars}`"));
    }
    if lines.next().map(str::trim) != Some("LOOKUP_TABLE default") {
        return Err("expected `LOOKUP_TABLE default`".into());
    }
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad scalar `{t}`")))
        .collect::<Result<_, _>>()?;
    if values.len() != nodes {
        return Err(format!("{} scalars for {nodes} points", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite scalar".into());
    }
    Ok(VtkInfo {
        dims: [dims[0], dims[1], dims[2]],
        origin: [origin[0], origin[1], origin[2]],
        spacing: [spacing[0], spacing[1], spacing[2]],
        name: parts[1].into(),
        values,
    })
}
