//! Nodal fields on a [`TriMesh`] and their CSV form.

use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::mesh::TriMesh;

macro_rules! nodal_field {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                $name(values)
            }

            pub fn zeros(n: usize) -> Self {
                $name(vec![0.0; n])
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            /// Checks length against `mesh` and that every value is finite.
            pub fn check_on(&self, mesh: &TriMesh) -> Result<()> {
                check_len(mesh.node_count(), self.0.len())?;
                if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Domain(format!(
                        "{} has a non-finite value at node {i}",
                        stringify!($name)
                    )));
                }
                Ok(())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }
    };
}

nodal_field!(
    /// Level-set function φ sampled at mesh nodes.
    LevelSetField
);
nodal_field!(
    /// Source density f sampled at mesh nodes.
    SourceField
);

/// Writes `node_index,x,y,value` rows.
pub fn nodal_csv(mesh: &TriMesh, values: &[f64]) -> Result<String> {
    check_len(mesh.node_count(), values.len())?;
    let mut s = String::from("node_index,x,y,value\n");
    for (i, (p, v)) in mesh.nodes().iter().zip(values).enumerate() {
        let _ = writeln!(s, "{i},{:?},{:?},{:?}", p.x, p.y, v);
    }
    Ok(s)
}

pub fn write_nodal_csv(path: &Path, mesh: &TriMesh, values: &[f64]) -> Result<()> {
    std::fs::write(path, nodal_csv(mesh, values)?)?;
    Ok(())
}

/// Parses the nodal CSV format, returning the values in node order.
pub fn parse_nodal_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "node_index,x,y,value" => {}
        _ => return Err(Error::parse("nodal csv line 1", "missing header")),
    }
    let mut out = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("nodal csv line {}", ln + 1);
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::parse(loc(), "expected 4 columns"));
        }
        let idx: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), "bad node index"))?;
        if idx != out.len() {
            return Err(Error::parse(
                loc(),
                format!("node index {idx} out of order"),
            ));
        }
        let v: f64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), "bad value"))?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_nodal_csv(path: &Path) -> Result<Vec<f64>> {
    parse_nodal_csv(&std::fs::read_to_string(path)?)
}
