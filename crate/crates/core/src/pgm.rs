//! Grayscale raster output in the plain (P2) PGM format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::mesh::{doubled_signed_area, Point2, TriMesh};

/// Gray level used for every in-disk pixel of a constant field.
pub const DEGENERATE_GRAY: u8 = 128;

const VALUES_PER_LINE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, first row at the top (largest y).
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            for chunk in row.chunks(VALUES_PER_LINE) {
                let line: Vec<String> = chunk.iter().map(|p| p.to_string()).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    pub fn from_pgm(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(Error::parse("pgm header", "expected magic P2"));
        }
        let mut num = |what: &str| -> Result<usize> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse("pgm", format!("missing or invalid {what}")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval != 255 {
            return Err(Error::parse(
                "pgm header",
                format!("unsupported maxval {maxval}"),
            ));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for _ in 0..width * height {
            let v = num("pixel")?;
            if v > 255 {
                return Err(Error::parse("pgm", format!("pixel value {v} exceeds 255")));
            }
            pixels.push(v as u8);
        }
        if tokens.next().is_some() {
            return Err(Error::parse("pgm", "trailing data after pixels"));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_pgm(&std::fs::read_to_string(path)?)
    }
}

fn barycentric(v: [Point2; 3], p: Point2) -> [f64; 3] {
    let total = doubled_signed_area(v[0], v[1], v[2]);
    let l0 = doubled_signed_area(p, v[1], v[2]) / total;
    let l1 = doubled_signed_area(v[0], p, v[2]) / total;
    [l0, l1, 1.0 - l0 - l1]
}

/// Samples a nodal field at `p`: linear interpolation inside the element
/// containing `p`, or extrapolation from the element with the nearest
/// centroid when no element contains it.
pub fn sample_at(mesh: &TriMesh, values: &[f64], p: Point2) -> f64 {
    let mut best = (f64::INFINITY, 0usize);
    for e in 0..mesh.element_count() {
        let v = mesh.vertices(e);
        let lam = barycentric(v, p);
        if lam.iter().all(|&l| l >= -1e-12) {
            return interpolate(mesh, values, e, lam);
        }
        let c = Point2::new(
            (v[0].x + v[1].x + v[2].x) / 3.0,
            (v[0].y + v[1].y + v[2].y) / 3.0,
        );
        let d = c.dist(p);
        if d < best.0 {
            best = (d, e);
        }
    }
    let e = best.1;
    interpolate(mesh, values, e, barycentric(mesh.vertices(e), p))
}

fn interpolate(mesh: &TriMesh, values: &[f64], e: usize, lam: [f64; 3]) -> f64 {
    let tri = mesh.elements()[e];
    lam.iter().zip(tri).map(|(l, i)| l * values[i]).sum()
}

/// Renders a nodal field on a `resolution × resolution` grid of pixel
/// centers covering the square `[-R, R]²`, R the mesh radius. In-disk
/// pixels map the field's nodal range linearly onto 0..=255; pixels outside
/// the disk are 0. A constant field renders as [`DEGENERATE_GRAY`].
pub fn render_pgm(values: &[f64], mesh: &TriMesh, resolution: usize) -> Result<GrayImage> {
    check_len(mesh.node_count(), values.len())?;
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "resolution must be at least 16, got {resolution}"
        )));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("field has non-finite values".into()));
    }
    let r = mesh.radius();
    let step = 2.0 * r / resolution as f64;
    let mut pixels = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        let y = r - (row as f64 + 0.5) * step;
        for col in 0..resolution {
            let p = Point2::new(-r + (col as f64 + 0.5) * step, y);
            let px = if p.norm() > r {
                0
            } else if hi == lo {
                DEGENERATE_GRAY
            } else {
                let t = (sample_at(mesh, values, p) - lo) / (hi - lo);
                (255.0 * t).round().clamp(0.0, 255.0) as u8
            };
            pixels.push(px);
        }
    }
    Ok(GrayImage {
        width: resolution,
        height: resolution,
        pixels,
    })
}
