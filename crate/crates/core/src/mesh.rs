//! Triangulated disk domain, square receiver arrays and triangle quadrature.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Twice the signed area of the triangle `(a, b, c)`; positive when
/// counter-clockwise.
pub fn doubled_signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)
}

/// Triangular mesh of a disk with boundary markers.
///
/// Elements are stored counter-clockwise. Per-element areas and the
/// node-to-element adjacency are cached at construction since every nodal
/// operation downstream needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    nodes: Vec<Point2>,
    elements: Vec<[usize; 3]>,
    is_boundary: Vec<bool>,
    boundary_nodes: Vec<usize>,
    areas: Vec<f64>,
    node_elements: Vec<Vec<usize>>,
    mesh_size_h: f64,
}

impl TriMesh {
    /// Builds a mesh from raw parts, checking element indices and
    /// orientation.
    pub fn new(
        nodes: Vec<Point2>,
        elements: Vec<[usize; 3]>,
        is_boundary: Vec<bool>,
    ) -> Result<Self> {
        check_len(nodes.len(), is_boundary.len())?;
        if nodes.is_empty() || elements.is_empty() {
            return Err(Error::Degenerate("mesh has no nodes or no elements".into()));
        }
        if let Some(p) = nodes.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite node {p:?}")));
        }
        let n = nodes.len();
        let mut areas = Vec::with_capacity(elements.len());
        let mut node_elements = vec![Vec::new(); n];
        let mut mesh_size_h: f64 = 0.0;
        for (e, tri) in elements.iter().enumerate() {
            let [a, b, c] = *tri;
            for &i in tri {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, len: n });
                }
            }
            if a == b || b == c || a == c {
                return Err(Error::Degenerate(format!(
                    "element {e} repeats a node: {tri:?}"
                )));
            }
            let two_area = doubled_signed_area(nodes[a], nodes[b], nodes[c]);
            if !(two_area > 0.0) {
                return Err(Error::Degenerate(format!(
                    "element {e} is not counter-clockwise or has zero area"
                )));
            }
            areas.push(0.5 * two_area);
            for &i in tri {
                node_elements[i].push(e);
            }
            let diam = nodes[a]
                .dist(nodes[b])
                .max(nodes[b].dist(nodes[c]))
                .max(nodes[c].dist(nodes[a]));
            mesh_size_h = mesh_size_h.max(diam);
        }
        let boundary_nodes = (0..n).filter(|&i| is_boundary[i]).collect();
        Ok(TriMesh {
            nodes,
            elements,
            is_boundary,
            boundary_nodes,
            areas,
            node_elements,
            mesh_size_h,
        })
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.is_boundary
    }

    pub fn area(&self, element: usize) -> f64 {
        self.areas[element]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Elements sharing `node`.
    pub fn node_elements(&self, node: usize) -> &[usize] {
        &self.node_elements[node]
    }

    /// Largest element diameter.
    pub fn mesh_size_h(&self) -> f64 {
        self.mesh_size_h
    }

    /// Distance of the farthest node from the origin.
    pub fn radius(&self) -> f64 {
        self.nodes.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn vertices(&self, element: usize) -> [Point2; 3] {
        let [a, b, c] = self.elements[element];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Nodal lumped areas: one third of each adjacent element's area.
    pub fn lumped_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for (tri, &area) in self.elements.iter().zip(&self.areas) {
            for &i in tri {
                out[i] += area / 3.0;
            }
        }
        out
    }

    /// Node index closest to `p`.
    pub fn nearest_node(&self, p: Point2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.nodes.iter().enumerate() {
            let d = q.dist(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "nodes {} elements {}",
            self.node_count(),
            self.element_count()
        );
        for (p, &b) in self.nodes.iter().zip(&self.is_boundary) {
            let _ = writeln!(s, "{:?} {:?} {}", p.x, p.y, u8::from(b));
        }
        for [a, b, c] in &self.elements {
            let _ = writeln!(s, "{a} {b} {c}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("mesh line 1", "empty file"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let (n, m) = match head.as_slice() {
            ["nodes", n, "elements", m] => (
                n.parse::<usize>()
                    .map_err(|e| Error::parse("mesh header", e.to_string()))?,
                m.parse::<usize>()
                    .map_err(|e| Error::parse("mesh header", e.to_string()))?,
            ),
            _ => {
                return Err(Error::parse(
                    "mesh header",
                    format!("unexpected `{header}`"),
                ))
            }
        };
        let mut nodes = Vec::with_capacity(n);
        let mut flags = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse("mesh nodes", "truncated node list"))?;
            let loc = || format!("mesh line {}", ln + 1);
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(loc(), "expected `x y boundary_flag`"));
            }
            let x = f[0]
                .parse::<f64>()
                .map_err(|e| Error::parse(loc(), e.to_string()))?;
            let y = f[1]
                .parse::<f64>()
                .map_err(|e| Error::parse(loc(), e.to_string()))?;
            let b = match f[2] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(loc(), format!("bad boundary flag `{other}`"))),
            };
            nodes.push(Point2::new(x, y));
            flags.push(b);
        }
        let mut elements = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse("mesh elements", "truncated element list"))?;
            let loc = || format!("mesh line {}", ln + 1);
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(loc(), e.to_string()))?;
            if idx.len() != 3 {
                return Err(Error::parse(loc(), "expected `i j k`"));
            }
            elements.push([idx[0], idx[1], idx[2]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::parse(
                format!("mesh line {}", ln + 1),
                "trailing data",
            ));
        }
        TriMesh::new(nodes, elements, flags)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        TriMesh::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Structured polar-ring triangulation of the disk of the given radius.
///
/// Ring `j` sits at radius `j * radius / n` and carries `6 j` equally spaced
/// nodes starting at angle zero, with `n = ceil(radius / target_h)`. Adjacent
/// rings are stitched by walking both rings counter-clockwise and always
/// closing the triangle with the shorter diagonal. Nodes are
/// numbered ring by ring from the centre outwards.
pub fn build_disk_mesh(radius: f64, target_h: f64) -> Result<TriMesh> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "disk radius must be positive, got {radius}"
        )));
    }
    if !(target_h > 0.0 && target_h < radius) {
        return Err(Error::InvalidArgument(format!(
            "target mesh size must lie in (0, radius), got {target_h}"
        )));
    }
    let rings = (radius / target_h).ceil() as usize;
    let mut nodes = vec![Point2::new(0.0, 0.0)];
    let mut flags = vec![false];
    let mut ring_start = vec![0usize];
    for j in 1..=rings {
        ring_start.push(nodes.len());
        let r = if j == rings {
            radius
        } else {
            radius * j as f64 / rings as f64
        };
        let count = 6 * j;
        for i in 0..count {
            let theta = 2.0 * PI * i as f64 / count as f64;
            nodes.push(Point2::new(r * theta.cos(), r * theta.sin()));
            flags.push(j == rings);
        }
    }

    let mut elements = Vec::with_capacity(6 * rings * rings);
    let first = ring_start[1];
    for i in 0..6 {
        elements.push([first + i, first + (i + 1) % 6, 0]);
    }
    for j in 2..=rings {
        let inner = ring_start[j - 1];
        let outer = ring_start[j];
        let p = 6 * (j - 1);
        let q = 6 * j;
        let (mut i, mut k) = (0usize, 0usize);
        while i < p || k < q {
            // add the shorter of the two candidate diagonals
            let advance_inner = k == q
                || (i < p && {
                    let to_inner = nodes[outer + k].dist(nodes[inner + (i + 1) % p]);
                    let to_outer = nodes[inner + i].dist(nodes[outer + (k + 1) % q]);
                    to_inner <= to_outer
                });
            if advance_inner {
                elements.push([inner + i, outer + k % q, inner + (i + 1) % p]);
                i += 1;
            } else {
                elements.push([outer + k, outer + (k + 1) % q, inner + i % p]);
                k += 1;
            }
        }
    }
    TriMesh::new(nodes, elements, flags)
}

/// Receiver points on the boundary of the square `[-a, a]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverArray {
    points: Vec<Point2>,
    square_half_side: f64,
}

impl ReceiverArray {
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn square_half_side(&self) -> f64 {
        self.square_half_side
    }

    /// Smallest distance from any receiver to any mesh node.
    pub fn min_distance_to(&self, mesh: &TriMesh) -> f64 {
        self.points
            .iter()
            .flat_map(|r| mesh.nodes().iter().map(move |p| p.dist(*r)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `4 (per_side - 1)` receivers spaced uniformly along the square perimeter,
/// counter-clockwise from the corner `(-a, -a)`, corners included once.
pub fn square_receivers(half_side: f64, per_side: usize) -> Result<ReceiverArray> {
    if per_side < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 receivers per side, got {per_side}"
        )));
    }
    if !(half_side > 0.0) || !half_side.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "square half side must be positive, got {half_side}"
        )));
    }
    let a = half_side;
    let segs = per_side - 1;
    let step = 2.0 * a / segs as f64;
    let mut points = Vec::with_capacity(4 * segs);
    let coord = |i: usize| if i == segs { a } else { -a + i as f64 * step };
    for i in 0..segs {
        points.push(Point2::new(coord(i), -a));
    }
    for i in 0..segs {
        points.push(Point2::new(a, coord(i)));
    }
    for i in 0..segs {
        points.push(Point2::new(-coord(i), a));
    }
    for i in 0..segs {
        points.push(Point2::new(-a, -coord(i)));
    }
    Ok(ReceiverArray {
        points,
        square_half_side: a,
    })
}

/// Quadrature rule on a triangle in barycentric form; weights are relative
/// to the triangle's area and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TriQuadRule {
    pub barycentric_points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriQuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical quadrature points of a triangle.
    pub fn map_points(&self, tri: &[Point2; 3]) -> Vec<Point2> {
        self.barycentric_points
            .iter()
            .map(|l| {
                Point2::new(
                    l[0] * tri[0].x + l[1] * tri[1].x + l[2] * tri[2].x,
                    l[0] * tri[0].y + l[1] * tri[1].y + l[2] * tri[2].y,
                )
            })
            .collect()
    }
}

/// Symmetric Gauss rules exact for polynomials of total degree `order`.
///
/// Order 3 uses the positive six-point rule, which is in fact exact to
/// degree 4.
pub fn triangle_quadrature(order: usize) -> Result<TriQuadRule> {
    let rule = match order {
        1 => TriQuadRule {
            barycentric_points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        },
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            TriQuadRule {
                barycentric_points: vec![[a, b, b], [b, a, b], [b, b, a]],
                weights: vec![1.0 / 3.0; 3],
            }
        }
        3 => {
            let a1 = 0.445_948_490_915_965;
            let b1 = 1.0 - 2.0 * a1;
            let w1 = 0.223_381_589_678_011;
            let a2 = 0.091_576_213_509_771;
            let b2 = 1.0 - 2.0 * a2;
            let w2 = 0.5 * (1.0 - 3.0 * w1) / 1.5;
            TriQuadRule {
                barycentric_points: vec![
                    [b1, a1, a1],
                    [a1, b1, a1],
                    [a1, a1, b1],
                    [b2, a2, a2],
                    [a2, b2, a2],
                    [a2, a2, b2],
                ],
                weights: vec![w1, w1, w1, w2, w2, w2],
            }
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "triangle quadrature of order {order} (supported: 1, 2, 3)"
            )))
        }
    };
    Ok(rule)
}

/// Exact gradient of the linear interpolant of `nodal_field` on `element`.
pub fn element_gradient(mesh: &TriMesh, nodal_field: &[f64], element: usize) -> Result<(f64, f64)> {
    check_len(mesh.node_count(), nodal_field.len())?;
    if element >= mesh.element_count() {
        return Err(Error::IndexOutOfRange {
            index: element,
            len: mesh.element_count(),
        });
    }
    Ok(element_gradient_unchecked(mesh, nodal_field, element))
}

pub(crate) fn element_gradient_unchecked(mesh: &TriMesh, u: &[f64], element: usize) -> (f64, f64) {
    let [i0, i1, i2] = mesh.elements[element];
    let (p0, p1, p2) = (mesh.nodes[i0], mesh.nodes[i1], mesh.nodes[i2]);
    let two_area = 2.0 * mesh.areas[element];
    let (du1, du2) = (u[i1] - u[i0], u[i2] - u[i0]);
    let gx = (du1 * (p2.y - p0.y) - du2 * (p1.y - p0.y)) / two_area;
    let gy = (du2 * (p1.x - p0.x) - du1 * (p2.x - p0.x)) / two_area;
    (gx, gy)
}

/// Gradients of the three hat functions on an element, `[(∂x λ_i, ∂y λ_i)]`.
pub fn hat_gradients(mesh: &TriMesh, element: usize) -> [(f64, f64); 3] {
    let [p0, p1, p2] = mesh.vertices(element);
    let two_area = 2.0 * mesh.areas[element];
    let pts = [p0, p1, p2];
    let mut out = [(0.0, 0.0); 3];
    for (i, g) in out.iter_mut().enumerate() {
        let a = pts[(i + 1) % 3];
        let b = pts[(i + 2) % 3];
        *g = ((a.y - b.y) / two_area, (b.x - a.x) / two_area);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_mesh_is_valid() {
        let m = build_disk_mesh(1.0, 0.5).unwrap();
        assert_eq!(m.node_count(), 1 + 6 + 12);
        assert_eq!(m.element_count(), 6 * 4);
        let area = m.total_area();
        assert!((area - PI).abs() / PI < 0.05);
        assert!(m.mesh_size_h() <= 1.5 * 0.5);
        for &b in m.boundary_nodes() {
            assert!((m.nodes()[b].norm() - 1.0).abs() <= 1e-9);
        }
        let on_circle = m
            .nodes()
            .iter()
            .filter(|p| (p.norm() - 1.0).abs() <= 1e-9)
            .count();
        assert_eq!(on_circle, m.boundary_nodes().len());
    }

    #[test]
    fn fine_mesh_area() {
        let m = build_disk_mesh(1.0, 0.05).unwrap();
        let area: f64 = (0..m.element_count())
            .map(|e| {
                let [a, b, c] = m.vertices(e);
                0.5 * doubled_signed_area(a, b, c)
            })
            .sum();
        assert!((area - PI).abs() / PI < 0.002);
        assert!(m.mesh_size_h() <= 1.5 * 0.05);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_disk_mesh(1.0, 0.0).is_err());
        assert!(build_disk_mesh(0.0, 0.1).is_err());
        assert!(build_disk_mesh(1.0, 1.5).is_err());
    }

    #[test]
    fn receivers_corners_and_midpoints() {
        let r = square_receivers(2.0, 2).unwrap();
        assert_eq!(
            r.points(),
            &[
                Point2::new(-2.0, -2.0),
                Point2::new(2.0, -2.0),
                Point2::new(2.0, 2.0),
                Point2::new(-2.0, 2.0)
            ]
        );
        let r = square_receivers(2.0, 3).unwrap();
        assert_eq!(r.len(), 8);
        for p in [(0.0, -2.0), (2.0, 0.0), (0.0, 2.0), (-2.0, 0.0)] {
            assert!(r.points().contains(&Point2::new(p.0, p.1)), "{p:?}");
        }
        assert_eq!(square_receivers(2.0, 7).unwrap().len(), 24);
        assert!(square_receivers(2.0, 1).is_err());
    }

    #[test]
    fn receivers_are_distinct_and_on_square() {
        let r = square_receivers(1.5, 9).unwrap();
        for (i, p) in r.points().iter().enumerate() {
            assert!(p.x.abs() == 1.5 || p.y.abs() == 1.5);
            assert!(p.x.abs() <= 1.5 && p.y.abs() <= 1.5);
            for q in &r.points()[i + 1..] {
                assert!(p.dist(*q) > 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_weights() {
        for order in 1..=3 {
            let q = triangle_quadrature(order).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for l in &q.barycentric_points {
                assert!(l.iter().all(|&v| (0.0..=1.0).contains(&v)));
                assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
        assert!(triangle_quadrature(4).is_err());
        assert_eq!(triangle_quadrature(1).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn gradient_of_affine_field() {
        let m = build_disk_mesh(1.0, 0.3).unwrap();
        let x: Vec<f64> = m.nodes().iter().map(|p| p.x).collect();
        let c = vec![2.5; m.node_count()];
        for e in 0..m.element_count() {
            let (gx, gy) = element_gradient(&m, &x, e).unwrap();
            assert!((gx - 1.0).abs() < 1e-13 && gy.abs() < 1e-13);
            assert_eq!(element_gradient(&m, &c, e).unwrap(), (0.0, 0.0));
        }
        assert!(element_gradient(&m, &x, m.element_count()).is_err());
        assert!(element_gradient(&m, &x[1..], 0).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = build_disk_mesh(1.3, 0.27).unwrap();
        let text = m.to_text();
        let back = TriMesh::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_clockwise_element() {
        let nodes = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(TriMesh::new(nodes.clone(), vec![[0, 2, 1]], vec![false; 3]).is_err());
        assert!(TriMesh::new(nodes.clone(), vec![[0, 1, 1]], vec![false; 3]).is_err());
        assert!(TriMesh::new(nodes, vec![[0, 1, 2]], vec![false; 3]).is_ok());
    }
}
