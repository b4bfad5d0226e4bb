//! Triangulated rectangular domains with tagged boundary parts.
//!
//! Meshes are structured crisscross triangulations: each grid cell is split
//! into two triangles along a diagonal whose direction alternates with cell
//! parity.  Boundary edges carry one of three tags — `Left` (x = 0, clamped),
//! `Right` (x = length, driven) and `TopBottom` (y ∈ {0, height}, the contact
//! part).  Tags live on edges, never on vertices, so corner vertices touching
//! two boundary parts cause no conflict here.


use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::invalid_input;
use crate::linalg::Vec2;

/// Rectangle extents and target edge length for the structured generator.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DomainSpec {
    /// Extent in x, meters.
    pub length: f64,
    /// Extent in y, meters.
    pub height: f64,
    /// Target edge length, meters.
    pub mesh_size_h: f64,
}

impl DomainSpec {
    pub fn new(length: f64, height: f64, mesh_size_h: f64) -> Result<Self> {
        let spec = DomainSpec { length, height, mesh_size_h };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(invalid_input!("domain length must be positive, got {}", self.length));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(invalid_input!("domain height must be positive, got {}", self.height));
        }
        let min_extent = self.length.min(self.height);
        if !(self.mesh_size_h > 0.0 && self.mesh_size_h < min_extent) {
            return Err(invalid_input!(
                "mesh size must lie in (0, {min_extent}), got {}",
                self.mesh_size_h
            ));
        }
        Ok(())
    }
}

impl Default for DomainSpec {
    /// The desk-scale plate: 2 m × 1 m at a 0.1 m target edge length.
    fn default() -> Self {
        DomainSpec { length: 2.0, height: 1.0, mesh_size_h: 0.1 }
    }
}

/// Which part of the boundary an edge belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundaryTag {
    /// x = 0; homogeneous Dirichlet.
    Left,
    /// x = length; driven Dirichlet.
    Right,
    /// y ∈ {0, height}; contact boundary.
    TopBottom,
}

/// One boundary edge: its vertex pair, the unique adjacent triangle, its tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub triangle: usize,
    pub tag: BoundaryTag,
}

/// An immutable conforming triangulation.
///
/// Immutability is load-bearing: solvers and sweep workers share a mesh
/// across threads without synchronisation.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    /// Maximal edge length over all triangles.
    h: f64,
}

/// A maximal straight piece of a vertical section contained in one triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionSegment {
    pub triangle: usize,
    pub y_lo: f64,
    pub y_hi: f64,
}

/// The intersection of a vertical line with the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct VerticalSection {
    /// Infimum of {y | (x, y) ∈ Ω}.
    pub y_a: f64,
    /// Supremum of {y | (x, y) ∈ Ω}.
    pub y_b: f64,
    /// Segments partitioning [y_a, y_b], ordered bottom to top.
    pub segments: Vec<SectionSegment>,
}

/// Barycentric sign tolerance for point location and section clipping.
const GEOM_TOL: f64 = 1e-12;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

impl Mesh {
    /// Builds a mesh from raw parts, validating every structural invariant:
    /// indices in bounds, strictly positive areas (triangles are reoriented
    /// counter-clockwise if needed), watertightness, and that the tagged
    /// boundary edges are exactly the edges adjacent to a single triangle.
    pub fn from_parts(
        vertices: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(invalid_input!(
                "mesh needs at least 3 vertices and 1 triangle, got {} / {}",
                vertices.len(),
                triangles.len()
            ));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= vertices.len() {
                    return Err(Error::IndexOutOfBounds {
                        what: "triangle vertex",
                        index: v,
                        len: vertices.len(),
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(invalid_input!("triangle {t} has repeated vertices"));
            }
            let a = vertices[tri[0]];
            let b = vertices[tri[1]];
            let c = vertices[tri[2]];
            let signed = 0.5 * cross(b - a, c - a);
            if signed == 0.0 || !signed.is_finite() {
                return Err(invalid_input!("triangle {t} is degenerate (zero area)"));
            }
            if signed < 0.0 {
                tri.swap(1, 2);
            }
        }

        // Count how many triangles share each undirected edge.
        let mut edge_use: Vec<([usize; 2], usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                edge_use.push(([a.min(b), a.max(b)], t));
            }
        }
        edge_use.sort_unstable();
        let mut exposed: Vec<([usize; 2], usize)> = Vec::new();
        let mut i = 0;
        while i < edge_use.len() {
            let mut j = i + 1;
            while j < edge_use.len() && edge_use[j].0 == edge_use[i].0 {
                j += 1;
            }
            match j - i {
                1 => exposed.push(edge_use[i]),
                2 => {}
                n => {
                    return Err(invalid_input!(
                        "edge ({}, {}) shared by {n} triangles",
                        edge_use[i].0[0],
                        edge_use[i].0[1]
                    ))
                }
            }
            i = j;
        }

        let mut tagged: Vec<[usize; 2]> = boundary_edges
            .iter()
            .map(|e| [e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])])
            .collect();
        tagged.sort_unstable();
        tagged.dedup();
        if tagged.len() != boundary_edges.len() {
            return Err(invalid_input!("duplicate boundary edge in tag list"));
        }
        let exposed_keys: Vec<[usize; 2]> = exposed.iter().map(|(k, _)| *k).collect();
        if tagged != exposed_keys {
            return Err(invalid_input!(
                "tagged boundary ({} edges) does not match the exposed mesh boundary ({} edges)",
                tagged.len(),
                exposed_keys.len()
            ));
        }
        for e in &boundary_edges {
            let key = [e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])];
            let owner = exposed
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, t)| *t)
                .expect("checked above");
            if e.triangle != owner {
                return Err(invalid_input!(
                    "boundary edge ({}, {}) lists triangle {} but belongs to {}",
                    e.vertices[0],
                    e.vertices[1],
                    e.triangle,
                    owner
                ));
            }
        }

        let mut h: f64 = 0.0;
        for tri in &triangles {
            for k in 0..3 {
                let e = (vertices[tri[(k + 1) % 3]] - vertices[tri[k]]).norm();
                h = h.max(e);
            }
        }

        Ok(Mesh { vertices, triangles, boundary_edges, h })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Maximal edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Axis-aligned bounding box `(min corner, max corner)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn triangle_vertices(&self, t: usize) -> Result<[Vec2; 3]> {
        let tri = self.triangles.get(t).ok_or(Error::IndexOutOfBounds {
            what: "triangle",
            index: t,
            len: self.triangles.len(),
        })?;
        Ok([self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]])
    }

    pub fn triangle_area(&self, t: usize) -> Result<f64> {
        let [a, b, c] = self.triangle_vertices(t)?;
        Ok(0.5 * cross(b - a, c - a))
    }

    /// Gradients of the three nodal hat functions on triangle `t`
    /// (constant per triangle for P₁ elements).
    pub fn hat_gradients(&self, t: usize) -> Result<[Vec2; 3]> {
        let [a, b, c] = self.triangle_vertices(t)?;
        let inv2a = 1.0 / cross(b - a, c - a);
        Ok([
            Vec2::new((b.y - c.y) * inv2a, (c.x - b.x) * inv2a),
            Vec2::new((c.y - a.y) * inv2a, (a.x - c.x) * inv2a),
            Vec2::new((a.y - b.y) * inv2a, (b.x - a.x) * inv2a),
        ])
    }

    /// Unit normal of boundary edge `edge_index`, pointing out of the domain.
    pub fn outward_normal(&self, edge_index: usize) -> Result<Vec2> {
        let e = self.boundary_edges.get(edge_index).ok_or(Error::IndexOutOfBounds {
            what: "boundary edge",
            index: edge_index,
            len: self.boundary_edges.len(),
        })?;
        let a = self.vertices[e.vertices[0]];
        let b = self.vertices[e.vertices[1]];
        let t = self.triangles[e.triangle];
        let opposite = t
            .iter()
            .copied()
            .find(|v| *v != e.vertices[0] && *v != e.vertices[1])
            .expect("boundary edge is an edge of its triangle");
        let d = b - a;
        let n = Vec2::new(d.y, -d.x)
            .normalized()
            .ok_or(invalid_input!("degenerate boundary edge {edge_index}"))?;
        let mid = (a + b) * 0.5;
        let away = mid - self.vertices[opposite];
        Ok(if n.dot(away) >= 0.0 { n } else { -n })
    }

    /// Sorted, deduplicated vertices incident to edges carrying `tag`.
    pub fn tagged_vertices(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.vertices)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Largest vertex-index difference within any triangle; the band profile
    /// of assembled systems follows from it.
    pub fn max_index_spread(&self) -> usize {
        self.triangles
            .iter()
            .map(|t| {
                let lo = t.iter().min().unwrap();
                let hi = t.iter().max().unwrap();
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }

    /// Finds the triangle containing `p` together with its barycentric
    /// coordinates.  Points on shared edges resolve to the lowest triangle
    /// index; coordinates are clamped to `[0, 1]` and renormalised so the
    /// reconstruction `Σ λᵢ vᵢ` reproduces `p` to 1e-12.
    pub fn locate_point(&self, p: Vec2) -> Result<(usize, [f64; 3])> {
        for (t, _) in self.triangles.iter().enumerate() {
            let [a, b, c] = self.triangle_vertices(t)?;
            let d = cross(b - a, c - a);
            let l2 = cross(p - a, c - a) / d;
            let l3 = cross(b - a, p - a) / d;
            let l1 = 1.0 - l2 - l3;
            if l1 >= -GEOM_TOL && l2 >= -GEOM_TOL && l3 >= -GEOM_TOL {
                let mut l = [l1.max(0.0), l2.max(0.0), l3.max(0.0)];
                let s = l[0] + l[1] + l[2];
                for li in &mut l {
                    *li /= s;
                }
                return Ok((t, l));
            }
        }
        Err(Error::OutOfDomain { x: p.x, y: p.y })
    }

    /// Intersects the vertical line `x = x_coord` with the mesh.
    ///
    /// Each triangle cut by the line contributes a y-interval; a bottom-up
    /// sweep selects, at every cursor position, the lowest-index covering
    /// triangle, so the returned segments partition `[y_a, y_b]` even where
    /// the line coincides with mesh edges and two triangles offer the same
    /// interval.
    pub fn vertical_section(&self, x_coord: f64) -> Result<VerticalSection> {
        let (lo, hi) = self.bounds();
        let span = (hi.x - lo.x).max(1.0);
        if !(x_coord > lo.x + GEOM_TOL * span && x_coord < hi.x - GEOM_TOL * span) {
            return Err(Error::SectionOutOfRange { x: x_coord });
        }
        let y_span = (hi.y - lo.y).max(1.0);
        let eps = GEOM_TOL * y_span;

        // Per-triangle y-intervals of {(x_coord, y) ∈ K}.
        let mut intervals: Vec<(f64, f64, usize)> = Vec::new();
        for t in 0..self.triangles.len() {
            let vs = self.triangle_vertices(t)?;
            let mut y_min = f64::INFINITY;
            let mut y_max = f64::NEG_INFINITY;
            let mut hit = false;
            for k in 0..3 {
                let p = vs[k];
                let q = vs[(k + 1) % 3];
                if libm::fabs(p.x - x_coord) <= GEOM_TOL * span {
                    y_min = y_min.min(p.y);
                    y_max = y_max.max(p.y);
                    hit = true;
                }
                let (dp, dq) = (p.x - x_coord, q.x - x_coord);
                if (dp < 0.0) != (dq < 0.0) {
                    let y = p.y + (x_coord - p.x) * (q.y - p.y) / (q.x - p.x);
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                    hit = true;
                }
            }
            if hit && y_max - y_min > eps {
                intervals.push((y_min, y_max, t));
            }
        }
        if intervals.is_empty() {
            return Err(Error::SectionOutOfRange { x: x_coord });
        }

        let y_a = intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
        let y_b = intervals.iter().map(|i| i.1).fold(f64::NEG_INFINITY, f64::max);

        let mut segments = Vec::new();
        let mut cursor = y_a;
        while cursor < y_b - eps {
            let best = intervals
                .iter()
                .filter(|(a, b, _)| *a <= cursor + eps && *b > cursor + eps)
                .min_by_key(|(_, _, t)| *t);
            let Some(&(_, top, tri)) = best else {
                return Err(invalid_input!(
                    "vertical section at x = {x_coord} has a gap near y = {cursor}"
                ));
            };
            segments.push(SectionSegment { triangle: tri, y_lo: cursor, y_hi: top });
            cursor = top;
        }
        Ok(VerticalSection { y_a, y_b, segments })
    }
}

/// Builds the structured crisscross triangulation of `spec`'s rectangle.
///
/// Cell counts are chosen so the grid step does not exceed `mesh_size_h`;
/// the resulting maximal edge (a cell diagonal) stays within `1.5 · h`.
pub fn build_mesh(spec: &DomainSpec) -> Result<Mesh> {
    spec.validate()?;
    let nx = cells_for(spec.length, spec.mesh_size_h);
    let ny = cells_for(spec.height, spec.mesh_size_h);
    let dx = spec.length / nx as f64;
    let dy = spec.height / ny as f64;

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny { spec.height } else { j as f64 * dy };
        for i in 0..=nx {
            let x = if i == nx { spec.length } else { i as f64 * dx };
            vertices.push(Vec2::new(x, y));
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            let base = triangles.len();
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
            if j == 0 {
                boundary_edges.push(BoundaryEdge {
                    vertices: [v00, v10],
                    triangle: base,
                    tag: BoundaryTag::TopBottom,
                });
            }
            if j == ny - 1 {
                boundary_edges.push(BoundaryEdge {
                    vertices: [v01, v11],
                    triangle: base + 1,
                    tag: BoundaryTag::TopBottom,
                });
            }
            if i == 0 {
                let tri = if (i + j) % 2 == 0 { base + 1 } else { base };
                boundary_edges.push(BoundaryEdge {
                    vertices: [v00, v01],
                    triangle: tri,
                    tag: BoundaryTag::Left,
                });
            }
            if i == nx - 1 {
                let tri = if (i + j) % 2 == 0 { base } else { base + 1 };
                boundary_edges.push(BoundaryEdge {
                    vertices: [v10, v11],
                    triangle: tri,
                    tag: BoundaryTag::Right,
                });
            }
        }
    }
    Mesh::from_parts(vertices, triangles, boundary_edges)
}

fn cells_for(extent: f64, h: f64) -> usize {
    // Round up so the realised step never exceeds the target (modulo a hair
    // of floating-point slack for exact divisions like 2.0 / 0.1).
    let cells = libm::ceil(extent / h - 1e-9) as usize;
    cells.max(1)
}
