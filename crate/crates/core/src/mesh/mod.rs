//! Simplicial meshes with tagged boundary facets.
//!
//! Triangles are stored counter-clockwise. Boundary facets are oriented so
//! that the domain lies on their left; the outward normal of a facet
//! `a -> b` is the clockwise rotation of `b - a`.

pub mod generate;
pub mod gmsh;
pub mod vtk;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FacetTag {
    Inflow,
    Wall,
    Outflow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFacet {
    pub v: [usize; 2],
    pub cell: usize,
    pub tag: FacetTag,
    pub deformable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    Interior,
    /// Boundary vertex touching at least one non-deformable facet.
    Fixed,
    /// Boundary vertex whose incident facets are all deformable.
    Deformable,
}

/// Per-cell deformation quality measures for `I + t DW`.
#[derive(Clone, Debug)]
pub struct QualityReport {
    pub min_det: f64,
    pub max_det: f64,
    pub max_frob: f64,
    pub violations: Vec<usize>,
}

impl QualityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Bounds on `det(I + t DW)` and `|t DW|_F` accepted by [`Mesh::deform`].
#[derive(Clone, Copy, Debug)]
pub struct QualityBounds {
    pub det_min: f64,
    pub det_max: f64,
    pub frob_max: f64,
}

impl Default for QualityBounds {
    fn default() -> Self {
        QualityBounds { det_min: 0.5, det_max: 2.0, frob_max: 0.3 }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    facets: Vec<BoundaryFacet>,
    kinds: Vec<VertexKind>,
    /// For boundary vertices: (incoming facet, outgoing facet).
    boundary_links: HashMap<usize, (usize, usize)>,
}

impl Mesh {
    /// Build and validate a mesh. Clockwise cells are reoriented.
    /// `facets` lists every boundary edge with its tag and deformable flag.
    pub fn new(
        vertices: Vec<Point>,
        mut cells: Vec<[usize; 3]>,
        facets: Vec<([usize; 2], FacetTag, bool)>,
    ) -> Result<Mesh> {
        let nv = vertices.len();
        if cells.is_empty() {
            return Err(Error::Mesh("mesh has no cells".into()));
        }
        let mut used = vec![false; nv];
        for (c, cell) in cells.iter_mut().enumerate() {
            for &v in cell.iter() {
                if v >= nv {
                    return Err(Error::Mesh(format!("cell {c} references missing vertex {v}")));
                }
                used[v] = true;
            }
            let a = signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(a.abs() > 0.0) || !a.is_finite() {
                return Err(Error::Mesh(format!("cell {c} is degenerate")));
            }
            if a < 0.0 {
                cell.swap(1, 2);
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Mesh(format!("vertex {v} is not referenced by any cell")));
        }

        let mut edge_cells: HashMap<(usize, usize), Vec<(usize, usize, usize)>> = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (cell[k], cell[(k + 1) % 3]);
                edge_cells.entry(key(a, b)).or_default().push((c, a, b));
            }
        }
        let mut boundary: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (e, list) in &edge_cells {
            match list.len() {
                1 => {
                    boundary.insert(*e, list[0]);
                }
                2 => {}
                _ => return Err(Error::Mesh(format!("edge {:?} is shared by more than two cells", e))),
            }
        }

        let mut out = Vec::with_capacity(facets.len());
        let mut seen = HashMap::new();
        for (i, (ends, tag, deformable)) in facets.into_iter().enumerate() {
            let k = key(ends[0], ends[1]);
            let Some(&(cell, a, b)) = boundary.get(&k) else {
                return Err(Error::Mesh(format!(
                    "tagged facet {i} ({}, {}) is not a boundary edge",
                    ends[0], ends[1]
                )));
            };
            if seen.insert(k, i).is_some() {
                return Err(Error::Mesh(format!("boundary edge ({}, {}) tagged twice", ends[0], ends[1])));
            }
            if deformable && tag != FacetTag::Wall {
                return Err(Error::Mesh(format!("facet {i} is deformable but not a wall facet")));
            }
            out.push(BoundaryFacet { v: [a, b], cell, tag, deformable });
        }
        if out.len() != boundary.len() {
            let missing = boundary.keys().find(|k| !seen.contains_key(*k)).copied();
            return Err(Error::Mesh(format!("untagged boundary facet {:?}", missing.unwrap_or((0, 0)))));
        }

        let mut kinds = vec![VertexKind::Interior; nv];
        let mut incoming: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, f) in out.iter().enumerate() {
            for &v in &f.v {
                kinds[v] = match (kinds[v], f.deformable) {
                    (VertexKind::Interior, true) => VertexKind::Deformable,
                    (VertexKind::Deformable, true) => VertexKind::Deformable,
                    _ => VertexKind::Fixed,
                };
            }
            outgoing.entry(f.v[0]).or_default().push(i);
            incoming.entry(f.v[1]).or_default().push(i);
        }
        let mut boundary_links = HashMap::new();
        for (&v, ins) in &incoming {
            let outs = outgoing.get(&v).cloned().unwrap_or_default();
            if ins.len() == 1 && outs.len() == 1 {
                boundary_links.insert(v, (ins[0], outs[0]));
            } else if kinds[v] == VertexKind::Deformable {
                return Err(Error::Mesh(format!("deformable vertex {v} has a non-manifold boundary neighbourhood")));
            }
        }
        Ok(Mesh { vertices, cells, facets: out, kinds, boundary_links })
    }

    pub fn dim(&self) -> usize {
        2
    }
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }
    pub fn facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }
    pub fn vertex_kind(&self, v: usize) -> VertexKind {
        self.kinds[v]
    }
    pub fn is_fixed(&self, v: usize) -> bool {
        self.kinds[v] == VertexKind::Fixed
    }
    pub fn deformable_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.kinds[v] == VertexKind::Deformable).collect()
    }
    pub fn fixed_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.kinds[v] == VertexKind::Fixed).collect()
    }
    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.kinds[v] != VertexKind::Interior).collect()
    }

    /// Incoming and outgoing boundary facets at a boundary vertex.
    pub fn boundary_link(&self, v: usize) -> Option<(usize, usize)> {
        self.boundary_links.get(&v).copied()
    }

    pub fn cell_coords(&self, c: usize) -> [Point; 3] {
        self.cells[c].map(|v| self.vertices[v])
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cell_coords(c);
        signed_area(a, b, d)
    }

    pub fn volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    pub fn facet_coords(&self, f: usize) -> [Point; 2] {
        self.facets[f].v.map(|v| self.vertices[v])
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facet_coords(f);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Outward unit normal.
    pub fn facet_normal(&self, f: usize) -> [f64; 2] {
        let [a, b] = self.facet_coords(f);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let l = dx.hypot(dy);
        [dy / l, -dx / l]
    }

    pub fn facet_midpoint(&self, f: usize) -> Point {
        let [a, b] = self.facet_coords(f);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    pub fn facets_with_tag(&self, tag: FacetTag) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_facets()).filter(move |&f| self.facets[f].tag == tag)
    }

    pub fn boundary_measure(&self, tag: FacetTag) -> f64 {
        self.facets_with_tag(tag).map(|f| self.facet_length(f)).sum()
    }

    /// Trapezoidal lumping of boundary facets selected by `select`:
    /// for each touched vertex, its weight (half the incident lengths) and the
    /// normalised length-weighted normal.
    pub fn lumped_normals(&self, select: impl Fn(&BoundaryFacet) -> bool) -> Vec<(usize, f64, [f64; 2])> {
        let mut acc: HashMap<usize, (f64, [f64; 2])> = HashMap::new();
        for f in 0..self.n_facets() {
            if !select(&self.facets[f]) {
                continue;
            }
            let l = self.facet_length(f);
            let n = self.facet_normal(f);
            for &v in &self.facets[f].v {
                let e = acc.entry(v).or_insert((0.0, [0.0; 2]));
                e.0 += 0.5 * l;
                e.1[0] += 0.5 * l * n[0];
                e.1[1] += 0.5 * l * n[1];
            }
        }
        let mut out: Vec<_> = acc
            .into_iter()
            .map(|(v, (w, m))| {
                let nm = m[0].hypot(m[1]);
                (v, w, [m[0] / nm, m[1] / nm])
            })
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// Copy of this mesh with new vertex coordinates and identical topology.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Mesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        let mut m = self.clone();
        m.vertices = vertices;
        for c in 0..m.n_cells() {
            if !(m.cell_area(c) > 0.0) {
                return Err(Error::Quality(format!("cell {c} inverted")));
            }
        }
        Ok(m)
    }

    /// Constant gradient (Jacobian, `G[i][j] = d_j W_i`) of a P1 vector field on a cell.
    pub fn cell_gradient(&self, w: &[[f64; 2]], c: usize) -> [[f64; 2]; 2] {
        let g = p1_gradients(self.cell_coords(c));
        let cell = self.cells[c];
        let mut out = [[0.0; 2]; 2];
        for k in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += w[cell[k]][i] * g[k][j];
                }
            }
        }
        out
    }

    /// Quality of the map `x -> x + t W(x)` per cell.
    pub fn quality(&self, w: &[[f64; 2]], t: f64, bounds: QualityBounds) -> Result<QualityReport> {
        self.check_field(w)?;
        let mut rep = QualityReport { min_det: f64::INFINITY, max_det: f64::NEG_INFINITY, max_frob: 0.0, violations: vec![] };
        for c in 0..self.n_cells() {
            let g = self.cell_gradient(w, c);
            let det = (1.0 + t * g[0][0]) * (1.0 + t * g[1][1]) - t * t * g[0][1] * g[1][0];
            let frob = t.abs() * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt();
            rep.min_det = rep.min_det.min(det);
            rep.max_det = rep.max_det.max(det);
            rep.max_frob = rep.max_frob.max(frob);
            if !(det >= bounds.det_min && det <= bounds.det_max && frob <= bounds.frob_max) {
                rep.violations.push(c);
            }
        }
        Ok(rep)
    }

    /// Largest `t >= 0` (capped at `t_cap`) for which every cell satisfies the
    /// quality bounds along the whole segment `[0, t]`.
    pub fn max_admissible_step(&self, w: &[[f64; 2]], bounds: QualityBounds, t_cap: f64) -> Result<f64> {
        self.check_field(w)?;
        let mut t_max = t_cap;
        for c in 0..self.n_cells() {
            let g = self.cell_gradient(w, c);
            let fro = (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt();
            if fro > 0.0 {
                t_max = t_max.min(bounds.frob_max / fro);
            }
            // det(I + tG) = 1 + t tr G + t^2 det G
            let tr = g[0][0] + g[1][1];
            let dt = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            for level in [bounds.det_min, bounds.det_max] {
                if let Some(r) = smallest_positive_root(dt, tr, 1.0 - level) {
                    t_max = t_max.min(r);
                }
            }
        }
        Ok(t_max)
    }

    /// Move vertices to `x + t W(x)` after checking admissibility and quality.
    pub fn deform(&self, w: &[[f64; 2]], t: f64, bounds: QualityBounds) -> Result<Mesh> {
        self.check_field(w)?;
        for v in self.fixed_vertices() {
            if w[v] != [0.0, 0.0] {
                return Err(Error::Invalid(format!("displacement is nonzero at fixed boundary vertex {v}")));
            }
        }
        let q = self.quality(w, t, bounds)?;
        if !q.ok() {
            return Err(Error::Quality(format!(
                "{} cells violate the bounds (min det {:.4}, max det {:.4}, max frob {:.4})",
                q.violations.len(),
                q.min_det,
                q.max_det,
                q.max_frob
            )));
        }
        let verts = self
            .vertices
            .iter()
            .zip(w)
            .map(|(x, d)| if *d == [0.0, 0.0] { *x } else { [x[0] + t * d[0], x[1] + t * d[1]] })
            .collect();
        self.with_vertices(verts)
    }

    /// Discrete curvature at each deformable vertex: turning angle over dual length.
    pub fn curvature(&self) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        for v in self.deformable_vertices() {
            let (fin, fout) = self
                .boundary_link(v)
                .ok_or_else(|| Error::Mesh(format!("deformable vertex {v} is isolated")))?;
            let p = self.vertices[self.facets[fin].v[0]];
            let n = self.vertices[self.facets[fout].v[1]];
            out.push((v, turning_curvature(p, self.vertices[v], n)));
        }
        Ok(out)
    }

    /// Discrete Willmore energy `sum 1/2 h^2 l` over deformable vertices.
    pub fn curvature_integral(&self) -> Result<f64> {
        let mut s = 0.0;
        for v in self.deformable_vertices() {
            let (p, n) = self.boundary_neighbours(v)?;
            s += willmore_vertex::<f64>([p, self.vertices[v], n].map(|x| x));
        }
        Ok(s)
    }

    /// Previous and next boundary vertex positions around a deformable vertex.
    pub fn boundary_neighbours(&self, v: usize) -> Result<(Point, Point)> {
        let (fin, fout) = self
            .boundary_link(v)
            .ok_or_else(|| Error::Mesh(format!("deformable vertex {v} is isolated")))?;
        Ok((self.vertices[self.facets[fin].v[0]], self.vertices[self.facets[fout].v[1]]))
    }

    pub fn boundary_neighbour_ids(&self, v: usize) -> Option<(usize, usize)> {
        let (fin, fout) = self.boundary_link(v)?;
        Some((self.facets[fin].v[0], self.facets[fout].v[1]))
    }

    fn check_field(&self, w: &[[f64; 2]]) -> Result<()> {
        if w.len() != self.n_vertices() {
            return Err(Error::Dimension(format!(
                "vector field has {} entries, mesh has {} vertices",
                w.len(),
                self.n_vertices()
            )));
        }
        Ok(())
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Gradients of the three barycentric functions of a triangle.
pub fn p1_gradients(x: [Point; 3]) -> [[f64; 2]; 3] {
    let j = [[x[1][0] - x[0][0], x[2][0] - x[0][0]], [x[1][1] - x[0][1], x[2][1] - x[0][1]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let g1 = [j[1][1] / det, -j[0][1] / det];
    let g2 = [-j[1][0] / det, j[0][0] / det];
    [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    // a t^2 + b t + c = 0
    let mut best: Option<f64> = None;
    let mut push = |r: f64| {
        if r > 0.0 && r.is_finite() {
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
    };
    if a.abs() < 1e-300 {
        if b != 0.0 {
            push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            let q = -0.5 * (b + b.signum() * s);
            if q != 0.0 {
                push(q / a);
                push(c / q);
            } else {
                push(s / (2.0 * a));
                push(-s / (2.0 * a));
            }
        }
    }
    best
}

/// Turning angle at `v` divided by the mean adjacent edge length.
pub fn turning_curvature(p: Point, v: Point, n: Point) -> f64 {
    let x = [p, v, n];
    let (theta, l) = turning_angle::<f64>(x);
    theta / l
}

fn turning_angle<T: crate::ad::Real>(x: [[T; 2]; 3]) -> (T, T) {
    let e1 = [x[1][0] - x[0][0], x[1][1] - x[0][1]];
    let e2 = [x[2][0] - x[1][0], x[2][1] - x[1][1]];
    let cross = e1[0] * e2[1] - e1[1] * e2[0];
    let dot = e1[0] * e2[0] + e1[1] * e2[1];
    let l1 = (e1[0] * e1[0] + e1[1] * e1[1]).sqrt();
    let l2 = (e2[0] * e2[0] + e2[1] * e2[1]).sqrt();
    (cross.atan2(dot), (l1 + l2) * 0.5)
}

/// Willmore contribution `1/2 h^2 l = 1/2 theta^2 / l` of one vertex
/// with neighbours `x[0]`, `x[2]`.
pub fn willmore_vertex<T: crate::ad::Real>(x: [[T; 2]; 3]) -> T {
    let (theta, l) = turning_angle(x);
    theta * theta / l * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    #[test]
    fn unit_square_deform_scales_area() {
        let m = generate::rectangle(1.0, 1.0, 4, 4, generate::RectangleTags::all_deformable_wall()).unwrap();
        let w: Vec<_> = m.vertices().to_vec();
        let q = m.quality(&w, 0.5, QualityBounds::default()).unwrap();
        assert!(!q.ok());
        assert!((q.min_det - 2.25).abs() < 1e-12);
        let q = m.quality(&w, 0.2, QualityBounds::default()).unwrap();
        assert!(q.ok());
        assert!((q.max_frob - 0.2 * 2f64.sqrt()).abs() < 1e-12);
        let moved = m.deform(&w, 0.2, QualityBounds::default()).unwrap();
        assert!((moved.volume() - 1.44).abs() < 1e-12);
    }

    #[test]
    fn step_cap_for_identity_field() {
        let m = generate::rectangle(1.0, 1.0, 3, 3, generate::RectangleTags::all_deformable_wall()).unwrap();
        let w: Vec<_> = m.vertices().to_vec();
        let t = m.max_admissible_step(&w, QualityBounds::default(), f64::INFINITY).unwrap();
        let expect = (2f64.sqrt() - 1.0).min(0.3 / 2f64.sqrt());
        assert!((t - expect).abs() < 1e-12);
    }

    #[test]
    fn fixed_boundary_displacement_rejected() {
        let m = generate::channel(3.0, 1.0, 6, 2).unwrap();
        let w = vec![[1e-3, 0.0]; m.n_vertices()];
        assert!(matches!(m.deform(&w, 0.1, QualityBounds::default()), Err(Error::Invalid(_))));
    }

    #[test]
    fn curvature_of_polygonal_circle() {
        let m = generate::disk(1.0, 256, 8).unwrap();
        for (_, h) in m.curvature().unwrap() {
            assert!((h - 1.0).abs() < 1e-4, "h = {h}");
        }
        let w = m.curvature_integral().unwrap();
        assert!((w - std::f64::consts::PI).abs() < 1e-3);
    }

    #[test]
    fn untagged_boundary_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let c = vec![[0, 1, 2]];
        let f = vec![([0, 1], FacetTag::Wall, false), ([1, 2], FacetTag::Wall, false)];
        assert!(Mesh::new(v, c, f).is_err());
    }

    #[test]
    fn clockwise_cells_are_reoriented() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let c = vec![[0, 2, 1]];
        let f = vec![
            ([0, 1], FacetTag::Wall, false),
            ([1, 2], FacetTag::Wall, false),
            ([2, 0], FacetTag::Wall, false),
        ];
        let m = Mesh::new(v, c, f).unwrap();
        assert!(m.cell_area(0) > 0.0);
        for f in 0..3 {
            let n = m.facet_normal(f);
            let mid = m.facet_midpoint(f);
            // outward: moving along n leaves the triangle x, y >= 0, x + y <= 1
            let p = [mid[0] + 1e-3 * n[0], mid[1] + 1e-3 * n[1]];
            assert!(p[0] < 0.0 || p[1] < 0.0 || p[0] + p[1] > 1.0);
        }
    }
}
