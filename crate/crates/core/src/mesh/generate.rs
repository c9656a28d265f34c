//! Built-in structured mesh generators.

use std::f64::consts::PI;

use super::{FacetTag, Mesh, Point};
use crate::error::{Error, Result};

/// Tag and deformable flag for each side of a rectangle.
#[derive(Clone, Copy, Debug)]
pub struct RectangleTags {
    pub left: (FacetTag, bool),
    pub right: (FacetTag, bool),
    pub bottom: (FacetTag, bool),
    pub top: (FacetTag, bool),
}

impl RectangleTags {
    /// Inflow on the left, outflow on the right, fixed walls elsewhere.
    pub fn channel() -> Self {
        RectangleTags {
            left: (FacetTag::Inflow, false),
            right: (FacetTag::Outflow, false),
            bottom: (FacetTag::Wall, false),
            top: (FacetTag::Wall, false),
        }
    }
    pub fn all_deformable_wall() -> Self {
        let w = (FacetTag::Wall, true);
        RectangleTags { left: w, right: w, bottom: w, top: w }
    }
}

/// Structured `(ns + 1) x (nr + 1)` point grid; `j` (across) runs fastest.
fn grid_mesh(
    points: Vec<Point>,
    ns: usize,
    nr: usize,
    side_tag: impl Fn(Side, usize) -> (FacetTag, bool),
) -> Result<Mesh> {
    let id = |i: usize, j: usize| i * (nr + 1) + j;
    let mut cells = Vec::with_capacity(2 * ns * nr);
    for i in 0..ns {
        for j in 0..nr {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // diagonals mirror about the centre line so symmetric domains give symmetric meshes
            if 2 * j < nr {
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            } else {
                cells.push([a, b, d]);
                cells.push([b, c, d]);
            }
        }
    }
    let mut facets = Vec::new();
    for i in 0..ns {
        let (t, dfm) = side_tag(Side::Low, i);
        facets.push(([id(i, 0), id(i + 1, 0)], t, dfm));
        let (t, dfm) = side_tag(Side::High, i);
        facets.push(([id(i, nr), id(i + 1, nr)], t, dfm));
    }
    for j in 0..nr {
        let (t, dfm) = side_tag(Side::Start, j);
        facets.push(([id(0, j), id(0, j + 1)], t, dfm));
        let (t, dfm) = side_tag(Side::End, j);
        facets.push(([id(ns, j), id(ns, j + 1)], t, dfm));
    }
    Mesh::new(points, cells, facets)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Low,
    High,
    Start,
    End,
}

/// Rectangle `[0, lx] x [0, ly]` with `nx x ny` quads split into triangles.
pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize, tags: RectangleTags) -> Result<Mesh> {
    if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::Invalid("rectangle needs positive size and resolution".into()));
    }
    let mut pts = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            pts.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    grid_mesh(pts, nx, ny, |side, _| match side {
        Side::Low => tags.bottom,
        Side::High => tags.top,
        Side::Start => tags.left,
        Side::End => tags.right,
    })
}

/// Straight channel with inflow at `x = 0` and outflow at `x = lx`.
pub fn channel(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    rectangle(lx, ly, nx, ny, RectangleTags::channel())
}

/// Pipe-bend analogue in dimensionless units (channel width 1).
#[derive(Clone, Copy, Debug)]
pub struct BendSpec {
    /// Centreline bend radius.
    pub radius: f64,
    pub inlet_length: f64,
    pub outlet_length: f64,
    pub n_across: usize,
    pub n_inlet: usize,
    pub n_arc: usize,
    pub n_outlet: usize,
}

impl BendSpec {
    /// Geometry of the reference bend with `r_b / d_t = 11.3 / 3.95`.
    pub fn reference(n_across: usize) -> Self {
        let radius = 11.3 / 3.95;
        let arc = 0.5 * PI * radius;
        let h = 1.0 / n_across as f64;
        let n = |len: f64| ((len / h) / 1.4).round().max(2.0) as usize;
        BendSpec {
            radius,
            inlet_length: 1.0,
            outlet_length: 2.0,
            n_across,
            n_inlet: n(1.0),
            n_arc: n(arc),
            n_outlet: n(2.0),
        }
    }

    pub fn n_cells(&self) -> usize {
        2 * self.n_across * (self.n_inlet + self.n_arc + self.n_outlet)
    }
}

/// Horizontal inlet leg (flow in `+x`), clockwise quarter bend about the
/// origin, vertical outlet leg (flow in `-y`). Both arc walls are deformable.
pub fn bend(spec: BendSpec) -> Result<Mesh> {
    let BendSpec { radius, inlet_length, outlet_length, n_across, n_inlet, n_arc, n_outlet } = spec;
    if !(radius > 0.5) || n_across == 0 || n_inlet == 0 || n_arc == 0 || n_outlet == 0 {
        return Err(Error::Invalid("bend needs radius > 1/2 and positive resolution".into()));
    }
    let ns = n_inlet + n_arc + n_outlet;
    let mut pts = Vec::with_capacity((ns + 1) * (n_across + 1));
    for i in 0..=ns {
        for j in 0..=n_across {
            let r = radius - 0.5 + j as f64 / n_across as f64;
            let p = if i <= n_inlet {
                let x = -inlet_length + inlet_length * i as f64 / n_inlet as f64;
                [x, r]
            } else if i <= n_inlet + n_arc {
                let th = 0.5 * PI * (i - n_inlet) as f64 / n_arc as f64;
                [r * th.sin(), r * th.cos()]
            } else {
                let k = (i - n_inlet - n_arc) as f64 / n_outlet as f64;
                [r, -outlet_length * k]
            };
            pts.push(p);
        }
    }
    grid_mesh(pts, ns, n_across, |side, i| match side {
        Side::Start => (FacetTag::Inflow, false),
        Side::End => (FacetTag::Outflow, false),
        _ => (FacetTag::Wall, i >= n_inlet && i < n_inlet + n_arc),
    })
}

/// Disk of radius `r` with `n_boundary` boundary vertices and `n_rings` rings;
/// the whole boundary is a deformable wall.
pub fn disk(r: f64, n_boundary: usize, n_rings: usize) -> Result<Mesh> {
    if n_boundary < 3 || n_rings == 0 || !(r > 0.0) {
        return Err(Error::Invalid("disk needs r > 0, at least 3 boundary vertices and 1 ring".into()));
    }
    let mut pts: Vec<Point> = vec![[0.0, 0.0]];
    let mut rings: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..=n_rings {
        let m = ((n_boundary as f64 * k as f64 / n_rings as f64).round() as usize).max(3);
        let rad = r * k as f64 / n_rings as f64;
        let off = if k % 2 == 0 { 0.5 } else { 0.0 };
        let ids = (0..m)
            .map(|i| {
                let th = 2.0 * PI * (i as f64 + off) / m as f64;
                pts.push([rad * th.cos(), rad * th.sin()]);
                pts.len() - 1
            })
            .collect();
        rings.push(ids);
    }
    let mut offsets = vec![0.0];
    for k in 1..=n_rings {
        offsets.push(if k % 2 == 0 { 0.5 } else { 0.0 });
    }
    // angle of the i-th vertex of ring k, unwrapped past one turn
    let theta = |k: usize, i: usize| 2.0 * PI * (i as f64 + offsets[k]) / rings[k].len() as f64;
    let mut cells = Vec::new();
    for i in 0..rings[1].len() {
        cells.push([0, rings[1][i], rings[1][(i + 1) % rings[1].len()]]);
    }
    for k in 1..n_rings {
        let (a, b) = (&rings[k], &rings[k + 1]);
        let (mut ia, mut ib) = (0, 0);
        while ia < a.len() || ib < b.len() {
            let next_a = if ia < a.len() { theta(k, ia + 1) } else { f64::INFINITY };
            let next_b = if ib < b.len() { theta(k + 1, ib + 1) } else { f64::INFINITY };
            let va = a[ia % a.len()];
            let vb = b[ib % b.len()];
            if next_a <= next_b {
                cells.push([va, vb, a[(ia + 1) % a.len()]]);
                ia += 1;
            } else {
                cells.push([va, vb, b[(ib + 1) % b.len()]]);
                ib += 1;
            }
        }
    }
    let outer = &rings[n_rings];
    let facets = (0..outer.len())
        .map(|i| ([outer[i], outer[(i + 1) % outer.len()]], FacetTag::Wall, true))
        .collect();
    Mesh::new(pts, cells, facets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_counts_and_area() {
        let m = rectangle(2.0, 1.0, 4, 3, RectangleTags::channel()).unwrap();
        assert_eq!(m.n_cells(), 24);
        assert_eq!(m.n_vertices(), 20);
        assert_eq!(m.n_facets(), 14);
        assert!((m.volume() - 2.0).abs() < 1e-14);
        assert!((m.boundary_measure(FacetTag::Inflow) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bend_area_and_tags() {
        let spec = BendSpec::reference(8);
        let m = bend(spec).unwrap();
        let arc_area = 0.5 * PI * spec.radius;
        let exact = spec.inlet_length + spec.outlet_length + arc_area;
        // polygonal arcs lose O(1/n^2) area
        assert!((m.volume() - exact).abs() / exact < 1e-3);
        assert!((m.boundary_measure(FacetTag::Inflow) - 1.0).abs() < 1e-12);
        assert!((m.boundary_measure(FacetTag::Outflow) - 1.0).abs() < 1e-12);
        assert!(!m.deformable_vertices().is_empty());
        for v in m.deformable_vertices() {
            let p = m.vertices()[v];
            assert!(p[0] > 0.0 && p[1] > 0.0);
        }
        assert_eq!(m.n_cells(), spec.n_cells());
    }

    #[test]
    fn disk_area_converges() {
        let m = disk(1.0, 128, 10).unwrap();
        assert!((m.volume() - PI).abs() < 2e-3);
        assert_eq!(m.deformable_vertices().len(), 128);
    }
}
