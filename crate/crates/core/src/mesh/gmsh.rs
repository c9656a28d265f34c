//! Gmsh MSH 2.2 ASCII reader and writer (line and triangle elements).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{FacetTag, Mesh, Point};
use crate::error::{Error, Result};

/// Physical ids mapped to facet tags. Ids listed in `deformable` are wall facets
/// that may move.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TagMap {
    #[serde(default)]
    pub inflow: Vec<i64>,
    #[serde(default)]
    pub wall: Vec<i64>,
    #[serde(default)]
    pub outflow: Vec<i64>,
    #[serde(default)]
    pub deformable: Vec<i64>,
}

impl TagMap {
    /// Ids 1, 2, 3, 4 for inflow, fixed wall, outflow, deformable wall.
    pub fn standard() -> Self {
        TagMap { inflow: vec![1], wall: vec![2], outflow: vec![3], deformable: vec![4] }
    }

    fn lookup(&self, id: i64) -> Option<(FacetTag, bool)> {
        if self.deformable.contains(&id) {
            Some((FacetTag::Wall, true))
        } else if self.inflow.contains(&id) {
            Some((FacetTag::Inflow, false))
        } else if self.wall.contains(&id) {
            Some((FacetTag::Wall, false))
        } else if self.outflow.contains(&id) {
            Some((FacetTag::Outflow, false))
        } else {
            None
        }
    }

    fn id_of(&self, tag: FacetTag, deformable: bool) -> i64 {
        let pick = |v: &Vec<i64>, d: i64| v.first().copied().unwrap_or(d);
        match (tag, deformable) {
            (_, true) => pick(&self.deformable, 4),
            (FacetTag::Inflow, _) => pick(&self.inflow, 1),
            (FacetTag::Wall, _) => pick(&self.wall, 2),
            (FacetTag::Outflow, _) => pick(&self.outflow, 3),
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>, tags: &TagMap) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, tags)
}

/// Physical ids carried by line elements, without building a mesh.
pub fn line_physical_ids(text: &str) -> std::collections::BTreeSet<i64> {
    let mut ids = std::collections::BTreeSet::new();
    let mut inside = false;
    let mut header = false;
    for line in text.lines().map(str::trim) {
        match line {
            "$Elements" => (inside, header) = (true, true),
            "$EndElements" => inside = false,
            _ if inside && header => header = false,
            _ if inside => {
                let p: Vec<i64> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
                if p.len() > 3 && p[1] == 1 && p[2] > 0 {
                    ids.insert(p[3]);
                }
            }
            _ => {}
        }
    }
    ids
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.it.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(Error::Parse { line: self.line + 1, msg: "unexpected end of file".into() }),
            }
        }
    }
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }
    fn expect(&mut self, what: &str) -> Result<()> {
        let l = self.next()?;
        if l != what {
            return Err(self.err(format!("expected {what}, found {l:?}")));
        }
        Ok(())
    }
    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("invalid number {s:?}")))
    }
}

pub fn parse_mesh(text: &str, tags: &TagMap) -> Result<Mesh> {
    let mut l = Lines { it: text.lines().enumerate(), line: 0 };
    let mut nodes: Option<(Vec<Point>, HashMap<i64, usize>)> = None;
    let mut cells = Vec::new();
    let mut facets = Vec::new();
    let mut version_seen = false;
    loop {
        let head = match l.next() {
            Ok(h) => h,
            Err(_) => break,
        };
        match head {
            "$MeshFormat" => {
                let f = l.next()?;
                let parts: Vec<_> = f.split_whitespace().collect();
                if parts.len() < 3 || !parts[0].starts_with("2.") {
                    return Err(l.err(format!("unsupported format {f:?}, need 2.2 ASCII")));
                }
                if parts[1] != "0" {
                    return Err(l.err("binary files are not supported"));
                }
                version_seen = true;
                l.expect("$EndMeshFormat")?;
            }
            "$Nodes" => {
                let first = l_first(l.next()?);
                let n: usize = l.num(first)?;
                let mut pts = Vec::with_capacity(n);
                let mut index = HashMap::with_capacity(n);
                for _ in 0..n {
                    let row = l.next()?;
                    let p: Vec<&str> = row.split_whitespace().collect();
                    if p.len() < 4 {
                        return Err(l.err("node line needs id x y z"));
                    }
                    let id: i64 = l.num(p[0])?;
                    let (x, y, z): (f64, f64, f64) = (l.num(p[1])?, l.num(p[2])?, l.num(p[3])?);
                    if z.abs() > 1e-12 * (1.0 + x.abs() + y.abs()) {
                        return Err(l.err("only planar (z = 0) meshes are supported"));
                    }
                    if index.insert(id, pts.len()).is_some() {
                        return Err(l.err(format!("duplicate node id {id}")));
                    }
                    pts.push([x, y]);
                }
                l.expect("$EndNodes")?;
                nodes = Some((pts, index));
            }
            "$Elements" => {
                let Some((_, index)) = nodes.as_ref() else {
                    return Err(l.err("$Elements before $Nodes"));
                };
                let first = l_first(l.next()?);
                let n: usize = l.num(first)?;
                for _ in 0..n {
                    let row = l.next()?;
                    let p: Vec<i64> = row
                        .split_whitespace()
                        .map(|s| l.num(s))
                        .collect::<Result<_>>()?;
                    if p.len() < 3 {
                        return Err(l.err("element line too short"));
                    }
                    let (ty, ntags) = (p[1], p[2] as usize);
                    let physical = if ntags > 0 { p.get(3).copied().unwrap_or(0) } else { 0 };
                    let conn = &p[(3 + ntags).min(p.len())..];
                    let resolve = |id: i64| {
                        index.get(&id).copied().ok_or_else(|| l.err(format!("unknown node {id}")))
                    };
                    match ty {
                        1 => {
                            if conn.len() != 2 {
                                return Err(l.err("line element needs 2 nodes"));
                            }
                            let (tag, dfm) = tags
                                .lookup(physical)
                                .ok_or_else(|| l.err(format!("physical id {physical} has no facet tag")))?;
                            facets.push(([resolve(conn[0])?, resolve(conn[1])?], tag, dfm));
                        }
                        2 => {
                            if conn.len() != 3 {
                                return Err(l.err("triangle element needs 3 nodes"));
                            }
                            cells.push([resolve(conn[0])?, resolve(conn[1])?, resolve(conn[2])?]);
                        }
                        15 => {}
                        other => return Err(l.err(format!("unsupported element type {other}"))),
                    }
                }
                l.expect("$EndElements")?;
            }
            "$PhysicalNames" => {
                let first = l_first(l.next()?);
                let n: usize = l.num(first)?;
                for _ in 0..n {
                    l.next()?;
                }
                l.expect("$EndPhysicalNames")?;
            }
            other if other.starts_with('$') => {
                let end = format!("$End{}", &other[1..]);
                while l.next()? != end {}
            }
            other => return Err(l.err(format!("unexpected line {other:?}"))),
        }
    }
    if !version_seen {
        return Err(Error::Parse { line: 1, msg: "missing $MeshFormat".into() });
    }
    let (pts, _) = nodes.ok_or_else(|| Error::Parse { line: l.line, msg: "missing $Nodes".into() })?;
    Mesh::new(pts, cells, facets)
}

fn l_first(s: &str) -> &str {
    s.split_whitespace().next().unwrap_or("")
}

/// Serialise a mesh with round-trip precision.
pub fn write_mesh_string(mesh: &Mesh, tags: &TagMap) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {:e} {:e} 0", i + 1, p[0], p[1]);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(s, "{}", mesh.n_facets() + mesh.n_cells());
    let mut id = 1;
    for f in mesh.facets() {
        let phys = tags.id_of(f.tag, f.deformable);
        let _ = writeln!(s, "{id} 1 2 {phys} {phys} {} {}", f.v[0] + 1, f.v[1] + 1);
        id += 1;
    }
    for c in mesh.cells() {
        let _ = writeln!(s, "{id} 2 2 100 100 {} {} {}", c[0] + 1, c[1] + 1, c[2] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_mesh(mesh: &Mesh, tags: &TagMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh_string(mesh, tags))?;
    Ok(())
}
