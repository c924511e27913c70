//! Reader for Gmsh MSH 2.2 ASCII files.
//!
//! Only 2-node lines (type 1) and 3-node triangles (type 2) are used; other
//! element types are skipped. Line elements carry their boundary part through
//! the physical group name, which must be one of `bottom`, `top`, `left`,
//! `right` or `crack` (case-insensitive). Names of surface groups are not
//! interpreted.

use std::collections::HashMap;
use std::io::Read;

use super::{signed_area, BoundaryEdge, BoundaryTag, MeshError, Point, TriMesh};

struct Sections<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Sections<'a> {
    fn next_line(&mut self, what: &str) -> Result<&'a str, MeshError> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos].trim();
            self.pos += 1;
            if !line.is_empty() {
                return Ok(line);
            }
        }
        Err(MeshError::MalformedFile(format!("unexpected end of file while reading {what}")))
    }

    fn expect(&mut self, marker: &str) -> Result<(), MeshError> {
        let line = self.next_line(marker)?;
        if line != marker {
            return Err(MeshError::MalformedFile(format!("expected `{marker}`, found `{line}`")));
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T, MeshError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| MeshError::MalformedFile(format!("bad or missing {what}")))
}

/// Parses an MSH 2.2 ASCII stream into a validated mesh.
///
/// The crack polyline is rebuilt by chaining the `crack` edges and orienting
/// the chain so the domain lies on its right.
pub fn read_msh<R: Read>(mut input: R) -> Result<TriMesh, MeshError> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| MeshError::MalformedFile(format!("read error: {e}")))?;
    let mut s = Sections { lines: text.lines().collect(), pos: 0 };

    let mut names: HashMap<i64, (i64, String)> = HashMap::new();
    let mut node_ids: HashMap<i64, usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut lines: Vec<([i64; 2], i64)> = Vec::new();
    let mut tris: Vec<[i64; 3]> = Vec::new();
    let (mut saw_format, mut saw_nodes, mut saw_elements) = (false, false, false);

    while s.pos < s.lines.len() {
        let header = match s.next_line("section") {
            Ok(h) => h,
            Err(_) => break,
        };
        match header {
            "$MeshFormat" => {
                let line = s.next_line("$MeshFormat")?;
                let mut it = line.split_whitespace();
                let version: f64 = parse(it.next(), "format version")?;
                let file_type: i64 = parse(it.next(), "file type")?;
                if !(2.0..3.0).contains(&version) || file_type != 0 {
                    return Err(MeshError::MalformedFile(format!("unsupported format `{line}`")));
                }
                s.expect("$EndMeshFormat")?;
                saw_format = true;
            }
            "$PhysicalNames" => {
                let count: usize = parse(Some(s.next_line("$PhysicalNames")?), "physical name count")?;
                for _ in 0..count {
                    let line = s.next_line("$PhysicalNames")?;
                    let mut it = line.splitn(3, char::is_whitespace);
                    let dim: i64 = parse(it.next(), "physical dimension")?;
                    let tag: i64 = parse(it.next(), "physical tag")?;
                    let name = it
                        .next()
                        .map(|n| n.trim().trim_matches('"').to_string())
                        .ok_or_else(|| MeshError::MalformedFile("missing physical name".into()))?;
                    names.insert(tag, (dim, name));
                }
                s.expect("$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let count: usize = parse(Some(s.next_line("$Nodes")?), "node count")?;
                for _ in 0..count {
                    let line = s.next_line("$Nodes")?;
                    if line.starts_with('$') {
                        return Err(MeshError::MalformedFile("node section truncated".into()));
                    }
                    let mut it = line.split_whitespace();
                    let id: i64 = parse(it.next(), "node id")?;
                    let x: f64 = parse(it.next(), "node x")?;
                    let y: f64 = parse(it.next(), "node y")?;
                    if node_ids.insert(id, nodes.len()).is_some() {
                        return Err(MeshError::MalformedFile(format!("duplicate node id {id}")));
                    }
                    nodes.push(Point::new(x, y));
                }
                s.expect("$EndNodes")?;
                saw_nodes = true;
            }
            "$Elements" => {
                let count: usize = parse(Some(s.next_line("$Elements")?), "element count")?;
                for _ in 0..count {
                    let line = s.next_line("$Elements")?;
                    if line.starts_with('$') {
                        return Err(MeshError::MalformedFile("element section truncated".into()));
                    }
                    let fields: Vec<i64> = line
                        .split_whitespace()
                        .map(|t| t.parse::<i64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| MeshError::MalformedFile(format!("bad element line `{line}`")))?;
                    if fields.len() < 3 {
                        return Err(MeshError::MalformedFile(format!("short element line `{line}`")));
                    }
                    let (kind, ntags) = (fields[1], fields[2] as usize);
                    let vertices = fields.get(3 + ntags..).unwrap_or(&[]);
                    let physical = if ntags > 0 { fields[3] } else { 0 };
                    match (kind, vertices.len()) {
                        (1, 2) => lines.push(([vertices[0], vertices[1]], physical)),
                        (2, 3) => tris.push([vertices[0], vertices[1], vertices[2]]),
                        (1, _) | (2, _) => {
                            return Err(MeshError::MalformedFile(format!("wrong vertex count in `{line}`")))
                        }
                        _ => {}
                    }
                }
                s.expect("$EndElements")?;
                saw_elements = true;
            }
            other if other.starts_with("$") => {
                // skip unknown section
                let end = format!("$End{}", &other[1..]);
                loop {
                    if s.next_line(other)? == end {
                        break;
                    }
                }
            }
            other => return Err(MeshError::MalformedFile(format!("unexpected line `{other}`"))),
        }
    }
    if !(saw_format && saw_nodes && saw_elements) {
        return Err(MeshError::MalformedFile("missing $MeshFormat, $Nodes or $Elements".into()));
    }

    let lookup = |id: i64| {
        node_ids
            .get(&id)
            .copied()
            .ok_or_else(|| MeshError::MalformedFile(format!("element references unknown node {id}")))
    };

    // keep only nodes referenced by triangles
    let mut triangles = Vec::with_capacity(tris.len());
    for t in &tris {
        let mut idx = [lookup(t[0])?, lookup(t[1])?, lookup(t[2])?];
        if signed_area(nodes[idx[0]], nodes[idx[1]], nodes[idx[2]]) < 0.0 {
            idx.swap(1, 2);
        }
        triangles.push(idx);
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for t in &mut triangles {
        for v in t.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = kept.len();
                kept.push(nodes[*v]);
            }
            *v = remap[*v];
        }
    }

    let mut boundary_edges = Vec::with_capacity(lines.len());
    for (l, physical) in &lines {
        let (dim, name) = names
            .get(physical)
            .ok_or_else(|| MeshError::UnknownTag(format!("physical group {physical}")))?;
        if *dim != 1 {
            return Err(MeshError::UnknownTag(name.clone()));
        }
        let tag: BoundaryTag = name.parse()?;
        let a = remap[lookup(l[0])?];
        let b = remap[lookup(l[1])?];
        if a == usize::MAX || b == usize::MAX {
            return Err(MeshError::MalformedFile("line element off the triangulation".into()));
        }
        boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
    }

    let crack = chain_crack(&kept, &triangles, &boundary_edges)?;
    TriMesh::new(kept, triangles, boundary_edges, crack)
}

/// Orders the crack edges into one path with the domain on its right.
fn chain_crack(
    nodes: &[Point],
    triangles: &[[usize; 3]],
    edges: &[BoundaryEdge],
) -> Result<Vec<usize>, MeshError> {
    let crack_edges: Vec<[usize; 2]> =
        edges.iter().filter(|e| e.tag == BoundaryTag::Crack).map(|e| e.nodes).collect();
    if crack_edges.is_empty() {
        return Ok(Vec::new());
    }
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    for [a, b] in &crack_edges {
        adjacency.entry(*a).or_default().push(*b);
        adjacency.entry(*b).or_default().push(*a);
    }
    if adjacency.values().any(|v| v.len() > 2) {
        return Err(MeshError::DisconnectedCrack("crack branches".into()));
    }
    let mut ends: Vec<usize> = adjacency.iter().filter(|(_, v)| v.len() == 1).map(|(k, _)| *k).collect();
    ends.sort_unstable();
    if ends.len() != 2 {
        return Err(MeshError::DisconnectedCrack(format!("crack has {} end points", ends.len())));
    }
    let mut path = vec![ends[0]];
    let mut prev = usize::MAX;
    let mut cur = ends[0];
    loop {
        let next = adjacency[&cur].iter().copied().find(|&n| n != prev);
        match next {
            Some(n) if n != path[0] => {
                path.push(n);
                prev = cur;
                cur = n;
            }
            _ => break,
        }
        if path.len() > crack_edges.len() + 1 {
            break;
        }
    }
    if path.len() != crack_edges.len() + 1 {
        return Err(MeshError::DisconnectedCrack("crack edges do not chain into one path".into()));
    }

    // the domain must lie to the right of (path[0] -> path[1]): the triangle
    // holding this edge traverses it as path[1] -> path[0]
    let (a, b) = (path[0], path[1]);
    let reversed = triangles.iter().any(|t| (0..3).any(|k| t[k] == a && t[(k + 1) % 3] == b));
    if reversed {
        path.reverse();
    }
    let _ = nodes;
    Ok(path)
}
