//! Triangulated disks: generation, validation and the text exchange format.
//!
//! A [`Mesh2D`] carries the bulk triangulation together with its boundary
//! polygon. All boundary vertices of a generated mesh lie exactly on the
//! circle of the given radius, so the boundary segment mesh is an inscribed
//! polygon of the continuous boundary.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

/// Where a validation problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshItem {
    Node(usize),
    Triangle(usize),
    BoundaryEdge(usize),
    Mesh,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("a disk mesh needs at least 4 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{item:?}: {message}")]
    Invalid { item: MeshItem, message: String },
}

impl MeshError {
    fn invalid(item: MeshItem, message: impl Into<String>) -> Self {
        MeshError::Invalid {
            item,
            message: message.into(),
        }
    }
}

/// Triangulation of a disk with its boundary polygon.
///
/// Triangles are counterclockwise; `boundary_edges` trace the boundary
/// counterclockwise as one closed cycle. `radius` is `None` for meshes that
/// are not tied to a circle (the circle check is skipped for them).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    radius: Option<f64>,
}

impl Mesh2D {
    /// Builds and validates a mesh.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
        radius: Option<f64>,
    ) -> Result<Self, MeshError> {
        let mesh = Self::from_parts_unchecked(nodes, triangles, boundary_edges, radius);
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh without checking any invariant.
    ///
    /// Assembly works on any index-consistent element set, which is what the
    /// element-level tests rely on (e.g. one triangle with one boundary edge).
    pub fn from_parts_unchecked(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
        radius: Option<f64>,
    ) -> Self {
        Self {
            nodes,
            triangles,
            boundary_edges,
            radius,
        }
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        signed_area(a, b, c)
    }

    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        dist(self.nodes[i], self.nodes[j])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges.iter().map(|&[i, j]| self.edge_length(i, j)).sum()
    }

    /// Mesh width: the longest triangle edge.
    pub fn mesh_size(&self) -> f64 {
        self.edge_lengths().fold(0.0, f64::max)
    }

    /// Ratio of the longest to the shortest triangle edge.
    pub fn edge_ratio(&self) -> f64 {
        let (lo, hi) = self
            .edge_lengths()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), l| (lo.min(l), hi.max(l)));
        hi / lo
    }

    fn edge_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.triangles
            .iter()
            .flat_map(move |&[a, b, c]| [self.edge_length(a, b), self.edge_length(b, c), self.edge_length(c, a)])
    }

    /// Indices of nodes that lie on the boundary polygon, sorted.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.boundary_edges.iter().flat_map(|e| *e).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Checks every structural and geometric invariant.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.nodes.len();
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(MeshError::BadRadius(r));
            }
        }
        for (i, p) in self.nodes.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(MeshError::invalid(MeshItem::Node(i), "non-finite coordinate"));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(MeshError::invalid(
                    MeshItem::Triangle(t),
                    format!("node index {bad} out of range (mesh has {n} nodes)"),
                ));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::invalid(MeshItem::Triangle(t), "repeated vertex"));
            }
        }
        for (e, edge) in self.boundary_edges.iter().enumerate() {
            if let Some(&bad) = edge.iter().find(|&&i| i >= n) {
                return Err(MeshError::invalid(
                    MeshItem::BoundaryEdge(e),
                    format!("node index {bad} out of range (mesh has {n} nodes)"),
                ));
            }
            if edge[0] == edge[1] {
                return Err(MeshError::invalid(MeshItem::BoundaryEdge(e), "degenerate edge"));
            }
        }
        if self.triangles.is_empty() {
            return Err(MeshError::invalid(MeshItem::Mesh, "no triangles"));
        }

        let h = self.mesh_size();
        let min_area = 1e-14 * h * h;
        for t in 0..self.triangles.len() {
            let area = self.triangle_area(t);
            if area.abs() <= min_area {
                return Err(MeshError::invalid(
                    MeshItem::Triangle(t),
                    format!("zero-area triangle (area {area:e})"),
                ));
            }
            if area < 0.0 {
                return Err(MeshError::invalid(MeshItem::Triangle(t), "clockwise orientation"));
            }
        }

        // directed edge -> owning triangle; an undirected edge may be used once per direction
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                if directed.insert((i, j), t).is_some() {
                    return Err(MeshError::invalid(
                        MeshItem::Triangle(t),
                        format!("edge ({i}, {j}) shared by more than two triangles or inconsistently oriented"),
                    ));
                }
            }
        }

        let mut boundary_set: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, &[i, j]) in self.boundary_edges.iter().enumerate() {
            if boundary_set.insert((i, j), e).is_some() {
                return Err(MeshError::invalid(MeshItem::BoundaryEdge(e), "duplicate boundary edge"));
            }
            if !directed.contains_key(&(i, j)) {
                return Err(MeshError::invalid(
                    MeshItem::BoundaryEdge(e),
                    format!("({i}, {j}) is not a counterclockwise edge of any triangle"),
                ));
            }
            if directed.contains_key(&(j, i)) {
                return Err(MeshError::invalid(
                    MeshItem::BoundaryEdge(e),
                    format!("({i}, {j}) is an interior edge"),
                ));
            }
        }
        for (&(i, j), &t) in &directed {
            if !directed.contains_key(&(j, i)) && !boundary_set.contains_key(&(i, j)) {
                return Err(MeshError::invalid(
                    MeshItem::Triangle(t),
                    format!("edge ({i}, {j}) lies on the hull but is missing from the boundary"),
                ));
            }
        }

        self.check_single_cycle()?;

        if let Some(r) = self.radius {
            for &i in &self.boundary_nodes() {
                let p = self.nodes[i];
                let off = (p[0].hypot(p[1]) - r).abs();
                if off > 1e-12 * r {
                    return Err(MeshError::invalid(
                        MeshItem::Node(i),
                        format!("boundary node is {off:e} away from the circle of radius {r}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_single_cycle(&self) -> Result<(), MeshError> {
        let b = self.boundary_edges.len();
        if b < 3 {
            return Err(MeshError::invalid(
                MeshItem::Mesh,
                format!("boundary has only {b} edges"),
            ));
        }
        let mut next: HashMap<usize, usize> = HashMap::with_capacity(b);
        for (e, &[i, j]) in self.boundary_edges.iter().enumerate() {
            if next.insert(i, j).is_some() {
                return Err(MeshError::invalid(
                    MeshItem::BoundaryEdge(e),
                    format!("node {i} starts two boundary edges"),
                ));
            }
        }
        let start = self.boundary_edges[0][0];
        let mut current = start;
        for step in 0..b {
            current = match next.get(&current) {
                Some(&j) => j,
                None => {
                    return Err(MeshError::invalid(
                        MeshItem::Mesh,
                        format!("boundary cycle is open at node {current}"),
                    ))
                }
            };
            if current == start && step + 1 < b {
                return Err(MeshError::invalid(
                    MeshItem::Mesh,
                    "boundary consists of more than one cycle",
                ));
            }
        }
        if current != start {
            return Err(MeshError::invalid(MeshItem::Mesh, "boundary cycle does not close"));
        }
        Ok(())
    }

    /// Serialises the mesh in the `MESH v1` text format.
    ///
    /// Coordinates use the shortest round-trip representation, so
    /// `import_mesh(&m.export())` reproduces `m` bit for bit.
    pub fn export(&self) -> String {
        let mut out = String::from("MESH v1\n");
        if let Some(r) = self.radius {
            let _ = writeln!(out, "RADIUS {r}");
        }
        let _ = writeln!(out, "NODES {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(out, "TRIANGLES {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(out, "BOUNDARY_EDGES {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {}", e[0], e[1]);
        }
        out
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Generates a quasi-uniform triangulation of the disk of the given radius
/// with exactly `target_nodes` nodes.
///
/// Nodes sit on concentric rings at radii `jR/m` around a centre node; ring
/// `j` carries roughly `2πj` nodes (scaled to hit the target count) and
/// neighbouring rings are stitched together by a zipper walk in angle.
pub fn generate_disk_mesh(target_nodes: usize, radius: f64) -> Result<Mesh2D, MeshError> {
    if target_nodes < 4 {
        return Err(MeshError::TooFewNodes(target_nodes));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(MeshError::BadRadius(radius));
    }

    let counts = ring_counts(target_nodes);
    let rings = counts.len();

    let mut nodes = vec![[0.0, 0.0]];
    let mut ring_start = Vec::with_capacity(rings);
    let mut offsets = Vec::with_capacity(rings);
    for (j, &count) in counts.iter().enumerate() {
        let level = j + 1;
        // stagger alternate rings by half a spacing; the outer ring starts at angle 0
        let offset = if (rings - level) % 2 == 1 {
            PI / count as f64
        } else {
            0.0
        };
        let r = if level == rings {
            radius
        } else {
            radius * level as f64 / rings as f64
        };
        ring_start.push(nodes.len());
        offsets.push(offset);
        for i in 0..count {
            let theta = offset + 2.0 * PI * i as f64 / count as f64;
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * target_nodes);
    let first = counts[0];
    for i in 0..first {
        let a = ring_start[0] + i;
        let b = ring_start[0] + (i + 1) % first;
        triangles.push([0, a, b]);
    }
    for j in 1..rings {
        zip_rings(
            &nodes,
            (ring_start[j - 1], counts[j - 1], offsets[j - 1]),
            (ring_start[j], counts[j], offsets[j]),
            &mut triangles,
        );
    }

    let outer = ring_start[rings - 1];
    let nb = counts[rings - 1];
    let boundary_edges = (0..nb).map(|i| [outer + i, outer + (i + 1) % nb]).collect();

    Mesh2D::new(nodes, triangles, boundary_edges, Some(radius))
}

/// Ring sizes (innermost first) summing to `target - 1`.
fn ring_counts(target: usize) -> Vec<usize> {
    let free = (target - 1) as f64;
    // pick the ring count whose density scale is closest to 1 (equilateral-ish cells)
    let mut best = 1usize;
    let mut best_score = f64::INFINITY;
    for m in 1..=((free.sqrt() as usize) + 2) {
        let scale = free / (PI * (m * (m + 1)) as f64);
        // the innermost ring needs at least 3 nodes
        if (2.0 * PI * scale).round() < 3.0 && m > 1 {
            continue;
        }
        let score = scale.ln().abs();
        if score < best_score {
            best_score = score;
            best = m;
        }
    }
    let scale = free / (PI * (best * (best + 1)) as f64);
    let mut counts: Vec<usize> = (1..best)
        .map(|j| ((2.0 * PI * j as f64 * scale).round() as usize).max(3))
        .collect();
    let used: usize = counts.iter().sum();
    counts.push(target - 1 - used);
    counts
}

fn zip_rings(
    nodes: &[[f64; 2]],
    inner: (usize, usize, f64),
    outer: (usize, usize, f64),
    triangles: &mut Vec<[usize; 3]>,
) {
    let (a0, na, oa) = inner;
    let (b0, nb, ob) = outer;
    let da = 2.0 * PI / na as f64;
    let db = 2.0 * PI / nb as f64;

    // outer start: last outer node at or before the first inner node in angle
    let shift = ((oa - ob) / db).floor();
    let beta0 = ob + shift * db;
    let l0 = shift.rem_euclid(nb as f64) as usize;

    let inner_node = |i: usize| a0 + i % na;
    let outer_node = |l: usize| b0 + (l0 + l) % nb;

    let (mut i, mut l) = (0usize, 0usize);
    while i < na || l < nb {
        let advance_inner = if l == nb {
            true
        } else if i == na {
            false
        } else {
            oa + (i + 1) as f64 * da <= beta0 + (l + 1) as f64 * db
        };
        let tri = if advance_inner {
            i += 1;
            [inner_node(i - 1), outer_node(l), inner_node(i)]
        } else {
            l += 1;
            [inner_node(i), outer_node(l - 1), outer_node(l)]
        };
        let [p, q, r] = tri.map(|k| nodes[k]);
        if signed_area(p, q, r) < 0.0 {
            triangles.push([tri[0], tri[2], tri[1]]);
        } else {
            triangles.push(tri);
        }
    }
}

/// Header line number and `(line, fields)` entries of one section.
type Section<'a> = (usize, Vec<(usize, Vec<&'a str>)>);

/// Parses a mesh in the `MESH v1` text format and validates it.
///
/// Structural errors found during validation are reported with the line of
/// the offending entry.
pub fn import_mesh(text: &str) -> Result<Mesh2D, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, raw)| (k + 1, raw.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let parse_err = |line: usize, message: String| MeshError::Parse { line, message };
    let last_line = text.lines().count().max(1);

    match lines.next() {
        Some((_, "MESH v1")) => {}
        Some((line, other)) => return Err(parse_err(line, format!("expected `MESH v1` header, found `{other}`"))),
        None => return Err(parse_err(1, "empty mesh file".into())),
    }

    let mut radius = None;
    if let Some(&(line, l)) = lines.peek() {
        if let Some(rest) = l.strip_prefix("RADIUS") {
            let r: f64 = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad radius `{}`", rest.trim())))?;
            if !(r.is_finite() && r > 0.0) {
                return Err(parse_err(line, format!("radius must be positive, got {r}")));
            }
            radius = Some(r);
            lines.next();
        }
    }

    let mut section = |name: &str| -> Result<Section<'_>, MeshError> {
        let (line, header) = lines
            .next()
            .ok_or_else(|| parse_err(last_line, format!("missing {name} section")))?;
        let count = header
            .strip_prefix(name)
            .map(str::trim)
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| parse_err(line, format!("expected `{name} <count>`, found `{header}`")))?;
        let mut rows = Vec::with_capacity(count);
        for k in 0..count {
            match lines.peek() {
                Some(&(l, row)) if !row.starts_with(|c: char| c.is_ascii_alphabetic()) => {
                    rows.push((l, row.split_whitespace().collect()));
                    lines.next();
                }
                Some(&(l, _)) => {
                    return Err(parse_err(
                        l,
                        format!("{name} section declares {count} entries but lists {k}"),
                    ))
                }
                None => {
                    return Err(parse_err(
                        last_line,
                        format!("{name} section declares {count} entries but lists {k}"),
                    ))
                }
            }
        }
        Ok((line, rows))
    };

    let (_, node_rows) = section("NODES")?;
    let (_, tri_rows) = section("TRIANGLES")?;
    let (_, edge_rows) = section("BOUNDARY_EDGES")?;
    if let Some((line, extra)) = lines.next() {
        return Err(parse_err(line, format!("unexpected trailing content `{extra}`")));
    }

    fn fields<T: std::str::FromStr, const N: usize>(
        line: usize,
        row: &[&str],
        what: &str,
    ) -> Result<[T; N], MeshError> {
        if row.len() != N {
            return Err(MeshError::Parse {
                line,
                message: format!("{what} needs {N} fields, found {}", row.len()),
            });
        }
        let mut out = Vec::with_capacity(N);
        for f in row {
            out.push(f.parse::<T>().map_err(|_| MeshError::Parse {
                line,
                message: format!("cannot parse `{f}` in {what}"),
            })?);
        }
        out.try_into().map_err(|_| unreachable!())
    }

    let nodes = node_rows
        .iter()
        .map(|(l, r)| fields::<f64, 2>(*l, r, "node"))
        .collect::<Result<Vec<_>, _>>()?;
    let triangles = tri_rows
        .iter()
        .map(|(l, r)| fields::<usize, 3>(*l, r, "triangle"))
        .collect::<Result<Vec<_>, _>>()?;
    let boundary_edges = edge_rows
        .iter()
        .map(|(l, r)| fields::<usize, 2>(*l, r, "boundary edge"))
        .collect::<Result<Vec<_>, _>>()?;

    let mesh = Mesh2D::from_parts_unchecked(nodes, triangles, boundary_edges, radius);
    mesh.validate().map_err(|e| match e {
        MeshError::Invalid { item, message } => {
            let line = match item {
                MeshItem::Node(i) => node_rows.get(i).map(|r| r.0),
                MeshItem::Triangle(t) => tri_rows.get(t).map(|r| r.0),
                MeshItem::BoundaryEdge(b) => edge_rows.get(b).map(|r| r.0),
                MeshItem::Mesh => None,
            };
            match line {
                Some(line) => MeshError::Parse { line, message },
                None => MeshError::Invalid { item, message },
            }
        }
        other => other,
    })?;
    Ok(mesh)
}
