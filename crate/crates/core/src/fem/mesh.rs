//! Meshes and the plain-text mesh format.
//!
//! ```text
//! # comment
//! NODES
//! 0 0.0 0.0
//! 1 1.0 0.0
//! ...
//! ELEMENTS
//! 0 0 1 5 4
//! ...
//! TAGS          # optional: element id, integer tag
//! 0 0
//! ```
//!
//! Ids are 0-based and must appear in order. Node lines carry one coordinate
//! for bars and two for plates; element lines carry two or four node ids.
//! Quadrilaterals are listed counter-clockwise.

use crate::error::{Error, Result};
use crate::scalar::Real;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    dim: usize,
    coords: Vec<T>,
    elements: Vec<Vec<usize>>,
    tags: Vec<i64>,
}

impl<T: Real> Mesh<T> {
    /// Builds and validates a mesh. `coords` is node-major with `dim` entries per node.
    pub fn new(dim: usize, coords: Vec<T>, elements: Vec<Vec<usize>>, tags: Option<Vec<i64>>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid("mesh dimension must be 1 or 2"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::shape("coordinate count not a multiple of the dimension"));
        }
        let n_nodes = coords.len() / dim;
        let per = if dim == 1 { 2 } else { 4 };
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != per {
                return Err(Error::invalid(format!("element {e} has {} nodes, expected {per}", conn.len())));
            }
            if let Some(&bad) = conn.iter().find(|&&n| n >= n_nodes) {
                return Err(Error::invalid(format!("element {e} references missing node {bad}")));
            }
        }
        let tags = tags.unwrap_or_else(|| vec![0; elements.len()]);
        if tags.len() != elements.len() {
            return Err(Error::shape("one tag per element required"));
        }
        let mesh = Mesh { dim, coords, elements, tags };
        for e in 0..mesh.n_elements() {
            let s = mesh.element_size(e);
            if !(s > T::zero()) {
                return Err(Error::invalid(format!("element {e} has nonpositive length/area")));
            }
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, n: usize) -> &[T] {
        &self.coords[n * self.dim..(n + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e]
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn tags(&self) -> &[i64] {
        &self.tags
    }

    pub fn set_tags(&mut self, tags: Vec<i64>) -> Result<()> {
        if tags.len() != self.n_elements() {
            return Err(Error::shape("one tag per element required"));
        }
        self.tags = tags;
        Ok(())
    }

    pub fn centroid(&self, e: usize) -> Vec<T> {
        let conn = &self.elements[e];
        let k = T::from_usize_lossy(conn.len());
        (0..self.dim).map(|d| conn.iter().map(|&n| self.node(n)[d]).sum::<T>() / k).collect()
    }

    pub fn centroids(&self) -> Vec<Vec<T>> {
        (0..self.n_elements()).map(|e| self.centroid(e)).collect()
    }

    /// Element length (bars) or area (quads, by the shoelace formula).
    pub fn element_size(&self, e: usize) -> T {
        let conn = &self.elements[e];
        if self.dim == 1 {
            self.node(conn[1])[0] - self.node(conn[0])[0]
        } else {
            let mut a = T::zero();
            for k in 0..4 {
                let p = self.node(conn[k]);
                let q = self.node(conn[(k + 1) % 4]);
                a += p[0] * q[1] - q[0] * p[1];
            }
            a * T::lit(0.5)
        }
    }

    pub fn element_sizes(&self) -> Vec<T> {
        (0..self.n_elements()).map(|e| self.element_size(e)).collect()
    }

    /// (min, max) of coordinate `axis` over all nodes.
    pub fn bounds(&self, axis: usize) -> (T, T) {
        (0..self.n_nodes()).fold((T::infinity(), T::neg_infinity()), |(lo, hi), n| {
            let x = self.node(n)[axis];
            (lo.min(x), hi.max(x))
        })
    }

    /// Largest difference between node ids sharing an element.
    pub fn node_bandwidth(&self) -> usize {
        self.elements
            .iter()
            .map(|c| {
                let lo = c.iter().min().copied().unwrap_or(0);
                let hi = c.iter().max().copied().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Nodes,
            Elements,
            Tags,
        }
        let mut section = Section::None;
        let mut dim = 0usize;
        let mut coords = Vec::new();
        let mut elements = Vec::new();
        let mut tags: Option<Vec<i64>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::invalid(format!("mesh line {}: {msg}", lineno + 1));
            match line {
                "NODES" => {
                    section = Section::Nodes;
                    continue;
                }
                "ELEMENTS" => {
                    section = Section::Elements;
                    continue;
                }
                "TAGS" => {
                    section = Section::Tags;
                    tags = Some(Vec::new());
                    continue;
                }
                _ => {}
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let id: usize = fields[0].parse().map_err(|_| bad("bad id"))?;
            match section {
                Section::None => return Err(bad("data before NODES")),
                Section::Nodes => {
                    let d = fields.len() - 1;
                    if dim == 0 {
                        dim = d;
                    }
                    if d != dim || !(1..=2).contains(&d) {
                        return Err(bad("inconsistent coordinate count"));
                    }
                    if id != coords.len() / dim {
                        return Err(bad("node ids must be consecutive from 0"));
                    }
                    for f in &fields[1..] {
                        let v: f64 = f.parse().map_err(|_| bad("bad coordinate"))?;
                        coords.push(T::lit(v));
                    }
                }
                Section::Elements => {
                    if id != elements.len() {
                        return Err(bad("element ids must be consecutive from 0"));
                    }
                    let conn = fields[1..]
                        .iter()
                        .map(|f| f.parse::<usize>().map_err(|_| bad("bad node id")))
                        .collect::<Result<Vec<_>>>()?;
                    elements.push(conn);
                }
                Section::Tags => {
                    let t = tags.as_mut().expect("tags section");
                    if id != t.len() || fields.len() != 2 {
                        return Err(bad("tag lines are `element_id tag` in order"));
                    }
                    t.push(fields[1].parse().map_err(|_| bad("bad tag"))?);
                }
            }
        }
        if dim == 0 {
            return Err(Error::invalid("mesh has no nodes"));
        }
        Mesh::new(dim, coords, elements, tags)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("NODES\n");
        for n in 0..self.n_nodes() {
            let _ = write!(s, "{n}");
            for &x in self.node(n) {
                let _ = write!(s, " {:.16e}", x.to_f64_lossy());
            }
            s.push('\n');
        }
        s.push_str("ELEMENTS\n");
        for (e, c) in self.elements.iter().enumerate() {
            let _ = write!(s, "{e}");
            for n in c {
                let _ = write!(s, " {n}");
            }
            s.push('\n');
        }
        if self.tags.iter().any(|&t| t != 0) {
            s.push_str("TAGS\n");
            for (e, t) in self.tags.iter().enumerate() {
                let _ = writeln!(s, "{e} {t}");
            }
        }
        s
    }
}

/// Uniform bar mesh on [0, length] with `n` two-node elements.
pub fn bar_mesh<T: Real>(length: T, n: usize) -> Result<Mesh<T>> {
    if n == 0 || !(length > T::zero()) {
        return Err(Error::invalid("bar needs a positive length and at least one element"));
    }
    let nn = T::from_usize_lossy(n);
    let coords = (0..=n).map(|i| if i == n { length } else { length * T::from_usize_lossy(i) / nn }).collect();
    let elements = (0..n).map(|e| vec![e, e + 1]).collect();
    Mesh::new(1, coords, elements, None)
}

/// Geometry of the square plate with a central circular hole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGeometry<T> {
    pub width: T,
    pub height: T,
    pub radius: T,
    /// Angular divisions around the hole; a multiple of 8.
    pub n_theta: usize,
    /// Element rings between the hole and the outer boundary.
    pub n_rings: usize,
    /// Ratio of consecutive ring thicknesses (> 1 refines near the hole).
    pub grading: T,
}

impl<T: Real> PlateGeometry<T> {
    pub fn standard() -> Self {
        PlateGeometry {
            width: T::lit(0.32),
            height: T::lit(0.32),
            radius: T::lit(0.02),
            n_theta: 32,
            n_rings: 11,
            grading: T::lit(1.15),
        }
    }
}

/// Structured O-grid around the hole. Node (ring i, angle k) has id i·n_theta + k;
/// element tags hold the ring index (0 at the hole).
pub fn plate_with_hole<T: Real>(g: &PlateGeometry<T>) -> Result<Mesh<T>> {
    if g.n_theta < 8 || g.n_theta % 8 != 0 {
        return Err(Error::invalid("n_theta must be a positive multiple of 8"));
    }
    if g.n_rings == 0 || !(g.grading > T::zero()) {
        return Err(Error::invalid("need at least one ring and positive grading"));
    }
    let (hw, hh) = (g.width * T::lit(0.5), g.height * T::lit(0.5));
    if !(g.radius > T::zero()) || g.radius >= hw.min(hh) {
        return Err(Error::invalid("hole radius must be positive and inside the plate"));
    }
    let nt = g.n_theta;
    let eighth = nt / 8;
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    // outer boundary: equal spacing along each edge; corners at k = eighth·(1,3,5,7)
    let outer = |k: usize| -> (T, T) {
        let side = ((k + eighth) % nt) / (2 * eighth);
        let s = T::from_usize_lossy((k + eighth) % (2 * eighth)) / T::from_usize_lossy(2 * eighth);
        let t = T::lit(2.0) * s - T::one();
        match side {
            0 => (hw, t * hh),
            1 => (-t * hw, hh),
            2 => (-hw, -t * hh),
            _ => (t * hw, -hh),
        }
    };
    let q = g.grading;
    let nr = g.n_rings;
    let total = (0..nr).fold(T::zero(), |acc, i| acc + q.powi(i as i32));
    let mut frac = vec![T::zero(); nr + 1];
    for i in 1..=nr {
        frac[i] = frac[i - 1] + q.powi((i - 1) as i32) / total;
    }
    frac[nr] = T::one();
    let mut coords = Vec::with_capacity((nr + 1) * nt * 2);
    for f in frac.iter() {
        for k in 0..nt {
            let th = two_pi * T::from_usize_lossy(k) / T::from_usize_lossy(nt);
            let (ix, iy) = (g.radius * th.cos(), g.radius * th.sin());
            let (ox, oy) = outer(k);
            let (x, y) = if *f == T::one() { (ox, oy) } else { (ix + (ox - ix) * *f, iy + (oy - iy) * *f) };
            coords.push(x);
            coords.push(y);
        }
    }
    let mut elements = Vec::with_capacity(nr * nt);
    let mut tags = Vec::with_capacity(nr * nt);
    for i in 0..nr {
        for k in 0..nt {
            let k1 = (k + 1) % nt;
            elements.push(vec![i * nt + k, (i + 1) * nt + k, (i + 1) * nt + k1, i * nt + k1]);
            tags.push(i as i64);
        }
    }
    Mesh::new(2, coords, elements, Some(tags))
}
