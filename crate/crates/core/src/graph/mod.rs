//! Finite weighted graphs with classified absorbing vertices.
//!
//! Vertices carry a [`VertexClass`]; the absorbing classes (`top`, `side`,
//! `cemetery`) stand for wired exteriors. Conductances are symmetric and may
//! include diagonal self-terms, which only appear after conditioning.

mod format;
mod lattice;
mod surgery;
mod toy;

pub use format::{parse_beta_dump, parse_graph, write_beta_dump, write_graph};
pub use lattice::{build_box_lattice, build_halfspace_box, build_halfspace_strip, SideBoundary};
pub use surgery::{transform_comparison_step, wire_boundary, ComparisonStep, LineDuplication};
pub use toy::{build_toy_chain, build_toy_graph, toy_eligible_sites};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VertexClass {
    Interior,
    Plain,
    Top,
    Side,
    Cemetery,
}

impl VertexClass {
    pub fn is_absorbing(self) -> bool {
        matches!(self, VertexClass::Top | VertexClass::Side | VertexClass::Cemetery)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VertexClass::Interior => "interior",
            VertexClass::Plain => "plain",
            VertexClass::Top => "top",
            VertexClass::Side => "side",
            VertexClass::Cemetery => "cemetery",
        }
    }
}

impl fmt::Display for VertexClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VertexClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "interior" => VertexClass::Interior,
            "plain" => VertexClass::Plain,
            "top" => VertexClass::Top,
            "side" => VertexClass::Side,
            "cemetery" => VertexClass::Cemetery,
            other => return invalid(format!("unknown vertex class '{other}'")),
        })
    }
}

/// A finite graph with symmetric nonnegative conductances, a boundary field
/// `eta`, vertex classes, optional lattice coordinates and an optional root.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedGraph {
    classes: Vec<VertexClass>,
    eta: Vec<f64>,
    adj: Vec<BTreeMap<usize, f64>>,
    coords: Vec<Option<Vec<i64>>>,
    coord_index: HashMap<Vec<i64>, usize>,
    root: Option<usize>,
}

impl WeightedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, class: VertexClass, eta: f64) -> Result<usize> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return invalid(format!("boundary field must be finite and >= 0, got {eta}"));
        }
        if class == VertexClass::Cemetery && self.classes.contains(&VertexClass::Cemetery) {
            return invalid("at most one cemetery vertex is allowed");
        }
        self.classes.push(class);
        self.eta.push(eta);
        self.adj.push(BTreeMap::new());
        self.coords.push(None);
        Ok(self.classes.len() - 1)
    }

    /// Adds a vertex tagged with lattice coordinates.
    pub fn add_lattice_vertex(&mut self, class: VertexClass, coords: Vec<i64>) -> Result<usize> {
        if self.coord_index.contains_key(&coords) {
            return invalid(format!("duplicate coordinates {coords:?}"));
        }
        let v = self.add_vertex(class, 0.0)?;
        self.coord_index.insert(coords.clone(), v);
        self.coords[v] = Some(coords);
        Ok(v)
    }

    pub(crate) fn set_coords(&mut self, v: usize, coords: Option<Vec<i64>>) -> Result<()> {
        if let Some(old) = self.coords[v].take() {
            self.coord_index.remove(&old);
        }
        if let Some(c) = &coords {
            if self.coord_index.contains_key(c) {
                return invalid(format!("duplicate coordinates {c:?}"));
            }
            self.coord_index.insert(c.clone(), v);
        }
        self.coords[v] = coords;
        Ok(())
    }

    /// Adds `c` to the conductance between `u` and `v` (both directions).
    pub fn add_conductance(&mut self, u: usize, v: usize, c: f64) -> Result<()> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if !(c >= 0.0) || !c.is_finite() {
            return invalid(format!("conductance must be finite and >= 0, got {c}"));
        }
        if c == 0.0 {
            return Ok(());
        }
        *self.adj[u].entry(v).or_insert(0.0) += c;
        if u != v {
            *self.adj[v].entry(u).or_insert(0.0) += c;
        }
        Ok(())
    }

    /// Sets the conductance between `u` and `v`; zero removes the edge.
    pub fn set_conductance(&mut self, u: usize, v: usize, c: f64) -> Result<()> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if !(c >= 0.0) || !c.is_finite() {
            return invalid(format!("conductance must be finite and >= 0, got {c}"));
        }
        if c == 0.0 {
            self.adj[u].remove(&v);
            self.adj[v].remove(&u);
        } else {
            self.adj[u].insert(v, c);
            self.adj[v].insert(u, c);
        }
        Ok(())
    }

    pub fn set_eta(&mut self, v: usize, eta: f64) -> Result<()> {
        self.check_vertex(v)?;
        if !(eta >= 0.0) || !eta.is_finite() {
            return invalid(format!("boundary field must be finite and >= 0, got {eta}"));
        }
        self.eta[v] = eta;
        Ok(())
    }

    pub fn set_root(&mut self, root: Option<usize>) -> Result<()> {
        if let Some(r) = root {
            self.check_vertex(r)?;
        }
        self.root = root;
        Ok(())
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.classes.len() {
            return invalid(format!("vertex {v} out of range (graph has {})", self.classes.len()));
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, v: usize) -> VertexClass {
        self.classes[v]
    }

    pub fn eta(&self, v: usize) -> f64 {
        self.eta[v]
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    pub fn coords(&self, v: usize) -> Option<&[i64]> {
        self.coords[v].as_deref()
    }

    pub fn vertex_at(&self, coords: &[i64]) -> Option<usize> {
        self.coord_index.get(coords).copied()
    }

    pub fn is_absorbing(&self, v: usize) -> bool {
        self.classes[v].is_absorbing()
    }

    pub fn conductance(&self, u: usize, v: usize) -> f64 {
        self.adj[u].get(&v).copied().unwrap_or(0.0)
    }

    /// Neighbors of `v` with their conductances, in increasing vertex order.
    /// A self-loop shows up as `(v, c)`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adj[v].iter().map(|(&u, &c)| (u, c))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].keys().filter(|&&u| u != v).count()
    }

    /// Every edge once as `(u, v, c)` with `u <= v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, row)| {
            row.range(u..).map(move |(&v, &c)| (u, v, c))
        })
    }

    pub fn vertices_of_class(&self, class: VertexClass) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| self.classes[v] == class).collect()
    }

    /// The unique vertex of class `cemetery`, if any.
    pub fn cemetery(&self) -> Option<usize> {
        self.classes.iter().position(|&c| c == VertexClass::Cemetery)
    }

    /// Non-absorbing vertices in index order.
    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.is_absorbing(v)).collect()
    }

    /// Effective boundary field: the explicit `eta` plus the conductance into
    /// absorbing vertices. Absorbing vertices get 0.
    pub fn boundary_field(&self) -> Vec<f64> {
        (0..self.num_vertices())
            .map(|v| {
                if self.is_absorbing(v) {
                    0.0
                } else {
                    self.eta[v]
                        + self
                            .neighbors(v)
                            .filter(|&(u, _)| u != v && self.is_absorbing(u))
                            .map(|(_, c)| c)
                            .sum::<f64>()
                }
            })
            .collect()
    }

    /// Conductance from `v` into vertices of the given class.
    pub fn conductance_into_class(&self, v: usize, class: VertexClass) -> f64 {
        self.neighbors(v)
            .filter(|&(u, _)| u != v && self.classes[u] == class)
            .map(|(_, c)| c)
            .sum()
    }

    /// Copy of the graph with every vertex reclassified as `plain`, so that
    /// samplers treat former absorbing vertices as ordinary sites.
    pub fn closed(&self) -> WeightedGraph {
        let mut g = self.clone();
        for c in g.classes.iter_mut() {
            *c = VertexClass::Plain;
        }
        g
    }

    /// Largest violation of the structural invariants (symmetry,
    /// nonnegativity); `None` when they hold.
    pub fn invariant_violation(&self) -> Option<String> {
        for (u, row) in self.adj.iter().enumerate() {
            for (&v, &c) in row {
                if !(c >= 0.0) {
                    return Some(format!("negative conductance {c} on ({u},{v})"));
                }
                if self.conductance(v, u) != c {
                    return Some(format!("asymmetric conductance on ({u},{v})"));
                }
            }
        }
        if self.eta.iter().any(|&e| !(e >= 0.0)) {
            return Some("negative boundary field".into());
        }
        if self.classes.iter().filter(|&&c| c == VertexClass::Cemetery).count() > 1 {
            return Some("more than one cemetery".into());
        }
        None
    }
}
