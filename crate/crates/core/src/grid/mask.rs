use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ComplexGrid, GridFunction, Shape, MAX_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Boundary => "boundary",
            NodeClass::Exterior => "exterior",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "interior" => Some(NodeClass::Interior),
            "boundary" => Some(NodeClass::Boundary),
            "exterior" => Some(NodeClass::Exterior),
            _ => None,
        }
    }
}

/// How the domain is described.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// Interior = grid nodes inside the open shape. With `cut_cells` the
    /// mask remembers the shape so operators can place boundary values at
    /// the exact crossing of each axis arm instead of at the outside node.
    Shape { shape: Shape, cut_cells: bool },
    /// Interior given node by node; Boundary is re-derived.
    Explicit { interior: Vec<bool> },
}

impl DomainSpec {
    pub fn shape(shape: Shape) -> Self {
        DomainSpec::Shape {
            shape,
            cut_cells: true,
        }
    }

    pub fn snapped(shape: Shape) -> Self {
        DomainSpec::Shape {
            shape,
            cut_cells: false,
        }
    }
}

/// Interior/Boundary/Exterior classification of the nodes of a grid.
///
/// Boundary nodes are the non-interior nodes inside the `3^{2n}` stencil
/// cube of some interior node, so every interior stencil only reaches
/// interior or boundary nodes.
#[derive(Debug, Clone)]
pub struct DomainMask {
    grid: Arc<ComplexGrid>,
    classes: Vec<NodeClass>,
    interior: Vec<usize>,
    geometry: Option<Shape>,
    barrier: Option<GridFunction>,
    disconnected: bool,
}

/// Marks every node within one lattice step (cube neighbourhood) of a
/// marked node. Separable: one pass per axis.
fn dilate(grid: &ComplexGrid, marks: &[bool]) -> Vec<bool> {
    let mut cur = marks.to_vec();
    for a in 0..grid.dim() {
        let stride = grid.strides()[a];
        let ext = grid.extents()[a];
        let mut next = cur.clone();
        for (i, &m) in cur.iter().enumerate() {
            if !m {
                continue;
            }
            let k = (i / stride) % ext;
            if k > 0 {
                next[i - stride] = true;
            }
            if k + 1 < ext {
                next[i + stride] = true;
            }
        }
        cur = next;
    }
    cur
}

fn count_components(grid: &ComplexGrid, inside: &[bool]) -> usize {
    let mut seen = vec![false; inside.len()];
    let mut comps = 0;
    let mut queue = VecDeque::new();
    for start in 0..inside.len() {
        if !inside[start] || seen[start] {
            continue;
        }
        comps += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for a in 0..grid.dim() {
                let stride = grid.strides()[a];
                let k = (i / stride) % grid.extents()[a];
                let mut visit = |j: usize| {
                    if inside[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if k > 0 {
                    visit(i - stride);
                }
                if k + 1 < grid.extents()[a] {
                    visit(i + stride);
                }
            }
        }
    }
    comps
}

pub fn classify_domain(grid: &Arc<ComplexGrid>, spec: &DomainSpec) -> Result<DomainMask> {
    let (inside, geometry) = match spec {
        DomainSpec::Shape { shape, cut_cells } => {
            if let Some(d) = shape.dim() {
                if d != grid.dim() {
                    return Err(Error::ShapeOutsideGrid(format!(
                        "shape has {d} coordinates, grid has {}",
                        grid.dim()
                    )));
                }
            }
            let mut p = [0.0; MAX_DIM];
            let dim = grid.dim();
            let inside: Vec<bool> = (0..grid.len())
                .map(|i| {
                    grid.point_into(i, &mut p);
                    shape.contains_node_open(&p[..dim], grid.h())
                })
                .collect();
            (inside, cut_cells.then(|| shape.clone()))
        }
        DomainSpec::Explicit { interior } => {
            if interior.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "explicit mask has {} entries for {} nodes",
                    interior.len(),
                    grid.len()
                )));
            }
            (interior.clone(), None)
        }
    };
    DomainMask::from_interior(grid, inside, geometry)
}

impl DomainMask {
    fn from_interior(grid: &Arc<ComplexGrid>, inside: Vec<bool>, geometry: Option<Shape>) -> Result<Self> {
        let interior: Vec<usize> = (0..inside.len()).filter(|&i| inside[i]).collect();
        if interior.is_empty() {
            return Err(Error::EmptyInterior);
        }
        if let Some(&i) = interior.iter().find(|&&i| grid.on_edge(i)) {
            return Err(Error::ShapeOutsideGrid(format!(
                "interior node {i} lies on the outermost grid layer"
            )));
        }
        let near = dilate(grid, &inside);
        let classes = inside
            .iter()
            .zip(&near)
            .map(|(&ins, &nr)| match (ins, nr) {
                (true, _) => NodeClass::Interior,
                (false, true) => NodeClass::Boundary,
                (false, false) => NodeClass::Exterior,
            })
            .collect();
        let disconnected = count_components(grid, &inside) > 1;
        let barrier = match &geometry {
            Some(Shape::Ball { center, radius }) => {
                let (c, r2) = (center.clone(), radius * radius);
                let mut rho = GridFunction::from_fn(grid.clone(), |x| {
                    x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - r2
                });
                for (i, v) in rho.values_mut().iter_mut().enumerate() {
                    if !inside[i] {
                        *v = 0.0;
                    }
                }
                Some(rho)
            }
            _ => None,
        };
        Ok(DomainMask {
            grid: grid.clone(),
            classes,
            interior,
            geometry,
            barrier,
            disconnected,
        })
    }

    /// Rebuilds a mask from a full class vector (e.g. read from CSV).
    /// Only the Interior entries are authoritative.
    pub fn from_classes(grid: &Arc<ComplexGrid>, classes: &[NodeClass]) -> Result<Self> {
        let inside = classes.iter().map(|&c| c == NodeClass::Interior).collect();
        Self::from_interior(grid, inside, None)
    }

    pub fn grid(&self) -> &Arc<ComplexGrid> {
        &self.grid
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.classes[idx]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.classes[idx] == NodeClass::Interior
    }

    /// Sorted interior node indices.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&i| self.classes[i] == NodeClass::Boundary)
            .collect()
    }

    pub fn geometry(&self) -> Option<&Shape> {
        self.geometry.as_ref()
    }

    pub fn barrier(&self) -> Option<&GridFunction> {
        self.barrier.as_ref()
    }

    pub fn is_disconnected(&self) -> bool {
        self.disconnected
    }

    pub fn interior_flags(&self) -> Vec<bool> {
        self.classes.iter().map(|&c| c == NodeClass::Interior).collect()
    }

    /// Same classification without cut-cell geometry (and without the
    /// barrier, which is only exact with cut cells).
    pub fn snapped(&self) -> Self {
        DomainMask {
            geometry: None,
            barrier: None,
            ..self.clone()
        }
    }

    /// Attaches a user barrier after checking its sign pattern. Discrete
    /// α-subharmonicity is checked separately by the operator module.
    pub fn with_barrier(mut self, rho: GridFunction) -> Result<Self> {
        rho.ensure_same_grid(&self.grid)?;
        for (i, &c) in self.classes.iter().enumerate() {
            let v = rho.get(i);
            match c {
                NodeClass::Interior if !(v < 0.0) => {
                    return Err(Error::input(format!("barrier must be negative at interior node {i}")))
                }
                NodeClass::Boundary if v.abs() > 1e-12 => {
                    return Err(Error::input(format!("barrier must vanish at boundary node {i}")))
                }
                _ => {}
            }
        }
        self.barrier = Some(rho);
        Ok(self)
    }

    /// Interior of `self` contained in the interior of `other` (same grid).
    pub fn interior_subset_of(&self, other: &DomainMask) -> bool {
        *self.grid == *other.grid && self.interior.iter().all(|&i| other.is_interior(i))
    }
}

/// Sorted set of interior nodes, e.g. the compact K.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    indices: Vec<usize>,
    label: String,
    geometry: Option<Shape>,
}

impl NodeSet {
    pub fn empty(label: impl Into<String>) -> Self {
        NodeSet {
            indices: Vec::new(),
            label: label.into(),
            geometry: None,
        }
    }

    pub fn new(mask: &DomainMask, mut indices: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&i) = indices.iter().find(|&&i| i >= mask.grid().len() || !mask.is_interior(i)) {
            return Err(Error::NodeSet(format!("node {i} is not an interior node")));
        }
        Ok(NodeSet {
            indices,
            label: label.into(),
            geometry: None,
        })
    }

    /// Interior nodes in the closed shape. Fat shapes are remembered so
    /// solvers can place the constraint at exact arm crossings.
    pub fn from_shape(mask: &DomainMask, shape: &Shape, label: impl Into<String>) -> Self {
        let grid = mask.grid();
        let dim = grid.dim();
        let mut p = [0.0; MAX_DIM];
        let indices = mask
            .interior()
            .iter()
            .copied()
            .filter(|&i| {
                grid.point_into(i, &mut p);
                shape.contains_node_closed(&p[..dim], grid.h())
            })
            .collect();
        NodeSet {
            indices,
            label: label.into(),
            geometry: shape.is_fat().then(|| shape.clone()),
        }
    }

    /// Nodes nearest to the given points.
    pub fn from_points(mask: &DomainMask, points: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let idx = points.iter().map(|p| mask.grid().nearest_node(p)).collect();
        Self::new(mask, idx, label)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn geometry(&self) -> Option<&Shape> {
        self.geometry.as_ref()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    pub fn membership(&self, len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }

    pub fn is_subset_of(&self, other: &NodeSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    pub fn without_geometry(&self) -> Self {
        NodeSet {
            geometry: None,
            ..self.clone()
        }
    }

    /// The same nodes and geometry checked against another mask of the same
    /// grid.
    pub fn rebased(&self, mask: &DomainMask) -> Result<Self> {
        let mut out = Self::new(mask, self.indices.clone(), self.label.clone())?;
        out.geometry = self.geometry.clone();
        Ok(out)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Nodes of either set. The geometry is the union of the operands'
    /// shapes; nodes outside it count as isolated nodes.
    pub fn union(&self, other: &NodeSet, label: impl Into<String>) -> Self {
        let mut indices = self.indices.clone();
        indices.extend_from_slice(&other.indices);
        indices.sort_unstable();
        indices.dedup();
        let geometry = match (&self.geometry, &other.geometry) {
            (Some(a), Some(b)) if a == b => Some(a.clone()),
            (Some(a), Some(b)) => Some(Shape::Union {
                parts: vec![a.clone(), b.clone()],
            }),
            (Some(g), None) | (None, Some(g)) => Some(g.clone()),
            (None, None) => None,
        };
        NodeSet {
            indices,
            label: label.into(),
            geometry,
        }
    }

    pub fn intersection(&self, other: &NodeSet, label: impl Into<String>) -> Self {
        let indices = self.indices.iter().copied().filter(|&i| other.contains(i)).collect();
        NodeSet {
            indices,
            label: label.into(),
            geometry: None,
        }
    }

    /// Nodes of the set inside the closed ball `B̄(center, radius)`.
    pub fn within_ball(&self, grid: &ComplexGrid, center: &[f64], radius: f64, label: impl Into<String>) -> Self {
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&i| {
                let p = grid.point(i);
                let d2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius * (1.0 + 1e-12)
            })
            .collect();
        NodeSet {
            indices,
            label: label.into(),
            geometry: None,
        }
    }
}
