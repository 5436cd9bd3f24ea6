//! Vertex-centred tensor grids over intervals, boxes and their N-fold products.
//!
//! Nodes are ordered row-major (last axis fastest). Boundary nodes lie on the
//! boundary itself, and the trapezoidal weights define the inner product
//! `<φ, ψ>_w = Σ_n w_n conj(φ_n) ψ_n` used for every norm in the crate.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Box,
    Product,
}

/// Domain description as read from a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// `(lower, upper)` per axis of one particle, or of all particles for
    /// product domains (in which case every particle block must agree).
    pub extents: Vec<(f64, f64)>,
    #[serde(default = "one")]
    pub particle_count: usize,
    /// Per-particle dimension; inferred from `extents` when zero.
    #[serde(default)]
    pub dim: usize,
}

fn one() -> usize {
    1
}

impl DomainSpec {
    pub fn interval(lower: f64, upper: f64) -> Self {
        DomainSpec { kind: DomainKind::Interval, extents: vec![(lower, upper)], particle_count: 1, dim: 1 }
    }

    pub fn cuboid(extents: &[(f64, f64)]) -> Self {
        DomainSpec { kind: DomainKind::Box, extents: extents.to_vec(), particle_count: 1, dim: extents.len() }
    }

    pub fn product(extents: &[(f64, f64)], particle_count: usize) -> Self {
        DomainSpec {
            kind: DomainKind::Product,
            extents: extents.to_vec(),
            particle_count,
            dim: extents.len(),
        }
    }

    /// Checks the spec and returns the per-particle extents.
    pub fn validate(&self) -> Result<Vec<(f64, f64)>> {
        let bad = |msg: String| Err(Error::InvalidDomain(msg));
        if self.extents.is_empty() {
            return bad("no extents given".into());
        }
        for (axis, &(lo, hi)) in self.extents.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return bad(format!("axis {axis}: need finite lower < upper, got ({lo}, {hi})"));
            }
        }
        if self.particle_count == 0 {
            return bad("particle_count must be positive".into());
        }
        let dim = if self.dim == 0 {
            match self.kind {
                DomainKind::Product if self.extents.len().is_multiple_of(self.particle_count) => {
                    if self.extents.len() == self.particle_count {
                        1
                    } else {
                        self.extents.len() / self.particle_count
                    }
                }
                _ => self.extents.len(),
            }
        } else {
            self.dim
        };
        match self.kind {
            DomainKind::Interval => {
                if self.extents.len() != 1 || dim != 1 || self.particle_count != 1 {
                    return bad("interval domains have one axis and one particle".into());
                }
                Ok(self.extents.clone())
            }
            DomainKind::Box => {
                if self.particle_count != 1 || self.extents.len() != dim {
                    return bad("box domains describe a single particle; use kind = product".into());
                }
                Ok(self.extents.clone())
            }
            DomainKind::Product => {
                if self.particle_count < 2 {
                    return bad("product domains need particle_count >= 2".into());
                }
                if self.extents.len() == dim {
                    Ok(self.extents.clone())
                } else if self.extents.len() == dim * self.particle_count {
                    let first = &self.extents[..dim];
                    if self.extents.chunks(dim).any(|blk| blk != first) {
                        return bad("product domains need identical per-particle extents".into());
                    }
                    Ok(first.to_vec())
                } else {
                    bad(format!(
                        "product domain: {} extents do not match dim {} x {} particles",
                        self.extents.len(),
                        dim,
                        self.particle_count
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    /// Sign of the outward normal along the axis.
    pub fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }
}

/// One face of `∂(Ω^N)`: particle `particle`'s coordinate `axis` sits at `side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceId {
    pub particle: usize,
    pub axis: usize,
    pub side: Side,
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::Lower => "lower",
            Side::Upper => "upper",
        };
        write!(f, "p{}:a{}:{}", self.particle, self.axis, side)
    }
}

impl FromStr for FaceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Config(format!("malformed face id '{s}'"));
        let mut parts = s.split(':');
        let particle = parts.next().and_then(|p| p.strip_prefix('p')).ok_or_else(err)?;
        let axis = parts.next().and_then(|p| p.strip_prefix('a')).ok_or_else(err)?;
        let side = match parts.next().ok_or_else(err)? {
            "lower" => Side::Lower,
            "upper" => Side::Upper,
            _ => return Err(err()),
        };
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(FaceId {
            particle: particle.parse().map_err(|_| err())?,
            axis: axis.parse().map_err(|_| err())?,
            side,
        })
    }
}

/// A uniformly spaced coordinate axis with nodes on both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
    pub spacing: f64,
}

impl Axis {
    fn new(lower: f64, upper: f64, nodes: usize) -> Self {
        Axis { lower, upper, nodes, spacing: (upper - lower) / (nodes - 1) as f64 }
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing
        }
    }

    /// Trapezoidal weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nodes {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    fn side_of(&self, i: usize) -> Option<Side> {
        if i == 0 {
            Some(Side::Lower)
        } else if i + 1 == self.nodes {
            Some(Side::Upper)
        } else {
            None
        }
    }
}

/// Registry entry for a node lying on one face. Nodes on several faces
/// (box corners, product-grid edges) appear once per face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEntry {
    pub node: usize,
    pub face: FaceId,
    /// Outward unit normal in the detected particle's coordinate space.
    pub normal: Vec<f64>,
    /// Trapezoidal surface weight on the face (product of the tangential weights).
    pub surface_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    particle_axes: Vec<Axis>,
    particle_count: usize,
    axes: Vec<Axis>,
    strides: Vec<usize>,
    weights: Vec<f64>,
    boundary: Vec<BoundaryEntry>,
}

/// Builds the grid for `spec` with `nodes_per_axis` nodes on every axis.
pub fn build_grid(spec: &DomainSpec, nodes_per_axis: usize) -> Result<Grid> {
    let extents = spec.validate()?;
    if nodes_per_axis < 3 {
        return Err(Error::TooFewNodes(nodes_per_axis));
    }
    let axes = extents.iter().map(|&(lo, hi)| Axis::new(lo, hi, nodes_per_axis)).collect();
    let base = Grid::from_particle_axes(axes, 1);
    Ok(if spec.kind == DomainKind::Product {
        build_product_grid(&base, spec.particle_count)?
    } else {
        base
    })
}

/// Tensor grid over `Ω^N` from a single-particle grid over `Ω`.
pub fn build_product_grid(base: &Grid, particles: usize) -> Result<Grid> {
    if base.particle_count != 1 {
        return Err(Error::InvalidDomain("product grids are built from a single-particle base".into()));
    }
    if particles == 0 {
        return Err(Error::InvalidDomain("particle count must be positive".into()));
    }
    Ok(Grid::from_particle_axes(base.particle_axes.clone(), particles))
}

impl Grid {
    fn from_particle_axes(particle_axes: Vec<Axis>, particle_count: usize) -> Self {
        let axes: Vec<Axis> =
            (0..particle_count).flat_map(|_| particle_axes.iter().cloned()).collect();
        let mut strides = vec![1usize; axes.len()];
        for a in (0..axes.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].nodes;
        }
        let n_nodes: usize = axes.iter().map(|a| a.nodes).product();
        let d = particle_axes.len();

        let mut weights = Vec::with_capacity(n_nodes);
        let mut boundary = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        for node in 0..n_nodes {
            let axis_w: Vec<f64> = axes.iter().zip(&idx).map(|(ax, &i)| ax.weight(i)).collect();
            weights.push(axis_w.iter().product());
            for (a, ax) in axes.iter().enumerate() {
                if let Some(side) = ax.side_of(idx[a]) {
                    let surface_weight = axis_w
                        .iter()
                        .enumerate()
                        .filter(|&(b, _)| b != a)
                        .map(|(_, w)| w)
                        .product();
                    let mut normal = vec![0.0; d];
                    normal[a % d] = side.sign();
                    boundary.push(BoundaryEntry {
                        node,
                        face: FaceId { particle: a / d, axis: a % d, side },
                        normal,
                        surface_weight,
                    });
                }
            }
            for a in (0..axes.len()).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].nodes {
                    break;
                }
                idx[a] = 0;
            }
        }
        Grid { particle_axes, particle_count, axes, strides, weights, boundary }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    /// Per-particle spatial dimension.
    pub fn dim(&self) -> usize {
        self.particle_axes.len()
    }

    /// Total configuration-space dimension `N·d`.
    pub fn total_dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn particle_axes(&self) -> &[Axis] {
        &self.particle_axes
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary(&self) -> &[BoundaryEntry] {
        &self.boundary
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.spacing).collect()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.upper - a.lower).product()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(&s, ax)| (node / s) % ax.nodes)
            .collect()
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node).iter().zip(&self.axes).map(|(&i, ax)| ax.coord(i)).collect()
    }

    /// Node index, in the single-particle grid, of particle `particle`'s position at `node`.
    pub fn particle_node(&self, node: usize, particle: usize) -> usize {
        let d = self.dim();
        let idx = self.multi_index(node);
        let sub = &idx[particle * d..(particle + 1) * d];
        sub.iter()
            .zip(&self.strides[self.axes.len() - d..])
            .map(|(i, s)| i * s)
            .sum()
    }

    /// The `k`-particle grid over the same single-particle domain.
    pub fn with_particles(&self, k: usize) -> Grid {
        Grid::from_particle_axes(self.particle_axes.clone(), k)
    }

    pub fn base(&self) -> Grid {
        self.with_particles(1)
    }

    /// True when both grids discretise the same domain with the same nodes.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.particle_count == other.particle_count && self.particle_axes == other.particle_axes
    }

    /// Is the node on a face of the given particle?
    pub fn on_particle_boundary(&self, node: usize, particle: usize) -> bool {
        let d = self.dim();
        let idx = self.multi_index(node);
        (0..d).any(|a| self.particle_axes[a].side_of(idx[particle * d + a]).is_some())
    }

    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        weighted_inner(&self.weights, a, b)
    }

    pub fn norm_sqr(&self, a: &[C64]) -> f64 {
        weighted_norm_sqr(&self.weights, a)
    }

    pub fn into_arc(self) -> Arc<Grid> {
        Arc::new(self)
    }
}

/// `Σ_n w_n conj(a_n) b_n`, with each weight repeated over `a.len() / w.len()` components.
pub fn weighted_inner(weights: &[f64], a: &[C64], b: &[C64]) -> C64 {
    let comps = a.len() / weights.len();
    a.chunks(comps)
        .zip(b.chunks(comps))
        .zip(weights)
        .map(|((x, y), &w)| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum::<C64>() * w)
        .sum()
}

pub fn weighted_norm_sqr(weights: &[f64], a: &[C64]) -> f64 {
    let comps = a.len() / weights.len();
    a.chunks(comps)
        .zip(weights)
        .map(|(x, &w)| w * x.iter().map(|p| p.norm_sqr()).sum::<f64>())
        .sum()
}
