//! Uniform 1D/2D grids, centered difference stencils, discrete Hölder and
//! Lipschitz seminorms, boundary-layer node selection and grid-function I/O.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoxDomain;
use crate::operators::SymMatrix;

/// Uniform tensor grid; node `(i, j)` has flat index `i + nx·j` (x fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    counts: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    spacing: Vec<f64>,
}

impl UniformGrid {
    pub fn new(counts: &[usize], lower: &[f64], upper: &[f64]) -> Result<Self> {
        let dim = counts.len();
        if !(1..=2).contains(&dim) || lower.len() != dim || upper.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "need 1 or 2 axes with matching bounds, got counts {counts:?}"
            )));
        }
        if counts.iter().any(|&c| c < 3) {
            return Err(Error::InvalidGrid(format!("need ≥ 3 nodes per axis, got {counts:?}")));
        }
        if lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
            return Err(Error::InvalidGrid(format!("empty extent {lower:?} / {upper:?}")));
        }
        let spacing = (0..dim)
            .map(|k| (upper[k] - lower[k]) / (counts[k] - 1) as f64)
            .collect();
        Ok(Self {
            counts: counts.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            spacing,
        })
    }

    /// Grid on `domain` with spacing as close as possible to `h` on every axis.
    pub fn with_spacing(domain: &BoxDomain, h: f64) -> Result<Self> {
        let counts: Vec<usize> = (0..domain.dim())
            .map(|k| ((domain.upper[k] - domain.lower[k]) / h).round() as usize + 1)
            .collect();
        Self::new(&counts, &domain.lower, &domain.upper)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest spacing over the axes.
    pub fn h(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        let nx = self.counts[0];
        [node % nx, node / nx]
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.counts[0] * idx[1]
    }

    pub fn point(&self, node: usize) -> [f64; 2] {
        let m = self.multi_index(node);
        let mut p = [0.0; 2];
        for k in 0..self.dim() {
            p[k] = self.lower[k] + m[k] as f64 * self.spacing[k];
        }
        p
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.point(node)[..self.dim()].to_vec()
    }

    pub fn is_interior(&self, node: usize) -> bool {
        let m = self.multi_index(node);
        (0..self.dim()).all(|k| m[k] >= 1 && m[k] + 1 < self.counts[k])
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.is_interior(n)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| !self.is_interior(n)).collect()
    }

    /// Flat offset of the neighbour one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.counts[0]
        }
    }

    pub fn distance_to_boundary(&self, node: usize) -> f64 {
        let p = self.point(node);
        self.domain().distance(&p[..self.dim()])
    }

    pub fn sample(&self, rule: impl Fn(&[f64]) -> f64) -> GridFunction {
        let values = (0..self.len()).map(|n| rule(&self.coords(n))).collect();
        GridFunction {
            grid: self.clone(),
            values,
        }
    }
}

/// Gradient or other small vector attached to a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridVector {
    pub dim: usize,
    pub comps: [f64; 2],
}

impl GridVector {
    pub fn new(comps: &[f64]) -> Self {
        let mut c = [0.0; 2];
        c[..comps.len()].copy_from_slice(comps);
        Self { dim: comps.len(), comps: c }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.comps[..self.dim]
    }

    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.as_slice().iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn distance(&self, other: &GridVector) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Scalar field sampled at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Value at a physical point that must coincide with a node (within h/1000).
    pub fn value_at(&self, point: &[f64]) -> Option<f64> {
        let g = &self.grid;
        let mut idx = [0usize; 2];
        for k in 0..g.dim() {
            let t = (point[k] - g.lower[k]) / g.spacing[k];
            let r = t.round();
            if (t - r).abs() > 1e-3 || r < 0.0 || r as usize >= g.counts[k] {
                return None;
            }
            idx[k] = r as usize;
        }
        Some(self.values[g.flat_index(idx)])
    }

    /// CSV with header `x[,y],value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header = if self.grid.dim() == 1 { "x,value" } else { "x,y,value" };
        writeln!(w, "{header}")?;
        for (n, v) in self.values.iter().enumerate() {
            let p = self.grid.point(n);
            if self.grid.dim() == 1 {
                writeln!(w, "{:?},{:?}", p[0], v)?;
            } else {
                writeln!(w, "{:?},{:?},{:?}", p[0], p[1], v)?;
            }
        }
        Ok(())
    }

    /// Binary snapshot: `dim` (u64), node counts (u64 each), bounds as
    /// `lower_k, upper_k` pairs (f64), then row-major values (f64); all
    /// little-endian.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        w.write_all(&(g.dim() as u64).to_le_bytes())?;
        for &c in &g.counts {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for k in 0..g.dim() {
            w.write_all(&g.lower[k].to_le_bytes())?;
            w.write_all(&g.upper[k].to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let dim = next_u64(&mut r)? as usize;
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("snapshot dimension {dim}")));
        }
        let counts: Vec<usize> = (0..dim).map(|_| next_u64(&mut r).map(|c| c as usize)).collect::<Result<_>>()?;
        let mut lower = vec![0.0; dim];
        let mut upper = vec![0.0; dim];
        for k in 0..dim {
            lower[k] = f64::from_bits(next_u64(&mut r)?);
            upper[k] = f64::from_bits(next_u64(&mut r)?);
        }
        let grid = UniformGrid::new(&counts, &lower, &upper)?;
        let values = (0..grid.len())
            .map(|_| next_u64(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        GridFunction::new(grid, values)
    }
}

// ---- stencils on raw node values -------------------------------------------

pub(crate) fn gradient_raw(grid: &UniformGrid, values: &[f64], node: usize) -> GridVector {
    let mut g = GridVector {
        dim: grid.dim(),
        comps: [0.0; 2],
    };
    for k in 0..grid.dim() {
        let s = grid.stride(k);
        g.comps[k] = (values[node + s] - values[node - s]) / (2.0 * grid.spacing[k]);
    }
    g
}

pub(crate) fn hessian_raw(grid: &UniformGrid, values: &[f64], node: usize) -> SymMatrix {
    let dim = grid.dim();
    let mut m = SymMatrix::zeros(dim).expect("grid dimension is 1 or 2");
    let c = values[node];
    for k in 0..dim {
        let s = grid.stride(k);
        let h = grid.spacing[k];
        m.set(k, k, (values[node + s] - 2.0 * c + values[node - s]) / (h * h));
    }
    if dim == 2 {
        let (sx, sy) = (grid.stride(0), grid.stride(1));
        let cross = (values[node + sx + sy] - values[node + sx - sy] - values[node - sx + sy]
            + values[node - sx - sy])
            / (4.0 * grid.spacing[0] * grid.spacing[1]);
        m.set(0, 1, cross);
    }
    m
}

/// Centered-difference gradient at an interior node.
pub fn gradient(u: &GridFunction, node: usize) -> Result<GridVector> {
    if node >= u.grid.len() || !u.grid.is_interior(node) {
        return Err(Error::BoundaryNode(node));
    }
    Ok(gradient_raw(&u.grid, &u.values, node))
}

/// Second differences on the diagonal, four-corner stencil for the cross term.
pub fn hessian(u: &GridFunction, node: usize) -> Result<SymMatrix> {
    if node >= u.grid.len() || !u.grid.is_interior(node) {
        return Err(Error::BoundaryNode(node));
    }
    Ok(hessian_raw(&u.grid, &u.values, node))
}

// ---- seminorms ---------------------------------------------------------------

/// Axis-aligned subregion (closed, with a small tolerance on the bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn whole(grid: &UniformGrid) -> Self {
        Self {
            lower: grid.lower.clone(),
            upper: grid.upper.clone(),
        }
    }

    /// Centered box whose side lengths are `fraction` of the grid's.
    pub fn inner(grid: &UniformGrid, fraction: f64) -> Self {
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for k in 0..grid.dim() {
            let mid = 0.5 * (grid.lower[k] + grid.upper[k]);
            let half = 0.5 * fraction * (grid.upper[k] - grid.lower[k]);
            lower.push(mid - half);
            upper.push(mid + half);
        }
        Self { lower, upper }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }
}

/// Vector values attached to a subset of nodes (e.g. a stencil gradient,
/// which only exists at interior nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: UniformGrid,
    pub nodes: Vec<usize>,
    pub values: Vec<GridVector>,
}

impl VectorField {
    pub fn from_scalar(u: &GridFunction) -> Self {
        Self {
            grid: u.grid.clone(),
            nodes: (0..u.grid.len()).collect(),
            values: u.values.iter().map(|&v| GridVector::new(&[v])).collect(),
        }
    }

    pub fn gradient_of(u: &GridFunction) -> Self {
        let nodes = u.grid.interior_nodes();
        let values = nodes.iter().map(|&n| gradient_raw(&u.grid, &u.values, n)).collect();
        Self {
            grid: u.grid.clone(),
            nodes,
            values,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            for x in &mut v.comps {
                *x *= c;
            }
        }
        out
    }
}

/// Node-pair cap for exhaustive seminorm evaluation.
pub const SEMINORM_NODE_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub value: f64,
    pub gamma: f64,
    pub nodes_in_region: usize,
    pub nodes_used: usize,
    pub stride: usize,
    pub node_cap: usize,
}

/// `max |v(x) − v(y)| / |x − y|^γ` over node pairs in `region`.
pub fn holder_seminorm(field: &VectorField, gamma: f64, region: &Region) -> Result<SeminormReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::OutOfRange {
            what: "gamma",
            detail: format!("need γ ∈ (0, 1], got {gamma}"),
        });
    }
    let tol = 1e-9 * field.grid.h();
    let selected: Vec<(Vec<f64>, GridVector)> = field
        .nodes
        .iter()
        .zip(&field.values)
        .filter_map(|(&n, v)| {
            let p = field.grid.coords(n);
            region.contains(&p, tol).then_some((p, *v))
        })
        .collect();
    if selected.len() < 2 {
        return Err(Error::EmptyRegion(selected.len()));
    }
    let stride = selected.len().div_ceil(SEMINORM_NODE_CAP);
    let used: Vec<&(Vec<f64>, GridVector)> = selected.iter().step_by(stride).collect();
    let mut best: f64 = 0.0;
    for (i, (p, v)) in used.iter().enumerate() {
        for (q, w) in &used[i + 1..] {
            let dist = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            best = best.max(v.distance(w) / dist.powf(gamma));
        }
    }
    Ok(SeminormReport {
        value: best,
        gamma,
        nodes_in_region: selected.len(),
        nodes_used: used.len(),
        stride,
        node_cap: SEMINORM_NODE_CAP,
    })
}

pub fn lipschitz_seminorm(u: &GridFunction, region: &Region) -> Result<SeminormReport> {
    holder_seminorm(&VectorField::from_scalar(u), 1.0, region)
}

/// Interior nodes with `d(x) ∈ [offset, 2·offset]`, away from the medial axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayer {
    pub offset: f64,
    pub nodes: Vec<usize>,
}

impl BoundaryLayer {
    pub fn new(grid: &UniformGrid, offset: f64) -> Result<Self> {
        if !(offset > 0.0) {
            return Err(Error::OutOfRange {
                what: "layer offset",
                detail: format!("need δ > 0, got {offset}"),
            });
        }
        let nodes = layer_nodes(grid, offset, 2.0 * offset);
        if nodes.is_empty() {
            return Err(Error::EmptyRegion(0));
        }
        Ok(Self { offset, nodes })
    }
}

/// Interior nodes with `d ∈ [d_min, d_max]` whose nearest face is unambiguous
/// (second-nearest face at least one spacing farther).
pub fn layer_nodes(grid: &UniformGrid, d_min: f64, d_max: f64) -> Vec<usize> {
    let domain = grid.domain();
    let tol = 1e-9 * grid.h();
    grid.interior_nodes()
        .into_iter()
        .filter(|&n| {
            let p = grid.coords(n);
            let d = domain.distance(&p);
            let (_, gap) = domain.nearest_face(&p);
            d >= d_min - tol && d <= d_max + tol && (grid.dim() == 1 || gap >= grid.h() - tol)
        })
        .collect()
}
