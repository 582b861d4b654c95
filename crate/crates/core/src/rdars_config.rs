//! Mode-switching configurations of the RDARS grid.
//!
//! Each element of the `N_z × N_y` grid is either connected to the BS
//! (transmit/receive element) or works as a passive reflector. A
//! [`ModeConfig`] records the connected set and exposes the derived mode
//! matrix `A`, the selection matrix `Ã`, and the bounding blocks of both
//! element kinds. Placement and element-count rules for orthogonal connected
//! codebooks live here too.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Rectangular block of the grid: `rows` index the z axis, `cols` the y axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Block {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }
}

/// Mode configuration of an RDARS grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeConfig {
    n_z: usize,
    n_y: usize,
    spacing: f64,
    connected: Vec<usize>,
    reflection: bool,
}

impl ModeConfig {
    /// Builds a configuration from `(iz, iy)` grid coordinates of connected elements.
    pub fn new(n_z: usize, n_y: usize, spacing: f64, connected: &[(usize, usize)]) -> Result<Self> {
        if n_z == 0 || n_y == 0 {
            return Err(Error::InvalidDimension("grid must be at least 1x1".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidDimension("element spacing must be positive".into()));
        }
        let mut set = BTreeSet::new();
        for &(iz, iy) in connected {
            if iz >= n_z || iy >= n_y {
                return Err(Error::InvalidIndex(format!(
                    "({iz}, {iy}) outside {n_z}x{n_y} grid"
                )));
            }
            if !set.insert(iz * n_y + iy) {
                return Err(Error::InvalidIndex(format!("({iz}, {iy}) listed twice")));
            }
        }
        Ok(Self {
            n_z,
            n_y,
            spacing,
            connected: set.into_iter().collect(),
            reflection: true,
        })
    }

    /// All elements passive (`a = 0`).
    pub fn pure_ris(n_z: usize, n_y: usize, spacing: f64) -> Result<Self> {
        Self::new(n_z, n_y, spacing, &[])
    }

    /// All elements connected (`a = N`).
    pub fn pure_das(n_z: usize, n_y: usize, spacing: f64) -> Result<Self> {
        let all: Vec<_> = (0..n_z).flat_map(|iz| (0..n_y).map(move |iy| (iz, iy))).collect();
        Self::new(n_z, n_y, spacing, &all)
    }

    /// Connects the rows and columns of a placement (their Cartesian product).
    pub fn from_placement(n_z: usize, n_y: usize, spacing: f64, placement: &Placement) -> Result<Self> {
        let pairs: Vec<_> = placement
            .rows
            .iter()
            .flat_map(|&r| placement.cols.iter().map(move |&c| (r, c)))
            .collect();
        Self::new(n_z, n_y, spacing, &pairs)
    }

    /// Returns a copy with passive reflection switched on or off.
    ///
    /// With reflection off the passive elements contribute nothing (`G = 0`),
    /// which models a plain distributed-antenna deployment.
    pub fn with_reflection(mut self, enabled: bool) -> Self {
        self.reflection = enabled;
        self
    }

    pub fn reflection_enabled(&self) -> bool {
        self.reflection
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n(&self) -> usize {
        self.n_z * self.n_y
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of connected elements.
    pub fn a(&self) -> usize {
        self.connected.len()
    }

    /// Number of passive elements.
    pub fn b(&self) -> usize {
        self.n() - self.a()
    }

    /// Passive elements that actually reflect (zero when reflection is off).
    pub fn reflecting_count(&self) -> usize {
        if self.reflection {
            self.b()
        } else {
            0
        }
    }

    /// Sorted flat indices (`iz * N_y + iy`) of the connected elements.
    pub fn connected_indices(&self) -> &[usize] {
        &self.connected
    }

    pub fn is_connected(&self, flat: usize) -> bool {
        self.connected.binary_search(&flat).is_ok()
    }

    /// Distinct z rows that hold at least one connected element.
    pub fn connected_rows(&self) -> Vec<usize> {
        let set: BTreeSet<_> = self.connected.iter().map(|&i| i / self.n_y).collect();
        set.into_iter().collect()
    }

    /// Distinct y columns that hold at least one connected element.
    pub fn connected_cols(&self) -> Vec<usize> {
        let set: BTreeSet<_> = self.connected.iter().map(|&i| i % self.n_y).collect();
        set.into_iter().collect()
    }

    pub fn a_z(&self) -> usize {
        self.connected_rows().len()
    }

    pub fn a_y(&self) -> usize {
        self.connected_cols().len()
    }

    /// z coordinate (meters) of grid row `iz`.
    pub fn z_coord(&self, iz: usize) -> f64 {
        iz as f64 * self.spacing
    }

    /// y coordinate (meters) of grid column `iy`.
    pub fn y_coord(&self, iy: usize) -> f64 {
        iy as f64 * self.spacing
    }

    /// Bounding box of the connected elements, if any.
    pub fn connected_block(&self) -> Option<Block> {
        let rows = self.connected_rows();
        let cols = self.connected_cols();
        Some(Block {
            rows: *rows.first()?..rows.last()? + 1,
            cols: *cols.first()?..cols.last()? + 1,
        })
    }

    /// Bounding box of the passive elements, if any.
    pub fn passive_block(&self) -> Option<Block> {
        let passive = (0..self.n()).filter(|&i| !self.is_connected(i));
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        let mut any = false;
        for i in passive {
            any = true;
            let (r, c) = (i / self.n_y, i % self.n_y);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
        any.then(|| Block {
            rows: r0..r1 + 1,
            cols: c0..c1 + 1,
        })
    }

    /// Per-element reflection gate: the diagonal of `I − A`, or all zeros when
    /// reflection is disabled.
    pub fn passive_gate(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                if self.reflection && !self.is_connected(i) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// The diagonal 0/1 mode-switching matrix `A`.
    pub fn mode_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n(), self.n());
        for &i in &self.connected {
            a[(i, i)] = 1.0;
        }
        a
    }

    /// The `N × a` selection matrix `Ã` whose columns pick the connected elements.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n(), self.a());
        for (col, &i) in self.connected.iter().enumerate() {
            s[(i, col)] = 1.0;
        }
        s
    }
}

/// A uniform-stride placement of connected rows and columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    /// Row stride along z.
    pub q: usize,
    /// Column stride along y.
    pub p: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Strides that keep a uniform `count`-element set orthogonal within an
/// `n`-element axis: `1 ≤ s ≤ ⌊(n−1)/(count−1)⌋` and `gcd(s, count) = 1`.
///
/// A single element has no spacing, so `count = 1` admits stride 1 only.
pub fn admissible_strides(n: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > n {
        return Err(Error::Infeasible(format!(
            "{count} connected elements on an axis of {n}"
        )));
    }
    if count == 1 {
        return Ok(vec![1]);
    }
    let max = (n - 1) / (count - 1);
    Ok((1..=max).filter(|&s| gcd(s, count) == 1).collect())
}

/// Enumerates all orthogonal uniform-stride placements, each anchored at row
/// and column 0. Ordered by `q` then `p`.
pub fn placement_candidates(n_z: usize, n_y: usize, a_z: usize, a_y: usize) -> Result<Vec<Placement>> {
    let qs = admissible_strides(n_z, a_z)?;
    let ps = admissible_strides(n_y, a_y)?;
    let mut out = Vec::with_capacity(qs.len() * ps.len());
    for &q in &qs {
        for &p in &ps {
            out.push(Placement {
                q,
                p,
                rows: (0..a_z).map(|i| i * q).collect(),
                cols: (0..a_y).map(|i| i * p).collect(),
            });
        }
    }
    Ok(out)
}

/// Minimum transmit-element counts that avoid beam conflicts among `K` users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementCountBound {
    pub a_z_min: usize,
    pub a_y_min: usize,
    pub a_s_th: usize,
}

fn axis_minimum(k: usize, angles: &[f64], axis: &str) -> Result<usize> {
    if angles.len() != k {
        return Err(Error::InvalidDimension(format!(
            "{} {axis} angles for {k} users",
            angles.len()
        )));
    }
    if let Some(bad) = angles.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::Geometry(format!("{axis} angle {bad} outside [-1, 1]")));
    }
    if k == 1 {
        return Ok(1);
    }
    let mut sep = f64::INFINITY;
    for m in 0..k {
        for n in m + 1..k {
            sep = sep.min((angles[m] - angles[n]).abs());
        }
    }
    if sep == 0.0 {
        return Err(Error::Infeasible(format!("two users share a {axis} angle")));
    }
    let coverage = (2.0 / sep - 1e-9).ceil() as usize;
    Ok(k.max(coverage))
}

/// Smallest per-axis transmit-element counts whose connected beams separate
/// every pair of users, and their product `a_S,th`.
pub fn min_transmit_elements(k: usize, vtilde: &[f64], v: &[f64]) -> Result<ElementCountBound> {
    if k == 0 {
        return Err(Error::InvalidDimension("at least one user is required".into()));
    }
    let a_z_min = axis_minimum(k, vtilde, "z")?;
    let a_y_min = axis_minimum(k, v, "y")?;
    Ok(ElementCountBound {
        a_z_min,
        a_y_min,
        a_s_th: a_z_min * a_y_min,
    })
}
