//! Codebooks: passive and connected reconfigurable books, fixed DFT books for
//! the BS and UEs, and DEACT hierarchies for beam training.
//!
//! Codeword entries are always steering phases evaluated at absolute element
//! coordinates, so a codeword conjugate-matches the channel steering at its
//! own direction. Spatial directions sit at bin centres `−1 + (2i+1)/ϱ`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::channel::reconfigurable_steering;
use crate::rdars_config::{Block, ModeConfig};
use crate::{CVector, Error, Result, C64};

/// Role of a codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    Passive2d,
    Connected2d,
    Bs,
    Ue,
    Hierarchical,
}

/// Which coordinates a reconfigurable book is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateLayout {
    /// Actual element positions (reconfigurable codebook).
    Reconfigurable,
    /// Contiguous positions `0, d, 2d, …` regardless of placement (fixed codebook).
    Fixed,
}

/// One codeword with its spatial direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub vec: CVector,
    pub dir_z: f64,
    /// Zero for one-dimensional books.
    pub dir_y: f64,
    pub index: usize,
}

/// An ordered set of codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub kind: CodebookKind,
    pub words: Vec<Codeword>,
    pub resolution_z: usize,
    pub resolution_y: usize,
    /// Element index of each codeword entry (flat grid index for 2D books).
    pub support: Vec<usize>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Scatters codeword `idx` onto an `n`-element vector. Positions outside
    /// the support and masked (zero) entries take `fill`.
    pub fn expand(&self, idx: usize, n: usize, fill: C64) -> CVector {
        let mut out = CVector::from_element(n, fill);
        for (j, &e) in self.support.iter().enumerate() {
            let v = self.words[idx].vec[j];
            if v != C64::new(0.0, 0.0) {
                out[e] = v;
            }
        }
        out
    }
}

/// Bin-centre direction of beam `i` out of `resolution`.
pub fn grid_direction(i: usize, resolution: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / resolution as f64
}

/// Wraps a virtual angle into `[−1, 1)` (half-wavelength aliasing).
pub fn wrap_angle(v: f64) -> f64 {
    let w = (v + 1.0).rem_euclid(2.0) - 1.0;
    if w >= 1.0 {
        w - 2.0
    } else {
        w
    }
}

/// Passive 2D book over a block: `ϱ_z·ϱ_y` unit-modulus codewords, zeroed where
/// `mask` is false (connected elements). Codewords are ordered z-major.
pub fn build_passive_rcb_2d(
    coords_z: &[f64],
    coords_y: &[f64],
    mask: &[bool],
    res_z: usize,
    res_y: usize,
    wavelength: f64,
) -> Result<Codebook> {
    let (nz, ny) = (coords_z.len(), coords_y.len());
    if nz == 0 || ny == 0 {
        return Err(Error::InvalidDimension("passive block is empty".into()));
    }
    if mask.len() != nz * ny {
        return Err(Error::InvalidDimension(format!(
            "mask has {} entries for a {nz}x{ny} block",
            mask.len()
        )));
    }
    if res_z < nz {
        return Err(Error::OversamplingViolation {
            resolution: res_z,
            elements: nz,
        });
    }
    if res_y < ny {
        return Err(Error::OversamplingViolation {
            resolution: res_y,
            elements: ny,
        });
    }
    let fz: Vec<CVector> = (0..res_z)
        .map(|i| reconfigurable_steering(coords_z, grid_direction(i, res_z), wavelength))
        .collect::<Result<_>>()?;
    let fy: Vec<CVector> = (0..res_y)
        .map(|i| reconfigurable_steering(coords_y, grid_direction(i, res_y), wavelength))
        .collect::<Result<_>>()?;
    let mut words = Vec::with_capacity(res_z * res_y);
    for (iz, zf) in fz.iter().enumerate() {
        for (iy, yf) in fy.iter().enumerate() {
            let mut v = zf.kronecker(yf);
            for (e, keep) in v.iter_mut().zip(mask) {
                if !keep {
                    *e = C64::new(0.0, 0.0);
                }
            }
            words.push(Codeword {
                vec: v,
                dir_z: grid_direction(iz, res_z),
                dir_y: grid_direction(iy, res_y),
                index: words.len(),
            });
        }
    }
    Ok(Codebook {
        kind: CodebookKind::Passive2d,
        words,
        resolution_z: res_z,
        resolution_y: res_y,
        support: (0..nz * ny).collect(),
    })
}

/// Connected 2D book over the product of the given axis coordinates.
///
/// `present` optionally marks which `(z, y)` pairs hold a connected element
/// (z-major); entries for absent pairs are dropped, so codewords have one
/// entry per connected element and norm one. The resolution must equal the
/// axis count on each axis.
pub fn build_connected_rcb(
    coords_z: &[f64],
    coords_y: &[f64],
    present: Option<&[bool]>,
    res_z: usize,
    res_y: usize,
    wavelength: f64,
) -> Result<Codebook> {
    let (a_z, a_y) = (coords_z.len(), coords_y.len());
    if a_z == 0 || a_y == 0 {
        return Err(Error::InvalidDimension("connected block is empty".into()));
    }
    if res_z != a_z {
        return Err(Error::ResolutionMismatch {
            resolution: res_z,
            active: a_z,
        });
    }
    if res_y != a_y {
        return Err(Error::ResolutionMismatch {
            resolution: res_y,
            active: a_y,
        });
    }
    let full = vec![true; a_z * a_y];
    let present = present.unwrap_or(&full);
    if present.len() != a_z * a_y {
        return Err(Error::InvalidDimension("presence mask does not match the axes".into()));
    }
    let a = present.iter().filter(|&&p| p).count();
    if a == 0 {
        return Err(Error::InvalidDimension("no connected element present".into()));
    }
    let scale = 1.0 / (a as f64).sqrt();
    let mut words = Vec::with_capacity(a_z * a_y);
    for iz in 0..a_z {
        let dz = grid_direction(iz, a_z);
        let zf = reconfigurable_steering(coords_z, dz, wavelength)?;
        for iy in 0..a_y {
            let dy = grid_direction(iy, a_y);
            let yf = reconfigurable_steering(coords_y, dy, wavelength)?;
            let full = zf.kronecker(&yf);
            let entries = full.iter().zip(present).filter(|(_, &p)| p).map(|(v, _)| v * scale);
            words.push(Codeword {
                vec: CVector::from_iterator(a, entries),
                dir_z: dz,
                dir_y: dy,
                index: words.len(),
            });
        }
    }
    Ok(Codebook {
        kind: CodebookKind::Connected2d,
        words,
        resolution_z: res_z,
        resolution_y: res_y,
        support: (0..a).collect(),
    })
}

fn layout_coords(indices: &[usize], spacing: f64, layout: CoordinateLayout) -> Vec<f64> {
    match layout {
        CoordinateLayout::Reconfigurable => indices.iter().map(|&i| i as f64 * spacing).collect(),
        CoordinateLayout::Fixed => {
            let first = indices.first().copied().unwrap_or(0);
            (0..indices.len()).map(|i| (first + i) as f64 * spacing).collect()
        }
    }
}

/// Connected book for a mode: one entry per connected element, in ascending
/// flat-index order, with `support` set to those flat indices.
pub fn connected_rcb_for_mode(mode: &ModeConfig, wavelength: f64, layout: CoordinateLayout) -> Result<Codebook> {
    let rows = mode.connected_rows();
    let cols = mode.connected_cols();
    if rows.is_empty() {
        return Ok(Codebook {
            kind: CodebookKind::Connected2d,
            words: Vec::new(),
            resolution_z: 0,
            resolution_y: 0,
            support: Vec::new(),
        });
    }
    let present: Vec<bool> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .map(|(r, c)| mode.is_connected(r * mode.n_y() + c))
        .collect();
    let cz = layout_coords(&rows, mode.spacing(), layout);
    let cy = layout_coords(&cols, mode.spacing(), layout);
    let mut book = build_connected_rcb(&cz, &cy, Some(&present), rows.len(), cols.len(), wavelength)?;
    book.support = mode.connected_indices().to_vec();
    Ok(book)
}

/// Passive book over the mode's passive block, with `support` set to the
/// block's flat grid indices.
pub fn passive_rcb_for_mode(
    mode: &ModeConfig,
    res_z: usize,
    res_y: usize,
    wavelength: f64,
    layout: CoordinateLayout,
) -> Result<Codebook> {
    let block = mode
        .passive_block()
        .ok_or_else(|| Error::InvalidDimension("mode has no passive elements".into()))?;
    let rows: Vec<usize> = block.rows.clone().collect();
    let cols: Vec<usize> = block.cols.clone().collect();
    let (support, mask) = block_support(mode, &block);
    let cz = layout_coords(&rows, mode.spacing(), layout);
    let cy = layout_coords(&cols, mode.spacing(), layout);
    let mut book = build_passive_rcb_2d(&cz, &cy, &mask, res_z, res_y, wavelength)?;
    book.support = support;
    Ok(book)
}

fn block_support(mode: &ModeConfig, block: &Block) -> (Vec<usize>, Vec<bool>) {
    let mut support = Vec::with_capacity(block.n_rows() * block.n_cols());
    let mut mask = Vec::with_capacity(support.capacity());
    for r in block.rows.clone() {
        for c in block.cols.clone() {
            let flat = r * mode.n_y() + c;
            support.push(flat);
            mask.push(!mode.is_connected(flat));
        }
    }
    (support, mask)
}

/// Unit-norm oversampled DFT book for a uniform linear array.
pub fn build_dft_codebook(n: usize, spacing: f64, resolution: usize, wavelength: f64, kind: CodebookKind) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::InvalidDimension("array needs at least one element".into()));
    }
    if resolution < n {
        return Err(Error::OversamplingViolation {
            resolution,
            elements: n,
        });
    }
    let coords: Vec<f64> = (0..n).map(|m| m as f64 * spacing).collect();
    let scale = C64::from(1.0 / (n as f64).sqrt());
    let words = (0..resolution)
        .map(|i| {
            let dir = grid_direction(i, resolution);
            Ok(Codeword {
                vec: reconfigurable_steering(&coords, dir, wavelength)? * scale,
                dir_z: dir,
                dir_y: 0.0,
                index: i,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Codebook {
        kind,
        words,
        resolution_z: resolution,
        resolution_y: 1,
        support: (0..n).collect(),
    })
}

/// DEACT hierarchy: layer `l` (1-based) holds `M^l` unit-norm beams that
/// activate the first `M^l` elements and steer to the layer's bin centres.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalCodebook {
    pub branching: usize,
    pub n: usize,
    /// `layers[l - 1]` is layer `l`.
    pub layers: Vec<Codebook>,
}

impl HierarchicalCodebook {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn bottom(&self) -> &Codebook {
        self.layers.last().expect("hierarchy has at least one layer")
    }

    /// Indices in layer `layer` of the children of `parent` from the layer above.
    /// For the first layer the parent is the implicit root and `parent` is ignored.
    pub fn children(&self, layer: usize, parent: usize) -> std::ops::Range<usize> {
        if layer == 0 {
            0..self.layers[0].len()
        } else if self.n == 1 {
            0..1
        } else {
            parent * self.branching..(parent + 1) * self.branching
        }
    }
}

fn layer_count(n: usize, m: usize) -> Result<usize> {
    if m < 2 {
        return Err(Error::InvalidDimension("branching factor must be at least 2".into()));
    }
    if n == 0 {
        return Err(Error::InvalidDimension("array needs at least one element".into()));
    }
    let mut layers = 0;
    let mut size = 1;
    while size < n {
        size *= m;
        layers += 1;
    }
    if size != n {
        return Err(Error::InvalidDimension(format!("{n} is not a power of {m}")));
    }
    Ok(layers)
}

/// Hierarchy over arbitrary coordinates; the bottom layer is the full-aperture
/// book with one beam per element.
pub fn build_hierarchical_on(coords: &[f64], m: usize, wavelength: f64) -> Result<HierarchicalCodebook> {
    let n = coords.len();
    let depth = layer_count(n, m)?;
    let mut layers = Vec::with_capacity(depth.max(1));
    if depth == 0 {
        layers.push(Codebook {
            kind: CodebookKind::Hierarchical,
            words: vec![Codeword {
                vec: CVector::from_element(1, C64::new(1.0, 0.0)),
                dir_z: 0.0,
                dir_y: 0.0,
                index: 0,
            }],
            resolution_z: 1,
            resolution_y: 1,
            support: vec![0],
        });
    }
    for l in 1..=depth {
        let beams = m.pow(l as u32);
        let scale = 1.0 / (beams as f64).sqrt();
        let words = (0..beams)
            .map(|f| {
                let dir = grid_direction(f, beams);
                let active = reconfigurable_steering(&coords[..beams], dir, wavelength)?;
                let mut v = CVector::zeros(n);
                for j in 0..beams {
                    v[j] = active[j] * scale;
                }
                Ok(Codeword {
                    vec: v,
                    dir_z: dir,
                    dir_y: 0.0,
                    index: f,
                })
            })
            .collect::<Result<_>>()?;
        layers.push(Codebook {
            kind: CodebookKind::Hierarchical,
            words,
            resolution_z: beams,
            resolution_y: 1,
            support: (0..n).collect(),
        });
    }
    Ok(HierarchicalCodebook {
        branching: m,
        n,
        layers,
    })
}

/// Hierarchy for a uniform linear array of `n` elements.
pub fn build_hierarchical_codebook(n: usize, spacing: f64, m: usize, wavelength: f64) -> Result<HierarchicalCodebook> {
    let coords: Vec<f64> = (0..n).map(|i| i as f64 * spacing).collect();
    build_hierarchical_on(&coords, m, wavelength)
}

/// Receive hierarchy for the passive block: per-axis DEACT hierarchies whose
/// Kronecker products are masked at connected positions. Codeword entries are
/// unit-modulus on active elements.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarHierarchy {
    pub z: HierarchicalCodebook,
    pub y: HierarchicalCodebook,
    /// Flat grid index of each block entry.
    pub support: Vec<usize>,
    /// True where the block element is passive.
    pub mask: Vec<bool>,
}

impl PlanarHierarchy {
    /// Builds the hierarchy over the passive block of `mode`.
    pub fn for_passive_block(mode: &ModeConfig, m: usize, wavelength: f64) -> Result<Self> {
        let block = mode
            .passive_block()
            .ok_or_else(|| Error::InvalidDimension("mode has no passive elements".into()))?;
        let rows: Vec<usize> = block.rows.clone().collect();
        let cols: Vec<usize> = block.cols.clone().collect();
        let z = build_hierarchical_on(&layout_coords(&rows, mode.spacing(), CoordinateLayout::Reconfigurable), m, wavelength)?;
        let y = build_hierarchical_on(&layout_coords(&cols, mode.spacing(), CoordinateLayout::Reconfigurable), m, wavelength)?;
        let (support, mask) = block_support(mode, &block);
        Ok(Self { z, y, support, mask })
    }

    /// Number of descent steps (the deeper of the two axes).
    pub fn depth(&self) -> usize {
        self.z.depth().max(self.y.depth())
    }

    /// Masked, unit-modulus receive beam for per-axis layer/beam indices
    /// (layers are 0-based positions in each axis hierarchy).
    pub fn word(&self, lz: usize, iz: usize, ly: usize, iy: usize) -> CVector {
        let zw = &self.z.layers[lz];
        let yw = &self.y.layers[ly];
        let sz = (zw.resolution_z as f64).sqrt();
        let sy = (yw.resolution_z as f64).sqrt();
        let mut v = zw.words[iz].vec.kronecker(&yw.words[iy].vec) * C64::from(sz * sy);
        for (e, keep) in v.iter_mut().zip(&self.mask) {
            if !keep {
                *e = C64::new(0.0, 0.0);
            }
        }
        v
    }

    /// The bottom layer as a flat passive-style book (z-major).
    pub fn bottom_book(&self) -> Codebook {
        let (lz, ly) = (self.z.depth() - 1, self.y.depth() - 1);
        let (rz, ry) = (self.z.bottom().len(), self.y.bottom().len());
        let mut words = Vec::with_capacity(rz * ry);
        for iz in 0..rz {
            for iy in 0..ry {
                words.push(Codeword {
                    vec: self.word(lz, iz, ly, iy),
                    dir_z: self.z.bottom().words[iz].dir_z,
                    dir_y: self.y.bottom().words[iy].dir_z,
                    index: words.len(),
                });
            }
        }
        Codebook {
            kind: CodebookKind::Passive2d,
            words,
            resolution_z: rz,
            resolution_y: ry,
            support: self.support.clone(),
        }
    }
}

/// Codeword closest to `target` in Euclidean distance after the best common
/// phase rotation, `min_θ ‖c − e^{jθ}·t‖² = ‖c‖² + ‖t‖² − 2|c^H t|`. A common
/// phase leaves every SINR unchanged. Ties go to the lowest index.
pub fn nearest_codeword<'a>(book: &'a Codebook, target: &CVector) -> Result<&'a Codeword> {
    let first = book.words.first().ok_or(Error::EmptyCodebook)?;
    if first.vec.len() != target.len() {
        return Err(Error::InvalidDimension(format!(
            "target has {} entries, codewords have {}",
            target.len(),
            first.vec.len()
        )));
    }
    let tn = target.norm_squared();
    let dist = |w: &Codeword| (w.vec.norm_squared() + tn - 2.0 * w.vec.dotc(target).norm()).max(0.0);
    let scale = first.vec.norm_squared() + tn;
    let mut best = first;
    let mut best_d = dist(first);
    for w in &book.words[1..] {
        let d = dist(w);
        if d < best_d - 1e-12 * scale {
            best = w;
            best_d = d;
        }
    }
    Ok(best)
}

/// Normalized pairwise correlations `|c_i^H c_j| / (‖c_i‖‖c_j‖)`.
pub fn correlation_matrix(book: &Codebook) -> DMatrix<f64> {
    let n = book.len();
    let norms: Vec<f64> = book.words.iter().map(|w| w.vec.norm()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let d = norms[i] * norms[j];
        if d == 0.0 {
            0.0
        } else {
            book.words[i].vec.dotc(&book.words[j].vec).norm() / d
        }
    })
}

/// Largest off-diagonal normalized correlation; zero for an orthogonal book.
pub fn check_orthogonality(book: &Codebook) -> f64 {
    let c = correlation_matrix(book);
    let mut worst = 0.0f64;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            if i != j {
                worst = worst.max(c[(i, j)]);
            }
        }
    }
    worst
}

/// Writes one text row per codeword: index, ξ_z, ξ_y, then interleaved re/im entries.
pub fn dump_codebook<W: Write>(book: &Codebook, mut out: W) -> Result<()> {
    for w in &book.words {
        write!(out, "{} {:e} {:e}", w.index, w.dir_z, w.dir_y)?;
        for e in w.vec.iter() {
            write!(out, " {:e} {:e}", e.re, e.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
