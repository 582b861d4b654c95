//! Space-division branch: all UEs are served at once.
//!
//! BS codewords are handed out by the alternative-codeword rule, connected
//! beams and combiners are quantized MRT/MRC targets, and the passive phases
//! and per-UE powers are optimized alternately.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{planar_steering, reconfigurable_steering, steering_vector, BeamPlan, ChannelSet};
use crate::codebook::{nearest_codeword, Codebook, Codeword};
use crate::rdars_config::ModeConfig;
use crate::{CVector, Error, Result, C64};

/// Assigns distinct codewords to UEs. UEs are served in order of decreasing
/// path loss (increasing `κ_r`, ties to the lower index); each takes the
/// unassigned codeword with the largest gain for it (ties to the lower index).
///
/// `gains[c][k]` is the response power of codeword `c` at UE `k`.
pub fn alt_codeword_assignment(gains: &[Vec<f64>], kappa_r: &[f64]) -> Result<Vec<usize>> {
    let k = kappa_r.len();
    if gains.len() < k {
        return Err(Error::TooFewCodewords(gains.len(), k));
    }
    if gains.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidDimension("gain rows need one entry per UE".into()));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| kappa_r[x].total_cmp(&kappa_r[y]).then(x.cmp(&y)));
    let mut used = vec![false; gains.len()];
    let mut assignment = vec![0; k];
    for ue in order {
        let mut best: Option<usize> = None;
        for (c, row) in gains.iter().enumerate() {
            if !used[c] && best.is_none_or(|b| row[ue] > gains[b][ue]) {
                best = Some(c);
            }
        }
        let c = best.expect("enough codewords remain");
        used[c] = true;
        assignment[ue] = c;
    }
    Ok(assignment)
}

/// Gives every UE the single best codeword (the scheme without alternation).
pub fn best_codeword_for_all(gains: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    if gains.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let score = |c: usize| gains[c].iter().sum::<f64>();
    let mut best = 0;
    for c in 1..gains.len() {
        if score(c) > score(best) {
            best = c;
        }
    }
    Ok(vec![best; k])
}

/// BS codeword gains `‖H_b w_c‖²`, identical for every UE since all share the
/// BS–RDARS link.
pub fn bs_codeword_gains(channels: &ChannelSet, bs_book: &Codebook) -> Vec<Vec<f64>> {
    bs_book
        .words
        .iter()
        .map(|w| vec![(&channels.h_b * &w.vec).norm_squared(); channels.k()])
        .collect()
}

/// Connected beams and combiners selected for each UE.
#[derive(Debug, Clone)]
pub struct SdmaBeams {
    pub f: Vec<Codeword>,
    pub u: Vec<Codeword>,
}

/// Quantizes each UE's connected-element MRT target and MRC combiner.
pub fn sdma_beam_select(channels: &ChannelSet, mode: &ModeConfig, conn_book: &Codebook, ue_book: &Codebook) -> Result<SdmaBeams> {
    let dims = channels.dims;
    let half = dims.wavelength / 2.0;
    let mut f = Vec::with_capacity(channels.k());
    let mut u = Vec::with_capacity(channels.k());
    for ue in &channels.angles.ue {
        let at = planar_steering(dims.n_z, dims.n_y, dims.spacing, ue.aod_z, ue.aod_y, dims.wavelength)?;
        let t = CVector::from_iterator(mode.a(), mode.connected_indices().iter().map(|&i| at[i]));
        let t = t.unscale(t.norm());
        f.push(nearest_codeword(conn_book, &t)?.clone());
        let au = steering_vector(dims.n_u, half, ue.aoa, dims.wavelength)?;
        let au = au.unscale(au.norm());
        u.push(nearest_codeword(ue_book, &au)?.clone());
    }
    Ok(SdmaBeams { f, u })
}

/// Number of UE pairs sharing a connected codeword.
pub fn beam_conflicts(indices: &[usize]) -> usize {
    let mut count = 0;
    for i in 0..indices.len() {
        for j in i + 1..indices.len() {
            if indices[i] == indices[j] {
                count += 1;
            }
        }
    }
    count
}

/// Leakage `|ã^H(ṽ, υ)·f|²` of a connected codeword toward direction
/// `(ṽ, υ)`, computed as the product of per-axis correlations. Needs a mode
/// whose connected set is the full product of its rows and columns.
pub fn pairwise_interference(mode: &ModeConfig, f: &Codeword, vz: f64, vy: f64, wavelength: f64) -> Result<f64> {
    let rows = mode.connected_rows();
    let cols = mode.connected_cols();
    if rows.len() * cols.len() != mode.a() || mode.a() == 0 {
        return Err(Error::InvalidDimension("connected set is not a full row/column product".into()));
    }
    let cz: Vec<f64> = rows.iter().map(|&r| mode.z_coord(r)).collect();
    let cy: Vec<f64> = cols.iter().map(|&c| mode.y_coord(c)).collect();
    let axis = |coords: &[f64], target: f64, beam: f64| -> Result<f64> {
        let t = reconfigurable_steering(coords, target, wavelength)?;
        let b = reconfigurable_steering(coords, beam, wavelength)?;
        Ok(t.dotc(&b).norm_sqr() / coords.len() as f64)
    };
    Ok(axis(&cz, vz, f.dir_z)? * axis(&cy, vy, f.dir_y)?)
}

/// Same leakage by direct summation over the connected elements.
pub fn pairwise_interference_direct(mode: &ModeConfig, f: &CVector, vz: f64, vy: f64, wavelength: f64) -> Result<f64> {
    if f.len() != mode.a() {
        return Err(Error::InvalidDimension("beam length differs from a".into()));
    }
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let mut acc = C64::new(0.0, 0.0);
    for (j, &i) in mode.connected_indices().iter().enumerate() {
        let (z, y) = (mode.z_coord(i / mode.n_y()), mode.y_coord(i % mode.n_y()));
        acc += C64::from_polar(1.0, -k * (z * vz + y * vy)) * f[j];
    }
    Ok(acc.norm_sqr())
}

/// Weighted water-filling: `p_k = max(0, ω_k·μ − n_k/g_k)` with `Σ p_k = P_tot`,
/// where `n_k = I_k + σ²` is held fixed. Solved exactly by shrinking the
/// active set.
pub fn water_filling(gains: &[f64], interference: &[f64], sigma2: f64, p_tot: f64, weights: &[f64]) -> Result<Vec<f64>> {
    let k = gains.len();
    if interference.len() != k || weights.len() != k {
        return Err(Error::InvalidDimension("gains, interference and weights differ in length".into()));
    }
    let floor: Vec<f64> = (0..k).map(|i| (interference[i] + sigma2) / gains[i]).collect();
    let mut active: Vec<bool> = (0..k).map(|i| gains[i] > 0.0 && weights[i] > 0.0).collect();
    if !active.iter().any(|&a| a) {
        return Err(Error::UndefinedAllocation);
    }
    loop {
        let (mut wsum, mut fsum) = (0.0, 0.0);
        for i in (0..k).filter(|&i| active[i]) {
            wsum += weights[i];
            fsum += floor[i];
        }
        let mu = (p_tot + fsum) / wsum;
        let mut changed = false;
        for i in 0..k {
            if active[i] && weights[i] * mu - floor[i] < 0.0 {
                active[i] = false;
                changed = true;
            }
        }
        if !changed {
            let mut p: Vec<f64> = (0..k)
                .map(|i| if active[i] { (weights[i] * mu - floor[i]).max(0.0) } else { 0.0 })
                .collect();
            // Remove rounding drift so the budget holds exactly.
            let total: f64 = p.iter().sum();
            if total > 0.0 {
                p.iter_mut().for_each(|x| *x *= p_tot / total);
            }
            return Ok(p);
        }
    }
}

/// Fractions of each UE's power given to the BS and RDARS branches, in the
/// proportion that is optimal for a single coherent user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSplit {
    pub bs: f64,
    pub rdars: f64,
}

pub fn branch_split(mode: &ModeConfig, kappa_b: f64) -> BranchSplit {
    if mode.a() == 0 {
        return BranchSplit { bs: 1.0, rdars: 0.0 };
    }
    let b = mode.reflecting_count() as f64;
    let rdars = 1.0 / (1.0 + kappa_b * kappa_b * b * b);
    BranchSplit { bs: 1.0 - rdars, rdars }
}

/// Fixed beams and budget of one SDMA optimization.
#[derive(Debug, Clone)]
pub struct SdmaProblem<'a> {
    pub channels: &'a ChannelSet,
    pub mode: &'a ModeConfig,
    pub w: Vec<CVector>,
    pub f: Vec<CVector>,
    pub u: Vec<CVector>,
    pub split: BranchSplit,
    pub sigma2: f64,
    pub weights: Vec<f64>,
    pub p_tot: f64,
}

impl SdmaProblem<'_> {
    /// Beam plan for a full phase vector and per-UE total powers.
    pub fn plan(&self, phi: CVector, powers: &[f64]) -> BeamPlan {
        let nt = self.channels.dims.n_t as f64;
        let a = self.mode.a().max(1) as f64;
        BeamPlan {
            w: self.w.clone(),
            f: self.f.clone(),
            u: self.u.clone(),
            phi,
            p_b: powers.iter().map(|p| p * self.split.bs / nt).collect(),
            p_r: powers.iter().map(|p| p * self.split.rdars / a).collect(),
        }
    }
}

/// Coupling powers `C[k][i] = |u_k^H H_k f̂_i|²` per unit power of stream `i`,
/// for every passive codeword (`couplings[c]` is a row-major `K × K` array).
pub fn coupling_tables(problem: &SdmaProblem, book: &Codebook) -> Vec<Vec<f64>> {
    let ch = problem.channels;
    let mode = problem.mode;
    let k = ch.k();
    let gate = mode.passive_gate();
    let rs = (problem.split.bs / ch.dims.n_t as f64).sqrt();
    let ds = (problem.split.rdars / mode.a().max(1) as f64).sqrt();
    let h: Vec<CVector> = (0..k).map(|i| ch.h_r[i].adjoint() * &problem.u[i]).collect();
    let t: Vec<CVector> = problem.w.iter().map(|w| &ch.h_b * w).collect();
    let m = book.support.len();
    let mut refl = DMatrix::<C64>::zeros(k * k, m);
    let mut direct = vec![C64::new(0.0, 0.0); k * k];
    let mut fixed = vec![C64::new(0.0, 0.0); k * k];
    let in_support = {
        let mut s = vec![false; mode.n()];
        book.support.iter().for_each(|&e| s[e] = true);
        s
    };
    for rk in 0..k {
        for i in 0..k {
            let row = rk * k + i;
            for (j, &e) in book.support.iter().enumerate() {
                refl[(row, j)] = h[rk][e].conj() * t[i][e] * gate[e] * rs;
            }
            // Gated elements outside the book support keep phase 1.
            for e in (0..mode.n()).filter(|&e| !in_support[e] && gate[e] != 0.0) {
                fixed[row] += h[rk][e].conj() * t[i][e] * rs;
            }
            direct[row] = mode
                .connected_indices()
                .iter()
                .enumerate()
                .map(|(j, &e)| h[rk][e].conj() * problem.f[i][j])
                .sum::<C64>()
                * ds;
        }
    }
    let words = DMatrix::from_fn(m, book.len(), |r, c| book.words[c].vec[r]);
    let amp = refl * words;
    (0..book.len())
        .map(|c| (0..k * k).map(|r| (amp[(r, c)] + direct[r] + fixed[r]).norm_sqr()).collect())
        .collect()
}

/// WSR for a coupling table and per-UE powers.
pub fn coupled_wsr(coupling: &[f64], powers: &[f64], sigma2: f64, weights: &[f64]) -> f64 {
    let k = powers.len();
    (0..k)
        .map(|rk| {
            let sig = powers[rk] * coupling[rk * k + rk];
            let int: f64 = (0..k).filter(|&i| i != rk).map(|i| powers[i] * coupling[rk * k + i]).sum();
            weights[rk] * (sig / (int + sigma2)).ln_1p() / LN_2
        })
        .sum()
}

fn water_fill_frozen(coupling: &[f64], current: &[f64], sigma2: f64, p_tot: f64, weights: &[f64]) -> Option<Vec<f64>> {
    let k = current.len();
    let g: Vec<f64> = (0..k).map(|rk| coupling[rk * k + rk]).collect();
    let int: Vec<f64> = (0..k)
        .map(|rk| (0..k).filter(|&i| i != rk).map(|i| current[i] * coupling[rk * k + i]).sum())
        .collect();
    water_filling(&g, &int, sigma2, p_tot, weights).ok()
}

/// Options of the alternating optimizer.
#[derive(Debug, Clone)]
pub struct AltOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub initial_phi: usize,
    /// Per-UE total powers; equal split when absent.
    pub initial_powers: Option<Vec<f64>>,
}

impl Default for AltOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            initial_phi: 0,
            initial_powers: None,
        }
    }
}

/// Output of the alternating optimizer.
#[derive(Debug, Clone)]
pub struct SdmaSolution {
    pub assignment: Vec<usize>,
    pub plan: BeamPlan,
    pub passive_index: usize,
    /// Per-UE total powers.
    pub powers: Vec<f64>,
    /// Outer iterations that improved the objective.
    pub iterations: usize,
    pub wsr_trace: Vec<f64>,
}

/// Alternates a full scan of the passive book with water-filling.
///
/// Each scan scores every codeword with the better of the current powers and
/// powers water-filled for that codeword under the current interference, so
/// the objective never decreases.
pub fn alternating_phase_power_optimize(
    problem: &SdmaProblem,
    passive_book: &Codebook,
    assignment: Vec<usize>,
    options: &AltOptions,
) -> Result<SdmaSolution> {
    let k = problem.channels.k();
    if passive_book.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if options.initial_phi >= passive_book.len() {
        return Err(Error::InvalidIndex(format!("initial codeword {}", options.initial_phi)));
    }
    let (sigma2, p_tot, weights) = (problem.sigma2, problem.p_tot, &problem.weights);
    let tables = coupling_tables(problem, passive_book);
    let mut powers = options.initial_powers.clone().unwrap_or_else(|| vec![p_tot / k as f64; k]);
    if powers.len() != k {
        return Err(Error::InvalidDimension("one initial power per UE is required".into()));
    }
    let mut cur = options.initial_phi;
    let mut value = coupled_wsr(&tables[cur], &powers, sigma2, weights);
    let mut trace = vec![value];
    let mut iterations = 0;
    for _ in 0..options.max_iters {
        // Phase step: parallel scan with a deterministic lowest-index argmax.
        let best = tables
            .par_iter()
            .enumerate()
            .map(|(c, table)| {
                let keep = coupled_wsr(table, &powers, sigma2, weights);
                match water_fill_frozen(table, &powers, sigma2, p_tot, weights) {
                    Some(p) => {
                        let v = coupled_wsr(table, &p, sigma2, weights);
                        if v > keep {
                            (v, c, Some(p))
                        } else {
                            (keep, c, None)
                        }
                    }
                    None => (keep, c, None),
                }
            })
            .reduce_with(|x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x })
            .expect("book is nonempty");
        let (mut next_value, mut next_c, next_p) = best;
        let mut next_powers = next_p.unwrap_or_else(|| powers.clone());
        if next_value <= value {
            (next_value, next_c, next_powers) = (value, cur, powers.clone());
        }
        // Power step at the chosen codeword.
        if let Some(p) = water_fill_frozen(&tables[next_c], &next_powers, sigma2, p_tot, weights) {
            let v = coupled_wsr(&tables[next_c], &p, sigma2, weights);
            if v > next_value {
                next_value = v;
                next_powers = p;
            }
        }
        let gain = next_value - value;
        cur = next_c;
        powers = next_powers;
        value = next_value;
        trace.push(value);
        if gain < options.tol {
            break;
        }
        iterations += 1;
    }
    let phi = passive_book.expand(cur, problem.mode.n(), C64::new(1.0, 0.0));
    Ok(SdmaSolution {
        assignment,
        plan: problem.plan(phi, &powers),
        passive_index: cur,
        powers,
        iterations,
        wsr_trace: trace,
    })
}
