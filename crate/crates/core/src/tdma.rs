//! Time-division branch: one UE per slot, each slot using the full budget.
//!
//! A slot combines a reflected path through the passive elements and a
//! direct path from the connected elements. With the passive phases rotated
//! so that both paths add coherently, the optimal split of the budget between
//! BS antennas and connected elements has a closed form.

use nalgebra::DMatrix;

use crate::channel::{signal_matrix, sinr_from_signals, BeamPlan, ChannelSet, Scenario};
use crate::codebook::{nearest_codeword, wrap_angle, Codebook};
use crate::channel::{planar_steering, steering_vector};
use crate::rdars_config::ModeConfig;
use crate::{CVector, Error, Result, C64};

/// Per-antenna BS power and per-element RDARS power of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub p_r: f64,
    pub p_b: f64,
}

fn check_split_args(a: usize, n: usize, n_t: usize, p_tot: f64) -> Result<()> {
    if a > n {
        return Err(Error::InvalidDimension(format!("a = {a} exceeds N = {n}")));
    }
    if n_t == 0 {
        return Err(Error::InvalidDimension("N_t must be >= 1".into()));
    }
    if !(p_tot > 0.0) {
        return Err(Error::InvalidDimension("power budget must be positive".into()));
    }
    Ok(())
}

/// Power split that maximizes the coherent slot gain for `a` connected elements.
pub fn optimal_power_split(a: usize, n: usize, n_t: usize, kappa_b: f64, p_tot: f64) -> Result<PowerSplit> {
    check_split_args(a, n, n_t, p_tot)?;
    if a == 0 {
        return Ok(PowerSplit {
            p_r: 0.0,
            p_b: p_tot / n_t as f64,
        });
    }
    let (af, b) = (a as f64, (n - a) as f64);
    let p_r = p_tot / (kappa_b * kappa_b * b * b * af + af);
    let p_b = ((p_tot - af * p_r) / n_t as f64).max(0.0);
    Ok(PowerSplit { p_r, p_b })
}

/// Coherent slot gain normalized by `κ_r²·N_u`:
/// `(κ_b·(N−a)·√(P_tot − a·P_R) + √(a·P_R))²`.
pub fn normalized_slot_gain(a: usize, n: usize, kappa_b: f64, p_tot: f64, p_r: f64) -> f64 {
    let af = a as f64;
    let bs = (p_tot - af * p_r).max(0.0);
    let g = kappa_b * (n - a) as f64 * bs.sqrt() + (af * p_r).sqrt();
    g * g
}

/// Optimal slot gain with `a ≥ 1` connected elements:
/// `κ_r²·P_tot·N_u·(κ_b²(N−a)² + 1)`.
pub fn rdars_gain(a: usize, n: usize, kappa_b: f64, kappa_r: f64, n_u: usize, p_tot: f64) -> Result<f64> {
    if a == 0 || a > n {
        return Err(Error::InvalidDimension(format!("rdars gain needs 1 <= a <= N, got a = {a}")));
    }
    let b = (n - a) as f64;
    Ok(kappa_r * kappa_r * p_tot * n_u as f64 * (kappa_b * kappa_b * b * b + 1.0))
}

/// Slot gain of a purely reflecting surface: `P_tot·κ_b²κ_r²·N_u·N²`.
pub fn ris_gain(n: usize, kappa_b: f64, kappa_r: f64, n_u: usize, p_tot: f64) -> f64 {
    let nf = n as f64;
    p_tot * (kappa_b * kappa_r).powi(2) * n_u as f64 * nf * nf
}

/// Best connected-element count: 1 when `N < 1/(2κ_b²) + 1/2`, else 0.
pub fn optimal_te_count(n: usize, kappa_b: f64) -> usize {
    if (n as f64) < 0.5 / (kappa_b * kappa_b) + 0.5 {
        1
    } else {
        0
    }
}

/// Connected-element count below which RDARS beats a pure RIS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TeThreshold {
    /// `N < c̄`: every `1 ≤ a ≤ N` beats the RIS.
    AllQualify,
    /// RDARS beats the RIS exactly when `a` is below this value.
    Below(f64),
}

/// Element-count thresholds comparing RDARS, RIS and DAS under TDMA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchitectureThresholds {
    /// `1/κ_b`.
    pub c_bar: f64,
    /// `1/(2κ_b²) + 1/2`.
    pub c_tilde: f64,
    pub a_t_th: TeThreshold,
}

pub fn architecture_thresholds(n: usize, kappa_b: f64) -> ArchitectureThresholds {
    let c_bar = 1.0 / kappa_b;
    let c_tilde = 0.5 / (kappa_b * kappa_b) + 0.5;
    let nf = n as f64;
    let a_t_th = if nf < c_bar {
        TeThreshold::AllQualify
    } else {
        TeThreshold::Below(nf - (nf * nf - c_bar * c_bar).max(0.0).sqrt())
    };
    ArchitectureThresholds { c_bar, c_tilde, a_t_th }
}

fn equal_weights(weights: &[f64]) -> bool {
    let k = weights.len() as f64;
    weights.iter().all(|w| (w - 1.0 / k).abs() <= 1e-12)
}

/// Largest achievable TDMA WSR with `a_star` connected elements, assuming
/// perfectly aligned beams and equal weights `1/K`.
pub fn tdma_wsr_upper_bound(scenario: &Scenario, channels: &ChannelSet, a_star: usize) -> Result<f64> {
    if !equal_weights(&scenario.weights) {
        return Err(Error::UnsupportedWeights);
    }
    let n = channels.dims.n();
    let n_u = channels.dims.n_u;
    let k = channels.k() as f64;
    let mut total = 0.0;
    for &kr in &channels.kappa_r {
        let gain = if a_star == 0 {
            ris_gain(n, channels.kappa_b, kr, n_u, scenario.p_tot)
        } else {
            rdars_gain(a_star, n, channels.kappa_b, kr, n_u, scenario.p_tot)?
        };
        total += (gain / scenario.sigma2).ln_1p() / std::f64::consts::LN_2;
    }
    Ok(total / k)
}

/// Codebooks used for beam selection.
#[derive(Debug, Clone)]
pub struct BeamBooks {
    pub bs: Codebook,
    pub ue: Codebook,
    /// Connected book with `support` = connected flat indices (empty when `a = 0`).
    pub connected: Codebook,
    /// Passive book with `support` = passive-block flat indices (absent when `a = N`).
    pub passive: Option<Codebook>,
}

/// Beams selected for one UE.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotBeams {
    pub w: CVector,
    pub u: CVector,
    /// Length `a`.
    pub f: CVector,
    /// Length `N`; entries outside the passive support are 1.
    pub phi: CVector,
    pub w_index: usize,
    pub u_index: usize,
    pub f_index: Option<usize>,
    pub phi_index: Option<usize>,
}

fn unit_target(v: CVector) -> CVector {
    let n = v.norm();
    v / C64::from(n)
}

/// Quantizes each UE's MRT/MRC targets to the nearest codewords.
///
/// The passive target puts the phase difference between the UE-side and
/// BS-side steering entries on every passive element.
pub fn tdma_beam_select(csi: &ChannelSet, mode: &ModeConfig, books: &BeamBooks) -> Result<Vec<SlotBeams>> {
    let dims = csi.dims;
    let half = dims.wavelength / 2.0;
    let ang = &csi.angles;
    let w_target = unit_target(steering_vector(dims.n_t, half, ang.bs_aod, dims.wavelength)?);
    let w = nearest_codeword(&books.bs, &w_target)?;
    let mut out = Vec::with_capacity(csi.k());
    for ue in &ang.ue {
        let u = nearest_codeword(&books.ue, &unit_target(steering_vector(dims.n_u, half, ue.aoa, dims.wavelength)?))?;
        let at = planar_steering(dims.n_z, dims.n_y, dims.spacing, ue.aod_z, ue.aod_y, dims.wavelength)?;
        let (f, f_index) = if mode.a() == 0 {
            (CVector::zeros(0), None)
        } else {
            let t = CVector::from_iterator(mode.a(), mode.connected_indices().iter().map(|&i| at[i]));
            let c = nearest_codeword(&books.connected, &unit_target(t))?;
            (c.vec.clone(), Some(c.index))
        };
        let (phi, phi_index) = match &books.passive {
            None => (CVector::from_element(mode.n(), C64::new(1.0, 0.0)), None),
            Some(pb) => {
                let diff = planar_steering(
                    dims.n_z,
                    dims.n_y,
                    dims.spacing,
                    wrap_angle(ue.aod_z - ang.rdars_aoa_z),
                    wrap_angle(ue.aod_y - ang.rdars_aoa_y),
                    dims.wavelength,
                )?;
                let t = CVector::from_iterator(
                    pb.support.len(),
                    pb.support
                        .iter()
                        .map(|&i| if mode.is_connected(i) { C64::new(0.0, 0.0) } else { diff[i] }),
                );
                let c = nearest_codeword(pb, &t)?;
                (pb.expand(c.index, mode.n(), C64::new(1.0, 0.0)), Some(c.index))
            }
        };
        out.push(SlotBeams {
            w: w.vec.clone(),
            u: u.vec.clone(),
            f,
            phi,
            w_index: w.index,
            u_index: u.index,
            f_index,
            phi_index,
        });
    }
    Ok(out)
}

/// Reflected amplitude per unit total BS power and direct amplitude per unit
/// total RDARS power for UE `k` with the given beams.
pub fn path_amplitudes(ch: &ChannelSet, mode: &ModeConfig, k: usize, beams: &SlotBeams) -> (C64, C64) {
    let h = ch.h_r[k].adjoint() * &beams.u;
    let t = &ch.h_b * &beams.w;
    let gate = mode.passive_gate();
    let mut x = C64::new(0.0, 0.0);
    for n in 0..h.len() {
        if gate[n] != 0.0 {
            x += h[n].conj() * beams.phi[n] * t[n];
        }
    }
    let mut y = C64::new(0.0, 0.0);
    for (j, &n) in mode.connected_indices().iter().enumerate() {
        y += h[n].conj() * beams.f[j];
    }
    let nt = ch.dims.n_t as f64;
    let a = mode.a().max(1) as f64;
    (x / nt.sqrt(), y / a.sqrt())
}

/// Splits `p_tot` for coherently combined paths with per-unit-power
/// amplitudes `x` (reflected) and `y` (direct): the total power on each branch
/// is proportional to its squared amplitude.
pub fn aligned_power_split(x: f64, y: f64, a: usize, n: usize, n_t: usize, kappa_b: f64, p_tot: f64) -> Result<PowerSplit> {
    check_split_args(a, n, n_t, p_tot)?;
    if a == 0 {
        return optimal_power_split(0, n, n_t, kappa_b, p_tot);
    }
    let (x2, y2) = (x * x, y * y);
    if x2 + y2 == 0.0 {
        return optimal_power_split(a, n, n_t, kappa_b, p_tot);
    }
    let direct = p_tot * y2 / (x2 + y2);
    Ok(PowerSplit {
        p_r: direct / a as f64,
        p_b: (p_tot - direct) / n_t as f64,
    })
}

/// Result of the TDMA optimizer.
#[derive(Debug, Clone)]
pub struct TdmaSolution {
    /// One plan per slot; only the slot's UE carries power.
    pub slots: Vec<BeamPlan>,
    pub a_star: usize,
    pub splits: Vec<PowerSplit>,
    pub slot_rates: Vec<f64>,
    pub wsr: f64,
    /// Best rate over all connected-element counts, when weights are equal.
    pub upper_bound: Option<f64>,
}

/// How slot beams are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotSearch {
    /// Nearest codewords to the MRT/MRC targets.
    Codebook,
    /// Exhaustive search over all codeword tuples per slot.
    Exhaustive,
}

/// Exhaustive per-slot search. With coherent combining the slot gain is
/// `|X|² + |Y|²` (per unit power), so the reflected pair `(w, φ)` and the
/// direct beam `f` are maximized separately for each combiner `u`.
pub fn tdma_exhaustive_select(csi: &ChannelSet, mode: &ModeConfig, books: &BeamBooks) -> Result<Vec<SlotBeams>> {
    let n = mode.n();
    let nt = csi.dims.n_t;
    let gate = mode.passive_gate();
    let wmat = DMatrix::from_fn(nt, books.bs.len(), |r, c| books.bs.words[c].vec[r]);
    let phis: Vec<CVector> = match &books.passive {
        Some(pb) => (0..pb.len()).map(|i| pb.expand(i, n, C64::new(1.0, 0.0))).collect(),
        None => vec![CVector::from_element(n, C64::new(1.0, 0.0))],
    };
    let reflecting = gate.iter().any(|&g| g != 0.0);
    // Incident field of every BS codeword on every element.
    let incident = &csi.h_b * &wmat;
    let mut out = Vec::with_capacity(csi.k());
    for k in 0..csi.k() {
        let mut best: Option<(f64, SlotBeams)> = None;
        for u in &books.ue.words {
            let h = csi.h_r[k].adjoint() * &u.vec;
            let (mut bx, mut bphi, mut bw) = (0.0, 0, 0);
            if reflecting {
                // Rows are (conj(h) ⊙ gate ⊙ φ)^T; columns the incident fields.
                let rows = DMatrix::from_fn(phis.len(), n, |r, c| h[c].conj() * phis[r][c] * gate[c]);
                let resp = rows * &incident;
                bx = -1.0;
                for r in 0..resp.nrows() {
                    for c in 0..resp.ncols() {
                        let v = resp[(r, c)].norm_sqr();
                        if v > bx {
                            (bx, bphi, bw) = (v, r, c);
                        }
                    }
                }
            }
            let (mut by, mut bf) = (0.0, None);
            for c in &books.connected.words {
                let y: C64 = mode
                    .connected_indices()
                    .iter()
                    .enumerate()
                    .map(|(j, &e)| h[e].conj() * c.vec[j])
                    .sum();
                if bf.is_none() || y.norm_sqr() > by {
                    (by, bf) = (y.norm_sqr(), Some(c.index));
                }
            }
            let a = mode.a().max(1) as f64;
            let score = bx / nt as f64 + by / a;
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                let f = match bf {
                    Some(i) => books.connected.words[i].vec.clone(),
                    None => CVector::zeros(0),
                };
                best = Some((
                    score,
                    SlotBeams {
                        w: books.bs.words[bw].vec.clone(),
                        u: u.vec.clone(),
                        f,
                        phi: phis[bphi].clone(),
                        w_index: bw,
                        u_index: u.index,
                        f_index: bf,
                        phi_index: books.passive.as_ref().map(|_| bphi),
                    },
                ));
            }
        }
        out.push(best.ok_or(Error::EmptyCodebook)?.1);
    }
    Ok(out)
}

/// Turns per-UE beams into slot plans: aligns the reflected path with the
/// direct one by a common rotation of the passive phases, then splits the
/// budget accordingly.
pub fn build_slot_plans(
    csi: &ChannelSet,
    mode: &ModeConfig,
    beams: &[SlotBeams],
    kappa_b: f64,
    p_tot: f64,
) -> Result<(Vec<BeamPlan>, Vec<PowerSplit>)> {
    let k = csi.k();
    let mut plans = Vec::with_capacity(k);
    let mut splits = Vec::with_capacity(k);
    for (slot, b) in beams.iter().enumerate() {
        let (x, y) = path_amplitudes(csi, mode, slot, b);
        let mut phi = b.phi.clone();
        if x.norm() > 0.0 && y.norm() > 0.0 {
            let rot = C64::from_polar(1.0, y.arg() - x.arg());
            for (i, p) in phi.iter_mut().enumerate() {
                if !mode.is_connected(i) {
                    *p *= rot;
                }
            }
        }
        let split = aligned_power_split(x.norm(), y.norm(), mode.a(), mode.n(), csi.dims.n_t, kappa_b, p_tot)?;
        let mut p_b = vec![0.0; k];
        let mut p_r = vec![0.0; k];
        p_b[slot] = split.p_b;
        p_r[slot] = split.p_r;
        plans.push(BeamPlan {
            w: vec![b.w.clone(); k],
            f: vec![b.f.clone(); k],
            u: vec![b.u.clone(); k],
            phi,
            p_b,
            p_r,
        });
        splits.push(split);
    }
    Ok((plans, splits))
}

/// Per-slot rates and WSR of slot plans evaluated on `channels`.
pub fn evaluate_tdma(channels: &ChannelSet, mode: &ModeConfig, slots: &[BeamPlan], sigma2: f64, weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if slots.len() != channels.k() || weights.len() != channels.k() {
        return Err(Error::InvalidPlan("one slot and one weight per UE are required".into()));
    }
    let mut rates = Vec::with_capacity(slots.len());
    for (k, plan) in slots.iter().enumerate() {
        let s = signal_matrix(channels, mode, plan)?;
        let g = sinr_from_signals(&s, sigma2)[k];
        rates.push(g.ln_1p() / std::f64::consts::LN_2);
    }
    let wsr = rates.iter().zip(weights).map(|(r, w)| r * w).sum();
    Ok((rates, wsr))
}

/// Selects beams from `csi`, builds slot plans and evaluates them on `truth`.
pub fn tdma_solve(
    csi: &ChannelSet,
    truth: &ChannelSet,
    mode: &ModeConfig,
    books: &BeamBooks,
    scenario: &Scenario,
    search: SlotSearch,
) -> Result<TdmaSolution> {
    let beams = match search {
        SlotSearch::Codebook => tdma_beam_select(csi, mode, books)?,
        SlotSearch::Exhaustive => tdma_exhaustive_select(csi, mode, books)?,
    };
    let (slots, splits) = build_slot_plans(csi, mode, &beams, csi.kappa_b, scenario.p_tot)?;
    let (slot_rates, wsr) = evaluate_tdma(truth, mode, &slots, scenario.sigma2, &scenario.weights)?;
    let upper_bound = if equal_weights(&scenario.weights) {
        Some(tdma_wsr_upper_bound(scenario, truth, optimal_te_count(mode.n(), truth.kappa_b))?)
    } else {
        None
    };
    Ok(TdmaSolution {
        slots,
        a_star: mode.a(),
        splits,
        slot_rates,
        wsr,
        upper_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn split_edges() {
        let s = optimal_power_split(0, 16, 8, 1e-4, 2.0).unwrap();
        assert_eq!(s, PowerSplit { p_r: 0.0, p_b: 0.25 });
        let s = optimal_power_split(16, 16, 8, 1e-4, 2.0).unwrap();
        assert_relative_eq!(s.p_r, 2.0 / 16.0);
        assert_eq!(s.p_b, 0.0);
    }

    #[test]
    fn split_uses_whole_budget() {
        for a in 1..=20 {
            let s = optimal_power_split(a, 20, 16, 0.03, 0.7).unwrap();
            assert_relative_eq!(16.0 * s.p_b + a as f64 * s.p_r, 0.7, max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_form_gain_consistent() {
        let (n, kb, kr, nu, p) = (40, 0.02, 3e-3, 4, 0.5);
        for a in 1..=n {
            let s = optimal_power_split(a, n, 8, kb, p).unwrap();
            let g = normalized_slot_gain(a, n, kb, p, s.p_r) * kr * kr * nu as f64;
            assert_relative_eq!(g, rdars_gain(a, n, kb, kr, nu, p).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn pure_distributed_gain() {
        assert_relative_eq!(rdars_gain(8, 8, 0.5, 0.1, 2, 3.0).unwrap(), 0.01 * 3.0 * 2.0);
        assert!(rdars_gain(0, 8, 0.5, 0.1, 2, 3.0).is_err());
    }

    #[test]
    fn te_count_cases() {
        let kb2 = 10f64.powf(-8.04);
        assert_eq!(optimal_te_count(128, kb2.sqrt()), 1);
        assert_eq!(optimal_te_count(1, 1.0), 0);
        let t = architecture_thresholds(128, kb2.sqrt());
        assert!((t.c_tilde - 5.48e7).abs() / 5.48e7 < 1e-2);
    }

    #[test]
    fn thresholds() {
        let t = architecture_thresholds(8, 0.1);
        assert_relative_eq!(t.c_bar, 10.0, max_relative = 1e-12);
        assert_eq!(t.a_t_th, TeThreshold::AllQualify);
        let t = architecture_thresholds(10, 0.1);
        match t.a_t_th {
            TeThreshold::Below(v) => assert_relative_eq!(v, 10.0, max_relative = 1e-12),
            TeThreshold::AllQualify => panic!("expected a threshold"),
        }
    }

    #[test]
    fn aligned_split_reduces_to_closed_form() {
        // Coherent amplitudes of an on-grid slot.
        let (a, n, nt, kb, p) = (3, 50, 16, 0.01, 1.0);
        let x = kb * (n - a) as f64 * (nt as f64).sqrt() / (nt as f64).sqrt();
        let y = (a as f64).sqrt() / (a as f64).sqrt();
        let s = aligned_power_split(x, y, a, n, nt, kb, p).unwrap();
        let c = optimal_power_split(a, n, nt, kb, p).unwrap();
        assert_relative_eq!(s.p_r, c.p_r, max_relative = 1e-12);
        assert_relative_eq!(s.p_b, c.p_b, max_relative = 1e-12);
    }

    #[test]
    fn unequal_weights_rejected() {
        let s = Scenario {
            weights: vec![0.5, 0.3, 0.2],
            ..Scenario::default()
        };
        let ch = crate::channel::build_channels(&s, None).unwrap();
        assert!(matches!(tdma_wsr_upper_bound(&s, &ch, 1), Err(Error::UnsupportedWeights)));
    }

    #[test]
    fn single_element_bound() {
        let mut s = Scenario {
            n_z: 1,
            n_y: 1,
            weights: vec![1.0],
            ..Scenario::default()
        };
        s.ue_positions.truncate(1);
        let ch = crate::channel::build_channels(&s, None).unwrap();
        let kr = ch.kappa_r[0];
        let expect = (1.0 + kr * kr * s.p_tot * s.n_u as f64 / s.sigma2).log2();
        assert_relative_eq!(tdma_wsr_upper_bound(&s, &ch, 1).unwrap(), expect, max_relative = 1e-12);
    }
}
