//! Two-phase hierarchical beam training.
//!
//! The static phase trains the quasi-static BS–RDARS link: the BS descends its
//! DEACT hierarchy while the passive block, acting as receive elements,
//! descends a planar hierarchy. The instantaneous phase trains the RDARS–UE
//! links: the connected elements sweep their codebook while every UE listens
//! at once and descends its own hierarchy. Winners give angles, and received
//! strengths give large-scale gains, from which the channels are rebuilt.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{ArrayDims, ChannelSet, UeAngles, VirtualAngles};
use crate::codebook::{Codebook, Codeword, HierarchicalCodebook, PlanarHierarchy};
use crate::rdars_config::ModeConfig;
use crate::{CVector, Error, Result, C64};

/// Training transmit power, noise and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub tx_power: f64,
    pub noise_var: f64,
    pub seed: u64,
}

/// Training phase of a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Static,
    Instantaneous,
}

/// One received-strength measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Slot index within the phase.
    pub index: usize,
    pub phase: Phase,
    pub layer: usize,
    pub ue: Option<usize>,
    pub tx_beam: usize,
    pub rx_beam: usize,
    pub rss: f64,
}

/// Complex Gaussian noise sample for measurement slot `slot` of listener `listener`.
fn noise(probe: &Probe, phase: Phase, listener: usize, slot: usize) -> C64 {
    if probe.noise_var == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let tag = match phase {
        Phase::Static => 0u64,
        Phase::Instantaneous => 1,
    };
    rng.set_stream((tag << 56) | ((listener as u64) << 32) | slot as u64);
    let s = (probe.noise_var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(&mut rng);
    let im: f64 = StandardNormal.sample(&mut rng);
    C64::new(re * s, im * s)
}

/// Peak array gain of a matched-steering codeword at its own direction, `(Σ|c_i|)²`.
pub fn own_direction_gain(vec: &CVector) -> f64 {
    let s: f64 = vec.iter().map(|c| c.norm()).sum();
    s * s
}

/// Inverts `rss = P·κ²·Π gains + noise` for `κ`, clamping at zero.
pub fn estimate_large_scale_gain(rss: f64, array_gains: &[f64], tx_power: f64, noise_var: f64) -> f64 {
    let g: f64 = array_gains.iter().product();
    if g <= 0.0 || tx_power <= 0.0 {
        return 0.0;
    }
    ((rss - noise_var).max(0.0) / (tx_power * g)).sqrt()
}

/// Outcome of the static phase.
#[derive(Debug, Clone)]
pub struct StaticOutcome {
    pub b_star: Codeword,
    /// Bottom-layer receive beam over the passive block.
    pub r_star: Codeword,
    pub rss: f64,
    pub measurement_count: usize,
    pub log: Vec<Measurement>,
}

fn step_candidates(h: &HierarchicalCodebook, step: usize, current: usize) -> (usize, Vec<usize>) {
    if step < h.depth() {
        (step, h.children(step, current).collect())
    } else {
        (h.depth() - 1, vec![current])
    }
}

/// Static phase: joint layer-by-layer descent of the BS and receive hierarchies.
pub fn static_bt(channels: &ChannelSet, bs_book: &HierarchicalCodebook, recv_book: &PlanarHierarchy, probe: &Probe) -> Result<StaticOutcome> {
    if bs_book.n != channels.dims.n_t {
        return Err(Error::InvalidDimension("BS hierarchy does not match N_t".into()));
    }
    if recv_book.support.iter().any(|&e| e >= channels.dims.n()) {
        return Err(Error::InvalidDimension("receive hierarchy exceeds the grid".into()));
    }
    let steps = bs_book.depth().max(recv_book.depth());
    let amp = probe.tx_power.sqrt();
    let (mut bi, mut zi, mut yi) = (0, 0, 0);
    let (mut layers, mut best_rss) = ((0, 0, 0), 0.0);
    let mut log = Vec::new();
    for step in 0..steps {
        let (bl, bc) = step_candidates(bs_book, step, bi);
        let (zl, zc) = step_candidates(&recv_book.z, step, zi);
        let (yl, yc) = step_candidates(&recv_book.y, step, yi);
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for &b in &bc {
            let field = &channels.h_b * &bs_book.layers[bl].words[b].vec;
            for &z in &zc {
                for &y in &yc {
                    let r = recv_book.word(zl, z, yl, y);
                    let resp: C64 = recv_book.support.iter().zip(r.iter()).map(|(&e, c)| c.conj() * field[e]).sum();
                    let slot = log.len();
                    let rss = (resp * amp + noise(probe, Phase::Static, 0, slot)).norm_sqr();
                    log.push(Measurement {
                        index: slot,
                        phase: Phase::Static,
                        layer: step + 1,
                        ue: None,
                        tx_beam: b,
                        rx_beam: z * recv_book.y.layers[yl].len() + y,
                        rss,
                    });
                    if best.is_none_or(|(v, ..)| rss > v) {
                        best = Some((rss, b, z, y));
                    }
                }
            }
        }
        let (rss, b, z, y) = best.expect("every step measures at least once");
        (bi, zi, yi, best_rss) = (b, z, y, rss);
        layers = (bl, zl, yl);
    }
    let (bl, zl, yl) = layers;
    let b_star = bs_book.layers[bl].words[bi].clone();
    let r_star = Codeword {
        vec: recv_book.word(zl, zi, yl, yi),
        dir_z: recv_book.z.layers[zl].words[zi].dir_z,
        dir_y: recv_book.y.layers[yl].words[yi].dir_z,
        index: zi * recv_book.y.layers[yl].len() + yi,
    };
    Ok(StaticOutcome {
        b_star,
        r_star,
        rss: best_rss,
        measurement_count: log.len(),
        log,
    })
}

/// Outcome of the instantaneous phase.
#[derive(Debug, Clone)]
pub struct InstantOutcome {
    pub c_star: Vec<Codeword>,
    pub e_star: Vec<Codeword>,
    pub rss: Vec<f64>,
    /// Sweep slots; every UE listens in each slot.
    pub measurement_count: usize,
    pub log: Vec<Measurement>,
}

/// Instantaneous phase: the connected elements sweep `conn_book` for every
/// UE-side child, all UEs measuring the same slots.
pub fn instantaneous_bt(
    channels: &ChannelSet,
    mode: &ModeConfig,
    conn_book: &Codebook,
    ue_book: &HierarchicalCodebook,
    probe: &Probe,
) -> Result<InstantOutcome> {
    if conn_book.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if conn_book.words[0].vec.len() != mode.a() {
        return Err(Error::InvalidDimension("connected book does not match the mode".into()));
    }
    if ue_book.n != channels.dims.n_u {
        return Err(Error::InvalidDimension("UE hierarchy does not match N_u".into()));
    }
    let k = channels.k();
    let amp = probe.tx_power.sqrt();
    let conn = mode.connected_indices();
    // Field radiated by each connected codeword at each UE array: H_r,k Ã c.
    let fields: Vec<Vec<CVector>> = (0..k)
        .map(|ue| {
            conn_book
                .words
                .iter()
                .map(|c| {
                    let mut x = CVector::zeros(channels.dims.n_u);
                    for (j, &e) in conn.iter().enumerate() {
                        x += channels.h_r[ue].column(e) * c.vec[j];
                    }
                    x
                })
                .collect()
        })
        .collect();
    let mut cur_e = vec![0usize; k];
    let mut cur_c = vec![0usize; k];
    let mut best_rss = vec![0.0; k];
    let mut log = Vec::new();
    let mut slots = 0;
    let mut last_layer = 0;
    for step in 0..ue_book.depth() {
        let per_ue: Vec<(usize, Vec<usize>)> = (0..k).map(|ue| step_candidates(ue_book, step, cur_e[ue])).collect();
        let width = per_ue[0].1.len();
        let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; k];
        for (ci, _) in conn_book.words.iter().enumerate() {
            for j in 0..width {
                let slot = slots;
                slots += 1;
                for ue in 0..k {
                    let (layer, cands) = &per_ue[ue];
                    let e = cands[j];
                    let resp = ue_book.layers[*layer].words[e].vec.dotc(&fields[ue][ci]);
                    let rss = (resp * amp + noise(probe, Phase::Instantaneous, ue, slot)).norm_sqr();
                    log.push(Measurement {
                        index: slot,
                        phase: Phase::Instantaneous,
                        layer: step + 1,
                        ue: Some(ue),
                        tx_beam: ci,
                        rx_beam: e,
                        rss,
                    });
                    if best[ue].is_none_or(|(v, ..)| rss > v) {
                        best[ue] = Some((rss, ci, e));
                    }
                }
            }
        }
        for ue in 0..k {
            let (rss, c, e) = best[ue].expect("every UE measured");
            (best_rss[ue], cur_c[ue], cur_e[ue]) = (rss, c, e);
        }
        last_layer = per_ue[0].0;
    }
    Ok(InstantOutcome {
        c_star: cur_c.iter().map(|&c| conn_book.words[c].clone()).collect(),
        e_star: cur_e.iter().map(|&e| ue_book.layers[last_layer].words[e].clone()).collect(),
        rss: best_rss,
        measurement_count: slots,
        log,
    })
}

/// Everything learned by both phases.
#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub b_star: Codeword,
    pub r_star: Codeword,
    pub c_star: Vec<Codeword>,
    pub e_star: Vec<Codeword>,
    pub kappa_b_hat: f64,
    pub kappa_r_hat: Vec<f64>,
    pub measurement_count: usize,
    pub log: Vec<Measurement>,
}

/// Books used by [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingBooks {
    pub bs: HierarchicalCodebook,
    pub recv: PlanarHierarchy,
    pub conn: Codebook,
    pub ue: HierarchicalCodebook,
}

/// Runs both phases and estimates the large-scale gains.
///
/// `mode` is the configuration used while training: its passive block
/// receives during the static phase and its connected elements sweep during
/// the instantaneous phase.
pub fn run_training(channels: &ChannelSet, mode: &ModeConfig, books: &TrainingBooks, probe: &Probe) -> Result<TrainingResult> {
    let st = static_bt(channels, &books.bs, &books.recv, probe)?;
    let inst = instantaneous_bt(channels, mode, &books.conn, &books.ue, probe)?;
    let kappa_b_hat = estimate_large_scale_gain(
        st.rss,
        &[own_direction_gain(&st.b_star.vec), own_direction_gain(&st.r_star.vec)],
        probe.tx_power,
        probe.noise_var,
    );
    let kappa_r_hat = (0..channels.k())
        .map(|ue| {
            estimate_large_scale_gain(
                inst.rss[ue],
                &[own_direction_gain(&inst.c_star[ue].vec), own_direction_gain(&inst.e_star[ue].vec)],
                probe.tx_power,
                probe.noise_var,
            )
        })
        .collect();
    let mut log = st.log;
    log.extend(inst.log);
    Ok(TrainingResult {
        b_star: st.b_star,
        r_star: st.r_star,
        c_star: inst.c_star,
        e_star: inst.e_star,
        kappa_b_hat,
        kappa_r_hat,
        measurement_count: st.measurement_count + inst.measurement_count,
        log,
    })
}

/// Rebuilds rank-one channels from the winners' directions and the estimated gains.
pub fn reconstruct_channels(training: &TrainingResult, dims: ArrayDims) -> Result<ChannelSet> {
    let ue = training
        .c_star
        .iter()
        .zip(&training.e_star)
        .map(|(c, e)| UeAngles {
            aod_z: c.dir_z,
            aod_y: c.dir_y,
            aoa: e.dir_z,
        })
        .collect();
    let angles = VirtualAngles {
        bs_aod: training.b_star.dir_z,
        rdars_aoa_z: training.r_star.dir_z,
        rdars_aoa_y: training.r_star.dir_y,
        ue,
    };
    ChannelSet::from_parts(dims, training.kappa_b_hat, training.kappa_r_hat.clone(), angles)
}

/// Renders a training log as comma-separated text with a header.
pub fn format_log(log: &[Measurement]) -> String {
    let mut out = String::from("phase,index,layer,ue,tx_beam,rx_beam,rss\n");
    for m in log {
        let phase = match m.phase {
            Phase::Static => "static",
            Phase::Instantaneous => "instantaneous",
        };
        let ue = m.ue.map(|u| u.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{phase},{},{},{ue},{},{},{:e}", m.index, m.layer, m.tx_beam, m.rx_beam, m.rss);
    }
    out
}
