//! Experiment configuration, Monte Carlo orchestration and CSV output.
//!
//! A configuration is a TOML document with the sections `[scenario]`,
//! `[pathloss]`, `[experiment]`, `[codebook]`, `[training]` and an optional
//! `[angles]`. Every key is optional; see `README.md` for the schema. Powers
//! are given in dBm and converted to watts while parsing.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::beam_training::{reconstruct_channels, run_training, Probe, TrainingBooks};
use crate::channel::{build_channels, geometric_angles, wsr, AngleOverride, ChannelSet, PathLoss, Scenario, UE_CENTER};
use crate::codebook::{
    build_dft_codebook, build_hierarchical_codebook, connected_rcb_for_mode, passive_rcb_for_mode, Codebook, CodebookKind, Codeword,
    CoordinateLayout, PlanarHierarchy,
};
use crate::rdars_config::{min_transmit_elements, placement_candidates, ModeConfig, Placement};
use crate::sdma::{
    alt_codeword_assignment, alternating_phase_power_optimize, best_codeword_for_all, branch_split, bs_codeword_gains, sdma_beam_select,
    AltOptions, SdmaProblem,
};
use crate::tdma::{tdma_solve, BeamBooks, SlotSearch};
use crate::units::{dbm_to_watts, wavelength};
use crate::{CVector, Error, Result};

/// RDARS-side UE departure angles used for the threshold experiment when no
/// `[angles]` section is given.
pub const THRESHOLD_AOD_Z: [f64; 3] = [-0.96875, -0.59375, -0.21875];
pub const THRESHOLD_AOD_Y: [f64; 3] = [-0.84375, -0.03125, 0.78125];

/// The experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    TdmaPowerSweep,
    SdmaPowerSweep,
    AltcwCompare,
    ArchCompare,
    BsAntennaSweep,
    CodebookCompare,
    ElementCountSweep,
    TeThresholdSweep,
    ResolutionSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::TdmaPowerSweep,
        Self::SdmaPowerSweep,
        Self::AltcwCompare,
        Self::ArchCompare,
        Self::BsAntennaSweep,
        Self::CodebookCompare,
        Self::ElementCountSweep,
        Self::TeThresholdSweep,
        Self::ResolutionSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TdmaPowerSweep => "tdma_power_sweep",
            Self::SdmaPowerSweep => "sdma_power_sweep",
            Self::AltcwCompare => "altcw_compare",
            Self::ArchCompare => "arch_compare",
            Self::BsAntennaSweep => "bs_antenna_sweep",
            Self::CodebookCompare => "codebook_compare",
            Self::ElementCountSweep => "element_count_sweep",
            Self::TeThresholdSweep => "te_threshold_sweep",
            Self::ResolutionSweep => "resolution_sweep",
        }
    }

    /// What the sweep values mean.
    pub fn sweep_variable(self) -> &'static str {
        match self {
            Self::TdmaPowerSweep | Self::SdmaPowerSweep | Self::AltcwCompare | Self::ArchCompare | Self::CodebookCompare => "p_tot_dbm",
            Self::BsAntennaSweep => "n_t",
            Self::ElementCountSweep | Self::TeThresholdSweep => "a",
            Self::ResolutionSweep => "passive_resolution",
        }
    }

    fn default_sweep(self) -> Vec<f64> {
        match self.sweep_variable() {
            "p_tot_dbm" => vec![10.0, 15.0, 20.0, 25.0, 30.0],
            "n_t" => vec![16.0, 32.0, 64.0, 128.0],
            "a" => vec![3.0, 6.0, 9.0, 12.0, 18.0, 24.0],
            _ => vec![16.0, 32.0, 64.0],
        }
    }

    fn is_tdma(self) -> bool {
        matches!(self, Self::TdmaPowerSweep | Self::ArchCompare | Self::BsAntennaSweep)
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Config {
            field: "experiment.name".into(),
            message: format!("unknown experiment `{s}`"),
        })
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub perfect_csi: bool,
    /// Draw UE positions per trial; when false the scenario's positions are kept.
    pub random_drops: bool,
    pub ue_center: [f64; 3],
    pub ue_radius: f64,
    pub angles: Option<AngleOverride>,
    /// Connected elements of the RDARS in TDMA experiments.
    pub tdma_a: usize,
    /// Connected grid of the RDARS in SDMA experiments.
    pub a_z: usize,
    pub a_y: usize,
    pub stride_z: Option<usize>,
    pub stride_y: Option<usize>,
    pub slot_search: SlotSearch,
    pub passive_resolution: (usize, usize),
    pub branching: usize,
    /// Connected block used while training.
    pub training_block: (usize, usize),
    pub max_iters: usize,
    pub tol: f64,
}

/// One output line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep_value: f64,
    pub label: String,
    pub trial: usize,
    pub wsr: f64,
    pub measurement_count: usize,
    pub iterations: usize,
    /// Empty, or a short reason the row is not a regular result.
    pub flag: String,
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    pathloss: RawPathLoss,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    codebook: RawCodebook,
    #[serde(default)]
    training: RawTraining,
    angles: Option<RawAngles>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    k: Option<usize>,
    n_t: Option<usize>,
    n_u: Option<usize>,
    n_z: Option<usize>,
    n_y: Option<usize>,
    carrier_hz: Option<f64>,
    /// Element spacing in wavelengths.
    spacing: Option<f64>,
    p_tot_dbm: Option<f64>,
    sigma2_dbm: Option<f64>,
    weights: Option<Vec<f64>>,
    bs_position: Option<[f64; 3]>,
    rdars_position: Option<[f64; 3]>,
    ue_positions: Option<Vec<[f64; 3]>>,
    ue_center: Option<[f64; 3]>,
    ue_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathLoss {
    c0_db: Option<f64>,
    alpha_b: Option<f64>,
    alpha_r: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    sweep: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    perfect_csi: Option<bool>,
    tdma_a: Option<usize>,
    a_z: Option<usize>,
    a_y: Option<usize>,
    stride_z: Option<usize>,
    stride_y: Option<usize>,
    slot_search: Option<String>,
    max_iters: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCodebook {
    passive_resolution: Option<[usize; 2]>,
    branching: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    block: Option<[usize; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAngles {
    bs_aod: Option<f64>,
    rdars_aoa: Option<[f64; 2]>,
    ue_aod_z: Option<Vec<f64>>,
    ue_aod_y: Option<Vec<f64>>,
    ue_aoa: Option<Vec<f64>>,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn positive(field: &str, v: usize) -> Result<usize> {
    if v == 0 {
        Err(config_err(field, "must be at least 1"))
    } else {
        Ok(v)
    }
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_err("document", e.message().to_string() + &span_hint(text, e.span())))?;
    let defaults = Scenario::default();
    let s = &raw.scenario;

    let k = positive("scenario.k", s.k.or(s.ue_positions.as_ref().map(Vec::len)).unwrap_or(defaults.k()))?;
    let carrier = s.carrier_hz.unwrap_or(crate::channel::DEFAULT_CARRIER_HZ);
    if !(carrier > 0.0) {
        return Err(config_err("scenario.carrier_hz", "must be positive"));
    }
    let lambda = wavelength(carrier);
    let spacing = s.spacing.unwrap_or(0.5);
    if !(spacing > 0.0) {
        return Err(config_err("scenario.spacing", "must be positive"));
    }
    let weights = match &s.weights {
        Some(w) if w.len() != k => return Err(config_err("scenario.weights", format!("expected {k} weights, got {}", w.len()))),
        Some(w) if w.iter().any(|x| !(*x >= 0.0)) => return Err(config_err("scenario.weights", "weights must be nonnegative")),
        Some(w) => w.clone(),
        None => vec![1.0 / k as f64; k],
    };
    let ue_center = s.ue_center.unwrap_or(UE_CENTER);
    let ue_radius = s.ue_radius.unwrap_or(5.0);
    if !(ue_radius >= 0.0) {
        return Err(config_err("scenario.ue_radius", "must be nonnegative"));
    }
    let ue_positions = match &s.ue_positions {
        Some(p) if p.len() != k => return Err(config_err("scenario.ue_positions", format!("expected {k} positions, got {}", p.len()))),
        Some(p) => p.clone(),
        None => (0..k)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / k as f64;
                [ue_center[0], ue_center[1] + 0.5 * ue_radius * t.cos(), ue_center[2] + 0.5 * ue_radius * t.sin()]
            })
            .collect(),
    };
    let pl = PathLoss::default();
    let scenario = Scenario {
        bs_position: s.bs_position.unwrap_or(defaults.bs_position),
        rdars_position: s.rdars_position.unwrap_or(defaults.rdars_position),
        ue_positions,
        n_t: positive("scenario.n_t", s.n_t.unwrap_or(defaults.n_t))?,
        n_u: positive("scenario.n_u", s.n_u.unwrap_or(defaults.n_u))?,
        n_z: positive("scenario.n_z", s.n_z.unwrap_or(defaults.n_z))?,
        n_y: positive("scenario.n_y", s.n_y.unwrap_or(defaults.n_y))?,
        spacing: spacing * lambda,
        wavelength: lambda,
        p_tot: dbm_to_watts(s.p_tot_dbm.unwrap_or(20.0)),
        sigma2: dbm_to_watts(s.sigma2_dbm.unwrap_or(-80.0)),
        weights,
        pathloss: PathLoss {
            c0_db: raw.pathloss.c0_db.unwrap_or(pl.c0_db),
            alpha_b: raw.pathloss.alpha_b.unwrap_or(pl.alpha_b),
            alpha_r: raw.pathloss.alpha_r.unwrap_or(pl.alpha_r),
        },
    };
    scenario.validate().map_err(|e| config_err("scenario", e.to_string()))?;

    let e = &raw.experiment;
    let kind: ExperimentKind = e.name.as_deref().unwrap_or("tdma_power_sweep").parse()?;
    let sweep = e.sweep.clone().unwrap_or_else(|| kind.default_sweep());
    if sweep.is_empty() {
        return Err(config_err("experiment.sweep", "needs at least one value"));
    }
    if sweep.iter().any(|v| !v.is_finite()) {
        return Err(config_err("experiment.sweep", "values must be finite"));
    }
    if kind.sweep_variable() != "p_tot_dbm" && sweep.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
        return Err(config_err("experiment.sweep", format!("{} takes nonnegative integers", kind.sweep_variable())));
    }
    let slot_search = match e.slot_search.as_deref() {
        None | Some("codebook") => SlotSearch::Codebook,
        Some("exhaustive") => SlotSearch::Exhaustive,
        Some(other) => return Err(config_err("experiment.slot_search", format!("expected `codebook` or `exhaustive`, got `{other}`"))),
    };
    let tol = e.tol.unwrap_or(1e-6);
    if !(tol >= 0.0) {
        return Err(config_err("experiment.tol", "must be nonnegative"));
    }

    let angles = match &raw.angles {
        Some(a) => Some(parse_angles(a, k)?),
        None if kind == ExperimentKind::TeThresholdSweep && k == 3 => Some(AngleOverride {
            ue_aod: Some(THRESHOLD_AOD_Z.iter().zip(&THRESHOLD_AOD_Y).map(|(&z, &y)| (z, y)).collect()),
            ..AngleOverride::default()
        }),
        None => None,
    };
    let res = raw.codebook.passive_resolution.unwrap_or([32, 32]);
    let block = raw.training.block.unwrap_or([8, 8]);

    Ok(ExperimentSpec {
        kind,
        scenario,
        sweep,
        trials: positive("experiment.trials", e.trials.unwrap_or(10))?,
        seed: e.seed.unwrap_or(0),
        perfect_csi: e.perfect_csi.unwrap_or(false),
        random_drops: s.ue_positions.is_none(),
        ue_center,
        ue_radius,
        angles,
        tdma_a: e.tdma_a.unwrap_or(1),
        a_z: positive("experiment.a_z", e.a_z.unwrap_or(6))?,
        a_y: positive("experiment.a_y", e.a_y.unwrap_or(3))?,
        stride_z: e.stride_z,
        stride_y: e.stride_y,
        slot_search,
        passive_resolution: (positive("codebook.passive_resolution", res[0])?, positive("codebook.passive_resolution", res[1])?),
        branching: match raw.codebook.branching.unwrap_or(2) {
            m if m >= 2 => m,
            _ => return Err(config_err("codebook.branching", "must be at least 2")),
        },
        training_block: (positive("training.block", block[0])?, positive("training.block", block[1])?),
        max_iters: positive("experiment.max_iters", e.max_iters.unwrap_or(50))?,
        tol,
    })
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

fn parse_angles(a: &RawAngles, k: usize) -> Result<AngleOverride> {
    let check = |field: &str, v: f64| {
        if (-1.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(config_err(field, format!("{v} is outside [-1, 1]")))
        }
    };
    let list = |field: &str, v: &Option<Vec<f64>>| -> Result<Option<Vec<f64>>> {
        match v {
            None => Ok(None),
            Some(v) if v.len() != k => Err(config_err(field, format!("expected {k} values, got {}", v.len()))),
            Some(v) => v.iter().map(|&x| check(field, x)).collect::<Result<Vec<_>>>().map(Some),
        }
    };
    let z = list("angles.ue_aod_z", &a.ue_aod_z)?;
    let y = list("angles.ue_aod_y", &a.ue_aod_y)?;
    let ue_aod = match (z, y) {
        (Some(z), Some(y)) => Some(z.into_iter().zip(y).collect()),
        (None, None) => None,
        _ => return Err(config_err("angles", "ue_aod_z and ue_aod_y must be given together")),
    };
    Ok(AngleOverride {
        bs_aod: a.bs_aod.map(|v| check("angles.bs_aod", v)).transpose()?,
        rdars_aoa: match a.rdars_aoa {
            Some([z, y]) => Some((check("angles.rdars_aoa", z)?, check("angles.rdars_aoa", y)?)),
            None => None,
        },
        ue_aod,
        ue_aoa: list("angles.ue_aoa", &a.ue_aoa)?,
    })
}

/// Reads and parses a configuration file.
pub fn parse_scenario(path: &Path) -> Result<ExperimentSpec> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Modes and books

/// Connected grid for `a` elements: `a_y` is the largest divisor of `a` not
/// above `a_y_pref` whose cofactor fits the rows.
pub fn factor_count(a: usize, a_y_pref: usize, n_z: usize, n_y: usize) -> Result<(usize, usize)> {
    (1..=a_y_pref.min(n_y).min(a))
        .rev()
        .find(|&ay| a.is_multiple_of(ay) && a / ay <= n_z)
        .map(|ay| (a / ay, ay))
        .ok_or_else(|| Error::Infeasible(format!("{a} connected elements do not fit a {n_z}x{n_y} grid")))
}

/// Stride-`(q, p)` placement anchored at the origin; `None` picks stride 1,
/// or with `widest` the widest admissible stride that changes the book.
pub fn rdars_mode(scenario: &Scenario, a_z: usize, a_y: usize, q: Option<usize>, p: Option<usize>, widest: bool) -> Result<ModeConfig> {
    let cands = placement_candidates(scenario.n_z, scenario.n_y, a_z, a_y)?;
    // A stride congruent to 1 modulo the count reproduces the uniform book
    // exactly, so the widest pick skips those when it can.
    let pick = |want: Option<usize>, all: Vec<usize>, count: usize| -> Option<usize> {
        match want {
            Some(s) => all.contains(&s).then_some(s),
            None if widest => all.iter().rev().find(|&&s| s % count != 1 % count).or(all.last()).copied(),
            None => all.first().copied(),
        }
    };
    let mut qs: Vec<usize> = cands.iter().map(|c| c.q).collect();
    qs.dedup();
    let mut ps: Vec<usize> = cands.iter().map(|c| c.p).collect();
    ps.sort_unstable();
    ps.dedup();
    let (q, p) = match (pick(q, qs, a_z), pick(p, ps, a_y)) {
        (Some(q), Some(p)) => (q, p),
        _ => return Err(Error::Infeasible("requested stride is not an orthogonal placement".into())),
    };
    let placement = cands
        .into_iter()
        .find(|c| c.q == q && c.p == p)
        .ok_or_else(|| Error::Infeasible("no matching placement".into()))?;
    ModeConfig::from_placement(scenario.n_z, scenario.n_y, scenario.spacing, &placement)
}

/// A one-codeword book that leaves every element at phase 1.
fn unit_phase_book() -> Codebook {
    Codebook {
        kind: CodebookKind::Passive2d,
        words: vec![Codeword {
            vec: CVector::zeros(0),
            dir_z: 0.0,
            dir_y: 0.0,
            index: 0,
        }],
        resolution_z: 1,
        resolution_y: 1,
        support: Vec::new(),
    }
}

/// Beam-selection books for a mode.
pub fn beam_books(scenario: &Scenario, mode: &ModeConfig, res: (usize, usize), layout: CoordinateLayout) -> Result<BeamBooks> {
    let lambda = scenario.wavelength;
    let half = lambda / 2.0;
    Ok(BeamBooks {
        bs: build_dft_codebook(scenario.n_t, half, scenario.n_t, lambda, CodebookKind::Bs)?,
        ue: build_dft_codebook(scenario.n_u, half, scenario.n_u, lambda, CodebookKind::Ue)?,
        connected: connected_rcb_for_mode(mode, lambda, layout)?,
        passive: match mode.passive_block() {
            Some(_) => Some(passive_rcb_for_mode(mode, res.0, res.1, lambda, CoordinateLayout::Reconfigurable)?),
            None => None,
        },
    })
}

// ---------------------------------------------------------------------------
// Trials

/// Per-trial random draws shared by every label and sweep value.
#[derive(Debug, Clone)]
struct TrialDraw {
    ue_positions: Vec<[f64; 3]>,
    probe_seed: u64,
}

fn draw_trial(spec: &ExperimentSpec, trial: usize) -> TrialDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial as u64);
    let ue_positions = if spec.random_drops {
        (0..spec.scenario.k())
            .map(|_| {
                let r = spec.ue_radius * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                let c = spec.ue_center;
                [c[0], c[1] + r * t.cos(), c[2] + r * t.sin()]
            })
            .collect()
    } else {
        spec.scenario.ue_positions.clone()
    };
    TrialDraw {
        ue_positions,
        probe_seed: rng.random(),
    }
}

/// True channels and the CSI the optimizers see.
struct Csi {
    truth: ChannelSet,
    csi: ChannelSet,
    measurement_count: usize,
}

/// `training` replaces the default training block by a given mode and
/// connected-book layout.
fn acquire(spec: &ExperimentSpec, scenario: &Scenario, draw: &TrialDraw, training: Option<(&ModeConfig, CoordinateLayout)>) -> Result<Csi> {
    let truth = build_channels(scenario, spec.angles.as_ref())?;
    if spec.perfect_csi {
        return Ok(Csi {
            csi: truth.clone(),
            truth,
            measurement_count: 0,
        });
    }
    let (training_mode, layout) = match training {
        Some((m, l)) => (m.clone(), l),
        None => {
            let (tz, ty) = spec.training_block;
            let placement = Placement {
                q: 1,
                p: 1,
                rows: (0..tz).collect(),
                cols: (0..ty).collect(),
            };
            let m = ModeConfig::from_placement(scenario.n_z, scenario.n_y, scenario.spacing, &placement)?;
            (m, CoordinateLayout::Reconfigurable)
        }
    };
    let lambda = scenario.wavelength;
    let books = TrainingBooks {
        bs: build_hierarchical_codebook(scenario.n_t, lambda / 2.0, spec.branching, lambda)?,
        recv: PlanarHierarchy::for_passive_block(&training_mode, spec.branching, lambda)?,
        conn: connected_rcb_for_mode(&training_mode, lambda, layout)?,
        ue: build_hierarchical_codebook(scenario.n_u, lambda / 2.0, spec.branching, lambda)?,
    };
    let probe = Probe {
        tx_power: scenario.p_tot,
        noise_var: scenario.sigma2,
        seed: draw.probe_seed,
    };
    let training = run_training(&truth, &training_mode, &books, &probe)?;
    let csi = reconstruct_channels(&training, truth.dims)?;
    Ok(Csi {
        truth,
        csi,
        measurement_count: training.measurement_count,
    })
}

struct Outcome {
    wsr: f64,
    iterations: usize,
}

fn run_tdma(spec: &ExperimentSpec, scenario: &Scenario, csi: &Csi, mode: &ModeConfig) -> Result<Outcome> {
    let books = beam_books(scenario, mode, spec.passive_resolution, CoordinateLayout::Reconfigurable)?;
    let sol = tdma_solve(&csi.csi, &csi.truth, mode, &books, scenario, spec.slot_search)?;
    Ok(Outcome { wsr: sol.wsr, iterations: 0 })
}

fn run_sdma(spec: &ExperimentSpec, scenario: &Scenario, csi: &Csi, mode: &ModeConfig, layout: CoordinateLayout, alt: bool) -> Result<Outcome> {
    let books = beam_books(scenario, mode, spec.passive_resolution, layout)?;
    let passive = books.passive.clone().unwrap_or_else(unit_phase_book);
    let est = &csi.csi;
    let beams = sdma_beam_select(est, mode, &books.connected, &books.ue)?;
    let gains = bs_codeword_gains(est, &books.bs);
    let assignment = if alt {
        alt_codeword_assignment(&gains, &est.kappa_r)?
    } else {
        best_codeword_for_all(&gains, est.k())?
    };
    let problem = SdmaProblem {
        channels: est,
        mode,
        w: assignment.iter().map(|&c| books.bs.words[c].vec.clone()).collect(),
        f: beams.f.iter().map(|c| c.vec.clone()).collect(),
        u: beams.u.iter().map(|c| c.vec.clone()).collect(),
        split: branch_split(mode, est.kappa_b),
        sigma2: scenario.sigma2,
        weights: scenario.weights.clone(),
        p_tot: scenario.p_tot,
    };
    let options = AltOptions {
        max_iters: spec.max_iters,
        tol: spec.tol,
        ..AltOptions::default()
    };
    let sol = alternating_phase_power_optimize(&problem, &passive, assignment, &options)?;
    let value = wsr(&csi.truth, mode, &sol.plan, scenario.sigma2, &scenario.weights)?;
    Ok(Outcome {
        wsr: value,
        iterations: sol.iterations,
    })
}

/// Errors that describe an unrealizable configuration rather than a fault.
fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible(_) | Error::TooFewCodewords(..) | Error::OversamplingViolation { .. } | Error::ResolutionMismatch { .. } | Error::InvalidIndex(_)
    )
}

/// Preferred connected column count for count sweeps: the per-axis minimum
/// for the configured (or default-geometry) departure angles.
fn preferred_a_y(spec: &ExperimentSpec) -> usize {
    let aods: Vec<(f64, f64)> = match spec.angles.as_ref().and_then(|a| a.ue_aod.clone()) {
        Some(v) => v,
        None => match geometric_angles(&spec.scenario) {
            Ok((_, _, ang)) => ang.ue.iter().map(|u| (u.aod_z, u.aod_y)).collect(),
            Err(_) => return spec.scenario.n_y,
        },
    };
    let (z, y): (Vec<f64>, Vec<f64>) = aods.into_iter().unzip();
    match min_transmit_elements(spec.scenario.k(), &z, &y) {
        Ok(b) => b.a_y_min,
        Err(_) => spec.scenario.n_y,
    }
}

fn threshold(spec: &ExperimentSpec) -> Option<usize> {
    let aods = spec.angles.as_ref()?.ue_aod.clone()?;
    let (z, y): (Vec<f64>, Vec<f64>) = aods.into_iter().unzip();
    min_transmit_elements(spec.scenario.k(), &z, &y).ok().map(|b| b.a_s_th)
}

/// Runs every (sweep value, trial) pair and returns rows in canonical order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    if spec.sweep.is_empty() || spec.trials == 0 {
        return Err(Error::InvalidPlan("experiments need a sweep value and a trial".into()));
    }
    spec.scenario.validate()?;
    let a_y_pref = preferred_a_y(spec);
    let a_th = threshold(spec);
    let jobs: Vec<(f64, usize)> = spec.sweep.iter().flat_map(|&v| (0..spec.trials).map(move |t| (v, t))).collect();
    let rows: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(value, trial)| run_job(spec, value, trial, a_y_pref, a_th))
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = rows.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

fn run_job(spec: &ExperimentSpec, value: f64, trial: usize, a_y_pref: usize, a_th: Option<usize>) -> Result<Vec<ResultRow>> {
    use ExperimentKind as E;
    let kind = spec.kind;
    let mut scenario = spec.scenario.clone();
    let draw = draw_trial(spec, trial);
    scenario.ue_positions = draw.ue_positions.clone();
    let mut res = spec.passive_resolution;
    let mut sdma_count: Option<usize> = None;
    match kind.sweep_variable() {
        "p_tot_dbm" => scenario.p_tot = dbm_to_watts(value),
        "n_t" => scenario.n_t = value as usize,
        "a" => sdma_count = Some(value as usize),
        _ => res = (value as usize, value as usize),
    }
    let row = |label: &str, out: Result<Outcome>, mc: usize, extra_flag: &str| -> Result<ResultRow> {
        let (wsr, iterations, flag) = match out {
            Ok(o) => (o.wsr, o.iterations, extra_flag.to_string()),
            Err(e) if is_infeasible(&e) => (0.0, 0, format!("infeasible: {e}")),
            Err(e) => return Err(e),
        };
        Ok(ResultRow {
            experiment: kind.name().into(),
            sweep_value: value,
            label: label.into(),
            trial,
            wsr: wsr.max(0.0),
            measurement_count: mc,
            iterations,
            flag,
        })
    };
    let csi = match scenario.validate().and_then(|_| acquire(spec, &scenario, &draw, None)) {
        Ok(c) => c,
        Err(e) if is_infeasible(&e) => {
            return Ok(vec![row("rdars", Err(e), 0, "")?]);
        }
        Err(e) => return Err(e),
    };
    let mc = csi.measurement_count;
    let local = ExperimentSpec {
        passive_resolution: res,
        ..spec.clone()
    };
    let spec = &local;
    let mut out = Vec::new();
    if kind.is_tdma() {
        let results: [(&str, Result<ModeConfig>); 3] = [
            ("rdars", tdma_mode(&scenario, spec.tdma_a)),
            ("das", tdma_mode(&scenario, spec.tdma_a).map(|m| m.with_reflection(false))),
            ("ris", ModeConfig::pure_ris(scenario.n_z, scenario.n_y, scenario.spacing)),
        ];
        for (label, mode) in results {
            let o = mode.and_then(|m| run_tdma(spec, &scenario, &csi, &m));
            out.push(row(label, o, mc, "")?);
        }
        if kind == E::TdmaPowerSweep {
            let bound = tdma_bound(&scenario, &csi.truth);
            out.push(row("bound", bound, mc, "")?);
        }
        return Ok(out);
    }
    let widest = kind == E::CodebookCompare;
    let make_mode = || match sdma_count {
        Some(a) => factor_count(a, a_y_pref, scenario.n_z, scenario.n_y).and_then(|(az, ay)| rdars_mode(&scenario, az, ay, None, None, false)),
        None => rdars_mode(&scenario, spec.a_z, spec.a_y, spec.stride_z, spec.stride_y, widest),
    };
    let flag = match (kind, sdma_count, a_th) {
        (E::TeThresholdSweep, Some(a), Some(th)) if a < th => "below_threshold",
        _ => "",
    };
    let rcb = CoordinateLayout::Reconfigurable;
    match kind {
        E::SdmaPowerSweep => {
            let o = make_mode().and_then(|m| run_sdma(spec, &scenario, &csi, &m, rcb, true));
            out.push(row("rdars", o, mc, flag)?);
            let o = make_mode().and_then(|m| run_sdma(spec, &scenario, &csi, &m.with_reflection(false), rcb, true));
            out.push(row("das", o, mc, flag)?);
        }
        E::AltcwCompare => {
            let o = make_mode().and_then(|m| run_sdma(spec, &scenario, &csi, &m, rcb, true));
            out.push(row("alt_cw", o, mc, flag)?);
            let o = make_mode().and_then(|m| run_sdma(spec, &scenario, &csi, &m, rcb, false));
            out.push(row("no_alt_cw", o, mc, flag)?);
        }
        E::CodebookCompare => {
            // Training runs on the strided mode itself so the book's angle
            // labels feed the channel estimate.
            for (label, layout) in [("rcb", rcb), ("fcb", CoordinateLayout::Fixed)] {
                let o = make_mode().and_then(|m| {
                    let own = acquire(spec, &scenario, &draw, Some((&m, layout)))?;
                    run_sdma(spec, &scenario, &own, &m, layout, true).map(|o| (o, own.measurement_count))
                });
                let (o, count) = match o {
                    Ok((o, c)) => (Ok(o), c),
                    Err(e) => (Err(e), mc),
                };
                out.push(row(label, o, count, flag)?);
            }
        }
        _ => {
            let o = make_mode().and_then(|m| run_sdma(spec, &scenario, &csi, &m, rcb, true));
            out.push(row("rdars", o, mc, flag)?);
        }
    }
    Ok(out)
}

/// Single connected element at the grid origin, or `a` elements in a
/// stride-1 block when `a > 1`.
fn tdma_mode(scenario: &Scenario, a: usize) -> Result<ModeConfig> {
    if a == 0 {
        return ModeConfig::pure_ris(scenario.n_z, scenario.n_y, scenario.spacing);
    }
    let (az, ay) = factor_count(a, scenario.n_y, scenario.n_z, scenario.n_y)?;
    rdars_mode(scenario, az, ay, Some(1), Some(1), false)
}

fn tdma_bound(scenario: &Scenario, truth: &ChannelSet) -> Result<Outcome> {
    let a = crate::tdma::optimal_te_count(scenario.n_z * scenario.n_y, truth.kappa_b);
    let wsr = crate::tdma::tdma_wsr_upper_bound(scenario, truth, a)?;
    Ok(Outcome { wsr, iterations: 0 })
}

// ---------------------------------------------------------------------------
// CSV

/// Column order of the result files.
pub const CSV_HEADER: [&str; 8] = ["experiment", "sweep_value", "label", "trial", "wsr", "measurement_count", "iterations", "flag"];

/// Writes rows with a header; floats use shortest round-trip scientific notation.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            format!("{:e}", r.sweep_value),
            r.label.clone(),
            r.trial.to_string(),
            format!("{:e}", r.wsr),
            r.measurement_count.to_string(),
            r.iterations.to_string(),
            r.flag.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or_default();
    raw.parse().map_err(|_| config_err(CSV_HEADER[i], format!("cannot parse `{raw}`")))
}

/// Parses a result file written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(config_err("header", format!("unexpected columns {:?}", header.iter().collect::<Vec<_>>())));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ResultRow {
                experiment: parse_field(&rec, 0)?,
                sweep_value: parse_field(&rec, 1)?,
                label: parse_field(&rec, 2)?,
                trial: parse_field(&rec, 3)?,
                wsr: parse_field(&rec, 4)?,
                measurement_count: parse_field(&rec, 5)?,
                iterations: parse_field(&rec, 6)?,
                flag: parse_field(&rec, 7)?,
            })
        })
        .collect()
}

/// Writes the connected and passive books of the configured SDMA mode.
pub fn dump_mode_codebooks<W: Write>(spec: &ExperimentSpec, mut out: W) -> Result<()> {
    let mode = rdars_mode(&spec.scenario, spec.a_z, spec.a_y, spec.stride_z, spec.stride_y, false)?;
    let books = beam_books(&spec.scenario, &mode, spec.passive_resolution, CoordinateLayout::Reconfigurable)?;
    writeln!(out, "# connected {}x{} ({} codewords)", books.connected.resolution_z, books.connected.resolution_y, books.connected.len())?;
    crate::codebook::dump_codebook(&books.connected, &mut out)?;
    if let Some(p) = &books.passive {
        writeln!(out, "# passive {}x{} ({} codewords)", p.resolution_z, p.resolution_y, p.len())?;
        crate::codebook::dump_codebook(p, &mut out)?;
    }
    Ok(())
}
