//! Randomized invariants of the channel model, codebooks and optimizers.

use proptest::prelude::*;

use rdars_core::channel::{
    sinr, steering_vector, wsr, ArrayDims, BeamPlan, ChannelSet, Scenario, UeAngles, VirtualAngles,
};
use rdars_core::codebook::{
    build_dft_codebook, build_hierarchical_codebook, check_orthogonality, connected_rcb_for_mode, grid_direction,
    passive_rcb_for_mode, wrap_angle, CodebookKind, CoordinateLayout,
};
use rdars_core::oracle::{enumerate_te_count, exhaustive_assignment, exhaustive_beam_search, grid_power_search, DEFAULT_CAP};
use rdars_core::rdars_config::{min_transmit_elements, placement_candidates, ModeConfig, Placement};
use rdars_core::sdma::{
    alt_codeword_assignment, alternating_phase_power_optimize, beam_conflicts, branch_split, bs_codeword_gains, pairwise_interference,
    pairwise_interference_direct, sdma_beam_select, water_filling, AltOptions, SdmaProblem,
};
use rdars_core::tdma::{normalized_slot_gain, optimal_power_split, rdars_gain, tdma_solve, BeamBooks, SlotSearch};
use rdars_core::{CVector, C64};

const LAMBDA: f64 = 1.0;
const HALF: f64 = 0.5;

fn dims(n_t: usize, n_u: usize, n_z: usize, n_y: usize) -> ArrayDims {
    ArrayDims {
        n_t,
        n_u,
        n_z,
        n_y,
        spacing: HALF,
        wavelength: LAMBDA,
    }
}

fn ue_angles(raw: &[(f64, f64, f64)]) -> Vec<UeAngles> {
    raw.iter().map(|&(aod_z, aod_y, aoa)| UeAngles { aod_z, aod_y, aoa }).collect()
}

fn books_for(mode: &ModeConfig, d: ArrayDims) -> BeamBooks {
    BeamBooks {
        bs: build_dft_codebook(d.n_t, HALF, d.n_t, LAMBDA, CodebookKind::Bs).unwrap(),
        ue: build_dft_codebook(d.n_u, HALF, d.n_u, LAMBDA, CodebookKind::Ue).unwrap(),
        connected: connected_rcb_for_mode(mode, LAMBDA, CoordinateLayout::Reconfigurable).unwrap(),
        passive: passive_rcb_for_mode(mode, d.n_z, d.n_y, LAMBDA, CoordinateLayout::Reconfigurable).ok(),
    }
}

fn scenario_for(d: ArrayDims, k: usize, p_tot: f64, sigma2: f64) -> Scenario {
    Scenario {
        n_t: d.n_t,
        n_u: d.n_u,
        n_z: d.n_z,
        n_y: d.n_y,
        spacing: d.spacing,
        wavelength: d.wavelength,
        p_tot,
        sigma2,
        weights: vec![1.0 / k as f64; k],
        ue_positions: vec![[10.0, 50.0, 2.0]; k],
        ..Scenario::default()
    }
}

fn angle() -> impl Strategy<Value = f64> {
    -1.0f64..1.0
}

fn ue_triplets(k: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((angle(), angle(), angle()), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_entries_unit_modulus_and_full_gain(n in 1usize..40, phi in angle(), spacing in 0.1f64..1.0) {
        let a = steering_vector(n, spacing, phi, LAMBDA).unwrap();
        for v in a.iter() {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        let gain = a.dotc(&a);
        prop_assert!((gain.re - n as f64).abs() < 1e-9 && gain.im.abs() < 1e-9);
        let mirrored = steering_vector(n, spacing, -phi, LAMBDA).unwrap();
        prop_assert!((mirrored - a.conjugate()).camax() < 1e-12);
    }

    #[test]
    fn channels_are_rank_one(
        kb in 1e-4f64..1.0,
        bs_aod in angle(), rz in angle(), ry in angle(),
        ues in ue_triplets(2),
    ) {
        let angles = VirtualAngles { bs_aod, rdars_aoa_z: rz, rdars_aoa_y: ry, ue: ue_angles(&ues) };
        let ch = ChannelSet::from_parts(dims(8, 4, 4, 4), kb, vec![1e-3, 2e-3], angles).unwrap();
        let mats = std::iter::once(&ch.h_b).chain(ch.h_r.iter());
        for h in mats {
            let sv = h.clone().singular_values();
            let top = sv.max();
            let second = sv.iter().copied().filter(|&s| s < top).fold(0.0, f64::max);
            prop_assert!(second <= 1e-9 * top, "second singular value {second} vs {top}");
        }
    }

    #[test]
    fn sinr_ignores_common_beam_phases(
        theta_w in 0.0f64..6.3, theta_u in 0.0f64..6.3,
        bs_aod in angle(), ues in ue_triplets(2),
    ) {
        let d = dims(4, 2, 2, 4);
        let angles = VirtualAngles { bs_aod, rdars_aoa_z: 0.3, rdars_aoa_y: -0.2, ue: ue_angles(&ues) };
        let ch = ChannelSet::from_parts(d, 0.2, vec![0.5, 0.4], angles).unwrap();
        let mode = ModeConfig::new(2, 4, HALF, &[(0, 0), (1, 2)]).unwrap();
        let books = books_for(&mode, d);
        let plan = BeamPlan {
            w: vec![books.bs.words[1].vec.clone(), books.bs.words[2].vec.clone()],
            f: vec![books.connected.words[0].vec.clone(), books.connected.words[3].vec.clone()],
            u: vec![books.ue.words[0].vec.clone(), books.ue.words[1].vec.clone()],
            phi: books.passive.as_ref().unwrap().expand(5, 8, C64::new(1.0, 0.0)),
            p_b: vec![0.1, 0.2],
            p_r: vec![0.3, 0.1],
        };
        let mut rotated = plan.clone();
        let rw = C64::from_polar(1.0, theta_w);
        let ru = C64::from_polar(1.0, theta_u);
        // A stream's BS and RDARS beams rotate together.
        rotated.w[1] *= rw;
        rotated.f[1] *= rw;
        rotated.u[0] *= ru;
        for k in 0..2 {
            let a = sinr(&ch, &mode, &plan, 1e-2, k).unwrap();
            let b = sinr(&ch, &mode, &rotated, 1e-2, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn wsr_decreases_with_noise(s1 in 1e-6f64..1.0, factor in 1.0f64..100.0, ues in ue_triplets(2)) {
        let d = dims(4, 2, 2, 2);
        let angles = VirtualAngles { bs_aod: 0.1, rdars_aoa_z: -0.4, rdars_aoa_y: 0.6, ue: ue_angles(&ues) };
        let ch = ChannelSet::from_parts(d, 0.3, vec![0.2, 0.7], angles).unwrap();
        let mode = ModeConfig::new(2, 2, HALF, &[(1, 1)]).unwrap();
        let books = books_for(&mode, d);
        let plan = BeamPlan {
            w: vec![books.bs.words[0].vec.clone(); 2],
            f: vec![books.connected.words[0].vec.clone(); 2],
            u: vec![books.ue.words[1].vec.clone(); 2],
            phi: CVector::from_element(4, C64::new(1.0, 0.0)),
            p_b: vec![0.2, 0.1],
            p_r: vec![0.5, 0.4],
        };
        let weights = [0.5, 0.5];
        let low = wsr(&ch, &mode, &plan, s1, &weights).unwrap();
        let high = wsr(&ch, &mode, &plan, s1 * factor, &weights).unwrap();
        prop_assert!(high <= low * (1.0 + 1e-12));
    }

    #[test]
    fn placement_candidates_are_orthogonal_and_fit(n_z in 1usize..10, n_y in 1usize..10, a_z in 1usize..4, a_y in 1usize..4) {
        prop_assume!(a_z <= n_z && a_y <= n_y);
        let cands = placement_candidates(n_z, n_y, a_z, a_y).unwrap();
        prop_assert!(!cands.is_empty());
        for c in &cands {
            prop_assert!((a_z - 1) * c.q < n_z && (a_y - 1) * c.p < n_y);
            prop_assert_eq!(c.rows.len(), a_z);
            prop_assert_eq!(c.cols.len(), a_y);
            let mode = ModeConfig::from_placement(n_z, n_y, HALF, c).unwrap();
            let book = connected_rcb_for_mode(&mode, LAMBDA, CoordinateLayout::Reconfigurable).unwrap();
            prop_assert!(check_orthogonality(&book) < 1e-9);
        }
    }

    #[test]
    fn element_threshold_shrinks_with_separation(s in 0.05f64..1.0, extra in 0.0f64..0.9, t in 0.05f64..1.9) {
        let wide = (s + extra).min(1.9);
        let narrow = min_transmit_elements(2, &[-s / 2.0, s / 2.0], &[-t / 2.0, t / 2.0]).unwrap();
        let broad = min_transmit_elements(2, &[-wide / 2.0, wide / 2.0], &[-t / 2.0, t / 2.0]).unwrap();
        prop_assert!(broad.a_s_th <= narrow.a_s_th);
        prop_assert!(broad.a_z_min <= narrow.a_z_min);
    }

    #[test]
    fn enough_connected_rows_avoid_beam_conflicts(raw in prop::collection::vec((angle(), angle()), 2..=3)) {
        let k = raw.len();
        let z: Vec<f64> = raw.iter().map(|r| r.0).collect();
        let y: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let min_sep = |v: &[f64]| {
            let mut m = f64::INFINITY;
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    m = m.min((v[i] - v[j]).abs());
                }
            }
            m
        };
        prop_assume!(min_sep(&z) > 0.1 && min_sep(&y) > 0.1);
        let bound = min_transmit_elements(k, &z, &y).unwrap();
        let (n_z, n_y) = (bound.a_z_min + 1, bound.a_y_min + 1);
        let placement = Placement {
            q: 1,
            p: 1,
            rows: (0..bound.a_z_min).collect(),
            cols: (0..bound.a_y_min).collect(),
        };
        let mode = ModeConfig::from_placement(n_z, n_y, HALF, &placement).unwrap();
        let d = dims(4, 2, n_z, n_y);
        let angles = VirtualAngles {
            bs_aod: 0.0,
            rdars_aoa_z: 0.0,
            rdars_aoa_y: 0.0,
            ue: raw.iter().map(|&(aod_z, aod_y)| UeAngles { aod_z, aod_y, aoa: 0.0 }).collect(),
        };
        let ch = ChannelSet::from_parts(d, 0.1, vec![0.1; k], angles).unwrap();
        let books = books_for(&mode, d);
        let beams = sdma_beam_select(&ch, &mode, &books.connected, &books.ue).unwrap();
        let idx: Vec<usize> = beams.f.iter().map(|c| c.index).collect();
        prop_assert_eq!(beam_conflicts(&idx), 0, "indices {:?} for angles {:?}", idx, raw);
    }

    #[test]
    fn power_split_spends_the_whole_budget(n in 1usize..300, a_frac in 0.0f64..1.0, n_t in 1usize..128, kb in 1e-5f64..1.0, p in 1e-4f64..100.0) {
        let a = ((a_frac * n as f64) as usize).clamp(1, n);
        let s = optimal_power_split(a, n, n_t, kb, p).unwrap();
        prop_assert!(s.p_b >= 0.0 && s.p_r >= 0.0);
        let spent = n_t as f64 * s.p_b + a as f64 * s.p_r;
        prop_assert!((spent - p).abs() <= 1e-12 * p);
    }

    #[test]
    fn grid_never_beats_closed_form(n in 1usize..200, a_frac in 0.0f64..1.0, kb in 1e-4f64..1.0, p in 1e-3f64..10.0) {
        let a = ((a_frac * n as f64) as usize).clamp(1, n);
        let s = optimal_power_split(a, n, 16, kb, p).unwrap();
        let closed = normalized_slot_gain(a, n, kb, p, s.p_r);
        let grid = grid_power_search(a, n, 16, kb, p, 2000).unwrap().best_value;
        prop_assert!(grid <= closed * (1.0 + 1e-12));
    }

    #[test]
    fn rdars_never_below_das(n in 1usize..300, kb in 1e-5f64..1.0, kr in 1e-5f64..1.0, p in 1e-3f64..10.0) {
        let das = rdars_gain(n, n, kb, kr, 4, p).unwrap();
        for a in 1..=n {
            prop_assert!(rdars_gain(a, n, kb, kr, 4, p).unwrap() >= das * (1.0 - 1e-12));
        }
    }

    #[test]
    fn on_grid_single_user_rate_is_placement_independent(
        grid in prop::sample::select(vec![(4usize, 4usize), (4, 8), (8, 8)]),
        a_z in 1usize..4, a_y in 1usize..4,
        iz in 0usize..8, iy in 0usize..8, jz in 0usize..8, jy in 0usize..8,
        b in 0usize..8, r in 0usize..4,
        p_dbm in 0.0f64..30.0,
    ) {
        let (n_z, n_y) = grid;
        prop_assume!(a_z < n_z && a_y < n_y);
        let d = dims(8, 4, n_z, n_y);
        let aod_z = grid_direction(iz % a_z, a_z);
        let aod_y = grid_direction(iy % a_y, a_y);
        let angles = VirtualAngles {
            bs_aod: grid_direction(b, 8),
            rdars_aoa_z: wrap_angle(aod_z - grid_direction(jz % n_z, n_z)),
            rdars_aoa_y: wrap_angle(aod_y - grid_direction(jy % n_y, n_y)),
            ue: vec![UeAngles { aod_z, aod_y, aoa: grid_direction(r, 4) }],
        };
        let (kb, kr) = (0.05, 1e-4);
        let ch = ChannelSet::from_parts(d, kb, vec![kr], angles).unwrap();
        let s = scenario_for(d, 1, rdars_core::units::dbm_to_watts(p_dbm), rdars_core::units::dbm_to_watts(-80.0));
        let expected = (rdars_gain(a_z * a_y, n_z * n_y, kb, kr, 4, s.p_tot).unwrap() / s.sigma2).ln_1p() / std::f64::consts::LN_2;
        for c in placement_candidates(n_z, n_y, a_z, a_y).unwrap() {
            let mode = ModeConfig::from_placement(n_z, n_y, HALF, &c).unwrap();
            let sol = tdma_solve(&ch, &ch, &mode, &books_for(&mode, d), &s, SlotSearch::Codebook).unwrap();
            prop_assert!((sol.wsr - expected).abs() <= 1e-9 * expected, "q={} p={}: {} vs {}", c.q, c.p, sol.wsr, expected);
        }
    }

    #[test]
    fn simulated_tdma_never_exceeds_bound(bs_aod in angle(), rz in angle(), ry in angle(), ues in ue_triplets(3), p_dbm in 0.0f64..40.0) {
        let d = dims(16, 4, 4, 8);
        let angles = VirtualAngles { bs_aod, rdars_aoa_z: rz, rdars_aoa_y: ry, ue: ue_angles(&ues) };
        let ch = ChannelSet::from_parts(d, 0.02, vec![1e-4, 2e-4, 5e-5], angles).unwrap();
        let s = scenario_for(d, 3, rdars_core::units::dbm_to_watts(p_dbm), rdars_core::units::dbm_to_watts(-80.0));
        let mode = ModeConfig::new(4, 8, HALF, &[(0, 0)]).unwrap();
        let sol = tdma_solve(&ch, &ch, &mode, &books_for(&mode, d), &s, SlotSearch::Codebook).unwrap();
        prop_assert!(sol.wsr <= sol.upper_bound.unwrap() * (1.0 + 1e-9));
    }

    #[test]
    fn on_grid_interference_vanishes(
        a_z in 1usize..4, a_y in 1usize..4, pick in 0usize..64,
        cells in prop::collection::btree_set((0usize..3, 0usize..3), 2..=3),
    ) {
        let cells: Vec<(usize, usize)> = cells.into_iter().filter(|&(z, y)| z < a_z && y < a_y).collect();
        prop_assume!(cells.len() >= 2);
        let cands = placement_candidates(8, 8, a_z, a_y).unwrap();
        let mode = ModeConfig::from_placement(8, 8, HALF, &cands[pick % cands.len()]).unwrap();
        let book = connected_rcb_for_mode(&mode, LAMBDA, CoordinateLayout::Reconfigurable).unwrap();
        for &(zi, yi) in &cells {
            let f = &book.words[zi * a_y + yi];
            for &(zk, yk) in cells.iter().filter(|&&c| c != (zi, yi)) {
                let leak = pairwise_interference(&mode, f, grid_direction(zk, a_z), grid_direction(yk, a_y), LAMBDA).unwrap();
                prop_assert!(leak <= 1e-18, "leak {leak}");
            }
        }
    }

    #[test]
    fn water_filling_meets_kkt(
        raw in prop::collection::vec((1e-3f64..10.0, 0.0f64..1.0, 0.1f64..1.0), 1..6),
        sigma2 in 1e-3f64..1.0, p in 1e-2f64..10.0,
    ) {
        let g: Vec<f64> = raw.iter().map(|r| r.0).collect();
        let int: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let w: Vec<f64> = raw.iter().map(|r| r.2).collect();
        let pw = water_filling(&g, &int, sigma2, p, &w).unwrap();
        let total: f64 = pw.iter().sum();
        prop_assert!((total - p).abs() <= 1e-9 * p);
        // Active users share one level (p_k + c_k)/w_k; inactive floors c_k/w_k sit above it.
        let floor: Vec<f64> = (0..g.len()).map(|k| (int[k] + sigma2) / g[k]).collect();
        let active: Vec<usize> = (0..g.len()).filter(|&k| pw[k] > 1e-12 * p).collect();
        prop_assert!(!active.is_empty());
        let level = (pw[active[0]] + floor[active[0]]) / w[active[0]];
        for k in 0..g.len() {
            prop_assert!(pw[k] >= 0.0);
            if active.contains(&k) {
                prop_assert!(((pw[k] + floor[k]) / w[k] - level).abs() <= 1e-8 * level);
            } else {
                prop_assert!(floor[k] / w[k] >= level * (1.0 - 1e-8));
            }
        }
    }

    #[test]
    fn factored_interference_matches_direct_sum(
        rows in prop::collection::btree_set(0usize..4, 1..4),
        cols in prop::collection::btree_set(0usize..5, 1..4),
        word in 0usize..20, vz in angle(), vy in angle(),
    ) {
        let conn: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
        let mode = ModeConfig::new(4, 5, HALF, &conn).unwrap();
        let book = connected_rcb_for_mode(&mode, LAMBDA, CoordinateLayout::Reconfigurable).unwrap();
        let f = &book.words[word % book.len()];
        let fast = pairwise_interference(&mode, f, vz, vy, LAMBDA).unwrap();
        let slow = pairwise_interference_direct(&mode, &f.vec, vz, vy, LAMBDA).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
    }

    #[test]
    fn oracle_evaluation_counts(n in 1usize..7, k in 1usize..4, te_n in 1usize..50) {
        prop_assume!(k <= n);
        let r = exhaustive_assignment(n, k, DEFAULT_CAP, |a| a.iter().sum::<usize>() as f64).unwrap();
        let perms: u128 = (0..k).map(|i| (n - i) as u128).product();
        prop_assert_eq!(r.evaluations, perms);
        prop_assert_eq!(enumerate_te_count(te_n, 0.1, 1e-3, 4, 1.0, 1e-9).evaluations, te_n as u128 + 1);
    }

    #[test]
    fn hierarchy_children_cover_their_parent(log_n in 1u32..7, m in 2usize..4) {
        let n = m.pow(log_n);
        let h = build_hierarchical_codebook(n, HALF, m, LAMBDA).unwrap();
        for layer in 1..h.depth() {
            let width = 2.0 / h.layers[layer - 1].len() as f64;
            for (parent, pw) in h.layers[layer - 1].words.iter().enumerate() {
                let kids = h.children(layer, parent);
                prop_assert_eq!(kids.len(), m);
                for c in kids {
                    let dir = h.layers[layer].words[c].dir_z;
                    prop_assert!((dir - pw.dir_z).abs() <= width / 2.0 + 1e-12);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn alternating_trace_is_monotone(bs_aod in angle(), rz in angle(), ry in angle(), ues in ue_triplets(3), kb in 1e-3f64..0.5) {
        let d = dims(8, 4, 4, 4);
        let angles = VirtualAngles { bs_aod, rdars_aoa_z: rz, rdars_aoa_y: ry, ue: ue_angles(&ues) };
        let ch = ChannelSet::from_parts(d, kb, vec![1e-4, 2e-4, 1.5e-4], angles).unwrap();
        let cands = placement_candidates(4, 4, 3, 1).unwrap();
        let mode = ModeConfig::from_placement(4, 4, HALF, &cands[0]).unwrap();
        let books = books_for(&mode, d);
        let passive = books.passive.clone().unwrap();
        let beams = sdma_beam_select(&ch, &mode, &books.connected, &books.ue).unwrap();
        let assignment = alt_codeword_assignment(&bs_codeword_gains(&ch, &books.bs), &ch.kappa_r).unwrap();
        let problem = SdmaProblem {
            channels: &ch,
            mode: &mode,
            w: assignment.iter().map(|&c| books.bs.words[c].vec.clone()).collect(),
            f: beams.f.iter().map(|c| c.vec.clone()).collect(),
            u: beams.u.iter().map(|c| c.vec.clone()).collect(),
            split: branch_split(&mode, kb),
            sigma2: 1e-11,
            weights: vec![1.0 / 3.0; 3],
            p_tot: 0.1,
        };
        let sol = alternating_phase_power_optimize(&problem, &passive, assignment, &AltOptions::default()).unwrap();
        prop_assert!(sol.wsr_trace.windows(2).all(|w| w[1] >= w[0]), "trace {:?}", sol.wsr_trace);
        let spent: f64 = sol.powers.iter().sum();
        prop_assert!(spent <= 0.1 * (1.0 + 1e-9));
    }

    #[test]
    fn tdma_oracle_dominates_heuristic(bs_aod in angle(), rz in angle(), ry in angle(), ues in ue_triplets(2)) {
        let d = dims(4, 2, 2, 2);
        let angles = VirtualAngles { bs_aod, rdars_aoa_z: rz, rdars_aoa_y: ry, ue: ue_angles(&ues) };
        let ch = ChannelSet::from_parts(d, 0.3, vec![1e-3, 2e-3], angles).unwrap();
        let s = scenario_for(d, 2, 1.0, 1e-9);
        let mode = ModeConfig::new(2, 2, HALF, &[(0, 0)]).unwrap();
        let books = books_for(&mode, d);
        let sol = tdma_solve(&ch, &ch, &mode, &books, &s, SlotSearch::Codebook).unwrap();
        let oracle = exhaustive_beam_search(&ch, &mode, &books, &sol.splits, s.sigma2, &s.weights, DEFAULT_CAP).unwrap();
        prop_assert!(oracle.best_value >= sol.wsr * (1.0 - 1e-12), "oracle {} < heuristic {}", oracle.best_value, sol.wsr);
    }
}
