//! Brute-force references for validating the closed forms and heuristics.
//!
//! Every routine here works entry by entry with scalar complex arithmetic and
//! refuses, rather than samples, when a scan would exceed its cap.

use std::collections::BTreeSet;
use std::f64::consts::{LN_2, PI};

use crate::channel::ChannelSet;
use crate::codebook::Codebook;
use crate::rdars_config::ModeConfig;
use crate::sdma::SdmaProblem;
use crate::tdma::{BeamBooks, PowerSplit};
use crate::{Error, Result, C64};

/// Default cap on the number of evaluated configurations.
pub const DEFAULT_CAP: u128 = 10_000_000;

/// Result of an exhaustive scan.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub best_value: f64,
    pub best_config: String,
    pub evaluations: u128,
}

fn check_cap(needed: u128, cap: u128) -> Result<()> {
    if needed > cap {
        Err(Error::CapExceeded { needed, cap })
    } else {
        Ok(())
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Phase vector of a passive codeword on the full grid (1 off the support).
fn phase_vector(book: &Codebook, idx: usize, n: usize) -> Vec<C64> {
    let mut phi = vec![C64::new(1.0, 0.0); n];
    for (j, &e) in book.support.iter().enumerate() {
        let v = book.words[idx].vec[j];
        if v.norm() > 0.0 {
            phi[e] = v;
        }
    }
    phi
}

/// `u^H H_r (gate ⊙ φ ⊙ (H_b w))` by explicit triple summation.
fn reflected(ch: &ChannelSet, k: usize, gate: &[f64], u: &[C64], phi: &[C64], w: &[C64]) -> C64 {
    let (nu, n, nt) = (ch.dims.n_u, ch.dims.n(), ch.dims.n_t);
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..nu {
        for e in 0..n {
            if gate[e] == 0.0 {
                continue;
            }
            let mut hb = C64::new(0.0, 0.0);
            for l in 0..nt {
                hb += ch.h_b[(e, l)] * w[l];
            }
            acc += u[m].conj() * ch.h_r[k][(m, e)] * phi[e] * hb;
        }
    }
    acc
}

/// `u^H H_r Ã f` by explicit summation.
fn direct(ch: &ChannelSet, k: usize, conn: &[usize], u: &[C64], f: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (m, um) in u.iter().enumerate() {
        for (j, &e) in conn.iter().enumerate() {
            acc += um.conj() * ch.h_r[k][(m, e)] * f[j];
        }
    }
    acc
}

/// Exhaustive TDMA search: for every slot, every `(w, f, u, φ)` tuple with the
/// slot's fixed powers; returns the best weighted sum of slot rates. Passive
/// codewords are taken up to a common phase.
pub fn exhaustive_beam_search(
    channels: &ChannelSet,
    mode: &ModeConfig,
    books: &BeamBooks,
    powers: &[PowerSplit],
    sigma2: f64,
    weights: &[f64],
    cap: u128,
) -> Result<OracleReport> {
    let k = channels.k();
    if powers.len() != k || weights.len() != k {
        return Err(Error::InvalidDimension("one power split and weight per UE".into()));
    }
    let n_phi = books.passive.as_ref().map_or(1, |b| b.len());
    let n_f = books.connected.len().max(1);
    let needed = k as u128 * books.bs.len() as u128 * n_f as u128 * books.ue.len() as u128 * n_phi as u128;
    check_cap(needed, cap)?;
    let n = mode.n();
    let gate: Vec<f64> = (0..n)
        .map(|e| if mode.reflection_enabled() && !mode.connected_indices().contains(&e) { 1.0 } else { 0.0 })
        .collect();
    let conn = mode.connected_indices();
    let mut total = 0.0;
    let mut configs = Vec::with_capacity(k);
    let mut evaluations = 0u128;
    for slot in 0..k {
        let (sb, sr) = (powers[slot].p_b.sqrt(), powers[slot].p_r.sqrt());
        let mut best = (f64::NEG_INFINITY, String::new());
        for p in 0..n_phi {
            let phi = match &books.passive {
                Some(b) => phase_vector(b, p, n),
                None => vec![C64::new(1.0, 0.0); n],
            };
            for u in &books.ue.words {
                let u_s: Vec<C64> = u.vec.iter().copied().collect();
                for w in &books.bs.words {
                    let w_s: Vec<C64> = w.vec.iter().copied().collect();
                    let x = reflected(channels, slot, &gate, &u_s, &phi, &w_s);
                    for fi in 0..n_f {
                        let y = match books.connected.words.get(fi) {
                            Some(f) => direct(channels, slot, conn, &u_s, f.vec.as_slice()),
                            None => C64::new(0.0, 0.0),
                        };
                        evaluations += 1;
                        // Best common phase of the passive codeword: the paths add in magnitude.
                        let amp = x.norm() * sb + y.norm() * sr;
                        let rate = log2_1p(amp * amp / sigma2);
                        if rate > best.0 {
                            best = (rate, format!("slot {slot}: w={} f={fi} u={} phi={p}", w.index, u.index));
                        }
                    }
                }
            }
        }
        total += weights[slot] * best.0;
        configs.push(best.1);
    }
    Ok(OracleReport {
        best_value: total,
        best_config: configs.join("; "),
        evaluations,
    })
}

/// Grid search of the coherent slot gain `(κ_b(N−a)√(P−aP_R) + √(aP_R))²`
/// over `P_R = i·P/(a·G)`, `i = 1..=G`.
pub fn grid_power_search(a: usize, n: usize, n_t: usize, kappa_b: f64, p_tot: f64, grid_points: usize) -> Result<OracleReport> {
    if grid_points < 1000 {
        return Err(Error::InvalidDimension("grid search needs at least 1000 points".into()));
    }
    if a == 0 || a > n || n_t == 0 {
        return Err(Error::InvalidDimension(format!("grid search needs 1 <= a <= N, got a = {a}")));
    }
    let af = a as f64;
    let c = kappa_b * (n - a) as f64;
    let step = p_tot / af / grid_points as f64;
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    for i in 1..=grid_points {
        let p_r = step * i as f64;
        let rest = (p_tot - af * p_r).max(0.0);
        let amp = c * rest.sqrt() + (af * p_r).sqrt();
        let g = amp * amp;
        if g > best {
            (best, arg) = (g, p_r);
        }
    }
    Ok(OracleReport {
        best_value: best,
        best_config: format!("p_r={arg:e}"),
        evaluations: grid_points as u128,
    })
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut best = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Enumerates every connected-element count `a ∈ {0, …, N}`: `a = 0` is the
/// pure reflecting surface, `a ≥ 1` uses the best split found numerically.
/// Returns the rate-maximizing `a` (lowest on ties).
pub fn enumerate_te_count(n: usize, kappa_b: f64, kappa_r: f64, n_u: usize, p_tot: f64, sigma2: f64) -> OracleReport {
    let nf = n as f64;
    let ris = p_tot * kappa_b * kappa_b * kappa_r * kappa_r * n_u as f64 * nf * nf;
    let mut best = (log2_1p(ris / sigma2), 0usize);
    for a in 1..=n {
        let c = kappa_b * (n - a) as f64;
        // Total power x on the connected elements.
        let (_, amp) = golden_max(|x| c * (p_tot - x).max(0.0).sqrt() + x.max(0.0).sqrt(), 0.0, p_tot, 200);
        let rate = log2_1p(kappa_r * kappa_r * n_u as f64 * amp * amp / sigma2);
        if rate > best.0 * (1.0 + 1e-12) {
            best = (rate, a);
        }
    }
    OracleReport {
        best_value: best.0,
        best_config: format!("a={}", best.1),
        evaluations: n as u128 + 1,
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r = 1u128;
    for i in 0..k as u128 {
        r = r * (n as u128 - i) / (i + 1);
    }
    r
}

/// Uniform stride of an index set, if it has one (single elements have none).
fn uniform_stride(set: &[usize]) -> Option<usize> {
    if set.len() < 2 {
        return None;
    }
    let s = set[1] - set[0];
    set.windows(2).all(|w| w[1] - w[0] == s).then_some(s)
}

/// Result of [`placement_orthogonality_scan`].
#[derive(Debug, Clone)]
pub struct PlacementScan {
    /// `best_value` is the number of orthogonal placements.
    pub report: OracleReport,
    /// Orthogonal `(rows, cols)` placements.
    pub orthogonal: Vec<(Vec<usize>, Vec<usize>)>,
    /// Row strides of orthogonal placements whose rows and columns are both uniform.
    pub row_strides: BTreeSet<usize>,
    pub col_strides: BTreeSet<usize>,
}

/// Classifies every product placement of `a_z` rows and `a_y` columns on a
/// half-wavelength grid by the largest off-diagonal correlation of its
/// connected codebook.
pub fn placement_orthogonality_scan(n_z: usize, n_y: usize, a_z: usize, a_y: usize, cap: u128) -> Result<PlacementScan> {
    if a_z == 0 || a_y == 0 || a_z > n_z || a_y > n_y {
        return Err(Error::Infeasible(format!("{a_z}x{a_y} placement on a {n_z}x{n_y} grid")));
    }
    let needed = binomial(n_z, a_z) * binomial(n_y, a_y);
    check_cap(needed, cap)?;
    let rows = subsets(n_z, a_z);
    let cols = subsets(n_y, a_y);
    let a = (a_z * a_y) as f64;
    let dir = |i: usize, res: usize| -1.0 + (2 * i + 1) as f64 / res as f64;
    let mut orthogonal = Vec::new();
    let mut row_strides = BTreeSet::new();
    let mut col_strides = BTreeSet::new();
    let mut evaluations = 0u128;
    for r in &rows {
        for c in &cols {
            evaluations += 1;
            let word = |fz: usize, fy: usize| -> Vec<C64> {
                let mut v = Vec::with_capacity(r.len() * c.len());
                for &ri in r {
                    for &ci in c {
                        let ph = PI * (ri as f64 * dir(fz, a_z) + ci as f64 * dir(fy, a_y));
                        v.push(C64::from_polar(1.0 / a.sqrt(), ph));
                    }
                }
                v
            };
            let words: Vec<Vec<C64>> = (0..a_z).flat_map(|fz| (0..a_y).map(move |fy| (fz, fy))).map(|(fz, fy)| word(fz, fy)).collect();
            let mut worst = 0.0f64;
            for i in 0..words.len() {
                for j in 0..words.len() {
                    if i != j {
                        let dot: C64 = words[i].iter().zip(&words[j]).map(|(x, y)| x.conj() * y).sum();
                        worst = worst.max(dot.norm());
                    }
                }
            }
            if worst < 1e-9 {
                let (qs, ps) = (uniform_stride(r), uniform_stride(c));
                let q = if a_z == 1 { Some(1) } else { qs };
                let p = if a_y == 1 { Some(1) } else { ps };
                if let (Some(q), Some(p)) = (q, p) {
                    row_strides.insert(q);
                    col_strides.insert(p);
                }
                orthogonal.push((r.clone(), c.clone()));
            }
        }
    }
    Ok(PlacementScan {
        report: OracleReport {
            best_value: orthogonal.len() as f64,
            best_config: format!("{} orthogonal of {evaluations}", orthogonal.len()),
            evaluations,
        },
        orthogonal,
        row_strides,
        col_strides,
    })
}

/// Maximizes `objective` over every injective map of `k` users onto
/// `n_codewords` codewords (`k!·C(n, k)` assignments).
pub fn exhaustive_assignment(n_codewords: usize, k: usize, cap: u128, objective: impl Fn(&[usize]) -> f64) -> Result<OracleReport> {
    if n_codewords < k {
        return Err(Error::TooFewCodewords(n_codewords, k));
    }
    let mut needed = 1u128;
    for i in 0..k as u128 {
        needed *= n_codewords as u128 - i;
    }
    check_cap(needed, cap)?;
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, f: &dyn Fn(&[usize]) -> f64, best: &mut (f64, Vec<usize>), count: &mut u128) {
        if cur.len() == k {
            *count += 1;
            let v = f(cur);
            if v > best.0 {
                *best = (v, cur.clone());
            }
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                rec(n, k, cur, used, f, best, count);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut count = 0;
    rec(n_codewords, k, &mut Vec::new(), &mut vec![false; n_codewords], &objective, &mut best, &mut count);
    Ok(OracleReport {
        best_value: best.0,
        best_config: format!("{:?}", best.1),
        evaluations: count,
    })
}

/// Noiseless static-phase reference: the `(BS, receive)` bottom-codeword pair
/// maximizing `|r^H H_b b|²`. The receive book's `support` maps its entries
/// onto the grid.
pub fn exhaustive_training_pair(channels: &ChannelSet, bs_book: &Codebook, recv_book: &Codebook, cap: u128) -> Result<OracleReport> {
    let needed = bs_book.len() as u128 * recv_book.len() as u128;
    check_cap(needed, cap)?;
    let nt = channels.dims.n_t;
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for b in &bs_book.words {
        let field: Vec<C64> = recv_book
            .support
            .iter()
            .map(|&e| (0..nt).map(|l| channels.h_b[(e, l)] * b.vec[l]).sum())
            .collect();
        for r in &recv_book.words {
            let v: C64 = r.vec.iter().zip(&field).map(|(c, x)| c.conj() * x).sum();
            if v.norm_sqr() > best.0 * (1.0 + 1e-12) {
                best = (v.norm_sqr(), (b.index, r.index));
            }
        }
    }
    Ok(OracleReport {
        best_value: best.0,
        best_config: format!("b={} r={}", best.1 .0, best.1 .1),
        evaluations: needed,
    })
}

/// Joint search over every passive codeword and a two-user power grid
/// (`p_1 = i·P/(G−1)`, `p_2 = P − p_1`), refined by golden-section search
/// around the best grid point of each codeword. One-user problems take the
/// whole budget.
pub fn exhaustive_phase_power_search(problem: &SdmaProblem, passive_book: &Codebook, grid_points: usize, cap: u128) -> Result<OracleReport> {
    let ch = problem.channels;
    let mode = problem.mode;
    let k = ch.k();
    if k == 0 || k > 2 {
        return Err(Error::InvalidDimension("joint search supports one or two users".into()));
    }
    if grid_points < 3 {
        return Err(Error::InvalidDimension("power grid needs at least 3 points".into()));
    }
    let needed = passive_book.len() as u128 * if k == 2 { grid_points as u128 } else { 1 };
    check_cap(needed, cap)?;
    let n = mode.n();
    let gate: Vec<f64> = (0..n)
        .map(|e| if mode.reflection_enabled() && !mode.connected_indices().contains(&e) { 1.0 } else { 0.0 })
        .collect();
    let conn = mode.connected_indices();
    let rs = (problem.split.bs / ch.dims.n_t as f64).sqrt();
    let ds = (problem.split.rdars / mode.a().max(1) as f64).sqrt();
    let p = problem.p_tot;
    let mut best = (f64::NEG_INFINITY, String::new());
    let mut evaluations = 0u128;
    for c in 0..passive_book.len() {
        let phi = phase_vector(passive_book, c, n);
        let mut coup = vec![vec![0.0; k]; k];
        for (rk, row) in coup.iter_mut().enumerate() {
            let u: Vec<C64> = problem.u[rk].iter().copied().collect();
            for (i, cell) in row.iter_mut().enumerate() {
                let w: Vec<C64> = problem.w[i].iter().copied().collect();
                let x = reflected(ch, rk, &gate, &u, &phi, &w);
                let y = direct(ch, rk, conn, &u, problem.f[i].as_slice());
                *cell = (x * rs + y * ds).norm_sqr();
            }
        }
        let rate = |p1: f64| -> f64 {
            let pw = if k == 1 { vec![p] } else { vec![p1, p - p1] };
            (0..k)
                .map(|rk| {
                    let int: f64 = (0..k).filter(|&i| i != rk).map(|i| pw[i] * coup[rk][i]).sum();
                    problem.weights[rk] * log2_1p(pw[rk] * coup[rk][rk] / (int + problem.sigma2))
                })
                .sum()
        };
        if k == 1 {
            evaluations += 1;
            let v = rate(p);
            if v > best.0 {
                best = (v, format!("phi={c}"));
            }
            continue;
        }
        let step = p / (grid_points - 1) as f64;
        let (mut gi, mut gv) = (0, f64::NEG_INFINITY);
        for i in 0..grid_points {
            evaluations += 1;
            let v = rate(step * i as f64);
            if v > gv {
                (gi, gv) = (i, v);
            }
        }
        let lo = step * gi.saturating_sub(1) as f64;
        let hi = (step * (gi + 1) as f64).min(p);
        let (x, v) = golden_max(rate, lo, hi, 120);
        let (x, v) = if v > gv { (x, v) } else { (step * gi as f64, gv) };
        if v > best.0 {
            best = (v, format!("phi={c} p1={x:e}"));
        }
    }
    Ok(OracleReport {
        best_value: best.0,
        best_config: best.1,
        evaluations,
    })
}
