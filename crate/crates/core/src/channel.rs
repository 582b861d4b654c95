//! Steering vectors, rank-one LoS channels and link-quality metrics.
//!
//! Virtual angles are direction cosines in `[−1, 1]`. The BS and UE arrays
//! are uniform linear arrays along z; the RDARS grid lies in the y–z plane
//! with its normal along x, rows along z and columns along y. Flat element
//! indices are z-major (`iz * N_y + iy`), matching `a(N_z) ⊗ a(N_y)`.

use std::f64::consts::PI;

use crate::rdars_config::ModeConfig;
use crate::units::{dbm_to_watts, wavelength};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Steering vector of a uniform linear array: entry `m` is
/// `exp(j·2π/λ·spacing·m·phi)`.
pub fn steering_vector(n: usize, spacing: f64, phi: f64, wavelength: f64) -> Result<CVector> {
    if n == 0 {
        return Err(Error::InvalidDimension("steering vector needs n >= 1".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidDimension("element spacing must be positive".into()));
    }
    let coords: Vec<f64> = (0..n).map(|m| m as f64 * spacing).collect();
    reconfigurable_steering(&coords, phi, wavelength)
}

/// Steering vector over arbitrary element coordinates (meters along one axis).
pub fn reconfigurable_steering(coords: &[f64], phi: f64, wavelength: f64) -> Result<CVector> {
    if coords.is_empty() {
        return Err(Error::InvalidDimension("coordinate list is empty".into()));
    }
    let k = 2.0 * PI / wavelength * phi;
    Ok(CVector::from_iterator(
        coords.len(),
        coords.iter().map(|&c| C64::from_polar(1.0, k * c)),
    ))
}

/// 2D steering over a uniform `n_z × n_y` grid, z-major.
pub fn planar_steering(n_z: usize, n_y: usize, spacing: f64, vz: f64, vy: f64, wavelength: f64) -> Result<CVector> {
    let az = steering_vector(n_z, spacing, vz, wavelength)?;
    let ay = steering_vector(n_y, spacing, vy, wavelength)?;
    Ok(az.kronecker(&ay))
}

/// Log-distance path-loss model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    /// Attenuation at 1 m in dB.
    pub c0_db: f64,
    /// BS–RDARS exponent.
    pub alpha_b: f64,
    /// RDARS–UE exponent.
    pub alpha_r: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            c0_db: 60.4,
            alpha_b: 2.0,
            alpha_r: 2.2,
        }
    }
}

impl PathLoss {
    /// Path loss in dB at `distance` meters with exponent `alpha`.
    pub fn loss_db(&self, distance: f64, alpha: f64) -> f64 {
        self.c0_db + 10.0 * alpha * distance.log10()
    }

    /// Linear amplitude gain `κ = 10^(−PL/20)`.
    pub fn amplitude(&self, distance: f64, alpha: f64) -> f64 {
        10f64.powf(-self.loss_db(distance, alpha) / 20.0)
    }
}

/// Deployment geometry, array sizes and link budget of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub bs_position: [f64; 3],
    pub rdars_position: [f64; 3],
    pub ue_positions: Vec<[f64; 3]>,
    pub n_t: usize,
    pub n_u: usize,
    pub n_z: usize,
    pub n_y: usize,
    /// RDARS element spacing in meters.
    pub spacing: f64,
    pub wavelength: f64,
    /// Total transmit power budget in watts.
    pub p_tot: f64,
    /// Noise power in watts.
    pub sigma2: f64,
    pub weights: Vec<f64>,
    pub pathloss: PathLoss,
}

/// Default carrier frequency in Hz.
pub const DEFAULT_CARRIER_HZ: f64 = 28e9;

/// Centre of the UE drop disc.
pub const UE_CENTER: [f64; 3] = [10.0, 50.0, 2.0];

impl Default for Scenario {
    fn default() -> Self {
        let lambda = wavelength(DEFAULT_CARRIER_HZ);
        let ue_positions: Vec<[f64; 3]> = (0..3)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 3.0;
                [UE_CENTER[0], UE_CENTER[1] + 2.5 * t.cos(), UE_CENTER[2] + 2.5 * t.sin()]
            })
            .collect();
        Self {
            bs_position: [0.0, 0.0, 15.0],
            rdars_position: [10.0, 0.0, 15.0],
            ue_positions,
            n_t: 64,
            n_u: 4,
            n_z: 8,
            n_y: 16,
            spacing: lambda / 2.0,
            wavelength: lambda,
            p_tot: dbm_to_watts(20.0),
            sigma2: dbm_to_watts(-80.0),
            weights: vec![1.0 / 3.0; 3],
            pathloss: PathLoss::default(),
        }
    }
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn n(&self) -> usize {
        self.n_z * self.n_y
    }

    pub fn dims(&self) -> ArrayDims {
        ArrayDims {
            n_t: self.n_t,
            n_u: self.n_u,
            n_z: self.n_z,
            n_y: self.n_y,
            spacing: self.spacing,
            wavelength: self.wavelength,
        }
    }

    /// Checks the structural invariants of the scenario.
    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::InvalidDimension("at least one UE is required".into()));
        }
        for (name, v) in [("n_t", self.n_t), ("n_u", self.n_u), ("n_z", self.n_z), ("n_y", self.n_y)] {
            if v == 0 {
                return Err(Error::InvalidDimension(format!("{name} must be >= 1")));
            }
        }
        if !(self.p_tot > 0.0) || !(self.sigma2 > 0.0) {
            return Err(Error::InvalidDimension("power budget and noise must be positive".into()));
        }
        if !(self.spacing > 0.0) || !(self.wavelength > 0.0) {
            return Err(Error::InvalidDimension("spacing and wavelength must be positive".into()));
        }
        if self.weights.len() != self.k() {
            return Err(Error::InvalidDimension(format!(
                "{} weights for {} UEs",
                self.weights.len(),
                self.k()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDimension("weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Array sizes and wavelength shared by channels and codebooks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayDims {
    pub n_t: usize,
    pub n_u: usize,
    pub n_z: usize,
    pub n_y: usize,
    pub spacing: f64,
    pub wavelength: f64,
}

impl ArrayDims {
    pub fn n(&self) -> usize {
        self.n_z * self.n_y
    }
}

/// Virtual angles of one RDARS–UE link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeAngles {
    /// RDARS AoD along z (`ṽ_k`).
    pub aod_z: f64,
    /// RDARS AoD along y (`υ_k`).
    pub aod_y: f64,
    /// UE AoA (`υ^r_k`).
    pub aoa: f64,
}

/// All virtual angles of a channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualAngles {
    /// BS AoD toward the RDARS.
    pub bs_aod: f64,
    /// RDARS AoA along z.
    pub rdars_aoa_z: f64,
    /// RDARS AoA along y.
    pub rdars_aoa_y: f64,
    pub ue: Vec<UeAngles>,
}

/// Optional replacements for geometry-derived angles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AngleOverride {
    pub bs_aod: Option<f64>,
    pub rdars_aoa: Option<(f64, f64)>,
    /// Per-UE `(ṽ_k, υ_k)`.
    pub ue_aod: Option<Vec<(f64, f64)>>,
    pub ue_aoa: Option<Vec<f64>>,
}

/// Rank-one LoS channels of one realization.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub dims: ArrayDims,
    /// BS → RDARS, `N × N_t`.
    pub h_b: CMatrix,
    /// RDARS → UE k, each `N_u × N`.
    pub h_r: Vec<CMatrix>,
    pub kappa_b: f64,
    pub kappa_r: Vec<f64>,
    pub angles: VirtualAngles,
}

fn check_angle(name: &str, v: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Geometry(format!("{name} = {v} outside [-1, 1]")))
    }
}

/// Unit direction from `from` to `to` and the distance between them.
fn direction(from: [f64; 3], to: [f64; 3]) -> Result<([f64; 3], f64)> {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(dist > 1e-9) {
        return Err(Error::Geometry("coincident positions leave the angle undefined".into()));
    }
    Ok(([d[0] / dist, d[1] / dist, d[2] / dist], dist))
}

impl ChannelSet {
    /// Builds channels from explicit gains and angles.
    pub fn from_parts(dims: ArrayDims, kappa_b: f64, kappa_r: Vec<f64>, angles: VirtualAngles) -> Result<Self> {
        if kappa_r.len() != angles.ue.len() {
            return Err(Error::InvalidDimension("one gain per UE link is required".into()));
        }
        check_angle("bs_aod", angles.bs_aod)?;
        check_angle("rdars_aoa_z", angles.rdars_aoa_z)?;
        check_angle("rdars_aoa_y", angles.rdars_aoa_y)?;
        for ue in &angles.ue {
            check_angle("ue aod_z", ue.aod_z)?;
            check_angle("ue aod_y", ue.aod_y)?;
            check_angle("ue aoa", ue.aoa)?;
        }
        let lambda = dims.wavelength;
        let half = lambda / 2.0;
        let rx = planar_steering(dims.n_z, dims.n_y, dims.spacing, angles.rdars_aoa_z, angles.rdars_aoa_y, lambda)?;
        let tx = steering_vector(dims.n_t, half, angles.bs_aod, lambda)?;
        let h_b = (&rx * tx.adjoint()) * C64::from(kappa_b);
        let mut h_r = Vec::with_capacity(angles.ue.len());
        for (ue, &kr) in angles.ue.iter().zip(&kappa_r) {
            let au = steering_vector(dims.n_u, half, ue.aoa, lambda)?;
            let at = planar_steering(dims.n_z, dims.n_y, dims.spacing, ue.aod_z, ue.aod_y, lambda)?;
            h_r.push((&au * at.adjoint()) * C64::from(kr));
        }
        Ok(Self {
            dims,
            h_b,
            h_r,
            kappa_b,
            kappa_r,
            angles,
        })
    }

    pub fn k(&self) -> usize {
        self.h_r.len()
    }
}

/// Virtual angles and gains implied by the scenario geometry.
pub fn geometric_angles(scenario: &Scenario) -> Result<(f64, Vec<f64>, VirtualAngles)> {
    let (u_br, d_b) = direction(scenario.bs_position, scenario.rdars_position)?;
    let kappa_b = scenario.pathloss.amplitude(d_b, scenario.pathloss.alpha_b);
    let mut ue = Vec::with_capacity(scenario.k());
    let mut kappa_r = Vec::with_capacity(scenario.k());
    for &pos in &scenario.ue_positions {
        let (u_ru, d_r) = direction(scenario.rdars_position, pos)?;
        kappa_r.push(scenario.pathloss.amplitude(d_r, scenario.pathloss.alpha_r));
        ue.push(UeAngles {
            aod_z: u_ru[2],
            aod_y: u_ru[1],
            aoa: -u_ru[2],
        });
    }
    let angles = VirtualAngles {
        bs_aod: u_br[2],
        rdars_aoa_z: -u_br[2],
        rdars_aoa_y: -u_br[1],
        ue,
    };
    Ok((kappa_b, kappa_r, angles))
}

/// Synthesizes the LoS channels of a scenario, optionally replacing angles.
pub fn build_channels(scenario: &Scenario, overrides: Option<&AngleOverride>) -> Result<ChannelSet> {
    scenario.validate()?;
    let (kappa_b, kappa_r, mut angles) = geometric_angles(scenario)?;
    if let Some(o) = overrides {
        if let Some(v) = o.bs_aod {
            angles.bs_aod = v;
        }
        if let Some((z, y)) = o.rdars_aoa {
            angles.rdars_aoa_z = z;
            angles.rdars_aoa_y = y;
        }
        if let Some(aod) = &o.ue_aod {
            if aod.len() != scenario.k() {
                return Err(Error::InvalidDimension("override needs one AoD pair per UE".into()));
            }
            for (ue, &(z, y)) in angles.ue.iter_mut().zip(aod) {
                ue.aod_z = z;
                ue.aod_y = y;
            }
        }
        if let Some(aoa) = &o.ue_aoa {
            if aoa.len() != scenario.k() {
                return Err(Error::InvalidDimension("override needs one AoA per UE".into()));
            }
            for (ue, &v) in angles.ue.iter_mut().zip(aoa) {
                ue.aoa = v;
            }
        }
    }
    ChannelSet::from_parts(scenario.dims(), kappa_b, kappa_r, angles)
}

/// Per-UE beams and power budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPlan {
    /// BS beam per UE (`N_t`).
    pub w: Vec<CVector>,
    /// RDARS transmit beam per UE (length `a`).
    pub f: Vec<CVector>,
    /// UE combiner (`N_u`).
    pub u: Vec<CVector>,
    /// Diagonal of the passive phase matrix (length `N`).
    pub phi: CVector,
    /// Per-antenna BS power for each UE.
    pub p_b: Vec<f64>,
    /// Per-element RDARS power for each UE.
    pub p_r: Vec<f64>,
}

impl BeamPlan {
    pub fn k(&self) -> usize {
        self.w.len()
    }

    /// Power spent: `N_t·Σ P_B + a·Σ P_R`.
    pub fn total_power(&self, n_t: usize, a: usize) -> f64 {
        n_t as f64 * self.p_b.iter().sum::<f64>() + a as f64 * self.p_r.iter().sum::<f64>()
    }

    /// Checks vector lengths against the channels and mode.
    pub fn validate(&self, channels: &ChannelSet, mode: &ModeConfig) -> Result<()> {
        let k = channels.k();
        let dims = &channels.dims;
        let bad = |what: &str| Err(Error::InvalidPlan(what.to_string()));
        if mode.n() != dims.n() {
            return bad("mode grid differs from channel grid");
        }
        if [self.w.len(), self.f.len(), self.u.len(), self.p_b.len(), self.p_r.len()]
            .iter()
            .any(|&l| l != k)
        {
            return bad("plan needs one entry per UE");
        }
        if self.phi.len() != dims.n() {
            return bad("phi length differs from N");
        }
        for i in 0..k {
            if self.w[i].len() != dims.n_t {
                return bad("BS beam length differs from N_t");
            }
            if self.f[i].len() != mode.a() {
                return bad("RDARS beam length differs from a");
            }
            if self.u[i].len() != dims.n_u {
                return bad("combiner length differs from N_u");
            }
        }
        Ok(())
    }
}

/// Complex amplitudes `s[k][i] = u_k^H H_k f_R,i` for every receiver `k` and stream `i`.
pub fn signal_matrix(channels: &ChannelSet, mode: &ModeConfig, plan: &BeamPlan) -> Result<Vec<Vec<C64>>> {
    plan.validate(channels, mode)?;
    let k = channels.k();
    let gate = mode.passive_gate();
    let conn = mode.connected_indices();
    // BS-side fields seen by the surface: t_i = H_b w_i.
    let t: Vec<CVector> = plan.w.iter().map(|w| &channels.h_b * w).collect();
    let mut out = vec![vec![C64::new(0.0, 0.0); k]; k];
    for (rk, row) in out.iter_mut().enumerate() {
        // h = H_r,k^H u_k, so u_k^H H_r,k x = h^H x.
        let h = channels.h_r[rk].adjoint() * &plan.u[rk];
        for (i, s) in row.iter_mut().enumerate() {
            let mut refl = C64::new(0.0, 0.0);
            for n in 0..h.len() {
                if gate[n] != 0.0 {
                    refl += h[n].conj() * plan.phi[n] * t[i][n];
                }
            }
            let mut direct = C64::new(0.0, 0.0);
            for (j, &n) in conn.iter().enumerate() {
                direct += h[n].conj() * plan.f[i][j];
            }
            *s = refl * plan.p_b[i].max(0.0).sqrt() + direct * plan.p_r[i].max(0.0).sqrt();
        }
    }
    Ok(out)
}

/// SINR of every UE from a signal matrix.
pub fn sinr_from_signals(signals: &[Vec<C64>], sigma2: f64) -> Vec<f64> {
    signals
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let interference: f64 = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, s)| s.norm_sqr())
                .sum();
            row[k].norm_sqr() / (interference + sigma2)
        })
        .collect()
}

/// SINR of UE `k` under `plan`.
pub fn sinr(channels: &ChannelSet, mode: &ModeConfig, plan: &BeamPlan, sigma2: f64, k: usize) -> Result<f64> {
    if k >= channels.k() {
        return Err(Error::InvalidPlan(format!("UE index {k} out of range")));
    }
    let s = signal_matrix(channels, mode, plan)?;
    Ok(sinr_from_signals(&s, sigma2)[k])
}

/// Weighted sum rate `Σ ω_k log2(1 + γ_k)` from per-UE SINRs.
pub fn wsr_from_sinr(sinrs: &[f64], weights: &[f64]) -> f64 {
    sinrs.iter().zip(weights).map(|(g, w)| w * (1.0 + g).log2()).sum()
}

/// Weighted sum rate of `plan`.
pub fn wsr(channels: &ChannelSet, mode: &ModeConfig, plan: &BeamPlan, sigma2: f64, weights: &[f64]) -> Result<f64> {
    if weights.len() != channels.k() {
        return Err(Error::InvalidPlan("one weight per UE is required".into()));
    }
    let s = signal_matrix(channels, mode, plan)?;
    Ok(wsr_from_sinr(&sinr_from_signals(&s, sigma2), weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    const LAMBDA: f64 = 0.01;

    #[test]
    fn zero_angle_is_all_ones() {
        let v = steering_vector(4, 0.37, 0.0, LAMBDA).unwrap();
        assert!(v.iter().all(|x| (x - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn half_wavelength_endfire_alternates() {
        let v = steering_vector(2, LAMBDA / 2.0, 1.0, LAMBDA).unwrap();
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((v[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(matches!(steering_vector(0, 1.0, 0.0, LAMBDA), Err(Error::InvalidDimension(_))));
        assert!(reconfigurable_steering(&[], 0.0, LAMBDA).is_err());
    }

    #[test]
    fn uniform_coordinates_match_ula() {
        let coords: Vec<f64> = (0..7).map(|m| m as f64 * LAMBDA / 2.0).collect();
        let a = reconfigurable_steering(&coords, -0.41, LAMBDA).unwrap();
        let b = steering_vector(7, LAMBDA / 2.0, -0.41, LAMBDA).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn pathloss_at_ten_meters() {
        let pl = PathLoss::default();
        let k = pl.amplitude(10.0, 2.0);
        assert_relative_eq!(k * k, 10f64.powf(-8.04), max_relative = 1e-12);
    }

    #[test]
    fn default_geometry_angles() {
        let s = Scenario::default();
        let (kb, kr, ang) = geometric_angles(&s).unwrap();
        assert_relative_eq!(kb * kb, 10f64.powf(-8.04), max_relative = 1e-12);
        assert_eq!(kr.len(), 3);
        assert_eq!(ang.bs_aod, 0.0);
        assert_eq!(ang.rdars_aoa_z, 0.0);
        for ue in &ang.ue {
            assert!(ue.aod_y > 0.9 && ue.aod_z < 0.0);
            assert_eq!(ue.aoa, -ue.aod_z);
        }
    }

    #[test]
    fn coincident_positions_fail() {
        let mut s = Scenario::default();
        s.rdars_position = s.bs_position;
        assert!(matches!(build_channels(&s, None), Err(Error::Geometry(_))));
    }

    #[test]
    fn override_out_of_range_fails() {
        let s = Scenario::default();
        let o = AngleOverride {
            bs_aod: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(build_channels(&s, Some(&o)), Err(Error::Geometry(_))));
    }

    #[test]
    fn entries_have_path_gain_modulus_and_rank_one() {
        let s = Scenario::default();
        let ch = build_channels(&s, None).unwrap();
        assert!(ch.h_b.iter().all(|x| (x.norm() - ch.kappa_b).abs() < 1e-12 * ch.kappa_b));
        for (h, k) in ch.h_r.iter().zip(&ch.kappa_r) {
            assert!(h.iter().all(|x| (x.norm() - k).abs() < 1e-12 * k));
            let sv = h.clone().svd(false, false).singular_values;
            assert!(sv[1] < 1e-10 * sv[0]);
        }
        let sv = ch.h_b.clone().svd(false, false).singular_values;
        assert!(sv[1] < 1e-10 * sv[0]);
    }

    fn toy_plan(ch: &ChannelSet, mode: &ModeConfig, p: f64) -> BeamPlan {
        let k = ch.k();
        let unit = |n: usize, seed: f64| {
            CVector::from_iterator(n, (0..n).map(|i| C64::from_polar(1.0 / (n as f64).sqrt(), seed * i as f64)))
        };
        BeamPlan {
            w: (0..k).map(|i| unit(ch.dims.n_t, 0.3 + i as f64)).collect(),
            f: (0..k).map(|i| unit(mode.a(), 1.1 * i as f64)).collect(),
            u: (0..k).map(|i| unit(ch.dims.n_u, -0.7 * i as f64)).collect(),
            phi: CVector::from_iterator(mode.n(), (0..mode.n()).map(|i| C64::from_polar(1.0, 0.2 * i as f64))),
            p_b: vec![p; k],
            p_r: vec![p; k],
        }
    }

    fn small_scenario(k: usize) -> Scenario {
        let mut s = Scenario {
            n_t: 4,
            n_u: 2,
            n_z: 2,
            n_y: 3,
            weights: vec![1.0 / k as f64; k],
            ..Scenario::default()
        };
        s.ue_positions.truncate(k);
        s
    }

    #[test]
    fn single_user_has_no_interference() {
        let s = small_scenario(1);
        let ch = build_channels(&s, None).unwrap();
        let mode = ModeConfig::new(2, 3, s.spacing, &[(0, 1)]).unwrap();
        let plan = toy_plan(&ch, &mode, 1e-3);
        let sig = signal_matrix(&ch, &mode, &plan).unwrap();
        let g = sinr(&ch, &mode, &plan, s.sigma2, 0).unwrap();
        assert_relative_eq!(g, sig[0][0].norm_sqr() / s.sigma2, max_relative = 1e-14);
    }

    #[test]
    fn zero_power_gives_zero_sinr_and_rate() {
        let s = small_scenario(2);
        let ch = build_channels(&s, None).unwrap();
        let mode = ModeConfig::new(2, 3, s.spacing, &[(1, 1)]).unwrap();
        let plan = toy_plan(&ch, &mode, 0.0);
        assert_eq!(sinr(&ch, &mode, &plan, s.sigma2, 1).unwrap(), 0.0);
        assert_eq!(wsr(&ch, &mode, &plan, s.sigma2, &s.weights).unwrap(), 0.0);
    }

    #[test]
    fn unit_sinr_gives_one_bit() {
        assert_relative_eq!(wsr_from_sinr(&[1.0], &[1.0]), 1.0);
    }

    #[test]
    fn mismatched_plan_rejected() {
        let s = small_scenario(2);
        let ch = build_channels(&s, None).unwrap();
        let mode = ModeConfig::new(2, 3, s.spacing, &[(1, 1)]).unwrap();
        let mut plan = toy_plan(&ch, &mode, 1.0);
        plan.f[0] = CVector::zeros(3);
        assert!(matches!(sinr(&ch, &mode, &plan, 1.0, 0), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn signal_matches_effective_channel_product() {
        let s = small_scenario(2);
        let ch = build_channels(&s, None).unwrap();
        let mode = ModeConfig::new(2, 3, s.spacing, &[(0, 0), (1, 2)]).unwrap();
        let plan = toy_plan(&ch, &mode, 2e-3);
        let sig = signal_matrix(&ch, &mode, &plan).unwrap();
        let n = mode.n();
        let a_mat = mode.mode_matrix().map(|x| C64::new(x, 0.0));
        let phi = DMatrix::from_diagonal(&plan.phi);
        let g = (DMatrix::<C64>::identity(n, n) - a_mat) * phi;
        let sel = mode.selection_matrix().map(|x| C64::new(x, 0.0));
        for k in 0..2 {
            let hk_refl = &ch.h_r[k] * &g * &ch.h_b;
            let hk_dir = &ch.h_r[k] * &sel;
            for i in 0..2 {
                let y = plan.u[k].adjoint()
                    * (&hk_refl * &plan.w[i] * C64::from(plan.p_b[i].sqrt())
                        + &hk_dir * &plan.f[i] * C64::from(plan.p_r[i].sqrt()));
                assert!((y[(0, 0)] - sig[k][i]).norm() < 1e-12 * y[(0, 0)].norm().max(1e-30));
            }
        }
    }
}
