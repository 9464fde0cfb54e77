//! Waveguide physics: guided-wave constants, dielectric attenuation, and
//! end-to-end channel coefficients.
//!
//! Geometry convention: all `N` waveguides run parallel to the x-axis at
//! height `d` above the ground plane; waveguide `n` starts at its feed point
//! `(0, feed_y[n], d)` and carries a single pinching antenna (PA) at
//! `(pin_x[n], feed_y[n], d)`. User `k` sits at `(x_k, y_k, 0)`.
//!
//! The end-to-end coefficient from feed point `n` to user `k` is
//!
//! ```text
//! h_{k,n} = sqrt(η)/d_kn · e^{−j 2π d_kn / λ} · e^{−(j 2π / λ_g + α_D) · x_n}
//! ```
//!
//! where `d_kn` is the PA-to-user distance, the first exponential is the
//! free-space (spherical-wave) phase, and the second collects the in-guide
//! phase rotation and, for a lossy dielectric, the amplitude decay with
//! attenuation constant `α_D = λ_g ε_r π f_c² c⁻² tan δ_e` (nepers/m).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

#[derive(Debug, Error, PartialEq)]
pub enum PhysError {
    #[error("carrier frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("effective refractive index must be >= 1, got {0}")]
    IndexBelowOne(f64),
    #[error("invalid material parameter: {0}")]
    InvalidMaterial(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("index out of range: {what} {got} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        len: usize,
    },
}

/// How the free-space gain factor `η` enters the channel amplitude.
///
/// The amplitude is written `sqrt(η)/distance`. `Paper` takes
/// `η = c/(4π f_c)` verbatim; `Squared` takes `η = (c/(4π f_c))²`, the
/// standard isotropic free-space power factor. All comparison schemes share
/// the same mode, so scheme orderings are unaffected by the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    #[default]
    Paper,
    Squared,
}

/// Carrier-frequency-derived constants for one waveguide material.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Free-space gain factor η (see [`EtaMode`]).
    pub eta: f64,
    /// Free-space wavelength λ = c / f_c (m).
    pub lambda: f64,
    /// Guided wavelength λ_g = λ / η_eff (m).
    pub lambda_g: f64,
}

impl PhysicalConstants {
    pub fn new(f_c: f64, eta_eff: f64, mode: EtaMode) -> Result<Self, PhysError> {
        let lambda_g = guided_wavelength(f_c, eta_eff)?;
        let lambda = SPEED_OF_LIGHT / f_c;
        let eta_lin = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * f_c);
        let eta = match mode {
            EtaMode::Paper => eta_lin,
            EtaMode::Squared => eta_lin * eta_lin,
        };
        Ok(Self {
            f_c,
            eta,
            lambda,
            lambda_g,
        })
    }
}

/// Dielectric waveguide material parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideMaterial {
    /// Effective refractive index η_eff (≥ 1).
    pub eta_eff: f64,
    /// Dielectric constant ε_r (> 0).
    pub eps_r: f64,
    /// Effective electric loss tangent tan δ_e (≥ 0).
    pub tan_delta: f64,
}

impl WaveguideMaterial {
    /// PTFE, the reference material: η_eff = 1.42, ε_r = 2.1, tan δ_e = 2e-4.
    pub fn ptfe() -> Self {
        Self {
            eta_eff: 1.42,
            eps_r: 2.1,
            tan_delta: 2e-4,
        }
    }

    /// Same material with the loss tangent zeroed (perfect dielectric).
    pub fn lossless(&self) -> Self {
        Self {
            tan_delta: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), PhysError> {
        if !(self.eta_eff >= 1.0) {
            return Err(PhysError::IndexBelowOne(self.eta_eff));
        }
        if !(self.eps_r > 0.0) {
            return Err(PhysError::InvalidMaterial(format!(
                "eps_r must be > 0, got {}",
                self.eps_r
            )));
        }
        if !(self.tan_delta >= 0.0) {
            return Err(PhysError::InvalidMaterial(format!(
                "tan_delta must be >= 0, got {}",
                self.tan_delta
            )));
        }
        Ok(())
    }
}

/// Waveguide feed points, PA positions, and user locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    /// Waveguide height above the x-y plane (m).
    pub d: f64,
    /// Feed-point y-coordinates, strictly increasing, one per waveguide.
    pub feed_y: Vec<f64>,
    /// PA x-coordinates along each waveguide, in [0, x_max].
    pub pin_x: Vec<f64>,
    /// User (x, y) coordinates on the ground plane.
    pub users: Vec<(f64, f64)>,
    /// PA travel limit along the x-axis (m).
    pub x_max: f64,
}

impl SystemGeometry {
    pub fn n_waveguides(&self) -> usize {
        self.feed_y.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<(), PhysError> {
        if !(self.d > 0.0) {
            return Err(PhysError::InvalidGeometry(format!(
                "height d must be > 0, got {}",
                self.d
            )));
        }
        if self.feed_y.len() != self.pin_x.len() {
            return Err(PhysError::InvalidGeometry(format!(
                "feed_y ({}) and pin_x ({}) length mismatch",
                self.feed_y.len(),
                self.pin_x.len()
            )));
        }
        if self.feed_y.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PhysError::InvalidGeometry(
                "feed_y must be strictly increasing".into(),
            ));
        }
        for (n, &x) in self.pin_x.iter().enumerate() {
            if !(0.0..=self.x_max).contains(&x) {
                return Err(PhysError::InvalidGeometry(format!(
                    "pin_x[{n}] = {x} outside [0, {}]",
                    self.x_max
                )));
            }
        }
        Ok(())
    }

    /// Returns a copy with the PA positions replaced.
    pub fn with_pin_x(&self, pin_x: Vec<f64>) -> Self {
        Self {
            pin_x,
            ..self.clone()
        }
    }
}

/// K×N matrix of end-to-end channel coefficients, row per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: nalgebra::DMatrix<Complex64>,
    /// Whether the attenuation term was dropped when building the matrix.
    pub lossless: bool,
}

impl ChannelMatrix {
    pub fn n_users(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_waveguides(&self) -> usize {
        self.h.ncols()
    }

    /// Row `k` as a column vector `h_k`.
    pub fn user_channel(&self, k: usize) -> nalgebra::DVector<Complex64> {
        self.h.row(k).transpose()
    }

    /// Euclidean norm of user `k`'s channel row.
    pub fn user_norm(&self, k: usize) -> f64 {
        self.h.row(k).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// A material + carrier-constants bundle fixing how channels are computed.
/// `lossless` drops the attenuation term while keeping in-guide phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub material: WaveguideMaterial,
    pub constants: PhysicalConstants,
    pub lossless: bool,
}

impl ChannelModel {
    pub fn new(material: WaveguideMaterial, constants: PhysicalConstants, lossless: bool) -> Self {
        Self {
            material,
            constants,
            lossless,
        }
    }

    /// Effective attenuation constant under this model (0 when lossless).
    pub fn alpha(&self) -> f64 {
        if self.lossless {
            0.0
        } else {
            attenuation_constant(&self.material, &self.constants)
        }
    }

    pub fn matrix(&self, geom: &SystemGeometry) -> Result<ChannelMatrix, PhysError> {
        channel_matrix(geom, &self.material, &self.constants, self.lossless)
    }
}

/// Guided wavelength λ_g = (c / f_c) / η_eff.
pub fn guided_wavelength(f_c: f64, eta_eff: f64) -> Result<f64, PhysError> {
    if !(f_c > 0.0) {
        return Err(PhysError::NonPositiveFrequency(f_c));
    }
    if !(eta_eff >= 1.0) {
        return Err(PhysError::IndexBelowOne(eta_eff));
    }
    Ok(SPEED_OF_LIGHT / f_c / eta_eff)
}

/// Attenuation constant α_D = λ_g · ε_r · π · f_c² · c⁻² · tan δ_e (Np/m).
///
/// With λ_g recomputed per frequency this scales linearly in f_c.
pub fn attenuation_constant(mat: &WaveguideMaterial, pc: &PhysicalConstants) -> f64 {
    pc.lambda_g * mat.eps_r * std::f64::consts::PI * pc.f_c * pc.f_c
        / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)
        * mat.tan_delta
}

/// PA-to-user distance `sqrt((x_n − x_k)² + (feed_y[n] − y_k)² + d²)`.
pub fn user_pa_distance(geom: &SystemGeometry, k: usize, n: usize) -> Result<f64, PhysError> {
    let &(x_k, y_k) = geom
        .users
        .get(k)
        .ok_or(PhysError::IndexOutOfRange {
            what: "user",
            got: k,
            len: geom.users.len(),
        })?;
    let (&x_n, &y_n) = geom
        .pin_x
        .get(n)
        .zip(geom.feed_y.get(n))
        .ok_or(PhysError::IndexOutOfRange {
            what: "waveguide",
            got: n,
            len: geom.pin_x.len(),
        })?;
    let dx = x_n - x_k;
    let dy = y_n - y_k;
    Ok((dx * dx + dy * dy + geom.d * geom.d).sqrt())
}

/// End-to-end coefficient `h_{k,n}`; with `lossless` the α_D amplitude decay
/// is dropped (the in-guide phase rotation is kept).
pub fn channel_coefficient(
    geom: &SystemGeometry,
    mat: &WaveguideMaterial,
    pc: &PhysicalConstants,
    k: usize,
    n: usize,
    lossless: bool,
) -> Result<Complex64, PhysError> {
    let dist = user_pa_distance(geom, k, n)?;
    let x_n = geom.pin_x[n];
    let alpha = if lossless {
        0.0
    } else {
        attenuation_constant(mat, pc)
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let amplitude = pc.eta.sqrt() / dist * (-alpha * x_n).exp();
    let phase = -two_pi * (dist / pc.lambda + x_n / pc.lambda_g);
    Ok(Complex64::from_polar(amplitude, phase))
}

/// Full K×N channel matrix; row `k` is `h_k^T`.
pub fn channel_matrix(
    geom: &SystemGeometry,
    mat: &WaveguideMaterial,
    pc: &PhysicalConstants,
    lossless: bool,
) -> Result<ChannelMatrix, PhysError> {
    geom.validate()?;
    mat.validate()?;
    let (k_users, n_wg) = (geom.n_users(), geom.n_waveguides());
    if k_users == 0 || n_wg == 0 {
        return Err(PhysError::InvalidGeometry(
            "need at least one user and one waveguide".into(),
        ));
    }
    let mut h = nalgebra::DMatrix::zeros(k_users, n_wg);
    for k in 0..k_users {
        for n in 0..n_wg {
            h[(k, n)] = channel_coefficient(geom, mat, pc, k, n, lossless)?;
        }
    }
    Ok(ChannelMatrix { h, lossless })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn ptfe_constants(f_c: f64) -> (WaveguideMaterial, PhysicalConstants) {
        let mat = WaveguideMaterial::ptfe();
        let pc = PhysicalConstants::new(f_c, mat.eta_eff, EtaMode::Paper).unwrap();
        (mat, pc)
    }

    fn simple_geometry(pin_x: f64, user: (f64, f64)) -> SystemGeometry {
        SystemGeometry {
            d: 3.0,
            feed_y: vec![0.0],
            pin_x: vec![pin_x],
            users: vec![user],
            x_max: 100.0,
        }
    }

    #[test]
    fn guided_wavelength_reference_values() {
        // c/f_c/eta_eff evaluated by hand at the two carrier frequencies.
        let lg28 = guided_wavelength(28e9, 1.42).unwrap();
        assert_relative_eq!(lg28, 7.540e-3, max_relative = 1e-3);
        let lg6 = guided_wavelength(6e9, 1.42).unwrap();
        assert_relative_eq!(lg6, 3.519e-2, max_relative = 1e-3);
        // Unit index reduces to the free-space wavelength.
        let f = 10e9;
        assert_relative_eq!(
            guided_wavelength(f, 1.0).unwrap(),
            SPEED_OF_LIGHT / f,
            max_relative = 1e-15
        );
    }

    #[test]
    fn guided_wavelength_domain_errors() {
        assert!(matches!(
            guided_wavelength(0.0, 1.42),
            Err(PhysError::NonPositiveFrequency(_))
        ));
        assert!(matches!(
            guided_wavelength(-1.0, 1.42),
            Err(PhysError::NonPositiveFrequency(_))
        ));
        assert!(matches!(
            guided_wavelength(1e9, 0.99),
            Err(PhysError::IndexBelowOne(_))
        ));
    }

    #[test]
    fn attenuation_constant_ptfe_reference_values() {
        let (mat, pc) = ptfe_constants(28e9);
        assert_abs_diff_eq!(attenuation_constant(&mat, &pc), 0.0868, epsilon = 1e-3);
        let (mat6, pc6) = ptfe_constants(6e9);
        assert_abs_diff_eq!(attenuation_constant(&mat6, &pc6), 0.0186, epsilon = 5e-4);
    }

    #[test]
    fn attenuation_zero_for_lossless_material() {
        let (mat, pc) = ptfe_constants(28e9);
        assert_eq!(attenuation_constant(&mat.lossless(), &pc), 0.0);
    }

    #[test]
    fn attenuation_scales_linearly_in_frequency() {
        // lambda_g ~ 1/f_c so alpha_D ~ f_c when constants track frequency.
        let (mat, pc1) = ptfe_constants(6e9);
        let (_, pc2) = ptfe_constants(28e9);
        let ratio = attenuation_constant(&mat, &pc2) / attenuation_constant(&mat, &pc1);
        assert_relative_eq!(ratio, 28.0 / 6.0, max_relative = 1e-9);
    }

    #[test]
    fn distance_examples() {
        let g = simple_geometry(5.0, (5.0, 0.0));
        assert_relative_eq!(user_pa_distance(&g, 0, 0).unwrap(), 3.0);
        let g = simple_geometry(4.0, (0.0, 0.0));
        assert_relative_eq!(user_pa_distance(&g, 0, 0).unwrap(), 5.0);
        let g = simple_geometry(10.0, (0.0, 5.0));
        // sqrt(100 + 25 + 9)
        assert_relative_eq!(user_pa_distance(&g, 0, 0).unwrap(), 134.0_f64.sqrt());
        assert_abs_diff_eq!(user_pa_distance(&g, 0, 0).unwrap(), 11.5758, epsilon = 1e-4);
    }

    #[test]
    fn distance_index_errors() {
        let g = simple_geometry(0.0, (0.0, 0.0));
        assert!(user_pa_distance(&g, 1, 0).is_err());
        assert!(user_pa_distance(&g, 0, 1).is_err());
    }

    #[test]
    fn coefficient_at_origin_pa_over_user() {
        // PA at x=0 directly above the user: no waveguide phase, no
        // attenuation; magnitude sqrt(eta)/3 and phase -2*pi*3/lambda.
        let (mat, pc) = ptfe_constants(28e9);
        let g = simple_geometry(0.0, (0.0, 0.0));
        let h = channel_coefficient(&g, &mat, &pc, 0, 0, false).unwrap();
        assert_relative_eq!(pc.eta, 8.520e-4, max_relative = 1e-3);
        assert_relative_eq!(h.norm(), 9.73e-3, max_relative = 1e-3);
        let expected_phase = -2.0 * std::f64::consts::PI * 3.0 / pc.lambda;
        let diff = (h.arg() - expected_phase.rem_euclid(2.0 * std::f64::consts::PI)
            + 3.0 * std::f64::consts::PI)
            .rem_euclid(2.0 * std::f64::consts::PI)
            - std::f64::consts::PI;
        assert_abs_diff_eq!(diff, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn lossless_flag_equals_zero_loss_material() {
        let (mat, pc) = ptfe_constants(28e9);
        let g = simple_geometry(17.0, (40.0, 2.0));
        let a = channel_coefficient(&g, &mat, &pc, 0, 0, true).unwrap();
        let b = channel_coefficient(&g, &mat.lossless(), &pc, 0, 0, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lossy_to_lossless_ratio_matches_power_law() {
        let (mat, pc) = ptfe_constants(28e9);
        let alpha = attenuation_constant(&mat, &pc);
        for &x in &[0.0, 5.0, 20.0, 77.0] {
            let g = simple_geometry(x, (12.0, 4.0));
            let lossy = channel_coefficient(&g, &mat, &pc, 0, 0, false).unwrap();
            let free = channel_coefficient(&g, &mat, &pc, 0, 0, true).unwrap();
            let power_ratio = lossy.norm_sqr() / free.norm_sqr();
            assert_relative_eq!(power_ratio, (-2.0 * alpha * x).exp(), max_relative = 1e-12);
        }
        // Spot value: e^{-alpha*20} with alpha ~= 0.0868 is ~0.176.
        let g = simple_geometry(20.0, (12.0, 4.0));
        let lossy = channel_coefficient(&g, &mat, &pc, 0, 0, false).unwrap();
        let free = channel_coefficient(&g, &mat, &pc, 0, 0, true).unwrap();
        assert_abs_diff_eq!(lossy.norm() / free.norm(), 0.1762, epsilon = 1e-3);
    }

    #[test]
    fn gain_decreases_with_pin_x_under_loss() {
        let (mat, pc) = ptfe_constants(28e9);
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let x = i as f64;
            let g = simple_geometry(x, (0.0, 0.0));
            let h = channel_coefficient(&g, &mat, &pc, 0, 0, false).unwrap();
            assert!(h.norm() < prev);
            prev = h.norm();
        }
    }

    #[test]
    fn matrix_matches_entrywise_recomputation() {
        let (mat, pc) = ptfe_constants(28e9);
        let g = SystemGeometry {
            d: 3.0,
            feed_y: vec![0.0, 10.0],
            pin_x: vec![12.0, 47.0],
            users: vec![(30.0, 2.0), (80.0, 9.0)],
            x_max: 100.0,
        };
        let cm = channel_matrix(&g, &mat, &pc, false).unwrap();
        assert_eq!((cm.n_users(), cm.n_waveguides()), (2, 2));
        for k in 0..2 {
            for n in 0..2 {
                let c = channel_coefficient(&g, &mat, &pc, k, n, false).unwrap();
                assert_eq!(cm.h[(k, n)], c);
            }
        }
        // Entry magnitudes never exceed sqrt(eta)/d.
        for v in cm.h.iter() {
            assert!(v.norm() <= pc.eta.sqrt() / g.d + 1e-15);
        }
    }

    #[test]
    fn matrix_row_permutation_follows_users() {
        let (mat, pc) = ptfe_constants(28e9);
        let mut g = SystemGeometry {
            d: 3.0,
            feed_y: vec![0.0, 10.0],
            pin_x: vec![12.0, 47.0],
            users: vec![(30.0, 2.0), (80.0, 9.0)],
            x_max: 100.0,
        };
        let a = channel_matrix(&g, &mat, &pc, false).unwrap();
        g.users.swap(0, 1);
        let b = channel_matrix(&g, &mat, &pc, false).unwrap();
        assert_eq!(a.h.row(0), b.h.row(1));
        assert_eq!(a.h.row(1), b.h.row(0));
    }

    #[test]
    fn empty_geometry_rejected() {
        let (mat, pc) = ptfe_constants(28e9);
        let g = SystemGeometry {
            d: 3.0,
            feed_y: vec![],
            pin_x: vec![],
            users: vec![(0.0, 0.0)],
            x_max: 100.0,
        };
        assert!(channel_matrix(&g, &mat, &pc, false).is_err());
    }

    #[test]
    fn eta_mode_squared_squares_the_factor() {
        let paper = PhysicalConstants::new(28e9, 1.42, EtaMode::Paper).unwrap();
        let squared = PhysicalConstants::new(28e9, 1.42, EtaMode::Squared).unwrap();
        assert_relative_eq!(squared.eta, paper.eta * paper.eta, max_relative = 1e-15);
    }
}
