//! Quantum noise of a power-recycled Fabry–Perot Michelson interferometer.
//!
//! Conventional single-sided two-photon model: the optomechanical coupling
//! `K(Ω)` rotates vacuum entering the dark port so that the output noise in
//! the signal (phase) quadrature is the combination `b₂ = a₂ − K·a₁`. The
//! strain PSD is
//!
//! ```text
//! S_h(Ω) = h_SQL²/2 · (1 + K²)/K · V(θ_v),   θ_v = atan2(1, −K)
//! ```
//!
//! where `V(θ)` is the variance of the injected (degraded) squeezed state
//! along the direction `θ` of the noise combination. Without squeezing
//! `V ≡ 1` and the PSD reduces to `h_SQL²/2 · (K + 1/K)`.
//!
//! The homodyne readout angle is fixed at the phase quadrature; DC-readout
//! offsets, signal recycling and optical springs are not modeled.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::squeeze::{self, LossChain, PhaseNoise, SqueezedState};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const C: f64 = 299_792_458.0;

/// Arm-cavity pole (half-bandwidth, Hz) of a cavity with finesse `finesse`
/// and length `arm_length`: `γ = π·c / (2·F·L)` in rad/s.
pub fn cavity_pole_from_finesse(finesse: f64, arm_length: f64) -> f64 {
    C / (4.0 * finesse * arm_length)
}

/// Finesse implied by an average number of round trips.
pub fn finesse_from_bounces(bounces: f64) -> f64 {
    bounces * PI / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    pub label: String,
    /// m
    pub arm_length: f64,
    /// kg, per test mass
    pub mirror_mass: f64,
    /// W circulating in each arm
    pub arm_power: f64,
    /// m
    pub wavelength: f64,
    /// Hz
    pub cavity_pole: f64,
}

impl InterferometerConfig {
    pub fn new(
        label: impl Into<String>,
        arm_length: f64,
        mirror_mass: f64,
        arm_power: f64,
        wavelength: f64,
        cavity_pole: f64,
    ) -> Result<Self> {
        let cfg = Self {
            label: label.into(),
            arm_length,
            mirror_mass,
            arm_power,
            wavelength,
            cavity_pole,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("arm_length", self.arm_length),
            ("mirror_mass", self.mirror_mass),
            ("arm_power", self.arm_power),
            ("wavelength", self.wavelength),
            ("cavity_pole", self.cavity_pole),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Illustrative initial-LIGO-era Hanford parameters: 40 kW per arm and
    /// about 130 bounces, which puts the arm pole near 92 Hz.
    pub fn h1() -> Self {
        let arm_length = 4000.0;
        Self {
            label: "H1 (2011, illustrative)".into(),
            arm_length,
            mirror_mass: 10.7,
            arm_power: 40e3,
            wavelength: 1064e-9,
            cavity_pole: cavity_pole_from_finesse(finesse_from_bounces(130.0), arm_length),
        }
    }

    /// Illustrative Advanced-LIGO-class parameters. The cavity pole stands in
    /// for the broadband signal-recycled detector bandwidth.
    pub fn aligo() -> Self {
        Self {
            label: "Advanced LIGO (illustrative)".into(),
            arm_length: 3995.0,
            mirror_mass: 40.0,
            arm_power: 800e3,
            wavelength: 1064e-9,
            cavity_pole: 400.0,
        }
    }

    fn carrier_angular_frequency(&self) -> f64 {
        2.0 * PI * C / self.wavelength
    }

    fn pole_angular_frequency(&self) -> f64 {
        2.0 * PI * self.cavity_pole
    }
}

fn check_frequency(f: f64) -> Result<f64> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!(
            "frequency must be positive and finite, got {f}"
        )));
    }
    Ok(2.0 * PI * f)
}

/// Free-mass standard quantum limit `sqrt(8ħ / (M Ω² L²))`, strain/√Hz.
pub fn sql_asd(config: &InterferometerConfig, f: f64) -> Result<f64> {
    let omega = check_frequency(f)?;
    Ok((8.0 * HBAR / (config.mirror_mass * omega * omega)).sqrt() / config.arm_length)
}

/// Optomechanical coupling in terms of the power circulating in each arm:
///
/// ```text
/// K(Ω) = 16 P_arm ω₀ γ / (M L c Ω² (γ² + Ω²))
/// ```
///
/// This equals the usual `2 (I₀/I_SQL) γ⁴ / (Ω²(γ² + Ω²))` with the
/// beamsplitter power written as `I₀ = 2 L γ P_arm / c`.
pub fn coupling_kappa(config: &InterferometerConfig, f: f64) -> Result<f64> {
    let omega = check_frequency(f)?;
    let w0 = config.carrier_angular_frequency();
    let g = config.pole_angular_frequency();
    let num = 16.0 * config.arm_power * w0 * g;
    let den = config.mirror_mass
        * config.arm_length
        * C
        * omega
        * omega
        * (g * g + omega * omega);
    Ok(num / den)
}

/// Quadrature angle of the output noise combination `a₂ − K·a₁`.
pub fn noise_quadrature_angle(kappa: f64) -> f64 {
    1f64.atan2(-kappa)
}

/// The phase quadrature: the noise direction in the shot-noise limit.
pub const PHASE_QUADRATURE: f64 = FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnglePolicy {
    /// No squeezed light; the dark port sees vacuum.
    None,
    /// Squeezed axis held at one angle for all frequencies.
    Fixed { angle: f64 },
    /// Squeezed axis follows the noise quadrature at every frequency.
    FdOptimal,
}

impl AnglePolicy {
    pub fn phase_quadrature() -> Self {
        AnglePolicy::Fixed {
            angle: PHASE_QUADRATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezerSetup {
    pub inject_db: f64,
    #[serde(default)]
    pub chain: LossChain,
    pub phase_noise: PhaseNoise,
    pub angle_policy: AnglePolicy,
}

impl SqueezerSetup {
    pub fn new(
        inject_db: f64,
        chain: LossChain,
        phase_noise: PhaseNoise,
        angle_policy: AnglePolicy,
    ) -> Result<Self> {
        let setup = Self {
            inject_db,
            chain,
            phase_noise,
            angle_policy,
        };
        setup.validate()?;
        Ok(setup)
    }

    /// Unsqueezed reference.
    pub fn none() -> Self {
        Self {
            inject_db: 0.0,
            chain: LossChain::new(),
            phase_noise: PhaseNoise::none(),
            angle_policy: AnglePolicy::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inject_db.is_finite() && self.inject_db >= 0.0) {
            return Err(Error::invalid(format!(
                "inject_db must be non-negative, got {}",
                self.inject_db
            )));
        }
        if let AnglePolicy::Fixed { angle } = self.angle_policy {
            if !(0.0..PI).contains(&angle) {
                return Err(Error::invalid(format!(
                    "fixed squeeze angle must lie in [0, pi), got {angle}"
                )));
            }
        }
        // The chain and phase noise validate on construction.
        Ok(())
    }

    /// Degraded state arriving at the readout, with the policy's angle for
    /// fixed squeezing. `None` for the vacuum policy.
    pub fn delivered_state(&self) -> Result<Option<SqueezedState>> {
        let angle = match self.angle_policy {
            AnglePolicy::None => return Ok(None),
            AnglePolicy::Fixed { angle } => angle,
            AnglePolicy::FdOptimal => 0.0,
        };
        let p = squeeze::propagate(self.inject_db, &self.chain, self.phase_noise)?;
        Ok(Some(p.detected.with_angle(angle)))
    }
}

fn asd_with_state(
    config: &InterferometerConfig,
    policy: AnglePolicy,
    state: Option<&SqueezedState>,
    f: f64,
) -> Result<f64> {
    let h_sql = sql_asd(config, f)?;
    let kappa = coupling_kappa(config, f)?;
    let theta = noise_quadrature_angle(kappa);
    let variance = match (policy, state) {
        (AnglePolicy::FdOptimal, Some(s)) => s.v_minus(),
        (_, Some(s)) => s.variance_along(theta),
        (_, None) => 1.0,
    };
    let psd = 0.5 * h_sql * h_sql * (1.0 + kappa * kappa) / kappa * variance;
    let asd = psd.sqrt();
    if !(asd.is_finite() && asd > 0.0) {
        return Err(Error::NonFinite {
            what: format!("quantum noise of '{}'", config.label),
            frequency: f,
        });
    }
    Ok(asd)
}

/// Quantum-noise strain ASD at `f` Hz.
pub fn quantum_noise_asd(
    config: &InterferometerConfig,
    setup: &SqueezerSetup,
    f: f64,
) -> Result<f64> {
    config.validate()?;
    setup.validate()?;
    let state = setup.delivered_state()?;
    asd_with_state(config, setup.angle_policy, state.as_ref(), f)
}

/// A strictly increasing list of positive frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FrequencyGrid(Vec<f64>);

impl FrequencyGrid {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("frequency grid is empty"));
        }
        if let Some(bad) = frequencies.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::invalid(format!(
                "grid frequencies must be positive and finite, got {bad}"
            )));
        }
        if let Some(w) = frequencies.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "grid frequencies must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self(frequencies))
    }

    /// `points` log-spaced frequencies from `f_min` to `f_max` inclusive.
    pub fn log(f_min: f64, f_max: f64, points: usize) -> Result<Self> {
        Self::check_span(f_min, f_max, points)?;
        let (a, b) = (f_min.ln(), f_max.ln());
        let step = (b - a) / (points - 1) as f64;
        let mut v: Vec<f64> = (0..points).map(|i| (a + step * i as f64).exp()).collect();
        v[0] = f_min;
        v[points - 1] = f_max;
        Self::new(v)
    }

    pub fn linear(f_min: f64, f_max: f64, points: usize) -> Result<Self> {
        Self::check_span(f_min, f_max, points)?;
        let step = (f_max - f_min) / (points - 1) as f64;
        let mut v: Vec<f64> = (0..points).map(|i| f_min + step * i as f64).collect();
        v[points - 1] = f_max;
        Self::new(v)
    }

    fn check_span(f_min: f64, f_max: f64, points: usize) -> Result<()> {
        if points < 2 {
            return Err(Error::invalid("a grid needs at least 2 points"));
        }
        if !(f_min > 0.0 && f_min < f_max && f_max.is_finite()) {
            return Err(Error::invalid(format!(
                "grid span must satisfy 0 < f_min < f_max, got [{f_min}, {f_max}]"
            )));
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumNoiseCurve {
    pub frequencies: Vec<f64>,
    pub asd: Vec<f64>,
    pub config: InterferometerConfig,
    pub setup: SqueezerSetup,
}

/// Evaluates [`quantum_noise_asd`] over a grid. Points are computed
/// independently, so parallel evaluation is bit-identical to sequential.
pub fn quantum_noise_curve(
    config: &InterferometerConfig,
    setup: &SqueezerSetup,
    grid: &FrequencyGrid,
) -> Result<QuantumNoiseCurve> {
    config.validate()?;
    setup.validate()?;
    let state = setup.delivered_state()?;
    let asd = grid
        .as_slice()
        .par_iter()
        .map(|&f| asd_with_state(config, setup.angle_policy, state.as_ref(), f))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantumNoiseCurve {
        frequencies: grid.as_slice().to_vec(),
        asd,
        config: config.clone(),
        setup: setup.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::squeeze::state_from_db;

    fn lossless_fd(db: f64) -> SqueezerSetup {
        SqueezerSetup::new(db, LossChain::new(), PhaseNoise::none(), AnglePolicy::FdOptimal)
            .unwrap()
    }

    /// Plain bisection on the sign of `K(f) − 1`, kept separate from the
    /// library so the regression value has its own derivation.
    fn crossover(cfg: &InterferometerConfig) -> f64 {
        let (mut lo, mut hi) = (1.0f64, 1e4f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if coupling_kappa(cfg, mid).unwrap() > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }

    #[test]
    fn sql_scaling_and_value() {
        let cfg = InterferometerConfig::new("t", 4000.0, 10.0, 1e5, 1064e-9, 100.0).unwrap();
        let a = sql_asd(&cfg, 100.0).unwrap();
        assert!((sql_asd(&cfg, 200.0).unwrap() / a - 0.5).abs() < 1e-15);
        let long = InterferometerConfig {
            arm_length: 8000.0,
            ..cfg.clone()
        };
        assert!((sql_asd(&long, 100.0).unwrap() / a - 0.5).abs() < 1e-15);
        let heavy = InterferometerConfig {
            mirror_mass: 40.0,
            ..cfg.clone()
        };
        assert!((sql_asd(&heavy, 100.0).unwrap() / a - 0.5).abs() < 1e-15);
        // sqrt(8 hbar / (10 kg (2 pi 100 Hz)^2 (4 km)^2))
        assert!((a / 3.654_628_311_030_597e-24 - 1.0).abs() < 1e-12);
        assert!(sql_asd(&cfg, 0.0).is_err());
        assert!(sql_asd(&cfg, -1.0).is_err());
    }

    #[test]
    fn kappa_linear_in_power_and_decreasing() {
        let cfg = InterferometerConfig::aligo();
        let double = InterferometerConfig {
            arm_power: 2.0 * cfg.arm_power,
            ..cfg.clone()
        };
        let grid = FrequencyGrid::log(1.0, 1e4, 400).unwrap();
        let mut prev = f64::INFINITY;
        for &f in grid.as_slice() {
            let k = coupling_kappa(&cfg, f).unwrap();
            assert!(k > 0.0 && k < prev);
            prev = k;
            let k2 = coupling_kappa(&double, f).unwrap();
            assert!((k2 / k - 2.0).abs() < 1e-14);
        }
        assert!(coupling_kappa(&cfg, 0.0).is_err());
    }

    #[test]
    fn sql_touch_point_regression() {
        let f = crossover(&InterferometerConfig::aligo());
        assert!((f - 68.067_106_878_465_06).abs() < 1e-9, "{f}");
        let f = crossover(&InterferometerConfig::h1());
        assert!((f - 53.745_880_445_507_38).abs() < 1e-9, "{f}");
    }

    #[test]
    fn h1_pole_from_bounces() {
        let cfg = InterferometerConfig::h1();
        assert!((finesse_from_bounces(130.0) - 204.203_522_483_337_4).abs() < 1e-9);
        assert!((cfg.cavity_pole - 91.756_637_677_633_5).abs() < 1e-9);
    }

    #[test]
    fn unsqueezed_touches_sql_at_crossover() {
        let cfg = InterferometerConfig::aligo();
        let f = crossover(&cfg);
        let q = quantum_noise_asd(&cfg, &SqueezerSetup::none(), f).unwrap();
        let k = coupling_kappa(&cfg, f).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        assert!((q / sql_asd(&cfg, f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unsqueezed_never_beats_sql() {
        let cfg = InterferometerConfig::aligo();
        for &f in FrequencyGrid::log(5.0, 1e4, 300).unwrap().as_slice() {
            let q = quantum_noise_asd(&cfg, &SqueezerSetup::none(), f).unwrap();
            assert!(q >= sql_asd(&cfg, f).unwrap() * (1.0 - 1e-15));
        }
    }

    #[test]
    fn fd_optimal_scales_by_e_minus_r() {
        let cfg = InterferometerConfig::aligo();
        let db = 9.0;
        let r = state_from_db(db, 0.0).unwrap().v_plus().ln() / 2.0;
        let grid = FrequencyGrid::log(10.0, 1e4, 200).unwrap();
        let sq = quantum_noise_curve(&cfg, &lossless_fd(db), &grid).unwrap();
        let un = quantum_noise_curve(&cfg, &SqueezerSetup::none(), &grid).unwrap();
        for (a, b) in sq.asd.iter().zip(&un.asd) {
            assert!((a / b / (-r).exp() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fig3_fixed_angle_halves_shot_noise() {
        let cfg = InterferometerConfig::aligo();
        let setup = SqueezerSetup::new(
            9.0,
            LossChain::single("total", 0.9).unwrap(),
            PhaseNoise::from_mrad(35.0).unwrap(),
            AnglePolicy::phase_quadrature(),
        )
        .unwrap();
        let f = 5e3;
        let ratio = quantum_noise_asd(&cfg, &SqueezerSetup::none(), f).unwrap()
            / quantum_noise_asd(&cfg, &setup, f).unwrap();
        assert!(ratio >= 2.0, "{ratio}");
    }

    #[test]
    fn fixed_angle_sign_flip_around_crossover() {
        let cfg = InterferometerConfig::aligo();
        let setup = SqueezerSetup::new(
            9.0,
            LossChain::single("total", 0.9).unwrap(),
            PhaseNoise::from_mrad(35.0).unwrap(),
            AnglePolicy::phase_quadrature(),
        )
        .unwrap();
        let state = setup.delivered_state().unwrap().unwrap();
        let grid = FrequencyGrid::log(10.0, 1e4, 300).unwrap();
        let sq = quantum_noise_curve(&cfg, &setup, &grid).unwrap();
        let un = quantum_noise_curve(&cfg, &SqueezerSetup::none(), &grid).unwrap();
        for (i, &f) in grid.as_slice().iter().enumerate() {
            let k = coupling_kappa(&cfg, f).unwrap();
            let v = state.variance_along(noise_quadrature_angle(k));
            // ASD ratio is sqrt(V) by construction; sign of V - 1 decides.
            assert_eq!(sq.asd[i] < un.asd[i], v < 1.0, "at {f} Hz");
            if k >= 1.0 {
                assert!(sq.asd[i] > un.asd[i], "below crossover at {f} Hz");
            }
        }
        assert!(sq.asd[0] > un.asd[0]);
        assert!(sq.asd[299] < un.asd[299]);
    }

    #[test]
    fn fd_envelope_and_loss_monotonicity() {
        let cfg = InterferometerConfig::h1();
        let noise = PhaseNoise::from_mrad(20.0).unwrap();
        let fd = |eta: f64| {
            SqueezerSetup::new(
                10.0,
                LossChain::single("total", eta).unwrap(),
                noise,
                AnglePolicy::FdOptimal,
            )
            .unwrap()
        };
        for &f in FrequencyGrid::log(10.0, 5e3, 60).unwrap().as_slice() {
            let best = quantum_noise_asd(&cfg, &fd(0.7), f).unwrap();
            for i in 0..20 {
                let angle = PI * i as f64 / 20.0;
                let fixed = SqueezerSetup {
                    angle_policy: AnglePolicy::Fixed { angle },
                    ..fd(0.7)
                };
                assert!(best <= quantum_noise_asd(&cfg, &fixed, f).unwrap() * (1.0 + 1e-12));
            }
            assert!(quantum_noise_asd(&cfg, &fd(0.5), f).unwrap() >= best);
        }
    }

    #[test]
    fn curve_matches_scalar_calls() {
        let cfg = InterferometerConfig::h1();
        let setup = SqueezerSetup::new(
            10.3,
            LossChain::single("total", 0.44).unwrap(),
            PhaseNoise::from_mrad(37.0).unwrap(),
            AnglePolicy::phase_quadrature(),
        )
        .unwrap();
        let single = quantum_noise_curve(&cfg, &setup, &FrequencyGrid::new(vec![321.0]).unwrap())
            .unwrap();
        assert_eq!(single.asd[0], quantum_noise_asd(&cfg, &setup, 321.0).unwrap());

        let grid = FrequencyGrid::log(10.0, 1e4, 257).unwrap();
        let curve = quantum_noise_curve(&cfg, &setup, &grid).unwrap();
        for (f, a) in grid.as_slice().iter().zip(&curve.asd).rev() {
            assert_eq!(*a, quantum_noise_asd(&cfg, &setup, *f).unwrap());
        }
    }

    #[test]
    fn grids() {
        let g = FrequencyGrid::log(10.0, 1e4, 4).unwrap();
        assert_eq!(g.as_slice()[0], 10.0);
        assert_eq!(g.as_slice()[3], 1e4);
        assert!((g.as_slice()[1] - 100.0).abs() < 1e-9);
        let g = FrequencyGrid::linear(1.0, 2.0, 3).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 1.5, 2.0]);
        assert!(FrequencyGrid::log(10.0, 10.0, 4).is_err());
        assert!(FrequencyGrid::log(10.0, 100.0, 1).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 1.0]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn setup_validation() {
        let bad = SqueezerSetup::new(
            3.0,
            LossChain::new(),
            PhaseNoise::none(),
            AnglePolicy::Fixed { angle: PI },
        );
        assert!(bad.is_err());
        assert!(SqueezerSetup::new(-1.0, LossChain::new(), PhaseNoise::none(), AnglePolicy::None)
            .is_err());
        assert!(InterferometerConfig::new("x", 1.0, 1.0, 0.0, 1.0, 1.0).is_err());
    }
}
