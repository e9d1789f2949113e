//! Inverse problems and uncertainty propagation for the squeezing chain.
//!
//! # Random numbers
//!
//! Monte Carlo runs use ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)`. Samples are split into blocks of
//! [`MC_BLOCK`] draws; block `k` uses the same seed with ChaCha stream `k`.
//! Within a sample, one standard normal (ziggurat, `rand_distr`) is drawn per
//! input in declaration order. Blocks are evaluated in parallel and merged in
//! block order, so results are independent of the worker count and of the
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solve;
use crate::squeeze::{propagate_with_efficiency, PhaseAveraging, PhaseNoise, MAX_PHASE_RMS};

/// Samples per independent random stream.
pub const MC_BLOCK: usize = 4096;
pub const MIN_MC_SAMPLES: usize = 1000;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;

/// Bisection stops once the dB residual is this small.
const FIT_TOL_DB: f64 = 1e-12;

/// Search interval for the injected squeezing level, dB.
pub const INJECT_SEARCH_DB: (f64, f64) = (0.0, 60.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub sigma: f64,
}

impl Measurement {
    pub fn new(value: f64, sigma: f64) -> Result<Self> {
        if !value.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "measurement needs a finite value and non-negative sigma, got {value} ± {sigma}"
            )));
        }
        Ok(Self { value, sigma })
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub estimate: f64,
    /// Forward model at `estimate` minus the target, dB.
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// Detection efficiency that turns `inject_db` into `detected_db` under
/// `noise`, found by bisection on `[0, 1]`.
pub fn fit_efficiency(inject_db: f64, detected_db: f64, noise: PhaseNoise) -> Result<FitResult> {
    if !(detected_db.is_finite() && detected_db >= 0.0) {
        return Err(Error::invalid(format!(
            "detected squeezing must be non-negative, got {detected_db} dB"
        )));
    }
    // Negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(detected_db <= inject_db) {
        return Err(Error::invalid(format!(
            "detected squeezing {detected_db} dB exceeds the injected {inject_db} dB"
        )));
    }
    let forward = |eta: f64| -> f64 {
        propagate_with_efficiency(inject_db, eta, noise)
            .map(|p| p.detected_db)
            .unwrap_or(f64::NAN)
    };
    let residual = |eta: f64| forward(eta) - detected_db;
    // Validates inject_db as a side effect.
    propagate_with_efficiency(inject_db, 1.0, noise)?;

    let (r_lo, r_hi) = (residual(0.0), residual(1.0));
    let done = |eta: f64, r: f64| FitResult {
        estimate: eta,
        residual: r,
        iterations: 0,
        bracket: (eta, eta),
    };
    if r_lo.abs() <= FIT_TOL_DB {
        return Ok(done(0.0, r_lo));
    }
    if r_hi.abs() <= FIT_TOL_DB {
        return Ok(done(1.0, r_hi));
    }
    if (r_lo < 0.0) == (r_hi < 0.0) {
        let (a, b) = (forward(0.0), forward(1.0));
        return Err(Error::Infeasible {
            target: detected_db,
            min: a.min(b),
            max: a.max(b),
        });
    }
    let b = solve::bisect(residual, 0.0, 1.0, FIT_TOL_DB);
    Ok(FitResult {
        estimate: b.x,
        residual: residual(b.x),
        iterations: b.iterations,
        bracket: (b.lo, b.hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub inject_db: f64,
    pub detected_db: f64,
    pub iterations: usize,
}

/// Injected squeezing that maximizes detected squeezing when antisqueezing
/// leaks in through phase jitter. Golden-section search over
/// [`INJECT_SEARCH_DB`].
pub fn optimal_inject_db(efficiency: f64, noise: PhaseNoise) -> Result<Optimum> {
    if noise.theta_rms() == 0.0 {
        return Err(Error::NoFiniteOptimum(
            "without phase noise detected squeezing grows with the injected level".into(),
        ));
    }
    propagate_with_efficiency(0.0, efficiency, noise)?;
    let objective = |db: f64| {
        propagate_with_efficiency(db, efficiency, noise)
            .map(|p| p.detected_db)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (lo, hi) = INJECT_SEARCH_DB;
    let r = solve::golden_max(objective, lo, hi, 1e-7);
    Ok(Optimum {
        inject_db: r.x,
        detected_db: objective(r.x),
        iterations: r.iterations,
    })
}

/// Inputs of the squeezing chain with their one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainInputs {
    pub inject_db: Measurement,
    pub eta: Measurement,
    /// rad
    pub theta: Measurement,
    #[serde(default)]
    pub averaging: PhaseAveraging,
}

impl ChainInputs {
    /// Values from the 2011 H1 squeezing run: 10.3 ± 0.2 dB injected,
    /// 44 ± 2 % efficiency, 37 ± 6 mrad phase noise.
    pub fn h1() -> Self {
        Self {
            inject_db: Measurement::new(10.3, 0.2).unwrap(),
            eta: Measurement::new(0.44, 0.02).unwrap(),
            theta: Measurement::new(0.037, 0.006).unwrap(),
            averaging: PhaseAveraging::default(),
        }
    }

    fn forward(&self, inject_db: f64, eta: f64, theta: f64) -> Result<f64> {
        let noise = PhaseNoise::with_averaging(theta, self.averaging)?;
        Ok(propagate_with_efficiency(inject_db, eta, noise)?.detected_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClampCounts {
    pub inject_db: usize,
    pub eta: usize,
    pub theta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    /// d(detected dB)/d(input) at the nominal point.
    pub derivative: f64,
    /// `|derivative| · sigma`.
    pub contribution_db: f64,
}

/// Linearized error budget, reported next to the Monte Carlo result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrder {
    pub inject_db: Sensitivity,
    pub eta: Sensitivity,
    pub theta: Sensitivity,
    pub sigma_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    /// Forward value at the nominal inputs.
    pub nominal_db: f64,
    pub mean_db: f64,
    pub sigma_db: f64,
    pub samples: usize,
    pub seed: u64,
    pub clamped: ClampCounts,
    pub first_order: FirstOrder,
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(())
}

/// Runs `eval` on `samples` vectors of `dims` standard normals, returning
/// the outputs in sample order.
fn draw_blocks<T, F>(seed: u64, samples: usize, dims: usize, eval: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    let per_block: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let n = MC_BLOCK.min(samples - k * MC_BLOCK);
            let mut z = vec![0.0; dims];
            (0..n)
                .map(|_| {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    eval(&z)
                })
                .collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

fn mean_and_sigma(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // Shifting by the first value keeps a constant sample exact.
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn clamp_counted(x: f64, lo: f64, hi: f64) -> (f64, bool) {
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

/// Largest jitter accepted by [`PhaseNoise`].
fn theta_ceiling() -> f64 {
    MAX_PHASE_RMS.next_down()
}

/// Monte Carlo propagation of independent Gaussian input uncertainties to
/// the detected squeezing. Out-of-domain draws are clamped to the boundary
/// and counted.
pub fn mc_uncertainty(inputs: &ChainInputs, samples: usize, seed: u64) -> Result<McSummary> {
    check_samples(samples)?;
    let nominal_db = inputs.forward(inputs.inject_db.value, inputs.eta.value, inputs.theta.value)?;
    let first_order = first_order(inputs)?;

    let draws = draw_blocks(seed, samples, 3, |z| {
        let (s, cs) = clamp_counted(
            inputs.inject_db.value + inputs.inject_db.sigma * z[0],
            0.0,
            f64::INFINITY,
        );
        let (e, ce) = clamp_counted(inputs.eta.value + inputs.eta.sigma * z[1], 0.0, 1.0);
        let (t, ct) = clamp_counted(
            inputs.theta.value + inputs.theta.sigma * z[2],
            0.0,
            theta_ceiling(),
        );
        let db = inputs.forward(s, e, t).unwrap_or(f64::NAN);
        (db, [cs, ce, ct])
    });

    let mut clamped = ClampCounts::default();
    let mut values = Vec::with_capacity(samples);
    for (db, c) in draws {
        clamped.inject_db += c[0] as usize;
        clamped.eta += c[1] as usize;
        clamped.theta += c[2] as usize;
        values.push(db);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "Monte Carlo detected squeezing".into(),
            frequency: f64::NAN,
        });
    }
    let (mean_db, sigma_db) = mean_and_sigma(&values);
    Ok(McSummary {
        nominal_db,
        mean_db,
        sigma_db,
        samples,
        seed,
        clamped,
        first_order,
    })
}

/// Central-difference sensitivities at the nominal point, one-sided where a
/// domain boundary is within one step.
pub fn first_order(inputs: &ChainInputs) -> Result<FirstOrder> {
    let (s0, e0, t0) = (inputs.inject_db.value, inputs.eta.value, inputs.theta.value);
    let partial = |which: usize, x0: f64, lo: f64, hi: f64, sigma: f64| -> Result<Sensitivity> {
        let h = 1e-6 * x0.abs().max(1e-3);
        let a = (x0 - h).max(lo);
        let b = (x0 + h).min(hi);
        let at = |x: f64| match which {
            0 => inputs.forward(x, e0, t0),
            1 => inputs.forward(s0, x, t0),
            _ => inputs.forward(s0, e0, x),
        };
        let derivative = (at(b)? - at(a)?) / (b - a);
        Ok(Sensitivity {
            derivative,
            contribution_db: derivative.abs() * sigma,
        })
    };
    let inject_db = partial(0, s0, 0.0, f64::INFINITY, inputs.inject_db.sigma)?;
    let eta = partial(1, e0, 0.0, 1.0, inputs.eta.sigma)?;
    let theta = partial(2, t0, 0.0, theta_ceiling(), inputs.theta.sigma)?;
    let sigma_db = [inject_db, eta, theta]
        .iter()
        .map(|s| s.contribution_db * s.contribution_db)
        .sum::<f64>()
        .sqrt();
    Ok(FirstOrder {
        inject_db,
        eta,
        theta,
        sigma_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainMcSummary {
    /// Product of the nominal efficiencies.
    pub central: f64,
    pub mean: f64,
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
    /// Per-element count of draws clamped into `[0, 1]`.
    pub clamped: Vec<usize>,
}

impl ChainMcSummary {
    /// `mean ± k·sigma`.
    pub fn interval(&self, k: f64) -> (f64, f64) {
        (self.mean - k * self.sigma, self.mean + k * self.sigma)
    }
}

/// Monte Carlo distribution of a loss chain's total efficiency from
/// independent Gaussian uncertainties on each element.
pub fn mc_chain_efficiency(
    elements: &[(String, Measurement)],
    samples: usize,
    seed: u64,
) -> Result<ChainMcSummary> {
    check_samples(samples)?;
    if let Some((label, m)) = elements
        .iter()
        .find(|(_, m)| !(m.value > 0.0 && m.value <= 1.0))
    {
        return Err(Error::invalid(format!(
            "efficiency of '{label}' must lie in (0, 1], got {}",
            m.value
        )));
    }
    let central = elements.iter().map(|(_, m)| m.value).product();
    let draws = draw_blocks(seed, samples, elements.len(), |z| {
        let mut total = 1.0;
        let mut flags = Vec::with_capacity(z.len());
        for ((_, m), zi) in elements.iter().zip(z) {
            let (e, c) = clamp_counted(m.value + m.sigma * zi, 0.0, 1.0);
            total *= e;
            flags.push(c);
        }
        (total, flags)
    });
    let mut clamped = vec![0; elements.len()];
    let mut values = Vec::with_capacity(samples);
    for (v, flags) in draws {
        for (c, f) in clamped.iter_mut().zip(flags) {
            *c += f as usize;
        }
        values.push(v);
    }
    let (mean, sigma) = mean_and_sigma(&values);
    Ok(ChainMcSummary {
        central,
        mean,
        sigma,
        samples,
        seed,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// V'' is affine in η, so the efficiency has a closed form that does not
    /// go through the solver.
    fn eta_closed_form(inject_db: f64, detected_db: f64, theta: f64) -> f64 {
        let vm = 10f64.powf(-inject_db / 10.0);
        let vp = 10f64.powf(inject_db / 10.0);
        let (c, s) = (theta.cos().powi(2), theta.sin().powi(2));
        let target = 10f64.powf(-detected_db / 10.0);
        (1.0 - target) / ((1.0 - vm) * c + (1.0 - vp) * s)
    }

    #[test]
    fn fit_examples() {
        let r = fit_efficiency(10.3, 2.21, PhaseNoise::none()).unwrap();
        assert!((r.estimate - 0.44).abs() < 1e-3, "{}", r.estimate);
        assert!(r.residual.abs() <= 1e-9);
        assert!(r.bracket.0 <= r.estimate && r.estimate <= r.bracket.1);

        let r = fit_efficiency(7.5, 7.5, PhaseNoise::none()).unwrap();
        assert_eq!(r.estimate, 1.0);
        let r = fit_efficiency(7.5, 0.0, PhaseNoise::none()).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn fit_matches_closed_form() {
        let noise = PhaseNoise::from_mrad(37.0).unwrap();
        let r = fit_efficiency(10.3, 2.14, noise).unwrap();
        let exact = eta_closed_form(10.3, 2.14, 0.037);
        assert!((r.estimate - exact).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_efficiency(10.0, 11.0, PhaseNoise::none()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(fit_efficiency(10.0, -1.0, PhaseNoise::none()).is_err());
        // 20 dB with 35 mrad tops out near 8.78 dB.
        let e = fit_efficiency(20.0, 10.0, PhaseNoise::from_mrad(35.0).unwrap()).unwrap_err();
        match e {
            Error::Infeasible { max, min, .. } => {
                assert!((max - 8.779_882_312_634_841).abs() < 1e-9);
                assert_eq!(min, 0.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fit_inverts_propagation_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let s: f64 = rng.random_range(0.5..20.0);
            let eta: f64 = rng.random_range(0.0..=1.0);
            let t: f64 = rng.random_range(0.0..0.05);
            let noise = PhaseNoise::new(t).unwrap();
            let d = propagate_with_efficiency(s, eta, noise).unwrap().detected_db;
            let r = fit_efficiency(s, d, noise).unwrap();
            assert!((r.estimate - eta).abs() < 1e-6, "s={s} eta={eta} t={t}");
        }
    }

    #[test]
    fn optimum_lossless_closed_form() {
        let t = 0.035f64;
        let o = optimal_inject_db(1.0, PhaseNoise::new(t).unwrap()).unwrap();
        // e^{2r} = cot(t), minimum variance sin(2t)
        let inject = 10.0 * (1.0 / t.tan()).log10();
        let detected = -10.0 * (2.0 * t).sin().log10();
        assert!((o.inject_db - inject).abs() < 0.01, "{}", o.inject_db);
        assert!((o.detected_db - detected).abs() < 1e-6);
        assert!((o.inject_db - 14.557_545_680_300_13).abs() < 0.01);
        assert!((o.detected_db - 11.552_566_917_607_19).abs() < 1e-6);
    }

    #[test]
    fn optimum_needs_phase_noise() {
        assert!(matches!(
            optimal_inject_db(1.0, PhaseNoise::none()),
            Err(Error::NoFiniteOptimum(_))
        ));
    }

    #[test]
    fn optimum_beats_brute_force_scan() {
        let noise = PhaseNoise::from_mrad(37.0).unwrap();
        let o = optimal_inject_db(0.44, noise).unwrap();
        let (mut best_db, mut best_x) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=60_000 {
            let x = i as f64 * 1e-3;
            let d = propagate_with_efficiency(x, 0.44, noise).unwrap().detected_db;
            assert!(o.detected_db >= d - 1e-12, "scan beat optimum at {x} dB");
            if d > best_db {
                best_db = d;
                best_x = x;
            }
        }
        assert!((o.detected_db - best_db).abs() < 1e-9);
        assert!((o.inject_db - best_x).abs() < 0.01);
    }

    #[test]
    fn mc_degenerate_inputs() {
        let inputs = ChainInputs {
            inject_db: Measurement::exact(10.3),
            eta: Measurement::exact(0.44),
            theta: Measurement::exact(0.037),
            averaging: PhaseAveraging::default(),
        };
        let s = mc_uncertainty(&inputs, 2000, 1).unwrap();
        assert_eq!(s.sigma_db, 0.0);
        assert_eq!(s.mean_db, s.nominal_db);
        assert_eq!(s.clamped, ClampCounts::default());
    }

    #[test]
    fn mc_rejects_small_runs() {
        assert!(mc_uncertainty(&ChainInputs::h1(), 999, 1).is_err());
    }

    #[test]
    fn mc_is_reproducible_and_thread_independent() {
        let a = mc_uncertainty(&ChainInputs::h1(), 20_000, 42).unwrap();
        let b = mc_uncertainty(&ChainInputs::h1(), 20_000, 42).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| mc_uncertainty(&ChainInputs::h1(), 20_000, 42).unwrap());
        assert_eq!(a, c);
        let d = mc_uncertainty(&ChainInputs::h1(), 20_000, 43).unwrap();
        assert_ne!(a.mean_db, d.mean_db);
    }

    #[test]
    fn mc_matches_first_order_and_scales_with_sigma() {
        let base = ChainInputs::h1();
        let s = mc_uncertainty(&base, 100_000, 42).unwrap();
        // Finite-difference oracle: 6.38 dB per unit efficiency dominates.
        assert!((s.first_order.eta.derivative - 6.378_237_331_966).abs() < 1e-4);
        assert!((s.first_order.sigma_db - 0.1289).abs() < 5e-4);
        assert!((s.sigma_db - s.first_order.sigma_db).abs() < 0.01);

        let doubled = ChainInputs {
            inject_db: Measurement::new(10.3, 0.4).unwrap(),
            eta: Measurement::new(0.44, 0.04).unwrap(),
            theta: Measurement::new(0.037, 0.012).unwrap(),
            ..base
        };
        let d = mc_uncertainty(&doubled, 100_000, 42).unwrap();
        let ratio = d.sigma_db / s.sigma_db;
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn mc_counts_clamps() {
        let inputs = ChainInputs {
            eta: Measurement::new(0.99, 0.05).unwrap(),
            theta: Measurement::new(0.001, 0.01).unwrap(),
            ..ChainInputs::h1()
        };
        let s = mc_uncertainty(&inputs, 10_000, 3).unwrap();
        assert!(s.clamped.eta > 0);
        assert!(s.clamped.theta > 0);
        assert_eq!(s.clamped.inject_db, 0);
    }

    #[test]
    fn mc_spread_shrinks_with_samples() {
        let spread = |n: usize| {
            let v: Vec<f64> = (0..8)
                .map(|seed| mc_uncertainty(&ChainInputs::h1(), n, seed).unwrap().sigma_db)
                .collect();
            mean_and_sigma(&v).1
        };
        let small = spread(1_000);
        let large = spread(100_000);
        // Expected ratio is 10; allow for the handful of seeds.
        assert!(large < small / 3.0, "{small} vs {large}");
    }

    #[test]
    fn chain_mc() {
        let elements = vec![
            ("mode mismatch".to_string(), Measurement::new(0.75, 0.05).unwrap()),
            ("omc".to_string(), Measurement::new(0.82, 0.02).unwrap()),
            ("faraday".to_string(), Measurement::new(0.80, 0.02).unwrap()),
        ];
        let s = mc_chain_efficiency(&elements, 100_000, 42).unwrap();
        assert!((s.central - 0.492).abs() < 1e-12);
        assert!((s.mean - 0.492).abs() < 0.002);
        // Relative errors add in quadrature: 0.492 · 0.0752.
        assert!((s.sigma - 0.037).abs() < 0.002, "{}", s.sigma);

        let bad = vec![("x".to_string(), Measurement::exact(1.5))];
        assert!(mc_chain_efficiency(&bad, 1000, 1).is_err());
    }
}
