use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sqznb_core::budget::{format_asd, Improvement};
use sqznb_core::estimate::{ChainMcSummary, FirstOrder, ClampCounts};
use sqznb_core::squeeze::propagate_with_efficiency;
use sqznb_core::{
    compose, equivalent_power_increase, fit_efficiency, improvement_db, ingest_asd,
    mc_chain_efficiency, mc_uncertainty, optimal_inject_db, quantum_noise_curve, resample,
    AnglePolicy, ChainInputs, LossChain, Measurement, NoiseBudget, PhaseAveraging, PhaseNoise,
    SqueezedState, SqueezerSetup,
};

use crate::config::{Loaded, RunConfig};
use crate::svg::{self, Series};
use crate::{
    BudgetArgs, ChainArgs, CliError, FitArgs, Mode, OptimizeArgs, ProjectArgs, PropagateArgs,
    UncertaintyArgs,
};

const RNG_NOTE: &str = "ChaCha8 seeded with seed_from_u64(seed), stream k per 4096-sample block";

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("cannot encode JSON: {e}")))?;
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Usage(format!("cannot write output: {e}")))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn phase_noise(mrad: f64, averaging: crate::Averaging) -> Result<PhaseNoise, CliError> {
    Ok(PhaseNoise::with_averaging(mrad * 1e-3, averaging.into())?)
}

fn split_label<'a>(spec: &'a str, what: &str) -> Result<(&'a str, &'a str), CliError> {
    spec.split_once('=')
        .filter(|(l, _)| !l.is_empty())
        .ok_or_else(|| CliError::Usage(format!("{what} '{spec}' is not of the form label=value")))
}

fn number(text: &str, what: &str) -> Result<f64, CliError> {
    text.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{what}: '{text}' is not a number")))
}

#[derive(Serialize)]
struct ChainEntry {
    label: String,
    efficiency: f64,
}

#[derive(Serialize)]
struct Variances {
    injected: SqueezedState,
    after_loss: SqueezedState,
    detected: SqueezedState,
}

#[derive(Serialize)]
struct PropagateReport {
    inject_db: f64,
    efficiency: f64,
    phase_noise_mrad: f64,
    phase_averaging: PhaseAveraging,
    chain: Vec<ChainEntry>,
    variances: Variances,
    detected_db: f64,
}

pub fn propagate(args: &PropagateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let noise = phase_noise(args.phase_mrad, args.phase_averaging)?;
    let (efficiency, chain) = match (args.eta, args.loss.is_empty()) {
        (Some(eta), true) => (
            eta,
            vec![ChainEntry {
                label: "total".into(),
                efficiency: eta,
            }],
        ),
        (None, false) => {
            let mut chain = LossChain::new();
            for spec in &args.loss {
                let (label, value) = split_label(spec, "--loss")?;
                chain.push(label, number(value, "--loss")?)?;
            }
            let entries = chain
                .elements()
                .iter()
                .map(|e| ChainEntry {
                    label: e.label.clone(),
                    efficiency: e.efficiency,
                })
                .collect();
            (chain.total(), entries)
        }
        _ => return Err(CliError::Usage("give either --eta or one or more --loss".into())),
    };
    let p = propagate_with_efficiency(args.inject_db, efficiency, noise)?;
    emit(
        out,
        &PropagateReport {
            inject_db: args.inject_db,
            efficiency,
            phase_noise_mrad: args.phase_mrad,
            phase_averaging: noise.averaging(),
            chain,
            variances: Variances {
                injected: p.injected,
                after_loss: p.after_loss,
                detected: p.detected,
            },
            detected_db: p.detected_db,
        },
    )
}

pub fn fit(args: &FitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let noise = phase_noise(args.phase_mrad, args.phase_averaging)?;
    let r = fit_efficiency(args.injected, args.detected, noise)?;
    emit(
        out,
        &json!({
            "injected_db": args.injected,
            "detected_db": args.detected,
            "phase_noise_mrad": args.phase_mrad,
            "phase_averaging": noise.averaging(),
            "eta": r.estimate,
            "residual_db": r.residual,
            "iterations": r.iterations,
            "bracket": [r.bracket.0, r.bracket.1],
        }),
    )
}

#[derive(Serialize)]
struct UncertaintyReport {
    inputs: ChainInputs,
    samples: usize,
    seed: u64,
    rng: &'static str,
    nominal_db: f64,
    mean_db: f64,
    sigma_db: f64,
    clamped: ClampCounts,
    first_order: FirstOrder,
}

pub fn uncertainty(args: &UncertaintyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let inputs = ChainInputs {
        inject_db: Measurement::new(args.inject_db, args.inject_sigma_db)?,
        eta: Measurement::new(args.eta, args.eta_sigma)?,
        theta: Measurement::new(args.phase_mrad * 1e-3, args.phase_sigma_mrad * 1e-3)?,
        averaging: args.phase_averaging.into(),
    };
    let s = mc_uncertainty(&inputs, args.mc_samples, args.seed)?;
    emit(
        out,
        &UncertaintyReport {
            inputs,
            samples: s.samples,
            seed: s.seed,
            rng: RNG_NOTE,
            nominal_db: s.nominal_db,
            mean_db: s.mean_db,
            sigma_db: s.sigma_db,
            clamped: s.clamped,
            first_order: s.first_order,
        },
    )
}

/// Mode mismatch, OMC and Faraday losses of the H1 squeezed beam path.
pub fn h1_loss_elements() -> Vec<(String, Measurement)> {
    vec![
        ("mode_mismatch".into(), Measurement { value: 0.75, sigma: 0.05 }),
        ("omc".into(), Measurement { value: 0.82, sigma: 0.02 }),
        ("faraday".into(), Measurement { value: 0.80, sigma: 0.02 }),
    ]
}

pub fn chain(args: &ChainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let elements = if args.element.is_empty() {
        h1_loss_elements()
    } else {
        args.element
            .iter()
            .map(|spec| {
                let (label, rest) = split_label(spec, "--element")?;
                let (value, sigma) = rest.split_once(':').unwrap_or((rest, "0"));
                let m = Measurement::new(number(value, "--element")?, number(sigma, "--element")?)?;
                Ok((label.to_string(), m))
            })
            .collect::<Result<Vec<_>, CliError>>()?
    };
    let s: ChainMcSummary = mc_chain_efficiency(&elements, args.mc_samples, args.seed)?;
    let (lo, hi) = s.interval(2.0);
    emit(
        out,
        &json!({
            "elements": elements.iter().map(|(l, m)| json!({
                "label": l, "efficiency": m.value, "sigma": m.sigma
            })).collect::<Vec<_>>(),
            "samples": s.samples,
            "seed": s.seed,
            "rng": RNG_NOTE,
            "central": s.central,
            "mean": s.mean,
            "sigma": s.sigma,
            "interval_2sigma": [lo, hi],
            "clamped": s.clamped,
        }),
    )
}

pub fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let noise = phase_noise(args.phase_mrad, args.phase_averaging)?;
    let o = optimal_inject_db(args.eta, noise)?;
    // Setting dV/dr = 0 gives e^{4r} = keep/leak for any η > 0.
    let (keep, leak) = noise.weights();
    emit(
        out,
        &json!({
            "eta": args.eta,
            "phase_noise_mrad": args.phase_mrad,
            "phase_averaging": noise.averaging(),
            "inject_db": o.inject_db,
            "detected_db": o.detected_db,
            "analytic_inject_db": 5.0 * (keep / leak).log10(),
            "iterations": o.iterations,
        }),
    )
}

fn tabulated_components(cfg: &Loaded) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    cfg.components
        .iter()
        .map(|(label, path)| {
            let table = ingest_asd(path)?;
            Ok((label.clone(), resample(&table, cfg.grid.as_slice())?))
        })
        .collect()
}

fn build_budget(
    cfg: &Loaded,
    quantum: &[f64],
    tabulated: &[(String, Vec<f64>)],
) -> Result<NoiseBudget, CliError> {
    let mut comps = vec![("quantum".to_string(), quantum.to_vec())];
    comps.extend(tabulated.iter().cloned());
    Ok(compose(cfg.grid.as_slice(), comps)?)
}

fn grid_summary(cfg: &Loaded) -> serde_json::Value {
    let g = cfg.grid.as_slice();
    json!({
        "f_min_hz": g[0],
        "f_max_hz": g[g.len() - 1],
        "points": g.len(),
    })
}

fn squeezer_summary(setup: &SqueezerSetup) -> Result<serde_json::Value, CliError> {
    let p = sqznb_core::propagate(setup.inject_db, &setup.chain, setup.phase_noise)?;
    Ok(json!({
        "inject_db": setup.inject_db,
        "efficiency": setup.chain.total(),
        "phase_noise_mrad": setup.phase_noise.theta_rms() * 1e3,
        "phase_averaging": setup.phase_noise.averaging(),
        "angle_policy": setup.angle_policy,
        "detected_db": p.detected_db,
    }))
}

/// Improvement over an optional band; `None` when the band does not fit
/// inside the grid.
fn optional_improvement(
    reference: &NoiseBudget,
    squeezed: &NoiseBudget,
    band: Option<[f64; 2]>,
) -> Option<Improvement> {
    band.and_then(|b| improvement_db(reference, squeezed, (b[0], b[1])).ok())
}

pub fn budget(args: &BudgetArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let tabulated = tabulated_components(&cfg)?;
    let reference_q = quantum_noise_curve(&cfg.interferometer, &SqueezerSetup::none(), &cfg.grid)?;
    let squeezed_q = quantum_noise_curve(&cfg.interferometer, &cfg.squeezer, &cfg.grid)?;
    let reference = build_budget(&cfg, &reference_q.asd, &tabulated)?;
    let squeezed = build_budget(&cfg, &squeezed_q.asd, &tabulated)?;

    let band = cfg.raw.band;
    let main = improvement_db(&reference, &squeezed, (band[0], band[1]))?;
    let secondary = optional_improvement(&reference, &squeezed, cfg.raw.secondary_band);
    let power = equivalent_power_increase(main.max_db).ok();

    let grid = cfg.grid.as_slice();
    let mut files = Vec::new();
    let mut put = |suffix: &str, contents: String| -> Result<(), CliError> {
        let path = with_suffix(&args.out, suffix);
        write_file(&path, &contents)?;
        files.push(file_name(&path));
        Ok(())
    };
    put("-total.csv", format_asd(grid, &squeezed.total))?;
    put("-reference-total.csv", format_asd(grid, &reference.total))?;
    put("-quantum.csv", format_asd(grid, &squeezed_q.asd))?;
    put("-quantum-reference.csv", format_asd(grid, &reference_q.asd))?;
    for (label, values) in &tabulated {
        put(&format!("-component-{}.csv", sanitize(label)), format_asd(grid, values))?;
    }
    if args.svg {
        let mut series = vec![
            Series { label: "total, no squeezing", x: grid, y: &reference.total, dashed: false },
            Series { label: "total, squeezed", x: grid, y: &squeezed.total, dashed: false },
            Series { label: "quantum, no squeezing", x: grid, y: &reference_q.asd, dashed: true },
            Series { label: "quantum, squeezed", x: grid, y: &squeezed_q.asd, dashed: true },
        ];
        for (label, values) in &tabulated {
            series.push(Series { label, x: grid, y: values, dashed: true });
        }
        put(
            ".svg",
            svg::render(
                &cfg.interferometer.label,
                "frequency [Hz]",
                "strain [1/sqrt(Hz)]",
                &series,
            ),
        )?;
    }

    let summary = json!({
        "config": cfg.interferometer.label,
        "grid": grid_summary(&cfg),
        "squeezer": squeezer_summary(&cfg.squeezer)?,
        "components": tabulated.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>(),
        "band": main,
        "secondary_band": secondary,
        "equivalent_power_increase": power,
        "files": files,
    });
    let summary_path = with_suffix(&args.out, "-summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(&summary_path, &format!("{text}\n"))?;
    emit(out, &summary)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn project(args: &ProjectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let mut modes = if args.mode.is_empty() {
        vec![Mode::None, Mode::Fixed, Mode::FdOptimal]
    } else {
        args.mode.clone()
    };
    modes.dedup();

    let fixed_policy = match cfg.squeezer.angle_policy {
        fixed @ AnglePolicy::Fixed { .. } => fixed,
        _ => AnglePolicy::phase_quadrature(),
    };
    let setup_for = |mode: Mode| match mode {
        Mode::None => SqueezerSetup::none(),
        Mode::Fixed => SqueezerSetup {
            angle_policy: fixed_policy,
            ..cfg.squeezer.clone()
        },
        Mode::FdOptimal => SqueezerSetup {
            angle_policy: AnglePolicy::FdOptimal,
            ..cfg.squeezer.clone()
        },
    };

    let tabulated = tabulated_components(&cfg)?;
    let grid = cfg.grid.as_slice();
    let none_q = quantum_noise_curve(&cfg.interferometer, &SqueezerSetup::none(), &cfg.grid)?;
    let none_total = build_budget(&cfg, &none_q.asd, &tabulated)?;
    let last = grid.len() - 1;

    struct Evaluated {
        mode: Mode,
        quantum: Vec<f64>,
        total: NoiseBudget,
    }
    let mut evaluated = Vec::new();
    for &mode in &modes {
        let q = quantum_noise_curve(&cfg.interferometer, &setup_for(mode), &cfg.grid)?;
        let total = build_budget(&cfg, &q.asd, &tabulated)?;
        evaluated.push(Evaluated {
            mode,
            quantum: q.asd,
            total,
        });
    }

    let mut files = Vec::new();
    let mut reports = Vec::new();
    for e in &evaluated {
        let q_path = with_suffix(&args.out, &format!("-quantum-{}.csv", e.mode.name()));
        let t_path = with_suffix(&args.out, &format!("-total-{}.csv", e.mode.name()));
        write_file(&q_path, &format_asd(grid, &e.quantum))?;
        write_file(&t_path, &format_asd(grid, &e.total.total))?;
        files.push(file_name(&q_path));
        files.push(file_name(&t_path));
        let band = cfg.raw.band;
        reports.push(json!({
            "mode": e.mode.name(),
            "high_frequency_hz": grid[last],
            "high_frequency_ratio": none_q.asd[last] / e.quantum[last],
            "low_frequency_hz": grid[0],
            "low_frequency_ratio": none_q.asd[0] / e.quantum[0],
            "band": improvement_db(&none_total, &e.total, (band[0], band[1]))?,
        }));
    }

    let find = |m: Mode| evaluated.iter().find(|e| e.mode == m);
    let fd_below_fixed = match (find(Mode::FdOptimal), find(Mode::Fixed)) {
        (Some(fd), Some(fx)) => Some(
            fd.quantum
                .iter()
                .zip(&fx.quantum)
                .all(|(a, b)| *a <= *b * (1.0 + 1e-12)),
        ),
        _ => None,
    };

    let mut series = Vec::new();
    for e in &evaluated {
        series.push(Series {
            label: match e.mode {
                Mode::None => "quantum, no squeezing",
                Mode::Fixed => "quantum, fixed-angle squeezing",
                Mode::FdOptimal => "quantum, frequency-dependent squeezing",
            },
            x: grid,
            y: &e.quantum,
            dashed: true,
        });
    }
    for e in &evaluated {
        series.push(Series {
            label: match e.mode {
                Mode::None => "total, no squeezing",
                Mode::Fixed => "total, fixed-angle squeezing",
                Mode::FdOptimal => "total, frequency-dependent squeezing",
            },
            x: grid,
            y: &e.total.total,
            dashed: false,
        });
    }
    for (label, values) in &tabulated {
        series.push(Series { label, x: grid, y: values, dashed: true });
    }
    let svg_path = with_suffix(&args.out, ".svg");
    write_file(
        &svg_path,
        &svg::render(
            &cfg.interferometer.label,
            "frequency [Hz]",
            "strain [1/sqrt(Hz)]",
            &series,
        ),
    )?;
    files.push(file_name(&svg_path));

    let summary = json!({
        "config": cfg.interferometer.label,
        "grid": grid_summary(&cfg),
        "squeezer": squeezer_summary(&cfg.squeezer)?,
        "components": tabulated.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>(),
        "modes": reports,
        "fd_optimal_below_fixed": fd_below_fixed,
        "files": files,
    });
    let summary_path = with_suffix(&args.out, "-summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(&summary_path, &format!("{text}\n"))?;
    emit(out, &summary)
}
