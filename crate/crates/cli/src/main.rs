use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use delaypred::approx_predictor::calibrate_k;
use delaypred::gains::{build_certificate, check_conditions, CertificateRequest};
use delaypred::lti::deadbeat_demo;
use delaypred::runner::diagnostics::scenario_energy_check;
use delaypred::runner::exogenous::SignalSpec;
use delaypred::runner::log::emit_csv;
use delaypred::runner::plot::emit_plot;
use delaypred::runner::scenario::{ControllerSpec, GainSpec};
use delaypred::{run_closed_loop, Scenario, SimulationLog};

#[derive(Parser)]
#[command(
    name = "delaypred",
    version,
    about = "Predictor-based sampled-data output feedback simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: Outputs,
    },
    /// Simulate the built-in two-state reference loop.
    Section5 {
        #[command(flatten)]
        out: Outputs,
        /// Print the scenario as JSON instead of running it.
        #[arg(long)]
        print_config: bool,
    },
    /// Evaluate the sufficient conditions on the scenario's tuning.
    GainsCheck {
        config: PathBuf,
        /// Decay rate `q` of the observer Lyapunov inequality.
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Probes for the dissipation certificate.
        #[arg(long, default_value_t = 4000)]
        probes: usize,
        /// Samples used to measure K.
        #[arg(long, default_value_t = 40)]
        k_samples: usize,
        /// Exit nonzero unless every condition holds.
        #[arg(long)]
        strict: bool,
    },
    /// Measure the predictor accuracy constant K.
    CalibrateK {
        config: PathBuf,
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
    /// Evaluate the scenario's predictor once.
    Predict {
        config: PathBuf,
        /// Comma-separated state estimate.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        state: Vec<f64>,
        /// Comma-separated input values, equal pieces over the delay window, oldest first.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        history: Vec<f64>,
    },
    /// Finite-time convergence of the sample-based linear controller.
    DeadbeatDemo {
        /// Multiplies the dead-beat gain; any value other than 1 loses finite-time convergence.
        #[arg(long, default_value_t = 1.0)]
        gain_scale: f64,
        #[command(flatten)]
        out: Outputs,
    },
}

#[derive(clap::Args)]
struct Outputs {
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Columns drawn in the SVG.
    #[arg(long, value_delimiter = ',', default_value = "x1,x2")]
    columns: Vec<String>,
}

impl Outputs {
    fn write(&self, log: &SimulationLog) -> Result<()> {
        if let Some(path) = &self.csv {
            emit_csv(log, path).with_context(|| format!("writing {}", path.display()))?;
        }
        if let Some(path) = &self.svg {
            let cols: Vec<&str> = self.columns.iter().map(String::as_str).collect();
            emit_plot(log, &cols, path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn load(path: &Path) -> Result<Scenario> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::from_json(&text)?)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs, writes outputs, prints a summary; `false` when a runtime check fails.
fn simulate(scenario: &Scenario, out: &Outputs) -> Result<bool> {
    let log = run_closed_loop(scenario)?;
    out.write(&log)?;
    let last = log.last().context("empty log")?;
    let peak = log.rows.iter().map(|r| norm(&r.x)).fold(0.0, f64::max);
    println!("rows: {}", log.rows.len());
    println!("holds: {}, samples: {}", log.holds.len(), log.samples.len());
    println!("peak |x|: {peak:e}");
    println!(
        "final t = {}: |x| = {:e}, x = {:?}",
        last.t,
        norm(&last.x),
        last.x
    );
    let mut ok = true;
    if let Some(rep) = scenario_energy_check(scenario, &log)? {
        println!(
            "observer energy bound: {} (worst log margin {:.4} at t = {})",
            if rep.holds { "holds" } else { "VIOLATED" },
            rep.worst_log_margin,
            rep.worst_time
        );
        ok &= rep.holds;
    }
    Ok(ok)
}

fn gains_check(scenario: &Scenario, q: f64, probes: usize, k_samples: usize) -> Result<bool> {
    let plant = scenario.strict_plant()?;
    let cfg = scenario.predictor_config()?;
    let ControllerSpec::ApproxLipschitz { k, .. } = &scenario.controller else {
        bail!("gains-check needs an approx_lipschitz controller");
    };
    let obs = scenario
        .observer
        .as_ref()
        .context("gains-check needs an observer")?;
    let GainSpec::Vector(p) = &obs.p else {
        bail!("gains-check needs an explicit observer vector p");
    };
    let big_k = match calibrate_k(&cfg, &plant, k_samples, scenario.seed) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("K not measured ({e}); using 0");
            0.0
        }
    };
    let b_sup = match &scenario.perturbation {
        SignalSpec::Zero => 0.0,
        other => other.resolve(scenario.horizon, scenario.seed)?.sup_abs(),
    };
    let cert = build_certificate(
        &plant,
        &CertificateRequest {
            k: k.clone(),
            p: p.clone(),
            q,
            theta: Some(obs.theta),
            t1: scenario.t1,
            t2: scenario.t2,
            predictor: cfg,
            big_k,
            b_sup,
            probes,
            seed: scenario.seed,
        },
    )?;
    let report = check_conditions(&cert, &plant)?;
    println!(
        "{}",
        serde_json::to_string_pretty(
            &serde_json::json!({ "certificate": cert, "report": report })
        )?
    );
    Ok(report.all_pass())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => simulate(&load(&config)?, &out),
        Command::Section5 { out, print_config } => {
            let s = Scenario::reference();
            if print_config {
                println!("{}", s.to_json()?);
                return Ok(true);
            }
            simulate(&s, &out)
        }
        Command::GainsCheck {
            config,
            q,
            probes,
            k_samples,
            strict,
        } => {
            let pass = gains_check(&load(&config)?, q, probes, k_samples)?;
            Ok(pass || !strict)
        }
        Command::CalibrateK { config, samples } => {
            let s = load(&config)?;
            let cfg = s.predictor_config()?;
            let plant = s.strict_plant()?;
            println!("rho = {}", cfg.contraction(&plant));
            println!("K = {}", calibrate_k(&cfg, &plant, samples, s.seed)?);
            Ok(true)
        }
        Command::Predict {
            config,
            state,
            history,
        } => {
            let s = load(&config)?;
            println!("{}", serde_json::to_string(&s.predict(&state, &history)?)?);
            Ok(true)
        }
        Command::DeadbeatDemo { gain_scale, out } => {
            let demo = deadbeat_demo(gain_scale)?;
            out.write(&demo.log)?;
            println!("gain: {:?}", demo.gain.as_slice());
            println!("predicted zero time: {}", demo.predicted_time);
            println!("sup |x| after it: {:e}", demo.residual);
            let reached = demo.residual <= 1e-9;
            println!(
                "finite-time convergence: {}",
                if reached { "yes" } else { "no" }
            );
            Ok(reached || gain_scale != 1.0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("runtime check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
