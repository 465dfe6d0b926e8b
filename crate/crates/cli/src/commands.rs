use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use cqec::controller::{replay, write_events_csv};
use cqec::experiments::{
    calibrate, coherence_transfer_experiment, conditional_coherence_experiment, convergence_check,
    dark_count_experiment, dead_time_experiment, default_ratios, distinguishability_scan,
    logical_t1_experiment, parse_delays, single_flip_experiment, CoherenceTransferOptions,
    ConditionalCoherenceOptions, ConvergenceOptions, DarkCountOptions, DeadTimeOptions,
    ExperimentResult, LogicalT1Options, OptimizeOptions, RunConfig, SingleFlipOptions,
    ThresholdLattice,
};
use cqec::model::linear;
use cqec::trajectory::{measurement_rate, HomodyneRecord};
use cqec::{DeviceParams, Sector};

use crate::manifest::{run_id, RunManifest};
use crate::{Cli, Command, Experiment, Failure, OptimizeArgs, ParamsAction, ReplayArgs, RunArgs};

const DEFAULT_TRAJECTORIES: usize = 500;

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let params = load_params(cli)?;
    if let Command::Params {
        action: ParamsAction::Show,
    } = &cli.command
    {
        let text = params_report(&params, cli.global.config.as_deref());
        let mut out = std::io::stdout().lock();
        return match writeln!(out, "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        };
    }
    let mut session = Session::start(cli, &params)?;
    let outcome = match &cli.command {
        Command::Params { .. } => unreachable!(),
        Command::Run(args) => cmd_run(&mut session, &params, args),
        Command::Replay(args) => cmd_replay(&mut session, &params, args),
        Command::OptimizeThresholds(args) => cmd_optimize(&mut session, &params, args),
        Command::ConvergenceCheck => cmd_convergence(&mut session, &params),
        Command::DistinguishabilityScan => cmd_scan(&mut session, &params),
    };
    session.finish(&outcome)?;
    for w in &session.manifest.warnings {
        eprintln!("warning: {w}");
    }
    outcome
}

fn load_params(cli: &Cli) -> Result<DeviceParams, Failure> {
    match &cli.global.config {
        Some(path) => Ok(DeviceParams::load(path)?),
        None => Ok(DeviceParams::default()),
    }
}

fn params_report(params: &DeviceParams, path: Option<&Path>) -> String {
    let report = json!({
        "config_path": path,
        "config_hash": params.content_hash(),
        "config": params,
        "derived": {
            "kappa_rad_per_us": [params.kappa(0), params.kappa(1)],
            "chi_rad_per_us": [params.chi(0), params.chi(1)],
            "gamma_meas_rad_per_us": [measurement_rate(params, 0), measurement_rate(params, 1)],
            "gamma_meas_mhz": [linear(measurement_rate(params, 0)), linear(measurement_rate(params, 1))],
            "beta_rad_per_us": params.beta_angular(),
            "gamma_down_per_us": params.gamma_down(),
            "gamma_up_per_us": params.gamma_up(),
            "gamma_phi_per_us": params.gamma_phi(),
            "tphi_us": params.tphi_us().map(|t| if t.is_finite() { Some(t) } else { None }),
            "substeps_per_control_sample": params.substeps(),
        },
    });
    serde_json::to_string_pretty(&report).expect("report serializes")
}

struct Session {
    manifest: RunManifest,
    run: RunConfig,
    trajectories_flag: Option<usize>,
}

impl Session {
    fn start(cli: &Cli, params: &DeviceParams) -> Result<Self, Failure> {
        let g = &cli.global;
        let command = serde_json::to_value(&cli.command).expect("command serializes");
        let config_hash = params.content_hash();
        let engine = serde_json::to_value(g.engine)
            .expect("engine serializes")
            .as_str()
            .unwrap_or_default()
            .to_string();
        let id = run_id(&command, &config_hash, g.seed, &engine, g.trajectories);
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_path: g.config.clone(),
            config_hash,
            seed: g.seed,
            engine,
            trajectories: g.trajectories,
            workers: g.workers,
            out_dir: g.out.clone(),
            run_id: id,
            status: "running",
            error: None,
            artifacts: Vec::new(),
            warnings: Vec::new(),
        };
        manifest.write()?;
        Ok(Self {
            manifest,
            run: RunConfig {
                trajectories: g.trajectories.unwrap_or(DEFAULT_TRAJECTORIES),
                seed: g.seed,
                workers: g.workers,
                engine: g.engine.into(),
            },
            trajectories_flag: g.trajectories,
        })
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.manifest.out_dir.join(name)
    }

    fn record(&mut self, path: &Path) {
        let rel = path
            .strip_prefix(&self.manifest.out_dir)
            .unwrap_or(path)
            .to_path_buf();
        self.manifest.artifacts.push(rel);
    }

    fn save(&mut self, mut result: ExperimentResult) -> Result<(), Failure> {
        result.metric("run_id", &self.manifest.run_id);
        let dir = self.dir(&result.experiment);
        let (files, warnings) = result.write_artifacts(&dir)?;
        for f in &files {
            self.record(f);
        }
        self.manifest.warnings.extend(warnings);
        println!("{}: {}", result.experiment, dir.display());
        Ok(())
    }

    fn finish(&mut self, outcome: &Result<(), Failure>) -> Result<(), Failure> {
        match outcome {
            Ok(()) => self.manifest.status = "complete",
            Err(f) => {
                self.manifest.status = "failed";
                self.manifest.error = Some(f.message.clone());
            }
        }
        self.manifest.write()
    }
}

fn parse_sector(text: &str) -> Result<Sector, Failure> {
    Sector::parse(text).ok_or_else(|| {
        Failure::usage(format!(
            "unknown sector {text:?}, expected EE, EO, OE or OO"
        ))
    })
}

fn parse_pair(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::usage(format!("invalid qubit pair {text:?}, expected e.g. 0,2"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

fn cmd_run(s: &mut Session, params: &DeviceParams, args: &RunArgs) -> Result<(), Failure> {
    // Parse everything up front so a bad flag fails before any compute.
    let sector = parse_sector(&args.sector)?;
    let pair = parse_pair(&args.pair)?;
    let delays = parse_delays(&args.delays)?;
    for &exp in &args.experiments {
        let run = s.run;
        let result = match exp {
            Experiment::SingleFlip => {
                let opts = SingleFlipOptions::default();
                single_flip_experiment(params, args.qubit, &run, &opts)?
                    .to_result(params, &run, &opts)
            }
            Experiment::DarkCounts => {
                let opts = DarkCountOptions {
                    duration_us: args.duration_us,
                };
                dark_count_experiment(params, &run, &opts)?.to_result(params, &run, &opts)
            }
            Experiment::DeadTime => {
                let opts = DeadTimeOptions::default();
                dead_time_experiment(params, pair, &delays, &run, &opts)?
                    .to_result(params, &run, &opts)
            }
            Experiment::LogicalT1 => {
                let opts = LogicalT1Options {
                    horizon_us: args.horizon_us,
                    feedback: !args.no_feedback,
                    ..LogicalT1Options::default()
                };
                logical_t1_experiment(params, sector, &run, &opts)?.to_result(params, &run, &opts)
            }
            Experiment::CoherenceTransfer => {
                let opts = CoherenceTransferOptions {
                    drive_off_at_flip: !args.drive_on,
                    ..CoherenceTransferOptions::default()
                };
                let flip = if args.no_flip { None } else { Some(args.qubit) };
                coherence_transfer_experiment(params, sector, flip, &run, &opts)?
                    .to_result(params, &run, &opts)
            }
            Experiment::ConditionalCoherence => {
                let opts = ConditionalCoherenceOptions {
                    flip_qubit: args.qubit,
                    ..ConditionalCoherenceOptions::default()
                };
                conditional_coherence_experiment(params, &run, &opts)?
                    .to_result(params, &run, &opts)
            }
            Experiment::DistinguishabilityScan => {
                distinguishability_scan(params, &default_ratios())?.to_result(params, &run)
            }
        };
        debug_assert_eq!(result.experiment, exp.name());
        s.save(result)?;
    }
    Ok(())
}

fn cmd_replay(s: &mut Session, params: &DeviceParams, args: &ReplayArgs) -> Result<(), Failure> {
    let sector = parse_sector(&args.sector)?;
    let file = std::fs::File::open(&args.record)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.record.display())))?;
    let record = HomodyneRecord::read_csv(std::io::BufReader::new(file))?;
    let events = replay(&record.vdc_stream(), params, sector);
    let dir = s.dir("replay");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("events.csv");
    let mut buf = Vec::new();
    write_events_csv(&mut buf, &events)?;
    std::fs::write(&path, buf)?;
    s.record(&path);
    println!("replay: {} events -> {}", events.len(), path.display());
    Ok(())
}

fn cmd_optimize(
    s: &mut Session,
    params: &DeviceParams,
    args: &OptimizeArgs,
) -> Result<(), Failure> {
    let opts = OptimizeOptions {
        lattice: ThresholdLattice {
            min: args.lattice_min,
            max: args.lattice_max,
            step: args.lattice_step,
        },
        window_us: args.window_us,
        ..OptimizeOptions::default()
    };
    let run = s.run;
    let (calibrated, optimum) = calibrate(params, &run, &opts)?;
    s.save(optimum.to_result(params, &run, &opts))?;
    let path = s.dir("optimize-thresholds").join("calibrated_config.json");
    let mut text = calibrated.to_json_pretty();
    text.push('\n');
    std::fs::write(&path, text)?;
    s.record(&path);
    Ok(())
}

fn cmd_convergence(s: &mut Session, params: &DeviceParams) -> Result<(), Failure> {
    let mut opts = ConvergenceOptions::default();
    if let Some(n) = s.trajectories_flag {
        opts.coherence_trajectories = n;
        opts.lifetime_trajectories = n;
        opts.zz_trajectories = n;
    }
    let run = s.run;
    let result = convergence_check(params, &run, &opts)?;
    for m in &result.metrics {
        println!(
            "{}: {:.6} vs {:.6} (difference {:.3e}, error {:.3e}) {}",
            m.name,
            m.coarse,
            m.fine,
            m.difference,
            m.coarse_error.max(m.fine_error),
            if m.converged {
                "converged"
            } else {
                "NOT converged"
            }
        );
    }
    s.save(result.to_result(params, &run, &opts))
}

fn cmd_scan(s: &mut Session, params: &DeviceParams) -> Result<(), Failure> {
    let run = s.run;
    let result = distinguishability_scan(params, &default_ratios())?;
    s.save(result.to_result(params, &run))
}
