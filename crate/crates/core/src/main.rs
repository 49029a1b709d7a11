//! `dbec` command line.
//!
//! Every config key is also a global flag (`sample_every` is
//! `--sample-every`). Flags override the config file.
//!
//! Exit codes: 0 success, 2 an experiment assertion failed, 1 any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use serde_json::json;

use dbec::config::{key_help, RunConfig, KEYS};
use dbec::dynamics::{evolve, EvolveOptions};
use dbec::experiments::{self, SCENARIOS};
use dbec::functionals::{breakdown, classify_regime, t_star};
use dbec::ground_state::{solve_free_ground_state, solve_trapped_minimizer};
use dbec::io::{read_snapshot, report_json, write_report, write_snapshot, write_text};
use dbec::{Error, Result, WaveField};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut cmd = Command::new("dbec")
        .about("Spectral laboratory for the dimensionless dipolar Gross-Pitaevskii equation")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value configuration file"),
        );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag(key))
                .global(true)
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help(key_help(key)),
        );
    }
    cmd.subcommand(
        Command::new("groundstate")
            .about("Free ground state (trap = 0) or trapped local minimizer (trap > 0)")
            .arg(Arg::new("out").long("out").value_name("FILE").help("report path"))
            .arg(Arg::new("snapshot").long("snapshot").value_name("FILE").help("field path")),
    )
    .subcommand(
        Command::new("evolve")
            .about("Integrate the time-dependent equation from a snapshot")
            .arg(Arg::new("in").long("in").required(true).value_name("FILE"))
            .arg(Arg::new("out").long("out").value_name("FILE").help("trajectory CSV"))
            .arg(Arg::new("snapshots-dir").long("snapshots-dir").value_name("DIR")),
    )
    .subcommand(
        Command::new("functionals")
            .about("Energy breakdown of a snapshot (default: unit Gaussian on the configured grid)")
            .arg(Arg::new("in").long("in").value_name("FILE")),
    )
    .subcommand(
        Command::new("experiment")
            .about("Run a scripted study")
            .arg(
                Arg::new("name")
                    .required(true)
                    .value_parser(clap::builder::PossibleValuesParser::new(SCENARIOS)),
            )
            .arg(
                Arg::new("quiet")
                    .long("quiet")
                    .action(ArgAction::SetTrue)
                    .help("skip the per-assertion lines"),
            ),
    )
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::from_file(Path::new(path))?,
        None => RunConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    if cfg.threads > 0 {
        dbec::par::init_threads(cfg.threads);
    }
    Ok(cfg)
}

fn path_or(m: &ArgMatches, id: &str, fallback: PathBuf) -> PathBuf {
    m.get_one::<String>(id).map(PathBuf::from).unwrap_or(fallback)
}

fn groundstate(cfg: &RunConfig, m: &ArgMatches) -> Result<ExitCode> {
    let p = cfg.params()?;
    let (u, report) = if p.trap > 0.0 {
        let grid = experiments::trapped_grid(cfg, p.trap)?;
        solve_trapped_minimizer(&grid, &p, &cfg.solver_options())?
    } else {
        let grid = experiments::free_grid(cfg, &p)?;
        solve_free_ground_state(&grid, &p, &cfg.solver_options())?
    };
    let out = path_or(m, "out", cfg.out_dir.join("groundstate.json"));
    let snap = path_or(m, "snapshot", cfg.out_dir.join("groundstate.snap"));
    write_report(
        &out,
        &json!({
            "report": report,
            "grid": {"n": u.grid().n(), "half_lengths": u.grid().half_lengths()},
            "snapshot": snap,
        }),
    )?;
    write_snapshot(&snap, &u)?;
    write_text(&cfg.out_dir.join("groundstate.config"), &cfg.echo())?;
    println!("{}", report_json(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn run_evolve(cfg: &RunConfig, m: &ArgMatches) -> Result<ExitCode> {
    let u0 = read_snapshot(Path::new(m.get_one::<String>("in").expect("required")))?;
    let p = cfg.params()?;
    let snap_dir = m.get_one::<String>("snapshots-dir").map(PathBuf::from);
    let mut opts = EvolveOptions::new(cfg.dt, cfg.tmax, cfg.sample_every);
    if snap_dir.is_some() || cfg.snapshots {
        opts = opts.with_snapshots();
    }
    let traj = evolve(&u0, &p, &opts)?;
    let out = path_or(m, "out", cfg.out_dir.join("trajectory.csv"));
    write_text(&out, &traj.to_csv())?;
    if let Some(dir) = snap_dir.or_else(|| cfg.snapshots.then(|| cfg.out_dir.join("snapshots"))) {
        for (k, (_, f)) in traj.snapshots.iter().enumerate() {
            write_snapshot(&dir.join(format!("snapshot_{k:05}.snap")), f)?;
        }
    }
    let summary = json!({
        "verdict": traj.verdict,
        "halted_at": traj.halted_at,
        "samples": traj.rows.len(),
        "mass_drift": traj.mass_drift(),
        "energy_drift": traj.energy_drift(),
        "trajectory": out,
    });
    write_report(&cfg.out_dir.join("evolve.json"), &summary)?;
    write_text(&cfg.out_dir.join("evolve.config"), &cfg.echo())?;
    println!("{}", report_json(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn functionals(cfg: &RunConfig, m: &ArgMatches) -> Result<ExitCode> {
    let u = match m.get_one::<String>("in") {
        Some(path) => read_snapshot(Path::new(path))?,
        None => WaveField::gaussian(&cfg.grid()?, [1.0; 3], cfg.mass),
    };
    let p = cfg.params()?;
    let e = breakdown(&u, &p)?;
    let report = json!({
        "energies": e,
        "regime": classify_regime(p.lambda1, p.lambda2),
        "t_star": t_star(&u, &p).ok(),
        "peak_level": e.peak_level(),
    });
    write_report(&cfg.out_dir.join("functionals.json"), &report)?;
    println!("{}", report_json(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn experiment(cfg: &RunConfig, m: &ArgMatches) -> Result<ExitCode> {
    let name = m.get_one::<String>("name").expect("required");
    let mut cfg = cfg.clone();
    cfg.experiment = Some(name.clone());
    let mut report = experiments::run(name, &cfg)?;
    let path = report.write(&cfg.out_dir, cfg.snapshots)?;
    if !m.get_flag("quiet") {
        for a in &report.assertions {
            println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
        }
    }
    println!(
        "{name}: {} ({})",
        if report.passed { "PASS" } else { "FAIL" },
        path.display()
    );
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn dispatch(m: &ArgMatches) -> Result<ExitCode> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    // Global flags are visible from the subcommand's matches.
    let cfg = load_config(sub)?;
    match name {
        "groundstate" => groundstate(&cfg, sub),
        "evolve" => run_evolve(&cfg, sub),
        "functionals" => functionals(&cfg, sub),
        "experiment" => experiment(&cfg, sub),
        other => Err(Error::InvalidParameter(format!("unknown subcommand {other}"))),
    }
}

fn main() -> ExitCode {
    // clap's own exit code for usage errors is 2, which is reserved here.
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&matches) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
