use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use twophoton::config::Config;
use twophoton::evolve::Simulation;
use twophoton::noise::OUParams;
use twophoton::noise_check::noise_check;
use twophoton::output::write_run;
use twophoton::presets;
use twophoton::spectrum::{collapse_scan, spectrum_scan, COLLAPSE_COUPLING};
use twophoton::Error;

const THREADS_ENV: &str = "TWOPHOTON_THREADS";

#[derive(Parser)]
#[command(name = "twophoton", version, about = "Two-photon Rabi model on a trapped ion under dephasing noise")]
struct Cli {
    /// Worker threads (default: $TWOPHOTON_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or configuration file and write CSV plus JSON sidecar.
    Run(RunArgs),
    /// Validate the noise generator against its analytic statistics.
    NoiseCheck(NoiseArgs),
    /// Ground-state scan of the ideal model across the collapse point.
    Spectrum(SpectrumArgs),
    /// List preset names.
    ListPresets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Preset or preset group name.
    #[arg(conflicts_with_all = ["preset", "config"])]
    name: Option<String>,
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML experiment description.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Integrator step (s).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_trunc: Option<usize>,
    #[arg(long, value_enum)]
    noise: Option<Switch>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct NoiseArgs {
    /// Correlation time (s).
    #[arg(long, default_value_t = 100e-6)]
    tau: f64,
    /// Coherence time (s) to calibrate the diffusion constant from.
    #[arg(long, default_value_t = 3e-3, conflicts_with = "diffusion")]
    t2: f64,
    /// Diffusion constant (rad^2 s^-3), bypassing the calibration.
    #[arg(long)]
    diffusion: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    n_paths: usize,
    /// Path length (s).
    #[arg(long, default_value_t = 5e-3)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    master_seed: u64,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// `W / w0`.
    #[arg(long, default_value_t = 1.0)]
    qubit_over_boson: f64,
    /// Comma-separated `g / w0` values.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.45,0.55,0.6")]
    g_grid: Vec<f64>,
    /// Comma-separated Fock cutoffs, increasing.
    #[arg(long, value_delimiter = ',', default_value = "120,130,140,150,160")]
    n_trunc_grid: Vec<usize>,
    /// Number of low eigenstates whose phonon number is reported.
    #[arg(long, default_value_t = 4)]
    n_low: usize,
    /// Output CSV; convergence flags go next to it as `<stem>_flags.csv`.
    #[arg(long, default_value = "out/spectrum.csv")]
    out: PathBuf,
}

/// A failure and the process status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Configuration(_)
            | Error::InvalidArgument(_)
            | Error::InvalidDimension(_)
            | Error::InvalidScan(_)
            | Error::CalibrationInfeasible { .. }
            | Error::DecouplingInfeasible { .. }
            | Error::Toml(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = setup_threads(cli.threads) {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::NoiseCheck(args) => check_noise(args),
        Command::Spectrum(args) => spectrum(args),
        Command::ListPresets => {
            list_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn setup_threads(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| usage(format!("{THREADS_ENV}={v} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut configs = match (args.name.or(args.preset), args.config) {
        (Some(name), None) => presets::lookup(&name)?.into_iter().map(|p| p.config).collect(),
        (None, Some(path)) => vec![Config::load(&path)?],
        _ => return Err(usage("give a preset name or --config")),
    };
    for cfg in &mut configs {
        if let Some(n) = args.n_traj {
            cfg.ensemble.n_traj = n;
        }
        if let Some(s) = args.master_seed {
            cfg.ensemble.master_seed = s;
        }
        if let Some(dt) = args.dt {
            cfg.integrator.dt = Some(dt);
        }
        if let Some(n) = args.n_trunc {
            cfg.n_trunc = n;
        }
        if let Some(noise) = args.noise {
            cfg.noise.enabled = matches!(noise, Switch::On);
        }
    }
    // validate everything before spending time on any run
    let experiments = configs.iter().map(Config::experiment).collect::<Result<Vec<_>, _>>()?;
    let mut finals = Vec::new();
    for (cfg, exp) in configs.iter().zip(&experiments) {
        let start = Instant::now();
        let result = Simulation::new(exp)?.ensemble(cfg.ensemble.n_traj, cfg.ensemble.master_seed)?;
        let wall = start.elapsed().as_secs_f64();
        let (csv, json) = write_run(&args.out, cfg, exp, &result, wall, rayon::current_num_threads())?;
        let (m, s) = (result.final_mean(), result.final_stderr());
        println!(
            "{}: final fidelity {:.6} +- {:.6} ({} trajectories, {:.1} s) -> {}, {}",
            exp.name,
            m.fidelity,
            s.fidelity,
            result.n_traj,
            wall,
            csv.display(),
            json.display()
        );
        finals.push((cfg.scheme, m.fidelity));
    }
    if let [(twophoton::models::Scheme::Unprotected, fu), (twophoton::models::Scheme::Protected, fp)] = finals[..] {
        println!("infidelity ratio (1-F^U)/(1-F^P) = {:.3}", (1.0 - fu) / (1.0 - fp));
    }
    Ok(())
}

fn check_noise(args: NoiseArgs) -> Result<(), Failure> {
    let params = match args.diffusion {
        Some(c) => OUParams::new(args.tau, c)?,
        None => OUParams::from_t2(args.t2, args.tau)?,
    };
    let report = noise_check(&params, args.n_paths, args.duration, args.master_seed)?;
    print!("{report}");
    if let Some(path) = args.json {
        let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
        std::fs::write(&path, text + "\n").map_err(Error::from)?;
    }
    if report.passed() {
        println!("all checks passed");
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.pass).count();
        Err(Failure { code: 1, message: format!("{failed} check(s) outside 3 standard errors") })
    }
}

fn spectrum(args: SpectrumArgs) -> Result<(), Failure> {
    let spans = args.g_grid.iter().any(|&g| g < COLLAPSE_COUPLING) && args.g_grid.iter().any(|&g| g > COLLAPSE_COUPLING);
    let collapse = spans && args.n_trunc_grid.len() >= 2;
    let scan = if collapse {
        collapse_scan(args.qubit_over_boson, &args.g_grid, &args.n_trunc_grid, args.n_low)?
    } else {
        spectrum_scan(args.qubit_over_boson, &args.g_grid, &args.n_trunc_grid, args.n_low)?
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    scan.write_csv(&args.out)?;
    println!("wrote {}", args.out.display());
    for (i, g) in scan.g_over_omega.iter().enumerate() {
        let e = scan.ground_energy[i].last().copied().unwrap_or(f64::NAN);
        println!("g/w0 = {g:<6} E0 = {e:.12} w0 (n_trunc {})", scan.n_trunc.last().unwrap_or(&0));
    }
    if collapse {
        let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("spectrum");
        let flags_path = args.out.with_file_name(format!("{stem}_flags.csv"));
        scan.write_flags_csv(&flags_path)?;
        for f in scan.flags() {
            let verdict = match (f.converged, f.diverging) {
                (true, _) => "converged",
                (false, true) => "diverging",
                (false, false) => "undecided",
            };
            println!("g/w0 = {:<6} gap {:.3e}: {verdict}", f.g_over_omega, f.gap);
        }
        println!("wrote {}", flags_path.display());
    }
    Ok(())
}

fn list_presets() {
    let mut out = std::io::stdout().lock();
    for name in presets::names() {
        let members = presets::lookup(&name).map(|m| m.len()).unwrap_or(0);
        let line = if members > 1 { format!("{name:<18} group of {members}") } else { name };
        // a closed pipe (`| head`) is not an error
        if writeln!(out, "{line}").is_err() {
            return;
        }
    }
}
