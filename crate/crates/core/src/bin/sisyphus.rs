use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lattice_sisyphus::adiabatic::Lattice;
use lattice_sisyphus::config::RunConfig;
use lattice_sisyphus::langevin::worker_pool;
use lattice_sisyphus::report::{self, TemperatureRow};
use lattice_sisyphus::snapshot::Snapshot;
use lattice_sisyphus::wells::{internal_lattice_constants, scan_plane, Plane};
use lattice_sisyphus::Error;

const EXIT_FLAGGED: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sisyphus",
    about = "Sisyphus cooling in a 3D lin-perp-lin optical lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Map the adiabatic potentials over a plane.
    FieldScan {
        #[command(flatten)]
        common: Common,
        /// xy, xz or yz (default from the configuration).
        #[arg(long)]
        plane: Option<String>,
        /// Grid points per a_z.
        #[arg(long)]
        points_per_az: Option<usize>,
    },
    /// Simulate every (detuning, depth) record and analyse it.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Time-of-flight analysis of snapshot files.
    Analyze {
        /// Directory holding `.snap` files.
        snapshots: PathBuf,
        /// Expansion times in ms; exactly two are required.
        #[arg(long = "tau", num_args = 1.., default_values_t = [12.0, 35.0])]
        tau_ms: Vec<f64>,
        /// Optional configuration for binning and gravity.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn load(path: &Path, seed: Option<u64>, workers: Option<usize>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn field_scan(common: Common, plane: Option<String>, per_az: Option<usize>) -> Result<u8, Error> {
    let cfg = load(&common.config, common.seed, common.workers)?;
    let plane: Plane = plane.as_deref().unwrap_or(&cfg.scan.plane).parse()?;
    let per_az = per_az.unwrap_or(cfg.scan.points_per_az);
    if per_az < 2 {
        return Err(Error::Config("points per a_z must be at least 2".into()));
    }
    let transition = cfg.transition()?;
    let (detuning, depth) = (cfg.lattice.detunings_Gamma[0], cfg.lattice.depths_Er[0]);
    let lattice = Lattice::new(cfg.beam(&transition, detuning, depth)?)?;
    let (a_z, a_xy) = internal_lattice_constants(lattice.config.theta);
    let (iu, iv, _) = plane.axes();
    let range = |axis: usize| {
        if axis == 2 {
            (0.0, 2.0 * a_z)
        } else {
            (-0.5 * a_xy, 0.5 * a_xy)
        }
    };
    let points = |axis: usize| {
        let (lo, hi) = range(axis);
        ((hi - lo) / a_z * per_az as f64).round() as usize + 1
    };
    let scan = scan_plane(
        &lattice,
        plane,
        0.0,
        range(iu),
        range(iv),
        points(iu),
        points(iv),
    )?;

    let levels = if cfg.scan.all_levels {
        lattice.dim()
    } else {
        1
    };
    let mut s = report::preamble(&cfg.hash(), cfg.seed);
    let _ = writeln!(s, "# detuning_Gamma = {detuning}\n# U0_Er = {depth}");
    s.push_str("x_over_lambda,y_over_lambda,z_over_lambda");
    for m in 0..levels {
        let _ = write!(s, ",U{m}_over_Er");
    }
    s.push('\n');
    for (r, u) in scan.positions.iter().zip(&scan.potentials) {
        let _ = write!(
            s,
            "{:.8},{:.8},{:.8}",
            transition.length_over_lambda(r.x),
            transition.length_over_lambda(r.y),
            transition.length_over_lambda(r.z)
        );
        for v in &u[..levels] {
            let _ = write!(s, ",{v:.6}");
        }
        s.push('\n');
    }
    let dir = output_dir(&cfg, common.out);
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join(format!("scan_{plane:?}.csv").to_lowercase());
    fs::write(&path, s).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn run(common: Common) -> Result<u8, Error> {
    let cfg = load(&common.config, common.seed, common.workers)?;
    let dir = output_dir(&cfg, common.out);
    let pool = worker_pool(cfg.workers)?;
    let snapshots = cfg
        .simulation
        .write_snapshots
        .then(|| dir.join("snapshots"));
    let bundle = report::execute(&cfg, cfg.seed, &pool, snapshots.as_deref())?;
    for path in bundle.write(&dir, &cfg)? {
        println!("wrote {}", path.display());
    }
    let flags = bundle.flags();
    for f in &flags {
        log::warn!("flagged: {f}");
    }
    Ok(if flags.is_empty() { 0 } else { EXIT_FLAGGED })
}

fn analyze(
    dir: PathBuf,
    tau_ms: Vec<f64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<u8, Error> {
    let [tau1, tau2] = tau_ms[..] else {
        return Err(Error::DegenerateInput(format!(
            "two expansion times are required, got {}",
            tau_ms.len()
        )));
    };
    let mut imaging = match &config {
        Some(p) => load(p, None, None)?.imaging(),
        None => Default::default(),
    };
    imaging.tau1 = tau1 * 1e-3;
    imaging.tau2 = tau2 * 1e-3;

    let read_err = |e: std::io::Error| Error::Io {
        path: dir.clone(),
        source: e,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(read_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "snap"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Snapshot {
            path: dir,
            reason: "no .snap files".into(),
        });
    }
    let mut rows: Vec<TemperatureRow> = Vec::new();
    let mut hashes = Vec::new();
    let mut seeds = Vec::new();
    for f in &files {
        let snap = Snapshot::read(f)?;
        rows.extend(report::analyze_snapshot(&snap, &imaging)?);
        if !hashes.contains(&snap.header.params_hash) {
            hashes.push(snap.header.params_hash.clone());
        }
        seeds.push(snap.header.seed.to_string());
    }
    let mut s = format!(
        "# sisyphus {}\n# config_hash = {}\n# seed = {}\n# tau_ms = {tau1} {tau2}\n",
        report::VERSION,
        hashes.join(" "),
        seeds.join(" ")
    );
    s.push_str(&report::temperature_body(&rows));
    let out = out.unwrap_or(dir);
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let path = out.join("thermometry.csv");
    fs::write(&path, s).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FieldScan {
            common,
            plane,
            points_per_az,
        } => field_scan(common, plane, points_per_az),
        Command::Run { common } => run(common),
        Command::Analyze {
            snapshots,
            tau_ms,
            config,
            out,
        } => analyze(snapshots, tau_ms, config, out),
        Command::Version => {
            println!("sisyphus {}", report::VERSION);
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => 1,
            })
        }
    }
}
