//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage or
//! configuration error.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nanotouch_core::experiments::{
    balance_scan, equilibrium_oracle, quasi_static_sweep_with, validate_against_oracle,
    SweepError, SweepOptions,
};
use nanotouch_core::kernel::Kernel;

use crate::config::Config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Column header of `replay` output.
pub const REPLAY_HEADER: &str =
    "time_s,handle_pos_m,tip_pos_m,tip_vel_m_s,handle_force_N,surface_force_N";

#[derive(Debug, Parser)]
#[command(name = "nanotouch", version, about = "Nanoscale haptic stick simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the real-time loop and the WebSocket server.
    Serve {
        /// Overrides the port from the config file.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "0.0.0.0")]
        bind: std::net::IpAddr,
    },
    /// Quasi-static approach and retract sweep, written as curve CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start and turnaround heights of the handle (m).
        #[arg(long, default_value_t = 45e-9)]
        z_start: f64,
        #[arg(long, default_value_t = 1e-9)]
        z_end: f64,
        /// Handle speed (m/s).
        #[arg(long, default_value_t = 6.6e-12)]
        speed: f64,
        #[arg(long, default_value_t = SweepOptions::default().samples_per_branch)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        /// Check the curve against the equilibrium oracle and print the
        /// report; exit 1 if it fails.
        #[arg(long)]
        validate: bool,
    },
    /// Static equilibria for one handle height, as JSON on stdout.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Handle height (m).
        #[arg(long, allow_negative_numbers = true)]
        handle_pos: f64,
        /// Also write the raw balance scan as CSV.
        #[arg(long)]
        scan_out: Option<PathBuf>,
    },
    /// Step the kernel along a recorded handle trajectory, one position (m)
    /// per line and one line per time step.
    Replay {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            eprintln!("nanotouch: {msg}");
            code
        }
    }
}

struct Failure(i32, String);

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure(EXIT_USAGE, msg.to_string())
}

fn failure(msg: impl std::fmt::Display) -> Failure {
    Failure(EXIT_FAILURE, msg.to_string())
}

fn load(path: Option<&Path>) -> Result<Config, Failure> {
    Config::resolve(path).map_err(usage)
}

fn run(cmd: Cmd) -> Result<i32, Failure> {
    match cmd {
        Cmd::Serve { port, config, bind } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(p) = port {
                cfg.service.port = p;
            }
            let addr = SocketAddr::new(bind, cfg.service.port);
            serve(cfg, addr)
        }
        Cmd::Sweep {
            config,
            z_start,
            z_end,
            speed,
            samples,
            out,
            validate,
        } => {
            let cfg = load(config.as_deref())?;
            let k = cfg.kernel_config();
            let lu = k.scene.length_unit;
            let opts = SweepOptions {
                samples_per_branch: samples,
                ..SweepOptions::default()
            };
            let curve = quasi_static_sweep_with(&k, z_start / lu, z_end / lu, speed / lu, &opts)
                .map_err(|e| match e {
                    SweepError::Step { .. } => failure(e),
                    _ => usage(e),
                })?;
            write_atomic(&out, curve.to_csv().as_bytes())?;
            log::info!("wrote {} ({} events)", out.display(), curve.events.len());
            if !validate {
                return Ok(EXIT_OK);
            }
            let report = validate_against_oracle(&curve);
            println!("{}", report.to_json());
            Ok(if report.pass { EXIT_OK } else { EXIT_FAILURE })
        }
        Cmd::Oracle {
            config,
            handle_pos,
            scan_out,
        } => {
            let cfg = load(config.as_deref())?;
            let k = cfg.kernel_config();
            let lu = k.scene.length_unit;
            let fu = k.scene.force_unit;
            if !(handle_pos.is_finite() && handle_pos / lu > k.gap_floor()) {
                return Err(usage(format!(
                    "--handle-pos must lie above the gap floor ({} m)",
                    k.gap_floor() * lu
                )));
            }
            let mut set = equilibrium_oracle(&k, handle_pos / lu);
            set.handle_pos *= lu;
            for e in &mut set.equilibria {
                e.tip_gap *= lu;
            }
            if let Some(path) = scan_out {
                let mut csv = String::from("tip_gap_m,balance_N\n");
                for (d, g) in balance_scan(&k, handle_pos / lu) {
                    csv.push_str(&format!("{:e},{:e}\n", d * lu, g * fu));
                }
                write_atomic(&path, csv.as_bytes())?;
            }
            println!("{}", serde_json::to_string_pretty(&set).expect("plain data"));
            Ok(EXIT_OK)
        }
        Cmd::Replay {
            config,
            trajectory,
            out,
        } => {
            let cfg = load(config.as_deref())?;
            let k = cfg.kernel_config();
            let text = std::fs::read_to_string(&trajectory)
                .map_err(|e| usage(format!("cannot read {}: {e}", trajectory.display())))?;
            let targets = parse_trajectory(&text).map_err(usage)?;
            let csv = replay(&cfg, &targets).map_err(failure)?;
            write_atomic(&out, csv.as_bytes())?;
            log::info!("replayed {} steps of {}", targets.len(), k.dt);
            Ok(EXIT_OK)
        }
    }
}

fn serve(cfg: Config, addr: SocketAddr) -> Result<i32, Failure> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(failure)?;
    rt.block_on(async move {
        let server = crate::server::start(&cfg, addr)
            .await
            .map_err(|e| failure(format!("cannot serve on {addr}: {e}")))?;
        eprintln!("nanotouch serving on {}", server.addr());
        let _ = tokio::signal::ctrl_c().await;
        server.shutdown().await;
        Ok(EXIT_OK)
    })
}

/// One handle position per line; blank lines, `#` comments and a
/// non-numeric header line are skipped.
pub fn parse_trajectory(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let field = t.split(',').next_back().unwrap_or(t).trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => return Err(format!("line {}: non-finite position {v}", i + 1)),
            Err(_) if out.is_empty() && i == 0 => {}
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    if out.is_empty() {
        return Err("trajectory is empty".into());
    }
    Ok(out)
}

/// Steps from rest under the first position; one output row per step, SI.
pub fn replay(cfg: &Config, targets: &[f64]) -> Result<String, String> {
    let k = cfg.kernel_config();
    let lu = k.scene.length_unit;
    let fu = k.scene.force_unit;
    let kernel = Kernel::new(k).map_err(|e| e.to_string())?;
    let sim: Vec<f64> = targets.iter().map(|z| z / lu).collect();
    let states = kernel
        .run(&kernel.rest_state(sim[0]), &sim)
        .map_err(|e| e.to_string())?;
    let mut csv = String::with_capacity(96 * (states.len() + 1));
    csv.push_str(REPLAY_HEADER);
    csv.push('\n');
    let mut buf = ryu::Buffer::new();
    for s in &states {
        for (j, v) in [
            s.time,
            s.handle_pos * lu,
            s.tip_pos * lu,
            s.tip_vel * lu,
            s.last_force_on_handle * fu,
            s.last_surface_force * fu,
        ]
        .into_iter()
        .enumerate()
        {
            if j > 0 {
                csv.push(',');
            }
            csv.push_str(buf.format(v));
        }
        csv.push('\n');
    }
    Ok(csv)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failure never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| failure(format!("cannot write {}: {e}", path.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| failure(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| failure(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}
