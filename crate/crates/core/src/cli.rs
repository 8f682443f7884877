//! Command-line front end for the `beamtrack` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::array_model::{ArrayGeometry, ChannelParams, DirectionParams, PilotConfig, ProbeSet};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fisher_crlb::crlb;
use crate::offset_search::{
    offset_gap_report, search_offsets, OptimizerConfig, SearchObjective, OBJECTIVE_BETA,
    REFERENCE_OFFSETS,
};
use crate::sim_harness::{export, run_dynamic, run_static, write_csv, ExportFormat, MseCurve};

#[derive(Debug, Parser)]
#[command(name = "beamtrack", version, about = "Three-pilot beam tracking: probe design, bounds and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the CRLB over the three probing offsets.
    SearchOffsets {
        /// Array size `M N`; the asymptotic objective is used when omitted.
        #[arg(long, num_args = 2, value_names = ["M", "N"], conflicts_with = "asymptotic")]
        mn: Option<Vec<usize>>,
        #[arg(long)]
        asymptotic: bool,
        #[arg(long)]
        json: bool,
        /// Number of low-discrepancy starting points.
        #[arg(long, default_value_t = 32)]
        starts: usize,
    },
    /// Per-element CRLB of an array probed with the given offsets.
    Crlb {
        #[arg(long, num_args = 2, value_names = ["M", "N"], required = true)]
        mn: Vec<usize>,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        /// `table1` or a JSON file holding `[[d11, d12], [d21, d22], [d31, d32]]`.
        #[arg(long, default_value = "table1")]
        offsets: String,
        /// Number of slots `k`.
        #[arg(long, default_value_t = 1)]
        k: u64,
    },
    /// Monte-Carlo run of the static scenario.
    Static(RunArgs),
    /// Monte-Carlo run of the random-walk scenario with Rician fading.
    Dynamic(RunArgs),
    /// Compare the reference offsets with the per-size optimum.
    GapReport {
        /// Comma-separated square sizes, e.g. `8,12,16`.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = 32)]
        starts: usize,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub slots: Option<u64>,
    /// Report the MSE over converged trials only.
    #[arg(long)]
    pub converged_only: bool,
    /// Output file; `.json` selects JSON, anything else CSV. Defaults to CSV on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.trials.is_some() {
            cfg.trials = self.trials;
        }
        if self.slots.is_some() {
            cfg.slots = self.slots;
        }
        if self.converged_only {
            cfg.converged_only = Some(true);
        }
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct OffsetsReport {
    objective: String,
    value: f64,
    offsets: [[f64; 2]; 3],
}

fn load_offsets(spec: &str) -> Result<[DirectionParams; 3]> {
    if spec.eq_ignore_ascii_case("table1") {
        return Ok(REFERENCE_OFFSETS);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: [[f64; 2]; 3] = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(raw.map(|[a, b]| DirectionParams::new(a, b)))
}

fn emit_curve<W: Write>(curve: &MseCurve, path: Option<&Path>, out: &mut W) -> Result<()> {
    match path {
        Some(path) => export(curve, path, ExportFormat::from_path(path)),
        None => write_csv(curve, out).map_err(|e| Error::Format {
            path: PathBuf::from("<stdout>"),
            message: e.to_string(),
        }),
    }
}

/// Executes a parsed command, writing reports to `out`.
pub fn execute<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    let io = |source: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    match cli.command {
        Command::SearchOffsets {
            mn,
            asymptotic: _,
            json,
            starts,
        } => {
            let (objective, label) = match mn.as_deref() {
                Some([m, n]) => (
                    SearchObjective::Finite(ArrayGeometry::half_wavelength(*m, *n)?),
                    format!("{m}x{n}"),
                ),
                _ => (SearchObjective::Asymptotic, "asymptotic".to_string()),
            };
            let pilot = PilotConfig::from_snr_db(0.0)?;
            let config = OptimizerConfig {
                starts,
                ..OptimizerConfig::default()
            };
            let found = search_offsets(&objective, &pilot, &config)?;
            let report = OffsetsReport {
                objective: label,
                value: found.objective,
                offsets: found.deltas.map(|d| [d.x1, d.x2]),
            };
            if json {
                serde_json::to_writer_pretty(&mut *out, &report).map_err(|e| io(e.into()))?;
                writeln!(out).map_err(io)?;
            } else {
                writeln!(out, "objective {} value {:.10}", report.objective, report.value).map_err(io)?;
                for (i, [a, b]) in report.offsets.iter().enumerate() {
                    writeln!(out, "delta{} [{a:.6}, {b:.6}]", i + 1).map_err(io)?;
                }
            }
        }
        Command::Crlb {
            mn,
            snr_db,
            offsets,
            k,
        } => {
            let geom = ArrayGeometry::half_wavelength(mn[0], mn[1])?;
            let pilot = PilotConfig::from_snr_db(snr_db)?;
            let offsets = load_offsets(&offsets)?;
            let psi = ChannelParams::new(OBJECTIVE_BETA, DirectionParams::ZERO);
            let probes = ProbeSet::new(psi.x, offsets, &geom);
            let value = crlb(&psi, &probes, &pilot, k)?.value;
            writeln!(out, "{value}").map_err(io)?;
        }
        Command::Static(args) => {
            let scenario = args.load()?.to_static()?;
            emit_curve(&run_static(&scenario)?, args.out.as_deref(), out)?;
        }
        Command::Dynamic(args) => {
            let scenario = args.load()?.to_dynamic()?;
            emit_curve(&run_dynamic(&scenario)?, args.out.as_deref(), out)?;
        }
        Command::GapReport {
            sizes,
            json,
            starts,
        } => {
            let pilot = PilotConfig::from_snr_db(0.0)?;
            let config = OptimizerConfig {
                starts,
                ..OptimizerConfig::default()
            };
            let pairs: Vec<(usize, usize)> = sizes.iter().map(|&s| (s, s)).collect();
            let rows = offset_gap_report(&pairs, &pilot, &config);
            if json {
                serde_json::to_writer_pretty(&mut *out, &rows).map_err(|e| io(e.into()))?;
                writeln!(out).map_err(io)?;
            } else {
                writeln!(out, "m,n,crlb_min,crlb_reference,relative_gap,error").map_err(io)?;
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                for r in rows {
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.m,
                        r.n,
                        opt(r.crlb_min),
                        opt(r.crlb_reference),
                        opt(r.relative_gap),
                        r.error.unwrap_or_default()
                    )
                    .map_err(io)?;
                }
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command. Returns the process exit code: 0 on
/// success, 2 for usage errors, 1 for everything else.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
