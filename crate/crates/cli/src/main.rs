//! `spherekit` command-line tool: scores, spectra, noise sequences and
//! distributed-equivalence checks over SFD field files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use spherekit::distsim::{build_comm_grid, check_against_serial, DistOp, Schedule};
use spherekit::io::{read_sfd, write_sfd, SfdFile};
use spherekit::metrics::{self, CrpsVariant};
use spherekit::noise::{diffusion_params, NoiseStream};
use spherekit::{EnsembleField, GridKind, GridSpec, SphericalField};
use thiserror::Error;

const DIST_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<spherekit::Error> for CliError {
    fn from(e: spherekit::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<spherekit::io::FormatError> for CliError {
    fn from(e: spherekit::io::FormatError) -> Self {
        CliError::Data(format!("{e} (format error {})", e.code()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "spherekit", version, about = "Spherical field scoring, spectra, noise and distributed checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score forecast members against an observation and write (channel, metric, value) rows.
    Score {
        /// One SFD file per ensemble member.
        #[arg(long, num_args = 1.., required = true)]
        forecast: Vec<PathBuf>,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long, value_enum, default_value = "fair")]
        variant: Variant,
        /// Climatology field, required for acc.
        #[arg(long)]
        climatology: Option<PathBuf>,
        /// Tie-breaking seed for rank histograms.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power spectra of a field.
    Spectra {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: SpectrumKind,
        #[arg(long)]
        lat_index: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a single-channel diffusion noise sequence as step_NNNNN.sfd files.
    Noise {
        #[arg(long)]
        kt: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        lmax: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "gaussian")]
        grid: GridArg,
        /// Defaults to lmax.
        #[arg(long)]
        nlat: Option<usize>,
        /// Defaults to 2 * nlat.
        #[arg(long)]
        nlon: Option<usize>,
    },
    /// Compare a distributed operation with its single-rank result and print the traffic report.
    Distcheck {
        #[arg(long, value_parser = parse_op)]
        op: DistOp,
        /// Polar x azimuth ranks, e.g. 2x4.
        #[arg(long, value_parser = parse_decomp)]
        decomp: (usize, usize),
        /// Ranks along the ensemble axis.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        ensemble: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threaded: bool,
        /// Also write the traffic report here.
        #[arg(long)]
        traffic_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    Rmse,
    Mae,
    Acc,
    Crps,
    Ssr,
    Rankhist,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Cdf,
    #[value(name = "spread_skill")]
    SpreadSkill,
    Fair,
}

impl From<Variant> for CrpsVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Cdf => CrpsVariant::Cdf,
            Variant::SpreadSkill => CrpsVariant::SpreadSkill,
            Variant::Fair => CrpsVariant::Fair,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpectrumKind {
    Angular,
    Zonal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridArg {
    Gaussian,
    Equiangular,
}

fn parse_op(s: &str) -> Result<DistOp, String> {
    s.parse().map_err(|e: spherekit::Error| e.to_string())
}

fn parse_decomp(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("'{s}' is not of the form HxW with positive sizes");
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// Full float64 round-trip: 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_field(path: &Path) -> CliResult<SfdFile> {
    read_sfd(path).map_err(|e| CliError::Data(format!("{}: {e} (format error {})", path.display(), e.code())))
}

fn ensemble_mean(members: &[SphericalField]) -> SphericalField {
    let n = members.len() as f64;
    let mut mean = members[0].map(|_| 0.0);
    for m in members {
        mean.data_mut().iter_mut().zip(m.data()).for_each(|(a, v)| *a += v);
    }
    mean.map(|v| v / n)
}

fn score(
    forecast: &[PathBuf],
    obs: &Path,
    metric: Metric,
    variant: CrpsVariant,
    climatology: Option<&Path>,
    seed: u64,
) -> CliResult<String> {
    let obs = read_field(obs)?;
    let members = forecast.iter().map(|p| read_field(p).map(|f| f.field)).collect::<CliResult<Vec<_>>>()?;
    let ens = EnsembleField::from_members(&members)?;
    ens.check_obs(&obs.field)?;
    let names = &obs.channel_names;
    let mut out = String::from("channel,metric,value\n");
    let mut rows = |metric: &str, values: Vec<f64>| {
        for (name, v) in names.iter().zip(values) {
            let _ = writeln!(out, "{name},{metric},{}", num(v));
        }
    };
    match metric {
        Metric::Rmse => rows("rmse", metrics::rmse(&ensemble_mean(&members), &obs.field)?),
        Metric::Mae => rows("mae", metrics::mae(&ensemble_mean(&members), &obs.field)?),
        Metric::Acc => {
            let clim = climatology.ok_or_else(|| CliError::Usage("--metric acc needs --climatology".into()))?;
            let clim = read_field(clim)?;
            rows("acc", metrics::acc(&ensemble_mean(&members), &obs.field, &clim.field)?)
        }
        Metric::Crps => {
            let name = match variant {
                CrpsVariant::Cdf => "crps_cdf",
                CrpsVariant::SpreadSkill => "crps_spread_skill",
                CrpsVariant::Fair => "crps_fair",
            };
            rows(name, metrics::crps_field(&ens, &obs.field, variant)?)
        }
        Metric::Ssr => rows("ssr", metrics::ssr(&ens, &obs.field)?),
        Metric::Rankhist => {
            for (name, h) in names.iter().zip(metrics::rank_histogram(&ens, &obs.field, seed)?) {
                for (k, v) in h.normalized().into_iter().enumerate() {
                    let _ = writeln!(out, "{name},rankhist_{k},{}", num(v));
                }
            }
        }
    }
    Ok(out)
}

fn spectra(input: &Path, kind: SpectrumKind, lat_index: Option<usize>) -> CliResult<String> {
    let file = read_field(input)?;
    let (index, psd) = match (kind, lat_index) {
        (SpectrumKind::Angular, None) => ("l", metrics::angular_psd(&file.field)?),
        (SpectrumKind::Angular, Some(_)) => {
            return Err(CliError::Usage("--lat-index only applies to --kind zonal".into()));
        }
        (SpectrumKind::Zonal, Some(i)) => ("m", metrics::zonal_psd(&file.field, i)?),
        (SpectrumKind::Zonal, None) => return Err(CliError::Usage("--kind zonal needs --lat-index".into())),
    };
    let mut out = String::from(index);
    for name in &file.channel_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let n = psd.first().map_or(0, Vec::len);
    for k in 0..n {
        let _ = write!(out, "{k}");
        for ch in &psd {
            let _ = write!(out, ",{}", num(ch[k]));
        }
        out.push('\n');
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn noise(
    kt: f64,
    lambda: f64,
    sigma: f64,
    lmax: usize,
    steps: usize,
    seed: u64,
    out: &Path,
    grid: GridArg,
    nlat: Option<usize>,
    nlon: Option<usize>,
) -> CliResult<()> {
    if lmax == 0 || steps == 0 {
        return Err(CliError::Usage("--lmax and --steps must be positive".into()));
    }
    let params = diffusion_params(sigma, lambda, kt, lmax).map_err(|e| CliError::Usage(e.to_string()))?;
    let nlat = nlat.unwrap_or(lmax);
    let nlon = nlon.unwrap_or(2 * nlat);
    let kind = match grid {
        GridArg::Gaussian => GridKind::Gaussian,
        GridArg::Equiangular => GridKind::Equiangular,
    };
    let grid = Arc::new(GridSpec::new(kind, nlat, nlon).map_err(|e| CliError::Usage(e.to_string()))?);
    let mut stream = NoiseStream::new(vec![params], grid, seed, 1.0)?;
    fs::create_dir_all(out)?;
    for step in 0..steps {
        if step > 0 {
            stream.advance()?;
        }
        let file = SfdFile { field: stream.current()?, channel_names: vec!["noise".into()] };
        write_sfd(out.join(format!("step_{step:05}.sfd")), &file)?;
    }
    Ok(())
}

fn distcheck(op: DistOp, decomp: (usize, usize), ensemble: usize, seed: u64, threaded: bool) -> CliResult<(String, f64)> {
    let grid = build_comm_grid(1, ensemble, decomp.0, decomp.1).map_err(|e| CliError::Usage(e.to_string()))?;
    let schedule = if threaded { Schedule::Threaded } else { Schedule::RoundRobin };
    let report = check_against_serial(op, grid, schedule, seed)?;
    Ok((report.traffic.to_csv(), report.max_abs_gap))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Score { forecast, obs, metric, variant, climatology, seed, out } => {
            let csv = score(&forecast, &obs, metric, variant.into(), climatology.as_deref(), seed)?;
            fs::write(out, csv)?;
        }
        Command::Spectra { input, kind, lat_index, out } => {
            let csv = spectra(&input, kind, lat_index)?;
            fs::write(out, csv)?;
        }
        Command::Noise { kt, lambda, sigma, lmax, steps, seed, out, grid, nlat, nlon } => {
            noise(kt, lambda, sigma, lmax, steps, seed, &out, grid, nlat, nlon)?;
        }
        Command::Distcheck { op, decomp, ensemble, seed, threaded, traffic_out } => {
            let (csv, gap) = distcheck(op, decomp, ensemble as usize, seed, threaded)?;
            print!("{csv}");
            if let Some(path) = traffic_out {
                fs::write(path, &csv)?;
            }
            let line = format!(
                "{op} {}x{} ensemble={ensemble}: max |serial - distributed| = {gap:.3e} (tolerance {DIST_TOLERANCE:.0e})",
                decomp.0, decomp.1
            );
            if gap.is_nan() || gap > DIST_TOLERANCE {
                return Err(CliError::Verification(format!("{line}: mismatch")));
            }
            eprintln!("{line}: ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
