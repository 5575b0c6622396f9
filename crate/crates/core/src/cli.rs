//! Command-line front end.
//!
//! ```text
//! mcv segment <input.pnm> --out <dir> [--config <file>] [flags]
//! mcv components <classmap.pgm> <output.pgm|output.csv>
//! mcv rand <labels1> <labels2>
//! ```
//!
//! Settings are resolved in three layers: built-in defaults, then the config
//! file, then command-line flags. A flag always wins over the same key in the
//! config file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::driver::{run_mcv, EvalMode, McvConfig, PermutationKind, PartitionSequence};
use crate::error::{Error, Result};
use crate::geometry::Window;
use crate::imageio::{colorize, load_labels, load_pnm, save_labels, save_pnm, LabelFormat, PnmFormat};
use crate::metrics::rand_index;
use crate::mrf::{Metric, MrfModel, DEFAULT_RHO};
use crate::partition::{canonicalize, components_by_class, ClassMap, MergeLabel, Partition};

#[derive(Parser, Debug)]
#[command(name = "mcv", version, about = "Region-merging image segmentation with MRF homogeneity tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a PGM/PPM image into a sequence of partitions.
    Segment(SegmentArgs),
    /// Label the connected components of each class in a class map.
    Components {
        input: PathBuf,
        /// Written as CSV when the extension is `.csv`, otherwise 16-bit PGM.
        output: PathBuf,
    },
    /// Print the Rand index of two label maps.
    Rand { first: PathBuf, second: PathBuf },
}

#[derive(clap::Args, Debug)]
struct SegmentArgs {
    input: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of merge levels (default 9).
    #[arg(long)]
    levels: Option<u32>,
    /// Seed for the random visiting order.
    #[arg(long)]
    seed: Option<u64>,
    /// raster, random, or file:<path>
    #[arg(long)]
    perm: Option<String>,
    /// Per-pixel energy threshold (default 100).
    #[arg(long)]
    rho: Option<f64>,
    /// Gibbs temperature (default 1).
    #[arg(long)]
    temp: Option<f64>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    eval: Option<EvalArg>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// 4 or 8; sets both the adjacency window and the MRF neighbourhood.
    #[arg(long)]
    neighborhood: Option<u32>,
    /// Label map format for the per-level outputs.
    #[arg(long, value_enum, default_value_t = FormatArg::Pgm)]
    format: FormatArg,
    /// Record wall-clock time in stats.txt (makes the output nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    L2,
    L1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalArg {
    Direct,
    Pyramid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Pgm,
    Csv,
}

/// Settings collected from the config file and flags before building a
/// [`McvConfig`].
#[derive(Debug, Default)]
struct Settings {
    max_level: Option<u32>,
    permutation: Option<PermutationKind>,
    seed: Option<u64>,
    w0: Option<Window>,
    g: Option<Window>,
    rho: Option<f64>,
    temperature: Option<f64>,
    metric: Option<Metric>,
    eval_mode: Option<EvalMode>,
    merge_label: Option<MergeLabel>,
    workers: Option<usize>,
    reshuffle_per_level: Option<bool>,
}

impl Settings {
    fn build(self) -> Result<McvConfig> {
        let d = McvConfig::default();
        let g = self.g.unwrap_or(d.g);
        let model = MrfModel::new(g.clone())
            .with_metric(self.metric.unwrap_or_default())
            .with_temperature(self.temperature.unwrap_or(1.0))
            .and_then(|m| m.with_rho(self.rho.unwrap_or(DEFAULT_RHO)))
            .map_err(|e| Error::Config(e.to_string()))?;
        let cfg = McvConfig {
            max_level: self.max_level.unwrap_or(d.max_level),
            permutation: self.permutation.unwrap_or(d.permutation),
            seed: self.seed.unwrap_or(d.seed),
            w0: self.w0.unwrap_or(d.w0),
            g,
            eval_windows: None,
            merge_windows: None,
            model,
            merge_label: self.merge_label.unwrap_or(d.merge_label),
            eval_mode: self.eval_mode.unwrap_or(d.eval_mode),
            workers: self.workers.unwrap_or(d.workers),
            reshuffle_per_level: self.reshuffle_per_level.unwrap_or(d.reshuffle_per_level),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn neighborhood(value: &str) -> Result<Window> {
    match value {
        "4" => Ok(Window::five()),
        "8" => Ok(Window::nine()),
        _ => config_err(format!("neighborhood must be 4 or 8, got {value:?}")),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .or_else(|_| config_err(format!("invalid value {value:?} for {key}")))
}

/// `raster`, `random` or `file:<path>`; relative paths resolve against `base`.
fn permutation_arg(value: &str, base: &Path) -> Result<PermutationKind> {
    match value {
        "raster" => Ok(PermutationKind::Raster),
        "random" => Ok(PermutationKind::Random),
        _ => match value.strip_prefix("file:") {
            Some(path) => {
                let text = std::fs::read_to_string(base.join(path))?;
                Ok(PermutationKind::Explicit(parse_permutation(&text)?))
            }
            None => config_err(format!("permutation must be raster, random or file:<path>, got {value:?}")),
        },
    }
}

/// Reads a permutation file: one zero-based row-major pixel index per line.
/// Blank lines and `#` comments are ignored.
pub fn parse_permutation(text: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.parse() {
            Ok(v) => out.push(v),
            Err(_) => return config_err(format!("permutation line {}: {line:?} is not an index", n + 1)),
        }
    }
    Ok(out)
}

/// Applies `key = value` lines. Keys: `max_level`, `permutation`, `seed`,
/// `w0`, `g`, `neighborhood` (sets `w0` and `g`), `rho`, `temperature`,
/// `metric` (`euclidean`/`l2` or `per_band_abs`/`l1`), `eval_mode`
/// (`direct`/`pyramid`), `merge_label` (`center`/`fresh`), `workers`,
/// `reshuffle_per_level`.
fn apply_config_text(s: &mut Settings, text: &str, base: &Path) -> Result<()> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return config_err(format!("line {}: expected key = value", n + 1));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "max_level" => s.max_level = Some(parse_num(key, value)?),
            "permutation" => s.permutation = Some(permutation_arg(value, base)?),
            "seed" => s.seed = Some(parse_num(key, value)?),
            "w0" => s.w0 = Some(neighborhood(value)?),
            "g" => s.g = Some(neighborhood(value)?),
            "neighborhood" => {
                s.w0 = Some(neighborhood(value)?);
                s.g = Some(neighborhood(value)?);
            }
            "rho" => s.rho = Some(parse_num(key, value)?),
            "temperature" => s.temperature = Some(parse_num(key, value)?),
            "metric" => {
                s.metric = Some(match value {
                    "euclidean" | "l2" => Metric::Euclidean,
                    "per_band_abs" | "l1" => Metric::PerBandAbs,
                    _ => return config_err(format!("unknown metric {value:?}")),
                })
            }
            "eval_mode" => {
                s.eval_mode = Some(match value {
                    "direct" => EvalMode::Direct,
                    "pyramid" => EvalMode::Pyramid,
                    _ => return config_err(format!("unknown eval_mode {value:?}")),
                })
            }
            "merge_label" => {
                s.merge_label = Some(match value {
                    "center" => MergeLabel::Center,
                    "fresh" => MergeLabel::Fresh,
                    _ => return config_err(format!("unknown merge_label {value:?}")),
                })
            }
            "workers" => s.workers = Some(parse_num(key, value)?),
            "reshuffle_per_level" => s.reshuffle_per_level = Some(parse_num(key, value)?),
            _ => return config_err(format!("line {}: unknown key {key:?}", n + 1)),
        }
    }
    Ok(())
}

fn apply_flags(s: &mut Settings, a: &SegmentArgs) -> Result<()> {
    if let Some(v) = a.levels {
        s.max_level = Some(v);
    }
    if let Some(v) = a.seed {
        s.seed = Some(v);
    }
    if let Some(v) = &a.perm {
        s.permutation = Some(permutation_arg(v, Path::new("."))?);
    }
    if let Some(v) = a.rho {
        s.rho = Some(v);
    }
    if let Some(v) = a.temp {
        s.temperature = Some(v);
    }
    if let Some(v) = a.metric {
        s.metric = Some(match v {
            MetricArg::L2 => Metric::Euclidean,
            MetricArg::L1 => Metric::PerBandAbs,
        });
    }
    if let Some(v) = a.eval {
        s.eval_mode = Some(match v {
            EvalArg::Direct => EvalMode::Direct,
            EvalArg::Pyramid => EvalMode::Pyramid,
        });
    }
    if let Some(v) = a.workers {
        s.workers = Some(v);
    }
    if let Some(v) = a.neighborhood {
        let w = neighborhood(&v.to_string())?;
        s.w0 = Some(w.clone());
        s.g = Some(w);
    }
    Ok(())
}

fn stats_report(seq: &PartitionSequence, elapsed_ms: Option<u128>) -> String {
    let cfg = &seq.config;
    let lat = seq.last().lattice();
    let mut out = String::new();
    let perm = match &cfg.permutation {
        PermutationKind::Raster => "raster",
        PermutationKind::Random => "random",
        PermutationKind::Explicit(_) => "file",
    };
    let _ = writeln!(out, "width={}", lat.width());
    let _ = writeln!(out, "height={}", lat.height());
    let _ = writeln!(out, "levels={}", cfg.max_level);
    let _ = writeln!(out, "permutation={perm}");
    let _ = writeln!(out, "seed={}", cfg.seed);
    let _ = writeln!(out, "rho={}", cfg.model.rho());
    let _ = writeln!(out, "temperature={}", cfg.model.temperature());
    for s in &seq.stats {
        let i = s.level;
        let _ = writeln!(out, "level_{i}_regions={}", s.regions);
        let _ = writeln!(out, "level_{i}_evaluations={}", s.evaluations);
        let _ = writeln!(out, "level_{i}_accepted={}", s.accepted_merges);
        let _ = writeln!(out, "level_{i}_relabelled={}", s.relabelled);
        let _ = writeln!(out, "level_{i}_coarsens_previous={}", s.coarsens_previous);
    }
    let _ = writeln!(out, "final_regions={}", seq.last().block_count());
    if let Some(ms) = elapsed_ms {
        let _ = writeln!(out, "elapsed_ms={ms}");
    }
    out
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let started = Instant::now();
    let img = load_pnm(&std::fs::read(&a.input)?)?;
    let mut settings = Settings::default();
    if let Some(path) = &a.config {
        let base = path.parent().unwrap_or(Path::new("."));
        apply_config_text(&mut settings, &std::fs::read_to_string(path)?, base)?;
    }
    apply_flags(&mut settings, a)?;
    let cfg = settings.build()?;
    let seq = run_mcv(&img, &cfg)?;

    // Encode everything before touching the output directory.
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, p) in seq.levels.iter().enumerate().skip(1) {
        let lm = p.label_image();
        let encoded = match a.format {
            FormatArg::Pgm => match save_labels(lm, LabelFormat::Pgm16) {
                Ok(bytes) => (format!("level_{i}.pgm"), bytes),
                Err(Error::LabelOverflow { .. }) => {
                    (format!("level_{i}.csv"), save_labels(lm, LabelFormat::Csv)?)
                }
                Err(e) => return Err(e),
            },
            FormatArg::Csv => (format!("level_{i}.csv"), save_labels(lm, LabelFormat::Csv)?),
        };
        files.push(encoded);
    }
    let color = colorize(seq.last().label_image(), cfg.seed);
    files.push(("final.ppm".into(), save_pnm(&color, PnmFormat::P6)?));
    let elapsed = a.timing.then(|| started.elapsed().as_millis());
    files.push(("stats.txt".into(), stats_report(&seq, elapsed).into_bytes()));

    std::fs::create_dir_all(&a.out)?;
    for (name, bytes) in files {
        std::fs::write(a.out.join(name), bytes)?;
    }
    Ok(())
}

fn components(input: &Path, output: &Path) -> Result<()> {
    let classes = load_labels(&std::fs::read(input)?)?;
    let cm = ClassMap::new(classes.lattice(), classes.into_labels())?;
    let p = canonicalize(&components_by_class(&cm, &Window::nine()));
    let csv = output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let format = if csv { LabelFormat::Csv } else { LabelFormat::Pgm16 };
    let bytes = save_labels(p.label_image(), format)?;
    std::fs::write(output, bytes)?;
    Ok(())
}

fn rand(first: &Path, second: &Path, stdout: &mut dyn Write) -> Result<()> {
    let a = Partition::from_labels(load_labels(&std::fs::read(first)?)?);
    let b = Partition::from_labels(load_labels(&std::fs::read(second)?)?);
    let ri = rand_index(&a, &b)?;
    writeln!(stdout, "{ri:.6}")?;
    Ok(())
}

/// Runs the CLI with explicit streams and returns the process exit code.
pub fn run_with_io<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Components { input, output } => components(input, output),
        Command::Rand { first, second } => rand(first, second, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "mcv: {msg}");
            1
        }
    }
}

/// Runs the CLI on the process arguments and standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_io(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys_and_precedence() {
        let mut s = Settings::default();
        let text = "# comment\nmax_level = 4\nseed=9\nneighborhood = 4\nrho = 2.5\nmetric = l1\neval_mode = pyramid\nmerge_label = fresh\nworkers = 2\nreshuffle_per_level = true\n";
        apply_config_text(&mut s, text, Path::new(".")).unwrap();
        let cli = Cli::try_parse_from(["mcv", "segment", "in.pgm", "--out", "o", "--seed", "11"]).unwrap();
        let Command::Segment(a) = cli.command else { panic!() };
        apply_flags(&mut s, &a).unwrap();
        let cfg = s.build().unwrap();
        assert_eq!(cfg.max_level, 4);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.w0, Window::five());
        assert_eq!(cfg.model.neighborhood(), &Window::five());
        assert_eq!(cfg.model.rho(), 2.5);
        assert_eq!(cfg.model.metric(), Metric::PerBandAbs);
        assert_eq!(cfg.eval_mode, EvalMode::Pyramid);
        assert_eq!(cfg.merge_label, MergeLabel::Fresh);
        assert_eq!(cfg.workers, 2);
        assert!(cfg.reshuffle_per_level);
    }

    #[test]
    fn bad_config_lines() {
        for text in ["colour = red", "max_level", "rho = x", "neighborhood = 6", "metric = l3"] {
            let mut s = Settings::default();
            assert!(apply_config_text(&mut s, text, Path::new(".")).is_err(), "{text}");
        }
        let mut s = Settings::default();
        apply_config_text(&mut s, "max_level = 0", Path::new(".")).unwrap();
        assert!(s.build().is_err());
    }

    #[test]
    fn permutation_file_format() {
        assert_eq!(parse_permutation("2\n0\n\n# c\n1\n").unwrap(), vec![2, 0, 1]);
        assert!(parse_permutation("1\nx\n").is_err());
    }
}
