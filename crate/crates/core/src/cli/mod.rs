//! Command-line frontend. The `reflprior` binary only calls [`main`].
//!
//! Exit codes: 0 when every requested output was written, 2 for invalid or
//! unreadable input, 3 for a failed write, 4 when the scorer is unreachable or
//! answers malformed, 5 when a fixture scorer lacks an entry.

pub mod config;
pub mod heatmap;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::error::Error;
use crate::gate::{gate_map, modulate_stack, FeatureStack};
use crate::hf::hf_prior;
use crate::image::io::{encode_fmap, encode_png, read_map, read_png, BitDepth};
use crate::image::{ImageF, ScalarMap};
use crate::intensity::{intensity_prior_report, IntensityReport};
use crate::metrics::{evaluate_dirs, summarize};
use crate::severity::Scorer;
use crate::synth::{synth_batch, MANIFEST_NAME};
use config::{PipelineConfig, ScorerKind};
use heatmap::{heatmap, side_by_side};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_WRITE: i32 = 3;
pub const EXIT_SCORER: i32 = 4;
pub const EXIT_FIXTURE: i32 = 5;

/// Reflection priors, gated modulation, mixture synthesis and metrics.
#[derive(Parser, Debug)]
#[command(name = "reflprior", version, about)]
pub struct Cli {
    /// TOML configuration file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Only log errors
    #[arg(short, long, global = true)]
    quiet: bool,

    /// Worker threads for batch work (default: all cores)
    #[arg(short, long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// High-frequency prior of each input image
    HfPrior {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutOpts,
        #[command(flatten)]
        hf: HfOpts,
    },
    /// Reflection-intensity prior of each input image
    IntPrior {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutOpts,
        #[command(flatten)]
        scorer: ScorerOpts,
        #[command(flatten)]
        intensity: IntensityOpts,
    },
    /// Gate map from an intensity prior and a high-frequency prior
    Gate {
        /// Intensity prior (FMAP or grayscale PNG)
        p_int: PathBuf,
        /// High-frequency prior (FMAP or grayscale PNG)
        p_hf: PathBuf,
        #[command(flatten)]
        out: OutOpts,
        #[command(flatten)]
        gate: GateOpts,
        /// Feature stack (FSTK) to modulate with the gate
        #[arg(long, value_name = "FILE")]
        stack: Option<PathBuf>,
        /// Output file stem (default: derived from the intensity prior)
        #[arg(long)]
        name: Option<String>,
    },
    /// Both priors, the gate and a side-by-side sheet for each input
    Pipeline {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutOpts,
        #[command(flatten)]
        hf: HfOpts,
        #[command(flatten)]
        scorer: ScorerOpts,
        #[command(flatten)]
        intensity: IntensityOpts,
        #[command(flatten)]
        gate: GateOpts,
    },
    /// Synthetic mixtures from transmission and reflection directories
    Synth {
        #[arg(long, value_name = "DIR")]
        transmission: PathBuf,
        #[arg(long, value_name = "DIR")]
        reflection: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Transmission coefficient range
        #[arg(long, value_name = "LO,HI", value_delimiter = ',', num_args = 2)]
        gamma1: Option<Vec<f64>>,
        /// Reflection coefficient range
        #[arg(long, value_name = "LO,HI", value_delimiter = ',', num_args = 2)]
        gamma2: Option<Vec<f64>>,
    },
    /// Full-reference metrics for images paired by file stem
    Eval {
        /// Directory of restored images
        predictions: PathBuf,
        /// Directory of reference images
        references: PathBuf,
        /// JSON-lines output file (default: stdout)
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct OutOpts {
    #[arg(short, long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Also write raw f32 maps (FMAP)
    #[arg(long)]
    raw: bool,
    /// Also write color heatmaps
    #[arg(long)]
    heatmap: bool,
}

#[derive(Args, Debug)]
struct HfOpts {
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    clamp_hi: Option<f64>,
}

#[derive(Args, Debug)]
struct ScorerOpts {
    #[arg(long, value_enum)]
    scorer: Option<ScorerKind>,
    /// Answer table for the fixture scorer
    #[arg(long, value_name = "FILE")]
    fixture: Option<PathBuf>,
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Response cache for the remote scorer
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Args, Debug)]
struct IntensityOpts {
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    boost_factor: Option<f64>,
    #[arg(long)]
    boost_cap: Option<f64>,
    #[arg(long)]
    gf_radius: Option<usize>,
    #[arg(long)]
    gf_epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct GateOpts {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl OutOpts {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.out_dir.is_some() {
            cfg.output_dir = self.out_dir.clone();
        }
        cfg.visualize |= self.heatmap;
    }
}

impl HfOpts {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.hf.levels, self.levels);
        set(&mut cfg.hf.clamp_hi, self.clamp_hi);
    }
}

impl ScorerOpts {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.scorer;
        set(&mut s.kind, self.scorer);
        if self.fixture.is_some() {
            s.fixture = self.fixture.clone();
            if self.scorer.is_none() {
                s.kind = ScorerKind::Fixture;
            }
        }
        set(&mut s.remote.endpoint_url, self.endpoint.clone());
        set(&mut s.remote.model_name, self.model.clone());
        if self.cache.is_some() {
            s.remote.cache_path = self.cache.clone();
        }
        set(&mut s.remote.max_in_flight, self.max_in_flight);
    }
}

impl IntensityOpts {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let i = &mut cfg.intensity;
        if self.patch_size.is_some() {
            i.patch_size = self.patch_size;
        }
        set(&mut i.boost_factor, self.boost_factor);
        set(&mut i.boost_cap, self.boost_cap);
        if self.gf_radius.is_some() {
            i.gf_radius = self.gf_radius;
        }
        set(&mut i.gf_epsilon, self.gf_epsilon);
    }
}

impl GateOpts {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.beta.is_some() {
            cfg.gate.beta = self.beta;
        }
        set(&mut cfg.gate.beta_max, self.beta_max);
    }
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error.root() {
            Error::ScorerUnavailable { .. } | Error::Protocol(_) => EXIT_SCORER,
            Error::FixtureIncomplete { .. } => EXIT_FIXTURE,
            _ => EXIT_INPUT,
        };
        Failure { code, error }
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

fn write_failure(error: Error) -> Failure {
    Failure {
        code: EXIT_WRITE,
        error,
    }
}

fn emit(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).map_err(|e| write_failure(Error::io(path, e)))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn emit_png(path: &Path, img: &ImageF, depth: BitDepth) -> CmdResult {
    let bytes = encode_png(img, depth).map_err(write_failure)?;
    emit(path, &bytes)
}

fn map_image(map: &ScalarMap) -> ImageF {
    ImageF::from_channels(std::slice::from_ref(map)).expect("single plane is a valid image")
}

fn output_dir(cfg: &PipelineConfig) -> CmdResult<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| write_failure(Error::io(&dir, e)))?;
    Ok(dir)
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string())
}

/// Runs `f` on every input in parallel; the first failure in input order decides the exit code.
fn for_each_input(inputs: &[PathBuf], f: impl Fn(&Path) -> CmdResult + Sync) -> i32 {
    let results: Vec<CmdResult> = inputs.par_iter().map(|p| f(p)).collect();
    let mut code = EXIT_OK;
    for (path, r) in inputs.iter().zip(results) {
        if let Err(fail) = r {
            log::error!("{}: {}", path.display(), fail.error);
            if code == EXIT_OK {
                code = fail.code;
            }
        }
    }
    code
}

/// Restricts a map to the precision an FMAP file stores.
fn storage_precision(map: &ScalarMap) -> ScalarMap {
    map.map(|v| v as f32 as f64).expect("finite map stays finite")
}

struct HfOutputs {
    map: ScalarMap,
}

fn write_hf(img: &ImageF, cfg: &PipelineConfig, dir: &Path, stem: &str, raw: bool) -> CmdResult<HfOutputs> {
    let map = hf_prior(img, cfg.hf.levels, cfg.hf.clamp_hi)?;
    emit_png(&dir.join(format!("{stem}.hf.png")), &map_image(&map), BitDepth::Sixteen)?;
    if raw {
        emit(&dir.join(format!("{stem}.hf.fmap")), &encode_fmap(&map))?;
    }
    if cfg.visualize {
        emit_png(&dir.join(format!("{stem}.hf.heat.png")), &heatmap(&map, 0.0, 1.0), BitDepth::Eight)?;
    }
    Ok(HfOutputs { map })
}

fn write_int(
    img: &ImageF,
    source: &Path,
    scorer: &dyn Scorer,
    cfg: &PipelineConfig,
    dir: &Path,
    stem: &str,
    raw: bool,
) -> CmdResult<IntensityReport> {
    let report = intensity_prior_report(img, scorer, &cfg.intensity)?;
    emit_png(&dir.join(format!("{stem}.int.png")), &map_image(&report.prior), BitDepth::Sixteen)?;
    if raw {
        emit(&dir.join(format!("{stem}.int.fmap")), &encode_fmap(&report.prior))?;
    }
    let dump = json!({
        "source": source.display().to_string(),
        "height": img.height(),
        "width": img.width(),
        "scorer": scorer.describe(),
        "grid": report.grid,
        "boxes": report.boxes,
        "filter": report.filter,
    });
    let mut text = serde_json::to_vec_pretty(&dump).expect("report serializes");
    text.push(b'\n');
    emit(&dir.join(format!("{stem}.int.json")), &text)?;
    if cfg.visualize {
        emit_png(
            &dir.join(format!("{stem}.int.heat.png")),
            &heatmap(&report.prior, 0.0, 1.0),
            BitDepth::Eight,
        )?;
    }
    Ok(report)
}

fn write_gate(g: &ScalarMap, beta_max: f64, dir: &Path, stem: &str) -> CmdResult {
    emit(&dir.join(format!("{stem}.gate.fmap")), &encode_fmap(g))?;
    emit_png(
        &dir.join(format!("{stem}.gate.heat.png")),
        &heatmap(g, 1.0, 1.0 + beta_max),
        BitDepth::Eight,
    )
}

fn cmd_hf_prior(inputs: &[PathBuf], cfg: &PipelineConfig, raw: bool) -> CmdResult<i32> {
    let dir = output_dir(cfg)?;
    Ok(for_each_input(inputs, |input| {
        let img = read_png(input)?;
        write_hf(&img, cfg, &dir, &stem_of(input), raw).map(drop)
    }))
}

fn cmd_int_prior(inputs: &[PathBuf], cfg: &PipelineConfig, raw: bool) -> CmdResult<i32> {
    let scorer = cfg.scorer.build()?;
    log::info!("scorer: {}", scorer.describe());
    let dir = output_dir(cfg)?;
    Ok(for_each_input(inputs, |input| {
        let img = read_png(input)?;
        write_int(&img, input, scorer.as_ref(), cfg, &dir, &stem_of(input), raw).map(drop)
    }))
}

fn cmd_gate(
    p_int: &Path,
    p_hf: &Path,
    stack: Option<&Path>,
    name: Option<String>,
    cfg: &PipelineConfig,
) -> CmdResult<i32> {
    let int_map = read_map(p_int)?;
    let hf_map = read_map(p_hf)?;
    let g = gate_map(&int_map, &hf_map, cfg.gate.beta())?;
    let modulated = match stack {
        Some(path) => Some(modulate_stack(&FeatureStack::read(path)?, &g, cfg.gate.beta_max)?),
        None => None,
    };
    let stem = name.unwrap_or_else(|| {
        let s = stem_of(p_int);
        s.strip_suffix(".int").map(str::to_string).unwrap_or(s)
    });
    let dir = output_dir(cfg)?;
    write_gate(&g, cfg.gate.beta_max, &dir, &stem)?;
    if let Some(m) = modulated {
        emit(&dir.join(format!("{stem}.mod.fstk")), &m.to_bytes())?;
    }
    Ok(EXIT_OK)
}

fn cmd_pipeline(inputs: &[PathBuf], cfg: &PipelineConfig, raw: bool) -> CmdResult<i32> {
    let scorer = cfg.scorer.build()?;
    log::info!("scorer: {}", scorer.describe());
    let dir = output_dir(cfg)?;
    Ok(for_each_input(inputs, |input| {
        let stem = stem_of(input);
        let img = read_png(input)?;
        let hf = write_hf(&img, cfg, &dir, &stem, raw)?;
        let int = write_int(&img, input, scorer.as_ref(), cfg, &dir, &stem, raw)?;
        // Gate from the stored f32 priors so `gate` on the FMAP files gives the same bytes.
        let g = gate_map(
            &storage_precision(&int.prior),
            &storage_precision(&hf.map),
            cfg.gate.beta(),
        )?;
        write_gate(&g, cfg.gate.beta_max, &dir, &stem)?;
        let rgb = if img.channels() == 3 {
            img
        } else {
            let plane = img.channel(0);
            ImageF::from_channels(&[plane.clone(), plane.clone(), plane])?
        };
        let sheet = side_by_side(&[
            rgb,
            heatmap(&int.prior, 0.0, 1.0),
            heatmap(&hf.map, 0.0, 1.0),
            heatmap(&g, 1.0, 1.0 + cfg.gate.beta_max),
        ])?;
        emit_png(&dir.join(format!("{stem}.sheet.png")), &sheet, BitDepth::Eight)
    }))
}

fn cmd_synth(t_dir: &Path, r_dir: &Path, count: usize, cfg: &PipelineConfig) -> CmdResult<i32> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let records = synth_batch(t_dir, r_dir, &dir, count, &cfg.synth).map_err(|e| match e {
        Error::Io { ref path, .. } if path.starts_with(&dir) => write_failure(e),
        e => Failure::from(e),
    })?;
    let skipped = records.iter().filter(|r| r.skipped.is_some()).count();
    log::info!(
        "wrote {} mixtures and {}",
        records.len() - skipped,
        dir.join(MANIFEST_NAME).display()
    );
    if skipped > 0 {
        log::error!("{skipped} of {count} samples were skipped (unreadable sources)");
        return Ok(EXIT_INPUT);
    }
    Ok(EXIT_OK)
}

fn cmd_eval(pred: &Path, refs: &Path, output: Option<&Path>) -> CmdResult<i32> {
    let records = evaluate_dirs(pred, refs)?;
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    text.push_str(&serde_json::to_string(&summarize(&records)).expect("summary serializes"));
    text.push('\n');
    match output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| write_failure(Error::io(parent, e)))?;
            }
            emit(path, text.as_bytes())?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| write_failure(Error::io("<stdout>", e)))?;
        }
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> CmdResult<i32> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::HfPrior { inputs, out, hf } => {
            out.apply(&mut cfg);
            hf.apply(&mut cfg);
            cfg.validate()?;
            cmd_hf_prior(&inputs, &cfg, out.raw)
        }
        Command::IntPrior {
            inputs,
            out,
            scorer,
            intensity,
        } => {
            out.apply(&mut cfg);
            scorer.apply(&mut cfg);
            intensity.apply(&mut cfg);
            cfg.validate()?;
            cmd_int_prior(&inputs, &cfg, out.raw)
        }
        Command::Gate {
            p_int,
            p_hf,
            out,
            gate,
            stack,
            name,
        } => {
            out.apply(&mut cfg);
            gate.apply(&mut cfg);
            cfg.validate()?;
            cmd_gate(&p_int, &p_hf, stack.as_deref(), name, &cfg)
        }
        Command::Pipeline {
            inputs,
            out,
            hf,
            scorer,
            intensity,
            gate,
        } => {
            out.apply(&mut cfg);
            hf.apply(&mut cfg);
            scorer.apply(&mut cfg);
            intensity.apply(&mut cfg);
            gate.apply(&mut cfg);
            cfg.validate()?;
            cmd_pipeline(&inputs, &cfg, out.raw)
        }
        Command::Synth {
            transmission,
            reflection,
            out_dir,
            count,
            seed,
            gamma1,
            gamma2,
        } => {
            if out_dir.is_some() {
                cfg.output_dir = out_dir;
            }
            set(&mut cfg.synth.seed, seed);
            if let Some(g) = gamma1 {
                cfg.synth.gamma1_range = [g[0], g[1]];
            }
            if let Some(g) = gamma2 {
                cfg.synth.gamma2_range = [g[0], g[1]];
            }
            cfg.validate()?;
            cmd_synth(&transmission, &reflection, count, &cfg)
        }
        Command::Eval {
            predictions,
            references,
            output,
        } => cmd_eval(&predictions, &references, output.as_deref()),
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (including the program name), runs the command, and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.quiet);
    let pool = match cli.jobs {
        Some(0) => {
            log::error!("--jobs must be at least 1");
            return EXIT_INPUT;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            log::error!("thread pool: {e}");
            return EXIT_INPUT;
        }
    };
    match pool.install(|| run(cli)) {
        Ok(code) => code,
        Err(fail) => {
            log::error!("{}", fail.error);
            fail.code
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(code(Error::invalid("x")), EXIT_INPUT);
        assert_eq!(
            code(Error::ScorerUnavailable {
                endpoint: "e".into(),
                reason: "r".into()
            }),
            EXIT_SCORER
        );
        assert_eq!(code(Error::Protocol("p".into())), EXIT_SCORER);
        assert_eq!(
            code(Error::AtPatch {
                row: 1,
                col: 2,
                source: Box::new(Error::FixtureIncomplete { row: 1, col: 2 })
            }),
            EXIT_FIXTURE
        );
    }

    #[test]
    fn flags_override_file() {
        let cli = Cli::try_parse_from(["reflprior", "hf-prior", "a.png", "--levels", "2"]).unwrap();
        let mut cfg = PipelineConfig::from_toml("[hf]\nlevels = 3\nclamp_hi = 0.5").unwrap();
        let Command::HfPrior { hf, .. } = cli.command else {
            panic!("wrong subcommand")
        };
        hf.apply(&mut cfg);
        assert_eq!(cfg.hf.levels, 2);
        assert_eq!(cfg.hf.clamp_hi, 0.5);
    }

    #[test]
    fn fixture_flag_selects_fixture_scorer() {
        let cli = Cli::try_parse_from(["reflprior", "int-prior", "a.png", "--fixture", "f.json"]).unwrap();
        let Command::IntPrior { scorer, .. } = cli.command else {
            panic!("wrong subcommand")
        };
        let mut cfg = PipelineConfig::default();
        scorer.apply(&mut cfg);
        assert_eq!(cfg.scorer.kind, ScorerKind::Fixture);
    }
}
