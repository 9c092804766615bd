//! `ctkit` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Every command that
//! writes files also writes `run.json` beside them with the fully resolved
//! arguments, defaults included.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctkit::geometry::{default_detector_count, equispaced_angles};
use ctkit::io::{
    read_angles, read_ctr1, read_header, read_image, read_intensity, read_sinogram, sidecar_path, write_image,
    write_intensity, write_pgm, write_sinogram,
};
use ctkit::phantom::{make_phantom, PhantomKind, PhantomSpec, RandomEllipseSpec};
use ctkit::sirt::residual_csv;
use ctkit::{
    fbp_reconstruct, forward_project, log_normalize, simulate_intensity, sirt_reconstruct, FilterKind, FilterSpec,
    GridShape, ImageGrid, ParallelGeometry,
};
use ctkit_nn::{load_network, BiasCorrection, Network};
use ctkit_pipeline::dataset::FIELD_OF_VIEW;
use ctkit_pipeline::seeds::{stage_seed, Stage};
use ctkit_pipeline::{
    automap_for, build_dataset, estimate_params, evaluate, train_denoiser, train_end_to_end, Arch, AutomapArch,
    DatasetConfig, DenoiserArch, EndToEndModel, Manifest, PhantomParams, TrainConfig,
};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "ctkit",
    version,
    about = "Parallel-beam CT simulation, reconstruction and learned low-dose restoration"
)]
pub struct Cli {
    /// Master seed; every random stage derives its own stream from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, global = true, env = "CTKIT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Rasterise an analytic phantom to a CTR1 image
    Phantom(PhantomArgs),
    /// Forward-project an image into a sinogram
    Project(ProjectArgs),
    /// Turn line integrals into photon counts, optionally with Poisson noise
    Acquire(AcquireArgs),
    /// Convert photon counts back to line integrals, -ln(I / i0)
    Lognorm(LognormArgs),
    /// Filtered backprojection
    Fbp(FbpArgs),
    /// SIRT reconstruction
    Sirt(SirtArgs),
    /// Generate a synthetic low-dose training dataset
    Dataset(DatasetArgs),
    /// Train the FBP post-processing denoiser
    TrainDenoiser(TrainDenoiserArgs),
    /// Train the end-to-end sinogram-to-image network
    TrainE2e(TrainE2eArgs),
    /// Score FBP, denoiser and end-to-end model on a test split
    Eval(EvalArgs),
    /// Exact parameter count and memory of a network
    EstimateParams(EstimateArgs),
    /// Export a CTR1 raster as a min-max windowed 16-bit PGM
    ExportPgm(ExportPgmArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomChoice {
    Shepp,
    Ellipses,
}

#[derive(Debug, Args, Serialize)]
pub struct PhantomArgs {
    /// Phantom family
    #[arg(long, value_enum, default_value = "shepp")]
    pub kind: PhantomChoice,
    /// Image side in pixels (>= 8)
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Output CTR1 file
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub ellipses: EllipseArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct EllipseArgs {
    /// Fewest random ellipses per phantom
    #[arg(long, default_value_t = 4)]
    pub min_ellipses: usize,
    /// Most random ellipses per phantom
    #[arg(long, default_value_t = 10)]
    pub max_ellipses: usize,
    /// Lowest ellipse attenuation (per unit length)
    #[arg(long, default_value_t = 0.0)]
    pub min_value: f64,
    /// Highest ellipse attenuation (per unit length)
    #[arg(long, default_value_t = 1.0)]
    pub max_value: f64,
    /// Attenuation ceiling applied after summing overlaps
    #[arg(long, default_value_t = 1.0)]
    pub clip_max: f64,
}

impl EllipseArgs {
    fn params(&self) -> PhantomParams {
        PhantomParams {
            min_ellipses: self.min_ellipses,
            max_ellipses: self.max_ellipses,
            min_value: self.min_value,
            max_value: self.max_value,
            clip_max: self.clip_max,
        }
    }
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct AngleArgs {
    /// Equispaced angles k*pi/K, k = 0..K
    #[arg(long, conflicts_with = "angles_file")]
    pub n_angles: Option<usize>,
    /// File with one angle in radians per line
    #[arg(long)]
    pub angles_file: Option<PathBuf>,
}

impl AngleArgs {
    fn resolve(&self) -> anyhow::Result<Option<Vec<f64>>> {
        Ok(match (&self.n_angles, &self.angles_file) {
            (Some(k), _) => Some(equispaced_angles(*k)),
            (None, Some(p)) => Some(read_angles(p)?),
            (None, None) => None,
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    /// Input CTR1 image
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub angles: AngleArgs,
    /// Detector bins (default: enough to cover the image diagonal)
    #[arg(long)]
    pub detectors: Option<usize>,
    /// Pixel side length (default: 2 / image width, a [-1, 1] field of view)
    #[arg(long)]
    pub pixel_size: Option<f64>,
    /// Detector bin width (default: the pixel size)
    #[arg(long)]
    pub detector_spacing: Option<f64>,
    /// Output sinogram (CTR1, geometry in a .hdr sidecar)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AcquireArgs {
    /// Input sinogram of line integrals
    #[arg(long)]
    pub sino: PathBuf,
    /// Unattenuated photons per detector bin
    #[arg(long, default_value_t = 1e4)]
    pub i0: f64,
    /// Return the exact expected counts instead of Poisson draws
    #[arg(long)]
    pub noiseless: bool,
    /// Output photon counts (CTR1 + .hdr)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LognormArgs {
    /// Photon counts written by `acquire`
    #[arg(long)]
    pub counts: PathBuf,
    /// Output sinogram of line integrals
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterChoice {
    Ramlak,
    Hann,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct GeometryOverride {
    #[command(flatten)]
    pub angles: AngleArgs,
    /// Image side in pixels when the sinogram has no header (default: the
    /// largest image whose diagonal the detector covers)
    #[arg(long)]
    pub size: Option<usize>,
    /// Pixel side length when the sinogram has no header (default: 2 / size)
    #[arg(long)]
    pub pixel_size: Option<f64>,
    /// Detector bin width when the sinogram has no header (default: the pixel size)
    #[arg(long)]
    pub detector_spacing: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FbpArgs {
    /// Input sinogram
    #[arg(long)]
    pub sino: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryOverride,
    /// Ramp filter variant
    #[arg(long, value_enum, default_value = "ramlak")]
    pub filter: FilterChoice,
    /// Filter cutoff as a fraction of Nyquist, in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    pub cutoff: f64,
    /// Zero-padded row length, a power of two >= 2 x detectors (default: smallest such)
    #[arg(long)]
    pub padded_length: Option<usize>,
    /// Output CTR1 image
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SirtArgs {
    /// Input sinogram
    #[arg(long)]
    pub sino: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryOverride,
    /// Maximum iterations
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Clamp the estimate at zero after each update
    #[arg(long)]
    pub nonneg: bool,
    /// Stop once the residual norm falls below this fraction of its initial value
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output CTR1 image
    #[arg(long)]
    pub out: PathBuf,
    /// Residual history CSV (default: <out>.residuals.csv)
    #[arg(long)]
    pub residuals: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Training samples
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    /// Validation samples
    #[arg(long, default_value_t = 20)]
    pub n_val: usize,
    /// Test samples
    #[arg(long, default_value_t = 20)]
    pub n_test: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Equispaced projection angles in [0, pi)
    #[arg(long, default_value_t = 20)]
    pub n_angles: usize,
    /// Detector bins (default: enough to cover the image diagonal)
    #[arg(long)]
    pub detectors: Option<usize>,
    /// Unattenuated photons per detector bin
    #[arg(long, default_value_t = 1e4)]
    pub i0: f64,
    #[command(flatten)]
    pub ellipses: EllipseArgs,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct TrainArgs {
    /// Dataset directory or manifest file
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for the checkpoint and loss log
    #[arg(long)]
    pub out: PathBuf,
    /// Passes over the training split
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Samples per ADAM step
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// ADAM learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// De-bias the moments with 1 - beta instead of 1 - beta^n
    #[arg(long)]
    pub adam_paper_bias: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            seed,
            bias_correction: if self.adam_paper_bias { BiasCorrection::Constant } else { BiasCorrection::Standard },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainDenoiserArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Dilated convolution layers
    #[arg(long, default_value_t = 32)]
    pub depth: usize,
    /// Dilations run 1..=cycle and repeat
    #[arg(long, default_value_t = 10)]
    pub dilation_cycle: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainE2eArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Channels of the two 3x3 convolutions
    #[arg(long, default_value_t = 64)]
    pub conv_channels: usize,
    /// Refuse networks with more dense-layer weights than this
    #[arg(long, default_value_t = 1u64 << 26)]
    pub max_dense_params: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Dataset directory or manifest file
    #[arg(long)]
    pub dataset: PathBuf,
    /// Denoiser checkpoint
    #[arg(long)]
    pub denoiser: Option<PathBuf>,
    /// End-to-end checkpoint
    #[arg(long, requires = "e2e_dataset")]
    pub e2e: Option<PathBuf>,
    /// Dataset the end-to-end model reads sinograms from
    #[arg(long)]
    pub e2e_dataset: Option<PathBuf>,
    /// Output directory for metrics.csv, restored images and PGM panels
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// AUTOMAP-style network (dense weights counted)
    #[arg(long, conflicts_with = "denoiser", required_unless_present = "denoiser")]
    pub automap: bool,
    /// Mixed-scale dense denoiser (all weights and biases counted)
    #[arg(long)]
    pub denoiser: bool,
    /// Detector bins
    #[arg(long, default_value_t = 512)]
    pub det: usize,
    /// Projection angles
    #[arg(long, default_value_t = 128)]
    pub angles: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 512)]
    pub img: usize,
    /// Denoiser depth
    #[arg(long, default_value_t = 32)]
    pub depth: usize,
    /// Bytes per parameter
    #[arg(long, default_value_t = 4)]
    pub bytes_per_param: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportPgmArgs {
    /// Input CTR1 raster
    #[arg(long)]
    pub input: PathBuf,
    /// Output PGM
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialised: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_run_json(dir: &Path, cli: &Cli) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    #[derive(Serialize)]
    struct RunRecord<'a> {
        tool: &'static str,
        version: &'static str,
        #[serde(flatten)]
        cli: &'a Cli,
    }
    let record = RunRecord { tool: "ctkit", version: env!("CARGO_PKG_VERSION"), cli };
    let path = dir.join("run.json");
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn phantom_spec(args: &PhantomArgs, seed: u64) -> PhantomSpec {
    let e = &args.ellipses;
    let kind = match args.kind {
        PhantomChoice::Shepp => PhantomKind::SheppLogan,
        PhantomChoice::Ellipses => PhantomKind::RandomEllipses(RandomEllipseSpec {
            min_ellipses: e.min_ellipses,
            max_ellipses: e.max_ellipses,
            min_value: e.min_value,
            max_value: e.max_value,
            clip_max: e.clip_max,
        }),
    };
    PhantomSpec { kind, size: args.size, seed: stage_seed(seed, Stage::Phantom, 0) }
}

/// Largest square image whose diagonal `n_detectors` bins cover.
fn inferred_size(n_detectors: usize) -> usize {
    (1..=n_detectors).take_while(|&n| default_detector_count(n, n) <= n_detectors).last().unwrap_or(1)
}

/// Geometry from the sidecar header, or from flags when there is none.
fn sinogram_geometry(path: &Path, over: &GeometryOverride) -> anyhow::Result<ParallelGeometry> {
    let raster = read_ctr1(path)?;
    let angles = over.angles.resolve()?;
    if sidecar_path(path).exists() {
        let mut header = read_header(path)?;
        if let Some(a) = angles {
            header.angles = a;
        }
        return Ok(header.geometry(raster.width)?);
    }
    let angles =
        angles.ok_or_else(|| anyhow!("{} has no .hdr sidecar; pass --n-angles or --angles-file", path.display()))?;
    let size = over.size.unwrap_or_else(|| inferred_size(raster.width));
    let ps = over.pixel_size.unwrap_or(FIELD_OF_VIEW / size as f64);
    let shape = GridShape::new(size, size, ps)?;
    Ok(ParallelGeometry::new(angles, raster.width, over.detector_spacing.unwrap_or(ps), shape)?)
}

fn load_model(path: &Path) -> anyhow::Result<Network<f32>> {
    load_network(path).with_context(|| format!("loading model {}", path.display()))
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Phantom(a) => {
            let img = make_phantom(&phantom_spec(a, seed))?;
            let ps = FIELD_OF_VIEW / a.size as f64;
            let img = ImageGrid::from_vec(GridShape::new(a.size, a.size, ps)?, img.into_vec())?;
            write_image(&a.out, &img)?;
            write_run_json(&parent_dir(&a.out), cli)
        }
        Command::Project(a) => {
            let raster = read_ctr1(&a.image)?;
            let ps = a.pixel_size.unwrap_or(FIELD_OF_VIEW / raster.width as f64);
            let img = read_image(&a.image, ps)?;
            let angles = a.angles.resolve()?.ok_or_else(|| anyhow!("pass --n-angles or --angles-file"))?;
            let nd = a.detectors.unwrap_or_else(|| default_detector_count(img.width(), img.height()));
            let geom = ParallelGeometry::new(angles, nd, a.detector_spacing.unwrap_or(ps), img.shape())?;
            write_sinogram(&a.out, &forward_project(&img, &geom)?)?;
            write_run_json(&parent_dir(&a.out), cli)
        }
        Command::Acquire(a) => {
            let sino = read_sinogram(&a.sino, None)?;
            let rec = simulate_intensity(&sino, a.i0, !a.noiseless, stage_seed(seed, Stage::Noise, 0))?;
            write_intensity(&a.out, &rec)?;
            write_run_json(&parent_dir(&a.out), cli)
        }
        Command::Lognorm(a) => {
            let rec = read_intensity(&a.counts)?;
            write_sinogram(&a.out, &log_normalize(&rec)?)?;
            write_run_json(&parent_dir(&a.out), cli)
        }
        Command::Fbp(a) => {
            let geom = sinogram_geometry(&a.sino, &a.geometry)?;
            let sino = read_sinogram(&a.sino, Some(geom))?;
            let spec = FilterSpec {
                kind: match a.filter {
                    FilterChoice::Ramlak => FilterKind::RamLak,
                    FilterChoice::Hann => FilterKind::Hann,
                },
                padded_length: a.padded_length,
                cutoff: a.cutoff,
            };
            write_image(&a.out, &fbp_reconstruct(&sino, &spec)?)?;
            write_run_json(&parent_dir(&a.out), cli)
        }
        Command::Sirt(a) => {
            let geom = sinogram_geometry(&a.sino, &a.geometry)?;
            let sino = read_sinogram(&a.sino, Some(geom))?;
            let (img, state) = sirt_reconstruct(&sino, a.iterations, a.nonneg, a.tol)?;
            write_image(&a.out, &img)?;
            let csv = a.residuals.clone().unwrap_or_else(|| {
                let mut s = a.out.clone().into_os_string();
                s.push(".residuals.csv");
                PathBuf::from(s)
            });
            std::fs::write(&csv, residual_csv(&state)).with_context(|| format!("writing {}", csv.display()))?;
            write_run_json(&parent_dir(&a.out), cli)
        }
        Command::Dataset(a) => {
            let config = DatasetConfig {
                n_train: a.n_train,
                n_val: a.n_val,
                n_test: a.n_test,
                image_size: a.size,
                n_angles: a.n_angles,
                n_detectors: a.detectors,
                i0: a.i0,
                seed,
                phantom: a.ellipses.params(),
            };
            ensure_dir(&a.out)?;
            let m = build_dataset(&a.out, &config)?;
            println!("{} samples written to {}", m.samples.len(), m.path().display());
            write_run_json(&a.out, cli)
        }
        Command::TrainDenoiser(a) => {
            let m = Manifest::load(&a.train.dataset)?;
            let arch = DenoiserArch { depth: a.depth, dilation_cycle: a.dilation_cycle };
            if arch.dilation_cycle == 0 {
                bail!("--dilation-cycle must be positive");
            }
            let (_, log) = train_denoiser(&m, &arch, &a.train.config(seed), Some(&a.train.out))?;
            print!("{}", log.to_csv());
            write_run_json(&a.train.out, cli)
        }
        Command::TrainE2e(a) => {
            let m = Manifest::load(&a.train.dataset)?;
            let arch = AutomapArch { conv_channels: a.conv_channels, ..automap_for(&m) };
            let (_, log) =
                train_end_to_end(&m, &arch, &a.train.config(seed), a.max_dense_params as u128, Some(&a.train.out))?;
            print!("{}", log.to_csv());
            write_run_json(&a.train.out, cli)
        }
        Command::Eval(a) => {
            let m = Manifest::load(&a.dataset)?;
            let denoiser = a.denoiser.as_deref().map(load_model).transpose()?;
            let e2e_net = a.e2e.as_deref().map(load_model).transpose()?;
            let e2e_manifest = a.e2e_dataset.as_deref().map(Manifest::load).transpose()?;
            let e2e = match (&e2e_net, &e2e_manifest) {
                (Some(network), Some(manifest)) => Some(EndToEndModel { network, manifest }),
                _ => None,
            };
            ensure_dir(&a.out)?;
            let table = evaluate(&m, denoiser.as_ref(), e2e.as_ref(), Some(&a.out))?;
            print!("{}", table.to_csv());
            write_run_json(&a.out, cli)
        }
        Command::EstimateParams(a) => {
            let arch = if a.automap {
                Arch::Automap(AutomapArch::new(a.det, a.angles, a.img))
            } else {
                Arch::Denoiser(DenoiserArch { depth: a.depth, dilation_cycle: 10 })
            };
            let e = estimate_params(&arch, a.bytes_per_param as u128);
            println!("{}", e.params);
            println!("bytes={}", e.bytes);
            println!("total_params={}", e.total_params);
            Ok(())
        }
        Command::ExportPgm(a) => {
            let r = read_ctr1(&a.input)?;
            if r.channels != 1 {
                bail!("{} has {} channels; only single-channel rasters export", a.input.display(), r.channels);
            }
            write_pgm(&a.out, r.width, r.height, &r.to_f64())?;
            write_run_json(&parent_dir(&a.out), cli)
        }
    }
}
