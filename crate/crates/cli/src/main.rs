use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crf_depth::config::PipelineConfig;
use crf_depth::error::ErrorClass;
use crf_depth::eval::{self, format_table, EvalMode, Predictor};
use crf_depth::io::checkpoint::Checkpoint;
use crf_depth::io::image::read_intensity;
use crf_depth::io::manifest::{Manifest, ManifestPose};
use crf_depth::io::pfm::{read_pfm, write_pfm};
use crf_depth::io::{read_json, write_json};
use crf_depth::pipeline::{end_to_end, train_to_dir};
use crf_depth::recon::{backproject, export_cloud};
use crf_depth::render::generate_dataset;
use crf_depth::sample::{load_samples, Partition, Split};
use crf_depth::superpixel::{segment, GraphFile};
use crf_depth::train::Mode;
use crf_depth::{par, verify, Error, Exec, Result};

#[derive(Parser)]
#[command(name = "crf-depth", version, about = "Depth from synthetic endoscopy frames with a unary CNN and a continuous CRF")]
struct Cli {
    /// Worker threads; 1 gives the canonical sequential run.
    #[arg(long, global = true, env = "CRF_DEPTH_THREADS")]
    threads: Option<usize>,
    /// Pipeline configuration (JSON). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset of intensity/depth pairs plus a manifest.
    GenData(GenData),
    /// Segment one image into superpixels and write the graph as JSON.
    Segment(SegmentArgs),
    /// Train one method on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one partition of a dataset.
    Eval(EvalArgs),
    /// Predict a depth map (PFM) for one image.
    Predict(PredictArgs),
    /// Back-project predicted (or given) depth to a PLY point cloud.
    Reconstruct(ReconArgs),
    /// Run the numerical and photometric self-checks.
    Verify(VerifyArgs),
    /// Generate data, train both methods, evaluate all three, reconstruct.
    EndToEnd(EndToEndArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Resolution as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_res)]
    res: Option<(usize, usize)>,
    #[arg(long)]
    fov_min: Option<f64>,
    #[arg(long)]
    fov_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Intensity image (PNG or PGM).
    #[arg(long = "in")]
    input: PathBuf,
    /// Optional true depth (PFM) to attach per-node ground truth.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Target superpixel count.
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "crf")]
    mode: Mode,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the checkpoint and training report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// train, val or test.
    #[arg(long, value_parser = parse_partition)]
    split: Option<Partition>,
    /// superpixel or pixel.
    #[arg(long)]
    mode: Option<EvalMode>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Output depth map (PFM, mm, sentinel -1).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconArgs {
    /// Checkpoint used to predict depth from `--image`.
    #[arg(long, requires = "image", conflicts_with = "depth")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
    /// True (or any) distance-depth PFM, used instead of a prediction.
    #[arg(long, required_unless_present = "ckpt")]
    depth: Option<PathBuf>,
    /// Camera pose JSON: {position, forward, up, fov_deg}.
    #[arg(long)]
    pose: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct EndToEndArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_res(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(w)?, p(h)?))
}

fn parse_partition(s: &str) -> std::result::Result<Partition, String> {
    match s {
        "train" => Ok(Partition::Train),
        "val" => Ok(Partition::Val),
        "test" => Ok(Partition::Test),
        _ => Err(format!("expected train, val or test, got {s:?}")),
    }
}

const EXIT_VERIFY_FAILED: u8 = 1;

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 3,
        ErrorClass::Data => 4,
        ErrorClass::Numeric => 5,
        ErrorClass::Io => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn executor(threads: Option<usize>) -> Result<Exec> {
    match threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            par::init_threads(n);
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::default()),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<u8> {
    let exec = executor(cli.threads)?;
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => {
            let r = &mut cfg.render;
            if let Some(c) = a.count {
                r.count = c;
            }
            if let Some(s) = a.seed {
                r.seed = s;
            }
            if let Some((w, h)) = a.res {
                r.camera.width = w;
                r.camera.height = h;
            }
            if let Some(v) = a.fov_min {
                r.camera.fov_min_deg = v;
            }
            if let Some(v) = a.fov_max {
                r.camera.fov_max_deg = v;
            }
            let m = generate_dataset(r, &a.out, exec)?;
            println!("wrote {} frame pairs to {}", m.entries.len(), a.out.display());
        }
        Command::Segment(a) => {
            if let Some(g) = a.g {
                cfg.superpixel.slic.g_target = g;
            }
            cfg.superpixel.validate()?;
            let img = read_intensity(&a.input)?;
            let depth = match &a.depth {
                Some(p) => {
                    let (w, h, d) = read_pfm(p)?;
                    if (w, h) != (img.width, img.height) {
                        return Err(Error::Pairing {
                            image: a.input.clone(),
                            depth: p.clone(),
                            image_dims: (img.width, img.height),
                            depth_dims: (w, h),
                        });
                    }
                    Some(d)
                }
                None => None,
            };
            let graph = segment(img.width, img.height, &img.data, depth.as_deref(), &cfg.superpixel)?;
            write_json(&a.out, &GraphFile::from(&graph))?;
            println!("{} superpixels, {} edges -> {}", graph.g(), graph.edges.len(), a.out.display());
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            let manifest = Manifest::load(&a.data)?;
            let samples = load_samples(&manifest, &cfg.superpixel, exec)?;
            let split = Split::contiguous(samples.len(), cfg.train.split)?;
            let (ckpt, report) = train_to_dir(a.mode, &samples, &split, &cfg, &a.out, exec)?;
            println!(
                "{}: best epoch {:?}, val log10 {:?}, beta {:?} -> {}",
                a.mode.label(),
                report.best_epoch,
                report.best_val_log10,
                ckpt.beta,
                a.out.display()
            );
        }
        Command::Eval(a) => {
            let ckpt = Checkpoint::load(&a.ckpt)?;
            let manifest = Manifest::load(&a.data)?;
            let samples = load_samples(&manifest, &cfg.superpixel, exec)?;
            let split = Split::contiguous(samples.len(), ckpt.config.split)?;
            let part: Vec<_> = split.get(a.split.unwrap_or(cfg.eval.split)).iter().map(|&i| &samples[i]).collect();
            let (report, row) = eval::evaluate_checkpoint(&ckpt, &part, a.mode.unwrap_or(cfg.eval.mode), exec)?;
            if let Some(out) = &a.out {
                write_json(out, &report)?;
            }
            print!("{}", format_table(&[row]));
        }
        Command::Predict(a) => {
            let predictor = Predictor::from_checkpoint(&Checkpoint::load(&a.ckpt)?)?;
            let img = read_intensity(&a.image)?;
            let graph = segment(img.width, img.height, &img.data, None, &cfg.superpixel)?;
            let nodes = predictor.predict(&img.data, &graph)?;
            write_pfm(&a.out, img.width, img.height, &eval::broadcast(&graph, &nodes))?;
            println!("{} superpixels -> {}", graph.g(), a.out.display());
        }
        Command::Reconstruct(a) => {
            let pose: ManifestPose = read_json(&a.pose)?;
            let (w, h, depth, scalars) = match (&a.ckpt, &a.image, &a.depth) {
                (Some(ck), Some(image), _) => {
                    let predictor = Predictor::from_checkpoint(&Checkpoint::load(ck)?)?;
                    let img = read_intensity(image)?;
                    let graph = segment(img.width, img.height, &img.data, None, &cfg.superpixel)?;
                    let nodes = predictor.predict(&img.data, &graph)?;
                    (img.width, img.height, eval::broadcast(&graph, &nodes), Some(img.data))
                }
                (_, _, Some(d)) => {
                    let (w, h, depth) = read_pfm(d)?;
                    (w, h, depth, None)
                }
                _ => return Err(Error::Config("reconstruct needs --ckpt with --image, or --depth".into())),
            };
            let cloud = backproject(&depth, &pose.with_resolution(w, h)?, scalars.as_deref(), exec)?;
            export_cloud(&cloud, &a.out)?;
            println!("{} points -> {}", cloud.len(), a.out.display());
        }
        Command::Verify(a) => {
            let results = verify::run_all(a.seed);
            for r in &results {
                println!(
                    "{} {:<52} worst {:.3e} (tol {:.0e}) {:.2}s",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.worst,
                    r.tolerance,
                    r.seconds
                );
            }
            if let Some(p) = &a.json {
                write_json(p, &results)?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                println!("{failed} of {} suites failed", results.len());
                return Ok(EXIT_VERIFY_FAILED);
            }
            println!("all {} suites passed", results.len());
        }
        Command::EndToEnd(a) => {
            if let Some(s) = a.seed {
                cfg.seed = Some(s);
            }
            if let Some(c) = a.count {
                cfg.render.count = c;
            }
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            let cfg = cfg.resolved();
            let report = end_to_end(&cfg, &a.out, exec)?;
            print!("{}", report.table);
        }
    }
    Ok(0)
}
