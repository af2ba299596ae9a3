use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use roomopt::energy::{EnergyModel, TermWeights};
use roomopt::eval::{self, DetectionResult, SceneDetections};
use roomopt::io::{self, GroundTruthObject, SceneDocument, Strictness};
use roomopt::optimizer::{self, GroupScales, OptimConfig, ResolvePolicy};
use roomopt::relations::{corrupt_relations, extract_relations, DEFAULT_CONTACT_TOLERANCE};
use roomopt::synth::{self, GenConfig, NoiseSpec};

#[derive(Parser)]
#[command(name = "roomopt", version, about = "Refine indoor object layouts by relation-driven optimization")]
struct Cli {
    /// Keep unknown keys in scene files instead of rejecting them.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth scenes.
    Generate(GenerateArgs),
    /// Add pose noise to a scene.
    Perturb(PerturbArgs),
    /// Derive relation labels from the current geometry.
    ExtractRelations(ExtractArgs),
    /// Minimize the scene energy.
    Optimize(OptimizeArgs),
    /// Score scenes against their ground truth.
    Evaluate(EvaluateArgs),
    /// Write trajectory snapshots as scene files and SVG drawings.
    ExportFrames(ExportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator config (JSON); defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file, or directory when `--count` is above 1.
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Center noise standard deviation in meters.
    #[arg(long, default_value_t = 0.3)]
    sigma_center: f64,
    /// Yaw noise standard deviation in radians.
    #[arg(long, default_value_t = 15f64.to_radians())]
    sigma_yaw: f64,
    /// Log-size noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    sigma_size: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the input detections instead of re-deriving them from the noisy boxes.
    #[arg(long)]
    keep_gt_detections: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONTACT_TOLERANCE)]
    tolerance: f64,
    /// Flip each boolean label with this probability.
    #[arg(long, default_value_t = 0.0)]
    flip_prob: f64,
    /// Shift rotation bins by up to this many bins.
    #[arg(long, default_value_t = 0)]
    angle_noise_bins: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Final,
    BestEnergy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalesArg {
    Unit,
    Metric,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scene file or directory of scene files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file, or directory for directory input.
    #[arg(long)]
    out: PathBuf,
    /// Preset name (paper-igibson, paper-structured3d) or weights file.
    #[arg(long, default_value = roomopt::energy::PRESET_IGIBSON)]
    weights: String,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Final)]
    policy: PolicyArg,
    /// Per-group step scales.
    #[arg(long, value_enum, default_value_t = ScalesArg::Unit)]
    scales: ScalesArg,
    /// Record every n-th step in the trajectory.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Trajectory file, or directory for directory input.
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
    /// Extract relations from the input geometry when the file has none.
    #[arg(long)]
    extract: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Map,
    Collisions,
    SphereIou,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Scene file or directory of scene files.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    metric: Metric,
    #[arg(long, default_value_t = eval::DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    #[arg(long, default_value_t = eval::DEFAULT_COLLISION_TOLERANCE)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    /// Scene the trajectory was produced from.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Invalid flag values; reported with the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(Usage(msg.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mode = if cli.lenient { Strictness::Lenient } else { Strictness::Strict };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Perturb(a) => perturb(a, mode),
        Command::ExtractRelations(a) => extract(a, mode),
        Command::Optimize(a) => optimize(a, mode),
        Command::Evaluate(a) => evaluate(a, mode),
        Command::ExportFrames(a) => export_frames(a, mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<roomopt::Error>().is_some_and(|r| r.is_numerical()));
            let code = if e.chain().any(|c| c.is::<Usage>()) {
                1
            } else if numerical {
                3
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn fan_out<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> anyhow::Result<R> + Sync) -> anyhow::Result<Vec<R>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                results.lock().expect("worker panicked")[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn scene_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .json scene files in {}", dir.display());
    }
    Ok(files)
}

fn load(path: &Path, mode: Strictness) -> anyhow::Result<SceneDocument> {
    io::load_scene(path, mode).with_context(|| format!("loading {}", path.display()))
}

fn save(doc: &SceneDocument, path: &Path) -> anyhow::Result<()> {
    io::save_scene(doc, path).with_context(|| format!("writing {}", path.display()))
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let base = match &a.config {
        Some(p) => io::load_gen_config(p).with_context(|| format!("loading {}", p.display()))?,
        None => GenConfig::default(),
    };
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let seeds: Vec<u64> = (0..a.count).map(|k| a.seed + k).collect();
    if a.count > 1 {
        std::fs::create_dir_all(&a.out)?;
    }
    fan_out(&seeds, a.jobs, |&seed| {
        let g = synth::generate_scene(&GenConfig { seed, ..base.clone() })?;
        let doc = SceneDocument::new(g.scene.clone())
            .with_relations(Some(g.relations))
            .with_ground_truth(Some(GroundTruthObject::from_scene(&g.scene)));
        let path = if a.count > 1 { a.out.join(format!("scene_{seed:06}.json")) } else { a.out.clone() };
        save(&doc, &path)
    })?;
    Ok(())
}

fn perturb(a: PerturbArgs, mode: Strictness) -> anyhow::Result<()> {
    let doc = load(&a.input, mode)?;
    let noise = NoiseSpec {
        sigma_center: a.sigma_center,
        sigma_yaw: a.sigma_yaw,
        sigma_size: a.sigma_size,
    };
    noise.validate().map_err(usage)?;
    let scene = synth::perturb_scene(&doc.scene, &noise, a.seed, a.keep_gt_detections)?;
    let gt = doc.ground_truth.clone().or_else(|| Some(GroundTruthObject::from_scene(&doc.scene)));
    let out = SceneDocument { scene, ground_truth: gt, ..doc };
    save(&out, &a.out)
}

fn extract(a: ExtractArgs, mode: Strictness) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.flip_prob) {
        return Err(usage(format!("--flip-prob {} outside [0, 1]", a.flip_prob)));
    }
    let doc = load(&a.input, mode)?;
    let mut relations = extract_relations(&doc.scene, a.tolerance);
    if a.flip_prob > 0.0 || a.angle_noise_bins > 0 {
        relations = corrupt_relations(&relations, a.flip_prob, a.angle_noise_bins, a.seed)?;
    }
    save(&doc.with_relations(Some(relations)), &a.out)
}

fn optimize(a: OptimizeArgs, mode: Strictness) -> anyhow::Result<()> {
    let weights: TermWeights = io::load_weights(&a.weights)?;
    let model = EnergyModel::new(weights);
    let config = OptimConfig {
        learning_rate: a.lr,
        steps: a.steps,
        momentum: a.momentum,
        scales: match a.scales {
            ScalesArg::Unit => GroupScales::default(),
            ScalesArg::Metric => GroupScales::metric(),
        },
        trajectory_stride: a.stride,
        policy: match a.policy {
            PolicyArg::Final => ResolvePolicy::Final,
            PolicyArg::BestEnergy => ResolvePolicy::BestEnergy,
        },
        plateau: None,
    };
    config.validate().map_err(usage)?;

    let run = |input: &Path, out: &Path, traj_out: Option<&Path>| -> anyhow::Result<()> {
        let doc = load(input, mode)?;
        let relations = match (&doc.relations, a.extract) {
            (Some(r), _) => r.clone(),
            (None, true) => extract_relations(&doc.scene, DEFAULT_CONTACT_TOLERANCE),
            (None, false) => {
                return Err(anyhow!(roomopt::Error::Relations(
                    "scene file has no relations; pass --extract to derive them".into()
                )))
                .with_context(|| format!("optimizing {}", input.display()))
            }
        };
        let (scene, traj) = optimizer::optimize(&doc.scene, &relations, &model, &config)
            .with_context(|| format!("optimizing {}", input.display()))?;
        if let Some(t) = traj_out {
            io::save_trajectory(&traj, t).with_context(|| format!("writing {}", t.display()))?;
        }
        save(&SceneDocument { scene, relations: Some(relations), ..doc }, out)
    };

    if a.input.is_dir() {
        let files = scene_files(&a.input)?;
        std::fs::create_dir_all(&a.out)?;
        if let Some(t) = &a.trajectory_out {
            std::fs::create_dir_all(t)?;
        }
        fan_out(&files, a.jobs, |f| {
            let name = f.file_name().expect("file name");
            let traj = a.trajectory_out.as_ref().map(|t| t.join(name));
            run(f, &a.out.join(name), traj.as_deref())
        })?;
        Ok(())
    } else {
        run(&a.input, &a.out, a.trajectory_out.as_deref())
    }
}

fn evaluate(a: EvaluateArgs, mode: Strictness) -> anyhow::Result<()> {
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let files = if a.input.is_dir() { scene_files(&a.input)? } else { vec![a.input.clone()] };
    let docs = files.iter().map(|f| load(f, mode)).collect::<anyhow::Result<Vec<_>>>()?;
    let ground_truth = |d: &SceneDocument, f: &Path| -> anyhow::Result<roomopt::scene::Scene> {
        d.ground_truth_scene()?
            .ok_or_else(|| anyhow!(roomopt::Error::Schema {
                field: "ground_truth".into(),
                message: "missing; metric needs a ground-truth block".into(),
            }))
            .with_context(|| format!("evaluating {}", f.display()))
    };
    let report = match a.metric {
        Metric::Collisions => {
            let scenes: Vec<_> = docs.iter().map(|d| d.scene.clone()).collect();
            io::to_canonical_json(&eval::collision_stats(&scenes, a.tolerance))?
        }
        Metric::Map => {
            let mut results = DetectionResult::default();
            for (d, f) in docs.iter().zip(&files) {
                results.scenes.push(SceneDetections::from_scenes(&d.scene, &ground_truth(d, f)?));
            }
            results.validate()?;
            io::to_canonical_json(&eval::mean_average_precision(&results, a.iou_threshold))?
        }
        Metric::SphereIou => {
            let mut reports = Vec::new();
            for (d, f) in docs.iter().zip(&files) {
                reports.push(eval::semantic_sphere_iou(&d.scene, &ground_truth(d, f)?, a.samples)?);
            }
            let mean = reports.iter().map(|r| r.mean).sum::<f64>() / reports.len() as f64;
            io::to_canonical_json(&serde_json::json!({ "mean": mean, "scenes": reports }))?
        }
    };
    match &a.out {
        Some(p) => std::fs::write(p, report).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{report}"),
    }
    Ok(())
}

fn export_frames(a: ExportArgs, mode: Strictness) -> anyhow::Result<()> {
    let doc = load(&a.scene, mode)?;
    let traj = io::load_trajectory(&a.trajectory).with_context(|| format!("loading {}", a.trajectory.display()))?;
    traj.validate(doc.scene.objects().len())?;
    if a.stride == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let gt: Option<Vec<_>> = doc.ground_truth.as_ref().map(|g| g.iter().map(|o| o.bbox).collect());
    let frames = traj.strided(a.stride);
    for snap in &frames {
        let scene = doc.scene.with_poses(&snap.poses);
        let stem = format!("frame_{:05}", snap.step);
        let svg = io::render_top_down(&scene, doc.relations.as_ref(), gt.as_deref());
        std::fs::write(a.out_dir.join(format!("{stem}.svg")), svg)?;
        save(&SceneDocument { scene, ..doc.clone() }, &a.out_dir.join(format!("{stem}.json")))?;
    }
    eprintln!("wrote {} frames to {}", frames.len(), a.out_dir.display());
    Ok(())
}
