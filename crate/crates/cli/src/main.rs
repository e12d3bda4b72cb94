use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use pellet_core::analysis::{analyze_instances, classify_instance, instance_masks, size_report, PelletClass};
use pellet_core::config::{PipelineConfig, Provenance};
use pellet_core::dataset::{
    image_stats, luminance_stats, normalize_luminance_counted, split_dataset, synth_scene, ImageStats,
    LuminanceStats, SynthObject, SynthParams,
};
use pellet_core::geometry::RayFan;
use pellet_core::io;
use pellet_core::metrics::{match_instances, pixel_metrics, MatchConfig};
use pellet_core::postproc::{postprocess, PredictionMaps};
use pellet_core::report::{self, ReportBundle};
use pellet_core::targets::{expand_labels, one_hot_type_scores, target_maps};
use pellet_core::{ClassMap, Grid, LabelMap};

#[derive(Parser)]
#[command(name = "pellet", version, about = "Pellet instance segmentation toolkit")]
struct Cli {
    /// Flat key=value configuration file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled scene.
    Synth(SynthArgs),
    /// Derive ideal prediction maps from a labeled scene.
    GenTargets(GenTargetsArgs),
    /// Turn prediction maps into an instance map.
    Postprocess(PostprocessArgs),
    /// Classify and size every instance.
    Measure(MeasureArgs),
    /// Compare predicted and ground-truth maps.
    Evaluate(EvaluateArgs),
    /// Stratified train/test split of a set of images.
    Split(SplitArgs),
    /// Match the CIELAB lightness of an image to reference statistics.
    Normalize(NormalizeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 12)]
    n_objects: usize,
    #[arg(long, default_value_t = 10.0)]
    radius_min: f64,
    #[arg(long, default_value_t = 20.0)]
    radius_max: f64,
    #[arg(long, default_value_t = 3.0)]
    min_gap: f64,
    /// Probabilities of nice,ugly,big,joint.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.55, 0.2, 0.1, 0.15])]
    class_mix: Vec<f64>,
}

#[derive(Args)]
struct GenTargetsArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Class map; without it every instance is Nice.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Output maps directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_rays: Option<usize>,
    /// Grow labels by expansion_radius_px before deriving targets.
    #[arg(long)]
    expand_labels: bool,
    #[arg(long)]
    expansion_radius_px: Option<f64>,
}

#[derive(Args)]
struct PostprocessArgs {
    /// Prediction maps directory.
    #[arg(long)]
    maps: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_rays: Option<usize>,
    #[arg(long)]
    prob_threshold: Option<f64>,
    #[arg(long)]
    nms_iou_threshold: Option<f64>,
    #[arg(long)]
    candidate_stride: Option<usize>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Prediction maps supplying type scores.
    #[arg(long, conflicts_with = "classes")]
    maps: Option<PathBuf>,
    /// Class map supplying types.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    mm_per_px: Option<f64>,
    /// Comma-separated histogram edges in mm.
    #[arg(long)]
    bin_edges_mm: Option<String>,
    /// Comma-separated class names to histogram.
    #[arg(long)]
    measured_classes: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred_classes: Option<PathBuf>,
    #[arg(long)]
    gt_classes: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Per-image statistics CSV.
    #[arg(long, conflicts_with = "scenes")]
    stats: Option<PathBuf>,
    /// Scene directories holding classes.png and image.png.
    #[arg(long, num_args = 1..)]
    scenes: Vec<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Manifest output path.
    #[arg(long)]
    out: PathBuf,
    /// Write the computed statistics CSV here.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Write the JSON split report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Take reference statistics from this image.
    #[arg(long, conflicts_with_all = ["ref_mean", "ref_std"])]
    reference: Option<PathBuf>,
    #[arg(long, requires = "ref_std")]
    ref_mean: Option<f64>,
    #[arg(long, requires = "ref_mean")]
    ref_std: Option<f64>,
}

enum Failure {
    Usage(String),
    Data(pellet_core::Error),
}

impl From<pellet_core::Error> for Failure {
    fn from(e: pellet_core::Error) -> Self {
        Failure::Data(e)
    }
}

type Run<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprint!("{}", e.render());
            }
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Run {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::GenTargets(a) => gen_targets(cfg, a),
        Command::Postprocess(a) => postprocess_cmd(cfg, a),
        Command::Measure(a) => measure(cfg, a),
        Command::Evaluate(a) => evaluate(cfg, a),
        Command::Split(a) => split(cfg, a),
        Command::Normalize(a) => normalize(cfg, a),
    }
}

fn finish(cfg: PipelineConfig) -> Run<PipelineConfig> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn set(cfg: &mut PipelineConfig, key: &str, value: Option<impl ToString>) -> Run {
    if let Some(v) = value {
        cfg.set(key, &v.to_string()).map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn require_seed(cfg: &mut PipelineConfig, seed: Option<u64>) -> Run<u64> {
    if let Some(s) = seed {
        cfg.seed = Some(s);
    }
    cfg.seed.ok_or_else(|| usage("this command is randomized and requires --seed"))
}

fn print_effective(cfg: &PipelineConfig, extra: &[(&str, String)]) {
    eprintln!("# effective config {}", cfg.hash());
    eprint!("{}", cfg.to_kv_string());
    for (k, v) in extra {
        eprintln!("{k}={v}");
    }
}

fn create_dir(dir: &Path) -> Run {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(pellet_core::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

fn write_text(path: &Path, text: &str) -> Run {
    io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn parse_mix(v: &[f64]) -> Run<[f64; 4]> {
    v.try_into().map_err(|_| usage("--class-mix takes exactly four values"))
}

#[derive(Serialize)]
struct SceneFile<'a> {
    provenance: Provenance,
    seed: u64,
    params: &'a SynthParams,
    incomplete: bool,
    objects: &'a [SynthObject],
}

fn synth(mut cfg: PipelineConfig, a: SynthArgs) -> Run {
    let seed = require_seed(&mut cfg, a.seed)?;
    let cfg = finish(cfg)?;
    let params = SynthParams {
        height: a.height,
        width: a.width,
        n_objects: a.n_objects,
        class_mix: parse_mix(&a.class_mix)?,
        radius_range: (a.radius_min, a.radius_max),
        min_gap: a.min_gap,
    };
    print_effective(
        &cfg,
        &[
            ("synth.height", params.height.to_string()),
            ("synth.width", params.width.to_string()),
            ("synth.n_objects", params.n_objects.to_string()),
            ("synth.radius_range", format!("{},{}", a.radius_min, a.radius_max)),
            ("synth.min_gap", params.min_gap.to_string()),
            (
                "synth.class_mix",
                a.class_mix.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            ),
        ],
    );
    let scene = synth_scene(seed, &params).map_err(|e| usage(e.to_string()))?;
    create_dir(&a.out)?;
    io::write_label_map(&scene.labels, a.out.join("labels.png"))?;
    io::write_class_map(&scene.classes, a.out.join("classes.png"))?;
    io::write_rgb(&scene.image, a.out.join("image.png"))?;
    let file = SceneFile {
        provenance: Provenance::new(&cfg, Vec::<PathBuf>::new()),
        seed,
        params: &params,
        incomplete: scene.incomplete,
        objects: &scene.objects,
    };
    write_text(&a.out.join("scene.json"), &to_json(&file))?;
    if scene.incomplete {
        eprintln!(
            "warning: placed {} of {} objects",
            scene.objects.len(),
            params.n_objects
        );
    }
    Ok(())
}

/// Majority class of each instance; ties go to the lower class id.
fn instance_classes(labels: &LabelMap, classes: &ClassMap) -> BTreeMap<u32, u8> {
    let mut votes: BTreeMap<u32, [u64; 256]> = BTreeMap::new();
    for (&id, &c) in labels.as_slice().iter().zip(classes.as_slice()) {
        if id != 0 {
            votes.entry(id).or_insert([0; 256])[c as usize] += 1;
        }
    }
    votes
        .into_iter()
        .map(|(id, v)| {
            let best = (0..256).rev().max_by_key(|&k| v[k]).unwrap_or(0);
            (id, best as u8)
        })
        .collect()
}

fn gen_targets(mut cfg: PipelineConfig, a: GenTargetsArgs) -> Run {
    set(&mut cfg, "n_rays", a.n_rays)?;
    set(&mut cfg, "expansion_radius_px", a.expansion_radius_px)?;
    let cfg = finish(cfg)?;
    let mut labels = io::read_label_map(&a.labels)?;
    let mut classes = match &a.classes {
        Some(p) => {
            let c = io::read_class_map(p)?;
            labels.check_same_shape(&c)?;
            c
        }
        None => labels.map(|&id| if id == 0 { 0 } else { PelletClass::Nice.id() }),
    };
    if a.expand_labels {
        let per_instance = instance_classes(&labels, &classes);
        labels = expand_labels(&labels, cfg.expansion_radius_px)?;
        classes = labels.map(|id| if *id == 0 { 0 } else { per_instance[id] });
    }
    let fan = RayFan::new(cfg.n_rays)?;
    let maps = target_maps(&labels, &classes, &fan)?;
    create_dir(&a.out)?;
    io::write_maps(&maps, &a.out)?;
    if a.expand_labels {
        io::write_label_map(&labels, a.out.join("labels_expanded.png"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InstanceEntry {
    id: u32,
    score: f64,
    class: PelletClass,
    area_px: usize,
}

#[derive(Serialize)]
struct InstancesFile {
    provenance: Provenance,
    instances: Vec<InstanceEntry>,
}

fn postprocess_cmd(mut cfg: PipelineConfig, a: PostprocessArgs) -> Run {
    set(&mut cfg, "n_rays", a.n_rays)?;
    set(&mut cfg, "prob_threshold", a.prob_threshold)?;
    set(&mut cfg, "nms_iou_threshold", a.nms_iou_threshold)?;
    set(&mut cfg, "candidate_stride", a.candidate_stride)?;
    let cfg = finish(cfg)?;
    let maps = io::read_maps(&a.maps, Some(cfg.n_rays))?;
    let fan = RayFan::new(cfg.n_rays)?;
    let inst = postprocess(
        &maps,
        &fan,
        cfg.prob_threshold,
        cfg.nms_iou_threshold,
        cfg.candidate_stride,
    )?;
    let scores = class_scores(&maps)?;
    let masks = instance_masks(&inst.labels);
    let mut class_of = BTreeMap::new();
    let mut entries = Vec::new();
    for rec in &inst.records {
        // Fully overdrawn polygons leave no pixels and are dropped.
        let Some(mask) = masks.get(&rec.id) else { continue };
        let class = classify_instance(mask, &scores)?;
        class_of.insert(rec.id, class.id());
        entries.push(InstanceEntry {
            id: rec.id,
            score: rec.score,
            class,
            area_px: mask.count(),
        });
    }
    let classes: ClassMap = inst.labels.map(|id| if *id == 0 { 0 } else { class_of[id] });
    create_dir(&a.out)?;
    io::write_label_map(&inst.labels, a.out.join("instances.png"))?;
    io::write_class_map(&classes, a.out.join("classes.png"))?;
    let file = InstancesFile {
        provenance: Provenance::new(&cfg, [&a.maps]),
        instances: entries,
    };
    write_text(&a.out.join("instances.json"), &to_json(&file))?;
    Ok(())
}

/// Type scores padded or checked to the full class count.
fn class_scores(maps: &PredictionMaps) -> Run<Grid<f32>> {
    if maps.n_classes() != PelletClass::COUNT {
        return Err(Failure::Data(pellet_core::Error::Shape {
            expected: format!("{} type channels", PelletClass::COUNT),
            found: format!("{} type channels", maps.n_classes()),
        }));
    }
    Ok(maps.type_scores.clone())
}

fn measure(mut cfg: PipelineConfig, a: MeasureArgs) -> Run {
    set(&mut cfg, "mm_per_px", a.mm_per_px)?;
    set(&mut cfg, "bin_edges_mm", a.bin_edges_mm.as_deref())?;
    set(&mut cfg, "measured_classes", a.measured_classes.as_deref())?;
    let cfg = finish(cfg)?;
    let mm_per_px = cfg
        .mm_per_px
        .ok_or_else(|| usage("measuring requires --mm-per-px (or mm_per_px in the config)"))?;
    let labels = io::read_label_map(&a.labels)?;
    let mut inputs = vec![a.labels.clone()];
    let scores = match (&a.maps, &a.classes) {
        (Some(dir), _) => {
            inputs.push(dir.clone());
            class_scores(&io::read_maps(dir, None)?)?
        }
        (None, Some(p)) => {
            inputs.push(p.clone());
            one_hot_type_scores(&io::read_class_map(p)?, PelletClass::COUNT)?
        }
        (None, None) => {
            let classes = labels.map(|&id| if id == 0 { 0 } else { PelletClass::Nice.id() });
            one_hot_type_scores(&classes, PelletClass::COUNT)?
        }
    };
    let instances = analyze_instances(&labels, &scores, mm_per_px)?;
    let sizes = size_report(&instances, &cfg.bin_edges_mm, &cfg.measured_classes)?;
    let mut bundle = ReportBundle::new(Provenance::new(&cfg, &inputs));
    bundle.sizes = Some(sizes);
    let mut csv = String::from("id,class,contour_points,center_row,center_col,diameter_px,diameter_mm\n");
    for inst in &instances {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            inst.id,
            inst.class.name(),
            inst.contour.len(),
            opt(inst.circle.map(|c| c.center.0)),
            opt(inst.circle.map(|c| c.center.1)),
            opt(inst.diameter_px),
            opt(inst.diameter_mm),
        ));
    }
    create_dir(&a.out)?;
    write_text(&a.out.join("sizes.json"), &bundle.to_json())?;
    write_text(
        &a.out.join("histogram.csv"),
        &report::size_report_csv(bundle.sizes.as_ref().expect("set above")),
    )?;
    write_text(&a.out.join("instances.csv"), &csv)?;
    Ok(())
}

fn evaluate(mut cfg: PipelineConfig, a: EvaluateArgs) -> Run {
    set(&mut cfg, "match_tau", a.tau)?;
    let cfg = finish(cfg)?;
    let pred = io::read_label_map(&a.pred)?;
    let gt = io::read_label_map(&a.gt)?;
    let mut inputs = vec![a.pred.clone(), a.gt.clone()];
    let matching = match_instances(&pred, &gt, MatchConfig::new(cfg.match_tau)?)?;
    // Without class maps, pixel metrics fall back to foreground vs background.
    let as_classes = |path: &Option<PathBuf>, labels: &LabelMap, inputs: &mut Vec<PathBuf>| -> Run<ClassMap> {
        match path {
            Some(p) => {
                inputs.push(p.clone());
                Ok(io::read_class_map(p)?)
            }
            None => Ok(labels.map(|&id| u8::from(id != 0))),
        }
    };
    let pred_c = as_classes(&a.pred_classes, &pred, &mut inputs)?;
    let gt_c = as_classes(&a.gt_classes, &gt, &mut inputs)?;
    let mut bundle = ReportBundle::new(Provenance::new(&cfg, &inputs));
    bundle.matching = Some(matching);
    bundle.pixel = Some(pixel_metrics(&pred_c, &gt_c)?);
    let json = bundle.to_json();
    if let Some(out) = &a.out {
        write_text(out, &json)?;
    }
    print!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct SplitFile<'a> {
    provenance: Provenance,
    seed: u64,
    split: &'a pellet_core::dataset::SplitAssignment,
}

fn scene_stats(dir: &Path) -> Run<ImageStats> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| usage(format!("{} has no directory name", dir.display())))?;
    let classes = io::read_class_map(dir.join("classes.png"))?;
    let image = io::read_rgb(dir.join("image.png"))?;
    Ok(image_stats(id, &classes, &image)?)
}

fn split(mut cfg: PipelineConfig, a: SplitArgs) -> Run {
    let seed = require_seed(&mut cfg, a.seed)?;
    set(&mut cfg, "test_fraction", a.test_fraction)?;
    set(&mut cfg, "restarts", a.restarts)?;
    let cfg = finish(cfg)?;
    print_effective(&cfg, &[]);
    let (stats, inputs) = match &a.stats {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Data(pellet_core::Error::Io {
                    path: path.clone(),
                    source: e,
                })
            })?;
            (report::stats_from_csv(&text, path)?, vec![path.clone()])
        }
        None if a.scenes.is_empty() => return Err(usage("split needs --stats or --scenes")),
        None => {
            let stats = collect_scene_stats(&a.scenes)?;
            (stats, a.scenes.clone())
        }
    };
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = stats.iter().find(|s| !seen.insert(s.id.clone())) {
        return Err(Failure::Data(pellet_core::Error::InvalidParameter(format!(
            "duplicate image id {:?}",
            dup.id
        ))));
    }
    let assignment = split_dataset(&stats, cfg.test_fraction, cfg.restarts, seed)?;
    if let Some(p) = &a.stats_out {
        write_text(p, &report::stats_to_csv(&stats))?;
    }
    write_text(&a.out, &report::split_manifest(&stats, &assignment))?;
    if let Some(p) = &a.report {
        let file = SplitFile {
            provenance: Provenance::new(&cfg, &inputs),
            seed,
            split: &assignment,
        };
        write_text(p, &to_json(&file))?;
    }
    Ok(())
}

fn collect_scene_stats(dirs: &[PathBuf]) -> Run<Vec<ImageStats>> {
    use rayon::prelude::*;
    dirs.par_iter().map(|d| scene_stats(d)).collect()
}

fn normalize(cfg: PipelineConfig, a: NormalizeArgs) -> Run {
    let _ = finish(cfg)?;
    let reference = match (&a.reference, a.ref_mean, a.ref_std) {
        (Some(p), _, _) => luminance_stats(&io::read_rgb(p)?)?,
        (None, Some(m), Some(s)) => LuminanceStats::new(m, s).map_err(|e| usage(e.to_string()))?,
        _ => return Err(usage("normalize needs --reference or both --ref-mean and --ref-std")),
    };
    let image = io::read_rgb(&a.input)?;
    let out = normalize_luminance_counted(&image, &reference)?;
    io::write_rgb(&out.image, &a.out)?;
    if out.clipped_channels > 0 || out.clipped_lightness > 0 {
        eprintln!(
            "note: clamped {} channel values and {} lightness values",
            out.clipped_channels, out.clipped_lightness
        );
    }
    Ok(())
}
