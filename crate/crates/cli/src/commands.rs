use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use deco_core::backbone::Backbone;
use deco_core::data::synth::write_dataset;
use deco_core::data::{normalize_depth, resize_color, SplitMode};
use deco_core::deco::{build_deco, DecoModel};
use deco_core::maps::Mapping;
use deco_core::pipeline::{
    self, ablation_grid, fusion_experiment, finetune_ordering_warning, prepare, pretrain_prepared,
    train_deco_phase1_prepared, train_head_prepared, AblationInputs, DepthMapping, EvalReport, InputKind, Phase,
    TrainLog,
};
use deco_core::raster::{load_depth, ColorImage};
use deco_core::Error;

use crate::run::{Context, Result, Stage};
use crate::svg;

pub const BACKBONE_CKPT: &str = "pretrain/backbone.ckpt";
pub const DECO_CKPT: &str = "deco/deco.ckpt";
const MAPPING_NAMES: [&str; 5] = ["grayscale", "colorjet", "surface_normals", "surface_normals_pp", "deco"];

#[derive(Args)]
pub struct BackboneArg {
    /// Pretrained backbone checkpoint [default: <out>/pretrain/backbone.ckpt].
    #[arg(long)]
    pub backbone: Option<PathBuf>,
}

#[derive(Args)]
pub struct MappingArgs {
    /// grayscale, colorjet, surface_normals, surface_normals_pp or deco.
    #[arg(long, short, value_parser = MAPPING_NAMES)]
    pub mapping: String,
    #[command(flatten)]
    pub backbone: BackboneArg,
    /// Colorizer checkpoint [default: <out>/deco/deco.ckpt].
    #[arg(long)]
    pub deco: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// grayscale, colorjet, surface_normals, surface_normals_pp or deco.
    #[arg(long, short, value_parser = MAPPING_NAMES)]
    pub mapping: String,
    /// Backbone with a head for the testbed [default: <out>/transfer/<mapping>/backbone.ckpt].
    #[arg(long)]
    pub backbone: Option<PathBuf>,
    #[arg(long)]
    pub deco: Option<PathBuf>,
}

#[derive(Args)]
pub struct ColorizeArgs {
    /// 16-bit depth PNGs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub deco: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory holding a recall.csv [default: <out>/transfer/deco].
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Output name under <out>/report [default: last component of --from].
    #[arg(long)]
    pub name: Option<String>,
}

enum Loaded {
    Hand(Mapping),
    Deco(Box<DecoModel>),
}

impl Loaded {
    fn get(ctx: &Context, name: &str, deco: Option<&PathBuf>, stage: &mut Stage) -> Result<Self> {
        match Mapping::parse(name) {
            Some(m) => Ok(Loaded::Hand(m)),
            None => Ok(Loaded::Deco(Box::new(ctx.deco(deco, stage)?))),
        }
    }

    fn mapping(&self) -> DepthMapping<'_> {
        match self {
            Loaded::Hand(m) => DepthMapping::Hand(*m),
            Loaded::Deco(d) => DepthMapping::Deco(d),
        }
    }
}

fn write_log(stage: &mut Stage, log: &TrainLog) -> Result<()> {
    stage.write("log.csv", log.to_csv())?;
    Ok(())
}

fn write_report(stage: &mut Stage, prefix: &str, r: &EvalReport) -> Result<()> {
    stage.write(&format!("{prefix}report.txt"), r.summary())?;
    stage.write(&format!("{prefix}recall.csv"), r.recall_csv())?;
    stage.write(&format!("{prefix}confusion.csv"), r.confusion_csv())?;
    Ok(())
}

fn save_backbone(stage: &mut Stage, name: &str, b: &Backbone) -> Result<()> {
    let path = stage.path(name);
    b.save(&path)?;
    stage.record(&path)?;
    stage.record(&deco_core::backbone::classes_path(&path))?;
    Ok(())
}

pub fn gen_data(ctx: &Context) -> Result<()> {
    if ctx.exp.synth.is_empty() {
        return Err(Error::Config("the config has no [synth.NAME] datasets".into()).into());
    }
    let mut stage = ctx.stage("gen-data", "data")?;
    for (name, cfg) in &ctx.exp.synth {
        let dir = stage.path(name);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        let m = write_dataset(cfg, &dir)?;
        stage.record(&dir.join("manifest.csv"))?;
        ctx.log(1, format!("{name}: {} samples, {} classes", m.len(), m.classes().len()));
        println!("{name}: {} samples in {}", m.len(), dir.display());
    }
    stage.finish(ctx)
}

pub fn pretrain(ctx: &Context) -> Result<()> {
    let exp = &ctx.exp;
    let mut stage = ctx.stage("pretrain", "pretrain")?;
    let rgb = ctx.dataset("rgb", exp.data.rgb.as_ref(), &mut stage)?;
    let cfg = exp.train(Phase::Pretrain);
    let m = ctx.split(&rgb, SplitMode::Sample, cfg.seed)?;
    let data = prepare(&m, InputKind::Rgb, &exp.data, &exp.maps)?;
    ctx.log(1, format!("pretraining on {} images, {} epochs", data.train.len(), cfg.epochs));
    let out = pretrain_prepared(&data, &exp.backbone, &cfg)?;
    write_log(&mut stage, &out.log)?;
    save_backbone(&mut stage, "backbone.ckpt", &out.backbone)?;
    println!("pretrain: validation accuracy {:.4}", out.val_accuracy);
    stage.finish(ctx)
}

pub fn train_deco(ctx: &Context, a: &BackboneArg) -> Result<()> {
    let exp = &ctx.exp;
    let mut stage = ctx.stage("train-deco", "deco")?;
    let mut backbone = ctx.backbone(a.backbone.as_ref(), BACKBONE_CKPT, &mut stage)?;
    backbone.freeze_trunk();
    let reference = ctx.dataset("reference", exp.data.reference.as_ref(), &mut stage)?;
    let cfg = exp.train(Phase::Phase1);
    let m = ctx.split(&reference, SplitMode::Sample, cfg.seed)?;
    let data = prepare(&m, InputKind::DepthGray, &exp.data, &exp.maps)?;
    let deco = build_deco(&exp.deco, cfg.seed)?;
    ctx.log(1, format!("phase 1 on {} depth images, {} epochs", data.train.len(), cfg.epochs));
    let out = train_deco_phase1_prepared(&deco, &mut backbone, &data, &cfg)?;
    deco.set_frozen(true);
    write_log(&mut stage, &out.log)?;
    let path = stage.path("deco.ckpt");
    deco.checkpoint().save(&path)?;
    stage.record(&path)?;
    let mut summary = format!("train_accuracy: {:.6}\n", out.train_accuracy);
    if let Some(v) = out.val_accuracy {
        writeln!(summary, "val_accuracy: {v:.6}").unwrap();
    }
    writeln!(summary, "deco: {}", deco.digest()).unwrap();
    writeln!(summary, "backbone: {}", backbone.trunk_digest()).unwrap();
    stage.write("summary.txt", &summary)?;
    println!("train-deco: train accuracy {:.4}", out.train_accuracy);
    stage.finish(ctx)
}

fn testbed_splits(ctx: &Context, stage: &mut Stage) -> Result<deco_core::data::DatasetManifest> {
    let testbed = ctx.dataset("testbed", ctx.exp.data.testbed.as_ref(), stage)?;
    ctx.split(&testbed, SplitMode::Instance, ctx.exp.train(Phase::Phase2).seed)
}

pub fn transfer(ctx: &Context, a: &MappingArgs) -> Result<()> {
    let exp = &ctx.exp;
    let mut stage = ctx.stage("transfer", format!("transfer/{}", a.mapping))?;
    let mut backbone = ctx.backbone(a.backbone.backbone.as_ref(), BACKBONE_CKPT, &mut stage)?;
    backbone.freeze_trunk();
    let loaded = Loaded::get(ctx, &a.mapping, a.deco.as_ref(), &mut stage)?;
    let m = testbed_splits(ctx, &mut stage)?;
    let out = pipeline::transfer_phase2(loaded.mapping(), &mut backbone, &m, exp)?;
    write_log(&mut stage, &out.log)?;
    write_report(&mut stage, "", &out.report)?;
    save_backbone(&mut stage, "backbone.ckpt", &backbone)?;
    println!("transfer {}: accuracy {:.4} ({}/{})", a.mapping, out.report.accuracy, out.report.correct(), out.report.total());
    stage.finish(ctx)
}

pub fn finetune(ctx: &Context, a: &MappingArgs) -> Result<()> {
    let exp = &ctx.exp;
    let mut stage = ctx.stage("finetune", format!("finetune/{}", a.mapping))?;
    let mut backbone = ctx.backbone(a.backbone.backbone.as_ref(), BACKBONE_CKPT, &mut stage)?;
    let loaded = Loaded::get(ctx, &a.mapping, a.deco.as_ref(), &mut stage)?;
    let m = testbed_splits(ctx, &mut stage)?;
    let out = pipeline::finetune(loaded.mapping(), &mut backbone, &m, exp)?;
    write_log(&mut stage, &out.log)?;
    write_report(&mut stage, "", &out.report)?;
    save_backbone(&mut stage, "backbone.ckpt", &backbone)?;
    // Compare against the frozen-feature run when one exists.
    let frozen = ctx.root.join(format!("transfer/{}/backbone.ckpt", a.mapping));
    if frozen.exists() {
        let b = ctx.backbone(Some(&frozen), "", &mut stage)?;
        let r = pipeline::evaluate(loaded.mapping(), &b, &m, exp)?;
        if let Some(w) = finetune_ordering_warning(&r, &out.report) {
            eprintln!("deco: {w}");
            stage.write("warning.txt", w + "\n")?;
        }
    }
    println!("finetune {}: accuracy {:.4} ({}/{})", a.mapping, out.report.accuracy, out.report.correct(), out.report.total());
    stage.finish(ctx)
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    let mut stage = ctx.stage("evaluate", format!("evaluate/{}", a.mapping))?;
    let default = format!("transfer/{}/backbone.ckpt", a.mapping);
    let backbone = ctx.backbone(a.backbone.as_ref(), &default, &mut stage)?;
    let loaded = Loaded::get(ctx, &a.mapping, a.deco.as_ref(), &mut stage)?;
    let m = testbed_splits(ctx, &mut stage)?;
    let r = pipeline::evaluate(loaded.mapping(), &backbone, &m, &ctx.exp)?;
    write_report(&mut stage, "", &r)?;
    println!("evaluate {}: accuracy {:.4} ({}/{})", a.mapping, r.accuracy, r.correct(), r.total());
    stage.finish(ctx)
}

pub fn ablate(ctx: &Context, a: &BackboneArg) -> Result<()> {
    let exp = &ctx.exp;
    let mut stage = ctx.stage("ablate", "ablation")?;
    let backbone = ctx.backbone(a.backbone.as_ref(), BACKBONE_CKPT, &mut stage)?;
    backbone.freeze_trunk();
    let p1 = exp.train(Phase::Phase1);
    let p2 = exp.train(Phase::Phase2);
    let reference = ctx.dataset("reference", exp.data.reference.as_ref(), &mut stage)?;
    let reference = prepare(&ctx.split(&reference, SplitMode::Sample, p1.seed)?, InputKind::DepthGray, &exp.data, &exp.maps)?;
    let testbed = testbed_splits(ctx, &mut stage)?;
    let testbed = prepare(&testbed, InputKind::DepthGray, &exp.data, &exp.maps)?;
    let snapshot = exp.to_toml();
    let inputs = AblationInputs {
        backbone: &backbone,
        deco: &exp.deco,
        reference: &reference,
        testbed: &testbed,
        phase1: &p1,
        phase2: &p2,
        snapshot: &snapshot,
    };
    ctx.log(1, format!("ablation over {:?} blocks x {:?} filters", exp.ablation.blocks, exp.ablation.filters));
    let table = ablation_grid(&inputs, &exp.ablation.blocks, &exp.ablation.filters)?;
    stage.write("table.csv", table.to_csv())?;
    let mut cells = String::from("blocks,filters,phase1_val_accuracy,test_accuracy\n");
    for c in &table.cells {
        let v = c.phase1_val_accuracy.map_or("nan".to_string(), |v| format!("{v:.6}"));
        writeln!(cells, "{},{},{v},{:.6}", c.blocks, c.filters, c.report.accuracy).unwrap();
    }
    stage.write("cells.csv", cells)?;
    println!("ablate: {} cells", table.cells.len());
    stage.finish(ctx)
}

pub fn fuse(ctx: &Context, a: &MappingArgs) -> Result<()> {
    let exp = &ctx.exp;
    let mut stage = ctx.stage("fuse", format!("fusion/{}", a.mapping))?;
    let backbone = ctx.backbone(a.backbone.backbone.as_ref(), BACKBONE_CKPT, &mut stage)?;
    let loaded = Loaded::get(ctx, &a.mapping, a.deco.as_ref(), &mut stage)?;
    let m = testbed_splits(ctx, &mut stage)?;
    let cfg = exp.train(Phase::Phase2);
    let snapshot = exp.to_toml();
    let rgb = prepare(&m, InputKind::Rgb, &exp.data, &exp.maps)?;
    let depth = loaded.mapping().prepare(&m, &exp.data, &exp.maps)?;
    let mut rgb_net = backbone.duplicate()?;
    rgb_net.freeze_trunk();
    train_head_prepared("rgb", &mut rgb_net, &rgb, &cfg, &snapshot)?;
    let mut depth_net = backbone.duplicate()?;
    depth_net.freeze_trunk();
    train_head_prepared(&a.mapping, &mut depth_net, &depth, &cfg, &snapshot)?;
    let out = fusion_experiment(&rgb_net, &rgb, &depth_net, &depth, &exp.fusion, &snapshot)?;
    let summary = format!(
        "alpha: {}\nrgb_accuracy: {:.6}\ndepth_accuracy: {:.6}\nfused_accuracy: {:.6}\n",
        out.alpha, out.rgb.accuracy, out.depth.accuracy, out.fused.accuracy
    );
    stage.write("summary.txt", &summary)?;
    write_report(&mut stage, "rgb_", &out.rgb)?;
    write_report(&mut stage, "depth_", &out.depth)?;
    write_report(&mut stage, "fused_", &out.fused)?;
    println!(
        "fuse {}: alpha {} rgb {:.4} depth {:.4} fused {:.4}",
        a.mapping, out.alpha, out.rgb.accuracy, out.depth.accuracy, out.fused.accuracy
    );
    stage.finish(ctx)
}

/// Panels side by side, each resized to `size`x`size`.
fn grid(panels: &[ColorImage], size: usize) -> ColorImage {
    let w = size * panels.len();
    let mut out = ColorImage::filled(w, size, [0, 0, 0]);
    for (i, p) in panels.iter().enumerate() {
        let r = resize_color(p, size, size);
        for y in 0..size {
            for x in 0..size {
                out.set_pixel(i * size + x, y, r.pixel(x, y));
            }
        }
    }
    out
}

pub fn colorize(ctx: &Context, a: &ColorizeArgs) -> Result<()> {
    let mut stage = ctx.stage("colorize", "colorize")?;
    let deco = ctx.deco(a.deco.as_ref(), &mut stage)?;
    let mut seen = BTreeSet::new();
    for input in &a.inputs {
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if !seen.insert(stem.clone()) {
            return Err(Error::Data(format!("two inputs share the name `{stem}`")).into());
        }
        if !input.exists() {
            return Err(Error::MissingArtifact(input.clone()).into());
        }
        stage.input(input)?;
        let depth = load_depth(input)?;
        let mut panels = Vec::with_capacity(5);
        for m in Mapping::ALL {
            panels.push((m.name(), m.apply(&depth, &ctx.exp.maps)?));
        }
        panels.push(("deco", deco.colorize_image(&normalize_depth(&depth)?)?));
        for (name, img) in &panels {
            let path = stage.path(&format!("{stem}/{name}.png"));
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            img.save_png(&path)?;
            stage.record(&path)?;
        }
        let images: Vec<ColorImage> = panels.into_iter().map(|(_, i)| i).collect();
        let path = stage.path(&format!("{stem}_grid.png"));
        grid(&images, deco.config.input_size).save_png(&path)?;
        stage.record(&path)?;
    }
    println!("colorize: {} inputs, {} images", a.inputs.len(), stage.output_count());
    stage.finish(ctx)
}

pub fn report(ctx: &Context, a: &ReportArgs) -> Result<()> {
    let from = a.from.clone().unwrap_or_else(|| ctx.root.join("transfer/deco"));
    let name = match &a.name {
        Some(n) => n.clone(),
        None => from
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Config(format!("cannot name a report for {}", from.display())))?,
    };
    let mut stage = ctx.stage("report", format!("report/{name}"))?;
    let src = from.join("recall.csv");
    if !src.exists() {
        return Err(Error::MissingArtifact(src).into());
    }
    stage.input(&src)?;
    let text = std::fs::read_to_string(&src)?;
    let mut rows = EvalReport::parse_recall_csv(&text)?;
    // Decreasing recall, undefined last; stable, so ties keep file order.
    rows.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let mut csv = String::from("class,recall\n");
    for (c, r) in &rows {
        match r {
            Some(v) => writeln!(csv, "{c},{v:.6}").unwrap(),
            None => writeln!(csv, "{c},nan").unwrap(),
        }
    }
    stage.write("recall.csv", csv)?;
    stage.write("recall.svg", svg::recall_chart(&format!("Per-class recall: {name}"), &rows))?;
    println!("report {name}: {} classes", rows.len());
    stage.finish(ctx)
}
