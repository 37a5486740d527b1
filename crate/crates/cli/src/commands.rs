use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::BufReader;
use std::path::{Component, Path, PathBuf};

use cfsim_core::metrics::{bootstrap_std, BootstrapConfig, MetricCurve, MetricKind};
use cfsim_core::nvd;
use cfsim_core::patch_drop::{
    default_levels, derive_seed, drop_patches_detailed, schedule, PatchDropSpec, RasterImage,
};
use cfsim_core::predictions::{
    build_trial_series, parse_log, series_by_model, validate_against_manifest, ParseMode, ParsedLog,
};
use cfsim_core::report::{
    compare_models, curves_from_rows, emit_curve_csv, emit_curve_svg, emit_table_csv,
    parse_curve_csv, CurvePlotSpec, ModelRegistry,
};
use cfsim_core::sweep::{plan_axis, AxisName, AxisOverrides, SceneTrial, SweepManifest};
use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use walkdir::WalkDir;

use crate::provenance;
use crate::{
    Cli, Command, CompareArgs, CurveInputs, ManifestInput, PatchDropArgs, PlanArgs, ReportArgs,
    ScoreArgs, ValidateArgs,
};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unreadable inputs: exit 2.
    Usage(String),
    /// Inputs that fail validation or processing: exit 1.
    Data(String),
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl ToString) -> Failure {
    Failure::Data(e.to_string())
}

/// What a finished subcommand read and wrote.
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Directory that receives `run.json` by default.
    anchor: PathBuf,
    /// Set when artifacts were written but the inputs failed validation.
    failed: Option<String>,
}

impl Outcome {
    fn new(inputs: Vec<PathBuf>, out: &Path) -> Self {
        let anchor = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        Outcome {
            inputs,
            outputs: vec![out.to_path_buf()],
            anchor,
            failed: None,
        }
    }
}

pub fn run(cli: &Cli) -> u8 {
    fn config<T: Serialize>(args: &T) -> Value {
        serde_json::to_value(args).expect("arguments serialize")
    }
    let (name, config, result) = match &cli.command {
        Command::Plan(a) => ("plan", config(a), plan(a)),
        Command::Validate(a) => ("validate", config(a), validate(a)),
        Command::Score(a) => ("score", config(a), score(a)),
        Command::Patchdrop(a) => ("patchdrop", config(a), patchdrop(a)),
        Command::Report(a) => ("report", config(a), report(a)),
        Command::Compare(a) => ("compare", config(a), compare(a)),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let target = cli
        .provenance
        .clone()
        .unwrap_or_else(|| outcome.anchor.join("run.json"));
    if let Err(e) = provenance::write(&target, name, &config, &outcome.inputs, &outcome.outputs) {
        eprintln!("error: cannot write {}: {e}", target.display());
        return 1;
    }
    match outcome.failed {
        Some(msg) => {
            eprintln!("error: {msg}");
            1
        }
        None => 0,
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read_input(path)?)
        .map_err(|_| data(format!("{} is not valid UTF-8", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

fn load_manifest(input: &ManifestInput) -> Result<SweepManifest, Failure> {
    let text = read_text(&input.manifest)?;
    let (manifest, warnings) = SweepManifest::from_json(&text, input.strict)
        .map_err(|e| data(format!("{}: {e}", input.manifest.display())))?;
    for w in warnings {
        eprintln!("warning: {}: {w}", input.manifest.display());
    }
    Ok(manifest)
}

fn load_log(path: &Path, lenient: bool) -> Result<ParsedLog, Failure> {
    let file =
        fs::File::open(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mode = if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let parsed = parse_log(BufReader::new(file), mode)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    for e in &parsed.errors {
        eprintln!("warning: {}: skipped {e}", path.display());
    }
    Ok(parsed)
}

fn plan(a: &PlanArgs) -> Result<Outcome, Failure> {
    let mut inputs = Vec::new();
    let trials: Vec<SceneTrial> = match &a.trials {
        Some(path) => {
            inputs.push(path.clone());
            serde_json::from_slice(&read_input(path)?)
                .map_err(|e| data(format!("{}: {e}", path.display())))?
        }
        None => nvd::trials(a.axis == AxisName::OccluderPosition),
    };
    let overrides = AxisOverrides {
        grid: a.grid.clone(),
        reference: a.reference,
        unit: a.unit.clone(),
        occluder_positions: a.occluder_positions,
    };
    let mut manifest = plan_axis(a.axis.as_str(), trials, &overrides).map_err(data)?;
    if let Some(path) = &a.constants {
        inputs.push(path.clone());
        let constants: BTreeMap<String, String> = serde_json::from_slice(&read_input(path)?)
            .map_err(|e| data(format!("{}: {e}", path.display())))?;
        manifest = manifest.with_constants(constants);
    }
    if let Some(template) = &a.frame_id_template {
        manifest = manifest
            .with_frame_id_template(template.as_str())
            .map_err(data)?;
    }
    let mut text = manifest.to_json();
    text.push('\n');
    write_output(&a.out, text.as_bytes())?;
    eprintln!(
        "planned {} trials × {} frames = {} frames",
        manifest.trials.len(),
        manifest.frames_per_trial(),
        manifest.frame_count()
    );
    Ok(Outcome::new(inputs, &a.out))
}

fn validate(a: &ValidateArgs) -> Result<Outcome, Failure> {
    let manifest = load_manifest(&a.manifest)?;
    let parsed = load_log(&a.log, a.lenient_log)?;
    let report = validate_against_manifest(&parsed.records, &manifest);
    let doc = json!({
        "records": parsed.records.len(),
        "meta_records": parsed.meta.len(),
        "skipped_lines": parsed.errors.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "fatal": report.fatal_count(),
        "issues": report.issues,
        "completeness": report.completeness,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    write_output(&a.out, text.as_bytes())?;
    for issue in &report.issues {
        let level = if issue.is_fatal() { "fatal" } else { "warning" };
        eprintln!("{level}: {issue}");
    }
    let mut outcome = Outcome::new(vec![a.manifest.manifest.clone(), a.log.clone()], &a.out);
    if report.is_fatal() {
        outcome.failed = Some(format!(
            "{} fatal issue(s) in {}",
            report.fatal_count(),
            a.log.display()
        ));
    }
    Ok(outcome)
}

fn score(a: &ScoreArgs) -> Result<Outcome, Failure> {
    let kind = MetricKind::new(a.metric, a.k, a.mode).map_err(usage)?;
    let manifest = load_manifest(&a.manifest)?;
    let parsed = load_log(&a.log, a.lenient_log)?;
    if parsed.records.is_empty() {
        return Err(data(format!(
            "{} has no prediction records",
            a.log.display()
        )));
    }
    let sets = if a.models.is_empty() {
        series_by_model(&parsed.records, &manifest)
    } else {
        a.models
            .iter()
            .map(|m| build_trial_series(&parsed.records, &manifest, m))
            .collect()
    }
    .map_err(data)?;
    let config = BootstrapConfig {
        resamples: a.resamples as usize,
        seed: a.seed,
    };
    let mut curves = Vec::new();
    for set in &sets {
        if !set.excluded.is_empty() {
            eprintln!(
                "warning: {}: {} trial(s) without a reference record excluded",
                set.model_id,
                set.excluded.len()
            );
        }
        let curve = bootstrap_std(set, &kind, config)
            .map_err(|e| data(format!("{}: {e}", set.model_id)))?;
        if let Some(d) = &curve.diagnostic {
            eprintln!("warning: {}: {d}", set.model_id);
        }
        curves.push(curve);
    }
    let mut buf = Vec::new();
    emit_curve_csv(&curves, &mut buf).map_err(data)?;
    write_output(&a.out, &buf)?;
    Ok(Outcome::new(
        vec![a.manifest.manifest.clone(), a.log.clone()],
        &a.out,
    ))
}

/// Relative path with `/` separators, used in sidecars and seed derivation.
fn portable(rel: &Path) -> String {
    rel.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn path_stream(rel: &str) -> u64 {
    let digest = provenance::sha256_hex(rel.as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

fn to_raster(img: DynamicImage) -> Result<RasterImage, Failure> {
    let (w, h) = (img.width(), img.height());
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (2, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        other if other.color().has_alpha() => (4, other.to_rgba8().into_raw()),
        other => (3, other.to_rgb8().into_raw()),
    };
    RasterImage::new(w, h, channels, bytes).map_err(data)
}

fn encode_png(img: &RasterImage) -> Result<Vec<u8>, Failure> {
    let color = match img.channels() {
        1 => ExtendedColorType::L8,
        2 => ExtendedColorType::La8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(img.data(), img.width(), img.height(), color)
        .map_err(data)?;
    Ok(buf)
}

#[derive(Serialize)]
struct DropEntry {
    source: String,
    file: String,
    level: f64,
    seed: u64,
    dropped: Vec<usize>,
}

fn patchdrop(a: &PatchDropArgs) -> Result<Outcome, Failure> {
    if !a.input.is_dir() {
        return Err(usage(format!("{} is not a directory", a.input.display())));
    }
    let levels = a.levels.clone().unwrap_or_else(default_levels);
    let specs = schedule(&levels, a.patch_size, &a.fill, a.seed).map_err(usage)?;
    let mut percents = HashSet::new();
    for l in &levels {
        if !percents.insert((l * 100.0).round() as u32) {
            return Err(usage(format!("levels collide at {}%", (l * 100.0).round())));
        }
    }

    let mut sources = Vec::new();
    for entry in WalkDir::new(&a.input).sort_by_file_name() {
        let entry = entry.map_err(usage)?;
        let is_png = entry
            .path()
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if entry.file_type().is_file() && is_png {
            let rel = entry
                .path()
                .strip_prefix(&a.input)
                .expect("walk stays under root");
            sources.push(rel.to_path_buf());
        }
    }
    if sources.is_empty() {
        return Err(data(format!("no PNG images under {}", a.input.display())));
    }

    let per_image: Vec<Vec<(PathBuf, Vec<u8>, DropEntry)>> = sources
        .par_iter()
        .map(|rel| {
            let path = a.input.join(rel);
            let bytes = read_input(&path)?;
            let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
                .map_err(|e| data(format!("{}: {e}", path.display())))?;
            let raster = to_raster(img)?;
            let source = portable(rel);
            let stream = path_stream(&source);
            let stem = rel.file_stem().expect("file has a name").to_string_lossy();
            specs
                .iter()
                .map(|level_spec| {
                    let spec = PatchDropSpec {
                        seed: derive_seed(level_spec.seed, stream),
                        ..level_spec.clone()
                    };
                    let result = drop_patches_detailed(&raster, &spec)
                        .map_err(|e| data(format!("{}: {e}", path.display())))?;
                    let name = format!(
                        "{stem}__drop{}.png",
                        (spec.loss_fraction * 100.0).round() as u32
                    );
                    let out_rel = rel.with_file_name(name);
                    let entry = DropEntry {
                        source: source.clone(),
                        file: portable(&out_rel),
                        level: spec.loss_fraction,
                        seed: spec.seed,
                        dropped: result.dropped,
                    };
                    Ok((out_rel, encode_png(&result.image)?, entry))
                })
                .collect()
        })
        .collect::<Result<_, Failure>>()?;

    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for (out_rel, png, entry) in per_image.into_iter().flatten() {
        let path = a.output.join(out_rel);
        write_output(&path, &png)?;
        outputs.push(path);
        entries.push(entry);
    }
    let sidecar = json!({
        "patch_size": a.patch_size,
        "base_seed": a.seed,
        "fill": a.fill,
        "levels": levels,
        "images": entries,
    });
    let sidecar_path = a.output.join("patchdrop.json");
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    write_output(&sidecar_path, text.as_bytes())?;
    outputs.push(sidecar_path);
    eprintln!(
        "wrote {} images for {} sources",
        entries.len(),
        sources.len()
    );
    Ok(Outcome {
        inputs: vec![a.input.clone()],
        outputs,
        anchor: a.output.clone(),
        failed: None,
    })
}

fn load_curves(inputs: &CurveInputs) -> Result<(SweepManifest, Vec<MetricCurve>), Failure> {
    let manifest = load_manifest(&inputs.manifest)?;
    let mut curves = Vec::new();
    let mut seen = HashSet::new();
    for path in &inputs.curves {
        let rows = parse_curve_csv(read_input(path)?.as_slice())
            .map_err(|e| data(format!("{}: {e}", path.display())))?;
        for c in curves_from_rows(&rows, &manifest.axis)
            .map_err(|e| data(format!("{}: {e}", path.display())))?
        {
            if inputs.metric.as_ref().is_some_and(|m| *m != c.kind.label()) {
                continue;
            }
            if !seen.insert((c.model_id.clone(), c.kind)) {
                return Err(data(format!(
                    "duplicate curve for {} ({})",
                    c.model_id,
                    c.kind.label()
                )));
            }
            curves.push(c);
        }
    }
    if curves.is_empty() {
        return Err(data("no curves selected"));
    }
    Ok((manifest, curves))
}

fn curve_input_paths(inputs: &CurveInputs) -> Vec<PathBuf> {
    let mut paths = vec![inputs.manifest.manifest.clone()];
    paths.extend(inputs.curves.iter().cloned());
    paths
}

fn report(a: &ReportArgs) -> Result<Outcome, Failure> {
    let (manifest, curves) = load_curves(&a.inputs)?;
    let labels: Vec<String> = curves.iter().map(|c| c.kind.label()).collect();
    let single = labels
        .iter()
        .all(|l| *l == labels[0])
        .then(|| labels[0].clone());
    let axis = &manifest.axis;
    let spec = CurvePlotSpec {
        title: a.title.clone().unwrap_or_else(|| {
            format!(
                "{} over {}",
                single.as_deref().unwrap_or("metrics"),
                axis.name
            )
        }),
        x_label: a
            .x_label
            .clone()
            .unwrap_or_else(|| format!("{} ({})", axis.name, axis.unit)),
        y_label: a
            .y_label
            .clone()
            .unwrap_or_else(|| single.unwrap_or_else(|| "estimate".into())),
        error_bars: !a.no_error_bars,
        curves,
    };
    let mut buf = Vec::new();
    emit_curve_svg(&spec, &mut buf).map_err(data)?;
    write_output(&a.out, &buf)?;
    Ok(Outcome::new(curve_input_paths(&a.inputs), &a.out))
}

fn compare(a: &CompareArgs) -> Result<Outcome, Failure> {
    let interval = match a.interval.as_deref() {
        None => None,
        Some(&[lo, hi]) => Some((lo, hi)),
        Some(_) => return Err(usage("--interval takes two values: lo,hi")),
    };
    let pairs = a
        .pairs
        .iter()
        .map(|p| match p.split_once(':') {
            Some((x, y)) if !x.is_empty() && !y.is_empty() => Ok((x.to_string(), y.to_string())),
            _ => Err(usage(format!("--pair '{p}' must look like first:second"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (_, curves) = load_curves(&a.inputs)?;
    let mut inputs = curve_input_paths(&a.inputs);
    let registry = match &a.registry {
        Some(path) => {
            inputs.push(path.clone());
            Some(ModelRegistry::from_json(&read_text(path)?).map_err(data)?)
        }
        None => None,
    };
    let table = compare_models(&curves, interval, &pairs, registry.as_ref()).map_err(data)?;
    let mut buf = Vec::new();
    emit_table_csv(&table, &mut buf).map_err(data)?;
    write_output(&a.out, &buf)?;
    Ok(Outcome::new(inputs, &a.out))
}
