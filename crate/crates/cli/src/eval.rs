use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use occlubench::dataio::{read_prediction_log, read_saliency, FillMode, MaskPolicy, MetricKind, Normalization, RunConfig};
use occlubench::eval::{
    compute_saliency, cut_occlusion_curve, cut_occlusion_from_logs, i_occlusion_curve, i_occlusion_from_logs, misclass_deltas,
    misclass_deltas_from_logs, DeltaSummary, Fill, GradCam, OccludedRun, Occluder, SaliencySet,
};
use occlubench::refmodel::{read_checkpoint, training_labels};
use occlubench::report::{curves_csv, curves_svg, deltas_csv, deltas_svg, write_text, NamedCurve};
use occlubench::{LabeledDataset, PredictionLog, Split, SubsetIndex, TinyCnn};
use serde::Deserialize;

use crate::common::{check_config, load_config, load_subset, parse_enum, parse_fraction, sibling};

#[derive(Args)]
pub struct EvalArgs {
    /// Run config; required with `--checkpoint`, optional with `--logs`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model checkpoint; repeat to put several models in one table.
    #[arg(long, conflicts_with = "logs", required_unless_present = "logs")]
    checkpoint: Vec<PathBuf>,
    /// JSON manifest of externally produced prediction logs.
    #[arg(long)]
    logs: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<MetricKind>)]
    metric: Option<MetricKind>,
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Single seed; same as `--seeds <SEED>`.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_enum::<FillMode>)]
    fill: Option<FillMode>,
    #[arg(long, value_parser = parse_enum::<MaskPolicy>)]
    mask_policy: Option<MaskPolicy>,
    /// Subset index file; restricts its split to the listed images.
    #[arg(long)]
    subset: Option<PathBuf>,
    /// Model name in the CSV; defaults to the checkpoint file stem or the manifest's `model`.
    #[arg(long)]
    name: Option<String>,
    /// CSV output; the SVG plot goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogsManifest {
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    num_classes: Option<usize>,
    #[serde(default)]
    normalization: Option<Normalization>,
    clean: PathBuf,
    runs: Vec<RunEntry>,
    #[serde(default)]
    saliency: Option<SaliencyFiles>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunEntry {
    fraction: f64,
    seed: u64,
    log: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaliencyFiles {
    train: PathBuf,
    test: PathBuf,
}

/// Settings after flags are laid over the config.
struct Plan {
    metric: MetricKind,
    fractions: Vec<f64>,
    seeds: Vec<u64>,
    fill: FillMode,
    policy: MaskPolicy,
}

fn plan(a: &EvalArgs, cfg: Option<&RunConfig>) -> Plan {
    let base = cfg.map(|c| c.eval.clone()).unwrap_or_default();
    let mut fractions = a.fractions.clone().unwrap_or(base.fractions);
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    Plan {
        metric: a.metric.unwrap_or(base.metric),
        fractions,
        seeds: a.seed.map(|s| vec![s]).or_else(|| a.seeds.clone()).unwrap_or(base.seeds),
        fill: a.fill.unwrap_or(base.fill),
        policy: a.mask_policy.unwrap_or(base.mask_policy),
    }
}

enum Outcome {
    Curves(Vec<NamedCurve>),
    Deltas(String, Vec<DeltaSummary>, usize),
}

pub fn run(a: EvalArgs) -> Result<()> {
    let mut cfg = a.config.as_deref().map(load_config).transpose()?;
    let p = plan(&a, cfg.as_ref());
    if let Some(c) = cfg.as_mut() {
        c.eval.metric = p.metric;
        c.eval.fractions = p.fractions.clone();
        c.eval.seeds = p.seeds.clone();
        c.eval.fill = p.fill;
        c.eval.mask_policy = p.policy;
        check_config(c)?;
    }
    ensure!(!p.fractions.is_empty(), "no fractions to evaluate");
    ensure!(!p.seeds.is_empty(), "no seeds to evaluate");
    let subset = load_subset(a.subset.as_ref())?;

    let (outcome, norm) = match &a.logs {
        Some(path) => from_logs(&a, path, &p, subset.as_ref())?,
        None => {
            let cfg = cfg.context("`--checkpoint` needs `--config` for the dataset")?;
            from_checkpoints(&a, &cfg, &p, subset.as_ref())?
        }
    };

    let (csv, svg) = match outcome {
        Outcome::Curves(curves) => {
            let title = match p.metric {
                MetricKind::Cutocclusion => "CutOcclusion".to_string(),
                _ => format!("iOcclusion ({} mask)", policy_name(p.policy)),
            };
            (curves_csv(&curves, norm.as_ref())?, curves_svg(&curves, &title)?)
        }
        Outcome::Deltas(model, deltas, classes) => {
            let names: Vec<String> = (0..classes).map(|c| c.to_string()).collect();
            let title = format!("Misclassification change, {model}");
            (deltas_csv(&model, &deltas, norm.as_ref())?, deltas_svg(&deltas, &names, &title)?)
        }
    };
    write_text(&a.out, &csv)?;
    let svg_path = sibling(&a.out, "svg");
    write_text(&svg_path, &svg)?;
    eprintln!("wrote {} and {}", a.out.display(), svg_path.display());
    Ok(())
}

fn policy_name(p: MaskPolicy) -> &'static str {
    match p {
        MaskPolicy::Saliency => "saliency",
        MaskPolicy::Rect => "rect",
        MaskPolicy::Fourier => "fourier",
    }
}

fn restrict(data: LabeledDataset, subset: Option<&SubsetIndex>) -> Result<LabeledDataset> {
    match subset {
        Some(s) if s.split() == data.split() => Ok(data.subset(s)?),
        _ => Ok(data),
    }
}

fn from_checkpoints(
    a: &EvalArgs,
    cfg: &RunConfig,
    p: &Plan,
    subset: Option<&SubsetIndex>,
) -> Result<(Outcome, Option<Normalization>)> {
    let data = cfg.load_data()?;
    let mut train = data.train;
    if cfg.train.label_randomization {
        // measured against the labels the model was fitted to
        let labels = training_labels(&train, &cfg.train);
        train = train.relabel(labels)?;
    }
    let train = restrict(train, subset)?;
    let test = restrict(data.test, subset)?;

    let zeros = vec![0.0f32; test.shape().channels];
    let fill_value = cfg.eval.fill_value.clone().unwrap_or(zeros);
    let donor = match p.fill {
        FillMode::Donor => Some(
            cfg.load_donor(Split::Test, &data.normalization)?
                .context("fill `donor` needs a `donor` dataset in the config")?,
        ),
        FillMode::Uniform => None,
    };
    let fill = match &donor {
        Some(d) => Fill::Donor(d),
        None => Fill::Uniform(&fill_value),
    };
    let mut occluder = Occluder::new(p.policy, fill);
    occluder.fourier = cfg.train.mask_params;

    if p.metric == MetricKind::MisclassDelta && a.checkpoint.len() != 1 {
        bail!("misclass-delta takes exactly one checkpoint, got {}", a.checkpoint.len());
    }
    let mut curves = Vec::new();
    for path in &a.checkpoint {
        let model = read_checkpoint(path)?;
        check_model(&model, &test, path)?;
        let name = model_name(a.name.as_deref(), path, a.checkpoint.len())?;
        let source = GradCam { model: &model, config: cfg.eval.grad_cam };
        let wants_saliency = p.policy == MaskPolicy::Saliency;
        match p.metric {
            MetricKind::Cutocclusion => {
                let curve = cut_occlusion_curve(&model, &test, &p.fractions, &p.seeds, fill)?;
                curves.push(NamedCurve { model: name, curve });
            }
            MetricKind::Iocclusion => {
                let sal = wants_saliency.then(|| SaliencySet::compute(&source, &train, &test)).transpose()?;
                let curve = i_occlusion_curve(&model, &train, &test, sal.as_ref(), &p.fractions, &p.seeds, &occluder)?;
                curves.push(NamedCurve { model: name, curve });
            }
            MetricKind::MisclassDelta => {
                let sal = wants_saliency.then(|| compute_saliency(&source, &test)).transpose()?;
                let deltas = misclass_deltas(&model, &test, &p.fractions, &p.seeds, &occluder, sal.as_deref())?;
                return Ok((Outcome::Deltas(name, deltas, test.num_classes()), Some(data.normalization)));
            }
        }
    }
    Ok((Outcome::Curves(curves), Some(data.normalization)))
}

fn check_model(model: &TinyCnn, data: &LabeledDataset, path: &Path) -> Result<()> {
    ensure!(
        model.input_shape() == data.shape() && model.num_classes() == data.num_classes(),
        "{} expects {:?} images and {} classes, the dataset has {:?} and {}",
        path.display(),
        model.input_shape(),
        model.num_classes(),
        data.shape(),
        data.num_classes()
    );
    Ok(())
}

fn model_name(given: Option<&str>, path: &Path, count: usize) -> Result<String> {
    match given {
        Some(n) if count == 1 => Ok(n.to_string()),
        Some(_) => bail!("`--name` only applies to a single model"),
        None => Ok(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())),
    }
}

fn read_log(path: &Path, subset: Option<&SubsetIndex>) -> Result<PredictionLog> {
    let log = read_prediction_log(path).with_context(|| format!("reading prediction log {}", path.display()))?;
    Ok(match subset {
        Some(s) => log.filter(s),
        None => log,
    })
}

fn from_logs(
    a: &EvalArgs,
    path: &Path,
    p: &Plan,
    subset: Option<&SubsetIndex>,
) -> Result<(Outcome, Option<Normalization>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: LogsManifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |q: &Path| if q.is_relative() { base.join(q) } else { q.to_path_buf() };

    let clean_path = resolve(&m.clean);
    let full_clean = read_log(&clean_path, None)?;
    let clean = match subset {
        Some(s) => full_clean.filter(s),
        None => full_clean.clone(),
    };
    let runs = m
        .runs
        .iter()
        .filter(|r| p.fractions.contains(&r.fraction) && p.seeds.contains(&r.seed))
        .map(|r| {
            Ok(OccludedRun { fraction: r.fraction, seed: r.seed, log: read_log(&resolve(&r.log), subset)? })
        })
        .collect::<Result<Vec<_>>>()?;
    for &f in &p.fractions {
        ensure!(runs.iter().any(|r| r.fraction == f), "manifest has no run at fraction {f}");
    }
    let name = a.name.clone().or(m.model).unwrap_or_else(|| "model".into());

    let outcome = match p.metric {
        MetricKind::Iocclusion => {
            let sal = m.saliency.as_ref().context(
                "iocclusion over external logs needs saliency files: add `saliency: {train, test}` to the manifest",
            )?;
            for (split, file) in [(Split::Train, &sal.train), (Split::Test, &sal.test)] {
                let file = resolve(file);
                let maps = read_saliency(&file).with_context(|| format!("saliency file {}", file.display()))?;
                let want = full_clean.split(split).len();
                ensure!(
                    maps.len() == want,
                    "{} holds {} maps, the clean log has {want} {} records",
                    file.display(),
                    maps.len(),
                    split.as_str()
                );
            }
            Outcome::Curves(vec![NamedCurve { model: name, curve: i_occlusion_from_logs(&clean, &runs)? }])
        }
        MetricKind::Cutocclusion => {
            Outcome::Curves(vec![NamedCurve { model: name, curve: cut_occlusion_from_logs(&clean, &runs)? }])
        }
        MetricKind::MisclassDelta => {
            let classes = m.num_classes.unwrap_or_else(|| {
                clean.records().iter().map(|r| r.true_label.max(r.predicted_label) + 1).max().unwrap_or(0)
            });
            let test = clean.split(Split::Test);
            let test_runs: Vec<OccludedRun> = runs
                .into_iter()
                .map(|r| OccludedRun { fraction: r.fraction, seed: r.seed, log: r.log.split(Split::Test) })
                .collect();
            Outcome::Deltas(name, misclass_deltas_from_logs(&test, &test_runs, classes)?, classes)
        }
    };
    Ok((outcome, m.normalization))
}
