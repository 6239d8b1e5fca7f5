use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use occlubench::dataio::{
    decode_masks, decode_saliency, parse_prediction_log, parse_subset, read_cifar10, Normalization, RunConfig,
    MASK_MAGIC, SALIENCY_MAGIC,
};
use occlubench::refmodel::{decode_checkpoint, CHECKPOINT_MAGIC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Auto,
    Log,
    Saliency,
    Masks,
    Checkpoint,
    Config,
    Subset,
    Cifar10,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// File type; guessed from magic bytes and extension by default.
    #[arg(long, value_enum, default_value = "auto")]
    kind: Kind,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

pub fn run(a: ValidateArgs) -> Result<()> {
    let mut failed = 0;
    for f in &a.files {
        match check(f, a.kind) {
            Ok(summary) => println!("ok {}: {summary}", f.display()),
            Err(e) => {
                failed += 1;
                println!("FAILED {}: {e:#}", f.display());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} file(s) failed validation", a.files.len());
    }
    Ok(())
}

fn guess(path: &Path, bytes: &[u8]) -> Result<Kind> {
    let magic = bytes.get(..4);
    if magic == Some(&SALIENCY_MAGIC[..]) {
        return Ok(Kind::Saliency);
    }
    if magic == Some(&MASK_MAGIC[..]) {
        return Ok(Kind::Masks);
    }
    if magic == Some(&CHECKPOINT_MAGIC[..]) {
        return Ok(Kind::Checkpoint);
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    Ok(match ext {
        "jsonl" => Kind::Log,
        "json" => Kind::Config,
        "idx" | "txt" => Kind::Subset,
        "bin" => Kind::Cifar10,
        _ => bail!("cannot tell the file type; pass --kind"),
    })
}

fn text(bytes: &[u8], path: &Path) -> Result<String> {
    String::from_utf8(bytes.to_vec()).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn check(path: &Path, kind: Kind) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let kind = if kind == Kind::Auto { guess(path, &bytes)? } else { kind };
    Ok(match kind {
        Kind::Log => {
            let log = parse_prediction_log(&text(&bytes, path)?, path)?;
            format!("prediction log, {} record(s)", log.len())
        }
        Kind::Saliency => {
            let maps = decode_saliency(&bytes, path)?;
            match maps.first() {
                Some(m) => format!("saliency, {} map(s) of {}x{}", maps.len(), m.height(), m.width()),
                None => "saliency, 0 maps".into(),
            }
        }
        Kind::Masks => {
            let masks = decode_masks(&bytes, path)?;
            match masks.first() {
                Some(m) => format!("masks, {} of {}x{}", masks.len(), m.height(), m.width()),
                None => "masks, 0".into(),
            }
        }
        Kind::Checkpoint => {
            let model = decode_checkpoint(&bytes, path)?;
            format!("checkpoint, {} parameters, {} classes", model.param_count(), model.num_classes())
        }
        Kind::Config => {
            let cfg = RunConfig::load(path)?;
            let problems = cfg.problems();
            if !problems.is_empty() {
                bail!("{} problem(s):\n  - {}", problems.len(), problems.join("\n  - "));
            }
            format!("config `{}`", cfg.name)
        }
        Kind::Subset => {
            let s = parse_subset(&text(&bytes, path)?, path)?;
            format!("subset of {}, {} index(es)", s.split().as_str(), s.indices().len())
        }
        Kind::Cifar10 => {
            let (images, _) = read_cifar10(&bytes[..], path, &Normalization::identity(3))?;
            format!("CIFAR-10 binary, {} record(s)", images.len())
        }
        Kind::Auto => unreachable!("resolved above"),
    })
}
