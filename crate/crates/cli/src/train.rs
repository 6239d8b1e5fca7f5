use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use occlubench::dataio::read_masks;
use occlubench::refmodel::{train, write_checkpoint, AugmentationMode, TinyCnn, TrainExtras};
use occlubench::report::{epochs_csv, write_text};
use occlubench::{MaskBank, Split};

use crate::common::{check_config, load_config, sibling};

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path; the epoch CSV goes next to it. Default `<name>.obnn`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    mode: Option<AugmentationMode>,
    #[arg(long)]
    label_randomization: bool,
    #[arg(long)]
    mask_bank: Option<PathBuf>,
}

pub fn run(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(m) = a.mode {
        cfg.train.mode = m;
    }
    if a.label_randomization {
        cfg.train.label_randomization = true;
    }
    if a.mask_bank.is_some() {
        cfg.mask_bank = a.mask_bank;
    }
    check_config(&cfg)?;

    let data = cfg.load_data()?;
    let bank = match &cfg.mask_bank {
        Some(p) if cfg.train.mode.bank_size().is_some() => {
            let bank = MaskBank::new(read_masks(p)?).with_context(|| format!("mask bank {}", p.display()))?;
            let want = cfg.train.mode.bank_size().unwrap_or(0);
            anyhow::ensure!(
                bank.len() == want,
                "mode {} needs {want} mask(s), {} holds {}",
                cfg.train.mode.as_str(),
                p.display(),
                bank.len()
            );
            Some(bank)
        }
        _ => None,
    };
    let donor = cfg.load_donor(Split::Train, &data.normalization)?;
    let mut model = TinyCnn::new(data.train.shape(), data.train.num_classes(), &cfg.architecture, cfg.train.seed)?;
    let report = train(
        &mut model,
        &data.train,
        &cfg.train,
        TrainExtras { mask_bank: bank.as_ref(), donor: donor.as_ref() },
    )?;

    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("{}.obnn", cfg.name)));
    write_checkpoint(&out, &model)?;
    let csv = sibling(&out, "epochs.csv");
    write_text(&csv, &epochs_csv(&report.epochs))?;
    if let Some(last) = report.epochs.last() {
        eprintln!(
            "trained {} epochs, final loss {:.4}, train accuracy {:.4}",
            report.epochs.len(),
            last.loss,
            last.train_accuracy
        );
    }
    eprintln!("wrote {} and {}", out.display(), csv.display());
    Ok(())
}
