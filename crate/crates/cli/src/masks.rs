use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use occlubench::dataio::{read_saliency, write_cifar10, write_masks, FillMode, MaskPolicy};
use occlubench::eval::{compute_saliency, item_seed, Fill, GradCam, Occluder};
use occlubench::maskgen::{fourier_mask, rect_mask, saliency_mask};
use occlubench::refmodel::read_checkpoint;
use occlubench::seed::{stream, SeedSequence};
use occlubench::{LabeledDataset, Mask, Split};
use rayon::prelude::*;

use crate::common::{check_config, load_config, parse_enum, parse_fraction};

#[derive(Args)]
pub struct MasksArgs {
    #[arg(long, value_parser = parse_enum::<MaskPolicy>)]
    policy: MaskPolicy,
    #[arg(long, value_parser = parse_fraction)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standalone masks (rect/fourier).
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// `OBSM` file; one saliency mask per map.
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// One mask per image of this config's dataset, seeded exactly as in `eval`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_enum::<Split>)]
    split: Split,
    /// Grad-CAM source for `--policy saliency` with `--config`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<FillMode>)]
    fill: Option<FillMode>,
    /// Also write the occluded split as a CIFAR-10 binary file (needs `--config`).
    #[arg(long, requires = "config")]
    occluded_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: MasksArgs) -> Result<()> {
    let masks = match &a.config {
        Some(_) => dataset_masks(&a)?,
        None => standalone_masks(&a)?,
    };
    write_masks(&a.out, &masks)?;
    eprintln!("wrote {} mask(s) to {}", masks.len(), a.out.display());
    Ok(())
}

fn standalone_masks(a: &MasksArgs) -> Result<Vec<Mask>> {
    if a.policy == MaskPolicy::Saliency {
        let path = a.saliency.as_ref().context("`--policy saliency` needs `--saliency` or `--config`")?;
        let maps = read_saliency(path)?;
        return Ok(maps.iter().map(|m| saliency_mask(m, a.fraction)).collect::<occlubench::Result<_>>()?);
    }
    ensure!(a.count > 0, "`--count` must be positive");
    let params = Default::default();
    (0..a.count as u64)
        .map(|i| {
            let s = SeedSequence::new(a.seed).child(i).derive(stream::MASK);
            Ok(match a.policy {
                MaskPolicy::Rect => rect_mask(a.height, a.width, a.fraction, s)?,
                _ => fourier_mask(a.height, a.width, a.fraction, &params, s)?,
            })
        })
        .collect()
}

fn dataset_masks(a: &MasksArgs) -> Result<Vec<Mask>> {
    let cfg = load_config(a.config.as_ref().expect("checked by caller"))?;
    check_config(&cfg)?;
    let data = cfg.load_data()?;
    let split: LabeledDataset = if a.split == Split::Train { data.train } else { data.test };

    let saliency = match (a.policy, &a.saliency, &a.checkpoint) {
        (MaskPolicy::Saliency, Some(path), _) => {
            let maps = read_saliency(path)?;
            ensure!(maps.len() == split.len(), "{} holds {} maps for {} images", path.display(), maps.len(), split.len());
            Some(maps)
        }
        (MaskPolicy::Saliency, None, Some(ckpt)) => {
            let model = read_checkpoint(ckpt)?;
            Some(compute_saliency(&GradCam { model: &model, config: cfg.eval.grad_cam }, &split)?)
        }
        (MaskPolicy::Saliency, None, None) => bail!("`--policy saliency` needs `--saliency` or `--checkpoint`"),
        _ => None,
    };

    let zeros = vec![0.0f32; split.shape().channels];
    let fill_value = cfg.eval.fill_value.clone().unwrap_or(zeros);
    let donor = match a.fill.unwrap_or(cfg.eval.fill) {
        FillMode::Donor => {
            Some(cfg.load_donor(Split::Test, &data.normalization)?.context("fill `donor` needs a `donor` dataset")?)
        }
        FillMode::Uniform => None,
    };
    let fill = match &donor {
        Some(d) => Fill::Donor(d),
        None => Fill::Uniform(&fill_value),
    };
    let mut occluder = Occluder::new(a.policy, fill);
    occluder.fourier = cfg.train.mask_params;

    let pairs = (0..split.len())
        .into_par_iter()
        .map(|i| {
            let img = &split.images()[i];
            let item = item_seed(a.seed, split.split(), split.ids()[i], a.fraction);
            let mask = occluder.mask(img, a.fraction, item, saliency.as_ref().map(|s| &s[i]))?;
            let out = occluder.apply(img, &mask, item)?;
            Ok((mask, out))
        })
        .collect::<occlubench::Result<Vec<_>>>()?;
    let (masks, images): (Vec<Mask>, Vec<_>) = pairs.into_iter().unzip();
    if let Some(path) = &a.occluded_out {
        let occluded = LabeledDataset::with_ids(
            images,
            split.labels().to_vec(),
            split.ids().to_vec(),
            split.num_classes(),
            split.split(),
        )?;
        write_cifar10(path, &occluded, &data.normalization)?;
        eprintln!("wrote occluded {} split to {}", split.split().as_str(), path.display());
    }
    Ok(masks)
}
