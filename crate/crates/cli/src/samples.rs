use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args;
use occlubench::dataio::{read_cifar10, Normalization};
use occlubench::report::{write_png_rgb, write_text};
use occlubench::samples::sample_grid;
use occlubench::seed::{stream, SeedSequence};
use occlubench::{Image, Split};
use rand::Rng;

use crate::common::{check_config, load_config, parse_enum, sibling};

#[derive(Args)]
pub struct SamplesArgs {
    /// Draw pairs from this config's dataset (second images from its donor, if any).
    #[arg(long, required_unless_present = "images")]
    config: Option<PathBuf>,
    /// Two CIFAR-10 binary files; record k of each forms column k.
    #[arg(long, num_args = 2, conflicts_with = "config")]
    images: Option<Vec<PathBuf>>,
    #[arg(long, default_value = "train", value_parser = parse_enum::<Split>)]
    split: Split,
    #[arg(long, default_value_t = 8)]
    columns: usize,
    /// Mixing coefficient shared by all columns; drawn per column when absent.
    #[arg(long, value_parser = crate::common::parse_fraction)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// PNG output; the sidecar CSV goes next to it.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: SamplesArgs) -> Result<()> {
    ensure!(a.columns > 0, "need at least one column");
    let (pairs, norm, params) = match (&a.config, &a.images) {
        (_, Some(files)) => {
            let norm = Normalization::identity(3);
            let read = |p: &PathBuf| -> Result<Vec<Image>> {
                let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Ok(read_cifar10(std::io::BufReader::new(f), p, &norm)?.0)
            };
            let (first, second) = (read(&files[0])?, read(&files[1])?);
            let n = a.columns.min(first.len()).min(second.len());
            ensure!(n > 0, "no images to pair");
            let pairs: Vec<_> = first.into_iter().zip(second).take(n).collect();
            (pairs, norm, Default::default())
        }
        (Some(path), None) => {
            let cfg = load_config(path)?;
            check_config(&cfg)?;
            let data = cfg.load_data()?;
            let norm = data.normalization.clone();
            let first = if a.split == Split::Train { data.train } else { data.test };
            let second = cfg.load_donor(a.split, &norm)?.unwrap_or_else(|| first.clone());
            let mut rng = SeedSequence::new(a.seed).child(stream::PAIRING).rng();
            let pairs = (0..a.columns)
                .map(|_| {
                    let i = rng.random_range(0..first.len());
                    let j = rng.random_range(0..second.len());
                    (first.images()[i].clone(), second.images()[j].clone())
                })
                .collect();
            (pairs, norm, cfg.train.mask_params)
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let grid = sample_grid(&pairs, a.lambda, &params, a.seed)?;
    let (w, h, rgb) = grid.to_rgb(&norm)?;
    write_png_rgb(&a.out, w, h, &rgb)?;
    let csv = sibling(&a.out, "csv");
    write_text(&csv, &grid.sidecar_csv())?;
    eprintln!("wrote {} and {}", a.out.display(), csv.display());
    Ok(())
}
