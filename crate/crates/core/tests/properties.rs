use occlubench::dataio::{gen_synthetic, MaskPolicy, SyntheticSpec};
use occlubench::eval::{i_occlusion_curve, item_seed, occlude_dataset, predict_occluded, Fill, GradCam, Occluder, SaliencySet};
use occlubench::refmodel::Architecture;
use occlubench::{GradCamConfig, LabeledDataset, Split, TinyCnn};
use proptest::prelude::*;

fn data(split: Split, seed: u64) -> LabeledDataset {
    let spec = SyntheticSpec { per_class: 6, size: 16, seed, ..Default::default() };
    gen_synthetic(&spec, split).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn curves_do_not_depend_on_pool_size() {
    let train = data(Split::Train, 1);
    let test = data(Split::Test, 2);
    let model = TinyCnn::new(train.shape(), 3, &Architecture::default(), 3).unwrap();
    let donor = data(Split::Test, 9);
    let run = || {
        let occ = Occluder::new(MaskPolicy::Fourier, Fill::Donor(&donor));
        let sal = SaliencySet::compute(&GradCam { model: &model, config: GradCamConfig::default() }, &train, &test).unwrap();
        let logs: Vec<_> =
            [0.2, 0.7].iter().map(|&f| predict_occluded(&model, &test, f, &occ, 4, Some(&sal.test)).unwrap()).collect();
        // a random model can have a zero gap; either outcome must repeat exactly
        let curve = i_occlusion_curve(&model, &train, &test, Some(&sal), &[0.1, 0.5], &[0, 1], &occ)
            .map(|c| c.values)
            .map_err(|e| e.to_string());
        (logs, format!("{curve:?}"))
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Occlusion touches exactly the masked pixels, and fills them with the constant.
    #[test]
    fn uniform_fill_changes_only_masked_pixels(fraction in 0.0f64..=1.0, seed in any::<u64>(), policy in 0usize..2) {
        let test = data(Split::Test, 5);
        let fill = [0.25f32, -0.5, 1.5];
        let policy = [MaskPolicy::Rect, MaskPolicy::Fourier][policy];
        let occ = Occluder::new(policy, Fill::Uniform(&fill));
        let out = occlude_dataset(&test, fraction, &occ, seed, None).unwrap();
        for (i, (clean, dirty)) in test.images().iter().zip(out.images()).enumerate() {
            let mask = occ.mask(clean, fraction, item_seed(seed, Split::Test, test.ids()[i], fraction), None).unwrap();
            let n = clean.shape().pixels();
            for c in 0..3 {
                for p in 0..n {
                    let (y, x) = (p / 16, p % 16);
                    let want = if mask.is_covered(y, x) { fill[c] } else { clean.data()[c * n + p] };
                    prop_assert_eq!(dirty.data()[c * n + p], want);
                }
            }
        }
    }
}
