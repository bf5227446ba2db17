use mpseg::dataset::{class_histogram, DatasetIndex};
use mpseg::synth::{generate, write_dataset, SynthConfig};
use mpseg::taxonomy::group_of_labels;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_sets_are_consistent(seed in any::<u64>(), n in 0usize..8, rca_fraction in 0.0f64..=1.0) {
        let cfg = SynthConfig {
            n_images: n,
            rca_fraction,
            canvas: 96,
            branch_width_range: (2, 5),
            seed,
            ..Default::default()
        };
        let (idx, manifest) = generate(&cfg).unwrap();
        prop_assert_eq!(class_histogram(&idx), manifest.class_counts.clone());
        for entry in &manifest.images {
            let labels = idx.image_classes(entry.image_id).unwrap();
            prop_assert_eq!(group_of_labels(&labels).unwrap(), entry.group);
            prop_assert_eq!(idx.build_label_mask(entry.image_id).unwrap().overlap_pixels, 0);
        }
    }
}

#[test]
fn written_dataset_is_byte_identical_and_reloads() {
    let cfg = SynthConfig {
        n_images: 6,
        canvas: 128,
        seed: 77,
        branch_width_range: (3, 6),
        ..Default::default()
    };
    let dirs: Vec<tempfile::TempDir> = (0..2)
        .map(|_| {
            let d = tempfile::tempdir().unwrap();
            let (idx, man) = generate(&cfg).unwrap();
            write_dataset(d.path(), &idx, &man).unwrap();
            d
        })
        .collect();
    let files = ["annotations.json", "manifest.json", "images/1.png", "images/6.png"];
    for f in files {
        assert_eq!(
            std::fs::read(dirs[0].path().join(f)).unwrap(),
            std::fs::read(dirs[1].path().join(f)).unwrap(),
            "{f}"
        );
    }
    let (orig, _) = generate(&cfg).unwrap();
    let mut back = DatasetIndex::parse_file(&dirs[0].path().join("annotations.json")).unwrap();
    back.load_pixels(&dirs[0].path().join("images")).unwrap();
    for img in orig.images() {
        assert_eq!(back.label_mask(img.image_id).unwrap(), orig.label_mask(img.image_id).unwrap());
        assert_eq!(back.image(img.image_id).unwrap().pixels, img.pixels);
    }
}
