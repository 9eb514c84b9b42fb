mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::*;
use falcon_core::bundle::{read_mask, META_FILE, SAMPLES_FILE, WEIGHTS_FILE};
use falcon_core::{
    project, read_bundle, write_bundle, write_result, Budgets, FalconError, IlpOptions, Mask,
    Report,
};
use proptest::prelude::*;
use rand::Rng;

fn instance_a_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/instance_a")
}

/// Byte positions of the descriptor that carry structure: everything except
/// whitespace and the FLOP cost values.
fn structural_positions(meta: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut in_costs = false;
    let mut pos = 0;
    for line in meta.split_inclusive('\n') {
        if line.contains("\"group_flop_cost\"") {
            in_costs = true;
            let key_end = line.find(':').unwrap();
            out.extend((pos..pos + key_end).filter(|&i| !meta.as_bytes()[i].is_ascii_whitespace()));
        } else if in_costs {
            if line.trim_start().starts_with(']') {
                in_costs = false;
            }
        } else {
            out.extend(
                line.bytes()
                    .enumerate()
                    .filter(|(_, b)| !b.is_ascii_whitespace())
                    .map(|(i, _)| pos + i),
            );
        }
        pos += line.len();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_read_roundtrips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = r.gen_range(1..=60);
        let n = r.gen_range(0..=5);
        let bundle = random_bundle(&mut r, p, n, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b");
        write_bundle(&bundle, &path).unwrap();
        prop_assert_eq!(read_bundle(&path).unwrap(), bundle.clone());
        write_bundle(&bundle.with_weights(&vec![0.5; p]), &path).unwrap();
        prop_assert_eq!(read_bundle(&path).unwrap().weights, vec![0.5f32; p]);
    }

    #[test]
    fn structural_corruption_is_rejected(seed in any::<u64>(), byte in any::<u8>()) {
        let mut r = rng(seed);
        let p = r.gen_range(2..=30);
        let bundle = random_bundle(&mut r, p, 2, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b");
        write_bundle(&bundle, &path).unwrap();
        let meta = fs::read_to_string(path.join(META_FILE)).unwrap();
        let positions = structural_positions(&meta);
        let at = positions[r.gen_range(0..positions.len())];
        let mut bytes = meta.into_bytes();
        prop_assume!(bytes[at] != byte && !byte.is_ascii_whitespace());
        bytes[at] = byte;
        fs::write(path.join(META_FILE), &bytes).unwrap();
        let res = read_bundle(&path);
        prop_assert!(matches!(res, Err(FalconError::Format { .. })), "{:?}", res.map(|b| b.meta));
    }

    #[test]
    fn truncated_payloads_are_rejected(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = r.gen_range(1..=20);
        let bundle = random_bundle(&mut r, p, 3, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b");
        write_bundle(&bundle, &path).unwrap();
        let file = if r.gen_bool(0.5) { WEIGHTS_FILE } else { SAMPLES_FILE };
        let data = fs::read(path.join(file)).unwrap();
        let cut = r.gen_range(0..data.len());
        fs::write(path.join(file), &data[..cut]).unwrap();
        let res = read_bundle(&path);
        prop_assert!(matches!(res, Err(FalconError::Format { .. })), "{:?}", res.map(|b| b.meta));
    }
}

#[test]
fn conformance_vector() {
    let bundle = read_bundle(instance_a_dir()).unwrap();
    let groups = bundle.groups();
    let b = Budgets::joint(2, 3.0);
    let pr = project(&bundle.weights_f64(), &groups, &b, &IlpOptions::default()).unwrap();
    assert_eq!(pr.mask, Mask::from(vec![true, false, true, false]));
    assert!((pr.selection.objective - 6.0).abs() < 1e-6);

    let report = Report::for_projection("prune-mp", &pr, &groups, &b);
    let expected = fs::read_to_string(instance_a_dir().join("expected_report.txt")).unwrap();
    assert_eq!(report.render(), expected);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    write_result(&out, &pr.mask, &pr.x, &report).unwrap();
    assert_eq!(read_mask(out.join("mask.bin"), 4).unwrap(), pr.mask);
    assert_eq!(fs::read(out.join("mask.bin")).unwrap(), vec![1, 0, 1, 0]);
}

#[test]
fn spanning_block_error_names_groups() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b");
    let bundle = read_bundle(instance_a_dir()).unwrap();
    write_bundle(&bundle, &path).unwrap();
    let meta = fs::read_to_string(path.join(META_FILE)).unwrap();
    let blocks = meta.find("\"block_offsets\"").unwrap();
    let fixed = format!(
        "{}\"block_offsets\": [0, 3, 4],\n  \"dtype\": \"f32\"\n}}\n",
        &meta[..blocks]
    );
    fs::write(path.join(META_FILE), fixed).unwrap();
    let err = read_bundle(&path).unwrap_err().to_string();
    assert!(err.contains("block 1 spans groups 1,2"), "{err}");
}
