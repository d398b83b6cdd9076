use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use deepstatic::features::{
    assemble_features, bucket, byte_entropy_features, extract, fnv1a64, import_features,
    metadata_features, string_features, window_count, window_entropy, FeatureBlock, RawFeatures,
    FEATURE_DIM,
};
use deepstatic::pe::{parse_pe, Import};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Recomputes every window from scratch, with entropy taken from a frequency map.
fn naive_byte_entropy(raw: &[u8]) -> Vec<u64> {
    let mut hist = vec![0u64; 256];
    let windows: Vec<&[u8]> = if raw.is_empty() {
        vec![]
    } else if raw.len() < 1024 {
        vec![raw]
    } else {
        (0..=(raw.len() - 1024) / 256).map(|w| &raw[w * 256..w * 256 + 1024]).collect()
    };
    for w in windows {
        let mut freq: HashMap<u8, usize> = HashMap::new();
        for &b in w {
            *freq.entry(b).or_default() += 1;
        }
        let n = w.len() as f64;
        let h: f64 = freq.values().map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum();
        let e = ((h.max(0.0) * 2.0).floor() as usize).min(15);
        for &b in w {
            hist[e * 16 + b as usize / 16] += 1;
        }
    }
    hist
}

#[test]
fn fnv_vectors_match_reference_script() {
    let exp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("expected.json")).unwrap()).unwrap();
    for (k, v) in exp["fnv1a64"].as_object().unwrap() {
        assert_eq!(fnv1a64(k.as_bytes()), v.as_u64().unwrap(), "{k:?}");
    }
}

#[test]
fn exit_process_bucket() {
    let imports = [Import::new("KERNEL32.dll", "ExitProcess")];
    let block = import_features(&imports);
    let idx = (8_578_226_381_741_451_744u64 % 256) as usize;
    assert_eq!(block[idx], 1);
    assert_eq!(block.iter().sum::<u64>(), 1);
}

#[test]
fn metadata_collision_sums() {
    let exp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("expected.json")).unwrap()).unwrap();
    let c = exp["metadata_collision"].as_array().unwrap();
    let (a, b, target) = (c[0].as_str().unwrap(), c[1].as_str().unwrap(), c[2].as_u64().unwrap() as usize);
    let fields = vec![(a.to_string(), 3), (b.to_string(), 4), (a.to_string(), -9)];
    let block = metadata_features(&fields);
    assert_eq!(block[target], 7.0);
    assert_eq!(block.iter().sum::<f64>(), 7.0);
}

#[test]
fn golden_vector_for_hello_min() {
    let bytes = fs::read(fixture("hello_min.exe")).unwrap();
    let (_, fv) = extract(&bytes);
    let golden: Vec<f64> = fs::read_to_string(fixture("hello_min.features.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(golden.len(), FEATURE_DIM);
    for (i, (a, b)) in fv.values().iter().zip(&golden).enumerate() {
        assert!((a - b).abs() <= 1e-12, "column {i}: {a} vs {b}");
    }
}

#[test]
fn entropy_cases() {
    assert_eq!(window_entropy(&[7u8; 1024]).unwrap(), 0.0);
    let all: Vec<u8> = (0..1024).map(|i| (i % 256) as u8).collect();
    assert!((window_entropy(&all).unwrap() - 8.0).abs() < 1e-12);
    let half: Vec<u8> = (0..1024).map(|i| if i < 512 { 0 } else { 255 }).collect();
    assert!((window_entropy(&half).unwrap() - 1.0).abs() < 1e-12);
    assert!(window_entropy(&[]).is_err());
}

#[test]
fn conservation_on_random_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let len = rng.random_range(1024..=256 * 1024);
        let blob: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let be = byte_entropy_features(&blob);
        assert_eq!(be.iter().sum::<u64>(), 1024 * window_count(len) as u64);
        let strings = string_features(&blob);
        let runs = blob
            .split(|b| !(0x20..=0x7e).contains(b))
            .filter(|r| r.len() >= 5)
            .count() as u64;
        assert_eq!(strings.iter().sum::<u64>(), runs);
    }
}

#[test]
fn blocks_are_isolated() {
    let bytes = fs::read(fixture("two_imports.exe")).unwrap();
    let pe = parse_pe(&bytes);
    let base = assemble_features(&bytes, &pe);
    let mut altered = pe.clone();
    altered.imports.push(Import::new("evil.dll", "Inject"));
    let changed = assemble_features(&bytes, &altered);
    for b in FeatureBlock::ALL {
        if b == FeatureBlock::Imports {
            assert_ne!(base.block(b), changed.block(b));
        } else {
            assert_eq!(base.block(b), changed.block(b), "{b:?}");
        }
    }
    assert_eq!(
        RawFeatures::extract(&bytes, &altered).imports.iter().sum::<u64>(),
        pe.imports.len() as u64 + 1
    );
}

#[test]
fn non_pe_yields_zero_import_and_flag_only_metadata() {
    let bytes = fs::read(fixture("not_pe.bin")).unwrap();
    let pe = parse_pe(&bytes);
    let raw = RawFeatures::extract(&bytes, &pe);
    assert!(raw.imports.iter().all(|&v| v == 0));
    assert!(raw.metadata.iter().all(|&v| v == 0.0));

    let stub = b"MZ\x90\x00";
    let raw = RawFeatures::extract(stub, &parse_pe(stub));
    let flag = bucket(b"parse_truncated");
    assert_eq!(raw.metadata[flag], 1.0);
    assert_eq!(raw.metadata.iter().sum::<f64>(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sliding_histogram_matches_naive(blob in prop::collection::vec(any::<u8>(), 0..5000)) {
        prop_assert_eq!(byte_entropy_features(&blob).to_vec(), naive_byte_entropy(&blob));
    }

    #[test]
    fn low_entropy_blobs_match_naive(
        blob in prop::collection::vec(prop::sample::select(vec![0u8, 1, 2, 200]), 0..5000)
    ) {
        prop_assert_eq!(byte_entropy_features(&blob).to_vec(), naive_byte_entropy(&blob));
    }

    #[test]
    fn entropy_bounds(window in prop::collection::vec(any::<u8>(), 1..2048)) {
        let h = window_entropy(&window).unwrap();
        prop_assert!((0.0..=8.0 + 1e-12).contains(&h));
        prop_assert!(h <= (window.len() as f64).log2() + 1e-9);
    }

    #[test]
    fn features_are_finite_and_non_negative(blob in prop::collection::vec(any::<u8>(), 0..3000)) {
        let (_, fv) = extract(&blob);
        prop_assert_eq!(fv.values().len(), FEATURE_DIM);
        prop_assert!(fv.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
