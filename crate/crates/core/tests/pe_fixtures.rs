use std::fs;
use std::path::PathBuf;

use deepstatic::pe::builder::{ImportName, MinimalPe};
use deepstatic::pe::{extract_imports, parse_pe, Import};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expected() -> Value {
    serde_json::from_str(&fs::read_to_string(fixture("expected.json")).unwrap()).unwrap()
}

#[test]
fn parser_agrees_with_struct_oracle() {
    let exp = expected();
    for name in ["hello_min.exe", "two_imports.exe", "hello64.exe"] {
        let pe = parse_pe(&fs::read(fixture(name)).unwrap());
        let e = &exp[name];
        assert!(pe.is_pe, "{name}");
        assert_eq!(pe.compile_timestamp.map(u64::from), e["compile_timestamp"].as_u64(), "{name}");

        let imports: Vec<Import> = e["imports"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| Import::new(p[0].as_str().unwrap(), p[1].as_str().unwrap()))
            .collect();
        assert_eq!(extract_imports(&pe), &imports[..], "{name}");

        let fields: Vec<(String, i64)> = e["numeric_fields"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_str().unwrap().to_string(), p[1].as_i64().unwrap()))
            .collect();
        assert_eq!(pe.numeric_fields, fields, "{name}");
        assert!(!pe.truncated());
    }
}

#[test]
fn hello_min_imports() {
    let pe = parse_pe(&fs::read(fixture("hello_min.exe")).unwrap());
    assert_eq!(pe.imports, vec![Import::new("KERNEL32.dll", "ExitProcess")]);
}

#[test]
fn ordinal_imports_are_named() {
    let pe = parse_pe(&fs::read(fixture("two_imports.exe")).unwrap());
    assert_eq!(pe.imports.last().unwrap(), &Import::new("WS2_32.dll", "ord115"));
}

#[test]
fn truncated_section_table_is_flagged() {
    let bytes = fs::read(fixture("truncated.exe")).unwrap();
    let pe = parse_pe(&bytes);
    assert!(pe.is_pe);
    assert!(pe.truncated());
    assert_eq!(pe.field("parse_truncated"), Some(1));
    assert_eq!(pe.compile_timestamp, Some(1_262_304_000));
    assert!(pe.imports.is_empty());
    assert!(pe.field("opt.magic").is_some());
}

#[test]
fn random_bytes_are_not_pe() {
    let pe = parse_pe(&fs::read(fixture("not_pe.bin")).unwrap());
    assert!(!pe.is_pe);
    assert!(pe.imports.is_empty());
    assert_eq!(pe.compile_timestamp, None);
    assert_eq!(pe.numeric_fields, vec![("parse_truncated".to_string(), 0)]);
}

#[test]
fn builder_reproduces_fixture_bytes() {
    let built = MinimalPe {
        timestamp: 1_262_304_000,
        imports: vec![("KERNEL32.dll".into(), vec![ImportName::Name("ExitProcess".into())])],
        text: b"\x6a\x00\xff\x15\x00\x20\x40\x00\xc3".to_vec(),
        rdata_extra: b"Hello, world!\0".to_vec(),
        ..MinimalPe::default()
    }
    .build();
    assert_eq!(built, fs::read(fixture("hello_min.exe")).unwrap());
}

fn arb_name() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,20}"
}

fn arb_pe() -> impl Strategy<Value = MinimalPe> {
    let entry = prop_oneof![arb_name().prop_map(ImportName::Name), any::<u16>().prop_map(ImportName::Ordinal)];
    let dll = ("[A-Za-z0-9]{1,12}\\.dll", prop::collection::vec(entry, 1..6));
    (
        any::<u32>(),
        any::<bool>(),
        prop::collection::vec(dll, 0..5),
        prop::collection::vec(any::<u8>(), 1..600),
        prop::collection::vec(any::<u8>(), 0..100),
    )
        .prop_map(|(timestamp, pe64, imports, text, rdata_extra)| MinimalPe {
            timestamp,
            pe64,
            imports,
            text,
            rdata_extra,
        })
}

proptest! {
    #[test]
    fn parse_is_total_and_pure(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        let a = parse_pe(&bytes);
        let b = parse_pe(&bytes);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.numeric_fields.last().map(|f| f.0.as_str()), Some("parse_truncated"));
    }

    #[test]
    fn mutated_headers_never_panic(seed in prop::collection::vec((0usize..1024, any::<u8>()), 1..40)) {
        let mut bytes = fs::read(fixture("two_imports.exe")).unwrap();
        for (pos, v) in seed {
            let i = pos % bytes.len();
            bytes[i] = v;
        }
        let _ = parse_pe(&bytes);
    }

    #[test]
    fn prefixes_never_panic(cut in 0usize..2048) {
        let bytes = fs::read(fixture("hello64.exe")).unwrap();
        let pe = parse_pe(&bytes[..cut.min(bytes.len())]);
        if cut < bytes.len() && pe.is_pe {
            prop_assert!(pe.imports.len() <= 2);
        }
    }

    #[test]
    fn built_images_round_trip(spec in arb_pe()) {
        let pe = parse_pe(&spec.build());
        prop_assert!(pe.is_pe);
        prop_assert!(!pe.truncated());
        prop_assert_eq!(pe.compile_timestamp, Some(spec.timestamp));
        let want: Vec<Import> = spec
            .imports
            .iter()
            .flat_map(|(dll, names)| names.iter().map(move |n| match n {
                ImportName::Name(f) => Import::new(dll.as_str(), f.as_str()),
                ImportName::Ordinal(o) => Import::new(dll.as_str(), format!("ord{o}")),
            }))
            .collect();
        prop_assert_eq!(&pe.imports, &want);
        prop_assert_eq!(pe.field("opt.magic"), Some(if spec.pe64 { 0x20b } else { 0x10b }));
    }
}
