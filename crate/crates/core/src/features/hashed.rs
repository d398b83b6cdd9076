//! Hashed 256-bin blocks: imports, header metadata and printable strings.

use crate::pe::Import;

pub const BLOCK: usize = 256;
pub const MIN_STRING_LEN: usize = 5;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(data: &[u8]) -> u64 {
    data.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn bucket(data: &[u8]) -> usize {
    (fnv1a64(data) % BLOCK as u64) as usize
}

/// Hash key for an import: lowercased DLL name, `:`, function name as-is.
pub fn import_key(import: &Import) -> String {
    format!("{}:{}", import.dll.to_ascii_lowercase(), import.function)
}

pub fn import_features(imports: &[Import]) -> [u64; BLOCK] {
    let mut out = [0u64; BLOCK];
    for imp in imports {
        out[bucket(import_key(imp).as_bytes())] += 1;
    }
    out
}

/// Sums each field's value into the bin of its name. Negative values count as 0.
pub fn metadata_features(fields: &[(String, i64)]) -> [f64; BLOCK] {
    let mut acc = [0u128; BLOCK];
    for (name, value) in fields {
        acc[bucket(name.as_bytes())] += (*value).max(0) as u128;
    }
    acc.map(|v| v as f64)
}

/// Maximal runs of printable ASCII (0x20..=0x7e) at least five bytes long.
pub fn printable_runs(raw: &[u8]) -> impl Iterator<Item = &[u8]> {
    raw.split(|b| !(0x20..=0x7e).contains(b))
        .filter(|run| run.len() >= MIN_STRING_LEN)
}

pub fn string_features(raw: &[u8]) -> [u64; BLOCK] {
    let mut out = [0u64; BLOCK];
    for run in printable_runs(raw) {
        out[bucket(run)] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_inputs_give_zero_blocks() {
        assert!(import_features(&[]).iter().all(|&v| v == 0));
        assert!(metadata_features(&[]).iter().all(|&v| v == 0.0));
        assert!(string_features(&[0u8; 4096]).iter().all(|&v| v == 0));
    }

    #[test]
    fn single_import_single_bin() {
        let v = import_features(&[Import::new("KERNEL32.dll", "ExitProcess")]);
        assert_eq!(v.iter().sum::<u64>(), 1);
        assert_eq!(v.iter().filter(|&&x| x > 0).count(), 1);
    }

    #[test]
    fn dll_case_folded_function_case_kept() {
        let a = Import::new("KERNEL32.DLL", "ExitProcess");
        let b = Import::new("kernel32.dll", "ExitProcess");
        let c = Import::new("kernel32.dll", "exitprocess");
        assert_eq!(import_key(&a), import_key(&b));
        assert_ne!(import_key(&b), import_key(&c));
    }

    #[test]
    fn metadata_sums_and_clamps() {
        let v = metadata_features(&[("x".into(), 7)]);
        assert_eq!(v.iter().sum::<f64>(), 7.0);
        assert_eq!(v[bucket(b"x")], 7.0);
        let neg = metadata_features(&[("x".into(), -5)]);
        assert!(neg.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn string_runs() {
        let v = string_features(b"hello\0world");
        assert_eq!(v.iter().sum::<u64>(), 2);
        assert!(string_features(b"hi\0").iter().all(|&x| x == 0));
        // run at end of input without terminator
        assert_eq!(string_features(b"\x01abcdef").iter().sum::<u64>(), 1);
        assert_eq!(printable_runs(b"abcd\x7fabcde\xffxy").count(), 1);
    }
}
