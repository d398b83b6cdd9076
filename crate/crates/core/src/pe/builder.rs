//! Writer for small, well-formed PE images: two sections (`.text` and an
//! `.rdata` holding the import table). Used to generate round-trip inputs;
//! the layout matches the checked-in fixture generator.

const FILE_ALIGN: u32 = 0x200;
const SECT_ALIGN: u32 = 0x1000;
const E_LFANEW: u32 = 0x80;
const DOS_STUB: &[u8] = b"This program cannot be run in DOS mode.\r\r\n$";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImportName {
    Name(String),
    Ordinal(u16),
}

#[derive(Debug, Clone)]
pub struct MinimalPe {
    pub timestamp: u32,
    pub pe64: bool,
    pub imports: Vec<(String, Vec<ImportName>)>,
    pub text: Vec<u8>,
    pub rdata_extra: Vec<u8>,
}

impl Default for MinimalPe {
    fn default() -> Self {
        MinimalPe {
            timestamp: 0,
            pe64: false,
            imports: Vec::new(),
            text: vec![0xc3],
            rdata_extra: Vec::new(),
        }
    }
}

fn align(x: u32, a: u32) -> u32 {
    x.div_ceil(a) * a
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct ImportBlob {
    bytes: Vec<u8>,
    dir: (u32, u32),
    iat: (u32, u32),
}

impl MinimalPe {
    fn import_blob(&self, base: u32) -> ImportBlob {
        let thunk = if self.pe64 { 8 } else { 4 };
        let ord_flag = if self.pe64 { 1u64 << 63 } else { 1u64 << 31 };
        let n_desc = self.imports.len() as u32 + 1;
        let mut off = n_desc * 20;
        let mut ilt = Vec::new();
        for (_, funcs) in &self.imports {
            ilt.push(off);
            off += (funcs.len() as u32 + 1) * thunk;
        }
        let iat_start = off;
        let mut iat = Vec::new();
        for (_, funcs) in &self.imports {
            iat.push(off);
            off += (funcs.len() as u32 + 1) * thunk;
        }
        let iat_size = off - iat_start;

        let mut hints = Vec::new();
        let mut hint_off = Vec::new();
        for (_, funcs) in &self.imports {
            let mut per_dll = Vec::new();
            for (fi, f) in funcs.iter().enumerate() {
                match f {
                    ImportName::Name(name) => {
                        per_dll.push(Some(off + hints.len() as u32));
                        put_u16(&mut hints, fi as u16);
                        hints.extend_from_slice(name.as_bytes());
                        hints.push(0);
                        if hints.len() % 2 == 1 {
                            hints.push(0);
                        }
                    }
                    ImportName::Ordinal(_) => per_dll.push(None),
                }
            }
            hint_off.push(per_dll);
        }
        off += hints.len() as u32;
        let mut names = Vec::new();
        let mut name_off = Vec::new();
        for (dll, _) in &self.imports {
            name_off.push(off + names.len() as u32);
            names.extend_from_slice(dll.as_bytes());
            names.push(0);
        }

        let mut bytes = Vec::new();
        for i in 0..self.imports.len() {
            put_u32(&mut bytes, base + ilt[i]);
            put_u32(&mut bytes, 0);
            put_u32(&mut bytes, 0);
            put_u32(&mut bytes, base + name_off[i]);
            put_u32(&mut bytes, base + iat[i]);
        }
        bytes.extend_from_slice(&[0; 20]);
        for _ in 0..2 {
            for (di, (_, funcs)) in self.imports.iter().enumerate() {
                for (fi, f) in funcs.iter().enumerate() {
                    let v = match f {
                        ImportName::Name(_) => u64::from(base + hint_off[di][fi].unwrap()),
                        ImportName::Ordinal(n) => ord_flag | u64::from(*n),
                    };
                    if self.pe64 {
                        put_u64(&mut bytes, v);
                    } else {
                        put_u32(&mut bytes, v as u32);
                    }
                }
                bytes.resize(bytes.len() + thunk as usize, 0);
            }
        }
        bytes.extend_from_slice(&hints);
        bytes.extend_from_slice(&names);
        bytes.extend_from_slice(&self.rdata_extra);
        ImportBlob {
            bytes,
            dir: (base, n_desc * 20),
            iat: (base + iat_start, iat_size),
        }
    }

    pub fn build(&self) -> Vec<u8> {
        let opt_size: u32 = if self.pe64 { 0xf0 } else { 0xe0 };
        let n_sections = 2u32;
        let headers_len = E_LFANEW + 4 + 20 + opt_size + 40 * n_sections;
        let size_of_headers = align(headers_len, FILE_ALIGN);

        let text_len = self.text.len() as u32;
        let text_rva = SECT_ALIGN;
        let text_raw = align(text_len, FILE_ALIGN);
        let rdata_rva = text_rva + align(text_len, SECT_ALIGN);
        let blob = self.import_blob(rdata_rva);
        let blob_len = blob.bytes.len() as u32;
        let rdata_raw = align(blob_len, FILE_ALIGN);
        let size_of_image = rdata_rva + align(blob_len, SECT_ALIGN);
        let text_ptr = size_of_headers;
        let rdata_ptr = text_ptr + text_raw;

        let mut out = Vec::with_capacity((rdata_ptr + rdata_raw) as usize);
        out.extend_from_slice(b"MZ");
        for v in [0x90u16, 3, 0, 4, 0, 0xffff, 0, 0xb8, 0, 0, 0, 0x40, 0] {
            put_u16(&mut out, v);
        }
        out.resize(0x3c, 0);
        put_u32(&mut out, E_LFANEW);
        out.extend_from_slice(DOS_STUB);
        out.resize(E_LFANEW as usize, 0);

        out.extend_from_slice(b"PE\0\0");
        put_u16(&mut out, if self.pe64 { 0x8664 } else { 0x14c });
        put_u16(&mut out, n_sections as u16);
        put_u32(&mut out, self.timestamp);
        put_u32(&mut out, 0);
        put_u32(&mut out, 0);
        put_u16(&mut out, opt_size as u16);
        put_u16(&mut out, 0x0102 | if self.pe64 { 0x0020 } else { 0 });

        let opt_start = out.len();
        put_u16(&mut out, if self.pe64 { 0x20b } else { 0x10b });
        out.extend_from_slice(&[14, 0]);
        for v in [text_raw, rdata_raw, 0, text_rva, text_rva] {
            put_u32(&mut out, v);
        }
        if self.pe64 {
            put_u64(&mut out, 0x1_4000_0000);
        } else {
            put_u32(&mut out, rdata_rva);
            put_u32(&mut out, 0x40_0000);
        }
        put_u32(&mut out, SECT_ALIGN);
        put_u32(&mut out, FILE_ALIGN);
        for v in [6u16, 0, 0, 0, 6, 0] {
            put_u16(&mut out, v);
        }
        for v in [0, size_of_image, size_of_headers, 0] {
            put_u32(&mut out, v);
        }
        put_u16(&mut out, 3);
        put_u16(&mut out, if self.pe64 { 0x8160 } else { 0x8140 });
        for v in [0x10_0000u64, 0x1000, 0x10_0000, 0x1000] {
            if self.pe64 {
                put_u64(&mut out, v);
            } else {
                put_u32(&mut out, v as u32);
            }
        }
        put_u32(&mut out, 0);
        put_u32(&mut out, 16);
        for i in 0..16 {
            let (va, size) = match i {
                1 if !self.imports.is_empty() => blob.dir,
                12 if !self.imports.is_empty() => blob.iat,
                _ => (0, 0),
            };
            put_u32(&mut out, va);
            put_u32(&mut out, size);
        }
        debug_assert_eq!(out.len() - opt_start, opt_size as usize);

        let sections = [
            (b".text\0\0\0", text_len, text_rva, text_raw, text_ptr, 0x6000_0020u32),
            (b".rdata\0\0", blob_len, rdata_rva, rdata_raw, rdata_ptr, 0x4000_0040),
        ];
        for (name, vsize, va, raw, ptr, chars) in sections {
            out.extend_from_slice(name);
            for v in [vsize, va, raw, ptr, 0, 0] {
                put_u32(&mut out, v);
            }
            put_u16(&mut out, 0);
            put_u16(&mut out, 0);
            put_u32(&mut out, chars);
        }
        out.resize(size_of_headers as usize, 0);
        out.extend_from_slice(&self.text);
        out.resize((text_ptr + text_raw) as usize, 0);
        out.extend_from_slice(&blob.bytes);
        out.resize((rdata_ptr + rdata_raw) as usize, 0);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pe::{parse_pe, Import};

    #[test]
    fn builds_parseable_image() {
        let pe = MinimalPe {
            timestamp: 1_262_304_000,
            imports: vec![(
                "KERNEL32.dll".into(),
                vec![ImportName::Name("ExitProcess".into())],
            )],
            ..Default::default()
        };
        let s = parse_pe(&pe.build());
        assert!(s.is_pe);
        assert!(!s.truncated());
        assert_eq!(s.compile_timestamp, Some(1_262_304_000));
        assert_eq!(s.imports, vec![Import::new("KERNEL32.dll", "ExitProcess")]);
    }
}
