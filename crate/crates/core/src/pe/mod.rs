//! Minimal Portable Executable reader.
//!
//! Exposes only what feature extraction needs: the fixed-width integer header
//! fields, the import table and the COFF compile timestamp. Parsing is total:
//! malformed input degrades to a partial summary, never an error.
//!
//! Layout reference: <https://learn.microsoft.com/en-us/windows/win32/debug/pe-format>

pub mod builder;

use serde::{Deserialize, Serialize};

pub const DOS_MAGIC: [u8; 2] = *b"MZ";
pub const PE_SIGNATURE: [u8; 4] = *b"PE\0\0";

const OPT_MAGIC_PE32: u16 = 0x10b;
const OPT_MAGIC_PE32_PLUS: u16 = 0x20b;
const IMPORT_DIRECTORY: usize = 1;
const MAX_DATA_DIRECTORIES: u32 = 16;
const SECTION_HEADER_LEN: usize = 40;
const IMPORT_DESCRIPTOR_LEN: usize = 20;

// Hostile files can declare absurd counts; these bound the work per file.
const MAX_IMPORTS: usize = 1 << 16;
const MAX_NAME_LEN: usize = 4096;

/// Field name for the flag set when a structure ran past the end of the file.
pub const TRUNCATED_FIELD: &str = "parse_truncated";
pub const TIMESTAMP_FIELD: &str = "compile_timestamp";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Import {
    pub dll: String,
    /// Function name, or `ord<N>` for imports by ordinal.
    pub function: String,
}

impl Import {
    pub fn new(dll: impl Into<String>, function: impl Into<String>) -> Self {
        Import {
            dll: dll.into(),
            function: function.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PeSummary {
    /// Header and section-table integers in on-disk order. Section fields are
    /// named `section.<index>.<field>`. Always ends with `parse_truncated`.
    pub numeric_fields: Vec<(String, i64)>,
    pub imports: Vec<Import>,
    /// COFF `TimeDateStamp`; `None` when the COFF header was not readable.
    pub compile_timestamp: Option<u32>,
    pub is_pe: bool,
}

impl PeSummary {
    pub fn field(&self, name: &str) -> Option<i64> {
        self.numeric_fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn truncated(&self) -> bool {
        self.field(TRUNCATED_FIELD) == Some(1)
    }
}

/// Returns the `(dll, function)` pairs of the import table, in on-disk order.
pub fn extract_imports(pe: &PeSummary) -> &[Import] {
    if pe.is_pe {
        &pe.imports
    } else {
        &[]
    }
}

#[derive(Clone, Copy)]
struct Bytes<'a>(&'a [u8]);

impl<'a> Bytes<'a> {
    fn slice(&self, off: u64, len: usize) -> Option<&'a [u8]> {
        let start = usize::try_from(off).ok()?;
        let end = start.checked_add(len)?;
        self.0.get(start..end)
    }

    fn u8(&self, off: u64) -> Option<u8> {
        self.slice(off, 1).map(|b| b[0])
    }

    fn u16(&self, off: u64) -> Option<u16> {
        self.slice(off, 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, off: u64) -> Option<u32> {
        self.slice(off, 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&self, off: u64) -> Option<u64> {
        self.slice(off, 8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    /// NUL-terminated string; `None` if no terminator within bounds.
    fn cstr(&self, off: u64) -> Option<String> {
        let start = usize::try_from(off).ok()?;
        let tail = self.0.get(start..)?;
        let limit = tail.len().min(MAX_NAME_LEN);
        let end = tail[..limit].iter().position(|&b| b == 0)?;
        Some(String::from_utf8_lossy(&tail[..end]).into_owned())
    }
}

#[derive(Debug, Clone, Copy)]
struct Section {
    virtual_size: u32,
    virtual_address: u32,
    size_of_raw_data: u32,
    pointer_to_raw_data: u32,
}

#[derive(Clone, Copy, PartialEq)]
enum Width {
    W16,
    W32,
    W64,
}

struct Parser<'a> {
    data: Bytes<'a>,
    fields: Vec<(String, i64)>,
    truncated: bool,
}

fn clamp_u64(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

impl<'a> Parser<'a> {
    fn push(&mut self, name: impl Into<String>, value: u64) {
        self.fields.push((name.into(), clamp_u64(value)));
    }

    fn read(&self, off: u64, width: Width) -> Option<u64> {
        match width {
            Width::W16 => self.data.u16(off).map(u64::from),
            Width::W32 => self.data.u32(off).map(u64::from),
            Width::W64 => self.data.u64(off),
        }
    }

    fn dos_header(&mut self) -> u32 {
        const NAMES: [&str; 14] = [
            "e_magic", "e_cblp", "e_cp", "e_crlc", "e_cparhdr", "e_minalloc", "e_maxalloc",
            "e_ss", "e_sp", "e_csum", "e_ip", "e_cs", "e_lfarlc", "e_ovno",
        ];
        for (i, name) in NAMES.iter().enumerate() {
            let v = self.data.u16(2 * i as u64).unwrap_or(0);
            self.push(format!("dos.{name}"), v.into());
        }
        // e_res[4] and e_res2[10] are reserved words and carry no fields.
        self.push("dos.e_oemid", self.data.u16(0x24).unwrap_or(0).into());
        self.push("dos.e_oeminfo", self.data.u16(0x26).unwrap_or(0).into());
        let lfanew = self.data.u32(0x3c).unwrap_or(0);
        self.push("dos.e_lfanew", lfanew.into());
        lfanew
    }

    /// Returns (number_of_sections, size_of_optional_header, timestamp).
    fn coff_header(&mut self, off: u64) -> Option<(u16, u16, u32)> {
        let Some(raw) = self.data.slice(off, 20) else {
            self.truncated = true;
            return None;
        };
        let h = Bytes(raw);
        let machine = h.u16(0)?;
        let sections = h.u16(2)?;
        let timestamp = h.u32(4)?;
        let opt_size = h.u16(16)?;
        self.push("coff.machine", machine.into());
        self.push("coff.number_of_sections", sections.into());
        self.push(TIMESTAMP_FIELD, timestamp.into());
        self.push("coff.pointer_to_symbol_table", h.u32(8)?.into());
        self.push("coff.number_of_symbols", h.u32(12)?.into());
        self.push("coff.size_of_optional_header", opt_size.into());
        self.push("coff.characteristics", h.u16(18)?.into());
        Some((sections, opt_size, timestamp))
    }

    /// Walks the optional header field by field within its declared size.
    /// Returns the data directories read and whether the image is PE32+.
    fn optional_header(&mut self, start: u64, declared: u16) -> (Vec<(u32, u32)>, bool) {
        let end = start + u64::from(declared);
        let Some(magic) = self.bounded(start, end, Width::W16) else {
            return (Vec::new(), false);
        };
        self.push("opt.magic", magic);
        let pe64 = match magic as u16 {
            OPT_MAGIC_PE32 => false,
            OPT_MAGIC_PE32_PLUS => true,
            _ => return (Vec::new(), false),
        };
        let wide = if pe64 { Width::W64 } else { Width::W32 };

        let mut layout: Vec<(&str, Width)> = vec![
            ("opt.size_of_code", Width::W32),
            ("opt.size_of_initialized_data", Width::W32),
            ("opt.size_of_uninitialized_data", Width::W32),
            ("opt.address_of_entry_point", Width::W32),
            ("opt.base_of_code", Width::W32),
        ];
        if !pe64 {
            layout.push(("opt.base_of_data", Width::W32));
        }
        layout.extend([
            ("opt.image_base", wide),
            ("opt.section_alignment", Width::W32),
            ("opt.file_alignment", Width::W32),
            ("opt.major_operating_system_version", Width::W16),
            ("opt.minor_operating_system_version", Width::W16),
            ("opt.major_image_version", Width::W16),
            ("opt.minor_image_version", Width::W16),
            ("opt.major_subsystem_version", Width::W16),
            ("opt.minor_subsystem_version", Width::W16),
            ("opt.win32_version_value", Width::W32),
            ("opt.size_of_image", Width::W32),
            ("opt.size_of_headers", Width::W32),
            ("opt.checksum", Width::W32),
            ("opt.subsystem", Width::W16),
            ("opt.dll_characteristics", Width::W16),
            ("opt.size_of_stack_reserve", wide),
            ("opt.size_of_stack_commit", wide),
            ("opt.size_of_heap_reserve", wide),
            ("opt.size_of_heap_commit", wide),
            ("opt.loader_flags", Width::W32),
        ]);

        // Linker versions are single bytes at +2 and +3.
        for (i, name) in ["opt.major_linker_version", "opt.minor_linker_version"]
            .into_iter()
            .enumerate()
        {
            let off = start + 2 + i as u64;
            if off >= end {
                return (Vec::new(), pe64);
            }
            match self.data.u8(off) {
                Some(v) => self.push(name, v.into()),
                None => {
                    self.truncated = true;
                    return (Vec::new(), pe64);
                }
            }
        }

        let mut off = start + 4;
        for (name, width) in layout {
            let Some(v) = self.bounded(off, end, width) else {
                return (Vec::new(), pe64);
            };
            self.push(name, v);
            off += width_len(width);
        }

        let Some(count) = self.bounded(off, end, Width::W32) else {
            return (Vec::new(), pe64);
        };
        self.push("opt.number_of_rva_and_sizes", count);
        off += 4;

        let mut dirs = Vec::new();
        for i in 0..(count as u32).min(MAX_DATA_DIRECTORIES) {
            let Some(va) = self.bounded(off, end, Width::W32) else {
                break;
            };
            let Some(size) = self.bounded(off + 4, end, Width::W32) else {
                break;
            };
            self.push(format!("opt.data_directory.{i}.virtual_address"), va);
            self.push(format!("opt.data_directory.{i}.size"), size);
            dirs.push((va as u32, size as u32));
            off += 8;
        }
        (dirs, pe64)
    }

    /// Reads a field lying entirely inside `[off, end)`. Running off the end of
    /// the file (as opposed to the declared header) sets the truncation flag.
    fn bounded(&mut self, off: u64, end: u64, width: Width) -> Option<u64> {
        if off + width_len(width) > end {
            return None;
        }
        let v = self.read(off, width);
        if v.is_none() {
            self.truncated = true;
        }
        v
    }

    fn section_table(&mut self, start: u64, count: u16) -> Vec<Section> {
        let mut sections = Vec::with_capacity(count.min(96) as usize);
        for i in 0..u64::from(count) {
            let Some(raw) = self.data.slice(start + i * SECTION_HEADER_LEN as u64, SECTION_HEADER_LEN)
            else {
                self.truncated = true;
                break;
            };
            let h = Bytes(raw);
            let s = Section {
                virtual_size: h.u32(8).unwrap(),
                virtual_address: h.u32(12).unwrap(),
                size_of_raw_data: h.u32(16).unwrap(),
                pointer_to_raw_data: h.u32(20).unwrap(),
            };
            self.push(format!("section.{i}.virtual_size"), s.virtual_size.into());
            self.push(format!("section.{i}.virtual_address"), s.virtual_address.into());
            self.push(format!("section.{i}.size_of_raw_data"), s.size_of_raw_data.into());
            self.push(format!("section.{i}.characteristics"), h.u32(36).unwrap().into());
            sections.push(s);
        }
        sections
    }

    fn imports(&mut self, sections: &[Section], dir_rva: u32, pe64: bool) -> Vec<Import> {
        let mut out = Vec::new();
        let map = RvaMap {
            sections,
            file_len: self.data.0.len() as u64,
        };
        let Some(mut desc) = map.offset(dir_rva) else {
            self.truncated = true;
            return out;
        };
        let thunk_len = if pe64 { 8 } else { 4 };
        let ordinal_flag = if pe64 { 1u64 << 63 } else { 1u64 << 31 };

        loop {
            let Some(raw) = self.data.slice(desc, IMPORT_DESCRIPTOR_LEN) else {
                self.truncated = true;
                return out;
            };
            let d = Bytes(raw);
            let lookup = d.u32(0).unwrap();
            let name_rva = d.u32(12).unwrap();
            let iat = d.u32(16).unwrap();
            if name_rva == 0 {
                return out;
            }
            let Some(dll) = map.offset(name_rva).and_then(|o| self.data.cstr(o)) else {
                self.truncated = true;
                return out;
            };
            desc += IMPORT_DESCRIPTOR_LEN as u64;
            if dll.is_empty() {
                continue;
            }

            let thunk_rva = if lookup != 0 { lookup } else { iat };
            let Some(mut thunk) = map.offset(thunk_rva) else {
                self.truncated = true;
                return out;
            };
            loop {
                let entry = if pe64 { self.data.u64(thunk) } else { self.data.u32(thunk).map(u64::from) };
                let Some(entry) = entry else {
                    self.truncated = true;
                    return out;
                };
                if entry == 0 {
                    break;
                }
                let function = if entry & ordinal_flag != 0 {
                    format!("ord{}", entry & 0xffff)
                } else {
                    let hint_rva = (entry & 0x7fff_ffff) as u32;
                    match map.offset(hint_rva).and_then(|o| self.data.cstr(o + 2)) {
                        Some(name) => name,
                        None => {
                            self.truncated = true;
                            return out;
                        }
                    }
                };
                out.push(Import {
                    dll: dll.clone(),
                    function,
                });
                if out.len() >= MAX_IMPORTS {
                    return out;
                }
                thunk += thunk_len;
            }
        }
    }
}

fn width_len(w: Width) -> u64 {
    match w {
        Width::W16 => 2,
        Width::W32 => 4,
        Width::W64 => 8,
    }
}

struct RvaMap<'s> {
    sections: &'s [Section],
    file_len: u64,
}

impl RvaMap<'_> {
    /// File offset for an RVA. Addresses outside every section map 1:1,
    /// which covers data placed in the headers.
    fn offset(&self, rva: u32) -> Option<u64> {
        let rva = u64::from(rva);
        let off = self
            .sections
            .iter()
            .find_map(|s| {
                let va = u64::from(s.virtual_address);
                let span = u64::from(s.virtual_size.max(s.size_of_raw_data));
                (va <= rva && rva < va + span)
                    .then(|| u64::from(s.pointer_to_raw_data) + (rva - va))
            })
            .unwrap_or(rva);
        (off < self.file_len).then_some(off)
    }
}

fn not_pe(truncated: bool) -> PeSummary {
    PeSummary {
        numeric_fields: vec![(TRUNCATED_FIELD.to_string(), i64::from(truncated))],
        imports: Vec::new(),
        compile_timestamp: None,
        is_pe: false,
    }
}

/// Parses the headers and import table of a PE image.
///
/// Files without an `MZ` magic and a valid `PE\0\0` signature come back with
/// `is_pe == false` and only the `parse_truncated` field; a file that starts
/// with `MZ` but ends before the signature is flagged as truncated.
pub fn parse_pe(raw: &[u8]) -> PeSummary {
    if raw.len() < 2 || raw[..2] != DOS_MAGIC {
        return not_pe(false);
    }
    if raw.len() < 64 {
        return not_pe(true);
    }
    let data = Bytes(raw);
    let lfanew = u64::from(data.u32(0x3c).unwrap());
    match data.slice(lfanew, 4) {
        None => return not_pe(true),
        Some(sig) if sig != PE_SIGNATURE => return not_pe(false),
        Some(_) => {}
    }

    let mut p = Parser {
        data,
        fields: Vec::with_capacity(128),
        truncated: false,
    };
    p.dos_header();
    let coff = lfanew + 4;
    let mut imports = Vec::new();
    let mut compile_timestamp = None;
    if let Some((n_sections, opt_size, timestamp)) = p.coff_header(coff) {
        compile_timestamp = Some(timestamp);
        let opt = coff + 20;
        let (dirs, pe64) = p.optional_header(opt, opt_size);
        let sections = p.section_table(opt + u64::from(opt_size), n_sections);
        if let Some(&(rva, size)) = dirs.get(IMPORT_DIRECTORY) {
            if rva != 0 && size != 0 {
                imports = p.imports(&sections, rva, pe64);
            }
        }
    }
    let truncated = p.truncated;
    p.push(TRUNCATED_FIELD, u64::from(truncated));
    PeSummary {
        numeric_fields: p.fields,
        imports,
        compile_timestamp,
        is_pe: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_are_not_pe() {
        let s = parse_pe(&[0u8; 64]);
        assert!(!s.is_pe);
        assert!(s.imports.is_empty());
        assert_eq!(s.numeric_fields, vec![("parse_truncated".to_string(), 0)]);
        assert_eq!(s.compile_timestamp, None);
    }

    #[test]
    fn short_mz_is_truncated() {
        let s = parse_pe(b"MZ\x90\x00");
        assert!(!s.is_pe);
        assert!(s.truncated());
    }

    #[test]
    fn bad_signature_is_not_pe() {
        let mut raw = vec![0u8; 256];
        raw[..2].copy_from_slice(b"MZ");
        raw[0x3c] = 0x80;
        raw[0x80..0x84].copy_from_slice(b"NE\0\0");
        let s = parse_pe(&raw);
        assert!(!s.is_pe);
        assert!(!s.truncated());
    }

    #[test]
    fn lfanew_past_end_is_truncated() {
        let mut raw = vec![0u8; 128];
        raw[..2].copy_from_slice(b"MZ");
        raw[0x3c..0x40].copy_from_slice(&0xffff_fff0u32.to_le_bytes());
        let s = parse_pe(&raw);
        assert!(!s.is_pe);
        assert!(s.truncated());
    }

    #[test]
    fn signature_without_coff_keeps_dos_fields() {
        let mut raw = vec![0u8; 0x84];
        raw[..2].copy_from_slice(b"MZ");
        raw[0x3c] = 0x80;
        raw[0x80..0x84].copy_from_slice(b"PE\0\0");
        let s = parse_pe(&raw);
        assert!(s.is_pe);
        assert!(s.truncated());
        assert_eq!(s.compile_timestamp, None);
        assert_eq!(s.field("dos.e_lfanew"), Some(0x80));
        assert_eq!(s.numeric_fields.last().unwrap().0, TRUNCATED_FIELD);
    }

    #[test]
    fn extract_imports_ignores_non_pe() {
        let mut s = parse_pe(&[0u8; 16]);
        s.imports.push(Import::new("a.dll", "f"));
        assert!(extract_imports(&s).is_empty());
    }
}
