//! Deflate container shared by package and bundle archives.
//!
//! Entries are written in the order given with a fixed timestamp and fixed
//! permissions, so equal inputs always produce identical bytes.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

pub(crate) fn write_entries(entries: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut writer = ZipWriter::new(Cursor::new(Vec::new()));
    for (name, body) in entries {
        // Writing into memory cannot fail short of allocation failure.
        writer
            .start_file(*name, options)
            .expect("in-memory zip entry");
        writer.write_all(body).expect("in-memory zip write");
    }
    writer.finish().expect("in-memory zip finish").into_inner()
}

/// Reads every entry into memory. The error string describes the structural
/// problem; callers wrap it in their own error type.
pub(crate) fn read_entries(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut archive = ZipArchive::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
    let mut entries = BTreeMap::new();
    for index in 0..archive.len() {
        let mut file = archive.by_index(index).map_err(|e| e.to_string())?;
        let name = file.name().map_err(|e| e.to_string())?.into_owned();
        let mut body = Vec::new();
        file.read_to_end(&mut body).map_err(|e| e.to_string())?;
        if entries.insert(name.clone(), body).is_some() {
            return Err(format!("duplicate entry `{name}`"));
        }
    }
    Ok(entries)
}

pub(crate) fn take_entry(
    entries: &mut BTreeMap<String, Vec<u8>>,
    name: &str,
) -> Result<Vec<u8>, String> {
    entries
        .remove(name)
        .ok_or_else(|| format!("missing entry `{name}`"))
}
