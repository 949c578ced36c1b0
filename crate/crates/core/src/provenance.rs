//! Tags that tie every output file to the manifest of its run.

use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub manifest_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// `# manifest_sha256=<hash> seed=<seed>` comment line for CSV files.
    pub fn write_csv_comment<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# manifest_sha256={} seed={}", self.manifest_sha256, self.seed)
    }
}

/// Pretty JSON of `value`, with `manifest_sha256` and `seed` keys added
/// when `value` serializes to an object.
pub fn write_json<W: Write, T: Serialize>(value: &T, w: W, prov: Option<&Provenance>) -> std::io::Result<()> {
    let mut v = serde_json::to_value(value).map_err(std::io::Error::other)?;
    if let (Some(p), Some(obj)) = (prov, v.as_object_mut()) {
        obj.insert("manifest_sha256".into(), p.manifest_sha256.clone().into());
        obj.insert("seed".into(), p.seed.into());
    }
    serde_json::to_writer_pretty(w, &v).map_err(std::io::Error::other)
}

pub fn write_csv_comment<W: Write>(w: &mut W, prov: Option<&Provenance>) -> std::io::Result<()> {
    match prov {
        Some(p) => p.write_csv_comment(w),
        None => Ok(()),
    }
}
