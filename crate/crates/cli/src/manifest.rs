//! Labeled dataset manifest: one scan per line, `<scan_dir>\t<label>`,
//! labels `covid` or `non_covid`, `#` comments allowed. Relative scan paths
//! resolve against the data root.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctseg::volume::ClassLabel;

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub dir: PathBuf,
    pub scan_id: String,
    pub label: ClassLabel,
}

pub fn load_labeled_manifest(path: &Path, data_root: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let dir_raw = fields.next().unwrap_or_default();
        let scan_id = Path::new(dir_raw)
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or(dir_raw)
            .to_string();
        let label_raw = match fields.next() {
            Some(l) => l,
            None => bail!(
                "manifest {} line {}: scan {scan_id} has no label",
                path.display(),
                lineno + 1
            ),
        };
        let label = ClassLabel::parse(label_raw).ok_or_else(|| {
            anyhow::anyhow!(
                "manifest {} line {}: unknown label {label_raw:?} for scan {scan_id}",
                path.display(),
                lineno + 1
            )
        })?;
        let dir = if Path::new(dir_raw).is_absolute() {
            PathBuf::from(dir_raw)
        } else {
            data_root.join(dir_raw)
        };
        entries.push(ManifestEntry {
            dir,
            scan_id,
            label,
        });
    }
    if entries.is_empty() {
        bail!("manifest {} lists no scans", path.display());
    }
    Ok(entries)
}
