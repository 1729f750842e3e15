//! Line-delimited JSON scene manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scene: a target utterance, an interferer, the video frames, and the
/// mixing SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub target_path: PathBuf,
    pub interferer_path: PathBuf,
    pub frames_path: PathBuf,
    pub snr_db: f64,
}

impl ManifestEntry {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("`id` is empty".into());
        }
        for (name, p) in [
            ("target_path", &self.target_path),
            ("interferer_path", &self.interferer_path),
            ("frames_path", &self.frames_path),
        ] {
            if p.as_os_str().is_empty() {
                return Err(format!("`{name}` is empty"));
            }
        }
        if !self.snr_db.is_finite() {
            return Err("`snr_db` is not finite".into());
        }
        Ok(())
    }

    /// Copy with relative paths joined onto `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let join = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        Self {
            target_path: join(&self.target_path),
            interferer_path: join(&self.interferer_path),
            frames_path: join(&self.frames_path),
            ..self.clone()
        }
    }
}

/// Parses manifest text. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let entry: ManifestEntry = serde_json::from_value(value).map_err(|e| Error::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        entry.validate().map_err(|message| Error::Schema { line: line_no, message })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads a manifest file. Paths are returned as written.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// One JSON object per line, in order.
pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entries always serialize") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"S00001","target_path":"clean/S00001.wav","interferer_path":"interferer/S00001.wav","frames_path":"frames/S00001.avst","snr_db":2.5}"#;

    #[test]
    fn empty_and_blank() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn one_line() {
        let e = parse_manifest(LINE).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].id, "S00001");
        assert_eq!(e[0].snr_db, 2.5);
        assert_eq!(e[0].frames_path, PathBuf::from("frames/S00001.avst"));
        assert_eq!(parse_manifest(&format_manifest(&e)).unwrap(), e);
    }

    #[test]
    fn errors_name_the_line() {
        let missing = LINE.replace(r#","snr_db":2.5"#, "");
        let text = format!("{LINE}\n\n{missing}\n");
        assert!(matches!(parse_manifest(&text), Err(Error::Schema { line: 3, .. })));
        assert!(matches!(parse_manifest("{not json"), Err(Error::Parse { line: 1, .. })));
        let empty_id = LINE.replace("S00001\"", "\"");
        assert!(matches!(parse_manifest(&empty_id), Err(Error::Schema { line: 1, .. })));
        assert!(matches!(parse_manifest("[1, 2]"), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let e = &parse_manifest(LINE).unwrap()[0];
        let r = e.resolved(Path::new("/data"));
        assert_eq!(r.target_path, PathBuf::from("/data/clean/S00001.wav"));
    }
}
