use std::path::Path;

use anyhow::{bail, Context, Result};
use gadgetscan::pipeline::ProgramSource;
use walkdir::WalkDir;

const EXTENSIONS: &[&str] = &["c", "h", "cc", "cpp", "cxx", "c++", "hh", "hpp", "hxx", "inl"];

fn is_source(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn read_lossy(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{}: not valid UTF-8, invalid bytes replaced", path.display());
            String::from_utf8_lossy(e.as_bytes()).into_owned()
        }
    })
}

fn display_rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// Load a directory of programs, sorted by name. A top-level subdirectory is
/// one program made of every C/C++ file below it; a top-level file is a
/// program on its own.
pub fn load_corpus(root: &Path) -> Result<Vec<ProgramSource>> {
    if root.is_file() {
        return Ok(vec![single_file(root)?]);
    }
    if !root.is_dir() {
        bail!("corpus {} does not exist", root.display());
    }
    let mut programs = Vec::new();
    for entry in WalkDir::new(root).min_depth(1).max_depth(1).sort_by_file_name() {
        let entry = entry.with_context(|| format!("listing {}", root.display()))?;
        let path = entry.path();
        if entry.file_type().is_dir() {
            let mut files = Vec::new();
            for f in WalkDir::new(path).sort_by_file_name() {
                let f = f.with_context(|| format!("listing {}", path.display()))?;
                if f.file_type().is_file() && is_source(f.path()) {
                    files.push((display_rel(f.path(), path), read_lossy(f.path())?));
                }
            }
            if files.is_empty() {
                log::warn!("{}: no C/C++ files, skipped", path.display());
                continue;
            }
            programs.push(ProgramSource { name: entry.file_name().to_string_lossy().into_owned(), files });
        } else if entry.file_type().is_file() && is_source(path) {
            programs.push(single_file(path)?);
        }
    }
    Ok(programs)
}

fn single_file(path: &Path) -> Result<ProgramSource> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(ProgramSource { name: name.clone(), files: vec![(name, read_lossy(path)?)] })
}
