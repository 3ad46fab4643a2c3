//! Mapping between logical library names and `.v` files.

use std::path::{Path, PathBuf};

use crate::config::{Config, LoadPathBinding};

/// Read `-Q dir Prefix` and `-R dir Prefix` lines from a `_CoqProject`.
/// Directories are resolved against `root`.
pub fn parse_coq_project(text: &str, root: &Path) -> Vec<LoadPathBinding> {
    let mut out = vec![];
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        let words: Vec<&str> = line.split_whitespace().collect();
        let mut i = 0;
        while i < words.len() {
            if (words[i] == "-Q" || words[i] == "-R") && i + 2 < words.len() {
                let prefix = words[i + 2].trim_matches('"');
                out.push(LoadPathBinding { dir: root.join(words[i + 1]), prefix: prefix.to_string() });
                i += 3;
            } else {
                i += 1;
            }
        }
    }
    out
}

/// A `.v` file reachable through the load path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryFile {
    pub logical: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct LoadPath {
    bindings: Vec<LoadPathBinding>,
    files: Vec<LibraryFile>,
}

fn join_logical(prefix: &str, rel: &Path) -> Option<String> {
    let mut parts: Vec<String> = prefix.split('.').filter(|s| !s.is_empty()).map(str::to_string).collect();
    let stem = rel.with_extension("");
    for c in stem.components() {
        parts.push(c.as_os_str().to_str()?.to_string());
    }
    Some(parts.join("."))
}

fn components(name: &str) -> Vec<&str> {
    name.split('.').filter(|s| !s.is_empty()).collect()
}

/// Whether `Require name` (with any `From` prefix already prepended) can
/// denote `logical`: some prefix of `name` starts the logical name and the
/// rest ends it.
fn denotes(name: &[&str], logical: &[&str]) -> bool {
    if logical.len() < name.len() {
        return false;
    }
    (0..name.len()).any(|k| logical.starts_with(&name[..k]) && logical.ends_with(&name[k..]))
}

impl LoadPath {
    pub fn new(bindings: Vec<LoadPathBinding>) -> Self {
        let mut files = vec![];
        for b in &bindings {
            let walker = walkdir::WalkDir::new(&b.dir).sort_by_file_name();
            for entry in walker.into_iter().filter_map(|e| e.ok()) {
                let p = entry.path();
                if !entry.file_type().is_file() || p.extension().is_none_or(|e| e != "v") {
                    continue;
                }
                let Ok(rel) = p.strip_prefix(&b.dir) else { continue };
                if let Some(logical) = join_logical(&b.prefix, rel) {
                    files.push(LibraryFile { logical, path: p.to_path_buf() });
                }
            }
        }
        LoadPath { bindings, files }
    }

    /// Bindings for a workspace: config bindings, then `_CoqProject` (or
    /// the root bound to the empty prefix), then installed libraries.
    pub fn for_workspace(root: &Path, config: &Config) -> Self {
        let mut bindings = config.workspace.bindings.clone();
        match std::fs::read_to_string(root.join("_CoqProject")) {
            Ok(text) => bindings.extend(parse_coq_project(&text, root)),
            Err(_) => bindings.push(LoadPathBinding { dir: root.to_path_buf(), prefix: String::new() }),
        }
        bindings.extend(config.workspace.library_roots.iter().cloned());
        Self::new(bindings)
    }

    pub fn bindings(&self) -> &[LoadPathBinding] {
        &self.bindings
    }

    pub fn files(&self) -> &[LibraryFile] {
        &self.files
    }

    pub fn logical_name(&self, path: &Path) -> Option<&str> {
        let path = std::path::absolute(path).ok()?;
        self.files.iter().find(|f| f.path == path).map(|f| f.logical.as_str())
    }

    /// The file a `Require` of `name` loads. An exact logical name wins,
    /// otherwise the shortest matching one; earlier bindings break ties.
    pub fn resolve(&self, name: &str) -> Option<&LibraryFile> {
        if let Some(f) = self.files.iter().find(|f| f.logical == name) {
            return Some(f);
        }
        let want = components(name);
        if want.is_empty() {
            return None;
        }
        self.files
            .iter()
            .filter(|f| denotes(&want, &components(&f.logical)))
            .min_by_key(|f| components(&f.logical).len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in ["theories/Init/Datatypes.v", "theories/Lists/List.v", "src/Util.v", "src/sub/Deep.v"] {
            let p = dir.path().join(f);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, "").unwrap();
        }
        dir
    }

    #[test]
    fn coq_project_lines() {
        let b = parse_coq_project("-Q src Proj # comment\n-R theories Coq\n-arg -w\n", Path::new("/w"));
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].dir, Path::new("/w/src"));
        assert_eq!(b[1].prefix, "Coq");
    }

    #[test]
    fn partial_and_from_qualified_names() {
        let dir = tree();
        let lp = LoadPath::new(vec![
            LoadPathBinding { dir: dir.path().join("src"), prefix: "Proj".into() },
            LoadPathBinding { dir: dir.path().join("theories"), prefix: "Coq".into() },
        ]);
        assert_eq!(lp.resolve("List").unwrap().logical, "Coq.Lists.List");
        assert_eq!(lp.resolve("Coq.List").unwrap().logical, "Coq.Lists.List");
        assert_eq!(lp.resolve("Lists.List").unwrap().logical, "Coq.Lists.List");
        assert_eq!(lp.resolve("Proj.sub.Deep").unwrap().logical, "Proj.sub.Deep");
        assert_eq!(lp.resolve("Deep").unwrap().logical, "Proj.sub.Deep");
        assert!(lp.resolve("ist").is_none());
        assert!(lp.resolve("Nowhere").is_none());
        let path = dir.path().join("src/Util.v");
        assert_eq!(lp.logical_name(&path), Some("Proj.Util"));
    }

    #[test]
    fn root_without_project_binds_empty_prefix() {
        let dir = tree();
        let lp = LoadPath::for_workspace(&dir.path().join("src"), &Config::default());
        assert_eq!(lp.resolve("Util").unwrap().logical, "Util");
        assert_eq!(lp.resolve("sub.Deep").unwrap().logical, "sub.Deep");
    }
}
