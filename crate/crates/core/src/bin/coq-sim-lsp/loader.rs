//! Maps logical library names to files: the installed library under
//! `--coqlib`, and project bindings from `_CoqProject`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::check::{check, Loader};
use crate::kernel::{Env, KResult};

#[derive(Serialize, Deserialize)]
pub struct VoFile {
    pub sim_vo: u32,
    pub source: String,
}

#[derive(Debug, Clone)]
struct Candidate {
    logical: String,
    path: PathBuf,
    /// Installed library files are loaded from source; project files need a `.vo`.
    installed: bool,
}

pub struct FsLoader {
    candidates: Vec<Candidate>,
    noinit: bool,
    /// The document being checked, which may not `Require` itself.
    current: Mutex<Option<PathBuf>>,
    cache: Mutex<HashMap<PathBuf, (String, Arc<Env>)>>,
}

fn logical_name(prefix: &str, rel: &Path) -> Option<String> {
    let mut parts: Vec<String> = prefix.split('.').filter(|s| !s.is_empty()).map(String::from).collect();
    let stem = rel.with_extension("");
    for c in stem.components() {
        parts.push(c.as_os_str().to_str()?.to_string());
    }
    Some(parts.join("."))
}

fn walk(dir: &Path, prefix: &str, installed: bool, out: &mut Vec<Candidate>) {
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name().into_iter().flatten() {
        let p = entry.path();
        if p.extension().and_then(|e| e.to_str()) != Some("v") {
            continue;
        }
        if let Some(logical) = p.strip_prefix(dir).ok().and_then(|rel| logical_name(prefix, rel)) {
            out.push(Candidate { logical, path: p.to_path_buf(), installed });
        }
    }
}

/// `-Q dir prefix` and `-R dir prefix` pairs; other flags are skipped.
pub fn project_bindings(text: &str) -> Vec<(String, String)> {
    let words: Vec<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .map(|w| w.trim_matches('"').to_string())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        if words[i] == "-Q" || words[i] == "-R" {
            if let (Some(d), Some(p)) = (words.get(i + 1), words.get(i + 2)) {
                out.push((d.clone(), p.trim_matches('\'').to_string()));
                i += 3;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl FsLoader {
    pub fn new(coqlib: Option<&Path>, root: Option<&Path>, noinit: bool) -> Self {
        let mut candidates = Vec::new();
        if let Some(lib) = coqlib {
            walk(&lib.join("theories"), "Coq", true, &mut candidates);
        }
        if let Some(root) = root {
            match std::fs::read_to_string(root.join("_CoqProject")) {
                Ok(text) => {
                    for (dir, prefix) in project_bindings(&text) {
                        walk(&root.join(dir), &prefix, false, &mut candidates);
                    }
                }
                Err(_) => walk(root, "", false, &mut candidates),
            }
        }
        FsLoader { candidates, noinit, current: Mutex::new(None), cache: Mutex::new(HashMap::new()) }
    }

    /// Logical name of a file, if it sits under a binding.
    pub fn logical_of(&self, path: &Path) -> Option<String> {
        let path = path.canonicalize().ok()?;
        self.candidates
            .iter()
            .find(|c| c.path.canonicalize().ok().as_deref() == Some(path.as_path()))
            .map(|c| c.logical.clone())
    }

    pub fn set_current(&self, path: Option<PathBuf>) {
        *self.current.lock().unwrap() = path.and_then(|p| p.canonicalize().ok());
    }

    fn source_of(c: &Candidate) -> Option<String> {
        if c.installed {
            return std::fs::read_to_string(&c.path).ok();
        }
        let vo = std::fs::read_to_string(c.path.with_extension("vo")).ok()?;
        serde_json::from_str::<VoFile>(&vo).ok().map(|v| v.source)
    }
}

impl Loader for FsLoader {
    fn load(&self, name: &str, stack: &[String]) -> KResult<(String, Arc<Env>)> {
        let current = self.current.lock().unwrap().clone();
        let suffix = format!(".{name}");
        let mut matches: Vec<&Candidate> = self
            .candidates
            .iter()
            .filter(|c| c.logical == name || c.logical.ends_with(&suffix))
            .filter(|c| current.is_none() || c.path.canonicalize().ok() != current)
            .collect();
        matches.sort_by_key(|c| (c.logical != name, c.logical.len()));
        let (cand, source) = matches
            .into_iter()
            .find_map(|c| Self::source_of(c).map(|s| (c, s)))
            .ok_or_else(|| format!("Cannot find a physical path bound to logical path matching suffix {name}."))?;
        if stack.contains(&cand.logical) {
            return Err(format!("Recursive dependency on library {}.", cand.logical));
        }
        if let Some((src, env)) = self.cache.lock().unwrap().get(&cand.path) {
            if *src == source {
                return Ok((cand.logical.clone(), env.clone()));
            }
        }
        let mut st = stack.to_vec();
        st.push(cand.logical.clone());
        let (mut env, _) = check(&source, self, &st, Duration::ZERO);
        env.loaded.insert(cand.logical.clone());
        let env = Arc::new(env);
        self.cache.lock().unwrap().insert(cand.path.clone(), (source, env.clone()));
        Ok((cand.logical.clone(), env))
    }

    fn prelude(&self, stack: &[String]) -> Option<Arc<Env>> {
        if self.noinit || stack.iter().any(|s| s.starts_with("Coq.Init.")) {
            return None;
        }
        if !self.candidates.iter().any(|c| c.logical == "Coq.Init.Prelude") {
            return None;
        }
        self.load("Coq.Init.Prelude", stack).ok().map(|r| r.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bindings_parse() {
        let b = project_bindings("-Q theories Foo\n# comment -R x y\n-R src \"\"\n-arg -w\nfile.v\n");
        assert_eq!(b, vec![("theories".into(), "Foo".into()), ("src".into(), "".into())]);
    }

    #[test]
    fn names_from_paths() {
        assert_eq!(logical_name("Coq", Path::new("Lists/List.v")).unwrap(), "Coq.Lists.List");
        assert_eq!(logical_name("", Path::new("a.v")).unwrap(), "a");
    }
}
