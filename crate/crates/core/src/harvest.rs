//! Collecting the terms a library file defines, for seeding the context of
//! files that `Require` it.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ast;
use crate::context::{FileContext, Term};
use crate::document::{steps_from_spans, Step};
use crate::loadpath::LoadPath;
use crate::lsp::Session;
use crate::Result;

const CACHE_VERSION: u32 = 1;

/// Terms and notations defined by one library file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Library {
    pub logical: String,
    pub path: PathBuf,
    pub terms: Vec<Term>,
    pub notations: Vec<Term>,
    /// Libraries this one requires, as written.
    pub requires: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    version: u32,
    library: Library,
}

fn content_key(path: &Path, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(path.to_string_lossy().as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// The library's own definitions, in the order a fresh context would have
/// them after executing every step.
pub fn library_from_steps(logical: &str, path: &Path, steps: &[Step]) -> Library {
    let mut ctx = FileContext::new();
    let mut requires = vec![];
    for s in steps {
        requires.extend(ast::analyze(&s.ast).requires);
        ctx.define(s);
    }
    let tag = |t: &Term| Term { library: Some(logical.to_string()), ..t.clone() };
    Library {
        logical: logical.to_string(),
        path: path.to_path_buf(),
        terms: ctx.terms().into_iter().map(tag).collect(),
        notations: ctx.notations().into_iter().map(tag).collect(),
        requires,
    }
}

/// Libraries required by a set of steps, closed under their own requires
/// and ordered so that every library follows its dependencies.
#[derive(Debug, Default, Clone)]
pub struct Harvest {
    pub libraries: Vec<Arc<Library>>,
    /// Names that did not resolve or could not be read.
    pub warnings: Vec<String>,
}

pub struct Harvester<'a> {
    session: &'a Session,
    loadpath: &'a LoadPath,
    cache_dir: Option<PathBuf>,
    memo: &'a mut HashMap<PathBuf, Arc<Library>>,
}

impl<'a> Harvester<'a> {
    pub fn new(
        session: &'a Session,
        loadpath: &'a LoadPath,
        cache_dir: Option<PathBuf>,
        memo: &'a mut HashMap<PathBuf, Arc<Library>>,
    ) -> Self {
        Harvester { session, loadpath, cache_dir, memo }
    }

    fn from_cache(&self, key: &str) -> Option<Library> {
        let dir = self.cache_dir.as_ref()?;
        let text = std::fs::read_to_string(dir.join(format!("{key}.json"))).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.version == CACHE_VERSION).then_some(entry.library)
    }

    fn to_cache(&self, key: &str, library: &Library) {
        let Some(dir) = &self.cache_dir else { return };
        let entry = CacheEntry { version: CACHE_VERSION, library: library.clone() };
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            let tmp = dir.join(format!("{key}.json.tmp"));
            std::fs::write(&tmp, serde_json::to_vec(&entry)?)?;
            std::fs::rename(tmp, dir.join(format!("{key}.json")))
        };
        if let Err(e) = write() {
            log::warn!("cannot write harvest cache in {}: {e}", dir.display());
        }
    }

    /// Harvest one library file, through the cache when possible.
    pub fn library(&mut self, logical: &str, path: &Path) -> Result<Arc<Library>> {
        if let Some(lib) = self.memo.get(path) {
            return Ok(lib.clone());
        }
        let text = std::fs::read_to_string(path)?;
        let key = content_key(path, &text);
        let lib = match self.from_cache(&key) {
            Some(lib) => lib,
            None => {
                let handle = self.session.open_document(path, &text)?;
                let spans = self.session.request_spans(&handle);
                let (steps, _) = match spans {
                    Ok(spans) => steps_from_spans(&text, handle.index(), spans),
                    Err(e) => {
                        let _ = self.session.close_document(handle);
                        return Err(e);
                    }
                };
                self.session.close_document(handle)?;
                let lib = library_from_steps(logical, path, &steps);
                self.to_cache(&key, &lib);
                lib
            }
        };
        let lib = Arc::new(lib);
        self.memo.insert(path.to_path_buf(), lib.clone());
        Ok(lib)
    }

    /// Harvest `requires` and everything they require in turn.
    pub fn harvest(&mut self, requires: &[String]) -> Harvest {
        let mut out = Harvest::default();
        let mut done = HashSet::new();
        let mut active = HashSet::new();
        for name in requires {
            self.visit(name, &mut done, &mut active, &mut out);
        }
        out
    }

    fn visit(&mut self, name: &str, done: &mut HashSet<PathBuf>, active: &mut HashSet<PathBuf>, out: &mut Harvest) {
        let Some(file) = self.loadpath.resolve(name).cloned() else {
            out.warnings.push(format!("cannot find library {name} in the load path"));
            return;
        };
        if done.contains(&file.path) || !active.insert(file.path.clone()) {
            return;
        }
        match self.library(&file.logical, &file.path) {
            Ok(lib) => {
                for dep in &lib.requires {
                    self.visit(dep, done, active, out);
                }
                out.libraries.push(lib);
            }
            Err(e) => out.warnings.push(format!("cannot harvest {}: {e}", file.logical)),
        }
        active.remove(&file.path);
        done.insert(file.path);
    }
}

/// Explicit `Require`s in a step list, in order, without duplicates.
pub fn required_names(steps: &[Step]) -> Vec<String> {
    let mut seen = HashSet::new();
    steps
        .iter()
        .flat_map(|s| ast::analyze(&s.ast).requires)
        .filter(|n| seen.insert(n.clone()))
        .collect()
}
