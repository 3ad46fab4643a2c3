#![allow(dead_code)]

pub mod gen;

use std::path::{Path, PathBuf};

use coqnav::config::{Config, LoadPathBinding};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn coqlib() -> PathBuf {
    fixtures().join("coqlib")
}

/// Simulator-backed config with the fixture standard library.
pub fn config() -> Config {
    let mut c = Config::default().with_command([
        env!("CARGO_BIN_EXE_coq-sim-lsp").to_string(),
        "--coqlib".into(),
        coqlib().display().to_string(),
    ]);
    c.timeouts.request_secs = 30.0;
    c.workspace.library_roots = vec![LoadPathBinding { dir: coqlib().join("theories"), prefix: "Coq".into() }];
    c
}

pub fn sample() -> String {
    std::fs::read_to_string(fixtures().join("sample/test.v")).unwrap()
}

/// A temporary workspace holding `files`.
pub fn workspace(files: &[(&str, &str)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        let p = dir.path().join(name);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }
    dir
}
