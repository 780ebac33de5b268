#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use eyecontact_core::synth::{generate, GazeState, ParticipantScript, SessionScript};

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_eyecontact"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Mutual glances of exactly nine frames every four seconds, plus one-sided looks in between.
pub fn glances_script(seed: u64, duration_s: f64) -> SessionScript {
    let mut s = SessionScript::new(seed, duration_s);
    let mut a = ParticipantScript { default_state: GazeState::Face, ..Default::default() };
    let mut b = ParticipantScript::default();
    let mut t = 2.0;
    while t + 3.0 < duration_s {
        a = a.with_state(GazeState::Eyes, t, t + 0.36);
        b = b.with_state(GazeState::Eyes, t, t + 0.36).with_state(GazeState::Face, t + 1.0, t + 2.0);
        a = a.with_state(GazeState::Eyes, t + 1.5, t + 1.8);
        t += 4.0;
    }
    s.a = a;
    s.b = b;
    s
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub script: SessionScript,
}

impl Fixture {
    pub fn new(script: SessionScript) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&script).unwrap().write_files(dir.path()).unwrap();
        Self { dir, manifest, script }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn manifest_str(&self) -> &str {
        self.manifest.to_str().unwrap()
    }
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
