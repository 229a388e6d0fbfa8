//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod supervised;

use std::path::Path;
use std::process::{Command, Output};

pub fn vie(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vie")).args(args).current_dir(cwd).output().expect("run vie binary")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}
