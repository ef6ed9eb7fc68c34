use std::path::Path;

use crate::config::FileConfig;
use crate::error::Result;
use crate::manifest::{write_atomic, Workdir};

pub mod curve;
pub mod evaluate;
pub mod execute;
pub mod generate;
pub mod reward;
pub mod simulate;
pub mod split;
pub mod vote;

/// State shared by every subcommand.
pub struct Context {
    pub wd: Workdir,
    pub config: FileConfig,
}

impl Context {
    pub fn write(&self, rel: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.wd.path(rel), bytes)
    }
}

/// Progress and summaries go to stderr so stdout stays machine-readable.
fn note(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}
