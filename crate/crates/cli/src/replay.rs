use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use elicit_core::serial;
use elicit_core::sim::{replay, SessionArchive};

use crate::output::write_csv;

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Archive exported from a session.
    pub archive: PathBuf,
    /// Also write `round,mse` to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fails when the replayed error history differs from the archived one.
pub fn run(a: &ReplayArgs) -> Result<()> {
    let archive: SessionArchive =
        serial::load(&a.archive).with_context(|| format!("reading {}", a.archive.display()))?;
    let state = replay(&archive)?;
    for (t, e) in state.mse_history.iter().enumerate() {
        println!("{t:>5} {e:.6}");
    }
    if let Some(out) = &a.out {
        write_csv(
            out,
            &["round", "mse"],
            state
                .mse_history
                .iter()
                .enumerate()
                .map(|(t, e)| [t.to_string(), e.to_string()]),
        )?;
    }
    if state.mse_history != archive.mse_history {
        let first = state
            .mse_history
            .iter()
            .zip(&archive.mse_history)
            .position(|(a, b)| a != b)
            .unwrap_or(state.mse_history.len().min(archive.mse_history.len()));
        anyhow::bail!("replay diverges from the archive at round {first}");
    }
    println!("replay matches the archived history ({} rounds)", archive.transcript.len());
    Ok(())
}
