//! `artiscope`: batch analysis on `.gvs` session files.
//!
//! Exit status is 0 on success, 1 when analysis, I/O or configuration fails
//! and 2 for usage errors.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "artiscope", version, about = "Layered forensic artifact analysis")]
pub struct Cli {
    /// Configuration file; defaults to $ARTISCOPE_CONFIG.
    #[arg(long, global = true, env = "ARTISCOPE_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Print the JSON payload the HTTP API returns for the same request.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct Target {
    /// Saved session (.gvs).
    pub session: PathBuf,
    /// Artifact id, e.g. a3.
    pub artifact: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a file recursively and print its artifact tree.
    Analyze {
        file: PathBuf,
        /// Write the session to this file.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Extra rule pack, loaded after the bundled one; repeatable.
        #[arg(long = "rules")]
        rules: Vec<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Print the artifact tree of a saved session.
    Tree {
        session: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Print indicators and facts of a saved session.
    Findings {
        session: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Print the pending suggestions of a saved session.
    Suggestions {
        session: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Strings view; recorded as ViewedStrings.
    Strings {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        min_length: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Hex view; recorded as ViewedHex.
    Hex {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 0)]
        offset: u64,
        #[arg(long)]
        length: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
    /// Windowed entropy; recorded as ViewedEntropy.
    Entropy {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Run a transform; its output becomes a child artifact.
    Transform {
        #[command(flatten)]
        target: Target,
        /// DecodeBase64, DecodeHex, DecodeUrl, XorBruteForce, JsCharCodeDecode or TryArchivePassword.
        kind: String,
        /// Transform parameter, e.g. password=infected; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
        #[command(flatten)]
        out: Output,
    },
    /// Record an analyst action (Opened, ViewedImports, MarkedIoc, ..., or Rename).
    Act {
        #[command(flatten)]
        target: Target,
        action: String,
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
        #[command(flatten)]
        out: Output,
    },
    /// Export the investigation report.
    Report {
        session: PathBuf,
        /// Markdown instead of plain text.
        #[arg(long)]
        md: bool,
    },
    /// Ask the configured model about an artifact.
    Chat {
        #[command(flatten)]
        target: Target,
        question: String,
        #[command(flatten)]
        out: Output,
    },
}

fn parse_param(raw: &str) -> Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got {raw:?}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match commands::run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
