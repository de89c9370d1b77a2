use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use fbcv_cli::{commands, server};
use fbcv_core::bundle::read_bundle;
use fbcv_core::synth::SynthParams;

/// Forensic bullet comparison: scans to signals, scores, analyses and a
/// viewer bundle.
#[derive(Debug, Parser)]
#[command(name = "fbcv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate every scan listed in a manifest.
    Ingest {
        /// Directory the manifest paths are relative to.
        dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract one signal record per scan, plus a flags report.
    Signal {
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every pair of bullets in a signals directory.
    Compare {
        signals: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster the scores and compute variograms and outlier flags.
    Analyze {
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scan manifest providing barrels and shot numbers; without it no
        /// variogram is computed.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assemble the viewer bundle (gzip-compressed when `--out` ends in .gz).
    Bundle {
        signals: PathBuf,
        scores: PathBuf,
        analysis: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve a bundle and the viewer's static files over HTTP.
    Serve {
        bundle: PathBuf,
        #[arg(long, env = "FBCV_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "FBCV_BIND", default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Write a synthetic study (x3p scans, manifest and ground truth).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        barrels: usize,
        #[arg(long, default_value_t = 8)]
        bullets: usize,
        #[arg(long, default_value_t = 2000)]
        signal_len: usize,
    },
    /// Print the default configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            dir,
            manifest,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            let report = commands::ingest(&dir, &manifest, &cfg)?;
            let excluded = report.iter().filter(|e| e.excluded).count();
            match out {
                Some(path) => commands::save(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            tracing::info!(scans = report.len(), excluded, "ingested");
        }
        Command::Signal {
            manifest,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            let flags = commands::signal(&manifest, &cfg, &out)?;
            tracing::info!(flagged = flags.len(), out = %out.display(), "signals written");
        }
        Command::Compare {
            signals,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            let scores = commands::compare(&signals, &cfg)?;
            commands::save(&out, &scores)?;
            tracing::info!(pairs = scores.len(), out = %out.display(), "scores written");
        }
        Command::Analyze {
            scores,
            out,
            manifest,
            config,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            let bullets = match manifest {
                Some(m) => commands::manifest_bullets(&m)?,
                None => {
                    tracing::warn!("no --manifest given: shot numbers unknown, variogram skipped");
                    Vec::new()
                }
            };
            let report = commands::analyze_scores(&scores, &bullets, &cfg)?;
            commands::save(&out, &report)?;
            tracing::info!(out = %out.display(), "analysis written");
        }
        Command::Bundle {
            signals,
            scores,
            analysis,
            out,
            config,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            let b = commands::bundle(&signals, &scores, &analysis, cfg, &out)?;
            tracing::info!(bullets = b.manifest.bullets.len(), out = %out.display(), "bundle written");
        }
        Command::Serve {
            bundle,
            port,
            bind,
            static_dir,
        } => {
            let b = read_bundle(&bundle)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let addr = SocketAddr::new(bind, port);
                let listener = server::bind(addr).await?;
                tracing::info!(
                    "serving {} on http://{}",
                    bundle.display(),
                    listener.local_addr()?
                );
                server::serve(listener, server::router(b, static_dir)).await
            })?;
        }
        Command::Synth {
            out,
            seed,
            barrels,
            bullets,
            signal_len,
        } => {
            let params = SynthParams {
                seed,
                barrels,
                bullets_per_barrel: bullets,
                signal_len,
                ..SynthParams::default()
            };
            let manifest = commands::synth(&params, &out)?;
            tracing::info!(manifest = %manifest.display(), "synthetic study written");
        }
        Command::Config => print!("{}", fbcv_core::PipelineConfig::default().to_toml_string()),
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
