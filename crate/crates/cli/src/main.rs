mod args;
mod commands;
mod manifest;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use args::{Cli, Command, ReplayArgs};
use commands::Outcome;
use manifest::{RunManifest, MANIFEST_FORMAT};

const EXIT_VALIDATION: u8 = 1;

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = Cli::parse_from(&argv);
    let rest = argv[1..].iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, rest) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn subcommand_name(command: &Command) -> &'static str {
    match command {
        Command::Budget(_) => "budget",
        Command::Plan(_) => "plan",
        Command::Synth(_) => "synth",
        Command::Render(_) => "render",
        Command::Inject(_) => "inject",
        Command::Capture(_) => "capture",
        Command::Register(_) => "register",
        Command::Stitch(_) => "stitch",
        Command::Compare(_) => "compare",
        Command::Bits(_) => "bits",
        Command::Replay(_) => "replay",
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<u8> {
    let (outcome, params) = match &cli.command {
        Command::Budget(a) => (commands::budget(a)?, json(a)),
        Command::Plan(a) => (commands::plan(a)?, json(a)),
        Command::Synth(a) => (commands::synth(a)?, json(a)),
        Command::Render(a) => (commands::render(a)?, json(a)),
        Command::Inject(a) => (commands::inject(a)?, json(a)),
        Command::Capture(a) => (commands::capture(a)?, json(a)),
        Command::Register(a) => (commands::register_cmd(a)?, json(a)),
        Command::Stitch(a) => (commands::stitch_cmd(a)?, json(a)),
        Command::Compare(a) => (commands::compare_cmd(a)?, json(a)),
        Command::Bits(a) => (commands::bits(a)?, json(a)),
        Command::Replay(a) => return replay(a),
    };
    let params = match &outcome.resolved {
        Some(resolved) => serde_json::json!({ "args": params, "resolved": resolved }),
        None => serde_json::json!({ "args": params }),
    };
    emit_manifest(&cli, argv, params, &outcome)?;
    Ok(outcome.exit_code)
}

fn json<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn emit_manifest(cli: &Cli, argv: Vec<String>, params: serde_json::Value, outcome: &Outcome) -> Result<()> {
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand_name(&cli.command).to_string(),
        argv,
        cwd: std::env::current_dir().context("reading the working directory")?,
        params,
        inputs: outcome.inputs.clone(),
        outputs: manifest::digests(&outcome.outputs)?,
        seed: outcome.seed,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let target = cli
        .manifest
        .clone()
        .or_else(|| outcome.primary.as_deref().map(manifest::default_location));
    match target {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            iris_core::fsio::write_atomic(&path, manifest.to_json().as_bytes())?;
        }
        None => eprint!("{}", manifest.to_json()),
    }
    Ok(())
}

fn replay(args: &ReplayArgs) -> Result<u8> {
    let recorded = RunManifest::load(&args.run_manifest)?;
    let manifest_path = std::path::absolute(&args.run_manifest)?;
    std::env::set_current_dir(&recorded.cwd)
        .with_context(|| format!("entering recorded working directory {}", recorded.cwd.display()))?;
    let mut argv = vec!["iris".to_string()];
    argv.extend(recorded.argv.iter().cloned());
    let cli = Cli::try_parse_from(&argv).with_context(|| format!("re-parsing {}", manifest_path.display()))?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("{} records a replay; replay the original manifest instead", manifest_path.display());
    }
    let code = execute(cli, recorded.argv.clone())?;
    if args.verify {
        let mut mismatches = Vec::new();
        for out in &recorded.outputs {
            let now = manifest::sha256_file(&out.path)?;
            if now != out.sha256 {
                mismatches.push(out.path.display().to_string());
            }
        }
        if !mismatches.is_empty() {
            bail!("replay changed {} output(s): {}", mismatches.len(), mismatches.join(", "));
        }
        eprintln!("replay verified {} output(s)", recorded.outputs.len());
    }
    Ok(code)
}
