use clap::{Args, Parser, Subcommand};
use cmt_ldpc::alist::from_alist;
use cmt_ldpc::cmt::{build_cmt, tree_to_bytes, TreeMetadata};
use cmt_ldpc::construction::Construction;
use cmt_ldpc::error::Error;
use cmt_ldpc::experiment::{
    prepare, scheme_cmt_codes, write_attacks, write_catalogs, write_codes, write_outputs, write_reports,
    write_strategies, ExperimentConfig, OutDir, PipelineState,
};
use cmt_ldpc::stopping::enumerate_stopping_sets;
use cmt_ldpc::tanner::TannerGraph;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cmt-ldpc", version, about = "LDPC codes, stopping sets and light-node sampling for coded Merkle trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the Monte Carlo trial count.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build and select the layer codes.
    Construct(Common),
    /// Enumerate small stopping sets, either for an experiment or for one
    /// `.alist` code (`--code` with `--mu`, catalog written to `--out`).
    Stopsets {
        #[arg(long, conflicts_with = "code")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, requires = "mu")]
        code: Option<PathBuf>,
        /// Enumerates sets of size below this bound.
        #[arg(long)]
        mu: Option<usize>,
    },
    /// Solve LP-sampling and write strategies and the failure table.
    DesignSampling(Common),
    /// Align the layer codes and write the column maps.
    Align(Common),
    /// Encode a file into a coded Merkle tree.
    BuildCmt {
        #[command(flatten)]
        common: Common,
        /// Block contents.
        #[arg(long)]
        input: PathBuf,
        /// Construction whose codes are used; defaults to the first listed.
        #[arg(long)]
        construction: Option<Construction>,
    },
    /// Simulate attacks against light nodes.
    Attack(Common),
    /// Run every stage.
    Reproduce(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepared(common: &Common) -> Result<(ExperimentConfig, PipelineState), Error> {
    let cfg = load(common)?;
    let state = prepare(&cfg)?;
    Ok((cfg, state))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Construct(c) => {
            let (_, state) = prepared(&c)?;
            let mut dir = OutDir::new(&c.out);
            write_codes(&state, &mut dir)?;
            dir.finish(&state)?;
        }
        Command::Stopsets {
            config,
            out,
            seed,
            code,
            mu,
        } => match (config, code) {
            (_, Some(code)) => {
                let h = from_alist(&std::fs::read_to_string(&code)?)?;
                let cat = enumerate_stopping_sets(&TannerGraph::from_matrix(&h), mu.expect("required by clap"))?;
                std::fs::write(&out, cat.to_text())?;
                println!("{} stopping sets, minimum weight {:?}", cat.len(), cat.min_weight());
            }
            (Some(config), None) => {
                let common = Common {
                    config,
                    out,
                    seed,
                    trials: None,
                };
                let (_, state) = prepared(&common)?;
                let mut dir = OutDir::new(&common.out);
                write_codes(&state, &mut dir)?;
                write_catalogs(&state, &mut dir)?;
                dir.finish(&state)?;
            }
            (None, None) => return Err(Error::Config("either --config or --code is required".into())),
        },
        Command::DesignSampling(c) => {
            let (_, state) = prepared(&c)?;
            let mut dir = OutDir::new(&c.out);
            write_strategies(&state, &mut dir)?;
            write_reports(&state, &mut dir)?;
            dir.finish(&state)?;
        }
        Command::Align(c) => {
            let (_, state) = prepared(&c)?;
            let mut dir = OutDir::new(&c.out);
            write_codes(&state, &mut dir)?;
            let maps: serde_json::Value = state
                .schemes
                .iter()
                .map(|s| {
                    let cols: Vec<&Vec<usize>> = s.layers.iter().map(|l| &l.columns).collect();
                    (s.construction.name().to_string(), serde_json::json!(cols))
                })
                .collect::<serde_json::Map<_, _>>()
                .into();
            dir.write("alignment.json", (serde_json::to_string_pretty(&maps)? + "\n").as_bytes())?;
            dir.finish(&state)?;
        }
        Command::BuildCmt {
            common,
            input,
            construction,
        } => {
            let (cfg, state) = prepared(&common)?;
            let kind = construction.unwrap_or(cfg.constructions[0]);
            let scheme = state
                .scheme(kind)
                .ok_or_else(|| Error::Config(format!("construction {} not in config", kind.name())))?;
            let (codes, perms) = scheme_cmt_codes(&cfg.cmt, scheme)?;
            let tree = build_cmt(&std::fs::read(&input)?, &cfg.cmt, &codes)?;
            let meta = TreeMetadata {
                params: cfg.cmt.clone(),
                root: tree.root_hex(),
            };
            let mut dir = OutDir::new(&common.out);
            dir.write("tree.bin", &tree_to_bytes(&tree))?;
            dir.write("tree.json", (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
            dir.write("column_swaps.json", (serde_json::to_string(&perms)? + "\n").as_bytes())?;
            dir.finish(&state)?;
            println!("root {}", meta.root.join(" "));
        }
        Command::Attack(c) => {
            let (cfg, state) = prepared(&c)?;
            let mut dir = OutDir::new(&c.out);
            write_attacks(&state, &mut dir, cfg.trials)?;
            dir.finish(&state)?;
        }
        Command::Reproduce(c) => {
            let (cfg, state) = prepared(&c)?;
            let manifest = write_outputs(&state, &c.out, cfg.trials)?;
            println!("{} files written, config {}", manifest.files.len(), manifest.config_hash);
        }
    }
    Ok(())
}

/// Exit status per failure class of the innermost cause.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } => exit_code(source),
        Error::Config(_) | Error::InvalidParams(_) | Error::Json(_) | Error::Parse(_) => 2,
        Error::Io(_) => 3,
        Error::ResourceLimit { .. } => 4,
        Error::LpInfeasible | Error::LpUnbounded | Error::LpNumerical(_) => 5,
        Error::RankDeficient { .. } | Error::MalformedInput(_) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
