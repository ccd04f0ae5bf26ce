use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use memrag::commands::{self, Layout, TrainArgs};
use memrag::repl::{Repl, Reply};
use memrag::snapshot::load_user;
use memrag::RunConfig;
use memrag_core::policy::PolicyNet;

#[derive(Parser, Debug)]
#[command(name = "memrag", version, about = "Memory-graph retrieval experiments")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `out_dir` from the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration as TOML.
    ShowConfig,
    /// Generate the corpus, the edit stream and the entity queries.
    GenData,
    /// Train TransE and build every user's graph.
    Build,
    /// Warm start and policy-gradient training.
    Train {
        /// Continue from the checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many policy-gradient episodes.
        #[arg(long)]
        max_episodes: Option<usize>,
    },
    /// Evaluate the trained policy against the Top-K baseline.
    Eval,
    /// Replay the weekly edit stream.
    EditsExp,
    /// Retrain and score every ablation variant.
    Ablate,
    /// Sweep the number of activated nodes.
    ParamK,
    /// Run gen-data, build, train, eval, edits-exp, ablate and param-k.
    All,
    /// Interactive session over one user's graph.
    Repl {
        /// User whose graph to load from the run directory.
        #[arg(long, conflicts_with = "graph")]
        user: Option<String>,
        /// Graph snapshot to load.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default().resolved(),
    };
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

fn repl(cfg: &RunConfig, user: Option<String>, graph: Option<PathBuf>) -> Result<()> {
    let net = match commands::load_policy(cfg) {
        Ok(ckpt) => ckpt.net,
        Err(e) => {
            eprintln!("note: using an untrained policy ({e:#})");
            PolicyNet::new(cfg.train.seed)
        }
    };
    let path = graph.or_else(|| user.map(|u| commands::user_graph(cfg, &u)));
    let mut session = match path {
        Some(p) => Repl::new(load_user(&p).with_context(|| format!("loading {}", p.display()))?, net, cfg.env()),
        None => Repl::empty("user", net, cfg.env()),
    };
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    write!(out, "> ")?;
    out.flush()?;
    for line in stdin.lock().lines() {
        match session.handle(&line?) {
            Reply::Quit => break,
            Reply::Continue(s) => {
                if !s.is_empty() {
                    writeln!(out, "{s}")?;
                }
            }
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let root = Layout::new(&cfg.out_dir).root;
    let run = |name: &str| eprintln!("[{name}] {}", root.display());
    match cli.command {
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
        Command::GenData => {
            run("gen-data");
            let m = commands::gen_data(&cfg)?;
            println!("{} users, {} memories, {} questions, {} edits", m.users, m.memories, m.qa_pairs, m.edits);
        }
        Command::Build => {
            run("build");
            println!("built {} graphs", commands::build(&cfg)?);
        }
        Command::Train { resume, max_episodes } => {
            run("train");
            let s = commands::train(&cfg, TrainArgs { resume, max_episodes })?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Eval => print!("{}", commands::eval(&cfg)?.to_table()),
        Command::EditsExp => print!("{}", commands::edits_exp(&cfg)?.to_table()),
        Command::Ablate => print!("{}", commands::ablation(&cfg)?.to_table()),
        Command::ParamK => print!("{}", commands::param_k(&cfg)?.to_table()),
        Command::All => {
            run("gen-data");
            commands::gen_data(&cfg)?;
            run("build");
            commands::build(&cfg)?;
            run("train");
            commands::train(&cfg, TrainArgs::default())?;
            println!("{}", commands::eval(&cfg)?.to_table());
            println!("{}", commands::edits_exp(&cfg)?.to_table());
            println!("{}", commands::ablation(&cfg)?.to_table());
            print!("{}", commands::param_k(&cfg)?.to_table());
        }
        Command::Repl { user, graph } => repl(&cfg, user, graph)?,
    }
    Ok(())
}
