mod command;
mod commands;

use anyhow::{Context as _, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use command::{load_config, Context, Registry};
use std::path::PathBuf;
use std::process::ExitCode;

fn leaf(name: &'static str, about: &'static str) -> Command {
    Command::new(name)
        .about(about)
        .arg(Arg::new("config").value_name("CONFIG").value_parser(clap::value_parser!(PathBuf)).help("key = value config file"))
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("override one config key"),
        )
}

/// Builds the clap tree from the registry; `"a b"` becomes `a` → `b`.
fn cli(registry: &Registry) -> Command {
    let mut root = Command::new("breather")
        .about("Breathers, normal forms and dispersive estimates for anharmonic chains")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("seed")
                .long("seed")
                .global(true)
                .value_parser(clap::value_parser!(u64))
                .help("random seed, overrides the config"),
        )
        .arg(
            Arg::new("out-dir")
                .long("out-dir")
                .global(true)
                .default_value(".")
                .value_parser(clap::value_parser!(PathBuf))
                .help("directory for CSV output"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help("worker threads (default: all cores)"),
        );
    for cmd in registry.iter() {
        let path: Vec<&str> = cmd.name().split_whitespace().collect();
        root = match path.as_slice() {
            [one] => root.subcommand(leaf(one, cmd.about())),
            [group, sub] => {
                if root.find_subcommand(group).is_none() {
                    root = root.subcommand(Command::new(*group).about(format!("{group} subcommands")).subcommand_required(true));
                }
                root.mut_subcommand(group, |g| g.subcommand(leaf(sub, cmd.about())))
            }
            _ => unreachable!("command paths have one or two words"),
        };
    }
    root
}

/// Follows the subcommand chain down to the leaf.
fn resolve(matches: &ArgMatches) -> (String, &ArgMatches) {
    let mut path = Vec::new();
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        path.push(name.to_string());
        m = sub;
    }
    (path.join(" "), m)
}

fn run() -> Result<bool> {
    let registry = commands::registry();
    let matches = cli(&registry).get_matches();
    if let Some(&threads) = matches.get_one::<usize>("threads") {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (name, leaf) = resolve(&matches);
    let cmd = registry.get(&name).with_context(|| format!("unknown command '{name}'"))?;
    let overrides: Vec<String> = leaf.get_many::<String>("set").into_iter().flatten().cloned().collect();
    let cfg = load_config(leaf.get_one::<PathBuf>("config").map(|p| p.as_path()), &overrides)?;
    let ctx = Context {
        out_dir: leaf.get_one::<PathBuf>("out-dir").cloned().unwrap_or_else(|| PathBuf::from(".")),
        seed: leaf.get_one::<u64>("seed").copied(),
    };
    let outcome = cmd.run(&cfg, &ctx)?;
    cfg.finish()?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for c in &outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(outcome.all_passed())
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
