//! Subcommand registry and the pieces every subcommand shares.

use anyhow::{bail, Context as _, Result};
use breather_core::config::KeyValues;
use breather_core::lattice::NormSpec;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// Run-wide settings from the global flags.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    /// Opens `<out_dir>/<name>` for writing and records it in `outcome`.
    pub fn create(&self, outcome: &mut Outcome, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        outcome.files.push(path);
        Ok(BufWriter::new(file))
    }

    /// `--seed` wins over the config's `seed` key.
    pub fn seed(&self, cfg: &KeyValues) -> Result<u64> {
        let from_file = cfg.get_or("seed", 1u64)?;
        Ok(self.seed.unwrap_or(from_file))
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// What a subcommand produced: its checks and the files it wrote.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    /// `check.<name> = bound` asks for `value ≤ bound`.
    pub fn at_most(&mut self, cfg: &KeyValues, name: &str, value: f64) -> Result<()> {
        if let Some(bound) = cfg.get::<f64>(&format!("check.{name}"))? {
            self.push(name, value <= bound, format!("{value:.6e} <= {bound:e}"));
        }
        Ok(())
    }

    /// `check.<name> = bound` asks for `value ≥ bound`.
    pub fn at_least(&mut self, cfg: &KeyValues, name: &str, value: f64) -> Result<()> {
        if let Some(bound) = cfg.get::<f64>(&format!("check.{name}"))? {
            self.push(name, value >= bound, format!("{value:.6e} >= {bound:e}"));
        }
        Ok(())
    }

    /// `check.<name> = lo, hi` asks for `lo ≤ value ≤ hi`.
    pub fn within(&mut self, cfg: &KeyValues, name: &str, value: f64) -> Result<()> {
        if let Some(range) = cfg.list::<f64>(&format!("check.{name}"))? {
            let [lo, hi] = range[..] else {
                bail!("check.{name} needs 'lo, hi', got {} values", range.len());
            };
            self.push(name, (lo..=hi).contains(&value), format!("{value:.6} in [{lo}, {hi}]"));
        }
        Ok(())
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub trait Subcommand: Send + Sync {
    /// Space-separated path, e.g. `"breather find"`.
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn run(&self, cfg: &KeyValues, ctx: &Context) -> Result<Outcome>;
}

#[derive(Default)]
pub struct Registry {
    commands: BTreeMap<&'static str, Box<dyn Subcommand>>,
}

impl Registry {
    pub fn register(&mut self, cmd: Box<dyn Subcommand>) {
        self.commands.insert(cmd.name(), cmd);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Subcommand> {
        self.commands.get(name).map(|b| b.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Subcommand> {
        self.commands.values().map(|b| b.as_ref())
    }
}

/// Marks the listed `check.*` keys as known and rejects anything else, so
/// typos surface before a long computation.
pub fn settle(cfg: &KeyValues, checks: &[&str]) -> Result<()> {
    for c in checks {
        cfg.raw(&format!("check.{c}"));
    }
    cfg.finish()?;
    Ok(())
}

/// Loads the config file (or nothing) and applies `KEY=VALUE` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<KeyValues> {
    let mut kv = match path {
        Some(p) => KeyValues::from_path(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::default(),
    };
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {o:?}");
        };
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

/// `l2`, `linf`, `l<r>`, or `l<r>:<s>` for the weight `⟨k⟩^s`.
pub fn parse_norm(text: &str) -> Result<NormSpec> {
    let t = text.trim();
    let Some(rest) = t.strip_prefix('l') else {
        bail!("norm {t:?} must start with 'l'");
    };
    let (r, s) = match rest.split_once(':') {
        Some((r, s)) => (r, s.trim().parse::<f64>().with_context(|| format!("weight in {t:?}"))?),
        None => (rest, 0.0),
    };
    let r = if r == "inf" { f64::INFINITY } else { r.parse::<f64>().with_context(|| format!("exponent in {t:?}"))? };
    if !(r >= 1.0) {
        bail!("norm exponent must be at least 1, got {r}");
    }
    Ok(NormSpec::weighted(r, s))
}

/// Reads `lo, hi` from `key`.
pub fn pair(cfg: &KeyValues, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match cfg.list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(v) => bail!("'{key}' needs two values, got {}", v.len()),
    }
}
