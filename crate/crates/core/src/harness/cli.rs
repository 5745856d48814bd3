use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::io::{collect_curve_files, partition_csv};
use super::{
    prepare_data, read_curve_csv, run_comparison, run_seeds, with_threads, write_run, write_stats,
    ExperimentConfig,
};
use crate::error::{Error, Result};
use crate::eval;

#[derive(Debug, Parser)]
#[command(
    name = "fairfal",
    about = "Federated active-learning simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Seeds to run (repeatable); overrides `seeds`.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads`.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one strategy for every seed; writes `<out>/seed_<s>/`.
    Run {
        #[command(flatten)]
        common: Common,
        /// Strategy override, e.g. `entropy:local` or `fairfal`.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Run two strategies on the same seeds and compare them.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        first: String,
        #[arg(long)]
        second: String,
    },
    /// Write the client partition of the training set as `index,client,class`.
    Partition {
        #[command(flatten)]
        common: Common,
        /// Output CSV; stdout when absent.
        #[arg(long = "csv")]
        csv_out: Option<PathBuf>,
    },
    /// Paired statistics of two sets of per-seed curve CSVs.
    Stats {
        /// Curve CSV, or a directory searched for `seed_<s>/curve.csv`.
        #[arg(long)]
        first: PathBuf,
        /// Same for the second strategy.
        #[arg(long)]
        second: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point of the `fairfal` binary. Returns the process exit code.
pub fn cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(parsed.command) {
        Ok(()) => 0,
        // a closed downstream pipe (e.g. `| head`) is not a failure
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { common, strategy } => {
            let mut cfg = common.load()?;
            if let Some(s) = strategy {
                cfg.strategy = s;
                cfg.validate()?;
            }
            let records = with_threads(cfg.threads, || run_seeds(&cfg, &cfg.seeds))??;
            for r in &records {
                write_run(r, &cfg, &seed_dir(&cfg.output_dir, r.seed))?;
                eprintln!("seed {}: AULC {:.4}", r.seed, r.aulc()?);
            }
            Ok(())
        }
        Command::Compare {
            common,
            first,
            second,
        } => {
            let base = common.load()?;
            let mut a = base.clone();
            a.strategy = first.clone();
            a.validate()?;
            let mut b = base.clone();
            b.strategy = second.clone();
            b.validate()?;
            let cmp = with_threads(base.threads, || run_comparison(&a, &b, &base.seeds))??;
            for (cfg, runs) in [(&a, &cmp.first), (&b, &cmp.second)] {
                let dir = base.output_dir.join(cfg.strategy.replace(':', "_"));
                for r in runs {
                    write_run(r, cfg, &seed_dir(&dir, r.seed))?;
                }
            }
            let path = base.output_dir.join("stats.json");
            let mut buf = Vec::new();
            write_stats(&mut buf, &first, &second, &cmp.stats)?;
            fs::write(&path, &buf).map_err(|e| Error::io(&path, e))?;
            write_stdout(&buf)
        }
        Command::Partition { common, csv_out } => {
            let cfg = common.load()?;
            let data = prepare_data(&cfg, cfg.seeds[0])?;
            let mut rows = Vec::with_capacity(data.train.len());
            for (k, pools) in data.clients.iter().enumerate() {
                for &i in pools.labeled().iter().chain(pools.unlabeled()) {
                    rows.push((i, k, data.train.label(i)));
                }
            }
            rows.sort_unstable();
            partition_csv(csv_out.as_deref(), &rows)
        }
        Command::Stats { first, second, out } => {
            let load = |p: &Path| -> Result<Vec<(u64, eval::LearningCurve<f64>)>> {
                let mut files = collect_curve_files(p)?;
                files.sort();
                if files.is_empty() {
                    return Err(Error::invalid(format!(
                        "no curve files under `{}`",
                        p.display()
                    )));
                }
                files
                    .iter()
                    .map(|(s, f)| Ok((*s, read_curve_csv(f)?)))
                    .collect()
            };
            let stats = eval::compare(&load(&first)?, &load(&second)?)?;
            let mut buf = Vec::new();
            write_stats(
                &mut buf,
                &first.display().to_string(),
                &second.display().to_string(),
                &stats,
            )?;
            match out {
                Some(p) => fs::write(&p, &buf).map_err(|e| Error::io(&p, e)),
                None => write_stdout(&buf),
            }
        }
    }
}

fn write_stdout(bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|()| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}
