use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use c2f_core::corpus::IngestSchema;
use c2f_core::pipeline::run::{self, ContextRequest, Split, WorkDir};
use c2f_core::pipeline::{read_triples, Artifacts, EpochRecord, RunConfig};
use c2f_core::synth;
use c2f_core::{Error, Result};

#[derive(Parser)]
#[command(name = "c2f", version, about = "Aspect-aware coarse-to-fine review generation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a small synthetic review corpus as JSON lines.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        reviews: usize,
        #[arg(long, default_value_t = 16)]
        users: usize,
        #[arg(long, default_value_t = 16)]
        items: usize,
        #[arg(long, default_value_t = 5)]
        seed: u64,
    },
    /// Ingest, preprocess and split a JSON-lines corpus into a work directory.
    Prepare {
        input: PathBuf,
        #[command(flatten)]
        work: WorkArg,
        /// TOML run configuration; defaults to the full-size settings.
        #[arg(long, conflicts_with = "desk")]
        config: Option<PathBuf>,
        /// Use the small desk-scale settings.
        #[arg(long)]
        desk: bool,
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Fit the aspect model and write the top-words report.
    Lda {
        #[command(flatten)]
        work: WorkArg,
    },
    /// Mine sketch tables and build training triples.
    Sketch {
        #[command(flatten)]
        work: WorkArg,
    },
    /// Run staged training and joint fine-tuning.
    Train {
        #[command(flatten)]
        work: WorkArg,
        /// Continue from the last epoch checkpoint.
        #[arg(long)]
        resume: bool,
        /// Drop the aspect decoder: one constant aspect for every sentence.
        #[arg(long)]
        no_aspect: bool,
        /// Drop the sketch decoder: words are generated from the aspect alone.
        #[arg(long)]
        no_sketch: bool,
        /// Where to write the final checkpoint; defaults to <work>/model.bin.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate reviews for contexts given by flags or a JSON-lines file.
    Generate {
        #[command(flatten)]
        work: WorkArg,
        #[arg(long)]
        model: Option<PathBuf>,
        /// One `{"user": .., "item": .., "rating": ..}` per line.
        #[arg(long, conflicts_with_all = ["user", "item", "rating"])]
        input: Option<PathBuf>,
        #[arg(long, requires_all = ["item", "rating"])]
        user: Option<String>,
        #[arg(long, requires_all = ["user", "rating"])]
        item: Option<String>,
        /// 1-based rating.
        #[arg(long, requires_all = ["user", "item"])]
        rating: Option<u32>,
        /// Beam width; defaults to the configured one.
        #[arg(long)]
        beam: Option<usize>,
        /// Output file; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate for a split and score against its references.
    Eval {
        #[command(flatten)]
        work: WorkArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Write the metrics as JSON lines here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the generated reviews here.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

#[derive(Args)]
struct WorkArg {
    /// Work directory holding all pipeline artifacts.
    #[arg(long, short = 'w')]
    work: PathBuf,
}

impl WorkArg {
    fn dir(&self) -> WorkDir {
        WorkDir::new(&self.work)
    }
}

#[derive(Args)]
struct SchemaArgs {
    #[arg(long, default_value = "user_id")]
    user_field: String,
    #[arg(long, default_value = "item_id")]
    item_field: String,
    #[arg(long, default_value = "rating")]
    rating_field: String,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long, default_value_t = 5)]
    max_rating: u32,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("c2f: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth {
            out,
            reviews,
            users,
            items,
            seed,
        } => {
            if users == 0 || items == 0 {
                return Err(Error::Usage("--users and --items must be positive".into()));
            }
            let raw = synth::desk_reviews(reviews, users, items, seed);
            write(&out, synth::to_jsonl(&raw))?;
            eprintln!("wrote {} reviews to {}", raw.len(), out.display());
        }
        Cmd::Prepare {
            input,
            work,
            config,
            desk,
            schema,
        } => {
            let mut cfg = match (config, desk) {
                (Some(p), _) => RunConfig::load(&p)?,
                (None, true) => RunConfig::desk(),
                (None, false) => RunConfig::default(),
            };
            cfg.apply_env()?;
            let schema = IngestSchema {
                user_field: schema.user_field,
                item_field: schema.item_field,
                rating_field: schema.rating_field,
                text_field: schema.text_field,
                max_rating: schema.max_rating,
            };
            let s = run::prepare(&input, &schema, &cfg, &work.dir())?;
            for (line, why) in &s.malformed {
                eprintln!("skipped line {line}: {why}");
            }
            eprintln!(
                "read {} reviews, kept {}, vocabulary {}; split {}/{}/{}",
                s.read, s.kept, s.vocab, s.train, s.valid, s.test
            );
        }
        Cmd::Lda { work } => {
            let w = work.dir();
            let cfg = w.load_config()?;
            let m = run::fit_aspects(&w, &cfg)?;
            eprintln!("{} aspects; top words in {}", m.num_aspects, w.lda_report().display());
        }
        Cmd::Sketch { work } => {
            let w = work.dir();
            let cfg = w.load_config()?;
            let s = run::build_sketches(&w, &cfg)?;
            eprintln!(
                "{} n-grams, {} sketch symbols; triples {}/{}/{}",
                s.ngrams, s.symbols, s.train, s.valid, s.test
            );
        }
        Cmd::Train {
            work,
            resume,
            no_aspect,
            no_sketch,
            model,
        } => {
            let w = work.dir();
            let mut cfg = w.load_config()?;
            cfg.orchestrator.no_aspect |= no_aspect;
            cfg.orchestrator.no_sketch |= no_sketch;
            let mut progress = |r: &EpochRecord| {
                eprintln!(
                    "{:<7} epoch {:>3}  lr {:.2e}  loss {:.5}  steps {}",
                    r.stage.name(),
                    r.epoch,
                    r.lr,
                    r.loss,
                    r.steps
                );
            };
            let (_, report) = run::train_model(&w, &cfg, resume, model.as_deref(), Some(&mut progress))?;
            for s in &report.stages {
                eprintln!("{}: {:.5} -> {:?}", s.stage.name(), s.start_loss, s.end_loss);
            }
        }
        Cmd::Generate {
            work,
            model,
            input,
            user,
            item,
            rating,
            beam,
            out,
        } => {
            let w = work.dir();
            let artifacts = Artifacts::load(&w)?;
            let m = run::load_model(&model.unwrap_or_else(|| w.model()))?;
            let requests = match (input, user, item, rating) {
                (Some(p), ..) => run::read_requests(&read(&p)?)?,
                (None, Some(user), Some(item), Some(rating)) => vec![ContextRequest { user, item, rating }],
                _ => return Err(Error::Usage("give --input or all of --user, --item, --rating".into())),
            };
            let g = artifacts.generator(&m)?;
            let width = beam.unwrap_or(m.config.orchestrator.beam);
            let mut lines = String::new();
            for r in &requests {
                let ctx = artifacts.context(&r.user, &r.item, r.rating)?;
                let res = g.generate_with(&ctx, width)?;
                if res.unk {
                    eprintln!("warning: unknown user or item in {r:?}; using the UNK embedding");
                }
                let rec = serde_json::json!({ "request": r, "result": res });
                lines.push_str(&rec.to_string());
                lines.push('\n');
            }
            emit(out.as_deref(), &lines)?;
        }
        Cmd::Eval {
            work,
            model,
            split,
            out,
            samples,
        } => {
            let w = work.dir();
            let artifacts = Artifacts::load(&w)?;
            let m = run::load_model(&model.unwrap_or_else(|| w.model()))?;
            let triples = read_triples(&w.triples(split.into()))?;
            let (report, results) = run::evaluate(&artifacts, &m, &triples)?;
            if !report.all_finite() {
                return Err(Error::data("evaluation produced a non-finite metric"));
            }
            print!("{}", report.to_text());
            if let Some(p) = out {
                write(&p, report.to_jsonl())?;
            }
            if let Some(p) = samples {
                let mut s = String::new();
                for r in &results {
                    s.push_str(&serde_json::to_string(r).expect("results serialize"));
                    s.push('\n');
                }
                write(&p, s)?;
            }
        }
    }
    Ok(())
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

fn write(p: &Path, text: String) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text.to_string()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
