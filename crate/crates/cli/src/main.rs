use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use emosteer::analysis::{Reducer, DEFAULT_EXPLOSIVE_THRESHOLD, DEFAULT_REPETITION_THRESHOLD};
use emosteer::stats::DEFAULT_SEED;
use emosteer::steering::{Measurement, DEFAULT_STRENGTHS};
use emosteer::{Method, SteeringConfig};
use emosteer_cli::artifact::read_vector_set;
use emosteer_cli::classifier::{ClassifierClient, ShiftRule};
use emosteer_cli::commands::{self, LayerArg};
use emosteer_cli::service::{self, NamedVectorSet, ServiceState};
use emosteer_cli::CliError;

#[derive(Parser)]
#[command(
    name = "emosteer",
    version,
    about = "Extract emotion vectors from GPT-2 and steer generation with them"
)]
struct Cli {
    /// Seed recorded in every artifact and used by resampling steps.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Generation,
    Comprehension,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Generation => Method::Generation,
            MethodArg::Comprehension => Method::Comprehension,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasurementArg {
    /// Clean forward pass over the generated text.
    Rescore,
    /// States captured while steering, injection included.
    InFlight,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReducerArg {
    Mean,
    Sum,
}

#[derive(Subcommand)]
enum Command {
    /// Build an emotion vector set and write it as JSON.
    Extract {
        /// Weights file, or a directory holding model.safetensors (and optionally vocab.json/merges.txt).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// `mid` or a zero-based block index.
        #[arg(long, default_value = "mid")]
        layer: LayerArg,
        /// Stimulus corpus JSON; the bundled 20-emotion corpus by default.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_stories: usize,
        #[arg(long, default_value_t = 64)]
        max_tokens: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a strength sweep for one scenario.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        /// Vector set written by `extract`.
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        scenario: String,
        /// Scenario file; the bundled scenarios by default.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Replace the scenario's prompt.
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_STRENGTHS.to_vec())]
        strengths: Vec<f64>,
        #[arg(long, default_value_t = 40)]
        max_tokens: usize,
        #[arg(long, value_enum, default_value = "rescore")]
        measurement: MeasurementArg,
        #[arg(long, value_enum, default_value = "mean")]
        reducer: ReducerArg,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the points as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Separation table for vector sets and regime table for sweeps.
    Report {
        #[arg(long = "vectors")]
        vectors: Vec<PathBuf>,
        #[arg(long = "sweep")]
        sweeps: Vec<PathBuf>,
        /// Anisotropy baseline JSON ({"mean": .., "std": ..}).
        #[arg(long, conflicts_with = "baseline_mean")]
        baseline: Option<PathBuf>,
        #[arg(long)]
        baseline_mean: Option<f64>,
        #[arg(long, requires = "baseline_mean")]
        baseline_std: Option<f64>,
        /// Compute the baseline from the corpus's neutral sentences on this model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EXPLOSIVE_THRESHOLD)]
        explosive_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_REPETITION_THRESHOLD)]
        repetition_threshold: f64,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
    /// Serve the HTTP steering API.
    Serve {
        #[arg(long)]
        model: PathBuf,
        /// One or more vector sets; the first is the default.
        #[arg(long = "vectors", required = true)]
        vectors: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// External classifier endpoint proxied by /v1/classify.
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long, default_value_t = 40)]
        max_tokens: usize,
    },
    /// Query an external emotion classifier for a text or for sweep outputs.
    Classify {
        #[arg(long)]
        endpoint: String,
        #[arg(long, conflicts_with = "sweeps")]
        text: Option<String>,
        #[arg(long = "sweep")]
        sweeps: Vec<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        attempts: u32,
        /// Count a shift when only the target label moves.
        #[arg(long)]
        ignore_source: bool,
    },
    /// Check a stimulus corpus for structure and passage lengths.
    ValidateCorpus {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Use this model's tokenizer instead of the bundled GPT-2 one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        min_tokens: usize,
    },
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new()
        .context("starting async runtime")
        .map_err(CliError::Runtime)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Extract {
            model,
            method,
            layer,
            corpus,
            n_stories,
            max_tokens,
            out,
        } => commands::extract(&commands::ExtractArgs {
            model,
            corpus,
            method: method.into(),
            layer,
            n_stories,
            max_tokens,
            out,
            seed,
        }),
        Command::Sweep {
            model,
            vectors,
            scenario,
            scenarios,
            prompt,
            strengths,
            max_tokens,
            measurement,
            reducer,
            out,
            csv,
        } => commands::sweep(&commands::SweepArgs {
            model,
            vectors,
            scenario,
            scenarios,
            prompt,
            strengths,
            max_tokens,
            measurement: match measurement {
                MeasurementArg::Rescore => Measurement::Rescore,
                MeasurementArg::InFlight => Measurement::InFlight,
            },
            reducer: match reducer {
                ReducerArg::Mean => Reducer::Mean,
                ReducerArg::Sum => Reducer::Sum,
            },
            out,
            csv,
            seed,
        }),
        Command::Report {
            vectors,
            sweeps,
            baseline,
            baseline_mean,
            baseline_std,
            model,
            corpus,
            explosive_threshold,
            repetition_threshold,
            out_dir,
        } => commands::report(&commands::ReportArgs {
            vectors,
            sweeps,
            baseline_mean,
            baseline_std,
            baseline,
            model,
            corpus,
            explosive_threshold,
            repetition_threshold,
            out_dir,
            seed,
        }),
        Command::Serve {
            model,
            vectors,
            addr,
            corpus,
            classifier,
            max_tokens,
        } => {
            let model = Arc::new(commands::open_model(&model)?);
            let corpus = commands::load_corpus(corpus.as_deref())?;
            let mut sets = Vec::new();
            for path in &vectors {
                if !path.is_file() {
                    return Err(CliError::Usage(format!(
                        "vector-set file {} does not exist",
                        path.display()
                    )));
                }
                let (_, set) = read_vector_set(path)?;
                let id = path
                    .file_stem()
                    .map_or_else(|| "default".into(), |s| s.to_string_lossy().into_owned());
                sets.push(NamedVectorSet { id, set });
            }
            let config = SteeringConfig {
                max_tokens,
                ..Default::default()
            };
            let state = ServiceState::new(
                model,
                corpus,
                sets,
                classifier.map(ClassifierClient::new),
                config,
            )?;
            runtime()?.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                let bound = listener.local_addr().context("reading bound address")?;
                println!("listening on http://{bound}");
                axum::serve(listener, service::router(Arc::new(state)))
                    .await
                    .context("serving")?;
                Ok::<_, CliError>(())
            })
        }
        Command::Classify {
            endpoint,
            text,
            sweeps,
            out,
            attempts,
            ignore_source,
        } => runtime()?.block_on(commands::classify(&commands::ClassifyArgs {
            endpoint,
            text,
            sweeps,
            out,
            attempts,
            rule: ShiftRule {
                require_source_drop: !ignore_source,
            },
            seed,
        })),
        Command::ValidateCorpus {
            corpus,
            model,
            min_tokens,
        } => commands::validate_corpus(corpus.as_deref(), model.as_deref(), min_tokens),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
