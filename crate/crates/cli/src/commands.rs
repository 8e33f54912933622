//! Batch subcommands. Each returns `CliError::Usage` when its inputs do not
//! resolve and `CliError::Runtime` when the pipeline itself fails.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use emosteer::analysis::{self, Anisotropy, Reducer, RegimeLabel, SeparationReport};
use emosteer::steering::{self, Measurement};
use emosteer::{
    EmotionVectorSet, ExtractionConfig, Method, ModelHandle, Scenario, StimulusCorpus,
    SweepOutcome, Tokenizer,
};
use serde::{Deserialize, Serialize};

use crate::artifact::{read_vector_set, write_text, Artifact, Meta};
use crate::classifier::{
    shift_verdict, ClassifierClient, ClassifierVerdict, ShiftRule, ShiftVerdict,
};
use crate::CliError;

/// `mid` or a zero-based block index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerArg {
    Mid,
    Index(usize),
}

impl FromStr for LayerArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("mid") {
            return Ok(LayerArg::Mid);
        }
        s.parse()
            .map(LayerArg::Index)
            .map_err(|_| format!("expected `mid` or a layer index, got `{s}`"))
    }
}

impl LayerArg {
    pub fn resolve(self, model: &ModelHandle) -> Result<usize, CliError> {
        let layer = match self {
            LayerArg::Mid => model.middle_layer(),
            LayerArg::Index(i) => i,
        };
        model
            .check_layer(layer)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(layer)
    }
}

pub fn open_model(path: &Path) -> Result<ModelHandle, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "model path {} does not exist",
            path.display()
        )));
    }
    ModelHandle::open(path)
        .with_context(|| format!("loading model from {}", path.display()))
        .map_err(CliError::Runtime)
}

pub fn load_corpus(path: Option<&Path>) -> Result<StimulusCorpus, CliError> {
    match path {
        None => Ok(StimulusCorpus::default_corpus()),
        Some(p) if !p.exists() => Err(CliError::Usage(format!(
            "corpus file {} does not exist",
            p.display()
        ))),
        Some(p) => StimulusCorpus::load(p)
            .with_context(|| format!("loading corpus {}", p.display()))
            .map_err(CliError::Runtime),
    }
}

fn input_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x}"))
}

// ------------------------------------------------------------------ extract

pub struct ExtractArgs {
    pub model: PathBuf,
    pub corpus: Option<PathBuf>,
    pub method: Method,
    pub layer: LayerArg,
    pub n_stories: usize,
    pub max_tokens: usize,
    pub out: PathBuf,
    pub seed: u64,
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    let model = open_model(&args.model)?;
    let corpus = load_corpus(args.corpus.as_deref())?;
    let layer = args.layer.resolve(&model)?;
    let config = ExtractionConfig {
        n_stories: args.n_stories,
        max_tokens: args.max_tokens,
    };
    let set = emosteer::extraction::build_vector_set(&model, &corpus, args.method, layer, &config)
        .context("extracting emotion vectors")?;
    let cosine = set
        .mean_pairwise_cosine()
        .context("computing pairwise cosines")?;
    let meta = Meta::new(model.id(), &set.corpus_hash, args.seed);
    Artifact::new(meta, &set).write(&args.out)?;
    for d in &set.diagnostics {
        eprintln!("note: {d}");
    }
    println!(
        "wrote {}: {} vectors, method {}, layer {}, mean pairwise cosine {:.4}",
        args.out.display(),
        set.len(),
        set.method,
        set.layer,
        cosine
    );
    Ok(())
}

// -------------------------------------------------------------------- sweep

pub struct SweepArgs {
    pub model: PathBuf,
    pub vectors: PathBuf,
    pub scenario: String,
    pub scenarios: Option<PathBuf>,
    pub prompt: Option<String>,
    pub strengths: Vec<f64>,
    pub max_tokens: usize,
    pub measurement: Measurement,
    pub reducer: Reducer,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
    pub seed: u64,
}

pub fn resolve_scenario(name: &str, file: Option<&Path>) -> Result<Scenario, CliError> {
    let all = match file {
        None => steering::default_scenarios(),
        Some(p) => {
            input_file(p, "scenario file")?;
            steering::load_scenarios(p).with_context(|| format!("loading {}", p.display()))?
        }
    };
    let names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
    all.iter().find(|s| s.name == name).cloned().ok_or_else(|| {
        CliError::Usage(format!(
            "unknown scenario `{name}` (have: {})",
            names.join(", ")
        ))
    })
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    input_file(&args.vectors, "vector-set file")?;
    let mut scenario = resolve_scenario(&args.scenario, args.scenarios.as_deref())?;
    if let Some(p) = &args.prompt {
        scenario.prompt = p.clone();
    }
    steering::validate_strengths(&args.strengths).map_err(|e| CliError::Usage(e.to_string()))?;
    let model = open_model(&args.model)?;
    let (_, set) = read_vector_set(&args.vectors)?;
    if set.model_id != model.id() {
        eprintln!(
            "warning: vector set was extracted from {}, sweeping {}",
            set.model_id,
            model.id()
        );
    }
    let config = steering::SteeringConfig {
        max_tokens: args.max_tokens,
        measurement: args.measurement,
        reducer: args.reducer,
        ..Default::default()
    };
    let outcome = steering::strength_sweep(&model, &set, &scenario, &args.strengths, &config)
        .context("running sweep")?;
    let meta = Meta::new(model.id(), &set.corpus_hash, args.seed);
    Artifact::new(meta, &outcome).write(&args.out)?;
    if let Some(csv) = &args.csv {
        write_text(csv, &outcome.to_csv())?;
    }
    for n in &outcome.notes {
        eprintln!("note: {n}");
    }
    println!("{}", sweep_summary(&outcome));
    Ok(())
}

pub fn sweep_summary(outcome: &SweepOutcome) -> String {
    format!(
        "{} (layer {}, {} points): flip={} sweet_spot={} collapse={}",
        outcome.scenario.name,
        outcome.layer,
        outcome.points.len(),
        fmt_opt(outcome.flip_point),
        fmt_opt(outcome.sweet_spot),
        fmt_opt(outcome.collapse_point)
    )
}

// ------------------------------------------------------------------- report

pub struct ReportArgs {
    pub vectors: Vec<PathBuf>,
    pub sweeps: Vec<PathBuf>,
    pub baseline_mean: Option<f64>,
    pub baseline_std: Option<f64>,
    pub baseline: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub explosive_threshold: f64,
    pub repetition_threshold: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationRow {
    pub model: String,
    pub method: Method,
    pub layer: usize,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub emotion_cosine: f64,
    pub gap: f64,
    pub headroom: f64,
    pub report: SeparationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeRow {
    pub model: String,
    pub scenario: String,
    pub layer: usize,
    pub strength_first: f64,
    pub strength_last: f64,
    pub ppl_first: Option<f64>,
    pub ppl_last: Option<f64>,
    #[serde(flatten)]
    pub label: RegimeLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub separation: Vec<SeparationRow>,
    pub regimes: Vec<RegimeRow>,
}

fn read_baseline(
    args: &ReportArgs,
    set: &EmotionVectorSet,
    model: Option<&ModelHandle>,
    corpus: &StimulusCorpus,
) -> Result<Anisotropy, CliError> {
    if let Some(path) = &args.baseline {
        input_file(path, "baseline file")?;
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        // Either a bare {mean, std} or an artifact wrapping one.
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let inner = value.get("data").cloned().unwrap_or(value);
        return serde_json::from_value(inner)
            .with_context(|| format!("{} is not an anisotropy baseline", path.display()))
            .map_err(CliError::Runtime);
    }
    if let Some(mean) = args.baseline_mean {
        return Ok(Anisotropy {
            mean,
            std: args.baseline_std.unwrap_or(0.0),
        });
    }
    match model {
        Some(m) => analysis::anisotropy_baseline(m, &corpus.neutral_sentences, set.layer)
            .context("computing anisotropy baseline")
            .map_err(CliError::Runtime),
        None => Err(CliError::Usage(
            "separation rows need a baseline: pass --baseline, --baseline-mean or --model".into(),
        )),
    }
}

pub fn build_report(args: &ReportArgs) -> Result<(Meta, Report), CliError> {
    if args.vectors.is_empty() && args.sweeps.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one --vectors or --sweep input".into(),
        ));
    }
    for p in &args.vectors {
        input_file(p, "vector-set file")?;
    }
    for p in &args.sweeps {
        input_file(p, "sweep file")?;
    }
    let model = match (
        &args.model,
        args.baseline.is_none() && args.baseline_mean.is_none() && !args.vectors.is_empty(),
    ) {
        (Some(p), true) => Some(open_model(p)?),
        _ => None,
    };
    let corpus = load_corpus(args.corpus.as_deref())?;
    let pairs: Vec<(String, String)> = analysis::DEFAULT_OPPOSITE_PAIRS
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();

    let mut meta: Option<Meta> = None;
    let mut separation = Vec::new();
    for path in &args.vectors {
        let (set_meta, set) = read_vector_set(path)?;
        let baseline = read_baseline(args, &set, model.as_ref(), &corpus)?;
        // Pairs whose members are missing from a smaller set are ignored.
        let usable: Vec<(String, String)> = pairs
            .iter()
            .filter(|(a, b)| set.vectors.contains_key(a) && set.vectors.contains_key(b))
            .cloned()
            .collect();
        let report = analysis::separation_report(&set, baseline, &usable)
            .with_context(|| format!("separation report for {}", path.display()))?;
        meta.get_or_insert_with(|| {
            set_meta.unwrap_or_else(|| Meta::new(&set.model_id, &set.corpus_hash, args.seed))
        });
        separation.push(SeparationRow {
            model: set.model_id.clone(),
            method: set.method,
            layer: set.layer,
            baseline_mean: report.anisotropy_mean,
            baseline_std: report.anisotropy_std,
            emotion_cosine: report.mean_pairwise,
            gap: report.gap,
            headroom: report.headroom,
            report,
        });
    }
    let mut regimes = Vec::new();
    for path in &args.sweeps {
        let sweep: Artifact<SweepOutcome> = Artifact::read(path)?;
        let label = analysis::sweep_regime(
            &sweep.data,
            args.explosive_threshold,
            args.repetition_threshold,
        )
        .with_context(|| format!("classifying {}", path.display()))?;
        let (first, last) = (sweep.data.points.first(), sweep.data.points.last());
        regimes.push(RegimeRow {
            model: sweep.meta.model_id.clone(),
            scenario: sweep.data.scenario.name.clone(),
            layer: sweep.data.layer,
            strength_first: first.map_or(f64::NAN, |p| p.strength),
            strength_last: last.map_or(f64::NAN, |p| p.strength),
            ppl_first: first.and_then(|p| p.ppl_steered),
            ppl_last: last.and_then(|p| p.ppl_steered),
            label,
        });
        meta.get_or_insert(sweep.meta);
    }
    let mut meta = meta.expect("at least one input");
    meta.seed = args.seed;
    Ok((
        meta,
        Report {
            separation,
            regimes,
        },
    ))
}

pub fn separation_csv(rows: &[SeparationRow]) -> String {
    let mut out =
        String::from("model,method,layer,baseline_mean,baseline_std,emotion_cosine,gap,headroom\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            csv_field(&r.model),
            r.method,
            r.layer,
            r.baseline_mean,
            r.baseline_std,
            r.emotion_cosine,
            r.gap,
            r.headroom
        ));
    }
    out
}

pub fn regime_csv(rows: &[RegimeRow]) -> String {
    let mut out =
        String::from("model,scenario,layer,ppl_first,ppl_last,ppl_ratio,max_repetition,regime\n");
    let ppl = |p: Option<f64>| p.map_or_else(String::new, |v| format!("{v:.1}"));
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.2},{:.3},{}\n",
            csv_field(&r.model),
            csv_field(&r.scenario),
            r.layer,
            ppl(r.ppl_first),
            ppl(r.ppl_last),
            r.label.ppl_ratio,
            r.label.max_repetition,
            r.label.regime
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let (meta, report) = build_report(args)?;
    let dir = &args.out_dir;
    Artifact::new(meta, &report).write(&dir.join("report.json"))?;
    if !report.separation.is_empty() {
        let csv = separation_csv(&report.separation);
        write_text(&dir.join("separation.csv"), &csv)?;
        print!("{csv}");
        for row in &report.separation {
            write_text(
                &dir.join(format!(
                    "cosine_matrix_{}_layer{}.csv",
                    row.method, row.layer
                )),
                &row.report.matrix_csv(),
            )?;
        }
    }
    if !report.regimes.is_empty() {
        let csv = regime_csv(&report.regimes);
        write_text(&dir.join("regimes.csv"), &csv)?;
        print!("{csv}");
    }
    Ok(())
}

// ----------------------------------------------------------------- classify

pub struct ClassifyArgs {
    pub endpoint: String,
    pub text: Option<String>,
    pub sweeps: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub attempts: u32,
    pub rule: ShiftRule,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifiedPoint {
    pub strength: f64,
    pub steered: Option<ClassifierVerdict>,
    pub shift: ShiftVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifiedSweep {
    pub source: String,
    pub scenario: Scenario,
    pub original: Option<ClassifierVerdict>,
    pub points: Vec<ClassifiedPoint>,
    /// Strength whose verdict decides the scenario: the flip point when
    /// there is one, otherwise the largest strength.
    pub evaluated_strength: Option<f64>,
    pub shift: ShiftVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationRun {
    pub endpoint: String,
    pub rule: ShiftRule,
    pub sweeps: Vec<ClassifiedSweep>,
    pub detected: usize,
    pub determined: usize,
}

pub async fn classify_sweep(
    client: &ClassifierClient,
    source: &str,
    outcome: &SweepOutcome,
    rule: ShiftRule,
) -> ClassifiedSweep {
    let original_text = outcome
        .points
        .first()
        .map(|p| p.original_text.as_str())
        .unwrap_or("");
    let original = client.classify_or_missing(original_text).await;
    let mut points = Vec::with_capacity(outcome.points.len());
    for p in &outcome.points {
        let steered = client.classify_or_missing(&p.steered_text).await;
        let shift = shift_verdict(&outcome.scenario, original.as_ref(), steered.as_ref(), rule);
        points.push(ClassifiedPoint {
            strength: p.strength,
            steered,
            shift,
        });
    }
    let evaluated = outcome
        .flip_point
        .and_then(|f| points.iter().find(|p| p.strength == f))
        .or(points.last());
    let shift = evaluated.map_or_else(
        || ShiftVerdict::Undetermined {
            reason: "sweep has no points".into(),
        },
        |p| p.shift.clone(),
    );
    ClassifiedSweep {
        source: source.to_string(),
        scenario: outcome.scenario.clone(),
        original,
        evaluated_strength: evaluated.map(|p| p.strength),
        points,
        shift,
    }
}

pub async fn classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let client = ClassifierClient::new(&args.endpoint)
        .with_retries(args.attempts, std::time::Duration::from_millis(200));
    if let Some(text) = &args.text {
        let verdict = client.classify(text).await.context("classifying text")?;
        println!(
            "{}",
            serde_json::to_string_pretty(&verdict).expect("verdict serialises")
        );
        return Ok(());
    }
    if args.sweeps.is_empty() {
        return Err(CliError::Usage(
            "classify needs --text or at least one --sweep".into(),
        ));
    }
    let mut loaded = Vec::new();
    for p in &args.sweeps {
        input_file(p, "sweep file")?;
        loaded.push((p.display().to_string(), Artifact::<SweepOutcome>::read(p)?));
    }
    let mut sweeps = Vec::new();
    for (name, a) in &loaded {
        let c = classify_sweep(&client, name, &a.data, args.rule).await;
        println!("{}: {:?}", a.data.scenario.name, c.shift);
        sweeps.push(c);
    }
    let detected = sweeps.iter().filter(|s| s.shift.is_detected()).count();
    let determined = sweeps
        .iter()
        .filter(|s| !matches!(s.shift, ShiftVerdict::Undetermined { .. }))
        .count();
    println!(
        "shift detected in {detected} of {determined} determinable scenarios ({} total)",
        sweeps.len()
    );
    let first = &loaded[0].1.meta;
    let meta = Meta::new(&first.model_id, &first.corpus_hash, args.seed);
    let run = ClassificationRun {
        endpoint: args.endpoint.clone(),
        rule: args.rule,
        sweeps,
        detected,
        determined,
    };
    match &args.out {
        Some(p) => Artifact::new(meta, &run).write(p)?,
        None => println!("{}", Artifact::new(meta, &run).to_json()),
    }
    Ok(())
}

// ---------------------------------------------------------- validate-corpus

pub fn validate_corpus(
    corpus: Option<&Path>,
    model: Option<&Path>,
    min_tokens: usize,
) -> Result<(), CliError> {
    let corpus = load_corpus(corpus)?;
    corpus.validate().context("corpus structure")?;
    let tokenizer = match model {
        Some(p) => open_model(p)?.tokenizer().clone(),
        None => Tokenizer::gpt2(),
    };
    corpus
        .validate_lengths(&tokenizer, min_tokens)
        .context("passage lengths")?;
    let lengths: Vec<usize> = corpus
        .passages
        .values()
        .flatten()
        .chain(&corpus.neutral_passages)
        .map(|p| tokenizer.encode(p).len())
        .collect();
    let (lo, hi) = (
        lengths.iter().min().copied().unwrap_or(0),
        lengths.iter().max().copied().unwrap_or(0),
    );
    println!(
        "corpus ok: {} emotions, {} passages ({lo}-{hi} tokens), hash {}",
        corpus.emotions.len(),
        lengths.len(),
        corpus.content_hash()
    );
    for (q, n) in corpus.quadrant_coverage() {
        println!("  {q}: {n}");
    }
    Ok(())
}
