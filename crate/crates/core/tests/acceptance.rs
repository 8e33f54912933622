//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any criterion does not pass.
//!
//! Criteria that need GPT-2 124M read it from `EMOSTEER_GPT2_DIR` (a local
//! copy of the Hugging Face `gpt2` repository, plus the golden files from
//! `scripts/make_gpt2_golden.py`). Without it they report BLOCKED, which
//! counts as a failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use emosteer::analysis::{self, Anisotropy, Regime};
use emosteer::extraction::{self, compute_emotion_vector, Method};
use emosteer::model::{layer_at_depth, safetensors::TensorStore};
use emosteer::stats::{self, mann_whitney_u, TestMethod, DEFAULT_SEED};
use emosteer::steering::{self, Scenario, SteeringConfig, SweepPoint, DEFAULT_STRENGTHS};
use emosteer::{EmotionVectorSet, ExtractionConfig, ModelHandle, StimulusCorpus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

enum Verdict {
    Pass(String),
    Fail(String),
    Blocked(String),
}

use Verdict::{Blocked, Fail, Pass};

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

struct Gpt2 {
    dir: PathBuf,
    model: ModelHandle,
}

/// Loaded once; the error string explains why it is unavailable.
fn load_gpt2() -> Result<Gpt2, String> {
    let dir = std::env::var_os("EMOSTEER_GPT2_DIR")
        .map(PathBuf::from)
        .ok_or("EMOSTEER_GPT2_DIR is not set; GPT-2 124M weights are required")?;
    let model =
        ModelHandle::open(&dir).map_err(|e| format!("cannot load {}: {e}", dir.display()))?;
    if model.layer_count() != 12 || model.model_dim() != 768 {
        return Err(format!(
            "{} is not GPT-2 124M ({} layers, d={})",
            dir.display(),
            model.layer_count(),
            model.model_dim()
        ));
    }
    Ok(Gpt2 { dir, model })
}

// ---------------------------------------------------------------- C1

#[derive(Deserialize)]
struct GoldenPrompts {
    prompts: Vec<GoldenPrompt>,
}

#[derive(Deserialize)]
struct GoldenPrompt {
    text: String,
    tokens: Vec<u32>,
}

fn forward_parity_gpt2(gpt2: &Result<Gpt2, String>) -> Verdict {
    let g = match gpt2 {
        Ok(g) => g,
        Err(e) => return Blocked(e.clone()),
    };
    let start = Instant::now();
    let read = |name: &str| -> Result<Vec<u8>, String> {
        std::fs::read(g.dir.join(name))
            .map_err(|e| format!("{name}: {e} (run scripts/make_gpt2_golden.py)"))
    };
    let prompts: GoldenPrompts = match read("golden_prompts.json")
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
    {
        Ok(p) => p,
        Err(e) => return Blocked(e),
    };
    let store = match read("golden_logits.safetensors")
        .and_then(|b| TensorStore::parse(&b).map_err(|e| e.to_string()))
    {
        Ok(s) => s,
        Err(e) => return Blocked(e),
    };
    let mut worst = 0f32;
    for (i, p) in prompts.prompts.iter().enumerate() {
        if g.model.tokenize(&p.text) != p.tokens {
            return Fail(format!(
                "prompt {i}: tokenization differs from the reference"
            ));
        }
        let Some(expected) = store.get(&format!("prompt{i}")) else {
            return Fail(format!("golden logits for prompt {i} missing"));
        };
        let out = match g.model.forward(&p.tokens, &BTreeSet::new(), None) {
            Ok(o) => o,
            Err(e) => return Fail(e.to_string()),
        };
        worst = worst.max(common::max_abs_diff(out.logits.as_slice(), &expected.data));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        prompts.prompts.len() == 5 && worst <= 1e-3 && secs < 60.0,
        format!(
            "{} prompts, max |Δlogit| = {worst:.2e} (tol 1e-3), {secs:.1}s",
            prompts.prompts.len()
        ),
    )
}

fn forward_parity_tiny() -> Verdict {
    let model = common::tiny_model();
    let golden = common::tiny_golden();
    let mut worst = 0f32;
    for p in &golden.prompts {
        let out = model.forward(&p.tokens, &BTreeSet::new(), None).unwrap();
        worst = worst.max(common::max_abs_diff(out.logits.as_slice(), &p.logits));
    }
    check(
        worst <= 1e-3,
        format!("5 prompts on the 4-layer reference fixture, max |Δlogit| = {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- C2

fn mann_whitney_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0f64;
    for _ in 0..200 {
        let n_a = rng.random_range(1..=8);
        let n_b = rng.random_range(1..=8);
        let a: Vec<f64> = (0..n_a).map(|_| rng.random_range(0..12) as f64).collect();
        let b: Vec<f64> = (0..n_b).map(|_| rng.random_range(0..12) as f64).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        if r.method != TestMethod::Exact {
            return Fail(format!("n=({n_a},{n_b}) did not use the exact method"));
        }
        worst = worst.max((r.p_value - common::enumerate_p(&a, &b)).abs());
    }
    let sep = mann_whitney_u(
        &[
            0.33, 0.335, 0.337, 0.338, 0.34, 0.336, 0.334, 0.339, 0.332, 0.331,
        ],
        &[0.65, 0.653, 0.656],
    )
    .unwrap();
    check(
        worst <= 1e-12 && sep.statistic == 0.0 && (sep.p_value - 0.007).abs() <= 0.0005,
        format!(
            "200 cases, max |p − enumeration| = {worst:.1e}; (10,3) separation U={} p={:.5}",
            sep.statistic, sep.p_value
        ),
    )
}

// ---------------------------------------------------------------- C3

fn invariances() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    for _ in 0..100 {
        let d = rng.random_range(2..64);
        let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect()
        };
        let (ne, nn) = (rng.random_range(1..12), rng.random_range(1..12));
        let emotion = draw(ne, &mut rng);
        let neutral = draw(nn, &mut rng);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-100.0..100.0)).collect();
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let tr = |acts: &[Vec<f64>], f: &dyn Fn(usize, f64) -> f64| -> Vec<Vec<f64>> {
            acts.iter()
                .map(|a| a.iter().enumerate().map(|(i, &x)| f(i, x)).collect())
                .collect()
        };
        let base = compute_emotion_vector("e", &emotion, &neutral, 0, Method::Generation).unwrap();
        let shifted = compute_emotion_vector(
            "e",
            &tr(&emotion, &|i, x| x + shift[i]),
            &tr(&neutral, &|i, x| x + shift[i]),
            0,
            Method::Generation,
        )
        .unwrap();
        let scaled = compute_emotion_vector(
            "e",
            &tr(&emotion, &|_, x| x * scale),
            &tr(&neutral, &|_, x| x * scale),
            0,
            Method::Generation,
        )
        .unwrap();
        for ((a, b), c) in base
            .direction
            .iter()
            .zip(&shifted.direction)
            .zip(&scaled.direction)
        {
            worst = worst.max((a - b).abs()).max((a - c).abs());
        }
    }
    check(
        worst <= 1e-6,
        format!("100 trials, max direction deviation {worst:.1e} (tol 1e-6)"),
    )
}

// ---------------------------------------------------------------- C4-C7

/// Comprehension vectors on GPT-2 at the 25%, 50% and final layers.
struct Gpt2Extraction {
    sweep: BTreeMap<usize, f64>,
    middle: EmotionVectorSet,
}

fn gpt2_extraction(g: &Gpt2) -> Result<Gpt2Extraction, String> {
    let corpus = StimulusCorpus::default_corpus();
    let n = g.model.layer_count();
    let layers: BTreeSet<usize> = [layer_at_depth(n, 0.25), g.model.middle_layer(), n - 1].into();
    let acts = extraction::CorpusActivations::collect(
        &g.model,
        &corpus,
        Method::Comprehension,
        &layers,
        &ExtractionConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let hash = corpus.content_hash();
    let mut sweep = BTreeMap::new();
    for &l in &layers {
        let set = acts
            .vector_set(g.model.id(), &hash, l)
            .map_err(|e| e.to_string())?;
        sweep.insert(l, set.mean_pairwise_cosine().map_err(|e| e.to_string())?);
    }
    let middle = acts
        .vector_set(g.model.id(), &hash, g.model.middle_layer())
        .map_err(|e| e.to_string())?;
    Ok(Gpt2Extraction { sweep, middle })
}

fn u_curve(g: &Result<Gpt2, String>, x: &Result<Gpt2Extraction, String>, secs: f64) -> Verdict {
    let (g, x) = match (g, x) {
        (Err(e), _) | (_, Err(e)) => return Blocked(e.clone()),
        (Ok(g), Ok(x)) => (g, x),
    };
    let n = g.model.layer_count();
    let (early, mid, last) = (layer_at_depth(n, 0.25), g.model.middle_layer(), n - 1);
    let (ce, cm, cl) = (x.sweep[&early], x.sweep[&mid], x.sweep[&last]);
    check(
        ce - cm >= 0.05 && cl - cm >= 0.05 && secs < 1200.0,
        format!(
            "layer {early}: {ce:.3}, layer {mid}: {cm:.3}, layer {last}: {cl:.3} (need both ends ≥ middle + 0.05), {secs:.0}s"
        ),
    )
}

fn anisotropy_gap_gpt2(g: &Result<Gpt2, String>, x: &Result<Gpt2Extraction, String>) -> Verdict {
    let (g, x) = match (g, x) {
        (Err(e), _) | (_, Err(e)) => return Blocked(e.clone()),
        (Ok(g), Ok(x)) => (g, x),
    };
    let corpus = StimulusCorpus::default_corpus();
    let baseline =
        match analysis::anisotropy_baseline(&g.model, &corpus.neutral_sentences, x.middle.layer) {
            Ok(b) => b,
            Err(e) => return Fail(e.to_string()),
        };
    let report = analysis::separation_report(&x.middle, baseline, &[]).unwrap();
    check(
        report.gap > 0.0,
        format!(
            "layer {}: baseline {:.3} ± {:.3}, emotion cosine {:.3}, gap {:.3}",
            x.middle.layer,
            report.anisotropy_mean,
            report.anisotropy_std,
            report.mean_pairwise,
            report.gap
        ),
    )
}

#[derive(Deserialize)]
struct StatesFixture {
    states: Vec<Vec<f64>>,
}

fn anisotropy_gap_fixture() -> Verdict {
    let text = std::fs::read_to_string(common::fixtures().join("anisotropy_states.json")).unwrap();
    let fixture: StatesFixture = serde_json::from_str(&text).unwrap();
    let baseline = analysis::anisotropy_from_states(&fixture.states).unwrap();
    let rounded = |v: f64| (v * 1000.0).round() / 1000.0;
    let set = cosine_set(0.357);
    let report = analysis::separation_report(
        &set,
        Anisotropy {
            mean: 0.808,
            std: 0.047,
        },
        &[],
    )
    .unwrap();
    check(
        rounded(baseline.mean) == 0.808
            && rounded(baseline.std) == 0.047
            && (report.mean_pairwise - 0.357).abs() < 1e-12
            && (report.gap - 0.451).abs() < 1e-12,
        format!(
            "fixture baseline {:.3} ± {:.3}; cosine {:.3} → gap {:.3}",
            baseline.mean, baseline.std, report.mean_pairwise, report.gap
        ),
    )
}

/// Three unit vectors whose pairwise cosines are all `c`.
fn cosine_set(c: f64) -> EmotionVectorSet {
    let k = 3;
    // v_i = sqrt(c)·u + sqrt(1−c)·e_i (u orthogonal to every e_i)
    let vecs: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut v = vec![0.0; k + 1];
            v[0] = c.sqrt();
            v[i + 1] = (1.0 - c).sqrt();
            v
        })
        .collect();
    let d = k + 1;
    let vectors = vecs
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let name = format!("e{i}");
            (
                name.clone(),
                compute_emotion_vector(
                    &name,
                    std::slice::from_ref(v),
                    &[vec![0.0; d]],
                    0,
                    Method::Comprehension,
                )
                .unwrap(),
            )
        })
        .collect();
    EmotionVectorSet {
        model_id: "fixture".into(),
        method: Method::Comprehension,
        layer: 0,
        corpus_hash: String::new(),
        neutral_mean: vec![0.0; d],
        vectors,
        diagnostics: vec![],
    }
}

fn scenario_config() -> SteeringConfig {
    SteeringConfig::default()
}

fn sign_suite(g: &Result<Gpt2, String>, x: &Result<Gpt2Extraction, String>) -> Verdict {
    let (g, x) = match (g, x) {
        (Err(e), _) | (_, Err(e)) => return Blocked(e.clone()),
        (Ok(g), Ok(x)) => (g, x),
    };
    let start = Instant::now();
    let mut agree = 0;
    let mut parts = Vec::new();
    for s in steering::default_scenarios() {
        let p = match steering::run_scenario(&g.model, &x.middle, &s, 0.02, &scenario_config()) {
            Ok(p) => p,
            Err(e) => return Fail(format!("{}: {e}", s.name)),
        };
        let ok = f64::from(s.sign) * p.target_delta > 0.0;
        agree += ok as usize;
        parts.push(format!("{} {:+.3}", s.name, p.target_delta));
    }
    let control = steering::run_scenario(
        &g.model,
        &x.middle,
        &steering::default_scenarios()[0],
        0.0,
        &scenario_config(),
    );
    let control_zero = control.as_ref().is_ok_and(|p| p.target_delta == 0.0);
    let secs = start.elapsed().as_secs_f64();
    check(
        agree == 5 && control_zero && secs < 600.0,
        format!(
            "{agree}/5 signs agree [{}]; strength-0 delta exactly 0: {control_zero}; {secs:.0}s",
            parts.join(", ")
        ),
    )
}

fn zero_strength_control_tiny() -> Verdict {
    let model = common::tiny_model();
    let mut corpus = StimulusCorpus::default_corpus();
    corpus
        .emotions
        .retain(|e| e.name == "angry" || e.name == "calm");
    let set = extraction::build_vector_set(
        &model,
        &corpus,
        Method::Comprehension,
        model.middle_layer(),
        &ExtractionConfig::default(),
    )
    .unwrap();
    let scenario = Scenario {
        name: "control".into(),
        prompt: "I have called six times and".into(),
        source_emotion: Some("angry".into()),
        target_emotion: "calm".into(),
        sign: 1,
    };
    let p = steering::run_scenario(&model, &set, &scenario, 0.0, &scenario_config()).unwrap();
    check(
        p.target_delta == 0.0 && p.steered_text == p.original_text,
        format!(
            "reference fixture: strength 0 target_delta = {}",
            p.target_delta
        ),
    )
}

fn flip_point(g: &Result<Gpt2, String>, x: &Result<Gpt2Extraction, String>) -> Verdict {
    let (g, x) = match (g, x) {
        (Err(e), _) | (_, Err(e)) => return Blocked(e.clone()),
        (Ok(g), Ok(x)) => (g, x),
    };
    let scenario = steering::default_scenarios()
        .into_iter()
        .find(|s| s.name == "aggressive_to_calm")
        .expect("bundled scenario");
    match steering::strength_sweep(
        &g.model,
        &x.middle,
        &scenario,
        &DEFAULT_STRENGTHS,
        &scenario_config(),
    ) {
        Ok(out) => check(
            out.flip_point.is_some_and(|f| (0.005..=0.05).contains(&f)),
            format!(
                "flip {:?}, sweet spot {:?}, collapse {:?}",
                out.flip_point, out.sweet_spot, out.collapse_point
            ),
        ),
        Err(e) => Fail(e.to_string()),
    }
}

fn monotone_early_response(
    g: &Result<Gpt2, String>,
    x: &Result<Gpt2Extraction, String>,
) -> Verdict {
    let (g, x) = match (g, x) {
        (Err(e), _) | (_, Err(e)) => return Blocked(e.clone()),
        (Ok(g), Ok(x)) => (g, x),
    };
    let mut monotone = 0;
    for s in steering::default_scenarios().iter().filter(|s| s.sign == 1) {
        let out = match steering::strength_sweep(
            &g.model,
            &x.middle,
            s,
            &DEFAULT_STRENGTHS[..3],
            &scenario_config(),
        ) {
            Ok(o) => o,
            Err(e) => return Fail(e.to_string()),
        };
        monotone += out
            .points
            .windows(2)
            .all(|w| w[1].target_delta >= w[0].target_delta) as usize;
    }
    check(
        monotone >= 4,
        format!(
            "{monotone} of 4 directional scenarios non-decreasing over the first three strengths"
        ),
    )
}

// ---------------------------------------------------------------- C8

fn regime_fixtures() -> Verdict {
    // (row, PPL at 0.005, PPL at 0.05, peak repetition, label)
    let rows = [
        ("row 1", 29.8, 52.1, 0.18, Regime::Surgical),
        ("row 2", 29.8, 5.0, 0.21, Regime::Surgical),
        ("row 3", 47.5, 41.4, 0.15, Regime::Surgical),
        ("row 4", 39.8, 25.1, 0.93, Regime::RepetitiveCollapse),
        ("row 5", 60.5, 19.6, 0.96, Regime::RepetitiveCollapse),
        ("row 6", 14.9, 1869.8, 0.12, Regime::Explosive),
        ("row 7", 28.7, 1252.9, 0.17, Regime::Explosive),
        ("row 8", 78.8, 958.8, 0.24, Regime::Explosive),
        ("row 9", 40.8, 958.8, 0.22, Regime::Explosive),
    ];
    let mut correct = 0;
    let mut wrong = Vec::new();
    for (name, lo, hi, rep, expected) in rows {
        let outcome = steering::annotate(
            Scenario {
                name: name.into(),
                prompt: "-".into(),
                source_emotion: None,
                target_emotion: "calm".into(),
                sign: 1,
            },
            0,
            vec![
                synthetic_point(0.005, lo, rep / 2.0),
                synthetic_point(0.05, hi, rep),
            ],
            &SteeringConfig::default(),
        );
        let label = analysis::sweep_regime(
            &outcome,
            analysis::DEFAULT_EXPLOSIVE_THRESHOLD,
            analysis::DEFAULT_REPETITION_THRESHOLD,
        )
        .unwrap();
        if label.regime == expected {
            correct += 1;
        } else {
            wrong.push(format!("{name} → {}", label.regime));
        }
    }
    check(
        correct == 9,
        format!(
            "{correct}/9 rows match{}",
            if wrong.is_empty() {
                String::new()
            } else {
                format!("; wrong: {}", wrong.join(", "))
            }
        ),
    )
}

fn synthetic_point(strength: f64, ppl: f64, repetition: f64) -> SweepPoint {
    SweepPoint {
        strength,
        steered_text: String::new(),
        original_text: String::new(),
        target_delta: 0.0,
        source_delta: None,
        target_projection: 0.0,
        source_projection: None,
        ppl_steered: Some(ppl),
        ppl_original: Some(ppl),
        repetition,
        word_repetition: repetition,
        diagnostics: vec![],
    }
}

// ---------------------------------------------------------------- C9

fn bootstrap_and_effect_size() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gen: Vec<f64> = (0..10)
        .map(|_| 0.337 + rng.random_range(-0.004..0.004))
        .collect();
    let comp: Vec<f64> = (0..10)
        .map(|_| 0.653 + rng.random_range(-0.004..0.004))
        .collect();
    let ci1 = stats::bootstrap_ci(&gen, &comp, 10_000, 0.95, DEFAULT_SEED).unwrap();
    let ci2 = stats::bootstrap_ci(&gen, &comp, 10_000, 0.95, DEFAULT_SEED).unwrap();
    let deterministic = ci1 == ci2;
    let d = stats::cohens_d(&[2.0, 4.0], &[5.0, 7.0]).unwrap();
    let cv = loo_cluster_cv();
    check(
        deterministic && !ci1.contains(0.0) && (d + 2.1213).abs() <= 1e-4 && cv < 0.01,
        format!(
            "CI [{:.4}, {:.4}] identical across runs: {deterministic}; d = {d:.4}; LOO CV = {:.3}%",
            ci1.lower,
            ci1.upper,
            cv * 100.0
        ),
    )
}

/// 20 synthetic emotions, 10 low-noise "stories" each, arranged so the
/// emotion vectors sit near mean pairwise cosine 0.337. Returns the
/// coefficient of variation of the leave-one-story-out mean cosines.
fn loo_cluster_cv() -> f64 {
    let (k, stories, d) = (20, 10, 64);
    let rho: f64 = 0.337;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut centre = |i: usize| -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[0] = rho.sqrt();
        v[i + 1] = (1.0 - rho).sqrt();
        v.iter_mut()
            .for_each(|x| *x += rng.random_range(-0.01..0.01));
        v
    };
    let centres: Vec<Vec<f64>> = (0..k).map(&mut centre).collect();
    let samples: Vec<Vec<Vec<f64>>> = (0..stories)
        .map(|_| {
            centres
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|x| x + rng.random_range(-0.02..0.02))
                        .collect()
                })
                .collect()
        })
        .collect();
    let neutral = vec![vec![0.0; d]];
    let reduce = |kept: &[Vec<Vec<f64>>]| -> f64 {
        let dirs: Vec<Vec<f64>> = (0..k)
            .map(|e| {
                let acts: Vec<Vec<f64>> = kept.iter().map(|story| story[e].clone()).collect();
                compute_emotion_vector("e", &acts, &neutral, 0, Method::Generation)
                    .unwrap()
                    .direction
            })
            .collect();
        analysis::mean_pairwise(&analysis::pairwise_cosine_matrix(&dirs).unwrap())
    };
    let loo = stats::loo_means(&samples, reduce).unwrap();
    let (mean, std) = stats::mean_std(&loo);
    std / mean
}

// ----------------------------------------------------------------

fn report(id: &str, name: &str, v: Verdict, failures: &mut usize) {
    let (tag, detail) = match v {
        Pass(d) => ("PASS", d),
        Fail(d) => {
            *failures += 1;
            ("FAIL", d)
        }
        Blocked(d) => {
            *failures += 1;
            ("BLOCKED", d)
        }
    };
    println!("[{tag:7}] {id:4} {name}: {detail}");
}

fn main() -> ExitCode {
    let mut failures = 0;
    let gpt2 = load_gpt2();
    let t = Instant::now();
    let extraction = gpt2
        .as_ref()
        .map_err(Clone::clone)
        .and_then(gpt2_extraction);
    let extraction_secs = t.elapsed().as_secs_f64();

    println!("acceptance suite");
    report(
        "C1",
        "forward parity, GPT-2 124M",
        forward_parity_gpt2(&gpt2),
        &mut failures,
    );
    report(
        "C1s",
        "forward parity, reference fixture (supplementary)",
        forward_parity_tiny(),
        &mut failures,
    );
    report(
        "C2",
        "exact Mann-Whitney oracle equivalence",
        mann_whitney_oracle(),
        &mut failures,
    );
    report(
        "C3",
        "mean-subtraction invariances",
        invariances(),
        &mut failures,
    );
    report(
        "C4",
        "U-curve, GPT-2 comprehension",
        u_curve(&gpt2, &extraction, extraction_secs),
        &mut failures,
    );
    report(
        "C5",
        "anisotropy gap, GPT-2",
        anisotropy_gap_gpt2(&gpt2, &extraction),
        &mut failures,
    );
    report(
        "C5f",
        "anisotropy gap, fixture arithmetic",
        anisotropy_gap_fixture(),
        &mut failures,
    );
    report(
        "C6",
        "steering sign suite, GPT-2 at 0.02",
        sign_suite(&gpt2, &extraction),
        &mut failures,
    );
    report(
        "C6c",
        "strength-0 control, reference fixture (supplementary)",
        zero_strength_control_tiny(),
        &mut failures,
    );
    report(
        "C7",
        "dose-response flip point, aggressive to calm",
        flip_point(&gpt2, &extraction),
        &mut failures,
    );
    report(
        "C7m",
        "monotone early response (supplementary)",
        monotone_early_response(&gpt2, &extraction),
        &mut failures,
    );
    report(
        "C8",
        "regime classification fixtures",
        regime_fixtures(),
        &mut failures,
    );
    report(
        "C9",
        "bootstrap determinism, Cohen's d, LOO stability",
        bootstrap_and_effect_size(),
        &mut failures,
    );

    if failures == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria did not pass");
        ExitCode::FAILURE
    }
}
