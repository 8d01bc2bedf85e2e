//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::Value;
use tutorbench_core::backends::{
    export_finetune_dataset, finetune_record, FaultPlan, FaultyCompletion, MockCompletion, MockEmbedding,
    RankerScores, RetryPolicy, Retrier, Sleeper,
};
use tutorbench_core::corpus::{
    corpus_stats, load_corpus, sample_internal_test, seeded_rng, split_for_finetune, Corpus, Split,
};
use tutorbench_core::metrics::{bertscore, ensemble, greedy_scores, EnsembleWeights};
use tutorbench_core::promptkit::{
    assemble_prompt, builtin_templates, select_exemplars, ExemplarChoice, ExemplarFilter, ExemplarSet,
    RoleLabeling, TemplateId,
};
use tutorbench_core::runner::{
    ExperimentConfig, FinetunePromptStyle, GenerationMode, RunArtifact, RunStore, Runner, MANIFEST_FILE,
    RESPONSES_FILE,
};

const APPENDIX_IDS: [&str; 5] = ["0701", "1062", "0298", "1674", "1650"];
const PINNED: [&str; 5] = ["h01", "h02", "h03", "h04", "h05"];
const FIXTURE_FILES: [&str; 5] = ["appendix.json", "handwritten.json", "filter_set.json", "train.jsonl", "dev.jsonl"];
const TSCC_ENV: &str = "TUTORBENCH_TSCC_TRAIN";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

fn load(name: &str) -> Corpus {
    load_corpus(&fixtures().join(name), Split::Custom).unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct NoSleep;
impl Sleeper for NoSleep {
    fn sleep(&self, _: Duration) {}
}

fn quiet_retrier() -> Arc<Retrier> {
    Arc::new(Retrier::with_sleeper(RetryPolicy::default(), Arc::new(NoSleep)))
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Full pairwise cosine matrix, then row and column maxima.
fn matrix_oracle(c: &[Vec<f64>], r: &[Vec<f64>]) -> (f64, f64, f64) {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let m: Vec<Vec<f64>> = c.iter().map(|ci| r.iter().map(|rj| cos(ci, rj)).collect()).collect();
    let p = m.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>() / c.len() as f64;
    let rec = (0..r.len())
        .map(|j| m.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / r.len() as f64;
    let f = if p + rec > 0.0 { 2.0 * p * rec / (p + rec) } else { 0.0 };
    (p, rec, f)
}

fn c1_metric_oracle() -> Outcome {
    let mut rng = seeded_rng(2024);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = rng.random_range(2..=16);
        let nc = rng.random_range(1..=5);
        let nr = rng.random_range(1..=5);
        let c: Vec<_> = (0..nc).map(|_| random_unit(&mut rng, dim)).collect();
        let r: Vec<_> = (0..nr).map(|_| random_unit(&mut rng, dim)).collect();
        let got = greedy_scores(&c, &r).map_err(|e| e.to_string())?;
        let (p, rec, f) = matrix_oracle(&c, &r);
        worst = worst.max((got.precision - p).abs()).max((got.recall - rec).abs()).max((got.f1 - f).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, format!("max |delta| {worst:e} > 1e-9"))?;
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances, max |delta| {worst:.1e}, {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

fn fixture_strings() -> Vec<String> {
    let mut out = Vec::new();
    for name in FIXTURE_FILES {
        for s in load(name).samples {
            out.extend(s.utterances.into_iter().map(|t| t.text));
            out.extend(s.reference_response);
        }
    }
    out.sort();
    out.dedup();
    out
}

fn c2_identity_symmetry() -> Outcome {
    let strings = fixture_strings();
    let provider = MockEmbedding::new(0);
    let retrier = quiet_retrier();
    let mut rng = seeded_rng(99);
    let mut checked = 0;
    while checked < 100 {
        let x = &strings[rng.random_range(0..strings.len())];
        let y = &strings[rng.random_range(0..strings.len())];
        let Ok(same) = bertscore(&provider, &retrier, x, x) else {
            continue;
        };
        ensure((same.f1 - 1.0).abs() <= 1e-6, format!("f1({x:?}, itself) = {}", same.f1))?;
        let xy = bertscore(&provider, &retrier, x, y).map_err(|e| e.to_string())?;
        let yx = bertscore(&provider, &retrier, y, x).map_err(|e| e.to_string())?;
        ensure(
            xy.precision == yx.recall && xy.recall == yx.precision,
            format!("swap not exact for {x:?} / {y:?}"),
        )?;
        checked += 1;
    }
    Ok(format!("{checked} strings from {} fixture texts", strings.len()))
}

fn c3_ensemble_consistency() -> Outcome {
    let product = EnsembleWeights::product();
    let mut parts = Vec::new();
    for (name, means, reported) in [("dev", (0.37, 0.98, 0.99), 0.35), ("eval", (0.40, 0.97, 0.98), 0.37)] {
        let s = RankerScores::new(means.0, means.1, means.2).map_err(|e| e.to_string())?;
        let v = ensemble(&s, &product).map_err(|e| e.to_string())?;
        ensure((v - reported).abs() <= 0.02, format!("{name}: {v:.4} vs {reported}"))?;
        parts.push(format!("{name} {v:.4} vs {reported}"));
    }
    Ok(parts.join(", "))
}

fn c4_prompt_goldens() -> Outcome {
    let appendix = load("appendix.json");
    let choice = ExemplarChoice::Pinned {
        ids: PINNED.iter().map(|s| s.to_string()).collect(),
        allow_unfiltered: false,
    };
    let few = select_exemplars(&load("handwritten.json"), &choice, &ExemplarFilter::default()).map_err(|e| e.to_string())?;
    let dir = fixtures().join("golden/prompts");
    let mut n = 0;
    for template in builtin_templates() {
        for (shots, exemplars) in [("zero", ExemplarSet::empty()), ("few", few.clone())] {
            for id in APPENDIX_IDS {
                let p = assemble_prompt(&template, &exemplars, appendix.get(id).unwrap()).map_err(|e| e.to_string())?;
                let path = dir.join(format!("{}_{shots}_{id}.txt", template.id));
                let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                ensure(golden == p.text, format!("{} differs", path.display()))?;
                ensure(p.text.ends_with(&template.cue_label), format!("{} lacks cue", path.display()))?;
                if template.role_labeling == RoleLabeling::AnonymousSpeakers {
                    ensure(
                        !p.text.contains("teacher:") && !p.text.contains("student:"),
                        format!("{} leaks role names", path.display()),
                    )?;
                }
                n += 1;
            }
        }
    }
    Ok(format!("{n} prompts byte-identical"))
}

fn c5_exemplar_filter() -> Outcome {
    let set = load("filter_set.json");
    ensure(set.len() == 20, format!("fixture has {} samples", set.len()))?;
    let filter = ExemplarFilter::default();
    let mut rejected = Vec::new();
    for s in &set.samples {
        let r = s.reference_response.as_deref().unwrap();
        if !filter.is_substantive_reference(r) {
            rejected.push(r.to_string());
        }
    }
    for word in ["sure", "okay", "hi"] {
        ensure(rejected.iter().any(|r| r == word), format!("'{word}' accepted"))?;
    }
    let r1674 = set.get("1674").and_then(|s| s.reference_response.as_deref()).ok_or("1674 missing")?;
    ensure(filter.is_substantive_reference(r1674), "1674 rejected")?;
    Ok(format!("rejected {rejected:?}, accepted 1674"))
}

fn raw_records(path: &Path) -> Vec<Value> {
    let text = fs::read_to_string(path).unwrap();
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => items,
        _ => text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect(),
    }
}

fn brute_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| x * x).sum::<f64>() / n - mean * mean;
    (mean, var.max(0.0).sqrt())
}

fn c6_corpus_stats() -> Outcome {
    for name in FIXTURE_FILES {
        let path = fixtures().join(name);
        let raw = raw_records(&path);
        let turns: Vec<f64> = raw.iter().map(|r| r["utterances"].as_array().unwrap().len() as f64).collect();
        let words: Vec<f64> = raw
            .iter()
            .filter_map(|r| r.get("response").and_then(Value::as_str))
            .map(|s| s.split_whitespace().count() as f64)
            .collect();
        let stats = corpus_stats(&load_corpus(&path, Split::Custom).unwrap()).map_err(|e| e.to_string())?;
        let (tm, ts) = brute_moments(&turns);
        ensure(stats.sample_count == raw.len(), format!("{name}: count"))?;
        ensure((stats.turns_mean - tm).abs() <= 1e-9 && (stats.turns_std - ts).abs() <= 1e-9, format!("{name}: turns"))?;
        ensure(stats.turns_max as f64 == turns.iter().cloned().fold(0.0, f64::max), format!("{name}: turns max"))?;
        if !words.is_empty() {
            let (wm, ws) = brute_moments(&words);
            ensure(
                (stats.response_len_mean.unwrap() - wm).abs() <= 1e-9 && (stats.response_len_std.unwrap() - ws).abs() <= 1e-9,
                format!("{name}: response length"),
            )?;
        } else {
            ensure(stats.response_len_mean.is_none(), format!("{name}: phantom response stats"))?;
        }
    }
    let tscc = match std::env::var_os(TSCC_ENV) {
        None => format!("{TSCC_ENV} not set, real-corpus check skipped"),
        Some(path) => {
            let s = corpus_stats(&load_corpus(Path::new(&path), Split::Train).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let near = |x: f64, t: f64| (x - t).abs() <= 0.05;
            ensure(s.sample_count == 2747, format!("count {}", s.sample_count))?;
            ensure(near(s.turns_mean, 3.9) && near(s.turns_std, 2.2), format!("turns {:.3} ± {:.3}", s.turns_mean, s.turns_std))?;
            ensure(s.turns_max == 17, format!("turns max {}", s.turns_max))?;
            let m = s.response_len_mean.unwrap_or(f64::NAN);
            ensure(near(m, 9.1), format!("response mean {m:.3}"))?;
            ensure(
                s.response_len_min == Some(1) && s.response_len_max == Some(66),
                format!("response range {:?}-{:?}", s.response_len_min, s.response_len_max),
            )?;
            "real train file matches".to_string()
        }
    };
    Ok(format!("{} fixtures exact to 1e-9; {tscc}", FIXTURE_FILES.len()))
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let example = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tutorbench.toml");
    let text = fs::read_to_string(example)
        .unwrap()
        .replace("\"fixtures/", &format!("\"{}/", fixtures().display()));
    fs::write(dir.path().join("tutorbench.toml"), text).unwrap();
    dir
}

fn tb(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tutorbench"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn manifest_without_timestamps(path: &Path) -> Result<Value, String> {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let obj = v.as_object_mut().ok_or("manifest is not an object")?;
    obj.remove("started_at");
    obj.remove("finished_at");
    Ok(v)
}

fn c7_offline_pipeline() -> Outcome {
    let start = Instant::now();
    let (a, b) = (workspace(), workspace());
    let out = tb(a.path(), &["--mock", "generate"])?;
    let run_id = out.split('\t').next().unwrap_or_default().to_string();
    let md = tb(a.path(), &["--mock", "evaluate", &run_id])?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    for col in ["Prec.", "Rec.", "F1", "Updown", "Human vs. Rand", "Human vs. Machine", "Final (avg)", "Final (best)"] {
        ensure(md.contains(col), format!("report lacks column {col}"))?;
    }
    let row = md.lines().nth(2).ok_or("report has no data row")?;
    ensure(!row.contains('—'), format!("report row has empty cells: {row}"))?;
    let report: Value = serde_json::from_str(
        &fs::read_to_string(a.path().join(format!("reports/{run_id}.json"))).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let n = report["reports"][0]["n_scored"].as_u64().unwrap_or(0) + report["reports"][0]["n_skipped"].as_u64().unwrap_or(0);
    ensure(n == 50, format!("report covers {n} samples"))?;

    let rerun = tb(b.path(), &["--mock", "generate"])?;
    ensure(rerun == out, format!("rerun printed {rerun:?}, first run {out:?}"))?;
    let (ra, rb) = (a.path().join("runs").join(&run_id), b.path().join("runs").join(&run_id));
    let bytes_a = fs::read(ra.join(RESPONSES_FILE)).map_err(|e| e.to_string())?;
    let bytes_b = fs::read(rb.join(RESPONSES_FILE)).map_err(|e| e.to_string())?;
    ensure(bytes_a == bytes_b, "responses.jsonl differs between runs")?;
    ensure(
        manifest_without_timestamps(&ra.join(MANIFEST_FILE))? == manifest_without_timestamps(&rb.join(MANIFEST_FILE))?,
        "manifest differs beyond timestamps",
    )?;
    Ok(format!("run {run_id}, 50 samples, {:.2} s, rerun byte-identical", elapsed.as_secs_f64()))
}

fn few_shot_config() -> ExperimentConfig {
    ExperimentConfig {
        mode: GenerationMode::FewShot,
        template: TemplateId::A,
        exemplars: Some(ExemplarChoice::Pinned {
            ids: PINNED.iter().map(|s| s.to_string()).collect(),
            allow_unfiltered: false,
        }),
        exemplar_filter: ExemplarFilter::default(),
        params: Default::default(),
        backend: "mock".into(),
        corpus: "internal".into(),
        seed: 0,
        finetune_prompt_style: FinetunePromptStyle::Export,
        finetune_serialization: Default::default(),
    }
}

fn internal_set(train: &Corpus) -> Corpus {
    let exclude: HashSet<String> = PINNED.iter().map(|s| s.to_string()).collect();
    sample_internal_test(train, 50, 7, &exclude).unwrap()
}

fn c8_fault_tolerance() -> Outcome {
    let train = load("train.jsonl");
    let set = internal_set(&train);
    let config = few_shot_config();
    let max_attempts = RetryPolicy::default().max_attempts as u64;

    let plan = FaultPlan {
        throttle_rate: 0.3,
        seed: 3,
        ..Default::default()
    };
    let backend = Arc::new(FaultyCompletion::new(MockCompletion::new(0), plan));
    let dir = tempfile::tempdir().unwrap();
    let run = Runner::new(backend.clone(), quiet_retrier(), RunStore::new(dir.path()))
        .with_workers(8)
        .run(&config, &set, &train)
        .map_err(|e| e.to_string())?;
    let lost = run.failures().count();
    ensure(lost == 0 && run.responses().count() == 50, format!("{lost} samples lost under throttling"))?;
    ensure(backend.max_attempts_per_prompt() <= max_attempts, "attempt cap exceeded")?;
    let throttled_attempts = backend.total_attempts();

    let exemplars = config.resolve_exemplars(&train).map_err(|e| e.to_string())?;
    let prompts: Vec<String> = set.samples.iter().map(|s| config.build_prompt(&exemplars, s).unwrap()).collect();
    let doomed = prompts.iter().find(|p| prompts.iter().filter(|q| q == p).count() == 1).ok_or("no unique prompt")?;
    let plan = FaultPlan {
        throttle_rate: 0.3,
        seed: 3,
        permanent_markers: vec![doomed.clone()],
        ..Default::default()
    };
    let backend = Arc::new(FaultyCompletion::new(MockCompletion::new(0), plan));
    let dir = tempfile::tempdir().unwrap();
    let run = Runner::new(backend.clone(), quiet_retrier(), RunStore::new(dir.path()))
        .with_workers(8)
        .run(&config, &set, &train)
        .map_err(|e| e.to_string())?;
    let failures: Vec<_> = run.failures().collect();
    ensure(failures.len() == 1, format!("{} failures recorded", failures.len()))?;
    ensure(run.entries.len() == 50, "run lost entries")?;
    ensure(backend.max_attempts_per_prompt() <= max_attempts, "attempt cap exceeded")?;
    Ok(format!(
        "30% throttle: 0 lost, {throttled_attempts} attempts for 50 prompts; permanent: 1 failure after {} attempts",
        failures[0].attempt_count
    ))
}

fn run_with(workers: usize) -> Result<(RunArtifact, Vec<u8>), String> {
    let train = load("train.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(Arc::new(MockCompletion::new(0)), quiet_retrier(), RunStore::new(dir.path())).with_workers(workers);
    let run = runner.run(&few_shot_config(), &internal_set(&train), &train).map_err(|e| e.to_string())?;
    let bytes = fs::read(runner.store().run_dir(&run.run_id).join(RESPONSES_FILE)).map_err(|e| e.to_string())?;
    Ok((run, bytes))
}

fn c9_parallel_determinism() -> Outcome {
    let (base, base_bytes) = run_with(1)?;
    for workers in [4, 16] {
        let (run, bytes) = run_with(workers)?;
        ensure(run.run_id == base.run_id && run.entries == base.entries, format!("workers={workers} entries differ"))?;
        ensure(bytes == base_bytes, format!("workers={workers} responses.jsonl differs"))?;
    }
    Ok(format!("workers 1/4/16 identical (run {})", base.run_id))
}

fn c10_finetune_export() -> Outcome {
    let appendix = load("appendix.json");
    let sample = appendix.get("1062").ok_or("1062 missing")?;
    let record = finetune_record(sample, &Default::default()).map_err(|e| e.to_string())?;
    ensure(record.prompt.ends_with("student: I got it\nteacher:"), "1062 prompt suffix")?;
    ensure(record.completion == " Yes that's great - that would look good in an answer\n", "1062 completion")?;
    let one = Corpus::new(Split::Train, vec![sample.clone()]).unwrap();
    let line = export_finetune_dataset(&one, &Default::default()).map_err(|e| e.to_string())?;
    let golden = fs::read_to_string(fixtures().join("golden/finetune_1062.jsonl")).map_err(|e| e.to_string())?;
    ensure(line == golden, "1062 export differs from golden")?;

    let train = load("train.jsonl");
    let (fit, holdout) = split_for_finetune(&train, 0.05, 3).map_err(|e| e.to_string())?;
    let jsonl = export_finetune_dataset(&fit, &Default::default()).map_err(|e| e.to_string())?;
    let fit_ids: HashSet<String> = fit.ids().into_iter().collect();
    ensure(jsonl.lines().count() == 95 && holdout.len() == 5, format!("{} + {}", jsonl.lines().count(), holdout.len()))?;
    ensure(holdout.ids().iter().all(|id| !fit_ids.contains(id)), "holdout overlaps training records")?;
    Ok("1062 byte-exact; 100 -> 95 + 5 disjoint".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric oracle equivalence", c1_metric_oracle),
        ("identity and symmetry", c2_identity_symmetry),
        ("ensemble consistency with reported means", c3_ensemble_consistency),
        ("prompt golden suite", c4_prompt_goldens),
        ("exemplar filter", c5_exemplar_filter),
        ("corpus stats oracle", c6_corpus_stats),
        ("end-to-end offline pipeline", c7_offline_pipeline),
        ("fault tolerance", c8_fault_tolerance),
        ("determinism under parallelism", c9_parallel_determinism),
        ("fine-tune export golden", c10_finetune_export),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
