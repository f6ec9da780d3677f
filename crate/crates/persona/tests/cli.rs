use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use persona::ceb::{write_embeddings, Layout};
use persona::chunks::load_chunks;
use persona::corpus::{load_essays, majority_rate};
use persona::fixture::{generate, write_fixture, Fixture, FixtureSpec};
use persona_core::PersonalityTrait;
use tempfile::TempDir;

fn persona(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persona")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_spec() -> FixtureSpec {
    FixtureSpec { n_essays: 30, dim: 16, static_dim: 8, ..FixtureSpec::default() }
}

struct Setup {
    dir: TempDir,
    fx: Fixture,
    config: PathBuf,
}

impl Setup {
    fn new(spec: FixtureSpec) -> Self {
        let dir = TempDir::new().unwrap();
        let fx = generate(&spec).unwrap();
        let paths = write_fixture(dir.path(), &fx).unwrap();
        Setup { dir, fx, config: paths.config_json }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.config.to_str().unwrap();
        let mut all = vec!["--config", config];
        all.extend_from_slice(args);
        persona(&all)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_essays_file_exits_with_ingestion_code() {
    let o = persona(&["evaluate", "--variant", "majority-baseline", "--essays", "/nonexistent/essays.csv"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("/nonexistent/essays.csv"));
}

#[test]
fn unknown_variant_lists_valid_names() {
    let o = persona(&["evaluate", "--variant", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["bb-svm", "majority-baseline", "m13", "layer-0..layer-12"] {
        assert!(err.contains(name), "{name} missing from: {err}");
    }
}

#[test]
fn unknown_trait_is_a_usage_error() {
    let o = persona(&["train", "--trait", "XYZ"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"version": 1, "svm": {"cee": 2.0}}"#).unwrap();
    let o = persona(&["--config", s(&cfg), "evaluate", "--variant", "majority-baseline"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cee"));
}

#[test]
fn missing_embedding_names_the_chunk() {
    let setup = Setup::new(small_spec());
    let dropped = setup.fx.contextual.last().unwrap();
    let kept = &setup.fx.contextual[..setup.fx.contextual.len() - 1];
    let path = setup.path("embeddings.ceb");
    write_embeddings(&path, Layout::of(dropped), kept).unwrap();

    let o = setup.run(&["train", "--trait", "EXT"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let key = format!("({}, {})", dropped.author_id, dropped.chunk_index);
    assert!(stderr(&o).contains(&key), "expected {key} in {}", stderr(&o));
}

#[test]
fn truncated_embeddings_fail_integrity_check() {
    let setup = Setup::new(small_spec());
    let path = setup.path("embeddings.ceb");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    let o = persona(&["inspect-embeddings", "--verify", s(&path)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("offset"));

    let o = persona(&["inspect-embeddings", s(&setup.path("static.ceb")), "--chunks", s(&setup.path("chunks.jsonl"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn training_one_trait_writes_only_its_model() {
    let setup = Setup::new(small_spec());
    let o = setup.run(&["train", "--trait", "EXT", "--n-estimators", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let models: Vec<String> = std::fs::read_dir(setup.path("models"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(models, ["EXT"]);
    let ext = setup.path("models").join("EXT");
    for f in ["spec.json", "member_00.json", "member_01.json", "member_02.json"] {
        assert!(ext.join(f).exists(), "{f} missing");
    }
    assert!(!ext.join("member_03.json").exists());
}

#[test]
fn preprocess_honours_chunk_size_flag() {
    let setup = Setup::new(small_spec());
    let out = setup.path("small_chunks.jsonl");
    let o = setup.run(&["preprocess", "--max-chunk-tokens", "50", "--chunks", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let chunks = load_chunks(&out).unwrap();
    let default = load_chunks(&setup.path("chunks.jsonl")).unwrap();
    assert!(chunks.len() > default.len());
    // 50 whitespace tokens may expand to at most 62.
    assert!(chunks.iter().all(|c| c.token_count() <= 62));
    let ids: std::collections::BTreeSet<&str> = chunks.iter().map(|c| c.author_id.as_str()).collect();
    assert_eq!(ids.len(), setup.fx.essays.len());
}

#[test]
fn predict_on_empty_input_writes_only_the_header() {
    let setup = Setup::new(small_spec());
    assert_eq!(setup.run(&["train", "--n-estimators", "2"]).status.code(), Some(0));
    let input = setup.path("empty.csv");
    std::fs::write(&input, "").unwrap();
    let o = setup.run(&["predict", "--input", s(&input)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "author_id,EXT,NEU,AGR,CON,OPN\n");
}

#[test]
fn predict_without_a_model_fails() {
    let setup = Setup::new(small_spec());
    let o = setup.run(&["predict", "--input", s(&setup.path("essays.csv")), "--trait", "OPN"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("OPN"));
}

#[test]
fn train_then_predict_on_training_essays() {
    let setup = Setup::new(small_spec());
    let o = setup.run(&["train"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let essays = setup.path("essays.csv");
    let first = setup.run(&["predict", "--input", s(&essays), "--out", s(&setup.path("p1.csv"))]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    setup.run(&["predict", "--input", s(&essays), "--out", s(&setup.path("p2.csv"))]);
    let p1 = std::fs::read(setup.path("p1.csv")).unwrap();
    assert_eq!(p1, std::fs::read(setup.path("p2.csv")).unwrap());

    let corpus = load_essays(&essays).unwrap();
    let mut reader = csv::Reader::from_reader(p1.as_slice());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), corpus.essays.len());
    for (ti, t) in PersonalityTrait::ALL.iter().enumerate() {
        let correct = rows
            .iter()
            .zip(&corpus.essays)
            .filter(|(r, e)| {
                assert_eq!(&r[0], e.author_id);
                (&r[ti + 1] == "y") == e.labels.get(*t)
            })
            .count();
        let acc = correct as f64 / rows.len() as f64;
        assert!(acc >= majority_rate(&corpus, *t), "{}: {acc}", t.code());
    }
}

#[test]
fn predict_chunks_in_process_without_a_chunks_file() {
    let setup = Setup::new(small_spec());
    assert_eq!(setup.run(&["train", "--trait", "AGR", "--n-estimators", "2"]).status.code(), Some(0));
    let mut config: serde_json::Value = serde_json::from_slice(&std::fs::read(&setup.config).unwrap()).unwrap();
    config["paths"]["chunks_jsonl"] = serde_json::Value::Null;
    let cfg = setup.path("no_chunks.json");
    std::fs::write(&cfg, serde_json::to_vec(&config).unwrap()).unwrap();
    let o = persona(&["--config", s(&cfg), "predict", "--trait", "AGR", "--input", s(&setup.path("essays.csv"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = String::from_utf8(o.stdout).unwrap();
    assert_eq!(lines.lines().count(), setup.fx.essays.len() + 1);
}

#[test]
fn evaluate_reports_are_byte_identical() {
    let setup = Setup::new(small_spec());
    let run = |name: &str| {
        let report = setup.path(name);
        let o = setup.run(&["evaluate", "--variant", "bb-svm", "--seed", "1", "--k", "3", "--report", s(&report)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(report).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["variant"], "bb-svm");
    assert_eq!(report["per_trait"].as_array().unwrap().len(), 5);
    assert!(setup.path("a.timing.json").exists());
    assert!(setup.path("a.txt").exists());
}

#[test]
fn sentence_mean_variant_needs_per_sentence_embeddings() {
    let setup = Setup::new(FixtureSpec { per_sentence: true, ..small_spec() });
    let o = setup.run(&["evaluate", "--variant", "m9", "--k", "3", "--n-estimators", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let plain = Setup::new(small_spec());
    let o = plain.run(&["evaluate", "--variant", "m9", "--k", "3", "--n-estimators", "2"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn static_variant_runs_on_static_vectors() {
    let setup = Setup::new(small_spec());
    let o = setup.run(&["evaluate", "--variant", "m8", "--k", "3", "--n-estimators", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("m8"));
}

#[test]
fn fixture_command_writes_a_usable_corpus() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("fx");
    let o = persona(&["fixture", "--out", s(&out), "--essays", "12", "--dim", "8", "--static-dim", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o =
        persona(&["--config", s(&out.join("config.json")), "evaluate", "--variant", "majority-baseline", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn shipped_grid_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/essays_grid.json");
    let config = persona::config::RunConfig::load(&path).unwrap();
    assert_eq!(config.grid().len(), 7);
    for v in &config.ablation.variants {
        v.parse::<persona::config::Variant>().unwrap();
    }
}
