//! Command-line interface.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{ArgAction, Args, Parser, Subcommand};
use persona_core::textprep::Chunker;
use persona_core::PersonalityTrait;

use crate::ceb::{read_embeddings, read_embeddings_header};
use crate::chunks::{load_chunks, preprocess, save_chunks, StoredChunk};
use crate::config::{
    EmbeddingSource, GammaChoice, KernelChoice, LayerChoice, PackChoice, PipelineSettings, PoolingChoice, RunConfig,
    Variant,
};
use crate::corpus::{load_essays, load_psycho_features, load_unlabeled_essays, Corpus};
use crate::dataset::{assemble, check_coverage};
use crate::error::{exit, Error, Result};
use crate::eval::{self, majority_label, predict_essay, render_table, train_trait, Inputs, TableRow};
use crate::fixture::{generate, write_fixture, FixtureSpec};
use crate::model_io::{load_bagged, save_bagged, trait_dir, StoredTraitModel};

#[derive(Debug, Parser)]
#[command(name = "persona", version, about = "Big-Five personality detection with bagged SVMs over chunk embeddings")]
pub struct Cli {
    /// Run configuration (JSON). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "PERSONA_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, split and chunk essays into a chunks JSON-lines file.
    Preprocess {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one bagged model per trait.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Traits to train (EXT, NEU, AGR, CON, OPN); all when omitted.
        #[arg(long = "trait", value_parser = parse_trait)]
        traits: Vec<PersonalityTrait>,
        /// Named pipeline variant to train instead of the configured one.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Predict trait labels for essays.
    Predict {
        #[command(flatten)]
        overrides: Overrides,
        /// Essays CSV; label columns are optional.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "trait", value_parser = parse_trait)]
        traits: Vec<PersonalityTrait>,
    },
    /// Cross-validate one configuration.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Cross-validate the variant list over the SVM grid.
    Ablate {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated variant names; the configured list when omitted.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variants: Vec<Variant>,
    },
    /// Print the header of an embeddings file.
    InspectEmbeddings {
        file: PathBuf,
        /// Read every record and check integrity.
        #[arg(long)]
        verify: bool,
        /// Also check coverage against a chunks file.
        #[arg(long)]
        chunks: Option<PathBuf>,
    },
    /// Write a synthetic corpus with embeddings and a matching configuration.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        essays: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 13)]
        layers: usize,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value_t = 300)]
        static_dim: usize,
        #[arg(long)]
        per_sentence: bool,
        #[arg(long, default_value_t = 0.08)]
        signal: f64,
    },
}

fn parse_trait(s: &str) -> std::result::Result<PersonalityTrait, String> {
    s.parse().map_err(|e: persona_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse()
}

/// Flags that override the run configuration.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub essays: Option<PathBuf>,
    #[arg(long)]
    pub psycho: Option<PathBuf>,
    #[arg(long)]
    pub chunks: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub static_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// last_four, all_mean, or a layer index.
    #[arg(long)]
    pub layers: Option<LayerChoice>,
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingChoice>,
    /// Fuse psycholinguistic features (true/false).
    #[arg(long, action = ArgAction::Set)]
    pub fuse_psycho: Option<bool>,
    /// Standardize features (true/false).
    #[arg(long, action = ArgAction::Set)]
    pub scaling: Option<bool>,
    #[arg(long, value_enum)]
    pub embedding_source: Option<EmbeddingSource>,
    #[arg(long)]
    pub max_chunk_tokens: Option<usize>,
    #[arg(long, value_enum)]
    pub pack: Option<PackChoice>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelChoice>,
    #[arg(long = "c")]
    pub c: Option<f64>,
    /// "auto" or a positive number.
    #[arg(long)]
    pub gamma: Option<GammaChoice>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<u64>,
    #[arg(long)]
    pub cache_mb: Option<usize>,
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Bootstrap resampling of ensemble members (true/false).
    #[arg(long, action = ArgAction::Set)]
    pub bootstrap: Option<bool>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub fold_seed: Option<u64>,
    /// Sets both the fold seed and the bagging seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ignore feature rows for authors that are not in the essays file.
    #[arg(long)]
    pub lenient_psycho: bool,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        fn set_path(dst: &mut Option<PathBuf>, v: &Option<PathBuf>) {
            if v.is_some() {
                dst.clone_from(v);
            }
        }
        set_path(&mut c.paths.essays_csv, &self.essays);
        set_path(&mut c.paths.psycho_csv, &self.psycho);
        set_path(&mut c.paths.chunks_jsonl, &self.chunks);
        set_path(&mut c.paths.embeddings_ceb, &self.embeddings);
        set_path(&mut c.paths.static_ceb, &self.static_embeddings);
        set_path(&mut c.paths.model_dir, &self.model_dir);
        set_path(&mut c.paths.report_json, &self.report);
        set(&mut c.pipeline.layers, &self.layers);
        set(&mut c.pipeline.pooling, &self.pooling);
        set(&mut c.pipeline.psycho, &self.fuse_psycho);
        set(&mut c.pipeline.scaling, &self.scaling);
        set(&mut c.pipeline.embeddings, &self.embedding_source);
        set(&mut c.chunking.max_chunk_tokens, &self.max_chunk_tokens);
        set(&mut c.chunking.pack, &self.pack);
        set(&mut c.svm.kernel, &self.kernel);
        set(&mut c.svm.c, &self.c);
        set(&mut c.svm.gamma, &self.gamma);
        set(&mut c.svm.tol, &self.tol);
        set(&mut c.svm.max_iter, &self.max_iter);
        set(&mut c.svm.cache_mb, &self.cache_mb);
        set(&mut c.bagging.n_estimators, &self.n_estimators);
        set(&mut c.bagging.bootstrap, &self.bootstrap);
        set(&mut c.bagging.master_seed, &self.seed);
        set(&mut c.eval.seed, &self.seed);
        set(&mut c.bagging.master_seed, &self.master_seed);
        set(&mut c.eval.seed, &self.fold_seed);
        set(&mut c.eval.k, &self.k);
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        // A pool already exists when called repeatedly in one process; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config_path = cli.config;
    let resolve = |o: &Overrides| -> Result<RunConfig> {
        let mut c = match &config_path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        o.apply(&mut c);
        c.validate()?;
        Ok(c)
    };
    match cli.command {
        Command::Preprocess { overrides } => cmd_preprocess(&resolve(&overrides)?),
        Command::Train { overrides, traits, variant } => {
            let c = resolve(&overrides)?;
            let c = variant.map_or(c.clone(), |v| v.apply(&c));
            cmd_train(&c, &traits, overrides.lenient_psycho)
        }
        Command::Predict { overrides, input, out, traits } => {
            cmd_predict(&resolve(&overrides)?, &input, out.as_deref(), &traits)
        }
        Command::Evaluate { overrides, variant } => {
            cmd_evaluate(&resolve(&overrides)?, variant, overrides.lenient_psycho)
        }
        Command::Ablate { overrides, variants } => {
            cmd_ablate(&resolve(&overrides)?, &variants, overrides.lenient_psycho)
        }
        Command::InspectEmbeddings { file, verify, chunks } => cmd_inspect(&file, verify, chunks.as_deref()),
        Command::Fixture { out, essays, seed, layers, dim, static_dim, per_sentence, signal } => {
            let spec = FixtureSpec { n_essays: essays, seed, n_layers: layers, dim, static_dim, per_sentence, signal };
            let fx = generate(&spec)?;
            let paths = write_fixture(&out, &fx)?;
            println!("wrote {} essays, {} chunks to {}", fx.essays.len(), fx.chunks.len(), out.display());
            println!("config: {}", paths.config_json.display());
            Ok(())
        }
    }
}

/// A configured input path that must exist.
fn input<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = path.as_deref().ok_or_else(|| Error::Usage(format!("{key} is not set (config or flag)")))?;
    if !p.exists() {
        return Err(Error::io(p, io::Error::new(io::ErrorKind::NotFound, "no such file")));
    }
    Ok(p)
}

fn output<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Usage(format!("{key} is not set (config or flag)")))
}

fn cmd_preprocess(c: &RunConfig) -> Result<()> {
    let essays_path = input(&c.paths.essays_csv, "paths.essays_csv")?;
    let out = output(&c.paths.chunks_jsonl, "paths.chunks_jsonl")?;
    let corpus = load_essays(essays_path)?;
    let (chunks, summary) = preprocess(&corpus.essays, c.chunking.plan())?;
    for id in &summary.dropped {
        eprintln!("warning: essay {id} is empty after cleaning; no chunks written");
    }
    let stored: Vec<StoredChunk> = chunks.iter().map(StoredChunk::from).collect();
    save_chunks(out, &stored)?;
    print!("{summary}");
    println!("wrote {}", out.display());
    Ok(())
}

fn embeddings_key(source: EmbeddingSource) -> &'static str {
    match source {
        EmbeddingSource::Contextual => "paths.embeddings_ceb",
        EmbeddingSource::Static => "paths.static_ceb",
    }
}

fn embeddings_path(c: &RunConfig, source: EmbeddingSource) -> &Option<PathBuf> {
    match source {
        EmbeddingSource::Contextual => &c.paths.embeddings_ceb,
        EmbeddingSource::Static => &c.paths.static_ceb,
    }
}

fn load_corpus(c: &RunConfig, with_psycho: bool, lenient: bool) -> Result<Corpus> {
    let essays = input(&c.paths.essays_csv, "paths.essays_csv")?;
    let psycho = if with_psycho { Some(input(&c.paths.psycho_csv, "paths.psycho_csv")?) } else { None };
    let corpus = load_essays(essays)?;
    match psycho {
        Some(p) => load_psycho_features(p, corpus, lenient),
        None => Ok(corpus),
    }
}

fn selected(traits: &[PersonalityTrait]) -> Vec<PersonalityTrait> {
    if traits.is_empty() {
        PersonalityTrait::ALL.to_vec()
    } else {
        let mut t = traits.to_vec();
        t.sort();
        t.dedup();
        t
    }
}

fn cmd_train(c: &RunConfig, traits: &[PersonalityTrait], lenient: bool) -> Result<()> {
    let source = c.pipeline.embeddings;
    let emb_path = input(embeddings_path(c, source), embeddings_key(source))?;
    let chunks_path = input(&c.paths.chunks_jsonl, "paths.chunks_jsonl")?;
    let model_dir = output(&c.paths.model_dir, "paths.model_dir")?;
    let corpus = load_corpus(c, c.pipeline.psycho, lenient)?;
    let chunks = load_chunks(chunks_path)?;
    let store = read_embeddings(emb_path)?;
    check_coverage(&store, &chunks, false)?;
    let dataset = assemble(&corpus, &chunks, &store, &c.pipeline)?;
    drop(store);
    let all: Vec<usize> = (0..dataset.essays.len()).collect();
    let svm = c.svm_config();
    let spec = c.bagging.spec();
    for t in selected(traits) {
        let start = Instant::now();
        let (x, y) = dataset.stack(&all, t)?;
        let (model, reports) = train_trait(&x, &y, t, &spec, &svm)?;
        let fallback = majority_label(dataset.labels(t));
        let stored = StoredTraitModel { model, pipeline: c.pipeline, chunking: c.chunking, fallback };
        let dir = trait_dir(model_dir, t);
        save_bagged(&dir, &stored)?;
        let stalled = reports.iter().filter(|r| !r.converged).count();
        if stalled > 0 {
            eprintln!(
                "warning: {} of {} {} members stopped at max_iter before converging",
                stalled,
                reports.len(),
                t.code()
            );
        }
        eprintln!(
            "{}: {} members on {} chunks in {:.1}s -> {}",
            t.code(),
            reports.len(),
            x.rows(),
            start.elapsed().as_secs_f64(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_predict(c: &RunConfig, input_path: &Path, out: Option<&Path>, traits: &[PersonalityTrait]) -> Result<()> {
    let traits = selected(traits);
    let model_dir = output(&c.paths.model_dir, "paths.model_dir")?;
    let mut models = Vec::new();
    for &t in &traits {
        let dir = trait_dir(model_dir, t);
        if !dir.join("spec.json").exists() {
            return Err(Error::Model { path: dir, message: format!("no trained model for trait {}", t.code()) });
        }
        models.push(load_bagged(&dir)?);
    }
    if !input_path.exists() {
        return Err(Error::io(input_path, io::Error::new(io::ErrorKind::NotFound, "no such file")));
    }
    let essays = load_unlabeled_essays(input_path)?;

    let mut predictions = vec![vec![false; traits.len()]; essays.len()];
    if !essays.is_empty() {
        let mut corpus = Corpus::essays_only(essays.clone());
        if models.iter().any(|m| m.pipeline.psycho) {
            corpus = load_psycho_features(input(&c.paths.psycho_csv, "paths.psycho_csv")?, corpus, true)?;
        }
        let ids: std::collections::HashSet<&str> = essays.iter().map(|e| e.author_id.as_str()).collect();
        let mut stores = HashMap::new();
        let mut chunk_sets: HashMap<(usize, crate::config::PackChoice), Vec<StoredChunk>> = HashMap::new();
        for (ti, m) in models.iter().enumerate() {
            let chunks = match &c.paths.chunks_jsonl {
                Some(p) => {
                    let all = load_chunks(input(&Some(p.clone()), "paths.chunks_jsonl")?)?;
                    all.into_iter().filter(|ch| ids.contains(ch.author_id.as_str())).collect()
                }
                None => {
                    let key = (m.chunking.max_chunk_tokens, m.chunking.pack);
                    if let Entry::Vacant(slot) = chunk_sets.entry(key) {
                        let chunker = Chunker::new(m.chunking.plan())?;
                        let mut out = Vec::new();
                        for e in &essays {
                            match chunker.chunk(&e.author_id, &e.text) {
                                Ok(cs) => out.extend(cs.iter().map(StoredChunk::from)),
                                Err(persona_core::Error::EmptyEssay { .. }) => {}
                                Err(e) => return Err(e.into()),
                            }
                        }
                        slot.insert(out);
                    }
                    chunk_sets[&key].clone()
                }
            };
            let source = m.pipeline.embeddings;
            if let Entry::Vacant(slot) = stores.entry(source) {
                let p = input(embeddings_path(c, source), embeddings_key(source))?;
                slot.insert(read_embeddings(p)?);
            }
            let store = &stores[&source];
            check_coverage(store, &chunks, true)?;
            let dataset = assemble(&corpus, &chunks, store, &m.pipeline)?;
            check_dim(m, dataset.dim)?;
            for (ei, e) in dataset.essays.iter().enumerate() {
                predictions[ei][ti] = predict_essay(&m.model, &e.chunks, m.fallback)?.is_positive();
            }
        }
    }

    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    };
    let out_name = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = csv::Writer::from_writer(sink);
    let io_err = |e: csv::Error| Error::io(&out_name, e.into());
    let mut header = vec!["author_id".to_string()];
    header.extend(traits.iter().map(|t| t.code().to_string()));
    w.write_record(&header).map_err(io_err)?;
    for (e, p) in essays.iter().zip(&predictions) {
        let mut row = vec![e.author_id.clone()];
        row.extend(p.iter().map(|&v| if v { "y" } else { "n" }.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(&out_name, e))
}

fn check_dim(m: &StoredTraitModel, dim: usize) -> Result<()> {
    if m.model.dim() != dim {
        return Err(Error::Config(format!(
            "{} model expects {} features but the embeddings yield {dim}",
            m.model.personality_trait().code(),
            m.model.dim()
        )));
    }
    Ok(())
}

fn load_inputs(c: &RunConfig, pipelines: &[PipelineSettings], any_features: bool, lenient: bool) -> Result<Inputs> {
    if !any_features {
        return Ok(Inputs { corpus: load_corpus(c, false, lenient)?, ..Inputs::default() });
    }
    let needs = |s: EmbeddingSource| pipelines.iter().any(|p| p.embeddings == s);
    let ctx = if needs(EmbeddingSource::Contextual) {
        Some(input(&c.paths.embeddings_ceb, "paths.embeddings_ceb")?)
    } else {
        None
    };
    let stat =
        if needs(EmbeddingSource::Static) { Some(input(&c.paths.static_ceb, "paths.static_ceb")?) } else { None };
    let chunks_path = input(&c.paths.chunks_jsonl, "paths.chunks_jsonl")?;
    let corpus = load_corpus(c, pipelines.iter().any(|p| p.psycho), lenient)?;
    let inputs = Inputs {
        corpus,
        chunks: load_chunks(chunks_path)?,
        contextual: ctx.map(read_embeddings).transpose()?,
        static_vectors: stat.map(read_embeddings).transpose()?,
    };
    inputs.check_coverage()?;
    Ok(inputs)
}

fn write_outputs(report_path: Option<&Path>, json: &str, table: &str, elapsed: Duration) -> Result<()> {
    print!("{table}");
    eprintln!("runtime: {:.1}s", elapsed.as_secs_f64());
    if let Some(p) = report_path {
        std::fs::write(p, json).map_err(|e| Error::io(p, e))?;
        let txt = p.with_extension("txt");
        std::fs::write(&txt, table).map_err(|e| Error::io(&txt, e))?;
        // Kept out of the report so reports stay byte-identical across runs.
        let timing = p.with_extension("timing.json");
        let body = format!("{{\"runtime_seconds\": {:.3}}}\n", elapsed.as_secs_f64());
        std::fs::write(&timing, body).map_err(|e| Error::io(&timing, e))?;
    }
    Ok(())
}

fn cmd_evaluate(c: &RunConfig, variant: Option<Variant>, lenient: bool) -> Result<()> {
    let resolved = variant.map_or_else(|| c.clone(), |v| v.apply(c));
    let features = variant.is_none_or(Variant::needs_embeddings);
    let inputs = load_inputs(c, &[resolved.pipeline], features, lenient)?;
    let (report, elapsed) = eval::evaluate(&inputs, c, variant)?;
    if report.nonconverged_members > 0 {
        eprintln!("warning: {} ensemble members stopped at max_iter before converging", report.nonconverged_members);
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let table = render_table(&[TableRow { name: report.variant.clone(), report: &report, significant: [false; 6] }]);
    write_outputs(c.paths.report_json.as_deref(), &json, &table, elapsed)
}

fn cmd_ablate(c: &RunConfig, variants: &[Variant], lenient: bool) -> Result<()> {
    let variants: Vec<Variant> = if variants.is_empty() {
        c.ablation.variants.iter().map(|v| v.parse().map_err(Error::Usage)).collect::<Result<_>>()?
    } else {
        variants.to_vec()
    };
    let pipelines: Vec<PipelineSettings> =
        variants.iter().filter(|v| v.needs_embeddings()).map(|v| v.apply(c).pipeline).collect();
    let inputs = load_inputs(c, &pipelines, !pipelines.is_empty(), lenient)?;
    let start = Instant::now();
    let report = eval::ablate(&inputs, c, &variants, |v, g, d| eprintln!("{v} [{g}]: {:.1}s", d.as_secs_f64()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_outputs(c.paths.report_json.as_deref(), &json, &eval::render_ablation(&report), start.elapsed())
}

fn cmd_inspect(file: &Path, verify: bool, chunks: Option<&Path>) -> Result<()> {
    let header = read_embeddings_header(file)?;
    println!("{header}");
    if verify || chunks.is_some() {
        let store = read_embeddings(file)?;
        println!("integrity:     OK, {} records", store.len());
        if let Some(p) = chunks {
            let chunks = load_chunks(p)?;
            check_coverage(&store, &chunks, false)?;
            println!("coverage:      OK, {} chunks", chunks.len());
        }
    }
    Ok(())
}
