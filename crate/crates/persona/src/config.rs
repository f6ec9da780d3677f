//! The declarative run configuration and the named evaluation variants.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use persona_core::ensemble::{BaggingSpec, Sampling};
use persona_core::features::{LayerSelector, Pooling};
use persona_core::svm::{Gamma, KernelSpec, SvmConfig};
use persona_core::textprep::{ChunkPlan, PackMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub essays_csv: Option<PathBuf>,
    pub psycho_csv: Option<PathBuf>,
    pub chunks_jsonl: Option<PathBuf>,
    /// Contextual (multi-layer) embeddings.
    pub embeddings_ceb: Option<PathBuf>,
    /// Static word-vector embeddings, one layer.
    pub static_ceb: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerChoice {
    LastFour,
    AllMean,
    Single(usize),
}

impl LayerChoice {
    pub fn selector(self) -> LayerSelector {
        match self {
            LayerChoice::LastFour => LayerSelector::LastFour,
            LayerChoice::AllMean => LayerSelector::AllMean,
            LayerChoice::Single(i) => LayerSelector::Single(i),
        }
    }
}

impl FromStr for LayerChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "last_four" | "last-four" => Ok(LayerChoice::LastFour),
            "all_mean" | "all-mean" => Ok(LayerChoice::AllMean),
            _ => s
                .parse()
                .map(LayerChoice::Single)
                .map_err(|_| format!("expected last_four, all_mean or a layer index, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PoolingChoice {
    TokenMean,
    SentenceMean,
}

impl PoolingChoice {
    pub fn pooling(self) -> Pooling {
        match self {
            PoolingChoice::TokenMean => Pooling::TokenMean,
            PoolingChoice::SentenceMean => Pooling::SentenceMean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Contextual,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PackChoice {
    Sentence,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Linear,
    Rbf,
}

/// RBF width: `"auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum GammaChoice {
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<GammaRepr> for GammaChoice {
    type Error = String;

    fn try_from(r: GammaRepr) -> std::result::Result<Self, String> {
        match r {
            GammaRepr::Name(s) => s.parse(),
            GammaRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(GammaChoice::Value(v)),
            GammaRepr::Value(v) => Err(format!("gamma must be positive, got {v}")),
        }
    }
}

impl From<GammaChoice> for GammaRepr {
    fn from(g: GammaChoice) -> Self {
        match g {
            GammaChoice::Auto => GammaRepr::Name("auto".into()),
            GammaChoice::Value(v) => GammaRepr::Value(v),
        }
    }
}

impl FromStr for GammaChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(GammaChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(GammaChoice::Value(v)),
            _ => Err(format!("gamma must be \"auto\" or a positive number, got {s:?}")),
        }
    }
}

impl fmt::Display for GammaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaChoice::Auto => f.write_str("auto"),
            GammaChoice::Value(v) => write!(f, "{v}"),
        }
    }
}

/// How chunk vectors are built. Stored with every trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    pub layers: LayerChoice,
    pub pooling: PoolingChoice,
    pub psycho: bool,
    pub scaling: bool,
    pub embeddings: EmbeddingSource,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            layers: LayerChoice::LastFour,
            pooling: PoolingChoice::TokenMean,
            psycho: true,
            scaling: true,
            embeddings: EmbeddingSource::Contextual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingSettings {
    pub max_chunk_tokens: usize,
    pub pack: PackChoice,
}

impl Default for ChunkingSettings {
    fn default() -> Self {
        ChunkingSettings { max_chunk_tokens: 200, pack: PackChoice::Sentence }
    }
}

impl ChunkingSettings {
    pub fn plan(&self) -> ChunkPlan {
        let mut plan = if self.max_chunk_tokens == ChunkPlan::default().max_pre_expansion_tokens {
            ChunkPlan::default()
        } else {
            ChunkPlan::with_max_tokens(self.max_chunk_tokens)
        };
        plan.pack = match self.pack {
            PackChoice::Sentence => PackMode::Sentence,
            PackChoice::Window => PackMode::Window,
        };
        plan
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmSettings {
    pub kernel: KernelChoice,
    pub c: f64,
    pub gamma: GammaChoice,
    pub tol: f64,
    pub max_iter: u64,
    pub cache_mb: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        SvmSettings {
            kernel: KernelChoice::Rbf,
            c: 1.0,
            gamma: GammaChoice::Auto,
            tol: 1e-3,
            max_iter: 10_000_000,
            cache_mb: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaggingSettings {
    pub n_estimators: usize,
    pub master_seed: u64,
    /// Bootstrap resampling; off trains every member on the full stack.
    pub bootstrap: bool,
}

impl Default for BaggingSettings {
    fn default() -> Self {
        BaggingSettings { n_estimators: 10, master_seed: 0, bootstrap: true }
    }
}

impl BaggingSettings {
    pub fn spec(&self) -> BaggingSpec {
        BaggingSpec {
            n_estimators: self.n_estimators,
            master_seed: self.master_seed,
            sampling: if self.bootstrap { Sampling::Bootstrap } else { Sampling::Identity },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub k: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { k: 10, seed: 0 }
    }
}

/// One point of the SVM hyperparameter grid swept by `ablate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub kernel: KernelChoice,
    pub c: f64,
    #[serde(default = "auto_gamma")]
    pub gamma: GammaChoice,
    #[serde(default = "yes")]
    pub scaling: bool,
}

fn auto_gamma() -> GammaChoice {
    GammaChoice::Auto
}

fn yes() -> bool {
    true
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kernel = match self.kernel {
            KernelChoice::Linear => "linear".to_string(),
            KernelChoice::Rbf => format!("rbf gamma={}", self.gamma),
        };
        write!(f, "{kernel} C={}{}", self.c, if self.scaling { "" } else { " unscaled" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSettings {
    pub variants: Vec<String>,
    /// Empty means the `svm` section alone.
    pub grid: Vec<GridPoint>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            variants: ["majority-baseline", "bb-svm", "m3", "m8", "m9", "m13", "m14"]
                .iter()
                .map(ToString::to_string)
                .chain((0..13).map(|i| format!("layer-{i}")))
                .collect(),
            grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub paths: Paths,
    pub pipeline: PipelineSettings,
    pub chunking: ChunkingSettings,
    pub svm: SvmSettings,
    pub bagging: BaggingSettings,
    pub eval: EvalSettings,
    pub ablation: AblationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            paths: Paths::default(),
            pipeline: PipelineSettings::default(),
            chunking: ChunkingSettings::default(),
            svm: SvmSettings::default(),
            bagging: BaggingSettings::default(),
            eval: EvalSettings::default(),
            ablation: AblationSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported config version {}, expected {CONFIG_VERSION}",
                path.display(),
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.svm.c > 0.0 && self.svm.c.is_finite()) {
            return bad("svm.c must be positive");
        }
        if !(self.svm.tol > 0.0 && self.svm.tol.is_finite()) {
            return bad("svm.tol must be positive");
        }
        if self.svm.max_iter == 0 {
            return bad("svm.max_iter must be positive");
        }
        if self.bagging.n_estimators == 0 {
            return bad("bagging.n_estimators must be at least 1");
        }
        if self.eval.k < 2 {
            return bad("eval.k must be at least 2");
        }
        if self.chunking.max_chunk_tokens == 0 {
            return bad("chunking.max_chunk_tokens must be positive");
        }
        self.chunking.plan().validate()?;
        for name in &self.ablation.variants {
            name.parse::<Variant>().map_err(Error::Usage)?;
        }
        Ok(())
    }

    pub fn svm_config(&self) -> SvmConfig {
        svm_config(&self.svm, self.pipeline.scaling)
    }

    /// Hex SHA-256 of the resolved settings; paths are excluded so the same
    /// experiment on relocated files keeps its fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn with_grid_point(&self, g: &GridPoint) -> RunConfig {
        let mut c = self.clone();
        c.svm.kernel = g.kernel;
        c.svm.c = g.c;
        c.svm.gamma = g.gamma;
        c.pipeline.scaling = g.scaling;
        c
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        if self.ablation.grid.is_empty() {
            vec![GridPoint {
                kernel: self.svm.kernel,
                c: self.svm.c,
                gamma: self.svm.gamma,
                scaling: self.pipeline.scaling,
            }]
        } else {
            self.ablation.grid.clone()
        }
    }
}

pub fn svm_config(s: &SvmSettings, scale: bool) -> SvmConfig {
    let kernel = match s.kernel {
        KernelChoice::Linear => KernelSpec::Linear,
        KernelChoice::Rbf => KernelSpec::Rbf(match s.gamma {
            GammaChoice::Auto => Gamma::Auto,
            GammaChoice::Value(v) => Gamma::Value(v),
        }),
    };
    SvmConfig {
        kernel,
        c: s.c,
        tol: s.tol,
        max_iter: s.max_iter,
        scale,
        cache_bytes: s.cache_mb << 20,
        record_objective: false,
    }
}

/// Index of the penultimate encoder layer in a 13-row (embedding + 12 encoder)
/// matrix, used by the single-layer variants.
pub const SINGLE_LAYER_INDEX: usize = 11;
pub const LAYER_SWEEP: usize = 13;

/// Named evaluation setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Predicts the training folds' most frequent class; no features.
    MajorityBaseline,
    /// Last four layers, token mean, psycholinguistic fusion, ten bagged SVMs.
    BbSvm,
    /// Single layer, plain SVM.
    M3,
    /// Static word vectors, bagged.
    M8,
    /// Last four layers, sentence-then-chunk mean, bagged.
    M9,
    /// Last four layers, plain SVM.
    M13,
    /// Single layer, bagged.
    M14,
    /// One stored layer, bagged.
    Layer(usize),
}

impl Variant {
    pub fn all() -> Vec<Variant> {
        let mut v = vec![
            Variant::MajorityBaseline,
            Variant::BbSvm,
            Variant::M3,
            Variant::M8,
            Variant::M9,
            Variant::M13,
            Variant::M14,
        ];
        v.extend((0..LAYER_SWEEP).map(Variant::Layer));
        v
    }

    pub fn names() -> String {
        let mut names: Vec<String> = Variant::all()[..7].iter().map(ToString::to_string).collect();
        names.push(format!("layer-0..layer-{}", LAYER_SWEEP - 1));
        names.join(", ")
    }

    pub fn needs_embeddings(self) -> bool {
        self != Variant::MajorityBaseline
    }

    /// The run configuration for this variant; SVM, seed and fold settings
    /// come from `base`.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        let bagged = BaggingSettings { bootstrap: true, ..base.bagging };
        let plain = BaggingSettings { n_estimators: 1, bootstrap: false, ..base.bagging };
        let contextual = |layers, pooling| PipelineSettings {
            layers,
            pooling,
            embeddings: EmbeddingSource::Contextual,
            psycho: true,
            ..base.pipeline
        };
        let (pipeline, bagging) = match self {
            Variant::MajorityBaseline => (base.pipeline, base.bagging),
            Variant::BbSvm => (contextual(LayerChoice::LastFour, PoolingChoice::TokenMean), bagged),
            Variant::M3 => (contextual(LayerChoice::Single(SINGLE_LAYER_INDEX), PoolingChoice::TokenMean), plain),
            Variant::M8 => (
                PipelineSettings {
                    layers: LayerChoice::AllMean,
                    pooling: PoolingChoice::TokenMean,
                    embeddings: EmbeddingSource::Static,
                    psycho: true,
                    ..base.pipeline
                },
                bagged,
            ),
            Variant::M9 => (contextual(LayerChoice::LastFour, PoolingChoice::SentenceMean), bagged),
            Variant::M13 => (contextual(LayerChoice::LastFour, PoolingChoice::TokenMean), plain),
            Variant::M14 => (contextual(LayerChoice::Single(SINGLE_LAYER_INDEX), PoolingChoice::TokenMean), bagged),
            Variant::Layer(i) => (contextual(LayerChoice::Single(i), PoolingChoice::TokenMean), bagged),
        };
        c.pipeline = pipeline;
        c.bagging = bagging;
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::MajorityBaseline => f.write_str("majority-baseline"),
            Variant::BbSvm => f.write_str("bb-svm"),
            Variant::M3 => f.write_str("m3"),
            Variant::M8 => f.write_str("m8"),
            Variant::M9 => f.write_str("m9"),
            Variant::M13 => f.write_str("m13"),
            Variant::M14 => f.write_str("m14"),
            Variant::Layer(i) => write!(f, "layer-{i}"),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        if let Some(v) = Variant::all().into_iter().find(|v| v.to_string() == lower) {
            return Ok(v);
        }
        Err(format!("unknown variant {s:?}; valid variants: {}", Variant::names()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let c = RunConfig::default();
        let json = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert!(json.contains("\"gamma\": \"auto\""));
        assert!(json.contains("\"layers\": \"last_four\""));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"svm": {"C": 2}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"colour": 1}"#).is_err());
        let c: RunConfig =
            serde_json::from_str(r#"{"svm": {"c": 2, "gamma": 0.5}, "pipeline": {"layers": {"single": 3}}}"#).unwrap();
        assert_eq!(c.svm.c, 2.0);
        assert_eq!(c.svm.gamma, GammaChoice::Value(0.5));
        assert_eq!(c.pipeline.layers, LayerChoice::Single(3));
        assert!(serde_json::from_str::<RunConfig>(r#"{"svm": {"gamma": -1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"svm": {"gamma": "big"}}"#).is_err());
    }

    #[test]
    fn fingerprint_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.essays_csv = Some("elsewhere.csv".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.svm.c = 2.0;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::all() {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("BB-SVM".parse::<Variant>().unwrap(), Variant::BbSvm);
        let err = "nonsense".parse::<Variant>().unwrap_err();
        assert!(err.contains("bb-svm") && err.contains("majority-baseline"), "{err}");
        assert!("layer-13".parse::<Variant>().is_err());
    }

    #[test]
    fn variants_set_pipeline_and_bagging() {
        let base = RunConfig::default();
        let m13 = Variant::M13.apply(&base);
        assert_eq!(m13.bagging.spec(), BaggingSpec::single(0));
        assert_eq!(m13.pipeline.layers, LayerChoice::LastFour);
        let m8 = Variant::M8.apply(&base);
        assert_eq!(m8.pipeline.embeddings, EmbeddingSource::Static);
        let m9 = Variant::M9.apply(&base);
        assert_eq!(m9.pipeline.pooling, PoolingChoice::SentenceMean);
        assert_eq!(m9.bagging.n_estimators, 10);
        assert_eq!(Variant::M14.apply(&base).pipeline.layers, LayerChoice::Single(11));
    }

    #[test]
    fn custom_chunk_limit_scales_post_cap() {
        let c = ChunkingSettings { max_chunk_tokens: 50, pack: PackChoice::Sentence };
        assert_eq!(c.plan().max_pre_expansion_tokens, 50);
        assert_eq!(c.plan().max_post_expansion_tokens, 62);
        assert_eq!(ChunkingSettings::default().plan(), ChunkPlan::default());
    }
}
