//! JSON persistence for single SVMs and per-trait bagged model directories.
//!
//! A bagged model lives in `<model_dir>/<TRAIT>/` as `spec.json` plus
//! `member_00.json`, `member_01.json`, ...

use std::fs;
use std::path::{Path, PathBuf};

use persona_core::ensemble::{BaggedTraitModel, BaggingSpec, Sampling};
use persona_core::features::Scaler;
use persona_core::linalg::Matrix;
use persona_core::svm::{Kernel, Label, SvmModel};
use persona_core::PersonalityTrait;
use serde::{Deserialize, Serialize};

use crate::config::{ChunkingSettings, PipelineSettings};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    kind: String,
    gamma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalerDoc {
    means: Vec<f64>,
    stds: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    version: u32,
    kernel: KernelDoc,
    c: f64,
    scaler: ScalerDoc,
    sv: Vec<Vec<f64>>,
    alpha_y: Vec<f64>,
    bias: f64,
}

pub fn model_to_json(m: &SvmModel) -> String {
    let kernel = match m.kernel() {
        Kernel::Linear => KernelDoc { kind: "linear".into(), gamma: None },
        Kernel::Rbf { gamma } => KernelDoc { kind: "rbf".into(), gamma: Some(gamma) },
    };
    let doc = ModelDoc {
        version: MODEL_VERSION,
        kernel,
        c: m.c(),
        scaler: ScalerDoc { means: m.scaler().means.clone(), stds: m.scaler().stds.clone() },
        sv: m.support_vectors().iter_rows().map(<[f64]>::to_vec).collect(),
        alpha_y: m.alpha_y().to_vec(),
        bias: m.bias(),
    };
    serde_json::to_string(&doc).expect("model serializes")
}

/// Parses and validates a model document. Errors are plain messages; callers
/// attach the file path.
pub fn model_from_json(text: &str) -> std::result::Result<SvmModel, String> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| format!("schema error: {e}"))?;
    if doc.version != MODEL_VERSION {
        return Err(format!("unsupported model version {}", doc.version));
    }
    let kernel = match (doc.kernel.kind.as_str(), doc.kernel.gamma) {
        ("linear", None) => Kernel::Linear,
        ("rbf", Some(gamma)) => Kernel::rbf(gamma).map_err(|e| e.to_string())?,
        (kind, _) => return Err(format!("unsupported kernel {kind:?} or gamma mismatch")),
    };
    let sv = Matrix::from_rows(&doc.sv).map_err(|e| e.to_string())?;
    let scaler = Scaler { means: doc.scaler.means, stds: doc.scaler.stds };
    SvmModel::new(kernel, doc.c, scaler, sv, doc.alpha_y, doc.bias).map_err(|e| e.to_string())
}

fn model_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Model { path: path.to_path_buf(), message: message.into() }
}

pub fn save_model(path: &Path, m: &SvmModel) -> Result<()> {
    fs::write(path, model_to_json(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SvmModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text).map_err(|m| model_error(path, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    version: u32,
    #[serde(rename = "trait")]
    trait_code: String,
    n_estimators: usize,
    master_seed: u64,
    sampling: String,
    sample_fraction: f64,
    dim: usize,
    pipeline: PipelineSettings,
    chunking: ChunkingSettings,
    /// Label for essays that produce no chunks: the training majority class.
    fallback_label: String,
    members: Vec<String>,
}

/// A trained trait ensemble with everything needed to featurize new essays.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTraitModel {
    pub model: BaggedTraitModel,
    pub pipeline: PipelineSettings,
    pub chunking: ChunkingSettings,
    pub fallback: Label,
}

pub fn trait_dir(model_dir: &Path, t: PersonalityTrait) -> PathBuf {
    model_dir.join(t.code())
}

fn member_file(i: usize) -> String {
    format!("member_{i:02}.json")
}

pub fn save_bagged(dir: &Path, stored: &StoredTraitModel) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = stored.model.spec();
    let members: Vec<String> = (0..stored.model.members().len()).map(member_file).collect();
    let doc = SpecDoc {
        version: MODEL_VERSION,
        trait_code: stored.model.personality_trait().code().to_string(),
        n_estimators: spec.n_estimators,
        master_seed: spec.master_seed,
        sampling: match spec.sampling {
            Sampling::Bootstrap => "bootstrap".into(),
            Sampling::Identity => "identity".into(),
        },
        sample_fraction: 1.0,
        dim: stored.model.dim(),
        pipeline: stored.pipeline,
        chunking: stored.chunking,
        fallback_label: if stored.fallback.is_positive() { "y" } else { "n" }.into(),
        members: members.clone(),
    };
    let spec_path = dir.join("spec.json");
    let text = serde_json::to_string_pretty(&doc).expect("spec serializes");
    fs::write(&spec_path, text).map_err(|e| Error::io(&spec_path, e))?;
    for (m, name) in stored.model.members().iter().zip(&members) {
        save_model(&dir.join(name), m)?;
    }
    Ok(())
}

pub fn load_bagged(dir: &Path) -> Result<StoredTraitModel> {
    let spec_path = dir.join("spec.json");
    let text = fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
    let doc: SpecDoc =
        serde_json::from_str(&text).map_err(|e| model_error(&spec_path, format!("schema error: {e}")))?;
    if doc.version != MODEL_VERSION {
        return Err(model_error(&spec_path, format!("unsupported model version {}", doc.version)));
    }
    let trait_: PersonalityTrait =
        doc.trait_code.parse().map_err(|e: persona_core::Error| model_error(&spec_path, e.to_string()))?;
    let sampling = match doc.sampling.as_str() {
        "bootstrap" => Sampling::Bootstrap,
        "identity" => Sampling::Identity,
        other => return Err(model_error(&spec_path, format!("unknown sampling {other:?}"))),
    };
    let fallback = match doc.fallback_label.as_str() {
        "y" => Label::Positive,
        "n" => Label::Negative,
        other => return Err(model_error(&spec_path, format!("fallback label {other:?} is not y or n"))),
    };
    let members = doc.members.iter().map(|name| load_model(&dir.join(name))).collect::<Result<Vec<_>>>()?;
    let spec = BaggingSpec { n_estimators: doc.n_estimators, master_seed: doc.master_seed, sampling };
    let model = BaggedTraitModel::new(trait_, members, spec).map_err(|e| model_error(&spec_path, e.to_string()))?;
    if model.dim() != doc.dim {
        return Err(model_error(
            &spec_path,
            format!("members have {} features, spec declares {}", model.dim(), doc.dim),
        ));
    }
    Ok(StoredTraitModel { model, pipeline: doc.pipeline, chunking: doc.chunking, fallback })
}
