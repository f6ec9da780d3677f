//! Bagged SVM ensembles over the chunk stack, with two-level majority voting:
//! members vote on each chunk, then chunks vote on the document.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::svm::{train_smo, Label, SvmConfig, SvmModel, SvmProblem, TrainReport, Trained};
use crate::{Error, PersonalityTrait, Result};

/// Resamples tried after the first when a bootstrap draw is single-class.
pub const MAX_BOOTSTRAP_RETRIES: usize = 10;

/// How each member's training sample is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// `n` draws with replacement from the `n` training chunks.
    #[default]
    Bootstrap,
    /// The training stack itself, unchanged. With one estimator this is a plain SVM.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaggingSpec {
    pub n_estimators: usize,
    pub master_seed: u64,
    pub sampling: Sampling,
}

impl Default for BaggingSpec {
    fn default() -> Self {
        BaggingSpec { n_estimators: 10, master_seed: 0, sampling: Sampling::Bootstrap }
    }
}

impl BaggingSpec {
    /// A single SVM trained on the whole stack.
    pub fn single(master_seed: u64) -> Self {
        BaggingSpec { n_estimators: 1, master_seed, sampling: Sampling::Identity }
    }
}

// ChaCha keyed by the master seed; the stream id separates bags and retries so
// every (bag, retry) pair reads an independent counter-based sequence.
fn draw(n: usize, bag_id: usize, retry: usize, master_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((retry as u64) << 32) | bag_id as u64);
    (0..n).map(|_| rng.random_range(0..n as u64) as usize).collect()
}

/// `n` indices drawn uniformly with replacement from `0..n`, determined by
/// `(master_seed, bag_id)`.
pub fn bootstrap_indices(n: usize, bag_id: usize, master_seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyBootstrap);
    }
    Ok(draw(n, bag_id, 0, master_seed))
}

/// SMO tie-breaking seed for a member.
pub fn member_seed(master_seed: u64, bag_id: usize) -> u64 {
    let mut z = master_seed ^ (bag_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn has_both_classes(y: &[Label], indices: &[usize]) -> bool {
    let first = y[indices[0]];
    indices.iter().any(|&i| y[i] != first)
}

/// Training indices for member `bag_id`; single-class bootstrap draws are
/// redrawn with the next retry stream.
pub fn member_sample(y: &[Label], bag_id: usize, spec: &BaggingSpec) -> Result<Vec<usize>> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyBootstrap);
    }
    match spec.sampling {
        Sampling::Identity => Ok((0..n).collect()),
        Sampling::Bootstrap => (0..=MAX_BOOTSTRAP_RETRIES)
            .map(|retry| draw(n, bag_id, retry, spec.master_seed))
            .find(|idx| has_both_classes(y, idx))
            .ok_or(Error::BootstrapExhausted { bag_id, retries: MAX_BOOTSTRAP_RETRIES }),
    }
}

fn check_stack(x: &Matrix, y: &[Label], spec: &BaggingSpec) -> Result<()> {
    if spec.n_estimators == 0 {
        return Err(Error::NoEstimators);
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    if y.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if !has_both_classes(y, &(0..y.len()).collect::<Vec<_>>()) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Trains ensemble member `bag_id` on its sample of the chunk stack. The
/// member's scaler is fitted on that sample only.
pub fn train_member(x: &Matrix, y: &[Label], bag_id: usize, spec: &BaggingSpec, config: &SvmConfig) -> Result<Trained> {
    check_stack(x, y, spec)?;
    let idx = member_sample(y, bag_id, spec)?;
    let xs = x.select_rows(&idx);
    let ys: Vec<Label> = idx.iter().map(|&i| y[i]).collect();
    train_smo(&SvmProblem { x: &xs, y: &ys }, config, member_seed(spec.master_seed, bag_id))
}

/// The ensemble for one trait.
#[derive(Debug, Clone, PartialEq)]
pub struct BaggedTraitModel {
    trait_: PersonalityTrait,
    members: Vec<SvmModel>,
    spec: BaggingSpec,
}

impl BaggedTraitModel {
    pub fn new(trait_: PersonalityTrait, members: Vec<SvmModel>, spec: BaggingSpec) -> Result<Self> {
        if members.is_empty() || spec.n_estimators == 0 {
            return Err(Error::NoEstimators);
        }
        if members.len() != spec.n_estimators {
            return Err(Error::LengthMismatch { left: members.len(), right: spec.n_estimators });
        }
        let dim = members[0].dim();
        if let Some(m) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: m.dim() });
        }
        Ok(BaggedTraitModel { trait_, members, spec })
    }

    pub fn personality_trait(&self) -> PersonalityTrait {
        self.trait_
    }

    pub fn members(&self) -> &[SvmModel] {
        &self.members
    }

    pub fn spec(&self) -> &BaggingSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }
}

#[derive(Debug, Clone)]
pub struct BaggedTraining {
    pub model: BaggedTraitModel,
    pub reports: Vec<TrainReport>,
}

/// Trains all members sequentially.
pub fn train_bagged(
    x: &Matrix,
    y: &[Label],
    trait_: PersonalityTrait,
    spec: &BaggingSpec,
    config: &SvmConfig,
) -> Result<BaggedTraining> {
    check_stack(x, y, spec)?;
    let mut members = Vec::with_capacity(spec.n_estimators);
    let mut reports = Vec::with_capacity(spec.n_estimators);
    for bag_id in 0..spec.n_estimators {
        let t = train_member(x, y, bag_id, spec, config)?;
        members.push(t.model);
        reports.push(t.report);
    }
    Ok(BaggedTraining { model: BaggedTraitModel::new(trait_, members, *spec)?, reports })
}

/// A majority vote and the mean of the underlying decision values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub label: Label,
    pub margin: f64,
}

/// Majority over labels; ties go to the sign of the mean margin.
pub fn majority<I>(votes: I) -> Result<Vote>
where
    I: IntoIterator<Item = Vote>,
{
    let mut margins = Vec::new();
    let mut balance = 0i64;
    for v in votes {
        balance += if v.label.is_positive() { 1 } else { -1 };
        margins.push(v.margin);
    }
    if margins.is_empty() {
        return Err(Error::NoChunks);
    }
    // Sum in sorted order so the mean does not depend on input order.
    margins.sort_by(f64::total_cmp);
    let margin = margins.iter().sum::<f64>() / margins.len() as f64;
    let label = match balance {
        b if b > 0 => Label::Positive,
        b if b < 0 => Label::Negative,
        _ => Label::from_decision(margin),
    };
    Ok(Vote { label, margin })
}

/// Bag-level vote on one chunk vector.
pub fn vote_chunk(model: &BaggedTraitModel, x: &[f64]) -> Result<Vote> {
    let mut votes = Vec::with_capacity(model.members.len());
    for m in &model.members {
        let f = m.decision_function(x)?;
        votes.push(Vote { label: Label::from_decision(f), margin: f });
    }
    majority(votes)
}

/// Document-level vote over the bag-level votes of an essay's chunks.
pub fn vote_document<V: AsRef<[f64]>>(model: &BaggedTraitModel, chunks: &[V]) -> Result<Vote> {
    if chunks.is_empty() {
        return Err(Error::NoChunks);
    }
    let votes = chunks.iter().map(|c| vote_chunk(model, c.as_ref())).collect::<Result<Vec<_>>>()?;
    majority(votes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Scaler;
    use crate::svm::Kernel;

    fn vote(label: Label, margin: f64) -> Vote {
        Vote { label, margin }
    }

    #[test]
    fn bootstrap_contract() {
        let idx = bootstrap_indices(5, 0, 42).unwrap();
        assert_eq!(idx.len(), 5);
        assert!(idx.iter().all(|&i| i < 5));
        assert_eq!(idx, bootstrap_indices(5, 0, 42).unwrap());
        assert_eq!(bootstrap_indices(0, 0, 42), Err(Error::EmptyBootstrap));
        assert_ne!(bootstrap_indices(1000, 0, 7).unwrap(), bootstrap_indices(1000, 1, 7).unwrap());
    }

    #[test]
    fn member_sample_retries_single_class_draws() {
        // With one positive among 40 the first draw often misses it; every
        // accepted sample must still contain both classes.
        let mut y = vec![Label::Negative; 40];
        y[17] = Label::Positive;
        let spec = BaggingSpec { master_seed: 3, ..BaggingSpec::default() };
        for bag in 0..20 {
            if let Ok(idx) = member_sample(&y, bag, &spec) {
                assert!(idx.contains(&17));
            }
        }
        let y = vec![Label::Negative, Label::Positive];
        let tiny = BaggingSpec { master_seed: 0, ..BaggingSpec::default() };
        assert!(member_sample(&y, 0, &tiny).is_ok());
    }

    #[test]
    fn majority_examples() {
        let mut votes = vec![vote(Label::Positive, 1.0); 3];
        votes.extend(vec![vote(Label::Negative, -0.1); 7]);
        assert_eq!(majority(votes).unwrap().label, Label::Negative);

        let mut tie = vec![vote(Label::Positive, 1.0); 5];
        tie.extend(vec![vote(Label::Negative, -0.6); 5]);
        let v = majority(tie).unwrap();
        assert!((v.margin - 0.2).abs() < 1e-12);
        assert_eq!(v.label, Label::Positive);

        let doc = [vote(Label::Positive, 0.1), vote(Label::Negative, -0.5)];
        assert_eq!(majority(doc).unwrap().label, Label::Negative);

        let three = [vote(Label::Positive, 0.1), vote(Label::Negative, -5.0), vote(Label::Positive, 0.2)];
        assert_eq!(majority(three).unwrap().label, Label::Positive);

        assert_eq!(majority([vote(Label::Negative, -3.0)]).unwrap().label, Label::Negative);
        assert_eq!(majority(Vec::new()), Err(Error::NoChunks));
    }

    fn stub(bias: f64) -> SvmModel {
        let sv = Matrix::from_rows(&[[1.0]]).unwrap();
        SvmModel::new(Kernel::Linear, 1.0, Scaler::identity(1), sv, vec![1.0], bias).unwrap()
    }

    #[test]
    fn unanimous_members_win_regardless_of_margin() {
        let members = vec![stub(0.0), stub(5.0), stub(0.01)];
        let spec = BaggingSpec { n_estimators: 3, ..BaggingSpec::default() };
        let model = BaggedTraitModel::new(PersonalityTrait::Openness, members, spec).unwrap();
        assert_eq!(vote_chunk(&model, &[1.0]).unwrap().label, Label::Positive);
        assert!(vote_chunk(&model, &[1.0, 2.0]).is_err());
        assert_eq!(vote_document::<[f64; 1]>(&model, &[]).unwrap_err(), Error::NoChunks);
    }

    #[test]
    fn member_count_must_match_spec() {
        let spec = BaggingSpec { n_estimators: 2, ..BaggingSpec::default() };
        assert!(BaggedTraitModel::new(PersonalityTrait::Openness, vec![stub(0.0)], spec).is_err());
        assert!(BaggedTraitModel::new(PersonalityTrait::Openness, vec![], BaggingSpec::single(0)).is_err());
    }

    #[test]
    fn single_class_stack_is_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let y = [Label::Positive; 3];
        let err = train_bagged(&x, &y, PersonalityTrait::Extraversion, &BaggingSpec::default(), &SvmConfig::default());
        assert_eq!(err.unwrap_err(), Error::SingleClass);
    }
}
