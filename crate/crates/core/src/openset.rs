//! The three open-set identification systems.
//!
//! Each system scores an utterance in two steps. The closed-set step picks
//! the best enrolled speaker `k*`; the verification step compares that
//! speaker's score with a speaker-independent threshold `theta`.
//!
//! | system     | closed-set score per speaker          | verification score          |
//! |------------|---------------------------------------|-----------------------------|
//! | GMM        | mean log-likelihood under `omega_k`    | `L_k* - L_UBM` (log domain) |
//! | subNN      | mean log-posterior of network `k`      | `exp` of it (probability)   |
//! | multiclass | mean log-posterior of output `k`       | `exp` of it (probability)   |
//!
//! Ties in the argmax go to the lowest enrolled index. Thresholds are always
//! supplied by the caller; choosing one is the job of [`crate::eval`].

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use crate::features::FeatureSet;
use crate::gmm::{em_fit, DiagGmm, EmConfig};
use crate::mlp::{
    layer_dims, train, MlpNetwork, OptimizerConfig, OptimizerState, TrainConfig, MULTICLASS_HIDDEN,
    SUBNN_HIDDEN,
};
use crate::{Error, Result};

/// Output index of the target speaker in a 2-class network; index 0 is the
/// background class.
pub const TARGET_CLASS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Gmm,
    Subnn,
    Multiclass,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::Gmm,
        Architecture::Subnn,
        Architecture::Multiclass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Gmm => "gmm",
            Architecture::Subnn => "subnn",
            Architecture::Multiclass => "multiclass",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gmm" => Ok(Architecture::Gmm),
            "subnn" => Ok(Architecture::Subnn),
            "multiclass" => Ok(Architecture::Multiclass),
            other => Err(Error::invalid(format!(
                "unknown architecture {other:?} (expected gmm, subnn or multiclass)"
            ))),
        }
    }
}

/// Enrolled speaker models in a fixed order, plus the UBM for GMM banks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerBank<M> {
    speaker_ids: Vec<String>,
    models: Vec<M>,
    ubm: Option<DiagGmm>,
}

pub type GmmBank = SpeakerBank<DiagGmm>;
pub type SubnnBank = SpeakerBank<MlpNetwork>;

impl<M> SpeakerBank<M> {
    pub fn new(speaker_ids: Vec<String>, models: Vec<M>, ubm: Option<DiagGmm>) -> Result<Self> {
        if speaker_ids.is_empty() {
            return Err(Error::invalid("speaker bank is empty"));
        }
        if speaker_ids.len() != models.len() {
            return Err(Error::invalid(format!(
                "{} speaker ids for {} models",
                speaker_ids.len(),
                models.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = speaker_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("speaker {dup} enrolled twice")));
        }
        Ok(SpeakerBank {
            speaker_ids,
            models,
            ubm,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn speaker_ids(&self) -> &[String] {
        &self.speaker_ids
    }

    pub fn models(&self) -> &[M] {
        &self.models
    }

    pub fn ubm(&self) -> Option<&DiagGmm> {
        self.ubm.as_ref()
    }

    /// The bank restricted to its first `count` speakers.
    pub fn prefix(&self, count: usize) -> Result<Self>
    where
        M: Clone,
    {
        if count == 0 || count > self.len() {
            return Err(Error::invalid(format!(
                "cannot take {count} speakers from a bank of {}",
                self.len()
            )));
        }
        Ok(SpeakerBank {
            speaker_ids: self.speaker_ids[..count].to_vec(),
            models: self.models[..count].to_vec(),
            ubm: self.ubm.clone(),
        })
    }
}

/// Closed-set result with its verification score, before thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTrial {
    pub best_index: usize,
    pub score: f64,
    /// Number of speaker / background models evaluated on the utterance.
    pub models_evaluated: usize,
}

impl ScoredTrial {
    pub fn decide(self, threshold: f64) -> OpenSetDecision {
        OpenSetDecision {
            best_index: self.best_index,
            score: self.score,
            accepted: self.score >= threshold,
            threshold,
            models_evaluated: self.models_evaluated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenSetDecision {
    pub best_index: usize,
    pub score: f64,
    pub accepted: bool,
    pub threshold: f64,
    pub models_evaluated: usize,
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Output of [`gmm_closed_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedSetResult {
    pub best_index: usize,
    /// Mean log-likelihood of the utterance under the best model.
    pub log_likelihood: f64,
    pub models_evaluated: usize,
}

/// Maximum-likelihood speaker over the bank.
pub fn gmm_closed_set(bank: &GmmBank, features: &FeatureSet) -> Result<ClosedSetResult> {
    let scores = bank
        .models
        .iter()
        .map(|m| m.mean_log_likelihood(features.vectors()))
        .collect::<Result<Vec<_>>>()?;
    let best = argmax(&scores);
    Ok(ClosedSetResult {
        best_index: best,
        log_likelihood: scores[best],
        models_evaluated: scores.len(),
    })
}

/// UBM-normalized verification of the closed-set winner:
/// `delta = L_best - L_ubm`, accepted when `delta >= threshold`.
pub fn gmm_verify(
    bank: &GmmBank,
    features: &FeatureSet,
    best_index: usize,
    best_log_likelihood: f64,
    threshold: f64,
) -> Result<OpenSetDecision> {
    let ubm = bank
        .ubm
        .as_ref()
        .ok_or_else(|| Error::Configuration("GMM bank has no UBM".into()))?;
    if best_index >= bank.len() {
        return Err(Error::invalid(format!(
            "speaker index {best_index} outside the bank"
        )));
    }
    let background = ubm.mean_log_likelihood(features.vectors())?;
    Ok(ScoredTrial {
        best_index,
        score: best_log_likelihood - background,
        models_evaluated: 1,
    }
    .decide(threshold))
}

/// Both GMM steps without a threshold: `K` speaker models plus the UBM.
pub fn gmm_score(bank: &GmmBank, features: &FeatureSet) -> Result<ScoredTrial> {
    let closed = gmm_closed_set(bank, features)?;
    let verified = gmm_verify(
        bank,
        features,
        closed.best_index,
        closed.log_likelihood,
        f64::NEG_INFINITY,
    )?;
    Ok(ScoredTrial {
        best_index: closed.best_index,
        score: verified.score,
        models_evaluated: closed.models_evaluated + verified.models_evaluated,
    })
}

pub fn gmm_open_set(
    bank: &GmmBank,
    features: &FeatureSet,
    threshold: f64,
) -> Result<OpenSetDecision> {
    Ok(gmm_score(bank, features)?.decide(threshold))
}

/// Fits one GMM per enrolled speaker. Speaker `k` uses seed `seed + k`.
pub fn train_gmm_bank(
    enrolled: &[(String, FeatureSet)],
    ubm: DiagGmm,
    components: usize,
    em: &EmConfig,
    seed: u64,
) -> Result<GmmBank> {
    let models = enrolled
        .par_iter()
        .enumerate()
        .map(|(k, (id, fs))| {
            let cfg = EmConfig {
                seed: seed.wrapping_add(k as u64),
                ..em.clone()
            };
            em_fit(fs.vectors(), components, &cfg).map_err(|e| Error::Enrollment {
                speaker: id.clone(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpeakerBank::new(
        enrolled.iter().map(|(id, _)| id.clone()).collect(),
        models,
        Some(ubm),
    )
}

/// Settings for one-against-all speaker networks.
#[derive(Debug, Clone, PartialEq)]
pub struct SubnnConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub optimizer: OptimizerConfig,
    /// UBM-sampled negative frames per positive frame.
    pub neg_ratio: f64,
}

impl Default for SubnnConfig {
    fn default() -> Self {
        SubnnConfig {
            hidden: SUBNN_HIDDEN.to_vec(),
            train: TrainConfig::subnn(),
            optimizer: OptimizerConfig::default(),
            neg_ratio: 1.0,
        }
    }
}

fn mix_seed(seed: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains one 2-class network per enrolled speaker.
///
/// Positives are the speaker's frames (label [`TARGET_CLASS`]); negatives
/// are drawn once from the UBM, `neg_ratio` per positive (label 0). Speaker
/// `k` derives all of its randomness from `seed + k`, so banks are
/// reproducible regardless of thread count.
pub fn train_subnn_bank(
    enrolled: &[(String, FeatureSet)],
    ubm: &DiagGmm,
    cfg: &SubnnConfig,
    seed: u64,
) -> Result<SubnnBank> {
    if !(cfg.neg_ratio > 0.0) {
        return Err(Error::invalid("neg_ratio must be positive"));
    }
    let models = enrolled
        .par_iter()
        .enumerate()
        .map(|(k, (id, fs))| {
            train_one_subnn(fs, ubm, cfg, seed.wrapping_add(k as u64)).map_err(|e| {
                Error::Enrollment {
                    speaker: id.clone(),
                    reason: e.to_string(),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpeakerBank::new(
        enrolled.iter().map(|(id, _)| id.clone()).collect(),
        models,
        None,
    )
}

fn train_one_subnn(
    positives: &FeatureSet,
    ubm: &DiagGmm,
    cfg: &SubnnConfig,
    seed: u64,
) -> Result<MlpNetwork> {
    if positives.is_empty() {
        return Err(Error::invalid("no training frames"));
    }
    if ubm.dim() != positives.dim() {
        return Err(Error::invalid(format!(
            "UBM dimension {} differs from feature dimension {}",
            ubm.dim(),
            positives.dim()
        )));
    }
    let n_neg = ((positives.len() as f64 * cfg.neg_ratio).round() as usize).max(1);
    let negatives = ubm.sample(n_neg, mix_seed(seed));
    let inputs =
        concatenate(Axis(0), &[positives.vectors(), negatives.view()]).expect("dimensions checked");
    let labels: Vec<usize> = std::iter::repeat_n(TARGET_CLASS, positives.len())
        .chain(std::iter::repeat_n(1 - TARGET_CLASS, n_neg))
        .collect();
    let mut net = MlpNetwork::new(&layer_dims(positives.dim(), &cfg.hidden, 2), seed)?;
    let mut opt = OptimizerState::new(&net, cfg.optimizer);
    let train_cfg = TrainConfig {
        seed: mix_seed(seed ^ 0x5eed),
        ..cfg.train
    };
    train(&mut net, inputs.view(), &labels, &train_cfg, &mut opt)?;
    Ok(net)
}

/// Average per-frame log-posterior of one output class.
pub fn mean_log_posterior(
    model: &MlpNetwork,
    features: &FeatureSet,
    class_index: usize,
) -> Result<f64> {
    if class_index >= model.output_dim() {
        return Err(Error::invalid(format!(
            "class {class_index} outside {} outputs",
            model.output_dim()
        )));
    }
    let logp = model.log_posteriors(features.vectors())?;
    Ok(logp.column(class_index).sum() / features.len() as f64)
}

/// Scores every speaker network; the verification score is the winner's
/// utterance posterior `exp(mean log-posterior)`.
pub fn subnn_score(bank: &SubnnBank, features: &FeatureSet) -> Result<ScoredTrial> {
    let scores = bank
        .models
        .iter()
        .map(|net| mean_log_posterior(net, features, TARGET_CLASS))
        .collect::<Result<Vec<_>>>()?;
    let best = argmax(&scores);
    Ok(ScoredTrial {
        best_index: best,
        score: scores[best].exp(),
        models_evaluated: scores.len(),
    })
}

pub fn subnn_open_set(
    bank: &SubnnBank,
    features: &FeatureSet,
    threshold: f64,
) -> Result<OpenSetDecision> {
    Ok(subnn_score(bank, features)?.decide(threshold))
}

/// One network with an output per enrolled speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSystem {
    net: MlpNetwork,
    speaker_ids: Vec<String>,
}

impl MulticlassSystem {
    pub fn new(net: MlpNetwork, speaker_ids: Vec<String>) -> Result<Self> {
        if net.output_dim() != speaker_ids.len() {
            return Err(Error::Configuration(format!(
                "network has {} outputs but {} speakers are listed",
                net.output_dim(),
                speaker_ids.len()
            )));
        }
        Ok(MulticlassSystem { net, speaker_ids })
    }

    pub fn net(&self) -> &MlpNetwork {
        &self.net
    }

    pub fn speaker_ids(&self) -> &[String] {
        &self.speaker_ids
    }

    pub fn len(&self) -> usize {
        self.speaker_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speaker_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for MulticlassConfig {
    fn default() -> Self {
        MulticlassConfig {
            hidden: MULTICLASS_HIDDEN.to_vec(),
            train: TrainConfig::multiclass(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Trains the all-together network on every enrolled speaker's frames;
/// output `k` is speaker `k`.
pub fn train_multiclass(
    enrolled: &[(String, FeatureSet)],
    cfg: &MulticlassConfig,
    seed: u64,
) -> Result<MulticlassSystem> {
    if enrolled.len() < 2 {
        return Err(Error::invalid(
            "a multi-class network needs at least two speakers",
        ));
    }
    if let Some((id, _)) = enrolled.iter().find(|(_, fs)| fs.is_empty()) {
        return Err(Error::Enrollment {
            speaker: id.clone(),
            reason: "no training frames".into(),
        });
    }
    let dim = enrolled[0].1.dim();
    if let Some((id, fs)) = enrolled.iter().find(|(_, fs)| fs.dim() != dim) {
        return Err(Error::Enrollment {
            speaker: id.clone(),
            reason: format!("feature dimension {} differs from {dim}", fs.dim()),
        });
    }
    let views: Vec<_> = enrolled.iter().map(|(_, fs)| fs.vectors()).collect();
    let inputs: Array2<f64> = concatenate(Axis(0), &views).expect("dimensions checked");
    let labels: Vec<usize> = enrolled
        .iter()
        .enumerate()
        .flat_map(|(k, (_, fs))| std::iter::repeat_n(k, fs.len()))
        .collect();
    let mut net = MlpNetwork::new(&layer_dims(dim, &cfg.hidden, enrolled.len()), seed)?;
    let mut opt = OptimizerState::new(&net, cfg.optimizer);
    let train_cfg = TrainConfig {
        seed: mix_seed(seed ^ 0x5eed),
        ..cfg.train
    };
    train(&mut net, inputs.view(), &labels, &train_cfg, &mut opt)?;
    MulticlassSystem::new(net, enrolled.iter().map(|(id, _)| id.clone()).collect())
}

/// Per-output utterance posteriors `exp(mean log-posterior)` from a single
/// network evaluation.
pub fn multiclass_utterance_posteriors(
    net: &MlpNetwork,
    features: &FeatureSet,
) -> Result<Vec<f64>> {
    let logp = net.log_posteriors(features.vectors())?;
    let n = features.len() as f64;
    Ok(logp
        .columns()
        .into_iter()
        .map(|c| (c.sum() / n).exp())
        .collect())
}

pub fn multiclass_score(system: &MulticlassSystem, features: &FeatureSet) -> Result<ScoredTrial> {
    let scores = multiclass_utterance_posteriors(&system.net, features)?;
    let best = argmax(&scores);
    Ok(ScoredTrial {
        best_index: best,
        score: scores[best],
        models_evaluated: 1,
    })
}

pub fn multiclass_open_set(
    net: &MlpNetwork,
    speaker_ids: &[String],
    features: &FeatureSet,
    threshold: f64,
) -> Result<OpenSetDecision> {
    if net.output_dim() != speaker_ids.len() {
        return Err(Error::Configuration(format!(
            "network has {} outputs but {} speakers are listed",
            net.output_dim(),
            speaker_ids.len()
        )));
    }
    let scores = multiclass_utterance_posteriors(net, features)?;
    let best = argmax(&scores);
    Ok(ScoredTrial {
        best_index: best,
        score: scores[best],
        models_evaluated: 1,
    }
    .decide(threshold))
}

/// Any trained system, scored through one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Gmm(GmmBank),
    Subnn(SubnnBank),
    Multiclass(MulticlassSystem),
}

impl System {
    pub fn architecture(&self) -> Architecture {
        match self {
            System::Gmm(_) => Architecture::Gmm,
            System::Subnn(_) => Architecture::Subnn,
            System::Multiclass(_) => Architecture::Multiclass,
        }
    }

    pub fn speaker_ids(&self) -> &[String] {
        match self {
            System::Gmm(b) => b.speaker_ids(),
            System::Subnn(b) => b.speaker_ids(),
            System::Multiclass(m) => m.speaker_ids(),
        }
    }

    pub fn score(&self, features: &FeatureSet) -> Result<ScoredTrial> {
        match self {
            System::Gmm(b) => gmm_score(b, features),
            System::Subnn(b) => subnn_score(b, features),
            System::Multiclass(m) => multiclass_score(m, features),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gauss(mean: f64, dim: usize) -> DiagGmm {
        DiagGmm::new(
            array![1.0],
            Array2::from_elem((1, dim), mean),
            Array2::ones((1, dim)),
        )
        .unwrap()
    }

    fn fs(rows: Array2<f64>) -> FeatureSet {
        FeatureSet::from_matrix(rows).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn bank_invariants() {
        assert!(GmmBank::new(vec![], vec![], None).is_err());
        assert!(GmmBank::new(ids(2), vec![gauss(0.0, 2)], None).is_err());
        assert!(GmmBank::new(
            vec!["a".into(), "a".into()],
            vec![gauss(0.0, 2), gauss(1.0, 2)],
            None
        )
        .is_err());
        let b = GmmBank::new(
            ids(3),
            vec![gauss(0.0, 2), gauss(1.0, 2), gauss(2.0, 2)],
            Some(gauss(0.0, 2)),
        )
        .unwrap();
        assert_eq!(b.prefix(2).unwrap().speaker_ids(), &ids(2)[..]);
        assert!(b.prefix(0).is_err() && b.prefix(4).is_err());
    }

    #[test]
    fn single_speaker_always_wins() {
        let bank = GmmBank::new(ids(1), vec![gauss(3.0, 2)], Some(gauss(0.0, 2))).unwrap();
        let x = fs(array![[-5.0, 9.0], [1.0, 1.0]]);
        assert_eq!(gmm_closed_set(&bank, &x).unwrap().best_index, 0);
    }

    #[test]
    fn identical_speaker_and_ubm_cancel() {
        let g = gauss(0.7, 3);
        let bank = GmmBank::new(ids(1), vec![g.clone()], Some(g)).unwrap();
        let x = fs(array![[0.1, 2.0, -1.0], [3.0, 3.0, 3.0]]);
        let d = gmm_open_set(&bank, &x, 0.0).unwrap();
        assert_eq!(d.score, 0.0);
        assert!(d.accepted);
    }

    #[test]
    fn vacuous_threshold_accepts() {
        let bank = GmmBank::new(
            ids(2),
            vec![gauss(0.0, 2), gauss(5.0, 2)],
            Some(gauss(100.0, 2)),
        )
        .unwrap();
        let x = fs(array![[1000.0, -1000.0]]);
        assert!(gmm_open_set(&bank, &x, f64::NEG_INFINITY).unwrap().accepted);
    }

    #[test]
    fn verify_is_a_difference_of_two_scores() {
        let ubm = gauss(0.0, 2);
        let bank = GmmBank::new(
            ids(2),
            vec![gauss(-1.0, 2), gauss(2.0, 2)],
            Some(ubm.clone()),
        )
        .unwrap();
        let x = fs(array![[1.5, 2.5], [2.2, 1.9], [0.0, 3.0]]);
        let cs = gmm_closed_set(&bank, &x).unwrap();
        assert_eq!(cs.best_index, 1);
        let d = gmm_verify(&bank, &x, cs.best_index, cs.log_likelihood, 0.5).unwrap();
        let oracle = bank.models()[1].mean_log_likelihood(x.vectors()).unwrap()
            - ubm.mean_log_likelihood(x.vectors()).unwrap();
        assert_eq!(d.score, oracle);
        assert_eq!(d.accepted, oracle >= 0.5);
    }

    #[test]
    fn missing_ubm_is_a_configuration_error() {
        let bank = GmmBank::new(ids(1), vec![gauss(0.0, 2)], None).unwrap();
        let x = fs(array![[0.0, 0.0]]);
        assert!(matches!(
            gmm_open_set(&bank, &x, 0.0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        let g = gauss(0.0, 2);
        let bank = GmmBank::new(ids(3), vec![g.clone(), g.clone(), g.clone()], Some(g)).unwrap();
        assert_eq!(
            gmm_closed_set(&bank, &fs(array![[1.0, 1.0]]))
                .unwrap()
                .best_index,
            0
        );
    }

    #[test]
    fn uniform_multiclass_network() {
        let net = MlpNetwork::zeros(&[2, 3, 4]).unwrap();
        let x = fs(array![[1.0, 2.0], [-3.0, 0.5]]);
        let d = multiclass_open_set(&net, &ids(4), &x, 0.25).unwrap();
        assert_eq!(d.best_index, 0);
        assert!((d.score - 0.25).abs() < 1e-15);
        assert!(d.accepted);
        assert!(
            !multiclass_open_set(&net, &ids(4), &x, 0.2500001)
                .unwrap()
                .accepted
        );
        assert!(matches!(
            multiclass_open_set(&net, &ids(3), &x, 0.0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn multiclass_single_frame_is_one_forward_pass() {
        let net = MlpNetwork::new(&[3, 5, 4], 2).unwrap();
        let x = array![[0.3, -1.0, 2.0]];
        let (p, _) = net.forward(x.row(0)).unwrap();
        let d = multiclass_open_set(&net, &ids(4), &fs(x), 0.0).unwrap();
        assert_eq!(d.best_index, argmax(p.as_slice().unwrap()));
        assert!((d.score - p[d.best_index]).abs() < 1e-14);
    }

    #[test]
    fn constant_posterior_network() {
        // Zero weights with biases fixes the posterior regardless of input.
        let mut net = MlpNetwork::zeros(&[2, 2]).unwrap();
        net.layers_mut()[0].bias = array![0.0, (3.0f64).ln()];
        let x = fs(array![[1.0, 2.0], [5.0, 5.0], [-1.0, 0.0]]);
        let v = mean_log_posterior(&net, &x, 1).unwrap();
        assert!((v - 0.75f64.ln()).abs() < 1e-15);
        assert!(mean_log_posterior(&net, &x, 2).is_err());
    }

    #[test]
    fn subnn_single_speaker_zero_threshold() {
        let net = MlpNetwork::new(&[2, 3, 2], 1).unwrap();
        let bank = SubnnBank::new(ids(1), vec![net], None).unwrap();
        let d = subnn_open_set(&bank, &fs(array![[4.0, -2.0]]), 0.0).unwrap();
        assert!(d.accepted && d.best_index == 0);
        assert!((0.0..=1.0).contains(&d.score));
    }

    #[test]
    fn subnn_training_separates_a_far_speaker() {
        let ubm = gauss(0.0, 4);
        let speaker = DiagGmm::new(
            array![1.0],
            Array2::from_elem((1, 4), 3.0),
            Array2::ones((1, 4)),
        )
        .unwrap();
        let train_frames = fs(speaker.sample(600, 1));
        let held_out = fs(speaker.sample(200, 2));
        let background = fs(ubm.sample(200, 3));
        let cfg = SubnnConfig {
            hidden: vec![16, 16],
            train: TrainConfig {
                epochs: 10,
                batch_size: 64,
                seed: 0,
                shuffle: true,
            },
            optimizer: OptimizerConfig {
                eta: 1e-3,
                ..Default::default()
            },
            neg_ratio: 1.0,
        };
        let enrolled = vec![("a".to_string(), train_frames)];
        let bank = train_subnn_bank(&enrolled, &ubm, &cfg, 4).unwrap();
        assert_eq!(bank.len(), 1);
        let own = mean_log_posterior(&bank.models()[0], &held_out, TARGET_CLASS).unwrap();
        let other = mean_log_posterior(&bank.models()[0], &background, TARGET_CLASS).unwrap();
        assert!(own > other, "{own} vs {other}");
        let again = train_subnn_bank(&enrolled, &ubm, &cfg, 4).unwrap();
        assert_eq!(again.models()[0].to_bytes(), bank.models()[0].to_bytes());
    }

    #[test]
    fn subnn_enrollment_errors_name_the_speaker() {
        let ubm = gauss(0.0, 4);
        let enrolled = vec![("bob".to_string(), fs(Array2::zeros((3, 2))))];
        match train_subnn_bank(&enrolled, &ubm, &SubnnConfig::default(), 0) {
            Err(Error::Enrollment { speaker, .. }) => assert_eq!(speaker, "bob"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn complexity_counts() {
        let g = gauss(0.0, 2);
        let k = 5;
        let gmm = GmmBank::new(ids(k), vec![g.clone(); k], Some(g)).unwrap();
        let net = MlpNetwork::new(&[2, 3, 2], 0).unwrap();
        let sub = SubnnBank::new(ids(k), vec![net; k], None).unwrap();
        let multi = MulticlassSystem::new(MlpNetwork::new(&[2, 3, k], 0).unwrap(), ids(k)).unwrap();
        let x = fs(Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64));
        assert_eq!(System::Gmm(gmm).score(&x).unwrap().models_evaluated, k + 1);
        assert_eq!(System::Subnn(sub).score(&x).unwrap().models_evaluated, k);
        assert_eq!(
            System::Multiclass(multi)
                .score(&x)
                .unwrap()
                .models_evaluated,
            1
        );
    }

    #[test]
    fn architecture_names() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert!("svm".parse::<Architecture>().is_err());
    }
}
