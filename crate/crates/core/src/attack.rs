//! Shadow-model membership inference against federated snapshots.
//!
//! The attacker trains a shadow model on half of its own data, computes
//! per-point output statistics of the shadow on its members (label 1) and
//! non-members (label 0), and fits a small classifier on them. The same
//! statistics computed on the target's global snapshots are then scored by
//! that classifier.
//!
//! Feature layout, per used round in ascending round order:
//! `sorted probabilities (K, descending) ∥ loss ∥ correct ∥ grad norm`, where
//! each block is present only if enabled. `correct` uses argmax with ties to
//! the lowest class index, and `grad norm` is the Frobenius norm of the loss
//! gradient with respect to the output layer weights.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::fedavg::{run_rounds, FlConfig, RoundSnapshot};
use crate::model::{
    accuracy, argmax, init_model, last_layer_grad_norm, predict, train, train_from_epoch,
    Architecture, ModelParams, TrainConfig,
};
use crate::rng::{derive_seed, rng_from_seed, tags};
use crate::splitting::{ChallengeSet, PointSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackFeature {
    PredictionVector,
    Loss,
    Correctness,
    LastLayerGradNorm,
}

impl AttackFeature {
    pub const ALL: [AttackFeature; 4] = [
        AttackFeature::PredictionVector,
        AttackFeature::Loss,
        AttackFeature::Correctness,
        AttackFeature::LastLayerGradNorm,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub features: Vec<AttackFeature>,
    /// Snapshot rounds whose features are concatenated; empty means the
    /// final round only.
    pub rounds: Vec<usize>,
    /// Hidden widths of the attack classifier.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Share of the attacker's rows used to train the shadow model.
    pub shadow_member_fraction: f64,
    /// Train the shadow with the target's FedAvg setup instead of centrally.
    pub shadow_federated: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            features: AttackFeature::ALL.to_vec(),
            rounds: Vec::new(),
            hidden: vec![16],
            learning_rate: 0.05,
            epochs: 80,
            batch_size: 16,
            l2: 0.0,
            shadow_member_fraction: 0.5,
            shadow_federated: false,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("attack feature set is empty".into()));
        }
        if !(self.shadow_member_fraction > 0.0 && self.shadow_member_fraction < 1.0) {
            return Err(Error::Config(format!(
                "shadow member fraction {} outside (0, 1)",
                self.shadow_member_fraction
            )));
        }
        self.classifier_train_config().validate()
    }

    fn uses(&self, f: AttackFeature) -> bool {
        self.features.contains(&f)
    }

    /// Width of the feature vector for one round.
    pub fn round_dim(&self, num_classes: usize) -> usize {
        let mut d = 0;
        if self.uses(AttackFeature::PredictionVector) {
            d += num_classes;
        }
        d += [
            AttackFeature::Loss,
            AttackFeature::Correctness,
            AttackFeature::LastLayerGradNorm,
        ]
        .iter()
        .filter(|f| self.uses(**f))
        .count();
        d
    }

    /// Round indices to use given the rounds available (ascending).
    pub fn resolve_rounds(&self, snapshots: &[RoundSnapshot]) -> Result<Vec<usize>> {
        let last = snapshots
            .last()
            .ok_or_else(|| Error::Data("no snapshots available".into()))?
            .round;
        if self.rounds.is_empty() {
            return Ok(vec![last]);
        }
        let mut rounds = self.rounds.clone();
        rounds.sort_unstable();
        rounds.dedup();
        for &r in &rounds {
            if !snapshots.iter().any(|s| s.round == r) {
                return Err(Error::Data(format!(
                    "round {r} not among the snapshots (1..={last})"
                )));
            }
        }
        Ok(rounds)
    }

    fn classifier_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, &[tags::ATTACK_TRAIN]),
            l2: self.l2,
        }
    }
}

fn snapshot(snapshots: &[RoundSnapshot], round: usize) -> Result<&ModelParams> {
    snapshots
        .iter()
        .find(|s| s.round == round)
        .map(|s| &s.params)
        .ok_or_else(|| Error::Data(format!("round {round} not among the snapshots")))
}

/// Feature vector of one labeled point against the selected snapshots.
pub fn extract_features(
    snapshots: &[RoundSnapshot],
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    let rounds = cfg.resolve_rounds(snapshots)?;
    let mut out = Vec::new();
    for r in rounds {
        let params = snapshot(snapshots, r)?;
        let probs = predict(params, x)?;
        if y >= probs.len() {
            return Err(Error::Data(format!(
                "label {y} outside [0, {})",
                probs.len()
            )));
        }
        if cfg.uses(AttackFeature::PredictionVector) {
            let mut sorted = probs.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            out.extend(sorted);
        }
        if cfg.uses(AttackFeature::Loss) {
            out.push(-probs[y].max(f64::MIN_POSITIVE).ln());
        }
        if cfg.uses(AttackFeature::Correctness) {
            out.push(if argmax(&probs) == y { 1.0 } else { 0.0 });
        }
        if cfg.uses(AttackFeature::LastLayerGradNorm) {
            out.push(last_layer_grad_norm(params, x, y)?);
        }
    }
    Ok(out)
}

/// Trained attack classifier with the feature standardization it was fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub params: ModelParams,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Accuracy on its own shadow member / non-member features.
    pub train_accuracy: f64,
    pub shadow_members: Vec<usize>,
    pub shadow_nonmembers: Vec<usize>,
}

impl AttackModel {
    pub fn feature_dim(&self) -> usize {
        self.feature_mean.len()
    }

    /// Membership probability for a raw (unstandardized) feature vector.
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                actual: features.len(),
            });
        }
        let z: Vec<f64> = features
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        Ok(predict(&self.params, &z)?[1])
    }
}

/// Minimum attacker rows: two shadow members and two shadow non-members.
pub const MIN_ATTACKER_ROWS: usize = 4;

/// Shadow snapshots over `members`, shaped like the target's training run.
fn shadow_snapshots(
    ds: &TabularDataset,
    members: &[usize],
    fl: &FlConfig,
    cfg: &AttackConfig,
) -> Result<Vec<RoundSnapshot>> {
    let shadow_fl = FlConfig {
        seed: derive_seed(cfg.seed, &[tags::SHADOW_TRAIN]),
        ..fl.clone()
    };
    let init_seed = derive_seed(cfg.seed, &[tags::SHADOW_INIT]);
    if cfg.shadow_federated {
        return run_rounds(ds, members, &shadow_fl, init_seed);
    }
    // centralized: one snapshot every `local_epochs` epochs
    let arch = shadow_fl.architecture(ds.dim(), ds.num_classes())?;
    let mut params = init_model(&arch, init_seed)?;
    let train_cfg = shadow_fl.client_train_config(0);
    let mut snaps = Vec::with_capacity(fl.rounds);
    for round in 1..=fl.rounds {
        let (next, _) = train_from_epoch(
            params,
            ds,
            members,
            &train_cfg,
            (round - 1) * fl.local_epochs,
        )?;
        params = next;
        snaps.push(RoundSnapshot {
            round,
            params: params.clone(),
            client_sizes: vec![members.len()],
        });
    }
    Ok(snaps)
}

/// Trains the shadow model on part of `attacker_rows` and the attack
/// classifier on the shadow's member / non-member features.
pub fn train_shadow_attack(
    ds: &TabularDataset,
    attacker_rows: &[usize],
    fl: &FlConfig,
    cfg: &AttackConfig,
) -> Result<AttackModel> {
    cfg.validate()?;
    fl.validate()?;
    let n = attacker_rows.len();
    let n_members = (cfg.shadow_member_fraction * n as f64).round() as usize;
    let min_members = if cfg.shadow_federated {
        fl.clients.max(2)
    } else {
        2
    };
    if n < MIN_ATTACKER_ROWS || n_members < min_members || n - n_members < 2 {
        return Err(Error::Split(format!(
            "attacker dataset has {n} rows, too few for a shadow member/non-member split"
        )));
    }

    let mut shuffled = attacker_rows.to_vec();
    shuffled.shuffle(&mut rng_from_seed(derive_seed(
        cfg.seed,
        &[tags::SHADOW_SPLIT],
    )));
    let (members, nonmembers) = shuffled.split_at(n_members);
    let mut members = members.to_vec();
    let mut nonmembers = nonmembers.to_vec();
    members.sort_unstable();
    nonmembers.sort_unstable();

    let shadow = shadow_snapshots(ds, &members, fl, cfg)?;

    let mut feats = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (rows, label) in [(&members, 1usize), (&nonmembers, 0usize)] {
        for &i in rows {
            feats.push(extract_features(&shadow, ds.row(i), ds.label(i), cfg)?);
            labels.push(label);
        }
    }
    let dim = feats[0].len();
    let (mean, scale) = standardization(&feats, dim);
    let flat: Vec<f64> = feats
        .iter()
        .flat_map(|f| {
            f.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
        })
        .collect();
    let train_set = TabularDataset::new(
        flat,
        dim,
        labels,
        None,
        Vec::new(),
        (0..dim).map(|j| format!("f{j}")).collect(),
        vec!["non-member".into(), "member".into()],
    )?;
    let all: Vec<usize> = (0..train_set.len()).collect();

    let arch = Architecture::new(dim, &cfg.hidden, 2)?;
    let init = init_model(&arch, derive_seed(cfg.seed, &[tags::ATTACK_INIT]))?;
    let (params, _) = train(init, &train_set, &all, &cfg.classifier_train_config())?;
    let train_accuracy = accuracy(&params, &train_set, &all)?;

    Ok(AttackModel {
        params,
        feature_mean: mean,
        feature_scale: scale,
        train_accuracy,
        shadow_members: members,
        shadow_nonmembers: nonmembers,
    })
}

fn standardization(rows: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

/// Accuracy and confusion counts on the challenge set. Positive = member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub scores: Vec<f64>,
    pub members: Vec<bool>,
    pub rows: Vec<usize>,
    pub sources: Vec<PointSource>,
    pub rho: f64,
    pub config: AttackConfig,
    pub seed: u64,
}

impl AttackResult {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    /// Per-point audit CSV: row, source, member, score, predicted_member.
    pub fn write_scores_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("row,source,member,score,predicted_member\n");
        for i in 0..self.scores.len() {
            let source = match self.sources[i] {
                PointSource::Member => "member",
                PointSource::SameDistribution => "same_distribution",
                PointSource::ThirdDistribution => "third_distribution",
            };
            out.push_str(&format!(
                "{},{},{},{:?},{}\n",
                self.rows[i],
                source,
                self.members[i] as u8,
                self.scores[i],
                (self.scores[i] >= DECISION_THRESHOLD) as u8
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// A point is predicted member iff its score is at least this value.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Scores every challenge point against the target snapshots.
pub fn run_attack(
    model: &AttackModel,
    snapshots: &[RoundSnapshot],
    challenge: &ChallengeSet,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    if challenge.is_empty() {
        return Err(Error::Data("challenge set is empty".into()));
    }
    if challenge.member_count != challenge.nonmember_count {
        return Err(Error::Data(format!(
            "challenge is unbalanced: {} members vs {} non-members",
            challenge.member_count, challenge.nonmember_count
        )));
    }
    let mut result = AttackResult {
        accuracy: 0.0,
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
        scores: Vec::with_capacity(challenge.len()),
        members: Vec::with_capacity(challenge.len()),
        rows: Vec::with_capacity(challenge.len()),
        sources: Vec::with_capacity(challenge.len()),
        rho: challenge.rho,
        config: cfg.clone(),
        seed: cfg.seed,
    };
    for p in &challenge.points {
        let score = model.score(&extract_features(snapshots, &p.features, p.label, cfg)?)?;
        let predicted = score >= DECISION_THRESHOLD;
        match (predicted, p.member) {
            (true, true) => result.true_positives += 1,
            (true, false) => result.false_positives += 1,
            (false, false) => result.true_negatives += 1,
            (false, true) => result.false_negatives += 1,
        }
        result.scores.push(score);
        result.members.push(p.member);
        result.rows.push(p.row);
        result.sources.push(p.source);
    }
    result.accuracy =
        (result.true_positives + result.true_negatives) as f64 / challenge.len() as f64;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;

    fn fixed_model(p0: f64) -> ModelParams {
        // 1 input, no hidden layer: probabilities come from the biases alone
        let arch = Architecture::new(1, &[], 2).unwrap();
        let mut p = ModelParams::zeros(&arch).unwrap();
        p.layers[0] = Layer {
            weights: vec![vec![0.0], vec![0.0]],
            biases: vec![p0.ln(), (1.0 - p0).ln()],
        };
        p
    }

    fn snaps(p0: f64) -> Vec<RoundSnapshot> {
        vec![RoundSnapshot {
            round: 1,
            params: fixed_model(p0),
            client_sizes: vec![1],
        }]
    }

    fn outputs_only() -> AttackConfig {
        AttackConfig {
            features: vec![
                AttackFeature::PredictionVector,
                AttackFeature::Loss,
                AttackFeature::Correctness,
            ],
            ..AttackConfig::default()
        }
    }

    #[test]
    fn confident_correct_point() {
        let f = extract_features(&snaps(0.9), &[0.0], 0, &outputs_only()).unwrap();
        assert!((f[0] - 0.9).abs() < 1e-12);
        assert!((f[1] - 0.1).abs() < 1e-12);
        assert!((f[2] - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert_eq!(f[3], 1.0);
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let f = extract_features(&snaps(0.5), &[0.0], 1, &outputs_only()).unwrap();
        assert!((f[2] - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(f[3], 0.0);
    }

    #[test]
    fn rounds_concatenate() {
        let mut s = snaps(0.7);
        s.push(RoundSnapshot {
            round: 2,
            params: fixed_model(0.6),
            client_sizes: vec![1],
        });
        let one = extract_features(&s, &[1.0], 0, &AttackConfig::default()).unwrap();
        let cfg = AttackConfig {
            rounds: vec![1, 2],
            ..AttackConfig::default()
        };
        let two = extract_features(&s, &[1.0], 0, &cfg).unwrap();
        assert_eq!(two.len(), 2 * one.len());
        assert_eq!(one.len(), AttackConfig::default().round_dim(2));
        let missing = AttackConfig {
            rounds: vec![3],
            ..AttackConfig::default()
        };
        assert!(extract_features(&s, &[1.0], 0, &missing).is_err());
    }

    #[test]
    fn config_validation() {
        let empty = AttackConfig {
            features: vec![],
            ..AttackConfig::default()
        };
        assert!(empty.validate().is_err());
        let bad_fraction = AttackConfig {
            shadow_member_fraction: 1.0,
            ..AttackConfig::default()
        };
        assert!(bad_fraction.validate().is_err());
    }
}
