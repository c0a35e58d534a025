//! Attacker / target / non-member splits and the balanced challenge set.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, tags, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Natural,
}

/// A pool size given either as a row count or as a fraction of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amount {
    Count(usize),
    Fraction(f64),
}

impl Amount {
    /// Resolves against `n` rows; fractions round down.
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            Amount::Count(c) => Ok(c),
            Amount::Fraction(f) if (0.0..=1.0).contains(&f) => Ok((f * n as f64).floor() as usize),
            Amount::Fraction(f) => Err(Error::Config(format!("fraction {f} outside [0, 1]"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: Strategy,
    /// Uniform strategy pool sizes.
    #[serde(default = "default_attacker")]
    pub attacker: Amount,
    #[serde(default = "default_target")]
    pub target: Amount,
    #[serde(default = "default_nonmember")]
    pub nonmember: Amount,
    /// Natural strategy role assignment, by group name. Several groups in one
    /// role are pooled.
    #[serde(default)]
    pub target_groups: Vec<String>,
    #[serde(default)]
    pub attacker_groups: Vec<String>,
    #[serde(default)]
    pub third_groups: Vec<String>,
    /// Share of target-group rows held out as same-distribution non-members.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_attacker() -> Amount {
    Amount::Fraction(0.4)
}
fn default_target() -> Amount {
    Amount::Fraction(0.4)
}
fn default_nonmember() -> Amount {
    Amount::Fraction(0.2)
}
fn default_holdout() -> f64 {
    0.2
}

impl SplitPlan {
    pub fn uniform(attacker: Amount, target: Amount, nonmember: Amount, seed: u64) -> Self {
        SplitPlan {
            strategy: Strategy::Uniform,
            attacker,
            target,
            nonmember,
            target_groups: Vec::new(),
            attacker_groups: Vec::new(),
            third_groups: Vec::new(),
            holdout_fraction: default_holdout(),
            seed,
        }
    }

    pub fn natural(target: &[&str], attacker: &[&str], third: &[&str], seed: u64) -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        SplitPlan {
            strategy: Strategy::Natural,
            attacker: default_attacker(),
            target: default_target(),
            nonmember: default_nonmember(),
            target_groups: owned(target),
            attacker_groups: owned(attacker),
            third_groups: owned(third),
            holdout_fraction: default_holdout(),
            seed,
        }
    }

    pub fn has_third(&self) -> bool {
        self.strategy == Strategy::Natural && !self.third_groups.is_empty()
    }

    /// Reads a plan from TOML: either a bare plan, or any document with a
    /// `[split]` table (such as an experiment config).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid plan: {e}")))?;
        let table = match doc.get("split") {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => doc,
        };
        table
            .try_into()
            .map_err(|e| Error::Config(format!("invalid plan: {e}")))
    }
}

/// Disjoint index lists into the source dataset, each ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutput {
    pub attacker: Vec<usize>,
    pub target: Vec<usize>,
    pub nonmember_same: Vec<usize>,
    pub nonmember_third: Vec<usize>,
    pub plan: SplitPlan,
}

impl SplitOutput {
    /// Checks that the four pools are pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        let pools = [
            ("attacker", &self.attacker),
            ("target", &self.target),
            ("non-member (same)", &self.nonmember_same),
            ("non-member (third)", &self.nonmember_third),
        ];
        let mut seen: HashSet<usize> = HashSet::new();
        for (name, pool) in pools {
            for &i in pool {
                if !seen.insert(i) {
                    return Err(Error::Split(format!(
                        "row {i} of pool {name} appears twice"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn shuffled(rows: &[usize], rng: &mut Rng) -> Vec<usize> {
    let mut v = rows.to_vec();
    v.shuffle(rng);
    v
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Seeded random partition into attacker / target / same-distribution
/// non-member pools. The third pool is empty.
pub fn uniform_split(ds: &TabularDataset, plan: &SplitPlan) -> Result<SplitOutput> {
    if plan.strategy != Strategy::Uniform {
        return Err(Error::Config(
            "uniform_split needs the uniform strategy".into(),
        ));
    }
    let n = ds.len();
    let sizes = [
        plan.attacker.resolve(n)?,
        plan.target.resolve(n)?,
        plan.nonmember.resolve(n)?,
    ];
    if sizes.contains(&0) {
        return Err(Error::Split(format!(
            "pool sizes {sizes:?} include an empty pool"
        )));
    }
    let total: usize = sizes.iter().sum();
    if total > n {
        return Err(Error::Split(format!(
            "pool sizes {sizes:?} need {total} rows, dataset has {n}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(plan.seed, &[tags::SPLIT]));
    let perm = shuffled(&(0..n).collect::<Vec<_>>(), &mut rng);
    let (a, rest) = perm.split_at(sizes[0]);
    let (t, rest) = rest.split_at(sizes[1]);
    let out = SplitOutput {
        attacker: sorted(a.to_vec()),
        target: sorted(t.to_vec()),
        nonmember_same: sorted(rest[..sizes[2]].to_vec()),
        nonmember_third: Vec::new(),
        plan: plan.clone(),
    };
    out.check_disjoint()?;
    Ok(out)
}

fn resolve_groups(ds: &TabularDataset, names: &[String], role: &str) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            ds.group_index(name).ok_or_else(|| {
                Error::Split(format!(
                    "{role} group '{name}' not found (groups: {})",
                    ds.group_names().join(", ")
                ))
            })
        })
        .collect()
}

/// Role-based split over pre-existing groups.
///
/// Attacker rows are all rows of attacker groups. Target-group rows are
/// shuffled and `round(holdout_fraction · n)` of them become the
/// same-distribution non-member pool, the rest the target training set.
/// Third-group rows form the third-distribution pool.
pub fn natural_split(ds: &TabularDataset, plan: &SplitPlan) -> Result<SplitOutput> {
    if plan.strategy != Strategy::Natural {
        return Err(Error::Config(
            "natural_split needs the natural strategy".into(),
        ));
    }
    if ds.groups().is_none() {
        return Err(Error::Split("dataset has no group column".into()));
    }
    if plan.target_groups.is_empty() || plan.attacker_groups.is_empty() {
        return Err(Error::Split(
            "natural split needs target and attacker groups".into(),
        ));
    }
    if !(0.0..1.0).contains(&plan.holdout_fraction) {
        return Err(Error::Config(format!(
            "holdout fraction {} outside [0, 1)",
            plan.holdout_fraction
        )));
    }
    let target_g = resolve_groups(ds, &plan.target_groups, "target")?;
    let attacker_g = resolve_groups(ds, &plan.attacker_groups, "attacker")?;
    let third_g = resolve_groups(ds, &plan.third_groups, "third")?;
    let mut all: Vec<usize> = target_g
        .iter()
        .chain(&attacker_g)
        .chain(&third_g)
        .copied()
        .collect();
    all.sort_unstable();
    if all.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Split(
            "a group is assigned to more than one role".into(),
        ));
    }

    let target_rows = ds.rows_in_groups(&target_g);
    let holdout = (plan.holdout_fraction * target_rows.len() as f64).round() as usize;
    if plan.holdout_fraction > 0.0 && (holdout == 0 || holdout >= target_rows.len()) {
        return Err(Error::Split(format!(
            "target groups hold {} rows, too few to hold out {:.0}% as non-members",
            target_rows.len(),
            plan.holdout_fraction * 100.0
        )));
    }
    let mut rng = rng_from_seed(derive_seed(plan.seed, &[tags::SPLIT]));
    let perm = shuffled(&target_rows, &mut rng);
    let (held, train) = perm.split_at(holdout);

    let out = SplitOutput {
        attacker: ds.rows_in_groups(&attacker_g),
        target: sorted(train.to_vec()),
        nonmember_same: sorted(held.to_vec()),
        nonmember_third: ds.rows_in_groups(&third_g),
        plan: plan.clone(),
    };
    if out.attacker.is_empty() {
        return Err(Error::Split("attacker groups have no rows".into()));
    }
    out.check_disjoint()?;
    Ok(out)
}

/// Dispatches on the plan's strategy.
pub fn split(ds: &TabularDataset, plan: &SplitPlan) -> Result<SplitOutput> {
    match plan.strategy {
        Strategy::Uniform => uniform_split(ds, plan),
        Strategy::Natural => natural_split(ds, plan),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    Member,
    SameDistribution,
    ThirdDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengePoint {
    pub row: usize,
    pub features: Vec<f64>,
    pub label: usize,
    pub member: bool,
    pub source: PointSource,
}

/// Balanced evaluation set: `per_side` members and `per_side` non-members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeSet {
    pub points: Vec<ChallengePoint>,
    pub member_count: usize,
    pub nonmember_count: usize,
    pub third_count: usize,
    pub rho: f64,
}

impl ChallengeSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Number of third-distribution non-members for `rho`: nearest integer to
/// ρ·per_side, ties to even.
pub fn third_share(per_side: usize, rho: f64) -> usize {
    (rho * per_side as f64).round_ties_even() as usize
}

fn sample(pool: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut v = pool.to_vec();
    let (chosen, _) = v.partial_shuffle(&mut rng, k);
    chosen.to_vec()
}

/// Builds the challenge set: members sampled from the target training set,
/// non-members mixed from the third pool (share ρ) and the same-distribution
/// pool, then shuffled.
pub fn build_challenge(
    split: &SplitOutput,
    ds: &TabularDataset,
    per_side: usize,
    rho: f64,
    seed: u64,
) -> Result<ChallengeSet> {
    if per_side == 0 {
        return Err(Error::Config(
            "challenge needs at least one point per side".into(),
        ));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho {rho} outside [0, 1]")));
    }
    let n_third = third_share(per_side, rho);
    let n_same = per_side - n_third;
    let shortfall = |pool: &str, have: usize, need: usize| {
        Error::Split(format!(
            "{pool} pool has {have} rows, challenge needs {need} (short by {})",
            need - have
        ))
    };
    if split.target.len() < per_side {
        return Err(shortfall("target (member)", split.target.len(), per_side));
    }
    if split.nonmember_same.len() < n_same {
        return Err(shortfall(
            "same-distribution non-member",
            split.nonmember_same.len(),
            n_same,
        ));
    }
    if split.nonmember_third.len() < n_third {
        return Err(shortfall(
            "third-distribution non-member",
            split.nonmember_third.len(),
            n_third,
        ));
    }

    let members = sample(&split.target, per_side, derive_seed(seed, &[tags::MEMBERS]));
    let same = sample(
        &split.nonmember_same,
        n_same,
        derive_seed(seed, &[tags::NONMEMBERS, 0]),
    );
    let third = sample(
        &split.nonmember_third,
        n_third,
        derive_seed(seed, &[tags::NONMEMBERS, 1]),
    );

    let point = |row: usize, member: bool, source: PointSource| ChallengePoint {
        row,
        features: ds.row(row).to_vec(),
        label: ds.label(row),
        member,
        source,
    };
    let mut points: Vec<ChallengePoint> = members
        .iter()
        .map(|&r| point(r, true, PointSource::Member))
        .chain(
            same.iter()
                .map(|&r| point(r, false, PointSource::SameDistribution)),
        )
        .chain(
            third
                .iter()
                .map(|&r| point(r, false, PointSource::ThirdDistribution)),
        )
        .collect();
    points.shuffle(&mut rng_from_seed(derive_seed(seed, &[tags::SHUFFLE])));

    Ok(ChallengeSet {
        points,
        member_count: per_side,
        nonmember_count: per_side,
        third_count: n_third,
        rho,
    })
}
