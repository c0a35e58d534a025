//! Federated averaging simulation.
//!
//! Each round broadcasts the global model, runs local SGD on every client and
//! replaces the global model by the sample-weighted mean of the client models.
//!
//! Seeding: client `c` trains with the stream seed
//! `derive_seed(cfg.seed, [CLIENT, c])`, and its epochs are numbered globally
//! (round `r`, 1-based, covers epochs `(r−1)·E .. r·E` for `E` local epochs).
//! With a single client this makes `R` rounds bit-identical to centralized
//! training for `R·E` epochs with that seed on the same (ascending) rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::model::{init_model, train_from_epoch, Architecture, ModelParams, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    /// Seeded near-equal split; the first `n mod c` clients get one extra row.
    Uniform,
    /// One client per group value present, in group order.
    ByGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlConfig {
    pub clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub partition: Partition,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for FlConfig {
    fn default() -> Self {
        FlConfig {
            clients: 4,
            rounds: 10,
            local_epochs: 2,
            partition: Partition::Uniform,
            hidden: vec![32],
            learning_rate: 0.05,
            batch_size: 8,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Config("client count must be ≥ 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be ≥ 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local epochs must be ≥ 1".into()));
        }
        self.client_train_config(0).validate()
    }

    pub fn architecture(&self, input: usize, classes: usize) -> Result<Architecture> {
        Architecture::new(input, &self.hidden, classes)
    }

    /// Local training configuration of client `client` for one round.
    pub fn client_train_config(&self, client: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, &[tags::CLIENT, client as u64]),
            l2: self.l2,
        }
    }
}

/// Global model after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    /// 1-based.
    pub round: usize,
    pub params: ModelParams,
    pub client_sizes: Vec<usize>,
}

/// Splits `rows` among clients. Each client's rows are returned ascending.
pub fn partition_clients(
    ds: &TabularDataset,
    rows: &[usize],
    cfg: &FlConfig,
) -> Result<Vec<Vec<usize>>> {
    let mut clients = match cfg.partition {
        Partition::Uniform => {
            if cfg.clients > rows.len() {
                return Err(Error::Config(format!(
                    "{} clients for {} rows: some client would receive 0 rows",
                    cfg.clients,
                    rows.len()
                )));
            }
            let mut shuffled = rows.to_vec();
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &[tags::PARTITION]));
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            let base = rows.len() / cfg.clients;
            let extra = rows.len() % cfg.clients;
            let mut out = Vec::with_capacity(cfg.clients);
            let mut start = 0;
            for c in 0..cfg.clients {
                let len = base + usize::from(c < extra);
                out.push(shuffled[start..start + len].to_vec());
                start += len;
            }
            out
        }
        Partition::ByGroup => {
            let groups = ds.groups().ok_or_else(|| {
                Error::Config("by-group partition needs group identifiers".into())
            })?;
            let mut present: Vec<usize> = rows.iter().map(|&i| groups[i]).collect();
            present.sort_unstable();
            present.dedup();
            present
                .iter()
                .map(|&g| rows.iter().copied().filter(|&i| groups[i] == g).collect())
                .collect()
        }
    };
    if clients.iter().any(Vec::is_empty) {
        return Err(Error::Config("a client would receive 0 rows".into()));
    }
    for c in &mut clients {
        c.sort_unstable();
    }
    Ok(clients)
}

/// Local SGD for client `client` in round `round` (1-based), starting from
/// the global parameters.
pub fn local_update(
    global: &ModelParams,
    ds: &TabularDataset,
    rows: &[usize],
    cfg: &FlConfig,
    round: usize,
    client: usize,
) -> Result<ModelParams> {
    cfg.validate()?;
    if round == 0 {
        return Err(Error::Config("rounds are numbered from 1".into()));
    }
    let first_epoch = (round - 1) * cfg.local_epochs;
    let (params, _) = train_from_epoch(
        global.clone(),
        ds,
        rows,
        &cfg.client_train_config(client),
        first_epoch,
    )?;
    Ok(params)
}

/// Sample-weighted coordinate mean of client models.
///
/// Computed as `p₀ + Σᵢ (nᵢ/N)(pᵢ − p₀)` in client order, which returns the
/// common value exactly when all updates agree (in particular for one
/// client).
pub fn aggregate(updates: &[ModelParams], weights: &[usize]) -> Result<ModelParams> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Data("no client updates to aggregate".into()))?;
    if updates.len() != weights.len() {
        return Err(Error::Dimension {
            expected: updates.len(),
            actual: weights.len(),
        });
    }
    if weights.contains(&0) {
        return Err(Error::Data("client weights must be > 0".into()));
    }
    if let Some(bad) = updates.iter().position(|u| !u.same_shape(first)) {
        return Err(Error::Data(format!(
            "update {bad} has a different shape from update 0"
        )));
    }
    let total = weights.iter().sum::<usize>() as f64;
    let mut out = first.clone();
    for (update, &w) in updates.iter().zip(weights).skip(1) {
        let share = w as f64 / total;
        for ((o, p), p0) in out.values_mut().zip(update.values()).zip(first.values()) {
            *o += share * (p - p0);
        }
    }
    Ok(out)
}

/// Runs `cfg.rounds` rounds of FedAvg over `rows` and returns one snapshot
/// per round. The initial model is `init_model(arch, init_seed)`.
pub fn run_rounds(
    ds: &TabularDataset,
    rows: &[usize],
    cfg: &FlConfig,
    init_seed: u64,
) -> Result<Vec<RoundSnapshot>> {
    cfg.validate()?;
    let arch = cfg.architecture(ds.dim(), ds.num_classes())?;
    let clients = partition_clients(ds, rows, cfg)?;
    let sizes: Vec<usize> = clients.iter().map(Vec::len).collect();

    let mut global = init_model(&arch, init_seed)?;
    let mut snapshots = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let updates = clients
            .par_iter()
            .enumerate()
            .map(|(c, client_rows)| local_update(&global, ds, client_rows, cfg, round, c))
            .collect::<Result<Vec<_>>>()?;
        global = aggregate(&updates, &sizes)?;
        if !global.is_finite() {
            return Err(Error::Training(format!(
                "round {round} produced non-finite parameters"
            )));
        }
        snapshots.push(RoundSnapshot {
            round,
            params: global.clone(),
            client_sizes: sizes.clone(),
        });
    }
    Ok(snapshots)
}
