//! Greedy iterative search for one operator set per layer.
//!
//! Layers are visited from the output down, each pass. At every layer each
//! library candidate is assigned and scored by the best final loss of a few
//! short training runs; the winner stays assigned before moving on. All
//! candidates at one `(pass, layer)` position share one seed list, so they
//! differ only in the operator set.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprop::Sample;
use crate::error::{OnnError, Result};
use crate::network::{NetworkModel, NetworkSpec};
use crate::operators::{OperatorParams, OperatorSet};
use crate::train::{train, HistoryRow, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorLibrary {
    pub sets: Vec<OperatorSet>,
    /// Layer number (1-based) to its fixed set; these layers are never searched.
    #[serde(default)]
    pub frozen_layers: BTreeMap<usize, OperatorSet>,
}

impl Default for OperatorLibrary {
    fn default() -> Self {
        OperatorLibrary {
            sets: OperatorSet::library().collect(),
            frozen_layers: BTreeMap::new(),
        }
    }
}

impl OperatorLibrary {
    pub fn new(sets: Vec<OperatorSet>) -> Self {
        OperatorLibrary {
            sets,
            frozen_layers: BTreeMap::new(),
        }
    }

    /// Comma-separated set indices, e.g. `"0,9,13"`.
    pub fn parse(list: &str) -> Result<Self> {
        let sets = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| OnnError::invalid(format!("operator set index {s:?}")))
                    .and_then(OperatorSet::from_index)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(sets))
    }

    pub fn freeze(mut self, layer: usize, set: OperatorSet) -> Self {
        self.frozen_layers.insert(layer, set);
        self
    }

    /// Candidates in ascending index order without duplicates.
    fn candidates(&self) -> Vec<OperatorSet> {
        let mut sets = self.sets.clone();
        sets.sort_by_key(|s| s.index());
        sets.dedup();
        sets
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GisConfig {
    pub passes: usize,
    /// Training runs per candidate.
    pub n_bp: usize,
    pub short_iter_max: usize,
    pub final_iter_max: usize,
    pub target_metric: Option<f64>,
    pub seed: u64,
}

impl Default for GisConfig {
    fn default() -> Self {
        GisConfig {
            passes: 2,
            n_bp: 2,
            short_iter_max: 80,
            final_iter_max: 240,
            target_metric: None,
            seed: 0,
        }
    }
}

impl GisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 || self.n_bp == 0 {
            return Err(OnnError::invalid("GIS needs at least one pass and one run per candidate"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GisLogRow {
    pub pass: usize,
    pub layer: usize,
    pub set: OperatorSet,
    /// Lowest final training loss over the candidate's runs (`inf` if every
    /// run diverged).
    pub best_mse: f64,
    pub seeds: Vec<u64>,
    /// 1 for the winner of this `(pass, layer)`.
    pub rank: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GisLog {
    pub rows: Vec<GisLogRow>,
}

impl GisLog {
    pub fn write_table<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pass\tlayer\tset\tbest_mse\trank\tseeds")?;
        for r in &self.rows {
            let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{:.16e}\t{}\t{}",
                r.pass,
                r.layer,
                r.set.index(),
                r.best_mse,
                r.rank,
                seeds.join(",")
            )?;
        }
        Ok(())
    }

    /// Rows of one `(pass, layer)` position, winner first.
    pub fn ranking(&self, pass: usize, layer: usize) -> Vec<&GisLogRow> {
        let mut rows: Vec<&GisLogRow> = self.rows.iter().filter(|r| r.pass == pass && r.layer == layer).collect();
        rows.sort_by_key(|r| r.rank);
        rows
    }
}

#[derive(Clone, Debug)]
pub struct GisOutcome {
    pub model: NetworkModel,
    pub assignment: Vec<OperatorSet>,
    pub log: GisLog,
    /// Set when a search run met the target; its trained model is returned.
    pub reached_target: bool,
    /// History of the final training run (empty when the search stopped early).
    pub final_history: Vec<HistoryRow>,
}

fn with_assignment(spec: &NetworkSpec, assignment: &[OperatorSet]) -> NetworkSpec {
    let mut spec = spec.clone();
    for (layer, &set) in spec.layers.iter_mut().zip(assignment) {
        layer.operator_set = set;
    }
    spec
}

/// One short run: the trained model and its final loss, or `None` on divergence.
fn short_run(
    spec: &NetworkSpec,
    params: OperatorParams,
    seed: u64,
    samples: &[Sample],
    train_cfg: &TrainConfig,
) -> Result<Option<(f64, bool, NetworkModel)>> {
    let model = NetworkModel::init_with(spec.clone(), params, seed, crate::network::INIT_AMPLITUDE)?;
    match train(model, samples, train_cfg) {
        Ok(out) => {
            let loss = out.final_loss().unwrap_or(f64::INFINITY);
            Ok(Some((loss, out.reached_target, out.model)))
        }
        Err(OnnError::Divergence { .. } | OnnError::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Candidate {
    set: OperatorSet,
    best: f64,
    /// Best run that met the target, if any: (loss, model).
    hit: Option<(f64, NetworkModel)>,
}

/// Search an operator set for every non-frozen layer, then train the final
/// assignment from a fresh seed for `final_iter_max` iterations, unless a
/// search run already met `target_metric`.
pub fn gis_search(
    spec: &NetworkSpec,
    params: OperatorParams,
    samples: &[Sample],
    library: &OperatorLibrary,
    cfg: &GisConfig,
    train_cfg: &TrainConfig,
) -> Result<GisOutcome> {
    cfg.validate()?;
    let depth = spec.layers.len();
    spec.shapes()?;
    for &l in library.frozen_layers.keys() {
        if l == 0 || l > depth {
            return Err(OnnError::invalid(format!("frozen layer {l} outside 1..={depth}")));
        }
    }
    let candidates = library.candidates();
    let searchable: Vec<usize> = (1..=depth).rev().filter(|l| !library.frozen_layers.contains_key(l)).collect();
    if candidates.is_empty() && !searchable.is_empty() {
        return Err(OnnError::invalid("empty operator library"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut assignment: Vec<OperatorSet> = (1..=depth)
        .map(|l| match library.frozen_layers.get(&l) {
            Some(&set) => set,
            None => candidates[rng.random_range(0..candidates.len())],
        })
        .collect();

    let short_cfg = TrainConfig {
        iter_max: cfg.short_iter_max,
        target_metric: cfg.target_metric,
        ..train_cfg.clone()
    };
    let mut log = GisLog::default();
    for pass in 1..=cfg.passes {
        for &l in &searchable {
            let seeds: Vec<u64> = (0..cfg.n_bp).map(|_| rng.random()).collect();
            let results = candidates
                .par_iter()
                .map(|&set| {
                    let mut trial = assignment.clone();
                    trial[l - 1] = set;
                    let trial_spec = with_assignment(spec, &trial);
                    let mut c = Candidate {
                        set,
                        best: f64::INFINITY,
                        hit: None,
                    };
                    for &seed in &seeds {
                        if let Some((loss, reached, model)) = short_run(&trial_spec, params, seed, samples, &short_cfg)? {
                            c.best = c.best.min(loss);
                            if reached && c.hit.as_ref().is_none_or(|(b, _)| loss < *b) {
                                c.hit = Some((loss, model));
                            }
                        }
                    }
                    Ok(c)
                })
                .collect::<Result<Vec<Candidate>>>()?;

            // Rank by loss, ties to the lower index (candidates are index-sorted).
            let mut order: Vec<usize> = (0..results.len()).collect();
            order.sort_by(|&a, &b| results[a].best.total_cmp(&results[b].best).then(a.cmp(&b)));
            let mut rank = vec![0; results.len()];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r + 1;
            }
            for (i, c) in results.iter().enumerate() {
                log.rows.push(GisLogRow {
                    pass,
                    layer: l,
                    set: c.set,
                    best_mse: c.best,
                    seeds: seeds.clone(),
                    rank: rank[i],
                });
            }
            assignment[l - 1] = results[order[0]].set;

            let hit = order.iter().find_map(|&i| {
                results[i].hit.as_ref().map(|(_, m)| (results[i].set, m.clone()))
            });
            if let Some((set, model)) = hit {
                assignment[l - 1] = set;
                return Ok(GisOutcome {
                    model,
                    assignment,
                    log,
                    reached_target: true,
                    final_history: Vec::new(),
                });
            }
        }
    }

    let final_spec = with_assignment(spec, &assignment);
    let model = NetworkModel::init_with(final_spec, params, rng.random(), crate::network::INIT_AMPLITUDE)?;
    let final_cfg = TrainConfig {
        iter_max: cfg.final_iter_max,
        target_metric: cfg.target_metric,
        ..train_cfg.clone()
    };
    let out = train(model, samples, &final_cfg)?;
    Ok(GisOutcome {
        model: out.model,
        assignment,
        log,
        reached_target: out.reached_target,
        final_history: out.history,
    })
}
