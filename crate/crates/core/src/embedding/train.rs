//! Mini-batch trainer with Adam.
//!
//! Per-triple gradients are computed in parallel but accumulated in batch
//! order by a single writer, so results do not depend on the thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{distance_gradient, margin_ranking_loss, positive_loss, positive_loss_gradient, TripleGradient};
use super::{init_model, DistanceNorm, EmbeddingModel, NegativeSampling, PoiBalancing, TrainConfig};
use crate::error::{Error, Result};
use crate::tkg::{Triple, TripKnowledgeGraph};

/// Triples sampled each epoch plus the optional `Has_POI` pretraining phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPlan {
    pub balancing: PoiBalancing,
    /// Multiset used by the main phase.
    pub main: Vec<Triple>,
    pub pretrain: Vec<Triple>,
    pub pretrain_epochs: usize,
    /// Copies of each `Has_POI` triple in `main`.
    pub poi_replication: usize,
}

pub fn balance_poi(graph: &TripKnowledgeGraph, mode: PoiBalancing, pretrain_epochs: usize) -> TrainingPlan {
    let (poi, trip): (Vec<Triple>, Vec<Triple>) = graph.triples().iter().partition(|t| graph.is_poi_triple(t));
    let mode = if poi.is_empty() && mode != PoiBalancing::Off {
        log::warn!("graph has no Has_POI triples; POI balancing disabled");
        PoiBalancing::Off
    } else {
        mode
    };
    match mode {
        PoiBalancing::Off => TrainingPlan {
            balancing: mode,
            main: graph.triples().to_vec(),
            pretrain: Vec::new(),
            pretrain_epochs: 0,
            poi_replication: 1,
        },
        PoiBalancing::Pretrain => TrainingPlan {
            balancing: mode,
            main: graph.triples().to_vec(),
            pretrain: poi,
            pretrain_epochs,
            poi_replication: 1,
        },
        PoiBalancing::Augment => {
            let factor = trip.len().div_ceil(4 * poi.len()).max(1);
            let mut main = trip;
            for _ in 0..factor {
                main.extend_from_slice(&poi);
            }
            TrainingPlan {
                balancing: mode,
                main,
                pretrain: Vec::new(),
                pretrain_epochs: 0,
                poi_replication: factor,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Main,
}

/// Per-epoch summary, evaluated over the deduplicated triple set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: f64,
    pub within_margin: f64,
    pub wall_time_s: f64,
}

/// Generates corrupted triples for the negative-sampling ablation.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    mode: NegativeSampling,
    entity_kind: Vec<u8>,
    relation_kind: Vec<u8>,
}

impl NegativeSampler {
    pub fn new(graph: &TripKnowledgeGraph, mode: NegativeSampling) -> Result<Self> {
        if mode == NegativeSampling::Off {
            return Err(Error::Config(
                "negative sampling requested while the positive-only objective is configured".into(),
            ));
        }
        Ok(NegativeSampler {
            mode,
            entity_kind: graph.entities().iter().map(|e| e.kind() as u8).collect(),
            relation_kind: graph.relations().iter().map(|r| r.kind as u8).collect(),
        })
    }

    /// Replaces one uniformly chosen element (head, relation or tail).
    pub fn corrupt<R: Rng>(&self, triple: &Triple, rng: &mut R) -> Triple {
        let mut out = *triple;
        match rng.random_range(0..3) {
            0 => out.head = self.pick(&self.entity_kind, triple.head, rng),
            1 => out.relation = self.pick(&self.relation_kind, triple.relation, rng),
            _ => out.tail = self.pick(&self.entity_kind, triple.tail, rng),
        }
        out
    }

    fn pick<R: Rng>(&self, kinds: &[u8], original: u32, rng: &mut R) -> u32 {
        let own = kinds[original as usize];
        let eligible = |i: usize| match self.mode {
            NegativeSampling::ControlledReplacement => kinds[i] != own,
            _ => i != original as usize,
        };
        let count = (0..kinds.len()).filter(|&i| eligible(i)).count();
        if count == 0 {
            return original;
        }
        let nth = rng.random_range(0..count);
        (0..kinds.len()).filter(|&i| eligible(i)).nth(nth).unwrap() as u32
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig, t: u64) {
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        let step = cfg.learning_rate / bc1;
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= step * *m / ((*v / bc2).sqrt() + cfg.epsilon);
        }
    }
}

const ENTITY: usize = 0;
const TRANSLATION: usize = 1;
const NORMAL: usize = 2;

/// Gradient rows produced by one training example.
struct Contribution {
    loss: f64,
    rows: Vec<(usize, u32, Vec<f64>)>,
}

fn push_triple_grad(rows: &mut Vec<(usize, u32, Vec<f64>)>, t: &Triple, g: TripleGradient, sign: f64) {
    let scale = |v: Vec<f64>| -> Vec<f64> {
        if sign == 1.0 {
            v
        } else {
            v.into_iter().map(|x| x * sign).collect()
        }
    };
    rows.push((ENTITY, t.head, scale(g.head)));
    rows.push((ENTITY, t.tail, scale(g.tail)));
    rows.push((TRANSLATION, t.relation, scale(g.translation)));
    rows.push((NORMAL, t.relation, scale(g.normal)));
}

fn args<'m>(model: &'m EmbeddingModel, t: &Triple) -> (&'m [f64], &'m [f64], &'m [f64], &'m [f64]) {
    (
        model.entity(t.head),
        model.translation(t.relation),
        model.normal(t.relation),
        model.entity(t.tail),
    )
}

pub struct Trainer<'g> {
    graph: &'g TripKnowledgeGraph,
    cfg: TrainConfig,
    model: EmbeddingModel,
    adam: [Adam; 3],
    grads: [Vec<f64>; 3],
    rng: ChaCha8Rng,
    steps: u64,
    plan: TrainingPlan,
    sampler: Option<NegativeSampler>,
    epoch: usize,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g TripKnowledgeGraph, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if graph.triples().is_empty() {
            return Err(Error::Data("cannot train on an empty graph".into()));
        }
        let model = init_model(graph, cfg)?;
        let sizes = [
            model.entity_matrix().len(),
            model.translation_matrix().len(),
            model.normal_matrix().len(),
        ];
        let sampler = match cfg.negative_sampling {
            NegativeSampling::Off => None,
            mode => Some(NegativeSampler::new(graph, mode)?),
        };
        Ok(Trainer {
            graph,
            plan: balance_poi(graph, cfg.poi_balancing, cfg.pretrain_epochs),
            cfg: cfg.clone(),
            model,
            adam: sizes.map(Adam::new),
            grads: sizes.map(|n| vec![0.0; n]),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
            steps: 0,
            sampler,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn plan(&self) -> &TrainingPlan {
        &self.plan
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn contribution(&self, pos: &Triple, neg: Option<&Triple>) -> Contribution {
        let norm = self.cfg.distance_norm;
        let (h, r, w, t) = args(&self.model, pos);
        let mut rows = Vec::new();
        match neg {
            None => {
                let (loss, grad) = positive_loss_gradient(h, r, w, t, self.cfg.margin, norm);
                if let Some(g) = grad {
                    push_triple_grad(&mut rows, pos, g, 1.0);
                }
                Contribution { loss, rows }
            }
            Some(neg) => {
                let gp = distance_gradient(h, r, w, t, norm);
                let (h2, r2, w2, t2) = args(&self.model, neg);
                let gn = distance_gradient(h2, r2, w2, t2, norm);
                let loss = margin_ranking_loss(gp.distance, gn.distance, self.cfg.margin);
                if loss > 0.0 {
                    push_triple_grad(&mut rows, pos, gp, 1.0);
                    push_triple_grad(&mut rows, neg, gn, -1.0);
                }
                Contribution { loss, rows }
            }
        }
    }

    /// One optimizer step on `batch`; returns the batch mean loss.
    pub fn step(&mut self, batch: &[Triple]) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let negatives: Option<Vec<Triple>> = self.sampler.as_ref().map(|s| {
            let rng = &mut self.rng;
            batch.iter().map(|t| s.corrupt(t, rng)).collect()
        });
        let this = &*self;
        let contributions: Vec<Contribution> = batch
            .par_iter()
            .enumerate()
            .map(|(i, t)| this.contribution(t, negatives.as_ref().map(|n| &n[i])))
            .collect();

        let d = self.model.dim();
        let scale = 1.0 / batch.len() as f64;
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
        let mut total = 0.0;
        for c in &contributions {
            total += c.loss;
            for (buffer, row, g) in &c.rows {
                let start = *row as usize * d;
                for (dst, src) in self.grads[*buffer][start..start + d].iter_mut().zip(g) {
                    *dst += src * scale;
                }
            }
        }
        if self.cfg.orthogonality_penalty > 0.0 {
            self.add_orthogonality_penalty(batch);
        }

        self.steps += 1;
        let [entities, translations, normals] = self.model.parts_mut();
        for (i, params) in [entities, translations, normals].into_iter().enumerate() {
            self.adam[i].update(params, &self.grads[i], &self.cfg, self.steps);
        }
        self.model.renormalize_normals();
        if self.cfg.entity_norm_clip {
            self.model.clip_entities();
        }
        if !self.model.is_finite() {
            return Err(Error::Divergence { epoch: self.epoch });
        }
        Ok(total * scale)
    }

    /// Soft constraint `[(w·l_r)²/‖l_r‖² − ε²]₊` on the relations in the batch.
    fn add_orthogonality_penalty(&mut self, batch: &[Triple]) {
        const EPS2: f64 = 1e-6;
        let d = self.model.dim();
        let mut relations: Vec<u32> = batch.iter().map(|t| t.relation).collect();
        relations.sort_unstable();
        relations.dedup();
        let c = self.cfg.orthogonality_penalty / batch.len() as f64;
        for r in relations {
            let (lr, w) = (self.model.translation(r), self.model.normal(r));
            let a: f64 = lr.iter().zip(w).map(|(x, y)| x * y).sum();
            let b: f64 = lr.iter().map(|x| x * x).sum();
            if b == 0.0 || a * a / b <= EPS2 {
                continue;
            }
            let start = r as usize * d;
            for i in 0..d {
                self.grads[NORMAL][start + i] += c * 2.0 * a * lr[i] / b;
                self.grads[TRANSLATION][start + i] += c * (2.0 * a * w[i] / b - 2.0 * a * a * lr[i] / (b * b));
            }
        }
    }

    fn run_pass(&mut self, set: &[Triple]) -> Result<()> {
        let mut order = set.to_vec();
        order.shuffle(&mut self.rng);
        for batch in order.chunks(self.cfg.batch_size) {
            self.step(batch)?;
        }
        Ok(())
    }

    /// Runs exactly `n` optimizer steps over the main multiset, reshuffling
    /// whenever a pass is exhausted.
    pub fn train_steps(&mut self, n: u64) -> Result<()> {
        let mut done = 0;
        while done < n {
            let mut order = self.plan.main.clone();
            order.shuffle(&mut self.rng);
            for batch in order.chunks(self.cfg.batch_size) {
                if done == n {
                    break;
                }
                self.step(batch)?;
                done += 1;
            }
            self.epoch += 1;
        }
        Ok(())
    }

    /// Mean positive loss and fraction of triples within the margin over the
    /// deduplicated triple set.
    pub fn evaluate(&self) -> (f64, f64) {
        evaluate_model(&self.model, self.graph.triples(), self.cfg.margin, self.cfg.distance_norm)
    }

    /// Runs the full schedule (pretraining, then main epochs with early
    /// stopping) and returns the model with one report per epoch.
    pub fn run(mut self) -> Result<(EmbeddingModel, Vec<LossReport>)> {
        let started = Instant::now();
        let mut reports = Vec::new();
        let pretrain = std::mem::take(&mut self.plan.pretrain);
        for _ in 0..self.plan.pretrain_epochs {
            self.run_pass(&pretrain)?;
            let (mean_loss, within) = evaluate_model(&self.model, &pretrain, self.cfg.margin, self.cfg.distance_norm);
            reports.push(LossReport {
                epoch: self.epoch,
                phase: Phase::Pretrain,
                mean_loss,
                within_margin: within,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
            self.epoch += 1;
        }
        self.plan.pretrain = pretrain;

        let main = std::mem::take(&mut self.plan.main);
        let mut streak = 0;
        for _ in 0..self.cfg.epochs {
            self.run_pass(&main)?;
            let (mean_loss, within) = self.evaluate();
            reports.push(LossReport {
                epoch: self.epoch,
                phase: Phase::Main,
                mean_loss,
                within_margin: within,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
            self.epoch += 1;
            streak = if within > self.cfg.early_stop_fraction { streak + 1 } else { 0 };
            if self.cfg.early_stop_patience > 0 && streak >= self.cfg.early_stop_patience {
                log::info!("early stop after epoch {}: {:.4} within margin", self.epoch - 1, within);
                break;
            }
        }
        self.plan.main = main;
        Ok((self.model, reports))
    }
}

pub(crate) fn evaluate_model(model: &EmbeddingModel, triples: &[Triple], margin: f64, norm: DistanceNorm) -> (f64, f64) {
    if triples.is_empty() {
        return (0.0, 1.0);
    }
    let (loss, within) = triples
        .par_iter()
        .map(|t| {
            let d = model.distance(t, norm);
            (positive_loss(d, margin), usize::from(d <= margin))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0usize), |(l, w), (dl, dw)| (l + dl, w + dw));
    let n = triples.len() as f64;
    (loss / n, within as f64 / n)
}

pub fn train(graph: &TripKnowledgeGraph, cfg: &TrainConfig) -> Result<(EmbeddingModel, Vec<LossReport>)> {
    Trainer::new(graph, cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::tests::small_graph;
    use crate::tkg::{build_graph, Entity, GraphOptions};
    use crate::trip_data::{TemporalConfig, TripRecord, VehicleId, ZoneId};
    use chrono::NaiveDate;
    use std::collections::BTreeSet;

    fn one_triple_graph() -> TripKnowledgeGraph {
        let zones: BTreeSet<ZoneId> = [ZoneId(1), ZoneId(2)].into();
        let rec = TripRecord {
            vehicle_id: VehicleId::new("V1"),
            date: NaiveDate::from_ymd_opt(2019, 8, 5).unwrap(),
            ftime: 0,
            fzone: ZoneId(1),
            tzone: ZoneId(2),
        };
        let opts = GraphOptions {
            include_non_core: false,
            ..Default::default()
        };
        build_graph(&[rec], &[], &TemporalConfig::default(), &zones, None, opts).unwrap().0
    }

    #[test]
    fn single_triple_converges_within_margin() {
        let g = one_triple_graph();
        assert_eq!(g.triples().len(), 1);
        let cfg = TrainConfig {
            dim: 4,
            epochs: 2000,
            learning_rate: 0.01,
            seed: 1,
            ..Default::default()
        };
        let (model, reports) = train(&g, &cfg).unwrap();
        assert!(reports.len() >= 50 || reports.last().unwrap().within_margin == 1.0);
        let d = model.distance(&g.triples()[0], DistanceNorm::L2);
        assert!(d <= cfg.margin, "distance {d}");
        assert_eq!(reports.last().unwrap().mean_loss, 0.0);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 6,
            epochs: 0,
            ..Default::default()
        };
        let (model, reports) = train(&g, &cfg).unwrap();
        assert!(reports.is_empty());
        assert_eq!(model, init_model(&g, &cfg).unwrap());
    }

    #[test]
    fn training_is_reproducible_across_thread_counts() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 6,
            epochs: 20,
            batch_size: 7,
            seed: 9,
            early_stop_patience: 0,
            ..Default::default()
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train(&g, &cfg).unwrap().0)
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a, run(3));
    }

    #[test]
    fn normals_stay_unit_after_steps() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 5,
            batch_size: 4,
            learning_rate: 0.05,
            ..Default::default()
        };
        let mut trainer = Trainer::new(&g, &cfg).unwrap();
        for _ in 0..30 {
            trainer.train_steps(1).unwrap();
            assert!(trainer.model().max_normal_deviation() <= 1e-9);
        }
        assert_eq!(trainer.steps(), 30);
    }

    #[test]
    fn augment_replication_factor() {
        let g = small_graph();
        let plan = balance_poi(&g, PoiBalancing::Augment, 50);
        let stats = g.stats();
        let factor = stats.trip_triples.div_ceil(4 * stats.poi_triples);
        assert_eq!(plan.poi_replication, factor);
        assert_eq!(plan.main.len(), stats.trip_triples + factor * stats.poi_triples);

        let off = balance_poi(&g, PoiBalancing::Off, 50);
        assert_eq!(off.main, g.triples());

        let pre = balance_poi(&g, PoiBalancing::Pretrain, 7);
        assert_eq!(pre.pretrain.len(), stats.poi_triples);
        assert_eq!(pre.pretrain_epochs, 7);
        assert_eq!(pre.main, g.triples());
    }

    #[test]
    fn no_poi_coerces_to_off() {
        let g = one_triple_graph();
        let plan = balance_poi(&g, PoiBalancing::Augment, 50);
        assert_eq!(plan.balancing, PoiBalancing::Off);
        assert_eq!(plan.main, g.triples());
    }

    #[test]
    fn pretrain_schedule_reports_phase() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 4,
            epochs: 3,
            pretrain_epochs: 2,
            poi_balancing: PoiBalancing::Pretrain,
            early_stop_patience: 0,
            ..Default::default()
        };
        let (_, reports) = train(&g, &cfg).unwrap();
        let phases: Vec<Phase> = reports.iter().map(|r| r.phase).collect();
        assert_eq!(phases, vec![Phase::Pretrain, Phase::Pretrain, Phase::Main, Phase::Main, Phase::Main]);
    }

    #[test]
    fn sampler_requires_ablation_mode() {
        let g = small_graph();
        assert!(matches!(NegativeSampler::new(&g, NegativeSampling::Off), Err(Error::Config(_))));
    }

    #[test]
    fn controlled_replacement_changes_kind() {
        let g = small_graph();
        let sampler = NegativeSampler::new(&g, NegativeSampling::ControlledReplacement).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in g.triples() {
            for _ in 0..10 {
                let n = sampler.corrupt(t, &mut rng);
                let changed = [(t.head, n.head), (t.tail, n.tail)]
                    .into_iter()
                    .filter(|(a, b)| a != b)
                    .all(|(a, b)| g.entity(a).kind() != g.entity(b).kind());
                assert!(changed);
                if n.relation != t.relation {
                    assert_ne!(g.relation(n.relation).kind, g.relation(t.relation).kind);
                }
                assert_ne!(&n, t);
            }
        }
    }

    #[test]
    fn random_replacement_changes_one_element() {
        let g = small_graph();
        let sampler = NegativeSampler::new(&g, NegativeSampling::RandomReplacement).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for t in g.triples() {
            let n = sampler.corrupt(t, &mut rng);
            let diffs = usize::from(n.head != t.head) + usize::from(n.relation != t.relation) + usize::from(n.tail != t.tail);
            assert_eq!(diffs, 1);
        }
    }

    #[test]
    fn negative_sampling_mode_trains() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 4,
            epochs: 3,
            negative_sampling: NegativeSampling::RandomReplacement,
            ..Default::default()
        };
        let (model, _) = train(&g, &cfg).unwrap();
        assert!(model.is_finite());
    }

    #[test]
    fn entity_clip_and_penalty_options() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 4,
            epochs: 5,
            entity_norm_clip: true,
            orthogonality_penalty: 0.5,
            early_stop_patience: 0,
            ..Default::default()
        };
        let (model, _) = train(&g, &cfg).unwrap();
        for i in 0..model.num_entities() as u32 {
            assert!(crate::embedding::norm_of(model.entity(i), DistanceNorm::L2) <= 1.0 + 1e-12);
        }
        assert!(model.max_normal_deviation() <= 1e-9);
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_stays_finite() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 4,
            epochs: 2,
            learning_rate: f64::MAX,
            ..Default::default()
        };
        match train(&g, &cfg) {
            Err(Error::Divergence { epoch }) => assert_eq!(epoch, 0),
            Ok((m, _)) => assert!(m.is_finite()),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn vehicle_entities_move_during_training() {
        let g = small_graph();
        let cfg = TrainConfig {
            dim: 4,
            epochs: 5,
            early_stop_patience: 0,
            ..Default::default()
        };
        let init = init_model(&g, &cfg).unwrap();
        let (model, _) = train(&g, &cfg).unwrap();
        let v = g.entity_id(&Entity::Vehicle(VehicleId::new("V0"))).unwrap();
        assert_ne!(init.entity(v), model.entity(v));
    }
}
