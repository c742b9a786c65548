//! TransH-style embedding of the trip knowledge graph.
//!
//! Every entity is a point `l_e`; every relation carries a translation `l_r`
//! and the unit normal `w_r` of its hyperplane. A triple's distance is
//! `‖P(l_h) + l_r − P(l_t)‖` with `P(v) = v − (w_rᵀv) w_r`. Training only
//! sees observed (positive) triples and minimizes `max(0, f_r(h, t) − γ)`.

mod checkpoint;
mod geometry;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tkg::{Triple, TripKnowledgeGraph};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use geometry::{
    distance_gradient, margin_ranking_loss, norm_of, positive_loss, positive_loss_gradient, project,
    triple_distance, TripleGradient, UNIT_TOLERANCE,
};
pub use train::{balance_poi, train, LossReport, NegativeSampler, Phase, Trainer, TrainingPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceNorm {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiBalancing {
    /// Replicate `Has_POI` triples up to a scale comparable with trip triples.
    #[default]
    Augment,
    /// Train on `Has_POI` triples alone for `pretrain_epochs` first.
    Pretrain,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Positive-only hinge objective.
    #[default]
    Off,
    /// Replace head, relation or tail by a uniformly drawn element.
    RandomReplacement,
    /// Replace by an element whose kind differs from the original's.
    ControlledReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub distance_norm: DistanceNorm,
    pub poi_balancing: PoiBalancing,
    pub pretrain_epochs: usize,
    pub negative_sampling: NegativeSampling,
    /// Weight of the soft `w_rᵀl_r ≈ 0` penalty; 0 disables it.
    pub orthogonality_penalty: f64,
    /// Rescale entity vectors into the unit ball after each step.
    pub entity_norm_clip: bool,
    /// Stop once this fraction of triples lies within the margin ...
    pub early_stop_fraction: f64,
    /// ... for this many consecutive epochs. 0 disables early stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 148,
            margin: 1.0,
            learning_rate: 0.003,
            batch_size: 1024,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 500,
            seed: 0,
            distance_norm: DistanceNorm::L2,
            poi_balancing: PoiBalancing::Augment,
            pretrain_epochs: 50,
            negative_sampling: NegativeSampling::Off,
            orthogonality_penalty: 0.0,
            entity_norm_clip: false,
            early_stop_fraction: 0.999,
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.dim == 0 {
            return bad("embedding dimension must be positive");
        }
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("optimizer moments must lie in [0, 1) and epsilon must be positive");
        }
        if self.orthogonality_penalty < 0.0 {
            return bad("orthogonality penalty must be non-negative");
        }
        Ok(())
    }
}

/// Parameters of the trained model, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    entities: Vec<f64>,
    translations: Vec<f64>,
    normals: Vec<f64>,
}

impl EmbeddingModel {
    /// Builds a model from raw matrices; every normal is rescaled to unit length.
    pub fn from_parts(dim: usize, entities: Vec<f64>, translations: Vec<f64>, mut normals: Vec<f64>) -> Result<Self> {
        if dim == 0 || !entities.len().is_multiple_of(dim) || !translations.len().is_multiple_of(dim) || translations.len() != normals.len() {
            return Err(Error::Config("matrix shapes do not match the dimension".into()));
        }
        for w in normals.chunks_mut(dim) {
            let n = norm_of(w, DistanceNorm::L2);
            if !(n > 0.0) {
                return Err(Error::NonUnitNormal(n));
            }
            w.iter_mut().for_each(|x| *x /= n);
        }
        Ok(EmbeddingModel {
            dim,
            entities,
            translations,
            normals,
        })
    }

    /// Builds a model from stored matrices without touching the normals,
    /// which must already be unit length.
    pub(crate) fn from_stored(dim: usize, entities: Vec<f64>, translations: Vec<f64>, normals: Vec<f64>) -> Result<Self> {
        let model = EmbeddingModel {
            dim,
            entities,
            translations,
            normals,
        };
        let dev = model.max_normal_deviation();
        if !(dev <= UNIT_TOLERANCE) {
            return Err(Error::NonUnitNormal(1.0 + dev));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.translations.len() / self.dim
    }

    pub fn entity(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.entities[id as usize * d..(id as usize + 1) * d]
    }

    pub fn translation(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.translations[id as usize * d..(id as usize + 1) * d]
    }

    pub fn normal(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.normals[id as usize * d..(id as usize + 1) * d]
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn translation_matrix(&self) -> &[f64] {
        &self.translations
    }

    pub fn normal_matrix(&self) -> &[f64] {
        &self.normals
    }

    pub fn entity_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.entities[id as usize * d..(id as usize + 1) * d]
    }

    pub fn translation_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.translations[id as usize * d..(id as usize + 1) * d]
    }

    /// Sets a normal, rescaled to unit length.
    pub fn set_normal(&mut self, id: u32, w: &[f64]) -> Result<()> {
        let n = norm_of(w, DistanceNorm::L2);
        if !(n > 0.0) || w.len() != self.dim {
            return Err(Error::NonUnitNormal(n));
        }
        let d = self.dim;
        for (dst, src) in self.normals[id as usize * d..(id as usize + 1) * d].iter_mut().zip(w) {
            *dst = src / n;
        }
        Ok(())
    }

    pub fn distance(&self, triple: &Triple, norm: DistanceNorm) -> f64 {
        triple_distance(self, triple, norm)
    }

    /// Largest `|‖w_r‖₂ − 1|` over all relations.
    pub fn max_normal_deviation(&self) -> f64 {
        self.normals
            .chunks(self.dim)
            .map(|w| (norm_of(w, DistanceNorm::L2) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entities
            .iter()
            .chain(&self.translations)
            .chain(&self.normals)
            .all(|x| x.is_finite())
    }

    pub(crate) fn parts_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.entities, &mut self.translations, &mut self.normals]
    }

    pub(crate) fn renormalize_normals(&mut self) {
        let d = self.dim;
        for w in self.normals.chunks_mut(d) {
            let n = norm_of(w, DistanceNorm::L2);
            if n > 0.0 {
                w.iter_mut().for_each(|x| *x /= n);
            }
        }
    }

    pub(crate) fn clip_entities(&mut self) {
        let d = self.dim;
        for e in self.entities.chunks_mut(d) {
            let n = norm_of(e, DistanceNorm::L2);
            if n > 1.0 {
                e.iter_mut().for_each(|x| *x /= n);
            }
        }
    }
}

/// Seeded initialization: entity and translation coordinates uniform in
/// `[−6/√d, 6/√d]`; normals drawn the same way, then unit-normalized.
pub fn init_model(graph: &TripKnowledgeGraph, cfg: &TrainConfig) -> Result<EmbeddingModel> {
    if cfg.dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    init_with_shape(graph.num_entities(), graph.num_relations(), cfg.dim, cfg.seed)
}

pub(crate) fn init_with_shape(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Result<EmbeddingModel> {
    let bound = 6.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
    let entities = draw(n_entities * dim);
    let translations = draw(n_relations * dim);
    let normals = draw(n_relations * dim);
    EmbeddingModel::from_parts(dim, entities, translations, normals)
}
