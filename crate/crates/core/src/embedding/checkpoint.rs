//! Binary model checkpoint.
//!
//! Layout (little endian): magic `TKGEM\0\0\x01`, `u32` dim, `u64` entity
//! count, `u64` relation count, 32-byte graph hash, then the entity,
//! translation and normal matrices as `f64`, row-major.

use super::EmbeddingModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TKGEM\0\0\x01";

pub fn save_checkpoint(model: &EmbeddingModel, graph_hash: &[u8; 32]) -> Vec<u8> {
    let n = model.entity_matrix().len() + 2 * model.translation_matrix().len();
    let mut out = Vec::with_capacity(60 + 8 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.num_entities() as u64).to_le_bytes());
    out.extend_from_slice(&(model.num_relations() as u64).to_le_bytes());
    out.extend_from_slice(graph_hash);
    for x in model
        .entity_matrix()
        .iter()
        .chain(model.translation_matrix())
        .chain(model.normal_matrix())
    {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Decodes a checkpoint, rejecting it unless it was saved for `graph_hash`.
pub fn load_checkpoint(bytes: &[u8], graph_hash: &[u8; 32]) -> Result<EmbeddingModel> {
    let header = 8 + 4 + 8 + 8 + 32;
    if bytes.len() < header || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n_ent = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let n_rel = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    if &bytes[28..60] != graph_hash {
        return Err(Error::Checkpoint("graph hash mismatch; retrain for this graph".into()));
    }
    let total = dim * (n_ent + 2 * n_rel);
    if bytes.len() != header + 8 * total || dim == 0 {
        return Err(Error::Checkpoint("truncated or oversized checkpoint".into()));
    }
    let mut values = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let entities = take(n_ent * dim);
    let translations = take(n_rel * dim);
    let normals = take(n_rel * dim);
    EmbeddingModel::from_stored(dim, entities, translations, normals)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}
