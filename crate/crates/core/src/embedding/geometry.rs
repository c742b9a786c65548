//! Hyperplane projection, triple distance and hinge losses with their
//! analytic gradients.

use super::{DistanceNorm, EmbeddingModel};
use crate::error::{Error, Result};
use crate::tkg::Triple;

/// Tolerance for the unit-length precondition of [`project`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

pub fn norm_of(v: &[f64], norm: DistanceNorm) -> f64 {
    match norm {
        DistanceNorm::L1 => v.iter().map(|x| x.abs()).sum(),
        DistanceNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v − (wᵀv) w`. `w` must have unit L2 norm.
pub fn project(v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let n = norm_of(w, DistanceNorm::L2);
    if (n - 1.0).abs() > UNIT_TOLERANCE || v.len() != w.len() {
        return Err(Error::NonUnitNormal(n));
    }
    let s = dot(w, v);
    Ok(v.iter().zip(w).map(|(x, wi)| x - s * wi).collect())
}

/// Residual `P(h) + r − P(t)`, computed as `δ − (wᵀδ) w + r` with `δ = h − t`.
fn residual(h: &[f64], r: &[f64], w: &[f64], t: &[f64], out: &mut Vec<f64>) -> f64 {
    out.clear();
    out.extend(h.iter().zip(t).map(|(a, b)| a - b));
    let s = dot(w, out);
    for ((e, wi), ri) in out.iter_mut().zip(w).zip(r) {
        *e += ri - s * wi;
    }
    s
}

pub fn triple_distance(model: &EmbeddingModel, triple: &Triple, norm: DistanceNorm) -> f64 {
    let mut e = Vec::with_capacity(model.dim());
    residual(
        model.entity(triple.head),
        model.translation(triple.relation),
        model.normal(triple.relation),
        model.entity(triple.tail),
        &mut e,
    );
    norm_of(&e, norm)
}

/// Hinge on a positive triple's distance: `max(0, d − γ)`.
pub fn positive_loss(distance: f64, margin: f64) -> f64 {
    (distance - margin).max(0.0)
}

/// Margin ranking loss on a (positive, corrupted) pair:
/// `max(0, f_pos + γ − f_neg)`.
pub fn margin_ranking_loss(f_pos: f64, f_neg: f64, margin: f64) -> f64 {
    (f_pos + margin - f_neg).max(0.0)
}

/// Distance of one triple and its gradients with respect to the four
/// parameter vectors involved.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGradient {
    pub distance: f64,
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub translation: Vec<f64>,
    pub normal: Vec<f64>,
}

/// Gradient of `‖δ − (wᵀδ)w + r‖` (δ = h − t). The subgradient at a zero
/// residual (L2) or zero coordinate (L1) is taken as 0.
pub fn distance_gradient(h: &[f64], r: &[f64], w: &[f64], t: &[f64], norm: DistanceNorm) -> TripleGradient {
    let mut e = Vec::with_capacity(h.len());
    let s = residual(h, r, w, t, &mut e);
    let distance = norm_of(&e, norm);
    // g = ∂d/∂e
    let g: Vec<f64> = match norm {
        DistanceNorm::L2 if distance > 0.0 => e.iter().map(|x| x / distance).collect(),
        DistanceNorm::L2 => vec![0.0; e.len()],
        DistanceNorm::L1 => e
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
            .collect(),
    };
    let gw = dot(&g, w);
    // ∂e/∂h = I − wwᵀ, ∂e/∂t = −(I − wwᵀ), ∂e/∂r = I,
    // ∂e/∂w applied to g: −(wᵀδ) g − (gᵀw) δ.
    let head: Vec<f64> = g.iter().zip(w).map(|(gi, wi)| gi - gw * wi).collect();
    let tail = head.iter().map(|x| -x).collect();
    let normal = g
        .iter()
        .zip(h.iter().zip(t))
        .map(|(gi, (hi, ti))| -(s * gi + gw * (hi - ti)))
        .collect();
    TripleGradient {
        distance,
        head,
        tail,
        translation: g,
        normal,
    }
}

/// `max(0, d − γ)` and, when the hinge is active (`d > γ`), its gradient.
pub fn positive_loss_gradient(
    h: &[f64],
    r: &[f64],
    w: &[f64],
    t: &[f64],
    margin: f64,
    norm: DistanceNorm,
) -> (f64, Option<TripleGradient>) {
    let grad = distance_gradient(h, r, w, t, norm);
    let loss = positive_loss(grad.distance, margin);
    if grad.distance > margin {
        (loss, Some(grad))
    } else {
        (0.0, None)
    }
}
