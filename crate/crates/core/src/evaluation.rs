//! Rank distributions and the metric suite.
//!
//! `U` pools the predicted ranks of every true potential destination over a
//! fixed support `1..=R` and normalizes them; `H` holds one mean rank per
//! individual. Metrics are computed from `U`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::RankingTable;
use crate::trip_data::{VehicleId, ZoneId};
use crate::util::fmt_f64;

/// Predicted ranks of one individual's potential destinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PotentialRanks {
    pub vehicle_id: VehicleId,
    pub ranks: Vec<u32>,
    /// Size of the ranked domain, `|Z − Z^o_n|`.
    pub domain_size: usize,
}

/// Looks up every potential destination in its individual's table.
///
/// Individuals without a table are skipped. A potential destination missing
/// from the table is an error, since every unobserved zone must be ranked.
pub fn potential_ranks(
    tables: &[RankingTable],
    potentials: &BTreeMap<VehicleId, BTreeSet<ZoneId>>,
) -> Result<Vec<PotentialRanks>> {
    let mut out = Vec::with_capacity(tables.len());
    for t in tables {
        let Some(zones) = potentials.get(&t.vehicle_id) else {
            continue;
        };
        let ranks = zones
            .iter()
            .map(|z| {
                t.rank(*z).ok_or_else(|| {
                    Error::Data(format!("potential destination {z} of {} has no rank", t.vehicle_id))
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        out.push(PotentialRanks {
            vehicle_id: t.vehicle_id.clone(),
            ranks,
            domain_size: t.len(),
        });
    }
    Ok(out)
}

/// Normalized histogram of potential-destination ranks over `1..=support`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionU {
    pub counts: Vec<u64>,
    pub mass: Vec<f64>,
    pub sample_count: u64,
}

impl DistributionU {
    pub fn support(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_count == 0
    }

    /// `p^U(i)` for a 1-based rank.
    pub fn p(&self, rank: usize) -> f64 {
        self.mass[rank - 1]
    }
}

pub fn aggregate_u(results: &[PotentialRanks], support: usize) -> Result<DistributionU> {
    let mut counts = vec![0u64; support];
    for r in results {
        for &rank in &r.ranks {
            let slot = (rank as usize)
                .checked_sub(1)
                .filter(|&i| i < support)
                .ok_or_else(|| Error::Data(format!("rank {rank} of {} outside 1..={support}", r.vehicle_id)))?;
            counts[slot] += 1;
        }
    }
    let sample_count: u64 = counts.iter().sum();
    let mass = if sample_count == 0 {
        vec![0.0; support]
    } else {
        counts.iter().map(|&c| c as f64 / sample_count as f64).collect()
    };
    Ok(DistributionU {
        counts,
        mass,
        sample_count,
    })
}

/// Per-individual mean rank and its histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionH {
    pub means: Vec<(VehicleId, f64)>,
    pub bin_width: f64,
    /// `(lower edge, count)` with bins `[1 + k·w, 1 + (k+1)·w)`.
    pub histogram: Vec<(f64, u64)>,
}

pub fn individual_h(results: &[PotentialRanks], support: usize, bin_width: f64) -> Result<DistributionH> {
    if !(bin_width > 0.0) {
        return Err(Error::Config(format!("histogram bin width must be positive, got {bin_width}")));
    }
    let means: Vec<(VehicleId, f64)> = results
        .iter()
        .filter(|r| !r.ranks.is_empty())
        .map(|r| {
            let sum: u64 = r.ranks.iter().map(|&x| u64::from(x)).sum();
            (r.vehicle_id.clone(), sum as f64 / r.ranks.len() as f64)
        })
        .collect();
    let bins = ((support.max(1) - 1) as f64 / bin_width).floor() as usize + 1;
    let mut histogram: Vec<(f64, u64)> = (0..bins).map(|k| (1.0 + k as f64 * bin_width, 0)).collect();
    for (_, m) in &means {
        let k = (((m - 1.0) / bin_width).floor().max(0.0) as usize).min(bins - 1);
        histogram[k].1 += 1;
    }
    Ok(DistributionH {
        means,
        bin_width,
        histogram,
    })
}

/// Which ranks enter the rank correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSupport {
    /// Every rank `1..=R`, zero-mass ranks included.
    #[default]
    Full,
    /// Only ranks with nonzero mass.
    Nonzero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Set when the mass sequence is constant and `rho` is 0 by convention.
    pub degenerate: bool,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation between `i` and `p^U(i)`.
pub fn spearman_rho(u: &DistributionU, support: RhoSupport) -> Result<Spearman> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = u
        .mass
        .iter()
        .enumerate()
        .filter(|(_, &m)| support == RhoSupport::Full || m > 0.0)
        .map(|(i, &m)| ((i + 1) as f64, m))
        .unzip();
    spearman_of(&xs, &ys)
}

/// Spearman correlation of two equally long sequences.
pub fn spearman_of(xs: &[f64], ys: &[f64]) -> Result<Spearman> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Data(format!(
            "rank correlation needs at least two points, got {}",
            xs.len().min(ys.len())
        )));
    }
    Ok(match pearson(&average_ranks(xs), &average_ranks(ys)) {
        Some(rho) => Spearman { rho, degenerate: false },
        None => Spearman {
            rho: 0.0,
            degenerate: true,
        },
    })
}

/// `i'` for each rank `i`: the position of `p^U(i)` in descending order,
/// ties by ascending `i`. Index 0 holds `i = 1`.
pub fn value_ranks(u: &DistributionU) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.support()).collect();
    order.sort_by(|&a, &b| u.mass[b].total_cmp(&u.mass[a]).then(a.cmp(&b)));
    let mut out = vec![0; u.support()];
    for (pos, i) in order.into_iter().enumerate() {
        out[i] = pos + 1;
    }
    out
}

/// `D_f = Σ |i' − i|`.
pub fn confusion_degree(u: &DistributionU) -> u64 {
    value_ranks(u)
        .into_iter()
        .enumerate()
        .map(|(i, ip)| (ip as i64 - (i as i64 + 1)).unsigned_abs())
        .sum()
}

/// `D_c(k)`: share of the mass on ranks `1..=k`.
pub fn concentration_degree(u: &DistributionU, k: usize) -> Result<f64> {
    if k == 0 || k > u.support() {
        return Err(Error::KOutOfRange { k, max: u.support() });
    }
    if u.is_empty() {
        return Err(Error::Data("no potential destinations to evaluate".into()));
    }
    let head: u64 = u.counts[..k].iter().sum();
    Ok(head as f64 / u.sample_count as f64)
}

/// Pooled recall@k computed directly from the per-individual ranks.
pub fn pooled_recall(results: &[PotentialRanks], k: usize) -> f64 {
    let (hit, total) = results.iter().flat_map(|r| &r.ranks).fold((0u64, 0u64), |(h, t), &r| {
        (h + u64::from(r as usize <= k), t + 1)
    });
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Expected `D_c(k)` of a uniform random ranking, averaged over pooled pairs.
pub fn uniform_concentration(results: &[PotentialRanks], k: usize) -> f64 {
    let (sum, n) = results.iter().fold((0.0, 0usize), |(s, n), r| {
        let e = if r.domain_size == 0 {
            0.0
        } else {
            (k as f64 / r.domain_size as f64).min(1.0)
        };
        (s + e * r.ranks.len() as f64, n + r.ranks.len())
    });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub k_values: Vec<usize>,
    pub h_bin_width: f64,
    pub rho_support: RhoSupport,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            k_values: vec![1, 5, 8, 10, 20],
            h_bin_width: 2.0,
            rho_support: RhoSupport::Full,
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.contains(&0) {
            return Err(Error::Config("k values must be at least 1".into()));
        }
        if !(self.h_bin_width > 0.0) {
            return Err(Error::Config("h_bin_width must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar results of one evaluated ranking method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub support: usize,
    pub rho_support: RhoSupport,
    pub spearman_rho: Option<f64>,
    pub rho_degenerate: bool,
    pub confusion_degree: u64,
    /// `D_c(k)` keyed by `k`.
    pub concentration: BTreeMap<usize, f64>,
    /// Uniform-random expectation of `D_c(k)` on the same pairs.
    pub uniform_concentration: BTreeMap<usize, f64>,
    pub sample_count: u64,
    pub individuals_ranked: usize,
    pub individuals_with_potential: usize,
    pub mean_individual_rank: Option<f64>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub u: DistributionU,
    pub h: DistributionH,
    pub report: EvalReport,
}

pub fn evaluate_ranks(
    method: &str,
    results: &[PotentialRanks],
    support: usize,
    cfg: &EvaluateConfig,
    config_echo: serde_json::Value,
) -> Result<Evaluation> {
    cfg.validate()?;
    let u = aggregate_u(results, support)?;
    let h = individual_h(results, support, cfg.h_bin_width)?;
    let (spearman_rho, rho_degenerate) = if u.is_empty() || support < 2 {
        (None, false)
    } else {
        match spearman_rho(&u, cfg.rho_support) {
            Ok(s) => (Some(s.rho), s.degenerate),
            Err(_) => (None, true),
        }
    };
    let mut concentration = BTreeMap::new();
    let mut uniform = BTreeMap::new();
    if !u.is_empty() {
        for &k in &cfg.k_values {
            concentration.insert(k, concentration_degree(&u, k)?);
            uniform.insert(k, uniform_concentration(results, k));
        }
    }
    let mean_individual_rank =
        (!h.means.is_empty()).then(|| h.means.iter().map(|(_, m)| m).sum::<f64>() / h.means.len() as f64);
    let report = EvalReport {
        method: method.to_owned(),
        support,
        rho_support: cfg.rho_support,
        spearman_rho,
        rho_degenerate,
        confusion_degree: confusion_degree(&u),
        concentration,
        uniform_concentration: uniform,
        sample_count: u.sample_count,
        individuals_ranked: results.len(),
        individuals_with_potential: h.means.len(),
        mean_individual_rank,
        config: config_echo,
    };
    Ok(Evaluation { u, h, report })
}

pub fn evaluate_tables(
    method: &str,
    tables: &[RankingTable],
    potentials: &BTreeMap<VehicleId, BTreeSet<ZoneId>>,
    support: usize,
    cfg: &EvaluateConfig,
    config_echo: serde_json::Value,
) -> Result<Evaluation> {
    let results = potential_ranks(tables, potentials)?;
    evaluate_ranks(method, &results, support, cfg, config_echo)
}

pub fn write_u(u: &DistributionU) -> String {
    let mut out = String::from("rank,mass\n");
    for (i, m) in u.mass.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, fmt_f64(*m)));
    }
    out
}

pub fn write_h(h: &DistributionH) -> String {
    let mut out = String::from("bin,count\n");
    for (edge, c) in &h.histogram {
        out.push_str(&format!("{edge},{c}\n"));
    }
    out
}

/// The `i → i'` table behind the confusion degree.
pub fn write_confusion_table(u: &DistributionU) -> String {
    let mut out = String::from("i,i_prime\n");
    for (i, ip) in value_ranks(u).into_iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, ip));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u_from_mass(mass: &[f64]) -> DistributionU {
        DistributionU {
            counts: mass.iter().map(|m| (m * 1000.0).round() as u64).collect(),
            mass: mass.to_vec(),
            sample_count: mass.iter().map(|m| (m * 1000.0).round() as u64).sum(),
        }
    }

    fn pr(v: &str, ranks: &[u32], domain: usize) -> PotentialRanks {
        PotentialRanks {
            vehicle_id: VehicleId::new(v),
            ranks: ranks.to_vec(),
            domain_size: domain,
        }
    }

    #[test]
    fn aggregate_counts_pairs() {
        let u = aggregate_u(&[pr("a", &[2], 5), pr("b", &[2, 4], 5)], 5).unwrap();
        assert!((u.p(2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((u.p(4) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(u.sample_count, 3);
        assert!((u.mass.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        let empty = aggregate_u(&[pr("a", &[], 5)], 5).unwrap();
        assert!(empty.is_empty());
        assert!(aggregate_u(&[pr("a", &[6], 5)], 5).is_err());
    }

    #[test]
    fn worked_example_ranks_contribute() {
        let u = aggregate_u(&[pr("n", &[2, 44, 134], 200)], 200).unwrap();
        assert_eq!(u.counts[1] + u.counts[43] + u.counts[133], 3);
        let h = individual_h(&[pr("n", &[2, 44, 134], 200)], 200, 2.0).unwrap();
        assert_eq!(h.means[0].1, 60.0);
    }

    #[test]
    fn individual_means_and_histogram() {
        let h = individual_h(&[pr("a", &[7], 20)], 20, 2.0).unwrap();
        assert_eq!(h.means, vec![(VehicleId::new("a"), 7.0)]);
        let h = individual_h(&[pr("a", &[10], 30), pr("b", &[20], 30), pr("c", &[], 30)], 30, 2.0).unwrap();
        assert_eq!(h.means.len(), 2);
        let nonzero: Vec<f64> = h.histogram.iter().filter(|(_, c)| *c > 0).map(|(e, _)| *e).collect();
        assert_eq!(nonzero, vec![9.0, 19.0]);
    }

    #[test]
    fn spearman_examples() {
        let s = spearman_rho(&u_from_mass(&[0.4, 0.3, 0.2, 0.1]), RhoSupport::Full).unwrap();
        assert!((s.rho + 1.0).abs() < 1e-12);
        let s = spearman_rho(&u_from_mass(&[0.1, 0.2, 0.3, 0.4]), RhoSupport::Full).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-12);
        let s = spearman_rho(&u_from_mass(&[0.5, 0.2, 0.3]), RhoSupport::Full).unwrap();
        assert!((s.rho + 0.5).abs() < 1e-12);
        let s = spearman_rho(&u_from_mass(&[0.25; 4]), RhoSupport::Full).unwrap();
        assert_eq!((s.rho, s.degenerate), (0.0, true));
    }

    #[test]
    fn nonzero_support_drops_empty_ranks() {
        let u = u_from_mass(&[0.5, 0.3, 0.2, 0.0, 0.0, 0.0]);
        let s = spearman_rho(&u, RhoSupport::Nonzero).unwrap();
        assert!((s.rho + 1.0).abs() < 1e-12);
        let full = spearman_rho(&u, RhoSupport::Full).unwrap();
        assert!(full.rho > -1.0);
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion_degree(&u_from_mass(&[0.5, 0.3, 0.2])), 0);
        assert_eq!(confusion_degree(&u_from_mass(&[0.2, 0.3, 0.5])), 4);
        assert_eq!(value_ranks(&u_from_mass(&[0.2, 0.3, 0.5])), vec![3, 2, 1]);
        // Ties keep ascending i.
        assert_eq!(value_ranks(&u_from_mass(&[0.0, 0.5, 0.0, 0.5])), vec![3, 1, 4, 2]);
    }

    #[test]
    fn concentration_examples() {
        let u = u_from_mass(&[0.5, 0.3, 0.2]);
        assert!((concentration_degree(&u, 2).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(concentration_degree(&u, 3).unwrap(), 1.0);
        assert!(matches!(concentration_degree(&u, 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(concentration_degree(&u, 4), Err(Error::KOutOfRange { k: 4, max: 3 })));
        let results = [pr("a", &[1, 3], 3), pr("b", &[1, 2], 3)];
        let u = aggregate_u(&results, 3).unwrap();
        assert_eq!(concentration_degree(&u, 1).unwrap(), pooled_recall(&results, 1));
    }

    #[test]
    fn report_writers_are_stable() {
        let results = [pr("a", &[1, 3], 4), pr("b", &[1], 4)];
        let e = evaluate_ranks("embedding", &results, 4, &EvaluateConfig { k_values: vec![1, 2], ..Default::default() }, serde_json::Value::Null).unwrap();
        assert_eq!(write_u(&e.u), "rank,mass\n1,0.666666666667\n2,0\n3,0.333333333333\n4,0\n");
        assert_eq!(write_confusion_table(&e.u), "i,i_prime\n1,1\n2,3\n3,2\n4,4\n");
        assert_eq!(e.report.confusion_degree, 2);
        assert_eq!(e.report.individuals_with_potential, 2);
        assert_eq!(e.report.uniform_concentration[&1], 0.25);
        assert_eq!(write_h(&e.h), "bin,count\n1,2\n3,0\n");
    }

    fn brute_confusion(mass: &[f64]) -> u64 {
        // i' = 1 + #{j : p_j > p_i} + #{j < i : p_j = p_i}
        (0..mass.len())
            .map(|i| {
                let ip = 1
                    + (0..mass.len()).filter(|&j| mass[j] > mass[i]).count()
                    + (0..i).filter(|&j| mass[j] == mass[i]).count();
                (ip as i64 - i as i64 - 1).unsigned_abs()
            })
            .sum()
    }

    proptest! {
        #[test]
        fn confusion_matches_brute_force(counts in prop::collection::vec(0u64..6, 1..12)) {
            let total: u64 = counts.iter().sum::<u64>().max(1);
            let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            let u = DistributionU { counts: counts.clone(), mass: mass.clone(), sample_count: total };
            prop_assert_eq!(confusion_degree(&u), brute_confusion(&mass));
            let scaled = DistributionU { mass: mass.iter().map(|m| m * 7.5).collect(), ..u.clone() };
            prop_assert_eq!(confusion_degree(&scaled), confusion_degree(&u));
            let non_increasing = mass.windows(2).all(|w| w[0] >= w[1]);
            prop_assert_eq!(confusion_degree(&u) == 0, non_increasing);
        }

        #[test]
        fn concentration_is_monotone_and_matches_recall(
            raw in prop::collection::vec(prop::collection::vec(1u32..=10, 0..5), 1..20)
        ) {
            let results: Vec<PotentialRanks> = raw.iter().enumerate().map(|(i, r)| pr(&i.to_string(), r, 10)).collect();
            let u = aggregate_u(&results, 10).unwrap();
            prop_assume!(!u.is_empty());
            let mut prev = 0.0;
            for k in 1..=10 {
                let d = concentration_degree(&u, k).unwrap();
                prop_assert!(d >= prev && (0.0..=1.0).contains(&d));
                prop_assert_eq!(d, pooled_recall(&results, k));
                prev = d;
            }
            prop_assert_eq!(prev, 1.0);
        }

        #[test]
        fn spearman_is_bounded(mass in prop::collection::vec(0.0f64..1.0, 2..30)) {
            let u = u_from_mass(&mass);
            let s = spearman_rho(&u, RhoSupport::Full).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s.rho));
        }

        #[test]
        fn h_means_within_support(raw in prop::collection::vec(prop::collection::vec(1u32..=15, 1..5), 1..10)) {
            let results: Vec<PotentialRanks> = raw.iter().enumerate().map(|(i, r)| pr(&i.to_string(), r, 15)).collect();
            let h = individual_h(&results, 15, 2.0).unwrap();
            prop_assert!(h.means.iter().all(|(_, m)| (1.0..=15.0).contains(m)));
            prop_assert_eq!(h.histogram.iter().map(|(_, c)| c).sum::<u64>(), results.len() as u64);
        }
    }
}
