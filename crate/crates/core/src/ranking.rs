//! Per-individual rankings of unobserved zones.
//!
//! Embedding ranks count strictly smaller core-triple distances, so equal
//! distances share a rank. Hotness ranks are ordinal over all zones. The
//! combined ranking sums the two and re-ranks, bumping colliding sums until
//! they are free so that the result is a permutation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{DistanceNorm, EmbeddingModel};
use crate::error::{Error, Result};
use crate::tkg::{Triple, TripKnowledgeGraph};
use crate::trip_data::{TripRecord, VehicleId, ZoneId};

/// Which method produced a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKind {
    Embedding,
    Hotness,
    Combined,
    Random,
    MdUv,
    MdQr,
    MdSvd,
    CfUser,
    CfItem,
    Epr,
    Pepr,
}

impl RankKind {
    pub const ALL: [RankKind; 11] = [
        RankKind::Embedding,
        RankKind::Hotness,
        RankKind::Combined,
        RankKind::Random,
        RankKind::MdUv,
        RankKind::MdQr,
        RankKind::MdSvd,
        RankKind::CfUser,
        RankKind::CfItem,
        RankKind::Epr,
        RankKind::Pepr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RankKind::Embedding => "embedding",
            RankKind::Hotness => "hotness",
            RankKind::Combined => "combined",
            RankKind::Random => "random",
            RankKind::MdUv => "md_uv",
            RankKind::MdQr => "md_qr",
            RankKind::MdSvd => "md_svd",
            RankKind::CfUser => "cf_user",
            RankKind::CfItem => "cf_item",
            RankKind::Epr => "epr",
            RankKind::Pepr => "pepr",
        }
    }
}

impl fmt::Display for RankKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ranking kind `{s}`")))
    }
}

/// Predicted ranks of one individual's candidate zones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingTable {
    pub vehicle_id: VehicleId,
    pub kind: RankKind,
    pub entries: BTreeMap<ZoneId, u32>,
}

impl RankingTable {
    pub fn new(vehicle_id: VehicleId, kind: RankKind, entries: BTreeMap<ZoneId, u32>) -> Self {
        RankingTable {
            vehicle_id,
            kind,
            entries,
        }
    }

    pub fn rank(&self, zone: ZoneId) -> Option<u32> {
        self.entries.get(&zone).copied()
    }

    pub fn domain(&self) -> BTreeSet<ZoneId> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zones ordered by rank, ties by ascending zone id.
    pub fn ordered(&self) -> Vec<(ZoneId, u32)> {
        let mut v: Vec<(ZoneId, u32)> = self.entries.iter().map(|(z, r)| (*z, *r)).collect();
        v.sort_by_key(|&(z, r)| (r, z));
        v
    }
}

/// `1 + #{strictly smaller values}` for every key. Equal values share a rank.
pub fn strict_less_ranks<K: Ord + Copy>(values: &[(K, f64)]) -> BTreeMap<K, u32> {
    let mut sorted: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|&(k, v)| (k, 1 + sorted.partition_point(|&x| x < v) as u32))
        .collect()
}

/// Ordinal ranks `1..=n` by descending score, ties broken by ascending zone id.
pub fn ordinal_ranks_desc(scores: &[(ZoneId, f64)]) -> BTreeMap<ZoneId, u32> {
    let mut order: Vec<(ZoneId, f64)> = scores.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, (z, _))| (z, i as u32 + 1))
        .collect()
}

/// Core-triple distance `d(v, Choose_D, z)` for every unobserved zone.
pub fn core_distances(
    model: &EmbeddingModel,
    graph: &TripKnowledgeGraph,
    vehicle: &VehicleId,
    norm: DistanceNorm,
) -> Result<Vec<(ZoneId, f64)>> {
    let (head, relation) = graph.core_query(vehicle)?;
    graph
        .unobserved_zones(vehicle)?
        .into_iter()
        .map(|z| {
            let tail = graph
                .zone_entity(z)
                .ok_or_else(|| Error::Data(format!("zone {z} is not registered in the graph")))?;
            Ok((z, model.distance(&Triple { head, relation, tail }, norm)))
        })
        .collect()
}

pub fn embedding_ranking(
    model: &EmbeddingModel,
    graph: &TripKnowledgeGraph,
    vehicle: &VehicleId,
    norm: DistanceNorm,
) -> Result<RankingTable> {
    let distances = core_distances(model, graph, vehicle, norm)?;
    Ok(RankingTable::new(vehicle.clone(), RankKind::Embedding, strict_less_ranks(&distances)))
}

/// Embedding rankings for every vehicle of the graph, in vehicle order.
pub fn rank_all(model: &EmbeddingModel, graph: &TripKnowledgeGraph, norm: DistanceNorm) -> Result<Vec<RankingTable>> {
    let vehicles: Vec<&VehicleId> = graph.vehicles().collect();
    vehicles
        .par_iter()
        .map(|v| embedding_ranking(model, graph, v, norm))
        .collect()
}

/// Visit counts over the observation window and the derived ordinal ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotnessTable {
    counts: BTreeMap<ZoneId, u64>,
    ranks: BTreeMap<ZoneId, u32>,
}

impl HotnessTable {
    pub fn from_counts(counts: BTreeMap<ZoneId, u64>) -> Self {
        let scores: Vec<(ZoneId, f64)> = counts.iter().map(|(z, c)| (*z, *c as f64)).collect();
        HotnessTable {
            ranks: ordinal_ranks_desc(&scores),
            counts,
        }
    }

    pub fn counts(&self) -> &BTreeMap<ZoneId, u64> {
        &self.counts
    }

    pub fn ranks(&self) -> &BTreeMap<ZoneId, u32> {
        &self.ranks
    }

    pub fn rank(&self, zone: ZoneId) -> Option<u32> {
        self.ranks.get(&zone).copied()
    }

    /// Hotness order restricted to `domain` and renumbered `1..=|domain|`,
    /// used when hotness alone serves as an individual's predictor.
    pub fn table_for(&self, vehicle: &VehicleId, domain: &BTreeSet<ZoneId>) -> Result<RankingTable> {
        let mut kept: Vec<(u32, ZoneId)> = Vec::with_capacity(domain.len());
        for z in domain {
            let r = self.rank(*z).ok_or_else(|| Error::DomainMismatch(vehicle.to_string()))?;
            kept.push((r, *z));
        }
        kept.sort_unstable();
        let entries = kept.into_iter().enumerate().map(|(i, (_, z))| (z, i as u32 + 1)).collect();
        Ok(RankingTable::new(vehicle.clone(), RankKind::Hotness, entries))
    }
}

/// Counts destination visits of `targets` (all vehicles when `None`) over
/// every zone of `zones`.
pub fn hotness_ranking(
    observed: &[TripRecord],
    targets: Option<&BTreeSet<VehicleId>>,
    zones: &BTreeSet<ZoneId>,
) -> HotnessTable {
    let mut counts: BTreeMap<ZoneId, u64> = zones.iter().map(|z| (*z, 0)).collect();
    for r in observed {
        if targets.is_some_and(|t| !t.contains(&r.vehicle_id)) {
            continue;
        }
        *counts.entry(r.tzone).or_insert(0) += 1;
    }
    HotnessTable::from_counts(counts)
}

/// Sums two rank maps over the same domain, processing zones in ascending id
/// and bumping each sum by one until it is unused, then re-ranks the sums.
pub fn combine_ranks(
    vehicle: &VehicleId,
    first: &BTreeMap<ZoneId, u32>,
    second: &BTreeMap<ZoneId, u32>,
) -> Result<BTreeMap<ZoneId, u32>> {
    if first.len() != second.len() || !first.keys().eq(second.keys()) {
        return Err(Error::DomainMismatch(vehicle.to_string()));
    }
    let mut used: BTreeSet<u64> = BTreeSet::new();
    let mut sums: Vec<(ZoneId, f64)> = Vec::with_capacity(first.len());
    for (zone, a) in first {
        let mut sum = u64::from(*a) + u64::from(second[zone]);
        while !used.insert(sum) {
            sum += 1;
        }
        sums.push((*zone, sum as f64));
    }
    Ok(strict_less_ranks(&sums))
}

/// Combined ranking of an embedding table with global hotness ranks.
pub fn combined_ranking(embedding: &RankingTable, hotness: &HotnessTable) -> Result<RankingTable> {
    let combined = combine_with_hotness(embedding, hotness)?;
    Ok(RankingTable::new(embedding.vehicle_id.clone(), RankKind::Combined, combined))
}

pub(crate) fn combine_with_hotness(table: &RankingTable, hotness: &HotnessTable) -> Result<BTreeMap<ZoneId, u32>> {
    let hot: BTreeMap<ZoneId, u32> = table
        .entries
        .keys()
        .map(|z| {
            hotness
                .rank(*z)
                .map(|r| (*z, r))
                .ok_or_else(|| Error::DomainMismatch(table.vehicle_id.to_string()))
        })
        .collect::<Result<_>>()?;
    combine_ranks(&table.vehicle_id, &table.entries, &hot)
}

pub const RANKING_HEADER: &str = "vehicle_id,zone_id,rank_kind,rank";

/// Serializes tables as `vehicle_id,zone_id,rank_kind,rank` rows.
pub fn write_rankings(tables: &[RankingTable]) -> String {
    let mut out = String::from(RANKING_HEADER);
    out.push('\n');
    for t in tables {
        for (z, r) in &t.entries {
            out.push_str(&format!("{},{},{},{}\n", t.vehicle_id, z, t.kind, r));
        }
    }
    out
}

pub fn parse_rankings(text: &str) -> Result<Vec<RankingTable>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut tables: BTreeMap<(VehicleId, RankKind), BTreeMap<ZoneId, u32>> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::MalformedRow { line, message };
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", row.len())));
        }
        let zone: ZoneId = row[1].parse().map_err(|_| bad(format!("bad zone `{}`", &row[1])))?;
        let kind: RankKind = row[2].parse()?;
        let rank: u32 = row[3].parse().map_err(|_| bad(format!("bad rank `{}`", &row[3])))?;
        tables
            .entry((VehicleId::new(&row[0]), kind))
            .or_default()
            .insert(zone, rank);
    }
    Ok(tables
        .into_iter()
        .map(|((v, k), entries)| RankingTable::new(v, k, entries))
        .collect())
}
