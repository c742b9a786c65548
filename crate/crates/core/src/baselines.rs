//! Reference rankers that share the ranking-table contract.
//!
//! All methods rank `Z − Z^o_n` with ordinal ranks `1..=|Z − Z^o_n|`; equal
//! scores fall back to ascending zone id.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::PotentialRanks;
use crate::ranking::{combine_with_hotness, ordinal_ranks_desc, HotnessTable, RankKind, RankingTable};
use crate::trip_data::{TripRecord, VehicleId, ZoneId};
use crate::util::fnv1a;

/// Individual × zone trip counts over the observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitMatrix {
    vehicles: Vec<VehicleId>,
    zones: Vec<ZoneId>,
    counts: DMatrix<f64>,
}

impl VisitMatrix {
    /// Rows follow `vehicles` order; records of other vehicles are ignored.
    pub fn from_records(
        observed: &[TripRecord],
        vehicles: &BTreeSet<VehicleId>,
        zones: &BTreeSet<ZoneId>,
    ) -> Result<Self> {
        let vehicles: Vec<VehicleId> = vehicles.iter().cloned().collect();
        let zones: Vec<ZoneId> = zones.iter().copied().collect();
        let mut counts = DMatrix::zeros(vehicles.len(), zones.len());
        for r in observed {
            let Ok(row) = vehicles.binary_search(&r.vehicle_id) else {
                continue;
            };
            let col = zones
                .binary_search(&r.tzone)
                .map_err(|_| Error::UnknownZone { line: 0, zone: r.tzone })?;
            counts[(row, col)] += 1.0;
        }
        Ok(VisitMatrix {
            vehicles,
            zones,
            counts,
        })
    }

    pub fn from_dense(vehicles: Vec<VehicleId>, zones: Vec<ZoneId>, counts: DMatrix<f64>) -> Result<Self> {
        if counts.shape() != (vehicles.len(), zones.len()) {
            return Err(Error::Data("visit matrix shape does not match its labels".into()));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Data("visit counts must be finite and nonnegative".into()));
        }
        Ok(VisitMatrix {
            vehicles,
            zones,
            counts,
        })
    }

    pub fn vehicles(&self) -> &[VehicleId] {
        &self.vehicles
    }

    pub fn zones(&self) -> &[ZoneId] {
        &self.zones
    }

    pub fn counts(&self) -> &DMatrix<f64> {
        &self.counts
    }

    /// `Z − Z^o_n` for row `row`.
    pub fn unobserved(&self, row: usize) -> BTreeSet<ZoneId> {
        self.zones
            .iter()
            .enumerate()
            .filter(|(c, _)| self.counts[(row, *c)] == 0.0)
            .map(|(_, z)| *z)
            .collect()
    }

    /// Ranks each row's unobserved zones by descending score.
    fn rank_rows(&self, scores: &DMatrix<f64>, kind: RankKind) -> Vec<RankingTable> {
        (0..self.vehicles.len())
            .map(|row| {
                let candidates: Vec<(ZoneId, f64)> = self
                    .zones
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| self.counts[(row, *c)] == 0.0)
                    .map(|(c, z)| (*z, scores[(row, c)]))
                    .collect();
                RankingTable::new(self.vehicles[row].clone(), kind, ordinal_ranks_desc(&candidates))
            })
            .collect()
    }
}

/// Uniform random permutation of `domain`, seeded per vehicle.
pub fn random_ranking(vehicle: &VehicleId, domain: &BTreeSet<ZoneId>, seed: u64) -> RankingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(vehicle.as_str().as_bytes()));
    let mut zones: Vec<ZoneId> = domain.iter().copied().collect();
    zones.shuffle(&mut rng);
    let entries = zones.into_iter().enumerate().map(|(i, z)| (z, i as u32 + 1)).collect();
    RankingTable::new(vehicle.clone(), RankKind::Random, entries)
}

pub fn random_rankings(matrix: &VisitMatrix, seed: u64) -> Vec<RankingTable> {
    matrix
        .vehicles
        .iter()
        .enumerate()
        .map(|(row, v)| random_ranking(v, &matrix.unobserved(row), seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MdMethod {
    Uv,
    Qr,
    Svd,
}

impl MdMethod {
    fn name(self) -> &'static str {
        match self {
            MdMethod::Uv => "UV",
            MdMethod::Qr => "QR",
            MdMethod::Svd => "SVD",
        }
    }

    fn kind(self) -> RankKind {
        match self {
            MdMethod::Uv => RankKind::MdUv,
            MdMethod::Qr => RankKind::MdQr,
            MdMethod::Svd => RankKind::MdSvd,
        }
    }
}

const ALS_ITERATIONS: usize = 200;
const SOLVE_EPS: f64 = 1e-12;

/// Rank-`k` reconstruction of `m`.
///
/// `Svd` truncates the singular value decomposition, `Qr` truncates a
/// column-pivoted QR factorization, and `Uv` runs alternating least squares
/// from a seeded uniform start.
pub fn md_reconstruct(m: &DMatrix<f64>, method: MdMethod, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let fail = |reason: String| Error::Decomposition {
        method: method.name(),
        reason,
    };
    let (rows, cols) = m.shape();
    let full = rows.min(cols);
    if full == 0 {
        return Err(fail("empty matrix".into()));
    }
    if k == 0 || k > full {
        return Err(fail(format!("rank {k} outside 1..={full}")));
    }
    let out = match method {
        MdMethod::Svd => {
            let svd = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
                .ok_or_else(|| fail("singular value iteration did not converge".into()))?;
            let u = svd.u.as_ref().expect("requested").columns(0, k).into_owned();
            let vt = svd.v_t.as_ref().expect("requested").rows(0, k).into_owned();
            let s = DMatrix::from_diagonal(&svd.singular_values.rows(0, k).into_owned());
            u * s * vt
        }
        MdMethod::Qr => {
            let qr = m.clone().col_piv_qr();
            let q = qr.q().columns(0, k).into_owned();
            let r = qr.r().rows(0, k).into_owned();
            let mut recon = q * r;
            qr.p().inv_permute_columns(&mut recon);
            recon
        }
        MdMethod::Uv => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Uniform::new(0.0, 1.0).expect("valid range");
            let mut v = DMatrix::from_fn(cols, k, |_, _| dist.sample(&mut rng));
            let mut u = DMatrix::zeros(rows, k);
            let mut prev = f64::INFINITY;
            for _ in 0..ALS_ITERATIONS {
                // Least-squares solves: min ‖V Uᵀ − Mᵀ‖ then min ‖U Vᵀ − M‖.
                u = v
                    .clone()
                    .svd(true, true)
                    .solve(&m.transpose(), SOLVE_EPS)
                    .map_err(|e| fail(e.to_string()))?
                    .transpose();
                v = u
                    .clone()
                    .svd(true, true)
                    .solve(m, SOLVE_EPS)
                    .map_err(|e| fail(e.to_string()))?
                    .transpose();
                let err = (m - &u * v.transpose()).norm();
                if (prev - err).abs() <= 1e-13 * (1.0 + err) {
                    break;
                }
                prev = err;
            }
            u * v.transpose()
        }
    };
    if out.iter().any(|x| !x.is_finite()) {
        return Err(fail("non-finite reconstruction".into()));
    }
    Ok(out)
}

pub fn md_ranking(matrix: &VisitMatrix, method: MdMethod, rank: usize, seed: u64) -> Result<Vec<RankingTable>> {
    let recon = md_reconstruct(&matrix.counts, method, rank, seed)?;
    Ok(matrix.rank_rows(&recon, method.kind()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfMode {
    User,
    Item,
}

/// CF rankings plus the vehicles that had no trips and got tie-break order.
#[derive(Debug, Clone, PartialEq)]
pub struct CfOutcome {
    pub tables: Vec<RankingTable>,
    pub fallback: Vec<VehicleId>,
}

/// Cosine similarity between the rows of `m`.
fn row_cosine(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norms: Vec<f64> = m.row_iter().map(|r| r.norm()).collect();
    let gram = m * m.transpose();
    DMatrix::from_fn(m.nrows(), m.nrows(), |i, j| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            gram[(i, j)] / (norms[i] * norms[j])
        }
    })
}

/// Indices of the `k` most similar positive neighbors of `i`, ties by index.
fn neighbors(sim: &DMatrix<f64>, i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..sim.ncols()).filter(|&j| j != i && sim[(i, j)] > 0.0).collect();
    cand.sort_by(|&a, &b| sim[(i, b)].total_cmp(&sim[(i, a)]).then(a.cmp(&b)));
    cand.truncate(k);
    cand
}

/// Neighborhood collaborative filtering with cosine similarity on counts.
pub fn cf_ranking(matrix: &VisitMatrix, mode: CfMode, k_neighbors: usize) -> Result<CfOutcome> {
    if k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    let m = &matrix.counts;
    let (rows, cols) = m.shape();
    let mut scores = DMatrix::zeros(rows, cols);
    match mode {
        CfMode::User => {
            let sim = row_cosine(m);
            for u in 0..rows {
                let nb = neighbors(&sim, u, k_neighbors);
                let weight: f64 = nb.iter().map(|&v| sim[(u, v)]).sum();
                if weight == 0.0 {
                    continue;
                }
                for z in 0..cols {
                    scores[(u, z)] = nb.iter().map(|&v| sim[(u, v)] * m[(v, z)]).sum::<f64>() / weight;
                }
            }
        }
        CfMode::Item => {
            let sim = row_cosine(&m.transpose());
            let item_neighbors: Vec<Vec<usize>> = (0..cols).map(|z| neighbors(&sim, z, k_neighbors)).collect();
            for u in 0..rows {
                for z in 0..cols {
                    let nb = &item_neighbors[z];
                    let weight: f64 = nb.iter().map(|&y| sim[(z, y)]).sum();
                    if weight > 0.0 {
                        scores[(u, z)] = nb.iter().map(|&y| sim[(z, y)] * m[(u, y)]).sum::<f64>() / weight;
                    }
                }
            }
        }
    }
    let fallback = (0..rows)
        .filter(|&r| m.row(r).iter().all(|&c| c == 0.0))
        .map(|r| matrix.vehicles[r].clone())
        .collect();
    let kind = match mode {
        CfMode::User => RankKind::CfUser,
        CfMode::Item => RankKind::CfItem,
    };
    Ok(CfOutcome {
        tables: matrix.rank_rows(&scores, kind),
        fallback,
    })
}

/// Zone center coordinates in degrees.
pub type Coordinates = BTreeMap<ZoneId, (f64, f64)>;

/// Parses `zone_id,lat,lon` rows (header optional).
pub fn parse_coords(text: &str) -> Result<Coordinates> {
    let mut out = Coordinates::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |message: String| Error::MalformedRow {
            line: i as u64 + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(bad("expected `zone_id,lat,lon`".into()));
        }
        let Ok(zone) = fields[0].parse::<ZoneId>() else {
            if i == 0 {
                continue;
            }
            return Err(bad(format!("bad zone `{}`", fields[0])));
        };
        let lat: f64 = fields[1].parse().map_err(|_| bad(format!("bad latitude `{}`", fields[1])))?;
        let lon: f64 = fields[2].parse().map_err(|_| bad(format!("bad longitude `{}`", fields[2])))?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(bad(format!("coordinates ({lat}, {lon}) out of range")));
        }
        out.insert(zone, (lat, lon));
    }
    Ok(out)
}

pub fn write_coords(coords: &Coordinates) -> String {
    let mut out = String::from("zone_id,lat,lon\n");
    for (z, (lat, lon)) in coords {
        out.push_str(&format!("{z},{lat:.6},{lon:.6}\n"));
    }
    out
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

fn coord(coords: &Coordinates, z: ZoneId) -> Result<(f64, f64)> {
    coords.get(&z).copied().ok_or(Error::MissingCoordinate(z))
}

/// Binned distribution of origin-destination center distances. Bin `k`
/// covers `[(k − ½)·w, (k + ½)·w)`, so bin 0 holds intra-zone trips.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSizeDistribution {
    pub bin_width_m: f64,
    pub mass: Vec<f64>,
    pub sample_count: usize,
}

impl JumpSizeDistribution {
    pub fn bin(&self, distance_m: f64) -> usize {
        (distance_m / self.bin_width_m).round() as usize
    }

    /// `p^J` of the bin containing `distance_m`.
    pub fn p(&self, distance_m: f64) -> f64 {
        self.mass.get(self.bin(distance_m)).copied().unwrap_or(0.0)
    }
}

pub fn jump_size_distribution(
    observed: &[TripRecord],
    coords: &Coordinates,
    bin_width_m: f64,
) -> Result<JumpSizeDistribution> {
    if !(bin_width_m > 0.0) {
        return Err(Error::Config("jump-size bin width must be positive".into()));
    }
    let mut counts: Vec<u64> = Vec::new();
    for r in observed {
        let d = haversine_m(coord(coords, r.fzone)?, coord(coords, r.tzone)?);
        let k = (d / bin_width_m).round() as usize;
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Data("no trips to build a jump-size distribution".into()));
    }
    Ok(JumpSizeDistribution {
        bin_width_m,
        mass: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        sample_count: n as usize,
    })
}

/// Ranks `domain` by descending `p^J` of the jump from `present`.
pub fn epr_ranking(
    vehicle: &VehicleId,
    present: ZoneId,
    domain: &BTreeSet<ZoneId>,
    jumps: &JumpSizeDistribution,
    coords: &Coordinates,
) -> Result<RankingTable> {
    let origin = coord(coords, present)?;
    let scores = domain
        .iter()
        .map(|z| Ok((*z, jumps.p(haversine_m(origin, coord(coords, *z)?)))))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingTable::new(vehicle.clone(), RankKind::Epr, ordinal_ranks_desc(&scores)))
}

/// EPR combined with hotness by rank summation and collision re-probing.
pub fn pepr_ranking(epr: &RankingTable, hotness: &HotnessTable) -> Result<RankingTable> {
    let entries = combine_with_hotness(epr, hotness)?;
    Ok(RankingTable::new(epr.vehicle_id.clone(), RankKind::Pepr, entries))
}

/// First future trip of an individual to one of its potential destinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewDestinationEvent {
    pub vehicle_id: VehicleId,
    pub present: ZoneId,
    pub target: ZoneId,
}

/// One event per (individual, potential destination), taken from the
/// earliest future trip to it; events are ordered by vehicle then time.
pub fn new_destination_events(
    future: &[TripRecord],
    potentials: &BTreeMap<VehicleId, BTreeSet<ZoneId>>,
) -> Vec<NewDestinationEvent> {
    let mut trips: Vec<&TripRecord> = future
        .iter()
        .filter(|r| potentials.get(&r.vehicle_id).is_some_and(|p| p.contains(&r.tzone)))
        .collect();
    trips.sort_by(|a, b| (&a.vehicle_id, a.date, a.ftime).cmp(&(&b.vehicle_id, b.date, b.ftime)));
    let mut seen: BTreeSet<(&VehicleId, ZoneId)> = BTreeSet::new();
    trips
        .into_iter()
        .filter(|r| seen.insert((&r.vehicle_id, r.tzone)))
        .map(|r| NewDestinationEvent {
            vehicle_id: r.vehicle_id.clone(),
            present: r.fzone,
            target: r.tzone,
        })
        .collect()
}

/// Event-level EPR (or PEPR, when `hotness` is given) rankings.
pub fn epr_event_rankings(
    events: &[NewDestinationEvent],
    domains: &BTreeMap<VehicleId, BTreeSet<ZoneId>>,
    jumps: &JumpSizeDistribution,
    coords: &Coordinates,
    hotness: Option<&HotnessTable>,
) -> Result<Vec<(NewDestinationEvent, RankingTable)>> {
    events
        .iter()
        .filter_map(|e| domains.get(&e.vehicle_id).map(|d| (e, d)))
        .map(|(e, domain)| {
            let epr = epr_ranking(&e.vehicle_id, e.present, domain, jumps, coords)?;
            let table = match hotness {
                Some(h) => pepr_ranking(&epr, h)?,
                None => epr,
            };
            Ok((e.clone(), table))
        })
        .collect()
}

/// Groups event rankings into per-individual potential-destination ranks.
pub fn event_potential_ranks(rankings: &[(NewDestinationEvent, RankingTable)]) -> Result<Vec<PotentialRanks>> {
    let mut out: Vec<PotentialRanks> = Vec::new();
    for (e, t) in rankings {
        let rank = t
            .rank(e.target)
            .ok_or_else(|| Error::Data(format!("event target {} of {} is not ranked", e.target, e.vehicle_id)))?;
        match out.last_mut() {
            Some(last) if last.vehicle_id == e.vehicle_id => last.ranks.push(rank),
            _ => out.push(PotentialRanks {
                vehicle_id: e.vehicle_id.clone(),
                ranks: vec![rank],
                domain_size: t.len(),
            }),
        }
    }
    Ok(out)
}

pub const EVENT_RANKING_HEADER: &str = "vehicle_id,event,present_zone,zone_id,rank_kind,rank";

/// Event-level rankings: the shared ranking columns plus the event index and
/// the present zone it was predicted from.
pub fn write_event_rankings(rankings: &[(NewDestinationEvent, RankingTable)]) -> String {
    let mut out = String::from(EVENT_RANKING_HEADER);
    out.push('\n');
    let mut index: BTreeMap<&VehicleId, usize> = BTreeMap::new();
    for (e, t) in rankings {
        let i = index.entry(&e.vehicle_id).or_insert(0);
        for (z, r) in &t.entries {
            out.push_str(&format!("{},{},{},{},{},{}\n", e.vehicle_id, i, e.present, z, t.kind, r));
        }
        *i += 1;
    }
    out
}
