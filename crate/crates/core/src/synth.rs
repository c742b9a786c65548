//! Synthetic populations with planted group-affinity structure.
//!
//! Zones are split into disjoint, equally sized affinity sets, one per group.
//! Each individual starts from a small subset of its group's set and replays
//! it during the observation window. In the future window a trip explores an
//! unvisited zone of the same set with probability `exploration_rate`, jumps
//! to a uniformly random zone with probability `noise_rate`, and otherwise
//! replays a visited affinity zone. Starting subsets rotate through the set
//! so that every zone is equally popular and hotness carries no signal about
//! which zones an individual will discover.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::baselines::{write_coords, Coordinates};
use crate::error::{Error, Result};
use crate::trip_data::{
    build_profiles, write_trips, DateWindow, IndividualProfile, ObservationSplit, TemporalConfig, TripRecord,
    VehicleId, ZoneId, SECONDS_PER_DAY,
};

const SIGNATURE_POIS: [&str; 12] = [
    "office_park",
    "government",
    "school",
    "university",
    "hospital",
    "clinic",
    "shopping_mall",
    "market",
    "factory",
    "warehouse",
    "scenic_area",
    "stadium",
];
const COMMON_POIS: [&str; 6] = ["bank", "pharmacy", "gas_station", "supermarket", "restaurant", "hotel"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_individuals: usize,
    pub num_zones: usize,
    pub num_groups: usize,
    pub zones_per_group_affinity: usize,
    /// Mean trip count over the observation window; the future window scales
    /// it by `future_days / observation_days`.
    pub trips_mean: f64,
    /// Negative-binomial shape of the trip count; larger is closer to Poisson.
    pub trips_dispersion: f64,
    pub observation_days: u32,
    pub future_days: u32,
    pub start_date: NaiveDate,
    pub exploration_rate: f64,
    pub noise_rate: f64,
    /// Affinity zones each individual visits from the start.
    pub initial_visited: usize,
    /// Probability that a trip departs within the group's preferred time span.
    pub time_preference: f64,
    /// Probability that a zone carries each of its group's signature POIs.
    pub poi_signal: f64,
    /// Spacing of the zone-center grid in meters.
    pub grid_spacing_m: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_individuals: 500,
            num_zones: 40,
            num_groups: 5,
            zones_per_group_affinity: 8,
            trips_mean: 6.0,
            trips_dispersion: 10.0,
            observation_days: 7,
            future_days: 14,
            start_date: NaiveDate::from_ymd_opt(2019, 8, 5).expect("valid date"),
            exploration_rate: 0.3,
            noise_rate: 0.01,
            initial_visited: 2,
            time_preference: 0.7,
            poi_signal: 0.8,
            grid_spacing_m: 1500.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, p) in [
            ("exploration_rate", self.exploration_rate),
            ("noise_rate", self.noise_rate),
            ("time_preference", self.time_preference),
            ("poi_signal", self.poi_signal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.exploration_rate + self.noise_rate > 1.0 {
            return bad("exploration_rate + noise_rate must not exceed 1".into());
        }
        if self.num_individuals == 0 || self.num_zones == 0 || self.num_groups == 0 {
            return bad("individuals, zones and groups must be positive".into());
        }
        if self.zones_per_group_affinity == 0 || self.zones_per_group_affinity > self.num_zones {
            return bad(format!(
                "affinity set of {} zones does not fit {} zones",
                self.zones_per_group_affinity, self.num_zones
            ));
        }
        if self.zones_per_group_affinity * self.num_groups > self.num_zones {
            return bad(format!(
                "{} disjoint affinity sets of {} zones need more than {} zones",
                self.num_groups, self.zones_per_group_affinity, self.num_zones
            ));
        }
        if self.initial_visited == 0 || self.initial_visited > self.zones_per_group_affinity {
            return bad("initial_visited must lie in 1..=zones_per_group_affinity".into());
        }
        if !(self.trips_mean > 0.0 && self.trips_dispersion > 0.0 && self.grid_spacing_m > 0.0) {
            return bad("trips_mean, trips_dispersion and grid_spacing_m must be positive".into());
        }
        if self.observation_days == 0 || self.future_days == 0 {
            return bad("observation and future windows need at least one day".into());
        }
        Ok(())
    }

    pub fn split(&self) -> ObservationSplit {
        let day = |n: u32| self.start_date + Days::new(u64::from(n));
        ObservationSplit {
            observation: DateWindow {
                start: day(0),
                end: day(self.observation_days - 1),
            },
            future: DateWindow {
                start: day(self.observation_days),
                end: day(self.observation_days + self.future_days - 1),
            },
        }
    }
}

/// Generated population and its side tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub zones: BTreeSet<ZoneId>,
    pub observed: Vec<TripRecord>,
    pub future: Vec<TripRecord>,
    pub profiles: Vec<IndividualProfile>,
    pub poi: Vec<(ZoneId, String)>,
    pub coords: Coordinates,
    pub vehicle_groups: BTreeMap<VehicleId, usize>,
    /// Affinity sets, indexed by group.
    pub affinity: Vec<BTreeSet<ZoneId>>,
    pub split: ObservationSplit,
}

impl SynthOutput {
    pub fn records(&self) -> Vec<TripRecord> {
        self.observed.iter().chain(&self.future).cloned().collect()
    }

    /// `Z^f_n − Z^o_n` per individual.
    pub fn potential_destinations(&self) -> BTreeMap<VehicleId, BTreeSet<ZoneId>> {
        self.profiles
            .iter()
            .map(|p| (p.vehicle_id.clone(), p.potential_destinations()))
            .collect()
    }

    /// File name and contents of every emitted table.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut zones = String::from("zone_id\n");
        for z in &self.zones {
            zones.push_str(&format!("{z}\n"));
        }
        let mut poi = String::from("zone_id,poi_label\n");
        for (z, label) in &self.poi {
            poi.push_str(&format!("{z},{label}\n"));
        }
        let mut groups = String::from("vehicle_id,group\n");
        for (v, g) in &self.vehicle_groups {
            groups.push_str(&format!("{v},{g}\n"));
        }
        let mut affinity = String::from("zone_id,group\n");
        for (g, set) in self.affinity.iter().enumerate() {
            for z in set {
                affinity.push_str(&format!("{z},{g}\n"));
            }
        }
        let mut truth = String::from("vehicle_id,zone_id\n");
        for (v, zs) in self.potential_destinations() {
            for z in zs {
                truth.push_str(&format!("{v},{z}\n"));
            }
        }
        vec![
            ("trips.csv", write_trips(&self.records())),
            ("zones.csv", zones),
            ("poi.csv", poi),
            ("coords.csv", write_coords(&self.coords)),
            ("groups.csv", groups),
            ("affinity.csv", affinity),
            ("potential.csv", truth),
        ]
    }
}

fn trip_count<R: Rng>(mean: f64, dispersion: f64, rng: &mut R) -> Result<usize> {
    let gamma = Gamma::new(dispersion, mean / dispersion).map_err(|e| Error::Config(e.to_string()))?;
    let lambda: f64 = gamma.sample(rng);
    if lambda <= 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?;
    Ok(poisson.sample(rng) as usize)
}

/// Departure date and time for `count` trips, in chronological order.
fn schedule<R: Rng>(
    count: usize,
    first_day: NaiveDate,
    days: u32,
    preferred: (u32, u32),
    preference: f64,
    rng: &mut R,
) -> Vec<(NaiveDate, u32)> {
    let mut out: Vec<(NaiveDate, u32)> = (0..count)
        .map(|_| {
            let date = first_day + Days::new(u64::from(rng.random_range(0..days)));
            let time = if rng.random_bool(preference) {
                rng.random_range(preferred.0..preferred.1)
            } else {
                rng.random_range(0..SECONDS_PER_DAY)
            };
            (date, time)
        })
        .collect();
    out.sort_unstable();
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zones: Vec<ZoneId> = (1..=cfg.num_zones as u32).map(ZoneId).collect();
    let mut shuffled = zones.clone();
    shuffled.shuffle(&mut rng);
    let k = cfg.zones_per_group_affinity;
    // Each group's set keeps its shuffled order; rotations walk through it.
    let affinity_order: Vec<Vec<ZoneId>> = (0..cfg.num_groups).map(|g| shuffled[g * k..(g + 1) * k].to_vec()).collect();
    let mut zone_group: BTreeMap<ZoneId, usize> = BTreeMap::new();
    for (g, set) in affinity_order.iter().enumerate() {
        for z in set {
            zone_group.insert(*z, g);
        }
    }

    let mut group_of: Vec<usize> = (0..cfg.num_individuals).map(|n| n % cfg.num_groups).collect();
    group_of.shuffle(&mut rng);

    let temporal = TemporalConfig::default();
    let spans: Vec<(u32, u32)> = temporal.time_spans.iter().map(|s| (s.start, s.end)).collect();
    let preferred_span = |g: usize| spans[(2 + 3 * g) % spans.len()];

    let split = cfg.split();
    let future_mean = cfg.trips_mean * f64::from(cfg.future_days) / f64::from(cfg.observation_days);
    let mut observed = Vec::new();
    let mut future = Vec::new();
    let mut vehicle_groups = BTreeMap::new();
    let mut member_index = vec![0usize; cfg.num_groups];

    for (n, &g) in group_of.iter().enumerate() {
        let vehicle = VehicleId::new(format!("V{:04}", n + 1));
        vehicle_groups.insert(vehicle.clone(), g);
        let set = &affinity_order[g];
        let j = member_index[g];
        member_index[g] += 1;

        // Rotating start offsets with a varying stride cover every zone
        // equally often and, across members, link every pair of zones.
        let stride = 1 + (j / k) % (k - 1).max(1);
        let mut visited: Vec<ZoneId> = Vec::with_capacity(cfg.initial_visited);
        let mut slot = j;
        while visited.len() < cfg.initial_visited {
            while visited.contains(&set[slot % k]) {
                slot += 1;
            }
            visited.push(set[slot % k]);
            slot += stride;
        }
        let home = visited[0];

        let n_obs = trip_count(cfg.trips_mean, cfg.trips_dispersion, &mut rng)?.max(visited.len());
        let n_fut = trip_count(future_mean, cfg.trips_dispersion, &mut rng)?;
        let span = preferred_span(g);
        let obs_times = schedule(n_obs, split.observation.start, cfg.observation_days, span, cfg.time_preference, &mut rng);
        let fut_times = schedule(n_fut, split.future.start, cfg.future_days, span, cfg.time_preference, &mut rng);

        let mut cover = visited.clone();
        cover.shuffle(&mut rng);
        let mut origin = home;
        for (i, (date, ftime)) in obs_times.into_iter().enumerate() {
            let tzone = if i < cover.len() {
                cover[i]
            } else if rng.random_bool(cfg.noise_rate) {
                *zones.choose(&mut rng).expect("zones")
            } else {
                *visited.choose(&mut rng).expect("visited")
            };
            observed.push(TripRecord {
                vehicle_id: vehicle.clone(),
                date,
                ftime,
                fzone: origin,
                tzone,
            });
            origin = tzone;
        }

        let mut seen: BTreeSet<ZoneId> = observed
            .iter()
            .rev()
            .take_while(|r| r.vehicle_id == vehicle)
            .map(|r| r.tzone)
            .collect();
        for (date, ftime) in fut_times {
            let u: f64 = rng.random();
            let unexplored: Vec<ZoneId> = set.iter().filter(|z| !seen.contains(z)).copied().collect();
            let tzone = if u < cfg.exploration_rate && !unexplored.is_empty() {
                let z = *unexplored.choose(&mut rng).expect("nonempty");
                visited.push(z);
                z
            } else if u >= cfg.exploration_rate && u < cfg.exploration_rate + cfg.noise_rate {
                *zones.choose(&mut rng).expect("zones")
            } else {
                *visited.choose(&mut rng).expect("visited")
            };
            seen.insert(tzone);
            future.push(TripRecord {
                vehicle_id: vehicle.clone(),
                date,
                ftime,
                fzone: origin,
                tzone,
            });
            origin = tzone;
        }
    }

    let poi = generate_poi(cfg, &zones, &zone_group, &mut rng);
    let coords = generate_coords(cfg, &zones, &mut rng);
    let profiles = build_profiles(&observed, &future);
    Ok(SynthOutput {
        zones: zones.into_iter().collect(),
        observed,
        future,
        profiles,
        poi,
        coords,
        vehicle_groups,
        affinity: affinity_order.into_iter().map(|v| v.into_iter().collect()).collect(),
        split,
    })
}

/// Two signature POIs per group, shared by its zones, plus one common POI
/// per zone. Zones outside every affinity set get two random signatures.
fn generate_poi<R: Rng>(
    cfg: &SynthConfig,
    zones: &[ZoneId],
    zone_group: &BTreeMap<ZoneId, usize>,
    rng: &mut R,
) -> Vec<(ZoneId, String)> {
    let mut out = BTreeSet::new();
    for z in zones {
        match zone_group.get(z) {
            Some(&g) => {
                for s in 0..2 {
                    if rng.random_bool(cfg.poi_signal) {
                        let label = SIGNATURE_POIS[(2 * g + s) % SIGNATURE_POIS.len()];
                        out.insert((*z, label.to_owned()));
                    }
                }
            }
            None => {
                for label in SIGNATURE_POIS.choose_multiple(rng, 2) {
                    out.insert((*z, (*label).to_owned()));
                }
            }
        }
        let common = COMMON_POIS.choose(rng).expect("nonempty");
        out.insert((*z, (*common).to_owned()));
    }
    out.into_iter().collect()
}

/// Zone centers on a square grid around a fixed reference point, with zone
/// ids placed at random cells.
fn generate_coords<R: Rng>(cfg: &SynthConfig, zones: &[ZoneId], rng: &mut R) -> Coordinates {
    const ORIGIN: (f64, f64) = (30.94, 118.76);
    const METERS_PER_DEG_LAT: f64 = 111_195.08;
    let side = (zones.len() as f64).sqrt().ceil() as usize;
    let mut cells: Vec<usize> = (0..side * side).collect();
    cells.shuffle(rng);
    let lon_scale = METERS_PER_DEG_LAT * ORIGIN.0.to_radians().cos();
    zones
        .iter()
        .zip(cells)
        .map(|(z, cell)| {
            let (row, col) = ((cell / side) as f64, (cell % side) as f64);
            let lat = ORIGIN.0 + row * cfg.grid_spacing_m / METERS_PER_DEG_LAT;
            let lon = ORIGIN.1 + col * cfg.grid_spacing_m / lon_scale;
            (*z, (lat, lon))
        })
        .collect()
}
