//! Trip records and per-individual statistics.
//!
//! Raw records carry `vehicle_id,date,ftime,fzone,tzone`. Everything the
//! graph builder and the evaluator need about an individual (visit counts,
//! observed and future destination sets, destination entropy) is derived
//! here from the records of the observation and future windows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Traffic zone identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoneId(pub u32);

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for ZoneId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(ZoneId)
    }
}

/// Opaque traveler (vehicle) identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub String);

impl VehicleId {
    pub fn new(id: impl Into<String>) -> Self {
        VehicleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const SECONDS_PER_DAY: u32 = 86_400;

/// One observed trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripRecord {
    pub vehicle_id: VehicleId,
    pub date: NaiveDate,
    /// Departure time, seconds since midnight.
    pub ftime: u32,
    pub fzone: ZoneId,
    pub tzone: ZoneId,
}

pub const TRIP_HEADER: [&str; 5] = ["vehicle_id", "date", "ftime", "fzone", "tzone"];

/// Parses `HH:MM[:SS]` into seconds since midnight. `24:00` is accepted only
/// when `allow_end_of_day` is set.
pub fn parse_clock(s: &str, allow_end_of_day: bool) -> Option<u32> {
    let mut parts = s.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let sec: u32 = match parts.next() {
        Some(p) => p.parse().ok()?,
        None => 0,
    };
    if parts.next().is_some() || m >= 60 || sec >= 60 {
        return None;
    }
    let total = h * 3600 + m * 60 + sec;
    match total.cmp(&SECONDS_PER_DAY) {
        std::cmp::Ordering::Less => Some(total),
        std::cmp::Ordering::Equal if allow_end_of_day => Some(total),
        _ => None,
    }
}

pub fn format_clock(seconds: u32) -> String {
    format!(
        "{:02}:{:02}:{:02}",
        seconds / 3600,
        (seconds % 3600) / 60,
        seconds % 60
    )
}

/// Parses delimiter-separated trip records and validates every zone against
/// `zone_universe`. Record order is preserved.
pub fn parse_trips<R: Read>(stream: R, zone_universe: &BTreeSet<ZoneId>) -> Result<Vec<TripRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(stream);
    let headers = reader.headers()?.clone();
    let mut columns = [0usize; 5];
    for (slot, name) in columns.iter_mut().zip(TRIP_HEADER) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::MalformedRow {
            line: 1,
            message: format!("header is missing column `{name}`"),
        })?;
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(columns[i]).unwrap_or("");
        let malformed = |message: String| Error::MalformedRow { line, message };

        let vehicle = field(0);
        if vehicle.is_empty() {
            return Err(malformed("empty vehicle_id".into()));
        }
        let date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
            .map_err(|e| malformed(format!("bad date `{}`: {e}", field(1))))?;
        let ftime = parse_clock(field(2), false)
            .ok_or_else(|| malformed(format!("bad ftime `{}`", field(2))))?;
        let mut zones = [ZoneId(0); 2];
        for (slot, col) in zones.iter_mut().zip([3, 4]) {
            let zone: ZoneId = field(col)
                .parse()
                .map_err(|_| malformed(format!("bad zone `{}`", field(col))))?;
            if !zone_universe.contains(&zone) {
                return Err(Error::UnknownZone { line, zone });
            }
            *slot = zone;
        }
        records.push(TripRecord {
            vehicle_id: VehicleId::new(vehicle),
            date,
            ftime,
            fzone: zones[0],
            tzone: zones[1],
        });
    }
    Ok(records)
}

/// Writes records in the same format [`parse_trips`] reads.
pub fn write_trips(records: &[TripRecord]) -> String {
    let mut out = TRIP_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.vehicle_id,
            r.date.format("%Y-%m-%d"),
            format_clock(r.ftime),
            r.fzone,
            r.tzone
        ));
    }
    out
}

/// Parses a one-column (or first-column) list of zone ids, used for the zone
/// universe file. A header line is optional.
pub fn parse_zone_list(text: &str) -> Result<BTreeSet<ZoneId>> {
    let mut zones = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let first = line.split(',').next().unwrap_or("").trim();
        if first.is_empty() || first.starts_with('#') {
            continue;
        }
        match first.parse::<ZoneId>() {
            Ok(z) => {
                zones.insert(z);
            }
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::MalformedRow {
                    line: i as u64 + 1,
                    message: format!("bad zone id `{first}`"),
                })
            }
        }
    }
    Ok(zones)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub label: String,
    #[serde(with = "clock_serde")]
    pub start: u32,
    #[serde(with = "clock_serde")]
    pub end: u32,
}

mod clock_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u32, s: S) -> Result<S::Ok, S::Error> {
        let text = super::format_clock(*v);
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_clock(&text, true)
            .ok_or_else(|| serde::de::Error::custom(format!("bad clock time `{text}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayNature {
    Workday,
    Holiday,
}

impl DayNature {
    pub fn as_str(self) -> &'static str {
        match self {
            DayNature::Workday => "workday",
            DayNature::Holiday => "holiday",
        }
    }
}

impl fmt::Display for DayNature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Time-of-day spans and the holiday calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub time_spans: Vec<TimeSpan>,
    pub holidays: BTreeSet<NaiveDate>,
    /// Saturdays and Sundays count as holidays when not listed explicitly.
    pub weekends_are_holidays: bool,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        const DEFAULT_SPANS: [(&str, u32, u32); 7] = [
            ("night", 0, 6 * 3600 + 1800),
            ("early_morning", 6 * 3600 + 1800, 7 * 3600 + 1800),
            ("morning_peak", 7 * 3600 + 1800, 9 * 3600 + 1800),
            ("midday", 9 * 3600 + 1800, 16 * 3600 + 1800),
            ("evening_peak", 16 * 3600 + 1800, 19 * 3600),
            ("evening", 19 * 3600, 22 * 3600),
            ("late_night", 22 * 3600, SECONDS_PER_DAY),
        ];
        TemporalConfig {
            time_spans: DEFAULT_SPANS
                .iter()
                .map(|&(label, start, end)| TimeSpan {
                    label: label.to_owned(),
                    start,
                    end,
                })
                .collect(),
            holidays: BTreeSet::new(),
            weekends_are_holidays: true,
        }
    }
}

impl TemporalConfig {
    /// Spans must be contiguous, non-empty and cover `[00:00, 24:00)`.
    pub fn validate(&self) -> Result<()> {
        let mut cursor = 0;
        let mut labels = BTreeSet::new();
        for span in &self.time_spans {
            if span.start != cursor || span.end <= span.start {
                return Err(Error::Config(format!(
                    "time span `{}` does not continue the previous span at {}",
                    span.label,
                    format_clock(cursor)
                )));
            }
            if !labels.insert(span.label.as_str()) {
                return Err(Error::Config(format!("duplicate time span `{}`", span.label)));
            }
            cursor = span.end;
        }
        if cursor != SECONDS_PER_DAY {
            return Err(Error::Config("time spans must cover the whole day".into()));
        }
        Ok(())
    }
}

/// Returns the label of the span containing `ftime`.
///
/// Callers are expected to have validated `cfg`; the last span absorbs any
/// value past the end of the table.
pub fn map_time_span(ftime: u32, cfg: &TemporalConfig) -> &str {
    let idx = cfg.time_spans.partition_point(|s| s.end <= ftime);
    let idx = idx.min(cfg.time_spans.len().saturating_sub(1));
    &cfg.time_spans[idx].label
}

pub fn map_day_nature(date: NaiveDate, cfg: &TemporalConfig) -> DayNature {
    if cfg.holidays.contains(&date) {
        return DayNature::Holiday;
    }
    match date.weekday() {
        Weekday::Sat | Weekday::Sun if cfg.weekends_are_holidays => DayNature::Holiday,
        _ => DayNature::Workday,
    }
}

/// Inclusive date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSplit {
    pub observation: DateWindow,
    pub future: DateWindow,
}

impl ObservationSplit {
    pub fn validate(&self) -> Result<()> {
        if self.observation.start > self.observation.end || self.future.start > self.future.end {
            return Err(Error::Config("split window ends before it starts".into()));
        }
        if self.future.start <= self.observation.end {
            return Err(Error::Config(
                "future window must start after the observation window ends".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeriodSplit {
    pub observed: Vec<TripRecord>,
    pub future: Vec<TripRecord>,
    pub discarded: usize,
}

pub fn split_periods(records: &[TripRecord], split: &ObservationSplit) -> PeriodSplit {
    let mut out = PeriodSplit::default();
    for r in records {
        if split.observation.contains(r.date) {
            out.observed.push(r.clone());
        } else if split.future.contains(r.date) {
            out.future.push(r.clone());
        } else {
            out.discarded += 1;
        }
    }
    out
}

/// Per-individual statistics over the observation and future windows.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualProfile {
    pub vehicle_id: VehicleId,
    pub trip_count: u32,
    /// Destination visit counts over the observation window (`Z^o_n` is the key set).
    pub observed_counts: BTreeMap<ZoneId, u32>,
    pub future_destinations: BTreeSet<ZoneId>,
    /// Destination entropy in bits.
    pub entropy: f64,
}

impl IndividualProfile {
    pub fn observed_destinations(&self) -> BTreeSet<ZoneId> {
        self.observed_counts.keys().copied().collect()
    }

    /// Zones visited in the future window but never during observation.
    pub fn potential_destinations(&self) -> BTreeSet<ZoneId> {
        self.future_destinations
            .iter()
            .filter(|z| !self.observed_counts.contains_key(z))
            .copied()
            .collect()
    }

    /// Entropy relative to its upper bound `log2(trip_count)`. An individual
    /// with a single trip sits at its bound and gets 1.
    pub fn entropy_fraction(&self) -> f64 {
        if self.trip_count <= 1 {
            return 1.0;
        }
        self.entropy / f64::from(self.trip_count).log2()
    }
}

/// Shannon entropy (bits) of the empirical destination distribution.
pub fn compute_entropy<I: IntoIterator<Item = u32>>(counts: I) -> Result<f64> {
    let counts: Vec<u32> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return Err(Error::UndefinedProfile("destination counts".into()));
    }
    let total = total as f64;
    let h = counts
        .iter()
        .map(|&c| {
            let p = f64::from(c) / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Builds profiles for every vehicle with at least one observed trip, sorted
/// by vehicle id.
pub fn build_profiles(observed: &[TripRecord], future: &[TripRecord]) -> Vec<IndividualProfile> {
    let mut counts: BTreeMap<&VehicleId, BTreeMap<ZoneId, u32>> = BTreeMap::new();
    for r in observed {
        *counts.entry(&r.vehicle_id).or_default().entry(r.tzone).or_insert(0) += 1;
    }
    let mut futures: BTreeMap<&VehicleId, BTreeSet<ZoneId>> = BTreeMap::new();
    for r in future {
        futures.entry(&r.vehicle_id).or_default().insert(r.tzone);
    }
    counts
        .into_iter()
        .map(|(vehicle, observed_counts)| {
            let trip_count = observed_counts.values().sum();
            let entropy = compute_entropy(observed_counts.values().copied())
                .expect("profile has at least one trip");
            IndividualProfile {
                vehicle_id: vehicle.clone(),
                trip_count,
                future_destinations: futures.remove(vehicle).unwrap_or_default(),
                observed_counts,
                entropy,
            }
        })
        .collect()
}

/// Accidental and potential destination percentages; `None` when the
/// denominator set is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DestinationRates {
    pub accidental: Option<f64>,
    pub potential: Option<f64>,
}

pub fn accidental_potential_rates(profile: &IndividualProfile) -> DestinationRates {
    rates_from_sets(&profile.observed_destinations(), &profile.future_destinations)
}

pub fn rates_from_sets(observed: &BTreeSet<ZoneId>, future: &BTreeSet<ZoneId>) -> DestinationRates {
    let pct = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64 * 100.0);
    DestinationRates {
        accidental: pct(observed.difference(future).count(), observed.len()),
        potential: pct(future.difference(observed).count(), future.len()),
    }
}

/// Means of the defined rates; undefined rates are left out of the average.
pub fn mean_rates(profiles: &[IndividualProfile]) -> DestinationRates {
    let mut acc = (0.0, 0usize);
    let mut pot = (0.0, 0usize);
    for p in profiles {
        let r = accidental_potential_rates(p);
        if let Some(a) = r.accidental {
            acc = (acc.0 + a, acc.1 + 1);
        }
        if let Some(q) = r.potential {
            pot = (pot.0 + q, pot.1 + 1);
        }
    }
    DestinationRates {
        accidental: (acc.1 > 0).then(|| acc.0 / acc.1 as f64),
        potential: (pot.1 > 0).then(|| pot.0 / pot.1 as f64),
    }
}

/// Screening thresholds for the low-predictability target population. Every
/// predicate is optional; `None` disables it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowPredictabilityThresholds {
    pub max_trip_count: Option<u32>,
    pub min_trip_count: Option<u32>,
    pub min_entropy_fraction: Option<f64>,
    pub min_distinct_destinations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSelection {
    pub selected: BTreeSet<VehicleId>,
    /// Rejections per predicate; an individual failing several predicates is
    /// counted under each of them.
    pub rejections: BTreeMap<&'static str, usize>,
}

pub fn filter_low_predictability(
    profiles: &[IndividualProfile],
    thresholds: &LowPredictabilityThresholds,
) -> TargetSelection {
    let mut selected = BTreeSet::new();
    let mut rejections = BTreeMap::new();
    for p in profiles {
        let checks = [
            ("max_trip_count", thresholds.max_trip_count.map(|m| p.trip_count <= m)),
            ("min_trip_count", thresholds.min_trip_count.map(|m| p.trip_count >= m)),
            (
                "min_entropy_fraction",
                thresholds
                    .min_entropy_fraction
                    .map(|m| p.entropy_fraction() >= m),
            ),
            (
                "min_distinct_destinations",
                thresholds
                    .min_distinct_destinations
                    .map(|m| p.observed_counts.len() >= m),
            ),
        ];
        let mut keep = true;
        for (name, outcome) in checks {
            if outcome == Some(false) {
                *rejections.entry(name).or_insert(0) += 1;
                keep = false;
            }
        }
        if keep {
            selected.insert(p.vehicle_id.clone());
        }
    }
    TargetSelection {
        selected,
        rejections,
    }
}
