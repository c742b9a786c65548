//! Trip knowledge graph.
//!
//! Five entity kinds (`Veh_id`, `Day_nat`, `Time_span`, `Zone`, `POI`) and
//! five relation kinds. `Choose_D_id`, `Trip_O_id` and `Trip_Time_id` are
//! private: one relation instance per vehicle, so every instance has a
//! single head entity. `Trip_Day` and `Has_POI` are shared.
//!
//! Registries are assigned dense indices in canonical sort order (entities by
//! kind then key, relations by kind then owner), so rebuilding from the same
//! inputs yields identical indices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trip_data::{map_day_nature, map_time_span, DayNature, TemporalConfig, TripRecord, VehicleId, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    VehId,
    DayNat,
    TimeSpan,
    Zone,
    Poi,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::VehId => "Veh_id",
            EntityKind::DayNat => "Day_nat",
            EntityKind::TimeSpan => "Time_span",
            EntityKind::Zone => "Zone",
            EntityKind::Poi => "POI",
        }
    }
}

/// A registered real-world object. The derived order is the canonical order
/// used for index assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Vehicle(VehicleId),
    DayNature(DayNature),
    TimeSpan(String),
    Zone(ZoneId),
    Poi(String),
}

impl Entity {
    pub fn kind(&self) -> EntityKind {
        match self {
            Entity::Vehicle(_) => EntityKind::VehId,
            Entity::DayNature(_) => EntityKind::DayNat,
            Entity::TimeSpan(_) => EntityKind::TimeSpan,
            Entity::Zone(_) => EntityKind::Zone,
            Entity::Poi(_) => EntityKind::Poi,
        }
    }

    pub fn key(&self) -> String {
        match self {
            Entity::Vehicle(v) => v.to_string(),
            Entity::DayNature(d) => d.to_string(),
            Entity::TimeSpan(s) | Entity::Poi(s) => s.clone(),
            Entity::Zone(z) => z.to_string(),
        }
    }

    fn parse(text: &str) -> Result<Entity> {
        let (kind, key) = text
            .split_once(':')
            .ok_or_else(|| Error::Data(format!("entity `{text}` lacks a kind prefix")))?;
        Ok(match kind {
            "Veh_id" => Entity::Vehicle(VehicleId::new(key)),
            "Day_nat" => Entity::DayNature(match key {
                "workday" => DayNature::Workday,
                "holiday" => DayNature::Holiday,
                _ => return Err(Error::Data(format!("unknown day nature `{key}`"))),
            }),
            "Time_span" => Entity::TimeSpan(key.to_owned()),
            "Zone" => Entity::Zone(
                key.parse()
                    .map_err(|_| Error::Data(format!("bad zone key `{key}`")))?,
            ),
            "POI" => Entity::Poi(key.to_owned()),
            _ => return Err(Error::Data(format!("unknown entity kind `{kind}`"))),
        })
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind().as_str(), self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationKind {
    ChooseDest,
    TripOrigin,
    TripTime,
    TripDay,
    HasPoi,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::ChooseDest,
        RelationKind::TripOrigin,
        RelationKind::TripTime,
        RelationKind::TripDay,
        RelationKind::HasPoi,
    ];

    /// Kinds instantiated once per vehicle under the private relation mode.
    pub fn is_private_kind(self) -> bool {
        matches!(
            self,
            RelationKind::ChooseDest | RelationKind::TripOrigin | RelationKind::TripTime
        )
    }

    fn base_name(self) -> &'static str {
        match self {
            RelationKind::ChooseDest => "Choose_D",
            RelationKind::TripOrigin => "Trip_O",
            RelationKind::TripTime => "Trip_Time",
            RelationKind::TripDay => "Trip_Day",
            RelationKind::HasPoi => "Has_POI",
        }
    }

    /// Allowed (head kind, tail kind) pair.
    pub fn schema(self) -> (EntityKind, EntityKind) {
        match self {
            RelationKind::ChooseDest | RelationKind::TripOrigin => (EntityKind::VehId, EntityKind::Zone),
            RelationKind::TripTime => (EntityKind::VehId, EntityKind::TimeSpan),
            RelationKind::TripDay => (EntityKind::VehId, EntityKind::DayNat),
            RelationKind::HasPoi => (EntityKind::Zone, EntityKind::Poi),
        }
    }
}

/// Relation instance; `owner` is set exactly for private instances.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub kind: RelationKind,
    pub owner: Option<VehicleId>,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.owner {
            Some(owner) => write!(f, "{}_id:{owner}", self.kind.base_name()),
            None => f.write_str(self.kind.base_name()),
        }
    }
}

impl Relation {
    fn parse(text: &str) -> Result<Relation> {
        let (name, owner) = match text.split_once(':') {
            Some((name, owner)) => (name, Some(VehicleId::new(owner))),
            None => (text, None),
        };
        let base = name.strip_suffix("_id").filter(|_| owner.is_some()).unwrap_or(name);
        let kind = RelationKind::ALL
            .into_iter()
            .find(|k| k.base_name() == base)
            .ok_or_else(|| Error::Data(format!("unknown relation `{text}`")))?;
        if owner.is_some() && !kind.is_private_kind() {
            return Err(Error::Data(format!("relation `{text}` cannot have an owner")));
        }
        Ok(Relation { kind, owner })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMode {
    /// One `Choose_D`/`Trip_O`/`Trip_Time` instance per vehicle.
    #[default]
    Private,
    /// A single shared instance of each trip relation.
    Public,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphOptions {
    pub relation_mode: RelationMode,
    /// When false only core (`Choose_D`) triples are emitted.
    pub include_non_core: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            relation_mode: RelationMode::Private,
            include_non_core: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildSummary {
    pub records_used: usize,
    pub records_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripKnowledgeGraph {
    entities: Vec<Entity>,
    entity_index: BTreeMap<Entity, u32>,
    relations: Vec<Relation>,
    relation_index: BTreeMap<Relation, u32>,
    triples: Vec<Triple>,
    core: BTreeMap<VehicleId, Vec<Triple>>,
    zones: BTreeSet<ZoneId>,
    mode: RelationMode,
}

/// Canonicalizes a POI label: trimmed and lowercased.
pub fn canonical_poi(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Parses `zone_id,poi_label` rows (header optional).
pub fn parse_poi(text: &str, zones: &BTreeSet<ZoneId>) -> Result<Vec<(ZoneId, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(i as u64 + 1, |p| p.line());
        let (Some(zone), Some(label)) = (row.get(0), row.get(1)) else {
            return Err(Error::MalformedRow {
                line,
                message: "expected `zone_id,poi_label`".into(),
            });
        };
        let zone: ZoneId = match zone.parse() {
            Ok(z) => z,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("bad zone `{zone}`"),
                })
            }
        };
        if !zones.contains(&zone) {
            return Err(Error::UnknownZone { line, zone });
        }
        let label = canonical_poi(label);
        if label.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty poi label".into(),
            });
        }
        rows.push((zone, label));
    }
    Ok(rows)
}

type SymbolicTriple = (Entity, Relation, Entity);

/// Builds the graph from observation-window records and the POI table.
///
/// Records of vehicles outside `targets` (when given) are skipped and
/// counted. Every zone of `zones` is registered as an entity so that any
/// unobserved zone can be ranked.
pub fn build_graph(
    observed: &[TripRecord],
    poi: &[(ZoneId, String)],
    temporal: &TemporalConfig,
    zones: &BTreeSet<ZoneId>,
    targets: Option<&BTreeSet<VehicleId>>,
    options: GraphOptions,
) -> Result<(TripKnowledgeGraph, BuildSummary)> {
    temporal.validate()?;
    let mut summary = BuildSummary::default();
    let mut symbolic: BTreeSet<SymbolicTriple> = BTreeSet::new();
    let relation = |kind: RelationKind, vehicle: &VehicleId| Relation {
        kind,
        owner: (options.relation_mode == RelationMode::Private && kind.is_private_kind())
            .then(|| vehicle.clone()),
    };

    for r in observed {
        if targets.is_some_and(|t| !t.contains(&r.vehicle_id)) {
            summary.records_skipped += 1;
            continue;
        }
        for z in [r.fzone, r.tzone] {
            if !zones.contains(&z) {
                return Err(Error::UnknownZone { line: 0, zone: z });
            }
        }
        summary.records_used += 1;
        let head = Entity::Vehicle(r.vehicle_id.clone());
        symbolic.insert((
            head.clone(),
            relation(RelationKind::ChooseDest, &r.vehicle_id),
            Entity::Zone(r.tzone),
        ));
        if !options.include_non_core {
            continue;
        }
        symbolic.insert((
            head.clone(),
            relation(RelationKind::TripOrigin, &r.vehicle_id),
            Entity::Zone(r.fzone),
        ));
        symbolic.insert((
            head.clone(),
            relation(RelationKind::TripTime, &r.vehicle_id),
            Entity::TimeSpan(map_time_span(r.ftime, temporal).to_owned()),
        ));
        symbolic.insert((
            head,
            relation(RelationKind::TripDay, &r.vehicle_id),
            Entity::DayNature(map_day_nature(r.date, temporal)),
        ));
    }
    if options.include_non_core {
        for (zone, label) in poi {
            if !zones.contains(zone) {
                return Err(Error::UnknownZone { line: 0, zone: *zone });
            }
            symbolic.insert((
                Entity::Zone(*zone),
                Relation {
                    kind: RelationKind::HasPoi,
                    owner: None,
                },
                Entity::Poi(canonical_poi(label)),
            ));
        }
    }
    Ok((
        TripKnowledgeGraph::from_symbolic(symbolic, zones.clone(), options.relation_mode),
        summary,
    ))
}

impl TripKnowledgeGraph {
    fn from_symbolic(
        symbolic: BTreeSet<SymbolicTriple>,
        zones: BTreeSet<ZoneId>,
        mode: RelationMode,
    ) -> TripKnowledgeGraph {
        let mut entity_set: BTreeSet<Entity> = zones.iter().copied().map(Entity::Zone).collect();
        let mut relation_set = BTreeSet::new();
        for (h, r, t) in &symbolic {
            entity_set.insert(h.clone());
            entity_set.insert(t.clone());
            relation_set.insert(r.clone());
        }
        let entities: Vec<Entity> = entity_set.into_iter().collect();
        let entity_index: BTreeMap<Entity, u32> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i as u32))
            .collect();
        let relations: Vec<Relation> = relation_set.into_iter().collect();
        let relation_index: BTreeMap<Relation, u32> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i as u32))
            .collect();

        let mut triples: Vec<Triple> = symbolic
            .iter()
            .map(|(h, r, t)| Triple {
                head: entity_index[h],
                relation: relation_index[r],
                tail: entity_index[t],
            })
            .collect();
        triples.sort_unstable();

        let mut core: BTreeMap<VehicleId, Vec<Triple>> = BTreeMap::new();
        for t in &triples {
            if relations[t.relation as usize].kind == RelationKind::ChooseDest {
                if let Entity::Vehicle(v) = &entities[t.head as usize] {
                    core.entry(v.clone()).or_default().push(*t);
                }
            }
        }
        TripKnowledgeGraph {
            entities,
            entity_index,
            relations,
            relation_index,
            triples,
            core,
            zones,
            mode,
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Deduplicated triples, sorted by (head, relation, tail).
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn zones(&self) -> &BTreeSet<ZoneId> {
        &self.zones
    }

    pub fn relation_mode(&self) -> RelationMode {
        self.mode
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_id(&self, entity: &Entity) -> Option<u32> {
        self.entity_index.get(entity).copied()
    }

    pub fn relation_id(&self, relation: &Relation) -> Option<u32> {
        self.relation_index.get(relation).copied()
    }

    pub fn entity(&self, id: u32) -> &Entity {
        &self.entities[id as usize]
    }

    pub fn relation(&self, id: u32) -> &Relation {
        &self.relations[id as usize]
    }

    pub fn relation_kind(&self, triple: &Triple) -> RelationKind {
        self.relations[triple.relation as usize].kind
    }

    pub fn is_poi_triple(&self, triple: &Triple) -> bool {
        self.relation_kind(triple) == RelationKind::HasPoi
    }

    /// Vehicles that own at least one core triple.
    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleId> {
        self.core.keys()
    }

    /// Core (`Choose_D`) triples of one vehicle.
    pub fn core_triples(&self, vehicle: &VehicleId) -> Option<&[Triple]> {
        self.core.get(vehicle).map(Vec::as_slice)
    }

    /// Head entity and `Choose_D` relation used to score a vehicle's
    /// candidate zones.
    pub fn core_query(&self, vehicle: &VehicleId) -> Result<(u32, u32)> {
        let head = self
            .entity_id(&Entity::Vehicle(vehicle.clone()))
            .ok_or_else(|| Error::UnknownVehicle(vehicle.to_string()))?;
        let relation = Relation {
            kind: RelationKind::ChooseDest,
            owner: (self.mode == RelationMode::Private).then(|| vehicle.clone()),
        };
        let relation = self
            .relation_id(&relation)
            .ok_or_else(|| Error::UnknownVehicle(vehicle.to_string()))?;
        Ok((head, relation))
    }

    pub fn zone_entity(&self, zone: ZoneId) -> Option<u32> {
        self.entity_id(&Entity::Zone(zone))
    }

    /// `Z − Z^o_n`: zones never chosen as destination by `vehicle`.
    pub fn unobserved_zones(&self, vehicle: &VehicleId) -> Result<BTreeSet<ZoneId>> {
        let core = self
            .core
            .get(vehicle)
            .ok_or_else(|| Error::UnknownVehicle(vehicle.to_string()))?;
        let observed: BTreeSet<ZoneId> = core
            .iter()
            .filter_map(|t| match &self.entities[t.tail as usize] {
                Entity::Zone(z) => Some(*z),
                _ => None,
            })
            .collect();
        Ok(self.zones.difference(&observed).copied().collect())
    }

    pub fn stats(&self) -> GraphStats {
        let mut by_kind: BTreeMap<RelationKind, usize> = BTreeMap::new();
        for t in &self.triples {
            *by_kind.entry(self.relation_kind(t)).or_insert(0) += 1;
        }
        let poi = by_kind.get(&RelationKind::HasPoi).copied().unwrap_or(0);
        GraphStats {
            entities: self.entities.len(),
            relations: self.relations.len(),
            triples: self.triples.len(),
            poi_triples: poi,
            trip_triples: self.triples.len() - poi,
            triples_by_kind: by_kind,
        }
    }

    /// Line-oriented text dump. Header lines start with `#`; each remaining
    /// line is `head_kind:key<TAB>relation_kind[:owner]<TAB>tail_kind:key`.
    pub fn dump(&self) -> String {
        let mut out = String::from("# tripkg graph v1\n");
        let mode = match self.mode {
            RelationMode::Private => "private",
            RelationMode::Public => "public",
        };
        out.push_str(&format!("# relation_mode={mode}\n"));
        let zones: Vec<String> = self.zones.iter().map(ZoneId::to_string).collect();
        out.push_str(&format!("# zones={}\n", zones.join(",")));
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.entities[t.head as usize],
                self.relations[t.relation as usize],
                self.entities[t.tail as usize]
            ));
        }
        out
    }

    /// Inverse of [`TripKnowledgeGraph::dump`].
    pub fn load(text: &str) -> Result<TripKnowledgeGraph> {
        let mut zones = BTreeSet::new();
        let mut mode = RelationMode::Private;
        let mut symbolic = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(header) = line.strip_prefix('#') {
                let header = header.trim();
                if let Some(list) = header.strip_prefix("zones=") {
                    for z in list.split(',').filter(|s| !s.is_empty()) {
                        zones.insert(z.parse().map_err(|_| Error::MalformedRow {
                            line: i as u64 + 1,
                            message: format!("bad zone `{z}`"),
                        })?);
                    }
                } else if let Some(m) = header.strip_prefix("relation_mode=") {
                    mode = match m {
                        "private" => RelationMode::Private,
                        "public" => RelationMode::Public,
                        _ => return Err(Error::Data(format!("unknown relation mode `{m}`"))),
                    };
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [h, r, t] = fields[..] else {
                return Err(Error::MalformedRow {
                    line: i as u64 + 1,
                    message: "expected three tab-separated fields".into(),
                });
            };
            let (h, r, t) = (Entity::parse(h)?, Relation::parse(r)?, Entity::parse(t)?);
            let (hk, tk) = r.kind.schema();
            if h.kind() != hk || t.kind() != tk {
                return Err(Error::Data(format!("line {}: triple violates the schema", i + 1)));
            }
            symbolic.insert((h, r, t));
        }
        Ok(TripKnowledgeGraph::from_symbolic(symbolic, zones, mode))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub poi_triples: usize,
    pub trip_triples: usize,
    #[serde(serialize_with = "serialize_kind_map")]
    pub triples_by_kind: BTreeMap<RelationKind, usize>,
}

fn serialize_kind_map<S: serde::Serializer>(
    map: &BTreeMap<RelationKind, usize>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        m.serialize_entry(k.base_name(), v)?;
    }
    m.end()
}
