//! Staged, manifest-tracked orchestration.
//!
//! Each stage reads upstream artifacts from the output directory, writes its
//! own under a stage subdirectory and records a `manifest.json` holding the
//! sha256 of every input and output plus the config it ran with. Manifests
//! carry no timestamps, so re-runs with unchanged inputs are byte-identical.
//!
//! ```text
//! ingest/       observed.csv future.csv zones.csv targets.csv potential.csv profiles.csv summary.json
//! graph/        graph.tsv stats.json
//! train/        model.bin log.jsonl
//! rank/         rankings.csv
//! evaluate/<k>/ report.json u.csv h.csv i_prime.csv
//! baselines/<m>/rankings.csv report.json u.csv h.csv i_prime.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    cf_ranking, epr_event_rankings, event_potential_ranks, jump_size_distribution, md_ranking, new_destination_events,
    parse_coords, random_rankings, write_event_rankings, CfMode, MdMethod, VisitMatrix,
};
use crate::config::{BaselineMethod, PipelineConfig};
use crate::embedding::{load_checkpoint, save_checkpoint, train};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_ranks, evaluate_tables, potential_ranks, write_confusion_table, write_h, write_u, EvalReport, Evaluation,
};
use crate::ranking::{combined_ranking, hotness_ranking, parse_rankings, rank_all, write_rankings, RankKind, RankingTable};
use crate::synth::{generate, SynthConfig};
use crate::tkg::{build_graph, parse_poi, GraphStats, TripKnowledgeGraph};
use crate::trip_data::{
    build_profiles, filter_low_predictability, mean_rates, parse_trips, parse_zone_list, split_periods, write_trips,
    TripRecord, VehicleId, ZoneId,
};
use crate::util::{fmt_f64, read_bytes, read_to_string, sha256_hex, write_file};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every stage's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub version: String,
    /// Logical input name to sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to sha256.
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

impl StageManifest {
    fn new(stage: &str, config: serde_json::Value) -> Self {
        StageManifest {
            stage: stage.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(&dir.join(MANIFEST_FILE))?)?)
    }
}

/// Collects a stage's outputs, writing each file as it is added.
struct StageWriter {
    dir: PathBuf,
    manifest: StageManifest,
}

impl StageWriter {
    fn new(dir: PathBuf, stage: &str, config: serde_json::Value) -> Self {
        StageWriter {
            dir,
            manifest: StageManifest::new(stage, config),
        }
    }

    fn input(&mut self, name: &str, bytes: &[u8]) {
        self.manifest.inputs.insert(name.to_owned(), sha256_hex(bytes));
    }

    fn output(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let bytes = contents.as_ref();
        write_file(&self.dir.join(name), bytes)?;
        self.manifest.outputs.insert(name.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes a file that is not hashed, for run-specific content such as
    /// wall-clock timings.
    fn untracked(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        write_file(&self.dir.join(name), contents)
    }

    fn finish(self) -> Result<StageManifest> {
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        write_file(&self.dir.join(MANIFEST_FILE), text)?;
        Ok(self.manifest)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Reads an upstream artifact, naming the stage that produces it if absent.
fn require(path: &Path, stage: &'static str) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path: path.to_owned(),
            stage,
        });
    }
    read_bytes(path)
}

fn utf8(bytes: Vec<u8>, path: &Path) -> Result<String> {
    String::from_utf8(bytes).map_err(|_| Error::Data(format!("{} is not valid UTF-8", path.display())))
}

/// Outcome of the ingest stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: usize,
    pub observed_records: usize,
    pub future_records: usize,
    pub discarded_records: usize,
    pub individuals: usize,
    pub targets: usize,
    pub targets_with_potential: usize,
    pub rejections: BTreeMap<String, usize>,
    pub mean_accidental_rate: Option<f64>,
    pub mean_potential_rate: Option<f64>,
}

/// Outcome of the train stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub final_mean_loss: Option<f64>,
    pub final_within_margin: Option<f64>,
    pub model_sha256: String,
}

/// Ingested observation-window inputs shared by the downstream stages.
struct Ingested {
    zones: BTreeSet<ZoneId>,
    observed: Vec<TripRecord>,
    targets: BTreeSet<VehicleId>,
    potentials: BTreeMap<VehicleId, BTreeSet<ZoneId>>,
    hashes: BTreeMap<&'static str, String>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    /// Validates the config before any work is done.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline { cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.cfg.paths.output_dir
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.output_dir().join(stage)
    }

    /// Config subset echoed into reports; paths are left out so that the
    /// echo does not depend on where the run lives.
    fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "split": self.cfg.split,
            "temporal": self.cfg.temporal,
            "filter": self.cfg.filter,
            "graph": self.cfg.graph,
            "train": self.cfg.train,
            "evaluate": self.cfg.evaluate,
            "baselines": self.cfg.baselines,
        })
    }

    fn input_path(&self, path: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| Error::Config(format!("paths.{name} is required for this stage")))
    }

    fn read_input(&self, path: &Option<PathBuf>, name: &str) -> Result<(PathBuf, Vec<u8>)> {
        let p = self.input_path(path, name)?;
        let bytes = read_bytes(&p)?;
        Ok((p, bytes))
    }

    /// Parses trips, splits the windows, profiles individuals and selects the
    /// low-predictability targets.
    pub fn ingest(&self) -> Result<IngestSummary> {
        let split = self
            .cfg
            .split
            .ok_or_else(|| Error::Config("the [split] section is required for ingest".into()))?;
        let (zones_path, zones_bytes) = self.read_input(&self.cfg.paths.zones, "zones")?;
        let zones = parse_zone_list(&utf8(zones_bytes.clone(), &zones_path)?)?;
        let (_, trips_bytes) = self.read_input(&self.cfg.paths.trips, "trips")?;
        let records = parse_trips(trips_bytes.as_slice(), &zones)?;
        let periods = split_periods(&records, &split);
        let profiles = build_profiles(&periods.observed, &periods.future);
        let selection = filter_low_predictability(&profiles, &self.cfg.filter);
        let rates = mean_rates(&profiles);

        let mut w = StageWriter::new(self.stage_dir("ingest"), "ingest", self.echo());
        w.input("zones", &zones_bytes);
        w.input("trips", &trips_bytes);
        w.output("observed.csv", write_trips(&periods.observed))?;
        w.output("future.csv", write_trips(&periods.future))?;
        let mut zone_list = String::from("zone_id\n");
        for z in &zones {
            zone_list.push_str(&format!("{z}\n"));
        }
        w.output("zones.csv", zone_list)?;
        let mut targets = String::from("vehicle_id\n");
        let mut potential = String::from("vehicle_id,zone_id\n");
        let mut profile_rows =
            String::from("vehicle_id,trip_count,distinct_destinations,entropy,entropy_fraction,potential_count,target\n");
        let mut with_potential = 0;
        for p in &profiles {
            let is_target = selection.selected.contains(&p.vehicle_id);
            let pot = p.potential_destinations();
            profile_rows.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.vehicle_id,
                p.trip_count,
                p.observed_counts.len(),
                fmt_f64(p.entropy),
                fmt_f64(p.entropy_fraction()),
                pot.len(),
                is_target
            ));
            if is_target {
                targets.push_str(&format!("{}\n", p.vehicle_id));
                with_potential += usize::from(!pot.is_empty());
                for z in pot {
                    potential.push_str(&format!("{},{z}\n", p.vehicle_id));
                }
            }
        }
        w.output("targets.csv", targets)?;
        w.output("potential.csv", potential)?;
        w.output("profiles.csv", profile_rows)?;
        let summary = IngestSummary {
            records: records.len(),
            observed_records: periods.observed.len(),
            future_records: periods.future.len(),
            discarded_records: periods.discarded,
            individuals: profiles.len(),
            targets: selection.selected.len(),
            targets_with_potential: with_potential,
            rejections: selection.rejections.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
            mean_accidental_rate: rates.accidental,
            mean_potential_rate: rates.potential,
        };
        w.output("summary.json", to_json(&summary)?)?;
        w.finish()?;
        info!(
            "ingest: {} records, {} individuals, {} targets",
            summary.records, summary.individuals, summary.targets
        );
        Ok(summary)
    }

    fn load_ingested(&self) -> Result<Ingested> {
        let dir = self.stage_dir("ingest");
        let mut hashes = BTreeMap::new();
        let mut load = |name: &'static str| -> Result<String> {
            let path = dir.join(name);
            let bytes = require(&path, "ingest")?;
            hashes.insert(name, sha256_hex(&bytes));
            utf8(bytes, &path)
        };
        let zones = parse_zone_list(&load("zones.csv")?)?;
        let observed = parse_trips(load("observed.csv")?.as_bytes(), &zones)?;
        let targets: BTreeSet<VehicleId> = load("targets.csv")?
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| VehicleId::new(l.trim()))
            .collect();
        let mut potentials: BTreeMap<VehicleId, BTreeSet<ZoneId>> =
            targets.iter().map(|v| (v.clone(), BTreeSet::new())).collect();
        let text = load("potential.csv")?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for row in reader.records() {
            let row = row?;
            let (Some(v), Some(z)) = (row.get(0), row.get(1)) else {
                return Err(Error::Data("potential.csv rows need vehicle_id,zone_id".into()));
            };
            let zone: ZoneId = z
                .parse()
                .map_err(|_| Error::Data(format!("potential.csv: bad zone id `{z}`")))?;
            potentials.entry(VehicleId::new(v)).or_default().insert(zone);
        }
        Ok(Ingested {
            zones,
            observed,
            targets,
            potentials,
            hashes,
        })
    }

    /// Builds the trip knowledge graph of the targets.
    pub fn build_graph(&self) -> Result<GraphStats> {
        let data = self.load_ingested()?;
        let mut w = StageWriter::new(self.stage_dir("graph"), "build-graph", self.echo());
        w.manifest
            .inputs
            .insert("observed".into(), data.hashes["observed.csv"].clone());
        w.manifest
            .inputs
            .insert("targets".into(), data.hashes["targets.csv"].clone());
        let poi = match &self.cfg.paths.poi {
            Some(p) => {
                let bytes = read_bytes(p)?;
                w.input("poi", &bytes);
                parse_poi(&utf8(bytes, p)?, &data.zones)?
            }
            None => {
                warn!("no POI table configured; the graph will hold trip triples only");
                Vec::new()
            }
        };
        let (graph, summary) = build_graph(
            &data.observed,
            &poi,
            &self.cfg.temporal,
            &data.zones,
            Some(&data.targets),
            self.cfg.graph,
        )?;
        let stats = graph.stats();
        w.output("graph.tsv", graph.dump())?;
        w.output("stats.json", to_json(&stats)?)?;
        w.finish()?;
        info!(
            "build-graph: {} entities, {} relations, {} triples ({} records skipped)",
            stats.entities, stats.relations, stats.triples, summary.records_skipped
        );
        Ok(stats)
    }

    fn load_graph(&self) -> Result<(TripKnowledgeGraph, [u8; 32])> {
        let path = self.stage_dir("graph").join("graph.tsv");
        let bytes = require(&path, "build-graph")?;
        let hash = sha256_bytes(&bytes);
        let graph = TripKnowledgeGraph::load(&utf8(bytes, &path)?)?;
        Ok((graph, hash))
    }

    /// Trains the embedding and checkpoints it against the graph hash.
    pub fn train(&self) -> Result<TrainSummary> {
        let (graph, graph_hash) = self.load_graph()?;
        let mut w = StageWriter::new(self.stage_dir("train"), "train", serde_json::to_value(&self.cfg.train)?);
        w.manifest.inputs.insert("graph".into(), hex::encode(graph_hash));
        let (model, log) = train(&graph, &self.cfg.train)?;
        let checkpoint = save_checkpoint(&model, &graph_hash);
        w.output("model.bin", &checkpoint)?;
        let mut lines = String::new();
        for r in &log {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        w.untracked("log.jsonl", lines)?;
        w.finish()?;
        let last = log.last();
        let summary = TrainSummary {
            epochs_run: log.len(),
            final_mean_loss: last.map(|r| r.mean_loss),
            final_within_margin: last.map(|r| r.within_margin),
            model_sha256: sha256_hex(&checkpoint),
        };
        info!(
            "train: {} epochs, final loss {:?}",
            summary.epochs_run, summary.final_mean_loss
        );
        Ok(summary)
    }

    /// Writes embedding, hotness and combined rankings for every target.
    pub fn rank(&self) -> Result<usize> {
        let (graph, graph_hash) = self.load_graph()?;
        let model_path = self.stage_dir("train").join("model.bin");
        let model_bytes = require(&model_path, "train")?;
        let model = load_checkpoint(&model_bytes, &graph_hash)?;
        let data = self.load_ingested()?;
        let mut w = StageWriter::new(self.stage_dir("rank"), "rank", self.echo());
        w.manifest.inputs.insert("graph".into(), hex::encode(graph_hash));
        w.input("model", &model_bytes);
        w.manifest
            .inputs
            .insert("observed".into(), data.hashes["observed.csv"].clone());

        let embedding = rank_all(&model, &graph, self.cfg.train.distance_norm)?;
        let hotness = hotness_ranking(&data.observed, Some(&data.targets), &data.zones);
        let mut tables: Vec<RankingTable> = Vec::with_capacity(embedding.len() * 3);
        for t in &embedding {
            let hot = hotness.table_for(&t.vehicle_id, &t.domain())?;
            let combined = combined_ranking(t, &hotness)?;
            tables.push(t.clone());
            tables.push(hot);
            tables.push(combined);
        }
        w.output("rankings.csv", write_rankings(&tables))?;
        w.finish()?;
        info!("rank: {} individuals ranked", embedding.len());
        Ok(embedding.len())
    }

    fn write_evaluation(&self, w: &mut StageWriter, prefix: &str, eval: &Evaluation) -> Result<()> {
        w.output(&format!("{prefix}report.json"), to_json(&eval.report)?)?;
        w.output(&format!("{prefix}u.csv"), write_u(&eval.u))?;
        w.output(&format!("{prefix}h.csv"), write_h(&eval.h))?;
        w.output(&format!("{prefix}i_prime.csv"), write_confusion_table(&eval.u))?;
        Ok(())
    }

    /// Evaluates every ranking kind written by `rank`.
    ///
    /// The rank manifest must match the current rankings and model, so the
    /// report always traces back to the exact model and graph it came from.
    pub fn evaluate(&self) -> Result<Vec<EvalReport>> {
        let rank_dir = self.stage_dir("rank");
        let rankings_path = rank_dir.join("rankings.csv");
        let rankings_bytes = require(&rankings_path, "rank")?;
        let rank_manifest = StageManifest::load(&rank_dir)?;
        let model_bytes = require(&self.stage_dir("train").join("model.bin"), "train")?;
        let model_hash = sha256_hex(&model_bytes);
        if rank_manifest.outputs.get("rankings.csv") != Some(&sha256_hex(&rankings_bytes))
            || rank_manifest.inputs.get("model") != Some(&model_hash)
        {
            return Err(Error::Data("rankings are stale relative to the model; run rank again".into()));
        }
        let tables = parse_rankings(&utf8(rankings_bytes.clone(), &rankings_path)?)?;
        let data = self.load_ingested()?;
        let support = data.zones.len();

        let mut w = StageWriter::new(self.stage_dir("evaluate"), "evaluate", self.echo());
        w.input("rankings", &rankings_bytes);
        w.manifest.inputs.insert("model".into(), model_hash);
        if let Some(graph) = rank_manifest.inputs.get("graph") {
            w.manifest.inputs.insert("graph".into(), graph.clone());
        }
        w.manifest
            .inputs
            .insert("potential".into(), data.hashes["potential.csv"].clone());

        let mut by_kind: BTreeMap<RankKind, Vec<RankingTable>> = BTreeMap::new();
        for t in tables {
            by_kind.entry(t.kind).or_default().push(t);
        }
        let mut reports = Vec::new();
        for (kind, tables) in by_kind {
            let eval = evaluate_tables(
                kind.as_str(),
                &tables,
                &data.potentials,
                support,
                &self.cfg.evaluate,
                self.echo(),
            )?;
            self.write_evaluation(&mut w, &format!("{}/", kind.as_str()), &eval)?;
            info!(
                "evaluate {}: rho {:?}, D_f {}",
                kind, eval.report.spearman_rho, eval.report.confusion_degree
            );
            reports.push(eval.report);
        }
        w.finish()?;
        Ok(reports)
    }

    /// Runs one reference method and evaluates it on the same targets.
    pub fn baseline(&self, method: BaselineMethod) -> Result<EvalReport> {
        let data = self.load_ingested()?;
        let b = &self.cfg.baselines;
        let stage = format!("baselines/{}", method.as_str());
        let mut w = StageWriter::new(self.stage_dir(&stage), "baseline", self.echo());
        for name in ["observed.csv", "targets.csv", "potential.csv"] {
            w.manifest.inputs.insert(name.into(), data.hashes[name].clone());
        }
        let matrix = VisitMatrix::from_records(&data.observed, &data.targets, &data.zones)?;
        let support = data.zones.len();
        let tables = match method {
            BaselineMethod::Random => random_rankings(&matrix, b.seed),
            BaselineMethod::MdUv => md_ranking(&matrix, MdMethod::Uv, b.md_rank, b.seed)?,
            BaselineMethod::MdQr => md_ranking(&matrix, MdMethod::Qr, b.md_rank, b.seed)?,
            BaselineMethod::MdSvd => md_ranking(&matrix, MdMethod::Svd, b.md_rank, b.seed)?,
            BaselineMethod::CfUser | BaselineMethod::CfItem => {
                let mode = if method == BaselineMethod::CfUser {
                    CfMode::User
                } else {
                    CfMode::Item
                };
                let outcome = cf_ranking(&matrix, mode, b.k_neighbors)?;
                if !outcome.fallback.is_empty() {
                    warn!(
                        "{}: {} individuals had no similar neighbor and fell back to tie-break order",
                        method.as_str(),
                        outcome.fallback.len()
                    );
                }
                outcome.tables
            }
            BaselineMethod::Epr | BaselineMethod::Pepr => {
                let eval = self.event_baseline(method, &data, &matrix, &mut w)?;
                w.finish()?;
                return Ok(eval.report);
            }
        };
        w.output("rankings.csv", write_rankings(&tables))?;
        let results = potential_ranks(&tables, &data.potentials)?;
        let eval = evaluate_ranks(method.as_str(), &results, support, &self.cfg.evaluate, self.echo())?;
        self.write_evaluation(&mut w, "", &eval)?;
        w.finish()?;
        info!(
            "baseline {}: rho {:?}, D_f {}",
            method.as_str(),
            eval.report.spearman_rho,
            eval.report.confusion_degree
        );
        Ok(eval.report)
    }

    /// EPR and PEPR rank per new-destination event, from the zone the
    /// individual departed when first reaching it.
    fn event_baseline(
        &self,
        method: BaselineMethod,
        data: &Ingested,
        matrix: &VisitMatrix,
        w: &mut StageWriter,
    ) -> Result<Evaluation> {
        let (coords_path, coords_bytes) = self.read_input(&self.cfg.paths.coords, "coords")?;
        w.input("coords", &coords_bytes);
        let coords = parse_coords(&utf8(coords_bytes, &coords_path)?)?;
        let future_path = self.stage_dir("ingest").join("future.csv");
        let future_bytes = require(&future_path, "ingest")?;
        w.input("future.csv", &future_bytes);
        let future = parse_trips(future_bytes.as_slice(), &data.zones)?;

        let target_trips: Vec<TripRecord> = data
            .observed
            .iter()
            .filter(|r| data.targets.contains(&r.vehicle_id))
            .cloned()
            .collect();
        let jumps = jump_size_distribution(&target_trips, &coords, self.cfg.baselines.jump_bin_m)?;
        let domains: BTreeMap<VehicleId, BTreeSet<ZoneId>> = matrix
            .vehicles()
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), matrix.unobserved(i)))
            .collect();
        let events = new_destination_events(&future, &data.potentials);
        let hotness = (method == BaselineMethod::Pepr)
            .then(|| hotness_ranking(&data.observed, Some(&data.targets), &data.zones));
        let rankings = epr_event_rankings(&events, &domains, &jumps, &coords, hotness.as_ref())?;
        w.output("rankings.csv", write_event_rankings(&rankings))?;
        let results = event_potential_ranks(&rankings)?;
        let eval = evaluate_ranks(
            method.as_str(),
            &results,
            data.zones.len(),
            &self.cfg.evaluate,
            self.echo(),
        )?;
        self.write_evaluation(w, "", &eval)?;
        Ok(eval)
    }

    /// Every stage in order, then the configured baselines.
    pub fn run_all(&self) -> Result<Vec<EvalReport>> {
        self.ingest()?;
        self.build_graph()?;
        self.train()?;
        self.rank()?;
        let mut reports = self.evaluate()?;
        for m in &self.cfg.baselines.methods {
            reports.push(self.baseline(*m)?);
        }
        Ok(reports)
    }
}

fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

/// Generates a synthetic population into `dir` together with a
/// `pipeline.toml` that runs the pipeline on it.
///
/// `base` supplies every section other than paths, split and synth.
pub fn synth(base: &PipelineConfig, cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    let out = generate(cfg)?;
    for (name, contents) in out.files() {
        write_file(&dir.join(name), contents)?;
    }
    let mut pipeline = base.clone();
    pipeline.paths.trips = Some("trips.csv".into());
    pipeline.paths.zones = Some("zones.csv".into());
    pipeline.paths.poi = Some("poi.csv".into());
    pipeline.paths.coords = Some("coords.csv".into());
    pipeline.paths.output_dir = "out".into();
    pipeline.split = Some(out.split);
    pipeline.synth = cfg.clone();
    let path = dir.join("pipeline.toml");
    write_file(&path, pipeline.to_toml()?)?;
    info!(
        "synth: {} individuals, {} trips written to {}",
        out.profiles.len(),
        out.observed.len() + out.future.len(),
        dir.display()
    );
    Ok(path)
}
