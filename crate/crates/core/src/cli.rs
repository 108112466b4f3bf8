//! Command-line pipeline: areas, stratify, synth, evaluate, fairness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use serde::Deserialize;

use crate::boundaries::{load_snapshot, AttributeCatalog};
use crate::datastore::{read_forecast, read_truth, synth_bundle, write_bundle, Bundle, PlantedError, SynthSpec};
use crate::error::{Error, Result};
use crate::fairness::{fairness_curves, measure_fairness, METRICS};
use crate::format::fmt_g17;
use crate::fsio::write_atomic;
use crate::geodesy::{latitude_weights, polar_overestimate, row_cell_areas, total_surface_area, EarthModel, SpheroidParams};
use crate::grid::EquiangularGrid;
use crate::metrics::{gridpoint_rmse, stratified_rmse, ScoreTable, TruthPolicy};
use crate::report::WideTable;
use crate::stratify::{assign_strata, decode_masks, membership_counts, membership_counts_csv, save_masks, MaskSet};
use crate::sum::neumaier_sum;

pub const CACHE_ENV: &str = "SAFE_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "earthstrata", version, about = "Area-weighted, stratified forecast evaluation")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Latitude weights and surface-area summary.
    Areas(AreasArgs),
    /// Strata membership masks from a boundary snapshot.
    Stratify(CommonArgs),
    /// Synthetic forecast/truth bundles with planted errors.
    Synth(CommonArgs),
    /// Per-stratum RMSE for every configured model and variable.
    Evaluate(EvaluateArgs),
    /// Disparity statistics and wide tables from a score table.
    Fairness(FairnessArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Grid spacing in degrees.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Boundary snapshot directory.
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    /// Reject self-intersecting or degenerate rings.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct AreasArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Earth model for the weights.
    #[arg(long, value_enum)]
    pub model: Option<EarthModel>,
    /// Also report how far spherical weights overshoot oblate ones at the pole.
    #[arg(long)]
    pub compare_sphere: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub model: Option<EarthModel>,
    /// Truth bundle root (one subdirectory per variable).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Variables to score (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub variables: Vec<String>,
    /// Lead times in hours (comma separated); defaults to every lead in the bundles.
    #[arg(long, value_delimiter = ',')]
    pub lead_times: Vec<u32>,
    /// Also write per-gridpoint RMSE rasters at these lead times.
    #[arg(long, value_delimiter = ',')]
    pub raster_leads: Vec<u32>,
    /// Score only pairs whose truth exists instead of failing.
    #[arg(long)]
    pub skip_missing_truth: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FairnessArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Score table to read; defaults to `<output>/scores.csv`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Drop LOF-flagged strata before computing statistics.
    #[arg(long)]
    pub filter_outliers: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModel {
    pub name: String,
    #[serde(default)]
    pub errors: Vec<PlantedError>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub spec: SynthSpec,
    pub models: Vec<SynthModel>,
}

/// Run configuration as read from TOML.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub resolution_deg: Option<f64>,
    pub earth_model: Option<EarthModel>,
    pub boundaries: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub models: Vec<ModelEntry>,
    pub variables: Vec<String>,
    pub lead_times_h: Option<Vec<u32>>,
    pub raster_leads_h: Vec<u32>,
    pub output_dir: Option<PathBuf>,
    pub strict_geometry: bool,
    pub filter_outliers: bool,
    pub skip_missing_truth: bool,
    pub seed: Option<u64>,
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn apply(&mut self, c: &CommonArgs) {
        if c.resolution.is_some() {
            self.resolution_deg = c.resolution;
        }
        if c.output.is_some() {
            self.output_dir = c.output.clone();
        }
        if c.boundaries.is_some() {
            self.boundaries = c.boundaries.clone();
        }
        if c.seed.is_some() {
            self.seed = c.seed;
        }
        self.strict_geometry |= c.strict;
    }

    pub fn resolution(&self) -> f64 {
        self.resolution_deg.unwrap_or(1.5)
    }

    pub fn output(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn earth(&self) -> EarthModel {
        self.earth_model.unwrap_or(EarthModel::Oblate)
    }

    fn boundaries_dir(&self) -> Result<&Path> {
        let dir = self
            .boundaries
            .as_deref()
            .ok_or_else(|| Error::Config("no boundary snapshot configured (`boundaries` / --boundaries)".into()))?;
        if !dir.exists() {
            return Err(Error::Config(format!("boundary snapshot {} does not exist", dir.display())));
        }
        Ok(dir)
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Areas(a) => {
            config.apply(&a.common);
            if a.model.is_some() {
                config.earth_model = a.model;
            }
            cmd_areas(&config, a.compare_sphere)
        }
        Command::Stratify(c) => {
            config.apply(&c);
            cmd_stratify(&config).map(|_| ())
        }
        Command::Synth(c) => {
            config.apply(&c);
            cmd_synth(&config)
        }
        Command::Evaluate(a) => {
            config.apply(&a.common);
            if a.model.is_some() {
                config.earth_model = a.model;
            }
            if a.truth.is_some() {
                config.truth = a.truth;
            }
            if !a.variables.is_empty() {
                config.variables = a.variables;
            }
            if !a.lead_times.is_empty() {
                config.lead_times_h = Some(a.lead_times);
            }
            if !a.raster_leads.is_empty() {
                config.raster_leads_h = a.raster_leads;
            }
            config.skip_missing_truth |= a.skip_missing_truth;
            cmd_evaluate(&config)
        }
        Command::Fairness(a) => {
            config.apply(&a.common);
            config.filter_outliers |= a.filter_outliers;
            cmd_fairness(&config, a.scores.as_deref())
        }
    }
}

pub fn cmd_areas(config: &RunConfig, compare_sphere: bool) -> Result<()> {
    let grid = EquiangularGrid::new(config.resolution())?;
    let params = SpheroidParams::earth();
    let model = config.earth();
    let weights = latitude_weights(&grid, &params, model);
    let out = config.output();
    write_atomic(&out.join(format!("weights_{model}.csv")), weights.to_csv().as_bytes())?;

    let used = match model {
        EarthModel::Oblate => params,
        EarthModel::Sphere => params.to_sphere(),
    };
    let total = total_surface_area(&used);
    let cells = neumaier_sum(row_cell_areas(&grid, &used).into_iter().map(|a| a * grid.n_lon() as f64));
    println!("total surface area ({model}): {} m^2", fmt_g17(total));
    println!(
        "grid {}°: {} x {} cells, summed cell area {} m^2 (relative difference {:e})",
        grid.resolution_deg(),
        grid.n_lat(),
        grid.n_lon(),
        fmt_g17(cells),
        (cells - total).abs() / total
    );
    if compare_sphere {
        let pct = polar_overestimate(grid.resolution_deg(), &params)?;
        println!("polar weight overestimate (sphere vs oblate): {pct:.4}%");
    }
    Ok(())
}

fn newest_mtime(dir: &Path) -> Result<SystemTime> {
    let mut newest = fs::metadata(dir).and_then(|m| m.modified()).map_err(|e| Error::io(dir, e))?;
    if dir.is_dir() {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if let Ok(t) = entry.metadata().and_then(|m| m.modified()) {
                newest = newest.max(t);
            }
        }
    }
    Ok(newest)
}

fn cache_path(config: &RunConfig) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join("masks.safeb"),
        _ => config.output().join("masks.safeb"),
    }
}

/// Returns masks from the cache when still valid, otherwise recomputes them.
fn ensure_masks(config: &RunConfig, grid: &EquiangularGrid, catalog: &AttributeCatalog) -> Result<MaskSet> {
    let path = cache_path(config);
    let inputs_mtime = newest_mtime(config.boundaries_dir()?)?;
    if let Ok(meta) = fs::metadata(&path) {
        let fresh = meta.modified().map(|t| t >= inputs_mtime).unwrap_or(false);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match decode_masks(&bytes, &path) {
            Ok(set) if fresh && set.grid_fingerprint == grid.fingerprint() && set.catalog_fingerprint == catalog.fingerprint() => {
                info!("mask cache hit: {}", path.display());
                return Ok(set);
            }
            Ok(_) => info!("mask cache stale; recomputing"),
            Err(e) => warn!("{e}; regenerating masks"),
        }
    }
    let set = assign_strata(grid, catalog);
    save_masks(&set, &path)?;
    Ok(set)
}

fn load_catalog(config: &RunConfig) -> Result<AttributeCatalog> {
    load_snapshot(config.boundaries_dir()?, config.strict_geometry)
}

pub fn cmd_stratify(config: &RunConfig) -> Result<MaskSet> {
    let grid = EquiangularGrid::new(config.resolution())?;
    let catalog = load_catalog(config)?;
    let set = ensure_masks(config, &grid, &catalog)?;
    let out = config.output();
    write_atomic(&out.join("catalog.json"), catalog.to_json().as_bytes())?;
    write_atomic(
        &out.join("membership_counts.csv"),
        membership_counts_csv(&membership_counts(&set)).as_bytes(),
    )?;
    if cache_path(config) != out.join("masks.safeb") {
        save_masks(&set, &out.join("masks.safeb"))?;
    }
    Ok(set)
}

pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    let synth = config
        .synth
        .as_ref()
        .ok_or_else(|| Error::Config("no [synth] section in configuration".into()))?;
    if synth.models.is_empty() {
        return Err(Error::Config("[synth] lists no models".into()));
    }
    let grid = EquiangularGrid::new(config.resolution())?;
    let needs_masks = synth.models.iter().flat_map(|m| &m.errors).any(|e| {
        matches!(e.target, crate::datastore::ErrorTarget::Stratum { .. })
    });
    let masks = if needs_masks {
        let catalog = load_catalog(config)?;
        Some(ensure_masks(config, &grid, &catalog)?)
    } else {
        None
    };
    let seed = config.seed.unwrap_or(0);
    let out = config.output();
    let mut truth_written = false;
    for m in &synth.models {
        let spec = SynthSpec {
            errors: m.errors.clone(),
            ..synth.spec.clone()
        };
        let (forecast, truth) = synth_bundle(&grid, &spec, masks.as_ref(), seed)?;
        if !truth_written {
            write_bundle(&Bundle::Truth(truth), &out.join("truth").join(&spec.variable))?;
            truth_written = true;
        }
        write_bundle(
            &Bundle::Forecast(forecast),
            &out.join("models").join(&m.name).join(&spec.variable),
        )?;
        info!("synthesized {} for model {}", spec.variable, m.name);
    }
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    if config.models.is_empty() {
        return Err(Error::Config("no models configured".into()));
    }
    if config.variables.is_empty() {
        return Err(Error::Config("no variables configured".into()));
    }
    let truth_root = config
        .truth
        .as_deref()
        .ok_or_else(|| Error::Config("no truth path configured".into()))?;
    let grid = EquiangularGrid::new(config.resolution())?;
    let weights = latitude_weights(&grid, &SpheroidParams::earth(), config.earth());
    let catalog = load_catalog(config)?;
    let masks = ensure_masks(config, &grid, &catalog)?;
    let policy = if config.skip_missing_truth {
        TruthPolicy::SkipMissing
    } else {
        TruthPolicy::Strict
    };

    let mut scores = ScoreTable::default();
    let mut rasters = Vec::new();
    for variable in &config.variables {
        let truth = read_truth(&truth_root.join(variable))?;
        for model in &config.models {
            let pred = read_forecast(&model.path.join(variable))?;
            let mut table = stratified_rmse(&model.name, &pred, &truth, &masks, &weights, policy)?;
            if let Some(leads) = &config.lead_times_h {
                for &l in leads {
                    pred.lead_index(l)?;
                }
                table.rows.retain(|r| leads.contains(&r.lead_time_h));
            }
            scores.extend(table);
            for &lead in &config.raster_leads_h {
                let raster = gridpoint_rmse(&pred, &truth, lead, policy)?;
                rasters.push((model.name.clone(), raster));
            }
        }
    }

    let out = config.output();
    for (model, raster) in &rasters {
        let dir = out
            .join("rasters")
            .join(model)
            .join(format!("{}_{}h", raster.variable, raster.lead_time_h));
        write_bundle(&raster.to_bundle(), &dir)?;
    }
    write_atomic(&out.join("scores.csv"), scores.to_csv().as_bytes())
}

pub fn cmd_fairness(config: &RunConfig, scores_path: Option<&Path>) -> Result<()> {
    let out = config.output();
    let path = scores_path.map(Path::to_path_buf).unwrap_or_else(|| out.join("scores.csv"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scores = ScoreTable::from_csv(&text, &path)?;
    let report = measure_fairness(&scores, config.filter_outliers);

    let mut models: Vec<String> = config.models.iter().map(|m| m.name.clone()).collect();
    for r in &scores.rows {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let mut attributes: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !attributes.contains(&r.attribute.as_str()) {
            attributes.push(&r.attribute);
        }
    }

    write_atomic(&out.join("fairness.csv"), report.to_csv().as_bytes())?;
    write_atomic(&out.join("fairness_curves.csv"), fairness_curves(&report).as_bytes())?;
    for attribute in attributes {
        for metric in METRICS {
            let table = WideTable::from_report(&report, attribute, metric, &models);
            write_atomic(
                &out.join("tables").join(format!("{attribute}_{metric}.csv")),
                table.to_csv().as_bytes(),
            )?;
        }
    }
    Ok(())
}
