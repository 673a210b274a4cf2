//! HTTP API for the interactive design tool: tile-set listing, crop
//! previews, and asynchronous tiling jobs polled for progress.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tiling_core::geom::{Point, Polygon, Region, RigidTransform};
use tiling_core::graph::crop_superset;
use tiling_core::io::{load_superset, load_weights, tileset_from_str, DocError, SolutionDoc};
use tiling_core::nn::Model;
use tiling_core::solve::{tile_region_with, Acceptance, Policy, Progress, SolveOptions, TileRequest};
use tiling_core::tileset::{build_superset, Superset, Symmetry, TileSet, TileSetDescriptor, TilesetError};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("tile set '{name}': {source}")]
    Document { name: String, source: DocError },
    #[error("tile set '{name}': {source}")]
    Tileset { name: String, source: TilesetError },
    #[error("tile set '{name}': weights expect {expected}, superset has {found}")]
    WeightsMismatch { name: String, expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a tile set's superset and weights come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilesetSources {
    /// Binary superset cache.
    pub superset: Option<PathBuf>,
    /// Grow the superset at startup with this many rings when no cache is given.
    pub rings: Option<u32>,
    pub weights: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Directory of tile-set descriptors (`*.json`).
    pub tileset_dir: PathBuf,
    #[serde(default)]
    pub tilesets: BTreeMap<String, TilesetSources>,
    /// Allowed browser origin; any origin when unset.
    #[serde(default)]
    pub cors_origin: Option<String>,
}

impl ServiceConfig {
    /// Parses a config document; relative paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<ServiceConfig, serde_json::Error> {
        let mut cfg: ServiceConfig = serde_json::from_str(text)?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ServiceConfig, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Read { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        ServiceConfig::from_json(&text, base).map_err(|e| ServiceError::Config {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tileset_dir);
        for s in self.tilesets.values_mut() {
            if let Some(p) = s.superset.as_mut() {
                fix(p);
            }
            if let Some(p) = s.weights.as_mut() {
                fix(p);
            }
        }
    }
}

/// Superset and weights loaded at startup for one tile set.
#[derive(Default)]
struct Loaded {
    superset: Option<Arc<Superset>>,
    model: Option<Arc<Model>>,
}

/// A descriptor file found in the tile-set directory.
struct Listing {
    file: String,
    descriptor: Result<TileSetDescriptor, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    /// Rounds completed over all runs; never decreases.
    pub rounds: usize,
    /// Latest reported round and crop.
    pub round: usize,
    pub crop: usize,
    pub runs_done: usize,
    pub runs_total: usize,
    pub best_coverage: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Job {
    pub id: String,
    pub request: SolveRequest,
    pub state: JobState,
    pub progress: JobProgress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SolutionDoc>,
}

struct Inner {
    tileset_dir: PathBuf,
    loaded: BTreeMap<String, Loaded>,
    jobs: Mutex<HashMap<String, Job>>,
}

/// Immutable tile sets and models plus the job table.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
    cors: Option<String>,
}

fn read_descriptor(path: &Path) -> Result<TileSetDescriptor, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let d = tileset_from_str(&text).map_err(|e| e.to_string())?;
    TileSet::from_descriptor(&d).map_err(|e| e.to_string())?;
    Ok(d)
}

/// Descriptor files in `dir`, sorted by file name.
fn scan(dir: &Path) -> std::io::Result<Vec<Listing>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files
        .into_iter()
        .map(|path| Listing {
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            descriptor: read_descriptor(&path),
        })
        .collect())
}

impl AppState {
    /// Loads or builds the configured supersets and weights. Descriptors are
    /// read from the tile-set directory, which is rescanned on every listing.
    pub fn load(cfg: &ServiceConfig) -> Result<AppState, ServiceError> {
        let listings = if cfg.tilesets.is_empty() {
            Vec::new()
        } else {
            scan(&cfg.tileset_dir).map_err(|source| ServiceError::Read {
                path: cfg.tileset_dir.clone(),
                source,
            })?
        };
        for l in &listings {
            if let Err(e) = &l.descriptor {
                warn!("{}: {e}", l.file);
            }
        }
        let mut loaded = BTreeMap::new();
        for (name, src) in &cfg.tilesets {
            let Some(d) = listings.iter().find_map(|l| l.descriptor.as_ref().ok().filter(|d| &d.name == name)) else {
                warn!("configured tile set '{name}' has no descriptor in {}", cfg.tileset_dir.display());
                continue;
            };
            let ss = match (&src.superset, src.rings) {
                (Some(path), _) => Some(load_superset(path).map_err(|source| ServiceError::Document { name: name.clone(), source })?),
                (None, Some(rings)) => {
                    let ts = TileSet::from_descriptor(d).map_err(|source| ServiceError::Tileset { name: name.clone(), source })?;
                    Some(build_superset(Arc::new(ts), rings).map_err(|source| ServiceError::Tileset { name: name.clone(), source })?)
                }
                (None, None) => None,
            };
            if let Some(ss) = &ss {
                info!("tile set '{name}': {} candidates, {} poses", ss.len(), ss.poses.len());
            }
            let mut entry = Loaded::default();
            if let Some(path) = &src.weights {
                let model = load_weights(path).map_err(|source| ServiceError::Document { name: name.clone(), source })?;
                if let Some(ss) = &ss {
                    if model.check_dims(ss.tileset.len(), ss.poses.len()).is_err() {
                        return Err(ServiceError::WeightsMismatch {
                            name: name.clone(),
                            expected: format!("{} types, {} poses", model.config.n_types, model.config.n_poses),
                            found: format!("{} types, {} poses", ss.tileset.len(), ss.poses.len()),
                        });
                    }
                }
                entry.model = Some(Arc::new(model));
            }
            entry.superset = ss.map(Arc::new);
            loaded.insert(name.clone(), entry);
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                tileset_dir: cfg.tileset_dir.clone(),
                loaded,
                jobs: Mutex::new(HashMap::new()),
            }),
            cors: cfg.cors_origin.clone(),
        })
    }

    /// Snapshot of a job.
    pub fn job(&self, id: &str) -> Option<Job> {
        self.inner.jobs.lock().expect("job table lock").get(id).cloned()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.inner.jobs.lock().expect("job table lock").get_mut(id) {
            f(job);
        }
    }
}

/// Error responses carry `{"error": message}`.
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
}

#[derive(Serialize)]
struct PrototileSummary {
    vertices: Vec<Point>,
    color: String,
}

#[derive(Serialize)]
struct TilesetSummary {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prototiles: Option<Vec<PrototileSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetry: Option<Symmetry>,
    superset_size: Option<usize>,
    has_weights: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn internal(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, msg.into())
}

fn scan_dir(st: &AppState) -> Result<Vec<Listing>, ApiError> {
    let dir = &st.inner.tileset_dir;
    scan(dir).map_err(|e| internal(format!("reading {}: {e}", dir.display())))
}

async fn list_tilesets(State(st): State<AppState>) -> Result<Json<Vec<TilesetSummary>>, ApiError> {
    let out = scan_dir(&st)?
        .into_iter()
        .map(|l| match l.descriptor {
            Ok(d) => {
                let loaded = st.inner.loaded.get(&d.name);
                TilesetSummary {
                    file: l.file,
                    superset_size: loaded.and_then(|e| e.superset.as_ref()).map(|s| s.len()),
                    has_weights: loaded.is_some_and(|e| e.model.is_some()),
                    prototiles: Some(
                        d.prototiles
                            .into_iter()
                            .map(|p| PrototileSummary {
                                vertices: p.vertices,
                                color: p.color,
                            })
                            .collect(),
                    ),
                    symmetry: Some(d.symmetry),
                    name: Some(d.name),
                    error: None,
                }
            }
            Err(msg) => TilesetSummary {
                file: l.file,
                name: None,
                prototiles: None,
                symmetry: None,
                superset_size: None,
                has_weights: false,
                error: Some(msg),
            },
        })
        .collect();
    Ok(Json(out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropRequest {
    pub tileset: String,
    pub polygon: Vec<Point>,
    #[serde(default)]
    pub holes: Vec<Vec<Point>>,
    #[serde(default)]
    pub pose: RigidTransform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CropResponse {
    pub candidate_count: usize,
    pub candidate_outlines: Vec<Vec<Point>>,
}

fn parse_region(outer: &[Point], holes: &[Vec<Point>]) -> Result<Region, ApiError> {
    let outer = Polygon::new(outer.to_vec()).map_err(|e| unprocessable(format!("polygon: {e}")))?;
    let holes = holes
        .iter()
        .enumerate()
        .map(|(i, h)| Polygon::new(h.clone()).map_err(|e| unprocessable(format!("hole {i}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Region::new(outer, holes).map_err(|e| unprocessable(format!("region: {e}")))
}

fn superset_of<'a>(st: &'a AppState, name: &str) -> Result<(&'a Loaded, Arc<Superset>), ApiError> {
    let missing = || ApiError(StatusCode::CONFLICT, format!("superset for '{name}' is not built"));
    if let Some(entry) = st.inner.loaded.get(name) {
        return Ok((entry, entry.superset.clone().ok_or_else(missing)?));
    }
    if scan_dir(st)?.iter().any(|l| l.descriptor.as_ref().is_ok_and(|d| d.name == name)) {
        return Err(missing());
    }
    Err(ApiError(StatusCode::NOT_FOUND, format!("unknown tile set '{name}'")))
}

async fn crop(State(st): State<AppState>, Json(req): Json<CropRequest>) -> Result<Json<CropResponse>, ApiError> {
    let region = parse_region(&req.polygon, &req.holes)?;
    let (_, ss) = superset_of(&st, &req.tileset)?;
    let idx = crop_superset(&ss, &region, &req.pose);
    Ok(Json(CropResponse {
        candidate_count: idx.len(),
        candidate_outlines: idx.iter().map(|&i| ss.placements[i].polygon.vertices().to_vec()).collect(),
    }))
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub tileset: String,
    pub polygon: Vec<Point>,
    #[serde(default)]
    pub holes: Vec<Vec<Point>>,
    /// Fixed placement of the shape over the superset; when absent the
    /// crop pose is searched.
    #[serde(default)]
    pub pose: Option<RigidTransform>,
    pub policy: String,
    #[serde(default = "default_one")]
    pub runs: usize,
    #[serde(default = "default_one")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub acceptance: Acceptance,
}

#[derive(Serialize, Deserialize)]
pub struct SolveAccepted {
    pub job_id: String,
}

fn new_job_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

async fn solve(State(st): State<AppState>, Json(req): Json<SolveRequest>) -> Result<(StatusCode, Json<SolveAccepted>), ApiError> {
    let region = parse_region(&req.polygon, &req.holes)?;
    let (entry, ss) = superset_of(&st, &req.tileset)?;
    let policy = match req.policy.as_str() {
        "gnn" => Policy::Gnn(
            entry
                .model
                .clone()
                .ok_or_else(|| unprocessable(format!("no weights configured for '{}'", req.tileset)))?,
        ),
        "greedy" => Policy::Greedy,
        "random" => Policy::Random,
        other => return Err(unprocessable(format!("unknown policy '{other}'"))),
    };
    if req.runs == 0 {
        return Err(unprocessable("runs must be at least 1"));
    }
    if req.pose.is_none() && !(1..=54).contains(&req.k) {
        return Err(unprocessable(format!("k must lie in 1..=54, got {}", req.k)));
    }
    let tile_req = TileRequest {
        k: req.k,
        runs: req.runs,
        seed: req.seed,
        options: SolveOptions {
            acceptance: req.acceptance,
            ..SolveOptions::default()
        },
        fixed_pose: req.pose,
    };
    let id = new_job_id();
    let job = Job {
        id: id.clone(),
        request: req,
        state: JobState::Queued,
        progress: JobProgress {
            runs_total: if tile_req.fixed_pose.is_some() { 1 } else { tile_req.k } * tile_req.runs,
            ..JobProgress::default()
        },
        digest: None,
        error: None,
        result: None,
    };
    st.inner.jobs.lock().expect("job table lock").insert(id.clone(), job);
    let worker = st.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || run_job(&worker, &job_id, &policy, &ss, &region, &tile_req));
    Ok((StatusCode::ACCEPTED, Json(SolveAccepted { job_id: id })))
}

fn run_job(st: &AppState, id: &str, policy: &Policy, ss: &Superset, region: &Region, req: &TileRequest) {
    st.update(id, |j| j.state = JobState::Running);
    let report = |p: Progress| {
        st.update(id, |j| {
            let pr = &mut j.progress;
            pr.round = p.round;
            pr.crop = p.crop;
            match p.coverage {
                None => pr.rounds += 1,
                Some(c) => {
                    pr.runs_done += 1;
                    pr.best_coverage = Some(pr.best_coverage.map_or(c, |b| b.max(c)));
                }
            }
        })
    };
    match tile_region_with(policy, ss, region, req, &report) {
        Ok(sol) => {
            let doc = SolutionDoc::new(&sol, &ss.tileset, policy, req);
            info!("job {id}: coverage {:.4}, {} tiles", sol.metrics.coverage, sol.selected.len());
            st.update(id, |j| {
                j.digest = Some(doc.digest());
                j.result = Some(doc);
                j.state = JobState::Done;
            });
        }
        Err(e) => {
            warn!("job {id} failed: {e}");
            st.update(id, |j| {
                j.error = Some(e.to_string());
                j.state = JobState::Failed;
            });
        }
    }
}

fn find_job(st: &AppState, id: &str) -> Result<Job, ApiError> {
    st.job(id).ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown job '{id}'")))
}

async fn get_job(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Job>, ApiError> {
    find_job(&st, &id).map(Json)
}

async fn get_solution(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<SolutionDoc>, ApiError> {
    let job = find_job(&st, &id)?;
    match (job.state, job.result) {
        (JobState::Done, Some(doc)) => Ok(Json(doc)),
        (JobState::Failed, _) => Err(ApiError(StatusCode::CONFLICT, job.error.unwrap_or_default())),
        _ => Err(ApiError(StatusCode::CONFLICT, format!("job '{id}' has not finished"))),
    }
}

pub fn router(state: AppState) -> Router {
    let origin = match state.cors.as_deref().and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/tilesets", get(list_tilesets))
        .route("/api/crop", post(crop))
        .route("/api/solve", post(solve))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/solution", get(get_solution))
        .layer(cors)
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
