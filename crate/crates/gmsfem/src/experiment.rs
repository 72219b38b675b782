//! Experiment driver: config parsing, the offline/online pipeline, CSV
//! results and the on-disk offline cache.
//!
//! Configs are flat `key = value` text files with `#` comments. All
//! randomness flows from the seeds in the config; timing columns are
//! emitted as zeros unless `emit_timings = true`, so identical configs
//! produce byte-identical CSV files. The only environment override is the
//! output directory (`GMSFEM_OUTPUT_DIR`).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use faer::Mat;

use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::fine::{dump_solution_csv, solve_fine};
use crate::inflow::BoundaryData;
use crate::media::{default_contrast_field, MediaSpec};
use crate::mesh::{build_nested_mesh, NestedMesh};
use crate::metrics::{errors_e1_e2, snapshot_ratio};
use crate::offline::{
    build_offline, eps_limit_study, select_space, BlockModes, EpsLimitStudy, ModeCount,
    MultiscaleSpace, OfflineBuild, SnapshotMethod,
};
use crate::online::{assemble_coarse, solve_online};
use crate::ordinates::OrdinateSet;
use crate::snapshot::{Provenance, SnapshotSpace};

/// Media description at the config level.
#[derive(Debug, Clone, PartialEq)]
pub enum MediaConfig {
    Oscillatory,
    Contrast { value: f64, power: u32, seed: u64 },
}

/// Requested mode count per run row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeSpec {
    Count(usize),
    Full,
}

impl ModeSpec {
    pub fn label(&self) -> String {
        match self {
            ModeSpec::Count(l) => l.to_string(),
            ModeSpec::Full => "full".to_string(),
        }
    }
}

/// Parsed and validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nc_x: usize,
    pub nc_y: usize,
    pub nf: usize,
    pub m: usize,
    pub epsilon: f64,
    pub media: MediaConfig,
    pub boundary: String,
    pub method: SnapshotMethod,
    pub layers: usize,
    pub mode_counts: Vec<ModeSpec>,
    pub output: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub dump_solution: Option<PathBuf>,
    pub emit_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nc_x: 10,
            nc_y: 10,
            nf: 10,
            m: 6,
            epsilon: 5e-3,
            media: MediaConfig::Oscillatory,
            boundary: "paper".to_string(),
            method: SnapshotMethod::Ran { k: 21, seed: 0 },
            layers: 1,
            mode_counts: vec![
                ModeSpec::Count(1),
                ModeSpec::Count(2),
                ModeSpec::Count(3),
                ModeSpec::Count(5),
                ModeSpec::Count(7),
                ModeSpec::Count(10),
                ModeSpec::Count(15),
                ModeSpec::Count(20),
            ],
            output: PathBuf::from("results.csv"),
            cache_dir: None,
            dump_solution: None,
            emit_timings: false,
        }
    }
}

impl ExperimentConfig {
    /// Parse the flat `key = value` document. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}: expected key = value", lineno + 1)));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::config(format!("duplicate key '{key}'")));
            }
        }
        Self::from_map(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        fn take(map: &mut BTreeMap<String, String>, key: &str) -> Option<String> {
            map.remove(key)
        }
        fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>().map_err(|_| Error::config(format!("invalid value for {key}: '{v}'")))
        }

        let mut cfg = ExperimentConfig::default();
        if let Some(v) = take(&mut map, "mesh_coarse_x") {
            cfg.nc_x = parse_num("mesh_coarse_x", &v)?;
        }
        if let Some(v) = take(&mut map, "mesh_coarse_y") {
            cfg.nc_y = parse_num("mesh_coarse_y", &v)?;
        }
        if let Some(v) = take(&mut map, "mesh_fine_per_block") {
            cfg.nf = parse_num("mesh_fine_per_block", &v)?;
        }
        if let Some(v) = take(&mut map, "ordinates") {
            cfg.m = parse_num("ordinates", &v)?;
        }
        if let Some(v) = take(&mut map, "epsilon") {
            cfg.epsilon = parse_num("epsilon", &v)?;
        }
        let media_kind = take(&mut map, "media").unwrap_or_else(|| "oscillatory".into());
        let c_value = take(&mut map, "contrast_value");
        let c_power = take(&mut map, "contrast_power");
        let c_seed = take(&mut map, "contrast_seed");
        cfg.media = match media_kind.as_str() {
            "oscillatory" => {
                if c_value.is_some() || c_power.is_some() || c_seed.is_some() {
                    return Err(Error::config("contrast_* keys require media = contrast"));
                }
                MediaConfig::Oscillatory
            }
            "contrast" => MediaConfig::Contrast {
                value: c_value.map(|v| parse_num("contrast_value", &v)).transpose()?.unwrap_or(10.0),
                power: c_power.map(|v| parse_num("contrast_power", &v)).transpose()?.unwrap_or(4),
                seed: c_seed.map(|v| parse_num("contrast_seed", &v)).transpose()?.unwrap_or(1),
            },
            other => return Err(Error::config(format!("unknown media '{other}'"))),
        };
        if let Some(v) = take(&mut map, "boundary_data") {
            match v.as_str() {
                "paper" | "zero" | "one" => cfg.boundary = v,
                other => return Err(Error::config(format!("unknown boundary_data '{other}'"))),
            }
        }
        let method = take(&mut map, "snapshot_method").unwrap_or_else(|| "ran".into());
        let k = take(&mut map, "snapshot_count")
            .map(|v| parse_num("snapshot_count", &v))
            .transpose()?
            .unwrap_or(21usize);
        let seed = take(&mut map, "snapshot_seed")
            .map(|v| parse_num("snapshot_seed", &v))
            .transpose()?
            .unwrap_or(0u64);
        cfg.method = match method.as_str() {
            "det" => SnapshotMethod::Det,
            "ran" => SnapshotMethod::Ran { k, seed },
            other => return Err(Error::config(format!("unknown snapshot_method '{other}'"))),
        };
        if let Some(v) = take(&mut map, "oversample_layers") {
            cfg.layers = parse_num("oversample_layers", &v)?;
        }
        if let Some(v) = take(&mut map, "basis_counts") {
            let mut counts = Vec::new();
            for item in v.split(',') {
                let item = item.trim();
                if item == "full" {
                    counts.push(ModeSpec::Full);
                } else {
                    counts.push(ModeSpec::Count(parse_num("basis_counts", item)?));
                }
            }
            if counts.is_empty() {
                return Err(Error::config("basis_counts must not be empty"));
            }
            cfg.mode_counts = counts;
        }
        if let Some(v) = take(&mut map, "output") {
            cfg.output = PathBuf::from(v);
        }
        if let Some(v) = take(&mut map, "cache_dir") {
            cfg.cache_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = take(&mut map, "dump_solution") {
            cfg.dump_solution = Some(PathBuf::from(v));
        }
        if let Some(v) = take(&mut map, "emit_timings") {
            cfg.emit_timings = match v.as_str() {
                "true" => true,
                "false" => false,
                other => return Err(Error::config(format!("invalid emit_timings '{other}'"))),
            };
        }
        if let Some(key) = map.keys().next() {
            return Err(Error::config(format!("unknown key '{key}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nc_x == 0 || self.nc_y == 0 || self.nf == 0 {
            return Err(Error::config("mesh counts must be positive"));
        }
        if self.m < 2 {
            return Err(Error::config("need at least two ordinates"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if let SnapshotMethod::Ran { k, .. } = self.method {
            if k == 0 {
                return Err(Error::config("snapshot_count must be positive"));
            }
        }
        if let MediaConfig::Contrast { value, .. } = self.media {
            if !(value >= 1.0) {
                return Err(Error::config("contrast_value must be >= 1"));
            }
        }
        if self.mode_counts.iter().any(|m| matches!(m, ModeSpec::Count(0))) {
            return Err(Error::config("basis_counts entries must be positive"));
        }
        Ok(())
    }

    pub fn boundary_data(&self) -> BoundaryData {
        match self.boundary.as_str() {
            "zero" => BoundaryData::Zero,
            "one" => BoundaryData::One,
            _ => BoundaryData::CosineRidge,
        }
    }

    pub fn media_spec(&self, mesh: &NestedMesh) -> Result<MediaSpec> {
        match &self.media {
            MediaConfig::Oscillatory => Ok(MediaSpec::Oscillatory),
            MediaConfig::Contrast { value, power, seed } => {
                Ok(default_contrast_field(mesh, *value, *seed)?.with_power(*power))
            }
        }
    }

    /// Output path with the directory override applied.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output_dir(&self.output)
    }

    /// Canonical parameter string identifying the offline artifacts
    /// (mesh, ordinates, epsilon, media, method, oversampling).
    pub fn offline_key(&self) -> String {
        let media = match &self.media {
            MediaConfig::Oscillatory => "oscillatory".to_string(),
            MediaConfig::Contrast { value, power, seed } => {
                format!("contrast:{:016x}:{power}:{seed}", value.to_bits())
            }
        };
        let method = match &self.method {
            SnapshotMethod::Det => "det".to_string(),
            SnapshotMethod::Ran { k, seed } => format!("ran:{k}:{seed}"),
        };
        format!(
            "v1|mesh:{}x{}x{}|m:{}|eps:{:016x}|media:{media}|method:{method}|layers:{}",
            self.nc_x,
            self.nc_y,
            self.nf,
            self.m,
            self.epsilon.to_bits(),
            self.layers
        )
    }
}

/// Apply the `GMSFEM_OUTPUT_DIR` override to a path.
pub fn resolve_output_dir(path: &Path) -> PathBuf {
    match std::env::var_os("GMSFEM_OUTPUT_DIR") {
        Some(dir) if !dir.is_empty() => {
            let name = path.file_name().map(PathBuf::from).unwrap_or_else(|| path.to_path_buf());
            PathBuf::from(dir).join(name)
        }
        _ => path.to_path_buf(),
    }
}

/// One CSV row of a run.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub label: String,
    pub snapshot_ratio: f64,
    pub e1: f64,
    pub e2: f64,
    pub lambda_star: f64,
    pub t_offline_s: f64,
    pub t_online_s: f64,
}

/// Full in-memory result of one experiment run.
pub struct PipelineRun {
    pub mesh: NestedMesh,
    pub ords: OrdinateSet,
    pub media: MediaSpec,
    pub fine: KineticField,
    pub offline: OfflineBuild,
    pub rows: Vec<RunRow>,
    /// Multiscale solution and condition number per requested mode count.
    pub solutions: Vec<KineticField>,
    pub conditions: Vec<f64>,
    pub spaces: Vec<MultiscaleSpace>,
}

/// CSV header shared by `run` outputs.
pub const CSV_HEADER: &str = "L,snapshot_ratio,e1,e2,lambda_star,t_offline_s,t_online_s";

fn rows_to_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.label, r.snapshot_ratio, r.e1, r.e2, r.lambda_star, r.t_offline_s, r.t_online_s
        ));
    }
    out
}

/// Execute the full pipeline for one configuration.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let mesh = build_nested_mesh(cfg.nc_x, cfg.nc_y, cfg.nf)?;
    let ords = OrdinateSet::equispaced(cfg.m)?;
    let media = cfg.media_spec(&mesh)?;
    let g = cfg.boundary_data();

    let fine = solve_fine(&mesh, &ords, &media, cfg.epsilon, &g)?;

    let t0 = Instant::now();
    let offline = load_or_build_offline(cfg, &mesh, &ords, &media)?;
    let t_offline = t0.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    let mut conditions = Vec::new();
    let mut spaces = Vec::new();
    for spec in &cfg.mode_counts {
        let count = match spec {
            ModeSpec::Count(l) => ModeCount::Uniform(*l),
            ModeSpec::Full => ModeCount::Full,
        };
        let t1 = Instant::now();
        let space = select_space(&offline.modes, &count)?;
        let sys = assemble_coarse(&space, &offline.snapshots, &mesh, &ords, &media, cfg.epsilon, &g)?;
        let cond = sys.condition()?;
        let (_, u_coarse) = solve_online(&sys, &mesh)?;
        let t_online = t1.elapsed().as_secs_f64();
        let (e1, e2) = errors_e1_e2(&fine, &u_coarse, &mesh, &ords)?;
        rows.push(RunRow {
            label: spec.label(),
            snapshot_ratio: snapshot_ratio(&space, &offline.snapshots),
            e1,
            e2,
            lambda_star: space.lambda_star(),
            t_offline_s: if cfg.emit_timings { t_offline } else { 0.0 },
            t_online_s: if cfg.emit_timings { t_online } else { 0.0 },
        });
        solutions.push(u_coarse);
        conditions.push(cond);
        spaces.push(space);
    }

    Ok(PipelineRun { mesh, ords, media, fine, offline, rows, solutions, conditions, spaces })
}

/// Run one experiment and write its CSV (plus optional solution dumps).
/// Returns the rows that were written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRow>> {
    let run = run_pipeline(cfg)?;
    let out_path = cfg.resolved_output();
    write_atomic(&out_path, rows_to_csv(&run.rows).as_bytes())?;

    if let Some(base) = &cfg.dump_solution {
        let base = resolve_output_dir(base);
        let stem = base.to_string_lossy().to_string();
        let mut buf = Vec::new();
        dump_solution_csv(&mut buf, &run.fine, &run.mesh, &run.ords)?;
        write_atomic(Path::new(&format!("{stem}_fine.csv")), &buf)?;
        let mut norms = format!("L,{}\n", crate::metrics::NormReport::csv_header());
        for (spec, field) in cfg.mode_counts.iter().zip(&run.solutions) {
            let mut buf = Vec::new();
            dump_solution_csv(&mut buf, field, &run.mesh, &run.ords)?;
            write_atomic(Path::new(&format!("{stem}_online_L{}.csv", spec.label())), &buf)?;
            let diff = run.fine.sub(field)?;
            let report =
                crate::metrics::norm_report(&diff, &run.mesh, &run.ords, &run.media, cfg.epsilon)?;
            norms.push_str(&format!("{},{}\n", spec.label(), report.csv_row()));
        }
        write_atomic(Path::new(&format!("{stem}_norms.csv")), norms.as_bytes())?;
    }
    Ok(run.rows)
}

/// Result of an epsilon sweep.
pub struct SweepResult {
    pub rows: Vec<(f64, RunRow)>,
    pub study: Option<EpsLimitStudy>,
}

/// Run the experiment for each epsilon and an eigenvalue study on the
/// designated center block; write a combined CSV plus the study table.
pub fn sweep_epsilon(cfg: &ExperimentConfig, epsilons: &[f64]) -> Result<SweepResult> {
    if epsilons.is_empty() {
        return Err(Error::config("epsilon sweep list must not be empty"));
    }
    let mut rows = Vec::new();
    for &eps in epsilons {
        let mut sub = cfg.clone();
        sub.epsilon = eps;
        let run = run_pipeline(&sub)?;
        for row in run.rows {
            rows.push((eps, row));
        }
    }

    // Eigenvalue study on the center block over the descending eps list.
    let mut desc: Vec<f64> = epsilons.to_vec();
    desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    desc.dedup();
    let study = if desc.len() >= 2 {
        let mesh = build_nested_mesh(cfg.nc_x, cfg.nc_y, cfg.nf)?;
        let ords = OrdinateSet::equispaced(cfg.m)?;
        let media = cfg.media_spec(&mesh)?;
        let center = mesh.block_id(cfg.nc_x / 2, cfg.nc_y / 2);
        Some(eps_limit_study(&mesh, &ords, &media, &cfg.method, cfg.layers, center, &desc)?)
    } else {
        None
    };

    let out_path = cfg.resolved_output();
    let mut csv = String::from("epsilon,");
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for (eps, r) in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            eps, r.label, r.snapshot_ratio, r.e1, r.e2, r.lambda_star, r.t_offline_s, r.t_online_s
        ));
    }
    write_atomic(&out_path, csv.as_bytes())?;

    if let Some(study) = &study {
        let mut csv = String::from("epsilon,mode,lambda\n");
        for (i, &eps) in study.epsilons.iter().enumerate() {
            for (k, &l) in study.eigenvalues[i].iter().enumerate() {
                csv.push_str(&format!("{eps},{k},{l}\n"));
            }
        }
        let stem = out_path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let eig_path = out_path.with_file_name(format!("{stem}_eigenvalues.csv"));
        write_atomic(&eig_path, csv.as_bytes())?;
    }

    Ok(SweepResult { rows, study })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Offline cache: versioned binary file keyed by the canonical parameters.
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 8] = b"GMSFEMC1";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn load_or_build_offline(
    cfg: &ExperimentConfig,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
) -> Result<OfflineBuild> {
    let key = cfg.offline_key();
    if let Some(dir) = &cfg.cache_dir {
        let path = dir.join(format!("offline-{:016x}.bin", fnv1a64(key.as_bytes())));
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(build) = decode_offline(&bytes, &key, cfg, mesh) {
                return Ok(build);
            }
        }
        let build = build_offline(mesh, ords, media, cfg.epsilon, &cfg.method, cfg.layers)?;
        fs::create_dir_all(dir)?;
        write_atomic(&path, &encode_offline(&build, &key))?;
        Ok(build)
    } else {
        build_offline(mesh, ords, media, cfg.epsilon, &cfg.method, cfg.layers)
    }
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64_slice(buf: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

fn encode_offline(build: &OfflineBuild, key: &str) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    push_u64(&mut buf, key.len() as u64);
    buf.extend_from_slice(key.as_bytes());
    push_u64(&mut buf, build.snapshots.len() as u64);
    for (snap, modes) in build.snapshots.iter().zip(&build.modes) {
        let basis = snap.basis();
        push_u64(&mut buf, basis.nrows() as u64);
        push_u64(&mut buf, basis.ncols() as u64);
        for j in 0..basis.ncols() {
            push_f64_slice(&mut buf, (0..basis.nrows()).map(|i| basis[(i, j)]));
        }
        push_f64_slice(&mut buf, modes.eigenvalues.iter().copied());
        for j in 0..modes.eigenvectors.ncols() {
            push_f64_slice(
                &mut buf,
                (0..modes.eigenvectors.nrows()).map(|i| modes.eigenvectors[(i, j)]),
            );
        }
        buf.extend_from_slice(&modes.ridge.to_bits().to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::config("cache file truncated"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

fn decode_offline(
    bytes: &[u8],
    key: &str,
    cfg: &ExperimentConfig,
    mesh: &NestedMesh,
) -> Result<OfflineBuild> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(Error::config("cache magic mismatch"));
    }
    let klen = r.u64()? as usize;
    let stored = std::str::from_utf8(r.take(klen)?).map_err(|_| Error::config("bad cache key"))?;
    if stored != key {
        return Err(Error::config("cache key mismatch"));
    }
    let nb = r.u64()? as usize;
    if nb != mesh.n_blocks() {
        return Err(Error::config("cache block count mismatch"));
    }
    let provenance = match &cfg.method {
        SnapshotMethod::Det => Provenance::Det,
        SnapshotMethod::Ran { k, seed } => Provenance::Ran { k: *k, seed: *seed },
    };
    let mut snapshots = Vec::with_capacity(nb);
    let mut modes = Vec::with_capacity(nb);
    for block in 0..nb {
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        if rows != cfg.m * mesh.nodes_per_block() {
            return Err(Error::config("cache basis shape mismatch"));
        }
        let mut basis = Mat::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                basis[(i, j)] = r.f64()?;
            }
        }
        let mut eigenvalues = Vec::with_capacity(cols);
        for _ in 0..cols {
            eigenvalues.push(r.f64()?);
        }
        let mut eigenvectors = Mat::zeros(cols, cols);
        for j in 0..cols {
            for i in 0..cols {
                eigenvectors[(i, j)] = r.f64()?;
            }
        }
        let ridge = r.f64()?;
        snapshots.push(SnapshotSpace::from_parts(
            block,
            cfg.m,
            mesh.nodes_per_block(),
            basis,
            provenance.clone(),
        ));
        modes.push(BlockModes { block, eigenvalues, eigenvectors, ridge });
    }
    Ok(OfflineBuild { snapshots, modes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# comment
mesh_coarse_x = 4
mesh_coarse_y = 5
mesh_fine_per_block = 6
ordinates = 4
epsilon = 1e-2
media = contrast
contrast_value = 10
contrast_power = 2
contrast_seed = 3
boundary_data = paper
snapshot_method = ran
snapshot_count = 7
snapshot_seed = 9
oversample_layers = 1
basis_counts = 1,2,full
output = out/results.csv
emit_timings = false
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.nc_x, 4);
        assert_eq!(cfg.nc_y, 5);
        assert_eq!(cfg.media, MediaConfig::Contrast { value: 10.0, power: 2, seed: 3 });
        assert_eq!(cfg.method, SnapshotMethod::Ran { k: 7, seed: 9 });
        assert_eq!(cfg.mode_counts.len(), 3);
        assert_eq!(cfg.mode_counts[2], ModeSpec::Full);
    }

    #[test]
    fn rejects_unknown_and_inconsistent_keys() {
        assert!(ExperimentConfig::parse("bogus_key = 1").is_err());
        assert!(ExperimentConfig::parse("media = oscillatory\ncontrast_value = 2").is_err());
        assert!(ExperimentConfig::parse("epsilon = -1").is_err());
        assert!(ExperimentConfig::parse("basis_counts = 0").is_err());
        assert!(ExperimentConfig::parse("mesh_coarse_x = x").is_err());
        assert!(ExperimentConfig::parse("ordinates = 1").is_err());
    }

    #[test]
    fn offline_key_distinguishes_parameters() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.epsilon = 1e-2;
        assert_ne!(a.offline_key(), b.offline_key());
        let mut c = a.clone();
        c.method = SnapshotMethod::Ran { k: 21, seed: 1 };
        assert_ne!(a.offline_key(), c.offline_key());
    }
}
