//! The subcommands. All files go through one writer thread; workers only send it bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use ctl_core::analysis::classify_branch;
use ctl_core::mesh::{build_mesh, SymmetricMesh};
use ctl_core::optimizer::{bubble_init, lambda_sweep_with, minimize, perturb, to_pde_solution, Branch, SweepStart};
use ctl_core::symmetry::{GroupSpec, SymmetryGroup};
use ctl_core::trace_constant::{closed_form_p2, threshold, Method, OracleCache, OracleEstimate, ThresholdSpec};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report::{self, BranchRecord, Summary};

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const ORACLE_CACHE: &str = "oracle_cache.json";

/// Resumable state of one `(k, seed)` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub k: usize,
    pub seed: u64,
    /// Index of the next `lambda` stage to solve.
    pub stage: usize,
    pub records: Vec<BranchRecord>,
}

impl Checkpoint {
    pub fn path(out: &Path, k: usize, seed: u64) -> PathBuf {
        out.join(CHECKPOINT_DIR).join(format!("k{k}_seed{seed}.json"))
    }

    pub fn load(path: &Path) -> CliResult<Option<Self>> {
        match std::fs::read_to_string(path) {
            Ok(s) => Ok(Some(serde_json::from_str(&s)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

type FamilyResult = (Vec<BranchRecord>, SymmetricMesh);

enum WriteRequest {
    File(PathBuf, Vec<u8>),
}

/// Writes through a temporary file and a rename, so an interrupted run never leaves half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub fn output_dir(cfg: &ExperimentConfig) -> &Path {
    &cfg.output_dir
}

/// `K(n, p)` by the configured method, using the oracle cache in the output directory.
pub fn trace_constant(cfg: &ExperimentConfig) -> CliResult<(f64, Method)> {
    match cfg.oracle.method {
        Method::ClosedForm => {
            if cfg.p != 2.0 {
                return Err(CliError::Config(format!("the closed form needs p = 2, got {}", cfg.p)));
            }
            Ok((closed_form_p2(cfg.n).map_err(|e| CliError::Config(e.to_string()))?, Method::ClosedForm))
        }
        Method::Oracle => Ok((oracle_estimate(cfg)?.k_estimate, Method::Oracle)),
    }
}

pub fn oracle_estimate(cfg: &ExperimentConfig) -> CliResult<OracleEstimate> {
    let path = output_dir(cfg).join(ORACLE_CACHE);
    let mut cache = OracleCache::load(&path)?;
    let est = cache.get_or_compute(cfg.n, cfg.p, cfg.oracle.truncation_radius, cfg.oracle.resolution)?;
    cache.save(&path)?;
    Ok(est)
}

fn record(branch: Branch, mesh: &SymmetricMesh, th: &ThresholdSpec) -> ctl_core::Result<BranchRecord> {
    let mut branch = branch;
    branch.classification = Some(classify_branch(&branch, mesh, th)?);
    let pde = to_pde_solution(&branch, mesh)?;
    Ok(BranchRecord { branch, threshold: *th, mu: pde.mu, residual: pde.residual })
}

/// Runs (or resumes) the sweep of one family. Checkpoints are sent to the writer after every stage.
fn sweep_family(
    cfg: &ExperimentConfig,
    hash: &str,
    k: usize,
    seed: u64,
    k_estimate: f64,
    method: Method,
    writer: &mpsc::Sender<WriteRequest>,
) -> CliResult<FamilyResult> {
    let out = output_dir(cfg);
    let path = Checkpoint::path(out, k, seed);
    let mut ckpt = match Checkpoint::load(&path)? {
        Some(c) if c.config_hash == hash => c,
        Some(_) => {
            log::warn!("{} belongs to a different configuration; starting over", path.display());
            Checkpoint { config_hash: hash.into(), k, seed, stage: 0, records: Vec::new() }
        }
        None => Checkpoint { config_hash: hash.into(), k, seed, stage: 0, records: Vec::new() },
    };
    let mesh = build_mesh(cfg.n, k, cfg.refinement)?;
    if ckpt.stage >= cfg.lambda_schedule.len() {
        log::info!("k={k} seed={seed}: complete in checkpoint");
        return Ok((ckpt.records, mesh));
    }
    let spec = GroupSpec::for_dim(cfg.n, k)?;
    let group = SymmetryGroup::new(spec)?;
    let set = cfg.orbital_set(spec)?;
    let solver = cfg.solver_config(&set, cfg.lambda_schedule[0])?;
    let th = threshold(cfg.n, cfg.p, set.m_a, k_estimate, method);
    let start = SweepStart { stage: ckpt.stage, field: ckpt.records.last().map(|r| r.branch.field.clone()) };
    if ckpt.stage > 0 {
        log::info!("k={k} seed={seed}: resuming at stage {}", ckpt.stage);
    }
    lambda_sweep_with(&solver, &group, &set, &mesh, seed, start, |b| {
        let rec = record(b.clone(), &mesh, &th)?;
        log::info!(
            "k={k} seed={seed} lambda={}: quotient {:.6} (threshold {:.6}), {} iterations, concentrated {}",
            b.lambda,
            b.energy.quotient,
            th.threshold,
            b.iterations,
            rec.branch.classification.as_ref().is_some_and(|c| c.concentrated)
        );
        ckpt.records.push(rec);
        ckpt.stage += 1;
        let bytes = serde_json::to_vec(&ckpt)?;
        // the writer outlives every worker
        let _ = writer.send(WriteRequest::File(path.clone(), bytes));
        Ok(())
    })?;
    Ok((ckpt.records, mesh))
}

/// Runs the sweep over every `k` and seed with at most `workers` families in flight, then writes
/// the report. Results do not depend on `workers`.
pub fn sweep(cfg: &ExperimentConfig, workers: usize) -> CliResult<Summary> {
    let out = output_dir(cfg).to_path_buf();
    std::fs::create_dir_all(&out)?;
    let (k_estimate, method) = trace_constant(cfg)?;
    let hash = cfg.hash();
    let jobs: Vec<(usize, u64)> = cfg.ks.iter().flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<FamilyResult>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let (tx, rx) = mpsc::channel::<WriteRequest>();

    let write_errors = std::thread::scope(|s| {
        let writer = s.spawn(move || {
            let mut errors = Vec::new();
            for WriteRequest::File(path, bytes) in rx {
                if let Err(e) = write_atomic(&path, &bytes) {
                    errors.push(format!("{}: {e}", path.display()));
                }
            }
            errors
        });
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            let tx = tx.clone();
            let (jobs, next, results, hash) = (&jobs, &next, &results, &hash);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(k, seed)) = jobs.get(i) else { break };
                let r = sweep_family(cfg, hash, k, seed, k_estimate, method, &tx);
                if let Err(e) = &r {
                    log::error!("k={k} seed={seed}: {e}");
                }
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
        drop(tx);
        writer.join().expect("writer thread")
    });
    if let Some(e) = write_errors.into_iter().next() {
        return Err(CliError::Runtime(format!("checkpoint write failed: {e}")));
    }

    let mut records = Vec::new();
    let mut meshes = BTreeMap::new();
    for (r, &(k, _)) in results.into_inner().expect("no worker panicked").into_iter().zip(&jobs) {
        let (rs, mesh) = r.expect("every job ran")?;
        records.extend(rs);
        meshes.entry(k).or_insert(mesh);
    }
    report::sort_records(&mut records);
    report::write_all(&out, &records, &meshes)
}

/// Re-renders the report from the checkpoints of this configuration, without solving.
pub fn rerender(cfg: &ExperimentConfig) -> CliResult<Summary> {
    let out = output_dir(cfg);
    let hash = cfg.hash();
    let mut records = Vec::new();
    let mut meshes = BTreeMap::new();
    for &k in &cfg.ks {
        for &seed in &cfg.seeds {
            let path = Checkpoint::path(out, k, seed);
            let Some(ckpt) = Checkpoint::load(&path)? else {
                return Err(CliError::Runtime(format!("missing checkpoint {}", path.display())));
            };
            if ckpt.config_hash != hash {
                return Err(CliError::Runtime(format!("{} was written by a different configuration", path.display())));
            }
            if ckpt.stage < cfg.lambda_schedule.len() {
                log::warn!("k={k} seed={seed}: only {} of {} stages done", ckpt.stage, cfg.lambda_schedule.len());
            }
            records.extend(ckpt.records);
        }
        meshes.insert(k, build_mesh(cfg.n, k, cfg.refinement)?);
    }
    report::sort_records(&mut records);
    report::write_all(out, &records, &meshes)
}

/// One minimization at `lambda` (default: the last scheduled value) from the bubble start.
pub fn solve(cfg: &ExperimentConfig, k: Option<usize>, lambda: Option<f64>) -> CliResult<BranchRecord> {
    let k = k.unwrap_or(cfg.ks[0]);
    let lambda = lambda.unwrap_or(*cfg.lambda_schedule.last().expect("validated schedule"));
    let seed = cfg.seeds[0];
    let out = output_dir(cfg).join("solve");
    std::fs::create_dir_all(&out)?;
    let (k_estimate, method) = trace_constant(cfg)?;
    let mesh = build_mesh(cfg.n, k, cfg.refinement)?;
    let spec = GroupSpec::for_dim(cfg.n, k)?;
    let group = SymmetryGroup::new(spec)?;
    let set = cfg.orbital_set(spec)?;
    let solver = cfg.solver_config(&set, lambda)?;
    solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let u0 = perturb(&bubble_init(&set, solver.width(), &mesh)?, seed, solver.perturbation, &mesh);
    let mut branch = minimize(&u0, &solver, &group, &mesh, &set)?;
    branch.seed = seed;
    let th = threshold(cfg.n, cfg.p, set.m_a, k_estimate, method);
    let rec = record(branch, &mesh, &th)?;
    let records = vec![rec.clone()];
    let meshes = BTreeMap::from([(k, mesh)]);
    report::write_all(&out, &records, &meshes)?;
    std::fs::write(out.join("branch.json"), serde_json::to_vec(&rec)?)?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConstantRow {
    pub method: Method,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub k: f64,
    /// Relative difference to the oracle (zero on the oracle row).
    pub relative_difference: f64,
    pub truncation_radius: Option<f64>,
    pub resolution: Option<usize>,
    pub truncation_sensitivity: Option<f64>,
}

/// The oracle estimate and, when `p = 2` and `n >= 3`, the closed form.
pub fn trace_constant_table(cfg: &ExperimentConfig) -> CliResult<Vec<TraceConstantRow>> {
    std::fs::create_dir_all(output_dir(cfg))?;
    let est = oracle_estimate(cfg)?;
    let mut rows = vec![TraceConstantRow {
        method: Method::Oracle,
        n: cfg.n,
        p: cfg.p,
        q: est.q,
        k: est.k_estimate,
        relative_difference: 0.0,
        truncation_radius: Some(est.truncation_radius),
        resolution: Some(est.resolution),
        truncation_sensitivity: Some(est.truncation_sensitivity),
    }];
    if cfg.p == 2.0 && cfg.n >= 3 {
        let k = closed_form_p2(cfg.n)?;
        rows.push(TraceConstantRow {
            method: Method::ClosedForm,
            n: cfg.n,
            p: cfg.p,
            q: est.q,
            k,
            relative_difference: (k - est.k_estimate).abs() / est.k_estimate,
            truncation_radius: None,
            resolution: None,
            truncation_sensitivity: None,
        });
    }
    let out = output_dir(cfg);
    let mut w = csv::Writer::from_path(out.join("trace_constant.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(out.join("trace_constant.json"), serde_json::to_string_pretty(&rows)?)?;
    Ok(rows)
}
