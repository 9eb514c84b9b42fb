//! Multi-stage pruning: a sequence of single-stage solves along decreasing
//! budgets, each on a model rebuilt around the previous stage's weights.
//!
//! Fresh models come from a [`StageProvider`]. [`SubprocessProvider`] talks
//! to an external command: it writes one line to the child's stdin holding
//! the absolute path of a weights file (an 8-byte little-endian `u64` count
//! followed by that many little-endian `f32`), and expects one line on stdout
//! with the absolute path of a bundle directory, then exit status 0.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use crate::bundle::{f32s_to_le, read_bundle, ProblemBundle};
use crate::dfo::{bso_dfo, DfoConfig, SolveTrace};
use crate::error::{FalconError, Result};
use crate::problem::Budgets;
use crate::quadratic::LowRankQuadratic;

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSchedule {
    stages: Vec<Budgets>,
}

fn interpolate(start: f64, end: f64, t: usize, stages: usize, exponent: f64) -> f64 {
    end + (start - end) * (1.0 - t as f64 / stages as f64).powf(exponent)
}

fn check_schedule(stages: usize, exponent: f64) -> Result<()> {
    if stages == 0 {
        return Err(FalconError::Domain("at least one stage is required".into()));
    }
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(FalconError::Domain(format!(
            "schedule exponent must be positive, got {exponent}"
        )));
    }
    Ok(())
}

fn nnz_sequence(start: usize, end: usize, stages: usize, exponent: f64) -> Vec<usize> {
    let mut floor = usize::MAX;
    (1..=stages)
        .map(|t| {
            let s = interpolate(start as f64, end as f64, t, stages, exponent).round() as usize;
            floor = floor.min(s.max(end));
            floor
        })
        .collect()
}

fn flop_sequence(start: f64, end: f64, stages: usize, exponent: f64) -> Vec<f64> {
    let mut floor = f64::INFINITY;
    (1..=stages)
        .map(|t| {
            let f = if t == stages {
                end
            } else {
                interpolate(start, end, t, stages, exponent)
            };
            floor = floor.min(f.max(end));
            floor
        })
        .collect()
}

/// `S_t = round(S + (S_init - S)(1 - t/T)^e)` and likewise `F_t`, for
/// `t = 1..=T`, made non-increasing.
pub fn schedule_budgets(
    s_init: usize,
    s: usize,
    f_init: f64,
    f: f64,
    stages: usize,
    exponent: f64,
) -> Result<BudgetSchedule> {
    check_schedule(stages, exponent)?;
    if s_init < s {
        return Err(FalconError::Domain(format!(
            "initial NNZ budget {s_init} is below the target {s}"
        )));
    }
    if !(f >= 0.0 && f_init >= f) {
        return Err(FalconError::Domain(format!(
            "initial FLOP budget {f_init} must be at least the target {f} >= 0"
        )));
    }
    let nnz = nnz_sequence(s_init, s, stages, exponent);
    let flops = flop_sequence(f_init, f, stages, exponent);
    Ok(BudgetSchedule {
        stages: nnz
            .into_iter()
            .zip(flops)
            .map(|(s, f)| Budgets::joint(s, f))
            .collect(),
    })
}

impl BudgetSchedule {
    /// Schedule from the dense totals down to `target`; an unbounded target
    /// budget stays unbounded at every stage.
    pub fn toward(
        target: &Budgets,
        dense_nnz: usize,
        dense_flops: f64,
        stages: usize,
        exponent: f64,
    ) -> Result<Self> {
        check_schedule(stages, exponent)?;
        target.check()?;
        let nnz = target
            .nnz
            .map(|s| nnz_sequence(dense_nnz.max(s), s, stages, exponent));
        let flops = target
            .flops
            .map(|f| flop_sequence(dense_flops.max(f), f, stages, exponent));
        Ok(Self {
            stages: (0..stages)
                .map(|t| Budgets {
                    nnz: nnz.as_ref().map(|v| v[t]),
                    flops: flops.as_ref().map(|v| v[t]),
                })
                .collect(),
        })
    }

    pub fn single(target: Budgets) -> Self {
        Self {
            stages: vec![target],
        }
    }

    pub fn stages(&self) -> &[Budgets] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn nnz_sequence(&self) -> Option<Vec<usize>> {
        self.stages.iter().map(|b| b.nnz).collect()
    }

    pub fn flop_sequence(&self) -> Option<Vec<f64>> {
        self.stages.iter().map(|b| b.flops).collect()
    }
}

/// Source of a fresh problem bundle at the current weights.
pub trait StageProvider {
    /// Bundle for stage `stage` (1-based) around `weights`.
    fn next_bundle(&mut self, stage: usize, weights: &[f64]) -> Result<ProblemBundle>;
}

/// Returns the same bundle at every stage.
#[derive(Debug, Clone)]
pub struct StaticProvider {
    bundle: ProblemBundle,
}

impl StaticProvider {
    pub fn new(bundle: ProblemBundle) -> Self {
        Self { bundle }
    }
}

impl StageProvider for StaticProvider {
    fn next_bundle(&mut self, _stage: usize, _weights: &[f64]) -> Result<ProblemBundle> {
        Ok(self.bundle.clone())
    }
}

/// Runs `sh -c COMMAND` once per stage.
#[derive(Debug)]
pub struct SubprocessProvider {
    command: String,
    scratch: tempfile::TempDir,
}

impl SubprocessProvider {
    pub fn new(command: impl Into<String>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            scratch: tempfile::tempdir()?,
        })
    }

    fn weights_path(&self, stage: usize) -> Result<PathBuf> {
        let dir = self.scratch.path().canonicalize()?;
        Ok(dir.join(format!("weights-stage-{stage}.bin")))
    }
}

/// Encode a weights file for the stage protocol.
pub fn encode_weights(weights: &[f64]) -> Vec<u8> {
    let mut out = (weights.len() as u64).to_le_bytes().to_vec();
    out.extend(f32s_to_le(weights.iter().map(|&w| w as f32)));
    out
}

/// Decode a weights file of the stage protocol.
pub fn decode_weights(bytes: &[u8]) -> Result<Vec<f32>> {
    let malformed = |m: String| FalconError::Domain(format!("malformed weights file: {m}"));
    let header: [u8; 8] = bytes
        .get(..8)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| malformed("missing length header".into()))?;
    let len = u64::from_le_bytes(header) as usize;
    let body = &bytes[8..];
    if Some(body.len()) != len.checked_mul(4) {
        return Err(malformed(format!(
            "header announces {len} values but {} bytes follow",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl StageProvider for SubprocessProvider {
    fn next_bundle(&mut self, stage: usize, weights: &[f64]) -> Result<ProblemBundle> {
        let path = self.weights_path(stage)?;
        std::fs::write(&path, encode_weights(weights))?;

        let provider_err = |m: String| FalconError::Provider(format!("`{}`: {m}", self.command));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| provider_err(format!("cannot start: {e}")))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            let _ = writeln!(stdin, "{}", path.display());
        }
        let mut out = String::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_string(&mut out)
            .map_err(|e| provider_err(format!("cannot read output: {e}")))?;
        let status = child
            .wait()
            .map_err(|e| provider_err(format!("cannot wait: {e}")))?;
        if !status.success() {
            return Err(provider_err(format!("exited with {status}")));
        }
        let line = out.lines().next().map(str::trim).unwrap_or("");
        let bundle_dir = Path::new(line);
        if line.is_empty() || !bundle_dir.is_absolute() {
            return Err(provider_err(format!(
                "expected an absolute bundle path, got {line:?}"
            )));
        }
        read_bundle(bundle_dir).map_err(|e| provider_err(e.to_string()))
    }
}

/// Single-stage model options shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub lambda: f64,
    pub rho: f64,
    pub bsize: usize,
}

/// Multi-stage solve: stage `t` builds the model from the provider's bundle
/// (the initial bundle at stage 1) and runs the single-stage solver with
/// budgets `schedule[t]`, warm-started from the previous stage's weights.
pub fn falcon_pp(
    provider: &mut dyn StageProvider,
    initial: &ProblemBundle,
    schedule: &BudgetSchedule,
    model: &StageModel,
    cfg: &DfoConfig,
) -> Result<(Vec<f64>, Vec<SolveTrace>)> {
    if schedule.is_empty() {
        return Err(FalconError::Domain("empty budget schedule".into()));
    }
    let groups = initial.groups();
    let mut w = initial.weights_f64();
    let mut traces: Vec<SolveTrace> = Vec::with_capacity(schedule.len());
    for (t, b) in schedule.stages().iter().enumerate() {
        let stage = t + 1;
        let mut run = |w: &[f64]| -> Result<(Vec<f64>, SolveTrace)> {
            let m = if t == 0 {
                LowRankQuadratic::from_bundle(initial, model.lambda, model.rho, model.bsize)?
            } else {
                let bundle = provider_bundle(provider, stage, w, initial)?;
                LowRankQuadratic::from_bundle(&bundle, model.lambda, model.rho, model.bsize)?
            };
            bso_dfo(&m, w, cfg, &groups, b)
        };
        match run(&w) {
            Ok((next, trace)) => {
                w = next;
                traces.push(trace);
            }
            Err(source) => {
                return Err(FalconError::Stage {
                    stage,
                    completed: traces,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok((w, traces))
}

fn provider_bundle(
    provider: &mut dyn StageProvider,
    stage: usize,
    w: &[f64],
    initial: &ProblemBundle,
) -> Result<ProblemBundle> {
    let bundle = provider.next_bundle(stage, w)?;
    if !bundle.same_structure(initial) {
        return Err(FalconError::Provider(format!(
            "stage {stage} bundle changes the group or block structure"
        )));
    }
    Ok(bundle)
}
