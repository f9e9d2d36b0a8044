//! Subcommand implementations. Each returns a human-readable summary; files
//! go under the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use photoloss::eval::{ape_with, depth_metrics_with, Alignment, ApeMetrics, DepthMetrics, ScaleAlignment, Trajectory};
use photoloss::losses::Regime;
use photoloss::optimizer::{compare_regimes, evaluate_estimate, optimize, OptimProblem};
use photoloss::synth::{perturb, render_frames, render_scene, FrameTriplet};
use photoloss::Error;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::io::{self, json as jsonio, pfm, png, tum};

pub const TOOL: &str = "photoloss";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Per-run seed mixed from the master seed, scene and target frame.
pub fn derive_seed(seed: u64, scene: usize, frame: usize) -> u64 {
    let mut z = seed ^ ((scene as u64) << 32) ^ frame as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn scene_dir(out: &Path, scene: usize) -> PathBuf {
    out.join(format!("scene_{scene:03}"))
}

fn frame_dir(out: &Path, scene: usize, frame: usize) -> PathBuf {
    scene_dir(out, scene).join(format!("frame_{frame:03}"))
}

fn header(config: &ExperimentConfig) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    map.insert("tool".into(), TOOL.into());
    map.insert("version".into(), VERSION.into());
    map.insert("config".into(), config.echo()?);
    Ok(map)
}

fn write_config(config: &ExperimentConfig) -> Result<()> {
    io::write_atomic(&config.out_dir.join("config.json"), &jsonio::to_pretty(&config.echo()?))
}

/// Renders every scene: intensity PNGs, PFM and 16-bit PNG depth per frame,
/// and the absolute trajectory.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<String> {
    write_config(config)?;
    let mut summary = String::new();
    for (s, spec) in config.scenes.iter().enumerate() {
        let dir = scene_dir(&config.out_dir, s);
        let frames = render_frames(spec)?;
        for (i, frame) in frames.iter().enumerate() {
            png::write_image(&dir.join(format!("frame_{i:03}.png")), &frame.image, config.image_bits)?;
            pfm::write(&dir.join(format!("depth_{i:03}.pfm")), frame.depth.field())?;
            png::write_depth(&dir.join(format!("depth_{i:03}.png")), &frame.depth)?;
        }
        tum::write(&dir.join("trajectory.txt"), &Trajectory::from_poses(spec.trajectory.clone())?)?;
        let k = &spec.intrinsics;
        let _ = writeln!(summary, "scene {s}: {} frames {}x{} -> {}", frames.len(), k.width, k.height, dir.display());
    }
    Ok(summary)
}

struct Job {
    scene: usize,
    frame: usize,
    triplet: FrameTriplet,
    init: photoloss::losses::Estimate,
}

fn jobs(config: &ExperimentConfig) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for (s, spec) in config.scenes.iter().enumerate() {
        for (i, triplet) in render_scene(spec)?.into_iter().enumerate() {
            let frame = i + 1;
            let noisy = perturb(&triplet, &config.perturbation, derive_seed(config.seed, s, frame))?;
            jobs.push(Job {
                scene: s,
                frame,
                init: noisy.truth(),
                triplet,
            });
        }
    }
    Ok(jobs)
}

fn write_estimate(dir: &Path, prefix: &str, est: &photoloss::losses::Estimate) -> Result<()> {
    pfm::write(&dir.join(format!("{prefix}depth.pfm")), est.inv_depth.to_depth().field())?;
    tum::write(&dir.join(format!("{prefix}poses.txt")), &Trajectory::from_poses(est.poses.clone())?)
}

#[derive(Serialize)]
struct RunRecord {
    scene: usize,
    frame: usize,
    regime: Regime,
    status: &'static str,
    iterations: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
    depth: Option<DepthMetrics>,
    pose: Option<ApeMetrics>,
    error: Option<String>,
    loss_trace: Vec<f64>,
}

/// Optimizes every (scene, target frame, regime) from a perturbed ground
/// truth. Returns the summary and whether any run diverged.
pub fn cmd_optimize(config: &ExperimentConfig) -> Result<(String, bool)> {
    use rayon::prelude::*;
    let start = Instant::now();
    write_config(config)?;
    let jobs = jobs(config)?;
    for job in &jobs {
        let dir = frame_dir(&config.out_dir, job.scene, job.frame);
        write_estimate(&dir, "truth_", &job.triplet.truth())?;
        write_estimate(&dir, "init_", &job.init)?;
    }
    let runs: Vec<(&Job, Regime)> = jobs.iter().flat_map(|j| config.regimes.iter().map(move |r| (j, *r))).collect();
    let results: Vec<(RunRecord, f64)> = runs
        .par_iter()
        .map(|&(job, regime)| -> Result<(RunRecord, f64)> {
            let t0 = Instant::now();
            let problem = OptimProblem {
                weights: config.weights,
                ssim: config.ssim,
                ..OptimProblem::new(job.triplet.clone(), regime, config.free, job.init.clone())
            };
            let mut record = RunRecord {
                scene: job.scene,
                frame: job.frame,
                regime,
                status: "diverged",
                iterations: 0,
                initial_loss: None,
                final_loss: None,
                depth: None,
                pose: None,
                error: None,
                loss_trace: Vec::new(),
            };
            match optimize(&problem, &config.optim) {
                Ok(report) => {
                    let dir = frame_dir(&config.out_dir, job.scene, job.frame).join(regime.name());
                    write_estimate(&dir, "", &report.final_estimate)?;
                    let (depth, pose) = evaluate_estimate(&job.triplet, &report.final_estimate)?;
                    record.status = if report.converged { "converged" } else { "max-iters" };
                    record.iterations = report.iterations;
                    record.initial_loss = report.loss_trace.first().copied();
                    record.final_loss = report.loss_trace.last().copied();
                    record.depth = Some(depth);
                    record.pose = Some(pose);
                    record.loss_trace = report.loss_trace;
                }
                Err(e @ Error::Diverged { iteration, .. }) => {
                    record.iterations = iteration;
                    record.error = Some(e.to_string());
                }
                Err(e) => return Err(e.into()),
            }
            Ok((record, t0.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut report = header(config)?;
    let mut csv = String::from("scene,frame,regime,iteration,loss\n");
    let mut table = format!(
        "{:<6} {:<6} {:<16} {:<10} {:>6} {:>12} {:>10} {:>10}\n",
        "scene", "frame", "regime", "status", "iters", "final_loss", "depth_rel", "rot_err"
    );
    let mut timings = Vec::new();
    let mut diverged = false;
    for (r, secs) in &results {
        for (i, loss) in r.loss_trace.iter().enumerate() {
            let l = jsonio::round_significant(*loss, jsonio::SIGNIFICANT_DIGITS);
            let _ = writeln!(csv, "{},{},{},{i},{l}", r.scene, r.frame, r.regime);
        }
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let _ = writeln!(
            table,
            "{:<6} {:<6} {:<16} {:<10} {:>6} {:>12} {:>10} {:>10}",
            r.scene,
            r.frame,
            r.regime.name(),
            r.status,
            r.iterations,
            fmt(r.final_loss),
            fmt(r.depth.map(|d| d.rel_mean)),
            fmt(r.pose.map(|p| p.rot_mean)),
        );
        diverged |= r.status == "diverged";
        timings.push(json!({"scene": r.scene, "frame": r.frame, "regime": r.regime, "seconds": secs}));
    }
    let records: Vec<&RunRecord> = results.iter().map(|(r, _)| r).collect();
    let mut runs_value = jsonio::to_value(&records)?;
    jsonio::round_floats(&mut runs_value);
    report.insert("runs".into(), runs_value);
    let out = &config.out_dir;
    io::write_atomic(&out.join("report.json"), &jsonio::to_pretty(&Value::Object(report)))?;
    io::write_atomic(&out.join("traces.csv"), csv.as_bytes())?;
    let timing = json!({"total_seconds": start.elapsed().as_secs_f64(), "runs": timings});
    io::write_atomic(&out.join("timings.json"), &jsonio::to_report(&timing))?;
    Ok((table, diverged))
}

/// Runs all three regimes from the same initialization on every triplet.
pub fn cmd_compare_losses(config: &ExperimentConfig) -> Result<String> {
    use rayon::prelude::*;
    write_config(config)?;
    let jobs = jobs(config)?;
    let comparisons = jobs
        .par_iter()
        .map(|job| compare_regimes(&job.triplet, &job.init, config.free, &config.optim, &config.weights, &config.ssim))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut table = format!(
        "{:<6} {:<6} {:<16} {:>12} {:>10} {:>10} {:>10}\n",
        "scene", "frame", "regime", "final_loss", "depth_rel", "acc_1", "rot_err"
    );
    let mut entries = Vec::new();
    for (job, cmp) in jobs.iter().zip(&comparisons) {
        let mut rows = Vec::new();
        for e in &cmp.entries {
            let _ = writeln!(
                table,
                "{:<6} {:<6} {:<16} {:>12.4e} {:>10.4e} {:>10.4} {:>10.4e}",
                job.scene,
                job.frame,
                e.regime.name(),
                e.final_loss,
                e.depth.rel_mean,
                e.depth.acc_1,
                e.pose.rot_mean
            );
            rows.push(json!({
                "regime": e.regime,
                "iterations": e.report.iterations,
                "converged": e.report.converged,
                "final_loss": e.final_loss,
                "depth": e.depth,
                "pose": e.pose,
            }));
        }
        entries.push(json!({"scene": job.scene, "frame": job.frame, "entries": rows}));
    }
    let mut report = header(config)?;
    let mut value = Value::Array(entries);
    jsonio::round_floats(&mut value);
    report.insert("comparisons".into(), value);
    io::write_atomic(&config.out_dir.join("comparison.json"), &jsonio::to_pretty(&Value::Object(report)))?;
    Ok(table)
}

fn pfm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pfm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Compares the sorted PFM files of two directories pairwise. Returns the
/// JSON document and a table.
pub fn cmd_eval_depth(pred_dir: &Path, ref_dir: &Path, align: ScaleAlignment) -> Result<(Value, String)> {
    let pred = pfm_files(pred_dir)?;
    let reference = pfm_files(ref_dir)?;
    if pred.is_empty() {
        return Err(CliError::Usage(format!("no .pfm files in {}", pred_dir.display())));
    }
    if pred.len() != reference.len() {
        return Err(CliError::Usage(format!(
            "{} has {} depth maps but {} has {}",
            pred_dir.display(),
            pred.len(),
            ref_dir.display(),
            reference.len()
        )));
    }
    let load = |files: &[PathBuf]| files.iter().map(|p| pfm::read_depth(p)).collect::<Result<Vec<_>>>();
    let metrics = depth_metrics_with(&load(&pred)?, &load(&reference)?, align)?;
    let mut value = json!({"tool": TOOL, "version": VERSION, "frames": pred.len(), "alignment": align, "metrics": metrics});
    jsonio::round_floats(&mut value);
    let m = &metrics;
    let table = format!(
        "frames     {}\nscale      {:.6}\nrel_mean   {:.6e}\nrel_median {:.6e}\nrel_max    {:.6e}\nacc_1      {:.6}\nacc_2      {:.6}\nacc_3      {:.6}\n",
        pred.len(),
        m.scale,
        m.rel_mean,
        m.rel_median,
        m.rel_max,
        m.acc_1,
        m.acc_2,
        m.acc_3
    );
    Ok((value, table))
}

/// Absolute pose error between two trajectory files.
pub fn cmd_eval_pose(pred: &Path, reference: &Path, segment_len: usize, align: Alignment) -> Result<(Value, String)> {
    let p = tum::read(pred)?;
    let r = tum::read(reference)?;
    let metrics = ape_with(&p, &r, segment_len, align)?;
    let mut value = json!({
        "tool": TOOL,
        "version": VERSION,
        "segment_len": segment_len,
        "alignment": align,
        "metrics": metrics,
    });
    jsonio::round_floats(&mut value);
    let m = &metrics;
    let table = format!(
        "frames       {}\nsegments     {}\nrot_mean     {:.6e}\nrot_median   {:.6e}\nrot_max      {:.6e}\ntrans_mean   {:.6e}\ntrans_median {:.6e}\ntrans_max    {:.6e}\n",
        m.frames, m.segments, m.rot_mean, m.rot_median, m.rot_max, m.trans_mean, m.trans_median, m.trans_max
    );
    Ok((value, table))
}
