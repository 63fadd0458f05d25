use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use dynrecon::eval::{
    ablation_harness, dynmap_metrics_with, dynmap_study, format_table, spearman, stratified_suite,
    DynMapSummary, EvalConfig, FramePair, SequenceEvaluator, StratumSummary,
};
use dynrecon::io::{
    load_config, read_depth_png, read_discrepancy_png, read_trajectory, SequenceBundle,
    DEFAULT_DEPTH_SCALE,
};
use dynrecon::sim::{standard_suite, Stratum};
use dynrecon::Error;

use crate::{AblateArgs, DynmapArgs, EvalArgs, RunLayout};

fn write_json(dir: Option<&Path>, file: &str, value: &impl Serialize) -> anyhow::Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(file);
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(json: bool, table: String, value: &impl Serialize) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{table}");
    }
    Ok(())
}

/// Eval section from an explicit file, else the one the run recorded.
fn eval_config(explicit: Option<&Path>, run: &RunLayout) -> anyhow::Result<EvalConfig> {
    if let Some(p) = explicit {
        return Ok(load_config(p)?.eval);
    }
    let recorded = run.config();
    Ok(if recorded.is_file() {
        load_config(recorded)?.eval
    } else {
        EvalConfig::default()
    })
}

fn missing(what: &str, root: &Path) -> Error {
    Error::Insufficient(format!("{} has no {what}", root.display()))
}

/// Scores a stored run from its files alone. Estimated depth is read back
/// from the 16-bit PNGs, so it carries their quantization.
pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let run = RunLayout::new(&args.run);
    let bundle = SequenceBundle::load(&args.gt)?;
    let cfg = eval_config(args.config.as_deref(), &run)?;
    let est = read_trajectory(run.trajectory())?;
    let gt = bundle
        .trajectory()?
        .ok_or_else(|| missing("trajectory", &args.gt))?;
    if est.len() != bundle.len() || gt.len() != bundle.len() {
        return Err(Error::dims(
            format!("{} poses", bundle.len()),
            format!("{} estimated, {} ground truth", est.len(), gt.len()),
        )
        .into());
    }

    let mut ev = SequenceEvaluator::new(bundle.intrinsics, cfg)?;
    for f in 0..bundle.len() {
        let frame = (|| -> dynrecon::Result<()> {
            let est_depth = read_depth_png(run.depth(f), DEFAULT_DEPTH_SCALE)?;
            let gt_depth = bundle.depth(f)?.ok_or_else(|| missing("depth", &args.gt))?;
            let dynmap = run.dynmap(f);
            let discrepancy = if dynmap.is_file() {
                Some(read_discrepancy_png(dynmap)?)
            } else {
                None
            };
            ev.add(FramePair {
                est_pose: &est.poses()[f],
                est_depth: &est_depth,
                discrepancy: discrepancy.as_ref(),
                gt_pose: &gt.poses()[f],
                gt_depth: &gt_depth,
                gt_mask: bundle.mask(f)?.as_ref(),
            })
        })();
        frame.map_err(|e| Error::Frame {
            frame: f,
            source: Box::new(e),
        })?;
    }
    let result = ev.finish(&bundle.name)?;
    write_json(args.out.as_deref(), "metrics.json", &result)?;
    emit(
        args.json,
        format_table(&[(bundle.name.clone(), result.report)]),
        &result,
    )
}

pub fn ablate(args: &AblateArgs) -> anyhow::Result<()> {
    let mut cfg = args.scene.load()?;
    args.tuning.apply(&mut cfg.pipeline)?;
    if args.seeds == 0 {
        return Err(Error::Config {
            key: "seeds".into(),
            constraint: "seeds >= 1".into(),
        }
        .into());
    }
    let first = args.scene.seed.unwrap_or(0);
    let suite: Vec<_> = (first..first + args.seeds)
        .flat_map(|s| standard_suite(s, cfg.scene.frame_count))
        .collect();
    let rows = ablation_harness(&suite, &cfg.pipeline, &cfg.eval)?;
    write_json(args.out.as_deref(), "ablation.json", &rows)?;
    let table: Vec<_> = rows.iter().map(|r| (r.label.clone(), r.mean)).collect();
    emit(
        args.json,
        format!("{} sequences\n{}", suite.len(), format_table(&table)),
        &rows,
    )
}

#[derive(Debug, Serialize)]
struct RunDynMap {
    run: String,
    stratum: Stratum,
    summary: DynMapSummary,
}

#[derive(Debug, Serialize)]
struct RunStudy {
    runs: Vec<RunDynMap>,
    strata: Vec<StratumSummary>,
    spearman_iou_ratio: Option<f64>,
}

fn load_pair(run: &Path, gt: &Path, cfg: Option<&Path>) -> anyhow::Result<DynMapSummary> {
    let layout = RunLayout::new(run);
    let bundle = SequenceBundle::load(gt)?;
    let mode = eval_config(cfg, &layout)?.iou_threshold;
    let mut deltas = Vec::new();
    let mut masks = Vec::new();
    for f in 0..bundle.len() {
        let p = layout.dynmap(f);
        if !p.is_file() {
            continue;
        }
        let mask = bundle.mask(f)?.ok_or_else(|| missing("masks", gt))?;
        deltas.push(read_discrepancy_png(p)?);
        masks.push(mask);
    }
    if deltas.is_empty() {
        return Err(missing("dynamic maps (was gating enabled?)", run).into());
    }
    Ok(dynmap_metrics_with(&deltas, &masks, mode)?)
}

fn stratum_table(strata: &[StratumSummary], extra: &[(&str, Option<f64>)]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| format!("{:>8}", "-"), |x| format!("{x:>8.4}"));
    let mut out = format!(
        "{:<8} {:>4} {:>8} {:>8} {:>8}\n",
        "stratum", "n", "disc", "AUC", "IoU"
    );
    for s in strata {
        let _ = writeln!(
            out,
            "{:<8} {:>4} {} {} {}",
            format!("{:?}", s.stratum).to_lowercase(),
            s.sequences,
            cell(s.disc),
            cell(s.auc),
            cell(s.iou)
        );
    }
    for (label, v) in extra {
        let _ = writeln!(out, "{label}: {}", cell(*v).trim_start());
    }
    out
}

fn summarize(runs: &[RunDynMap]) -> Vec<StratumSummary> {
    let mean =
        |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    Stratum::ALL
        .iter()
        .map(|st| {
            let m: Vec<&DynMapSummary> = runs
                .iter()
                .filter(|r| r.stratum == *st)
                .map(|r| &r.summary)
                .collect();
            StratumSummary {
                stratum: *st,
                sequences: m.len(),
                disc: mean(m.iter().filter_map(|s| s.disc).collect()),
                auc: mean(m.iter().filter_map(|s| s.auc).collect()),
                iou: mean(m.iter().filter_map(|s| s.iou).collect()),
            }
        })
        .collect()
}

pub fn dynmap(args: &DynmapArgs) -> anyhow::Result<()> {
    if args.run.is_empty() {
        return dynmap_suite(args);
    }
    if args.run.len() != args.gt.len() {
        return Err(Error::dims(format!("{} --gt bundles", args.run.len()), args.gt.len()).into());
    }
    let runs = args
        .run
        .iter()
        .zip(&args.gt)
        .map(|(r, g)| {
            let summary = load_pair(r, g, args.scene.config.as_deref())?;
            Ok(RunDynMap {
                run: r.display().to_string(),
                stratum: Stratum::of_ratio(summary.dynamic_ratio),
                summary,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (ious, ratios): (Vec<f64>, Vec<f64>) = runs
        .iter()
        .filter_map(|r| r.summary.iou.map(|i| (i, r.summary.dynamic_ratio)))
        .unzip();
    let study = RunStudy {
        strata: summarize(&runs),
        spearman_iou_ratio: spearman(&ious, &ratios),
        runs,
    };
    write_json(args.out.as_deref(), "dynmap.json", &study)?;
    emit(
        args.json,
        stratum_table(
            &study.strata,
            &[("spearman(IoU, ratio)", study.spearman_iou_ratio)],
        ),
        &study,
    )
}

fn dynmap_suite(args: &DynmapArgs) -> anyhow::Result<()> {
    let mut cfg = args.scene.load()?;
    args.tuning.apply(&mut cfg.pipeline)?;
    let suite = stratified_suite(
        args.suite,
        args.scene.seed.unwrap_or(0),
        cfg.scene.frame_count,
    );
    let study = dynmap_study(&suite, &cfg.pipeline, args.pixel_stride)?;
    write_json(args.out.as_deref(), "dynmap.json", &study)?;
    emit(
        args.json,
        stratum_table(
            &study.strata,
            &[
                ("pooled AUC", study.pooled_auc),
                ("spearman(IoU, ratio)", study.spearman_iou_ratio),
            ],
        ),
        &study,
    )
}
