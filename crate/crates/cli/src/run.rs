use std::fs;
use std::io::Write;

use anyhow::Context;
use log::info;

use dynrecon::eval::{format_table, EvalConfig, FramePair, SequenceEvaluator};
use dynrecon::geom::{unproject, DepthMap, Intrinsics, RigidPose};
use dynrecon::io::{
    save_config, write_bundle, write_depth_png, write_discrepancy_png, FullConfig, PlyStreamWriter,
    ReportWriter, ResetRecord, SequenceBundle, TrajectoryWriter, DEFAULT_DEPTH_SCALE,
};
use dynrecon::pipeline::{run_stream, FrameOutput};
use dynrecon::sim::{ground_truth, SimulatedBackbone};
use dynrecon::Error;

use crate::{RunArgs, RunLayout, SimulateArgs};

const SIM_FPS: f64 = 30.0;

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let cfg = args.scene.load()?;
    let bundle = write_bundle(&args.out, &cfg)?;
    println!(
        "wrote {} frames of {} to {} (dynamic ratio {:.4})",
        bundle.len(),
        bundle.name,
        args.out.display(),
        bundle.dynamic_ratio.unwrap_or(0.0)
    );
    Ok(())
}

/// Where ground truth comes from during a run.
enum Truth {
    Bundle(SequenceBundle),
    Simulator,
}

/// Keeps only pixels on the `stride` lattice.
fn strided(depth: &DepthMap, stride: usize) -> DepthMap {
    let mut d = depth.clone();
    for y in 0..d.height {
        for x in 0..d.width {
            if x % stride != 0 || y % stride != 0 {
                d.valid[y * d.width + x] = false;
            }
        }
    }
    d
}

fn resolve(args: &RunArgs) -> anyhow::Result<(FullConfig, Truth)> {
    let (mut cfg, truth) = match &args.input {
        Some(root) => {
            let bundle = SequenceBundle::load(root)?;
            let recorded = bundle.config()?.ok_or_else(|| {
                Error::Insufficient(format!(
                    "bundle {} records no scene configuration to drive the backbone",
                    root.display()
                ))
            })?;
            let mut cfg = match &args.scene.config {
                Some(_) => args.scene.load()?,
                None => recorded.clone(),
            };
            cfg.scene = recorded.scene;
            if bundle.len() != cfg.scene.frame_count {
                return Err(Error::dims(cfg.scene.frame_count, bundle.len()).into());
            }
            (cfg, Truth::Bundle(bundle))
        }
        None => (args.scene.load()?, Truth::Simulator),
    };
    let c = &mut cfg.pipeline.components;
    c.gating |= args.enable_r;
    c.alignment |= args.enable_m;
    c.smoothing |= args.enable_s;
    args.tuning.apply(&mut cfg.pipeline)?;
    Ok((cfg, truth))
}

struct Outputs {
    layout: RunLayout,
    traj: TrajectoryWriter<std::io::BufWriter<fs::File>>,
    ply: PlyStreamWriter,
    report: ReportWriter,
    corrections: std::io::BufWriter<fs::File>,
}

impl Outputs {
    fn create(layout: RunLayout, cfg: &FullConfig) -> anyhow::Result<Self> {
        save_config(layout.config(), cfg)?;
        let corrections = fs::File::create(layout.corrections())
            .with_context(|| format!("creating {}", layout.corrections().display()))?;
        Ok(Outputs {
            traj: TrajectoryWriter::create(layout.trajectory())?,
            ply: PlyStreamWriter::create(layout.cloud(), false)?,
            report: ReportWriter::create(layout.report(), &cfg.scene.name, &cfg.pipeline)?,
            corrections: std::io::BufWriter::new(corrections),
            layout,
        })
    }

    fn frame(
        &mut self,
        out: &FrameOutput,
        stamp: f64,
        intr: &Intrinsics,
        eval: &EvalConfig,
    ) -> dynrecon::Result<()> {
        let l = &self.layout;
        let f = out.frame_index;
        write_depth_png(l.depth(f), &out.depth, DEFAULT_DEPTH_SCALE)?;
        if let Some(d) = &out.discrepancy {
            write_discrepancy_png(l.dynmap(f), d)?;
        }
        self.traj
            .write(stamp, &out.pose)
            .map_err(|e| Error::io(l.trajectory(), e))?;
        if f.is_multiple_of(eval.cloud_frame_stride) {
            let d = strided(&out.depth, eval.cloud_pixel_stride);
            self.ply.append(&unproject(&d, intr, &out.pose)?)?;
        }
        if let Some(ev) = &out.reset {
            let line = serde_json::to_string(&ResetRecord::from_event(ev))
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            writeln!(self.corrections, "{line}").map_err(|e| Error::io(l.corrections(), e))?;
        }
        self.report.frame(out)
    }
}

pub fn run(args: &RunArgs) -> anyhow::Result<()> {
    let (cfg, truth) = resolve(args)?;
    let spec = &cfg.scene;
    let intr = spec.intrinsics;
    let layout = RunLayout::create(&args.out)?;
    let mut outs = Outputs::create(layout.clone(), &cfg)?;
    let mut eval = if args.no_eval {
        None
    } else {
        Some(SequenceEvaluator::new(intr, cfg.eval)?)
    };
    let gt_traj = match &truth {
        Truth::Bundle(b) => b.trajectory()?,
        Truth::Simulator => None,
    };
    info!(
        "running {} ({} frames, {})",
        spec.name,
        spec.frame_count,
        cfg.pipeline.components.label()
    );

    let backbone = SimulatedBackbone::new(spec.clone())?;
    run_stream(backbone, cfg.pipeline, spec.frame_count, |out| {
        let f = out.frame_index;
        let stamp = match &truth {
            Truth::Bundle(b) => b.frames[f].timestamp,
            Truth::Simulator => f as f64 / SIM_FPS,
        };
        outs.frame(&out, stamp, &intr, &cfg.eval)?;
        let Some(ev) = eval.as_mut() else {
            return Ok(());
        };
        let (gt_pose, gt_depth, gt_mask): (RigidPose, DepthMap, _) = match &truth {
            Truth::Bundle(b) => {
                let pose = match &gt_traj {
                    Some(t) => t.poses()[f],
                    None => ground_truth(spec, f)?.pose,
                };
                let depth = b
                    .depth(f)?
                    .ok_or_else(|| Error::Insufficient(format!("bundle frame {f} has no depth")))?;
                (pose, depth, b.mask(f)?)
            }
            Truth::Simulator => {
                let g = ground_truth(spec, f)?;
                (g.pose, g.depth, Some(g.dynamic_mask))
            }
        };
        ev.add(FramePair {
            est_pose: &out.pose,
            est_depth: &out.depth,
            discrepancy: out.discrepancy.as_ref(),
            gt_pose: &gt_pose,
            gt_depth: &gt_depth,
            gt_mask: gt_mask.as_ref(),
        })
    })?;

    let Outputs {
        traj,
        ply,
        report,
        mut corrections,
        ..
    } = outs;
    traj.finish()
        .map_err(|e| Error::io(layout.trajectory(), e))?;
    let points = ply.finish()?;
    corrections
        .flush()
        .map_err(|e| Error::io(layout.corrections(), e))?;

    let result = eval.map(|e| e.finish(&spec.name)).transpose()?;
    report.finish(result.as_ref().map(|r| &r.report))?;
    println!(
        "{}: {} frames, {} cloud points -> {}",
        spec.name,
        spec.frame_count,
        points,
        layout.root().display()
    );
    if let Some(r) = result {
        let text = serde_json::to_string_pretty(&r)?;
        fs::write(layout.metrics(), text + "\n")
            .with_context(|| format!("writing {}", layout.metrics().display()))?;
        print!(
            "{}",
            format_table(&[(cfg.pipeline.components.label(), r.report)])
        );
    }
    Ok(())
}
