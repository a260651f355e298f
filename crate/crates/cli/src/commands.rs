use std::f64::consts::TAU;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::info;
use nalgebra::Point3;
use pdmc_core::compress::{split_xyz, train_codec, CodecConfig, CompressedClip};
use pdmc_core::correspond::{read_corres, vote, write_corres, CorresIdx, ViewSet};
use pdmc_core::descriptor::io::{load_weights, save_weights};
use pdmc_core::descriptor::{feature_field, pdm_sample, pixel_accuracy, train, ClassifierHeads, DescriptorNet, FeatureField};
use pdmc_core::mesh::io::{load_mesh, save_mesh};
use pdmc_core::mesh::{generate_segmentation, select_reference_frame, EdgeGraph, MeshSequence, TriangleMesh};
use pdmc_core::metrics::{
    cumulative_curve, hausdorff_sequence, kg_error, kg_per_frame, linear_thresholds, stacked, stacked_sequence,
    svg_line_plot, write_curve_csv, write_frame_csv, ErrorCurve, ErrorReport,
};
use pdmc_core::refine::{build_trajectory_matrix, refine_sequence, TrajectoryMatrix};
use pdmc_core::render::io::{camera_path, read_pdm, write_pdm};
use pdmc_core::render::{render_pdm, PdmImage};
use pdmc_core::synth::{self, DumbbellParams, LimbParams};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{CodecKind, PipelineConfig};
use crate::error::{CliError, Result};
use crate::manifest::Run;

const MESH_EXTENSIONS: [&str; 2] = ["obj", "ply"];

fn frame_name(n: usize) -> String {
    format!("frame_{n:04}")
}

/// Mesh files of `dir` in file-name order.
fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Validation(format!("missing input {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| MESH_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Validation(format!("{} holds no OBJ or PLY meshes", dir.display())));
    }
    Ok(files)
}

fn load_meshes(dir: &Path, run: &mut Run) -> Result<Vec<TriangleMesh>> {
    mesh_files(dir)?
        .iter()
        .map(|p| {
            run.input(p)?;
            load_mesh(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn load_sequence(config: &PipelineConfig, run: &mut Run) -> Result<MeshSequence> {
    let frames = load_meshes(&config.dataset.sequence, run)?;
    MeshSequence::new(frames, config.dataset.fps).map_err(|e| CliError::Validation(e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, run: &mut Run) -> Result<T> {
    run.input(path)?;
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json(path: PathBuf, value: &impl Serialize, run: &mut Run) -> Result<()> {
    run.write(path, serde_json::to_string_pretty(value)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ViewEntry {
    stem: String,
    /// Frame (sequence views) or training-mesh index.
    mesh: usize,
    segmentation: Option<usize>,
    camera: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ViewIndex {
    views: Vec<ViewEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ReferenceInfo {
    reference: usize,
    frames: usize,
}

fn write_views(pdm: &PdmImage, dir: &Path, stem: &str, run: &mut Run) -> Result<()> {
    for p in write_pdm(pdm, dir, stem)? {
        run.output(p);
    }
    Ok(())
}

/// Unlabeled PDMs of every sequence frame plus labeled PDMs of every
/// training mesh under each random segmentation.
pub fn render(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let seq = load_sequence(config, run)?;
    let training = match &config.dataset.training {
        Some(dir) => load_meshes(dir, run)?,
        None => seq.frames().to_vec(),
    };
    let v = training[0].vertex_count();
    if let Some(t) = training.iter().position(|m| m.vertex_count() != v) {
        return Err(CliError::Validation(format!("training mesh {t} does not share the vertex order of mesh 0")));
    }

    let dir = config.pdm_dir();
    run.dir(&dir)?;
    let mut views = Vec::new();
    for (n, frame) in seq.frames().iter().enumerate() {
        for (c, cam) in config.rig.cameras(frame)?.iter().enumerate() {
            let stem = format!("{}_c{c}", frame_name(n));
            write_views(&render_pdm(cam, frame, None)?, &dir, &stem, run)?;
            views.push(ViewEntry {
                stem,
                mesh: n,
                segmentation: None,
                camera: c,
            });
        }
    }
    write_json(dir.join("index.json"), &ViewIndex { views }, run)?;

    let seg_dir = config.segmentation_dir();
    run.dir(&seg_dir)?;
    let mut segmentations = Vec::new();
    for m in 0..config.segmentation.count {
        let seg = generate_segmentation(
            &training[0],
            config.segmentation.labels,
            config.seeds.segmentation.wrapping_add(m as u64),
            m,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        let mut text = Vec::new();
        seg.write_to(&mut text)?;
        run.write(seg_dir.join(format!("seg_{m}.txt")), text)?;
        segmentations.push(seg);
    }

    let dir = config.train_pdm_dir();
    run.dir(&dir)?;
    let mut views = Vec::new();
    for (t, mesh) in training.iter().enumerate() {
        let cams = config.rig.cameras(mesh)?;
        for seg in &segmentations {
            for (c, cam) in cams.iter().enumerate() {
                let stem = format!("mesh_{t:04}_s{}_c{c}", seg.id);
                write_views(&render_pdm(cam, mesh, Some(seg))?, &dir, &stem, run)?;
                views.push(ViewEntry {
                    stem,
                    mesh: t,
                    segmentation: Some(seg.id),
                    camera: c,
                });
            }
        }
    }
    let train_views = views.len();
    write_json(dir.join("index.json"), &ViewIndex { views }, run)?;
    info!("rendered {} frames and {train_views} training views", seq.len());
    Ok(json!({ "frames": seq.len(), "training_meshes": training.len(), "training_views": train_views }))
}

fn read_views(dir: &Path, run: &mut Run) -> Result<(ViewIndex, Vec<PdmImage>)> {
    let index: ViewIndex = read_json(&dir.join("index.json"), run)?;
    let mut pdms = Vec::with_capacity(index.views.len());
    for v in &index.views {
        run.input(&camera_path(dir, &v.stem))?;
        pdms.push(read_pdm(dir, &v.stem).map_err(|e| CliError::Validation(e.to_string()))?);
    }
    Ok((index, pdms))
}

pub fn train_descriptor(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let (index, pdms) = read_views(&config.train_pdm_dir(), run)?;
    let samples = index
        .views
        .iter()
        .zip(&pdms)
        .map(|(v, pdm)| {
            let m = v
                .segmentation
                .ok_or_else(|| CliError::Validation(format!("training view {} has no segmentation", v.stem)))?;
            Ok(pdm_sample(pdm, m)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let segs = index.views.iter().filter_map(|v| v.segmentation).max().map_or(0, |m| m + 1);
    let mut net = DescriptorNet::new(config.descriptor.net, config.seeds.network)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut heads = ClassifierHeads::new(
        segs,
        config.segmentation.labels,
        config.descriptor.net.descriptor_dim,
        config.seeds.network.wrapping_add(1),
    );
    let mut tc = config.descriptor.train.clone();
    tc.seed = config.seeds.training;
    let curve = train(&mut net, &mut heads, &samples, &tc)?;
    let accuracy = pixel_accuracy(&net, &heads, &samples)?;

    run.dir(&config.out)?;
    let path = config.weights_path();
    run.output(path.clone());
    save_weights(&net, &heads, &path)?;
    let mut csv = String::from("step,data,reg\n");
    for p in &curve {
        csv.push_str(&format!("{},{},{}\n", p.step, p.data, p.reg));
    }
    run.write(config.out.join("descriptor_loss.csv"), csv)?;
    let last = curve.last();
    info!("trained descriptor: training pixel accuracy {accuracy:.3}");
    Ok(json!({
        "samples": samples.len(),
        "steps": curve.len(),
        "final_data_loss": last.map(|p| p.data),
        "final_reg_loss": last.map(|p| p.reg),
        "training_pixel_accuracy": accuracy,
    }))
}

/// Reference-to-frame vertex correspondences for every non-reference frame.
pub fn match_frames(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let seq = load_sequence(config, run)?;
    let weights = run.input(&config.weights_path())?;
    let (net, _) = load_weights(&weights).map_err(|e| CliError::Validation(e.to_string()))?;
    let (index, pdms) = read_views(&config.pdm_dir(), run)?;
    let mut per_frame: Vec<(Vec<PdmImage>, Vec<FeatureField>)> = vec![(Vec::new(), Vec::new()); seq.len()];
    for (v, pdm) in index.views.iter().zip(pdms) {
        let slot = per_frame
            .get_mut(v.mesh)
            .ok_or_else(|| CliError::Validation(format!("view {} refers to missing frame {}", v.stem, v.mesh)))?;
        slot.1.push(feature_field(&net, &pdm, v.camera)?);
        slot.0.push(pdm);
    }
    if let Some(n) = per_frame.iter().position(|f| f.0.is_empty()) {
        return Err(CliError::Validation(format!("no PDM views for frame {n}")));
    }
    let reference = select_reference_frame(&seq)?;
    let source = ViewSet {
        mesh: seq.frame(reference),
        pdms: &per_frame[reference].0,
        features: &per_frame[reference].1,
    };
    let dir = config.corres_dir();
    run.dir(&dir)?;
    let mut matched = Vec::new();
    for n in (0..seq.len()).filter(|&n| n != reference) {
        let target = ViewSet {
            mesh: seq.frame(n),
            pdms: &per_frame[n].0,
            features: &per_frame[n].1,
        };
        let c = vote(&source, &target)?;
        matched.push(c.iter().filter(|x| x.is_some()).count());
        let mut text = Vec::new();
        write_corres(&c, &mut text)?;
        run.write(dir.join(format!("{}.txt", frame_name(n))), text)?;
    }
    let info = ReferenceInfo {
        reference,
        frames: seq.len(),
    };
    write_json(dir.join("reference.json"), &info, run)?;
    info!("matched {} frames against reference frame {reference}", matched.len());
    Ok(json!({ "reference": reference, "matched_rows": matched }))
}

fn read_correspondences(config: &PipelineConfig, frames: usize, run: &mut Run) -> Result<(usize, Vec<Option<CorresIdx>>)> {
    let dir = config.corres_dir();
    let info: ReferenceInfo = read_json(&dir.join("reference.json"), run)?;
    if info.frames != frames || info.reference >= frames {
        return Err(CliError::Validation(format!(
            "correspondences were computed for {} frames, sequence has {frames}",
            info.frames
        )));
    }
    let mut corres = vec![None; frames];
    for (n, slot) in corres.iter_mut().enumerate() {
        if n == info.reference {
            continue;
        }
        let path = run.input(&dir.join(format!("{}.txt", frame_name(n))))?;
        let name = path.display().to_string();
        let c = read_corres(BufReader::new(fs::File::open(&path)?), &name).map_err(|e| CliError::Validation(e.to_string()))?;
        *slot = Some(c);
    }
    Ok((info.reference, corres))
}

pub fn refine(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let seq = load_sequence(config, run)?;
    let (reference, corres) = read_correspondences(config, seq.len(), run)?;
    let a = build_trajectory_matrix(&seq, reference, &corres)?;
    let (refined, report) = refine_sequence(&a, &seq, &config.refine)?;

    run.dir(&config.out)?;
    let raw = config.out.join("trajectory_raw.pdmt");
    run.write(raw.with_extension("ids"), a.ids_to_bytes())?;
    run.write(raw, a.to_bytes())?;
    run.write(config.trajectory_path().with_extension("ids"), refined.ids_to_bytes())?;
    run.write(config.trajectory_path(), refined.to_bytes())?;
    let outliers = &report.detection.outliers;
    run.write(
        config.out.join("outliers.pdmf"),
        outliers.to_bitset(a.vertex_count(), a.frame_count()),
    )?;
    let summary = json!({
        "reference": reference,
        "tau": report.detection.tau,
        "outliers": outliers.len(),
        "unmatched_before": a.unmatched_count(),
        "unmatched_after": refined.unmatched_count(),
        "sweeps": report.sweeps,
        "converged": report.converged,
        "changed": report.changed,
        "unresolved": report.unresolved.len(),
        "energies": report.energies.iter().map(|e| if e.is_finite() { json!(e) } else { json!(null) }).collect::<Vec<_>>(),
    });
    write_json(config.out.join("refine_report.json"), &summary, run)?;
    info!("refined {} of {} flagged entries", report.changed, outliers.len());
    Ok(summary)
}

/// Trajectory matrix plus, when `with_ids`, its vertex-index sidecar.
fn load_trajectory(path: &Path, with_ids: bool, run: &mut Run) -> Result<TrajectoryMatrix> {
    run.input(path)?;
    let invalid = |e: pdmc_core::refine::RefineError| CliError::Validation(e.to_string());
    let mut a = TrajectoryMatrix::load(path).map_err(invalid)?;
    if with_ids {
        let ids = run.input(&path.with_extension("ids"))?;
        a.attach_ids(&fs::read(&ids)?, &ids.display().to_string()).map_err(invalid)?;
    }
    Ok(a)
}

pub fn compress(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let seq = load_sequence(config, run)?;
    let a = load_trajectory(&config.trajectory_path(), false, run)?;
    if a.frame_count() != seq.len() || a.reference() >= seq.len() {
        return Err(CliError::Validation("trajectory matrix does not fit the sequence".into()));
    }
    let reference = seq.frame(a.reference());
    let q = config.codec.quantization;
    let fps = config.dataset.fps;
    run.dir(&config.out)?;
    let (clip, final_loss) = match config.codec.kind {
        CodecKind::Autoencoder => {
            let cc = CodecConfig {
                seed: config.seeds.codec,
                ..config.codec.autoencoder.clone()
            };
            let (codec, curve) = train_codec(&split_xyz(&a), &cc)?;
            let mut csv = String::from("step,mse\n");
            for (k, l) in curve.iter().enumerate() {
                csv.push_str(&format!("{k},{l}\n"));
            }
            run.write(config.out.join("codec_loss.csv"), csv)?;
            (CompressedClip::encode(&a, &codec, q, reference, fps)?, curve.last().copied())
        }
        CodecKind::Pca => (CompressedClip::encode_pca(&a, config.codec.rank, q, reference, fps)?, None),
    };
    run.write(config.clip_path(), clip.to_bytes())?;
    info!("compressed to {:.3} bpvf", clip.bpvf());
    Ok(json!({
        "kind": config.codec.kind,
        "bpvf": clip.bpvf(),
        "payload_bytes": clip.payload_bytes(),
        "connectivity_bytes": clip.connectivity_bytes(),
        "final_training_mse": final_loss,
    }))
}

fn load_clip(path: &Path, run: &mut Run) -> Result<CompressedClip> {
    run.input(path)?;
    CompressedClip::load(path).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn decompress(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let clip = load_clip(&config.clip_path(), run)?;
    let (_, seq) = clip.decode()?;
    let dir = config.decoded_dir();
    run.dir(&dir)?;
    for (n, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(format!("{}.obj", frame_name(n)));
        run.output(path.clone());
        save_mesh(frame, &path)?;
    }
    Ok(json!({ "frames": seq.len(), "vertices": clip.header.vertices }))
}

/// Errors of the correspondences of every non-reference frame, pooled.
fn pooled_errors(seq: &MeshSequence, reference: usize, rows: impl Fn(usize) -> CorresIdx) -> Vec<f64> {
    let mut errors = Vec::new();
    for n in (0..seq.len()).filter(|&n| n != reference) {
        let graph = EdgeGraph::new(seq.frame(n));
        for (i, p) in rows(n).iter().enumerate() {
            errors.push(match p {
                Some(p) if i < seq.frame(n).vertex_count() => graph.distances_from(i)[*p],
                _ => f64::INFINITY,
            });
        }
    }
    errors
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(null)
    }
}

fn curve_area(curve: &ErrorCurve) -> f64 {
    curve.samples.iter().map(|s| s.1).sum::<f64>() / curve.samples.len().max(1) as f64
}

pub fn evaluate(config: &PipelineConfig, run: &mut Run) -> Result<serde_json::Value> {
    let seq = load_sequence(config, run)?;
    let a = load_trajectory(&config.trajectory_path(), config.dataset.ground_truth, run)?;
    let clip = load_clip(&config.clip_path(), run)?;
    let (decoded, decoded_seq) = clip.decode()?;
    if decoded.vertex_count() != a.vertex_count() || decoded.frame_count() != a.frame_count() {
        return Err(CliError::Validation("clip does not match the trajectory matrix".into()));
    }
    let b = stacked(&a);
    let b_hat = stacked(&decoded);
    let kg = kg_error(&b, &b_hat)?;
    let kg_frames = kg_per_frame(&b, &b_hat)?;
    let haus = hausdorff_sequence(&seq, &decoded_seq)?;
    let mut reports = vec![
        ErrorReport::new("kg_codec", kg, kg_frames).with("bpvf", clip.bpvf()),
        ErrorReport::new("hausdorff", haus.mean, haus.frames.iter().map(|f| f.symmetric).collect())
            .with("sum", haus.sum),
    ];
    let mut summary = json!({
        "bpvf": clip.bpvf(),
        "kg_codec": kg,
        "hausdorff_mean": haus.mean,
        "hausdorff_sum": haus.sum,
        "hausdorff_mean_forward": haus.mean_forward,
        "hausdorff_mean_backward": haus.mean_backward,
    });

    let dir = config.report_dir();
    run.dir(&dir)?;
    if config.dataset.ground_truth {
        let truth = stacked_sequence(&seq)?;
        if truth.shape() == b_hat.shape() {
            let kg_truth = kg_error(&truth, &b_hat)?;
            summary["kg_ground_truth"] = json!(kg_truth);
            reports.push(ErrorReport::new("kg_ground_truth", kg_truth, kg_per_frame(&truth, &b_hat)?));
        }
        let raw = load_trajectory(&config.out.join("trajectory_raw.pdmt"), true, run)?;
        let radius = seq.frame(a.reference()).bounding_sphere().map_or(1.0, |s| s.1);
        let thresholds = linear_thresholds(config.evaluate.max_threshold * radius, config.evaluate.thresholds);
        let ids = |m: &TrajectoryMatrix, n: usize| (0..m.vertex_count()).map(|i| m.id(i, n)).collect::<CorresIdx>();
        let before = cumulative_curve(pooled_errors(&seq, a.reference(), |n| ids(&raw, n)), &thresholds);
        let after = cumulative_curve(pooled_errors(&seq, a.reference(), |n| ids(&a, n)), &thresholds);
        let mean = |c: &ErrorCurve| c.errors.iter().sum::<f64>() / c.errors.len().max(1) as f64;
        summary["correspondence"] = json!({
            "mean_error_matched": finite_or_null(mean(&before)),
            "mean_error_refined": finite_or_null(mean(&after)),
            "curve_area_matched": curve_area(&before),
            "curve_area_refined": curve_area(&after),
        });
        let mut csv = String::from("threshold,matched,refined\n");
        for (s, t) in before.samples.iter().zip(&after.samples) {
            csv.push_str(&format!("{},{},{}\n", s.0, s.1, t.1));
        }
        run.write(dir.join("error_curve.csv"), csv)?;
        let mut single = Vec::new();
        write_curve_csv(&after, &mut single)?;
        run.write(dir.join("error_curve_refined.csv"), single)?;
        let svg = svg_line_plot(
            "Correspondence error",
            "geodesic error",
            "fraction of vertices",
            &[("matched".into(), before.samples.clone()), ("refined".into(), after.samples.clone())],
        );
        run.write(dir.join("error_curve.svg"), svg)?;
    }

    let mut csv = Vec::new();
    write_frame_csv(&reports, &mut csv)?;
    run.write(dir.join("per_frame.csv"), csv)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = reports
        .iter()
        .map(|r| (r.metric.clone(), r.per_frame.iter().enumerate().map(|(f, &v)| (f as f64, v)).collect()))
        .collect();
    run.write(dir.join("per_frame.svg"), svg_line_plot("Per-frame error", "frame", "error", &series))?;
    write_json(dir.join("report.json"), &json!({ "summary": summary, "reports": reports }), run)?;
    info!("KG {kg:.4}, mean Hausdorff {:.6}", haus.mean);
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Breathing, drifting icosphere (genus 0).
    Sphere,
    /// Two-segment limb swinging at the shoulder and bending at the elbow.
    Limb,
    /// Dumbbell whose bulbs sway about the neck.
    Dumbbell,
    /// Torus under a travelling squash (genus 1).
    Torus,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    /// Limb rings along the axis.
    #[arg(long, default_value_t = 24)]
    pub rings: usize,
    /// Segments around the limb, dumbbell or torus tube.
    #[arg(long, default_value_t = 12)]
    pub segments: usize,
    /// Icosphere subdivision level.
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    /// Limb shoulder swing amplitude, radians.
    #[arg(long, default_value_t = 0.5)]
    pub swing: f64,
    /// Largest limb elbow bend, radians.
    #[arg(long, default_value_t = 0.4)]
    pub bend: f64,
}

pub fn synth_frames(args: &SynthArgs) -> Result<Vec<TriangleMesh>> {
    if args.frames == 0 {
        return Err(CliError::Validation("need at least one frame".into()));
    }
    let phase = |n: usize| TAU * n as f64 / args.frames as f64;
    Ok(match args.kind {
        SynthKind::Sphere => {
            if args.level > 6 {
                return Err(CliError::Validation(format!("subdivision level {} is too fine", args.level)));
            }
            let base = synth::subdivided_icosphere(args.level, 1.0);
            (0..args.frames)
                .map(|n| {
                    let s = 0.15 * phase(n).sin();
                    base.map_vertices(|p| Point3::new(p.x * (1.0 + s) + 0.2 * s, p.y * (1.0 - 0.5 * s), p.z))
                })
                .collect()
        }
        SynthKind::Limb => {
            if args.rings < 2 || args.segments < 3 {
                return Err(CliError::Validation("limb needs at least 2 rings and 3 segments".into()));
            }
            let p = LimbParams {
                rings: args.rings,
                segments: args.segments,
                ..LimbParams::default()
            };
            synth::limb_sequence(&p, &synth::swing_poses(args.frames, args.swing, args.bend))
        }
        SynthKind::Dumbbell => {
            if args.segments < 3 {
                return Err(CliError::Validation("dumbbell needs at least 3 segments".into()));
            }
            let base = synth::dumbbell(&DumbbellParams {
                segments: args.segments,
                ..DumbbellParams::default()
            });
            (0..args.frames)
                .map(|n| {
                    let s = 0.25 * phase(n).sin();
                    base.map_vertices(|p| Point3::new(p.x + s * p.z * p.z.abs() * 0.2, p.y, p.z))
                })
                .collect()
        }
        SynthKind::Torus => {
            if args.segments < 3 {
                return Err(CliError::Validation("torus needs at least 3 segments".into()));
            }
            let base = synth::torus(2 * args.segments, args.segments, 1.0, 0.35);
            (0..args.frames)
                .map(|n| {
                    let t = phase(n);
                    base.map_vertices(|p| {
                        let squash = 1.0 + 0.2 * (p.y.atan2(p.x) - t).cos();
                        Point3::new(p.x, p.y, p.z * squash)
                    })
                })
                .collect()
        }
    })
}

pub fn synth_sequence(args: &SynthArgs, out: &Path, run: &mut Run) -> Result<serde_json::Value> {
    let frames = synth_frames(args)?;
    let seq = MeshSequence::new(frames, 25.0)?;
    run.dir(out)?;
    for (n, frame) in seq.frames().iter().enumerate() {
        let path = out.join(format!("{}.obj", frame_name(n)));
        run.output(path.clone());
        save_mesh(frame, &path)?;
    }
    Ok(json!({
        "kind": args.kind,
        "frames": seq.len(),
        "vertices": seq.frame(0).vertex_count(),
        "reference": select_reference_frame(&seq)?,
    }))
}
