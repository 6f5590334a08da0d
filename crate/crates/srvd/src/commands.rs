//! The five subcommands. Each reads a merged [`RunConfig`] and returns the
//! paths it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use srvd_core::boxes::kmeans_anchors;
use srvd_core::imaging::synthesize_scene;
use srvd_core::rng::mix64;
use srvd_core::trainer::{joint_init, resume, Phase, TrainData};
use srvd_core::{LabeledScene, NetConfig, ParameterSet, TrainState};

use crate::checkpoint::{load_state, save_state};
use crate::config::{net_pairs, train_pairs, RunConfig};
use crate::dataset::{dataset_hash, load_dataset, pairs, tile_scenes, write_dataset};
use crate::error::{Error, IoContext, Result};
use crate::eval::{evaluate, Networks};
use crate::pngio::{load_png, save_png};
use crate::report::{detection_summary, write_loss_csv, write_metrics_csv, write_points_csv};

pub const CHECKPOINT_FILE: &str = "checkpoint.srvd";
pub const LOSS_FILE: &str = "loss.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ANCHORS_FILE: &str = "anchors.txt";

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.path("out").expect("checked by require");
    fs::create_dir_all(&out).at(&out)?;
    Ok(out)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).at(&path)?;
    Ok(path)
}

/// Seed of scene `i` in a synthetic set.
pub fn scene_seed(seed: u64, i: u64) -> u64 {
    mix64(seed ^ mix64(i.wrapping_add(1)))
}

pub fn synth_scenes(
    seed: u64,
    n: usize,
    size: usize,
    n_vehicles: usize,
) -> Result<Vec<LabeledScene>> {
    (0..n)
        .map(|i| {
            let mut s = synthesize_scene(scene_seed(seed, i as u64), size, n_vehicles)?;
            s.source_id = format!("scene_{i:04}");
            Ok(s)
        })
        .collect()
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.require(&["out"], "synth")?;
    let n = cfg.value("n_scenes", 16usize, "a count")?;
    let size = cfg.value("scene_size", 128usize, "a size in pixels")?;
    let nv = cfg.value("n_vehicles", 2usize, "a count")?;
    let out = out_dir(cfg)?;
    let scenes = synth_scenes(cfg.seed()?, n, size, nv)?;
    write_dataset(&out, &scenes)?;
    log::info!("wrote {n} scenes to {}", out.display());
    Ok(vec![out.join("images"), out.join("labels")])
}

pub fn cmd_anchors(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.require(&["data", "out"], "anchors")?;
    let scenes = load_dataset(&cfg.path("data").expect("required"))?;
    let wh: Vec<(f64, f64)> = scenes
        .iter()
        .flat_map(|s| s.boxes.iter().map(|b| (b.w, b.h)))
        .collect();
    let mut distinct = wh.clone();
    distinct.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    distinct.dedup();
    if distinct.len() < 9 {
        return Err(Error::Usage(format!(
            "anchor design needs at least 9 distinct boxes, the dataset has {}",
            distinct.len()
        )));
    }
    let k = kmeans_anchors(&wh, 9, cfg.seed()?)?;
    let mut text = String::new();
    for (w, h) in &k.anchors {
        let _ = writeln!(text, "{w} {h}");
    }
    log::info!(
        "anchors: mean 1-IoU {:.4} after {} iterations",
        k.distortion(),
        k.iterations
    );
    Ok(vec![write(out_dir(cfg)?.join(ANCHORS_FILE), &text)?])
}

fn load_perceptual(cfg: &RunConfig, params: &mut ParameterSet) -> Result<()> {
    if let Some(p) = cfg.path("perceptual_weights") {
        let text = fs::read_to_string(&p).at(&p)?;
        let vals = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Config(format!("{}: bad number {t}", p.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        params.load_perceptual_weights(vals)?;
    }
    Ok(())
}

/// Rejects a checkpoint whose network differs from explicitly configured
/// network keys.
fn check_net(cfg: &RunConfig, state: &TrainState, path: &Path) -> Result<()> {
    if cfg.has_net_keys() || cfg.get("anchors_file").is_some() {
        let want = cfg.net_config()?;
        if &want != state.params.config() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: "network configuration does not match the run config".into(),
            });
        }
    }
    Ok(())
}

fn manifest(
    command: &str,
    cfg: &RunConfig,
    net: &NetConfig,
    extra: &[(&str, String)],
) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "srvd {command}");
    let _ = writeln!(s, "seed = {}", cfg.seed()?);
    if let Some(d) = cfg.path("data") {
        let _ = writeln!(s, "data = {}", d.display());
        let _ = writeln!(s, "data_hash = sha256:{}", dataset_hash(&d)?);
    }
    for (k, v) in extra {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "\n[config]");
    s.push_str(&cfg.render());
    let _ = writeln!(s, "\n[net]");
    for (k, v) in net_pairs(net) {
        let _ = writeln!(s, "{k} = {v}");
    }
    Ok(s)
}

pub fn cmd_train(cfg: &RunConfig, phase: Phase) -> Result<Vec<PathBuf>> {
    cfg.require(&["data", "out"], "train")?;
    if phase == Phase::Joint && cfg.get("checkpoint").is_none() {
        cfg.require(&["init_sr", "init_det"], "train --phase joint")?;
    }
    let tc = cfg.train_config(phase)?;
    let mut state = if let Some(ck) = cfg.path("checkpoint") {
        let st = load_state(&ck)?;
        check_net(cfg, &st, &ck)?;
        if st.phase != phase {
            return Err(Error::Usage(format!(
                "checkpoint {} is a {} run, not {}",
                ck.display(),
                st.phase.name(),
                phase.name()
            )));
        }
        st
    } else if phase == Phase::Joint {
        let (a, b) = (
            cfg.path("init_sr").expect("required"),
            cfg.path("init_det").expect("required"),
        );
        let (sr, det) = (load_state(&a)?, load_state(&b)?);
        check_net(cfg, &sr, &a)?;
        joint_init(&sr, &det, &tc)?
    } else {
        let mut params = ParameterSet::new(cfg.net_config()?, tc.seed)?;
        load_perceptual(cfg, &mut params)?;
        TrainState::new(params, &tc)
    };
    let net = state.params.config().clone();
    let scenes = tile_scenes(
        &load_dataset(&cfg.path("data").expect("required"))?,
        net.hr_resolution(),
    )?;
    if scenes.is_empty() {
        return Err(Error::Usage("the training set is empty".into()));
    }
    let start = state.step;
    if phase == Phase::PretrainDet {
        resume(&mut state, TrainData::Scenes(&scenes), &tc)?;
    } else {
        let p = pairs(&scenes)?;
        resume(&mut state, TrainData::Pairs(&p), &tc)?;
    }
    log::info!("{} phase: steps {start}..{}", phase.name(), state.step);
    if !state.params.all_finite() {
        return Err(srvd_core::Error::NonFinite {
            step: state.step,
            term: "parameters".into(),
        }
        .into());
    }
    let out = out_dir(cfg)?;
    let ck = out.join(CHECKPOINT_FILE);
    save_state(&ck, &state)?;
    let loss = out.join(LOSS_FILE);
    write_loss_csv(&loss, &state.history)?;
    let mut extra = vec![
        ("phase", phase.name().to_string()),
        ("steps", state.step.to_string()),
    ];
    extra.extend(train_pairs(&tc).into_iter().map(|(k, v)| (k, v)));
    let m = write(
        out.join(MANIFEST_FILE),
        &manifest("train", cfg, &net, &extra)?,
    )?;
    Ok(vec![ck, loss, m])
}

/// Builds rayon's pool, capped by `SRVD_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SRVD_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            Error::Config(format!("SRVD_THREADS = {v}: expected a positive integer"))
        })?;
        b = b.num_threads(n.max(1));
    }
    b.build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.require(&["data", "checkpoint", "out"], "eval")?;
    let ck = cfg.path("checkpoint").expect("required");
    let state = load_state(&ck)?;
    check_net(cfg, &state, &ck)?;
    let tc = cfg.train_config(state.phase)?;
    let nets = Networks {
        params: state.averaged_params(),
        nms_threshold: tc.nms_threshold,
    };
    let hr = nets.params.config().hr_resolution();
    let scenes = tile_scenes(&load_dataset(&cfg.path("data").expect("required"))?, hr)?;
    let samples: Vec<_> = scenes
        .iter()
        .map(|s| s.source_id.clone())
        .zip(pairs(&scenes)?)
        .collect();
    let iou = cfg.value("eval_iou", 0.5, "a number")?;
    let report =
        thread_pool()?.install(|| evaluate(&samples, &nets, &nets, iou, tc.conf_threshold))?;

    let out = out_dir(cfg)?;
    let metrics = out.join("metrics.csv");
    write_metrics_csv(&metrics, &report.per_image, &report.mean)?;
    let pr = out.join("pr.csv");
    write_points_csv(&pr, ["recall", "precision"], &report.detection.pr_points)?;
    let roc = out.join("roc.csv");
    write_points_csv(&roc, ["fpr", "tpr"], &report.detection.roc_points)?;
    let summary = write(
        out.join("detection_summary.txt"),
        &detection_summary(&report.detection),
    )?;
    log::info!(
        "mAP@{iou} {:.4}, F1 {:.4}, AUC {:.4}, mean PSNR {:.3}",
        report.detection.map50,
        report.detection.f1,
        report.detection.auc,
        report.mean.psnr
    );
    let m = write(
        out.join(MANIFEST_FILE),
        &manifest(
            "eval",
            cfg,
            nets.params.config(),
            &[("checkpoint", ck.display().to_string())],
        )?,
    )?;
    Ok(vec![metrics, pr, roc, summary, m])
}

pub fn cmd_sr(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.require(&["checkpoint", "input", "out"], "sr")?;
    let ck = cfg.path("checkpoint").expect("required");
    let state = load_state(&ck)?;
    check_net(cfg, &state, &ck)?;
    let input = cfg.path("input").expect("required");
    let img = load_png(&input)?;
    let b = state.params.config().base_resolution;
    if img.height() != b || img.width() != b {
        return Err(Error::Usage(format!(
            "{} is {}x{}; this network takes {b}x{b}",
            input.display(),
            img.height(),
            img.width()
        )));
    }
    let nets = Networks {
        params: state.averaged_params(),
        nms_threshold: 0.45,
    };
    let up = crate::eval::SuperResolver::super_resolve(&nets, &img)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let path = out_dir(cfg)?.join(format!("{stem}_sr.png"));
    save_png(&path, &up)?;
    Ok(vec![path])
}
