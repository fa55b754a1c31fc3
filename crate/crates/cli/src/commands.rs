use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, ensure, Context, Result};
use graspfit::gaussmap::{bind_vertices, OBJECT_MIN_OPACITY};
use graspfit::geometry::{
    alpha_shape, farthest_point_sample, is_watertight, load_mesh, save_mesh, upsample_to_target, ConciseMesh,
    MeshFormat, PointCloud, TriMesh,
};
use graspfit::hand::{procedural_hand, HandModel};
use graspfit::hoiopt::{
    init_contact_masks, metrics, optimize as fit, total_loss, ContactMasks, HoiParams, HoiScene, LossBreakdown,
    Metrics, OptimizeOptions,
};
use graspfit::refine::mock::{closest_to, penetration_greedy, MockScript, MockServer};
use graspfit::refine::{
    candidate_camera, png_renderer, refine_translation, Candidate, ScoredCandidate, SelectionTranscript, Selector,
    VlmSelector, ZeroScorer,
};
use graspfit::render::{default_hoi_camera, render_hoi, write_png, Camera};
use graspfit::Vec3;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SelectorKind};

pub struct Prepared {
    pub object: TriMesh,
    pub concise: ConciseMesh,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub seed: u64,
    pub object_vertices: usize,
    pub object_faces: usize,
    pub concise_vertices: usize,
    pub concise_faces: usize,
    pub concise_watertight: bool,
    pub concise_euler: i64,
}

/// Schema of `result.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub seed: u64,
    pub iterations: usize,
    pub params: HoiParams,
    pub masks: ContactMasks,
    pub final_loss: LossBreakdown,
    pub initial_metrics: Metrics,
    pub metrics: Metrics,
}

/// Schema of `refine.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RefineReport {
    pub seed: u64,
    pub selector: String,
    pub base: Vec3,
    pub translation: Vec3,
    pub winner: Candidate,
    pub survivors: Vec<ScoredCandidate>,
    pub params: HoiParams,
    pub metrics: Metrics,
    pub transcript: SelectionTranscript,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

/// Loads (and optionally densifies) the object, reconstructs the concise
/// mesh and writes both plus the object Gaussians to the output directory.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let mut object =
        load_mesh(&cfg.object_mesh).with_context(|| format!("cannot load {}", cfg.object_mesh.display()))?;
    if let Some(n) = cfg.object_vertices.filter(|&n| n > object.vertex_count()) {
        object = upsample_to_target(&object, n)?.mesh;
    }
    let cloud = PointCloud::new(object.vertices.clone())?;
    let ids = farthest_point_sample(&cloud, cfg.fps_count.min(cloud.len()), 0)?;
    let sample = PointCloud::new(ids.iter().map(|&i| cloud.points[i]).collect())?;
    let mut concise = alpha_shape(&sample, cfg.alpha)?;
    concise.source_indices = concise.source_indices.iter().map(|&i| ids[i]).collect();
    if !concise.watertight {
        log::warn!("concise mesh is not watertight; inside tests may be unreliable");
    }
    let (gaussians, _) = bind_vertices(&object, OBJECT_MIN_OPACITY)?;

    save_mesh(&object, cfg.out_dir.join("object.ply"), MeshFormat::Ply)?;
    concise.save(cfg.out_dir.join("concise.ply"))?;
    gaussians.save_ply(cfg.out_dir.join("object_gaussians.ply"))?;
    let w = is_watertight(&concise.mesh);
    write_json(
        &cfg.out_dir.join("prepare.json"),
        &PrepareSummary {
            seed: cfg.seed,
            object_vertices: object.vertex_count(),
            object_faces: object.face_count(),
            concise_vertices: concise.mesh.vertex_count(),
            concise_faces: concise.mesh.face_count(),
            concise_watertight: w.watertight,
            concise_euler: w.euler_characteristic,
        },
    )?;
    Ok(Prepared { object, concise })
}

fn hand_model(cfg: &RunConfig) -> Result<HandModel> {
    let mut model = match &cfg.hand_model {
        Some(p) => HandModel::load(p).with_context(|| format!("cannot load hand model {}", p.display()))?,
        None => procedural_hand(&cfg.hand)?,
    };
    if cfg.hand_vertices > model.vertex_count() {
        model = model.upsampled(cfg.hand_vertices)?;
    }
    Ok(model)
}

fn initial_params(cfg: &RunConfig, model: &HandModel) -> Result<HoiParams> {
    let mut p = HoiParams::new(model);
    p.rotation = cfg.init.rotation;
    p.translation = cfg.init.translation;
    p.scale = cfg.init.scale;
    if !cfg.init.theta.is_empty() {
        ensure!(
            cfg.init.theta.len() == model.joint_count(),
            "init.theta has {} rows, the hand has {} joints",
            cfg.init.theta.len(),
            model.joint_count()
        );
        p.pose.theta = cfg.init.theta.clone();
    }
    Ok(p)
}

/// Scene at its initial placement.
pub fn build_scene(cfg: &RunConfig) -> Result<HoiScene> {
    let prepared = prepare(cfg)?;
    let model = hand_model(cfg)?;
    let init = initial_params(cfg, &model)?;
    Ok(HoiScene::new(prepared.object.vertices, prepared.concise, model, init)?)
}

fn render_to(scene: &HoiScene, camera: &Camera, path: &Path) -> Result<()> {
    let hand = scene.compose()?;
    write_png(&render_hoi(scene, &hand, Some(camera), camera.width)?, path)?;
    Ok(())
}

/// Camera framing the object with room for the hand around it.
fn scene_camera(scene: &HoiScene, resolution: u32) -> Result<Camera> {
    let hand = scene.compose()?;
    let bounds = scene
        .concise
        .mesh
        .vertices
        .iter()
        .chain(&hand.vertices)
        .fold(None, |acc: Option<(Vec3, Vec3)>, p| match acc {
            None => Some((*p, *p)),
            Some((lo, hi)) => Some((lo.inf(p), hi.sup(p))),
        })
        .unwrap_or((Vec3::zeros(), Vec3::zeros()));
    Ok(default_hoi_camera(bounds, resolution, resolution))
}

pub fn optimize(cfg: &RunConfig) -> Result<()> {
    let mut scene = build_scene(cfg)?;
    let masks = init_contact_masks(&scene)?;
    let camera = scene_camera(&scene, cfg.render_resolution)?;
    render_to(&scene, &camera, &cfg.out_dir.join("before.png"))?;
    let options = OptimizeOptions {
        iterations: cfg.iterations,
        lr: cfg.lr,
        optimize_offsets: cfg.optimize_offsets,
        contact_threshold: cfg.contact_threshold,
        ..Default::default()
    };
    let result = fit(&mut scene, &masks, &cfg.weights, &options)?;
    render_to(&scene, &camera, &cfg.out_dir.join("after.png"))?;

    let mut csv = String::from("iteration,pene,hc,oc,repos,cons,offsets,total,penetrating,repos_joints\n");
    for (i, b) in result.trace.iter().enumerate() {
        writeln!(
            csv,
            "{i},{},{},{},{},{},{},{},{},{}",
            b.pene, b.hc, b.oc, b.repos, b.cons, b.offsets, b.total, b.penetrating, b.repos_joints
        )?;
    }
    fs::write(cfg.out_dir.join("trace.csv"), csv)?;
    let final_loss = total_loss(&scene, &masks, &cfg.weights, None)?.breakdown;
    let report = OptimizeReport {
        seed: cfg.seed,
        iterations: cfg.iterations,
        params: result.params,
        masks,
        final_loss,
        initial_metrics: result.initial_metrics,
        metrics: result.metrics,
    };
    write_json(&cfg.out_dir.join("result.json"), &report)?;
    println!(
        "max penetration {:.6} -> {:.6}, contact {}",
        report.initial_metrics.max_penetration, report.metrics.max_penetration, report.metrics.contact
    );
    Ok(())
}

/// Scene with the parameters of the most recent run in the output
/// directory: refined, else optimized, else initial.
fn latest_scene(cfg: &RunConfig) -> Result<HoiScene> {
    let mut scene = build_scene(cfg)?;
    let refined = cfg.out_dir.join("refine.json");
    let fitted = cfg.out_dir.join("result.json");
    if refined.is_file() {
        scene.params = read_json::<RefineReport>(&refined)?.params;
    } else if fitted.is_file() {
        scene.params = read_json::<OptimizeReport>(&fitted)?.params;
    }
    ensure!(
        scene.params.pose.theta.len() == scene.model.joint_count(),
        "stored parameters do not match the configured hand"
    );
    Ok(scene)
}

fn fitted_scene(cfg: &RunConfig) -> Result<HoiScene> {
    let mut scene = build_scene(cfg)?;
    let fitted = cfg.out_dir.join("result.json");
    if fitted.is_file() {
        scene.params = read_json::<OptimizeReport>(&fitted)?.params;
    }
    Ok(scene)
}

pub fn refine(cfg: &RunConfig) -> Result<()> {
    let kind = SelectorKind::parse(&cfg.selector)?;
    // Resolve the token before any work so a missing variable fails fast.
    let mut server = None;
    let mut vlm = match &kind {
        SelectorKind::Vlm => Some(VlmSelector::from_env(cfg.vlm.clone())?),
        SelectorKind::Fixture(p) => {
            let s = MockServer::start(MockScript::load(p)?)?;
            let vcfg = graspfit::refine::VlmConfig { base_url: s.base_url(), ..cfg.vlm.clone() };
            server = Some(s);
            Some(VlmSelector::with_token(vcfg, "fixture".into())?)
        }
        _ => None,
    };
    let scene = fitted_scene(cfg)?;
    let base = scene.params.translation;
    let mut closest;
    let mut greedy;
    let selector: &mut dyn Selector = match &kind {
        SelectorKind::Closest => {
            closest = closest_to(base);
            &mut closest
        }
        SelectorKind::Penetration => {
            greedy = penetration_greedy(&scene);
            &mut greedy
        }
        SelectorKind::Vlm | SelectorKind::Fixture(_) => vlm.as_mut().expect("selector built above"),
    };
    let camera = candidate_camera(&scene, cfg.refine.eta, cfg.render_resolution)?;
    let mut render = png_renderer(camera);
    let outcome = match refine_translation(&scene, &mut ZeroScorer, selector, &mut render, &cfg.refine) {
        Ok(o) => o,
        Err(graspfit::refine::RefineError::Selection { message, transcript }) => {
            write_json(&cfg.out_dir.join("transcript.json"), &transcript)?;
            return Err(anyhow!("selection failed: {message} (partial transcript written)"));
        }
        Err(e) => return Err(e.into()),
    };
    drop(server);

    let dir = cfg.out_dir.join("candidates");
    fs::create_dir_all(&dir)?;
    for (s, png) in outcome.survivors.iter().zip(&outcome.images) {
        fs::write(dir.join(format!("candidate_{:03}.png", s.candidate.id)), png)?;
    }
    let mut refined = scene.clone();
    refined.params.translation = outcome.translation;
    let m = metrics(&refined, cfg.contact_threshold)?;
    write_json(&cfg.out_dir.join("transcript.json"), &outcome.transcript)?;
    write_json(
        &cfg.out_dir.join("refine.json"),
        &RefineReport {
            seed: cfg.seed,
            selector: cfg.selector.clone(),
            base,
            translation: outcome.translation,
            winner: outcome.winner,
            survivors: outcome.survivors,
            params: refined.params,
            metrics: m,
            transcript: outcome.transcript,
        },
    )?;
    println!(
        "refined translation [{}, {}, {}] (candidate {}, offset {:?})",
        outcome.translation.x, outcome.translation.y, outcome.translation.z, outcome.winner.id, outcome.winner.offset
    );
    Ok(())
}

pub fn render(cfg: &RunConfig) -> Result<()> {
    let scene = latest_scene(cfg)?;
    let camera = scene_camera(&scene, cfg.render_resolution)?;
    let path = cfg.out_dir.join("scene.png");
    render_to(&scene, &camera, &path)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Deserialize)]
struct WithMetrics {
    metrics: Metrics,
}

/// TSV with one row per file and a final `aggregate` row holding the
/// largest max, the mean of means and the contact ratio.
pub fn metrics_table(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::from("scene\tmax_penetration\tmean_penetration\tcontact\n");
    let mut all = Vec::with_capacity(paths.len());
    for p in paths {
        let m = read_json::<WithMetrics>(p)?.metrics;
        writeln!(out, "{}\t{}\t{}\t{}", p.display(), m.max_penetration, m.mean_penetration, u8::from(m.contact))?;
        all.push(m);
    }
    let max = all.iter().map(|m| m.max_penetration).fold(0.0, f64::max);
    let mean = all.iter().map(|m| m.mean_penetration).sum::<f64>() / all.len().max(1) as f64;
    writeln!(out, "aggregate\t{max}\t{mean}\t{}", graspfit::hoiopt::contact_ratio(&all))?;
    Ok(out)
}
