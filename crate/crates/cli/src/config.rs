use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use graspfit::hand::ProceduralHand;
use graspfit::hoiopt::{LossWeights, DEFAULT_CONTACT_THRESHOLD, DEFAULT_HAND_SCALE};
use graspfit::refine::{RefineOptions, VlmConfig};
use graspfit::render::DEFAULT_RESOLUTION;
use graspfit::Vec3;
use serde::{Deserialize, Serialize};

/// Starting placement of the hand. Empty `theta` means the rest pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitPlacement {
    pub rotation: Vec3,
    pub translation: Vec3,
    pub scale: f64,
    pub theta: Vec<Vec3>,
}

impl Default for InitPlacement {
    fn default() -> Self {
        Self { rotation: Vec3::zeros(), translation: Vec3::zeros(), scale: DEFAULT_HAND_SCALE, theta: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dense object surface, OBJ or PLY.
    pub object_mesh: PathBuf,
    /// Subdivide the object up to this many vertices before use.
    pub object_vertices: Option<usize>,
    /// Hand model JSON; the procedural `hand` is used when absent.
    pub hand_model: Option<PathBuf>,
    pub hand: ProceduralHand,
    /// Densify the hand template up to this many vertices (0 keeps it).
    pub hand_vertices: usize,
    pub out_dir: PathBuf,
    pub init: InitPlacement,
    pub weights: LossWeights,
    pub iterations: usize,
    pub lr: f64,
    pub optimize_offsets: bool,
    pub fps_count: usize,
    pub alpha: f64,
    pub contact_threshold: f64,
    pub render_resolution: u32,
    pub refine: RefineOptions,
    /// `vlm`, `mock:closest`, `mock:penetration` or `mock:fixture:<path>`.
    pub selector: String,
    pub vlm: VlmConfig,
    /// Recorded in every output; nothing is randomized at the moment.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            object_mesh: PathBuf::new(),
            object_vertices: None,
            hand_model: None,
            hand: ProceduralHand::three_finger(),
            hand_vertices: 0,
            out_dir: PathBuf::from("out"),
            init: InitPlacement::default(),
            weights: LossWeights::default(),
            iterations: 1000,
            lr: 0.01,
            optimize_offsets: false,
            fps_count: 2048,
            alpha: 0.1,
            contact_threshold: DEFAULT_CONTACT_THRESHOLD,
            render_resolution: DEFAULT_RESOLUTION,
            refine: RefineOptions::default(),
            selector: "mock:penetration".into(),
            vlm: VlmConfig::default(),
            seed: 0,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub iters: Option<usize>,
    pub selector: Option<String>,
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Reads a config file, resolves relative paths against its directory,
    /// applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.object_mesh = resolve(&cfg.object_mesh);
        cfg.hand_model = cfg.hand_model.as_deref().map(resolve);
        cfg.out_dir = resolve(&cfg.out_dir);
        if let Some(rest) = cfg.selector.strip_prefix("mock:fixture:") {
            cfg.selector = format!("mock:fixture:{}", resolve(Path::new(rest)).display());
        }
        if let Some(o) = &overrides.out {
            cfg.out_dir = o.clone();
        }
        if let Some(n) = overrides.iters {
            cfg.iterations = n;
        }
        if let Some(s) = &overrides.selector {
            cfg.selector = s.clone();
        }
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.object_mesh.is_file(), "object mesh not found: {}", self.object_mesh.display());
        if let Some(h) = &self.hand_model {
            ensure!(h.is_file(), "hand model not found: {}", h.display());
        }
        ensure!(self.lr > 0.0 && self.lr.is_finite(), "lr must be positive, got {}", self.lr);
        ensure!(self.fps_count >= 4, "fps_count must be at least 4, got {}", self.fps_count);
        ensure!(self.alpha > 0.0 && self.alpha.is_finite(), "alpha must be positive, got {}", self.alpha);
        ensure!(self.contact_threshold > 0.0, "contact_threshold must be positive, got {}", self.contact_threshold);
        ensure!(
            (1..=4096).contains(&self.render_resolution),
            "render_resolution must be in 1..=4096, got {}",
            self.render_resolution
        );
        ensure!(self.init.scale > 0.0 && self.init.scale.is_finite(), "init.scale must be positive");
        self.weights.validate().map_err(anyhow::Error::from)?;
        SelectorKind::parse(&self.selector)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectorKind {
    Vlm,
    Closest,
    Penetration,
    /// VLM client talking to a local scripted server.
    Fixture(PathBuf),
}

impl SelectorKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "vlm" => Self::Vlm,
            "mock:closest" => Self::Closest,
            "mock:penetration" => Self::Penetration,
            _ => match s.strip_prefix("mock:fixture:") {
                Some(p) if !p.is_empty() => Self::Fixture(PathBuf::from(p)),
                _ => bail!("unknown selector {s:?}; expected vlm, mock:closest, mock:penetration or mock:fixture:<path>"),
            },
        })
    }
}
