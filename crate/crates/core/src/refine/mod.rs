//! Translation refinement: a 5x5x5 candidate grid around the fitted
//! translation, a penetration-based pre-filter and a mini-batch tournament
//! decided by a pluggable selector (a vision-language model or a mock).

pub mod mock;
mod vlm;

pub use vlm::{parse_selection, SelectionParseError, VlmConfig, VlmSelector, DEFAULT_API_KEY_ENV};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hoiopt::{loss_pene, HoiError, HoiScene};
use crate::render::{default_hoi_camera, encode_png, render_hoi, Camera, RenderError};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("selector protocol error: {0}")]
    Protocol(String),
    #[error("selection failed: {message}")]
    Selection { message: String, transcript: Box<SelectionTranscript> },
    #[error(transparent)]
    Hoi(#[from] HoiError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RefineError> = std::result::Result<T, E>;

pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_KEEP: usize = 9;
pub const DEFAULT_BATCH: usize = 3;
/// Per-axis offsets in units of `eta`.
pub const GRID_OFFSETS: [i32; 5] = [-2, -1, 0, 1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the grid enumeration.
    pub id: usize,
    pub offset: [i32; 3],
    pub translation: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub base: Vec3,
    pub eta: f64,
    pub candidates: Vec<Candidate>,
    /// Combined pre-filter score per candidate, once scored.
    pub scores: Option<Vec<f64>>,
}

/// All 125 translations `base + eta * o` for `o` in `{-2..2}^3`, x offset
/// outermost.
pub fn candidate_grid(base: Vec3, eta: f64) -> CandidateSet {
    let mut candidates = Vec::with_capacity(125);
    for &i in &GRID_OFFSETS {
        for &j in &GRID_OFFSETS {
            for &k in &GRID_OFFSETS {
                let o = Vec3::new(i as f64, j as f64, k as f64);
                candidates.push(Candidate { id: candidates.len(), offset: [i, j, k], translation: base + o * eta });
            }
        }
    }
    CandidateSet { base, eta, candidates, scores: None }
}

/// Semantic plausibility score added to the penetration term.
pub trait SemanticScorer {
    fn score(&mut self, candidate: &Candidate) -> f64;
}

/// Scores everything 0, leaving penetration as the only criterion.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroScorer;

impl SemanticScorer for ZeroScorer {
    fn score(&mut self, _: &Candidate) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub penetration: f64,
    pub semantic: f64,
    pub combined: f64,
}

/// `semantic - (p - min) / (max - min)`; the penetration term is 0 when all
/// penetrations are equal.
pub fn combined_scores(penetration: &[f64], semantic: &[f64]) -> Vec<f64> {
    let lo = penetration.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = penetration.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    penetration
        .iter()
        .zip(semantic)
        .map(|(p, s)| s - if span > 0.0 { (p - lo) / span } else { 0.0 })
        .collect()
}

/// Indices of the `keep` highest scores, best first; ties keep input order.
pub fn top_k(scores: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(keep);
    idx
}

/// Penetration loss of the scene with its translation replaced.
pub fn penetration_at(scene: &HoiScene, translation: Vec3) -> Result<f64> {
    let mut s = scene.clone();
    s.params.translation = translation;
    Ok(loss_pene(&s)?.value)
}

/// Scores every candidate and keeps the best `keep`, best first.
pub fn prefilter(
    set: &mut CandidateSet,
    scene: &HoiScene,
    scorer: &mut dyn SemanticScorer,
    keep: usize,
) -> Result<Vec<ScoredCandidate>> {
    if keep > set.candidates.len() {
        return Err(RefineError::Config(format!("keep {keep} exceeds {} candidates", set.candidates.len())));
    }
    let pen = set.candidates.iter().map(|c| penetration_at(scene, c.translation)).collect::<Result<Vec<_>>>()?;
    let sem: Vec<f64> = set.candidates.iter().map(|c| scorer.score(c)).collect();
    let combined = combined_scores(&pen, &sem);
    let out = top_k(&combined, keep)
        .into_iter()
        .map(|i| ScoredCandidate {
            candidate: set.candidates[i],
            penetration: pen[i],
            semantic: sem[i],
            combined: combined[i],
        })
        .collect();
    set.scores = Some(combined);
    Ok(out)
}

/// One tournament entrant.
#[derive(Debug, Clone, PartialEq)]
pub struct Entrant {
    pub id: usize,
    pub translation: Vec3,
    /// PNG bytes; selectors that do not look at images accept `None`.
    pub image: Option<Vec<u8>>,
}

/// Chosen group member, 1-based, with the raw reply and any retry notes.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub choice: usize,
    pub raw: String,
    pub log: Vec<String>,
}

pub trait Selector {
    fn select(&mut self, group: &[Entrant]) -> Result<Verdict>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub level: usize,
    pub members: Vec<usize>,
    /// 1-based choice; `None` for a single member advancing without a call.
    pub choice: Option<usize>,
    pub winner: usize,
    pub raw: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionTranscript {
    pub rounds: Vec<Round>,
    pub winner: Option<usize>,
    pub retry_log: Vec<String>,
}

impl SelectionTranscript {
    /// Re-runs the tournament over `ids` feeding back the recorded choices.
    /// Fails if the grouping does not match the recording.
    pub fn replay(&self, ids: &[usize], batch: usize) -> Result<usize> {
        let mut sel = ReplaySelector { rounds: self.rounds.iter().filter(|r| r.choice.is_some()).collect(), next: 0 };
        let entrants: Vec<Entrant> = ids.iter().map(|&id| Entrant { id, translation: Vec3::zeros(), image: None }).collect();
        let (winner, t) = tournament_select(&entrants, &mut sel, batch)?;
        if t.rounds.iter().map(|r| &r.members).ne(self.rounds.iter().map(|r| &r.members)) {
            return Err(RefineError::Protocol("replayed grouping differs from the transcript".into()));
        }
        Ok(winner)
    }
}

struct ReplaySelector<'a> {
    rounds: Vec<&'a Round>,
    next: usize,
}

impl Selector for ReplaySelector<'_> {
    fn select(&mut self, group: &[Entrant]) -> Result<Verdict> {
        let r = self.rounds.get(self.next).ok_or_else(|| RefineError::Protocol("transcript exhausted".into()))?;
        self.next += 1;
        let members: Vec<usize> = group.iter().map(|e| e.id).collect();
        if members != r.members {
            return Err(RefineError::Protocol(format!("group {members:?} does not match recorded {:?}", r.members)));
        }
        Ok(Verdict { choice: r.choice.unwrap_or(1), raw: r.raw.clone().unwrap_or_default(), log: Vec::new() })
    }
}

/// Splits survivors into consecutive groups of at most `batch`, asks the
/// selector for each group of two or more, and repeats on the winners until
/// one is left. Returns the winner's id.
pub fn tournament_select(
    entrants: &[Entrant],
    selector: &mut dyn Selector,
    batch: usize,
) -> Result<(usize, SelectionTranscript)> {
    if entrants.is_empty() {
        return Err(RefineError::Config("no candidates to select from".into()));
    }
    if batch < 2 {
        return Err(RefineError::Config(format!("batch size {batch} must be at least 2")));
    }
    let mut transcript = SelectionTranscript::default();
    let mut survivors: Vec<&Entrant> = entrants.iter().collect();
    let mut level = 0;
    while survivors.len() > 1 {
        let mut next = Vec::with_capacity(survivors.len().div_ceil(batch));
        for group in survivors.chunks(batch) {
            let members: Vec<usize> = group.iter().map(|e| e.id).collect();
            if group.len() == 1 {
                transcript.rounds.push(Round { level, members, choice: None, winner: group[0].id, raw: None });
                next.push(group[0]);
                continue;
            }
            let owned: Vec<Entrant> = group.iter().map(|e| (*e).clone()).collect();
            let verdict = match selector.select(&owned) {
                Ok(v) => v,
                Err(e) => {
                    return Err(RefineError::Selection {
                        message: format!("group {members:?}: {e}"),
                        transcript: Box::new(transcript),
                    })
                }
            };
            transcript.retry_log.extend(verdict.log.iter().cloned());
            if verdict.choice == 0 || verdict.choice > group.len() {
                return Err(RefineError::Selection {
                    message: format!("choice {} outside 1..={} for group {members:?}", verdict.choice, group.len()),
                    transcript: Box::new(transcript),
                });
            }
            let w = group[verdict.choice - 1];
            transcript.rounds.push(Round { level, members, choice: Some(verdict.choice), winner: w.id, raw: Some(verdict.raw) });
            next.push(w);
        }
        survivors = next;
        level += 1;
    }
    let winner = survivors[0].id;
    transcript.winner = Some(winner);
    Ok((winner, transcript))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    pub eta: f64,
    pub keep: usize,
    pub batch: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA, keep: DEFAULT_KEEP, batch: DEFAULT_BATCH }
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub translation: Vec3,
    pub winner: Candidate,
    pub candidates: CandidateSet,
    pub survivors: Vec<ScoredCandidate>,
    /// PNG per survivor, in survivor order.
    pub images: Vec<Vec<u8>>,
    pub transcript: SelectionTranscript,
}

/// Grid, pre-filter, render each survivor with `render` and run the
/// tournament. The scene is not modified.
pub fn refine_translation(
    scene: &HoiScene,
    scorer: &mut dyn SemanticScorer,
    selector: &mut dyn Selector,
    render: &mut dyn FnMut(&HoiScene) -> Result<Vec<u8>>,
    options: &RefineOptions,
) -> Result<RefineOutcome> {
    if !(options.eta.is_finite() && options.eta > 0.0) {
        return Err(RefineError::Config(format!("eta must be positive, got {}", options.eta)));
    }
    let mut set = candidate_grid(scene.params.translation, options.eta);
    let survivors = prefilter(&mut set, scene, scorer, options.keep)?;
    let mut images = Vec::with_capacity(survivors.len());
    let mut entrants = Vec::with_capacity(survivors.len());
    for s in &survivors {
        let mut moved = scene.clone();
        moved.params.translation = s.candidate.translation;
        let png = render(&moved)?;
        entrants.push(Entrant { id: s.candidate.id, translation: s.candidate.translation, image: Some(png.clone()) });
        images.push(png);
    }
    let (winner, transcript) = tournament_select(&entrants, selector, options.batch)?;
    let winner = set.candidates[winner];
    Ok(RefineOutcome { translation: winner.translation, winner, candidates: set, survivors, images, transcript })
}

/// Camera shared by every candidate: frames the base scene grown by the
/// grid's reach, so only the hand moves between images.
pub fn candidate_camera(scene: &HoiScene, eta: f64, resolution: u32) -> Result<Camera> {
    let hand = scene.compose()?;
    let reach = Vec3::repeat(2.0 * eta);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in scene.concise.mesh.vertices.iter().chain(&hand.vertices) {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if lo.x > hi.x {
        lo = Vec3::zeros();
        hi = Vec3::zeros();
    }
    Ok(default_hoi_camera((lo - reach, hi + reach), resolution, resolution))
}

/// PNG renderer for `refine_translation` using one fixed camera.
pub fn png_renderer(camera: Camera) -> impl FnMut(&HoiScene) -> Result<Vec<u8>> {
    move |scene: &HoiScene| {
        let hand = scene.compose()?;
        let img = render_hoi(scene, &hand, Some(&camera), camera.width)?;
        Ok(encode_png(&img)?)
    }
}
