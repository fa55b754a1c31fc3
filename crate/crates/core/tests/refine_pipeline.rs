use graspfit::hoiopt::{loss_pene, SphereGrasp};
use graspfit::refine::mock::{closest_to, penetration_greedy, MockReply, MockScript, MockServer};
use graspfit::refine::{
    candidate_camera, candidate_grid, png_renderer, prefilter, refine_translation, Entrant, RefineError,
    RefineOptions, Selector, VlmConfig, VlmSelector, ZeroScorer,
};
use graspfit::render::decode_png;
use graspfit::Vec3;

fn small_scene() -> graspfit::hoiopt::HoiScene {
    SphereGrasp { subdivisions: 3, concise_points: 256, hand_vertices: 0, ..Default::default() }.build().unwrap()
}

fn no_images(_: &graspfit::hoiopt::HoiScene) -> graspfit::refine::Result<Vec<u8>> {
    Ok(Vec::new())
}

#[test]
fn closest_to_base_selector_keeps_base() {
    let scene = small_scene();
    let base = scene.params.translation;
    let mut sel = closest_to(base);
    // All candidates survive so the base is guaranteed to be among them.
    let opts = RefineOptions { keep: 125, ..Default::default() };
    let out = refine_translation(&scene, &mut ZeroScorer, &mut sel, &mut no_images, &opts).unwrap();
    assert_eq!(out.translation, base);
    assert_eq!(out.winner.offset, [0, 0, 0]);
}

#[test]
fn penetration_greedy_matches_brute_force() {
    let scene = small_scene();
    let before = scene.params.clone();
    let mut set = candidate_grid(scene.params.translation, 0.01);
    // Brute force over all 125 candidates.
    let pen: Vec<f64> = set
        .candidates
        .iter()
        .map(|c| {
            let mut s = scene.clone();
            s.params.translation = c.translation;
            loss_pene(&s).unwrap().value
        })
        .collect();
    let best = (0..125).min_by(|&a, &b| pen[a].total_cmp(&pen[b])).unwrap();

    let kept = prefilter(&mut set, &scene, &mut ZeroScorer, 9).unwrap();
    assert_eq!(kept.len(), 9);
    let mut sorted: Vec<f64> = pen.clone();
    sorted.sort_by(f64::total_cmp);
    for (k, s) in kept.iter().zip(&sorted) {
        assert_eq!(k.penetration, *s);
        assert_eq!(pen[k.candidate.id], k.penetration);
    }

    let mut sel = penetration_greedy(&scene);
    let out = refine_translation(&scene, &mut ZeroScorer, &mut sel, &mut no_images, &RefineOptions::default()).unwrap();
    assert_eq!(out.winner.id, best);
    assert_eq!(scene.params, before);
    // Each level of the transcript covers the previous level's survivors once.
    let mut prev: Vec<usize> = out.survivors.iter().map(|s| s.candidate.id).collect();
    for level in 0..=out.transcript.rounds.iter().map(|r| r.level).max().unwrap() {
        let rounds: Vec<_> = out.transcript.rounds.iter().filter(|r| r.level == level).collect();
        assert_eq!(rounds.iter().flat_map(|r| r.members.clone()).collect::<Vec<_>>(), prev);
        prev = rounds.iter().map(|r| r.winner).collect();
    }
    assert_eq!(out.transcript.replay(&out.survivors.iter().map(|s| s.candidate.id).collect::<Vec<_>>(), 3).unwrap(), best);
}

#[test]
fn renders_every_survivor_with_a_fixed_camera() {
    let scene = small_scene();
    let cam = candidate_camera(&scene, 0.01, 64).unwrap();
    let mut render = png_renderer(cam);
    let mut sel = closest_to(scene.params.translation);
    let out = refine_translation(&scene, &mut ZeroScorer, &mut sel, &mut render, &RefineOptions::default()).unwrap();
    assert_eq!(out.images.len(), 9);
    for png in &out.images {
        let img = decode_png(png).unwrap();
        assert_eq!((img.width, img.height), (64, 64));
        assert!(img.pixels.iter().any(|&c| c != 255));
    }
}

fn group(n: usize) -> Vec<Entrant> {
    (0..n).map(|id| Entrant { id, translation: Vec3::zeros(), image: Some(vec![id as u8; 4]) }).collect()
}

fn client(server: &MockServer, retries: usize) -> VlmSelector {
    let cfg = VlmConfig { base_url: server.base_url(), max_retries: retries, backoff_ms: 1, timeout_secs: 5.0, ..Default::default() };
    VlmSelector::with_token(cfg, "secret".into()).unwrap()
}

#[test]
fn vlm_parses_tagged_reply_and_sends_bearer_token() {
    let server = MockServer::start(MockScript { fallback: vec![MockReply::content("<think>x</think>{\"selection\": 2}")], ..Default::default() }).unwrap();
    let v = client(&server, 3).select(&group(3)).unwrap();
    assert_eq!(v.choice, 2);
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].path, "/chat/completions");
    assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(reqs[0].body.matches("data:image/png;base64,").count(), 3);
}

#[test]
fn vlm_routes_by_request_hash() {
    let probe = MockServer::start(MockScript::default()).unwrap();
    let sel = client(&probe, 0);
    let imgs = group(2);
    let body = sel.request_body(&[imgs[0].image.as_deref().unwrap(), imgs[1].image.as_deref().unwrap()], None);
    let mut script = MockScript { fallback: vec![MockReply::content("{\"selection\": 1}")], ..Default::default() };
    script.routes.insert(graspfit::sha256_hex(body.as_bytes()), vec![MockReply::content("{\"selection\": 2}")]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.json");
    script.save(&path).unwrap();
    let server = MockServer::start(MockScript::load(&path).unwrap()).unwrap();
    assert_eq!(client(&server, 0).select(&imgs).unwrap().choice, 2);
    assert_eq!(client(&server, 0).select(&group(3)).unwrap().choice, 1);
}

#[test]
fn vlm_reprompts_once_then_errors() {
    let server = MockServer::start(MockScript { fallback: vec![MockReply::content("{\"selection\": 4}")], ..Default::default() }).unwrap();
    let err = client(&server, 3).select(&group(3)).unwrap_err();
    assert!(matches!(err, RefineError::Protocol(_)), "{err}");
    let reqs = server.requests();
    assert_eq!(reqs.len(), 2);
    assert!(reqs[1].body.contains("{\\\"selection\\\": 4}"));

    let server = MockServer::start(MockScript {
        fallback: vec![MockReply::content("{\"selection\": 4}"), MockReply::content("{\"selection\": 3}")],
        ..Default::default()
    })
    .unwrap();
    let v = client(&server, 3).select(&group(3)).unwrap();
    assert_eq!(v.choice, 3);
    assert_eq!(v.log.len(), 1);
}

#[test]
fn vlm_retries_transport_failures_three_times() {
    let flaky = vec![
        MockReply::Drop,
        MockReply::Status { code: 503, body: "busy".into() },
        MockReply::Status { code: 429, body: "slow down".into() },
        MockReply::content("{\"selection\": 1}"),
    ];
    let server = MockServer::start(MockScript { fallback: flaky, ..Default::default() }).unwrap();
    let v = client(&server, 3).select(&group(2)).unwrap();
    assert_eq!(v.choice, 1);
    assert_eq!(v.log.len(), 3);
    assert_eq!(server.requests().len(), 4);

    let server = MockServer::start(MockScript { fallback: vec![MockReply::Status { code: 500, body: String::new() }], ..Default::default() }).unwrap();
    let err = client(&server, 3).select(&group(2)).unwrap_err();
    assert!(matches!(err, RefineError::Transport { attempts: 4, .. }), "{err}");
    assert_eq!(server.requests().len(), 4);

    let server = MockServer::start(MockScript { fallback: vec![MockReply::Status { code: 401, body: "no".into() }], ..Default::default() }).unwrap();
    assert!(matches!(client(&server, 3).select(&group(2)), Err(RefineError::Protocol(_))));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn vlm_tournament_transcript_replays() {
    let replies = vec![
        MockReply::content("<think>a</think>{\"selection\": 3}"),
        MockReply::content("{\"selection\": 1}"),
        MockReply::content("<think>b</think>{\"selection\": 2}"),
        MockReply::content("{\"selection\": 2}"),
    ];
    let server = MockServer::start(MockScript { fallback: replies, ..Default::default() }).unwrap();
    let entrants = group(9);
    let (w, t) = graspfit::refine::tournament_select(&entrants, &mut client(&server, 0), 3).unwrap();
    // Round one winners: 2, 3, 7; final picks the second of those.
    assert_eq!(w, 3);
    assert_eq!(t.replay(&(0..9).collect::<Vec<_>>(), 3).unwrap(), w);
    let json = serde_json::to_string(&t).unwrap();
    assert_eq!(serde_json::from_str::<graspfit::refine::SelectionTranscript>(&json).unwrap(), t);
}
