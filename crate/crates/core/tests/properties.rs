use graspfit::geometry::primitives::icosphere;
use graspfit::geometry::{upsample_to_target, vertex_normals, ConciseMesh, KnnIndex};
use graspfit::hand::{procedural_hand, rodrigues, ProceduralHand};
use graspfit::hoiopt::{
    init_contact_masks, loss_cons, loss_hc, loss_oc, loss_pene, loss_repos, total_loss, HoiParams, HoiScene,
    LossWeights,
};
use graspfit::refine::candidate_grid;
use graspfit::render::{rasterize, Camera, BACKGROUND};
use graspfit::geometry::TriMesh;
use graspfit::Vec3;
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn scene(theta: &[Vec3]) -> HoiScene {
    let model = procedural_hand(&ProceduralHand::three_finger()).unwrap();
    let center = Vec3::new(0.06, 0.02, 0.01);
    let object: Vec<Vec3> = icosphere(0.03, 3).vertices.iter().map(|v| v + center).collect();
    let concise_mesh = icosphere(0.03, 2).map_vertices(|v| v + center);
    let n = concise_mesh.vertex_count();
    let concise = ConciseMesh::from_mesh(concise_mesh, (0..n).collect()).unwrap();
    let mut init = HoiParams::new(&model);
    init.scale = 1.0;
    for (row, t) in init.pose.theta.iter_mut().zip(theta) {
        *row = *t;
    }
    HoiScene::new(object, concise, model, init).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn knn_equals_brute_force(points in prop::collection::vec(vec3(1.0), 1..200), q in vec3(1.2), k in 1usize..8) {
        let k = k.min(points.len());
        let index = KnnIndex::from_points(points.clone());
        let mut brute: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - q).norm(), i)).collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<usize> = index.query(&q, k).unwrap().iter().map(|n| n.index).collect();
        prop_assert_eq!(got, brute[..k].iter().map(|b| b.1).collect::<Vec<_>>());
    }

    #[test]
    fn upsampling_keeps_vertices_and_splits_edges(extra in 1usize..300, stretch in vec3(1.0)) {
        let mesh = icosphere(1.0, 1).map_vertices(|p| p.component_mul(&(Vec3::repeat(1.5) + stretch)));
        let up = upsample_to_target(&mesh, mesh.vertex_count() + extra).unwrap();
        prop_assert_eq!(&up.mesh.vertices[..mesh.vertex_count()], &mesh.vertices[..]);
        prop_assert!(up.mesh.vertex_count() >= mesh.vertex_count() + extra);
        for (i, p) in up.parents.iter().enumerate() {
            let v = up.mesh.vertices[mesh.vertex_count() + i];
            let (a, b) = (up.mesh.vertices[p.a], up.mesh.vertices[p.b]);
            let on_line = (a + (b - a) * p.weight - v).norm();
            prop_assert!(on_line < 1e-12 && (0.0..=1.0).contains(&p.weight));
        }
    }

    #[test]
    fn normals_follow_rotations(w in vec3(3.0)) {
        let mesh = icosphere(0.7, 1).map_vertices(|p| Vec3::new(p.x * 2.0, p.y, p.z * 0.5));
        let r = rodrigues(&w);
        let a = vertex_normals(&mesh).normals;
        let b = vertex_normals(&mesh.map_vertices(|p| r * p)).normals;
        for (na, nb) in a.iter().zip(&b) {
            prop_assert!((r * na - nb).norm() < 1e-9);
        }
    }

    #[test]
    fn losses_are_non_negative_and_sum_exactly(
        theta in prop::collection::vec(vec3(0.4), 7),
        t in vec3(0.015),
        r in vec3(0.3),
    ) {
        let mut s = scene(&theta);
        s.params.translation = t;
        s.params.rotation = r;
        let masks = init_contact_masks(&s).unwrap();
        let w = LossWeights::default();
        let terms = [
            loss_pene(&s).unwrap().value,
            loss_hc(&s, &masks).unwrap().value,
            loss_oc(&s, &masks).unwrap().value,
            loss_repos(&s, &masks).unwrap().value,
            loss_cons(&s.params, &s.init, &w.pose_axes).value,
        ];
        prop_assert!(terms.iter().all(|&v| v >= 0.0));
        let total = total_loss(&s, &masks, &w, None).unwrap();
        let expected = w.pene * terms[0] + w.hc * terms[1] + w.oc * terms[2] + w.repos * terms[3] + w.cons * terms[4];
        prop_assert_eq!(total.value(), expected);
        let at_init = loss_cons(&s.init, &s.init, &w.pose_axes);
        prop_assert_eq!(at_init.value, 0.0);
        prop_assert!(at_init.grad.pack(true).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn losses_are_rigidly_covariant(theta in prop::collection::vec(vec3(0.4), 7), w in vec3(1.5), q in vec3(0.5)) {
        let s = scene(&theta);
        let masks = init_contact_masks(&s).unwrap();
        let values = |s: &HoiScene| [
            loss_pene(s).unwrap().value,
            loss_oc(s, &masks).unwrap().value,
            loss_hc(s, &masks).unwrap().value,
            loss_repos(s, &masks).unwrap().value,
        ];
        let rot = rodrigues(&w);
        let object = s.object().iter().map(|p| rot * p + q).collect();
        let concise = s.concise.transformed(&rot, &q);
        // The initial placement is the identity, so the moved hand is (w, q).
        let mut init = s.init.clone();
        init.rotation = w;
        init.translation = q;
        let moved = HoiScene::new(object, concise, s.model.clone(), init).unwrap();
        for (a, b) in values(&s).iter().zip(values(&moved)) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn candidate_grid_is_a_bijection(base in vec3(1.0), eta in 1e-4f64..0.1) {
        let set = candidate_grid(base, eta);
        let mut offsets: Vec<[i32; 3]> = set.candidates.iter().map(|c| c.offset).collect();
        offsets.sort();
        offsets.dedup();
        prop_assert_eq!(offsets.len(), 125);
        prop_assert!(offsets.iter().all(|o| o.iter().all(|v| (-2..=2).contains(v))));
        prop_assert_eq!(candidate_grid(base, eta), set);
    }

    #[test]
    fn rasterizer_is_deterministic_and_occludes(shift in vec3(0.3), depth in 0.1f64..1.5) {
        let tri = |z: f64, s: f64| TriMesh {
            vertices: vec![Vec3::new(-s, -s, z), Vec3::new(s, -s, z), Vec3::new(0.0, s, z)],
            faces: vec![[0, 1, 2]],
        };
        let cam = Camera { eye: Vec3::new(0.0, 0.0, 5.0), look_at: Vec3::zeros(), up: Vec3::y(), fov_degrees: 40.0, width: 40, height: 40 };
        // Small red triangle fully behind a large blue one.
        let front = tri(0.0, 1.5);
        let back = tri(-depth, 0.3).map_vertices(|p| p + Vec3::new(shift.x, shift.y, 0.0));
        let a = rasterize(&[(&back, [255, 0, 0]), (&front, [0, 0, 255])], &cam).unwrap();
        let b = rasterize(&[(&back, [255, 0, 0]), (&front, [0, 0, 255])], &cam).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.pixels.chunks(3).all(|p| p[0] == 0 || p == BACKGROUND));
        let empty = rasterize(&[], &cam).unwrap();
        prop_assert!(empty.pixels.chunks(3).all(|p| p == BACKGROUND));
    }
}
