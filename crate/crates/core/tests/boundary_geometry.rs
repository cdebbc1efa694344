use gbcosface_core::boundary::{self, BoundaryState};
use gbcosface_core::geometry::{
    boundary_residual_for, hausdorff_angle, trace_boundary, BoundarySpec, BoundaryVertex, Target,
};
use gbcosface_core::sphere::normalize;
use gbcosface_core::{LossConfig, ScoreBundle, Variant};
use proptest::prelude::*;

fn gb_spec(alpha: f64, res: usize) -> BoundarySpec {
    BoundarySpec::symmetric(60.0, Variant::GbCosFace, 0.15, alpha, 0.62, res).unwrap()
}

fn dot(a: &[f64; 3], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

proptest! {
    #[test]
    fn ema_matches_closed_form(p0 in -1.0..1.0f64, c in -1.0..1.0f64, gamma in 0.0..=1.0f64, k in 1usize..=200) {
        let mut st = BoundaryState::seeded(p0, gamma).unwrap();
        for _ in 0..k {
            st = boundary::ema_update(&st, c).unwrap();
        }
        let want = c + (1.0 - gamma).powi(k as i32) * (p0 - c);
        prop_assert!((st.p_vg() - want).abs() < 1e-12);
        prop_assert_eq!(st.update_count(), k as u64);
    }

    #[test]
    fn imbalance_grows_with_alpha(p_y in -0.5..0.99f64, rest in prop::collection::vec(-0.9..0.9f64, 1..20),
                                  offset in prop_oneof![-0.3..-0.01f64, 0.01..0.3f64], s in 8.0..64.0f64) {
        let b = ScoreBundle::new(p_y, rest).unwrap();
        let p_hat = boundary::balanced_threshold(&b, s);
        let st = BoundaryState::seeded(p_hat + offset, 0.01).unwrap();
        let mut prev = -1.0;
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let cfg = LossConfig::gb_cosface(s, 0.16, alpha, 0.01);
            let (_, _, d) = boundary::per_sample_step(&b, &st, &cfg).unwrap();
            let gap = (d.g_t.ln() - d.g_n.ln()).abs();
            prop_assert!(gap >= prev - 1e-12, "alpha={alpha}: {gap} < {prev}");
            prev = gap;
        }
    }

    #[test]
    fn prototype_swap_mirrors_residuals(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, alpha in 0.0..=1.0f64) {
        prop_assume!(x * x + y * y + z * z > 1e-4);
        for variant in Variant::ALL {
            let m = if variant == Variant::ArcFace { 0.3 } else { 0.15 };
            let spec = BoundarySpec::symmetric(60.0, variant, m, alpha, 0.62, 64).unwrap();
            let p = normalize(&[x, y, z]).unwrap();
            let mirrored = normalize(&[-x, y, z]).unwrap();
            let r1 = boundary_residual_for(&p, &spec, Target::First).unwrap();
            let r2 = boundary_residual_for(&mirrored, &spec, Target::Second).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-12);
        }
    }
}

#[test]
fn full_global_boundary_is_a_circle_around_the_prototype() {
    let start = std::time::Instant::now();
    let map = trace_boundary(&gb_spec(1.0, 256)).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(!map.boundary_polyline.is_empty());
    for v in &map.boundary_polyline {
        let n = dot(&v.xyz, &v.xyz).sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        let c = dot(&v.xyz, BoundarySpec::symmetric(60.0, Variant::GbCosFace, 0.15, 1.0, 0.62, 256).unwrap().p1.as_slice());
        assert!((c - 0.77).abs() < 1e-3, "cos to P1 = {c}");
    }
}

#[test]
fn zero_alpha_boundary_is_cosface_with_double_margin() {
    let res = 256;
    let gb = trace_boundary(&gb_spec(0.0, res)).unwrap();
    let cf = trace_boundary(&BoundarySpec::symmetric(60.0, Variant::CosFace, 0.3, 0.0, 0.62, res).unwrap()).unwrap();
    let cell = std::f64::consts::PI / res as f64;
    assert!(hausdorff_angle(&gb.boundary_polyline, &cf.boundary_polyline) < cell);
    // the two residual fields differ by a factor of two, so their signs agree everywhere
    for (a, b) in gb.points.iter().zip(&cf.points) {
        assert_eq!(a.residual > 0.0, b.residual > 0.0);
    }
}

#[test]
fn softmax_boundary_is_the_bisector() {
    let spec = BoundarySpec::symmetric(60.0, Variant::NormalizedSoftmax, 0.0, 0.0, 0.62, 128).unwrap();
    let map = trace_boundary(&spec).unwrap();
    for v in &map.boundary_polyline {
        let d = dot(&v.xyz, spec.p1.as_slice()) - dot(&v.xyz, spec.p2.as_slice());
        assert!(d.abs() < 1e-6);
        assert!(v.xyz[0].abs() < 1e-6);
    }
}

#[test]
fn grid_signs_match_direct_evaluation() {
    for (variant, m, alpha) in [
        (Variant::NormalizedSoftmax, 0.0, 0.0),
        (Variant::CosFace, 0.3, 0.0),
        (Variant::ArcFace, 0.3, 0.0),
        (Variant::GbCosFace, 0.15, 0.0),
        (Variant::GbCosFace, 0.15, 0.5),
        (Variant::GbCosFace, 0.15, 1.0),
    ] {
        let spec = BoundarySpec::symmetric(60.0, variant, m, alpha, 0.62, 200).unwrap();
        let map = trace_boundary(&spec).unwrap();
        assert_eq!((map.n_lat, map.n_lon), (200, 400));
        assert_eq!(map.points.len(), 200 * 400);
        let (p1, p2) = (spec.p1.as_slice(), spec.p2.as_slice());
        for pt in &map.points {
            let a = dot(&pt.xyz, p1);
            let b = dot(&pt.xyz, p2);
            // the first prototype wins outright when its margin-adjusted logit beats the other
            let wins = match variant {
                Variant::NormalizedSoftmax => a > b,
                Variant::CosFace => a - m > b,
                Variant::ArcFace => (a.clamp(-1.0, 1.0).acos() + m) < b.clamp(-1.0, 1.0).acos(),
                Variant::GbCosFace => {
                    let p_v = alpha * 0.62 + (1.0 - alpha) * (a + b) / 2.0;
                    a > p_v + m
                }
            };
            if pt.residual.abs() > 1e-12 {
                assert_eq!(pt.residual > 0.0, wins, "{variant:?} at {:?}", pt.xyz);
            }
        }
    }
}

#[test]
fn arcface_vertices_sit_on_the_zero_set() {
    let spec = BoundarySpec::symmetric(60.0, Variant::ArcFace, 0.3, 0.0, 0.62, 128).unwrap();
    let map = trace_boundary(&spec).unwrap();
    assert!(!map.boundary_polyline.is_empty());
    for v in &map.boundary_polyline {
        let p = normalize(&v.xyz).unwrap();
        assert!(boundary_residual_for(&p, &spec, Target::First).unwrap().abs() < 1e-4);
    }
}

/// Exact zero set of the binary GB residual: the circle `u·P = c` with
/// `u ∝ (1+α)/2·P1 − (1−α)/2·P2`, sampled densely.
fn exact_circle(spec: &BoundarySpec, samples: usize) -> Vec<BoundaryVertex> {
    let (p1, p2) = (spec.p1.as_slice(), spec.p2.as_slice());
    let a = spec.alpha;
    let n: Vec<f64> = (0..3).map(|k| 0.5 * (1.0 + a) * p1[k] - 0.5 * (1.0 - a) * p2[k]).collect();
    let len = dot(&[n[0], n[1], n[2]], &n).sqrt();
    let u = [n[0] / len, n[1] / len, n[2] / len];
    let c = (a * spec.p_vg + spec.m) / len;
    let e1 = normalize(&[u[2], 0.0, -u[0]]).unwrap().into_vec();
    let e2 = [u[1] * e1[2] - u[2] * e1[1], u[2] * e1[0] - u[0] * e1[2], u[0] * e1[1] - u[1] * e1[0]];
    let r = (1.0 - c * c).sqrt();
    (0..samples)
        .map(|i| {
            let t = i as f64 / samples as f64 * std::f64::consts::TAU;
            let xyz: [f64; 3] = std::array::from_fn(|k| c * u[k] + r * (t.cos() * e1[k] + t.sin() * e2[k]));
            BoundaryVertex { xyz, lat_deg: 0.0, lon_deg: 0.0, residual: 0.0 }
        })
        .collect()
}

#[test]
fn alpha_steps_move_the_boundary_as_the_exact_circles_do() {
    let res = 96;
    let cell = std::f64::consts::PI / res as f64;
    let specs: Vec<BoundarySpec> = (0..=10).map(|k| gb_spec(k as f64 / 10.0, res)).collect();
    let traced: Vec<_> = specs.iter().map(|s| trace_boundary(s).unwrap().boundary_polyline).collect();
    let exact: Vec<_> = specs.iter().map(|s| exact_circle(s, 1500)).collect();
    for k in 0..10 {
        let got = hausdorff_angle(&traced[k], &traced[k + 1]);
        let want = hausdorff_angle(&exact[k], &exact[k + 1]);
        assert!((got - want).abs() < 2.0 * cell, "step {k}: {got} vs {want}");
    }
    // the deformation is continuous: finer steps shrink the displacement everywhere
    let fine: Vec<_> = (0..=25).map(|k| exact_circle(&gb_spec(k as f64 / 25.0, res), 1500)).collect();
    for w in fine.windows(2) {
        assert!(hausdorff_angle(&w[0], &w[1]) < 0.15);
    }
}

#[test]
#[ignore = "the 0.15 rad bound fails for alpha < 0.5: the exact zero sets at alpha 0 and 0.1 are 0.30 rad apart"]
fn tenth_alpha_steps_move_the_boundary_less_than_0_15_rad() {
    let traces: Vec<Vec<BoundaryVertex>> = (0..=10)
        .map(|k| trace_boundary(&gb_spec(k as f64 / 10.0, 96)).unwrap().boundary_polyline)
        .collect();
    for w in traces.windows(2) {
        assert!(hausdorff_angle(&w[0], &w[1]) < 0.15);
    }
}

#[test]
fn boundary_margin_zero_flips_at_bisector() {
    let spec = BoundarySpec::symmetric(60.0, Variant::GbCosFace, 0.0, 0.0, 0.62, 64).unwrap();
    let left = normalize(&[0.1, 0.0, 1.0]).unwrap();
    let right = normalize(&[-0.1, 0.0, 1.0]).unwrap();
    assert!(boundary_residual_for(&left, &spec, Target::First).unwrap() > 0.0);
    assert!(boundary_residual_for(&right, &spec, Target::First).unwrap() < 0.0);
}
