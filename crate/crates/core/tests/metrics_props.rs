mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tactile_diffusion::image::Image;
use tactile_diffusion::metrics::*;
use tactile_diffusion::rigsim::dot_grid_image;
use tactile_diffusion::Error;

fn pair() -> impl Strategy<Value = (Image, Image)> {
    (1usize..12, 1usize..12, prop_oneof![Just(1usize), Just(3usize)], any::<u64>()).prop_map(|(h, w, c, seed)| {
        (random_image(h, w, c, seed), random_image(h, w, c, seed.wrapping_add(1)))
    })
}

proptest! {
    #[test]
    fn metrics_are_symmetric((a, b) in pair()) {
        let ab = image_similarity(&a, &b).unwrap();
        let ba = image_similarity(&b, &a).unwrap();
        prop_assert_eq!(ab.mse, ba.mse);
        prop_assert_eq!(ab.mae, ba.mae);
        prop_assert!((ab.ssim - ba.ssim).abs() < 1e-12);
    }

    #[test]
    fn metrics_match_brute_force((a, b) in pair()) {
        let r = image_similarity(&a, &b).unwrap();
        prop_assert!(rel_err(r.mse, naive_mse(&a, &b)) < 1e-6);
        prop_assert!(rel_err(r.mae, naive_mae(&a, &b)) < 1e-6);
        prop_assert!(rel_err(r.psnr, naive_psnr(&a, &b)) < 1e-6);
        prop_assert!(rel_err(r.ssim, naive_ssim(&a, &b)) < 1e-6, "{} vs {}", r.ssim, naive_ssim(&a, &b));
        prop_assert!(r.ssim <= 1.0 && r.ssim >= -1.0);
    }

    #[test]
    fn self_similarity_is_perfect(seed in any::<u64>(), h in 1usize..10, w in 1usize..10) {
        let a = random_image(h, w, 3, seed);
        let r = image_similarity(&a, &a).unwrap();
        prop_assert_eq!((r.mse, r.mae, r.ssim), (0.0, 0.0, 1.0));
        prop_assert!(r.psnr == f64::INFINITY);
    }

    #[test]
    fn displacement_is_order_invariant_and_obeys_triangle(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        use rand::Rng;
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = MarkerSet::regular(rows, cols, (5.0, 5.0), 10.0);
        let jitter = |rng: &mut ChaCha8Rng| {
            let mut s = base.clone();
            for m in &mut s.markers {
                m.x += rng.random_range(-3.0..3.0);
                m.y += rng.random_range(-3.0..3.0);
            }
            s
        };
        let (a, b, c) = (jitter(&mut rng), jitter(&mut rng), jitter(&mut rng));
        let ab = marker_displacement_error(&a, &b).unwrap();
        let mut shuffled = b.clone();
        shuffled.markers.shuffle(&mut rng);
        let abs = marker_displacement_error(&a, &shuffled).unwrap();
        prop_assert!((ab.d_sum - abs.d_sum).abs() < 1e-9);
        prop_assert_eq!(marker_displacement_error(&a, &a).unwrap().d_sum, 0.0);
        prop_assert!((ab.d_mean * ab.count as f64 - ab.d_sum).abs() < 1e-9);
        // per marker: |a - c| <= |a - b| + |b - c|
        let (ia, ib, ic) = (a.by_index(), b.by_index(), c.by_index());
        for (k, pa) in &ia {
            let (pb, pc) = (ib[k], ic[k]);
            let d = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
            prop_assert!(d(*pa, pc) <= d(*pa, pb) + d(pb, pc) + 1e-12);
        }
    }
}

#[test]
fn ssim_falls_as_noise_grows() {
    let clean = Image::from_fn(48, 48, 3, |y, x, c| (((x / 6 + y / 6) % 2) as u8) * 120 + 60 + c as u8 * 10);
    let mut prev = 1.0;
    for (i, sigma) in [2.0, 5.0, 10.0, 20.0, 40.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let n = Normal::new(0.0, sigma).unwrap();
        let noisy = Image::from_fn(48, 48, 3, |y, x, c| (clean.get(y, x, c) as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
        let s = ssim(&clean, &noisy).unwrap();
        assert!(s < prev, "sigma {sigma}: {s} !< {prev}");
        prev = s;
    }
}

fn dot_grid(offset: (f64, f64)) -> (Image, MarkerSet) {
    let truth = MarkerSet::regular(18, 18, (14.0 + offset.0, 14.0 + offset.1), 10.0);
    (dot_grid_image((200, 200), &truth, 2.5, 200, 30), truth)
}

#[test]
fn clean_grid_is_found_exactly() {
    let (img, truth) = dot_grid((0.0, 0.0));
    let found = detect_markers(&img, (18, 18), &Roi::full(&img), &DetectParams::default()).unwrap();
    assert_eq!(found.len(), 324);
    let t = truth.by_index();
    for m in &found.markers {
        let (x, y) = t[&(m.row, m.col)];
        assert!((m.x - x).hypot(m.y - y) < 0.5, "({}, {}) at {},{} vs {x},{y}", m.row, m.col, m.x, m.y);
    }
}

#[test]
fn detection_commutes_with_translation() {
    let params = DetectParams::default();
    let (a, _) = dot_grid((0.0, 0.0));
    let (b, _) = dot_grid((3.0, 4.0));
    let fa = detect_markers(&a, (18, 18), &Roi::full(&a), &params).unwrap();
    let fb = detect_markers(&b, (18, 18), &Roi::full(&b), &params).unwrap();
    let ib = fb.by_index();
    for m in &fa.markers {
        let (x, y) = ib[&(m.row, m.col)];
        assert!((x - m.x - 3.0).abs() < 0.5 && (y - m.y - 4.0).abs() < 0.5);
    }
    let flow = compute_flow(&fa, &fb).unwrap();
    assert_eq!(flow.len(), 324);
    let (mx, my) = flow.mean();
    assert!((mx - 3.0).abs() < 0.1 && (my - 4.0).abs() < 0.1);
}

#[test]
fn subpixel_shift_is_tracked() {
    let (a, _) = dot_grid((0.0, 0.0));
    let (b, _) = dot_grid((0.3, -0.4));
    let p = DetectParams::default();
    let fa = detect_markers(&a, (18, 18), &Roi::full(&a), &p).unwrap();
    let fb = detect_markers(&b, (18, 18), &Roi::full(&b), &p).unwrap();
    let d = marker_displacement_error(&fa, &fb).unwrap();
    assert!((d.d_mean - 0.5).abs() < 0.1, "{}", d.d_mean);
}

#[test]
fn too_large_grid_reports_the_count() {
    let (img, _) = dot_grid((0.0, 0.0));
    match detect_markers(&img, (19, 18), &Roi::full(&img), &DetectParams::default()) {
        Err(Error::Detection { expected, found }) => assert_eq!((expected, found), (342, 324)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn central_roi_keeps_the_middle_block() {
    let (img, truth) = dot_grid((0.0, 0.0));
    let roi = Roi::central(&img, 0.5);
    let found = detect_markers(&img, (10, 10), &roi, &DetectParams::default()).unwrap();
    assert_eq!(found.len(), 100);
    for m in &found.markers {
        assert!(roi.contains(m.x, m.y));
        assert!(truth.markers.iter().any(|t| (t.x - m.x).hypot(t.y - m.y) < 0.5));
    }
}

#[test]
fn flow_overlay_is_written_as_png() {
    let dir = tempfile::tempdir().unwrap();
    let (a, truth) = dot_grid((0.0, 0.0));
    let field = compute_flow(&truth, &truth.translated(2.0, 0.0)).unwrap();
    let path = dir.path().join("flow.png");
    export_flow(&field, &a, &FlowStyle::default(), &path).unwrap();
    let img = Image::load_png(&path).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (200, 200, 3));
    assert_ne!(img, a);
}
