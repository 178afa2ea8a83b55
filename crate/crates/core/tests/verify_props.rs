use dvsfuse::geometry::{warp_image, Homography};
use dvsfuse::image_io::{FloatImage, GrayImage};
use dvsfuse::verify::{match_float, verify_alignment, zncc_score, MatchSource, VerifyParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZE: u32 = 128;
const PAD: i64 = 40;

/// Sum of random Gaussian blobs and bars; smooth and strongly textured.
fn texture(seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SIZE as i64 + 2 * PAD;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..60)
        .map(|_| (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64), rng.gen_range(6.0..16.0), rng.gen_range(-1.0..1.0)))
        .collect();
    GrayImage::from_fn(n as u32, n as u32, |x, y| {
        let v: f64 = blobs
            .iter()
            .map(|&(cx, cy, s, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        image::Luma([(128.0 + 90.0 * v.tanh()).round() as u8])
    })
}

/// `SIZE²` crop whose content is displaced by `(dx, dy)` relative to the
/// zero-shift crop.
fn crop(base: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    GrayImage::from_fn(SIZE, SIZE, |x, y| *base.get_pixel((x as i64 + PAD - dx) as u32, (y as i64 + PAD - dy) as u32))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn integer_shift_is_the_peak(seed in any::<u64>(), dx in -16i64..=16, dy in -16i64..=16) {
        let base = texture(seed);
        let (a, b) = (crop(&base, 0, 0), crop(&base, dx, dy));
        for source in [MatchSource::SmoothedEdges, MatchSource::Intensity] {
            let r = verify_alignment(&a, &b, &VerifyParams { source, ..Default::default() }).unwrap();
            prop_assert_eq!((r.peak_dx as i64, r.peak_dy as i64), (dx, dy), "{:?}", source);
            prop_assert!((r.dx - dx as f64).abs() <= 0.25 && (r.dy - dy as f64).abs() <= 0.25, "{r:?}");
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r.score));
        }
    }

    #[test]
    fn zncc_ignores_affine_intensity(seed in any::<u64>(), gain in 0.1f64..10.0, bias in -100.0f64..100.0, dx in -8isize..8, dy in -8isize..8) {
        let img = FloatImage::from_gray(&texture(seed));
        let tpl = FloatImage::from_fn(40, 30, |x, y| img.get(x + 60, y + 70));
        let tpl2 = FloatImage { data: tpl.data.iter().map(|v| gain * v + bias).collect(), ..tpl.clone() };
        let img2 = FloatImage { data: img.data.iter().map(|v| gain * v + bias).collect(), ..img.clone() };
        let s = zncc_score(&tpl, &img, 60 + dx, 70 + dy).unwrap();
        prop_assert!((s - zncc_score(&tpl2, &img, 60 + dx, 70 + dy).unwrap()).abs() < 1e-9);
        prop_assert!((s - zncc_score(&tpl, &img2, 60 + dx, 70 + dy).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&s));
    }

    #[test]
    fn opposite_shifts_agree(seed in any::<u64>(), vx in -6.0f64..6.0, vy in -6.0f64..6.0) {
        let a = crop(&texture(seed), 0, 0);
        let shift = |x: f64, y: f64| warp_image(&a, &Homography::translation(x, y), SIZE, SIZE).unwrap();
        let p = VerifyParams { source: MatchSource::Intensity, ..Default::default() };
        let fwd = verify_alignment(&a, &shift(vx, vy), &p).unwrap();
        let back = verify_alignment(&shift(-vx, -vy), &a, &p).unwrap();
        prop_assert!((fwd.deviation - back.deviation).abs() <= 0.25, "{fwd:?} vs {back:?}");
    }
}

#[test]
fn flat_images_have_no_match() {
    let flat = FloatImage::new(96, 96);
    assert!(match_float(&flat, &flat, 4, 16).is_err());
}
