mod common;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use rand::Rng;
use trifuse::camera::{self, Camera};
use trifuse::field::{Blob, BlobField, ConstantSlab, TriplaneField, Vacuum};
use trifuse::mlp::MlpWeights;
use trifuse::render::{self, RenderConfig};
use trifuse::triplane::Triplane;

fn camera_on_z(z: f64, focal: f64) -> Camera {
    Camera::look_at(
        Point3::new(0.0, 0.0, z),
        Point3::origin(),
        Vector3::y(),
        camera::centered_intrinsic(focal),
    )
    .unwrap()
}

#[test]
fn rays_match_projective_oracle() {
    let mut rng = common::rng(10);
    for _ in 0..100 {
        let cam = common::random_camera(&mut rng);
        let params = cam.params();
        let w = rng.gen_range(1..64);
        let h = rng.gen_range(1..64);
        let rays = camera::generate_rays(&cam, w, h);
        assert_eq!(rays.len(), w * h);
        for _ in 0..8 {
            let (u, v) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let (o, d) = common::ray_oracle(&params, u, v, w);
            let ray = &rays[v * w + u];
            assert!((ray.origin - o).norm() < 1e-6);
            assert!((ray.direction - d).norm() < 1e-6);
            assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_extrinsic_centre_ray_is_optical_axis() {
    let cam = Camera::new(Matrix4::identity(), camera::centered_intrinsic(3.12)).unwrap();
    let ray = cam.ray(2, 2, 5);
    // OpenCV convention: the camera looks along +z
    assert!((ray.direction - Vector3::z()).norm() < 1e-12);
}

#[test]
fn translation_moves_every_origin_equally() {
    let mut rng = common::rng(11);
    let cam = common::random_camera(&mut rng);
    let shift = Vector3::new(0.3, -1.2, 0.7);
    let mut m = *cam.cam_to_world();
    for k in 0..3 {
        m[(k, 3)] += shift[k];
    }
    let moved = Camera::new(m, *cam.intrinsic()).unwrap();
    let a = camera::generate_rays(&cam, 7, 5);
    let b = camera::generate_rays(&moved, 7, 5);
    for (x, y) in a.iter().zip(&b) {
        assert!((y.origin - x.origin - shift).norm() < 1e-12);
        assert!((y.direction - x.direction).norm() < 1e-12);
    }
}

#[test]
fn singular_intrinsic_is_rejected() {
    let k = Matrix3::new(1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 1.0, 0.0, 0.5);
    assert!(matches!(
        Camera::new(Matrix4::identity(), k),
        Err(trifuse::Error::Parameter(_))
    ));
}

#[test]
fn vacuum_shows_background() {
    let cfg = RenderConfig::default()
        .with_size(9, 7)
        .with_background([0.2, 0.4, 0.6]);
    let img = render::render(&Vacuum, &camera_on_z(1.3, 3.12), &cfg).unwrap();
    for y in 0..7 {
        for x in 0..9 {
            let px = img.rgb.pixel(x, y);
            assert!(
                (px[0] - 0.2).abs() < 1e-7
                    && (px[1] - 0.4).abs() < 1e-7
                    && (px[2] - 0.6).abs() < 1e-7
            );
            assert_eq!(img.alpha.get(x, y, 0), 0.0);
            assert!(img.features.pixel(x, y)[3..].iter().all(|&f| f == 0.0));
        }
    }
    let depth = render::render_depth(&Vacuum, &camera_on_z(1.3, 3.12), &cfg).unwrap();
    assert!(depth.data().iter().all(|d| d.is_nan()));
}

#[test]
fn blob_matches_dense_quadrature() {
    let blob = BlobField::new(vec![Blob {
        center: [0.0; 3],
        scale: [0.15, 0.15, 0.15],
        peak: 20.0,
        color: [0.9, 0.3, 0.1],
    }])
    .unwrap();
    let cam = camera_on_z(2.7, 3.12);
    let cfg = RenderConfig::default()
        .with_size(24, 24)
        .with_range(1.9, 3.5)
        .with_samples(256)
        .with_background([1.0; 3]);
    let img = render::render(&blob, &cam, &cfg).unwrap();
    let mut worst = 0.0f64;
    for v in 0..24 {
        for u in 0..24 {
            let ray = cam.ray(u, v, 24);
            let want = common::quadrature_rgb(
                &blob,
                &ray.origin,
                &ray.direction,
                1.9,
                3.5,
                4096,
                [1.0; 3],
            );
            for k in 0..3 {
                worst = worst.max((img.rgb.get(u, v, k) as f64 - want[k]).abs());
            }
        }
    }
    assert!(worst <= 2e-3, "worst pixel error {worst}");
}

fn opaque_slab_depth_error(samples: usize) -> f64 {
    // front face at z = 0.25 is a whole number of bins from t_near for every
    // sample count used below
    let slab = ConstantSlab::new([-1.0, -1.0, -1.0], [1.0, 1.0, 0.25], 1e4, [0.5; 3]).unwrap();
    let cam = camera_on_z(1.25, 3.12);
    let cfg = RenderConfig::default()
        .with_size(1, 1)
        .with_range(0.5, 1.5)
        .with_samples(samples);
    let d = render::render_depth(&slab, &cam, &cfg)
        .unwrap()
        .get(0, 0, 0) as f64;
    (d - 1.0).abs()
}

#[test]
fn opaque_slab_depth_converges() {
    let mut prev = opaque_slab_depth_error(32);
    assert!(prev <= 1.0 / 32.0);
    for n in [64, 128, 256, 512] {
        let e = opaque_slab_depth_error(n);
        assert!(e <= 1.0 / n as f64, "depth error {e} at {n} samples");
        assert!(prev / e >= 1.8, "ratio {} at {n}", prev / e);
        prev = e;
    }
}

#[test]
fn features_start_with_rgb_and_render_is_thread_independent() {
    let tp = Triplane::procedural(4, 8, 32).unwrap();
    let field = TriplaneField::new(tp, MlpWeights::seeded(4, 8).unwrap()).unwrap();
    let cam = camera_on_z(1.3, 2.0);
    let cfg = RenderConfig::default().with_size(40, 33).with_samples(24);
    let one = trifuse::with_threads(1, || render::render(&field, &cam, &cfg))
        .unwrap()
        .unwrap();
    let four = trifuse::with_threads(4, || render::render(&field, &cam, &cfg))
        .unwrap()
        .unwrap();
    assert_eq!(one, four);
    for y in 0..33 {
        for x in 0..40 {
            assert_eq!(&one.features.pixel(x, y)[..3], one.rgb.pixel(x, y));
        }
    }
    assert!(one.alpha.data().iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn jittered_render_is_seed_deterministic() {
    let blob = BlobField::new(vec![Blob {
        center: [0.0; 3],
        scale: [0.2; 3],
        peak: 10.0,
        color: [0.5; 3],
    }])
    .unwrap();
    let cam = camera_on_z(1.3, 3.12);
    let mut cfg = RenderConfig::default().with_size(16, 16);
    cfg.jitter = Some(5);
    let a = render::render(&blob, &cam, &cfg).unwrap();
    let b = render::render(&blob, &cam, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.jitter = Some(6);
    assert_ne!(a, render::render(&blob, &cam, &cfg).unwrap());
}
