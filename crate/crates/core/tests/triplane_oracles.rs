mod common;

use nalgebra::Point3;
use proptest::prelude::*;
use rand::Rng;
use trifuse::mlp::{self, Layer, MlpWeights, FEATURE_DIM, OUTPUT_DIM};
use trifuse::triplane::{self, Plane, Triplane};

#[test]
fn sample_matches_bilinear_oracle_at_fixed_point() {
    let mut rng = common::rng(0);
    let tp = common::random_triplane(&mut rng, 32, 8);
    let p = Point3::new(0.13, -0.27, 0.41);
    let got = triplane::sample_triplane(&tp, &p);
    let want = common::sample_oracle(&tp, &p);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-6, "{g} vs {w}");
    }
}

#[test]
fn sample_matches_oracle_on_random_points_including_outside() {
    let mut rng = common::rng(1);
    for _ in 0..100 {
        let r = rng.gen_range(2..20);
        let tp = common::random_triplane(&mut rng, 5, r);
        let p = Point3::new(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        let got = tp.sample(&p);
        let want = common::sample_oracle(&tp, &p);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-6);
        }
    }
}

#[test]
fn texel_centre_reads_exact_values() {
    let mut rng = common::rng(2);
    let r = 9;
    let tp = common::random_triplane(&mut rng, 3, r);
    // texel (i, j, k) centre in world coordinates
    let (i, j, k) = (2usize, 7usize, 4usize);
    let w = |n: usize| n as f64 / (r - 1) as f64 - 0.5;
    let p = Point3::new(w(i), w(j), w(k));
    let got = tp.sample(&p);
    for c in 0..3 {
        let want = (tp.get(Plane::Xy, c, j, i) as f64
            + tp.get(Plane::Xz, c, k, i) as f64
            + tp.get(Plane::Yz, c, k, j) as f64)
            / 3.0;
        assert!((got[c] - want).abs() < 1e-12);
    }
}

#[test]
fn default_shape_and_payload_size() {
    let tp = Triplane::procedural(0, 32, 256).unwrap();
    assert_eq!((tp.channels(), tp.resolution()), (32, 256));
    let bytes = tp.to_bytes();
    assert_eq!(
        bytes.len() - triplane::TRIPLANE_HEADER_LEN,
        3 * 32 * 256 * 256 * 4
    );
    assert_eq!(&bytes[..4], b"TRPL");
}

#[test]
fn mlp_matches_dense_algebra_oracle() {
    let mut rng = common::rng(3);
    for seed in 0..20 {
        let w = MlpWeights::seeded(seed, 32).unwrap();
        let x: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = w.decode(&x).unwrap();
        let mut a = x.clone();
        let n = w.layers().len();
        for (li, layer) in w.layers().iter().enumerate() {
            let mut b = vec![0.0; layer.outputs()];
            for o in 0..layer.outputs() {
                let mut s = layer.bias()[o] as f64;
                for i in 0..layer.inputs() {
                    s += layer.weight()[o * layer.inputs() + i] as f64 * a[i];
                }
                b[o] = if li + 1 < n && s < 0.0 { 0.01 * s } else { s };
            }
            a = b;
        }
        let sigma = (1.0 + a[0].exp()).ln();
        assert!((got.sigma - sigma).abs() <= 1e-6);
        for k in 0..3 {
            assert!((got.color[k] - 1.0 / (1.0 + (-a[1 + k]).exp())).abs() <= 1e-6);
        }
        for k in 0..FEATURE_DIM {
            assert!((got.feature[k] - a[4 + k]).abs() <= 1e-6);
        }
    }
}

#[test]
fn single_layer_by_hand() {
    let mut bias = vec![0.0f32; OUTPUT_DIM];
    bias[0] = 1.5;
    bias[1] = -2.0;
    bias[4] = 0.25;
    let layer = Layer::new(2, OUTPUT_DIM, vec![0.0; 2 * OUTPUT_DIM], bias).unwrap();
    let w = MlpWeights::new(vec![layer]).unwrap();
    let d = mlp::decode_mlp(&w, &[3.0, -4.0]).unwrap();
    assert!((d.sigma - (1.0 + 1.5f64.exp()).ln()).abs() < 1e-12);
    assert!((d.color[0] - 1.0 / (1.0 + 2.0f64.exp())).abs() < 1e-12);
    assert_eq!(d.color[1], 0.5);
    assert_eq!(d.feature[0], 0.25);
    assert!(matches!(
        w.decode(&[1.0]),
        Err(trifuse::Error::Structural(_))
    ));
}

#[test]
fn zero_network() {
    let d = MlpWeights::zeros(32).unwrap().decode(&[0.3; 32]).unwrap();
    assert!((d.sigma - 0.693147).abs() < 1e-6);
    assert_eq!(d.color, [0.5; 3]);
}

#[test]
fn procedural_seeds_differ() {
    let a = Triplane::procedural(0, 8, 32).unwrap();
    let b = Triplane::procedural(1, 8, 32).unwrap();
    assert_eq!(a, Triplane::procedural(0, 8, 32).unwrap());
    let va = common::triplane_values(&a);
    let vb = common::triplane_values(&b);
    let diff = va.iter().zip(&vb).filter(|(x, y)| x != y).count();
    assert!(diff as f64 >= 0.99 * va.len() as f64);
    assert!(va.iter().all(|v| (-1.0..=1.0).contains(v)));
}

fn point() -> impl Strategy<Value = Point3<f64>> {
    (-0.7f64..0.7, -0.7f64..0.7, -0.7f64..0.7).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_lipschitz(seed in 0u64..1000, p in point(), dir in point()) {
        let r = 16;
        let tp = Triplane::procedural(seed, 4, r).unwrap();
        let eps = 1e-5;
        let d = if dir.coords.norm() > 1e-6 { dir.coords.normalize() * eps } else { nalgebra::Vector3::x() * eps };
        let a = tp.sample(&p);
        let b = tp.sample(&(p + d));
        // plane values lie in [-1, 1]: a bilinear patch changes by at most
        // 2 * (R - 1) per unit length along each axis, and each plane sees
        // two axes.
        let bound = 2.0 * (r - 1) as f64 * 2.0 * eps;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= bound);
        }
    }

    #[test]
    fn bilinear_is_bracketed_by_corner_texels(seed in 0u64..1000, a in 0.0f64..7.0, b in 0.0f64..7.0) {
        // a point on the plane z = const that sits on a texel centre of the
        // xz and yz planes leaves only the xy plane interpolating
        let r = 8;
        let mut rng = common::rng(seed);
        let tp = common::random_triplane(&mut rng, 2, r);
        let x = a / (r - 1) as f64 - 0.5;
        let y = b / (r - 1) as f64 - 0.5;
        let (u0, v0) = (a.floor() as usize, b.floor() as usize);
        let (u1, v1) = ((u0 + 1).min(r - 1), (v0 + 1).min(r - 1));
        for c in 0..2 {
            let corners = [tp.get(Plane::Xy, c, v0, u0), tp.get(Plane::Xy, c, v0, u1), tp.get(Plane::Xy, c, v1, u0), tp.get(Plane::Xy, c, v1, u1)];
            let lo = corners.iter().copied().fold(f32::INFINITY, f32::min) as f64;
            let hi = corners.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let r1 = (r - 1) as f64;
            let v = common::bilinear(r, a, b, |vv, uu| tp.get(Plane::Xy, c, vv, uu) as f64);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            // the library's xy contribution equals the oracle
            let full = tp.sample(&Point3::new(x, y, -0.5))[c] * 3.0;
            let xz = common::bilinear(r, (x + 0.5) * r1, 0.0, |vv, uu| tp.get(Plane::Xz, c, vv, uu) as f64);
            let yz = common::bilinear(r, (y + 0.5) * r1, 0.0, |vv, uu| tp.get(Plane::Yz, c, vv, uu) as f64);
            prop_assert!((full - xz - yz - v).abs() < 1e-6);
        }
    }

    #[test]
    fn decode_outputs_are_in_range(seed in 0u64..10_000, scale in 0.0f64..100.0) {
        let w = MlpWeights::seeded(seed, 8).unwrap();
        let mut rng = common::rng(seed);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-scale..=scale)).collect();
        let d = w.decode(&x).unwrap();
        prop_assert!(d.sigma >= 0.0);
        prop_assert!(d.color.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn triplane_bytes_round_trip(seed in 0u64..1000, c in 1usize..5, r in 2usize..9) {
        let mut rng = common::rng(seed);
        let tp = common::random_triplane(&mut rng, c, r);
        let bytes = tp.to_bytes();
        let back = Triplane::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn mlp_bytes_round_trip(seed in 0u64..1000, input in 1usize..40) {
        let w = MlpWeights::seeded(seed, input).unwrap();
        let bytes = w.to_bytes();
        prop_assert_eq!(MlpWeights::from_bytes(&bytes).unwrap(), w);
    }
}
