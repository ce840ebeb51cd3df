//! Brute-force reference implementations shared by the integration tests.
//! Each one is written from the definitions, without calling the code under
//! test beyond plain accessors.
#![allow(dead_code)]

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trifuse::camera::Camera;
use trifuse::field::Field;
use trifuse::fusion::FlowField;
use trifuse::triplane::{Plane, Triplane};
use trifuse::visibility::MaskTriplane;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_triplane(rng: &mut ChaCha8Rng, channels: usize, resolution: usize) -> Triplane {
    Triplane::from_fn(channels, resolution, |_, _, _, _| {
        rng.gen_range(-1.0f32..1.0)
    })
    .unwrap()
}

pub fn random_masks(rng: &mut ChaCha8Rng, resolution: usize, binary: bool) -> MaskTriplane {
    MaskTriplane::from_fn(resolution, |_, _, _| {
        if binary {
            if rng.gen_bool(0.5) {
                1.0
            } else {
                0.0
            }
        } else {
            rng.gen_range(0.0f32..=1.0)
        }
    })
}

/// Plane coordinates of a world point: xy -> (x, y), xz -> (x, z), yz -> (y, z).
pub fn plane_coords(plane: Plane, p: &Point3<f64>) -> (f64, f64) {
    match plane {
        Plane::Xy => (p.x, p.y),
        Plane::Xz => (p.x, p.z),
        Plane::Yz => (p.y, p.z),
    }
}

/// Bilinear read of `value(v, u)` on an `r x r` grid at continuous column `u`
/// and row `v`, clamped to the border.
pub fn bilinear(r: usize, u: f64, v: f64, value: impl Fn(usize, usize) -> f64) -> f64 {
    let last = (r - 1) as f64;
    let u = u.clamp(0.0, last);
    let v = v.clamp(0.0, last);
    let u0 = (u.floor() as usize).min(r - 2);
    let v0 = (v.floor() as usize).min(r - 2);
    let a = u - u0 as f64;
    let b = v - v0 as f64;
    (1.0 - a) * (1.0 - b) * value(v0, u0)
        + a * (1.0 - b) * value(v0, u0 + 1)
        + (1.0 - a) * b * value(v0 + 1, u0)
        + a * b * value(v0 + 1, u0 + 1)
}

/// Mean of the three plane lookups with the align-corners mapping.
pub fn sample_oracle(tp: &Triplane, p: &Point3<f64>) -> Vec<f64> {
    let r = tp.resolution();
    let scale = (r - 1) as f64;
    (0..tp.channels())
        .map(|c| {
            let mut sum = 0.0;
            for plane in Plane::ALL {
                let (a, b) = plane_coords(plane, p);
                sum += bilinear(r, (a + 0.5) * scale, (b + 0.5) * scale, |v, u| {
                    tp.get(plane, c, v, u) as f64
                });
            }
            sum / 3.0
        })
        .collect()
}

/// `out[plane, c, v, u] = bilinear(in, (u + du, v + dv))` per texel.
pub fn warp_oracle(tp: &Triplane, flow: &FlowField) -> Vec<f64> {
    let r = tp.resolution();
    let mut out = Vec::new();
    for plane in Plane::ALL {
        for c in 0..tp.channels() {
            for v in 0..r {
                for u in 0..r {
                    let (du, dv) = flow.get(plane, v, u);
                    out.push(bilinear(
                        r,
                        u as f64 + du as f64,
                        v as f64 + dv as f64,
                        |vv, uu| tp.get(plane, c, vv, uu) as f64,
                    ));
                }
            }
        }
    }
    out
}

pub fn triplane_values(tp: &Triplane) -> Vec<f64> {
    let r = tp.resolution();
    let mut out = Vec::new();
    for plane in Plane::ALL {
        for c in 0..tp.channels() {
            for v in 0..r {
                for u in 0..r {
                    out.push(tp.get(plane, c, v, u) as f64);
                }
            }
        }
    }
    out
}

pub fn mean_abs_oracle(a: &Triplane, b: &Triplane) -> f64 {
    let x = triplane_values(a);
    let y = triplane_values(b);
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - y[i]).abs();
    }
    s / x.len() as f64
}

pub fn mask_mean_abs_oracle(a: &MaskTriplane, b: &MaskTriplane) -> f64 {
    let r = a.resolution();
    let mut s = 0.0;
    for plane in Plane::ALL {
        for v in 0..r {
            for u in 0..r {
                s += (a.get(plane, v, u) as f64 - b.get(plane, v, u) as f64).abs();
            }
        }
    }
    s / (3 * r * r) as f64
}

pub fn fusion_loss_oracle(
    fused: &Triplane,
    gt: &Triplane,
    vis: &MaskTriplane,
    occ: &MaskTriplane,
) -> f64 {
    let r = fused.resolution();
    let mut s = 0.0;
    let mut n = 0usize;
    for plane in Plane::ALL {
        for c in 0..fused.channels() {
            for v in 0..r {
                for u in 0..r {
                    let d =
                        (fused.get(plane, c, v, u) as f64 - gt.get(plane, c, v, u) as f64).abs();
                    let w = 1.0 + vis.get(plane, v, u) as f64 + occ.get(plane, v, u) as f64;
                    s += d * w;
                    n += 1;
                }
            }
        }
    }
    s / n as f64
}

/// Population of `values` minus its mean, squared, over `n - 1`.
pub fn sample_stddev_oracle(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Pinhole ray through pixel centre `(u, v)`: `K^-1 [(u+.5)/w, (v+.5)/w, 1]`
/// rotated to world space, built from the raw 25 parameters.
pub fn ray_oracle(
    params: &[f64; 25],
    u: usize,
    v: usize,
    width: usize,
) -> (Point3<f64>, Vector3<f64>) {
    let fx = params[16];
    let cx = params[18];
    let fy = params[20];
    let cy = params[21];
    let x = ((u as f64 + 0.5) / width as f64 - cx) / fx;
    let y = ((v as f64 + 0.5) / width as f64 - cy) / fy;
    let d = [x, y, 1.0];
    let mut w = [0.0; 3];
    for (r, wr) in w.iter_mut().enumerate() {
        for (k, dk) in d.iter().enumerate() {
            *wr += params[r * 4 + k] * dk;
        }
    }
    let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    (
        Point3::new(params[3], params[7], params[11]),
        Vector3::new(w[0] / n, w[1] / n, w[2] / n),
    )
}

/// Dense left-Riemann volume integral of colour along a ray, with the
/// residual transmittance going to `background`.
pub fn quadrature_rgb(
    field: &dyn Field,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    t_near: f64,
    t_far: f64,
    n: usize,
    background: [f64; 3],
) -> [f64; 3] {
    let dt = (t_far - t_near) / n as f64;
    let mut optical = 0.0f64;
    let mut rgb = [0.0; 3];
    for i in 0..n {
        let t = t_near + (i as f64 + 0.5) * dt;
        let s = field.evaluate(&(origin + dir * t));
        let trans = (-optical).exp();
        let w = trans * (1.0 - (-s.sigma * dt).exp());
        for k in 0..3 {
            rgb[k] += w * s.color[k];
        }
        optical += s.sigma * dt;
    }
    let trans = (-optical).exp();
    for k in 0..3 {
        rgb[k] += trans * background[k];
    }
    rgb
}

/// Random rigid camera looking roughly at the origin from distance 1.5 to 3.
pub fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
    let dir = loop {
        let v: Vector3<f64> = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 0.2 && v.norm() < 1.0 && v.y.abs() < 0.8 * v.norm() {
            break v.normalize();
        }
    };
    let eye = Point3::from(dir * rng.gen_range(1.5..3.0));
    let f = rng.gen_range(1.5..4.0);
    let k = Matrix3::new(
        f,
        0.0,
        rng.gen_range(0.4..0.6),
        0.0,
        f * rng.gen_range(0.9..1.1),
        rng.gen_range(0.4..0.6),
        0.0,
        0.0,
        1.0,
    );
    Camera::look_at(eye, Point3::origin(), Vector3::y(), k).unwrap()
}

/// Rotation about `z` by `theta` written out by hand.
pub fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
