//! Reference implementations the library is checked against. They share
//! no code with the crate beyond reading the model description.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod strategies;

use cobot_intent::kinematics::{ArmModel, JointConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform configuration strictly inside the model's limits.
pub fn random_config(model: &ArmModel, rng: &mut ChaCha8Rng) -> JointConfig {
    let mut q = [0.0; 7];
    for (v, j) in q.iter_mut().zip(model.joints()) {
        *v = rng.random_range(j.limits.lo..j.limits.hi);
    }
    JointConfig(q)
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn identity4() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// R = I + sin θ K + (1 − cos θ) K² for unit axis k.
pub fn rodrigues(k: [f64; 3], theta: f64) -> Mat3 {
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let mut r = [[0.0; 3]; 3];
    let (s, c) = theta.sin_cos();
    for i in 0..3 {
        for j in 0..3 {
            let mut kk = 0.0;
            for m in 0..3 {
                kk += kx[i][m] * kx[m][j];
            }
            r[i][j] = if i == j { 1.0 } else { 0.0 } + s * kx[i][j] + (1.0 - c) * kk;
        }
    }
    r
}

fn rotation4(r: &Mat3) -> Mat4 {
    let mut m = identity4();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j];
        }
    }
    m
}

fn translation4(t: [f64; 3]) -> Mat4 {
    let mut m = identity4();
    for i in 0..3 {
        m[i][3] = t[i];
    }
    m
}

/// Tool transform from multiplying per-joint homogeneous matrices.
pub fn oracle_fk(model: &ArmModel, q: &JointConfig) -> Mat4 {
    let t = model.base().to_homogeneous();
    let mut m = identity4();
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = t[(i, j)];
        }
    }
    for (spec, &angle) in model.joints().iter().zip(q.0.iter()) {
        let a = spec.axis.into_inner();
        m = mul4(&m, &rotation4(&rodrigues([a.x, a.y, a.z], angle)));
        m = mul4(&m, &translation4([spec.offset.x, spec.offset.y, spec.offset.z]));
    }
    m
}

pub fn position(m: &Mat4) -> [f64; 3] {
    [m[0][3], m[1][3], m[2][3]]
}

pub fn rotation(m: &Mat4) -> Mat3 {
    [
        [m[0][0], m[0][1], m[0][2]],
        [m[1][0], m[1][1], m[1][2]],
        [m[2][0], m[2][1], m[2][2]],
    ]
}

/// Shepperd's method: [w, x, y, z] with w ≥ 0.
pub fn quaternion(r: &Mat3) -> [f64; 4] {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let q = if tr > r[0][0].max(r[1][1]).max(r[2][2]) {
        let s = 2.0 * (1.0 + tr).sqrt();
        [0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s]
    } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
        let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
        [(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s]
    } else if r[1][1] >= r[2][2] {
        let s = 2.0 * (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt();
        [(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s]
    } else {
        let s = 2.0 * (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt();
        [(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s]
    };
    if q[0] < 0.0 {
        q.map(|v| -v)
    } else {
        q
    }
}

fn mat3_mul_transpose(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i][j] += a[i][k] * b[j][k];
            }
        }
    }
    c
}

/// Rotation vector of R (inverse of Rodrigues), for rotations below π.
pub fn log_so3(r: &Mat3) -> [f64; 3] {
    let cos = ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let k = if theta < 1e-8 {
        0.5
    } else {
        theta / (2.0 * theta.sin())
    };
    v.map(|x| x * k)
}

/// Central differences of the oracle FK: rows 0-2 linear, 3-5 angular
/// (world frame, from log(R₊ R₋ᵀ) / 2h).
pub fn fd_jacobian(model: &ArmModel, q: &JointConfig, h: f64) -> [[f64; 7]; 6] {
    let mut jac = [[0.0; 7]; 6];
    for j in 0..7 {
        let mut plus = *q;
        let mut minus = *q;
        plus.0[j] += h;
        minus.0[j] -= h;
        let tp = oracle_fk(model, &plus);
        let tm = oracle_fk(model, &minus);
        let (pp, pm) = (position(&tp), position(&tm));
        let w = log_so3(&mat3_mul_transpose(&rotation(&tp), &rotation(&tm)));
        for i in 0..3 {
            jac[i][j] = (pp[i] - pm[i]) / (2.0 * h);
            jac[i + 3][j] = w[i] / (2.0 * h);
        }
    }
    jac
}

/// Damped least squares through the SVD: q̇ = Σ σᵢ/(σᵢ² + λ²) vᵢ uᵢᵀ v.
/// Also returns the smallest singular value.
pub fn dls_svd(jac: &[[f64; 7]; 6], twist: &[f64; 6], lambda: f64) -> ([f64; 7], f64) {
    let j = DMatrix::from_fn(6, 7, |r, c| jac[r][c]);
    let v = DVector::from_column_slice(twist);
    let svd = j.svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut qdot = DVector::zeros(7);
    let mut sigma_min = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        sigma_min = sigma_min.min(s);
        let coeff = s / (s * s + lambda * lambda) * u.column(i).dot(&v);
        qdot += vt.row(i).transpose() * coeff;
    }
    (std::array::from_fn(|i| qdot[i]), sigma_min)
}

pub fn mat_vec(jac: &[[f64; 7]; 6], x: &[f64; 7]) -> [f64; 6] {
    std::array::from_fn(|i| (0..7).map(|j| jac[i][j] * x[j]).sum())
}

/// Rest-to-rest move simulated with a small Euler step: accelerate at `a`
/// until the speed cap, brake as soon as the remaining distance requires it.
/// Returns (duration, distance covered by `t_probe`).
pub fn simulate_move(l: f64, v: f64, a: f64, t_probe: f64) -> (f64, f64) {
    let h = 1e-6;
    let (mut t, mut s, mut speed) = (0.0, 0.0, 0.0);
    let mut at_probe = None;
    while s < l {
        if at_probe.is_none() && t >= t_probe {
            at_probe = Some(s);
        }
        let braking = (l - s) <= speed * speed / (2.0 * a);
        let accel = if braking {
            -a
        } else if speed < v {
            a
        } else {
            0.0
        };
        let next = (speed + accel * h).clamp(0.0, v);
        s += 0.5 * (speed + next) * h;
        speed = next;
        t += h;
        if speed == 0.0 && braking {
            break;
        }
    }
    (t, at_probe.unwrap_or(l.min(s)))
}
