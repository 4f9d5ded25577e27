//! Small fixed-size helpers for 3-vectors and 3×3 tensors.

pub type Vec3 = [f64; 3];
pub type Tensor3 = [[f64; 3]; 3];

pub const ZERO3: Tensor3 = [[0.0; 3]; 3];

pub fn identity3() -> Tensor3 {
    diag3(1.0, 1.0, 1.0)
}

pub fn diag3(a: f64, b: f64, c: f64) -> Tensor3 {
    [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
}

pub fn scale3(t: &Tensor3, s: f64) -> Tensor3 {
    let mut out = *t;
    out.iter_mut().flatten().for_each(|x| *x *= s);
    out
}

pub fn add3(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn transpose3(t: &Tensor3) -> Tensor3 {
    let mut out = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            out[j][i] = t[i][j];
        }
    }
    out
}

pub fn matmul3(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let mut out = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn trace3(t: &Tensor3) -> f64 {
    t[0][0] + t[1][1] + t[2][2]
}

/// `t · v` (column vector on the right).
pub fn mat_vec(t: &Tensor3, v: &Vec3) -> Vec3 {
    [0, 1, 2].map(|i| (0..3).map(|k| t[i][k] * v[k]).sum())
}

/// `v · t` (row vector on the left).
pub fn vec_mat(v: &Vec3, t: &Tensor3) -> Vec3 {
    [0, 1, 2].map(|j| (0..3).map(|k| v[k] * t[k][j]).sum())
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

pub fn frobenius3(t: &Tensor3) -> f64 {
    t.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn is_symmetric3(t: &Tensor3, tol: f64) -> bool {
    (0..3).all(|i| (0..3).all(|j| (t[i][j] - t[j][i]).abs() <= tol))
}
