//! Small dense 4-index helpers on plain arrays.

use nalgebra::Matrix4;

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];
/// `Γ[γ][α][β]` = Γ^γ_{αβ}.
pub type Christoffel = [[[f64; 4]; 4]; 4];
pub type Rank4 = [[[[f64; 4]; 4]; 4]; 4];

pub const ZERO4: Vec4 = [0.0; 4];
pub const ZERO44: Mat4 = [[0.0; 4]; 4];

#[inline]
pub fn dot(g: &Mat4, u: &Vec4, v: &Vec4) -> f64 {
    let mut s = 0.0;
    for a in 0..4 {
        let mut r = 0.0;
        for b in 0..4 {
            r += g[a][b] * v[b];
        }
        s += u[a] * r;
    }
    s
}

#[inline]
pub fn lower(g: &Mat4, v: &Vec4) -> Vec4 {
    let mut out = ZERO4;
    for a in 0..4 {
        for b in 0..4 {
            out[a] += g[a][b] * v[b];
        }
    }
    out
}

#[inline]
pub fn axpy(a: f64, x: &Vec4, y: &Vec4) -> Vec4 {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2], a * x[3] + y[3]]
}

#[inline]
pub fn scale(a: f64, x: &Vec4) -> Vec4 {
    [a * x[0], a * x[1], a * x[2], a * x[3]]
}

#[inline]
pub fn add(x: &Vec4, y: &Vec4) -> Vec4 {
    [x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3]]
}

#[inline]
pub fn sub(x: &Vec4, y: &Vec4) -> Vec4 {
    [x[0] - y[0], x[1] - y[1], x[2] - y[2], x[3] - y[3]]
}

pub fn max_abs(x: &Vec4) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Γ^γ_{αβ} u^α v^β.
#[inline]
pub fn contract_gamma(gam: &Christoffel, u: &Vec4, v: &Vec4) -> Vec4 {
    let mut out = ZERO4;
    for (c, gc) in gam.iter().enumerate() {
        let mut s = 0.0;
        for a in 0..4 {
            if u[a] == 0.0 {
                continue;
            }
            let mut r = 0.0;
            for b in 0..4 {
                r += gc[a][b] * v[b];
            }
            s += u[a] * r;
        }
        out[c] = s;
    }
    out
}

pub fn to_na(m: &Mat4) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

pub fn from_na(m: &Matrix4<f64>) -> Mat4 {
    let mut out = ZERO44;
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

pub fn det(m: &Mat4) -> f64 {
    to_na(m).determinant()
}

/// Solve `m x = b` for a general 4×4 system.
pub fn solve4(m: &Mat4, b: &Vec4) -> Option<Vec4> {
    let lu = to_na(m).lu();
    let x = lu.solve(&nalgebra::Vector4::new(b[0], b[1], b[2], b[3]))?;
    Some([x[0], x[1], x[2], x[3]])
}
