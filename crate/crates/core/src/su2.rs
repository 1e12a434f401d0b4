//! Rotation algebra: unit quaternions, Haar sampling, irreducible
//! representation matrices, and characters.
//!
//! Rotations are stored as unit quaternions, i.e. elements of the double
//! cover, because half-integer representations distinguish `q` from `-q`.
//! Representation matrices are indexed in the textbook order (row `a`
//! corresponds to the `J_z` eigenvalue `m = j - a`), so the spin-1/2 matrix
//! of a rotation about y by `beta` reads `[[cos b/2, -sin b/2], [sin b/2,
//! cos b/2]]`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, LazyLock, RwLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

/// Half-integer angular momentum label, stored doubled so that `j = 3/2`
/// is `HalfInt::from_twice(3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt {
    twice: u32,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };

    pub fn from_twice(twice: u32) -> Self {
        HalfInt { twice }
    }

    pub fn integer(j: u32) -> Self {
        HalfInt { twice: 2 * j }
    }

    /// `2j` as an integer.
    pub fn twice(self) -> u32 {
        self.twice
    }

    /// Dimension `2j + 1` of the spin-j space.
    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    pub fn value(self) -> f64 {
        f64::from(self.twice) / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.twice.is_multiple_of(2)
    }

    /// `J_z` eigenvalue of the basis vector stored at row `a` (textbook
    /// descending order, `m = j - a`).
    pub fn m_of_row(self, a: usize) -> f64 {
        self.value() - a as f64
    }

    /// Storage row of the ladder index `t = m + j` (so `t = 0` is `m = -j`).
    pub fn row_of_ladder(self, t: usize) -> usize {
        self.twice as usize - t
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice.is_multiple_of(2) {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// Unit quaternion representing an element of the rotation double cover.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Axis-angle parametrization with the double-cover class angle in
/// `[0, 2*pi)`.
#[derive(Debug, Clone, Copy)]
pub struct AxisAngle {
    pub axis: [f64; 3],
    pub omega: f64,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Builds and renormalizes a quaternion from raw components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Rotation { w, x, y, z }.renormalized()
    }

    /// Rotation by class angle `omega` in `[0, 2*pi)` about the given axis.
    pub fn from_axis_angle(axis: [f64; 3], omega: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        assert!(n > 0.0, "rotation axis must be nonzero");
        let (s, c) = (0.5 * omega).sin_cos();
        Rotation::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    pub fn rot_x(omega: f64) -> Self {
        Rotation::from_axis_angle([1.0, 0.0, 0.0], omega)
    }

    pub fn rot_y(omega: f64) -> Self {
        Rotation::from_axis_angle([0.0, 1.0, 0.0], omega)
    }

    pub fn rot_z(omega: f64) -> Self {
        Rotation::from_axis_angle([0.0, 0.0, 1.0], omega)
    }

    /// Haar-uniform rotation: four independent standard normals, normalized.
    pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (a, b) = gaussian_pair(rng);
        let (c, d) = gaussian_pair(rng);
        Rotation::new(a, b, c, d)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn renormalized(self) -> Self {
        let n = self.norm();
        assert!(n > 1e-300, "cannot normalize a zero quaternion");
        Rotation { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// Group product `self * other` (apply `other` first), renormalized so
    /// long chains stay on the unit sphere.
    pub fn compose(self, other: Rotation) -> Self {
        let (a0, a1, a2, a3) = (self.w, self.x, self.y, self.z);
        let (b0, b1, b2, b3) = (other.w, other.x, other.y, other.z);
        Rotation {
            w: a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            x: a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            y: a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            z: a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        }
        .renormalized()
    }

    /// Inverse (= quaternion conjugate on the unit sphere).
    pub fn inverse(self) -> Self {
        Rotation { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// The antipodal quaternion: same physical rotation, other sheet.
    pub fn negate(self) -> Self {
        Rotation { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(self, other: Rotation) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Double-cover class angle `omega = 2 arccos(w)` in `[0, 2*pi)`,
    /// evaluated through `atan2` for stability near the identity.
    pub fn class_angle(self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w)
    }

    /// Geodesic angle of the underlying physical rotation, in `[0, pi]`.
    /// Invariant under `negate`, which is why it serves as the frame-error
    /// metric.
    pub fn so3_angle(self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }

    /// Frame error between an estimate and the truth.
    pub fn so3_distance(self, other: Rotation) -> f64 {
        self.inverse().compose(other).so3_angle()
    }

    pub fn axis_angle(self) -> AxisAngle {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        if v < 1e-15 {
            return AxisAngle { axis: [0.0, 0.0, 1.0], omega: self.class_angle() };
        }
        AxisAngle {
            axis: [self.x / v, self.y / v, self.z / v],
            omega: self.class_angle(),
        }
    }

    /// Action of the underlying physical rotation on a 3-vector.
    pub fn rotate_vector(self, v: [f64; 3]) -> [f64; 3] {
        let u = [self.x, self.y, self.z];
        let cross = |a: [f64; 3], b: [f64; 3]| {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let uv = cross(u, v);
        let uuv = cross(u, uv);
        [
            v[0] + 2.0 * (self.w * uv[0] + uuv[0]),
            v[1] + 2.0 * (self.w * uv[1] + uuv[1]),
            v[2] + 2.0 * (self.w * uv[2] + uuv[2]),
        ]
    }
}

fn gaussian_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = rng.random();
    let u1 = (1.0 - u1).max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

/// Uniform point on the unit sphere.
pub fn uniform_axis<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi: f64 = 2.0 * PI * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Character of the spin-j representation at class angle `omega`:
/// `sin((2j+1) omega/2) / sin(omega/2)`, with the removable singularities
/// at `omega = 0, 2*pi` evaluated by the finite sum.
pub fn character(j: HalfInt, omega: f64) -> f64 {
    let half = 0.5 * omega;
    let s = half.sin();
    if s.abs() < 1e-6 {
        let jf = j.value();
        return (0..j.dim())
            .map(|t| ((t as f64 - jf) * omega).cos())
            .sum();
    }
    (j.dim() as f64 * half).sin() / s
}

/// Irreducible representation matrix of a rotation, `(2j+1) x (2j+1)`.
///
/// Row `a` carries `m = j - a`; see the module docs for the resulting sign
/// conventions.
#[derive(Debug, Clone)]
pub struct IrrepMatrix {
    pub j: HalfInt,
    pub mat: DMatrix<Complex64>,
}

impl IrrepMatrix {
    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Largest absolute deviation of `M M^dag` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.j.dim();
        let prod = &self.mat * self.mat.adjoint();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let expect = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((prod[(r, c)] - Complex64::new(expect, 0.0)).norm());
            }
        }
        worst
    }
}

struct LadderEigen {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

static LADDER_CACHE: LazyLock<RwLock<HashMap<u32, Arc<LadderEigen>>>> =
    LazyLock::new(|| RwLock::new(HashMap::new()));

/// Eigendecomposition of `J_x` in the ladder basis, cached per `2j`.
/// `J_x` is real symmetric tridiagonal, so this is exact and stable for
/// any j the simulators reach (j = 64 corresponds to a 129-point ladder).
fn ladder_eigen(j: HalfInt) -> Arc<LadderEigen> {
    if let Some(e) = LADDER_CACHE.read().unwrap().get(&j.twice()) {
        return Arc::clone(e);
    }
    let d = j.dim();
    let jf = j.value();
    let mut jx = DMatrix::<f64>::zeros(d, d);
    for t in 0..d - 1 {
        let m = t as f64 - jf;
        let a = (jf * (jf + 1.0) - m * (m + 1.0)).sqrt();
        jx[(t + 1, t)] = 0.5 * a;
        jx[(t, t + 1)] = 0.5 * a;
    }
    let eig = jx.symmetric_eigen();
    let entry = Arc::new(LadderEigen { vectors: eig.eigenvectors, values: eig.eigenvalues });
    LADDER_CACHE
        .write()
        .unwrap()
        .insert(j.twice(), Arc::clone(&entry));
    entry
}

/// ZYZ Euler angles `(alpha, beta, gamma)` of a quaternion, with
/// `beta` in `[0, pi]`. The decomposition is exact on the double cover:
/// composing z-, y-, z-rotations by these angles reproduces the quaternion
/// including its sheet.
pub fn zyz_angles(r: Rotation) -> (f64, f64, f64) {
    let beta = 2.0 * (r.x * r.x + r.y * r.y).sqrt().atan2((r.w * r.w + r.z * r.z).sqrt());
    let half_sum = r.z.atan2(r.w);
    let half_diff = (-r.x).atan2(r.y);
    (half_sum + half_diff, beta, half_sum - half_diff)
}

/// Wigner rotation matrix of the spin-j representation at `r`.
pub fn wigner_d(j: HalfInt, r: Rotation) -> IrrepMatrix {
    let (alpha, beta, gamma) = zyz_angles(r);
    let d = j.dim();
    let small = small_d(j, beta);
    let jf = j.value();
    let mut mat = DMatrix::<Complex64>::zeros(d, d);
    let row_phase: Vec<Complex64> = (0..d)
        .map(|a| Complex64::from_polar(1.0, -(jf - a as f64) * alpha))
        .collect();
    let col_phase: Vec<Complex64> = (0..d)
        .map(|b| Complex64::from_polar(1.0, -(jf - b as f64) * gamma))
        .collect();
    for a in 0..d {
        for b in 0..d {
            mat[(a, b)] = row_phase[a] * small[(a, b)] * col_phase[b];
        }
    }
    IrrepMatrix { j, mat }
}

/// Real small-d matrix at angle `beta`, textbook row order, computed as
/// `exp(-i beta J_y)` through the ladder eigendecomposition of `J_x`.
fn small_d(j: HalfInt, beta: f64) -> DMatrix<f64> {
    let eig = ladder_eigen(j);
    let d = j.dim();
    let cos_part = {
        let mut scaled = eig.vectors.clone();
        for c in 0..d {
            let f = (beta * eig.values[c]).cos();
            scaled.column_mut(c).scale_mut(f);
        }
        &scaled * eig.vectors.transpose()
    };
    let sin_part = {
        let mut scaled = eig.vectors.clone();
        for c in 0..d {
            let f = (beta * eig.values[c]).sin();
            scaled.column_mut(c).scale_mut(f);
        }
        &scaled * eig.vectors.transpose()
    };
    // In the ladder basis J_y = G^dag J_x G with G = diag(i^t), so
    // d_ladder = G^dag (cos - i sin) G; the i^(a-b) twist keeps only a real
    // entry, and flipping both indices converts to textbook row order.
    let mut out = DMatrix::<f64>::zeros(d, d);
    let top = d - 1;
    for a in 0..d {
        for b in 0..d {
            let ta = top - a;
            let tb = top - b;
            let v = match (4 + (a % 4) as i8 - (b % 4) as i8) % 4 {
                0 => cos_part[(ta, tb)],
                1 => sin_part[(ta, tb)],
                2 => -cos_part[(ta, tb)],
                _ => -sin_part[(ta, tb)],
            };
            out[(a, b)] = v;
        }
    }
    out
}

/// The real intertwiner `Y` with `conj(D^j(r)) = Y D^j(r) Y^T` for all `r`
/// (the contragredient equivalence of spin-j with itself).
pub fn conjugation_intertwiner(dim: usize) -> DMatrix<f64> {
    let mut y = DMatrix::<f64>::zeros(dim, dim);
    for a in 0..dim {
        // Storage index a carries m = j - a; Y|j m> = (-1)^(j-m) |j -m>.
        y[(dim - 1 - a, a)] = if a % 2 == 0 { 1.0 } else { -1.0 };
    }
    y
}

/// Product quadrature over the rotation group, exact for integrands built
/// from products of two representation matrices with `2j <= twice_max`.
/// Returns (rotation, weight) nodes with weights summing to one.
pub fn haar_product_quadrature(twice_max: u32) -> Vec<(Rotation, f64)> {
    let n_phase = (2 * twice_max + 2) as usize;
    let n_beta = (twice_max + 2) as usize;
    let gl = crate::quad::gauss_legendre(n_beta);
    let mut nodes = Vec::with_capacity(n_phase * n_phase * n_beta);
    let mut total = 0.0;
    for ia in 0..n_phase {
        let alpha = 4.0 * PI * ia as f64 / n_phase as f64;
        for (u, wu) in &gl {
            let beta = u.acos();
            for ig in 0..n_phase {
                let gamma = 4.0 * PI * ig as f64 / n_phase as f64;
                let r = Rotation::rot_z(alpha)
                    .compose(Rotation::rot_y(beta))
                    .compose(Rotation::rot_z(gamma));
                nodes.push((r, *wu));
                total += *wu;
            }
        }
    }
    for node in &mut nodes {
        node.1 /= total;
    }
    nodes
}
