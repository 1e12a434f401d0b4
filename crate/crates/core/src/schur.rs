//! Brute-force full-space oracle for small spin counts.
//!
//! Builds the explicit isometry from the `2^N`-dimensional product space of
//! N spins to the block decomposition by sequential angular-momentum
//! coupling. The resulting basis certifies, by direct matrix arithmetic,
//! that collective rotations act as one representation matrix per block and
//! leave multiplicity slots untouched - the structural facts everything else
//! in this crate relies on. Capped at N = 4: a 16-dimensional check already
//! exercises every feature of the formalism.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::blocks::{BlockDensity, BlockShape, BlockVector};
use crate::su2::{wigner_d, HalfInt, Rotation};
use crate::{Error, Result};

/// Largest spin count the oracle accepts.
pub const MAX_ORACLE_SPINS: usize = 4;

fn factorial(n: i64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Condon-Shortley Clebsch-Gordan coefficient
/// `<j1 m1; j2 m2 | j m>`, with all magnetic numbers passed doubled.
/// Invalid quantum numbers yield zero.
pub fn clebsch_gordan(j1: HalfInt, j2: HalfInt, j: HalfInt, m1_2: i32, m2_2: i32, m_2: i32) -> f64 {
    let (tj1, tj2, tj) = (j1.twice() as i64, j2.twice() as i64, j.twice() as i64);
    let (tm1, tm2, tm) = (i64::from(m1_2), i64::from(m2_2), i64::from(m_2));
    if tm1 + tm2 != tm
        || tm1.abs() > tj1
        || tm2.abs() > tj2
        || tm.abs() > tj
        || (tj1 + tm1) % 2 != 0
        || (tj2 + tm2) % 2 != 0
        || (tj + tm) % 2 != 0
        || tj < (tj1 - tj2).abs()
        || tj > tj1 + tj2
        || (tj1 + tj2 + tj) % 2 != 0
    {
        return 0.0;
    }
    // Racah's closed form; every factorial argument stays tiny at the
    // oracle's sizes, so plain f64 products are exact enough.
    let delta = factorial((tj1 + tj2 - tj) / 2)
        * factorial((tj1 - tj2 + tj) / 2)
        * factorial((-tj1 + tj2 + tj) / 2)
        / factorial((tj1 + tj2 + tj) / 2 + 1);
    let pref = ((tj + 1) as f64
        * delta
        * factorial((tj1 + tm1) / 2)
        * factorial((tj1 - tm1) / 2)
        * factorial((tj2 + tm2) / 2)
        * factorial((tj2 - tm2) / 2)
        * factorial((tj + tm) / 2)
        * factorial((tj - tm) / 2))
        .sqrt();
    let k_min = 0i64.max((tj2 - tj - tm1) / 2).max((tj1 + tm2 - tj) / 2);
    let k_max = ((tj1 + tj2 - tj) / 2)
        .min((tj1 - tm1) / 2)
        .min((tj2 + tm2) / 2);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (factorial(k)
                * factorial((tj1 + tj2 - tj) / 2 - k)
                * factorial((tj1 - tm1) / 2 - k)
                * factorial((tj2 + tm2) / 2 - k)
                * factorial((tj - tj2 + tm1) / 2 + k)
                * factorial((tj - tj1 - tm2) / 2 + k));
    }
    pref * sum
}

/// Orthonormal coupled basis of the full N-spin space. Columns are grouped
/// by total angular momentum (ascending), then by the rotation-space row,
/// then by the coupling path in lexicographic order, so the basis change
/// block-diagonalizes collective rotations as `D^j tensor identity`.
/// One irreducible multiplet: final j, the coupling path as doubled
/// intermediate j values, and its 2j+1 vectors indexed by the
/// rotation-space row.
type Tower = (HalfInt, Vec<u32>, Vec<DVector<f64>>);

pub struct SchurBasis {
    n_spins: usize,
    shape: BlockShape,
    towers: Vec<Tower>,
}

impl SchurBasis {
    pub fn build(n_spins: usize) -> Result<Self> {
        if n_spins == 0 || n_spins > MAX_ORACLE_SPINS {
            return Err(Error::SizeLimit { max: MAX_ORACLE_SPINS, got: n_spins });
        }
        let half = HalfInt::from_twice(1);
        let mut towers: Vec<(HalfInt, Vec<u32>, Vec<DVector<f64>>)> = vec![(
            half,
            vec![1],
            vec![
                DVector::from_vec(vec![1.0, 0.0]), // m = +1/2
                DVector::from_vec(vec![0.0, 1.0]), // m = -1/2
            ],
        )];
        for step in 1..n_spins {
            let dim_next = 1usize << (step + 1);
            let mut next = Vec::new();
            for (j_prev, path, cols) in &towers {
                let mut targets: Vec<u32> = Vec::new();
                if j_prev.twice() >= 1 {
                    targets.push(j_prev.twice() - 1);
                }
                targets.push(j_prev.twice() + 1);
                targets.sort_unstable();
                for tj in targets {
                    let j_new = HalfInt::from_twice(tj);
                    let mut new_cols = Vec::with_capacity(j_new.dim());
                    for row in 0..j_new.dim() {
                        let m_2 = tj as i32 - 2 * row as i32;
                        let mut v = DVector::<f64>::zeros(dim_next);
                        for (row1, col1) in cols.iter().enumerate() {
                            let m1_2 = j_prev.twice() as i32 - 2 * row1 as i32;
                            for (row2, spin_m2) in [(0usize, 1i32), (1, -1)] {
                                let cg = clebsch_gordan(*j_prev, half, j_new, m1_2, spin_m2, m_2);
                                if cg == 0.0 {
                                    continue;
                                }
                                // kron(prev, spin): index = i_prev * 2 + i_spin.
                                for (i_prev, amp) in col1.iter().enumerate() {
                                    if *amp != 0.0 {
                                        v[i_prev * 2 + row2] += cg * amp;
                                    }
                                }
                            }
                        }
                        new_cols.push(v);
                    }
                    let mut new_path = path.clone();
                    new_path.push(tj);
                    next.push((j_new, new_path, new_cols));
                }
            }
            towers = next;
        }
        towers.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        Ok(SchurBasis { n_spins, shape: BlockShape::for_spins(n_spins), towers })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn shape(&self) -> &BlockShape {
        &self.shape
    }

    /// The full basis-change matrix, column order (j ascending, row, path).
    pub fn matrix(&self) -> DMatrix<f64> {
        let dim = 1usize << self.n_spins;
        let mut mat = DMatrix::<f64>::zeros(dim, dim);
        let mut col = 0;
        for b in self.shape.blocks() {
            let towers: Vec<&Tower> =
                self.towers.iter().filter(|(tj, _, _)| *tj == b.j).collect();
            for row in 0..b.dim {
                for tower in &towers {
                    mat.set_column(col, &tower.2[row]);
                    col += 1;
                }
            }
        }
        debug_assert_eq!(col, dim);
        mat
    }

    fn column(&self, j: HalfInt, row: usize, path_idx: usize) -> Option<&DVector<f64>> {
        self.towers
            .iter()
            .filter(|(tj, _, _)| *tj == j)
            .nth(path_idx)
            .map(|(_, _, cols)| &cols[row])
    }

    /// Number of coupling paths reaching total j.
    pub fn path_count(&self, j: HalfInt) -> usize {
        self.towers.iter().filter(|(tj, _, _)| *tj == j).count()
    }

    /// Orthonormality defect of the whole basis.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.matrix();
        let dim = m.nrows();
        (m.transpose() * &m - DMatrix::<f64>::identity(dim, dim)).abs().max()
    }
}

/// Full-space collective rotation `U_r^(tensor N)`.
pub fn full_rotation(n_spins: usize, r: Rotation) -> DMatrix<Complex64> {
    let u = wigner_d(HalfInt::from_twice(1), r).mat;
    let mut acc = u.clone();
    for _ in 1..n_spins {
        acc = acc.kronecker(&u);
    }
    acc
}

/// Conjugates the full tensor-product rotation into the coupled basis and
/// returns the largest deviation from the expected block-diagonal form.
pub fn verify_block_action(basis: &SchurBasis, r: Rotation) -> f64 {
    let u = full_rotation(basis.n_spins, r);
    let s = basis.matrix().map(|v| Complex64::new(v, 0.0));
    let in_basis = s.adjoint() * u * &s;
    let dim = in_basis.nrows();
    let mut expected = DMatrix::<Complex64>::zeros(dim, dim);
    let mut at = 0;
    for b in basis.shape.blocks() {
        let mult = basis.path_count(b.j);
        let d = wigner_d(b.j, r).mat;
        for a in 0..b.dim {
            for c in 0..b.dim {
                for p in 0..mult {
                    expected[(at + a * mult + p, at + c * mult + p)] = d[(a, c)];
                }
            }
        }
        at += b.dim * mult;
    }
    (in_basis - expected).map(|e| e.norm()).max()
}

/// Embeds a block vector into the full N-spin space (an isometry on the
/// entangled corner: multiplicity slot k maps to coupling path k).
pub fn embed_vector(basis: &SchurBasis, v: &BlockVector) -> Result<DVector<Complex64>> {
    if v.n_spins() != basis.n_spins {
        return Err(Error::ShapeMismatch("vector and basis have different spin counts"));
    }
    let dim = 1usize << basis.n_spins;
    let mut out = DVector::<Complex64>::zeros(dim);
    for j in v.support() {
        let c = v.coeff(j).expect("support listed");
        let paths = basis.path_count(j);
        if c.ncols() > paths {
            return Err(Error::BlockUnavailable {
                j2: j.twice(),
                reason: "more multiplicity slots than coupling paths",
            });
        }
        for row in 0..c.nrows() {
            for slot in 0..c.ncols() {
                let amp = c[(row, slot)];
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                let col = basis.column(j, row, slot).expect("checked above");
                for (i, base) in col.iter().enumerate() {
                    if *base != 0.0 {
                        out[i] += amp * Complex64::new(*base, 0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Embeds a block density into the full space.
pub fn embed_density(basis: &SchurBasis, rho: &BlockDensity) -> Result<DMatrix<Complex64>> {
    if rho.n_spins() != basis.n_spins {
        return Err(Error::ShapeMismatch("density and basis have different spin counts"));
    }
    let dim = 1usize << basis.n_spins;
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    for b in rho.blocks() {
        let paths = basis.path_count(b.j);
        if b.mult_dim > paths {
            return Err(Error::BlockUnavailable {
                j2: b.j.twice(),
                reason: "more multiplicity slots than coupling paths",
            });
        }
        let block_dim = b.j.dim() * b.mult_dim;
        let mut t = DMatrix::<Complex64>::zeros(dim, block_dim);
        for row in 0..b.j.dim() {
            for slot in 0..b.mult_dim {
                let col = basis.column(b.j, row, slot).expect("checked above");
                for (i, base) in col.iter().enumerate() {
                    t[(i, row * b.mult_dim + slot)] = Complex64::new(*base, 0.0);
                }
            }
        }
        out += &t * &b.op * t.adjoint();
    }
    Ok(out)
}
