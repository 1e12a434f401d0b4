//! Block Hilbert-space model of N spin-1/2 particles.
//!
//! The N-spin space splits into blocks labelled by total angular momentum j,
//! each a product of a (2j+1)-dimensional rotation space and a multiplicity
//! space that rotations never touch. All states used by the protocols live
//! in the "entangled corner" of each block: the first `2j+1` multiplicity
//! directions. A [`BlockVector`] therefore stores one `(2j+1) x (2j+1)`
//! coefficient matrix per block (row = rotation-space index, column =
//! multiplicity slot), which keeps memory polynomial in N instead of `2^N`.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;

use crate::su2::{wigner_d, HalfInt, Rotation};
use crate::{Error, Result};

/// One angular-momentum block: dimension `2j+1`, multiplicity `m_j`.
#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub j: HalfInt,
    pub dim: usize,
    pub mult: BigUint,
}

/// The full decomposition of N spins into angular-momentum blocks.
#[derive(Debug, Clone)]
pub struct BlockShape {
    n_spins: usize,
    blocks: Vec<BlockInfo>,
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 1..=k {
        acc = acc * BigUint::from(n - k + i) / BigUint::from(i);
    }
    acc
}

impl BlockShape {
    /// Decomposition for `n >= 1` spins: j runs from 0 (n even) or 1/2
    /// (n odd) up to n/2, with multiplicity
    /// `binom(n, n/2 - j) - binom(n, n/2 - j - 1)`.
    pub fn for_spins(n: usize) -> Self {
        assert!(n >= 1, "need at least one spin");
        let mut blocks = Vec::new();
        let mut twice_j = (n % 2) as u32;
        while twice_j as usize <= n {
            let j = HalfInt::from_twice(twice_j);
            let k = (n as u64 - u64::from(twice_j)) / 2;
            let mult = if k == 0 {
                binomial(n as u64, 0)
            } else {
                binomial(n as u64, k) - binomial(n as u64, k - 1)
            };
            blocks.push(BlockInfo { j, dim: j.dim(), mult });
            twice_j += 2;
        }
        BlockShape { n_spins: n, blocks }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn block(&self, j: HalfInt) -> Option<&BlockInfo> {
        self.blocks.iter().find(|b| b.j == j)
    }

    /// `sum_j (2j+1) m_j`, which must equal `2^n`.
    pub fn total_dimension(&self) -> BigUint {
        let mut acc = BigUint::ZERO;
        for b in &self.blocks {
            acc += BigUint::from(b.dim as u64) * &b.mult;
        }
        acc
    }
}

/// Normalized signal amplitudes `A_j`: raw profile `sin(2 pi j / N)` on the
/// blocks with `j <= N/2 - 1`, zero-amplitude blocks dropped from support.
pub fn signal_amplitudes(shape: &BlockShape) -> Result<Vec<(HalfInt, f64)>> {
    let n = shape.n_spins();
    let mut amps = Vec::new();
    for b in shape.blocks() {
        if b.j.twice() as usize + 2 > n {
            continue; // keep j <= N/2 - 1
        }
        let raw = (std::f64::consts::PI * f64::from(b.j.twice()) / n as f64).sin();
        if raw.abs() > 1e-12 {
            amps.push((b.j, raw));
        }
    }
    if amps.is_empty() {
        return Err(Error::DegenerateState { n_spins: n });
    }
    let norm = amps.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
    for (_, a) in &mut amps {
        *a /= norm;
    }
    Ok(amps)
}

/// Pure state in the block decomposition, one coefficient matrix per block.
#[derive(Debug, Clone)]
pub struct BlockVector {
    n_spins: usize,
    blocks: Vec<(HalfInt, DMatrix<Complex64>)>,
}

impl BlockVector {
    /// Uniform rotation-multiplicity correlation on block j (coefficient
    /// matrix = identity, squared norm `2j+1`). Requires `m_j >= 2j+1`.
    pub fn max_entangled(shape: &BlockShape, j: HalfInt) -> Result<Self> {
        let info = shape.block(j).ok_or(Error::BlockUnavailable {
            j2: j.twice(),
            reason: "not present in the decomposition",
        })?;
        if info.mult < BigUint::from(info.dim as u64) {
            return Err(Error::BlockUnavailable {
                j2: j.twice(),
                reason: "multiplicity smaller than 2j+1",
            });
        }
        Ok(BlockVector {
            n_spins: shape.n_spins(),
            blocks: vec![(j, DMatrix::identity(info.dim, info.dim))],
        })
    }

    /// The normalized sender state: blocks weighted by `A_j / sqrt(2j+1)`
    /// on the maximally entangled corner.
    pub fn signal_state(shape: &BlockShape) -> Result<Self> {
        let amps = signal_amplitudes(shape)?;
        let blocks = amps
            .iter()
            .map(|&(j, a)| {
                let d = j.dim();
                let scale = Complex64::new(a / (d as f64).sqrt(), 0.0);
                (j, DMatrix::identity(d, d) * scale)
            })
            .collect();
        Ok(BlockVector { n_spins: shape.n_spins(), blocks })
    }

    /// Unnormalized seed vector of the covariant orientation measurement:
    /// `sqrt(2j+1)` times the entangled corner on every signal block.
    pub fn povm_seed(shape: &BlockShape) -> Result<Self> {
        let amps = signal_amplitudes(shape)?;
        let blocks = amps
            .iter()
            .map(|&(j, _)| {
                let d = j.dim();
                let scale = Complex64::new((d as f64).sqrt(), 0.0);
                (j, DMatrix::identity(d, d) * scale)
            })
            .collect();
        Ok(BlockVector { n_spins: shape.n_spins(), blocks })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn support(&self) -> impl Iterator<Item = HalfInt> + '_ {
        self.blocks.iter().map(|(j, _)| *j)
    }

    pub fn coeff(&self, j: HalfInt) -> Option<&DMatrix<Complex64>> {
        self.blocks.iter().find(|(bj, _)| *bj == j).map(|(_, c)| c)
    }

    /// Collective rotation: the representation matrix acts on the
    /// rotation-space index of every block, the multiplicity slots are
    /// untouched.
    pub fn apply_rotation(&self, r: Rotation) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(j, c)| (*j, &wigner_d(*j, r).mat * c))
            .collect();
        BlockVector { n_spins: self.n_spins, blocks }
    }

    /// Applies the keyed shift-and-multiply unitary of `seed` to each block.
    pub fn randomize(&self, seed: &SeedSequence) -> Result<Self> {
        self.seeded(seed, false)
    }

    /// Inverse of [`BlockVector::randomize`] with the same seed.
    pub fn unrandomize(&self, seed: &SeedSequence) -> Result<Self> {
        self.seeded(seed, true)
    }

    fn seeded(&self, seed: &SeedSequence, invert: bool) -> Result<Self> {
        if seed.pairs.len() != self.blocks.len() {
            return Err(Error::SeedMismatch);
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for ((j, c), &(sj, p, q)) in self.blocks.iter().zip(&seed.pairs) {
            if *j != sj {
                return Err(Error::SeedMismatch);
            }
            let w = shift_multiply(*j, p, q)?;
            let m = if invert { w.adjoint() * c } else { &w * c };
            blocks.push((*j, m));
        }
        Ok(BlockVector { n_spins: self.n_spins, blocks })
    }

    /// `sum_j tr(C_a^dag C_b)` over the common support.
    pub fn inner(&self, other: &BlockVector) -> Result<Complex64> {
        if self.n_spins != other.n_spins {
            return Err(Error::ShapeMismatch("inner product across different spin counts"));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, c) in &self.blocks {
            if let Some(d) = other.coeff(*j) {
                acc += (c.adjoint() * d).trace();
            }
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(_, c)| c.iter().map(|e| e.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Shift-and-multiply unitary on block j: ladder shift by `p` (modulo
/// `2j+1`) composed with the phase `exp(2 pi i m q / (2j+1))` keyed to the
/// physical `J_z` value `m`.
pub fn shift_multiply(j: HalfInt, p: u32, q: u32) -> Result<DMatrix<Complex64>> {
    let d = j.dim();
    if p as usize >= d || q as usize >= d {
        return Err(Error::SeedOutOfRange { p, q, dim: d });
    }
    let mut w = DMatrix::<Complex64>::zeros(d, d);
    for t in 0..d {
        let m = t as f64 - j.value();
        let shifted = (t + p as usize) % d;
        let phase = 2.0 * std::f64::consts::PI * m * f64::from(q) / d as f64;
        w[(j.row_of_ladder(shifted), j.row_of_ladder(t))] = Complex64::from_polar(1.0, phase);
    }
    Ok(w)
}

/// Fourier-transformed multiplicity basis vector `|k~>` in a d-dimensional
/// slot space.
pub fn fourier_column(dim: usize, k: usize) -> DVector<Complex64> {
    let scale = 1.0 / (dim as f64).sqrt();
    DVector::from_fn(dim, |t, _| {
        Complex64::from_polar(scale, 2.0 * std::f64::consts::PI * (t * k) as f64 / dim as f64)
    })
}

/// Secret seed: one `(p_j, q_j)` pair per supported block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSequence {
    pairs: Vec<(HalfInt, u32, u32)>,
}

impl SeedSequence {
    pub fn zero(support: &[HalfInt]) -> Self {
        SeedSequence { pairs: support.iter().map(|&j| (j, 0, 0)).collect() }
    }

    pub fn uniform<R: Rng + ?Sized>(support: &[HalfInt], rng: &mut R) -> Self {
        let pairs = support
            .iter()
            .map(|&j| {
                let d = j.dim() as u32;
                (j, rng.random_range(0..d), rng.random_range(0..d))
            })
            .collect();
        SeedSequence { pairs }
    }

    pub fn new(pairs: Vec<(HalfInt, u32, u32)>) -> Self {
        SeedSequence { pairs }
    }

    pub fn pairs(&self) -> &[(HalfInt, u32, u32)] {
        &self.pairs
    }

    /// Bits needed to store one sequence of independent per-block pairs:
    /// `ceil(log2 prod_j (2j+1)^2)`.
    pub fn bit_cost(&self) -> u64 {
        let mut prod = BigUint::from(1u32);
        for &(j, _, _) in &self.pairs {
            let d = BigUint::from(j.dim() as u64);
            prod *= &d * &d;
        }
        ceil_log2(&prod)
    }

    /// Every seed over the given support, in lexicographic order.
    pub fn enumerate_all(support: &[HalfInt]) -> Vec<SeedSequence> {
        let mut out = vec![SeedSequence { pairs: Vec::new() }];
        for &j in support {
            let d = j.dim() as u32;
            let mut next = Vec::with_capacity(out.len() * (d * d) as usize);
            for base in &out {
                for p in 0..d {
                    for q in 0..d {
                        let mut pairs = base.pairs.clone();
                        pairs.push((j, p, q));
                        next.push(SeedSequence { pairs });
                    }
                }
            }
            out = next;
        }
        out
    }
}

fn ceil_log2(x: &BigUint) -> u64 {
    if x <= &BigUint::from(1u32) {
        return 0;
    }
    let bits = x.bits();
    if x == &(BigUint::from(1u32) << (bits - 1)) {
        bits - 1
    } else {
        bits
    }
}

/// Seed-space accounting over the signal support.
#[derive(Debug, Clone)]
pub struct SeedCount {
    /// Number of distinct seed sequences under independent per-block pairs,
    /// `prod_j (2j+1)^2`.
    pub sequence_count: BigUint,
    /// Per-block choice total `sum_j (2j+1)^2`, whose logarithm is the
    /// `3 log N` shared-randomness figure.
    pub choice_sum: BigUint,
    /// `ceil(log2 choice_sum)` - the reported secret-bit cost.
    pub secret_bits: u64,
}

/// Counts seeds over the support of the signal state.
pub fn seed_count(shape: &BlockShape) -> Result<SeedCount> {
    let amps = signal_amplitudes(shape)?;
    let mut prod = BigUint::from(1u32);
    let mut sum = BigUint::ZERO;
    for (j, _) in &amps {
        let sq = BigUint::from(j.dim() as u64) * BigUint::from(j.dim() as u64);
        prod *= &sq;
        sum += &sq;
    }
    let secret_bits = ceil_log2(&sum);
    Ok(SeedCount { sequence_count: prod, choice_sum: sum, secret_bits })
}

/// Mixed state stored per block on the rotation space tensor a tracked
/// `s_j`-dimensional slice of the multiplicity space.
#[derive(Debug, Clone)]
pub struct DensityBlock {
    pub j: HalfInt,
    pub mult_dim: usize,
    /// Operator on the `(2j+1) * mult_dim` product, row index
    /// `h * mult_dim + slot`.
    pub op: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub struct BlockDensity {
    n_spins: usize,
    blocks: Vec<DensityBlock>,
}

impl BlockDensity {
    pub fn new(n_spins: usize, blocks: Vec<DensityBlock>) -> Self {
        BlockDensity { n_spins, blocks }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn blocks(&self) -> &[DensityBlock] {
        &self.blocks
    }

    pub fn block(&self, j: HalfInt) -> Option<&DensityBlock> {
        self.blocks.iter().find(|b| b.j == j)
    }

    /// Rank-one density of a pure block vector.
    pub fn from_vector(v: &BlockVector) -> Self {
        let blocks = v
            .blocks
            .iter()
            .map(|(j, c)| {
                let (rows, cols) = c.shape();
                let flat = DVector::from_fn(rows * cols, |i, _| c[(i / cols, i % cols)]);
                DensityBlock { j: *j, mult_dim: cols, op: &flat * flat.adjoint() }
            })
            .collect();
        BlockDensity { n_spins: v.n_spins, blocks }
    }

    /// The analytic average over a uniform seed: block weight `A_j^2`,
    /// operator maximally mixed on both factors of the entangled corner.
    pub fn uniform_seed_average(n_spins: usize, amps: &[(HalfInt, f64)]) -> Self {
        let blocks = amps
            .iter()
            .map(|&(j, a)| {
                let d = j.dim();
                let scale = Complex64::new(a * a / (d * d) as f64, 0.0);
                DensityBlock { j, mult_dim: d, op: DMatrix::identity(d * d, d * d) * scale }
            })
            .collect();
        BlockDensity { n_spins, blocks }
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.op.trace().re).sum()
    }

    pub fn block_weight(&self, j: HalfInt) -> f64 {
        self.block(j).map_or(0.0, |b| b.op.trace().re)
    }

    /// Conjugates every block by the rotation action (representation matrix
    /// on the rotation factor, identity on the multiplicity slice).
    pub fn conjugate_rotation(&self, r: Rotation) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let d = wigner_d(b.j, r).mat;
                let big = d.kronecker(&DMatrix::identity(b.mult_dim, b.mult_dim));
                DensityBlock { j: b.j, mult_dim: b.mult_dim, op: &big * &b.op * big.adjoint() }
            })
            .collect();
        BlockDensity { n_spins: self.n_spins, blocks }
    }

    /// Largest elementwise deviation across the union of supports.
    pub fn max_dev(&self, other: &BlockDensity) -> f64 {
        let mut worst: f64 = 0.0;
        let mut seen = Vec::new();
        for b in &self.blocks {
            seen.push(b.j);
            match other.block(b.j) {
                Some(o) if o.op.shape() == b.op.shape() => {
                    worst = worst.max((&b.op - &o.op).map(|e| e.norm()).max());
                }
                _ => {
                    worst = worst.max(b.op.map(|e| e.norm()).max());
                }
            }
        }
        for o in &other.blocks {
            if !seen.contains(&o.j) {
                worst = worst.max(o.op.map(|e| e.norm()).max());
            }
        }
        worst
    }

    /// Trace distance, using that both densities are block diagonal.
    pub fn trace_distance(&self, other: &BlockDensity) -> f64 {
        let mut acc = 0.0;
        let mut seen = Vec::new();
        for b in &self.blocks {
            seen.push(b.j);
            let diff = match other.block(b.j) {
                Some(o) if o.op.shape() == b.op.shape() => &b.op - &o.op,
                _ => b.op.clone(),
            };
            acc += diff.symmetric_eigen().eigenvalues.iter().map(|e| e.abs()).sum::<f64>();
        }
        for o in &other.blocks {
            if !seen.contains(&o.j) {
                acc += o
                    .op
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .map(|e| e.abs())
                    .sum::<f64>();
            }
        }
        0.5 * acc
    }

    /// Multiplicity marginal of one block (partial trace over the rotation
    /// factor).
    pub fn mult_marginal(&self, j: HalfInt) -> Option<DMatrix<Complex64>> {
        let b = self.block(j)?;
        let d = b.j.dim();
        let s = b.mult_dim;
        let mut out = DMatrix::<Complex64>::zeros(s, s);
        for a in 0..d {
            for r in 0..s {
                for c in 0..s {
                    out[(r, c)] += b.op[(a * s + r, a * s + c)];
                }
            }
        }
        Some(out)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (&b.op - b.op.adjoint()).map(|e| e.norm()).max())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                b.op
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |m, &e| m.min(e))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Averages a collection of densities with equal weights.
    pub fn average(items: &[BlockDensity]) -> BlockDensity {
        assert!(!items.is_empty());
        let scale = Complex64::new(1.0 / items.len() as f64, 0.0);
        let mut blocks: Vec<DensityBlock> = Vec::new();
        for item in items {
            for b in &item.blocks {
                if let Some(acc) = blocks.iter_mut().find(|x| x.j == b.j) {
                    acc.op += &b.op * scale;
                } else {
                    blocks.push(DensityBlock {
                        j: b.j,
                        mult_dim: b.mult_dim,
                        op: &b.op * scale,
                    });
                }
            }
        }
        blocks.sort_by_key(|b| b.j);
        BlockDensity { n_spins: items[0].n_spins, blocks }
    }
}
