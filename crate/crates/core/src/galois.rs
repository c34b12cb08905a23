//! GF(2^8) arithmetic and dense elimination over coefficient matrices.
//!
//! Elements are bytes. Addition is XOR. Multiplication reduces modulo the
//! AES polynomial x^8 + x^4 + x^3 + x + 1 (0x11B) and is served from a full
//! 256 x 256 product table built once on first use.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::sync::OnceLock;

use thiserror::Error;

/// The reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11B;

struct Tables {
    mul: Box<[[u8; 256]; 256]>,
    inv: [u8; 256],
}

static TABLES: OnceLock<Tables> = OnceLock::new();

fn tables() -> &'static Tables {
    TABLES.get_or_init(build_tables)
}

fn build_tables() -> Tables {
    // exp/log over the generator, then expand into the full product table.
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u8 = 1;
    for i in 0..255 {
        exp[i] = x;
        log[x as usize] = i as u8;
        // x * 3 = x * 2 + x
        let doubled = (x << 1) ^ if x & 0x80 != 0 { (POLY & 0xFF) as u8 } else { 0 };
        x ^= doubled;
    }
    debug_assert_eq!(x, 1, "generator order must be 255");
    for i in 255..512 {
        exp[i] = exp[i - 255];
    }

    let mut mul = Box::new([[0u8; 256]; 256]);
    for a in 1..256usize {
        for b in 1..256usize {
            mul[a][b] = exp[log[a] as usize + log[b] as usize];
        }
    }
    let mut inv = [0u8; 256];
    for a in 1..256usize {
        inv[a] = exp[(255 - log[a] as usize) % 255];
    }
    Tables { mul, inv }
}

/// Row of the product table: `mul_row(c)[x] == c * x`.
#[inline]
pub fn mul_row(c: u8) -> &'static [u8; 256] {
    &tables().mul[c as usize]
}

/// An element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse. `None` for zero.
    pub fn inv(self) -> Option<Gf256> {
        if self.0 == 0 {
            None
        } else {
            Some(Gf256(tables().inv[self.0 as usize]))
        }
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Gf256(v)
    }
}

impl Add for Gf256 {
    type Output = Gf256;
    #[inline]
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf256 {
    #[inline]
    fn add_assign(&mut self, rhs: Gf256) {
        self.0 ^= rhs.0;
    }
}

impl Sub for Gf256 {
    type Output = Gf256;
    #[inline]
    fn sub(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(mul_row(self.0)[rhs.0 as usize])
    }
}

impl MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf256) {
        *self = *self * rhs;
    }
}

impl Div for Gf256 {
    type Output = Gf256;
    /// Panics on division by zero, like integer division.
    fn div(self, rhs: Gf256) -> Gf256 {
        self * rhs.inv().expect("division by zero in GF(2^8)")
    }
}

#[inline]
pub fn gf_add(a: Gf256, b: Gf256) -> Gf256 {
    a + b
}

#[inline]
pub fn gf_mul(a: Gf256, b: Gf256) -> Gf256 {
    a * b
}

pub fn gf_inv(a: Gf256) -> Option<Gf256> {
    a.inv()
}

/// `dst[i] += c * src[i]` over the shorter of the two slices.
#[inline]
pub fn axpy(dst: &mut [u8], c: u8, src: &[u8]) {
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            let row = mul_row(c);
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= row[*s as usize];
            }
        }
    }
}

/// `v[i] *= c` in place.
#[inline]
pub fn scale(v: &mut [u8], c: u8) {
    if c == 1 {
        return;
    }
    let row = mul_row(c);
    for x in v.iter_mut() {
        *x = row[*x as usize];
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GaloisError {
    #[error("matrix rows have differing lengths")]
    RaggedRows,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("singular matrix: rank {rank} < {rows}")]
    SingularMatrix { rank: usize, rows: usize },
    #[error("{payloads} payloads supplied for {rows} rows")]
    PayloadCount { rows: usize, payloads: usize },
    #[error("payload blocks must share one length")]
    PayloadLength,
}

/// A sequence of coefficient vectors of equal length, stored row-major.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct CoefficientMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl CoefficientMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, GaloisError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(GaloisError::RaggedRows);
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Gf256 {
        Gf256(self.data[r * self.cols + c])
    }

    pub fn set(&mut self, r: usize, c: usize, v: Gf256) {
        self.data[r * self.cols + c] = v.0;
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.data.split_at_mut(hi * self.cols);
        head[lo * self.cols..(lo + 1) * self.cols].swap_with_slice(&mut tail[..self.cols]);
    }

    /// Rank by forward elimination, pivoting on the first nonzero entry.
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for col in 0..m.cols {
            if rank == m.rows {
                break;
            }
            let Some(p) = (rank..m.rows).find(|&r| m.data[r * m.cols + col] != 0) else {
                continue;
            };
            m.swap_rows(rank, p);
            let inv = Gf256(m.data[rank * m.cols + col]).inv().unwrap().0;
            scale(m.row_mut(rank), inv);
            let pivot_row = m.row(rank).to_vec();
            for r in rank + 1..m.rows {
                let f = m.data[r * m.cols + col];
                if f != 0 {
                    axpy(m.row_mut(r), f, &pivot_row);
                }
            }
            rank += 1;
        }
        rank
    }

    /// `self * sources`: row i of the result is `sum_j m[i][j] * sources[j]`.
    pub fn apply(&self, sources: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, GaloisError> {
        if sources.len() != self.cols {
            return Err(GaloisError::PayloadCount { rows: self.cols, payloads: sources.len() });
        }
        let len = sources.first().map_or(0, Vec::len);
        if sources.iter().any(|s| s.len() != len) {
            return Err(GaloisError::PayloadLength);
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut out = vec![0u8; len];
                for (j, src) in sources.iter().enumerate() {
                    axpy(&mut out, self.data[i * self.cols + j], src);
                }
                out
            })
            .collect())
    }

    /// Gauss-Jordan solve of `self * X = payloads` for square full-rank `self`.
    pub fn solve(&self, payloads: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, GaloisError> {
        if self.rows != self.cols {
            return Err(GaloisError::NotSquare { rows: self.rows, cols: self.cols });
        }
        if payloads.len() != self.rows {
            return Err(GaloisError::PayloadCount { rows: self.rows, payloads: payloads.len() });
        }
        let len = payloads.first().map_or(0, Vec::len);
        if payloads.iter().any(|p| p.len() != len) {
            return Err(GaloisError::PayloadLength);
        }
        let n = self.rows;
        let mut m = self.clone();
        let mut rhs: Vec<Vec<u8>> = payloads.to_vec();
        for col in 0..n {
            let Some(p) = (col..n).find(|&r| m.data[r * n + col] != 0) else {
                return Err(GaloisError::SingularMatrix { rank: self.rank(), rows: n });
            };
            m.swap_rows(col, p);
            rhs.swap(col, p);
            let inv = Gf256(m.data[col * n + col]).inv().unwrap().0;
            scale(m.row_mut(col), inv);
            scale(&mut rhs[col], inv);
            let pivot_row = m.row(col).to_vec();
            let pivot_rhs = rhs[col].clone();
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = m.data[r * n + col];
                if f != 0 {
                    axpy(m.row_mut(r), f, &pivot_row);
                    axpy(&mut rhs[r], f, &pivot_rhs);
                }
            }
        }
        Ok(rhs)
    }
}

pub fn rank(m: &CoefficientMatrix) -> usize {
    m.rank()
}

pub fn solve(m: &CoefficientMatrix, payloads: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, GaloisError> {
    m.solve(payloads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Carry-less multiply then reduce, one bit at a time.
    fn reference_mul(a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for i in 0..8 {
            if b & (1 << i) != 0 {
                acc ^= (a as u16) << i;
            }
        }
        for bit in (8..16).rev() {
            if acc & (1 << bit) != 0 {
                acc ^= POLY << (bit - 8);
            }
        }
        acc as u8
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CoefficientMatrix {
        let data: Vec<Vec<u8>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen()).collect()).collect();
        CoefficientMatrix::from_rows(&data).unwrap()
    }

    #[test]
    fn add_examples() {
        assert_eq!(gf_add(Gf256(0x57), Gf256(0x00)), Gf256(0x57));
        assert_eq!(gf_add(Gf256(0x57), Gf256(0x57)), Gf256(0x00));
        assert_eq!(gf_add(Gf256(0x57), Gf256(0x83)), Gf256(0x57 ^ 0x83));
        assert_eq!(0x57 ^ 0x83, 0xD4);
    }

    #[test]
    fn mul_examples() {
        assert_eq!(gf_mul(Gf256(0x02), Gf256(0x01)), Gf256(0x02));
        assert_eq!(gf_mul(Gf256(0x00), Gf256(0xFF)), Gf256(0x00));
        assert_eq!(reference_mul(0x57, 0x83), 0xC1);
        assert_eq!(gf_mul(Gf256(0x57), Gf256(0x83)), Gf256(0xC1));
    }

    #[test]
    fn table_matches_reference_exhaustively() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf_mul(Gf256(a), Gf256(b)).0, reference_mul(a, b), "{a:#x}*{b:#x}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_inverse() {
        assert_eq!(gf_inv(Gf256::ZERO), None);
        for a in 1..=255u8 {
            let inv = gf_inv(Gf256(a)).unwrap();
            assert_eq!(Gf256(a) * inv, Gf256::ONE);
        }
    }

    #[test]
    fn distributivity_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let (a, b, c) = (Gf256(rng.gen()), Gf256(rng.gen()), Gf256(rng.gen()));
            assert_eq!(a * (b + c), a * b + a * c);
        }
    }

    #[test]
    fn rank_small_cases() {
        assert_eq!(CoefficientMatrix::identity(3).rank(), 3);
        let dup = CoefficientMatrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6], vec![1, 2, 3]]).unwrap();
        assert_eq!(dup.rank(), 2);
        assert_eq!(CoefficientMatrix::zeros(4, 5).rank(), 0);
        let wide = CoefficientMatrix::from_rows(&[vec![0, 0, 7, 1]]).unwrap();
        assert_eq!(wide.rank(), 1);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert_eq!(
            CoefficientMatrix::from_rows(&[vec![1, 2], vec![3]]),
            Err(GaloisError::RaggedRows)
        );
    }

    #[test]
    fn random_73_square_is_full_rank_at_expected_rate() {
        // Probability of full rank is prod_{i=1..73}(1 - 256^-i) ~ 0.9961.
        let expected: f64 = (1..=73).map(|i| 1.0 - 256f64.powi(-i)).product();
        assert!((expected - 0.99608).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let full = (0..1000).filter(|_| random_matrix(&mut rng, 73, 73).rank() == 73).count();
        // Binomial(1000, 0.0039): more than 12 failures has probability < 1e-3.
        assert!(full >= 988, "full-rank count {full}");
    }

    #[test]
    fn solve_identity_and_permutation() {
        let p = vec![vec![1u8, 2, 3], vec![4, 5, 6], vec![7, 8, 9]];
        assert_eq!(CoefficientMatrix::identity(3).solve(&p).unwrap(), p);

        let perm = CoefficientMatrix::from_rows(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).unwrap();
        let permuted = perm.apply(&p).unwrap();
        assert_eq!(permuted, vec![p[1].clone(), p[2].clone(), p[0].clone()]);
        assert_eq!(perm.solve(&permuted).unwrap(), p);
    }

    #[test]
    fn solve_random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut m = random_matrix(&mut rng, 10, 10);
        while m.rank() < 10 {
            m = random_matrix(&mut rng, 10, 10);
        }
        let sources: Vec<Vec<u8>> = (0..10).map(|_| (0..32).map(|_| rng.gen()).collect()).collect();
        let coded = m.apply(&sources).unwrap();
        assert_eq!(m.solve(&coded).unwrap(), sources);
    }

    #[test]
    fn solve_singular_errors() {
        let m = CoefficientMatrix::from_rows(&[vec![1, 2], vec![1, 2]]).unwrap();
        let err = m.solve(&[vec![0], vec![0]]).unwrap_err();
        assert_eq!(err, GaloisError::SingularMatrix { rank: 1, rows: 2 });
        let rect = CoefficientMatrix::zeros(2, 3);
        assert!(matches!(rect.solve(&[vec![], vec![]]), Err(GaloisError::NotSquare { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn rank_invariant_under_scaling_and_swaps(
                seed in any::<u64>(),
                rows in 1usize..9,
                cols in 1usize..9,
                scale_by in 1u8..=255,
                a in 0usize..9,
                b in 0usize..9,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_matrix(&mut rng, rows, cols);
                let r = m.rank();
                let mut t = m.clone();
                let (a, b) = (a % rows, b % rows);
                t.swap_rows(a, b);
                scale(t.row_mut(a), scale_by);
                prop_assert_eq!(t.rank(), r);
                prop_assert!(r <= rows.min(cols));
            }

            #[test]
            fn solve_inverts_apply(seed in any::<u64>(), n in 1usize..12, len in 0usize..20) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_matrix(&mut rng, n, n);
                prop_assume!(m.rank() == n);
                let sources: Vec<Vec<u8>> = (0..n).map(|_| (0..len).map(|_| rng.gen()).collect()).collect();
                let coded = m.apply(&sources).unwrap();
                prop_assert_eq!(m.solve(&coded).unwrap(), sources);
            }
        }
    }
}
