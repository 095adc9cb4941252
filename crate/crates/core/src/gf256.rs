//! Arithmetic and dense linear algebra over GF(2^8).
//!
//! Elements are bytes reduced modulo the AES polynomial
//! x^8 + x^4 + x^3 + x + 1 (0x11B). Addition is XOR, so padding a packet with
//! a key is a literal one-time pad. Multiplication goes through a 64 KiB
//! product table derived from log/antilog tables, built once on first use.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{domain, Error, Result};

/// Reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11B;

/// 0x03 generates the multiplicative group under 0x11B (0x02 does not).
const GENERATOR: u8 = 0x03;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
    mul: Vec<u8>,
    inv: [u8; 256],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

/// Carry-less multiply followed by reduction, one bit at a time.
pub fn mul_bitserial(a: u8, b: u8) -> u8 {
    let mut a = a as u16;
    let mut b = b;
    let mut acc = 0u16;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= POLY;
        }
        b >>= 1;
    }
    acc as u8
}

fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x = 1u8;
    for i in 0..255 {
        exp[i] = x;
        log[x as usize] = i as u8;
        x = mul_bitserial(x, GENERATOR);
    }
    for i in 255..512 {
        exp[i] = exp[i - 255];
    }
    let mut mul = vec![0u8; 256 * 256];
    for a in 1..256usize {
        for b in 1..256usize {
            mul[a * 256 + b] = exp[log[a] as usize + log[b] as usize];
        }
    }
    let mut inv = [0u8; 256];
    for a in 1..256usize {
        inv[a] = exp[255 - log[a] as usize];
    }
    Tables { exp, log, mul, inv }
}

/// Field addition (XOR).
#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    tables().mul[(a as usize) << 8 | b as usize]
}

/// Multiplicative inverse; zero is outside the domain.
pub fn inv(a: u8) -> Result<u8> {
    if a == 0 {
        return Err(Error::ZeroInverse);
    }
    Ok(tables().inv[a as usize])
}

/// `g^k` for the fixed group generator.
pub fn exp(k: usize) -> u8 {
    tables().exp[k % 255]
}

/// Discrete log base the group generator; zero has none.
pub fn log(a: u8) -> Option<u8> {
    (a != 0).then(|| tables().log[a as usize])
}

/// `a^e` by repeated squaring over the table multiply.
pub fn pow(a: u8, mut e: u32) -> u8 {
    let mut base = a;
    let mut acc = 1u8;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        e >>= 1;
    }
    acc
}

/// `dst[i] ^= c * src[i]`, the kernel behind every product and elimination.
#[inline]
pub fn mul_acc(dst: &mut [u8], src: &[u8], c: u8) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => {
            let row = &tables().mul[(c as usize) << 8..((c as usize) << 8) + 256];
            dst.iter_mut()
                .zip(src)
                .for_each(|(d, &s)| *d ^= row[s as usize]);
        }
    }
}

/// `buf[i] = c * buf[i]`.
pub fn scale_in_place(buf: &mut [u8], c: u8) {
    let row = &tables().mul[(c as usize) << 8..((c as usize) << 8) + 256];
    buf.iter_mut().for_each(|b| *b = row[*b as usize]);
}

/// Inner product of two equal-length byte vectors.
#[inline]
pub fn dot(a: &[u8], b: &[u8]) -> u8 {
    let t = &tables().mul;
    a.iter()
        .zip(b)
        .fold(0u8, |acc, (&x, &y)| acc ^ t[(x as usize) << 8 | y as usize])
}

/// A single element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn inv(self) -> Result<FieldElement> {
        inv(self.0).map(FieldElement)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        FieldElement(v)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: Self) -> Self {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

// Characteristic 2: subtraction and addition coincide.
impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: Self) -> Self {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: Self) -> Self {
        FieldElement(mul(self.0, rhs.0))
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        self.0 = mul(self.0, rhs.0);
    }
}

impl Div for FieldElement {
    type Output = Result<FieldElement>;
    fn div(self, rhs: Self) -> Result<FieldElement> {
        Ok(self * rhs.inv()?)
    }
}

/// Dense row-major matrix over GF(2^8). Column vectors are `n x 1` matrices.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FieldMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = self.row(r);
            let shown: Vec<String> = row.iter().take(16).map(|b| format!("{b:02x}")).collect();
            writeln!(
                f,
                "  {}{}",
                shown.join(" "),
                if row.len() > 16 { " .." } else { "" }
            )?;
        }
        if self.rows > 8 {
            writeln!(f, "  ..")?;
        }
        write!(f, "]")
    }
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(domain(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(FieldMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Entries drawn independently and uniformly from the field.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut data = vec![0u8; rows * cols];
        rng.fill_bytes(&mut data);
        FieldMatrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        FieldMatrix { rows, cols, data }
    }

    pub fn column(values: Vec<u8>) -> Self {
        FieldMatrix {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(domain("ragged rows"));
        }
        Ok(FieldMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    /// `self += other` entrywise.
    pub fn add_assign(&mut self, other: &FieldMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a ^= b);
        Ok(())
    }

    /// `self += c * other` entrywise.
    pub fn add_scaled(&mut self, other: &FieldMatrix, c: u8) -> Result<()> {
        self.check_same_shape(other)?;
        mul_acc(&mut self.data, &other.data, c);
        Ok(())
    }

    pub fn sum(&self, other: &FieldMatrix) -> Result<FieldMatrix> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    fn check_same_shape(&self, other: &FieldMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(domain(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Matrix-vector product; `v` must be a single column with `self.cols` rows.
    pub fn mat_vec_mul(&self, v: &FieldMatrix) -> Result<FieldMatrix> {
        if v.cols != 1 || v.rows != self.cols {
            return Err(domain(format!(
                "cannot multiply {:?} by vector of shape {:?}",
                self.shape(),
                v.shape()
            )));
        }
        Ok(FieldMatrix::column(self.mul_slice(&v.data)))
    }

    /// Product with a raw vector of length `cols`, for hot paths that already
    /// hold the vector as bytes.
    pub fn mul_slice(&self, v: &[u8]) -> Vec<u8> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn matmul(&self, other: &FieldMatrix) -> Result<FieldMatrix> {
        if self.cols != other.rows {
            return Err(domain(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = FieldMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let c = self.get(r, k);
                if c != 0 {
                    let src = other.row(k);
                    mul_acc(
                        &mut out.data[r * other.cols..(r + 1) * other.cols],
                        src,
                        c,
                    );
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> FieldMatrix {
        FieldMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Gauss-Jordan inverse with first-nonzero pivoting.
    pub fn invert(&self) -> Result<FieldMatrix> {
        if self.rows != self.cols {
            return Err(domain(format!(
                "cannot invert non-square {:?}",
                self.shape()
            )));
        }
        let n = self.rows;
        let mut work = self.clone();
        let mut out = FieldMatrix::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| work.get(r, col) != 0)
                .ok_or(Error::Singular { column: col })?;
            if pivot != col {
                work.swap_rows(pivot, col);
                out.swap_rows(pivot, col);
            }
            let scale = inv(work.get(col, col))?;
            scale_in_place(work.row_mut(col), scale);
            scale_in_place(out.row_mut(col), scale);
            let pivot_work = work.row(col).to_vec();
            let pivot_out = out.row(col).to_vec();
            for r in 0..n {
                if r != col {
                    let f = work.get(r, col);
                    if f != 0 {
                        mul_acc(work.row_mut(r), &pivot_work, f);
                        mul_acc(out.row_mut(r), &pivot_out, f);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Rank by forward elimination.
    pub fn rank(&self) -> usize {
        let mut work = self.clone();
        let mut rank = 0;
        for col in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(pivot) = (rank..self.rows).find(|&r| work.get(r, col) != 0) else {
                continue;
            };
            work.swap_rows(pivot, rank);
            let s = inv(work.get(rank, col)).expect("pivot is nonzero");
            scale_in_place(work.row_mut(rank), s);
            let p = work.row(rank).to_vec();
            for r in rank + 1..self.rows {
                let f = work.get(r, col);
                if f != 0 {
                    mul_acc(work.row_mut(r), &p, f);
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let cols = self.cols;
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * cols);
        head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<FieldMatrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(domain(format!("row {i} out of range (rows = {})", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(FieldMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Split into `blocks` equal horizontal slices, zero-padding the bottom
    /// when `blocks` does not divide the row count.
    pub fn split_rows(&self, blocks: usize) -> Result<Vec<FieldMatrix>> {
        if blocks == 0 {
            return Err(domain("block count must be positive"));
        }
        let per = self.rows.div_ceil(blocks).max(1);
        let mut padded = self.data.clone();
        padded.resize(per * blocks * self.cols, 0);
        Ok(padded
            .chunks(per * self.cols)
            .map(|chunk| FieldMatrix {
                rows: per,
                cols: self.cols,
                data: chunk.to_vec(),
            })
            .collect())
    }

    /// Stack matrices vertically; all must share a column count.
    pub fn vstack(parts: &[FieldMatrix]) -> Result<FieldMatrix> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(domain("vstack: column counts differ"));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(FieldMatrix { rows, cols, data })
    }

    /// First `rows` rows.
    pub fn truncate_rows(mut self, rows: usize) -> FieldMatrix {
        let rows = rows.min(self.rows);
        self.data.truncate(rows * self.cols);
        self.rows = rows;
        self
    }

    /// rows (u32 BE), cols (u32 BE), then row-major bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.data.len());
        self.write_bytes(&mut out);
        out
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.rows as u32).to_be_bytes());
        out.extend_from_slice(&(self.cols as u32).to_be_bytes());
        out.extend_from_slice(&self.data);
    }

    /// Parse one serialized matrix from the front of `buf`, returning it and
    /// the number of bytes consumed.
    pub fn read_bytes(buf: &[u8]) -> Result<(FieldMatrix, usize)> {
        if buf.len() < 8 {
            return Err(domain("matrix header truncated"));
        }
        let rows = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
        let cols = u32::from_be_bytes(buf[4..8].try_into().unwrap()) as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| domain("matrix dimensions overflow"))?;
        if buf.len() - 8 < len {
            return Err(domain(format!(
                "matrix body truncated: need {len} bytes, have {}",
                buf.len() - 8
            )));
        }
        Ok((
            FieldMatrix {
                rows,
                cols,
                data: buf[8..8 + len].to_vec(),
            },
            8 + len,
        ))
    }

    pub fn from_bytes(buf: &[u8]) -> Result<FieldMatrix> {
        let (m, used) = Self::read_bytes(buf)?;
        if used != buf.len() {
            return Err(domain(format!("{} trailing bytes after matrix", buf.len() - used)));
        }
        Ok(m)
    }
}

/// Free-function form of [`FieldMatrix::mat_vec_mul`].
pub fn mat_vec_mul(m: &FieldMatrix, v: &FieldMatrix) -> Result<FieldMatrix> {
    m.mat_vec_mul(v)
}

/// Free-function form of [`FieldMatrix::invert`].
pub fn invert(m: &FieldMatrix) -> Result<FieldMatrix> {
    m.invert()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Independent oracle: schoolbook polynomial product, then long division.
    fn mul_oracle(a: u8, b: u8) -> u8 {
        let mut prod = 0u16;
        for i in 0..8 {
            if b >> i & 1 == 1 {
                prod ^= (a as u16) << i;
            }
        }
        for bit in (8..16).rev() {
            if prod >> bit & 1 == 1 {
                prod ^= POLY << (bit - 8);
            }
        }
        prod as u8
    }

    fn mat_vec_oracle(m: &FieldMatrix, v: &[u8]) -> Vec<u8> {
        (0..m.rows())
            .map(|r| {
                let mut acc = 0u8;
                for c in 0..m.cols() {
                    acc ^= mul_oracle(m.get(r, c), v[c]);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn addition_examples() {
        assert_eq!(add(0x00, 0x57), 0x57);
        assert_eq!(add(0x57, 0x57), 0x00);
        assert_eq!(add(0x53, 0xCA), 0x53 ^ 0xCA);
        assert_eq!(add(0x53, 0xCA), 0x99);
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(mul(0x01, 0xAB), 0xAB);
        assert_eq!(mul(0x00, 0xAB), 0x00);
        // The oracle gives 0x01 here: 0x53 and 0xCA are inverses under 0x11B.
        assert_eq!(mul_oracle(0x53, 0xCA), 0x01);
        assert_eq!(mul(0x53, 0xCA), mul_oracle(0x53, 0xCA));
        // FIPS-197 worked example.
        assert_eq!(mul(0x57, 0x83), 0xC1);
    }

    #[test]
    fn table_matches_oracle_exhaustively() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), mul_oracle(a, b), "{a:#x}*{b:#x}");
                assert_eq!(mul_bitserial(a, b), mul_oracle(a, b));
            }
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inv(0x01).unwrap(), 0x01);
        assert!(matches!(inv(0x00), Err(Error::ZeroInverse)));
        for a in 1..=255u8 {
            let b = inv(a).unwrap();
            assert_eq!(mul(a, b), 1);
            assert_eq!(inv(b).unwrap(), a);
        }
    }

    #[test]
    fn generator_has_full_order() {
        let mut seen = [false; 256];
        for k in 0..255 {
            seen[exp(k) as usize] = true;
        }
        assert_eq!(seen.iter().filter(|&&s| s).count(), 255);
        assert_eq!(pow(GENERATOR, 255), 1);
    }

    #[test]
    fn field_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let (a, b, c): (u8, u8, u8) = (rng.random(), rng.random(), rng.random());
            let (fa, fb, fc) = (FieldElement(a), FieldElement(b), FieldElement(c));
            assert_eq!((fa + fb) + fc, fa + (fb + fc));
            assert_eq!(fa * (fb + fc), fa * fb + fa * fc);
            assert_eq!((fa * fb) * fc, fa * (fb * fc));
            assert_eq!(fa * fb, fb * fa);
        }
    }

    #[test]
    fn mat_vec_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = FieldMatrix::random(5, 1, &mut rng);
        assert_eq!(FieldMatrix::identity(5).mat_vec_mul(&v).unwrap(), v);
        assert!(FieldMatrix::zeros(3, 5).mat_vec_mul(&v).unwrap().is_zero());
    }

    #[test]
    fn mat_vec_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let m = FieldMatrix::random(4, 3, &mut rng);
            let v = FieldMatrix::random(3, 1, &mut rng);
            let got = m.mat_vec_mul(&v).unwrap();
            assert_eq!(got.as_bytes(), mat_vec_oracle(&m, v.as_bytes()).as_slice());
        }
    }

    #[test]
    fn mat_vec_shape_errors() {
        let m = FieldMatrix::zeros(4, 3);
        assert!(matches!(m.mat_vec_mul(&FieldMatrix::zeros(4, 1)), Err(Error::Domain(_))));
        assert!(matches!(m.mat_vec_mul(&FieldMatrix::zeros(3, 2)), Err(Error::Domain(_))));
    }

    #[test]
    fn mat_vec_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = FieldMatrix::random(6, 9, &mut rng);
            let u = FieldMatrix::random(9, 1, &mut rng);
            let v = FieldMatrix::random(9, 1, &mut rng);
            let lhs = m.mat_vec_mul(&u.sum(&v).unwrap()).unwrap();
            let rhs = m
                .mat_vec_mul(&u)
                .unwrap()
                .sum(&m.mat_vec_mul(&v).unwrap())
                .unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn product_associates_with_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = FieldMatrix::random(5, 4, &mut rng);
        let n = FieldMatrix::random(4, 7, &mut rng);
        let v = FieldMatrix::random(7, 1, &mut rng);
        let lhs = m.matmul(&n).unwrap().mat_vec_mul(&v).unwrap();
        let rhs = m.mat_vec_mul(&n.mat_vec_mul(&v).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn invert_identity_and_diagonal() {
        assert_eq!(
            FieldMatrix::identity(4).invert().unwrap(),
            FieldMatrix::identity(4)
        );
        let d = FieldMatrix::from_fn(3, 3, |r, c| if r == c { (r as u8 + 2) * 7 } else { 0 });
        let di = d.invert().unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { inv(d.get(r, r)).unwrap() } else { 0 };
                assert_eq!(di.get(r, c), want);
            }
        }
    }

    #[test]
    fn invert_random_matrices_both_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.random_range(1..=8);
            let m = FieldMatrix::random(n, n, &mut rng);
            let Ok(mi) = m.invert() else { continue };
            assert_eq!(m.matmul(&mi).unwrap(), FieldMatrix::identity(n));
            assert_eq!(mi.matmul(&m).unwrap(), FieldMatrix::identity(n));
            checked += 1;
        }
    }

    #[test]
    fn invert_reports_singular_column() {
        let m = FieldMatrix::from_rows(&[vec![1, 2, 3], vec![2, 4, 6], vec![0, 0, 1]]).unwrap();
        // Row 1 = 2 * row 0 over the field, so elimination stalls in column 1.
        assert_eq!(mul(2, 3), 6);
        assert!(matches!(m.invert(), Err(Error::Singular { column: 1 })));
        assert!(matches!(FieldMatrix::zeros(2, 3).invert(), Err(Error::Domain(_))));
    }

    #[test]
    fn rank_counts_independent_rows() {
        let m = FieldMatrix::from_rows(&[vec![1, 2, 3], vec![2, 4, 6], vec![0, 0, 1]]).unwrap();
        assert_eq!(m.rank(), 2);
        assert_eq!(FieldMatrix::identity(5).rank(), 5);
    }

    #[test]
    fn serialization_layout() {
        let m = FieldMatrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        assert_eq!(
            m.to_bytes(),
            vec![0, 0, 0, 2, 0, 0, 0, 3, 1, 2, 3, 4, 5, 6]
        );
        assert_eq!(FieldMatrix::from_bytes(&m.to_bytes()).unwrap(), m);
        assert!(FieldMatrix::from_bytes(&[0, 0, 0, 2, 0, 0, 0, 3, 1]).is_err());
    }

    #[test]
    fn split_rows_pads_with_zeros() {
        let m = FieldMatrix::from_fn(5, 2, |r, c| (r * 2 + c + 1) as u8);
        let blocks = m.split_rows(3).unwrap();
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|b| b.shape() == (2, 2)));
        assert_eq!(blocks[2].row(1), &[0, 0]);
        let back = FieldMatrix::vstack(&blocks).unwrap().truncate_rows(5);
        assert_eq!(back, m);
    }

    proptest::proptest! {
        #[test]
        fn serialization_round_trips(rows in 0usize..6, cols in 0usize..6, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = FieldMatrix::random(rows, cols, &mut rng);
            proptest::prop_assert_eq!(FieldMatrix::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }
}
