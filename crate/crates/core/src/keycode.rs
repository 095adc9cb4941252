//! Per-round random keys and their systematic (n, z) MDS encoding.
//!
//! Row `j` of the generator `G` (1-based, as slots are) says how the pad of
//! the `j`-th packet of a round mixes that round's `z` keys. Rows `1..=z` are
//! the identity, so the first `z` arrivals at a round receive the raw keys.

use rand::Rng;

use crate::error::{domain, Result};
use crate::gf256::{self, FieldMatrix};

/// Systematic generator of an (n, z) MDS code over GF(2^8).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyGenerator {
    n: usize,
    z: usize,
    g: FieldMatrix,
}

impl KeyGenerator {
    /// Vandermonde matrix on evaluation points 1..=n, right-multiplied by the
    /// inverse of its top `z x z` block.
    pub fn build(n: usize, z: usize) -> Result<Self> {
        if z == 0 || z >= n {
            return Err(domain(format!("need 0 < z < n, got n={n}, z={z}")));
        }
        if n > 255 {
            return Err(domain(format!("n={n} exceeds the 255 distinct nonzero field points")));
        }
        let vandermonde = FieldMatrix::from_fn(n, z, |r, c| gf256::pow(r as u8 + 1, c as u32));
        let top = vandermonde.select_rows(&(0..z).collect::<Vec<_>>())?;
        let g = vandermonde.matmul(&top.invert()?)?;
        Ok(KeyGenerator { n, z, g })
    }

    /// Wrap an explicit generator after checking it is systematic. The MDS
    /// property is not checked here; see [`mds_audit`].
    pub fn from_matrix(g: FieldMatrix) -> Result<Self> {
        let (n, z) = g.shape();
        if z == 0 || z >= n {
            return Err(domain(format!("generator shape {n}x{z} needs 0 < z < n")));
        }
        for r in 0..z {
            for c in 0..z {
                if g.get(r, c) != (r == c) as u8 {
                    return Err(domain("generator is not systematic: top block is not the identity"));
                }
            }
        }
        Ok(KeyGenerator { n, z, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.g
    }

    /// Coefficients of 1-based row `j`.
    pub fn row(&self, j: usize) -> Result<&[u8]> {
        if j == 0 || j > self.n {
            return Err(domain(format!("generator row {j} out of range 1..={}", self.n)));
        }
        Ok(self.g.row(j - 1))
    }

    /// `sum_i G[j,i] * R_i`: the pad for the `j`-th packet of a round.
    pub fn encode_key_row(&self, j: usize, keys: &RoundKeys) -> Result<FieldMatrix> {
        let coeffs = self.row(j)?;
        if keys.keys.len() != self.z {
            return Err(domain(format!("expected {} keys, got {}", self.z, keys.keys.len())));
        }
        let (r, c) = keys.keys[0].shape();
        let mut out = FieldMatrix::zeros(r, c);
        for (k, &coef) in keys.keys.iter().zip(coeffs) {
            out.add_scaled(k, coef)?;
        }
        Ok(out)
    }

    /// `sum_i G[j,i] * (R_i x)` from the z returned key products, which by
    /// linearity equals `(g_j R) x`.
    pub fn combine_key_results(&self, j: usize, key_results: &[&[u8]]) -> Result<Vec<u8>> {
        let coeffs = self.row(j)?;
        if key_results.len() != self.z {
            return Err(domain(format!(
                "expected {} key results, got {}",
                self.z,
                key_results.len()
            )));
        }
        let len = key_results[0].len();
        if key_results.iter().any(|r| r.len() != len) {
            return Err(domain("key results differ in length"));
        }
        let mut out = vec![0u8; len];
        for (res, &coef) in key_results.iter().zip(coeffs) {
            gf256::mul_acc(&mut out, res, coef);
        }
        Ok(out)
    }
}

/// The `z` fresh keys of one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundKeys {
    pub round: u32,
    pub keys: Vec<FieldMatrix>,
}

impl RoundKeys {
    pub fn key(&self, index: usize) -> Option<&FieldMatrix> {
        index.checked_sub(1).and_then(|i| self.keys.get(i))
    }
}

/// `z` independent uniform matrices of shape `rows x cols`.
pub fn fresh_round_keys<R: Rng + ?Sized>(
    round: u32,
    z: usize,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<RoundKeys> {
    if rows == 0 || cols == 0 {
        return Err(domain("key dimensions must be positive"));
    }
    Ok(RoundKeys {
        round,
        keys: (0..z).map(|_| FieldMatrix::random(rows, cols, rng)).collect(),
    })
}

/// Calls `f` with every k-subset of `0..n`, in lexicographic order, until it
/// returns `false`.
pub fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

/// Checks that every `z x z` row-submatrix of `G` is invertible. On failure
/// returns the first offending subset as 1-based row numbers.
pub fn mds_audit(g: &FieldMatrix) -> std::result::Result<usize, Vec<usize>> {
    let (n, z) = g.shape();
    let mut checked = 0;
    let mut failure = None;
    for_each_subset(n, z, |rows| {
        let sub = g.select_rows(rows).expect("subset rows in range");
        if sub.invert().is_err() {
            failure = Some(rows.iter().map(|r| r + 1).collect());
            return false;
        }
        checked += 1;
        true
    });
    match failure {
        Some(rows) => Err(rows),
        None => Ok(checked),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_generator() -> KeyGenerator {
        KeyGenerator::from_matrix(
            FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 2]]).unwrap(),
        )
        .unwrap()
    }

    // Determinant by cofactor expansion: an elimination-free oracle.
    fn det(m: &FieldMatrix) -> u8 {
        let n = m.rows();
        if n == 1 {
            return m.get(0, 0);
        }
        let mut acc = 0u8;
        for c in 0..n {
            let minor = FieldMatrix::from_fn(n - 1, n - 1, |r, cc| {
                m.get(r + 1, if cc < c { cc } else { cc + 1 })
            });
            // Signs vanish in characteristic 2.
            acc ^= gf256::mul(m.get(0, c), det(&minor));
        }
        acc
    }

    #[test]
    fn build_rejects_bad_parameters() {
        assert!(KeyGenerator::build(4, 0).is_err());
        assert!(KeyGenerator::build(4, 4).is_err());
        assert!(KeyGenerator::build(256, 3).is_err());
        assert!(KeyGenerator::build(255, 3).is_ok());
    }

    #[test]
    fn two_one_generator() {
        let g = KeyGenerator::build(2, 1).unwrap();
        assert_eq!(g.matrix().as_bytes(), &[1, 1]);
    }

    #[test]
    fn example_generator_passes_audit() {
        let g = example_generator();
        assert_eq!(mds_audit(g.matrix()), Ok(6));
    }

    #[test]
    fn built_generators_are_systematic_and_mds_by_determinant() {
        for n in 2..=12 {
            for z in 1..=4.min(n - 1) {
                let g = KeyGenerator::build(n, z).unwrap();
                for r in 0..z {
                    for c in 0..z {
                        assert_eq!(g.matrix().get(r, c), (r == c) as u8);
                    }
                }
                for_each_subset(n, z, |rows| {
                    let sub = g.matrix().select_rows(rows).unwrap();
                    assert_ne!(det(&sub), 0, "n={n} z={z} rows={rows:?}");
                    true
                });
            }
        }
    }

    #[test]
    fn duplicated_row_fails_audit() {
        let g = FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(mds_audit(&g), Err(vec![3, 4]));
    }

    #[test]
    fn subset_enumeration_counts() {
        let mut count = 0;
        for_each_subset(7, 3, |s| {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            count += 1;
            true
        });
        assert_eq!(count, 35);
        let mut zero = 0;
        for_each_subset(3, 0, |_| {
            zero += 1;
            true
        });
        assert_eq!(zero, 1);
    }

    #[test]
    fn key_rows_match_example() {
        let g = example_generator();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let keys = fresh_round_keys(1, 2, 3, 4, &mut rng).unwrap();
        let (r1, r2) = (&keys.keys[0], &keys.keys[1]);
        assert_eq!(&g.encode_key_row(1, &keys).unwrap(), r1);
        assert_eq!(&g.encode_key_row(2, &keys).unwrap(), r2);
        assert_eq!(g.encode_key_row(3, &keys).unwrap(), r1.sum(r2).unwrap());
        let mut r1_2r2 = r1.clone();
        r1_2r2.add_scaled(r2, 0x02).unwrap();
        assert_eq!(g.encode_key_row(4, &keys).unwrap(), r1_2r2);
        assert!(g.encode_key_row(0, &keys).is_err());
        assert!(g.encode_key_row(5, &keys).is_err());
    }

    #[test]
    fn fresh_keys_shape_count_and_independence() {
        let mut a = ChaCha8Rng::seed_from_u64(10);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let ka = fresh_round_keys(1, 1, 4, 8, &mut a).unwrap();
        let kb = fresh_round_keys(1, 1, 4, 8, &mut b).unwrap();
        assert_eq!(ka.keys.len(), 1);
        assert_eq!(ka.keys[0].shape(), (4, 8));
        assert_ne!(ka, kb);
        assert!(fresh_round_keys(1, 2, 0, 8, &mut a).is_err());
    }

    #[test]
    fn key_bytes_uniform_by_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = [0u64; 256];
        let mut total = 0u64;
        while total < 1_000_000 {
            let keys = fresh_round_keys(0, 4, 50, 50, &mut rng).unwrap();
            for k in &keys.keys {
                for &b in k.as_bytes() {
                    counts[b as usize] += 1;
                }
                total += k.as_bytes().len() as u64;
            }
        }
        let e = total as f64 / 256.0;
        let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        let crit = ChiSquared::new(255.0).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn combine_matches_padded_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = KeyGenerator::build(7, 3).unwrap();
        for _ in 0..100 {
            let keys = fresh_round_keys(0, 3, 4, 6, &mut rng).unwrap();
            let x = FieldMatrix::random(6, 1, &mut rng);
            let products: Vec<Vec<u8>> = keys
                .keys
                .iter()
                .map(|k| k.mat_vec_mul(&x).unwrap().into_bytes())
                .collect();
            let refs: Vec<&[u8]> = products.iter().map(Vec::as_slice).collect();
            for j in 1..=7 {
                let want = g.encode_key_row(j, &keys).unwrap().mat_vec_mul(&x).unwrap();
                assert_eq!(g.combine_key_results(j, &refs).unwrap(), want.into_bytes());
            }
            assert_eq!(g.combine_key_results(2, &refs).unwrap(), products[1]);
        }
    }

    #[test]
    fn combine_edge_cases() {
        let g = KeyGenerator::build(4, 2).unwrap();
        let zeros = [0u8; 5];
        assert_eq!(g.combine_key_results(4, &[&zeros, &zeros]).unwrap(), vec![0; 5]);
        assert!(g.combine_key_results(4, &[&zeros]).is_err());
        assert!(g.combine_key_results(4, &[&zeros, &zeros[..3]]).is_err());
    }

    #[test]
    fn padded_packet_is_uniform_over_key_randomness() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        // A fixed information packet plus the row-4 pad, byte histogram over
        // 10^5 independent key draws.
        let g = KeyGenerator::build(4, 2).unwrap();
        let nu = FieldMatrix::from_rows(&[vec![0x00, 0x01], vec![0xFE, 0x42]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut counts = [0u64; 256];
        for _ in 0..100_000 {
            let keys = fresh_round_keys(0, 2, 2, 2, &mut rng).unwrap();
            let s = nu.sum(&g.encode_key_row(4, &keys).unwrap()).unwrap();
            counts[s.get(0, 0) as usize] += 1;
        }
        let e = 100_000.0 / 256.0;
        let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(stat < ChiSquared::new(255.0).unwrap().inverse_cdf(0.99));
    }
}
