//! Structural privacy audit over real dispatched rounds.
//!
//! For each round every worker is sent one packet, so slot `j` goes to worker
//! `j - 1`. Then, for every set of `z` packets of the round:
//! the key-coefficient rows of `G` must form an invertible matrix, and
//! knowing `A` the keys must be recoverable from those packets exactly.
//! The pads of secure packets are pooled and tested for byte uniformity.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{MasterOptions, MasterState, PacketKind};
use crate::error::Result;
use crate::fountain;
use crate::gf256::FieldMatrix;
use crate::keycode::{self, KeyGenerator};

/// Shape of every key matrix used by the audit.
pub const AUDIT_KEY_COLS: usize = 64;

/// Significance level of the pad uniformity test.
pub const PAD_ALPHA: f64 = 0.001;

#[derive(Clone, Debug, PartialEq)]
pub enum AuditFailure {
    /// 1-based slots whose generator rows are linearly dependent.
    SingularSubset { round: u32, slots: Vec<usize> },
    /// The keys solved from these packets differ from the real keys.
    KeyMismatch { round: u32, slots: Vec<usize> },
    /// A key matrix already used in an earlier round.
    KeyReuse { round: u32, key_index: usize },
    PadNonUniform { p_value: f64 },
}

impl std::fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuditFailure::SingularSubset { round, slots } => {
                write!(f, "round {round}: packets at slots {slots:?} have singular key coefficients")
            }
            AuditFailure::KeyMismatch { round, slots } => {
                write!(f, "round {round}: keys solved from slots {slots:?} are wrong")
            }
            AuditFailure::KeyReuse { round, key_index } => {
                write!(f, "round {round}: key {key_index} was used before")
            }
            AuditFailure::PadNonUniform { p_value } => {
                write!(f, "pad bytes fail uniformity (p = {p_value:.3e})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub n: usize,
    pub z: usize,
    pub rounds: usize,
    pub subsets_checked: usize,
    pub keys_recovered: usize,
    pub pad_bytes: usize,
    pub pad_p_value: f64,
    pub failures: Vec<AuditFailure>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Audit `rounds` rounds of packets produced with generator `gen`.
pub fn audit_privacy(gen: &KeyGenerator, rounds: usize, seed: u64) -> Result<AuditReport> {
    let (n, z) = (gen.n(), gen.z());
    let b = 2;
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA0D1);
    let a = FieldMatrix::random(b, AUDIT_KEY_COLS, &mut data_rng);
    let mut opts = MasterOptions::new(n, z, b, seed);
    opts.generator = Some(gen.clone());
    let mut master = MasterState::new(&a, opts)?;

    let mut report = AuditReport {
        n,
        z,
        rounds,
        subsets_checked: 0,
        keys_recovered: 0,
        pad_bytes: 0,
        pad_p_value: 1.0,
        failures: Vec::new(),
    };
    let mut counts = [0u64; 256];
    let mut seen_keys: HashSet<Vec<u8>> = HashSet::new();

    for _ in 0..rounds {
        let packets: Vec<_> = (0..n).map(|w| master.next_packet(w)).collect::<Result<_>>()?;
        let round = packets[0].round;
        let keys = master.round_keys(round).expect("keys exist once dispatched").clone();
        for (i, k) in keys.keys.iter().enumerate() {
            if !seen_keys.insert(k.as_bytes().to_vec()) {
                report.failures.push(AuditFailure::KeyReuse { round, key_index: i + 1 });
            }
        }
        let truth = FieldMatrix::vstack(
            &keys
                .keys
                .iter()
                .map(|k| FieldMatrix::new(1, k.as_bytes().len(), k.as_bytes().to_vec()))
                .collect::<Result<Vec<_>>>()?,
        )?;

        // What a coalition knowing A can subtract: the information packet.
        let mut residuals = Vec::with_capacity(n);
        for p in &packets {
            let mut r = p.payload.clone();
            if let PacketKind::Secure { spec, .. } = &p.kind {
                r.add_assign(&fountain::encode(master.blocks(), spec)?)?;
                for &byte in r.as_bytes() {
                    counts[byte as usize] += 1;
                }
                report.pad_bytes += r.as_bytes().len();
            }
            residuals.push(r.into_bytes());
        }

        let mut round_failed = false;
        keycode::for_each_subset(n, z, |subset| {
            report.subsets_checked += 1;
            let slots: Vec<usize> = subset.iter().map(|s| s + 1).collect();
            let coeffs = gen.matrix().select_rows(subset).expect("rows in range");
            let Ok(inv) = coeffs.invert() else {
                report.failures.push(AuditFailure::SingularSubset { round, slots });
                round_failed = true;
                return false;
            };
            let rows: Vec<Vec<u8>> = subset.iter().map(|&s| residuals[s].clone()).collect();
            let solved = FieldMatrix::from_rows(&rows)
                .and_then(|res| inv.matmul(&res))
                .expect("conforming shapes");
            if solved != truth {
                report.failures.push(AuditFailure::KeyMismatch { round, slots });
                round_failed = true;
                return false;
            }
            report.keys_recovered += z;
            true
        });
        if round_failed {
            break;
        }
    }

    if report.failures.is_empty() && report.pad_bytes > 0 {
        let expected = report.pad_bytes as f64 / 256.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let chi = ChiSquared::new(255.0).expect("positive degrees of freedom");
        report.pad_p_value = chi.sf(stat);
        if report.pad_p_value < PAD_ALPHA {
            report.failures.push(AuditFailure::PadNonUniform { p_value: report.pad_p_value });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vandermonde_generators_pass() {
        for (n, z) in [(4, 2), (6, 5), (7, 3), (2, 1)] {
            let gen = KeyGenerator::build(n, z).unwrap();
            let r = audit_privacy(&gen, 16, 9).unwrap();
            assert!(r.passed(), "({n},{z}): {:?}", r.failures);
            assert_eq!(r.subsets_checked, 16 * binomial(n, z));
        }
    }

    #[test]
    fn example_generator_passes_six_subsets_per_round() {
        let g = FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 2]]).unwrap();
        let r = audit_privacy(&KeyGenerator::from_matrix(g).unwrap(), 1, 3).unwrap();
        assert!(r.passed());
        assert_eq!(r.subsets_checked, 6);
        assert_eq!(r.keys_recovered, 12);
    }

    #[test]
    fn duplicated_row_is_reported() {
        let g = FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 1]]).unwrap();
        let r = audit_privacy(&KeyGenerator::from_matrix(g).unwrap(), 4, 3).unwrap();
        assert_eq!(
            r.failures,
            vec![AuditFailure::SingularSubset { round: 1, slots: vec![3, 4] }]
        );
    }

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
}
