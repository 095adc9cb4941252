use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prac_core::fountain::{self, DegreeDistribution, PeelingDecoder};
use prac_core::keycode::{self, KeyGenerator};
use prac_core::prac::{hide_x_run, run_lockstep, GroupSpec, LockstepGroups};
use prac_core::simulate::{self, Scenario, SimConfig};
use prac_core::{FieldMatrix, MasterOptions};

// Row-by-row product with no table lookups.
fn naive_product(a: &FieldMatrix, x: &[u8]) -> Vec<u8> {
    (0..a.rows())
        .map(|r| a.row(r).iter().zip(x).fold(0, |acc, (&p, &q)| acc ^ prac_core::gf256::mul_bitserial(p, q)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lockstep_recovers_product(n in 2usize..9, zf in 0.0f64..1.0, b in 1usize..24, extra in 0usize..3,
                                 ell in 1usize..12, seed: u64, order: u64) {
        let z = 1 + (zf * (n - 1) as f64) as usize % (n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FieldMatrix::random(b * (1 + extra), ell, &mut rng);
        let x: Vec<u8> = (0..ell).map(|_| rng.random()).collect();
        let run = run_lockstep(&a, &x, MasterOptions::new(n, z, b, seed), order).unwrap();
        prop_assert_eq!(run.output.as_bytes().to_vec(), naive_product(&a, &x));
        prop_assert!(run.packets_sent >= b + z);
    }

    #[test]
    fn peeling_needs_b_packets(b in 1usize..200, seed: u64) {
        let dist = DegreeDistribution::with_defaults(b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dec = PeelingDecoder::new(b, 1);
        let mut used = 0;
        while !dec.is_complete() {
            let spec = fountain::sample_spec(&dist, &mut rng);
            dec.ingest(&spec, &[0]).unwrap();
            used += 1;
            prop_assert!(dec.recovered_count() <= used);
        }
        prop_assert!(used >= b);
    }

    #[test]
    fn generator_is_mds(n in 2usize..16, zf in 0.0f64..1.0) {
        let z = 1 + (zf * (n - 1) as f64) as usize % (n - 1);
        let g = KeyGenerator::build(n, z).unwrap();
        prop_assert!(keycode::mds_audit(g.matrix()).is_ok());
        // Systematic: the first z rows are the identity.
        prop_assert_eq!(g.matrix().select_rows(&(0..z).collect::<Vec<_>>()).unwrap(), FieldMatrix::identity(z));
    }

    #[test]
    fn hide_x_is_exact(rows in 1usize..20, cols in 1usize..16, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FieldMatrix::random(rows, cols, &mut rng);
        let x: Vec<u8> = (0..cols).map(|_| rng.random()).collect();
        let specs = [GroupSpec { n: 3, z: 1 }, GroupSpec { n: 4, z: 2 }];
        let mut groups = LockstepGroups::new(rows, seed);
        let out = hide_x_run(&a, &x, specs, &mut groups, &mut rng).unwrap();
        prop_assert_eq!(out.as_bytes().to_vec(), naive_product(&a, &x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_runs_respect_gating(n in 3usize..12, zf in 0.0f64..1.0, b in 2usize..40, seed: u64) {
        let z = 1 + (zf * (n - 2) as f64) as usize % (n - 2).max(1);
        let mut c = SimConfig::new(n, z, b, Scenario::Three, seed);
        c.ell = 8;
        let o = simulate::run_adaptive(&c, seed, &(0..n).collect::<Vec<_>>(), z, true).unwrap();
        prop_assert!(o.is_correct());
        let trace = o.trace.as_ref().unwrap();
        prop_assert!(simulate::check_gating(trace, z, o.completion_time, o.max_consumed_round).is_ok());
        prop_assert!(simulate::check_causality(trace).is_ok());
        prop_assert!(o.completion_time > 0.0);
    }
}
