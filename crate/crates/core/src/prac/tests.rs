use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gf256;

fn example_generator() -> KeyGenerator {
    KeyGenerator::from_matrix(
        FieldMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 2]]).unwrap(),
    )
    .unwrap()
}

fn direct(a: &FieldMatrix, x: &[u8]) -> FieldMatrix {
    FieldMatrix::column(
        (0..a.rows())
            .map(|r| a.row(r).iter().zip(x).fold(0, |acc, (&p, &q)| acc ^ gf256::mul(p, q)))
            .collect(),
    )
}

fn result_for(p: &Packet, x: &[u8]) -> ResultMsg {
    ResultMsg {
        worker: p.worker,
        round: p.round,
        slot: p.slot,
        result: compute(&p.payload, x),
        service_sample: None,
    }
}

fn spec(ix: &[u32], b: usize) -> FountainSpec {
    FountainSpec::new(ix.to_vec(), b).unwrap()
}

#[test]
fn three_worker_first_slot() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = FieldMatrix::random(3, 5, &mut rng);
    let mut m = MasterState::new(&a, MasterOptions::new(3, 1, 3, 4)).unwrap();
    m.queue_specs([spec(&[0, 2], 3), spec(&[2], 3)]);
    let p: Vec<_> = (0..3).map(|w| m.next_packet(w).unwrap()).collect();
    let keys = m.round_keys(1).unwrap().clone();
    assert_eq!(p[0].kind, PacketKind::Key { key_index: 1 });
    assert_eq!(p[0].payload, keys.keys[0]);
    let mut want = a.row(0).iter().zip(a.row(2)).map(|(x, y)| x ^ y).collect::<Vec<_>>();
    want.iter_mut().zip(keys.keys[0].as_bytes()).for_each(|(w, k)| *w ^= k);
    assert_eq!(p[1].payload.as_bytes(), &want[..]);
    let want: Vec<u8> = a.row(2).iter().zip(keys.keys[0].as_bytes()).map(|(x, k)| x ^ k).collect();
    assert_eq!(p[2].payload.as_bytes(), &want[..]);
    assert!(p.iter().all(|p| p.round == 1));
    assert_eq!(p.iter().map(|p| p.slot).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn secure_pads_follow_generator_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = FieldMatrix::random(6, 4, &mut rng);
    let mut opts = MasterOptions::new(4, 2, 6, 5);
    opts.generator = Some(example_generator());
    let mut m = MasterState::new(&a, opts).unwrap();
    m.queue_specs([spec(&[3], 6), spec(&[2, 3, 5], 6)]);
    let p: Vec<_> = (0..4).map(|w| m.next_packet(w).unwrap()).collect();
    let k = &m.round_keys(1).unwrap().keys;
    let mut pad3 = k[0].clone();
    pad3.add_assign(&k[1]).unwrap();
    let mut pad4 = k[0].clone();
    pad4.add_scaled(&k[1], 0x02).unwrap();
    let mut s3 = m.blocks()[3].clone();
    s3.add_assign(&pad3).unwrap();
    let mut s4 = fountain::encode(m.blocks(), &spec(&[2, 3, 5], 6)).unwrap();
    s4.add_assign(&pad4).unwrap();
    assert_eq!(p[2].payload, s3);
    assert_eq!(p[3].payload, s4);
    assert_eq!(p[3].kind, PacketKind::Secure { spec: spec(&[2, 3, 5], 6), g_row: 4 });
}

#[test]
fn z_n_minus_one_has_one_secure_per_round() {
    let a = FieldMatrix::random(8, 3, &mut ChaCha8Rng::seed_from_u64(3));
    let mut m = MasterState::new(&a, MasterOptions::new(5, 4, 4, 1)).unwrap();
    for _ in 0..3 {
        let secure = (0..5).filter(|&w| !m.next_packet(w).unwrap().is_key()).count();
        assert_eq!(secure, 1);
    }
    assert_eq!(m.rounds_keyed(), 3);
}

#[test]
fn keys_fresh_per_round() {
    let a = FieldMatrix::random(4, 3, &mut ChaCha8Rng::seed_from_u64(4));
    let mut m = MasterState::new(&a, MasterOptions::new(4, 2, 2, 1)).unwrap();
    for _ in 0..10 {
        for w in 0..4 {
            m.next_packet(w).unwrap();
        }
    }
    let mut seen = std::collections::HashSet::new();
    for t in 1..=10 {
        let keys = &m.round_keys(t).unwrap().keys;
        assert_eq!(keys.len(), 2);
        for k in keys {
            assert!(seen.insert(k.as_bytes().to_vec()));
        }
    }
}

#[test]
fn dispatch_rule() {
    let a = FieldMatrix::random(4, 2, &mut ChaCha8Rng::seed_from_u64(5));
    let mut m = MasterState::new(&a, MasterOptions::new(2, 1, 2, 1)).unwrap();
    assert_eq!(m.dispatch_time(0, 3.0, 0.0, None), Dispatch::At(3.0));
    let p = m.next_packet(0).unwrap();
    assert_eq!(m.dispatch_time(0, 1.0, 0.0, None), Dispatch::AwaitResult);
    assert_eq!(m.dispatch_time(0, 1.0, 0.0, Some(4.0)), Dispatch::At(4.0));
    let mut msg = result_for(&p, &[1, 2]);
    msg.service_sample = Some(2.0);
    m.on_result(msg).unwrap();
    assert_eq!(m.dispatch_time(0, 10.0, 10.0, Some(13.0)), Dispatch::At(12.0));
    assert_eq!(m.dispatch_time(0, 10.0, 10.0, Some(11.5)), Dispatch::At(11.5));
    assert_eq!(m.dispatch_time(0, 12.5, 10.0, None), Dispatch::At(12.5));
}

#[test]
fn secure_results_wait_for_round_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = FieldMatrix::random(3, 4, &mut rng);
    let x: Vec<u8> = (0..4).map(|_| rng.random()).collect();
    let mut m = MasterState::new(&a, MasterOptions::new(3, 1, 3, 2)).unwrap();
    m.queue_specs([spec(&[0], 3), spec(&[1], 3)]);
    let p: Vec<_> = (0..3).map(|w| m.next_packet(w).unwrap()).collect();
    assert_eq!(m.on_result(result_for(&p[1], &x)).unwrap(), 0);
    assert_eq!(m.on_result(result_for(&p[2], &x)).unwrap(), 0);
    assert_eq!(m.decoder().received(), 0);
    assert_eq!(m.on_result(result_for(&p[0], &x)).unwrap(), 2);
    assert_eq!(m.decoder().received(), 2);
    assert_eq!(m.max_consumed_round(), 1);
}

#[test]
fn duplicate_and_unknown_results() {
    let a = FieldMatrix::random(2, 2, &mut ChaCha8Rng::seed_from_u64(7));
    let mut m = MasterState::new(&a, MasterOptions::new(2, 1, 2, 2)).unwrap();
    let p = m.next_packet(0).unwrap();
    let msg = result_for(&p, &[3, 4]);
    m.on_result(msg.clone()).unwrap();
    assert_eq!(m.on_result(msg.clone()).unwrap(), 0);
    let mut stray = msg;
    stray.round = 9;
    assert!(matches!(m.on_result(stray), Err(Error::Protocol(_))));
}

// Worker w in the walkthrough is index w - 1. Rows give dispatches in time order;
// each result returns in dispatch order.
#[test]
fn walkthrough_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = FieldMatrix::random(12, 5, &mut rng);
    let x: Vec<u8> = (0..5).map(|_| rng.random()).collect();
    let mut opts = MasterOptions::new(4, 2, 6, 11);
    opts.generator = Some(example_generator());
    let mut m = MasterState::new(&a, opts).unwrap();
    // A4; A3+A4+A6; A3; A4+A5; A2; A1; A2+A3 (0-based blocks).
    m.queue_specs(
        [&[3][..], &[2, 3, 5], &[2], &[3, 4], &[1], &[0], &[1, 2]]
            .iter()
            .map(|s| spec(s, 6)),
    );
    let schedule = [0, 1, 2, 3, 3, 0, 1, 2, 1, 3, 0, 1, 2, 0, 3];
    let want_kind = [
        "k1", "k2", "s3", "s4", "k1", "k2", "s3", "s4", "k1", "k2", "s3", "k1", "s4", "k2", "s3",
    ];
    let packets: Vec<_> = schedule.iter().map(|&w| m.next_packet(w).unwrap()).collect();
    for (p, k) in packets.iter().zip(want_kind) {
        let got = match &p.kind {
            PacketKind::Key { key_index } => format!("k{key_index}"),
            PacketKind::Secure { g_row, .. } => format!("s{g_row}"),
        };
        assert_eq!(got, k, "worker {} round {}", p.worker + 1, p.round);
    }
    // Round 3 of the walkthrough: worker 2 gets R_{3,1}, worker 4 gets R_{3,2},
    // worker 1 gets A2 + pad, worker 3 gets A1 + pad.
    assert_eq!((packets[8].worker, packets[8].round), (1, 3));
    assert_eq!((packets[10].worker, packets[10].round), (0, 3));

    let mut done_at = None;
    for (i, p) in packets.iter().take(13).enumerate() {
        m.on_result(result_for(p, &x)).unwrap();
        if m.try_finish().is_some() {
            done_at = Some(i);
            break;
        }
    }
    // Decoding finishes on the result of A1 + R_{3,1} + 2 R_{3,2}; nothing
    // from round 4 is needed.
    assert_eq!(done_at, Some(12));
    assert_eq!(m.max_consumed_round(), 3);
    assert_eq!(m.secure_consumed(), 6);
    assert_eq!(m.try_finish().unwrap(), direct(&a, &x));
    assert!(matches!(m.next_packet(0), Err(Error::State(_))));
}

#[test]
fn finish_matches_direct_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..100u64 {
        let n = rng.random_range(2..8);
        let z = rng.random_range(0..n);
        let rows = rng.random_range(1..40);
        let b = rng.random_range(1..=rows);
        let cols = rng.random_range(1..10);
        let a = FieldMatrix::random(rows, cols, &mut rng);
        let x: Vec<u8> = (0..cols).map(|_| rng.random()).collect();
        let run = run_lockstep(&a, &x, MasterOptions::new(n, z, b, trial), trial + 100).unwrap();
        assert_eq!(run.output, direct(&a, &x), "trial {trial}: n={n} z={z} b={b} rows={rows}");
        assert_eq!(run.output.rows(), rows);
        assert_eq!(run.events.last(), Some(&LockstepEvent::Stop));
    }
}

#[test]
fn hide_x_returns_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..5 {
        let a = FieldMatrix::random(12, 6, &mut rng);
        let x: Vec<u8> = (0..6).map(|_| rng.random()).collect();
        let mut groups = LockstepGroups::new(4, seed);
        let out = hide_x_run(
            &a,
            &x,
            [GroupSpec { n: 3, z: 1 }, GroupSpec { n: 4, z: 2 }],
            &mut groups,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out, direct(&a, &x));
        assert!(groups.transcripts[0].iter().all(|f| f != &x));
    }
    let a = FieldMatrix::random(4, 2, &mut rng);
    let bad = hide_x_run(
        &a,
        &[1, 2],
        [GroupSpec { n: 2, z: 2 }, GroupSpec { n: 3, z: 1 }],
        &mut LockstepGroups::new(2, 0),
        &mut rng,
    );
    assert!(matches!(bad, Err(Error::Domain(_))));
}

#[test]
fn rejects_bad_options() {
    let a = FieldMatrix::random(4, 2, &mut ChaCha8Rng::seed_from_u64(11));
    assert!(MasterState::new(&a, MasterOptions::new(3, 3, 2, 0)).is_err());
    assert!(MasterState::new(&a, MasterOptions::new(3, 1, 5, 0)).is_err());
    assert!(MasterState::new(&a, MasterOptions::new(3, 1, 0, 0)).is_err());
    let mut opts = MasterOptions::new(3, 1, 2, 0);
    opts.generator = Some(example_generator());
    assert!(MasterState::new(&a, opts).is_err());
}
