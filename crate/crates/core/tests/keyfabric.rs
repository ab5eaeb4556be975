use std::fs::File;
use std::sync::Arc;
use std::thread;

use qanon_core::keyfabric::{KeyError, KeyFabric, PartyId};

#[test]
fn mismatch_rate_follows_error_rate() {
    let f = KeyFabric::generate(3, 100_000 / 3 + 1, 0.5, 7).unwrap();
    let total: usize = f.pairs().iter().map(|p| p.len()).sum();
    let flips: usize = f.pairs().iter().map(|p| p.mismatches()).sum();
    let rate = flips as f64 / total as f64;
    assert!(total >= 100_000);
    assert!((rate - 0.5).abs() <= 0.01, "{rate}");

    let clean = KeyFabric::generate(4, 1000, 0.0, 7).unwrap();
    assert!(clean.pairs().iter().all(|p| p.mismatches() == 0));
    let inverted = KeyFabric::generate(4, 1000, 1.0, 7).unwrap();
    assert!(inverted.pairs().iter().all(|p| p.mismatches() == 1000));
}

#[test]
fn same_seed_same_fabric() {
    let a = KeyFabric::generate(5, 333, 0.1, 42).unwrap();
    let b = KeyFabric::generate(5, 333, 0.1, 42).unwrap();
    let c = KeyFabric::generate(5, 333, 0.1, 43).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn both_ends_see_the_same_pad_without_errors() {
    let f = KeyFabric::generate(4, 64, 0.0, 1).unwrap();
    for i in PartyId::all(4) {
        for j in PartyId::all(4).filter(|j| *j > i) {
            assert_eq!(f.draw_bits(i, j, 64).unwrap(), f.draw_bits(j, i, 64).unwrap());
        }
    }
}

#[test]
fn file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fabric.qkf");
    let f = KeyFabric::generate(6, 1001, 0.01, 9).unwrap();
    f.write_to(File::create(&path).unwrap()).unwrap();
    let g = KeyFabric::read_from(File::open(&path).unwrap()).unwrap();
    assert_eq!(g.n(), 6);
    assert_eq!(g.bits_per_pair(), 1001);
    assert_eq!(g.seed(), 9);
    assert_eq!(g.error_rate(), 0.01);
    assert_eq!(g.to_bytes(), f.to_bytes());
    // 32-byte header, 15 pairs of (4 + 2 · 126) bytes
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 32 + 15 * (4 + 2 * 126));
}

#[test]
fn draws_never_exceed_the_store() {
    let f = KeyFabric::generate(3, 10, 0.0, 0).unwrap();
    let (a, b) = (PartyId(0), PartyId(2));
    f.draw_bits(a, b, 7).unwrap();
    match f.draw_bits(a, b, 4) {
        Err(KeyError::KeysDepleted { requested: 4, remaining: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(f.remaining(a, b).unwrap(), 3);
    assert_eq!(f.remaining(b, a).unwrap(), 10);
    assert!(matches!(f.draw_bit(a, a), Err(KeyError::UnknownPair(..))));
    assert!(matches!(f.draw_bit(a, PartyId(3)), Err(KeyError::UnknownPair(..))));
}

#[test]
fn concurrent_draws_consume_each_bit_once() {
    let f = Arc::new(KeyFabric::generate(3, 8000, 0.0, 3).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let f = Arc::clone(&f);
            thread::spawn(move || {
                for _ in 0..1000 {
                    f.draw_bit(PartyId(0), PartyId(1)).unwrap();
                }
                1000
            })
        })
        .collect();
    let drawn: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(drawn, 8000);
    assert_eq!(f.remaining(PartyId(0), PartyId(1)).unwrap(), 0);
    assert!(f.draw_bit(PartyId(0), PartyId(1)).is_err());
}

#[test]
fn rejects_bad_parameters_and_files() {
    assert!(KeyFabric::generate(2, 10, 0.0, 0).is_err());
    assert!(KeyFabric::generate(3, 10, 1.5, 0).is_err());
    let bytes = KeyFabric::generate(3, 10, 0.0, 0).unwrap().to_bytes();
    assert!(KeyFabric::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(KeyFabric::from_bytes(&extra).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(KeyFabric::from_bytes(&magic).is_err());
}
