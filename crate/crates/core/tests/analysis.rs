use qanon_core::analysis::*;
use qanon_core::runner::Protocol;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn published_figures() {
    assert!(close(encoding_efficiency(1024, 16).unwrap(), 1024.0 / 1068.0, 1e-12));
    assert!(close(encoding_efficiency(1024, 16).unwrap(), 0.9588, 1e-4));
    assert!(close(encoding_efficiency(512, 16).unwrap(), 0.9242, 1e-4));
    let e = parity_error_rate(1e-4, 8);
    assert!(close(e, 2.79e-3, 0.01e-3), "{e}");
    let e5 = repetition_residual(e, 5).unwrap();
    assert!(close(e5, 2e-7, 0.4e-7), "{e5}");
    assert!(close((1.0 - e5).powi(8 * 16), 0.99997, 1e-5));
}

#[test]
fn residual_matches_direct_enumeration() {
    // majority of N fails iff more than half the repetitions fail
    for n in [1u32, 3, 5, 7, 9] {
        for e in [0.0f64, 0.01, 0.2, 0.5, 0.9, 1.0] {
            let direct: f64 = (0u32..1 << n)
                .filter(|w| 2 * w.count_ones() > n)
                .map(|w| e.powi(w.count_ones() as i32) * (1.0 - e).powi((n - w.count_ones()) as i32))
                .sum();
            assert!(close(repetition_residual(e, n).unwrap(), direct, 1e-12), "N={n} E={e}");
        }
    }
}

#[test]
fn parity_error_matches_link_enumeration() {
    // odd number of disagreeing pads among n(n-1)/2 links
    for n in 3..=5usize {
        let links = (n * (n - 1) / 2) as u32;
        for re in [0.0f64, 0.01, 0.3] {
            let direct: f64 = (0u32..1 << links)
                .filter(|w| w.count_ones() % 2 == 1)
                .map(|w| re.powi(w.count_ones() as i32) * (1.0 - re).powi((links - w.count_ones()) as i32))
                .sum();
            assert!(close(parity_error_rate(re, n), direct, 1e-12));
        }
    }
}

#[test]
fn collision_probability_monte_carlo_at_small_n() {
    for (n, p) in [(3, 0.1), (5, 0.3)] {
        let est = mc_collision(n, p, 20_000, n as u64).unwrap();
        assert!(est.within_3sigma(collision_prob(p, n)), "n={n}: {} vs {}", est.rate(), collision_prob(p, n));
    }
}

#[test]
fn budget_table_rows() {
    let rows = budget_table(8, 16, 1024, 1).unwrap();
    let get = |p: &str| rows.iter().find(|r| r.protocol == p).unwrap();
    assert_eq!(get("broadcast").measured_bits, 28);
    assert_eq!(get("veto").measured_bits, 3584);
    assert_eq!(get("notify").measured_bits, 3584);
    assert_eq!(get("collision").measured_bits, 7168);
    let msg = get("message");
    assert_eq!(msg.formula_bits, 15412.0);
    assert_eq!(msg.exact_bits, 44240);
    assert_eq!(msg.measured_bits, 44240);
    assert!(rows.iter().all(|r| r.matches));
}

#[test]
fn budget_formulas_for_all_sizes() {
    for n in 3..=12usize {
        for beta in [1u32, 2, 16] {
            let (nn, b) = (n as u64, beta as u64);
            assert_eq!(key_budget(Protocol::Broadcast, n, beta, None).unwrap().exact, nn * (nn - 1) / 2);
            assert_eq!(key_budget(Protocol::Veto, n, beta, None).unwrap().exact, b * nn * nn * (nn - 1) / 2);
            assert_eq!(key_budget(Protocol::Notify, n, beta, None).unwrap().exact, b * nn * nn * (nn - 1) / 2);
            assert_eq!(key_budget(Protocol::Collision, n, beta, None).unwrap().exact, b * nn * nn * (nn - 1));
            let rep = key_budget(Protocol::Veto, n, beta, None).unwrap().repeated(5);
            assert_eq!(rep.exact, 5 * b * nn * nn * (nn - 1) / 2);
        }
    }
}

#[test]
fn throughput_examples() {
    let r = vec![1000.0; 28];
    let veto = throughput_estimate(&r, Protocol::Veto, 8, 16, None).unwrap();
    assert!(close(veto, 7.8125, 1e-12));
    assert!(close(throughput_estimate(&r, Protocol::Broadcast, 8, 16, None).unwrap(), 1000.0, 1e-12));
    let msg = throughput_estimate(&r, Protocol::Message, 8, 16, Some(1024)).unwrap();
    assert!(close(msg, 1000.0 / 1580.0, 1e-12));
    assert!(matches!(
        throughput_estimate(&r[..3], Protocol::Veto, 8, 16, None),
        Err(AnalysisError::MissingLinks { expected: 28, got: 3 })
    ));
}

#[test]
fn csv_outputs() {
    let mut eff = Vec::new();
    write_csv(&mut eff, &efficiency_table(16).unwrap()).unwrap();
    let eff = String::from_utf8(eff).unwrap();
    let lines: Vec<&str> = eff.lines().collect();
    assert_eq!(lines[0], "m,beta,gamma,efficiency");
    assert_eq!(lines.len(), 12);
    assert!(lines.iter().any(|l| l.starts_with("1024,16,22,0.9588")), "{eff}");

    let mut err = Vec::new();
    write_csv(&mut err, &error_table(&[1e-4], &[8])).unwrap();
    let err = String::from_utf8(err).unwrap();
    let row: Vec<f64> = err.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 1e-4);
    assert_eq!(row[1], 8.0);
    assert!(close(row[2], 2.79e-3, 0.01e-3));
    assert!(close(row[3], 2e-7, 0.4e-7));
}

#[test]
fn coalition_views_single_colluder_and_all_but_one() {
    use qanon_core::PartyId;
    let n = 3;
    let a = coalition_view_distribution(n, &[PartyId(0)], PartyId(1)).unwrap();
    let b = coalition_view_distribution(n, &[PartyId(0)], PartyId(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.values().sum::<u32>(), 8);

    // With everyone else colluding, the honest party's announcement minus
    // the pads it shares with them is its input. View layout: the three
    // announcements, then keys (0,1), (0,2), (1,2).
    let c = coalition_view_distribution(n, &[PartyId(0), PartyId(1)], PartyId(2)).unwrap();
    for view in c.keys() {
        assert!(view[2] ^ view[4] ^ view[5]);
    }
}
