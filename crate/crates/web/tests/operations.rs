use fogq_core::PolicyKind;
use fogq_demo::{compare, link_curve, reward_table};

#[test]
fn link_curve_falls_with_distance() {
    let curve = link_curve(140.0, 28, 500.0).unwrap();
    assert_eq!(curve.len(), 28);
    assert_eq!(curve[9].distance_m, 50.0);
    assert!((curve[9].rate_bps - 21_946_690.366_411_204).abs() / 21_946_690.366_411_204 < 1e-6);
    assert!(curve
        .windows(2)
        .all(|w| w[1].rate_bps < w[0].rate_bps && w[1].comm_time_s > w[0].comm_time_s));
    assert!(link_curve(0.0, 5, 500.0).is_err());
}

#[test]
fn reward_table_lists_every_admissible_action() {
    let rows = reward_table(50.0, 500.0, 3, 4, 3).unwrap();
    assert_eq!(rows[0].action, "local");
    assert_eq!(rows.len(), 4);
    let one = rows.iter().find(|r| r.action == "2:1").unwrap();
    assert!((one.total - -110.236_200_636_577_44).abs() < 1e-4);
    for r in &rows {
        assert_eq!(r.local + r.offloaded + r.dropped, 3);
        assert_eq!(r.total, r.utility - (r.delay + r.overload));
    }
    assert!(reward_table(50.0, 500.0, 0, 0, 0).is_err());
}

#[test]
fn compare_runs_all_standard_policies() {
    let reports = compare(5.0, 1.8, 1, 5_000, 1_000).unwrap();
    let kinds: Vec<PolicyKind> = reports.iter().map(|r| r.policy).collect();
    assert_eq!(kinds, PolicyKind::STANDARD);
    assert!(reports.iter().all(|r| r.iterations == 1_000));
    assert_eq!(compare(5.0, 1.8, 1, 5_000, 1_000).unwrap(), reports);
    assert!(compare(-1.0, 1.8, 1, 10, 10).is_err());
}
