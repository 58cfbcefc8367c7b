use rbfm_demo::{four_rooms_occupancy, light_dual_curve, light_optimum, soft_tv_weight_curve};

#[test]
fn light_curve_minimum_matches_exact_optimum() {
    let losses = [1.0, 2.0, 3.0];
    let weights = [1.0, 1.0, 1.0];
    let curve = light_dual_curve(&losses, &weights, 0.5, 301).unwrap();
    let opt = light_optimum(&losses, &weights, 0.5).unwrap();
    assert!((opt[1] - 17.0 / 6.0).abs() < 1e-12);
    let lowest = curve.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lowest >= opt[1] - 1e-12 && lowest - opt[1] < 1e-2);
    assert!(light_dual_curve(&losses, &[0.0; 3], 0.5, 10).is_err());
}

#[test]
fn weight_curve_is_monotone_and_capped() {
    let w = soft_tv_weight_curve(0.5, -2.0, 2.0, 101);
    assert!(w.windows(2).all(|p| p[1] >= p[0]));
    assert_eq!(w[0], 0.0);
    assert!(w.iter().all(|&x| x <= rbfm::HeavyConfig::default().w_max));
}

#[test]
fn occupancy_map_is_a_distribution_over_open_cells() {
    let map = four_rooms_occupancy(11, 0.1, "top_left", 0.2, 3).unwrap();
    let cells = map.cells();
    assert_eq!(cells.len(), 121);
    let open: Vec<f64> = cells.iter().copied().filter(|&x| x >= 0.0).collect();
    assert_eq!(open.len(), 104);
    assert!((open.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    let nominal = four_rooms_occupancy(11, 0.1, "top_left", 0.0, 3).unwrap();
    assert!(map.value() <= nominal.value() + 1e-12);
    assert!(four_rooms_occupancy(11, 0.1, "nowhere", 0.0, 0).is_err());
}
