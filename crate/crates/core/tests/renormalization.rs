//! Ensemble-level checks of the block classification.

use rand::Rng;
use rcwalk::renorm::{
    check_fact_i, check_fact_ii, classify_boxes, estimate_renormalized_params, sample_nested_masks, BoxColor,
    ClassifyOptions,
};
use rcwalk::geometry::{giant_cluster, label_clusters};
use rcwalk::rng::stream;
use rcwalk::LatticeSpec;

#[test]
fn without_weak_edges_no_block_is_grey() {
    let spec = LatticeSpec::torus(2, 51).unwrap();
    let r = estimate_renormalized_params(&spec, 0.7, 1.0, 8, 4, 3, ClassifyOptions::default(), 0.95).unwrap();
    assert_eq!(r.pure_white.successes, r.white.successes);
    let full = estimate_renormalized_params(&spec, 1.0, 1.0, 8, 2, 3, ClassifyOptions::default(), 0.95).unwrap();
    assert_eq!(full.immaculate.estimate, 1.0);
    assert_eq!(full.pure_white.estimate, 1.0);
}

#[test]
fn whiteness_does_not_degrade_with_scale() {
    let opts = ClassifyOptions::default();
    let small = estimate_renormalized_params(&LatticeSpec::torus(2, 102).unwrap(), 0.93, 1.0, 8, 24, 5, opts, 0.95)
        .unwrap()
        .white_replicas
        .unwrap();
    let large = estimate_renormalized_params(&LatticeSpec::torus(2, 99).unwrap(), 0.93, 1.0, 16, 24, 6, opts, 0.95)
        .unwrap()
        .white_replicas
        .unwrap();
    assert!(large.mean >= small.mean - 3.0 * small.se.hypot(large.se), "{small:?} {large:?}");
}

#[test]
fn facts_hold_on_white_blocks() {
    let spec = LatticeSpec::torus(2, 85).unwrap();
    for replica in 0..3 {
        let (alpha, strong) = sample_nested_masks(&spec, 0.95, 0.99, 11, replica).unwrap();
        let class = classify_boxes(&spec, &alpha, &strong, 8, ClassifyOptions::default()).unwrap();
        let labels = label_clusters(&spec, &alpha);
        let giant = giant_cluster(&labels);
        let in_giant: Vec<bool> = (0..spec.num_vertices()).map(|v| labels.label(v) == giant.id).collect();
        let mut white = 0;
        for b in 0..class.num_blocks() {
            if !class.colors[b].is_white() {
                continue;
            }
            white += 1;
            assert!(check_fact_i(&class, &alpha, &in_giant, b).unwrap());
            for a in class.grid.adjacent(b) {
                if class.colors[a].is_white() {
                    assert!(check_fact_ii(&class, &alpha, a, b).unwrap());
                }
            }
        }
        assert!(white > 0);
    }
}

#[test]
fn opening_a_strong_edge_keeps_pure_white_blocks() {
    let spec = LatticeSpec::torus(2, 54).unwrap();
    let opts = ClassifyOptions::default();
    let mut rng = stream(17, 0, 0);
    for replica in 0..4 {
        let (alpha, mut strong) = sample_nested_masks(&spec, 0.8, 0.9, 13, replica).unwrap();
        let before = classify_boxes(&spec, &alpha, &strong, 4, opts).unwrap();
        let candidates: Vec<usize> =
            spec.edge_slots().filter(|&s| alpha.is_open(s) && !strong.is_open(s)).collect();
        for _ in 0..3 {
            strong.set(candidates[rng.random_range(0..candidates.len())], true);
            let after = classify_boxes(&spec, &alpha, &strong, 4, opts).unwrap();
            for b in 0..before.num_blocks() {
                if before.colors[b] == BoxColor::PureWhite {
                    assert_eq!(after.colors[b], BoxColor::PureWhite);
                }
            }
        }
    }
}
