use hessianscope::analysis::{directional_loss_profile, optimal_step_search, StepGrid};
use hessianscope::eigen::dense_eig_oracle;
use hessianscope_wasm::{Demo, Explorer, PAIRS_PER_SIDE};

fn demo() -> Demo {
    Demo::new(3, 300).unwrap()
}

#[test]
fn extracted_eigenvalues_are_the_dense_extremes() {
    let d = demo();
    assert_eq!(d.operator().dim(), 51);
    let oracle = dense_eig_oracle(d.operator(), d.theta(), 100).unwrap();
    let n = oracle.pairs.len();
    let want: Vec<f64> =
        oracle.pairs[..PAIRS_PER_SIDE].iter().chain(&oracle.pairs[n - PAIRS_PER_SIDE..]).map(|p| p.lambda).collect();
    let got: Vec<f64> = d.pairs().iter().map(|p| p.lambda).collect();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-8 * w.abs().max(1e-3), "{got:?} vs {want:?}");
    }
}

#[test]
fn trained_demo_reaches_low_loss() {
    let untrained = Demo::new(3, 0).unwrap().loss().unwrap();
    let trained = demo().loss().unwrap();
    assert!(trained < 0.5 * untrained, "{untrained} -> {trained}");
}

#[test]
fn explorer_profile_flattens_the_library_profile() {
    let d = demo();
    let want = directional_loss_profile(d.operator(), d.theta(), &d.pairs()[1], 0.5, 21).unwrap();
    let e = Explorer::new(3, 300).unwrap();
    let flat = e.profile(1, 0.5, 21).unwrap();
    assert_eq!(flat.len(), 3 * 21);
    for (k, chunk) in flat.chunks(3).enumerate() {
        assert_eq!(chunk[0], want.alphas[k]);
        assert_eq!(chunk[1], want.true_loss[k].unwrap());
        assert_eq!(chunk[2], want.quad_model[k]);
    }
    assert_eq!(flat[3 * 10 + 1], d.loss().unwrap());
}

#[test]
fn tracker_settles_on_smallest_extracted_eigenvalue() {
    let d = demo();
    let smallest = d.pairs().last().unwrap().lambda;
    let trace = d.track(0.4, 3000).unwrap();
    assert_eq!(trace.len(), 3001);
    let last = *trace.last().unwrap();
    assert!((last - smallest).abs() <= 1e-3 * smallest.abs().max(1.0), "{last} vs {smallest}");
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn line_search_matches_library_per_direction() {
    let d = demo();
    let points = d.line_search().unwrap();
    assert!(!points.is_empty());
    let grid = StepGrid::default();
    let mut k = 0;
    for pair in d.pairs() {
        let r = optimal_step_search(d.operator(), d.theta(), pair, &grid).unwrap();
        if r.degenerate {
            continue;
        }
        assert_eq!(points[k].alpha_star, r.alpha_star);
        assert_eq!(points[k].lambda, pair.lambda);
        assert!(points[k].improvement >= 0.0);
        k += 1;
    }
    assert_eq!(k, points.len());
    let flat = Explorer::new(3, 300).unwrap().line_search().unwrap();
    assert_eq!(flat.len(), 2 * points.len());
}

#[test]
fn out_of_range_direction_is_an_error() {
    assert!(demo().profile(2 * PAIRS_PER_SIDE, 1.0, 11).is_err());
}
