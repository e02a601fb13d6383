use cocyrot::base::{BasePoint, PeriodicOrbit, SymbolicSystem};
use cocyrot::cocycle::MatrixCocycle;
use cocyrot::linalg::{diag, rot2, Mat};
use cocyrot::stability::{conjugate_projective_pair, lift_is_degree_one, CONJUGACY_TOL};

fn samples() -> Vec<BasePoint> {
    ["0", "1", "01", "001", "011"].iter().map(|w| PeriodicOrbit::from_str_word(w).unwrap().point(0)).collect()
}

fn base() -> Vec<Mat> {
    vec![rot2(0.2) * diag(&[2.0, 0.5]), rot2(-0.35) * diag(&[3.0, 1.0 / 3.0])]
}

/// B = A with each factor turned by ε·c and stretched by (1 + ε).
fn nearby(eps: f64) -> MatrixCocycle {
    let mats = base()
        .iter()
        .zip([1.0, -0.6])
        .map(|(m, c)| rot2(eps * c) * m * diag(&[1.0 + eps, 1.0 / (1.0 + eps)]))
        .collect();
    MatrixCocycle::locally_constant(SymbolicSystem::full_shift(2), mats).unwrap()
}

#[test]
fn conjugacy_shrinks_with_the_perturbation() {
    let a = MatrixCocycle::locally_constant(SymbolicSystem::full_shift(2), base()).unwrap();
    let pts = samples();
    let mut prev = f64::INFINITY;
    for k in 0..5 {
        let eps = 0.04 / 2f64.powi(k);
        let h = conjugate_projective_pair(&a, &nearby(eps), &pts, 256).unwrap();
        assert!(h.within_tolerance && h.defect <= CONJUGACY_TOL, "eps {eps}: defect {:e}", h.defect);
        assert!(h.alignment_error <= 1e-8, "eps {eps}: alignment {:e}", h.alignment_error);
        assert!(h.fibers.iter().all(lift_is_degree_one));
        assert!(h.distance_to_identity < 0.75 * prev, "eps {eps}: {} after {prev}", h.distance_to_identity);
        prev = h.distance_to_identity;
    }
    assert!(prev <= 0.01, "{prev}");
}

#[test]
fn self_conjugacy_is_the_identity() {
    let a = MatrixCocycle::locally_constant(SymbolicSystem::full_shift(2), base()).unwrap();
    let pts = samples();
    let h = conjugate_projective_pair(&a, &a, &pts, 128).unwrap();
    assert!(h.distance_to_identity <= 1e-12, "{:e}", h.distance_to_identity);
    for x in &pts {
        for k in 0..16 {
            let theta = k as f64 / 16.0;
            let img = h.eval(x, theta).unwrap();
            let off = (img - theta) - (img - theta).round();
            assert!(off.abs() <= 1e-12, "{x:?} {theta}: {img}");
        }
    }
}
