use cocyrot::base::{InvariantMeasure, PeriodicOrbit, SymbolicSystem};
use cocyrot::cocycle::MatrixCocycle;
use cocyrot::linalg::{diag, rot2, Mat, TAU};
use cocyrot::path::CocyclePath;
use cocyrot::rotation::{path_rotation_number, RotationEnclosure, RotationOptions};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> RotationOptions {
    RotationOptions { n_list: vec![16, 32, 64], ..RotationOptions::default() }
}

fn sl2(rng: &mut ChaCha8Rng) -> Mat {
    let s: f64 = rng.gen_range(-0.8..0.8);
    rot2(rng.gen_range(0.0..TAU)) * diag(&[s.exp(), (-s).exp()]) * rot2(rng.gen_range(0.0..TAU))
}

fn cocycle(rng: &mut ChaCha8Rng) -> MatrixCocycle {
    MatrixCocycle::locally_constant(SymbolicSystem::full_shift(2), vec![sl2(rng), sl2(rng)]).unwrap()
}

fn enclose(path: &CocyclePath, mu: &InvariantMeasure) -> RotationEnclosure {
    let e = path_rotation_number(path, mu, None, &opts()).unwrap();
    assert!(e.lower <= e.upper);
    e
}

/// Both intervals contain the true value, so they must meet.
fn assert_meet(a: (f64, f64), b: (f64, f64), what: &str) {
    let tol = 1e-12;
    assert!(a.0 <= b.1 + tol && b.0 <= a.1 + tol, "{what}: [{}, {}] and [{}, {}] are disjoint", a.0, a.1, b.0, b.1);
}

fn orbit(w: &str) -> PeriodicOrbit {
    PeriodicOrbit::from_str_word(w).unwrap()
}

#[test]
fn enclosures_are_linear_in_the_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..8 {
        let a = cocycle(&mut rng);
        let path = CocyclePath::plane_rotation(a, rng.gen_range(-2.0..2.0)).unwrap();
        let m1 = InvariantMeasure::orbit(orbit("01"));
        let m2 = InvariantMeasure::orbit(orbit("011"));
        let mix = InvariantMeasure::atoms(vec![(orbit("01"), Ratio::new(1, 4)), (orbit("011"), Ratio::new(3, 4))]);
        let (e1, e2, em) = (enclose(&path, &m1), enclose(&path, &m2), enclose(&path, &mix));
        let combo = (0.25 * e1.lower + 0.75 * e2.lower, 0.25 * e1.upper + 0.75 * e2.upper);
        assert_meet((em.lower, em.upper), combo, &format!("case {case}"));
    }
}

#[test]
fn concatenation_adds_and_reversal_negates() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mu = InvariantMeasure::atoms(vec![(orbit("0"), Ratio::new(1, 2)), (orbit("01"), Ratio::new(1, 2))]);
    for case in 0..8 {
        let a = cocycle(&mut rng);
        let b = a.left_multiply(&rot2(rng.gen_range(-1.5..1.5))).unwrap();
        let c = b.left_multiply(&(rot2(rng.gen_range(-1.5..1.5)) * diag(&[1.1, 1.0 / 1.1]))).unwrap();
        let phi = CocyclePath::interpolation(a, b.clone()).unwrap();
        let psi = CocyclePath::interpolation(b, c).unwrap();
        let both = CocyclePath::concat(vec![phi.clone(), psi.clone()]).unwrap();
        let (ep, es, eb) = (enclose(&phi, &mu), enclose(&psi, &mu), enclose(&both, &mu));
        assert_meet((eb.lower, eb.upper), (ep.lower + es.lower, ep.upper + es.upper), &format!("case {case} concat"));
        let er = enclose(&phi.reverse(), &mu);
        assert_meet((er.lower, er.upper), (-ep.upper, -ep.lower), &format!("case {case} reverse"));
    }
}

#[test]
fn commuting_rotations_give_the_angle_difference() {
    // R_s·R_θ on a fixed point turns every direction by exactly s over the path
    for (theta, s) in [(0.3, 0.2), (1.0, -0.7), (2.5, 1.9)] {
        let a = MatrixCocycle::constant(SymbolicSystem::full_shift(2), rot2(theta)).unwrap();
        let path = CocyclePath::plane_rotation(a, s).unwrap();
        let e = enclose(&path, &InvariantMeasure::orbit(orbit("0")));
        let want = s / TAU;
        assert!(e.lower <= want + 1e-12 && want <= e.upper + 1e-12, "{want} not in [{}, {}]", e.lower, e.upper);
        assert!(e.width() <= 1e-9);
    }
}
