//! Properties of the Feller checker, evaluated in exact rational arithmetic.

use atsm::feller::ConditionKind;
use atsm::{check_feller, ExactModelParams, Mat2, Measure, ModelKind, Rational, Tolerances, Vec2};
use proptest::prelude::*;

fn r(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

/// Multiples of 1/2 in [-1, 1].
fn halves() -> impl Strategy<Value = Rational> {
    (-2i128..=2).prop_map(|k| r(k, 2))
}

/// Small rationals with denominator 4, in [-2, 2].
fn quarters() -> impl Strategy<Value = Rational> {
    (-8i128..=8).prop_map(|k| r(k, 4))
}

fn mat(v: [Rational; 4]) -> Mat2<Rational> {
    Mat2::new(v[0], v[1], v[2], v[3])
}

fn params(
    kind: ModelKind,
    a_hat: Mat2<Rational>,
    b_hat: Vec2<Rational>,
    alpha: Vec2<Rational>,
    beta: Mat2<Rational>,
    sigma: Mat2<Rational>,
    lambda: Vec2<Rational>,
) -> ExactModelParams {
    let zero = r(0, 1);
    ExactModelParams {
        a_hat,
        b_hat,
        alpha,
        beta,
        sigma,
        lambda,
        omega_pi: zero,
        omega_s: zero,
        nu0: zero,
        nu1: zero,
        nu2: zero,
        kind,
    }
}

/// `β₁ᵀβ₁` as a matrix.
fn outer(v: Vec2<Rational>) -> Mat2<Rational> {
    Mat2::new(
        v.0[0] * v.0[0],
        v.0[0] * v.0[1],
        v.0[1] * v.0[0],
        v.0[1] * v.0[1],
    )
}

/// Equal-row parameters. When `exact_eq` is set, `â` and `Σ` are built so
/// that pv2 and dv hold exactly.
fn equal_rows() -> impl Strategy<Value = (ExactModelParams, bool)> {
    (
        any::<bool>(),
        any::<bool>(),
        proptest::array::uniform2(halves()),
        proptest::array::uniform4(quarters()),
        proptest::array::uniform3(quarters()),
        proptest::array::uniform2(quarters()),
        quarters(),
        (1i128..=4).prop_map(|k| r(k, 4)),
        proptest::array::uniform4(quarters()),
        proptest::array::uniform2(quarters()),
    )
        .prop_filter("nonzero beta row", |t| {
            t.2[0] != r(0, 1) || t.2[1] != r(0, 1)
        })
        .prop_map(
            |(dependent, exact_eq, b1, a_free, coeffs, b_hat, alpha1, c, sig, lambda)| {
                let b1 = Vec2::new(b1[0], b1[1]);
                let g1 = Vec2::new(-b1.0[1], b1.0[0]);
                let beta = Mat2::from_rows(b1, b1);
                let (a_hat, sigma) = if exact_eq {
                    let a_hat = Mat2::identity().scale(coeffs[0])
                        + outer(b1).scale(coeffs[1])
                        + outer(g1).scale(coeffs[2]);
                    // Second column of Σ along γ₁ makes β₁Σ² vanish.
                    let sigma = Mat2::new(sig[0], sig[1] * g1.0[0], sig[2], sig[1] * g1.0[1]);
                    (a_hat, sigma)
                } else {
                    (mat(a_free), mat(sig))
                };
                let (kind, alpha) = if dependent {
                    (
                        ModelKind::DependentNonProportional,
                        Vec2::new(alpha1, alpha1 + c),
                    )
                } else {
                    (ModelKind::Proportional, Vec2::new(alpha1, alpha1))
                };
                let p = params(
                    kind,
                    a_hat,
                    Vec2::new(b_hat[0], b_hat[1]),
                    alpha,
                    beta,
                    sigma,
                    Vec2::new(lambda[0], lambda[1]),
                );
                (p, exact_eq)
            },
        )
}

/// Independent parameters on the half-integer grid with `|det β| ≥ ½`. When
/// `exact_eq` is set, the columns of `Σ` are orthogonal to the opposite β
/// rows so that iv1 and iv2 hold exactly.
fn independent() -> impl Strategy<Value = (ExactModelParams, bool)> {
    (
        any::<bool>(),
        proptest::array::uniform4(halves()),
        proptest::array::uniform4(halves()),
        proptest::array::uniform2(halves()),
        proptest::array::uniform2(halves()),
        proptest::array::uniform4(halves()),
        proptest::array::uniform2(halves()),
    )
        .prop_filter("|det beta| >= 1/2", |t| {
            let d = mat(t.1).det();
            d >= r(1, 2) || d <= r(-1, 2)
        })
        .prop_map(|(exact_eq, beta, a_hat, b_hat, alpha, sig, lambda)| {
            let beta = mat(beta);
            let sigma = if exact_eq {
                let (b1, b2) = (beta.row(0), beta.row(1));
                // Σ¹ ⊥ β₂ and Σ² ⊥ β₁.
                Mat2::new(
                    sig[0] * -b2.0[1],
                    sig[1] * -b1.0[1],
                    sig[0] * b2.0[0],
                    sig[1] * b1.0[0],
                )
            } else {
                mat(sig)
            };
            let p = params(
                ModelKind::Independent,
                mat(a_hat),
                Vec2::new(b_hat[0], b_hat[1]),
                Vec2::new(alpha[0], alpha[1]),
                beta,
                sigma,
                Vec2::new(lambda[0], lambda[1]),
            );
            (p, exact_eq)
        })
}

fn equality_ids(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Proportional => &["pv2"],
        ModelKind::DependentNonProportional => &["pv2", "dv"],
        ModelKind::Independent => &["iv1", "iv2"],
    }
}

fn scale_invariance(p: ExactModelParams, c: Rational) -> Result<(), TestCaseError> {
    let tol = Tolerances::exact();
    let base = check_feller(&p, Measure::P, tol).unwrap();
    let mut q = p;
    q.beta = p.beta.scale(c);
    let scaled = check_feller(&q, Measure::P, tol).unwrap();
    for id in equality_ids(p.kind) {
        let (x, y) = (base.get(id).unwrap(), scaled.get(id).unwrap());
        prop_assert_eq!(x.pass, y.pass, "{} flips under scaling", id);
        // β₁âγ₁ᵀ is quadratic in β, the Σ orthogonality conditions linear.
        let power = if *id == "pv2" { c * c } else { c };
        prop_assert_eq!(y.margin, x.margin * power, "{} margin", id);
    }
    Ok(())
}

fn measure_consistency(p: ExactModelParams) -> Result<(), TestCaseError> {
    let tol = Tolerances::exact();
    let under_p = check_feller(&p, Measure::P, tol).unwrap();
    let under_q = check_feller(&p, Measure::Q, tol).unwrap();
    prop_assert!(under_p.equalities_hold(), "{:?}", under_p);
    prop_assert!(under_q.equalities_hold(), "{:?}", under_q);
    for (x, y) in under_p.conditions.iter().zip(&under_q.conditions) {
        prop_assert_eq!(x.id, y.id);
        if x.kind != ConditionKind::EqZero {
            prop_assert_eq!(x.pass, y.pass, "{} differs between measures", x.id);
            prop_assert_eq!(
                x.margin,
                y.margin,
                "{} margin differs between measures",
                x.id
            );
        }
    }
    Ok(())
}

/// Left minus right side of the boundary condition for row `i` at the
/// boundary point `β⁻¹(e - α)`, where `e` has `t` in the other coordinate.
fn boundary_margin(p: &ExactModelParams, i: usize, t: Rational) -> Rational {
    let zero = r(0, 1);
    let e = if i == 0 {
        Vec2::new(zero, t)
    } else {
        Vec2::new(t, zero)
    };
    let x = p.beta.inverse().unwrap().mul_vec(e - p.alpha);
    let drift = p.a_hat.mul_vec(x) + p.b_hat;
    let row = p.beta.row(i);
    let diffusion = r(1, 2) * p.sigma.tr_mul_vec(row).norm_sq();
    row.dot(drift) - diffusion
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn equality_conditions_are_scale_invariant_equal_rows(
        (p, _) in equal_rows(),
        c in prop_oneof![Just(r(1, 2)), Just(r(2, 1)), Just(r(3, 1)), Just(r(7, 5))],
    ) {
        scale_invariance(p, c)?;
    }

    #[test]
    fn equality_conditions_are_scale_invariant_independent(
        (p, _) in independent(),
        c in prop_oneof![Just(r(1, 2)), Just(r(2, 1)), Just(r(3, 1)), Just(r(7, 5))],
    ) {
        scale_invariance(p, c)?;
    }

    #[test]
    fn inequalities_agree_across_measures_equal_rows((p, exact_eq) in equal_rows()) {
        prop_assume!(exact_eq);
        measure_consistency(p)?;
    }

    #[test]
    fn inequalities_agree_across_measures_independent((p, exact_eq) in independent()) {
        prop_assume!(exact_eq);
        measure_consistency(p)?;
    }

    #[test]
    fn independent_verdict_matches_boundary_grid((p, _) in independent()) {
        let report = check_feller(&p, Measure::P, Tolerances::exact()).unwrap();
        let closed_form = ["iv3", "iv4", "iv5", "iv6"]
            .iter()
            .all(|id| report.get(id).unwrap().pass);
        let grid = [0i128, 1, 10, 1000].iter().all(|&t| {
            let t = r(t, 1);
            boundary_margin(&p, 0, t) > r(0, 1) && boundary_margin(&p, 1, t) > r(0, 1)
        });
        prop_assert_eq!(closed_form, grid, "{:?}", report);
    }
}

#[test]
fn grid_generator_hits_both_verdicts() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strategy = independent();
    let (mut pass, mut fail) = (0, 0);
    for _ in 0..2000 {
        let (p, _) = strategy.new_tree(&mut runner).unwrap().current();
        let report = check_feller(&p, Measure::P, Tolerances::exact()).unwrap();
        if ["iv3", "iv4", "iv5", "iv6"]
            .iter()
            .all(|id| report.get(id).unwrap().pass)
        {
            pass += 1;
        } else {
            fail += 1;
        }
    }
    assert!(pass > 20 && fail > 20, "pass {pass}, fail {fail}");
}

#[test]
fn table_verdicts() {
    for name in ["table2_prop", "table2_dep", "table2_indep"] {
        let p = atsm::fixtures::named(name);
        let report = check_feller(&p, Measure::P, Tolerances::new(5e-3, 0.0)).unwrap();
        assert!(report.overall, "{name}: {report:?}");
    }
    let p = atsm::fixtures::table1_proportional();
    let report = check_feller(&p, Measure::P, Tolerances::default()).unwrap();
    let pv2 = report.get("pv2").unwrap();
    assert!(!pv2.pass);
    assert!((pv2.margin - 1.4e-3).abs() < 1e-4, "{}", pv2.margin);
}
