use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::{build_grid, classify_domain, DomainSpec, NodeClass, Shape};

fn snapped_ball(n: usize, h: f64, radius: f64) -> Arc<DomainMask> {
    let g = ComplexGrid::centered(n, radius + 2.0 * h, h, 4_000_000).unwrap();
    Arc::new(classify_domain(&g, &DomainSpec::snapped(Shape::origin_ball(2 * n, radius))).unwrap())
}

fn cut_ball(n: usize, h: f64, radius: f64) -> Arc<DomainMask> {
    let g = ComplexGrid::centered(n, radius + 2.0 * h, h, 4_000_000).unwrap();
    Arc::new(classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(2 * n, radius))).unwrap())
}

fn diag13() -> AlphaForm {
    AlphaForm::constant(2, Coeffs::diag(1.0, 3.0)).unwrap()
}

fn abs2(x: &[f64], j: usize) -> f64 {
    x[2 * j] * x[2 * j] + x[2 * j + 1] * x[2 * j + 1]
}

fn constant_on_interior(r: &GridFunction, mask: &DomainMask, expect: f64, tol: f64) {
    for &i in mask.interior() {
        assert!((r.get(i) - expect).abs() <= tol, "node {i}: {}", r.get(i));
    }
}

#[test]
fn classification_of_the_three_quadratics() {
    let mask = snapped_ball(2, 0.125, 1.0);
    let op = assemble_operator(&diag13(), &mask).unwrap();
    let g = mask.grid().clone();
    let u1 = GridFunction::from_fn(g.clone(), |x| 2.0 * abs2(x, 0) - abs2(x, 1));
    let u2 = GridFunction::from_fn(g.clone(), |x| -3.0 * abs2(x, 0) + 2.0 * abs2(x, 1));
    let u3 = GridFunction::from_fn(g.clone(), |x| abs2(x, 0) + abs2(x, 1));
    let v1 = is_alpha_subharmonic(&u1, &op, None).unwrap();
    let v2 = is_alpha_subharmonic(&u2, &op, None).unwrap();
    let v3 = is_alpha_subharmonic(&u3, &op, None).unwrap();
    assert!(!v1.verdict && v2.verdict && v3.verdict);
    assert_eq!(v1.violations.len(), mask.interior().len());
    constant_on_interior(&op.apply(&u1).unwrap(), &mask, -1.0, 1e-10);
    constant_on_interior(&op.apply(&u2).unwrap(), &mask, 3.0, 1e-10);
    constant_on_interior(&op.apply(&u3).unwrap(), &mask, 4.0, 1e-10);
}

#[test]
fn residual_sentinel_off_interior() {
    let mask = snapped_ball(1, 0.125, 1.0);
    let op = assemble_operator(&AlphaForm::identity(1), &mask).unwrap();
    let r = op.apply(&GridFunction::zeros(mask.grid().clone())).unwrap();
    for i in 0..r.values().len() {
        assert_eq!(r.get(i).is_nan(), mask.class(i) != NodeClass::Interior);
    }
}

#[test]
fn constants_affine_and_pluriharmonic_give_zero() {
    let mask = snapped_ball(1, 1.0 / 16.0, 1.0);
    let op = assemble_operator(&AlphaForm::identity(1), &mask).unwrap();
    let g = mask.grid().clone();
    constant_on_interior(&op.apply(&GridFunction::constant(g.clone(), 2.5)).unwrap(), &mask, 0.0, 0.0);
    let aff = GridFunction::from_fn(g.clone(), |x| 0.3 - 2.0 * x[0] + 5.0 * x[1]);
    constant_on_interior(&op.apply(&aff).unwrap(), &mask, 0.0, 1e-11);
    let r2 = GridFunction::from_fn(g, |x| x[0] * x[0] + x[1] * x[1]);
    constant_on_interior(&op.apply(&r2).unwrap(), &mask, 1.0, 1e-11);

    let mask = snapped_ball(2, 0.125, 1.0);
    let op = assemble_operator(&AlphaForm::identity(2), &mask).unwrap();
    // Re(z1^2) = x1^2 - y1^2
    let u = GridFunction::from_fn(mask.grid().clone(), |x| x[0] * x[0] - x[1] * x[1]);
    constant_on_interior(&op.apply(&u).unwrap(), &mask, 0.0, 1e-11);
}

/// Exact `Σ a_jk ∂²u/∂z_j∂z̄_k` of `u = xᵀ Q x` from the complex definition.
fn exact_on_quadratic(a: &Coeffs, q: &[[f64; 4]; 4]) -> f64 {
    // ∂²u/∂x_p∂x_q = 2 Q_pq
    let d = |p: usize, r: usize| 2.0 * q[p][r];
    let dzz = |j: usize, k: usize| -> Complex64 {
        let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
        Complex64::new(d(xj, xk) + d(yj, yk), d(xj, yk) - d(yj, xk)) * 0.25
    };
    let full = [[Complex64::new(a.a11, 0.0), a.a12], [a.a12.conj(), Complex64::new(a.a22, 0.0)]];
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        for k in 0..2 {
            s += full[j][k] * dzz(j, k);
        }
    }
    assert!(s.im.abs() < 1e-12);
    s.re
}

#[test]
fn consistency_on_random_quadratics_with_cross_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mask = snapped_ball(2, 0.25, 1.0);
    let g = mask.grid().clone();
    for _ in 0..20 {
        let a = Coeffs {
            a11: rng.random_range(1.0..3.0),
            a22: rng.random_range(1.0..3.0),
            a12: Complex64::new(rng.random_range(-0.45..0.45), rng.random_range(-0.45..0.45)),
        };
        let op = assemble_operator(&AlphaForm::constant(2, a).unwrap(), &mask).unwrap();
        assert!(op.has_cross_terms());
        let mut q = [[0.0; 4]; 4];
        for p in 0..4 {
            for r in p..4 {
                q[p][r] = rng.random_range(-1.0..1.0);
                q[r][p] = q[p][r];
            }
        }
        let u = GridFunction::from_fn(g.clone(), |x| {
            let mut s = 0.0;
            for p in 0..4 {
                for r in 0..4 {
                    s += q[p][r] * x[p] * x[r];
                }
            }
            s
        });
        let expect = exact_on_quadratic(&a, &q);
        let res = op.apply(&u).unwrap();
        for &i in mask.interior() {
            assert!((res.get(i) - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn positive_type_violation_names_node_and_ratio() {
    let a = Coeffs {
        a11: 1.0,
        a22: 1.0,
        a12: Complex64::new(0.6, 0.6),
    };
    let form = AlphaForm::constant(2, a).unwrap();
    let mask = snapped_ball(2, 0.25, 1.0);
    match assemble_operator(&form, &mask) {
        Err(Error::PositiveType { node, ratio }) => {
            assert!(mask.is_interior(node));
            assert!((ratio - 1.2).abs() < 1e-12);
        }
        other => panic!("expected positive-type error, got {other:?}"),
    }
}

#[test]
fn positive_type_stencils_have_nonnegative_neighbours() {
    let a = Coeffs {
        a11: 1.0,
        a22: 2.0,
        a12: Complex64::new(0.5, -0.5),
    };
    let op = assemble_operator(&AlphaForm::constant(2, a).unwrap(), &snapped_ball(2, 0.25, 1.0)).unwrap();
    for p in 0..op.mask().interior().len() {
        let s = op.stencil(p);
        assert!(s.center < 0.0);
        assert!(s.entries.iter().all(|e| e.1 >= 0.0));
        let sum: f64 = s.entries.iter().map(|e| e.1).sum::<f64>() + s.center;
        assert!(sum.abs() < 1e-9);
    }
}

#[test]
fn verdicts_invariant_under_scaling() {
    let mask = snapped_ball(2, 0.25, 1.0);
    let op = assemble_operator(&diag13(), &mask).unwrap();
    let g = mask.grid().clone();
    let fields = [
        GridFunction::from_fn(g.clone(), |x| 2.0 * abs2(x, 0) - abs2(x, 1)),
        GridFunction::from_fn(g.clone(), |x| -3.0 * abs2(x, 0) + 2.0 * abs2(x, 1)),
        GridFunction::from_fn(g, |x| (x[0] - 0.1).abs() + x[3] * x[3]),
    ];
    for c in [1e-3, 0.5, 7.0, 1e4] {
        let sop = op.scaled(c).unwrap();
        for u in &fields {
            assert_eq!(
                is_alpha_subharmonic(u, &op, None).unwrap().verdict,
                is_alpha_subharmonic(u, &sop, None).unwrap().verdict
            );
        }
    }
}

#[test]
fn consistency_order_on_radial_family() {
    // u = exp(-|z|^2), Δ_α u = Σ_j ∂²/∂z_j∂z̄_j u = (|z|^2 - n) e^{-|z|^2}
    let mut errs = Vec::new();
    for h in [0.125, 0.0625, 0.03125] {
        let mask = snapped_ball(1, h, 1.0);
        let op = assemble_operator(&AlphaForm::identity(1), &mask).unwrap();
        let g = mask.grid().clone();
        let u = GridFunction::from_fn(g.clone(), |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let r = op.apply(&u).unwrap();
        let e = mask
            .interior()
            .iter()
            .map(|&i| {
                let p = g.point(i);
                let s = p[0] * p[0] + p[1] * p[1];
                (r.get(i) - (s - 1.0) * (-s).exp()).abs()
            })
            .fold(0.0, f64::max);
        errs.push(e);
    }
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
    }
}

#[test]
fn cut_arms_are_exact_on_the_barrier() {
    let mask = cut_ball(1, 1.0 / 16.0, 1.0);
    let op = assemble_operator(&AlphaForm::identity(1), &mask).unwrap();
    assert!(op.cut_node_count() > 0);
    let rho = mask.barrier().unwrap();
    constant_on_interior(&op.apply(rho).unwrap(), &mask, 1.0, 1e-8);

    let mask = cut_ball(2, 0.125, 1.0);
    let op = assemble_operator(&AlphaForm::identity(2), &mask).unwrap();
    constant_on_interior(&op.apply(mask.barrier().unwrap()).unwrap(), &mask, 2.0, 1e-8);
}

#[test]
fn hole_arms_are_exact_on_quadratic_vanishing_on_the_hole() {
    let mask = cut_ball(1, 1.0 / 32.0, 1.0);
    let op = assemble_operator(&AlphaForm::identity(1), &mask).unwrap();
    let k = NodeSet::from_shape(&mask, &Shape::origin_ball(2, 0.25), "K");
    let hop = op.with_hole(&k).unwrap();
    let mut u = GridFunction::from_fn(mask.grid().clone(), |x| x[0] * x[0] + x[1] * x[1] - 1.0 / 16.0);
    for &i in k.indices() {
        u.set(i, 0.0);
    }
    let r = hop.apply(&u).unwrap();
    let outer = mask.barrier().unwrap();
    for &i in mask.interior() {
        if k.contains(i) {
            continue;
        }
        // arms that reach the outer boundary read u there as the crossing value
        let touches_outer = (0..2).any(|a| {
            [-1i64, 1].iter().any(|&s| {
                let mut v = [0i64; 2];
                v[a] = s;
                !mask.is_interior(mask.grid().offset(i, &v).unwrap())
            })
        });
        if !touches_outer {
            assert!((r.get(i) - 1.0).abs() < 1e-8, "node {i}: {}", r.get(i));
        }
    }
    assert!(outer.get(k.indices()[0]) < 0.0);
}

#[test]
fn poisson_kernel_rows_are_probability_vectors() {
    let g = build_grid(1, &[33, 33], 1.0 / 16.0, &[-1.0, -1.0]).unwrap();
    let parent = Arc::new(classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(2, 0.9))).unwrap());
    let op = assemble_operator(&AlphaForm::identity(1), &parent).unwrap();
    let h = g.h();
    let ball = classify_domain(&g, &DomainSpec::snapped(Shape::origin_ball(2, 4.0 * h + 1e-9))).unwrap();
    let ker = poisson_kernel(&op, &ball).unwrap();
    assert!(ker.min_weight() >= -1e-12);
    assert!(ker.max_row_sum_defect() <= 1e-10);
    // four-fold symmetry of the centre row
    let c = g.nearest_node(&[0.0, 0.0]);
    let row = ker.row(c).unwrap();
    for (col, &b) in ker.boundary.iter().enumerate() {
        let p = g.point(b);
        let rot = g.nearest_node(&[-p[1], p[0]]);
        let col2 = ker.boundary.iter().position(|&x| x == rot).unwrap();
        assert!((row[col] - row[col2]).abs() < 1e-13);
    }
    // reproducing property on a harmonic polynomial
    let v = GridFunction::from_fn(g.clone(), |x| x[0] * x[0] - x[1] * x[1] + 0.5 * x[1]);
    let rep = submean_check(&v, &ker, 1e-9);
    assert!(rep.max_violation.abs() < 1e-9);
    let neg = v.scaled(-1.0);
    assert!(submean_check(&neg, &ker, 1e-9).max_violation.abs() < 1e-9);
}

#[test]
fn submean_property_for_the_diag_one_three_example() {
    let mask = snapped_ball(2, 0.25, 1.0);
    let op = assemble_operator(&diag13(), &mask).unwrap();
    let g = mask.grid().clone();
    let ball = classify_domain(&g, &DomainSpec::snapped(Shape::origin_ball(4, 0.5 + 1e-9))).unwrap();
    let ker = poisson_kernel(&op, &ball).unwrap();
    assert!(ker.min_weight() >= -1e-12);
    assert!(ker.max_row_sum_defect() <= 1e-10);
    let u1 = GridFunction::from_fn(g.clone(), |x| 2.0 * abs2(x, 0) - abs2(x, 1));
    let u2 = GridFunction::from_fn(g.clone(), |x| -3.0 * abs2(x, 0) + 2.0 * abs2(x, 1));
    assert!(submean_check(&u2, &ker, 1e-12).holds);
    let r1 = submean_check(&u1, &ker, 1e-12);
    assert!(!r1.holds);
    let c = g.nearest_node(&[0.0; 4]);
    let row = ker.interior.binary_search(&c).unwrap();
    assert!(u1.get(c) > ker.boundary_average(row, &u1));
    let centre_mean = ker.boundary_average(row, &u2);
    assert!(centre_mean >= u2.get(c));
}

/// Quadratic with `L q = margin` exactly: a random symmetric form shifted
/// by a multiple of the identity.
fn random_subsolution_quadratic(rng: &mut ChaCha8Rng, b: &[[f64; 4]; 4], dim: usize) -> impl Fn(&[f64]) -> f64 {
    let mut q = [[0.0; 4]; 4];
    for p in 0..dim {
        for r in p..dim {
            q[p][r] = rng.random_range(-1.0..1.0);
            q[r][p] = q[p][r];
        }
    }
    let tr_b: f64 = (0..dim).map(|p| b[p][p]).sum();
    let lq: f64 = (0..dim).flat_map(|p| (0..dim).map(move |r| (p, r))).map(|(p, r)| 2.0 * b[p][r] * q[p][r]).sum();
    let margin = rng.random_range(0.0..0.5);
    let shift = (margin - lq) / (2.0 * tr_b);
    for p in 0..dim {
        q[p][p] += shift;
    }
    let lin: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c0 = rng.random_range(-1.0..1.0);
    move |x: &[f64]| {
        let mut s = c0;
        for p in 0..dim {
            s += lin[p] * x[p];
            for r in 0..dim {
                s += q[p][r] * x[p] * x[r];
            }
        }
        s
    }
}

#[test]
fn maximum_principle_over_random_subsolutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let cases: Vec<(Arc<DomainMask>, AlphaForm)> = vec![
        (snapped_ball(1, 1.0 / 16.0, 1.0), AlphaForm::identity(1)),
        (snapped_ball(2, 0.25, 1.0), diag13()),
        (
            snapped_ball(2, 0.25, 1.0),
            AlphaForm::constant(
                2,
                Coeffs {
                    a11: 2.0,
                    a22: 1.0,
                    a12: Complex64::new(0.3, -0.2),
                },
            )
            .unwrap(),
        ),
    ];
    let mut count = 0;
    for trial in 0..50 {
        let (mask, form) = &cases[trial % cases.len()];
        let op = assemble_operator(form, mask).unwrap();
        let dim = mask.grid().dim();
        let b = form.at(0).real_matrix(mask.grid().n());
        let pieces: Vec<_> = (0..rng.random_range(1..4))
            .map(|_| random_subsolution_quadratic(&mut rng, &b, dim))
            .collect();
        let u = GridFunction::from_fn(mask.grid().clone(), |x| {
            pieces.iter().map(|f| f(x)).fold(f64::NEG_INFINITY, f64::max)
        });
        assert!(is_alpha_subharmonic(&u, &op, None).unwrap().verdict);
        let rep = max_principle_check(&u, mask, &op, 1e-12).unwrap();
        assert!(rep.holds, "trial {trial}: {rep:?}");
        count += 1;
    }
    assert_eq!(count, 50);
}

#[test]
fn maximum_principle_simple_cases() {
    let mask = snapped_ball(1, 1.0 / 32.0, 1.0);
    let op = assemble_operator(&AlphaForm::identity(1), &mask).unwrap();
    let g = mask.grid().clone();
    let c = max_principle_check(&GridFunction::constant(g.clone(), 0.7), &mask, &op, 0.0).unwrap();
    assert!(c.holds && c.interior_max == c.boundary_max);
    let r2 = GridFunction::from_fn(g, |x| x[0] * x[0] + x[1] * x[1]);
    let rep = max_principle_check(&r2, &mask, &op, 0.0).unwrap();
    assert!(rep.holds && rep.interior_max < 1.0 && rep.boundary_max >= 1.0);
}
