use super::*;
use crate::eqbasis::{equivariant_map_basis, invariant_basis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn parse(s: &str) -> SeqExpr {
    s.parse().unwrap()
}

fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0)
}

fn random_in_span(basis: &EqBasis, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn compatible_linear_maps() {
    let v = SeqExpr::Base;
    let b = compatible_map_basis(&v, &v, GroupFamily::SymmetricSn, 4).unwrap();
    assert_eq!(b.len(), 1);
    assert!(b.coefficients(&DMatrix::identity(4, 4)).unwrap().1 < 1e-12);

    let s = SeqExpr::Scalar;
    let b = compatible_map_basis(&s, &s, GroupFamily::Trivial, 1).unwrap();
    assert_eq!(b.dense_vectors()[0].as_slice(), &[1.0]);

    let b = compatible_map_basis(&v, &v, GroupFamily::OrthogonalOn, 2).unwrap();
    assert_eq!(b.len(), 1);
    assert!(b.coefficients(&DMatrix::identity(2, 2)).unwrap().1 < 1e-12);
}

#[test]
fn compatible_basis_needs_the_presentation_degree() {
    let err = compatible_map_basis(&SeqExpr::power(2), &SeqExpr::Base, GroupFamily::SymmetricSn, 1)
        .unwrap_err();
    assert!(matches!(
        err,
        Error::BelowPresentationDegree { level: 1, required: 2 }
    ));
}

#[test]
fn compatible_biases() {
    assert!(compatible_bias_basis(&SeqExpr::Base, GroupFamily::SymmetricSn, 4)
        .unwrap()
        .is_empty());
    let e1 = compatible_bias_basis(&SeqExpr::Base, GroupFamily::Trivial, 3).unwrap();
    assert_eq!(e1.len(), 1);
    assert_eq!(e1.dense_vectors()[0].as_slice(), &[1.0, 0.0, 0.0]);
    let s = compatible_bias_basis(&SeqExpr::Scalar, GroupFamily::SymmetricSn, 2).unwrap();
    assert_eq!(s.dense_vectors()[0].as_slice(), &[1.0]);
}

#[test]
fn compatible_maps_are_free_maps() {
    for (i, o) in [("V^2", "2*V + 2*V^2"), ("2*V + 2*V^2", "S"), ("V + V^2", "V^2")] {
        let (i, o) = (parse(i), parse(o));
        let comp = compatible_map_basis(&i, &o, GroupFamily::SymmetricSn, 5).unwrap();
        let free = equivariant_map_basis(&i, &o, GroupFamily::SymmetricSn, 5).unwrap();
        assert!(comp.len() <= free.len());
        for k in 0..comp.len() {
            let mut c = vec![0.0; comp.len()];
            c[k] = 1.0;
            let w = comp.assemble(&c).unwrap();
            assert!(free.coefficients(&w).unwrap().1 < 1e-8);
        }
    }
}

#[test]
fn identity_and_all_ones_extend() {
    let v = SeqExpr::Base;
    let opts = ExtensionOptions::default();
    let src = equivariant_map_basis(&v, &v, GroupFamily::SymmetricSn, 4).unwrap();
    let t = extend_map(&src, &DMatrix::identity(4, 4), 6, &opts).unwrap();
    assert!(t.unique);
    assert!((t.materialize().unwrap() - DMatrix::identity(6, 6)).amax() < 1e-10);

    let src = equivariant_map_basis(&v, &v, GroupFamily::SymmetricSn, 3).unwrap();
    let t = extend_map(&src, &ones(3), 5, &opts).unwrap();
    assert!((t.materialize().unwrap() - ones(5)).amax() < 1e-10);

    let bias = invariant_basis(&v, GroupFamily::SymmetricSn, 4).unwrap();
    let t = extend_map(&bias, &DMatrix::from_element(4, 1, 1.0), 7, &opts).unwrap();
    assert!((t.materialize().unwrap() - DMatrix::from_element(7, 1, 1.0)).amax() < 1e-10);
}

#[test]
fn restriction_examples() {
    let kind = BasisKind::MapSpace {
        input: SeqExpr::Base,
        output: SeqExpr::Base,
    };
    let r = restrict_map(&kind, &DMatrix::identity(5, 5), 5, 3).unwrap();
    assert_eq!(r, DMatrix::identity(3, 3));
    assert_eq!(restrict_map(&kind, &ones(5), 5, 3).unwrap(), ones(3));
}

#[test]
fn extension_then_restriction_round_trips() {
    let opts = ExtensionOptions::default();
    for (i, o, family, n0) in [
        ("V^2", "2*V + 2*V^2", GroupFamily::SymmetricSn, 5),
        ("S + V", "V^2", GroupFamily::OrthogonalOn, 3),
        ("V + V^2", "V", GroupFamily::SignedPermBn, 3),
    ] {
        let src = equivariant_map_basis(&parse(i), &parse(o), family, n0).unwrap();
        let c = random_in_span(&src, 3);
        let w0 = src.assemble(&c).unwrap();
        let up = extend_coefficients(&src, &c, n0 + 2, &opts).unwrap();
        let down = restrict_map(src.kind(), &up.materialize().unwrap(), n0 + 2, n0).unwrap();
        assert!((down - &w0).amax() < 1e-8, "{i} -> {o}");
    }
}

#[test]
fn below_presentation_degree_extension_is_tagged() {
    let v2 = SeqExpr::power(2);
    let src = equivariant_map_basis(&v2, &v2, GroupFamily::SymmetricSn, 2).unwrap();
    let c = random_in_span(&src, 1);
    let t = extend_coefficients(&src, &c, 5, &ExtensionOptions::default()).unwrap();
    assert!(!t.unique);
    // Still consistent with the source entries.
    let down = restrict_map(src.kind(), &t.materialize().unwrap(), 5, 2).unwrap();
    assert!((down - src.assemble(&c).unwrap()).amax() < 1e-8);
}

#[test]
fn raw_solver_agrees_with_block_solver() {
    let raw = ExtensionOptions {
        raw_vec: true,
        lstsq_tol: 1e-14,
        ..Default::default()
    };
    let blocks = ExtensionOptions::default();
    let cases = [
        ("V", "S + V", GroupFamily::SymmetricSn, 2, false),
        ("V^2", "V", GroupFamily::SymmetricSn, 2, true),
        ("S + V", "V", GroupFamily::OrthogonalOn, 2, false),
    ];
    for (i, o, family, n0, compatible) in cases {
        let (i, o) = (parse(i), parse(o));
        let src = if compatible {
            compatible_map_basis(&i, &o, family, n0).unwrap()
        } else {
            equivariant_map_basis(&i, &o, family, n0).unwrap()
        };
        let c = random_in_span(&src, 7);
        let a = extend_coefficients(&src, &c, n0 + 1, &blocks).unwrap();
        let b = extend_coefficients(&src, &c, n0 + 1, &raw).unwrap();
        let diff = (a.materialize().unwrap() - b.materialize().unwrap()).amax();
        assert!(diff < 1e-6, "{i} -> {o}: {diff}");
    }
}

#[test]
fn source_outside_the_span_is_rejected() {
    let v = SeqExpr::Base;
    let src = equivariant_map_basis(&v, &v, GroupFamily::SymmetricSn, 3).unwrap();
    let mut w = DMatrix::identity(3, 3);
    w[(0, 1)] = 5.0;
    assert!(extend_map(&src, &w, 4, &ExtensionOptions::default()).is_err());
}
