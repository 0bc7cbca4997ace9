use super::*;
use crate::conseq::action;
use crate::linalg::{nullspace_orthonormal, SparseOperator};
use crate::testutil::sn_orbit_count;

fn parse(s: &str) -> SeqExpr {
    s.parse().unwrap()
}

fn span_residual(basis: &EqBasis, target: &DMatrix<f64>) -> f64 {
    basis.coefficients(target).unwrap().1 / target.norm()
}

fn orthonormality_defect(basis: &EqBasis) -> f64 {
    let vs = basis.dense_vectors();
    let mut worst = 0.0f64;
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate() {
            let t = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dot(b) - t).abs());
        }
    }
    worst
}

fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0)
}

#[test]
fn permutation_invariant_vector() {
    let b = invariant_basis(&SeqExpr::Base, GroupFamily::SymmetricSn, 4).unwrap();
    assert_eq!(b.len(), 1);
    for x in b.dense_vectors()[0].iter() {
        assert!((x - 0.5).abs() < 1e-12);
    }
}

#[test]
fn permutation_invariant_matrices() {
    let b = invariant_basis(&SeqExpr::power(2), GroupFamily::SymmetricSn, 4).unwrap();
    assert_eq!(b.len(), 2);
    // Invariants are stored as 4² x 1 columns.
    let as_col = |m: DMatrix<f64>| DMatrix::from_column_slice(16, 1, m.as_slice());
    assert!(span_residual(&b, &as_col(DMatrix::identity(4, 4))) < 1e-12);
    assert!(span_residual(&b, &as_col(ones(4))) < 1e-12);
}

#[test]
fn no_rotation_invariant_vectors() {
    assert!(invariant_basis(&SeqExpr::Base, GroupFamily::OrthogonalOn, 3)
        .unwrap()
        .is_empty());
}

#[test]
fn permutation_equivariant_linear_maps() {
    let v = SeqExpr::Base;
    let b = equivariant_map_basis(&v, &v, GroupFamily::SymmetricSn, 5).unwrap();
    assert_eq!(b.len(), 2);
    assert!(span_residual(&b, &DMatrix::identity(5, 5)) < 1e-12);
    assert!(span_residual(&b, &ones(5)) < 1e-12);

    let v2 = SeqExpr::power(2);
    let v3 = SeqExpr::power(3);
    assert_eq!(
        equivariant_map_basis(&v2, &v2, GroupFamily::SymmetricSn, 5).unwrap().len(),
        15
    );
    assert_eq!(
        equivariant_map_basis(&v2, &v3, GroupFamily::SymmetricSn, 6).unwrap().len(),
        52
    );
}

#[test]
fn rotation_equivariant_maps_are_scalar() {
    let v = SeqExpr::Base;
    let b = equivariant_map_basis(&v, &v, GroupFamily::OrthogonalOn, 4).unwrap();
    assert_eq!(b.len(), 1);
    assert!(span_residual(&b, &DMatrix::identity(4, 4)) < 1e-12);
}

#[test]
fn rotation_invariants_distinguish_determinant() {
    // The Levi-Civita tensor is SO(3)-invariant but flips sign under reflections.
    let v3 = SeqExpr::power(3);
    assert_eq!(
        invariant_basis(&v3, GroupFamily::SpecialOrthogonalSOn, 3).unwrap().len(),
        1
    );
    assert!(invariant_basis(&v3, GroupFamily::OrthogonalOn, 3).unwrap().is_empty());
    assert_eq!(
        invariant_basis(&SeqExpr::power(4), GroupFamily::OrthogonalOn, 3).unwrap().len(),
        3
    );
}

#[test]
fn trivial_group_leaves_everything() {
    let v = SeqExpr::Base;
    assert_eq!(
        equivariant_map_basis(&v, &v, GroupFamily::Trivial, 3).unwrap().len(),
        9
    );
}

#[test]
fn permutation_dimensions_match_orbit_counts() {
    for k in 0..=5usize {
        for l in 0..=5 - k {
            let n = (k + l).max(1);
            let b = equivariant_map_basis(
                &SeqExpr::power(k),
                &SeqExpr::power(l),
                GroupFamily::SymmetricSn,
                n,
            )
            .unwrap();
            assert_eq!(b.len(), sn_orbit_count(n, k + l), "k={k} l={l}");
        }
    }
}

#[test]
fn single_lie_constraint_matches_full_stack() {
    // Dense oracle: stack every generator and every Lie element for V² -> V² under O(3).
    let n = 3;
    let space = SeqExpr::power(4);
    let d = space.dim(n).unwrap();
    let mut rows = Vec::new();
    for g in GroupFamily::OrthogonalOn.discrete_generators(n) {
        rows.push(action(&space, &g).unwrap().sub(&SparseOperator::identity(d)).unwrap());
    }
    for a in GroupFamily::OrthogonalOn.lie_algebra_basis(n) {
        rows.push(lie_action(&space, &a).unwrap());
    }
    let stacked = SparseOperator::vstack(&rows).unwrap();
    let oracle = nullspace_orthonormal(&stacked, None).unwrap();
    let v2 = SeqExpr::power(2);
    let b = equivariant_map_basis(&v2, &v2, GroupFamily::OrthogonalOn, n).unwrap();
    assert_eq!(b.len(), oracle.len());
    for x in &oracle {
        let m = DMatrix::from_column_slice(9, 9, x.as_slice());
        assert!(span_residual(&b, &m) < 1e-10);
    }
}

#[test]
fn bases_are_orthonormal_and_equivariant() {
    let cases = [
        ("S + 2*V + V^2", "V + V^2", GroupFamily::SymmetricSn, 4),
        ("2*V + V^2", "S + V^2", GroupFamily::OrthogonalOn, 3),
        ("V + V^2", "V^2", GroupFamily::SpecialOrthogonalSOn, 3),
        ("V (x) (S + V)", "V", GroupFamily::SignedPermBn, 3),
        ("S + V", "S + V", GroupFamily::Trivial, 2),
    ];
    for (i, o, family, n) in cases {
        let (input, output) = (parse(i), parse(o));
        let b = equivariant_map_basis(&input, &output, family, n).unwrap();
        assert!(!b.is_empty());
        assert!(orthonormality_defect(&b) < 1e-10, "{i} -> {o}");
        for seed in 0..5 {
            let g = SparseOperator::from_dense(&family.random_element(n, seed));
            let ri = action(&input, &g).unwrap().to_dense();
            let ro = action(&output, &g).unwrap().to_dense();
            for k in 0..b.len() {
                let mut c = vec![0.0; b.len()];
                c[k] = 1.0;
                let w = b.assemble(&c).unwrap();
                assert!((&ro * &w * ri.transpose() - &w).amax() < 1e-8, "{i} -> {o}");
            }
        }
    }
}

#[test]
fn vectors_use_the_column_stacking_layout() {
    let input = parse("S + V");
    let output = parse("V");
    let b = equivariant_map_basis(&input, &output, GroupFamily::SymmetricSn, 3).unwrap();
    for k in 0..b.len() {
        let mut c = vec![0.0; b.len()];
        c[k] = 1.0;
        let w = b.assemble(&c).unwrap();
        let v = b.vector(k).unwrap().to_dense(b.ambient_dim());
        assert_eq!(w.as_slice(), v.as_slice());
    }
}

#[test]
fn dimensions_stabilize() {
    let hidden = parse("2*V + 2*V^2");
    for n in [4, 5] {
        let lo = equivariant_map_basis(&hidden, &hidden, GroupFamily::SymmetricSn, n).unwrap();
        let hi = equivariant_map_basis(&hidden, &hidden, GroupFamily::SymmetricSn, n + 1).unwrap();
        assert_eq!(lo.len(), hi.len());
    }
}

#[test]
fn serialization_round_trip() {
    let b = equivariant_map_basis(&parse("S + V"), &parse("V^2"), GroupFamily::OrthogonalOn, 3)
        .unwrap();
    let text = b.to_json().unwrap();
    let back = EqBasis::from_json(&text).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.checksum(), b.checksum());
    let tampered = text.replacen("\"level\":3", "\"level\":4", 1);
    assert!(EqBasis::from_json(&tampered).is_err());
}
