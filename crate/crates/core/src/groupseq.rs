use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SignedPerm, SparseOperator};

/// A nested family of groups `G(1) ⊆ G(2) ⊆ …` acting on `ℝⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupFamily {
    #[serde(rename = "Sn")]
    SymmetricSn,
    #[serde(rename = "On")]
    OrthogonalOn,
    #[serde(rename = "SOn")]
    SpecialOrthogonalSOn,
    #[serde(rename = "Bn")]
    SignedPermBn,
    #[serde(rename = "trivial")]
    Trivial,
}

impl GroupFamily {
    pub const ALL: [GroupFamily; 5] = [
        GroupFamily::SymmetricSn,
        GroupFamily::OrthogonalOn,
        GroupFamily::SpecialOrthogonalSOn,
        GroupFamily::SignedPermBn,
        GroupFamily::Trivial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupFamily::SymmetricSn => "Sn",
            GroupFamily::OrthogonalOn => "On",
            GroupFamily::SpecialOrthogonalSOn => "SOn",
            GroupFamily::SignedPermBn => "Bn",
            GroupFamily::Trivial => "trivial",
        }
    }

    pub fn is_continuous(self) -> bool {
        matches!(
            self,
            GroupFamily::OrthogonalOn | GroupFamily::SpecialOrthogonalSOn
        )
    }

    /// Discrete generators as signed permutations of `ℝⁿ`.
    pub fn discrete_generator_perms(self, n: usize) -> Vec<SignedPerm> {
        match self {
            GroupFamily::SymmetricSn => permutation_generators(n),
            GroupFamily::SignedPermBn => {
                let mut gens = permutation_generators(n);
                gens.push(first_flip(n));
                gens
            }
            GroupFamily::OrthogonalOn => vec![first_flip(n)],
            GroupFamily::SpecialOrthogonalSOn | GroupFamily::Trivial => Vec::new(),
        }
    }

    /// Discrete generators; together with the Lie algebra they generate `G(n)`.
    pub fn discrete_generators(self, n: usize) -> Vec<SparseOperator> {
        self.discrete_generator_perms(n)
            .iter()
            .map(SignedPerm::to_sparse)
            .collect()
    }

    /// `{E_ij − E_ji : i < j}` for the rotation groups, empty otherwise.
    pub fn lie_algebra_basis(self, n: usize) -> Vec<SparseOperator> {
        if !self.is_continuous() {
            return Vec::new();
        }
        let mut basis = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                basis.push(
                    SparseOperator::from_triplets(n, n, vec![(i, j, 1.0), (j, i, -1.0)])
                        .expect("indices in range"),
                );
            }
        }
        basis
    }

    /// Signed permutations lying in `G(n)` that contain the discrete generators.
    ///
    /// For the rotation groups this adds the signed-permutation subgroup (all of `Bₙ` for
    /// `O(n)`, its determinant-one part for `SO(n)`). Invariance under these is implied by
    /// invariance under `G(n)`, and it lets most of the solve happen on index orbits.
    pub fn symmetry_generators(self, n: usize) -> Vec<SignedPerm> {
        match self {
            GroupFamily::OrthogonalOn => GroupFamily::SignedPermBn.discrete_generator_perms(n),
            GroupFamily::SpecialOrthogonalSOn => rotation_monomials(n),
            _ => self.discrete_generator_perms(n),
        }
    }

    /// Random element of `G(n)`: uniform for the finite groups, Haar for the rotation groups.
    pub fn random_element(self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            GroupFamily::Trivial => DMatrix::identity(n, n),
            GroupFamily::SymmetricSn | GroupFamily::SignedPermBn => {
                let mut image: Vec<usize> = (0..n).collect();
                image.shuffle(&mut rng);
                let negative = (0..n)
                    .map(|_| self == GroupFamily::SignedPermBn && rng.random_bool(0.5))
                    .collect();
                SignedPerm::new(image, negative)
                    .expect("shuffled identity is a permutation")
                    .to_sparse()
                    .to_dense()
            }
            GroupFamily::OrthogonalOn | GroupFamily::SpecialOrthogonalSOn => {
                let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let qr = gauss.qr();
                let mut q = qr.q();
                let r = qr.r();
                for j in 0..n {
                    if r[(j, j)] < 0.0 {
                        q.column_mut(j).neg_mut();
                    }
                }
                if self == GroupFamily::SpecialOrthogonalSOn && q.determinant() < 0.0 {
                    q.column_mut(0).neg_mut();
                }
                q
            }
        }
    }
}

impl fmt::Display for GroupFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroupFamily::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown group family `{s}` (expected one of Sn, On, SOn, Bn, trivial)"
                ))
            })
    }
}

fn permutation_generators(n: usize) -> Vec<SignedPerm> {
    let mut gens = Vec::new();
    if n >= 2 {
        let mut swap: Vec<usize> = (0..n).collect();
        swap.swap(0, 1);
        gens.push(SignedPerm::from_permutation(swap).expect("transposition"));
    }
    if n >= 3 {
        gens.push(cycle(n));
    }
    gens
}

fn cycle(n: usize) -> SignedPerm {
    SignedPerm::from_permutation((0..n).map(|i| (i + 1) % n).collect()).expect("n-cycle")
}

fn first_flip(n: usize) -> SignedPerm {
    let mut negative = vec![false; n];
    if n > 0 {
        negative[0] = true;
    }
    SignedPerm::new((0..n).collect(), negative).expect("identity permutation")
}

/// Generators of the determinant-one signed permutations.
fn rotation_monomials(n: usize) -> Vec<SignedPerm> {
    if n < 2 {
        return Vec::new();
    }
    let mut image: Vec<usize> = (0..n).collect();
    image.swap(0, 1);
    let mut negative = vec![false; n];
    // e1 -> e2, e2 -> -e1: a quarter turn in the first coordinate plane.
    negative[1] = true;
    let mut gens = vec![SignedPerm::new(image, negative).expect("quarter turn")];
    if n >= 3 {
        let mut c = cycle(n);
        if c.determinant() < 0.0 {
            let mut negative = vec![false; n];
            negative[0] = true;
            c = SignedPerm::new((0..n).map(|i| (i + 1) % n).collect(), negative)
                .expect("signed cycle");
        }
        gens.push(c);
        let mut negative = vec![false; n];
        negative[0] = true;
        negative[1] = true;
        gens.push(SignedPerm::new((0..n).collect(), negative).expect("double flip"));
    }
    gens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::expm;
    use std::collections::{HashSet, VecDeque};

    fn closure(gens: &[SignedPerm], n: usize) -> HashSet<SignedPerm> {
        let mut seen = HashSet::new();
        let id = SignedPerm::identity(n);
        seen.insert(id.clone());
        let mut queue = VecDeque::from([id]);
        while let Some(g) = queue.pop_front() {
            for s in gens {
                let h = s.compose(&g);
                if seen.insert(h.clone()) {
                    queue.push_back(h);
                }
            }
        }
        seen
    }

    fn pad(g: &SignedPerm) -> SignedPerm {
        let n = g.len();
        let image = (0..=n).map(|i| if i < n { g.image(i) } else { n }).collect();
        let negative = (0..=n).map(|i| i < n && g.is_negative(i)).collect();
        SignedPerm::new(image, negative).unwrap()
    }

    fn orthogonality_defect(g: &DMatrix<f64>) -> f64 {
        let n = g.nrows();
        (g.transpose() * g - DMatrix::identity(n, n)).amax()
    }

    #[test]
    fn symmetric_group_of_order_six() {
        let gens = GroupFamily::SymmetricSn.discrete_generator_perms(3);
        assert_eq!(gens.len(), 2);
        assert_eq!(closure(&gens, 3).len(), 6);
        assert!(GroupFamily::SymmetricSn.discrete_generators(1).is_empty());
        assert_eq!(GroupFamily::SymmetricSn.discrete_generators(2).len(), 1);
    }

    #[test]
    fn hyperoctahedral_group_of_order_eight() {
        let gens = GroupFamily::SignedPermBn.discrete_generator_perms(2);
        assert_eq!(closure(&gens, 2).len(), 8);
        assert_eq!(
            closure(&GroupFamily::SignedPermBn.discrete_generator_perms(3), 3).len(),
            48
        );
    }

    #[test]
    fn rotation_monomials_are_the_even_half() {
        let gens = GroupFamily::SpecialOrthogonalSOn.symmetry_generators(3);
        let group = closure(&gens, 3);
        assert_eq!(group.len(), 24);
        assert!(group.iter().all(|g| g.determinant() == 1.0));
        assert_eq!(
            closure(&GroupFamily::SpecialOrthogonalSOn.symmetry_generators(4), 4).len(),
            192
        );
        assert_eq!(
            closure(&GroupFamily::SpecialOrthogonalSOn.symmetry_generators(2), 2).len(),
            4
        );
    }

    #[test]
    fn trivial_and_rotation_families_have_no_permutations() {
        assert!(GroupFamily::Trivial.discrete_generators(5).is_empty());
        assert!(GroupFamily::SpecialOrthogonalSOn.discrete_generators(5).is_empty());
        assert_eq!(GroupFamily::OrthogonalOn.discrete_generators(4).len(), 1);
    }

    #[test]
    fn generators_are_orthogonal() {
        for family in GroupFamily::ALL {
            for n in 1..6 {
                for g in family.discrete_generators(n) {
                    assert!(orthogonality_defect(&g.to_dense()) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn generators_nest_into_the_next_level() {
        for family in [
            GroupFamily::SymmetricSn,
            GroupFamily::SignedPermBn,
            GroupFamily::OrthogonalOn,
            GroupFamily::SpecialOrthogonalSOn,
        ] {
            for n in 1..4 {
                let upper = closure(&family.symmetry_generators(n + 1), n + 1);
                for g in family.symmetry_generators(n) {
                    assert!(upper.contains(&pad(&g)), "{family} level {n}");
                }
            }
        }
    }

    #[test]
    fn lie_algebra_sizes_and_skewness() {
        assert_eq!(GroupFamily::OrthogonalOn.lie_algebra_basis(3).len(), 3);
        assert_eq!(GroupFamily::SpecialOrthogonalSOn.lie_algebra_basis(5).len(), 10);
        assert!(GroupFamily::SymmetricSn.lie_algebra_basis(7).is_empty());
        assert!(GroupFamily::SignedPermBn.lie_algebra_basis(3).is_empty());
        assert!(GroupFamily::Trivial.lie_algebra_basis(3).is_empty());
        for a in GroupFamily::OrthogonalOn.lie_algebra_basis(4) {
            let d = a.to_dense();
            assert_eq!(&d + d.transpose(), DMatrix::zeros(4, 4));
        }
    }

    #[test]
    fn lie_exponentials_are_orthogonal() {
        for a in GroupFamily::OrthogonalOn.lie_algebra_basis(4) {
            for t in [0.1, 1.0] {
                let g = expm(&(a.to_dense() * t));
                assert!(orthogonality_defect(&g) <= 1e-8);
            }
        }
    }

    #[test]
    fn random_elements() {
        assert_eq!(GroupFamily::Trivial.random_element(4, 17), DMatrix::identity(4, 4));
        for seed in 0..5 {
            let p = GroupFamily::SymmetricSn.random_element(3, seed);
            assert!(orthogonality_defect(&p) <= 1e-12);
            assert!(p.iter().all(|&v| v == 0.0 || v == 1.0));
            let o = GroupFamily::OrthogonalOn.random_element(4, seed);
            assert!(orthogonality_defect(&o) <= 1e-10);
            assert!((o.determinant().abs() - 1.0).abs() <= 1e-10);
            let r = GroupFamily::SpecialOrthogonalSOn.random_element(4, seed);
            assert!((r.determinant() - 1.0).abs() <= 1e-10);
            let b = GroupFamily::SignedPermBn.random_element(5, seed);
            assert!(orthogonality_defect(&b) <= 1e-12);
        }
    }

    #[test]
    fn names_round_trip() {
        for family in GroupFamily::ALL {
            assert_eq!(family.name().parse::<GroupFamily>().unwrap(), family);
            let json = serde_json::to_string(&family).unwrap();
            assert_eq!(json, format!("\"{}\"", family.name()));
        }
        assert!("Zn".parse::<GroupFamily>().is_err());
    }
}
