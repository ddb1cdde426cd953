//! Positive root systems and their fundamental Weyl chambers.
//!
//! A [`RootSystem`] stores the positive half `R+` of a reduced root system as
//! explicit real vectors, together with a partition of the roots into orbit
//! classes. Every orbit carries one multiplicity value, so time-dependent
//! multiplicities are indexed by orbit rather than by root.
//!
//! The fundamental chamber `W = {x : <a, x> > 0 for all a in R+}` is never
//! materialised; membership is decided by [`RootSystem::min_pairing`].

use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A nonzero direction in the ambient space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Root {
    vector: Vec<f64>,
    norm_sq: f64,
}

impl Root {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        let norm_sq = dot(&vector, &vector);
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "root must be a finite nonzero vector, got {vector:?}"
            )));
        }
        Ok(Root { vector, norm_sq })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    pub fn pairing(&self, x: &[f64]) -> f64 {
        dot(&self.vector, x)
    }

    /// Reflection of `v` through the hyperplane orthogonal to this root.
    pub fn reflect(&self, v: &[f64]) -> Vec<f64> {
        let scale = 2.0 * dot(&self.vector, v) / self.norm_sq;
        v.iter()
            .zip(&self.vector)
            .map(|(vi, ai)| vi - scale * ai)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootSystem {
    dim: usize,
    roots: Vec<Root>,
    orbit_of: Vec<usize>,
    orbits: Vec<Vec<usize>>,
}

impl RootSystem {
    /// Builds a positive root system from explicit vectors and one orbit label
    /// per root. Labels must cover `0..m` with every class non-empty.
    ///
    /// The axioms are not checked here; see [`RootSystem::validate_axioms`].
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>, orbit_labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("ambient dimension must be positive".into()));
        }
        if vectors.is_empty() {
            return Err(Error::InvalidParameter("a root system needs at least one root".into()));
        }
        if vectors.len() != orbit_labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} roots but {} orbit labels",
                vectors.len(),
                orbit_labels.len()
            )));
        }
        let mut roots = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            roots.push(Root::new(v)?);
        }
        let orbit_count = orbit_labels.iter().max().map_or(0, |m| m + 1);
        let mut orbits = vec![Vec::new(); orbit_count];
        for (i, &label) in orbit_labels.iter().enumerate() {
            orbits[label].push(i);
        }
        if let Some(empty) = orbits.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("orbit {empty} has no roots")));
        }
        Ok(RootSystem {
            dim,
            roots,
            orbit_of: orbit_labels,
            orbits,
        })
    }

    /// Type A_{d-1} acting on `d` particles: roots `e_i - e_j`, `i < j`, one orbit.
    /// The chamber is `x_1 > x_2 > ... > x_d`.
    pub fn type_a(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(format!("type A needs d >= 2, got {d}")));
        }
        let mut vectors = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in (i + 1)..d {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                v[j] = -1.0;
                vectors.push(v);
            }
        }
        let labels = vec![0; vectors.len()];
        Self::new(d, vectors, labels)
    }

    /// Type B_d: orbit 0 holds the long roots `e_i - e_j`, `e_i + e_j` (`i < j`),
    /// orbit 1 the short roots `e_i`. The chamber is `x_1 > ... > x_d > 0`.
    pub fn type_b(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(format!("type B needs d >= 2, got {d}")));
        }
        let mut vectors = Vec::with_capacity(d * d);
        let mut labels = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in (i + 1)..d {
                let mut minus = vec![0.0; d];
                minus[i] = 1.0;
                minus[j] = -1.0;
                let mut plus = vec![0.0; d];
                plus[i] = 1.0;
                plus[j] = 1.0;
                vectors.push(minus);
                vectors.push(plus);
                labels.extend([0, 0]);
            }
        }
        for i in 0..d {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            vectors.push(v);
            labels.push(1);
        }
        Self::new(d, vectors, labels)
    }

    /// The rank-one system `R+ = {1}` on the real line; its chamber is `(0, inf)`.
    pub fn half_line() -> Self {
        Self::new(1, vec![vec![1.0]], vec![0]).expect("static root system")
    }

    /// Orthogonal direct sum: `a` occupies the first coordinates, `b` the rest.
    /// Orbit labels of `b` are shifted past those of `a`.
    pub fn direct_sum(a: &RootSystem, b: &RootSystem) -> RootSystem {
        let dim = a.dim + b.dim;
        let mut vectors = Vec::with_capacity(a.len() + b.len());
        let mut labels = Vec::with_capacity(a.len() + b.len());
        for (i, root) in a.roots.iter().enumerate() {
            let mut v = root.vector.clone();
            v.resize(dim, 0.0);
            vectors.push(v);
            labels.push(a.orbit_of[i]);
        }
        for (i, root) in b.roots.iter().enumerate() {
            let mut v = vec![0.0; a.dim];
            v.extend_from_slice(&root.vector);
            vectors.push(v);
            labels.push(a.orbit_count() + b.orbit_of[i]);
        }
        Self::new(dim, vectors, labels).expect("direct sum of valid systems")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of positive roots.
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }

    pub fn orbit_of(&self, root_index: usize) -> usize {
        self.orbit_of[root_index]
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_orbit_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.orbit_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} orbit values, got {}",
                self.orbit_count(),
                values.len()
            )));
        }
        Ok(())
    }

    /// Expands per-orbit values into per-root values.
    pub fn expand_orbit_values(&self, orbit_values: &[f64], out: &mut [f64]) {
        for (slot, &orbit) in out.iter_mut().zip(&self.orbit_of) {
            *slot = orbit_values[orbit];
        }
    }

    /// Smallest pairing `min <a, x>` over positive roots; positive iff `x` is in the chamber.
    pub fn min_pairing(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.min_pairing_unchecked(x))
    }

    pub(crate) fn min_pairing_unchecked(&self, x: &[f64]) -> f64 {
        self.roots
            .iter()
            .map(|r| r.pairing(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.min_pairing_unchecked(x) > 0.0
    }

    /// `sum_a a / |a|`. For the shipped families this lies strictly inside the
    /// chamber; `None` when it does not (possible for custom systems).
    pub fn interior_direction(&self) -> Option<Vec<f64>> {
        let mut u = vec![0.0; self.dim];
        for root in &self.roots {
            let scale = 1.0 / root.norm();
            for (ui, ai) in u.iter_mut().zip(&root.vector) {
                *ui += scale * ai;
            }
        }
        (self.min_pairing_unchecked(&u) > 0.0).then_some(u)
    }

    /// Checks (R1) and (R2) on `R = R+ ∪ (-R+)`.
    ///
    /// R1 is a collinearity test between positive roots. R2 reflects every
    /// root of `R` in every positive root and matches the image to the nearest
    /// element of `R`; a match farther than `tol` is a failure.
    pub fn validate_axioms(&self, tol: f64) -> AxiomReport {
        let mut collinear_pairs = Vec::new();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let (a, b) = (&self.roots[i], &self.roots[j]);
                let ab = dot(&a.vector, &b.vector);
                let gap = a.norm_sq * b.norm_sq - ab * ab;
                if gap.abs() <= 1e-12 * a.norm_sq * b.norm_sq {
                    collinear_pairs.push((i, j));
                }
            }
        }

        let full: Vec<Vec<f64>> = self
            .roots
            .iter()
            .flat_map(|r| [r.vector.clone(), r.vector.iter().map(|v| -v).collect()])
            .collect();
        let mut worst_residual: f64 = 0.0;
        let mut unmatched = Vec::new();
        for (i, alpha) in self.roots.iter().enumerate() {
            for (j, beta) in full.iter().enumerate() {
                let image = alpha.reflect(beta);
                let nearest = full
                    .iter()
                    .map(|g| {
                        g.iter()
                            .zip(&image)
                            .map(|(p, q)| (p - q) * (p - q))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                worst_residual = worst_residual.max(nearest);
                if nearest > tol {
                    unmatched.push((i, j));
                }
            }
        }
        AxiomReport {
            r1_pass: collinear_pairs.is_empty(),
            collinear_pairs,
            r2_pass: unmatched.is_empty(),
            unmatched_reflections: unmatched,
            worst_residual,
        }
    }

    /// Relative residual of the pairing identity
    /// `sum_a k_a |a|^2 / <a,x>^2 = sum_{a,b} k_b <a,b> / (<a,x> <b,x>)`
    /// with per-orbit weights `k`. Requires `x` strictly inside the chamber.
    pub fn pairing_identity_residual(&self, orbit_k: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_orbit_values(orbit_k)?;
        let pairings: Vec<f64> = self.roots.iter().map(|r| r.pairing(x)).collect();
        let min_pairing = pairings.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_pairing > 0.0) {
            return Err(Error::OutsideChamber { min_pairing });
        }
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (a, alpha) in self.roots.iter().enumerate() {
            lhs += orbit_k[self.orbit_of[a]] * alpha.norm_sq / (pairings[a] * pairings[a]);
            for (b, beta) in self.roots.iter().enumerate() {
                let k_b = orbit_k[self.orbit_of[b]];
                rhs += k_b * dot(&alpha.vector, &beta.vector) / (pairings[a] * pairings[b]);
            }
        }
        Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
    }
}

/// Outcome of [`RootSystem::validate_axioms`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub r1_pass: bool,
    /// Index pairs of collinear positive roots.
    pub collinear_pairs: Vec<(usize, usize)>,
    pub r2_pass: bool,
    /// `(positive root index, index into R)` whose reflection left `R`.
    /// Index `2i` of `R` is root `i`, `2i + 1` its negative.
    pub unmatched_reflections: Vec<(usize, usize)>,
    /// Largest distance from a reflected root to its nearest root.
    pub worst_residual: f64,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.r1_pass && self.r2_pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn type_a_small_cases() {
        let a2 = RootSystem::type_a(2).unwrap();
        assert_eq!(a2.len(), 1);
        assert_eq!(a2.roots()[0].vector(), &[1.0, -1.0]);
        assert_eq!(a2.orbit_count(), 1);

        let a3 = RootSystem::type_a(3).unwrap();
        let vs: Vec<&[f64]> = a3.roots().iter().map(Root::vector).collect();
        assert_eq!(
            vs,
            vec![&[1.0, -1.0, 0.0][..], &[1.0, 0.0, -1.0], &[0.0, 1.0, -1.0]]
        );
        assert!(a3.roots().iter().all(|r| r.norm_sq() == 2.0));

        let a4 = RootSystem::type_a(4).unwrap();
        assert_eq!(a4.len(), 6);
        assert!(a4.validate_axioms(1e-9).passed());
    }

    #[test]
    fn type_b_small_cases() {
        let b2 = RootSystem::type_b(2).unwrap();
        let orbit = |o: usize| -> Vec<Vec<f64>> {
            b2.orbits()[o]
                .iter()
                .map(|&i| b2.roots()[i].vector().to_vec())
                .collect()
        };
        assert_eq!(orbit(0), vec![vec![1.0, -1.0], vec![1.0, 1.0]]);
        assert_eq!(orbit(1), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let b3 = RootSystem::type_b(3).unwrap();
        assert_eq!(b3.len(), 9);
        assert_eq!(b3.orbits()[0].len(), 6);
        assert!(b3.validate_axioms(1e-9).passed());
    }

    #[test]
    fn constructors_reject_small_dimension() {
        assert!(matches!(RootSystem::type_a(1), Err(Error::InvalidDimension(_))));
        assert!(matches!(RootSystem::type_b(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(RootSystem::new(2, vec![vec![0.0, 0.0]], vec![0]).is_err());
        assert!(RootSystem::new(2, vec![vec![1.0, 0.0]], vec![1]).is_err());
        assert!(RootSystem::new(2, vec![vec![1.0]], vec![0]).is_err());
    }

    #[test]
    fn direct_sums() {
        let a2 = RootSystem::type_a(2).unwrap();
        let b2 = RootSystem::type_b(2).unwrap();
        let aa = RootSystem::direct_sum(&a2, &a2);
        assert_eq!((aa.dim(), aa.len(), aa.orbit_count()), (4, 2, 2));
        let ba = RootSystem::direct_sum(&b2, &a2);
        assert_eq!((ba.dim(), ba.len()), (4, 5));
        for i in 0..4 {
            assert_eq!(dot(ba.roots()[i].vector(), ba.roots()[4].vector()), 0.0);
        }
        assert!(ba.validate_axioms(1e-9).passed());
    }

    #[test]
    fn axiom_failures() {
        let collinear = RootSystem::new(2, vec![vec![1.0, 0.0], vec![2.0, 0.0]], vec![0, 0]).unwrap();
        let report = collinear.validate_axioms(1e-9);
        assert!(!report.r1_pass);
        assert_eq!(report.collinear_pairs, vec![(0, 1)]);

        // (1,1) reflected in (1,0) is (-1,1), which is not a root.
        let open = RootSystem::new(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![0, 0, 0],
        )
        .unwrap();
        let report = open.validate_axioms(1e-9);
        assert!(report.r1_pass);
        assert!(!report.r2_pass);
        assert!(report.unmatched_reflections.contains(&(0, 4)));
        assert!((report.worst_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_pairing_examples() {
        let a3 = RootSystem::type_a(3).unwrap();
        assert_eq!(a3.min_pairing(&[3.0, 2.0, 0.0]).unwrap(), 1.0);
        let b2 = RootSystem::type_b(2).unwrap();
        assert_eq!(b2.min_pairing(&[2.0, 1.0]).unwrap(), 1.0);
        let a2 = RootSystem::type_a(2).unwrap();
        assert_eq!(a2.min_pairing(&[1.0, 1.0]).unwrap(), 0.0);
        assert!(!a2.contains(&[1.0, 1.0]));
        assert!(matches!(
            a2.min_pairing(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pairing_identity_examples() {
        let a3 = RootSystem::type_a(3).unwrap();
        assert!(a3.pairing_identity_residual(&[1.0], &[3.0, 2.0, 0.0]).unwrap() <= 1e-10);

        let b3 = RootSystem::type_b(3).unwrap();
        assert!(b3.pairing_identity_residual(&[2.0, 0.5], &[3.0, 2.0, 1.0]).unwrap() <= 1e-10);

        let a2 = RootSystem::type_a(2).unwrap();
        assert_eq!(a2.pairing_identity_residual(&[1.7], &[0.3, -2.0]).unwrap(), 0.0);

        assert!(matches!(
            a2.pairing_identity_residual(&[1.0], &[0.0, 1.0]),
            Err(Error::OutsideChamber { .. })
        ));
    }

    #[test]
    fn identity_fails_off_root_system() {
        // Not closed under reflections: the identity is not expected to hold.
        let open = RootSystem::new(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![0, 0, 0],
        )
        .unwrap();
        assert!(open.pairing_identity_residual(&[1.0], &[1.0, 2.0]).unwrap() > 1e-3);
    }

    #[test]
    fn axioms_hold_for_families_up_to_eight() {
        for d in 2..=8 {
            assert!(RootSystem::type_a(d).unwrap().validate_axioms(1e-9).passed(), "A({d})");
            assert!(RootSystem::type_b(d).unwrap().validate_axioms(1e-9).passed(), "B({d})");
        }
    }

    #[test]
    fn interior_direction_is_interior_for_families() {
        for d in 2..=6 {
            for rs in [RootSystem::type_a(d).unwrap(), RootSystem::type_b(d).unwrap()] {
                let u = rs.interior_direction().unwrap();
                assert!(rs.min_pairing(&u).unwrap() > 0.0);
            }
        }
    }

    fn ordered_point(d: usize, gaps: &[f64], positive: bool) -> Vec<f64> {
        // x_d = gap_0 (> 0 for type B), x_{i} = x_{i+1} + gap.
        let mut x = vec![0.0; d];
        let mut acc = if positive { gaps[0] } else { -1.0 };
        for i in (0..d).rev() {
            x[i] = acc;
            acc += gaps[(d - i) % gaps.len()];
        }
        x
    }

    proptest! {
        #[test]
        fn membership_matches_pairings(x in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let rs = RootSystem::type_b(3).unwrap();
            let all_positive = rs.roots().iter().all(|r| r.pairing(&x) > 0.0);
            prop_assert_eq!(rs.min_pairing(&x).unwrap() > 0.0, all_positive);
        }

        #[test]
        fn reflections_preserve_norms(d in 2usize..6) {
            let rs = RootSystem::type_b(d).unwrap();
            for a in rs.roots() {
                for b in rs.roots() {
                    let image = a.reflect(b.vector());
                    prop_assert!((dot(&image, &image).sqrt() - b.norm()).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn identity_holds_on_random_interior_points(
            d in 2usize..6,
            gaps in proptest::collection::vec(1e-3f64..10.0, 6),
            k1 in 0.1f64..10.0,
            k2 in 0.1f64..10.0,
        ) {
            let a = RootSystem::type_a(d).unwrap();
            let x = ordered_point(d, &gaps, false);
            prop_assert!(a.pairing_identity_residual(&[k1], &x).unwrap() <= 1e-10);
            let b = RootSystem::type_b(d).unwrap();
            let x = ordered_point(d, &gaps, true);
            prop_assert!(b.pairing_identity_residual(&[k1, k2], &x).unwrap() <= 1e-10);
        }

        #[test]
        fn sums_of_valid_systems_pass(da in 2usize..4, db in 2usize..4, b_first in any::<bool>()) {
            let (a, b) = if b_first {
                (RootSystem::type_b(da).unwrap(), RootSystem::type_a(db).unwrap())
            } else {
                (RootSystem::type_a(da).unwrap(), RootSystem::type_b(db).unwrap())
            };
            prop_assert!(RootSystem::direct_sum(&a, &b).validate_axioms(1e-9).passed());
        }
    }
}
