//! Subspaces of `C^n` with orthonormal bases and lattice operations.

use serde::{Deserialize, Serialize};

use super::{fro, mat_io, nullspace_basis, orth_basis, CMat, Tolerance};

/// A linear subspace of `C^ambient`, stored as an `ambient x dim`
/// matrix with orthonormal columns.
///
/// All lattice operations (`sum`, `intersection`, `complement`,
/// `image_under`, `preimage_under`) answer rank questions through the
/// shared toleranced SVD conventions of this module, so dimensions obey
/// `dim(A + B) = dim A + dim B - dim(A v B)` and complementation is an
/// involution up to the equality tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Subspace {
    ambient: usize,
    #[serde(with = "mat_io")]
    basis: CMat,
}

impl Subspace {
    /// Subspace spanned by the columns of `cols` (orthonormalized here).
    pub fn span(cols: &CMat, tol: Tolerance) -> Self {
        Subspace {
            ambient: cols.nrows(),
            basis: orth_basis(cols, tol),
        }
    }

    /// Wraps a matrix whose columns are already orthonormal.
    pub fn from_orthonormal(basis: CMat) -> Self {
        debug_assert!({
            let d = basis.ncols();
            let gram = basis.adjoint() * &basis;
            d == 0 || fro(&(gram - CMat::identity(d, d))) < 1e-10
        });
        Subspace {
            ambient: basis.nrows(),
            basis,
        }
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: CMat::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: CMat::identity(ambient, ambient),
        }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient
    }

    /// Orthonormal basis, one column per dimension.
    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    /// Distance of `v` from the subspace: `||(1 - P) v||`.
    pub fn residual_of(&self, v: &CMat) -> f64 {
        let proj = &self.basis * (self.basis.adjoint() * v);
        fro(&(v - proj))
    }

    /// Membership of a vector (or of each column of a matrix) at tolerance
    /// `eps * (1 + ||v||)`.
    pub fn contains_cols(&self, v: &CMat, eps: f64) -> bool {
        self.residual_of(v) <= eps * (1.0 + fro(v))
    }

    /// Set containment `other <= self` via basis membership.
    pub fn contains(&self, other: &Subspace, eps: f64) -> bool {
        other.dim() == 0 || self.contains_cols(&other.basis, eps)
    }

    /// Equality as subspaces: equal dimensions and maximal principal
    /// angle at most `angle_eps` (measured through its sine).
    pub fn approx_eq(&self, other: &Subspace, angle_eps: f64) -> bool {
        if self.ambient != other.ambient || self.dim() != other.dim() {
            return false;
        }
        if self.dim() == 0 {
            return true;
        }
        // ||(1 - P_self) B_other||_2 = sin(theta_max); Frobenius bounds it.
        let proj = &self.basis * (self.basis.adjoint() * &other.basis);
        fro(&(&other.basis - proj)) <= angle_eps
    }

    /// Smallest subspace containing both operands.
    pub fn sum(&self, other: &Subspace, tol: Tolerance) -> Subspace {
        assert_eq!(self.ambient, other.ambient, "ambient dimensions differ");
        let mut stacked = CMat::zeros(self.ambient, self.dim() + other.dim());
        stacked
            .view_mut((0, 0), (self.ambient, self.dim()))
            .copy_from(&self.basis);
        stacked
            .view_mut((0, self.dim()), (self.ambient, other.dim()))
            .copy_from(&other.basis);
        Subspace::span(&stacked, tol)
    }

    /// Orthogonal complement within the ambient space.
    pub fn complement(&self, tol: Tolerance) -> Subspace {
        if self.dim() == 0 {
            return Subspace::full(self.ambient);
        }
        // Kernel of basis^*: vectors orthogonal to every basis column.
        Subspace::from_orthonormal(nullspace_basis(&self.basis.adjoint(), tol))
    }

    /// Intersection via the complement of the sum of complements.
    pub fn intersection(&self, other: &Subspace, tol: Tolerance) -> Subspace {
        self.complement(tol)
            .sum(&other.complement(tol), tol)
            .complement(tol)
    }

    /// Image `m(self)` inside the codomain of `m`.
    pub fn image_under(&self, m: &CMat, tol: Tolerance) -> Subspace {
        assert_eq!(m.ncols(), self.ambient, "map domain mismatch");
        Subspace::span(&(m * &self.basis), tol)
    }

    /// Preimage `{x : m x in self}` inside the domain of `m`.
    ///
    /// Computed as the kernel of `Q^* m`, where the columns of `Q` span
    /// the orthogonal complement of the subspace.
    pub fn preimage_under(&self, m: &CMat, tol: Tolerance) -> Subspace {
        assert_eq!(m.nrows(), self.ambient, "map codomain mismatch");
        let comp = self.complement(tol);
        if comp.dim() == 0 {
            return Subspace::full(m.ncols());
        }
        Subspace::from_orthonormal(nullspace_basis(&(comp.basis.adjoint() * m), tol))
    }

    /// Smallest subspace containing `self` that is invariant under every
    /// map in `ops` (Krylov closure; stabilizes in at most `ambient` steps).
    pub fn invariant_closure(&self, ops: &[&CMat], tol: Tolerance) -> Subspace {
        let mut current = self.clone();
        for _ in 0..=self.ambient {
            if current.is_full() {
                return current;
            }
            let mut blocks = CMat::zeros(self.ambient, current.dim() * (1 + ops.len()));
            blocks
                .view_mut((0, 0), (self.ambient, current.dim()))
                .copy_from(&current.basis);
            for (idx, op) in ops.iter().enumerate() {
                blocks
                    .view_mut(
                        (0, (idx + 1) * current.dim()),
                        (self.ambient, current.dim()),
                    )
                    .copy_from(&(*op * &current.basis));
            }
            let next = Subspace::span(&blocks, tol);
            if next.dim() == current.dim() {
                return next;
            }
            current = next;
        }
        current
    }

    /// Extends the subspace by `extra` columns (orthonormalizing), keeping
    /// at most `target_dim` dimensions; used to build witnesses of a
    /// prescribed dimension.
    pub fn extend_within(
        &self,
        pool: &Subspace,
        target_dim: usize,
        tol: Tolerance,
    ) -> Option<Subspace> {
        if self.dim() > target_dim || pool.dim() < target_dim {
            return None;
        }
        let mut basis = self.basis.clone();
        for j in 0..pool.dim() {
            if basis.ncols() == target_dim {
                break;
            }
            let cand = pool.basis.column(j).into_owned();
            let resid = &cand - &basis * (basis.adjoint() * &cand);
            let norm = resid.norm();
            if norm > 1e-8 {
                let unit = resid.map(|z| z / norm);
                let cols = basis.ncols();
                let mut grown = CMat::zeros(self.ambient, cols + 1);
                grown.view_mut((0, 0), (self.ambient, cols)).copy_from(&basis);
                grown.set_column(cols, &unit.column(0));
                basis = grown;
            }
        }
        let _ = tol;
        (basis.ncols() == target_dim).then(|| Subspace::from_orthonormal(basis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, data: &[(f64, f64)]) -> CMat {
        CMat::from_fn(rows, cols, |i, j| {
            let (re, im) = data[i * cols + j];
            c(re, im)
        })
    }

    #[test]
    fn preimage_of_line_under_nilpotent_shift() {
        // m = [[0,1],[0,0]] maps everything into span(e1), so the
        // preimage of span(e1) is the whole plane.
        let m = mat(2, 2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let e1 = Subspace::span(
            &mat(2, 1, &[(1.0, 0.0), (0.0, 0.0)]),
            Tolerance::default(),
        );
        let pre = e1.preimage_under(&m, Tolerance::default());
        assert_eq!(pre.dim(), 2);
    }

    #[test]
    fn complement_dimensions_add_up() {
        let a = Subspace::span(
            &mat(3, 1, &[(1.0, 0.0), (0.0, 1.0), (0.0, 0.0)]),
            Tolerance::default(),
        );
        let comp = a.complement(Tolerance::default());
        assert_eq!(comp.dim(), 2);
        assert!(comp.complement(Tolerance::default()).approx_eq(&a, 1e-10));
    }

    #[test]
    fn closure_reaches_cyclic_span() {
        // Companion-type shift: e1 -> e2 -> e3 under op; closure of e1 is full.
        let op = CMat::from_fn(3, 3, |i, j| if i == j + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let seed = Subspace::span(
            &mat(3, 1, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]),
            Tolerance::default(),
        );
        let closure = seed.invariant_closure(&[&op], Tolerance::default());
        assert!(closure.is_full());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sum_intersection_dimension_formula(
            seed in 0u64..1_000_000,
            n in 2usize..5,
            da in 0usize..4,
            db in 0usize..4,
        ) {
            use rand::{Rng, SeedableRng};
            let da = da.min(n);
            let db = db.min(n);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut sample = |cols: usize| {
                let m = CMat::from_fn(n, cols, |_, _| {
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                Subspace::span(&m, Tolerance::default())
            };
            let a = sample(da);
            let b = sample(db);
            let tol = Tolerance::default();
            let s = a.sum(&b, tol);
            let i = a.intersection(&b, tol);
            prop_assert_eq!(s.dim() + i.dim(), a.dim() + b.dim());
            prop_assert!(s.contains(&a, 1e-8) && s.contains(&b, 1e-8));
            prop_assert!(a.contains(&i, 1e-8) && b.contains(&i, 1e-8));
            let comp = a.complement(tol);
            prop_assert_eq!(comp.dim() + a.dim(), n);
            prop_assert!(comp.complement(tol).approx_eq(&a, 1e-8));
        }
    }
}
