//! Multivariate polynomial features in graded-lexicographic order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C(n, k)`, exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All monomials of total degree `<= degree` in `n` variables.
///
/// Graded-lexicographic order, constant first. Each monomial is built as a
/// parent monomial times one variable, so expansion costs one multiply per
/// term.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    n: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
    // (parent index, variable index); unused for the constant term
    build: Vec<(usize, usize)>,
}

impl MonomialBasis {
    pub fn new(n: usize, degree: usize) -> Self {
        let mut exponents = vec![vec![0u32; n]];
        let mut build = vec![(0, 0)];
        // last variable index of each monomial, to keep indices non-decreasing
        let mut last = vec![0usize];
        let mut prev = 0..1;
        for _ in 0..degree {
            let start = exponents.len();
            for p in prev.clone() {
                for j in last[p]..n {
                    let mut e = exponents[p].clone();
                    e[j] += 1;
                    exponents.push(e);
                    build.push((p, j));
                    last.push(j);
                }
            }
            prev = start..exponents.len();
        }
        Self {
            n,
            degree,
            exponents,
            build,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Write the monomial values of `x` into `out` (length `self.len()`).
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.len());
        out[0] = 1.0;
        for i in 1..out.len() {
            let (p, j) = self.build[i];
            out[i] = out[p] * x[j];
        }
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.expand_into(x, &mut out);
        out
    }

    /// Human-readable monomial, e.g. `x1^2*x3`; `names` overrides `x1..xn`.
    pub fn label(&self, index: usize, names: Option<&[&str]>) -> String {
        let e = &self.exponents[index];
        let terms: Vec<String> = e
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0)
            .map(|(i, &p)| {
                let name = names
                    .and_then(|n| n.get(i).map(|s| s.to_string()))
                    .unwrap_or_else(|| format!("x{}", i + 1));
                if p == 1 {
                    name
                } else {
                    format!("{name}^{p}")
                }
            })
            .collect();
        if terms.is_empty() {
            "1".into()
        } else {
            terms.join("*")
        }
    }
}

/// Monomial vector of `x` up to total degree `degree`.
pub fn expand_features(x: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.is_empty() || degree == 0 {
        return Err(Error::InvalidConfig(
            "feature expansion needs at least one input and degree >= 1".into(),
        ));
    }
    Ok(MonomialBasis::new(x.len(), degree).expand(x))
}

/// Affine map of one raw input onto roughly [-1, 1]: `(x - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub offset: f64,
    pub scale: f64,
}

impl InputScaling {
    pub const IDENTITY: Self = Self {
        offset: 0.0,
        scale: 1.0,
    };

    /// Map `[lo, hi]` onto `[-1, 1]`. A degenerate range keeps unit scale.
    pub fn from_range(lo: f64, hi: f64) -> Self {
        let half = (hi - lo) / 2.0;
        Self {
            offset: (hi + lo) / 2.0,
            scale: if half > 0.0 && half.is_finite() {
                half
            } else {
                1.0
            },
        }
    }

    /// Per-column ranges of `rows`.
    pub fn fit_columns<'a, I>(rows: I, dim: usize) -> Vec<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for r in rows {
            for i in 0..dim {
                lo[i] = lo[i].min(r[i]);
                hi[i] = hi[i].max(r[i]);
            }
        }
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| {
                if l.is_finite() && h.is_finite() {
                    Self::from_range(l, h)
                } else {
                    Self::IDENTITY
                }
            })
            .collect()
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }
}

/// A fitted polynomial: scaled inputs, graded-lex coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub input_dim: usize,
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub input_scaling: Vec<InputScaling>,
}

impl PolynomialModel {
    pub fn new(
        input_dim: usize,
        degree: usize,
        coefficients: Vec<f64>,
        input_scaling: Vec<InputScaling>,
    ) -> Result<Self> {
        let m = Self {
            input_dim,
            degree,
            coefficients,
            input_scaling,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.degree == 0 {
            return Err(Error::InvalidConfig(
                "model needs input_dim >= 1 and degree >= 1".into(),
            ));
        }
        let expected = binomial(self.input_dim + self.degree, self.degree);
        if self.coefficients.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "{} coefficients for {} inputs at degree {}, expected {expected}",
                self.coefficients.len(),
                self.input_dim,
                self.degree
            )));
        }
        if self.input_scaling.len() != self.input_dim {
            return Err(Error::InvalidConfig(
                "one input scaling per input is required".into(),
            ));
        }
        if self
            .input_scaling
            .iter()
            .any(|s| !(s.scale > 0.0 && s.scale.is_finite() && s.offset.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "input scales must be positive and finite".into(),
            ));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> MonomialBasis {
        MonomialBasis::new(self.input_dim, self.degree)
    }

    pub fn scale_inputs(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_scaling)
            .map(|(&v, s)| s.apply(v))
            .collect()
    }

    /// Evaluate with a precomputed basis (avoids rebuilding it per call).
    pub fn predict_with(&self, basis: &MonomialBasis, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.resize(basis.len(), 0.0);
        let z = self.scale_inputs(x);
        basis.expand_into(&z, scratch);
        scratch
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut scratch = Vec::new();
        self.predict_with(&self.basis(), x, &mut scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    // independent count: enumerate all exponent vectors with sum <= d
    fn brute_count(n: usize, d: usize) -> usize {
        fn rec(n: usize, left: usize) -> usize {
            if n == 0 {
                return 1;
            }
            (0..=left).map(|e| rec(n - 1, left - e)).sum()
        }
        rec(n, d)
    }

    #[test]
    fn two_variables_degree_two() {
        let (a, b) = (3.0, -2.0);
        assert_eq!(
            expand_features(&[a, b], 2).unwrap(),
            vec![1.0, a, b, a * a, a * b, b * b]
        );
    }

    #[test]
    fn lengths_match_enumeration() {
        assert_eq!(brute_count(5, 3), 56);
        assert_eq!(brute_count(6, 3), 84);
        assert_eq!(expand_features(&[0.1; 5], 3).unwrap().len(), 56);
        assert_eq!(expand_features(&[0.1; 6], 3).unwrap().len(), 84);
        for n in 1..=6 {
            for d in 1..=6 {
                assert_eq!(MonomialBasis::new(n, d).len(), brute_count(n, d));
                assert_eq!(binomial(n + d, d), brute_count(n, d));
            }
        }
    }

    #[test]
    fn order_is_graded_lexicographic() {
        let basis = MonomialBasis::new(4, 4);
        let e = basis.exponents();
        let unique: BTreeSet<_> = e.iter().collect();
        assert_eq!(unique.len(), e.len());
        for w in e.windows(2) {
            let (da, db): (u32, u32) = (w[0].iter().sum(), w[1].iter().sum());
            assert!(
                da < db || (da == db && w[0] > w[1]),
                "{:?} before {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn expansion_matches_exponents() {
        let x = [0.3, -1.2, 2.0];
        let basis = MonomialBasis::new(3, 3);
        let v = basis.expand(&x);
        for (val, e) in v.iter().zip(basis.exponents()) {
            let direct: f64 = x.iter().zip(e).map(|(xi, &p)| xi.powi(p as i32)).product();
            assert!((val - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_degree_or_empty_input_is_rejected() {
        assert!(expand_features(&[], 2).is_err());
        assert!(expand_features(&[1.0], 0).is_err());
    }

    #[test]
    fn labels() {
        let basis = MonomialBasis::new(2, 2);
        let l: Vec<_> = (0..basis.len()).map(|i| basis.label(i, None)).collect();
        assert_eq!(l, ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
        assert_eq!(basis.label(4, Some(&["s", "x1"])), "s*x1");
    }

    #[test]
    fn model_checks_coefficient_count() {
        let scaling = vec![InputScaling::IDENTITY; 5];
        assert!(PolynomialModel::new(5, 3, vec![0.0; 56], scaling.clone()).is_ok());
        assert!(PolynomialModel::new(5, 3, vec![0.0; 55], scaling.clone()).is_err());
        let mut bad = scaling;
        bad[0].scale = 0.0;
        assert!(PolynomialModel::new(5, 3, vec![0.0; 56], bad).is_err());
    }

    #[test]
    fn model_applies_scaling_before_expansion() {
        // p(z) = 1 + 2 z with z = (x - 10) / 5
        let m = PolynomialModel::new(
            1,
            1,
            vec![1.0, 2.0],
            vec![InputScaling {
                offset: 10.0,
                scale: 5.0,
            }],
        )
        .unwrap();
        assert_eq!(m.predict(&[15.0]), 3.0);
        assert_eq!(
            InputScaling::from_range(-3.0, 7.0),
            InputScaling {
                offset: 2.0,
                scale: 5.0
            }
        );
        assert_eq!(InputScaling::from_range(4.0, 4.0).scale, 1.0);
    }
}
