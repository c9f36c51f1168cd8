//! Gauss-Hermite quadrature against the standard normal weight.
//!
//! Rules use the probabilists' convention: `sum(w_i f(x_i))` approximates
//! `E[f(Z)]` for standard normal `Z`, so weights sum to one and a rule of
//! order n is exact for polynomials of degree <= 2n-1.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Default order for capacity and KKT integrals.
pub const DEFAULT_ORDER: usize = 96;

/// Largest supported rule order.
pub const MAX_ORDER: usize = 512;

/// A probabilists' Gauss-Hermite rule: standard-normal abscissae and
/// probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the rule of the given order via Golub-Welsch: eigenvalues of
    /// the symmetric tridiagonal Jacobi matrix with off-diagonal sqrt(k) are
    /// the nodes. Each node is then polished to machine precision with
    /// Newton steps on the Hermite polynomial, and the weights follow from
    /// the orthonormal-recurrence identity `w_i = 1 / (n h_{n-1}(x_i)^2)`.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order < 1 || order > MAX_ORDER {
            return Err(Error::OrderOutOfRange(order));
        }
        if order == 1 {
            return Ok(Self { nodes: vec![0.0], weights: vec![1.0] });
        }
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eigen = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);

        let n = order;
        let mut weights = vec![0.0; n];
        for i in 0..n {
            for _ in 0..4 {
                let (h_n, h_prev) = orthonormal_hermite_pair(n, nodes[i]);
                let derivative = (n as f64).sqrt() * h_prev;
                if derivative != 0.0 {
                    nodes[i] -= h_n / derivative;
                }
            }
            let (_, h_prev) = orthonormal_hermite_pair(n, nodes[i]);
            weights[i] = 1.0 / (n as f64 * h_prev * h_prev);
        }

        // Enforce the exact +/- symmetry of the rule by averaging mirrored
        // pairs.
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let node = 0.5 * (nodes[j] - nodes[i]);
            nodes[j] = node;
            nodes[i] = -node;
            let w = 0.5 * (weights[i] + weights[j]);
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    /// Shared, cached rule of the given order.
    pub fn cached(order: usize) -> Result<Arc<Self>> {
        static CACHE: LazyLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> =
            LazyLock::new(|| Mutex::new(HashMap::new()));
        let mut cache = CACHE.lock().expect("quadrature cache poisoned");
        if let Some(rule) = cache.get(&order) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::gauss_hermite(order)?);
        cache.insert(order, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Largest abscissa magnitude.
    pub fn max_node(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].abs()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximates `E[f(mean + Z)]` for scalar standard normal `Z`.
    pub fn expect_gaussian_1d<F: Fn(f64) -> f64>(&self, f: F, mean: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let node = mean + x;
            let value = f(node);
            if !value.is_finite() {
                return Err(Error::NonFiniteIntegrand { node, value });
            }
            acc += w * value;
        }
        Ok(acc)
    }

    /// Approximates `E[f(mean + Z)]` for bivariate standard normal `Z`,
    /// using the tensor product of the 1D rule.
    pub fn expect_gaussian_2d<F: Fn(f64, f64) -> f64>(
        &self,
        f: F,
        mean: (f64, f64),
    ) -> Result<f64> {
        let mut acc = 0.0;
        for (&x1, &w1) in self.nodes.iter().zip(&self.weights) {
            let y1 = mean.0 + x1;
            let mut inner = 0.0;
            for (&x2, &w2) in self.nodes.iter().zip(&self.weights) {
                let y2 = mean.1 + x2;
                let value = f(y1, y2);
                if !value.is_finite() {
                    return Err(Error::NonFiniteIntegrand { node: y2, value });
                }
                inner += w2 * value;
            }
            acc += w1 * inner;
        }
        Ok(acc)
    }

    /// Like [`expect_gaussian_2d`](Self::expect_gaussian_2d) for integrands
    /// known to be finite everywhere.
    pub(crate) fn expect_2d_unchecked<F: Fn(f64, f64) -> f64>(&self, f: F, mean: (f64, f64)) -> f64 {
        let mut acc = 0.0;
        for (&x1, &w1) in self.nodes.iter().zip(&self.weights) {
            let y1 = mean.0 + x1;
            let mut inner = 0.0;
            for (&x2, &w2) in self.nodes.iter().zip(&self.weights) {
                inner += w2 * f(y1, mean.1 + x2);
            }
            acc += w1 * inner;
        }
        acc
    }
}

/// Evaluates the orthonormal probabilists' Hermite pair
/// `(h_n(x), h_{n-1}(x))` by the upward recurrence
/// `h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1)`.
fn orthonormal_hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0; // h_0
    let mut cur = x; // h_1
    for k in 1..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}
