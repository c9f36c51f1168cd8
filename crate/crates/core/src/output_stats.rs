//! Output law of a discrete input over the unit-variance bivariate Gaussian
//! channel, its posterior statistics, and the information density
//! `D(P_{Y|X=x} || P_Y)` with its derivatives along the ellipse boundary.
//!
//! All information quantities are in nats.

use serde::{Deserialize, Serialize};

use crate::channel::EllipseConstraint;
use crate::error::{Error, Result};
use crate::input::{ExpandedAtom, SymmetricBoundaryDistribution};
use crate::quadrature::QuadratureRule;

pub(crate) const LN_TWO_PI: f64 = 1.837_877_066_409_345_5;

/// Differential entropy of the bivariate standard normal, `1 + ln(2 pi)`.
pub const NOISE_ENTROPY: f64 = 1.0 + LN_TWO_PI;

/// Past this exponent magnitude the table-based density evaluation could
/// overflow; fall back to per-node log-sum-exp.
const SAFE_EXPONENT: f64 = 650.0;

/// Gaussian mixture output law `f_Y`: unit-variance components centered at
/// the expanded support points, weighted by their masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDensityModel {
    components: Vec<ExpandedAtom>,
}

impl OutputDensityModel {
    pub fn from_distribution(d: &SymmetricBoundaryDistribution) -> Self {
        Self {
            components: d.expand(),
        }
    }

    /// Builds a model from raw mixture components. Weights must sum to one.
    pub fn from_components(components: Vec<ExpandedAtom>) -> Result<Self> {
        let sum: f64 = components.iter().map(|c| c.mass).sum();
        let finite = components
            .iter()
            .all(|c| c.point.0.is_finite() && c.point.1.is_finite() && c.mass > 0.0);
        if !finite || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidOptions(format!(
                "mixture weights must be positive and sum to 1 (sum = {sum})"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ExpandedAtom] {
        &self.components
    }

    /// `log f_Y(y)` by max-shifted log-sum-exp over the components.
    pub fn log_density(&self, y: (f64, f64)) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut exponents = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let d1 = y.0 - c.point.0;
            let d2 = y.1 - c.point.1;
            let e = c.mass.ln() - 0.5 * (d1 * d1 + d2 * d2);
            if e > max {
                max = e;
            }
            exponents.push(e);
        }
        let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
        max + sum.ln() - LN_TWO_PI
    }

    /// Posterior component responsibilities at `y`, max-shifted.
    fn responsibilities(&self, y: (f64, f64), out: &mut Vec<f64>) {
        out.clear();
        let mut max = f64::NEG_INFINITY;
        for c in &self.components {
            let d1 = y.0 - c.point.0;
            let d2 = y.1 - c.point.1;
            let e = c.mass.ln() - 0.5 * (d1 * d1 + d2 * d2);
            if e > max {
                max = e;
            }
            out.push(e);
        }
        let mut sum = 0.0;
        for e in out.iter_mut() {
            *e = (*e - max).exp();
            sum += *e;
        }
        for e in out.iter_mut() {
            *e /= sum;
        }
    }

    /// `E[X | Y = y]`; equals `y + grad log f_Y(y)` (Tweedie).
    pub fn posterior_mean(&self, y: (f64, f64)) -> (f64, f64) {
        let mut resp = Vec::new();
        self.responsibilities(y, &mut resp);
        let mut mean = (0.0, 0.0);
        for (c, p) in self.components.iter().zip(&resp) {
            mean.0 += p * c.point.0;
            mean.1 += p * c.point.1;
        }
        mean
    }

    /// `Var(X | Y = y)`; equals `I + Hessian log f_Y(y)` (Hatsell-Nolte).
    pub fn posterior_variance(&self, y: (f64, f64)) -> [[f64; 2]; 2] {
        let mut resp = Vec::new();
        self.responsibilities(y, &mut resp);
        let mut mean = (0.0, 0.0);
        for (c, p) in self.components.iter().zip(&resp) {
            mean.0 += p * c.point.0;
            mean.1 += p * c.point.1;
        }
        let mut var = [[0.0; 2]; 2];
        for (c, p) in self.components.iter().zip(&resp) {
            let d1 = c.point.0 - mean.0;
            let d2 = c.point.1 - mean.1;
            var[0][0] += p * d1 * d1;
            var[0][1] += p * d1 * d2;
            var[1][1] += p * d2 * d2;
        }
        var[1][0] = var[0][1];
        var
    }
}

/// `E_Z[ ln sum_j w_j exp((x+Z)^T mu_j - |mu_j|^2 / 2) ]`.
///
/// The exponent is linear in the shifted node, so the node grid factors into
/// per-axis tables and the inner sum becomes a rank-one accumulation; no
/// exponentials are taken inside the node loops.
pub(crate) fn expected_log_mixture(
    x: (f64, f64),
    components: &[ExpandedAtom],
    rule: &QuadratureRule,
) -> f64 {
    let nodes = rule.nodes();
    let weights = rule.weights();
    let n = nodes.len();
    let max_node = nodes[n - 1].abs();
    let max_mu = components
        .iter()
        .map(|c| c.point.0.abs().max(c.point.1.abs()))
        .fold(0.0, f64::max);
    if max_mu * (max_node + max_mu + x.0.abs().max(x.1.abs())) > SAFE_EXPONENT {
        return expected_log_mixture_lse(x, components, rule);
    }

    let m = components.len();
    let mut base = Vec::with_capacity(m);
    let mut p = vec![0.0; m * n];
    let mut q = vec![0.0; m * n];
    for (j, c) in components.iter().enumerate() {
        let (mu1, mu2) = c.point;
        base.push(c.mass * (x.0 * mu1 + x.1 * mu2 - 0.5 * (mu1 * mu1 + mu2 * mu2)).exp());
        for k in 0..n {
            p[j * n + k] = (nodes[k] * mu1).exp();
            q[j * n + k] = (nodes[k] * mu2).exp();
        }
    }

    let mut row = vec![0.0; n];
    let mut acc = 0.0;
    for k1 in 0..n {
        row.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let coeff = base[j] * p[j * n + k1];
            let qj = &q[j * n..(j + 1) * n];
            for (r, qv) in row.iter_mut().zip(qj) {
                *r += coeff * qv;
            }
        }
        let mut inner = 0.0;
        for (r, w2) in row.iter().zip(weights) {
            inner += w2 * r.ln();
        }
        acc += weights[k1] * inner;
    }
    acc
}

/// Slow exact-arithmetic fallback used when the table path could overflow.
fn expected_log_mixture_lse(
    x: (f64, f64),
    components: &[ExpandedAtom],
    rule: &QuadratureRule,
) -> f64 {
    rule.expect_2d_unchecked(
        |y1, y2| {
            let mut max = f64::NEG_INFINITY;
            let mut exps = Vec::with_capacity(components.len());
            for c in components {
                let e = c.mass.ln() + y1 * c.point.0 + y2 * c.point.1
                    - 0.5 * (c.point.0 * c.point.0 + c.point.1 * c.point.1);
                if e > max {
                    max = e;
                }
                exps.push(e);
            }
            let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
            max + sum.ln()
        },
        x,
    )
}

/// Information density `D(P_{Y|X=x} || P_Y)`, computed as
/// `-E[log f_Y(x+Z)] - h(Z)` with the quadratic part of the integrand
/// integrated exactly.
pub fn information_density(x: (f64, f64), m: &OutputDensityModel, rule: &QuadratureRule) -> f64 {
    0.5 * (x.0 * x.0 + x.1 * x.1) - expected_log_mixture(x, &m.components, rule)
}

/// Quadrature Laplacian of the information density,
/// `2 - E_Z[tr Var(X | Y = x+Z)]`; nonnegative while the support stays
/// inside the sqrt(2)-ball.
pub fn info_density_laplacian(
    x: (f64, f64),
    m: &OutputDensityModel,
    rule: &QuadratureRule,
) -> f64 {
    let trace = rule.expect_2d_unchecked(
        |y1, y2| {
            let v = m.posterior_variance((y1, y2));
            v[0][0] + v[1][1]
        },
        x,
    );
    2.0 - trace
}

/// Relative slope of the boundary parameterization and the endpoint guard.
fn edge_guard(x1: f64, c: &EllipseConstraint) -> Result<(f64, f64)> {
    let r_p = c.r_p();
    let edge = 1e-8 * r_p;
    if r_p <= 0.0 || x1.abs() >= r_p - edge {
        return Err(Error::EndpointDerivative { x1, r_p, edge });
    }
    let u = x1 / r_p;
    Ok((u, (1.0 - u * u).sqrt()))
}

/// First derivative of the information density along the upper boundary,
/// in the direction of increasing `x1`.
pub fn info_density_d1(
    x1: f64,
    m: &OutputDensityModel,
    c: &EllipseConstraint,
    rule: &QuadratureRule,
) -> Result<f64> {
    let (_, root) = edge_guard(x1, c)?;
    let (r_p, r_m) = (c.r_p(), c.r_m());
    let slope = r_m * x1 / (r_p * r_p * root);
    let x = (x1, r_m * root);
    let mean_term = rule.expect_2d_unchecked(
        |y1, y2| {
            let pm = m.posterior_mean((y1, y2));
            pm.0 - slope * pm.1
        },
        x,
    );
    Ok(-mean_term + x1 * (1.0 - (r_m / r_p) * (r_m / r_p)))
}

/// Second derivative of the information density along the upper boundary.
pub fn info_density_d2(
    x1: f64,
    m: &OutputDensityModel,
    c: &EllipseConstraint,
    rule: &QuadratureRule,
) -> Result<f64> {
    let (u, root) = edge_guard(x1, c)?;
    let (r_p, r_m) = (c.r_p(), c.r_m());
    let slope = r_m * x1 / (r_p * r_p * root);
    let curv = r_m / (r_p * r_p * (1.0 - u * u).powf(1.5));
    let x = (x1, r_m * root);
    let expectation = rule.expect_2d_unchecked(
        |y1, y2| {
            let pm = m.posterior_mean((y1, y2));
            let v = m.posterior_variance((y1, y2));
            let quad = v[0][0] - 2.0 * slope * v[0][1] + slope * slope * v[1][1];
            (1.0 + slope * slope) - quad + curv * pm.1
        },
        x,
    );
    Ok(expectation - r_m * r_m / (r_p * r_p * (1.0 - u * u)))
}

/// `I(X; X+Z)` of a boundary distribution: the mass-weighted information
/// density over the half-axis atoms, each orbit evaluated once at its
/// representative point (the density is even in both coordinates).
pub fn mutual_information(d: &SymmetricBoundaryDistribution, rule: &QuadratureRule) -> f64 {
    let model = OutputDensityModel::from_distribution(d);
    d.atoms()
        .iter()
        .map(|atom| atom.mass * information_density(d.representative(atom), &model, rule))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::HalfAxisAtom;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn model(points: &[((f64, f64), f64)]) -> OutputDensityModel {
        OutputDensityModel::from_components(
            points
                .iter()
                .map(|&(point, mass)| ExpandedAtom { point, mass })
                .collect(),
        )
        .unwrap()
    }

    fn rule() -> std::sync::Arc<QuadratureRule> {
        QuadratureRule::cached(96).unwrap()
    }

    #[test]
    fn log_density_closed_forms() {
        let origin = model(&[((0.0, 0.0), 1.0)]);
        assert!((origin.log_density((0.0, 0.0)) + LN_TWO_PI).abs() < 1e-14);

        let pair = model(&[((1.0, 0.0), 0.5), ((-1.0, 0.0), 0.5)]);
        assert!((pair.log_density((0.0, 0.0)) + LN_TWO_PI + 0.5).abs() < 1e-14);

        let far = model(&[((3.0, 4.0), 1.0)]);
        assert!((far.log_density((0.0, 0.0)) + LN_TWO_PI + 12.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_mean_closed_forms() {
        let single = model(&[((0.7, -0.4), 1.0)]);
        for y in [(0.0, 0.0), (3.0, -2.0)] {
            let pm = single.posterior_mean(y);
            assert!((pm.0 - 0.7).abs() < 1e-14 && (pm.1 + 0.4).abs() < 1e-14);
        }

        // antipodal pair: E[X1 | Y] = r_p tanh(r_p y1)
        let r_p = 0.9;
        let pair = model(&[((r_p, 0.0), 0.5), ((-r_p, 0.0), 0.5)]);
        for y in [(0.3, -1.0), (-2.0, 0.5), (4.0, 4.0)] {
            let pm = pair.posterior_mean(y);
            assert!((pm.0 - r_p * (r_p * y.0).tanh()).abs() < 1e-12);
            assert!(pm.1.abs() < 1e-14);
        }
        let odd = model(&[((1.0, 0.0), 0.5), ((-1.0, 0.0), 0.5)]);
        let pm = odd.posterior_mean((0.0, 5.0));
        assert_eq!(pm.0, 0.0);
        assert_eq!(pm.1, 0.0);
    }

    #[test]
    fn posterior_variance_closed_forms() {
        let single = model(&[((0.3, 0.2), 1.0)]);
        let v = single.posterior_variance((1.0, -1.0));
        assert!(v.iter().flatten().all(|e| e.abs() < 1e-14));

        let pair = model(&[((1.0, 0.0), 0.5), ((-1.0, 0.0), 0.5)]);
        let v = pair.posterior_variance((0.0, 0.0));
        assert!((v[0][0] - 1.0).abs() < 1e-14);
        assert!(v[0][1].abs() < 1e-14 && v[1][1].abs() < 1e-14);

        let v = pair.posterior_variance((10.0, 0.0));
        assert!(v[0][0] + v[1][1] <= 4.0 * (-10.0f64).exp());
    }

    #[test]
    fn information_density_closed_forms() {
        let rule = rule();
        let x = (0.8, -0.45);
        let at_x = model(&[(x, 1.0)]);
        assert!(information_density(x, &at_x, &rule).abs() < 1e-12);

        let origin = model(&[((0.0, 0.0), 1.0)]);
        for x in [(0.0, 0.0), (1.0, 0.5), (-1.2, 0.3)] {
            let d = information_density(x, &origin, &rule);
            assert!((d - 0.5 * (x.0 * x.0 + x.1 * x.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_density_path_matches_lse() {
        let rule = rule();
        let comps = vec![
            ExpandedAtom { point: (0.9, 0.3), mass: 0.2 },
            ExpandedAtom { point: (-0.9, 0.3), mass: 0.2 },
            ExpandedAtom { point: (0.9, -0.3), mass: 0.2 },
            ExpandedAtom { point: (-0.9, -0.3), mass: 0.2 },
            ExpandedAtom { point: (0.0, 1.0), mass: 0.1 },
            ExpandedAtom { point: (0.0, -1.0), mass: 0.1 },
        ];
        for x in [(0.0, 0.0), (0.7, 0.2), (-1.1, 0.9)] {
            let fast = expected_log_mixture(x, &comps, &rule);
            let slow = expected_log_mixture_lse(x, &comps, &rule);
            assert!((fast - slow).abs() < 1e-11, "{fast} vs {slow}");
        }
    }

    #[test]
    fn tweedie_and_hatsell_nolte_consistency() {
        let m = model(&[
            ((1.0, 0.2), 0.3),
            ((-0.5, 0.8), 0.3),
            ((0.1, -0.9), 0.4),
        ]);
        let mut rng = StdRng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let y = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let pm = m.posterior_mean(y);
            let g1 = (m.log_density((y.0 + h, y.1)) - m.log_density((y.0 - h, y.1))) / (2.0 * h);
            let g2 = (m.log_density((y.0, y.1 + h)) - m.log_density((y.0, y.1 - h))) / (2.0 * h);
            assert!((pm.0 - y.0 - g1).abs() < 1e-6, "at {y:?}");
            assert!((pm.1 - y.1 - g2).abs() < 1e-6, "at {y:?}");
        }

        let h = 1e-4;
        for _ in 0..20 {
            let y = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let v = m.posterior_variance(y);
            let f = |a: f64, b: f64| m.log_density((a, b));
            let h11 = (f(y.0 + h, y.1) - 2.0 * f(y.0, y.1) + f(y.0 - h, y.1)) / (h * h);
            let h22 = (f(y.0, y.1 + h) - 2.0 * f(y.0, y.1) + f(y.0, y.1 - h)) / (h * h);
            let h12 = (f(y.0 + h, y.1 + h) + f(y.0 - h, y.1 - h)
                - f(y.0 + h, y.1 - h)
                - f(y.0 - h, y.1 + h))
                / (4.0 * h * h);
            assert!((v[0][0] - 1.0 - h11).abs() < 1e-4);
            assert!((v[1][1] - 1.0 - h22).abs() < 1e-4);
            assert!((v[0][1] - h12).abs() < 1e-4);
        }
    }

    #[test]
    fn derivative_formulas_match_finite_differences() {
        let rule = rule();
        let c = EllipseConstraint::new(1.0, 0.5).unwrap();
        let d = SymmetricBoundaryDistribution::new(
            c,
            vec![
                HalfAxisAtom { x1: 0.35, mass: 0.4 },
                HalfAxisAtom { x1: 0.8, mass: 0.35 },
                HalfAxisAtom { x1: 1.0, mass: 0.25 },
            ],
        )
        .unwrap();
        let m = OutputDensityModel::from_distribution(&d);
        let dd = |x1: f64| {
            let p = crate::input::boundary_point(x1, &c).unwrap();
            information_density(p, &m, &rule)
        };

        let x1 = 0.3;
        let h = 1e-4;
        let fd1 = (dd(x1 + h) - dd(x1 - h)) / (2.0 * h);
        let an1 = info_density_d1(x1, &m, &c, &rule).unwrap();
        assert!((fd1 - an1).abs() <= 1e-5 * an1.abs(), "{fd1} vs {an1}");

        let h = 1e-3;
        let fd2 = (dd(x1 + h) - 2.0 * dd(x1) + dd(x1 - h)) / (h * h);
        let an2 = info_density_d2(x1, &m, &c, &rule).unwrap();
        assert!((fd2 - an2).abs() <= 1e-4 * an2.abs(), "{fd2} vs {an2}");
    }

    #[test]
    fn d1_special_cases() {
        let rule = rule();
        let c = EllipseConstraint::new(1.0, 0.5).unwrap();
        let sym = SymmetricBoundaryDistribution::new(
            c,
            vec![
                HalfAxisAtom { x1: 0.4, mass: 0.5 },
                HalfAxisAtom { x1: 1.0, mass: 0.5 },
            ],
        )
        .unwrap();
        let m = OutputDensityModel::from_distribution(&sym);
        // odd in x1 by symmetry
        assert!(info_density_d1(0.0, &m, &c, &rule).unwrap().abs() < 1e-12);

        // point mass at the origin: posterior mean vanishes identically
        let origin = model(&[((0.0, 0.0), 1.0)]);
        for x1 in [0.2, 0.5, 0.9] {
            let d1 = info_density_d1(x1, &origin, &c, &rule).unwrap();
            assert!((d1 - x1 * (1.0 - 0.25)).abs() < 1e-12);
        }
        let d2 = info_density_d2(0.0, &origin, &c, &rule).unwrap();
        assert!((d2 - 0.75).abs() < 1e-12);
        let circle = EllipseConstraint::new(1.0, 1.0).unwrap();
        let d2 = info_density_d2(0.0, &origin, &circle, &rule).unwrap();
        assert!(d2.abs() < 1e-12);

        // endpoint guard
        assert!(matches!(
            info_density_d1(1.0 - 1e-10, &m, &c, &rule),
            Err(Error::EndpointDerivative { .. })
        ));
    }

    #[test]
    fn mutual_information_examples() {
        let rule = rule();
        let c = EllipseConstraint::new(0.5, 0.0).unwrap();
        let point = SymmetricBoundaryDistribution::new(
            c,
            vec![HalfAxisAtom { x1: 0.0, mass: 1.0 }],
        )
        .unwrap();
        assert!(mutual_information(&point, &rule).abs() < 1e-12);

        // low-SNR antipodal pair, value frozen from an independent run
        let c = EllipseConstraint::new(0.1, 0.0).unwrap();
        let pair = SymmetricBoundaryDistribution::new(
            c,
            vec![HalfAxisAtom { x1: 0.1, mass: 1.0 }],
        )
        .unwrap();
        let mi = mutual_information(&pair, &rule);
        assert!((mi - 0.004975164625450537).abs() < 1e-12);
        // leading order r_p^2/2 * (1 - o(1))
        assert!(mi < 0.005 && mi > 0.0049);
    }

    #[test]
    fn information_density_nonnegative_property() {
        let rule = rule();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let r_p: f64 = rng.gen_range(0.2..1.4);
            let r_m = r_p * rng.gen_range(0.0..1.0);
            let c = EllipseConstraint::new(r_p, r_m).unwrap();
            let d = SymmetricBoundaryDistribution::new(
                c,
                vec![
                    HalfAxisAtom { x1: r_p * 0.3, mass: 0.5 },
                    HalfAxisAtom { x1: r_p, mass: 0.5 },
                ],
            )
            .unwrap();
            let m = OutputDensityModel::from_distribution(&d);
            for _ in 0..10 {
                let x = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                assert!(information_density(x, &m, &rule) >= -1e-9);
            }
        }
    }

    #[test]
    fn subharmonic_inside_sqrt2_ball() {
        let rule = rule();
        let mut rng = StdRng::seed_from_u64(5);
        let c = EllipseConstraint::new(1.3, 0.9).unwrap();
        let d = SymmetricBoundaryDistribution::new(
            c,
            vec![
                HalfAxisAtom { x1: 0.0, mass: 0.3 },
                HalfAxisAtom { x1: 0.9, mass: 0.3 },
                HalfAxisAtom { x1: 1.3, mass: 0.4 },
            ],
        )
        .unwrap();
        let m = OutputDensityModel::from_distribution(&d);
        for _ in 0..25 {
            let x = (rng.gen_range(-1.2..1.2), rng.gen_range(-0.8..0.8));
            assert!(info_density_laplacian(x, &m, &rule) >= -1e-8);
        }
    }
}
