//! Capacity solver: Blahut-Arimoto over a symmetric boundary grid, cluster
//! merging, golden-section location polish, and a KKT certificate with
//! support refinement. Closed-form oracles for the antipodal-pair and
//! uniform-circle special cases live here as well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::EllipseConstraint;
use crate::error::{Error, Result};
use crate::input::{boundary_point, HalfAxisAtom, SymmetricBoundaryDistribution, MERGE_TOL_REL};
use crate::kkt::{kkt_report, KktReport, DEFAULT_GRID_N, DEFAULT_TOL};
use crate::output_stats::{information_density, mutual_information, OutputDensityModel};
use crate::quadrature::{QuadratureRule, DEFAULT_ORDER};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Reduced quadrature order for the cluster-localization phase; final
/// capacity, polish, and KKT values always use the configured order.
const GRID_PHASE_ORDER: usize = 40;

/// Iteration cap for the grid phase; the polish phase owns convergence.
const GRID_PHASE_CAP: usize = 3000;

/// Atoms below this mass are dropped after each mass optimization.
const PRUNE_TOL: f64 = 1e-12;

/// Mass threshold for cluster detection on the converged grid.
const CLUSTER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Number of half-axis grid atoms, uniform in the ellipse angle.
    pub grid_n: usize,
    /// Stopping tolerance on the mutual-information change per iteration.
    pub ba_tol: f64,
    /// Total Blahut-Arimoto iteration budget across all phases.
    pub max_iters: usize,
    /// Atom clustering distance in `x1` units; the effective distance is
    /// never below the relative floor of the distribution type.
    pub merge_tol: f64,
    /// Gauss-Hermite order for reported quantities.
    pub quadrature_order: usize,
    /// Permit the boundary-support heuristic beyond `r_p = sqrt(2)`, where
    /// it is no longer backed by the subharmonicity argument.
    pub allow_boundary_heuristic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid_n: 64,
            ba_tol: 1e-9,
            max_iters: 20_000,
            merge_tol: 1e-6,
            quadrature_order: DEFAULT_ORDER,
            allow_boundary_heuristic: false,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.grid_n < 4 || self.grid_n > 1500 {
            return Err(Error::InvalidOptions(format!(
                "grid_n = {} outside [4, 1500]",
                self.grid_n
            )));
        }
        if !(self.ba_tol >= 1e-12) {
            return Err(Error::InvalidOptions(format!(
                "ba_tol = {} must be at least 1e-12",
                self.ba_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidOptions("max_iters must be positive".into()));
        }
        if !(self.merge_tol > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "merge_tol = {} must be positive",
                self.merge_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    TwoPoint,
    CircleUniform,
    GeneralDiscrete,
    Degenerate1d,
    DegenerateZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Capacity estimate in nats; equals the mutual information of
    /// `distribution` by construction.
    pub capacity: f64,
    pub distribution: SymmetricBoundaryDistribution,
    pub kkt: KktReport,
    /// Total Blahut-Arimoto iterations spent.
    pub iterations: usize,
    pub regime_label: RegimeLabel,
}

/// Mutual information of the equiprobable antipodal pair `{-r_p, r_p}` over
/// the scalar unit-variance Gaussian channel. The minor-axis dimension of
/// the two-point input contributes nothing.
pub fn two_point_capacity(r_p: f64, rule: &QuadratureRule) -> f64 {
    assert!(r_p >= 0.0, "two_point_capacity needs r_p >= 0");
    let e = rule
        .expect_gaussian_1d(|z| ln_cosh(r_p * (z + r_p)), 0.0)
        .expect("ln cosh is finite");
    r_p * r_p - e
}

/// Mutual information of the input uniform on the circle of radius `r`,
/// via the closed-form output density
/// `f_Y(y) = exp(-(|y|^2 + r^2)/2) I0(r |y|) / (2 pi)`.
///
/// Refuses radii beyond 2.4, outside the range where the uniform-circle
/// input is known to achieve capacity and this value can serve as an oracle.
pub fn circle_capacity(r: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(0.0..=2.4).contains(&r) {
        return Err(Error::CircleRadiusOutOfRange(r));
    }
    let e = rule.expect_2d_unchecked(
        |y1, y2| bessel::ln_i0(r * (y1 * y1 + y2 * y2).sqrt()),
        (r, 0.0),
    );
    Ok(r * r - e)
}

fn ln_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Computes the capacity and capacity-achieving boundary distribution for
/// the given constraint.
pub fn solve_capacity(c: &EllipseConstraint, opts: &SolverOptions) -> Result<CapacityResult> {
    opts.validate()?;
    let (r_p, r_m) = (c.r_p(), c.r_m());
    let rule = QuadratureRule::cached(opts.quadrature_order)?;

    if r_p == 0.0 {
        let distribution = SymmetricBoundaryDistribution::new(
            *c,
            vec![HalfAxisAtom { x1: 0.0, mass: 1.0 }],
        )?;
        let kkt = kkt_report(&distribution, DEFAULT_GRID_N, DEFAULT_TOL, &rule)?;
        return Ok(CapacityResult {
            capacity: 0.0,
            distribution,
            kkt,
            iterations: 0,
            regime_label: RegimeLabel::DegenerateZero,
        });
    }
    if r_p > SQRT_2 && !opts.allow_boundary_heuristic {
        return Err(Error::RegimeRefusal { r_p });
    }

    let mut budget = opts.max_iters;

    // Grid phase: locate the mass clusters with a reduced-order engine.
    let grid_rule = QuadratureRule::cached(GRID_PHASE_ORDER.min(opts.quadrature_order))?;
    let grid = angular_grid(c, opts.grid_n);
    let mut engine = BaEngine::new(c, &grid, &grid_rule);
    let mut masses = orbit_uniform_masses(c, &grid);
    let grid_run = engine.run(
        &mut masses,
        opts.ba_tol.max(1e-9),
        f64::INFINITY,
        GRID_PHASE_CAP.min(budget),
    );
    budget = budget.saturating_sub(grid_run.iterations);
    let mut iterations = grid_run.iterations;

    // Circle case: the angular grid expands to a rotation-invariant point
    // set, so the orbit-uniform profile is already the grid optimum.
    if r_m == r_p {
        let expanded_flat = expanded_flatness(c, &grid, &masses);
        if expanded_flat <= 0.01 {
            let distribution = build_distribution(c, &grid, &masses)?;
            let capacity = mutual_information(&distribution, &rule);
            let kkt = kkt_report(&distribution, DEFAULT_GRID_N, DEFAULT_TOL, &rule)?;
            return Ok(CapacityResult {
                capacity,
                distribution,
                kkt,
                iterations,
                regime_label: RegimeLabel::CircleUniform,
            });
        }
    }

    // A wide contiguous mass run means the optimum is denser than the grid
    // resolves (the support cardinality blows up toward the circle case).
    // Merging is meaningless there; instead certify the grid distribution
    // itself through the ascent gap and the KKT report.
    let debug = std::env::var_os("PEAKCAP_DEBUG").is_some();
    if widest_run(&masses) >= grid.len().div_ceil(3) {
        let run = engine.run(&mut masses, opts.ba_tol, DEFAULT_TOL / 8.0, budget);
        iterations += run.iterations;
        if debug {
            eprintln!(
                "dense path: {} extra iters (converged={})",
                run.iterations, run.converged
            );
        }
        let distribution = build_distribution(c, &grid, &masses)?;
        let capacity = mutual_information(&distribution, &rule);
        let report = kkt_report(&distribution, DEFAULT_GRID_N, DEFAULT_TOL, &rule)?;
        if !report.passed {
            return Err(Error::NonConvergence { iterations, capacity });
        }
        let regime_label = if r_m == 0.0 {
            RegimeLabel::Degenerate1d
        } else {
            RegimeLabel::GeneralDiscrete
        };
        return Ok(CapacityResult {
            capacity,
            distribution,
            kkt: report,
            iterations,
            regime_label,
        });
    }

    // Cluster the converged grid masses into candidate atoms.
    let mut support = extract_clusters(c, &grid, &masses);
    if debug {
        eprintln!(
            "grid phase: {} iters; clusters: {:?}",
            grid_run.iterations, support
        );
    }

    // Polish: alternate mass re-optimization with golden-section location
    // updates until the support stops moving, then certify with a KKT
    // report, adding atoms at violations if needed.
    let mut refine_rounds = 0;
    loop {
        let polish = polish_support(c, &mut support, opts, &rule, budget)?;
        budget = budget.saturating_sub(polish.iterations);
        iterations += polish.iterations;
        if !polish.converged && budget == 0 {
            let (_, capacity) = finish(c, &support, &rule)?;
            return Err(Error::NonConvergence { iterations, capacity });
        }

        let (distribution, capacity) = finish(c, &support, &rule)?;
        let report = kkt_report(&distribution, DEFAULT_GRID_N, DEFAULT_TOL, &rule)?;
        if debug {
            eprintln!(
                "round {refine_rounds}: polish {} iters converged={}, support {:?}, C={:.9}, viol={:.3e}, resid={:.3e}",
                polish.iterations, polish.converged, support, capacity,
                report.max_violation, report.max_equalization_residual
            );
        }
        let target = DEFAULT_TOL / 4.0;
        if report.max_violation <= target && report.max_equalization_residual <= target {
            let regime_label = label(c, &distribution);
            return Ok(CapacityResult {
                capacity,
                distribution,
                kkt: report,
                iterations,
                regime_label,
            });
        }
        refine_rounds += 1;
        if refine_rounds > 40 || budget == 0 {
            // Report honestly with the certificate we have.
            let regime_label = label(c, &distribution);
            if report.passed {
                return Ok(CapacityResult {
                    capacity,
                    distribution,
                    kkt: report,
                    iterations,
                    regime_label,
                });
            }
            return Err(Error::NonConvergence {
                iterations,
                capacity,
            });
        }
        if report.max_violation > target {
            add_violating_atoms(c, &distribution, capacity + target, &mut support, &rule);
        } else {
            drop_weakest_atom(c, &distribution, &mut support, &rule);
        }
    }
}

struct BaRun {
    iterations: usize,
    converged: bool,
}

struct PolishRun {
    iterations: usize,
    converged: bool,
}

/// Half-axis grid uniform in the ellipse angle, ascending in `x1`; includes
/// both the top of the minor axis and the major-axis endpoint.
fn angular_grid(c: &EllipseConstraint, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let theta = i as f64 * std::f64::consts::FRAC_PI_2 / (n - 1) as f64;
            c.r_p() * theta.sin()
        })
        .collect()
}

fn orbit_size(c: &EllipseConstraint, x1: f64) -> f64 {
    let (a, b) = representative(c, x1);
    match (a == 0.0, b == 0.0) {
        (true, true) => 1.0,
        (false, false) => 4.0,
        _ => 2.0,
    }
}

/// Initial masses proportional to orbit size, i.e. uniform over the expanded
/// support points. On the circle this is exactly the grid optimum.
fn orbit_uniform_masses(c: &EllipseConstraint, grid: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = grid.iter().map(|&x1| orbit_size(c, x1)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn representative(c: &EllipseConstraint, x1: f64) -> (f64, f64) {
    crate::input::representative(x1, c)
}

fn expanded_flatness(c: &EllipseConstraint, grid: &[f64], masses: &[f64]) -> f64 {
    let mut per_point: Vec<f64> = Vec::with_capacity(grid.len());
    for (&x1, &m) in grid.iter().zip(masses) {
        per_point.push(m / orbit_size(c, x1));
    }
    let max = per_point.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = per_point.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
    ((max - mean) / mean).max((mean - min) / mean)
}

fn build_distribution(
    c: &EllipseConstraint,
    grid: &[f64],
    masses: &[f64],
) -> Result<SymmetricBoundaryDistribution> {
    let kept: Vec<(f64, f64)> = grid
        .iter()
        .zip(masses)
        .filter(|(_, &m)| m > PRUNE_TOL)
        .map(|(&x1, &m)| (x1, m))
        .collect();
    let total: f64 = kept.iter().map(|a| a.1).sum();
    let atoms = kept
        .into_iter()
        .map(|(x1, m)| HalfAxisAtom { x1, mass: m / total })
        .collect();
    SymmetricBoundaryDistribution::new(*c, atoms)
}

/// Length in grid cells of the longest contiguous above-floor mass run.
fn widest_run(masses: &[f64]) -> usize {
    let mut widest = 0;
    let mut current = 0;
    for &m in masses {
        if m > CLUSTER_FLOOR {
            current += 1;
            widest = widest.max(current);
        } else {
            current = 0;
        }
    }
    widest
}

/// Fixed-location Blahut-Arimoto engine. Evaluation points are the atom
/// representatives and the mixture is folded over each atom's symmetry
/// orbit, so the per-node tables stay iteration-invariant:
/// `S_i(k1,k2) = sum_j w_j c_j cosh(y1 a_j) cosh(y2 b_j)` with
/// `y = rep_i + node`.
struct BaEngine {
    reps: Vec<(f64, f64)>,
    chat: Vec<f64>,
    norms: Vec<f64>,
    // [point][comp][node]
    u: Vec<f64>,
    v: Vec<f64>,
    n_nodes: usize,
    weights: Vec<f64>,
    safe: bool,
    rule_order: usize,
}

impl BaEngine {
    fn new(c: &EllipseConstraint, grid: &[f64], rule: &QuadratureRule) -> Self {
        let reps: Vec<(f64, f64)> = grid.iter().map(|&x1| representative(c, x1)).collect();
        let n_nodes = rule.order();
        let nodes = rule.nodes();
        let m = reps.len();
        let max_node = nodes[n_nodes - 1].abs();
        let safe = (c.r_p() + max_node) * c.r_p() < 650.0;

        let chat: Vec<f64> = reps
            .iter()
            .map(|&(a, b)| (-0.5 * (a * a + b * b)).exp())
            .collect();
        let norms: Vec<f64> = reps.iter().map(|&(a, b)| 0.5 * (a * a + b * b)).collect();

        let (mut u, mut v) = (Vec::new(), Vec::new());
        if safe {
            u = vec![0.0; m * m * n_nodes];
            v = vec![0.0; m * m * n_nodes];
            for (i, &(y1, y2)) in reps.iter().enumerate() {
                for (j, &(a, b)) in reps.iter().enumerate() {
                    for (k, &node) in nodes.iter().enumerate() {
                        u[(i * m + j) * n_nodes + k] = ((y1 + node) * a).cosh();
                        v[(i * m + j) * n_nodes + k] = ((y2 + node) * b).cosh();
                    }
                }
            }
        }
        Self {
            reps,
            chat,
            norms,
            u,
            v,
            n_nodes,
            weights: rule.weights().to_vec(),
            safe,
            rule_order: rule.order(),
        }
    }

    fn densities(&self, masses: &[f64]) -> Vec<f64> {
        let m = self.reps.len();
        if !self.safe {
            return self.densities_fallback(masses);
        }
        let g: Vec<f64> = masses.iter().zip(&self.chat).map(|(w, c)| w * c).collect();
        (0..m)
            .into_par_iter()
            .map(|i| {
                let n = self.n_nodes;
                let mut row = vec![0.0; n];
                let mut acc = 0.0;
                for k1 in 0..n {
                    row.iter_mut().for_each(|r| *r = 0.0);
                    for j in 0..m {
                        let coeff = g[j] * self.u[(i * m + j) * n + k1];
                        if coeff == 0.0 {
                            continue;
                        }
                        let vj = &self.v[(i * m + j) * n..(i * m + j + 1) * n];
                        for (r, vv) in row.iter_mut().zip(vj) {
                            *r += coeff * vv;
                        }
                    }
                    let mut inner = 0.0;
                    for (r, w2) in row.iter().zip(&self.weights) {
                        inner += w2 * r.ln();
                    }
                    acc += self.weights[k1] * inner;
                }
                self.norms[i] - acc
            })
            .collect()
    }

    /// Exact slow path for radii large enough to overflow cosh tables.
    fn densities_fallback(&self, masses: &[f64]) -> Vec<f64> {
        let rule = QuadratureRule::cached(self.rule_order).expect("order already validated");
        let comps = expand_weighted(&self.reps, masses);
        let model = OutputDensityModel::from_components(comps).expect("masses normalized");
        self.reps
            .par_iter()
            .map(|&x| information_density(x, &model, &rule))
            .collect()
    }

    /// Runs Blahut-Arimoto mass updates until the mutual-information change
    /// drops below `tol` (and the ascent gap `max_j D_j - I`, which bounds
    /// the suboptimality over the support's hull, falls below `gap_tol`) or
    /// the iteration budget is exhausted.
    fn run(&mut self, masses: &mut Vec<f64>, tol: f64, gap_tol: f64, cap: usize) -> BaRun {
        let mut prev = f64::NEG_INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < cap {
            let d = self.densities(masses);
            let info: f64 = masses.iter().zip(&d).map(|(w, di)| w * di).sum();
            let dmax = d.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            iterations += 1;
            debug_assert!(
                prev == f64::NEG_INFINITY || info >= prev - 1e-12,
                "Blahut-Arimoto objective decreased: {prev} -> {info}"
            );
            if (info - prev).abs() < tol && dmax - info <= gap_tol {
                converged = true;
                break;
            }
            prev = info;
            let mut total = 0.0;
            for (w, di) in masses.iter_mut().zip(&d) {
                *w *= (di - dmax).exp();
                total += *w;
            }
            masses.iter_mut().for_each(|w| *w /= total);
        }
        BaRun { iterations, converged }
    }
}

fn expand_weighted(reps: &[(f64, f64)], masses: &[f64]) -> Vec<crate::input::ExpandedAtom> {
    use crate::input::ExpandedAtom;
    let mut out = Vec::new();
    for (&(a, b), &m) in reps.iter().zip(masses) {
        if m <= 0.0 {
            continue;
        }
        match (a == 0.0, b == 0.0) {
            (true, true) => out.push(ExpandedAtom { point: (0.0, 0.0), mass: m }),
            (false, true) => {
                out.push(ExpandedAtom { point: (a, 0.0), mass: m / 2.0 });
                out.push(ExpandedAtom { point: (-a, 0.0), mass: m / 2.0 });
            }
            (true, false) => {
                out.push(ExpandedAtom { point: (0.0, b), mass: m / 2.0 });
                out.push(ExpandedAtom { point: (0.0, -b), mass: m / 2.0 });
            }
            (false, false) => {
                for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    out.push(ExpandedAtom { point: (s1 * a, s2 * b), mass: m / 4.0 });
                }
            }
        }
    }
    out
}

/// Groups above-floor grid masses into clusters and returns the
/// mass-weighted centers. Contiguous runs are split at interior local
/// minima of the mass profile, so neighboring true atoms that share a run
/// still seed separate candidates.
fn extract_clusters(c: &EllipseConstraint, grid: &[f64], masses: &[f64]) -> Vec<(f64, f64)> {
    let r_p = c.r_p();
    let mut runs: Vec<(usize, usize)> = Vec::new(); // [start, end)
    let mut start = None;
    for (i, &m) in masses.iter().enumerate() {
        if m > CLUSTER_FLOOR {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            runs.push((s, i));
        }
    }
    if let Some(s) = start {
        runs.push((s, masses.len()));
    }

    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for (s, e) in runs {
        // split at strict interior local minima that sit well below both
        // neighboring peaks
        let mut cut_points = vec![s];
        let mut peak = masses[s];
        for i in s + 1..e.saturating_sub(1) {
            if masses[i] < masses[i - 1] && masses[i] <= masses[i + 1] {
                let right_peak = masses[i + 1..e].iter().fold(0.0f64, |a, &b| a.max(b));
                if masses[i] < 0.25 * peak.min(right_peak) {
                    cut_points.push(i + 1);
                    peak = 0.0;
                }
            }
            peak = peak.max(masses[i]);
        }
        cut_points.push(e);
        for w in cut_points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mass: f64 = masses[a..b].iter().sum();
            if mass <= 0.0 {
                continue;
            }
            let center: f64 = grid[a..b]
                .iter()
                .zip(&masses[a..b])
                .map(|(x, m)| x * m)
                .sum::<f64>()
                / mass;
            clusters.push((snap(center, r_p), mass));
        }
    }
    if clusters.is_empty() {
        clusters.push((r_p, 1.0));
    }
    // The major-axis endpoint belongs to every optimal support; make sure a
    // candidate is present for the mass optimizer to keep or kill.
    if !clusters.iter().any(|&(x, _)| x > 0.95 * r_p) {
        clusters.push((r_p, 1e-6));
    }
    let total: f64 = clusters.iter().map(|c| c.1).sum();
    clusters.iter_mut().for_each(|c| c.1 /= total);
    clusters
}

fn snap(x1: f64, r_p: f64) -> f64 {
    if x1 <= 1e-7 * r_p {
        0.0
    } else if x1 >= r_p * (1.0 - 1e-7) {
        r_p
    } else {
        x1
    }
}

/// Alternates mass re-optimization and per-atom golden-section location
/// updates on the current support.
fn polish_support(
    c: &EllipseConstraint,
    support: &mut Vec<(f64, f64)>,
    opts: &SolverOptions,
    rule: &QuadratureRule,
    budget: usize,
) -> Result<PolishRun> {
    let r_p = c.r_p();
    let eff_merge = opts.merge_tol.max(MERGE_TOL_REL * r_p);
    let mut iterations = 0;
    let mut converged = false;

    for _round in 0..50 {
        let remaining = budget.saturating_sub(iterations);
        if remaining == 0 {
            break;
        }
        // masses
        let locs: Vec<f64> = support.iter().map(|a| a.0).collect();
        let mut masses: Vec<f64> = support.iter().map(|a| a.1).collect();
        let mut engine = BaEngine::new(c, &locs, rule);
        let run = engine.run(
            &mut masses,
            opts.ba_tol,
            DEFAULT_TOL / 8.0,
            remaining.min(4000),
        );
        iterations += run.iterations;

        // prune
        let mut next: Vec<(f64, f64)> = locs
            .iter()
            .zip(&masses)
            .filter(|(_, &m)| m > PRUNE_TOL)
            .map(|(&x, &m)| (x, m))
            .collect();
        let total: f64 = next.iter().map(|a| a.1).sum();
        next.iter_mut().for_each(|a| a.1 /= total);

        // locations
        let model_atoms = expand_weighted(
            &next.iter().map(|&(x, _)| representative(c, x)).collect::<Vec<_>>(),
            &next.iter().map(|a| a.1).collect::<Vec<_>>(),
        );
        let model = OutputDensityModel::from_components(model_atoms)?;
        let objective = |x1: f64| {
            let p = if x1 >= r_p {
                (r_p, 0.0)
            } else {
                boundary_point(x1, c).expect("bracket stays inside")
            };
            information_density(p, &model, rule)
        };
        // Each atom searches only its own basin: brackets end at the
        // midpoints to the neighboring atoms, so atoms cannot hop across
        // one another and oscillate.
        let mut max_move = 0.0f64;
        let n = next.len();
        let old: Vec<f64> = next.iter().map(|a| a.0).collect();
        for i in 0..n {
            let lo = if i == 0 { 0.0 } else { 0.5 * (old[i - 1] + old[i]) };
            let hi = if i + 1 < n { 0.5 * (old[i] + old[i + 1]) } else { r_p };
            let x = snap(golden_max(&objective, lo, hi, 1e-10 * r_p.max(1.0)), r_p);
            max_move = max_move.max((x - next[i].0).abs());
            next[i].0 = x;
        }

        // merge
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(next.len());
        for &(x, m) in next.iter() {
            if let Some(last) = merged.last_mut() {
                if x - last.0 < eff_merge {
                    let total = last.1 + m;
                    last.0 = snap((last.0 * last.1 + x * m) / total, r_p);
                    last.1 = total;
                    continue;
                }
            }
            merged.push((x, m));
        }
        let did_merge = merged.len() != next.len();
        *support = merged;

        if std::env::var_os("PEAKCAP_DEBUG").is_some() {
            eprintln!(
                "  polish round {_round}: ba {} iters converged={}, max_move={:.2e}, merged={}, support {:?}",
                run.iterations, run.converged, max_move, did_merge, support
            );
        }
        if run.converged && !did_merge && max_move < 1e-9 * r_p.max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(PolishRun { iterations, converged })
}

fn finish(
    c: &EllipseConstraint,
    support: &[(f64, f64)],
    rule: &QuadratureRule,
) -> Result<(SymmetricBoundaryDistribution, f64)> {
    let total: f64 = support.iter().map(|a| a.1).sum();
    let atoms: Vec<HalfAxisAtom> = support
        .iter()
        .map(|&(x1, m)| HalfAxisAtom { x1, mass: m / total })
        .collect();
    let distribution = SymmetricBoundaryDistribution::new(*c, atoms)?;
    let capacity = mutual_information(&distribution, rule);
    Ok((distribution, capacity))
}

fn label(c: &EllipseConstraint, d: &SymmetricBoundaryDistribution) -> RegimeLabel {
    if c.r_m() == 0.0 {
        RegimeLabel::Degenerate1d
    } else if d.atoms().len() == 1 && d.atoms()[0].x1 == c.r_p() {
        RegimeLabel::TwoPoint
    } else {
        RegimeLabel::GeneralDiscrete
    }
}

/// Adds fresh atoms at every well-separated local maximum of the boundary
/// information density that exceeds `level`. Densely supported optima need
/// several new atoms per round, so a single worst point is not enough.
fn add_violating_atoms(
    c: &EllipseConstraint,
    d: &SymmetricBoundaryDistribution,
    level: f64,
    support: &mut Vec<(f64, f64)>,
    rule: &QuadratureRule,
) {
    let model = OutputDensityModel::from_distribution(d);
    let n = 1024;
    let densities: Vec<(f64, f64)> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let theta = std::f64::consts::FRAC_PI_2 * k as f64 / n as f64;
            let x1 = c.r_p() * theta.sin();
            (x1, information_density(representative(c, x1), &model, rule))
        })
        .collect();
    let min_sep = 1e-3 * c.r_p();
    let mut added = false;
    for k in 0..=n {
        let is_peak = (k == 0 || densities[k].1 >= densities[k - 1].1)
            && (k == n || densities[k].1 > densities[k + 1].1);
        if !is_peak || densities[k].1 <= level {
            continue;
        }
        let x1 = snap(densities[k].0, c.r_p());
        if support.iter().any(|&(x, _)| (x - x1).abs() < min_sep) {
            continue;
        }
        support.push((x1, 1e-3));
        added = true;
    }
    if !added {
        // Worst point coincides with existing atoms; nudge equalization by
        // re-running the mass loop on the same support.
        return;
    }
    support.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = support.iter().map(|a| a.1).sum();
    support.iter_mut().for_each(|a| a.1 /= total);
}

/// Drops the support atom with the lowest information density; used when
/// equalization fails without any grid violation.
fn drop_weakest_atom(
    c: &EllipseConstraint,
    d: &SymmetricBoundaryDistribution,
    support: &mut Vec<(f64, f64)>,
    rule: &QuadratureRule,
) {
    if support.len() <= 1 {
        return;
    }
    let model = OutputDensityModel::from_distribution(d);
    let mut worst = (f64::INFINITY, usize::MAX);
    for (i, &(x1, _)) in support.iter().enumerate() {
        if x1 == c.r_p() {
            continue; // the endpoint stays
        }
        let dd = information_density(representative(c, x1), &model, rule);
        if dd < worst.0 {
            worst = (dd, i);
        }
    }
    if worst.1 != usize::MAX {
        support.remove(worst.1);
        let total: f64 = support.iter().map(|a| a.1).sum();
        support.iter_mut().for_each(|a| a.1 /= total);
    }
}

/// Golden-section maximization on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // keep exact endpoints when the maximum sits on the bracket edge
    if lo + tol >= mid {
        if f(lo) >= f(mid) {
            return lo;
        }
    } else if hi - tol <= mid && f(hi) >= f(mid) {
        return hi;
    }
    mid
}

/// Modified Bessel function of order zero: power series up to 15, the
/// large-argument asymptotic expansion beyond.
mod bessel {
    const SPLIT: f64 = 15.0;

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn i0(x: f64) -> f64 {
        let ax = x.abs();
        if ax < SPLIT {
            series(ax)
        } else {
            asymptotic_scaled(ax) * ax.exp()
        }
    }

    /// `ln I0(x)`, safe for arguments far beyond the overflow point of I0.
    pub fn ln_i0(x: f64) -> f64 {
        let ax = x.abs();
        if ax < SPLIT {
            series(ax).ln()
        } else {
            ax + asymptotic_scaled(ax).ln()
        }
    }

    fn series(ax: f64) -> f64 {
        let q = 0.25 * ax * ax;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= q / ((k * k) as f64);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum
    }

    /// `I0(x) e^{-x}`: asymptotic series with coefficients
    /// `((2k-1)!!)^2 / (k! 8^k)`. The series is divergent; summation stops
    /// at the smallest term, which bounds the truncation error.
    fn asymptotic_scaled(ax: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1u32..60 {
            let odd = (2 * k - 1) as f64;
            let next = term * odd * odd / (8.0 * k as f64 * ax);
            if next >= term {
                break;
            }
            term = next;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum / (2.0 * std::f64::consts::PI * ax).sqrt()
    }

}
