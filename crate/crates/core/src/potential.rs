//! Stage-1 experiment game under a VCG stage 2.
//!
//! Expected welfare is an exact potential for this game: a unilateral change
//! of one bidder's experiment map moves her net interim payoff and the
//! welfare by the same amount. Equilibria are found by symmetric best-response
//! ascent on the potential.

use serde::{Deserialize, Serialize};

use crate::config::MechanismConfig;
use crate::dist::expected_max;
use crate::error::{Error, Result};
use crate::experiment::{make_mean_constrained, vertex_experiments, Experiment, Shape};
use crate::grid::ValueGrid;
use crate::profile::StrategyProfile;
use crate::vcg::{interim_curve, InterimCurve};

/// Optimal vertex of `max sum_j m_j v_j` over probability vectors with mean
/// `center`: support `{lo, hi}` (`lo == hi` for a point mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub lo: usize,
    pub hi: usize,
    pub value: f64,
}

const MASS_FLOOR: f64 = 1e-15;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Maximizes a linear objective over mean-constrained densities by reading
/// the upper concave envelope of `(z_j, v_j)` at `center`.
///
/// Among optimal vertices the lexicographically smallest `(lo, hi)` is
/// returned, a point mass `{j}` counting as `(j, j)`.
pub fn best_vertex(points: &[f64], values: &[f64], center: f64, tol: f64) -> Result<Vertex> {
    let last = points.len() - 1;
    if center < points[0] - tol || center > points[last] + tol {
        return Err(Error::Infeasible(format!(
            "center {center} outside [{}, {}]",
            points[0], points[last]
        )));
    }
    let c = center.clamp(points[0], points[last]);
    let v_span = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let eps_cross = 1e-12 * (points[last] - points[0]) * v_span;
    let eps_v = 1e-12 * v_span;

    let mut hull: Vec<usize> = Vec::with_capacity(points.len());
    for j in 0..points.len() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            if cross((points[o], values[o]), (points[a], values[a]), (points[j], values[j]))
                > -eps_cross
            {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }

    if let Some(&j) = hull.iter().find(|&&j| (points[j] - c).abs() <= tol) {
        return Ok(Vertex {
            lo: j,
            hi: j,
            value: values[j],
        });
    }
    let k = hull
        .windows(2)
        .position(|w| points[w[0]] < c && c < points[w[1]])
        .expect("center strictly inside the hull span");
    let (p, q) = (hull[k], hull[k + 1]);
    let slope = (values[q] - values[p]) / (points[q] - points[p]);
    let on_face = |j: usize| values[j] >= values[p] + slope * (points[j] - points[p]) - eps_v;
    let lo = (0..=last)
        .find(|&j| points[j] < c && on_face(j))
        .unwrap_or(p);
    let hi = (0..=last)
        .find(|&j| points[j] > c && on_face(j))
        .unwrap_or(q);
    let w_hi = (c - points[lo]) / (points[hi] - points[lo]);
    Ok(Vertex {
        lo,
        hi,
        value: (1.0 - w_hi) * values[lo] + w_hi * values[hi],
    })
}

/// Net objective per grid point for a type with cost scale `r` whose cost is
/// anchored at `anchor`.
fn net_values(cfg: &MechanismConfig, curve: &InterimCurve, r: f64, anchor: f64) -> Vec<f64> {
    let w = cfg.cost_model.weights(&cfg.value_grid, r, anchor);
    curve.pi.iter().zip(w).map(|(p, c)| p - c).collect()
}

/// Best experiment in the class centered at `z_{s_report}` for the true type
/// `(r, s_true)`, with its pre-fee value.
pub fn best_experiment(
    cfg: &MechanismConfig,
    curve: &InterimCurve,
    r: f64,
    s_true: f64,
    s_report: f64,
) -> Result<(Experiment, f64)> {
    let grid = &cfg.value_grid;
    let center = grid.center(s_report);
    let anchor = cfg.cost_model.anchor_point(grid.center(s_true), center);
    let values = net_values(cfg, curve, r, anchor);
    let v = best_vertex(grid.points(), &values, center, cfg.tolerances.mean)?;
    Ok((Experiment::two_point(grid, v.lo, v.hi, center), v.value))
}

/// Truthful best response of type `(r, s)` against the interim curve.
pub fn best_response(
    cfg: &MechanismConfig,
    curve: &InterimCurve,
    r: f64,
    s: f64,
) -> Result<Experiment> {
    best_experiment(cfg, curve, r, s, s).map(|(f, _)| f)
}

/// Best experiment with no mean constraint. One-point supports suffice:
/// the objective is linear for a report anchor and a mean anchor makes every
/// point mass free.
pub fn best_unconstrained(
    cfg: &MechanismConfig,
    curve: &InterimCurve,
    r: f64,
    s: f64,
) -> (Experiment, f64) {
    let grid = &cfg.value_grid;
    let z_s = grid.center(s);
    let values: Vec<f64> = grid
        .points()
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let anchor = cfg.cost_model.anchor_point(z_s, z);
            curve.pi[j] - r * cfg.cost_model.kernel.eval(z - anchor)
        })
        .collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-12 * (1.0 + top.abs());
    let j = values.iter().position(|&v| v >= top - eps).expect("nonempty grid");
    (Experiment::delta(grid, j), values[j])
}

/// Whether experiments must keep the type's declared center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Centered,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub welfare: f64,
    /// Expected value of the winner, `E[max_k t_k]`.
    pub surplus: f64,
    pub info_cost: f64,
    /// Per-bidder expected net interim payoff before fees.
    pub net_payoffs: Vec<f64>,
}

/// Interim curve of bidder `i` against the other bidders' mixtures.
pub fn curve_for(mixtures: &[Vec<f64>], i: usize, grid: &ValueGrid) -> InterimCurve {
    let others: Vec<Vec<f64>> = mixtures
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, g)| g.clone())
        .collect();
    interim_curve(grid, &others)
}

pub fn curves(profile: &StrategyProfile, cfg: &MechanismConfig) -> Result<Vec<InterimCurve>> {
    let mixtures = profile.mixtures(&cfg.type_grid)?;
    Ok((0..profile.n())
        .map(|i| curve_for(&mixtures, i, &cfg.value_grid))
        .collect())
}

/// Expected information cost of bidder `i`.
pub fn expected_cost(profile: &StrategyProfile, cfg: &MechanismConfig, i: usize) -> Result<f64> {
    let mut total = 0.0;
    for cell in cfg.type_grid.cells() {
        let f = profile.experiment(i, cell.index);
        total += cell.weight * cfg.cost_model.cost(&cfg.value_grid, cell.r, cell.s, f)?;
    }
    Ok(total)
}

pub fn potential(profile: &StrategyProfile, cfg: &MechanismConfig) -> Result<PotentialReport> {
    let mixtures = profile.mixtures(&cfg.type_grid)?;
    let grid = &cfg.value_grid;
    let surplus = expected_max(grid.points(), &mixtures);
    let mut info_cost = 0.0;
    let mut net_payoffs = Vec::with_capacity(profile.n());
    for i in 0..profile.n() {
        let curve = curve_for(&mixtures, i, grid);
        let cost = expected_cost(profile, cfg, i)?;
        let gross: f64 = mixtures[i].iter().zip(&curve.pi).map(|(g, p)| g * p).sum();
        info_cost += cost;
        net_payoffs.push(gross - cost);
    }
    Ok(PotentialReport {
        welfare: surplus - info_cost,
        surplus,
        info_cost,
        net_payoffs,
    })
}

/// Best-response map of one bidder and the per-type gain over her current map.
pub fn best_response_map(
    cfg: &MechanismConfig,
    curve: &InterimCurve,
    current: &[Experiment],
    regime: Regime,
) -> Result<(Vec<Experiment>, Vec<f64>)> {
    let grid = &cfg.value_grid;
    let mut map = Vec::with_capacity(current.len());
    let mut gains = Vec::with_capacity(current.len());
    for cell in cfg.type_grid.cells() {
        let (f, value) = match regime {
            Regime::Centered => best_experiment(cfg, curve, cell.r, cell.s, cell.s)?,
            Regime::Unconstrained => best_unconstrained(cfg, curve, cell.r, cell.s),
        };
        let cur = &current[cell.index];
        let now = cur.expect(&curve.pi) - cfg.cost_model.cost(grid, cell.r, cell.s, cur)?;
        gains.push(value - now);
        map.push(f);
    }
    Ok((map, gains))
}

/// Largest gain any single type of any bidder obtains by deviating to a best response.
pub fn max_deviation_gain(
    profile: &StrategyProfile,
    cfg: &MechanismConfig,
    regime: Regime,
) -> Result<f64> {
    let cs = curves(profile, cfg)?;
    let mut eps = f64::NEG_INFINITY;
    for (i, curve) in cs.iter().enumerate() {
        let (_, gains) = best_response_map(cfg, curve, profile.map(i), regime)?;
        eps = gains.into_iter().fold(eps, f64::max);
    }
    Ok(eps.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub profile: StrategyProfile,
    pub report: PotentialReport,
    /// Largest unilateral type-level improvement left at the profile.
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Potential after each sweep; nondecreasing.
    pub history: Vec<f64>,
}

/// Point mass at each type's center (bracketing pair off-grid).
pub fn initial_map(cfg: &MechanismConfig) -> Result<Vec<Experiment>> {
    cfg.type_grid
        .cells()
        .map(|c| make_mean_constrained(&cfg.value_grid, c.s, Shape::Degenerate, cfg.tolerances.mean))
        .collect()
}

pub fn solve_equilibrium(cfg: &MechanismConfig) -> Result<Equilibrium> {
    solve(cfg, Regime::Centered)
}

/// Best step toward `br`: the best of `lambda = 2^-k`, `k < 40`, refined by
/// golden-section search around it. `None` if no step beats `welfare`.
fn line_search(
    cfg: &MechanismConfig,
    map: &[Experiment],
    br: &[Experiment],
    welfare: f64,
) -> Result<Option<(Vec<Experiment>, f64)>> {
    let blend = |lambda: f64| -> Vec<Experiment> {
        map.iter().zip(br).map(|(f, g)| f.blend(g, lambda)).collect()
    };
    let eval = |lambda: f64| -> Result<f64> {
        Ok(potential(&StrategyProfile::symmetric(blend(lambda), cfg.n), cfg)?.welfare)
    };
    let mut best = (0.0, welfare);
    let mut lambda = 1.0;
    for _ in 0..40 {
        let w = eval(lambda)?;
        if w > best.1 {
            best = (lambda, w);
        }
        lambda *= 0.5;
    }
    if best.0 == 0.0 {
        return Ok(None);
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (best.0 / 2.0, (best.0 * 2.0).min(1.0));
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
    for _ in 0..50 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > best.1 {
            best = (x, f);
        }
    }
    Ok(Some((blend(best.0), best.1)))
}

/// Far end of the away direction for each type: mass moves off the worst
/// vertex inside the current support until some grid point empties.
fn away_map(
    cfg: &MechanismConfig,
    curve: &InterimCurve,
    map: &[Experiment],
    regime: Regime,
) -> Result<Vec<Experiment>> {
    let grid = &cfg.value_grid;
    let mut out = Vec::with_capacity(map.len());
    for cell in cfg.type_grid.cells() {
        let f = &map[cell.index];
        let value = |g: &Experiment| -> Result<f64> {
            Ok(g.expect(&curve.pi) - cfg.cost_model.cost(grid, cell.r, cell.s, g)?)
        };
        let candidates = match regime {
            Regime::Centered => vertex_experiments(grid, grid.center(cell.s), cfg.tolerances.mean),
            Regime::Unconstrained => (0..grid.len()).map(|j| Experiment::delta(grid, j)).collect(),
        };
        let mut worst: Option<(Experiment, f64)> = None;
        for g in candidates {
            if g.support().any(|j| f.mass()[j] <= MASS_FLOOR) {
                continue;
            }
            let v = value(&g)?;
            if worst.as_ref().is_none_or(|w| v < w.1) {
                worst = Some((g, v));
            }
        }
        let now = value(f)?;
        let step = match worst {
            Some((g, v)) if v < now - 1e-15 => {
                let gamma = f
                    .mass()
                    .iter()
                    .zip(g.mass())
                    .filter(|(a, b)| **b > **a)
                    .map(|(a, b)| a / (b - a))
                    .fold(f64::INFINITY, f64::min);
                let mass = f
                    .mass()
                    .iter()
                    .zip(g.mass())
                    .map(|(a, b)| ((1.0 + gamma) * a - gamma * b).max(0.0))
                    .collect();
                Experiment::new(mass, f.center())
            }
            _ => f.clone(),
        };
        out.push(step);
    }
    Ok(out)
}

/// One pass over the types, each moved alone toward its best response or
/// away from its worst supported vertex.
fn block_sweep(
    cfg: &MechanismConfig,
    mut map: Vec<Experiment>,
    mut welfare: f64,
    regime: Regime,
) -> Result<(Vec<Experiment>, f64)> {
    for t in 0..map.len() {
        let profile = StrategyProfile::symmetric(map.clone(), cfg.n);
        let curve = curves(&profile, cfg)?.swap_remove(0);
        let (br, _) = best_response_map(cfg, &curve, &map, regime)?;
        let away = away_map(cfg, &curve, &map, regime)?;
        for target in [&br[t], &away[t]] {
            if *target == map[t] {
                continue;
            }
            let mut goal = map.clone();
            goal[t] = target.clone();
            if let Some((cand, w)) = line_search(cfg, &map, &goal, welfare)? {
                map = cand;
                welfare = w;
            }
        }
    }
    Ok((map, welfare))
}

/// Symmetric best-response ascent: every sweep moves the shared map toward
/// its best response against the induced opponent mixture, or away from the
/// worst supported vertex, whichever line search on the potential favors,
/// followed by a sweep that moves one type at a time.
pub fn solve(cfg: &MechanismConfig, regime: Regime) -> Result<Equilibrium> {
    let n = cfg.n;
    let tol = cfg.tolerances.solver;
    let mut map = initial_map(cfg)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let profile = StrategyProfile::symmetric(map.clone(), n);
        let welfare = potential(&profile, cfg)?.welfare;
        history.push(welfare);
        let curve = curves(&profile, cfg)?.swap_remove(0);
        let (br, gains) = best_response_map(cfg, &curve, &map, regime)?;
        let eps = gains.iter().copied().fold(0.0, f64::max);
        if eps <= tol {
            converged = true;
            break;
        }
        let toward = line_search(cfg, &map, &br, welfare)?;
        let away = line_search(cfg, &map, &away_map(cfg, &curve, &map, regime)?, welfare)?;
        let step = match (toward, away) {
            (Some(a), Some(b)) => Some(if b.1 > a.1 { b } else { a }),
            (a, b) => a.or(b),
        };
        let mut best = welfare;
        if let Some((cand, w)) = step {
            map = cand;
            best = w;
        }
        let (swept, w) = block_sweep(cfg, map, best, regime)?;
        map = swept;
        if w <= welfare {
            history.push(w);
            converged = true;
            break;
        }
    }

    let profile = StrategyProfile::symmetric(map, n);
    let report = potential(&profile, cfg)?;
    let epsilon = max_deviation_gain(&profile, cfg, regime)?;
    if history.last() != Some(&report.welfare) {
        history.push(report.welfare);
    }
    Ok(Equilibrium {
        profile,
        report,
        epsilon,
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostModel, Kernel};
    use crate::grid::TypeGrid;

    fn cfg(r: Vec<f64>, s: Vec<f64>, n: usize) -> MechanismConfig {
        MechanismConfig::new(
            n,
            ValueGrid::new(1.0, 2.0, 4).unwrap(),
            TypeGrid::uniform(r, s).unwrap(),
            CostModel::quadratic(),
        )
        .unwrap()
    }

    /// Enumerates every feasible vertex.
    fn oracle(points: &[f64], values: &[f64], c: f64, tol: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for l in 0..points.len() {
            if (points[l] - c).abs() <= tol {
                best = best.max(values[l]);
            }
            for h in l + 1..points.len() {
                if points[l] < c && c < points[h] {
                    let w = (c - points[l]) / (points[h] - points[l]);
                    best = best.max((1.0 - w) * values[l] + w * values[h]);
                }
            }
        }
        best
    }

    #[test]
    fn free_information_with_increasing_payoff_spreads_to_endpoints() {
        let pts = [1.0, 1.25, 1.5, 1.75, 2.0];
        let pi = [0.0, 0.05, 0.15, 0.3, 0.5];
        let v = best_vertex(&pts, &pi, 1.5, 1e-9).unwrap();
        assert_eq!((v.lo, v.hi), (0, 4));
        assert!((v.value - oracle(&pts, &pi, 1.5, 1e-9)).abs() < 1e-15);
        assert!((v.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_payoff_with_cost_picks_point_mass() {
        let c = cfg(vec![0.5], vec![0.5], 2);
        let curve = interim_curve(&c.value_grid, &[vec![0.0, 0.0, 0.0, 0.0, 1.0]]);
        let f = best_response(&c, &curve, 0.5, 0.5).unwrap();
        assert_eq!(f.mass(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bottom_center_forces_delta_a() {
        let c = cfg(vec![0.0], vec![0.0], 2);
        let curve = interim_curve(&c.value_grid, &[vec![0.2, 0.2, 0.2, 0.2, 0.2]]);
        let f = best_response(&c, &curve, 0.0, 0.0).unwrap();
        assert_eq!(f.mass()[0], 1.0);
    }

    #[test]
    fn out_of_range_center_infeasible() {
        assert!(matches!(
            best_vertex(&[1.0, 2.0], &[0.0, 0.0], 2.5, 1e-9),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn ties_break_lexicographically() {
        let pts = [1.0, 1.25, 1.5, 1.75, 2.0];
        let flat = [0.0; 5];
        let v = best_vertex(&pts, &flat, 1.5, 1e-9).unwrap();
        assert_eq!((v.lo, v.hi), (0, 3));
        let v = best_vertex(&pts, &flat, 1.1, 1e-9).unwrap();
        assert_eq!((v.lo, v.hi), (0, 1));
    }

    #[test]
    fn potential_examples() {
        let c = cfg(vec![0.0], vec![0.0, 0.5, 1.0], 2);
        let g = &c.value_grid;
        let b_map = vec![Experiment::delta(g, 4); 3];
        let all_b = StrategyProfile::symmetric(b_map, 2);
        assert!((potential(&all_b, &c).unwrap().welfare - 2.0).abs() < 1e-15);

        let a_map = vec![Experiment::delta(g, 0); 3];
        let all_a = StrategyProfile::symmetric(a_map.clone(), 2);
        assert!((potential(&all_a, &c).unwrap().surplus - 1.0).abs() < 1e-15);

        let u = Experiment::new(vec![0.5, 0.0, 0.0, 0.0, 0.5], 1.5);
        let mixed = StrategyProfile::new(vec![a_map, vec![u; 3]]).unwrap();
        assert!((potential(&mixed, &c).unwrap().surplus - 1.5).abs() < 1e-15);
    }

    #[test]
    fn free_information_equilibrium_is_extremal() {
        let c = cfg(vec![0.0], vec![0.0, 0.5, 1.0], 2);
        let eq = solve_equilibrium(&c).unwrap();
        assert!(eq.converged);
        for (t, f) in eq.profile.map(0).iter().enumerate() {
            let s = c.type_grid.cell(t).s;
            let ext = make_mean_constrained(&c.value_grid, s, Shape::Extreme, 1e-9).unwrap();
            for (x, y) in f.mass().iter().zip(ext.mass()) {
                assert!((x - y).abs() < 1e-12, "type {t}: {:?}", f.mass());
            }
        }
        // mixtures 1/2 delta_a + 1/2 delta_b; E[max] over two draws = 1.75
        assert!((eq.report.welfare - 1.75).abs() < 1e-12);
    }

    #[test]
    fn prohibitive_cost_keeps_point_masses() {
        let mut c = cfg(vec![0.5, 1.0], vec![0.0, 0.5, 1.0], 2);
        c.cost_model = CostModel::new(
            Kernel::Power {
                exponent: 2.0,
                scale: 1e6,
            },
            Default::default(),
        )
        .unwrap();
        let eq = solve_equilibrium(&c).unwrap();
        for cell in c.type_grid.cells() {
            let f = eq.profile.experiment(0, cell.index);
            let j = c.value_grid.index_of(c.value_grid.center(cell.s), 1e-12).unwrap();
            assert_eq!(f.mass()[j], 1.0);
        }
    }

    #[test]
    fn single_bottom_center_plays_a() {
        let c = cfg(vec![0.0, 1.0], vec![0.0], 2);
        let eq = solve_equilibrium(&c).unwrap();
        assert!((eq.report.welfare - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unconstrained_zero_cost_goes_to_top() {
        let c = cfg(vec![0.0], vec![0.0, 0.5, 1.0], 2);
        let eq = solve(&c, Regime::Unconstrained).unwrap();
        for f in eq.profile.map(0) {
            assert_eq!(f.mass()[4], 1.0);
        }
    }
}
