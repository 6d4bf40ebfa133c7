//! Stage-2 second-price (VCG) rule and the interim payoff it induces.

use serde::{Deserialize, Serialize};

use crate::dist::{max_cdf, pmf_from_cdf};
use crate::error::{Error, Result};
use crate::grid::ValueGrid;

/// Allocation and payments for one bid profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub win_prob: Vec<f64>,
    /// Price charged to bidder `i` if she is awarded the object; zero for
    /// bidders that cannot win.
    pub payments: Vec<f64>,
}

impl Outcome {
    /// Payment of bidder `i` averaged over the tie-break.
    pub fn expected_payment(&self, i: usize) -> f64 {
        self.win_prob[i] * self.payments[i]
    }

    pub fn revenue(&self) -> f64 {
        (0..self.win_prob.len()).map(|i| self.expected_payment(i)).sum()
    }
}

/// Highest bid wins, ties split uniformly, the winner pays the highest
/// competing bid.
pub fn allocate(bids: &[f64]) -> Result<Outcome> {
    if bids.is_empty() {
        return Err(Error::Domain("empty bid vector".into()));
    }
    let top = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winners = bids.iter().filter(|&&b| b >= top).count();
    let mut win_prob = vec![0.0; bids.len()];
    let mut payments = vec![0.0; bids.len()];
    for (i, &b) in bids.iter().enumerate() {
        if b >= top {
            win_prob[i] = 1.0 / winners as f64;
            payments[i] = highest_other(bids, i);
        }
    }
    Ok(Outcome { win_prob, payments })
}

fn highest_other(bids: &[f64], i: usize) -> f64 {
    bids.iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &b)| b)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

/// Ex-post payoff of bidder `i` holding `value` when `bids` are submitted.
pub fn expost_payoff(i: usize, value: f64, bids: &[f64]) -> Result<f64> {
    if i >= bids.len() {
        return Err(Error::Domain(format!("bidder {i} has no bid")));
    }
    let o = allocate(bids)?;
    Ok(o.win_prob[i] * (value - o.payments[i]))
}

/// Expected stage-2 payoff curve of a truthful bidder against independent
/// truthful opponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimCurve {
    pub z: Vec<f64>,
    /// `pi[j] = E[(z_j - Y)^+]`, `Y` the highest opponent value.
    pub pi: Vec<f64>,
    pub opp_max_cdf: Vec<f64>,
}

impl InterimCurve {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// Ties at the top are won at a price equal to the own value, so only strict
/// wins contribute.
pub fn interim_curve(grid: &ValueGrid, mixtures: &[Vec<f64>]) -> InterimCurve {
    let z = grid.points().to_vec();
    let opp_max_cdf = max_cdf(z.len(), mixtures);
    let y = pmf_from_cdf(&opp_max_cdf);
    let pi = z
        .iter()
        .enumerate()
        .map(|(j, &zj)| (0..j).map(|l| y[l] * (zj - z[l])).sum())
        .collect();
    InterimCurve { z, pi, opp_max_cdf }
}

/// Expected payoff of a bidder with `value` who bids grid point `bid`,
/// against independent truthful opponents, including tie splits.
pub fn expected_bid_payoff(grid: &ValueGrid, mixtures: &[Vec<f64>], value: f64, bid: usize) -> f64 {
    let z = grid.points();
    let opp_max_cdf = max_cdf(z.len(), mixtures);
    let y = pmf_from_cdf(&opp_max_cdf);
    let strict: f64 = (0..bid).map(|l| y[l] * (value - z[l])).sum();

    // coef[c]: exactly c opponents bid z[bid], the rest strictly below it
    let mut coef = vec![1.0];
    for g in mixtures {
        let below: f64 = g[..bid].iter().sum();
        let at = g[bid];
        let mut next = vec![0.0; coef.len() + 1];
        for (c, &p) in coef.iter().enumerate() {
            next[c] += p * below;
            next[c + 1] += p * at;
        }
        coef = next;
    }
    let share: f64 = coef
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, p)| p / (c as f64 + 1.0))
        .sum();
    strict + share * (value - z[bid])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_maximum() {
        let o = allocate(&[1.5, 1.25]).unwrap();
        assert_eq!(o.win_prob, vec![1.0, 0.0]);
        assert_eq!(o.payments, vec![1.25, 0.0]);
    }

    #[test]
    fn two_way_tie() {
        let o = allocate(&[1.5, 1.5]).unwrap();
        assert_eq!(o.win_prob, vec![0.5, 0.5]);
        assert_eq!(o.payments, vec![1.5, 1.5]);
    }

    #[test]
    fn three_bidders_second_price() {
        let o = allocate(&[2.0, 1.0, 1.75]).unwrap();
        assert_eq!(o.win_prob, vec![1.0, 0.0, 0.0]);
        assert_eq!(o.payments, vec![1.75, 0.0, 0.0]);
        assert_eq!(o.win_prob.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_bids_rejected() {
        assert!(allocate(&[]).is_err());
    }

    #[test]
    fn expost_examples() {
        assert!((expost_payoff(0, 1.5, &[1.5, 1.25]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(expost_payoff(0, 1.5, &[1.5, 1.5]).unwrap(), 0.0);
        assert_eq!(expost_payoff(1, 1.75, &[2.0, 1.75]).unwrap(), 0.0);
    }

    #[test]
    fn curve_against_top_point_mass_is_zero() {
        let g = ValueGrid::new(1.0, 2.0, 4).unwrap();
        let c = interim_curve(&g, &[vec![0.0, 0.0, 0.0, 0.0, 1.0]]);
        assert!(c.pi.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn curve_against_uniform_endpoints() {
        // 1/2 (1.5 - 1.0) + 1/2 * 0
        let g = ValueGrid::new(1.0, 2.0, 2).unwrap();
        let c = interim_curve(&g, &[vec![0.5, 0.0, 0.5]]);
        assert!((c.pi[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn curve_two_opponents_at_a() {
        let g = ValueGrid::new(1.0, 2.0, 4).unwrap();
        let a = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let c = interim_curve(&g, &[a.clone(), a]);
        assert!((c.pi[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truthful_bid_payoff_matches_curve() {
        let g = ValueGrid::new(1.0, 2.0, 4).unwrap();
        let mixes = vec![vec![0.1, 0.2, 0.3, 0.2, 0.2], vec![0.3, 0.0, 0.4, 0.0, 0.3]];
        let c = interim_curve(&g, &mixes);
        for j in 0..g.len() {
            let u = expected_bid_payoff(&g, &mixes, g.z(j), j);
            assert!((u - c.pi[j]).abs() < 1e-14);
        }
    }
}
