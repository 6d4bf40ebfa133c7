//! CSV writers and readers for artifacts, plus the long-format plot table.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::audit::AuditPlan;
use crate::config::MechanismConfig;
use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::fees::{CostIndexedFees, FeeSchedule};
use crate::profile::StrategyProfile;
use crate::vcg::InterimCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    z: f64,
    pi: f64,
    opp_max_cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub bidder: usize,
    pub r: f64,
    pub s: f64,
    pub z: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeeRow {
    s: f64,
    fee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CostFeeRow {
    r: f64,
    s: f64,
    fee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AuditRow {
    param: f64,
    q: f64,
    audit_cost: f64,
}

/// One point of a plotted series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn read_curve<R: Read>(input: R) -> Result<InterimCurve> {
    let rows: Vec<CurveRow> = read_rows(input)?;
    Ok(InterimCurve {
        z: rows.iter().map(|r| r.z).collect(),
        pi: rows.iter().map(|r| r.pi).collect(),
        opp_max_cdf: rows.iter().map(|r| r.opp_max_cdf).collect(),
    })
}

pub fn write_curve<W: Write>(curve: &InterimCurve, out: W) -> Result<()> {
    write_rows(
        out,
        (0..curve.len()).map(|j| CurveRow {
            z: curve.z[j],
            pi: curve.pi[j],
            opp_max_cdf: curve.opp_max_cdf[j],
        }),
    )
}

/// Rows with positive mass only.
pub fn profile_rows(profile: &StrategyProfile, cfg: &MechanismConfig) -> Vec<ProfileRow> {
    let z = cfg.value_grid.points();
    let mut rows = Vec::new();
    for i in 0..profile.n() {
        for c in cfg.type_grid.cells() {
            for (j, &m) in profile.experiment(i, c.index).mass().iter().enumerate() {
                if m > 0.0 {
                    rows.push(ProfileRow {
                        bidder: i,
                        r: c.r,
                        s: c.s,
                        z: z[j],
                        mass: m,
                    });
                }
            }
        }
    }
    rows
}

pub fn write_profile<W: Write>(profile: &StrategyProfile, cfg: &MechanismConfig, out: W) -> Result<()> {
    write_rows(out, profile_rows(profile, cfg))
}

pub fn read_profile_rows<R: Read>(input: R) -> Result<Vec<ProfileRow>> {
    read_rows(input)
}

/// Rebuilds a profile from its rows; cells and grid points are matched
/// within the mean tolerance and absent rows mean zero mass.
pub fn profile_from_rows(rows: &[ProfileRow], cfg: &MechanismConfig) -> Result<StrategyProfile> {
    let tol = cfg.tolerances.mean;
    let tg = &cfg.type_grid;
    let grid = &cfg.value_grid;
    let n = rows.iter().map(|r| r.bidder + 1).max().unwrap_or(0);
    if n != cfg.n {
        return Err(Error::Config(format!("profile has {n} bidders, config has {}", cfg.n)));
    }
    let locate = |xs: &[f64], x: f64, what: &str| {
        xs.iter()
            .position(|&p| (p - x).abs() <= tol)
            .ok_or_else(|| Error::Config(format!("{what} = {x} is not a grid point")))
    };
    let mut mass = vec![vec![vec![0.0; grid.len()]; tg.len()]; n];
    for row in rows {
        let t = tg.index(locate(tg.r_points(), row.r, "r")?, locate(tg.s_points(), row.s, "s")?);
        let j = grid
            .index_of(row.z, tol)
            .ok_or_else(|| Error::Config(format!("z = {} is not a grid point", row.z)))?;
        mass[row.bidder][t][j] += row.mass;
    }
    let maps = mass
        .into_iter()
        .map(|m| {
            m.into_iter()
                .zip(tg.cells())
                .map(|(f, c)| Experiment::new(f, grid.center(c.s)))
                .collect()
        })
        .collect();
    let profile = StrategyProfile::new(maps)?;
    profile.validate(grid, tg, tol)?;
    Ok(profile)
}

pub fn write_fees<W: Write>(fees: &FeeSchedule, out: W) -> Result<()> {
    write_rows(
        out,
        fees.s_points.iter().zip(&fees.fees).map(|(&s, &fee)| FeeRow { s, fee }),
    )
}

pub fn read_fees<R: Read>(input: R) -> Result<FeeSchedule> {
    let rows: Vec<FeeRow> = read_rows(input)?;
    Ok(FeeSchedule {
        s_points: rows.iter().map(|r| r.s).collect(),
        fees: rows.iter().map(|r| r.fee).collect(),
    })
}

pub fn write_cost_fees<W: Write>(fees: &CostIndexedFees, out: W) -> Result<()> {
    let mut rows = Vec::new();
    for (ri, &r) in fees.r_points.iter().enumerate() {
        for (si, &s) in fees.s_points.iter().enumerate() {
            rows.push(CostFeeRow {
                r,
                s,
                fee: fees.fees[ri][si],
            });
        }
    }
    write_rows(out, rows)
}

pub fn read_cost_fees<R: Read>(input: R) -> Result<CostIndexedFees> {
    let rows: Vec<CostFeeRow> = read_rows(input)?;
    let mut r_points: Vec<f64> = Vec::new();
    let mut s_points: Vec<f64> = Vec::new();
    for row in &rows {
        if !r_points.contains(&row.r) {
            r_points.push(row.r);
        }
        if !s_points.contains(&row.s) {
            s_points.push(row.s);
        }
    }
    if r_points.len() * s_points.len() != rows.len() {
        return Err(Error::Config("cost-indexed fee table is not a full grid".into()));
    }
    let fees = rows
        .chunks(s_points.len())
        .map(|c| c.iter().map(|r| r.fee).collect())
        .collect();
    Ok(CostIndexedFees {
        r_points,
        s_points,
        fees,
    })
}

pub fn write_audit<W: Write>(plan: &AuditPlan, out: W) -> Result<()> {
    write_rows(
        out,
        (0..plan.q.len()).map(|k| AuditRow {
            param: plan.params[k],
            q: plan.q[k],
            audit_cost: plan.audit_cost[k],
        }),
    )
}

/// `(param, q, audit_cost)` columns of an audit plan.
pub fn read_audit<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let rows: Vec<AuditRow> = read_rows(input)?;
    Ok((
        rows.iter().map(|r| r.param).collect(),
        rows.iter().map(|r| r.q).collect(),
        rows.iter().map(|r| r.audit_cost).collect(),
    ))
}

pub fn plot_series(series: &str, xs: &[f64], ys: &[f64]) -> Vec<PlotRow> {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| PlotRow {
            series: series.to_string(),
            x,
            y,
        })
        .collect()
}

pub fn write_plot<W: Write>(rows: &[PlotRow], out: W) -> Result<()> {
    write_rows(out, rows)
}

pub fn read_plot<R: Read>(input: R) -> Result<Vec<PlotRow>> {
    read_rows(input)
}
