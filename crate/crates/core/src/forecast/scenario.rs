//! Scenario trees over (EV demand, PV generation, price).

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::{contract, Result};
use crate::timeseries::{hour_to_quarter_expand, HOURS_PER_DAY, STEPS_PER_DAY, STEPS_PER_HOUR, STEP_HOURS};

/// kWh per MWh: converts EUR/MWh-step to EUR/kW-step.
pub const KWH_PER_MWH: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// kW
    pub ev: Vec<f64>,
    /// kW
    pub pv: Vec<f64>,
    /// EUR per kW held for one step.
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

impl Branch {
    pub fn horizon(&self) -> usize {
        self.ev.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub branches: Vec<Branch>,
    pub probabilities: Vec<f64>,
}

impl ScenarioTree {
    pub fn new(branches: Vec<Branch>, probabilities: Vec<f64>) -> Result<Self> {
        let t = ScenarioTree { branches, probabilities };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() || self.branches.len() != self.probabilities.len() {
            return Err(contract(format!(
                "{} branches with {} probabilities",
                self.branches.len(),
                self.probabilities.len()
            )));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.probabilities.iter().any(|&p| !(p > 0.0)) {
            return Err(contract(format!("branch probabilities must be positive and sum to 1, got {total}")));
        }
        let n = self.branches[0].horizon();
        for (s, b) in self.branches.iter().enumerate() {
            if [b.ev.len(), b.pv.len(), b.buy.len(), b.sell.len()].iter().any(|&l| l != n) {
                return Err(contract(format!("branch {s} has mismatched vector lengths")));
            }
            if b.ev.iter().chain(&b.pv).any(|&v| !(v >= 0.0)) {
                return Err(contract(format!("branch {s} has negative or non-finite power")));
            }
            if b.buy.iter().chain(&b.sell).any(|v| !v.is_finite()) {
                return Err(contract(format!("branch {s} has non-finite prices")));
            }
        }
        Ok(())
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn horizon(&self) -> usize {
        self.branches[0].horizon()
    }

    /// Collapses identical branches. With equal input probabilities the
    /// merged probability is `multiplicity / N`, computed in one division.
    pub fn merge_duplicates(&self) -> ScenarioTree {
        let uniform = self.probabilities.iter().all(|&p| p == self.probabilities[0]);
        let n = self.branches.len();
        let mut branches: Vec<Branch> = Vec::new();
        let mut mass: Vec<(usize, f64)> = Vec::new();
        for (b, &p) in self.branches.iter().zip(&self.probabilities) {
            match branches.iter().position(|x| x == b) {
                Some(i) => {
                    mass[i].0 += 1;
                    mass[i].1 += p;
                }
                None => {
                    branches.push(b.clone());
                    mass.push((1, p));
                }
            }
        }
        let probabilities =
            mass.into_iter().map(|(m, p)| if uniform { m as f64 / n as f64 } else { p }).collect();
        ScenarioTree { branches, probabilities }
    }
}

/// Index tuples of the cross product of `sizes`, last index fastest.
pub fn cross_product(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

/// Quarter-hour buy prices in EUR/kW-step for a window starting `offset`
/// quarter steps into the first forecast hour. Window steps past the last
/// forecast hour repeat its price.
pub fn quarter_prices(hourly_eur_mwh: &[f64], offset: usize, horizon: usize) -> Result<Vec<f64>> {
    if hourly_eur_mwh.len() != HOURS_PER_DAY {
        return Err(contract(format!("expected 24 hourly prices, got {}", hourly_eur_mwh.len())));
    }
    if offset >= STEPS_PER_HOUR {
        return Err(contract(format!("offset {offset} is not inside an hour")));
    }
    let q = hour_to_quarter_expand(hourly_eur_mwh)?;
    let last = *q.last().expect("non-empty");
    Ok((0..horizon).map(|i| q.get(offset + i).copied().unwrap_or(last) / KWH_PER_MWH).collect())
}

/// Equally weighted cross product of the per-variable variants (typically
/// point, lower, upper). Powers are clipped at zero; the sell price equals
/// the buy price.
pub fn build_scenario_tree(
    ev: &[Vec<f64>],
    pv: &[Vec<f64>],
    price_hourly: &[Vec<f64>],
    price_offset: usize,
) -> Result<ScenarioTree> {
    if ev.is_empty() || pv.is_empty() || price_hourly.is_empty() {
        return Err(contract("every variable needs at least one variant"));
    }
    let horizon = ev[0].len();
    if ev.iter().chain(pv).any(|v| v.len() != horizon) {
        return Err(contract("power variants have mismatched lengths"));
    }
    let prices: Vec<Vec<f64>> =
        price_hourly.iter().map(|p| quarter_prices(p, price_offset, horizon)).collect::<Result<_>>()?;
    let clip = |v: &Vec<f64>| v.iter().map(|x| x.max(0.0)).collect::<Vec<f64>>();
    let combos = cross_product(&[ev.len(), pv.len(), prices.len()]);
    let n = combos.len();
    let branches = combos
        .into_iter()
        .map(|c| Branch { ev: clip(&ev[c[0]]), pv: clip(&pv[c[1]]), buy: prices[c[2]].clone(), sell: prices[c[2]].clone() })
        .collect();
    ScenarioTree::new(branches, vec![1.0 / n as f64; n])
}

/// Realized price of step `k` in EUR/kW-step.
pub fn realized_quarter_price(b: &DatasetBundle, k: usize) -> Result<f64> {
    Ok(STEP_HOURS * b.price.at(k / STEPS_PER_HOUR)? / KWH_PER_MWH)
}

/// Single-branch tree carrying the realized values of steps `k..k+96`.
pub fn omniscient_tree(b: &DatasetBundle, k: usize) -> Result<ScenarioTree> {
    let window = k..k + STEPS_PER_DAY;
    let buy: Vec<f64> = window.clone().map(|t| realized_quarter_price(b, t)).collect::<Result<_>>()?;
    let branch = Branch {
        ev: b.ev_power.slice(window.clone())?.to_vec(),
        pv: b.pv_power.slice(window)?.to_vec(),
        sell: buy.clone(),
        buy,
    };
    ScenarioTree::new(vec![branch], vec![1.0])
}
