//! Class-distribution forecasts over slot values.
//!
//! The leaves under a template, in timestamp order, are labeled by their
//! item at a slot position. [`markov_predict`] forecasts the next label
//! from first-order transitions; [`trend_predict`] extrapolates per-window
//! label frequencies one window ahead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::generalization::{GeneralizationError, Hierarchy, Position};
use crate::ids::NodeId;
use crate::structures::Item;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForecastError {
    #[error("position {position} of node {node} is not a slot")]
    NotASlot { node: NodeId, position: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("sequence too short: need {need}, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("unknown forecast method {0:?}")]
    UnknownMethod(String),
}

impl From<GeneralizationError> for ForecastError {
    fn from(e: GeneralizationError) -> Self {
        match e {
            GeneralizationError::UnknownNode(id) => ForecastError::UnknownNode(id),
            GeneralizationError::NotASlot { node, position } => {
                ForecastError::NotASlot { node, position }
            }
            other => unreachable!("classify only looks nodes up: {other}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Markov,
    Trend,
}

impl std::str::FromStr for Method {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markov" => Ok(Method::Markov),
            "trend" => Ok(Method::Trend),
            other => Err(ForecastError::UnknownMethod(other.to_string())),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Markov => "markov",
            Method::Trend => "trend",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    NextStep,
    NextWindow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSequence {
    pub template_id: NodeId,
    pub class_position: usize,
    pub labels: Vec<Item>,
    /// Relative label frequencies per window, in window order.
    pub window_distributions: Vec<(u64, BTreeMap<Item, f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub method: Method,
    pub horizon: Horizon,
    pub distribution: BTreeMap<Item, f64>,
}

impl Forecast {
    /// `label<TAB>probability`, by probability descending then label.
    pub fn export(&self) -> String {
        let mut rows: Vec<(&Item, &f64)> = self.distribution.iter().collect();
        rows.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
        let mut out = String::new();
        for (label, p) in rows {
            let _ = writeln!(out, "{label}\t{p:.6}");
        }
        out
    }
}

pub fn classify(
    hierarchy: &Hierarchy,
    template_id: NodeId,
    class_position: usize,
) -> Result<ClassSequence, ForecastError> {
    let node = hierarchy.get(template_id)?;
    if !matches!(node.positions.get(class_position), Some(Position::Slot(_))) {
        return Err(ForecastError::NotASlot {
            node: template_id,
            position: class_position,
        });
    }
    let instances = hierarchy.leaf_instances(template_id)?;
    let labels: Vec<Item> = instances.iter().map(|i| i.items[class_position]).collect();

    let mut per_window: BTreeMap<u64, BTreeMap<Item, u64>> = BTreeMap::new();
    for (inst, &label) in instances.iter().zip(&labels) {
        *per_window
            .entry(inst.timestamp)
            .or_default()
            .entry(label)
            .or_insert(0) += 1;
    }
    let window_distributions = per_window
        .into_iter()
        .map(|(w, counts)| {
            let total: u64 = counts.values().sum();
            (
                w,
                counts
                    .into_iter()
                    .map(|(l, c)| (l, c as f64 / total as f64))
                    .collect(),
            )
        })
        .collect();
    Ok(ClassSequence {
        template_id,
        class_position,
        labels,
        window_distributions,
    })
}

fn normalize(weights: BTreeMap<Item, f64>) -> BTreeMap<Item, f64> {
    let total: f64 = weights.values().sum();
    weights.into_iter().map(|(l, w)| (l, w / total)).collect()
}

/// Next-step distribution conditioned on the last label, with additive
/// smoothing `alpha` over the observed label alphabet. When the last label
/// has no outgoing transition and `alpha` is 0, the marginal label
/// frequencies are used instead.
pub fn markov_predict(sequence: &ClassSequence, alpha: f64) -> Result<Forecast, ForecastError> {
    let labels = &sequence.labels;
    if labels.len() < 2 {
        return Err(ForecastError::TooShort {
            need: 2,
            have: labels.len(),
        });
    }
    let alphabet: BTreeSet<Item> = labels.iter().copied().collect();
    let last = *labels.last().expect("len >= 2");
    let mut counts: BTreeMap<Item, f64> = alphabet.iter().map(|&l| (l, alpha)).collect();
    for pair in labels.windows(2) {
        if pair[0] == last {
            *counts.get_mut(&pair[1]).expect("label in alphabet") += 1.0;
        }
    }
    if counts.values().sum::<f64>() <= 0.0 {
        counts = alphabet.iter().map(|&l| (l, 0.0)).collect();
        for l in labels {
            *counts.get_mut(l).expect("label in alphabet") += 1.0;
        }
    }
    Ok(Forecast {
        method: Method::Markov,
        horizon: Horizon::NextStep,
        distribution: normalize(counts),
    })
}

/// Least-squares line per label over the window sequence (windows at
/// x = 0, 1, …, m−1), evaluated at x = m, clipped at 0 and renormalized.
/// Falls back to the last window when every extrapolation clips to 0.
pub fn trend_predict(sequence: &ClassSequence) -> Result<Forecast, ForecastError> {
    let windows = &sequence.window_distributions;
    let m = windows.len();
    if m < 2 {
        return Err(ForecastError::TooShort { need: 2, have: m });
    }
    let alphabet: BTreeSet<Item> = windows
        .iter()
        .flat_map(|(_, d)| d.keys().copied())
        .collect();
    let xs: Vec<f64> = (0..m).map(|x| x as f64).collect();
    let x_mean = xs.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();

    let mut extrapolated = BTreeMap::new();
    for label in alphabet {
        let ys: Vec<f64> = windows
            .iter()
            .map(|(_, d)| d.get(&label).copied().unwrap_or(0.0))
            .collect();
        let y_mean = ys.iter().sum::<f64>() / m as f64;
        let sxy: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - x_mean) * (y - y_mean))
            .sum();
        let slope = sxy / sxx;
        let value = y_mean + slope * (m as f64 - x_mean);
        // Round-off below this is treated as an exact zero.
        if value > 1e-12 {
            extrapolated.insert(label, value);
        }
    }
    let distribution = if extrapolated.is_empty() {
        windows.last().expect("m >= 2").1.clone()
    } else {
        normalize(extrapolated)
    };
    Ok(Forecast {
        method: Method::Trend,
        horizon: Horizon::NextWindow,
        distribution,
    })
}

pub fn predict(
    sequence: &ClassSequence,
    method: Method,
    alpha: f64,
) -> Result<Forecast, ForecastError> {
    match method {
        Method::Markov => markov_predict(sequence, alpha),
        Method::Trend => trend_predict(sequence),
    }
}
