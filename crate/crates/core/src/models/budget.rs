//! Choosing a model size for a parameter budget.

use super::{Family, GmpConfig, GmpTerm, ModelConfig, RecurrentConfig};
use crate::error::{Error, Result};

/// Relative tolerance used when none is given.
pub const BUDGET_TOLERANCE: f64 = 0.05;

const GMP_ORDERS: [usize; 4] = [1, 3, 5, 7];
const GMP_CROSS_LAGS: [i64; 3] = [-1, 0, 1];

/// Find the configuration of `family` whose parameter count is within
/// `tolerance · target`. Configurations not exceeding the target are
/// preferred, closest first; otherwise the closest larger one is used.
pub fn search_config_for_budget(
    family: Family,
    target: usize,
    tolerance: f64,
) -> Result<ModelConfig> {
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Error::invalid("tolerance must be finite and non-negative"));
    }
    let limit = tolerance * target as f64;
    let candidates = match family {
        Family::Gmp => vec![gmp_plan(target)],
        _ => recurrent_candidates(family, target, limit),
    };
    candidates
        .into_iter()
        .filter(|c| (c.count_params() as f64 - target as f64).abs() <= limit)
        .min_by_key(|c| {
            let n = c.count_params();
            let over = n > target;
            (over, n.abs_diff(target), !uses_recurrent_bias(c))
        })
        .ok_or_else(|| {
            Error::invalid(format!(
                "no {family} configuration within {:.1}% of {target} parameters",
                100.0 * tolerance
            ))
        })
}

fn uses_recurrent_bias(c: &ModelConfig) -> bool {
    match c {
        ModelConfig::Dgru(r) | ModelConfig::Gru(r) | ModelConfig::Lstm(r) => r.recurrent_bias,
        ModelConfig::Gmp(_) => true,
    }
}

fn recurrent_candidates(family: Family, target: usize, limit: f64) -> Vec<ModelConfig> {
    let wrap = |c: RecurrentConfig| match family {
        Family::Dgru => ModelConfig::Dgru(c),
        Family::Gru => ModelConfig::Gru(c),
        Family::Lstm => ModelConfig::Lstm(c),
        Family::Gmp => unreachable!("handled separately"),
    };
    let mut out = Vec::new();
    for recurrent_bias in [true, false] {
        for hidden_size in 1.. {
            let cfg = wrap(RecurrentConfig {
                hidden_size,
                recurrent_bias,
            });
            if cfg.count_params() as f64 > target as f64 + limit {
                break;
            }
            out.push(cfg);
        }
    }
    out
}

/// Odd orders 1..7 with envelope cross lags −1, 0, +1 (the order-1 term has
/// no envelope, so only its aligned copy is kept). Memory depth grows until
/// the budget is covered, then the highest-order cross terms are dropped
/// until the count no longer exceeds the target.
fn gmp_plan(target: usize) -> ModelConfig {
    let mut depth = 0;
    let terms = loop {
        let terms = gmp_terms(depth);
        if 2 * terms.len() >= target {
            break terms;
        }
        depth += 1;
    };
    let mut drop_order: Vec<GmpTerm> = terms.iter().copied().filter(|t| t.order > 1).collect();
    drop_order.sort_by_key(|t| {
        (
            t.cross_lag == 0,
            std::cmp::Reverse(t.order),
            std::cmp::Reverse(t.lag),
        )
    });
    let mut kept = terms;
    for victim in drop_order {
        if 2 * kept.len() <= target {
            break;
        }
        kept.retain(|t| *t != victim);
    }
    ModelConfig::Gmp(GmpConfig { terms: kept })
}

fn gmp_terms(depth: usize) -> Vec<GmpTerm> {
    let mut terms = Vec::new();
    for m in 0..=depth {
        for p in GMP_ORDERS {
            if p == 1 {
                terms.push(GmpTerm::new(m, 0, 1));
                continue;
            }
            for l in GMP_CROSS_LAGS {
                terms.push(GmpTerm::new(m, l, p));
            }
        }
    }
    terms
}
