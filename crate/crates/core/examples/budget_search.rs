//! Model sizes chosen for a range of parameter budgets.
//!
//! `cargo run --example budget_search -- [budget ...]`

use dpd_forge::models::{search_config_for_budget, Family, ModelConfig, BUDGET_TOLERANCE};

fn describe(c: &ModelConfig) -> String {
    match c {
        ModelConfig::Dgru(r) | ModelConfig::Gru(r) | ModelConfig::Lstm(r) => {
            format!(
                "hidden {}{}",
                r.hidden_size,
                if r.recurrent_bias {
                    ""
                } else {
                    ", single bias"
                }
            )
        }
        ModelConfig::Gmp(g) => {
            let depth = g.terms.iter().map(|t| t.lag).max().unwrap_or(0);
            format!("{} terms, memory depth {depth}", g.terms.len())
        }
    }
}

fn main() -> anyhow::Result<()> {
    let mut budgets: Vec<usize> = std::env::args()
        .skip(1)
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    if budgets.is_empty() {
        budgets = vec![100, 200, 400, 486, 488, 495, 800, 1600, 3200];
    }
    for b in budgets {
        for family in Family::ALL {
            match search_config_for_budget(family, b, BUDGET_TOLERANCE) {
                Ok(c) => println!(
                    "{b:>5} {:<5} {:>5} params  {}",
                    family.to_string(),
                    c.count_params(),
                    describe(&c)
                ),
                Err(e) => println!("{b:>5} {:<5}     -  {e}", family.to_string()),
            }
        }
    }
    Ok(())
}
