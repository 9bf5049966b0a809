//! Budget sweep: one DPD per (family, parameter budget), all trained against
//! the same PA model.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{
    resolve_target_gain, sim_eval, train_dpd, Dataset, MetricsConfig, Partition, TrainConfig,
};
use crate::error::{Error, Result};
use crate::io::write_table;
use crate::models::{search_config_for_budget, Checkpoint, Family, BUDGET_TOLERANCE};

pub const SWEEP_HEADER: [&str; 5] = [
    "family",
    "params",
    "sim_acpr_l_dbc",
    "sim_acpr_r_dbc",
    "sim_evm_db",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub family: Family,
    pub budget: usize,
    /// Parameter count of the configuration actually trained (the requested
    /// budget when no configuration could be built).
    pub params: usize,
    pub acpr_left_dbc: f64,
    pub acpr_right_dbc: f64,
    pub evm_db: f64,
    pub error: Option<String>,
}

fn run_cell(
    family: Family,
    budget: usize,
    data: &Dataset,
    pa: &Checkpoint,
    t: &TrainConfig,
    m: &MetricsConfig,
    cell_dir: Option<&Path>,
) -> SweepRow {
    let mut row = SweepRow {
        family,
        budget,
        params: budget,
        acpr_left_dbc: f64::NAN,
        acpr_right_dbc: f64::NAN,
        evm_db: f64::NAN,
        error: None,
    };
    let outcome = (|| -> Result<_> {
        let cfg = search_config_for_budget(family, budget, BUDGET_TOLERANCE)?;
        let params = cfg.count_params();
        let (gold, history) = train_dpd(data, pa, &cfg, t, m)?;
        if let Some(root) = cell_dir {
            let dir = root.join(format!("{family}_{budget}"));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            gold.save(&dir.join("gold_dpd.json"))?;
            history.write_csv(&dir.join("history.csv"))?;
        }
        let gain = resolve_target_gain(t.target_gain, &data.split)?;
        let test = data.pair(Partition::Test);
        let reference = data.reference_for(Partition::Test)?;
        let report = sim_eval(Some(&gold), pa, &test.input, &reference, m, gain)?;
        Ok((params, report))
    })();
    match outcome {
        Ok((params, report)) => {
            row.params = params;
            row.acpr_left_dbc = report.acpr_left_dbc;
            row.acpr_right_dbc = report.acpr_right_dbc;
            row.evm_db = report.evm_db;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Train and score a DPD for every (family, budget) pair on the test
/// partition. Failed cells keep NaN metrics and an error message. Rows come
/// back sorted by family, then budget. Cells are independent, so `jobs > 1`
/// runs them on worker threads without changing any result. With `cell_dir`
/// each cell writes its gold checkpoint and history to
/// `<cell_dir>/<family>_<budget>/`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_budgets(
    families: &[Family],
    budgets: &[usize],
    data: &Dataset,
    pa: &Checkpoint,
    t: &TrainConfig,
    m: &MetricsConfig,
    jobs: usize,
    cell_dir: Option<&Path>,
) -> Vec<SweepRow> {
    let cells: Vec<(Family, usize)> = families
        .iter()
        .flat_map(|&f| budgets.iter().map(move |&b| (f, b)))
        .collect();
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::with_capacity(cells.len()));
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(f, b)) = cells.get(k) else { break };
                let row = run_cell(f, b, data, pa, t, m, cell_dir);
                rows.lock().expect("sweep worker panicked").push(row);
            });
        }
    });
    let mut rows = rows.into_inner().expect("sweep worker panicked");
    rows.sort_by_key(|r| (r.family, r.budget));
    rows
}

pub fn write_sweep_table(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.to_string(),
                r.params.to_string(),
                r.acpr_left_dbc.to_string(),
                r.acpr_right_dbc.to_string(),
                r.evm_db.to_string(),
            ]
        })
        .collect();
    write_table(path, &SWEEP_HEADER, &body)
}
