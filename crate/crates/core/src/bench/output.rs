use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{BiasReport, ProtocolResult};

/// Bias metrics of one (strategy, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunBias {
    pub strategy: String,
    pub seed: u64,
    pub report: BiasReport,
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn accuracy_csv(results: &[ProtocolResult]) -> String {
    let mut s = String::from("increment,strategy,rule,seed,accuracy\n");
    for r in results {
        for run in &r.runs {
            for rep in run {
                let k = &rep.key;
                let _ = writeln!(s, "{},{},{},{},{}", k.increment, r.strategy, k.rule.name(), k.seed, rep.accuracy);
            }
        }
    }
    s
}

fn confusion_csv(rep: &super::IncrementReport) -> String {
    let mut s = String::from("truth\\predicted");
    for c in &rep.classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (c, row) in rep.classes.iter().zip(&rep.confusion) {
        let _ = write!(s, "{c}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn pretty(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

/// Writes `accuracy.csv`, `summary.json`, `bias.json` and one confusion
/// matrix per (strategy, rule, increment, seed) into `dir`. Returns the
/// written paths in write order.
pub fn emit_outputs(results: &[ProtocolResult], bias: &[RunBias], config_echo: &Value, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
        Ok(())
    };

    put("accuracy.csv".into(), accuracy_csv(results).into_bytes())?;

    let strategies: serde_json::Map<String, Value> = results
        .iter()
        .map(|r| {
            let final_recall: Vec<Value> = r
                .runs
                .iter()
                .map(|run| json!(run.last().map(|rep| &rep.recall)))
                .collect();
            (
                r.strategy.name(),
                json!({
                    "training": r.strategy.kind.name(),
                    "rule": r.strategy.rule.name(),
                    "seeds": r.seeds,
                    "mean": r.mean,
                    "std": r.std,
                    "final_mean": r.final_mean(),
                    "final_std": r.final_std(),
                    "final_recall_per_seed": final_recall,
                }),
            )
        })
        .collect();
    let summary = json!({
        "config": config_echo,
        "aggregation": "mean and population standard deviation (divisor n) over seeds",
        "confusion_orientation": "rows = ground truth, columns = predicted",
        "strategies": strategies,
    });
    put("summary.json".into(), pretty(&summary)?)?;

    for r in results {
        for run in &r.runs {
            for rep in run {
                let k = &rep.key;
                let name = format!(
                    "confusion_{}_{}_inc{}_seed{}.csv",
                    r.strategy.kind.name(),
                    k.rule.name(),
                    k.increment,
                    k.seed
                );
                put(name, confusion_csv(rep).into_bytes())?;
            }
        }
    }

    put("bias.json".into(), pretty(&json!({ "runs": bias }))?)?;
    Ok(written)
}
