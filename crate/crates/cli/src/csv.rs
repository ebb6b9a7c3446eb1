//! Trajectory CSV: one row per recorded step, floats in shortest round-trip
//! form, indices 1-based in column names.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use tradepost_core::dynamics::{Snapshot, StepRecord, TftState};
use tradepost_core::lyapunov::LyapunovRecord;
use tradepost_core::{Allocation, MarketState, Matrix, Mode, Trajectory};

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn header(mode: Mode, n: usize, lyapunov: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let pairs = |prefix: &str, h: &mut Vec<String>| {
        for a in 1..=n {
            for b in 1..=n {
                h.push(format!("{prefix}_{a}_{b}"));
            }
        }
    };
    let singles = |prefix: &str, h: &mut Vec<String>| {
        h.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    };
    match mode {
        Mode::Tft => pairs("y", &mut h),
        _ => {
            pairs("b", &mut h);
            singles("B", &mut h);
            if mode == Mode::Lazy {
                singles("bank", &mut h);
            }
            singles("p", &mut h);
        }
    }
    pairs("x", &mut h);
    singles("u", &mut h);
    if lyapunov {
        h.extend(["log_f", "log_g", "log_h", "identity_residual"].map(String::from));
    }
    h
}

pub fn row(rec: &StepRecord, mode: Mode, lyapunov: bool) -> Vec<String> {
    let mut f = vec![rec.t.to_string()];
    match &rec.state {
        Snapshot::Tft(s) => f.extend(s.y.as_slice().iter().map(|v| num(*v))),
        Snapshot::Market(s) => {
            f.extend(s.bids.as_slice().iter().map(|v| num(*v)));
            f.extend(s.budget.iter().map(|v| num(*v)));
            if mode == Mode::Lazy {
                f.extend(s.bank.iter().map(|v| num(*v)));
            }
            f.extend(rec.prices.iter().map(|v| num(*v)));
        }
    }
    f.extend(rec.allocation.as_slice().iter().map(|v| num(*v)));
    f.extend(rec.utilities.iter().map(|v| num(*v)));
    if lyapunov {
        match &rec.lyapunov {
            Some(l) => {
                f.extend([l.log_f, l.log_g, l.log_h].map(num));
                f.push(l.identity_residual.map(num).unwrap_or_default());
            }
            None => f.extend(std::iter::repeat_n(String::new(), 4)),
        }
    }
    f
}

pub struct CsvWriter {
    out: csv::Writer<File>,
    mode: Mode,
    lyapunov: bool,
    pub rows: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, mode: Mode, n: usize, lyapunov: bool) -> Result<Self> {
        let mut out =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        out.write_record(header(mode, n, lyapunov))?;
        Ok(Self {
            out,
            mode,
            lyapunov,
            rows: 0,
        })
    }

    pub fn write(&mut self, rec: &StepRecord) -> Result<()> {
        self.out.write_record(row(rec, self.mode, self.lyapunov))?;
        self.rows += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.rows)
    }
}

/// Reads a CSV written by [`CsvWriter`] back into a trajectory. The mode is
/// inferred from the columns: `y_*` means tit-for-tat, `bank_*` lazy.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let head = reader.headers()?.clone();
    let cols: HashMap<&str, usize> = head.iter().enumerate().map(|(k, c)| (c, k)).collect();
    let n = (1..)
        .take_while(|i| cols.contains_key(format!("u_{i}").as_str()))
        .count();
    if n == 0 {
        bail!("{}: no utility columns", path.display());
    }
    let mode = if cols.contains_key("y_1_1") {
        Mode::Tft
    } else if cols.contains_key("bank_1") {
        Mode::Lazy
    } else {
        Mode::Pr
    };
    let col = |name: String| -> Result<usize> {
        cols.get(name.as_str())
            .copied()
            .ok_or_else(|| anyhow!("missing column `{name}`"))
    };
    let vector = |prefix: &str| -> Result<Vec<usize>> {
        (1..=n).map(|i| col(format!("{prefix}_{i}"))).collect()
    };
    let matrix = |prefix: &str| -> Result<Vec<usize>> {
        (1..=n)
            .flat_map(|a| (1..=n).map(move |b| (a, b)))
            .map(|(a, b)| col(format!("{prefix}_{a}_{b}")))
            .collect()
    };
    let t_col = col("t".into())?;
    let x_cols = matrix("x")?;
    let u_cols = vector("u")?;
    let lyapunov = cols.contains_key("log_f");
    let (y_cols, b_cols, budget_cols, bank_cols, p_cols) = match mode {
        Mode::Tft => (matrix("y")?, vec![], vec![], vec![], vec![]),
        _ => (
            vec![],
            matrix("b")?,
            vector("B")?,
            if mode == Mode::Lazy {
                vector("bank")?
            } else {
                vec![]
            },
            vector("p")?,
        ),
    };

    let mut records = Vec::new();
    for (lineno, fields) in reader.records().enumerate() {
        let fields = fields?;
        let get = |k: usize| -> Result<f64> {
            let raw = fields.get(k).unwrap_or("");
            raw.parse::<f64>()
                .with_context(|| format!("line {}: bad number `{raw}`", lineno + 2))
        };
        let many = |ks: &[usize]| ks.iter().map(|&k| get(k)).collect::<Result<Vec<f64>>>();
        let square = |ks: &[usize]| -> Result<Matrix> {
            let v = many(ks)?;
            Ok(Matrix::from_fn(n, |i, j| v[i * n + j]))
        };
        let t = get(t_col)? as usize;
        let (state, prices) = if mode == Mode::Tft {
            (
                Snapshot::Tft(TftState {
                    t,
                    y: square(&y_cols)?,
                }),
                Vec::new(),
            )
        } else {
            let bank = if mode == Mode::Lazy {
                many(&bank_cols)?
            } else {
                vec![0.0; n]
            };
            let s = MarketState {
                t,
                bids: square(&b_cols)?,
                budget: many(&budget_cols)?,
                bank,
            };
            (Snapshot::Market(s), many(&p_cols)?)
        };
        let ly = if lyapunov {
            let opt = |name: &str| -> Result<Option<f64>> {
                let raw = fields.get(col(name.into())?).unwrap_or("");
                if raw.is_empty() {
                    Ok(None)
                } else {
                    Ok(Some(raw.parse::<f64>()?))
                }
            };
            match (opt("log_f")?, opt("log_g")?, opt("log_h")?) {
                (Some(log_f), Some(log_g), Some(log_h)) => Some(LyapunovRecord {
                    t,
                    log_f,
                    log_g,
                    log_h,
                    identity_residual: opt("identity_residual")?,
                }),
                _ => None,
            }
        } else {
            None
        };
        records.push(StepRecord {
            t,
            state,
            prices: prices.into(),
            allocation: Allocation(square(&x_cols)?),
            utilities: many(&u_cols)?.into(),
            lyapunov: ly,
        });
    }
    let stride = match records.as_slice() {
        [a, b, ..] => b.t.saturating_sub(a.t).max(1),
        _ => 1,
    };
    Ok(Trajectory {
        mode,
        steps: records.last().map_or(0, |r| r.t),
        stride,
        records,
        clamped: false,
    })
}
