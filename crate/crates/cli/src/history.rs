//! CSV rendering of training histories.

use std::fmt::Write as _;
use std::path::Path;

use mmfuse_core::train::TrainHistory;

use crate::error::{io_err, Result};

/// One header row plus exactly one row per epoch.
pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = format!(
        "epoch,lr,train_total,train_ell,train_kl,lambda,val_{}\n",
        history.metric
    );
    for r in &history.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.lr, r.train.total, r.train.ell, r.train.kl, r.train.lambda, r.val_metric
        );
    }
    out
}

pub fn write_history(history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, history_csv(history)).map_err(io_err(path))
}
