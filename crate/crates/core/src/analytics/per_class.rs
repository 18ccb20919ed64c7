use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDelta {
    pub class: usize,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// `accuracy_b - accuracy_a`.
    pub delta: f64,
}

/// Per-class accuracy change from model A to model B, largest absolute
/// change first; equal magnitudes keep class order.
pub fn per_class_improvement(a: &[f64], b: &[f64]) -> Result<Vec<ClassDelta>> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} vs {} per-class accuracies", a.len(), b.len())));
    }
    let mut rows: Vec<ClassDelta> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(class, (&x, &y))| ClassDelta { class, accuracy_a: x, accuracy_b: y, delta: y - x })
        .collect();
    rows.sort_by(|p, q| {
        q.delta.abs().partial_cmp(&p.delta.abs()).unwrap_or(Ordering::Equal).then(p.class.cmp(&q.class))
    });
    Ok(rows)
}

/// `sum_c n_c delta_c / sum_c n_c`, which equals the overall accuracy change.
pub fn weighted_delta(rows: &[ClassDelta], class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::config("no test items"));
    }
    rows.iter()
        .map(|r| {
            class_counts
                .get(r.class)
                .map(|&n| n as f64 * r.delta)
                .ok_or_else(|| Error::shape(format!("no count for class {}", r.class)))
        })
        .sum::<Result<f64>>()
        .map(|s| s / total as f64)
}

pub fn per_class_csv(rows: &[ClassDelta]) -> String {
    let mut out = String::from("class,accuracy_a,accuracy_b,delta\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.class, r.accuracy_a, r.accuracy_b, r.delta));
    }
    out
}
