use std::collections::HashMap;

use crate::dataset::Dataset;
use crate::error::{data_err, Result};

/// Merged attack categories, in reporting order.
pub const CATEGORIES: [&str; 6] = ["Benign", "Botnet", "Brute Force", "DoS/DDoS", "PortScan", "Web Attack"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelAction {
    /// Index into the map's category list.
    Merge(usize),
    Drop,
}

/// Raw label → merged category, with an explicit drop list.
///
/// Lookups are on a normalised form (lowercase, runs of non-alphanumerics
/// collapsed to one space), so encoding variants of the dash in
/// "Web Attack – XSS" all resolve to the same entry.
#[derive(Debug, Clone)]
pub struct LabelMap {
    categories: Vec<String>,
    entries: HashMap<String, LabelAction>,
}

pub fn normalise_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars() {
        if ch.is_ascii_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

impl LabelMap {
    pub fn new(categories: &[&str]) -> Self {
        let mut map = Self {
            categories: categories.iter().map(|s| s.to_string()).collect(),
            entries: HashMap::new(),
        };
        for (i, c) in categories.iter().enumerate() {
            map.entries.insert(normalise_label(c), LabelAction::Merge(i));
        }
        map
    }

    pub fn merge(mut self, raw: &[&str], category: &str) -> Self {
        let idx = self
            .categories
            .iter()
            .position(|c| c == category)
            .unwrap_or_else(|| panic!("unknown category {category}"));
        for r in raw {
            self.entries.insert(normalise_label(r), LabelAction::Merge(idx));
        }
        self
    }

    pub fn drop(mut self, raw: &[&str]) -> Self {
        for r in raw {
            self.entries.insert(normalise_label(r), LabelAction::Drop);
        }
        self
    }

    /// The CICIDS2017 grouping into six categories; Infiltration is dropped.
    pub fn cicids2017() -> Self {
        LabelMap::new(&CATEGORIES)
            .merge(&["BENIGN"], "Benign")
            .merge(
                &["Heartbleed", "DDoS", "DoS Hulk", "DoS GoldenEye", "DoS Slowloris", "DoS Slowhttptest"],
                "DoS/DDoS",
            )
            .merge(&["PortScan"], "PortScan")
            .merge(&["FTP-Patator", "SSH-Patator"], "Brute Force")
            .merge(
                &["Web Attack – Brute Force", "Web Attack – XSS", "Web Attack – Sql Injection"],
                "Web Attack",
            )
            .merge(&["Bot"], "Botnet")
            .drop(&["Infiltration"])
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn lookup(&self, raw: &str) -> Option<&LabelAction> {
        self.entries.get(&normalise_label(raw))
    }
}

/// Relabels rows into the map's categories, removing dropped classes.
pub fn merge_labels(ds: &Dataset, map: &LabelMap) -> Result<Dataset> {
    let mut actions = Vec::with_capacity(ds.n_classes());
    for raw in &ds.class_names {
        actions.push(
            map.lookup(raw)
                .cloned()
                .ok_or_else(|| data_err!("raw label {raw:?} is not covered by the label map"))?,
        );
    }
    let mut rows = Vec::with_capacity(ds.n_rows());
    let mut labels = Vec::with_capacity(ds.n_rows());
    for (r, &l) in ds.labels.iter().enumerate() {
        if let LabelAction::Merge(c) = actions[l] {
            rows.push(r);
            labels.push(c);
        }
    }
    Dataset::new(
        ds.features.select_rows(&rows),
        labels,
        ds.feature_names.clone(),
        map.categories().to_vec(),
    )
}
