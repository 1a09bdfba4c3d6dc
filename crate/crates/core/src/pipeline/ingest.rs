use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{data_err, Error, Result};
use crate::numerics::Matrix;

/// Identifier columns that are never used as features.
const EXCLUDED_COLUMNS: &[&str] = &[
    "flow id",
    "source ip",
    "src ip",
    "destination ip",
    "dst ip",
    "source port",
    "src port",
    "destination port",
    "dst port",
    "timestamp",
];

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub dataset: Dataset,
    /// Rows dropped for NaN, infinite or unparseable values.
    pub dropped_rows: usize,
    pub excluded_columns: Vec<String>,
}

/// Reads a flow-record CSV whose last column is the label.
///
/// Classes are the distinct raw labels in sorted order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_csv(reader: impl Read) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err!("unreadable header: {e}"))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.len() < 2 {
        return Err(data_err!("need at least one feature column and a label column"));
    }
    let label_col = header.len() - 1;
    let mut kept = Vec::new();
    let mut excluded_columns = Vec::new();
    for (i, name) in header[..label_col].iter().enumerate() {
        if EXCLUDED_COLUMNS.contains(&name.to_ascii_lowercase().as_str()) {
            excluded_columns.push(name.clone());
        } else {
            kept.push(i);
        }
    }
    let feature_names = unique_names(kept.iter().map(|&i| header[i].as_str()));

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dropped_rows = 0;
    let mut row_values = Vec::with_capacity(kept.len());
    for record in rdr.records() {
        let record = record.map_err(|e| data_err!("malformed CSV record: {e}"))?;
        row_values.clear();
        let mut valid = true;
        for &i in &kept {
            match record[i].parse::<f64>() {
                Ok(v) if v.is_finite() => row_values.push(v),
                _ => {
                    valid = false;
                    break;
                }
            }
        }
        if !valid {
            dropped_rows += 1;
            continue;
        }
        data.extend_from_slice(&row_values);
        raw_labels.push(record[label_col].to_owned());
    }
    if raw_labels.is_empty() {
        return Err(data_err!("no valid rows"));
    }
    if dropped_rows > 0 {
        log::info!("dropped {dropped_rows} rows with invalid numeric values");
    }

    let class_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let features = Matrix::from_vec(raw_labels.len(), kept.len(), data)?;
    Ok(LoadReport {
        dataset: Dataset::new(features, labels, feature_names, class_names)?,
        dropped_rows,
        excluded_columns,
    })
}

/// Repeated column names get `.1`, `.2`, ... suffixes.
fn unique_names<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for name in names {
        let mut candidate = name.to_owned();
        while let Some(n) = seen.get_mut(&candidate) {
            *n += 1;
            candidate = format!("{name}.{n}");
        }
        seen.insert(candidate.clone(), 0);
        out.push(candidate);
    }
    out
}

/// Writes a dataset as CSV with a trailing `Label` column of class names.
///
/// Floats are written in shortest round-trip form, so reading the file back
/// reproduces every value bit for bit.
pub fn write_csv(ds: &Dataset, writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_data = |e: csv::Error| data_err!("CSV write failed: {e}");
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push("Label");
    w.write_record(&header).map_err(to_data)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for (r, row) in ds.features.row_iter().enumerate() {
        fields.clear();
        fields.extend(row.iter().map(|v| format!("{v:?}")));
        fields.push(ds.class_names[ds.labels[r]].clone());
        w.write_record(&fields).map_err(to_data)?;
    }
    w.flush().map_err(|e| data_err!("CSV flush failed: {e}"))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`] against a known class list.
pub fn read_split(path: impl AsRef<Path>, class_names: &[String]) -> Result<Dataset> {
    let report = load_csv(path.as_ref())?;
    if report.dropped_rows > 0 {
        return Err(data_err!(
            "{}: {} rows with invalid values in a processed split",
            path.as_ref().display(),
            report.dropped_rows
        ));
    }
    let ds = report.dataset;
    let mut mapping = Vec::with_capacity(ds.n_classes());
    for name in &ds.class_names {
        let idx = class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| data_err!("unknown class {name:?} in {}", path.as_ref().display()))?;
        mapping.push(idx);
    }
    Dataset::new(
        ds.features,
        ds.labels.iter().map(|&l| mapping[l]).collect(),
        ds.feature_names,
        class_names.to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_fixture() {
        let csv = "Flow Duration, Total Fwd Packets,Label\n1,2,BENIGN\n3,4,DDoS\n5,6,BENIGN\n";
        let r = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(r.dataset.n_rows(), 3);
        assert_eq!(r.dataset.feature_names, vec!["Flow Duration", "Total Fwd Packets"]);
        assert_eq!(r.dataset.class_names, vec!["BENIGN", "DDoS"]);
        assert_eq!(r.dataset.labels, vec![0, 1, 0]);
        assert_eq!(r.dropped_rows, 0);
    }

    #[test]
    fn invalid_numerics_are_dropped() {
        let csv = "a,Flow Bytes/s,Label\n1,Infinity,BENIGN\n2,3,BENIGN\n4,NaN,Bot\n5,inf,Bot\n6,x,Bot\n7,,Bot\n8,9,Bot\n";
        let r = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(r.dataset.n_rows(), 2);
        assert_eq!(r.dropped_rows, 5);

        let one = "a,Flow Bytes/s,Label\n1,Infinity,BENIGN\n2,3,BENIGN\n";
        assert_eq!(read_csv(one.as_bytes()).unwrap().dropped_rows, 1);
    }

    #[test]
    fn empty_input_is_data_error() {
        assert!(matches!(read_csv("".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(read_csv("a,Label\n".as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn identifier_columns_and_duplicates() {
        let csv = "Flow ID,Source IP,Destination Port,Fwd Header Length,Fwd Header Length,Label\nx,1.2.3.4,80,1,2,BENIGN\n";
        let r = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(r.dataset.feature_names, vec!["Fwd Header Length", "Fwd Header Length.1"]);
        assert_eq!(r.excluded_columns.len(), 3);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_csv("/nonexistent/flows.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn write_then_read_is_exact() {
        let ds = Dataset::new(
            Matrix::from_rows(&[[0.1 + 0.2, -1e-300], [std::f64::consts::PI, 12345.678]]).unwrap(),
            vec![1, 0],
            vec!["pc1".into(), "pc2".into()],
            vec!["Benign".into(), "Botnet".into(), "PortScan".into()],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&ds, File::create(&path).unwrap()).unwrap();
        let back = read_split(&path, &ds.class_names).unwrap();
        assert_eq!(back, ds);
    }
}
