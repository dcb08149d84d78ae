//! A nearest-centroid classifier behind the `SVC` name. Fitting stores the
//! per-class mean of every numeric feature.

use std::collections::BTreeMap;

use crate::error::StdlibError;
use crate::value::{Centroid, Column, ColumnType, Datum, Model, Table};

pub fn svc(c: f64) -> Model {
    Model {
        kind: "SVC".into(),
        hyperparams: BTreeMap::from([("C".to_string(), c)]),
        fitted: false,
        features: Vec::new(),
        label_type: None,
        centroids: Vec::new(),
    }
}

fn numeric_features(x: &Table) -> Vec<&Column> {
    x.columns.iter().filter(|c| c.ty.is_numeric()).collect()
}

pub fn fit(model: &Model, x: &Table, y: &Column) -> Result<Model, StdlibError> {
    if x.row_count() != y.len() && !x.columns.is_empty() {
        return Err(StdlibError::LengthMismatch(x.row_count(), y.len()));
    }
    let features = numeric_features(x);
    let mut labels: Vec<Datum> = Vec::new();
    for d in &y.cells {
        if *d != Datum::Null && !labels.contains(d) {
            labels.push(d.clone());
        }
    }
    labels.sort_by(Datum::total_cmp);
    let centroids = labels
        .into_iter()
        .map(|label| {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y.cells[i] == label).collect();
            let mean = features
                .iter()
                .map(|f| {
                    let vals: Vec<f64> = rows.iter().filter_map(|&i| f.cells[i].as_f64()).collect();
                    if vals.is_empty() {
                        0.0
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    }
                })
                .collect();
            Centroid { label, mean }
        })
        .collect();
    Ok(Model {
        kind: model.kind.clone(),
        hyperparams: model.hyperparams.clone(),
        fitted: true,
        features: features.iter().map(|c| c.name.clone()).collect(),
        label_type: Some(y.ty),
        centroids,
    })
}

pub fn predict(model: &Model, x: &Table) -> Result<Column, StdlibError> {
    if !model.fitted {
        return Err(StdlibError::NotFitted);
    }
    let cols: Vec<Option<&Column>> = model.features.iter().map(|f| x.column(f)).collect();
    let cells = (0..x.row_count())
        .map(|i| {
            let point: Vec<f64> = cols
                .iter()
                .map(|c| c.and_then(|c| c.cells[i].as_f64()).unwrap_or(0.0))
                .collect();
            model
                .centroids
                .iter()
                .map(|c| {
                    let d: f64 = c
                        .mean
                        .iter()
                        .zip(&point)
                        .map(|(m, p)| (m - p).powi(2))
                        .sum();
                    (d, &c.label)
                })
                .reduce(|best, next| if next.0 < best.0 { next } else { best })
                .map_or(Datum::Null, |(_, label)| label.clone())
        })
        .collect();
    Ok(Column {
        name: "prediction".into(),
        ty: model.label_type.unwrap_or(ColumnType::Str),
        cells,
    })
}

pub fn hyperparameters(model: &Model) -> Table {
    Table {
        columns: vec![
            Column {
                name: "name".into(),
                ty: ColumnType::Str,
                cells: model
                    .hyperparams
                    .keys()
                    .map(|k| Datum::Str(k.clone()))
                    .collect(),
            },
            Column {
                name: "value".into(),
                ty: ColumnType::Float,
                cells: model
                    .hyperparams
                    .values()
                    .map(|v| Datum::Float(*v))
                    .collect(),
            },
        ],
    }
}

/// One row per class: the label followed by the centroid coordinates.
pub fn fitted_params(model: &Model) -> Table {
    let mut columns = vec![Column {
        name: "label".into(),
        ty: model.label_type.unwrap_or(ColumnType::Str),
        cells: model.centroids.iter().map(|c| c.label.clone()).collect(),
    }];
    for (i, feature) in model.features.iter().enumerate() {
        columns.push(Column {
            name: feature.clone(),
            ty: ColumnType::Float,
            cells: model
                .centroids
                .iter()
                .map(|c| Datum::Float(c.mean[i]))
                .collect(),
        });
    }
    Table { columns }
}
