use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::StdlibError;
use crate::value::{Column, ColumnType, Datum, Histogram, Table};

fn check_names(table: &Table, names: &[String]) -> Result<(), StdlibError> {
    for (i, name) in names.iter().enumerate() {
        if table.column(name).is_none() {
            return Err(StdlibError::BadColumn(name.clone()));
        }
        if names[..i].contains(name) {
            return Err(StdlibError::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

pub fn drop(table: &Table, names: &[String]) -> Result<Table, StdlibError> {
    check_names(table, names)?;
    Ok(Table {
        columns: table
            .columns
            .iter()
            .filter(|c| !names.contains(&c.name))
            .cloned()
            .collect(),
    })
}

pub fn select(table: &Table, names: &[String]) -> Result<Table, StdlibError> {
    check_names(table, names)?;
    Ok(Table {
        columns: names
            .iter()
            .map(|n| table.column(n).unwrap().clone())
            .collect(),
    })
}

pub fn keep(table: &Table, name: &str) -> Result<Column, StdlibError> {
    table
        .column(name)
        .cloned()
        .ok_or_else(|| StdlibError::BadColumn(name.to_string()))
}

pub fn head(table: &Table, n: usize) -> Table {
    table.take_rows(0..n.min(table.row_count()))
}

pub fn split(table: &Table, fraction: f64) -> Result<(Table, Table), StdlibError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(StdlibError::BadArgument {
            param: "fraction",
            message: format!("expected a value in [0, 1], found {fraction}"),
        });
    }
    let rows = table.row_count();
    let k = ((rows as f64) * fraction).round() as usize;
    Ok((table.take_rows(0..k), table.take_rows(k..rows)))
}

/// One row per numeric column: count, mean, sample standard deviation,
/// minimum and maximum of the non-null cells.
pub fn describe(table: &Table) -> Table {
    let numeric: Vec<&Column> = table.columns.iter().filter(|c| c.ty.is_numeric()).collect();
    let mut out = vec![
        Column {
            name: "column".into(),
            ty: ColumnType::Str,
            cells: Vec::new(),
        },
        Column {
            name: "count".into(),
            ty: ColumnType::Int,
            cells: Vec::new(),
        },
    ];
    for name in ["mean", "std", "min", "max"] {
        out.push(Column {
            name: name.into(),
            ty: ColumnType::Float,
            cells: Vec::new(),
        });
    }
    for col in numeric {
        let values: Vec<f64> = col.numeric_values().collect();
        let n = values.len();
        let float = |v: Option<f64>| v.map_or(Datum::Null, Datum::Float);
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let std = mean
            .filter(|_| n > 1)
            .map(|m| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        let min = values.iter().copied().reduce(f64::min);
        let max = values.iter().copied().reduce(f64::max);
        let row = [
            Datum::Str(col.name.clone()),
            Datum::Int(n as i64),
            float(mean),
            float(std),
            float(min),
            float(max),
        ];
        for (c, d) in out.iter_mut().zip(row) {
            c.cells.push(d);
        }
    }
    Table { columns: out }
}

/// Equal-width bins between the minimum and maximum non-null value; the
/// last bin includes its upper edge.
pub fn histogram(column: &Column, bins: usize) -> Result<Histogram, StdlibError> {
    if bins == 0 {
        return Err(StdlibError::BadArgument {
            param: "bins",
            message: "expected at least one bin".into(),
        });
    }
    if !column.ty.is_numeric() {
        return Err(StdlibError::BadArgument {
            param: "column",
            message: format!("column `{}` is not numeric", column.name),
        });
    }
    let values: Vec<f64> = column.numeric_values().filter(|v| v.is_finite()).collect();
    let (lo, hi) = match (
        values.iter().copied().reduce(f64::min),
        values.iter().copied().reduce(f64::max),
    ) {
        (Some(lo), Some(hi)) if lo < hi => (lo, hi),
        (Some(v), Some(_)) => (v - 0.5, v + 0.5),
        _ => (0.0, 1.0),
    };
    let width = (hi - lo) / bins as f64;
    let bin_edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram {
        column: column.name.clone(),
        bin_edges,
        counts,
    })
}

pub fn random_table(seed: u64, rows: usize, cols: usize) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Column> = (0..cols)
        .map(|i| Column {
            name: format!("c{i}"),
            ty: ColumnType::Float,
            cells: Vec::with_capacity(rows),
        })
        .collect();
    for _ in 0..rows {
        for c in columns.iter_mut() {
            c.cells.push(Datum::Float(rng.random::<f64>()));
        }
    }
    Table { columns }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floats(v: &[f64]) -> Column {
        Column {
            name: "x".into(),
            ty: ColumnType::Float,
            cells: v.iter().map(|f| Datum::Float(*f)).collect(),
        }
    }

    #[test]
    fn histogram_counts_every_value_once() {
        let h = histogram(&floats(&[0.0, 1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(h.bin_edges, [0.0, 2.0, 4.0]);
        assert_eq!(h.counts, [2, 3]);
        let flat = histogram(&floats(&[7.0, 7.0]), 3).unwrap();
        assert_eq!(flat.counts.iter().sum::<u64>(), 2);
        assert!(histogram(&floats(&[1.0]), 0).is_err());
    }

    #[test]
    fn describe_matches_hand_computation() {
        let t = Table {
            columns: vec![floats(&[1.0, 2.0, 3.0])],
        };
        let d = describe(&t);
        assert_eq!(d.row(0)[1], &Datum::Int(3));
        assert_eq!(d.row(0)[2], &Datum::Float(2.0));
        assert_eq!(d.row(0)[3], &Datum::Float(1.0));
    }

    #[test]
    fn select_and_drop_validate_names() {
        let t = Table {
            columns: vec![floats(&[1.0])],
        };
        assert!(select(&t, &["x".into(), "x".into()]).is_err());
        assert_eq!(drop(&t, &["x".into()]).unwrap().columns.len(), 0);
    }
}
