//! Workloads shared by the benchmarks.

use std::collections::BTreeSet;
use std::path::Path;

use flowbook_core::dsl::CellRole;
use flowbook_core::value::{Column, ColumnType, Datum, Table};
use flowbook_core::{Engine, EngineOptions, Session};
use flowbook_testkit::{Fixtures, GenProgram};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A generated program over fresh fixture files in `dir`, plus an edited
/// variant of it.
pub fn program_pair(dir: &Path, ops: usize, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixtures = Fixtures::create(dir, &mut rng);
    let mut program = GenProgram::generate(&mut rng, &fixtures, ops);
    let before = program.render();
    program.random_edit(&mut rng, &fixtures);
    (before, program.render())
}

pub fn options(dir: &Path, parallel: bool) -> EngineOptions {
    EngineOptions {
        roles: BTreeSet::from([CellRole::Pipeline]),
        parallel,
        base_dir: dir.to_path_buf(),
        ..EngineOptions::default()
    }
}

/// An engine that has already run `source` once.
pub fn warm_engine(dir: &Path, source: &str) -> Engine {
    let mut engine = Engine::new(options(dir, true), Session::in_memory());
    engine.load(source).expect("valid program");
    engine.update(Default::default(), &|_| {}).expect("update");
    engine
}

pub fn wide_table(rows: usize) -> Table {
    let ints = Column {
        name: "id".into(),
        ty: ColumnType::Int,
        cells: (0..rows as i64).map(Datum::Int).collect(),
    };
    let floats = Column {
        name: "x".into(),
        ty: ColumnType::Float,
        cells: (0..rows).map(|i| Datum::Float(i as f64 * 0.5)).collect(),
    };
    let strs = Column {
        name: "name".into(),
        ty: ColumnType::Str,
        cells: (0..rows)
            .map(|i| Datum::Str(format!("n{}", i % 97)))
            .collect(),
    };
    Table {
        columns: vec![ints, floats, strs],
    }
}
