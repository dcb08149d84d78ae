//! CSV fixture files grouped into families that share a schema and a row
//! count, so a program can switch between files of one family without
//! breaking downstream operations.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColKind {
    Int,
    Float,
    Bool,
    Str,
}

impl ColKind {
    pub fn numeric(self) -> bool {
        matches!(self, ColKind::Int | ColKind::Float)
    }
}

#[derive(Debug, Clone)]
pub struct Family {
    pub name: &'static str,
    pub columns: Vec<(&'static str, ColKind)>,
    pub rows: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Fixtures {
    pub dir: PathBuf,
    pub families: Vec<Family>,
    /// Monotonic clock used to give every touch a fresh modification time,
    /// independent of file-system timestamp granularity.
    clock: SystemTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Touch {
    NewContent(String),
    SameBytes(String),
}

fn render_rows(columns: &[(&str, ColKind)], rows: usize, rng: &mut impl Rng) -> String {
    let mut out = columns
        .iter()
        .map(|(n, _)| *n)
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for i in 0..rows {
        let cells: Vec<String> = columns
            .iter()
            .map(|(name, kind)| match kind {
                ColKind::Int if *name == "id" || *name == "k" => i.to_string(),
                ColKind::Int => rng.random_range(0..2).to_string(),
                ColKind::Float => format!("{:.2}", rng.random_range(0.0..100.0) + 0.001),
                ColKind::Bool => rng.random_bool(0.5).to_string(),
                ColKind::Str => format!("n{}", rng.random_range(0..5)),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

impl Fixtures {
    pub fn create(dir: &Path, rng: &mut impl Rng) -> Fixtures {
        let families = vec![
            Family {
                name: "a",
                columns: vec![
                    ("id", ColKind::Int),
                    ("x", ColKind::Float),
                    ("y", ColKind::Float),
                    ("label", ColKind::Int),
                ],
                rows: 8,
                files: vec!["a0.csv".into(), "a1.csv".into(), "a2.csv".into()],
            },
            Family {
                name: "b",
                columns: vec![
                    ("k", ColKind::Int),
                    ("name", ColKind::Str),
                    ("v", ColKind::Float),
                    ("flag", ColKind::Bool),
                ],
                rows: 6,
                files: vec!["b0.csv".into(), "b1.csv".into()],
            },
        ];
        let mut fixtures = Fixtures {
            dir: dir.to_path_buf(),
            families,
            clock: SystemTime::now(),
        };
        for f in 0..fixtures.families.len() {
            for file in fixtures.families[f].files.clone() {
                fixtures.rewrite(f, &file, rng);
            }
        }
        fixtures
    }

    fn tick(&mut self) -> SystemTime {
        self.clock += Duration::from_secs(2);
        self.clock
    }

    fn set_mtime(&mut self, path: &Path) {
        let t = self.tick();
        File::options()
            .write(true)
            .open(path)
            .and_then(|f| f.set_modified(t))
            .expect("set modification time");
    }

    fn rewrite(&mut self, family: usize, file: &str, rng: &mut impl Rng) {
        let fam = &self.families[family];
        let text = render_rows(&fam.columns, fam.rows, rng);
        let path = self.dir.join(file);
        std::fs::write(&path, text).expect("write fixture");
        self.set_mtime(&path);
    }

    /// Rewrites a random file, either with new rows or with its current bytes.
    pub fn touch_random(&mut self, rng: &mut impl Rng) -> Touch {
        let family = rng.random_range(0..self.families.len());
        let files = &self.families[family].files;
        let file = files[rng.random_range(0..files.len())].clone();
        if rng.random_bool(0.5) {
            self.rewrite(family, &file, rng);
            Touch::NewContent(file)
        } else {
            let path = self.dir.join(&file);
            let bytes = std::fs::read(&path).expect("read fixture");
            std::fs::write(&path, bytes).expect("write fixture");
            self.set_mtime(&path);
            Touch::SameBytes(file)
        }
    }

    pub fn family_of(&self, file: &str) -> Option<&Family> {
        self.families
            .iter()
            .find(|f| f.files.iter().any(|x| x == file))
    }
}
