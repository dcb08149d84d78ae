//! Random, always-valid pipeline programs and schema-preserving edits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::fixtures::Fixtures;

#[derive(Debug, Clone, PartialEq)]
pub enum Lit {
    /// Integer argument that may be edited within `lo..=hi`.
    Count {
        value: u32,
        lo: u32,
        hi: u32,
    },
    Fraction(f64),
    Seed(u64),
    C(f64),
    /// A CSV file; edits switch to another file of the same family.
    Path(String),
    Text(String),
    Names(Vec<String>),
}

impl Lit {
    fn render(&self) -> String {
        match self {
            Lit::Count { value, .. } => value.to_string(),
            Lit::Fraction(f) | Lit::C(f) => format!("{f:?}"),
            Lit::Seed(s) => s.to_string(),
            Lit::Path(p) | Lit::Text(p) => format!("{p:?}"),
            Lit::Names(names) => {
                let quoted: Vec<String> = names.iter().map(|n| format!("{n:?}")).collect();
                format!("[{}]", quoted.join(", "))
            }
        }
    }

    fn editable(&self) -> bool {
        !matches!(self, Lit::Text(_) | Lit::Names(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Var(String),
    Lit(Lit),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub targets: Vec<String>,
    /// `None` for a literal statement such as `n = 3`.
    pub callee: Option<&'static str>,
    pub args: Vec<Arg>,
    /// Placed in an inspection cell; such statements are never read.
    pub inspection: bool,
}

impl Stmt {
    fn call(targets: Vec<String>, callee: &'static str, args: Vec<Arg>) -> Stmt {
        Stmt {
            targets,
            callee: Some(callee),
            args,
            inspection: false,
        }
    }

    fn reads(&self) -> impl Iterator<Item = &String> {
        self.args.iter().filter_map(|a| match a {
            Arg::Var(v) => Some(v),
            Arg::Lit(_) => None,
        })
    }

    pub fn render(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| match a {
                Arg::Var(v) => v.clone(),
                Arg::Lit(l) => l.render(),
            })
            .collect();
        match self.callee {
            Some(callee) => format!(
                "{} = {callee}({})",
                self.targets.join(", "),
                args.join(", ")
            ),
            None => format!("{} = {}", self.targets[0], args[0]),
        }
    }
}

/// What the generator knows about a variable.
#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// Column names with a numeric flag; empty when the schema is not
    /// statically known.
    Table(Vec<(String, bool)>),
    Column {
        name: String,
        numeric: Option<bool>,
    },
    Model {
        label_numeric: Option<bool>,
    },
    Number,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    Literal { target: String },
    Added { target: String },
    Removed { target: String },
    Renamed { from: String, to: String },
}

#[derive(Debug, Clone, Default)]
pub struct GenProgram {
    pub stmts: Vec<Stmt>,
    /// Statement indices that start a new cell.
    breaks: BTreeSet<usize>,
    next_name: usize,
    next_out: usize,
}

fn numeric_cols(cols: &[(String, bool)]) -> Vec<&String> {
    cols.iter().filter(|(_, n)| *n).map(|(c, _)| c).collect()
}

fn infer(stmt: &Stmt, env: &BTreeMap<String, Kind>, fixtures: &Fixtures) -> Vec<Kind> {
    let var = |i: usize| match &stmt.args[i] {
        Arg::Var(v) => env.get(v).cloned().unwrap_or(Kind::Other),
        Arg::Lit(_) => Kind::Other,
    };
    let table = |i: usize| match var(i) {
        Kind::Table(cols) => cols,
        _ => Vec::new(),
    };
    let names = |i: usize| match &stmt.args[i] {
        Arg::Lit(Lit::Names(n)) => n.clone(),
        _ => Vec::new(),
    };
    let text = |i: usize| match &stmt.args[i] {
        Arg::Lit(Lit::Text(t)) => t.clone(),
        _ => String::new(),
    };
    let Some(callee) = stmt.callee else {
        return vec![Kind::Number];
    };
    match callee {
        "read_csv" => {
            let Arg::Lit(Lit::Path(p)) = &stmt.args[0] else {
                unreachable!()
            };
            let family = fixtures.family_of(p).expect("known fixture");
            vec![Kind::Table(
                family
                    .columns
                    .iter()
                    .map(|(n, k)| (n.to_string(), k.numeric()))
                    .collect(),
            )]
        }
        "random_table" => {
            let Arg::Lit(Lit::Count { value, .. }) = &stmt.args[2] else {
                unreachable!()
            };
            vec![Kind::Table(
                (0..*value).map(|i| (format!("c{i}"), true)).collect(),
            )]
        }
        "head" => vec![Kind::Table(table(0))],
        "split" => vec![Kind::Table(table(0)), Kind::Table(table(0))],
        "drop" => {
            let dropped = names(1);
            vec![Kind::Table(
                table(0)
                    .into_iter()
                    .filter(|(n, _)| !dropped.contains(n))
                    .collect(),
            )]
        }
        "select" => {
            let cols = table(0);
            vec![Kind::Table(
                names(1)
                    .into_iter()
                    .map(|n| {
                        let numeric = cols.iter().find(|(c, _)| *c == n).is_some_and(|(_, k)| *k);
                        (n, numeric)
                    })
                    .collect(),
            )]
        }
        "describe" => {
            let mut cols = vec![("column".to_string(), false)];
            cols.extend(["count", "mean", "std", "min", "max"].map(|n| (n.to_string(), true)));
            vec![Kind::Table(cols)]
        }
        "keep" => {
            let name = text(1);
            let numeric = table(0).iter().find(|(c, _)| *c == name).map(|(_, k)| *k);
            vec![Kind::Column { name, numeric }]
        }
        "to_table" => match var(0) {
            Kind::Column {
                name,
                numeric: Some(n),
            } => vec![Kind::Table(vec![(name, n)])],
            _ => vec![Kind::Table(Vec::new())],
        },
        "SVC" => vec![Kind::Model {
            label_numeric: None,
        }],
        "fit" => match var(2) {
            Kind::Column { numeric, .. } => vec![Kind::Model {
                label_numeric: Some(numeric.unwrap_or(false)),
            }],
            _ => vec![Kind::Model {
                label_numeric: Some(false),
            }],
        },
        "predict" => match var(0) {
            Kind::Model { label_numeric } => vec![Kind::Column {
                name: "prediction".into(),
                numeric: label_numeric,
            }],
            _ => vec![Kind::Other],
        },
        "hyperparameters" => vec![Kind::Table(vec![
            ("name".into(), false),
            ("value".into(), true),
        ])],
        "fitted_params" => vec![Kind::Table(Vec::new())],
        "count_rows" => vec![Kind::Number],
        _ => vec![Kind::Other],
    }
}

fn pick_subset(rng: &mut impl Rng, items: &[String], min: usize, max: usize) -> Vec<String> {
    let k = rng.random_range(min..=max);
    let mut chosen: Vec<String> = items.choose_multiple(rng, k).cloned().collect();
    // keep the table's column order
    chosen.sort_by_key(|c| items.iter().position(|x| x == c));
    chosen
}

impl GenProgram {
    /// A program of roughly `ops` operations over the fixture files.
    pub fn generate(rng: &mut impl Rng, fixtures: &Fixtures, ops: usize) -> GenProgram {
        let mut p = GenProgram::default();
        while p.stmts.len() < ops {
            let env = p.env(fixtures);
            let new = p.random_op(rng, &env, fixtures, true);
            if rng.random_bool(0.25) {
                p.breaks.insert(p.stmts.len());
            }
            p.stmts.extend(new);
        }
        p
    }

    /// Appends `writes` mutually independent `write_csv` statements.
    pub fn add_writes(&mut self, rng: &mut impl Rng, fixtures: &Fixtures, writes: usize) {
        for _ in 0..writes {
            let env = self.env(fixtures);
            let tables: Vec<&String> = env
                .iter()
                .filter(|(_, k)| matches!(k, Kind::Table(_)))
                .map(|(v, _)| v)
                .collect();
            let stmt = match tables.choose(rng) {
                Some(t) => self.write(t.to_string()),
                None => {
                    let src = self.source_table(rng, fixtures);
                    let t = src.targets[0].clone();
                    self.stmts.push(src);
                    self.write(t)
                }
            };
            self.stmts.push(stmt);
        }
    }

    fn fresh(&mut self) -> String {
        self.next_name += 1;
        format!("v{}", self.next_name)
    }

    fn write(&mut self, table: String) -> Stmt {
        let target = self.fresh();
        self.write_to(target, table)
    }

    fn write_to(&mut self, target: String, table: String) -> Stmt {
        self.next_out += 1;
        Stmt::call(
            vec![target],
            "write_csv",
            vec![
                Arg::Var(table),
                Arg::Lit(Lit::Text(format!("out_{}.csv", self.next_out))),
            ],
        )
    }

    fn source_table(&mut self, rng: &mut impl Rng, fixtures: &Fixtures) -> Stmt {
        let target = self.fresh();
        if rng.random_bool(0.5) {
            let family = fixtures.families.choose(rng).unwrap();
            let file = family.files.choose(rng).unwrap().clone();
            Stmt::call(vec![target], "read_csv", vec![Arg::Lit(Lit::Path(file))])
        } else {
            // the column count shapes downstream schemas, so it stays fixed
            let cols = rng.random_range(1..=4);
            Stmt::call(
                vec![target],
                "random_table",
                vec![
                    Arg::Lit(Lit::Seed(rng.random_range(0..1000))),
                    Arg::Lit(Lit::Count {
                        value: rng.random_range(4..=12),
                        lo: 4,
                        hi: 12,
                    }),
                    Arg::Lit(Lit::Count {
                        value: cols,
                        lo: cols,
                        hi: cols,
                    }),
                ],
            )
        }
    }

    /// Types of the variables visible to later pipeline statements.
    fn env(&self, fixtures: &Fixtures) -> BTreeMap<String, Kind> {
        let mut env = BTreeMap::new();
        for s in &self.stmts {
            let kinds = infer(s, &env, fixtures);
            if !s.inspection {
                for (t, k) in s.targets.iter().zip(kinds) {
                    env.insert(t.clone(), k);
                }
            }
        }
        env
    }

    /// One or more statements forming a random operation. `compound`
    /// allows multi-statement patterns such as keep/drop/fit.
    fn random_op(
        &mut self,
        rng: &mut impl Rng,
        env: &BTreeMap<String, Kind>,
        fixtures: &Fixtures,
        compound: bool,
    ) -> Vec<Stmt> {
        let tables: Vec<(&String, &Vec<(String, bool)>)> = env
            .iter()
            .filter_map(|(v, k)| match k {
                Kind::Table(cols) => Some((v, cols)),
                _ => None,
            })
            .collect();
        let known: Vec<(&String, &Vec<(String, bool)>)> = tables
            .iter()
            .filter(|(_, c)| !c.is_empty())
            .copied()
            .collect();
        let columns: Vec<(&String, bool)> = env
            .iter()
            .filter_map(|(v, k)| match k {
                Kind::Column { numeric, .. } => Some((v, numeric.unwrap_or(false))),
                _ => None,
            })
            .collect();
        let models: Vec<(&String, bool)> = env
            .iter()
            .filter_map(|(v, k)| match k {
                Kind::Model { label_numeric } => Some((v, label_numeric.is_some())),
                _ => None,
            })
            .collect();
        let numbers: Vec<&String> = env
            .iter()
            .filter(|(_, k)| **k == Kind::Number)
            .map(|(v, _)| v)
            .collect();

        for _ in 0..64 {
            let choice = rng.random_range(0..20);
            let t = self.fresh();
            let stmt = match choice {
                0 | 1 => return vec![self.source_table(rng, fixtures)],
                2 => Stmt::call(
                    vec![t],
                    "SVC",
                    vec![Arg::Lit(Lit::C(rng.random_range(1..10) as f64 / 2.0))],
                ),
                3 => Stmt {
                    targets: vec![t],
                    callee: None,
                    args: vec![Arg::Lit(Lit::Count {
                        value: rng.random_range(1..=10),
                        lo: 1,
                        hi: 10,
                    })],
                    inspection: false,
                },
                4 | 5 if !tables.is_empty() => {
                    let (src, _) = tables.choose(rng).unwrap();
                    let n = match numbers.choose(rng) {
                        Some(v) if rng.random_bool(0.5) => Arg::Var(v.to_string()),
                        _ => Arg::Lit(Lit::Count {
                            value: rng.random_range(1..=10),
                            lo: 1,
                            hi: 10,
                        }),
                    };
                    Stmt::call(vec![t], "head", vec![Arg::Var(src.to_string()), n])
                }
                6 if known.iter().any(|(_, c)| c.len() > 1) => {
                    let (src, cols) = known
                        .iter()
                        .filter(|(_, c)| c.len() > 1)
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .copied()
                        .unwrap();
                    let names: Vec<String> = cols.iter().map(|(c, _)| c.clone()).collect();
                    let dropped = pick_subset(rng, &names, 1, names.len() - 1);
                    Stmt::call(
                        vec![t],
                        "drop",
                        vec![Arg::Var(src.to_string()), Arg::Lit(Lit::Names(dropped))],
                    )
                }
                7 if !known.is_empty() => {
                    let (src, cols) = known.choose(rng).unwrap();
                    let names: Vec<String> = cols.iter().map(|(c, _)| c.clone()).collect();
                    let kept = pick_subset(rng, &names, 1, names.len());
                    Stmt::call(
                        vec![t],
                        "select",
                        vec![Arg::Var(src.to_string()), Arg::Lit(Lit::Names(kept))],
                    )
                }
                8 if !tables.is_empty() => {
                    let (src, _) = tables.choose(rng).unwrap();
                    let second = self.fresh();
                    let fraction = *[0.25, 0.5, 0.75].choose(rng).unwrap();
                    Stmt::call(
                        vec![t, second],
                        "split",
                        vec![Arg::Var(src.to_string()), Arg::Lit(Lit::Fraction(fraction))],
                    )
                }
                9 if !tables.is_empty() => {
                    let (src, _) = tables.choose(rng).unwrap();
                    let callee = *["describe", "count_rows", "columns"].choose(rng).unwrap();
                    Stmt::call(vec![t], callee, vec![Arg::Var(src.to_string())])
                }
                10 if !known.is_empty() => {
                    let (src, cols) = known.choose(rng).unwrap();
                    let (col, _) = cols.choose(rng).unwrap();
                    Stmt::call(
                        vec![t],
                        "keep",
                        vec![Arg::Var(src.to_string()), Arg::Lit(Lit::Text(col.clone()))],
                    )
                }
                11 if known.iter().any(|(_, c)| !numeric_cols(c).is_empty()) => {
                    let (src, cols) = known
                        .iter()
                        .filter(|(_, c)| !numeric_cols(c).is_empty())
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .copied()
                        .unwrap();
                    let col = numeric_cols(cols).choose(rng).copied().unwrap().clone();
                    Stmt::call(
                        vec![t],
                        "histogram",
                        vec![
                            Arg::Var(src.to_string()),
                            Arg::Lit(Lit::Text(col)),
                            Arg::Lit(Lit::Count {
                                value: rng.random_range(1..=8),
                                lo: 1,
                                hi: 8,
                            }),
                        ],
                    )
                }
                12 if columns.iter().any(|(_, n)| *n) => {
                    let numeric: Vec<&String> = columns
                        .iter()
                        .filter(|(_, n)| *n)
                        .map(|(v, _)| *v)
                        .collect();
                    let col = numeric.choose(rng).unwrap();
                    Stmt::call(
                        vec![t],
                        "column_histogram",
                        vec![
                            Arg::Var(col.to_string()),
                            Arg::Lit(Lit::Count {
                                value: rng.random_range(1..=8),
                                lo: 1,
                                hi: 8,
                            }),
                        ],
                    )
                }
                13 if !columns.is_empty() => {
                    let (col, _) = columns.choose(rng).unwrap();
                    Stmt::call(vec![t], "to_table", vec![Arg::Var(col.to_string())])
                }
                14 | 15
                    if compound && !models.is_empty() && known.iter().any(|(_, c)| c.len() > 1) =>
                {
                    let (model, _) = models.choose(rng).unwrap();
                    let (src, cols) = known
                        .iter()
                        .filter(|(_, c)| c.len() > 1)
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .copied()
                        .unwrap();
                    let (label, _) = cols.choose(rng).unwrap();
                    let y = self.fresh();
                    let x = self.fresh();
                    return vec![
                        Stmt::call(
                            vec![y.clone()],
                            "keep",
                            vec![
                                Arg::Var(src.to_string()),
                                Arg::Lit(Lit::Text(label.clone())),
                            ],
                        ),
                        Stmt::call(
                            vec![x.clone()],
                            "drop",
                            vec![
                                Arg::Var(src.to_string()),
                                Arg::Lit(Lit::Names(vec![label.clone()])),
                            ],
                        ),
                        Stmt::call(
                            vec![t],
                            "fit",
                            vec![Arg::Var(model.to_string()), Arg::Var(x), Arg::Var(y)],
                        ),
                    ];
                }
                16 if models.iter().any(|(_, fitted)| *fitted) && !tables.is_empty() => {
                    let fitted: Vec<&String> =
                        models.iter().filter(|(_, f)| *f).map(|(v, _)| *v).collect();
                    let (src, _) = tables.choose(rng).unwrap();
                    Stmt::call(
                        vec![t],
                        "predict",
                        vec![
                            Arg::Var(fitted.choose(rng).unwrap().to_string()),
                            Arg::Var(src.to_string()),
                        ],
                    )
                }
                17 if models.iter().any(|(_, fitted)| *fitted) => {
                    let fitted: Vec<&String> =
                        models.iter().filter(|(_, f)| *f).map(|(v, _)| *v).collect();
                    let callee = *["hyperparameters", "fitted_params"].choose(rng).unwrap();
                    Stmt::call(
                        vec![t],
                        callee,
                        vec![Arg::Var(fitted.choose(rng).unwrap().to_string())],
                    )
                }
                18 if !tables.is_empty() => {
                    let (src, _) = tables.choose(rng).unwrap();
                    self.write_to(t, src.to_string())
                }
                19 if !tables.is_empty() => {
                    let (src, _) = tables.choose(rng).unwrap();
                    let mut s = Stmt::call(vec![t], "count_rows", vec![Arg::Var(src.to_string())]);
                    s.inspection = true;
                    s
                }
                _ => {
                    self.next_name -= 1;
                    continue;
                }
            };
            return vec![stmt];
        }
        vec![self.source_table(rng, fixtures)]
    }

    pub fn render(&self) -> String {
        let mut out = String::from("#%% [text]\nGenerated pipeline.\n");
        let mut role: Option<bool> = None;
        for (i, s) in self.stmts.iter().enumerate() {
            if role != Some(s.inspection) || self.breaks.contains(&i) {
                out.push_str(if s.inspection {
                    "#%% [inspection]\n"
                } else {
                    "#%% [pipeline]\n"
                });
                role = Some(s.inspection);
            }
            out.push_str(&s.render());
            out.push('\n');
        }
        out
    }

    fn used(&self) -> BTreeSet<&String> {
        self.stmts.iter().flat_map(|s| s.reads()).collect()
    }

    fn leaves(&self) -> Vec<usize> {
        let used = self.used();
        (0..self.stmts.len())
            .filter(|&i| self.stmts[i].targets.iter().all(|t| !used.contains(t)))
            .collect()
    }

    /// Applies one random edit that keeps the program valid.
    pub fn random_edit(&mut self, rng: &mut impl Rng, fixtures: &Fixtures) -> Edit {
        loop {
            match rng.random_range(0..6) {
                0..=2 => {
                    let editable: Vec<(usize, usize)> = self
                        .stmts
                        .iter()
                        .enumerate()
                        .flat_map(|(i, s)| {
                            s.args
                                .iter()
                                .enumerate()
                                .filter(|(_, a)| matches!(a, Arg::Lit(l) if l.editable()))
                                .map(move |(j, _)| (i, j))
                        })
                        .collect();
                    let Some(&(i, j)) = editable.choose(rng) else {
                        continue;
                    };
                    let Arg::Lit(lit) = &mut self.stmts[i].args[j] else {
                        unreachable!()
                    };
                    if !mutate(lit, rng, fixtures) {
                        continue;
                    }
                    return Edit::Literal {
                        target: self.stmts[i].targets[0].clone(),
                    };
                }
                3 => {
                    let env = self.env(fixtures);
                    let new = self.random_op(rng, &env, fixtures, false);
                    let [stmt] = <[Stmt; 1]>::try_from(new).unwrap_or_else(|v| panic!("{v:?}"));
                    let after = stmt
                        .reads()
                        .filter_map(|v| self.stmts.iter().position(|s| s.targets.contains(v)))
                        .max()
                        .map_or(0, |p| p + 1);
                    let at = rng.random_range(after..=self.stmts.len());
                    let target = stmt.targets[0].clone();
                    self.stmts.insert(at, stmt);
                    self.shift_breaks(at, 1);
                    return Edit::Added { target };
                }
                4 => {
                    let leaves = self.leaves();
                    if self.stmts.len() < 3 {
                        continue;
                    }
                    let Some(&i) = leaves.choose(rng) else {
                        continue;
                    };
                    let removed = self.stmts.remove(i);
                    self.shift_breaks(i + 1, -1);
                    return Edit::Removed {
                        target: removed.targets[0].clone(),
                    };
                }
                _ => {
                    let leaves = self.leaves();
                    let Some(&i) = leaves.choose(rng) else {
                        continue;
                    };
                    let from = self.stmts[i].targets[0].clone();
                    let mut names = Vec::new();
                    for _ in 0..self.stmts[i].targets.len() {
                        names.push(self.fresh());
                    }
                    self.stmts[i].targets = names;
                    return Edit::Renamed {
                        from,
                        to: self.stmts[i].targets[0].clone(),
                    };
                }
            }
        }
    }

    fn shift_breaks(&mut self, from: usize, delta: isize) {
        self.breaks = self
            .breaks
            .iter()
            .map(|&b| {
                if b >= from {
                    b.saturating_add_signed(delta)
                } else {
                    b
                }
            })
            .collect();
    }

    /// Variables produced by pipeline statements.
    pub fn pipeline_vars(&self) -> Vec<String> {
        self.stmts
            .iter()
            .filter(|s| !s.inspection)
            .flat_map(|s| s.targets.iter().cloned())
            .collect()
    }
}

fn mutate(lit: &mut Lit, rng: &mut impl Rng, fixtures: &Fixtures) -> bool {
    match lit {
        Lit::Count { value, lo, hi } => {
            if lo == hi {
                return false;
            }
            let mut candidates: Vec<u32> = (*lo..=*hi).filter(|v| v != value).collect();
            candidates.shuffle(rng);
            *value = candidates[0];
            true
        }
        Lit::Fraction(f) => {
            let choices: Vec<f64> = [0.25, 0.5, 0.75].into_iter().filter(|c| c != f).collect();
            *f = *choices.choose(rng).unwrap();
            true
        }
        Lit::Seed(s) => {
            *s = (*s + rng.random_range(1..1000)) % 1000;
            true
        }
        Lit::C(c) => {
            *c += 0.5;
            true
        }
        Lit::Path(p) => {
            let Some(family) = fixtures.family_of(p) else {
                return false;
            };
            let others: Vec<&String> = family.files.iter().filter(|f| *f != p).collect();
            match others.choose(rng) {
                Some(f) => {
                    *p = f.to_string();
                    true
                }
                None => false,
            }
        }
        Lit::Text(_) | Lit::Names(_) => false,
    }
}
