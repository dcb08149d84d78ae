//! The pipeline language: tagged cells holding single-assignment statements
//! of the form `targets = call(args)`.

mod ast;
mod parser;
mod typecheck;
mod types;

pub use ast::{Arg, ArgValue, Cell, CellRole, Expr, Literal, Program, Statement, VarName};
pub use parser::parse;
pub use typecheck::{typecheck, Operation, TypeError, TypeErrorKind, TypedProgram, TypedStatement};
pub use types::{Param, SemanticType, SignatureLookup, TypeSignature};

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::stdlib::Stdlib;

    const EXAMPLE: &str = include_str!("../../../../samples/titanic.flow");
    const TAGGED: &str = include_str!("../../../../samples/titanic_tagged.flow");

    fn check(src: &str) -> crate::Result<TypedProgram> {
        typecheck(&parse(src)?, Stdlib::global())
    }

    #[test]
    fn titanic_types_are_inferred_forward() {
        let typed = check(EXAMPLE).unwrap();
        let expect = [
            ("train_df", SemanticType::Table),
            ("X_train", SemanticType::Table),
            ("y_train", SemanticType::Column),
            ("svc", SemanticType::Model),
            ("trained_svc", SemanticType::Model),
        ];
        assert_eq!(typed.types.len(), expect.len());
        for (var, ty) in expect {
            assert_eq!(typed.type_of(var), Some(ty), "{var}");
        }
    }

    #[test]
    fn empty_program_has_empty_environment() {
        let typed = check("").unwrap();
        assert!(typed.types.is_empty());
        assert!(typed.statements.is_empty());
    }

    #[test]
    fn fit_with_scalar_features_is_a_type_error_at_that_statement() {
        let src = "svc = SVC(1.0)\nX = 3\nt = read_csv(\"a.csv\")\ny = keep(t, \"a\")\nm = fit(svc, X, y)";
        match check(src).unwrap_err() {
            crate::Error::Type(errors) => {
                assert_eq!(errors.len(), 1);
                assert_eq!(errors[0].textual_index, 4);
                assert!(matches!(
                    errors[0].kind,
                    TypeErrorKind::ArgumentType {
                        expected: SemanticType::Table,
                        found: SemanticType::Number,
                        ..
                    }
                ));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_function_and_arity_errors() {
        let errs = |src| match check(src).unwrap_err() {
            crate::Error::Type(e) => e,
            other => panic!("{other}"),
        };
        assert!(matches!(
            errs("x = frobnicate(1)")[0].kind,
            TypeErrorKind::UnknownFunction { .. }
        ));
        assert!(matches!(
            errs("t = read_csv()")[0].kind,
            TypeErrorKind::Arity { .. }
        ));
        assert!(matches!(
            errs("t = read_csv(\"a\", \"b\")")[0].kind,
            TypeErrorKind::Arity { .. }
        ));
        assert!(matches!(
            errs("a, b = read_csv(\"a\")")[0].kind,
            TypeErrorKind::TargetCount { .. }
        ));
        // one error per failing statement, dependents are not reported again
        let many = errs("a = nope(1)\nb = head(a)\nc = read_csv(1)");
        assert_eq!(many.len(), 2);
        assert_eq!(many[1].textual_index, 2);
    }

    #[test]
    fn defaults_and_keywords_are_bound_by_parameter() {
        let typed = check("t = read_csv(\"a.csv\")\nh = head(n=3, table=t)\ng = head(t)").unwrap();
        let Operation::Call { args, .. } = &typed.statements[1].op else {
            panic!()
        };
        assert_eq!(
            args,
            &[
                ArgValue::Var("t".into()),
                ArgValue::Lit(Literal::Number(3.0))
            ]
        );
        let Operation::Call { args, .. } = &typed.statements[2].op else {
            panic!()
        };
        assert_eq!(args[1], ArgValue::Lit(Literal::Number(5.0)));
    }

    #[test]
    fn filtering_to_pipeline_removes_the_inspection_cell() {
        let program = parse(TAGGED).unwrap();
        let pipeline = program.filter_cells(&BTreeSet::from([CellRole::Pipeline]));
        assert!(pipeline.cells.iter().all(|c| c.role == CellRole::Pipeline));
        assert_eq!(pipeline.statements().count(), 5);
        assert!(pipeline
            .statements()
            .all(|s| s.targets[0].as_str() != "preview"));
        // indices are preserved from the original program
        let idx: Vec<usize> = pipeline.statements().map(|s| s.textual_index).collect();
        assert_eq!(idx, [0, 2, 3, 4, 5]);
    }

    #[test]
    fn filtering_with_all_roles_is_identity_and_idempotent() {
        let program = parse(TAGGED).unwrap();
        assert!(program
            .filter_cells(&CellRole::all())
            .structurally_eq(&program));
        let roles = BTreeSet::from([CellRole::Pipeline, CellRole::Text]);
        let once = program.filter_cells(&roles);
        assert!(once.filter_cells(&roles).structurally_eq(&once));
    }

    #[test]
    fn inspection_only_filter_leaves_dangling_reference_for_typecheck() {
        let program = parse(TAGGED).unwrap();
        let only = program.filter_cells(&BTreeSet::from([CellRole::Inspection]));
        assert_eq!(only.cells.len(), 1);
        match typecheck(&only, Stdlib::global()).unwrap_err() {
            crate::Error::Type(errors) => assert_eq!(
                errors[0].kind,
                TypeErrorKind::UndefinedVariable {
                    name: "train_df".into()
                }
            ),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn every_var_ref_has_its_producers_declared_type() {
        let typed = check(EXAMPLE).unwrap();
        for stmt in &typed.statements {
            if let Operation::Call { callee, args } = &stmt.op {
                let sig = Stdlib::global().signature(callee).unwrap();
                for (param, arg) in sig.params.iter().zip(args) {
                    if let ArgValue::Var(v) = arg {
                        assert_eq!(typed.types[v], param.ty);
                    }
                }
            }
        }
    }
}
