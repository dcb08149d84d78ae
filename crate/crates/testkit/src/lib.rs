//! Test support: CSV fixtures, a generator of random valid programs with
//! schema-preserving edits, and a naive reference interpreter.

pub mod fixtures;
pub mod oracle;
pub mod program;

pub use fixtures::{Fixtures, Touch};
pub use program::{Edit, GenProgram};

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use flowbook_core::CellRole;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn generated_programs_and_edits_stay_valid() {
        let dir = std::env::temp_dir().join(format!("flowbook-testkit-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let roles = BTreeSet::from([CellRole::Pipeline]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut fixtures = Fixtures::create(&dir, &mut rng);
        for _ in 0..200 {
            let ops = rng.random_range(1..=30);
            let mut p = GenProgram::generate(&mut rng, &fixtures, ops);
            oracle::interpret(&p.render(), &dir, &roles)
                .unwrap_or_else(|e| panic!("{e}\n{}", p.render()));
            for _ in 0..3 {
                p.random_edit(&mut rng, &fixtures);
                fixtures.touch_random(&mut rng);
                oracle::interpret(&p.render(), &dir, &roles)
                    .unwrap_or_else(|e| panic!("{e}\n{}", p.render()));
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn writes_are_appended() {
        let dir = std::env::temp_dir().join(format!("flowbook-testkit-w-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fixtures = Fixtures::create(&dir, &mut rng);
        let mut p = GenProgram::generate(&mut rng, &fixtures, 5);
        p.add_writes(&mut rng, &fixtures, 3);
        assert!(p.render().matches("write_csv(").count() >= 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
