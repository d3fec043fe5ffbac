//! Proptest strategies and seeded generators shared by the suites.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakvis_core::explorer::{
    invocation_menu, model_keys, random_schedules, ClientProgram, ExplorerConfig, Run,
};
use weakvis_core::models::{chm_program, msq_program};
use weakvis_core::program::ObjectProgram;
use weakvis_core::{Adt, History, Method, OperationLabel};

use super::oracles;

pub const DOMAIN: [i64; 2] = [0, 1];

pub fn adt() -> impl Strategy<Value = Adt> {
    prop_oneof![Just(Adt::Map), Just(Adt::Queue)]
}

/// Any well-typed label over the small domain, returns included.
pub fn label(adt: Adt) -> BoxedStrategy<OperationLabel> {
    let methods: Vec<Method> = adt.methods().to_vec();
    proptest::sample::select(methods)
        .prop_flat_map(move |m| {
            let args = adt.arguments(m, &DOMAIN);
            let rets = adt.return_candidates(m, &DOMAIN, 4);
            (
                proptest::sample::select(args),
                proptest::sample::select(rets),
            )
                .prop_map(move |(x, y)| OperationLabel::new(m, x, y))
        })
        .boxed()
}

pub fn labels(adt: Adt, max: usize) -> BoxedStrategy<Vec<OperationLabel>> {
    proptest::collection::vec(label(adt), 0..=max).boxed()
}

/// A sequence the oracle admits: every return is the correct one.
pub fn admitted(adt: Adt, max: usize) -> BoxedStrategy<Vec<OperationLabel>> {
    labels(adt, max)
        .prop_map(|ls| {
            let mut m = oracles::Model::default();
            ls.into_iter()
                .map(|l| OperationLabel::new(l.method, l.arg, m.call(l.method, l.arg)))
                .collect()
        })
        .boxed()
}

/// A random interval-order history with some wrong returns.
pub fn history(adt: Adt, max: usize) -> BoxedStrategy<History> {
    (1..=max, any::<u64>())
        .prop_map(move |(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            oracles::random_history(&mut rng, adt, n, &DOMAIN, 0.3)
        })
        .boxed()
}

pub fn model(adt: Adt) -> ObjectProgram {
    match adt {
        Adt::Map => chm_program(2),
        Adt::Queue => msq_program(),
    }
}

pub fn model_values(adt: Adt) -> Vec<i64> {
    match adt {
        Adt::Map => vec![0, 1],
        Adt::Queue => vec![1, 2],
    }
}

/// A random client of two or three threads with up to three invocations.
pub fn random_client(rng: &mut impl Rng, prog: &ObjectProgram) -> ClientProgram {
    let menu = invocation_menu(prog, &model_keys(prog, 2), &model_values(prog.adt));
    let threads = (0..rng.random_range(2..=3))
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| menu[rng.random_range(0..menu.len())])
                .collect()
        })
        .collect();
    ClientProgram::new(threads)
}

/// One random run of a random client on `prog`.
pub fn random_run(prog: &ObjectProgram, seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let client = random_client(&mut rng, prog);
    let mut out = None;
    random_schedules(
        prog,
        &client,
        &ExplorerConfig::default(),
        seed,
        1,
        |run: &Run| {
            out = Some(run.clone());
            false
        },
    )
    .expect("menu clients are valid");
    out.expect("one schedule")
}

pub fn run(adt: Adt) -> BoxedStrategy<Run> {
    any::<u64>()
        .prop_map(move |seed| random_run(&model(adt), seed))
        .boxed()
}
