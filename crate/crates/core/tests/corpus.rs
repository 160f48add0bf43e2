//! Expected verdicts for the bundled corpus, plus a concrete replay of every
//! reported witness.

use std::path::Path;

use tcpa_core::harness::load_corpus;
use tcpa_core::symexec::{explore, init_analysis, ExploreBounds, Outcome};
use tcpa_core::wasm::{assemble_text, parse_module};
use tcpa_core::{run_concrete, TraceResult};

const EXPECTED: &[(&str, &[Outcome])] = {
    use Outcome::{Valid as V, Violated as X};
    &[
        ("abs_diff.wat", &[V]),
        ("add_mask.wat", &[V, V]),
        ("assert_bug.wat", &[X]),
        ("clamp.wat", &[V]),
        ("countdown.wat", &[V]),
        ("dispatch.wat", &[V, V]),
        ("div_bug.wat", &[X]),
        ("div_guard.wat", &[V]),
        ("fib.wat", &[V, V]),
        ("memcopy.wat", &[V, V]),
        ("mixer.wat", &[V, V]),
        ("sum_loop.wat", &[V, V]),
    ]
};

#[test]
fn corpus_verdicts() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let jobs = load_corpus(&dir).unwrap();
    assert_eq!(jobs.len(), EXPECTED.len());
    for (job, (name, expected)) in jobs.into_iter().zip(EXPECTED) {
        let job = job.unwrap();
        assert_eq!(&job.name, name);
        let (bytes, map) = assemble_text(&job.source).unwrap();
        let module = parse_module(&bytes).unwrap();
        let a = init_analysis(module, map, job.properties).unwrap();
        let report = explore(&a, &ExploreBounds::default());
        let got: Vec<Outcome> = report.outcomes.iter().map(|o| o.outcome).collect();
        assert_eq!(&got, expected, "{name}");
        for o in &report.outcomes {
            if let Some(w) = &o.witness {
                let args: Vec<i64> = w.args.iter().map(|&a| a as i64).collect();
                match run_concrete(a.module(), &w.entry, &args, 1_000_000).unwrap() {
                    TraceResult::Trapped { kind, offset } => assert_eq!((kind, offset), (w.trap, w.offset), "{name}"),
                    other => panic!("{name}: witness did not trap: {other:?}"),
                }
            }
        }
    }
}
