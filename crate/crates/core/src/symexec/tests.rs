use super::*;
use crate::interp::{run_concrete, TraceResult};
use crate::solver::{Kind, SymExpr};
use crate::wasm::{assemble_text, parse_module};

fn analysis(src: &str, props: &str) -> Analysis {
    let (bytes, map) = assemble_text(src).unwrap();
    let m = parse_module(&bytes).unwrap();
    init_analysis(m, map, PropertySet::parse(props).unwrap()).unwrap()
}

const ASSERT_IMPORT: &str = r#"(import "env" "tcpa_assert" (func $assert (param i32)))"#;

fn outcome(a: &Analysis, id: &str) -> PropertyOutcome {
    let r = explore(a, &ExploreBounds::default());
    r.outcomes.into_iter().find(|o| o.id == id).unwrap()
}

#[test]
fn init_checks_targets_and_keeps_order() {
    let src = "(module (func (export \"f\") (param i32)))";
    let a = analysis(src, "p no_trap f\nq assertion_unreachable f");
    assert_eq!(a.modules.len(), 1);
    assert_eq!(a.entries().collect::<Vec<_>>(), ["f"]);
    assert_eq!(a.properties.properties()[1].id, "q");

    let (bytes, map) = assemble_text(src).unwrap();
    let m = parse_module(&bytes).unwrap();
    let err = init_analysis(m, map, PropertySet::parse("p no_trap g").unwrap()).err();
    assert_eq!(err, Some(SymexecError::UnknownTarget("g".into())));
}

#[test]
fn step_pushes_constants() {
    let a = analysis("(module (func (export \"f\") (result i32) i32.const 7))", "p no_trap f");
    let c = a.entry_configuration("f").unwrap();
    let next = a.step(&c, &ExploreBounds::default()).unwrap();
    assert_eq!(next.len(), 1);
    assert_eq!(next[0].stack.last().unwrap().expr.as_const(), Some(7));
    assert_eq!(next[0].src, a.src_map.location(a.module().functions[0].body[1].offset));
}

fn run_to_br_if(a: &Analysis) -> Configuration {
    let mut c = a.entry_configuration("f").unwrap();
    let bounds = ExploreBounds::default();
    loop {
        let (f, pc) = c.pc().unwrap();
        if matches!(a.module().defined(f).unwrap().body[pc].op, crate::wasm::Op::BrIf(_)) {
            return c;
        }
        c = a.step(&c, &bounds).unwrap().remove(0);
    }
}

#[test]
fn br_if_forks_on_symbolic_condition() {
    let a = analysis(
        "(module (func (export \"f\") (param i32) block local.get 0 br_if 0 end))",
        "p no_trap f",
    );
    let c = run_to_br_if(&a);
    let next = a.step(&c, &ExploreBounds::default()).unwrap();
    assert_eq!(next.len(), 2);
    let last = |c: &Configuration| c.path_condition.conjuncts().last().cloned().unwrap();
    assert!(!last(&next[0]).nonzero, "not-taken side comes first");
    assert!(last(&next[1]).nonzero);
    assert!(matches!(last(&next[0]).expr.kind(), Kind::Var(_)));
}

#[test]
fn br_if_on_constant_zero_has_one_successor() {
    let a = analysis(
        "(module (func (export \"f\") block i32.const 0 br_if 0 end))",
        "p no_trap f",
    );
    let c = run_to_br_if(&a);
    let next = a.step(&c, &ExploreBounds::default()).unwrap();
    assert_eq!(next.len(), 1);
    assert!(next[0].path_condition.is_empty());
}

#[test]
fn constant_true_assertion_is_valid() {
    let src = format!("(module {ASSERT_IMPORT} (func (export \"f\") i32.const 1 call $assert))");
    let a = analysis(&src, "p assertion_unreachable f");
    let o = outcome(&a, "p");
    assert_eq!(o.outcome, Outcome::Valid);
}

const GT5: &str = r#"(module
  (import "env" "tcpa_assert" (func $assert (param i32)))
  (func (export "f") (param i32)
    local.get 0
    i32.const 5
    i32.gt_s
    if
      i32.const 0
      call $assert
    end))"#;

#[test]
fn violation_carries_replayable_witness() {
    let a = analysis(GT5, "p assertion_unreachable f");
    let o = outcome(&a, "p");
    assert_eq!(o.outcome, Outcome::Violated);
    let w = o.witness.unwrap();
    assert!((w.args[0] as u32 as i32) > 5);
    assert_eq!(w.location.unwrap().line, 9);
    let r = run_concrete(a.module(), "f", &[w.args[0] as i64], 10_000).unwrap();
    assert_eq!(
        r,
        TraceResult::Trapped {
            kind: TrapKind::AssertFailed,
            offset: w.offset
        }
    );
    // Brute-force oracle over a byte range agrees on which inputs trap.
    let traps: Vec<i64> = (0..256)
        .filter(|x| run_concrete(a.module(), "f", &[*x], 10_000).unwrap().is_trap())
        .collect();
    assert_eq!(traps.first(), Some(&6));
    assert_eq!(traps.len(), 250);
}

#[test]
fn independent_branches_give_two_paths() {
    let src = r#"(module (func (export "f") (param i32) (result i32)
        local.get 0
        if (result i32) i32.const 1 else i32.const 2 end))"#;
    let a = analysis(src, "p no_trap f");
    let r = explore(&a, &ExploreBounds::default());
    assert_eq!(r.stats.paths_completed, 2);
    assert_eq!(r.stats.paths_unknown, 0);
    assert_eq!(r.outcomes[0].outcome, Outcome::Valid);
}

#[test]
fn division_by_symbolic_divisor() {
    let src = r#"(module (func (export "f") (param i32) (result i32)
        i32.const 10 local.get 0 i32.div_s))"#;
    let a = analysis(src, "t no_trap f\na assertion_unreachable f");
    let r = explore(&a, &ExploreBounds::default());
    assert_eq!(r.outcomes[0].outcome, Outcome::Violated);
    assert_eq!(r.outcomes[0].witness.as_ref().unwrap().trap, TrapKind::DivByZero);
    assert_eq!(r.outcomes[0].witness.as_ref().unwrap().args, vec![0]);
    assert_eq!(r.outcomes[1].outcome, Outcome::Valid);
}

#[test]
fn signed_overflow_is_found() {
    let src = r#"(module (func (export "f") (param i32 i32) (result i32)
        local.get 0 local.get 1 i32.div_s))"#;
    let a = analysis(src, "t no_trap f");
    let ex = a.explore_detailed(&ExploreBounds::default());
    let kinds: Vec<TrapKind> = ex
        .paths
        .iter()
        .filter_map(|p| match &p.end {
            PathEnd::Trapped(w) => Some(w.trap),
            _ => None,
        })
        .collect();
    assert_eq!(kinds, vec![TrapKind::DivByZero, TrapKind::IntegerOverflow]);
    assert_eq!(ex.report.stats.paths_completed, 3);
}

#[test]
fn symbolic_loop_hits_unroll_bound() {
    let src = r#"(module (func (export "f") (param i32)
        loop $l
          local.get 0
          i32.const 1
          i32.sub
          local.tee 0
          br_if $l
        end))"#;
    let a = analysis(src, "p no_trap f");
    let r = explore(&a, &ExploreBounds::default());
    assert_eq!(r.outcomes[0].outcome, Outcome::Unknown);
    assert!(r.stats.paths_unknown >= 1);

    // The same loop over a concrete counter runs to completion.
    let src = r#"(module (func (export "f") (local i32)
        i32.const 100 local.set 0
        loop $l
          local.get 0 i32.const 1 i32.sub local.tee 0
          br_if $l
        end))"#;
    let a = analysis(src, "p no_trap f");
    assert_eq!(explore(&a, &ExploreBounds::default()).outcomes[0].outcome, Outcome::Valid);
}

#[test]
fn memory_bounds_and_symbolic_addresses() {
    let src = r#"(module (memory 1)
      (func (export "f") (param i32) (result i32)
        local.get 0 i32.const 3 i32.and
        i32.const 42 i32.store8
        local.get 0 i32.const 65535 i32.and
        i32.load8_u))"#;
    let a = analysis(src, "p no_trap f");
    let ex = a.explore_detailed(&ExploreBounds::default());
    // 4 concretized store addresses, then the load address is unbounded.
    assert_eq!(ex.report.outcomes[0].outcome, Outcome::Unknown);

    let src = r#"(module (memory 1)
      (func (export "f") (param i32) (result i32)
        local.get 0 i32.const 65533 i32.add
        i32.load))"#;
    let a = analysis(src, "p no_trap f");
    let o = outcome(&a, "p");
    assert_eq!(o.outcome, Outcome::Violated);
    let w = o.witness.unwrap();
    assert_eq!(w.trap, TrapKind::MemoryOutOfBounds);
    let r = run_concrete(a.module(), "f", &[w.args[0] as i64], 100).unwrap();
    assert!(r.is_trap());
}

#[test]
fn memory_roundtrip_through_store_and_load() {
    let src = format!(
        r#"(module {ASSERT_IMPORT} (memory 1)
      (func (export "f") (param i32)
        i32.const 8 local.get 0 i32.store16
        i32.const 8 i32.load16_s
        local.get 0 i32.const 16 i32.shl i32.const 16 i32.shr_s
        i32.eq call $assert))"#
    );
    let a = analysis(&src, "p assertion_unreachable f");
    assert_eq!(outcome(&a, "p").outcome, Outcome::Valid);
}

#[test]
fn calls_globals_and_indirect_calls() {
    let src = format!(
        r#"(module {ASSERT_IMPORT}
      (type $t (func (param i32) (result i32)))
      (global $g (mut i32) (i32.const 3))
      (table funcref (elem $inc $dbl))
      (func $inc (param i32) (result i32) local.get 0 i32.const 1 i32.add)
      (func $dbl (param i32) (result i32) local.get 0 i32.const 2 i32.mul)
      (func (export "f") (param i32)
        global.get $g
        local.get 0 i32.const 1 i32.and
        call_indirect (type $t)
        global.set $g
        global.get $g i32.const 4 i32.ne
        call $assert))"#
    );
    let a = analysis(&src, "p assertion_unreachable f");
    let o = outcome(&a, "p");
    assert_eq!(o.outcome, Outcome::Violated);
    assert_eq!(o.witness.unwrap().args[0] & 1, 0);
}

#[test]
fn recursion_exhausts_call_stack() {
    let src = r#"(module (func $r (export "f") call $r))"#;
    let a = analysis(src, "p no_trap f");
    let o = outcome(&a, "p");
    assert_eq!(o.outcome, Outcome::Violated);
    assert_eq!(o.witness.unwrap().trap, TrapKind::CallStackExhausted);
}

#[test]
fn start_function_runs_first() {
    let src = r#"(module (global $g (mut i32) (i32.const 0))
      (func $init i32.const 0 global.set $g)
      (start $init)
      (func (export "f") (result i32) i32.const 1 global.get $g i32.div_u))"#;
    let a = analysis(src, "p no_trap f");
    let o = outcome(&a, "p");
    assert_eq!(o.outcome, Outcome::Violated);
    assert_eq!(o.witness.unwrap().trap, TrapKind::DivByZero);
}

#[test]
fn br_table_cases_are_separate_paths() {
    let src = r#"(module (func (export "f") (param i32) (result i32)
      block block block
        local.get 0 br_table 0 1 2
      end
      i32.const 10 return
      end
      i32.const 20 return
      end
      i32.const 30))"#;
    let a = analysis(src, "p no_trap f");
    let ex = a.explore_detailed(&ExploreBounds::default());
    assert_eq!(ex.report.stats.paths_completed, 3);
    let returns: Vec<i64> = (0..4)
        .map(|x| match run_concrete(a.module(), "f", &[x], 100).unwrap() {
            TraceResult::Terminated(v) => v[0].bits() as i64,
            _ => -1,
        })
        .collect();
    assert_eq!(returns, vec![10, 20, 30, 30]);
}

#[test]
fn path_bound_makes_outcome_unknown() {
    let src = r#"(module (func (export "f") (param i32 i32)
        local.get 0 if end
        local.get 1 if end))"#;
    let a = analysis(src, "p no_trap f");
    let tight = ExploreBounds {
        max_paths: 2,
        ..ExploreBounds::default()
    };
    let r = explore(&a, &tight);
    assert!(r.stats.path_bound_hit);
    assert_eq!(r.outcomes[0].outcome, Outcome::Unknown);
    assert_eq!(explore(&a, &ExploreBounds::default()).stats.paths_completed, 4);
}

#[test]
fn dependencies_follow_data_and_control() {
    let src = r#"(module (global $g (mut i32) (i32.const 0))
      (func (export "f") (param i32) (local i32 i32)
        local.get 0 local.set 1
        local.get 0
        if i32.const 5 local.set 2 end))"#;
    let a = analysis(src, "p no_trap f");
    let ex = a.explore_detailed(&ExploreBounds::default());
    let func = a.module().exported_function("f").unwrap();
    let l = |index| Vertex::Local { func, index };
    let d1 = dependencies_of(&ex.graph, l(1)).unwrap();
    assert_eq!(d1, std::collections::BTreeSet::from([(l(0), DepKind::Data)]));
    let d2 = dependencies_of(&ex.graph, l(2)).unwrap();
    assert!(d2.contains(&(l(0), DepKind::Control)));
    assert!(!d2.contains(&(l(0), DepKind::Data)));
    assert!(dependencies_of(&ex.graph, Vertex::Global(0)).is_err());
    let mut g = SemanticGraph::new();
    g.add_vertex(Vertex::Global(0));
    assert!(dependencies_of(&g, Vertex::Global(0)).unwrap().is_empty());
}

#[test]
fn completed_paths_of_loop_free_code_are_disjoint() {
    let src = r#"(module (func (export "f") (param i32 i32) (result i32)
        local.get 0 i32.const 10 i32.lt_u
        if (result i32)
          local.get 1 i32.const 3 i32.rem_u
        else
          local.get 1 local.get 0 i32.gt_s
          if (result i32) i32.const 1 else i32.const 2 end
        end))"#;
    let a = analysis(src, "p no_trap f");
    let ex = a.explore_detailed(&ExploreBounds::default());
    assert_eq!(ex.paths.len(), 3);
    for (i, p) in ex.paths.iter().enumerate() {
        for q in &ex.paths[i + 1..] {
            let mut both = p.path_condition.clone();
            for c in q.path_condition.conjuncts() {
                both.push(c.expr.clone(), c.nonzero);
            }
            assert_eq!(crate::solver::check_sat(&both, &Default::default()), SatResult::Unsat);
        }
    }
}

#[test]
fn select_builds_ite() {
    let src = r#"(module (func (export "f") (param i32) (result i32)
        i32.const 1 i32.const 2 local.get 0 select))"#;
    let a = analysis(src, "p no_trap f");
    let ex = a.explore_detailed(&ExploreBounds::default());
    assert_eq!(ex.paths.len(), 1);
    let _ = SymExpr::constant(32, 0);
}
