use std::path::PathBuf;

use proptest::prelude::*;
use serde_json::{json, Value};

use tipsprof_core::cfg_model::{block_wcet, load_task_system, TaskCfg};
use tipsprof_core::synth::{self, CfgShape};
use tipsprof_core::{Error, Violation};

fn fixture(name: &str) -> Value {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name]
        .iter()
        .collect();
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn load(doc: &Value) -> Result<(), Error> {
    load_task_system(&doc.to_string()).map(|_| ())
}

fn violation(doc: &Value) -> Violation {
    match load(doc) {
        Err(Error::Validation { violation, .. }) => violation,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

fn shape() -> CfgShape {
    CfgShape {
        max_blocks: 12,
        max_loops: 3,
        ..CfgShape::default()
    }
}

proptest! {
    #[test]
    fn document_round_trip(seed in any::<u64>()) {
        let doc = synth::random_task(&mut synth::rng(seed), "t", &shape());
        let cfg = TaskCfg::from_document(&doc).unwrap();
        let again = TaskCfg::from_document(&cfg.to_document()).unwrap();
        prop_assert_eq!(cfg.to_document(), again.to_document());
        let text = serde_json::to_string(&doc).unwrap();
        prop_assert_eq!(&serde_json::from_str::<tipsprof_core::cfg_model::TaskDoc>(&text).unwrap(), &doc);
    }

    #[test]
    fn loops_form_a_forest(seed in any::<u64>()) {
        let cfg = TaskCfg::from_document(&synth::random_task(&mut synth::rng(seed), "t", &shape())).unwrap();
        let loops = cfg.loops();
        for (i, l) in loops.iter().enumerate() {
            prop_assert!(l.contains(l.header));
            prop_assert_eq!(cfg.loop_headed_by(l.header), Some(i));
            prop_assert!(l.min_iter <= l.max_iter && l.max_iter >= 1);
            for &(s, d) in &l.back_edges {
                prop_assert!(l.contains(s) && d == l.header);
            }
            if let Some(p) = cfg.loop_parent(i) {
                prop_assert!(loops[p].members.is_superset(&l.members));
                prop_assert!(loops[p].members.len() > l.members.len());
            }
            for (j, m) in loops.iter().enumerate().skip(i + 1) {
                let disjoint = l.members.is_disjoint(&m.members);
                let nested = l.members.is_subset(&m.members) || m.members.is_subset(&l.members);
                prop_assert!(disjoint || nested, "loops {} and {} overlap", i, j);
            }
        }
        for b in 0..cfg.blocks().len() {
            let nest = cfg.loop_nest(b);
            // outermost first, each level inside the previous one
            for w in nest.windows(2) {
                prop_assert!(loops[w[0]].members.is_superset(&loops[w[1]].members));
            }
            let containing = loops.iter().filter(|l| l.contains(b)).count();
            prop_assert_eq!(nest.len(), containing);
        }
    }

    #[test]
    fn entries_only_through_headers(seed in any::<u64>()) {
        let cfg = TaskCfg::from_document(&synth::random_task(&mut synth::rng(seed), "t", &shape())).unwrap();
        for l in cfg.loops() {
            for &(s, d) in cfg.edges() {
                if !l.contains(s) && l.contains(d) {
                    prop_assert_eq!(d, l.header);
                }
            }
        }
    }
}

#[test]
fn block_wcet_of_fixture_blocks() {
    let sys = load_task_system(&fixture("loop_branches.json").to_string()).unwrap();
    let cfg = &sys.tasks[0];
    let wcets: Vec<_> = cfg
        .blocks()
        .iter()
        .map(|b| (b.id.as_str(), block_wcet(b)))
        .collect();
    assert_eq!(
        wcets,
        [("E", 6), ("H", 3), ("L", 26), ("R", 46), ("J", 2), ("X", 9)]
    );
}

#[test]
fn fixtures_all_load() {
    for name in [
        "straight_line.json",
        "loop_branches.json",
        "diamond.json",
        "tipfree_loop.json",
        "loop_minmax.json",
        "nested.json",
        "sched_overlap.json",
        "sched_same_core.json",
        "sched_disjoint.json",
    ] {
        load(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn inverted_bounds_named_in_message() {
    let mut doc = fixture("loop_branches.json");
    doc["tasks"][0]["loops"][0]["min_iter"] = json!(3);
    let err = load(&doc).unwrap_err();
    assert!(err.to_string().contains("inverted loop bounds"), "{err}");
    assert_eq!(
        violation(&doc),
        Violation::InvertedLoopBounds { min: 3, max: 2 }
    );
}

#[test]
fn malformed_loop_declarations() {
    let base = fixture("loop_branches.json");
    type Case = (
        &'static str,
        Box<dyn Fn(&mut Value)>,
        fn(&Violation) -> bool,
    );
    let cases: Vec<Case> = vec![
        (
            "zero max_iter",
            Box::new(|d| d["tasks"][0]["loops"][0]["max_iter"] = json!(0)),
            |v| matches!(v, Violation::ZeroMaxIter),
        ),
        (
            "missing back edge",
            Box::new(|d| d["tasks"][0]["loops"][0]["back_edges"] = json!([])),
            |v| matches!(v, Violation::NoBackEdge),
        ),
        (
            "wrong exit edges",
            Box::new(|d| d["tasks"][0]["loops"][0]["exit_edges"] = json!([["J", "H"]])),
            |v| matches!(v, Violation::BadExitEdge(..) | Violation::ExitEdgesMismatch),
        ),
        (
            "header outside members",
            Box::new(|d| d["tasks"][0]["loops"][0]["members"] = json!(["L", "R", "J"])),
            |v| matches!(v, Violation::HeaderNotMember),
        ),
        (
            "side entry",
            Box::new(|d| {
                d["tasks"][0]["edges"]
                    .as_array_mut()
                    .unwrap()
                    .push(json!(["E", "L"]));
            }),
            |v| matches!(v, Violation::SideEntry(..) | Violation::ExitEdgesMismatch),
        ),
        (
            "undeclared loop",
            Box::new(|d| d["tasks"][0]["loops"] = json!([])),
            |v| matches!(v, Violation::IrreducibleCycle),
        ),
        (
            "unreachable block",
            Box::new(|d| {
                d["tasks"][0]["blocks"].as_array_mut().unwrap().push(json!({
                    "id": "Z", "instructions": [{"id": "z", "wcet": 1, "mem_class": "NonMemory"}]
                }));
                d["tasks"][0]["edges"]
                    .as_array_mut()
                    .unwrap()
                    .push(json!(["Z", "X"]));
            }),
            |v| matches!(v, Violation::Unreachable),
        ),
        (
            "unknown block",
            Box::new(|d| {
                d["tasks"][0]["edges"]
                    .as_array_mut()
                    .unwrap()
                    .push(json!(["E", "Q"]));
            }),
            |v| matches!(v, Violation::UnknownBlock(b) if b == "Q"),
        ),
        (
            "duplicate edge",
            Box::new(|d| {
                d["tasks"][0]["edges"]
                    .as_array_mut()
                    .unwrap()
                    .push(json!(["E", "H"]));
            }),
            |v| matches!(v, Violation::DuplicateEdge(..)),
        ),
        (
            "tip without accesses",
            Box::new(|d| d["tasks"][0]["blocks"][0]["instructions"][1]["max_accesses"] = json!(0)),
            |v| matches!(v, Violation::AccessCountMismatch),
        ),
        (
            "zero access time",
            Box::new(|d| d["config"]["access_time"] = json!(0)),
            |v| matches!(v, Violation::ConfigField("access_time")),
        ),
        (
            "unknown placed task",
            Box::new(|d| d["placements"] = json!([{"task": "nope", "core": 0}])),
            |v| matches!(v, Violation::Placement(_)),
        ),
    ];
    for (what, mutate, expected) in cases {
        let mut doc = base.clone();
        mutate(&mut doc);
        let v = violation(&doc);
        assert!(expected(&v), "{what}: got {v:?}");
    }
}

#[test]
fn structural_errors_are_parse_errors() {
    let mut doc = fixture("diamond.json");
    doc["tasks"][0]["blocks"][0]["instructions"][0]["mem_class"] = json!("Sometimes");
    assert!(matches!(load(&doc), Err(Error::Parse(_))));

    let mut doc = fixture("diamond.json");
    doc["tasks"][0]["colour"] = json!("red");
    assert!(matches!(load(&doc), Err(Error::Parse(_))));

    assert!(matches!(load_task_system("{"), Err(Error::Parse(_))));
}
