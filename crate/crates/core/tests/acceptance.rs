//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use tipsprof_core::cfg_model::TaskCfg;
use tipsprof_core::pipeline::{Context, Overrides};
use tipsprof_core::scheduler::{interference_on_layout, Placement};
use tipsprof_core::segments::{
    fusion, refine_task, refine_traces, replay_check, segments_of_trace, Segment, SegmentSequence,
};
use tipsprof_core::synth::{self, CfgShape};
use tipsprof_core::tipsgraph::verify::verify_edge_bounds;
use tipsprof_core::trace_enum::verify::check_conservativeness;
use tipsprof_core::{
    build_schedule, build_tipsgraph, enumerate_traces, load_task_system, verify_schedule,
    AnalysisConfig, Execution, ScheduleMode, TraceId,
};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn read(name: &str) -> Vec<u8> {
    std::fs::read(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn random_config() -> AnalysisConfig {
    AnalysisConfig::new(10, 20, 100_000)
}

/// The shared random CFG corpus of criteria 3 and 4.
fn random_cfgs(seed: u64, n: usize) -> Vec<TaskCfg> {
    let mut rng = synth::rng(seed);
    (0..n)
        .map(|k| {
            let doc = synth::random_task(&mut rng, &format!("r{k}"), &CfgShape::default());
            TaskCfg::from_document(&doc).expect("generated CFGs are valid")
        })
        .collect()
}

fn straight_line_dates() -> Outcome {
    let sys = load_task_system(std::str::from_utf8(&read("straight_line.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let tg = build_tipsgraph(&sys.tasks[0], &sys.config).map_err(|e| e.to_string())?;
    let ts = enumerate_traces(&tg, &sys.config).map_err(|e| e.to_string())?;
    ensure(ts.len() == 1, || format!("{} traces", ts.len()))?;
    let dates: Vec<u64> = ts.traces[0].elements.iter().map(|e| e.date).collect();
    ensure(dates == [0, 5, 693, 707], || format!("dates {dates:?}"))?;
    Ok(format!("dates {dates:?}"))
}

fn loop_branches_count() -> Outcome {
    let sys = load_task_system(std::str::from_utf8(&read("loop_branches.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let tg = build_tipsgraph(&sys.tasks[0], &sys.config).map_err(|e| e.to_string())?;
    let ts = enumerate_traces(&tg, &sys.config).map_err(|e| e.to_string())?;
    // 1 + 2 + 2^2 branch choices for 0, 1 and 2 iterations
    ensure(ts.len() == 7, || format!("{} traces", ts.len()))?;
    Ok("7 traces".into())
}

fn edge_bound_suite() -> Outcome {
    let config = random_config();
    let mut rng = synth::rng(0x5eed);
    let mut paths = 0;
    let mut mutations = 0;
    for (k, cfg) in random_cfgs(1, 100).iter().enumerate() {
        let tg = build_tipsgraph(cfg, &config).map_err(|e| format!("case {k}: {e}"))?;
        let report = verify_edge_bounds(cfg, &tg, &config, u64::MAX)
            .map_err(|e| format!("case {k}: {e}"))?;
        if let Some(v) = report.violations.first() {
            return Err(format!("case {k}: {v}"));
        }
        paths += report.checked_paths;

        let candidates: Vec<_> = tg.edges().iter().filter(|e| e.w > 0).copied().collect();
        if let Some(e) = candidates.choose(&mut rng) {
            let mut bad = tg.clone();
            bad.set_weight(e.src, e.dst, e.w - 1);
            let r = verify_edge_bounds(cfg, &bad, &config, u64::MAX).map_err(|e| e.to_string())?;
            ensure(!r.ok(), || {
                format!("case {k}: decremented weight not detected")
            })?;
            mutations += 1;
        }
    }
    ensure(mutations > 0, || "no mutable edge in the corpus".into())?;
    Ok(format!(
        "100 CFGs, {paths} paths, {mutations} mutations detected"
    ))
}

fn conservativeness_suite() -> Outcome {
    let config = random_config();
    let mut paths = 0;
    for (k, cfg) in random_cfgs(1, 100).iter().enumerate() {
        let tg = build_tipsgraph(cfg, &config).map_err(|e| format!("case {k}: {e}"))?;
        let ts = enumerate_traces(&tg, &config).map_err(|e| format!("case {k}: {e}"))?;
        let r = check_conservativeness(cfg, &ts, &config, u64::MAX)
            .map_err(|e| format!("case {k}: {e}"))?;
        if let Some(v) = r.violations.first() {
            return Err(format!("case {k}: {v}"));
        }
        paths += r.concrete_paths;
    }
    Ok(format!("100 CFGs, {paths} concrete paths"))
}

fn segmentation_oracle() -> Outcome {
    let sys = load_task_system(std::str::from_utf8(&read("straight_line.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let tg = build_tipsgraph(&sys.tasks[0], &sys.config).map_err(|e| e.to_string())?;
    let ts = enumerate_traces(&tg, &sys.config).map_err(|e| e.to_string())?;
    let s = segments_of_trace(&ts.traces[0], TraceId(0), ts.d_max, &sys.config)
        .map_err(|e| e.to_string())?;
    let got: Vec<(u64, u64, u64)> = s
        .segments
        .iter()
        .map(|x| (x.start, x.dur, x.max_access()))
        .collect();
    let want = [
        (0, 5, 0),
        (5, 10, 1),
        (15, 678, 0),
        (693, 10, 1),
        (703, 4, 0),
    ];
    ensure(got == want, || format!("{got:?}"))?;
    Ok(format!("{got:?}"))
}

fn segment_replay_suite() -> Outcome {
    let config = random_config();
    let mut rng = synth::rng(2);
    let mut segments = 0;
    for k in 0..100 {
        let doc = synth::random_task(&mut rng, &format!("s{k}"), &CfgShape::default());
        let cfg = TaskCfg::from_document(&doc).map_err(|e| e.to_string())?;
        let tg = build_tipsgraph(&cfg, &config).map_err(|e| e.to_string())?;
        let ts = enumerate_traces(&tg, &config).map_err(|e| e.to_string())?;
        let refined = refine_task(&ts, &config, Execution::Parallel).map_err(|e| e.to_string())?;
        let fused = fusion(&refined, config.delta);
        if let Some(v) = replay_check(&ts, &refined, &fused, &config).first() {
            return Err(format!("case {k}: {v}"));
        }
        segments += fused.segments.len();
    }
    Ok(format!("100 tasks, {segments} fused segments"))
}

fn order_independence_suite() -> Outcome {
    let config = random_config();
    let mut rng = synth::rng(3);
    for k in 0..50 {
        let ts = synth::random_trace_set(&mut rng, 6, config.access_time);
        let mut items: Vec<_> = ts
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| (TraceId(i as u32), t))
            .collect();
        let reference = fusion(
            &refine_traces(&items, ts.d_max, &config, Execution::Sequential)
                .map_err(|e| e.to_string())?,
            config.delta,
        );
        for round in 0..5 {
            items.shuffle(&mut rng);
            let exec = if round % 2 == 0 {
                Execution::Parallel
            } else {
                Execution::Sequential
            };
            let other = fusion(
                &refine_traces(&items, ts.d_max, &config, exec).map_err(|e| e.to_string())?,
                config.delta,
            );
            ensure(other == reference, || {
                format!("set {k}: permutation changed the profile")
            })?;
        }
    }
    Ok("50 trace sets x 5 permutations".into())
}

fn scheduler_fixed_point() -> Outcome {
    let mut config = AnalysisConfig::new(10, 0, 100);
    config.bus_access_latency = 10;
    let one = |dur: u64, acc: u64| SegmentSequence {
        segments: vec![Segment::new(0, dur, [(TraceId(0), acc)].into())],
        d_max: dur,
    };
    let place = |task: &str, core: usize, release: u64| Placement {
        task: task.into(),
        core,
        release,
    };
    let profiles: BTreeMap<String, SegmentSequence> = [
        ("a".to_string(), one(100, 3)),
        ("b".to_string(), one(100, 5)),
    ]
    .into();

    let sch = build_schedule(
        &profiles,
        &[place("a", 0, 0), place("b", 1, 0)],
        &config,
        ScheduleMode::Inflate,
    )
    .map_err(|e| e.to_string())?;
    for s in sch.segments() {
        ensure(s.inflation == 30 && s.start == 0 && s.end() == 130, || {
            format!(
                "{}: inflation {} window [{}, {})",
                s.task,
                s.inflation,
                s.start,
                s.end()
            )
        })?;
    }
    ensure(verify_schedule(&sch).is_empty(), || {
        "verify_schedule reported violations".into()
    })?;
    ensure(interference_on_layout(&sch) == vec![30, 30], || {
        "not a fixed point".into()
    })?;

    let same = build_schedule(
        &profiles,
        &[place("a", 0, 0), place("b", 0, 0)],
        &config,
        ScheduleMode::Inflate,
    )
    .map_err(|e| e.to_string())?;
    ensure(same.segments().all(|s| s.inflation == 0), || {
        "same-core inflation".into()
    })?;
    let short: BTreeMap<String, SegmentSequence> =
        [("a".to_string(), one(10, 7)), ("b".to_string(), one(10, 9))].into();
    let disjoint = build_schedule(
        &short,
        &[place("a", 0, 0), place("b", 1, 20)],
        &config,
        ScheduleMode::Inflate,
    )
    .map_err(|e| e.to_string())?;
    ensure(disjoint.segments().all(|s| s.inflation == 0), || {
        "disjoint inflation".into()
    })?;

    // the same three situations end to end from fixtures
    for (name, expect) in [
        ("sched_overlap.json", 30),
        ("sched_same_core.json", 0),
        ("sched_disjoint.json", 0),
    ] {
        let ctx = Context::from_bytes(&read(name), &Overrides::default(), Execution::Sequential)
            .map_err(|e| format!("{name}: {e}"))?;
        let sch = ctx
            .schedule(ScheduleMode::Inflate)
            .map_err(|e| format!("{name}: {e}"))?
            .content;
        ensure(sch.segments().all(|s| s.inflation == expect), || {
            format!("{name}: unexpected inflation")
        })?;
        ensure(verify_schedule(&sch).is_empty(), || {
            format!("{name}: violations")
        })?;
    }
    Ok("inflation 30/30, windows [0, 130); same-core and disjoint 0".into())
}

fn determinism() -> Outcome {
    let mut names: Vec<String> = std::fs::read_dir(fixture(""))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    for name in &names {
        let bytes = read(name);
        let run = |exec: Execution| -> Result<Vec<u8>, String> {
            let ctx = Context::from_bytes(&bytes, &Overrides::default(), exec)
                .map_err(|e| e.to_string())?;
            let art = ctx
                .analyze(ScheduleMode::Inflate)
                .map_err(|e| e.to_string())?;
            let mut out = serde_json::to_vec(&art).unwrap();
            out.extend(serde_json::to_vec(&ctx.segments().unwrap()).unwrap());
            out.extend(serde_json::to_vec(&ctx.schedule(ScheduleMode::Inflate).unwrap()).unwrap());
            Ok(out)
        };
        let a = run(Execution::Parallel).map_err(|e| format!("{name}: {e}"))?;
        let b = run(Execution::Parallel).map_err(|e| format!("{name}: {e}"))?;
        let c = run(Execution::Sequential).map_err(|e| format!("{name}: {e}"))?;
        ensure(a == b && a == c, || format!("{name}: outputs differ"))?;
    }
    Ok(format!("{} fixtures", names.len()))
}

type Check = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Check; 9] = [
        (
            "straight-line trace dates",
            straight_line_dates,
            Duration::from_secs(1),
        ),
        (
            "loop-branches trace count",
            loop_branches_count,
            Duration::from_secs(1),
        ),
        (
            "edge-weight bound oracle suite",
            edge_bound_suite,
            Duration::from_secs(30),
        ),
        (
            "trace-date conservativeness",
            conservativeness_suite,
            Duration::from_secs(30),
        ),
        (
            "single-trace segmentation oracle",
            segmentation_oracle,
            Duration::from_secs(1),
        ),
        (
            "segment invariant replay",
            segment_replay_suite,
            Duration::from_secs(30),
        ),
        (
            "intersection order independence",
            order_independence_suite,
            Duration::from_secs(30),
        ),
        (
            "scheduler fixed point",
            scheduler_fixed_point,
            Duration::from_secs(5),
        ),
        ("determinism", determinism, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => {
                Err(format!("{detail}; took {elapsed:?} > {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}; {elapsed:.2?})", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
