//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use leakaudit::audit::{AuditConfig, Auditor, BlockingRule, ExclusionMode, ModelVerdict};
use leakaudit::explain::{certify, is_fully_open, minimal_explanation, DeletionOrder, Explanation};
use leakaudit::genbench::{from_qbf, random_model, random_qbf, GenKind, ShapeParams};
use leakaudit::interchange::{parse_model, serialize, Instance};
use leakaudit::model::{tutor_example, DecisionLabel, Individual, LiteralSet};
use leakaudit::oracle::{
    bf_leak_table, bf_lppae_exists, label_table, min_explanations_from_table, OracleBudget,
};
use leakaudit::sat::{encode, SatOracle, SolverConfig};

const MODES: [ExclusionMode; 2] = [ExclusionMode::Theorem, ExclusionMode::Strict];
const CORPUS: u64 = 210;
const QBFS: u64 = 120;

#[derive(Default)]
struct Tally {
    checks: u64,
    failures: Vec<String>,
    failed: u64,
    elapsed: Duration,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failed += 1;
            if self.failures.len() < 5 {
                self.failures.push(what());
            }
        }
    }
}

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    failures: Vec<String>,
}

fn outcome(name: &'static str, t: &Tally, limit: Option<Duration>, extra: String) -> Outcome {
    let in_time = limit.is_none_or(|l| t.elapsed < l);
    let mut detail = format!(
        "{} checks, {} failed, {:.2?}",
        t.checks, t.failed, t.elapsed
    );
    if let Some(l) = limit {
        detail.push_str(&format!(" (limit {l:?})"));
    }
    if !extra.is_empty() {
        detail.push_str("; ");
        detail.push_str(&extra);
    }
    let mut failures = t.failures.clone();
    if !in_time {
        failures.push("time limit exceeded".into());
    }
    Outcome {
        name,
        pass: t.failed == 0 && t.checks > 0 && in_time,
        detail,
        failures,
    }
}

fn mask(x: &Individual) -> u64 {
    x.values()
        .iter()
        .enumerate()
        .fold(0, |m, (f, &b)| m | (b as u64) << f)
}

/// Brute-force minimal explanations, cached per individual.
struct Enumerated {
    labels: Vec<DecisionLabel>,
    n: usize,
    cache: HashMap<u64, BTreeSet<LiteralSet>>,
}

impl Enumerated {
    fn new(inst: &Instance) -> Self {
        Enumerated {
            labels: label_table(&inst.model, OracleBudget::default()).unwrap(),
            n: inst.space.len(),
            cache: HashMap::new(),
        }
    }

    fn of(&mut self, x: &Individual) -> &BTreeSet<LiteralSet> {
        let (labels, n) = (&self.labels, self.n);
        self.cache
            .entry(mask(x))
            .or_insert_with(|| min_explanations_from_table(labels, n, x))
    }
}

fn auditor<'a>(inst: &'a Instance, mode: ExclusionMode, blocking: BlockingRule) -> Auditor<'a> {
    let config = AuditConfig {
        mode,
        blocking,
        ..AuditConfig::default()
    };
    Auditor::new(
        &inst.model,
        &inst.partition,
        Arc::new(encode(&inst.model).unwrap()),
        SolverConfig::default(),
        config,
    )
}

fn checker(inst: &Instance) -> SatOracle {
    SatOracle::new(
        Arc::new(encode(&inst.model).unwrap()),
        SolverConfig::default(),
    )
}

/// Validity, minimality probe and membership in the enumerated set of `owner`.
fn check_explanation(
    t: &mut Tally,
    oracle: &mut SatOracle,
    enumerated: &mut Enumerated,
    e: &Explanation,
    owner: &Individual,
    tag: &str,
) {
    let certified = certify(oracle, e).unwrap();
    t.check(certified && e.minimal, || {
        format!("{tag}: explanation failed certification")
    });
    let member =
        e.literals.is_subset(&owner.literals()) && enumerated.of(owner).contains(&e.literals);
    t.check(member, || {
        format!("{tag}: explanation not in the enumerated minimal set")
    });
}

fn check_progress(t: &mut Tally, inst: &Instance, v: &ModelVerdict, tag: &str) {
    let n_sensitive = 1u64 << (inst.space.len() - 1);
    let classes = (1u64 << inst.partition.open_count()) * inst.model.labels().len() as u64;
    t.check(v.iterations <= n_sensitive.min(classes), || {
        format!(
            "{tag}: {} iterations exceed min({n_sensitive}, {classes})",
            v.iterations
        )
    });
    let expected = v.cover.len() as u64 + v.leaks as u64;
    t.check(v.iterations == expected, || {
        format!("{tag}: iteration count {} != {expected}", v.iterations)
    });
    for (i, c) in v.cover.iter().enumerate() {
        let fresh = v.cover[..i]
            .iter()
            .all(|p| !p.block.blocks(&c.representative, &inst.model));
        t.check(fresh, || {
            format!("{tag}: representative {i} was already blocked")
        });
        t.check(c.block.blocks(&c.representative, &inst.model), || {
            format!("{tag}: representative {i} escapes its own block")
        });
        t.check(inst.partition.is_sensitive(&c.representative), || {
            format!("{tag}: representative {i} not sensitive")
        });
    }
    if let Some(x) = &v.counterexample {
        let fresh = v.cover.iter().all(|p| !p.block.blocks(x, &inst.model));
        t.check(fresh, || format!("{tag}: counterexample was blocked"));
    }
}

fn goldens() -> Tally {
    let start = Instant::now();
    let mut t = Tally::default();
    let (space, p, m) = tutor_example();
    let inst = Instance::new(space.clone(), p.clone(), m);
    let ind = |bits: [u8; 4]| Individual::new(bits.iter().map(|&b| b == 1).collect());
    let tata = ind([1, 0, 1, 1]);
    let toto = ind([1, 1, 1, 1]);
    let tintin = ind([0, 1, 1, 1]);
    let tete = ind([0, 1, 1, 0]);
    let tonton = ind([1, 1, 1, 0]);
    for mode in MODES {
        let mut a = auditor(&inst, mode, BlockingRule::OpenAndDecision);
        let tag = format!("{mode:?}");
        t.check(a.audit_individual(&tata).unwrap().leaks, || {
            format!("{tag}: Tata should leak")
        });
        for (name, x) in [("Toto", &toto), ("Tintin", &tintin), ("Tete", &tete)] {
            t.check(!a.audit_individual(x).unwrap().leaks, || {
                format!("{tag}: {name} should not leak")
            });
        }
        let v = a.audit_individual(&tonton).unwrap();
        let lppae = v.lppae.clone();
        t.check(!v.leaks && lppae.is_some(), || {
            format!("{tag}: Tonton needs an LPPAE")
        });
        if let Some(e) = lppae {
            let open: BTreeSet<usize> = [0, 1].into();
            let open_ok = e.literals.open_part(&p).features().is_subset(&open);
            let excludes = !e.literals.contains(p.protected_literal());
            t.check(open_ok && excludes, || {
                format!(
                    "{tag}: Tonton LPPAE {} malformed",
                    e.literals.render(&space)
                )
            });
            t.check(a.is_lppae_for(&e, &tonton).unwrap(), || {
                format!("{tag}: Tonton LPPAE fails the LPPAE checks")
            });
        }
        let mv = a.audit_model().unwrap();
        let open = mv
            .counterexample
            .as_ref()
            .map(|x| x.open_profile(&p).render(&space));
        t.check(mv.leaks && open.as_deref() == Some("E ∧ ¬D"), || {
            format!("{tag}: model counterexample open profile {open:?}, expected E ∧ ¬D")
        });
    }
    t.elapsed = start.elapsed();
    t
}

fn corpus_instance(i: u64) -> Instance {
    let kind = GenKind::ALL[(i % 3) as usize];
    let n = 3 + (i / 3 % 8) as usize;
    let shape = ShapeParams {
        labels: if kind == GenKind::Formula {
            2
        } else {
            2 + (i / 24 % 2) as usize
        },
        hidden_units: (i / 7 % 3) as usize,
        ..ShapeParams::default()
    };
    random_model(0x5eed_0000 + i, n, kind, shape).unwrap()
}

struct CorpusTallies {
    agreement: Tally,
    explanations: Tally,
    fully_open: Tally,
    transfer: Tally,
    progress: Tally,
    kinds: BTreeSet<String>,
    leaking_models: u64,
    open_only_disagreements: u64,
}

fn corpus() -> CorpusTallies {
    let mut c = CorpusTallies {
        agreement: Tally::default(),
        explanations: Tally::default(),
        fully_open: Tally::default(),
        transfer: Tally::default(),
        progress: Tally::default(),
        kinds: BTreeSet::new(),
        leaking_models: 0,
        open_only_disagreements: 0,
    };
    for i in 0..CORPUS {
        let inst = corpus_instance(i);
        let tag = format!("model {i}");
        c.kinds
            .insert(format!("{:?}", GenKind::ALL[(i % 3) as usize]));
        let mut enumerated = Enumerated::new(&inst);
        let mut oracle = checker(&inst);

        let start = Instant::now();
        let table = bf_leak_table(&inst.model, &inst.partition, OracleBudget::default()).unwrap();
        let bf_model = table.iter().any(|(_, l)| *l);
        c.leaking_models += bf_model as u64;
        c.agreement.elapsed += start.elapsed();

        for mode in MODES {
            let tag = format!("{tag} {mode:?}");
            let mut a = auditor(&inst, mode, BlockingRule::OpenAndDecision);

            let start = Instant::now();
            let mv = a.audit_model().unwrap();
            c.agreement.check(mv.leaks == bf_model, || {
                format!("{tag}: model verdict {} vs oracle {bf_model}", mv.leaks)
            });
            let mut verdicts = Vec::with_capacity(table.len());
            for (x, leaks) in &table {
                let v = a.audit_individual(x).unwrap();
                c.agreement.check(v.leaks == *leaks, || {
                    format!(
                        "{tag}: individual {:?} verdict {} vs oracle {leaks}",
                        x.values(),
                        v.leaks
                    )
                });
                verdicts.push(v);
            }
            c.agreement.elapsed += start.elapsed();

            let start = Instant::now();
            check_progress(&mut c.progress, &inst, &mv, &tag);
            c.progress.elapsed += start.elapsed();

            let start = Instant::now();
            for r in &mv.cover {
                check_explanation(
                    &mut c.explanations,
                    &mut oracle,
                    &mut enumerated,
                    &r.explanation,
                    &r.shield,
                    &tag,
                );
            }
            for v in &verdicts {
                if let (Some(e), Some(shield)) = (&v.lppae, &v.shield) {
                    check_explanation(
                        &mut c.explanations,
                        &mut oracle,
                        &mut enumerated,
                        e,
                        shield,
                        &tag,
                    );
                    if mode == ExclusionMode::Strict && v.annotations.is_empty() {
                        c.explanations
                            .check(!e.literals.mentions(inst.partition.sensitive()), || {
                                format!("{tag}: strict LPPAE mentions the sensitive feature")
                            });
                    }
                }
            }
            c.explanations.elapsed += start.elapsed();

            // Transfer: an LPPAE serves every individual of its class.
            let start = Instant::now();
            for v in &verdicts {
                let Some(e) = &v.lppae else { continue };
                let open = v.subject.open_profile(&inst.partition);
                let peers = table
                    .iter()
                    .map(|(y, _)| y)
                    .filter(|y| {
                        **y != v.subject
                            && y.satisfies(&open)
                            && inst.model.evaluate(y) == v.decision
                    })
                    .take(3);
                for y in peers {
                    let ok = a.is_lppae_for(e, y).unwrap();
                    c.transfer.check(ok, || {
                        format!(
                            "{tag}: LPPAE of {:?} rejected for {:?}",
                            v.subject.values(),
                            y.values()
                        )
                    });
                }
            }
            c.transfer.elapsed += start.elapsed();
        }

        let start = Instant::now();
        let mut b = auditor(&inst, ExclusionMode::Theorem, BlockingRule::OpenOnly);
        if b.audit_model().unwrap().leaks != bf_model {
            c.open_only_disagreements += 1;
        }
        c.agreement.elapsed += start.elapsed();

        // Fully open decisions and the shape of leaking individuals' explanations.
        let start = Instant::now();
        let s = inst.partition.sensitive();
        let mut a = auditor(&inst, ExclusionMode::Theorem, BlockingRule::OpenAndDecision);
        for (x, leaks) in &table {
            if let Some(w) = is_fully_open(&mut oracle, &inst.model, x, &inst.partition).unwrap() {
                check_explanation(
                    &mut c.explanations,
                    &mut oracle,
                    &mut enumerated,
                    &w,
                    x,
                    &tag,
                );
                c.fully_open
                    .check(w.literals.private_part(&inst.partition).is_empty(), || {
                        format!("{tag}: open witness has private literals")
                    });
                let sat_leaks = a.audit_individual(x).unwrap().leaks;
                c.fully_open.check(!leaks && !sat_leaks, || {
                    format!("{tag}: fully open {:?} reported as leaking", x.values())
                });
            }
            if *leaks {
                let all_mention = enumerated.of(x).iter().all(|xp| xp.mentions(s));
                c.fully_open.check(all_mention, || {
                    format!(
                        "{tag}: leaking {:?} has an explanation without s",
                        x.values()
                    )
                });
            }
            if inst.space.len() <= 6 {
                let exists =
                    bf_lppae_exists(&inst.model, &inst.partition, x, OracleBudget::default())
                        .unwrap();
                c.fully_open.check(exists == !leaks, || {
                    format!("{tag}: LPPAE existence disagrees for {:?}", x.values())
                });
            }
            let d = inst.model.evaluate(x);
            let e = minimal_explanation(
                &mut oracle,
                x,
                d,
                &LiteralSet::new(),
                &inst.partition,
                DeletionOrder::PrivateFirst,
            )
            .unwrap()
            .unwrap();
            check_explanation(
                &mut c.explanations,
                &mut oracle,
                &mut enumerated,
                &e,
                x,
                &tag,
            );
        }
        c.fully_open.elapsed += start.elapsed();
    }
    c
}

fn qbf_reduction(progress: &mut Tally) -> (Tally, u64) {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut true_count = 0;
    for i in 0..QBFS {
        let ny = (i % 6) as usize;
        let nz = (i / 6 % 6) as usize;
        let q = random_qbf(0x0b_f000 + i, ny.max(if nz == 0 { 1 } else { 0 }), nz).unwrap();
        let truth = q.brute_force_truth();
        true_count += truth as u64;
        let (inst, expected) = from_qbf(&q, OracleBudget::default()).unwrap();
        t.check(expected == Some(truth), || {
            format!("qbf {i}: reduction reported {expected:?}")
        });
        for mode in MODES {
            let v = auditor(&inst, mode, BlockingRule::OpenAndDecision)
                .audit_model()
                .unwrap();
            t.check(v.leaks == truth, || {
                format!(
                    "qbf {i} {mode:?}: leaks={} but QBF is {truth}\n{}",
                    v.leaks,
                    q.to_text()
                )
            });
            check_progress(progress, &inst, &v, &format!("qbf {i}"));
        }
    }
    t.elapsed = start.elapsed();
    (t, true_count)
}

/// Stand-ins for exported credit models: ~20 features, integer weights.
fn workflow() -> (Tally, Vec<String>) {
    let mut t = Tally::default();
    let mut lines = Vec::new();
    let shapes = [
        (
            "linear",
            ShapeParams {
                max_weight: 16,
                ..ShapeParams::default()
            },
        ),
        (
            "one hidden layer",
            ShapeParams {
                max_weight: 8,
                hidden_units: 4,
                ..ShapeParams::default()
            },
        ),
        (
            "wide weights",
            ShapeParams {
                max_weight: 64,
                hidden_units: 2,
                ..ShapeParams::default()
            },
        ),
    ];
    for (k, (name, shape)) in shapes.into_iter().enumerate() {
        let generated = random_model(0xc4ed17 + k as u64, 20, GenKind::Threshold, shape).unwrap();
        // Round trip through the interchange format, as an exported model would.
        let inst = parse_model(&serialize(&generated)).unwrap();
        let start = Instant::now();
        let v = auditor(&inst, ExclusionMode::Theorem, BlockingRule::OpenAndDecision).audit_model();
        let took = start.elapsed();
        t.elapsed += took;
        match v {
            Ok(v) => {
                t.check(took < Duration::from_secs(60), || {
                    format!("{name}: {took:?}")
                });
                lines.push(format!(
                    "{name}: {} in {:.2?}, {} iteration(s), |V_O| = {}",
                    if v.leaks { "LEAKS" } else { "no leak" },
                    took,
                    v.iterations,
                    inst.partition.open_count()
                ));
                check_progress(&mut Tally::default(), &inst, &v, name);
            }
            Err(e) => t.check(false, || format!("{name}: {e}")),
        }
    }
    (t, lines)
}

fn main() {
    let mut outcomes = Vec::new();

    let g = goldens();
    outcomes.push(outcome(
        "running-example goldens",
        &g,
        Some(Duration::from_secs(1)),
        String::new(),
    ));

    let c = corpus();
    let kinds = c.kinds.iter().cloned().collect::<Vec<_>>().join("/");
    outcomes.push(outcome(
        "oracle agreement",
        &c.agreement,
        Some(Duration::from_secs(300)),
        format!(
            "{CORPUS} models ({kinds}), {} leaking, both modes",
            c.leaking_models
        ),
    ));
    outcomes.push(outcome(
        "explanation contracts",
        &c.explanations,
        None,
        String::new(),
    ));
    outcomes.push(outcome(
        "fully-open and leaking-explanation properties",
        &c.fully_open,
        None,
        String::new(),
    ));
    outcomes.push(outcome(
        "LPPAE transfer within a class",
        &c.transfer,
        None,
        String::new(),
    ));

    let mut progress = c.progress;
    let (l, true_count) = qbf_reduction(&mut progress);
    outcomes.push(outcome(
        "QBF reduction",
        &l,
        Some(Duration::from_secs(120)),
        format!("{QBFS} instances, {true_count} true"),
    ));
    outcomes.push(outcome(
        "progress and termination",
        &progress,
        None,
        String::new(),
    ));

    let (w, lines) = workflow();
    outcomes.push(outcome(
        "~20-feature threshold workflow",
        &w,
        Some(Duration::from_secs(60)),
        lines.join("; "),
    ));

    println!();
    let mut all = true;
    for (i, o) in outcomes.iter().enumerate() {
        println!(
            "{} [{}] {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.name,
            o.detail
        );
        for f in &o.failures {
            println!("      {f}");
        }
        all &= o.pass;
    }
    println!(
        "info: open-literals-only blocking disagreed with the oracle on {} of {CORPUS} models",
        c.open_only_disagreements
    );
    if !all {
        std::process::exit(1);
    }
}
