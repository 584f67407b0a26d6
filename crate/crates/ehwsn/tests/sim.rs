use std::path::PathBuf;

use ehwsn::config::{ChannelMode, ConfigError, ScenarioConfig};
use ehwsn::export::{export_results, write_links, write_summary, LINK_HEADER, SUMMARY_HEADER};
use ehwsn::sim::{Scenario, SlotStatus};
use ehwsn_core::network::half_duplex_schedule;
use ehwsn_core::TransferMode;

fn config(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ScenarioConfig::load(&path).unwrap()
}

fn scenario(name: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = config(name);
    edit(&mut cfg);
    Scenario::new(cfg).unwrap()
}

const CHAIN: &str = r#"
schema_version = 1

[topology]
nodes = 3
data_links = [[1, 0], [2, 1]]
energy_links = [{ from = 2, to = 1 }]

[seeds]
gains = 1
flows = 2
energy = 3
"#;

fn chain(edit: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = ScenarioConfig::parse(CHAIN, "chain.toml".as_ref()).unwrap();
    edit(&mut cfg);
    Scenario::new(cfg).unwrap()
}

#[test]
fn reference_tree_schedules_are_valid() {
    let sc = scenario("round.toml", |_| {});
    let topo = sc.topology();
    assert_eq!(topo.nodes().len(), 15);
    assert_eq!(topo.data_links().len(), 14);
    assert_eq!(topo.energy_links().len(), 20);
    assert_eq!(sc.schedule().slots.len(), 6);
    assert_eq!(sc.schedule().slots[0].data_links.len(), 5);
    sc.schedule().validate(topo).unwrap();

    let generated = half_duplex_schedule(topo);
    generated.validate(topo).unwrap();
    let covered: usize = generated.slots.iter().map(|s| s.data_links.len()).sum();
    assert_eq!(covered, 14);
}

#[test]
fn first_slot_reports_five_consistent_links() {
    let sc = scenario("first_slot.toml", |_| {});
    let out = sc.run_slot(1).unwrap();
    assert_eq!(out.diagnostics.status, SlotStatus::Solved);
    let s = out.solution.as_ref().unwrap();
    assert_eq!(s.power.len(), 5);
    let flows = [0.4585, 0.8752, 0.6869, 0.2313, 0.4887];
    let direct: f64 = flows.iter().zip(&s.sinr).map(|(d, g)| d / (0.5 * g.ln() - d)).sum();
    assert!((direct - out.delay).abs() <= 1e-9, "{direct} vs {}", out.delay);
    assert!(out.diagnostics.kkt.unwrap().max_stationarity <= 1e-5);

    let mut csv = Vec::new();
    write_links(&mut csv, sc.topology(), std::slice::from_ref(&out)).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], LINK_HEADER.join(","));
    assert_eq!(lines.len(), 6);
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels, ["l1", "l8", "l9", "l12", "l13"]);
}

#[test]
fn transfer_and_orthogonality_lower_first_slot_delay() {
    let delay = |ch, tr| {
        scenario("first_slot.toml", |c| {
            c.channel.mode = ch;
            c.transfer.mode = tr;
        })
        .run_slot(1)
        .unwrap()
        .delay
    };
    let ifc_off = delay(ChannelMode::Ifc, TransferMode::Off);
    let ifc_on = delay(ChannelMode::Ifc, TransferMode::On);
    let oc_off = delay(ChannelMode::Oc, TransferMode::Off);
    let oc_on = delay(ChannelMode::Oc, TransferMode::On);
    assert!(ifc_on <= ifc_off + 1e-8);
    assert!(oc_on <= oc_off + 1e-8);
    assert!(oc_off <= ifc_off + 1e-8);
    assert!(oc_on <= ifc_on + 1e-8);
}

#[test]
fn chain_runs_one_slot_per_link() {
    let sc = chain(|_| {});
    assert_eq!(sc.n_slots(), 2);
    let r = sc.run_round();
    assert_eq!(r.slots.len(), 2);
    assert!(r.slots.iter().all(|o| o.problem.n_links() == 1));
    assert!((r.total_delay() - r.slots.iter().map(|o| o.delay).sum::<f64>()).abs() <= 1e-12);
}

#[test]
fn rounds_are_deterministic() {
    let run = || {
        let sc = scenario("round.toml", |c| c.round.slots = Some(12));
        let r = sc.run_round();
        let mut links = Vec::new();
        let mut summary = Vec::new();
        write_links(&mut links, sc.topology(), &r.slots).unwrap();
        write_summary(&mut summary, &r).unwrap();
        (links, summary)
    };
    assert_eq!(run(), run());
}

#[test]
fn flows_hold_within_a_round_and_change_between_rounds() {
    let sc = scenario("round.toml", |c| c.round.slots = Some(12));
    assert_eq!(sc.flows(0), sc.flows(5));
    assert_ne!(sc.flows(0), sc.flows(6));
    assert_ne!(sc.arrivals(0), sc.arrivals(1));
    assert!(sc.flows(0).iter().all(|&d| d > 0.0 && d <= 1.0));
}

#[test]
fn explicit_values_override_samples() {
    let sc = scenario("first_slot.toml", |_| {});
    let topo = sc.topology();
    let link_of = |child: u32| topo.data_links().iter().position(|l| l.child.0 == child).unwrap();
    assert_eq!(sc.flows(0)[link_of(8)], 0.8752);
    let node_of = |id: u32| topo.node_index(ehwsn_core::NodeId(id)).unwrap();
    assert_eq!(sc.arrivals(0).energy()[node_of(11)], 4.0);
    // sampled entries do not depend on which others are explicit
    let sampled = scenario("round.toml", |c| c.seeds.flows = Some(2));
    assert_eq!(sc.flows(0)[link_of(2)], sampled.flows(0)[link_of(2)]);
}

#[test]
fn carry_over_adds_unspent_energy() {
    let plain = chain(|c| c.energy.battery_capacity = 1000.0);
    let carried = chain(|c| {
        c.energy.battery_capacity = 1000.0;
        c.energy.carry_over = true;
    });
    let a = plain.run_round();
    let b = carried.run_round();
    let budget = |r: &ehwsn::RoundResult| r.slots[1].problem.nodes().iter().map(|n| n.energy).sum::<f64>();
    assert!(budget(&b) >= budget(&a));
    assert!(b.total_delay() <= a.total_delay() + 1e-8);
}

#[test]
fn infeasible_slot_records_infinite_delay_and_continues() {
    let sc = chain(|c| {
        c.explicit.energy.insert("v2".into(), 1e-12);
        c.round.slots = Some(4);
    });
    let r = sc.run_round();
    assert_eq!(r.slots.len(), 4);
    let bad = &r.slots[0];
    assert_eq!(bad.diagnostics.status, SlotStatus::Infeasible);
    assert!(bad.delay.is_infinite() && !bad.feasible());
    assert!(bad.diagnostics.message.is_some());
    assert!(r.slots[1].feasible());
    assert!(r.cumulative_delay.iter().all(|c| c.is_infinite()));

    let mut summary = Vec::new();
    write_summary(&mut summary, &r).unwrap();
    let text = String::from_utf8(summary).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1,inf,inf,false,infeasible"));
}

#[test]
fn export_writes_links_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("round.toml", |_| {});
    let r = sc.run_round();
    let links = dir.path().join("run.csv");
    let summary = export_results(&r, sc.topology(), &links).unwrap();
    assert_eq!(summary, dir.path().join("run.summary.csv"));
    let link_rows = std::fs::read_to_string(&links).unwrap().lines().count();
    assert_eq!(link_rows, 1 + 14);
    let summary_text = std::fs::read_to_string(&summary).unwrap();
    assert_eq!(summary_text.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    assert_eq!(summary_text.lines().count(), 1 + sc.n_slots());
}

#[test]
fn sampled_values_need_seeds() {
    let mut cfg = config("round.toml");
    cfg.seeds.gains = None;
    assert!(matches!(Scenario::new(cfg), Err(ConfigError::Invalid(_))));
}

#[test]
fn slot_out_of_range_is_rejected() {
    let sc = chain(|_| {});
    assert!(sc.run_slot(0).is_err());
    assert!(sc.run_slot(3).is_err());
}

#[test]
fn matched_seeds_order_every_slot() {
    for k in 0..5u64 {
        let base = scenario("round.toml", |c| {
            c.seeds.gains = Some(40 + k);
            c.seeds.flows = Some(50 + k);
            c.seeds.energy = Some(60 + k);
        });
        let gap = base.config().solver.gap_tolerance;
        let run = |ch, tr| base.with_channel(ch).with_transfer(tr).run_round();
        let ifc_off = run(ChannelMode::Ifc, TransferMode::Off);
        let ifc_on = run(ChannelMode::Ifc, TransferMode::On);
        let oc_off = run(ChannelMode::Oc, TransferMode::Off);
        let oc_on = run(ChannelMode::Oc, TransferMode::On);
        for t in 0..base.n_slots() {
            let d = |r: &ehwsn::RoundResult| r.slots[t].delay;
            assert!(d(&ifc_on) <= d(&ifc_off) + gap, "seed {k} slot {t}");
            assert!(d(&oc_on) <= d(&oc_off) + gap, "seed {k} slot {t}");
            assert!(d(&oc_off) <= d(&ifc_off) + gap, "seed {k} slot {t}");
            assert!(d(&oc_on) <= d(&ifc_on) + gap, "seed {k} slot {t}");
        }
    }
}
