use lorasim::harness::{run_experiment, DropCause, ExperimentConfig, TrafficClass};
use lorasim::linkmodel::SpreadingFactor;
use lorasim::scenario::SfStrategy;

fn near(n: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_devices: n,
        device_distance_m: Some(200.0),
        sf_strategy: SfStrategy::Fixed(SpreadingFactor::SF7),
        sim_periods: 50.0,
        ..Default::default()
    }
}

#[test]
fn lone_device_delivers_everything() {
    let r = run_experiment(&near(1), true).unwrap();
    let up = r.ledger.class(TrafficClass::UpUnconfirmed);
    assert_eq!(up.generated, 50);
    assert_eq!(up.delivered, 50);
    assert!(r.trace.iter().all(|p| p.delivered && p.gateway == Some(0)));
}

#[test]
fn uplinks_are_strictly_periodic() {
    let r = run_experiment(&near(1), true).unwrap();
    let times: Vec<f64> = r.trace.iter().map(|p| p.time).collect();
    for w in times.windows(2) {
        assert!((w[1] - w[0] - 600.0).abs() < 1e-6);
    }
}

#[test]
fn confirmed_uplinks_acknowledged_in_rw1() {
    let cfg = ExperimentConfig {
        us_confirmed: true,
        ..near(1)
    };
    let r = run_experiment(&cfg, true).unwrap();
    let l = &r.ledger;
    assert_eq!(l.pdr(TrafficClass::UpConfirmed), Some(1.0));
    assert_eq!(l.ack_rw1, 50);
    assert_eq!(l.ack_rw2, 0);
    assert_eq!(l.transmissions_per_confirmed(), Some(1.0));
    let acks = r.trace.iter().filter(|p| p.kind == "ack").count();
    assert_eq!(acks, 50);
}

#[test]
fn downlinks_reach_a_nearby_device() {
    let cfg = ExperimentConfig {
        us_period_s: 100.0,
        ds_mean_iat_s: Some(300.0),
        sim_periods: 200.0,
        ..near(1)
    };
    let r = run_experiment(&cfg, false).unwrap();
    let ds = r.ledger.class(TrafficClass::DownUnconfirmed);
    assert!(ds.generated > 30);
    assert_eq!(ds.dropped_total(), 0);
    // Only messages generated after the last uplink can still be waiting.
    assert!(ds.queued <= 3);
    assert_eq!(ds.delivered + ds.queued, ds.generated);
}

#[test]
fn confirmed_downlinks_complete_on_the_next_uplink() {
    let cfg = ExperimentConfig {
        us_period_s: 100.0,
        ds_mean_iat_s: Some(500.0),
        ds_confirmed: true,
        sim_periods: 200.0,
        ..near(1)
    };
    let r = run_experiment(&cfg, false).unwrap();
    let ds = r.ledger.class(TrafficClass::DownConfirmed);
    assert!(ds.generated > 10);
    assert!(ds.delivered + 3 >= ds.generated);
    r.check_invariants().unwrap();
}

#[test]
fn out_of_range_device_is_below_cutoff() {
    let cfg = ExperimentConfig {
        device_distance_m: Some(20_000.0),
        sf_strategy: SfStrategy::Fixed(SpreadingFactor::SF12),
        ..near(1)
    };
    let r = run_experiment(&cfg, false).unwrap();
    let up = r.ledger.class(TrafficClass::UpUnconfirmed);
    assert_eq!(up.dropped(DropCause::BelowCutoff), up.generated);
}

#[test]
fn collisions_dominate_losses_under_load() {
    let cfg = ExperimentConfig {
        n_devices: 1000,
        sim_periods: 20.0,
        ..Default::default()
    };
    let r = run_experiment(&cfg, false).unwrap();
    let up = r.ledger.class(TrafficClass::UpUnconfirmed);
    let collisions = up.dropped(DropCause::Collision);
    for other in [
        DropCause::Interference,
        DropCause::BelowCutoff,
        DropCause::NotListening,
    ] {
        assert!(collisions > up.dropped(other), "{other}");
    }
    // Undelivered traffic leans towards the slow spreading factors.
    let lost = r.ledger.undelivered_share_by_sf();
    let shares = r.sf_shares();
    assert!(lost[4] + lost[5] > shares[4] + shares[5]);
}

#[test]
fn gateway_transmissions_abort_receptions() {
    let cfg = ExperimentConfig {
        n_devices: 1000,
        us_confirmed: true,
        sim_periods: 10.0,
        ..Default::default()
    };
    let r = run_experiment(&cfg, false).unwrap();
    let up = r.ledger.class(TrafficClass::UpConfirmed);
    assert!(up.dropped(DropCause::Aborted) > 0);
    assert!(up.dropped(DropCause::NoAck) > 0);
    r.check_invariants().unwrap();
}

#[test]
fn small_queue_expires_messages() {
    // SF12 airtime with a 1% duty cycle exceeds a 10 s period.
    let cfg = ExperimentConfig {
        us_period_s: 10.0,
        max_queue: 2,
        sf_strategy: SfStrategy::Fixed(SpreadingFactor::SF12),
        sim_periods: 500.0,
        ..near(1)
    };
    let r = run_experiment(&cfg, false).unwrap();
    let up = r.ledger.class(TrafficClass::UpUnconfirmed);
    assert!(up.dropped(DropCause::QueueExpired) > 0);
    assert!(up.queued <= 2);
    r.check_invariants().unwrap();
}

#[test]
fn more_gateways_never_hurt() {
    let pdr = |gw| {
        let cfg = ExperimentConfig {
            n_devices: 500,
            n_gateways: gw,
            sim_periods: 20.0,
            ..Default::default()
        };
        run_experiment(&cfg, false)
            .unwrap()
            .ledger
            .uplink()
            .pdr()
            .unwrap()
    };
    let (p1, p2, p4) = (pdr(1), pdr(2), pdr(4));
    assert!(p2 >= p1 && p4 >= p1, "{p1} {p2} {p4}");
}
