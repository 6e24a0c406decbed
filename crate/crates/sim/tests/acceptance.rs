//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fmt::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smstrack_core::firmware::Phase;
use smstrack_core::nmea::{encode_latitude, encode_longitude, frame_sentence, parse_coordinate};
use smstrack_core::{
    apply, checksum, compose_maps_link, initial_state, multiplex_code_for, Command, FirmwareEvent, GpsFix, NmeaDecoder,
    VehicleState,
};
use smstrack_sim::gps::gga_sentence;
use smstrack_sim::{Event, EventKind, Scenario, SimEvent, Simulation, Transcript, Waypoint};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn latency() -> Outcome {
    let mut text = String::from("set seed 11\n");
    for k in 0..100u64 {
        let cmd = Command::ALL[(k % 12) as usize];
        writeln!(text, "{} sms {OWNER} \"{}\"", 65_000 + k * 7_000, cmd.canonical_text()).unwrap();
    }
    let started = Instant::now();
    let t = run(&text);
    let wall = started.elapsed();

    let mut delivered = Vec::new();
    for (_, e) in t.sim_events() {
        if let SimEvent::SmsDelivered {
            to,
            submitted_at,
            latency_ms,
            ..
        } = e
        {
            if to == SIM {
                delivered.push((*submitted_at, *latency_ms));
            }
        }
    }
    ensure!(delivered.len() == 100, "{} of 100 commands delivered", delivered.len());
    let (lo, hi) = delivered
        .iter()
        .fold((u64::MAX, 0), |(lo, hi), (_, l)| (lo.min(*l), hi.max(*l)));
    ensure!(
        lo >= 4_000 && hi <= 6_000,
        "delivery latency range [{lo}, {hi}] outside [4000, 6000]"
    );

    let applied: Vec<u64> = t
        .firmware_events()
        .filter(|(_, e)| matches!(e, FirmwareEvent::CmdApplied { .. }))
        .map(|(at, _)| at)
        .collect();
    ensure!(applied.len() == 100, "{} of 100 commands applied", applied.len());
    let snaps = snapshots(&t);
    let mut worst = 0;
    for ((submitted, _), at) in delivered.iter().zip(&applied) {
        ensure!(snaps.iter().any(|(st, _)| st == at), "no state snapshot at {at}");
        worst = worst.max(at - submitted);
    }
    ensure!(worst <= 6_100, "end-to-end latency {worst} ms exceeds 6100");
    ensure!(wall.as_secs_f64() < 5.0, "batch run took {wall:?}");
    Ok(format!(
        "delivery {lo}..{hi} ms, worst end-to-end {worst} ms, wall {:.0} ms",
        wall.as_secs_f64() * 1e3
    ))
}

fn golden_link() -> Outcome {
    let direct = compose_maps_link(&GpsFix::new(44.44212, 26.04938, 7, 120), false);
    ensure!(direct == GOLDEN_LINK, "composed link {direct}");
    let t = run(&format!(
        "0 waypoint 44.44212 26.04938\n65000 sms {OWNER} \"8location: ON\"\n"
    ));
    let out = outbound(&t);
    ensure!(out.len() == 1, "expected one outbound SMS, got {out:?}");
    ensure!(
        out[0].1.as_bytes() == GOLDEN_LINK.as_bytes(),
        "outbound body {}",
        out[0].1
    );
    Ok("outbound body is byte-identical".into())
}

fn command_table() -> Outcome {
    let expected: [(Command, [u8; 3]); 8] = [
        (Command::PositionLightsOn, [1, 0, 0]),
        (Command::PositionLightsOff, [1, 0, 1]),
        (Command::HeadLightsOn, [0, 0, 1]),
        (Command::HeadLightsOff, [1, 0, 1]),
        (Command::BrakeLightsOn, [0, 1, 0]),
        (Command::BrakeLightsOff, [1, 0, 1]),
        (Command::WarningOn, [1, 1, 1]),
        (Command::WarningOff, [1, 0, 1]),
    ];
    for (cmd, bits) in expected {
        let code = multiplex_code_for(cmd).map_err(|e| e.to_string())?;
        ensure!(
            code.bits() == bits,
            "{cmd:?} strobes {:?}, expected {bits:?}",
            code.bits()
        );
    }

    fn flags(s: &VehicleState) -> [bool; 7] {
        [
            s.position_lights,
            s.head_lights,
            s.brake_lights,
            s.warning_lights,
            s.location_mode,
            s.doors_locked,
            s.gsm_ready,
        ]
    }
    fn target(cmd: Command) -> (usize, bool) {
        use Command::*;
        match cmd {
            PositionLightsOn => (0, true),
            PositionLightsOff => (0, false),
            HeadLightsOn => (1, true),
            HeadLightsOff => (1, false),
            BrakeLightsOn => (2, true),
            BrakeLightsOff => (2, false),
            WarningOn => (3, true),
            WarningOff => (3, false),
            LocationOn => (4, true),
            LocationOff => (4, false),
            DoorsLock => (5, true),
            DoorsUnlock => (5, false),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7AB1E);
    let mut steps = 0;
    for _ in 0..1_000 {
        let mut state = initial_state().with_gsm_ready(rng.gen());
        for _ in 0..rng.gen_range(1..40) {
            let cmd = Command::ALL[rng.gen_range(0..12)];
            let (next, _) = apply(state, cmd);
            let (idx, value) = target(cmd);
            let (before, after) = (flags(&state), flags(&next));
            for i in 0..7 {
                let want = if i == idx { value } else { before[i] };
                ensure!(after[i] == want, "{cmd:?} from {state:?} gave {next:?}");
            }
            state = next;
            steps += 1;
        }
    }
    Ok(format!(
        "8 multiplex triples, frame property over 1000 sequences ({steps} steps)"
    ))
}

fn silent_drop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD20F);
    let mut text = String::from("set ack_mode on\n0 waypoint 44.44212 26.04938\n");
    let mut at = 65_000;
    for k in 0..50 {
        let cmd = Command::ALL[k % 12];
        writeln!(text, "{at} sms +4073100{k:04} \"{}\"", cmd.canonical_text()).unwrap();
        at += 1_500;
    }
    let mut garbled = 0;
    while garbled < 50 {
        let base = Command::ALL[rng.gen_range(0..12)].canonical_text().as_bytes().to_vec();
        let mut body = base.clone();
        match rng.gen_range(0..4) {
            0 => {
                let i = rng.gen_range(0..body.len());
                body[i] = rng.gen_range(b' '..=b'~');
            }
            1 => body.truncate(rng.gen_range(1..body.len())),
            2 => body.push(rng.gen_range(b' '..=b'~')),
            _ => body = body.to_ascii_uppercase(),
        }
        if body == base || body.contains(&b'"') || body.contains(&b'\\') {
            continue;
        }
        let body = String::from_utf8(body).unwrap();
        writeln!(text, "{at} sms {OWNER} \"{body}\"").unwrap();
        at += 1_500;
        garbled += 1;
    }
    let t = run(&text);
    let out = outbound(&t);
    ensure!(out.is_empty(), "vehicle sent {} messages: {:?}", out.len(), out.first());
    let changes: Vec<_> = snapshots(&t).into_iter().filter(|(at, _)| *at > 60_000).collect();
    ensure!(changes.is_empty(), "state changed: {:?}", changes.first());
    let rejected = count_type(&t, "auth_rejected");
    let ignored = count_type(&t, "cmd_ignored");
    ensure!(
        rejected == 50 && ignored == 50,
        "{rejected} rejected, {ignored} ignored"
    );
    Ok("100 messages read, 0 replies, 0 state changes".into())
}

fn attach_protocol() -> Outcome {
    let t = run("set drain 70000\n");
    let ready = times_of(&t, "gsm_ready");
    ensure!(ready == [60_000], "gsm_ready at {ready:?}");

    let mut text = String::from("set attach_delay never\n0 waypoint 44.44212 26.04938\n");
    for k in 0..20u64 {
        writeln!(
            text,
            "{} sms {OWNER} \"{}\"",
            10_000 + k * 10_000,
            Command::ALL[(k % 12) as usize].canonical_text()
        )
        .unwrap();
    }
    let scn = scenario(&text);
    let mut sim = Simulation::from_scenario(&scn).map_err(|e| e.to_string())?;
    sim.advance_to(scn.last_event_at() + scn.config.drain_ms);
    ensure!(
        sim.firmware_phase() == Some(Phase::Error),
        "phase {:?}",
        sim.firmware_phase()
    );
    let t = sim.into_transcript();
    let failed = times_of(&t, "gsm_attach_failed");
    ensure!(failed == [120_000], "gsm_attach_failed at {failed:?}");
    ensure!(count_type(&t, "gsm_ready") == 0, "registered despite never attaching");
    ensure!(count_type(&t, "cmd_applied") == 0, "commands dispatched in Error");
    ensure!(outbound(&t).is_empty(), "SMS sent in Error");
    Ok("ready at 60000 ms; failure enters Error at 120000 ms and dispatches nothing".into())
}

fn xor_oracle(body: &[u8]) -> String {
    format!("{:02X}", body.iter().fold(0u8, |acc, b| acc ^ b))
}

fn nmea_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E4D);
    let mut stream = Vec::new();
    let mut sentences = Vec::new();
    for k in 0..50u64 {
        let lat = rng.gen_range(-89.9..89.9);
        let lon = rng.gen_range(-179.9..179.9);
        let s = if k % 5 == 4 {
            let (la, ns) = encode_latitude(lat);
            let (lo, ew) = encode_longitude(lon);
            frame_sentence(&format!("GNRMC,120000.00,A,{la},{ns},{lo},{ew},0.0,0.0,010120,,,A"))
        } else {
            gga_sentence(
                &Waypoint {
                    latitude: lat,
                    longitude: lon,
                    satellites: rng.gen_range(3..13),
                    hdop_hundredths: rng.gen_range(50..500),
                },
                k * 1_000,
            )
        };
        let star = s.find('*').unwrap();
        ensure!(
            xor_oracle(&s.as_bytes()[1..star]) == s[star + 1..star + 3],
            "framed checksum wrong in {s}"
        );
        ensure!(
            checksum(&s.as_bytes()[1..star]) == xor_oracle(&s.as_bytes()[1..star]),
            "checksum disagrees with oracle"
        );
        stream.extend_from_slice(s.as_bytes());
        sentences.push(s);
    }
    let reference = NmeaDecoder::new().feed(&stream, 0);
    ensure!(reference.len() == 50, "{} of 50 sentences decoded", reference.len());

    for _ in 0..1_000 {
        let mut dec = NmeaDecoder::new();
        let mut fixes = Vec::new();
        let mut i = 0;
        while i < stream.len() {
            let n = rng.gen_range(1..=40).min(stream.len() - i);
            fixes.extend(dec.feed(&stream[i..i + n], 0));
            i += n;
        }
        ensure!(fixes == reference, "chunked decode diverged");
    }

    let valid = sentences[0].as_bytes();
    let star = sentences[0].find('*').unwrap();
    let mut corruptions = 0;
    for pos in 1..star {
        for b in 0..=255u8 {
            if b == valid[pos] {
                continue;
            }
            let mut bad = valid.to_vec();
            bad[pos] = b;
            let got = NmeaDecoder::new().feed(&bad, 0);
            ensure!(
                got.is_empty(),
                "corrupting byte {pos} to {b:#04x} still decoded {got:?}"
            );
            corruptions += 1;
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let lat = rng.gen_range(-90.0..=90.0);
        let lon = rng.gen_range(-180.0..=180.0);
        let (la, ns) = encode_latitude(lat);
        let (lo, ew) = encode_longitude(lon);
        let back_lat = parse_coordinate(&la, &ns.to_string(), 2).ok_or(format!("{la} {ns} unparsable"))?;
        let back_lon = parse_coordinate(&lo, &ew.to_string(), 3).ok_or(format!("{lo} {ew} unparsable"))?;
        worst = worst.max((back_lat - lat).abs()).max((back_lon - lon).abs());
    }
    ensure!(worst <= 1e-6, "round-trip error {worst:e} exceeds 1e-6");
    Ok(format!(
        "1000 chunkings identical, {corruptions} corruptions rejected, round-trip max error {worst:.2e}"
    ))
}

fn random_scenario(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = format!("set seed {seed}\nset location_period 30000\n");
    let mut at = 0;
    for _ in 0..60 {
        at += rng.gen_range(0..8_000);
        match rng.gen_range(0..10) {
            0 => writeln!(
                text,
                "{at} waypoint {:.5} {:.5}",
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-120.0..120.0)
            ),
            1 => writeln!(text, "{at} power main {}", if rng.gen() { "on" } else { "off" }),
            2 => writeln!(text, "{at} restart"),
            3 => writeln!(text, "{at} sms +40799999999 \"0lights: ON\""),
            _ => writeln!(
                text,
                "{at} sms {OWNER} \"{}\"",
                Command::ALL[rng.gen_range(0..12)].canonical_text()
            ),
        }
        .unwrap();
    }
    text
}

fn determinism() -> Outcome {
    let demo = Scenario::load(demo_path()).map_err(|e| e.to_string())?;
    let a = Simulation::run(&demo).map_err(|e| e.to_string())?.to_jsonl();
    let b = Simulation::run(&demo).map_err(|e| e.to_string())?.to_jsonl();
    ensure!(a == b, "demo transcripts differ");
    for seed in [1, 2, 3, 42] {
        let text = random_scenario(seed);
        ensure!(
            run(&text).to_jsonl() == run(&text).to_jsonl(),
            "seed {seed} transcripts differ"
        );
    }

    let t = run(&format!(
        "65000 sms {OWNER} \"0lights: ON\"\n75000 sms {OWNER} \"adoors: ON\"\n\
         85000 sms {OWNER} \"6warning: ON\"\n100000 restart\n"
    ));
    let before = snapshots(&t).into_iter().rev().find(|(at, _)| *at < 100_000);
    ensure!(
        before.is_some_and(|(_, s)| s.position_lights && s.doors_locked && s.warning_lights),
        "commands did not land before the restart"
    );
    let after = snapshots(&t).into_iter().find(|(at, _)| *at == 100_000);
    ensure!(
        after.map(|(_, s)| s) == Some(initial_state()),
        "state after restart {after:?}"
    );
    Ok("byte-identical replays; restart restores the initial state".into())
}

fn power_continuity() -> Outcome {
    let base = format!(
        "set location_period 20000\n0 waypoint 44.44212 26.04938\n\
         65000 sms {OWNER} \"0lights: ON\"\n75000 sms {OWNER} \"8location: ON\"\n\
         95000 sms {OWNER} \"adoors: ON\"\n115000 sms {OWNER} \"6warning: ON\"\n"
    );
    let failing = insert_event(&base, 10_000, "power main off");
    let plain = run(&base);
    let failed = run(&failing);
    let strip = |t: &Transcript| -> Vec<String> {
        t.iter()
            .filter(|r| !matches!(r.event, Event::Sim(SimEvent::Power { .. })))
            .map(|r| r.to_json())
            .collect()
    };
    ensure!(count_type(&failed, "power") == 1, "power record missing");
    ensure!(strip(&plain) == strip(&failed), "main failure changed the transcript");
    ensure!(
        count_type(&failed, "sms_dropped") == 0,
        "messages dropped on backup power"
    );

    let dual = format!(
        "0 waypoint 44.44212 26.04938\n10000 power main off\n65000 sms {OWNER} \"2head: ON\"\n\
         80000 power backup off\n81000 sms {OWNER} \"0lights: ON\"\n85000 sms {OWNER} \"6warning: ON\"\n\
         100000 power main on\n165000 sms {OWNER} \"4brake: ON\"\n"
    );
    let t = run(&dual);
    let dropped = count_type(&t, "sms_dropped");
    ensure!(dropped == 2, "{dropped} drops logged, expected 2");
    let leaked: Vec<_> = t
        .iter()
        .filter(|r| r.t >= 80_000 && r.t < 100_000 && r.source.is_vehicle())
        .collect();
    ensure!(leaked.is_empty(), "vehicle activity while unpowered: {:?}", leaked[0]);
    let ready = times_of(&t, "gsm_ready");
    ensure!(ready == [60_000, 160_000], "gsm_ready at {ready:?}");
    let state = snapshots(&t).last().map(|(_, s)| *s).unwrap();
    ensure!(
        state.brake_lights && !state.position_lights && !state.warning_lights,
        "after recovery {state:?}"
    );
    Ok("backup takeover leaves the transcript unchanged; dual failure drops 2 and recovers".into())
}

fn insert_event(text: &str, at: u64, event: &str) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let pos = lines
        .iter()
        .position(|l| {
            l.split_whitespace()
                .next()
                .and_then(|w| w.parse::<u64>().ok())
                .is_some_and(|t| t > at)
        })
        .unwrap_or(lines.len());
    lines.insert(pos, format!("{at} {event}"));
    lines.join("\n") + "\n"
}

fn demo_scenario() -> Outcome {
    let demo = Scenario::load(demo_path()).map_err(|e| e.to_string())?;
    let sms = demo
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::InboundSms { .. }))
        .count();
    ensure!(sms == 13, "demo has {sms} messages");
    let t = Simulation::run(&demo).map_err(|e| e.to_string())?;
    let applied: Vec<Command> = t
        .firmware_events()
        .filter_map(|(_, e)| match e {
            FirmwareEvent::CmdApplied { command, .. } => Some(*command),
            _ => None,
        })
        .collect();
    let mut expected = Command::ALL.to_vec();
    expected.push(Command::LocationOn);
    ensure!(applied == expected, "applied {applied:?}");
    let links: Vec<_> = outbound(&t).into_iter().map(|(_, b)| b).collect();
    ensure!(links == [GOLDEN_LINK, GOLDEN_LINK], "replies {links:?}");
    let last = snapshots(&t).last().map(|(_, s)| *s).unwrap();
    let expected = VehicleState {
        location_mode: true,
        ..initial_state().with_gsm_ready(true)
    };
    ensure!(last == expected, "final state {last:?}");
    Ok("13 commands applied in order, 2 map links".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("latency", latency),
        ("golden-link", golden_link),
        ("command-table", command_table),
        ("silent-drop", silent_drop),
        ("attach-protocol", attach_protocol),
        ("nmea-parser", nmea_suite),
        ("determinism", determinism),
        ("power-continuity", power_continuity),
        ("demo-scenario", demo_scenario),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {}",
                p.downcast_ref::<String>().map_or("?", String::as_str)
            ))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                println!("FAIL {name}: {reason}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
