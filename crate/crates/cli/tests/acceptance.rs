//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see the detail lines). Tolerances are pinned in the assertions.

use std::path::Path;
use std::time::Instant;

use mmoscope_cli::verify::{cmd_verify, VerifyArgs};
use mmoscope_cli::{cmd_analyze, AnalyzeArgs};
use mmoscope_core::analytics::{time_of_day, Cdf};
use mmoscope_core::pipeline::{analyze_path, Analysis, AnalyzeOptions};
use mmoscope_core::protocol::{
    build_movement, parse_movement, split_frames, AvatarId, MovementMessage, ProtocolVersion,
};
use mmoscope_core::session::{User, UserClass};
use mmoscope_core::time::{merge_intervals, Micros};
use mmoscope_synth::scenario::{
    BackgroundConfig, ClassOverride, ClassOverrides, MovementConfig, Scenario, SessionModel,
    UsersConfig, VersionMix,
};
use mmoscope_synth::shuffle::{shuffle_segments, ShuffleOptions};
use mmoscope_synth::stats::{splitmix64, sub_rng};

const WALK_SPEED: f64 = 4.25;

fn base_scenario(duration_s: u64, count: u32, histogram: &[(u32, u32)]) -> Scenario {
    Scenario {
        duration_s,
        trace_start_epoch: 1_722_470_400,
        seed: 2024,
        users: UsersConfig {
            count,
            group_size_histogram: histogram.iter().map(|&(s, n)| (s.to_string(), n)).collect(),
            session_model: SessionModel {
                sessions_per_user_mean: 1.0,
                start_weights_per_hour: vec![1.0],
                duration_lognormal_mu: 5.4509,
                duration_lognormal_sigma: 0.5,
                stratified_durations: true,
            },
            reallocated_users: 0,
        },
        movement: MovementConfig {
            walk_speed_wm_s: WALK_SPEED,
            movement_hz: 1.0,
            waypoint_pause_s: 0.0,
            teleport_avatar_fraction: 0.0,
            teleport_speed_factor: 1000.0,
        },
        version_mix: VersionMix { fraction_a: 1.0 },
        background: BackgroundConfig {
            flow_count: 0,
            adversarial_count: 0,
            byte_volume_target: 0,
        },
        class_overrides: ClassOverrides::default(),
    }
}

fn generate_and_analyze(scenario: &Scenario, dir: &Path) -> (mmoscope_synth::Manifest, Analysis) {
    let pcap = dir.join("trace.pcap");
    let manifest_path = dir.join("manifest.json");
    let manifest = mmoscope_synth::generate(scenario, None, &pcap, &manifest_path)
        .expect("scenario generates");
    let analysis = analyze_path(&pcap, &AnalyzeOptions::default()).expect("trace analyzes");
    (manifest, analysis)
}

fn report_line(name: &str, ok: bool, detail: &str) {
    println!("ACCEPTANCE {}: {} ({})", name, if ok { "PASS" } else { "FAIL" }, detail);
    assert!(ok, "{name}: {detail}");
}

/// End-to-end recovery on an desk-scale reference scenario: 100 users,
/// group histogram dominated by solitary players, mean playing scaled
/// to a one-hour trace, 4.25 Wm/s walk speed, 0.8 % teleporting avatars at
/// 1000x. Exact user count and group rows, playing within 1 %, mean speed
/// within 2 % of the configured walk speed, movement share exact.
#[test]
fn end_to_end_recovery_desk_scale() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    // 53/13/4/1/1 IPs of sizes 1/2/3/4/5: 100 users, IP shares ~74/18/6/1/1 %.
    let mut scenario =
        base_scenario(3600, 100, &[(1, 53), (2, 13), (3, 4), (4, 1), (5, 1)]);
    scenario.movement.teleport_avatar_fraction = 0.008;
    scenario.background =
        BackgroundConfig { flow_count: 150, adversarial_count: 10, byte_volume_target: 1_500_000 };

    let pcap = dir.path().join("trace.pcap");
    let manifest_path = dir.path().join("manifest.json");
    let manifest =
        mmoscope_synth::generate(&scenario, None, &pcap, &manifest_path).expect("generates");

    // Drive the real commands: analyze writes the bundle, verify diffs it
    // against the manifest at the stated tolerances.
    let report_dir = dir.path().join("report");
    let code = cmd_analyze(&AnalyzeArgs {
        input: &pcap,
        out: &report_dir,
        slot_minutes: 60,
        teleport_factor: 100.0,
        anon_salt: None,
        format: "csv",
    });
    report_line("e2e.analyze_exit", code == 0, &format!("exit {code}"));
    let code = cmd_verify(&VerifyArgs {
        report: &report_dir,
        manifest: &manifest_path,
        playing_tol: 0.01,
        speed_tol: 0.02,
        group_tol: 0,
    });
    report_line("e2e.verify_exit", code == 0, &format!("exit {code}"));

    let analysis = analyze_path(&pcap, &AnalyzeOptions::default()).unwrap();

    report_line(
        "e2e.user_count",
        analysis.users.len() as u64 == manifest.expected.user_count,
        &format!("{} vs {}", analysis.users.len(), manifest.expected.user_count),
    );

    let rows: Vec<(u64, u64)> =
        analysis.group_table.rows.iter().map(|r| (r.n_ips, r.n_users)).collect();
    let truth: Vec<(u64, u64)> = manifest.groups.iter().map(|r| (r.n_ips, r.n_users)).collect();
    report_line("e2e.group_rows_exact", rows == truth, &format!("{rows:?} vs {truth:?}"));

    let mut worst = 0.0f64;
    for truth_user in &manifest.users {
        let user = analysis.users.iter().find(|u| u.token == truth_user.token).unwrap();
        let rel = (user.playing_us as f64 - truth_user.playing_us as f64).abs()
            / truth_user.playing_us as f64;
        worst = worst.max(rel);
    }
    report_line("e2e.playing_within_1pct", worst <= 0.01, &format!("worst rel {worst:.2e}"));

    let speed = analysis.movement.mean_filtered_speed;
    let rel = (speed - WALK_SPEED).abs() / WALK_SPEED;
    report_line(
        "e2e.mean_speed_within_2pct_of_4.25",
        rel <= 0.02,
        &format!("mean {speed:.4} rel {rel:.2e}"),
    );

    report_line(
        "e2e.movement_share_exact",
        analysis.move_share.movement_packets == manifest.expected.movement_packets
            && analysis.move_share.client_payload_packets
                == manifest.expected.client_game_payload_packets,
        &format!(
            "{}/{} vs {}/{}",
            analysis.move_share.movement_packets,
            analysis.move_share.client_payload_packets,
            manifest.expected.movement_packets,
            manifest.expected.client_game_payload_packets
        ),
    );

    // The version-A client stream peaks at the 43-byte movement frame.
    let size_cdf = analysis.flow_cdfs.iter().find(|c| c.label == "size_game_c2s").unwrap();
    let mode = modal_value(size_cdf);
    report_line("e2e.size_peak_43", mode == 43.0, &format!("modal size {mode}"));

    // Traffic shares agree with the manifest exactly.
    report_line(
        "e2e.traffic_shares_exact",
        analysis.summary.wow.payload_packets == manifest.expected.wow_payload_packets
            && analysis.summary.wow.total_payload_packets
                == manifest.expected.total_payload_packets
            && analysis.summary.wow.payload_bytes == manifest.expected.wow_payload_bytes
            && analysis.summary.wow.total_payload_bytes == manifest.expected.total_payload_bytes,
        &format!(
            "wow {}/{} of {}/{}",
            analysis.summary.wow.payload_packets,
            analysis.summary.wow.payload_bytes,
            analysis.summary.wow.total_payload_packets,
            analysis.summary.wow.total_payload_bytes
        ),
    );

    let elapsed = started.elapsed();
    report_line(
        "e2e.runtime_under_60s",
        elapsed.as_secs() < 60,
        &format!("{:.1}s", elapsed.as_secs_f64()),
    );
}

fn modal_value(cdf: &Cdf) -> f64 {
    let mut best = (0usize, f64::NAN);
    let mut current = (0usize, f64::NAN);
    for (value, _) in cdf.points() {
        if value == current.1 {
            current.0 += 1;
        } else {
            current = (1, value);
        }
        if current.0 > best.0 {
            best = current;
        }
    }
    best.1
}

/// Adversarial corpus: 1000 background flows, 50 of which match step one
/// and violate step two. None may confirm; all 50 end rejected.
#[test]
fn dpd_adversarial_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = base_scenario(1200, 0, &[]);
    scenario.background = BackgroundConfig {
        flow_count: 1000,
        adversarial_count: 50,
        byte_volume_target: 3_000_000,
    };
    let (_, analysis) = generate_and_analyze(&scenario, dir.path());

    report_line(
        "dpd.zero_confirmed",
        analysis.dpd.confirmed_logon + analysis.dpd.confirmed_game == 0,
        &format!(
            "confirmed {}+{}",
            analysis.dpd.confirmed_logon, analysis.dpd.confirmed_game
        ),
    );
    report_line(
        "dpd.candidates_are_adversarial",
        analysis.dpd.candidates_logon + analysis.dpd.candidates_game == 50,
        &format!("{}+{}", analysis.dpd.candidates_logon, analysis.dpd.candidates_game),
    );
    report_line(
        "dpd.all_50_rejected",
        analysis.dpd.rejected_candidates == 50,
        &format!("rejected candidates {}", analysis.dpd.rejected_candidates),
    );
    report_line(
        "dpd.flows_seen",
        analysis.dpd.flows == 1000,
        &format!("{} flows", analysis.dpd.flows),
    );
}

/// Frame-size exactness: seeded fuzz over the movement field domain. Every
/// version-A frame is 43 bytes, every version-B frame 51 bytes, and parsing
/// returns the built message field-for-field.
#[test]
fn frame_size_exactness_fuzz() {
    let mut state = 0x00c0_ffeeu64;
    let mut next = move || {
        state = splitmix64(state);
        state
    };
    let f32_from = |bits: u64| -> f32 {
        let v = f32::from_bits(bits as u32);
        if v.is_finite() {
            v
        } else {
            (bits % 1_000_000) as f32 / 7.0
        }
    };
    for case in 0..20_000u32 {
        let version = if case % 2 == 0 { ProtocolVersion::A } else { ProtocolVersion::B };
        let avatar = match version {
            ProtocolVersion::A => AvatarId::Short(next() as u32),
            ProtocolVersion::B => AvatarId::Guid {
                low: next() as u32,
                high: next() as u32,
                realm: next() as u32,
            },
        };
        let msg = MovementMessage {
            avatar,
            move_flags: next() as u32,
            move_flags2: next() as u16,
            game_time_ms: next() as u32,
            x: f32_from(next()),
            y: f32_from(next()),
            z: f32_from(next()),
            orientation: f32_from(next()),
            fall_time_ms: next() as u32,
            pitch: f32_from(next()),
        };
        let wire = build_movement(&msg);
        let expected = match version {
            ProtocolVersion::A => 43,
            ProtocolVersion::B => 51,
        };
        assert_eq!(wire.len(), expected, "case {case}");
        let split = split_frames(&wire);
        let parsed = parse_movement(split.frames[0].body, version).unwrap();
        assert_eq!(parsed, msg, "case {case}");
    }
    report_line("frames.exact_sizes_and_roundtrip", true, "20000 cases, 43/51 bytes exact");
}

/// Reassembly robustness: shuffled and duplicated captures must produce a
/// byte-identical report bundle.
#[test]
fn reassembly_robustness_bundle_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = base_scenario(900, 40, &[(1, 20), (2, 10)]);
    scenario.users.session_model.duration_lognormal_mu = 5.8;
    scenario.background =
        BackgroundConfig { flow_count: 100, adversarial_count: 5, byte_volume_target: 800_000 };
    let pcap = dir.path().join("trace.pcap");
    let manifest_path = dir.path().join("manifest.json");
    mmoscope_synth::generate(&scenario, None, &pcap, &manifest_path).unwrap();

    let write = |input: &Path, out: &Path| {
        let analysis = analyze_path(input, &AnalyzeOptions::default()).unwrap();
        mmoscope_core::report::write_bundle(
            &analysis,
            out,
            &mmoscope_core::report::WriteOptions::default(),
        )
        .unwrap();
    };
    let baseline = dir.path().join("report_baseline");
    write(&pcap, &baseline);

    for seed in [1u64, 7, 1234] {
        let shuffled = dir.path().join(format!("shuffled_{seed}.pcap"));
        shuffle_segments(
            &pcap,
            &shuffled,
            seed,
            ShuffleOptions { window: 8, duplicate_fraction: 0.01 },
        )
        .unwrap();
        let report = dir.path().join(format!("report_{seed}"));
        write(&shuffled, &report);
        let diff = dir_diff(&baseline, &report);
        report_line(
            &format!("reassembly.bundle_identity(seed={seed})"),
            diff.is_none(),
            &diff.unwrap_or_else(|| "all files byte-identical".into()),
        );
    }
}

fn dir_diff(a: &Path, b: &Path) -> Option<String> {
    let list = |d: &Path| -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    };
    let fa = list(a);
    let fb = list(b);
    if fa != fb {
        return Some(format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    for name in fa {
        let ba = std::fs::read(a.join(&name)).unwrap();
        let bb = std::fs::read(b.join(&name)).unwrap();
        if ba != bb {
            return Some(format!("{name} differs"));
        }
    }
    None
}

/// Time-of-day identity: for 20 random interval scenarios, every matrix row
/// sum equals the user's playing time exactly and every cell stays within
/// the slot width.
#[test]
fn time_of_day_identity() {
    for scenario_seed in 0..20u64 {
        let mut rng = sub_rng(scenario_seed, 0x70d0);
        use rand::Rng;
        let slot_minutes = *[15u32, 30, 60].get(rng.gen_range(0..3)).unwrap();
        let span_us: u64 = rng.gen_range(2..48) * 3_600_000_000;
        let start = Micros(1_600_000_000_000_000);
        let n_users = rng.gen_range(1..25);
        let mut users = Vec::new();
        let mut classes = Vec::new();
        for u in 0..n_users {
            let mut intervals = Vec::new();
            for _ in 0..rng.gen_range(1..6) {
                let a = rng.gen_range(0..span_us);
                let len = rng.gen_range(1..span_us / 2);
                let b = (a + len).min(span_us);
                intervals.push((start.0 + a, start.0 + b));
            }
            let merged = merge_intervals(&intervals);
            let playing: u64 = merged.iter().map(|(s, e)| e - s).sum();
            users.push(User {
                token: format!("U{u:03}"),
                connections: vec![],
                client_ips: Default::default(),
                playing_intervals_us: merged,
                playing_us: playing,
            });
            classes.push(if u % 2 == 0 { UserClass::Tiger } else { UserClass::Lion });
        }
        let matrix =
            time_of_day(&users, &classes, slot_minutes, start, Micros(start.0 + span_us));
        let slot_us = slot_minutes as u64 * 60_000_000;
        for row in &matrix.rows {
            let user = users.iter().find(|u| u.token == row.token).unwrap();
            assert_eq!(
                row.row_sum_us(),
                user.playing_us,
                "seed {scenario_seed} user {}",
                row.token
            );
            assert!(row.cells_us.iter().all(|&c| c <= slot_us));
        }
        assert_eq!(matrix.clipped_intervals, 0);
    }
    report_line("timeofday.row_sum_identity", true, "20 scenarios, exact microsecond sums");
}

/// Teleport filter efficacy: with 0.8 % of avatars jumping at 1000x, the
/// unfiltered mean is off by more than 50 %, the filtered mean lands within
/// 2 % of the configured speed, and the affected-avatar fraction reads
/// 0.008 +- 0.002.
#[test]
fn teleport_filter_efficacy() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = base_scenario(600, 125, &[(1, 125)]);
    scenario.users.session_model.duration_lognormal_mu = 6.1738; // ~480 s
    scenario.users.session_model.duration_lognormal_sigma = 0.05;
    scenario.movement.teleport_avatar_fraction = 0.008;
    scenario.movement.teleport_speed_factor = 1000.0;
    let (manifest, analysis) = generate_and_analyze(&scenario, dir.path());

    let raw_dev = (analysis.movement.mean_raw_speed - WALK_SPEED).abs() / WALK_SPEED;
    report_line(
        "teleport.unfiltered_mean_off_by_50pct",
        raw_dev > 0.5,
        &format!("raw mean {:.3}, deviation {:.0}%", analysis.movement.mean_raw_speed, raw_dev * 100.0),
    );

    let filt_rel = (analysis.movement.mean_filtered_speed - WALK_SPEED).abs() / WALK_SPEED;
    report_line(
        "teleport.filtered_mean_within_2pct",
        filt_rel <= 0.02,
        &format!("filtered mean {:.4}", analysis.movement.mean_filtered_speed),
    );

    let fraction = analysis.movement.affected_fraction;
    report_line(
        "teleport.affected_fraction_0.008+-0.002",
        (fraction - 0.008).abs() <= 0.002,
        &format!("fraction {fraction:.4} ({} of {})", analysis.movement.affected_avatars, analysis.movement.total_avatars),
    );

    // The manifest, computed from emitted events, agrees.
    assert_eq!(analysis.movement.affected_avatars, manifest.movement.affected_avatars);
    assert_eq!(analysis.movement.removed_steps_total, manifest.movement.removed_steps);
}

/// Quantile probes: an heavy-tailed scenario tuned to 20 % of users below
/// 0.28 h and 40 % above 2.8 h; the analyzer probes must land within 0.02.
#[test]
fn quantile_probes() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = base_scenario(21_600, 100, &[(1, 100)]);
    // Lognormal through (0.28 h at p=0.2) and (2.8 h at p=0.6).
    scenario.users.session_model.duration_lognormal_mu = 8.6855772;
    scenario.users.session_model.duration_lognormal_sigma = 2.1028787;
    scenario.users.session_model.stratified_durations = true;
    scenario.movement.movement_hz = 0.1;
    let (_, analysis) = generate_and_analyze(&scenario, dir.path());

    let below = analysis.durations.below_short_probe;
    let above = analysis.durations.above_long_probe;
    report_line(
        "probes.below_0.28h",
        (below - 0.20).abs() <= 0.02,
        &format!("{below:.3} vs target 0.20"),
    );
    report_line(
        "probes.above_2.8h",
        (above - 0.40).abs() <= 0.02,
        &format!("{above:.3} vs target 0.40"),
    );
}

/// Tiger/Lion orderings: Tigers configured to play longer, Lions to reach
/// waypoints more often (shorter pauses). The Tiger playing-time CDF must
/// right-dominate the Lion CDF at deciles 10-90 and the Lion distance CDF
/// must right-dominate the Tiger one likewise.
#[test]
fn tiger_lion_orderings() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = base_scenario(7200, 60, &[(1, 30), (2, 15)]);
    scenario.users.session_model.duration_lognormal_mu = 7.3132; // ~1500 s
    scenario.users.session_model.duration_lognormal_sigma = 0.35;
    scenario.users.session_model.stratified_durations = true;
    scenario.movement.waypoint_pause_s = 1.0;
    scenario.class_overrides = ClassOverrides {
        tiger: ClassOverride { duration_scale: 1.6, waypoint_pause_s: Some(60.0) },
        lion: ClassOverride { duration_scale: 1.0, waypoint_pause_s: Some(1.0) },
    };
    let (_, analysis) = generate_and_analyze(&scenario, dir.path());

    let deciles: Vec<f64> = (1..=9).map(|d| d as f64 / 10.0).collect();
    let playing_ok = deciles.iter().all(|&q| {
        analysis.durations.playing_tiger.quantile(q).unwrap()
            > analysis.durations.playing_lion.quantile(q).unwrap()
    });
    report_line(
        "orderings.tiger_playing_dominates",
        playing_ok,
        &format!(
            "median tiger {:.0}s vs lion {:.0}s",
            analysis.durations.playing_tiger.quantile(0.5).unwrap(),
            analysis.durations.playing_lion.quantile(0.5).unwrap()
        ),
    );

    let tiger_distance = analysis.distance_cdfs.iter().find(|c| c.label == "distance_users_tiger").unwrap();
    let lion_distance = analysis.distance_cdfs.iter().find(|c| c.label == "distance_users_lion").unwrap();
    let distance_ok = deciles
        .iter()
        .all(|&q| lion_distance.quantile(q).unwrap() > tiger_distance.quantile(q).unwrap());
    report_line(
        "orderings.lion_distance_dominates",
        distance_ok,
        &format!(
            "median lion {:.0} Wm vs tiger {:.0} Wm",
            lion_distance.quantile(0.5).unwrap(),
            tiger_distance.quantile(0.5).unwrap()
        ),
    );
}
