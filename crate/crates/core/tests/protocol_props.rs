//! Protocol codec properties: exact wire lengths across the whole field
//! domain, build/parse round-trips, and frame partition accounting.

use proptest::prelude::*;

use mmoscope_core::protocol::{
    build_auth_session, build_frame, build_logon_challenge, build_movement, build_object_update,
    parse_game_auth, parse_logon_challenge, parse_movement, parse_object_update, split_frames,
    AvatarId, MovementMessage, ObjectPos, ProtocolVersion,
};

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        Just(0.0f32),
        -10_000.0f32..10_000.0,
        prop::num::f32::NORMAL.prop_map(|v| v % 1e6),
    ]
}

fn avatar_id(version: ProtocolVersion) -> BoxedStrategy<AvatarId> {
    match version {
        ProtocolVersion::A => any::<u32>().prop_map(AvatarId::Short).boxed(),
        ProtocolVersion::B => (any::<u32>(), any::<u32>(), any::<u32>())
            .prop_map(|(low, high, realm)| AvatarId::Guid { low, high, realm })
            .boxed(),
    }
}

fn movement(version: ProtocolVersion) -> impl Strategy<Value = MovementMessage> {
    (
        avatar_id(version),
        any::<u32>(),
        any::<u16>(),
        any::<u32>(),
        finite_f32(),
        finite_f32(),
        finite_f32(),
        finite_f32(),
        any::<u32>(),
        finite_f32(),
    )
        .prop_map(
            |(avatar, move_flags, move_flags2, game_time_ms, x, y, z, orientation, fall, pitch)| {
                MovementMessage {
                    avatar,
                    move_flags,
                    move_flags2,
                    game_time_ms,
                    x,
                    y,
                    z,
                    orientation,
                    fall_time_ms: fall,
                    pitch,
                }
            },
        )
}

fn token() -> impl Strategy<Value = String> {
    "[A-Z0-9]{1,20}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Version A movement frames are 43 bytes and version B frames 51 bytes
    /// on the wire, for every field value; build-then-parse is the identity.
    #[test]
    fn movement_exact_length_and_roundtrip_a(msg in movement(ProtocolVersion::A)) {
        let wire = build_movement(&msg);
        prop_assert_eq!(wire.len(), 43);
        let split = split_frames(&wire);
        prop_assert_eq!(split.frames.len(), 1);
        let parsed = parse_movement(split.frames[0].body, ProtocolVersion::A).unwrap();
        prop_assert_eq!(parsed, msg);
    }

    #[test]
    fn movement_exact_length_and_roundtrip_b(msg in movement(ProtocolVersion::B)) {
        let wire = build_movement(&msg);
        prop_assert_eq!(wire.len(), 51);
        let split = split_frames(&wire);
        let parsed = parse_movement(split.frames[0].body, ProtocolVersion::B).unwrap();
        prop_assert_eq!(parsed, msg);
    }

    #[test]
    fn logon_challenge_roundtrip(build in any::<u16>(), account in token()) {
        let wire = build_logon_challenge(build, &account);
        let info = parse_logon_challenge(&wire).unwrap();
        prop_assert_eq!(info.account_token, account);
        prop_assert_eq!(info.build, build);
        prop_assert_eq!(info.version, ProtocolVersion::from_build(build));
        // The wire always carries the step-one logon signature.
        prop_assert_eq!(wire[0], 0x00);
        prop_assert_eq!(&wire[4..7], b"WoW");
    }

    #[test]
    fn auth_session_roundtrip(build in any::<u16>(), account in token(), seed in any::<u32>()) {
        let wire = build_auth_session(build, &account, seed);
        prop_assert_eq!(&wire[2..4], &[0xed, 0x01][..]);
        let split = split_frames(&wire);
        let auth = parse_game_auth(split.frames[0].body).unwrap();
        prop_assert_eq!(auth.build, build);
        prop_assert_eq!(auth.account_token, account);
        prop_assert_eq!(auth.client_seed, seed);
    }

    #[test]
    fn object_update_roundtrip(
        version in prop_oneof![Just(ProtocolVersion::A), Just(ProtocolVersion::B)],
        coords in prop::collection::vec((finite_f32(), finite_f32(), finite_f32()), 0..12),
    ) {
        let objects: Vec<ObjectPos> = coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| ObjectPos {
                id: match version {
                    ProtocolVersion::A => AvatarId::Short(i as u32),
                    ProtocolVersion::B => AvatarId::Guid { low: i as u32, high: 7, realm: 2 },
                },
                x,
                y,
                z,
            })
            .collect();
        let wire = build_object_update(&objects);
        prop_assert_eq!(wire.len(), 4 + 1 + objects.len() * (version.id_width() + 12));
        let (parsed, malformed) = parse_object_update(&wire[4..], version);
        prop_assert!(!malformed);
        prop_assert_eq!(parsed, objects);
    }

    /// Frames partition the stream: offsets tile it exactly and the consumed
    /// prefix plus the dropped suffix account for every byte.
    #[test]
    fn frame_partition(
        bodies in prop::collection::vec((any::<u16>(), prop::collection::vec(any::<u8>(), 0..80)), 1..20),
        cut in any::<prop::sample::Index>(),
    ) {
        let mut stream = Vec::new();
        for (opcode, body) in &bodies {
            stream.extend_from_slice(&build_frame(*opcode, body));
        }
        let full = split_frames(&stream);
        prop_assert_eq!(full.frames.len(), bodies.len());
        prop_assert_eq!(full.consumed, stream.len() as u64);
        prop_assert_eq!(full.truncated_frames, 0);
        let mut expected_start = 0u64;
        for (frame, (opcode, body)) in full.frames.iter().zip(&bodies) {
            prop_assert_eq!(frame.start, expected_start);
            prop_assert_eq!(frame.opcode, *opcode);
            prop_assert_eq!(frame.body, &body[..]);
            expected_start += frame.wire_len() as u64;
        }

        // Truncate mid-stream: whole frames before the cut still parse; a
        // partial tail is dropped and counted exactly when the cut falls
        // strictly inside a frame.
        let cut_at = 1 + cut.index(stream.len());
        if cut_at < stream.len() {
            let truncated = split_frames(&stream[..cut_at]);
            prop_assert!(truncated.consumed <= cut_at as u64);
            let on_boundary = {
                let mut offsets = vec![0usize];
                let mut acc = 0usize;
                for (_, body) in &bodies {
                    acc += 4 + body.len();
                    offsets.push(acc);
                }
                offsets.contains(&cut_at)
            };
            prop_assert_eq!(truncated.truncated_frames, if on_boundary { 0 } else { 1 });
            for (frame, (opcode, _)) in truncated.frames.iter().zip(&bodies) {
                prop_assert_eq!(frame.opcode, *opcode);
            }
        }
    }
}
