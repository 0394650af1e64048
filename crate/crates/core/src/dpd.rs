//! Two-step dynamic protocol detection.
//!
//! Step one matches the initiator's first application bytes against the
//! logon and game signatures; step two confirms or rejects the candidate by
//! the responder's first bytes. Signatures are applied to the reassembled
//! stream rather than the first raw packet, so segmentation cannot defeat
//! detection.

use serde::{Deserialize, Serialize};

use crate::capture::reassembly::ReassembledFlow;

/// Connection role resolved by detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    Logon,
    Game,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Logon => "logon",
            Kind::Game => "game",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Flow start not captured; the first payload is unknown.
    Midstream,
    /// No client payload at all.
    NoClientPayload,
    /// Initiator bytes match no signature.
    NoSignature,
    /// Candidate matched but the flow closed without responder payload.
    NoServerPayload,
    /// Responder bytes do not match the candidate's expected signature.
    ResponderMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpdState {
    Confirmed(Kind),
    Rejected(RejectReason),
}

/// Outcome of running both steps over a finished flow.
#[derive(Debug, Clone, Copy)]
pub struct DpdOutcome {
    pub state: DpdState,
    /// Step-one result, kept so candidate-rejection counts can be reported.
    pub candidate: Option<Kind>,
}

/// Step one: candidate kind from the first client-to-server bytes.
///
/// Logon: byte 0 is 0x00 and bytes 4..7 spell "WoW". Game: bytes 2..4 are
/// 0xED 0x01. The logon signature is longer and wins a double match.
pub fn match_initiator(first_c2s: &[u8]) -> Option<Kind> {
    if first_c2s.len() >= 7 && first_c2s[0] == 0x00 && &first_c2s[4..7] == b"WoW" {
        return Some(Kind::Logon);
    }
    if first_c2s.len() >= 4 && first_c2s[2] == 0xed && first_c2s[3] == 0x01 {
        return Some(Kind::Game);
    }
    None
}

/// Step two: does the responder's first payload confirm the candidate?
pub fn confirm_responder(kind: Kind, first_s2c: &[u8]) -> bool {
    match kind {
        Kind::Logon => !first_s2c.is_empty() && first_s2c[0] == 0x00,
        Kind::Game => first_s2c.len() >= 4 && first_s2c[2] == 0xec && first_s2c[3] == 0x01,
    }
}

/// Run both steps over a reassembled flow.
///
/// Mid-stream flows are never confirmed: their true first payload was not
/// observed. A candidate whose flow ends without responder payload is
/// rejected, never confirmed on one-sided evidence.
pub fn classify_flow(flow: &ReassembledFlow) -> DpdOutcome {
    if flow.midstream {
        return DpdOutcome { state: DpdState::Rejected(RejectReason::Midstream), candidate: None };
    }
    if flow.c2s.is_empty() {
        return DpdOutcome {
            state: DpdState::Rejected(RejectReason::NoClientPayload),
            candidate: None,
        };
    }
    let kind = match match_initiator(&flow.c2s.bytes) {
        Some(kind) => kind,
        None => {
            return DpdOutcome {
                state: DpdState::Rejected(RejectReason::NoSignature),
                candidate: None,
            };
        }
    };
    if flow.s2c.is_empty() {
        return DpdOutcome {
            state: DpdState::Rejected(RejectReason::NoServerPayload),
            candidate: Some(kind),
        };
    }
    if confirm_responder(kind, &flow.s2c.bytes) {
        DpdOutcome { state: DpdState::Confirmed(kind), candidate: Some(kind) }
    } else {
        DpdOutcome { state: DpdState::Rejected(RejectReason::ResponderMismatch), candidate: Some(kind) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initiator_logon_signature() {
        let bytes = [0x00, 0x00, 0x22, 0x00, 0x57, 0x6f, 0x57, 0x01];
        assert_eq!(match_initiator(&bytes), Some(Kind::Logon));
    }

    #[test]
    fn initiator_game_signature() {
        let bytes = [0x00, 0x31, 0xed, 0x01, 0xaa, 0xbb];
        assert_eq!(match_initiator(&bytes), Some(Kind::Game));
    }

    #[test]
    fn initiator_no_match() {
        assert_eq!(match_initiator(b"GET "), None);
        // Too short for either test.
        assert_eq!(match_initiator(&[0x00, 0x00, 0xed]), None);
        assert_eq!(match_initiator(&[]), None);
    }

    #[test]
    fn logon_precedence_on_double_match() {
        // Byte-constructible double match: logon layout with 0xED 0x01 at 2..4.
        let bytes = [0x00, 0x00, 0xed, 0x01, 0x57, 0x6f, 0x57];
        assert_eq!(match_initiator(&bytes), Some(Kind::Logon));
    }

    #[test]
    fn responder_confirms_logon() {
        let mut reply = vec![0x00, 0x00];
        reply.extend_from_slice(&[0xab; 32]);
        assert!(confirm_responder(Kind::Logon, &reply));
        assert!(!confirm_responder(Kind::Logon, &[0x01, 0x00]));
        assert!(!confirm_responder(Kind::Logon, &[]));
    }

    #[test]
    fn responder_confirms_game() {
        assert!(confirm_responder(Kind::Game, &[0x00, 0x06, 0xec, 0x01, 1, 2, 3, 4]));
        // Wrong responder opcode.
        assert!(!confirm_responder(Kind::Game, &[0x00, 0x06, 0xed, 0x01, 1, 2, 3, 4]));
        assert!(!confirm_responder(Kind::Game, &[0x00, 0x06]));
    }
}
