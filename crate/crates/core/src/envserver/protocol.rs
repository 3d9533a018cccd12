use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{EnvSpec, GlobalState, Observation, StepResult};

/// Largest accepted frame body, in bytes.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello,
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Step {
        actions: Vec<usize>,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Spec(EnvSpec),
    Obs {
        observations: Vec<Observation>,
        state: GlobalState,
    },
    Transition(StepResult),
    Error {
        code: ErrorCode,
        message: String,
    },
    Bye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadFrame,
    UnknownType,
    NotReset,
    BadActions,
    EpisodeOver,
    FrameTooLarge,
    EnvError,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadFrame => "bad_frame",
            ErrorCode::UnknownType => "unknown_type",
            ErrorCode::NotReset => "not_reset",
            ErrorCode::BadActions => "bad_actions",
            ErrorCode::EpisodeOver => "episode_over",
            ErrorCode::FrameTooLarge => "frame_too_large",
            ErrorCode::EnvError => "env_error",
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Reply {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Reply::Error {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug)]
pub enum FrameError {
    /// Declared body length above [`MAX_FRAME`].
    TooLarge(usize),
    Io(io::Error),
}

impl From<io::Error> for FrameError {
    fn from(e: io::Error) -> Self {
        FrameError::Io(e)
    }
}

/// Writes one frame: 4-byte big-endian length, then the body.
pub fn write_frame(w: &mut impl Write, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| io::Error::other("frame body exceeds u32"))?;
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(body);
    w.write_all(&buf)?;
    w.flush()
}

pub fn write_message(w: &mut impl Write, msg: &impl Serialize) -> io::Result<()> {
    write_frame(w, &serde_json::to_vec(msg).map_err(io::Error::other)?)
}

/// Reads one frame body. `Ok(None)` on a clean end of stream before a
/// length prefix.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>, FrameError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Decodes a request body, mapping failures to the wire error codes.
pub fn parse_request(body: &[u8]) -> Result<Request, Reply> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| Reply::error(ErrorCode::BadFrame, format!("invalid JSON: {e}")))?;
    let ty = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Reply::error(ErrorCode::BadFrame, "missing string field \"type\""))?
        .to_string();
    if !matches!(ty.as_str(), "hello" | "reset" | "step" | "bye") {
        return Err(Reply::error(ErrorCode::UnknownType, format!("unknown message type {ty:?}")));
    }
    serde_json::from_value(value)
        .map_err(|e| Reply::error(ErrorCode::BadFrame, format!("malformed {ty}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"type\":\"hello\"}").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 16]);
        let body = read_frame(&mut buf.as_slice()).unwrap().unwrap();
        assert_eq!(parse_request(&body), Ok(Request::Hello));
    }

    #[test]
    fn oversized_prefix_is_rejected_before_reading() {
        let len = (MAX_FRAME as u32 + 1).to_be_bytes();
        assert!(matches!(
            read_frame(&mut len.as_slice()),
            Err(FrameError::TooLarge(n)) if n == MAX_FRAME + 1
        ));
    }

    #[test]
    fn error_codes() {
        let code = |b: &[u8]| match parse_request(b) {
            Err(Reply::Error { code, .. }) => code,
            other => panic!("{other:?}"),
        };
        assert_eq!(code(b"not json"), ErrorCode::BadFrame);
        assert_eq!(code(b"{\"kind\":1}"), ErrorCode::BadFrame);
        assert_eq!(code(b"{\"type\":\"dance\"}"), ErrorCode::UnknownType);
        assert_eq!(code(b"{\"type\":\"step\",\"actions\":\"x\"}"), ErrorCode::BadFrame);
        assert_eq!(
            serde_json::to_value(ErrorCode::FrameTooLarge).unwrap(),
            serde_json::json!("frame_too_large")
        );
    }

    #[test]
    fn reset_seed_is_optional() {
        assert_eq!(parse_request(b"{\"type\":\"reset\"}"), Ok(Request::Reset { seed: None }));
        assert_eq!(
            parse_request(b"{\"type\":\"reset\",\"seed\":9}"),
            Ok(Request::Reset { seed: Some(9) })
        );
    }
}
