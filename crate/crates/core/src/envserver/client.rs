use std::io::{self, BufReader};
use std::net::{TcpStream, ToSocketAddrs};

use super::protocol::{read_frame, write_message, ErrorCode, FrameError, Reply, Request};
use crate::env::{EnvSpec, GlobalState, Observation, StepResult};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("server error {code}: {message}")]
    Server { code: ErrorCode, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("server closed the session")]
    Closed,
}

/// Blocking client for one server session.
pub struct RemoteEnv {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    spec: EnvSpec,
    open: bool,
}

impl RemoteEnv {
    /// Connects and performs the hello/spec handshake.
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = stream;
        write_message(&mut writer, &Request::Hello)?;
        let spec = match recv(&mut reader)? {
            Reply::Spec(s) => s,
            other => return Err(unexpected("spec", &other)),
        };
        Ok(RemoteEnv {
            reader,
            writer,
            spec,
            open: true,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Sends any request and returns the raw reply.
    pub fn request(&mut self, req: &Request) -> Result<Reply, ClientError> {
        if !self.open {
            return Err(ClientError::Closed);
        }
        write_message(&mut self.writer, req)?;
        let reply = recv(&mut self.reader)?;
        if reply == Reply::Bye {
            self.open = false;
        }
        Ok(reply)
    }

    /// Sends raw bytes as one frame body and returns the reply.
    pub fn request_raw(&mut self, body: &[u8]) -> Result<Reply, ClientError> {
        super::protocol::write_frame(&mut self.writer, body)?;
        recv(&mut self.reader)
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<(Vec<Observation>, GlobalState), ClientError> {
        match self.request(&Request::Reset { seed })? {
            Reply::Obs {
                observations,
                state,
            } => Ok((observations, state)),
            other => Err(server_or_unexpected("obs", other)),
        }
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult, ClientError> {
        match self.request(&Request::Step {
            actions: actions.to_vec(),
        })? {
            Reply::Transition(r) => Ok(r),
            other => Err(server_or_unexpected("transition", other)),
        }
    }

    pub fn close(mut self) -> Result<(), ClientError> {
        match self.request(&Request::Bye)? {
            Reply::Bye => Ok(()),
            other => Err(unexpected("bye", &other)),
        }
    }
}

fn recv(reader: &mut BufReader<TcpStream>) -> Result<Reply, ClientError> {
    let body = match read_frame(reader) {
        Ok(Some(b)) => b,
        Ok(None) => return Err(ClientError::Closed),
        Err(FrameError::TooLarge(n)) => {
            return Err(ClientError::Protocol(format!("reply of {n} bytes")))
        }
        Err(FrameError::Io(e)) => return Err(e.into()),
    };
    serde_json::from_slice(&body).map_err(|e| ClientError::Protocol(e.to_string()))
}

fn unexpected(wanted: &str, got: &Reply) -> ClientError {
    ClientError::Protocol(format!("expected {wanted}, got {got:?}"))
}

fn server_or_unexpected(wanted: &str, got: Reply) -> ClientError {
    match got {
        Reply::Error { code, message } => ClientError::Server { code, message },
        Reply::Bye => ClientError::Closed,
        other => unexpected(wanted, &other),
    }
}
