//! TCP server exposing environments to external learners.
//!
//! Frames are a 4-byte big-endian length followed by a UTF-8 JSON object
//! whose `"type"` is one of `hello`, `reset`, `step`, `bye` (requests) or
//! `spec`, `obs`, `transition`, `error`, `bye` (replies). Each connection
//! owns a private environment; every request gets exactly one reply.

mod client;
mod protocol;

use std::collections::BTreeMap;
use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::env::{EnvConfig, EnvError, TrafficSignalEnv};

pub use client::{ClientError, RemoteEnv};
pub use protocol::{
    parse_request, read_frame, write_frame, write_message, ErrorCode, FrameError, Reply, Request,
    MAX_FRAME,
};

/// Per-connection protocol state.
pub struct Session {
    env: TrafficSignalEnv,
}

impl Session {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        Ok(Session {
            env: TrafficSignalEnv::new(config)?,
        })
    }

    /// Maps one request to its reply.
    pub fn handle(&mut self, request: Request) -> Reply {
        match request {
            Request::Hello => Reply::Spec(self.env.spec()),
            Request::Reset { seed } => {
                let (observations, state) = match seed {
                    Some(s) => self.env.reset_with_seed(s),
                    None => self.env.reset(),
                };
                Reply::Obs {
                    observations,
                    state,
                }
            }
            Request::Step { actions } => match self.env.step(&actions) {
                Ok(result) => Reply::Transition(result),
                Err(e) => {
                    let code = match e {
                        EnvError::NotReset => ErrorCode::NotReset,
                        EnvError::EpisodeOver => ErrorCode::EpisodeOver,
                        EnvError::ActionArity { .. } | EnvError::ActionOutOfRange { .. } => {
                            ErrorCode::BadActions
                        }
                        _ => ErrorCode::EnvError,
                    };
                    Reply::error(code, e.to_string())
                }
            },
            Request::Bye => Reply::Bye,
        }
    }
}

type Writers = Arc<Mutex<BTreeMap<u64, Arc<Mutex<TcpStream>>>>>;

/// A running server. Dropping the handle does not stop it; call
/// [`shutdown`](Self::shutdown).
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    writers: Writers,
    accept: Option<JoinHandle<()>>,
    sessions: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

/// Binds `bind` and starts accepting connections on a background thread.
pub fn serve(config: EnvConfig, bind: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    config
        .validate()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let writers: Writers = Arc::default();
    let sessions: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
    let next_id = AtomicU64::new(0);
    let accept = {
        let (stop, writers, sessions) = (stop.clone(), writers.clone(), sessions.clone());
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let _ = stream.set_nodelay(true);
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let Ok(write_half) = stream.try_clone() else { continue };
                let writer = Arc::new(Mutex::new(write_half));
                writers.lock().unwrap().insert(id, writer.clone());
                let (cfg, writers) = (config.clone(), writers.clone());
                let handle = std::thread::spawn(move || {
                    if let Err(e) = run_session(cfg, stream, &writer) {
                        log::debug!("session {id} ended: {e}");
                    }
                    writers.lock().unwrap().remove(&id);
                });
                sessions.lock().unwrap().push(handle);
            }
        })
    };
    Ok(ServerHandle {
        addr,
        stop,
        writers,
        accept: Some(accept),
        sessions,
    })
}

fn run_session(config: EnvConfig, stream: TcpStream, writer: &Mutex<TcpStream>) -> io::Result<()> {
    let mut session = Session::new(config).map_err(|e| io::Error::other(e.to_string()))?;
    let mut reader = BufReader::new(stream);
    let send = |reply: &Reply| write_message(&mut *writer.lock().unwrap(), reply);
    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(FrameError::TooLarge(n)) => {
                send(&Reply::error(
                    ErrorCode::FrameTooLarge,
                    format!("frame of {n} bytes exceeds the {MAX_FRAME}-byte limit"),
                ))?;
                let _ = writer.lock().unwrap().shutdown(Shutdown::Both);
                return Ok(());
            }
            Err(FrameError::Io(e)) => return Err(e),
        };
        let reply = match parse_request(&body) {
            Ok(req) => session.handle(req),
            Err(err) => err,
        };
        send(&reply)?;
        if reply == Reply::Bye {
            let _ = writer.lock().unwrap().shutdown(Shutdown::Both);
            return Ok(());
        }
    }
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn live_sessions(&self) -> usize {
        self.writers.lock().unwrap().len()
    }

    /// Stops accepting, sends `bye` to every live session, closes them and
    /// waits for their threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let live: Vec<_> = self.writers.lock().unwrap().values().cloned().collect();
        for w in live {
            let mut s = w.lock().unwrap();
            let _ = write_message(&mut *s, &Reply::Bye);
            let _ = s.shutdown(Shutdown::Both);
        }
        let handles: Vec<_> = self.sessions.lock().unwrap().drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}
