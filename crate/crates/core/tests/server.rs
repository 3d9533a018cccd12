mod common;

use std::io::{BufReader, Write};
use std::net::TcpStream;

use common::{asymmetric_trips, grid_net};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsc_lab::env::{EnvConfig, TrafficSignalEnv};
use tsc_lab::envserver::*;
use tsc_lab::mesosim::generate_trips;

fn config() -> EnvConfig {
    let net = grid_net(2, 2);
    let flows = generate_trips(&net, &asymmetric_trips());
    EnvConfig::new(net, flows).with_seed(5)
}

fn start() -> ServerHandle {
    serve(config(), "127.0.0.1:0").unwrap()
}

struct Raw {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Raw {
    fn connect(h: &ServerHandle) -> Self {
        let s = TcpStream::connect(h.local_addr()).unwrap();
        Raw { reader: BufReader::new(s.try_clone().unwrap()), writer: s }
    }

    fn send(&mut self, body: &[u8]) -> Option<serde_json::Value> {
        write_frame(&mut self.writer, body).unwrap();
        self.recv()
    }

    fn recv(&mut self) -> Option<serde_json::Value> {
        read_frame(&mut self.reader)
            .ok()
            .flatten()
            .map(|b| serde_json::from_slice(&b).unwrap())
    }
}

fn code(reply: &serde_json::Value) -> &str {
    assert_eq!(reply["type"], "error", "{reply}");
    reply["code"].as_str().unwrap()
}

#[test]
fn hello_returns_the_served_spec() {
    let h = start();
    let remote = RemoteEnv::connect(h.local_addr()).unwrap();
    assert_eq!(remote.spec().n_agents, 4);
    assert_eq!(remote.spec(), &TrafficSignalEnv::new(config()).unwrap().spec());
    remote.close().unwrap();
    h.shutdown();
}

#[test]
fn frames_carry_a_big_endian_length_prefix() {
    let h = start();
    let mut s = TcpStream::connect(h.local_addr()).unwrap();
    let body = br#"{"type":"hello"}"#;
    s.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
    s.write_all(body).unwrap();
    let mut r = BufReader::new(s.try_clone().unwrap());
    let mut len = [0u8; 4];
    std::io::Read::read_exact(&mut r, &mut len).unwrap();
    let n = u32::from_be_bytes(len) as usize;
    let mut reply = vec![0u8; n];
    std::io::Read::read_exact(&mut r, &mut reply).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&reply).unwrap();
    assert_eq!(v["type"], "spec");
    assert_eq!(v["n_agents"], 4);
    h.shutdown();
}

#[test]
fn protocol_errors_keep_the_connection_open() {
    let h = start();
    let mut c = Raw::connect(&h);
    assert_eq!(code(&c.send(br#"{"type":"step","actions":[0,0,0,0]}"#).unwrap()), "not_reset");
    assert_eq!(code(&c.send(br#"{"type":"teleport"}"#).unwrap()), "unknown_type");
    assert_eq!(code(&c.send(b"{not json").unwrap()), "bad_frame");
    assert_eq!(c.send(br#"{"type":"reset","seed":1}"#).unwrap()["type"], "obs");
    let bad = c.send(br#"{"type":"step","actions":[0,0,0]}"#).unwrap();
    assert_eq!(code(&bad), "bad_actions");
    assert!(bad["message"].as_str().unwrap().contains('4'), "{bad}");
    assert_eq!(code(&c.send(br#"{"type":"step","actions":[0,0,0,7]}"#).unwrap()), "bad_actions");
    assert_eq!(c.send(br#"{"type":"step","actions":[0,1,0,1]}"#).unwrap()["type"], "transition");
    assert_eq!(c.send(br#"{"type":"bye"}"#).unwrap()["type"], "bye");
    assert!(c.recv().is_none(), "connection should close after bye");
    h.shutdown();
}

#[test]
fn oversized_frames_close_the_connection() {
    let h = start();
    let mut c = Raw::connect(&h);
    c.writer.write_all(&(MAX_FRAME as u32 + 1).to_be_bytes()).unwrap();
    assert_eq!(code(&c.recv().unwrap()), "frame_too_large");
    assert!(c.recv().is_none());
    h.shutdown();
}

#[test]
fn reset_twice_reinitializes() {
    let h = start();
    let mut remote = RemoteEnv::connect(h.local_addr()).unwrap();
    let first = remote.reset(Some(3)).unwrap();
    for _ in 0..10 {
        remote.step(&[1, 0, 1, 0]).unwrap();
    }
    assert_eq!(remote.reset(Some(3)).unwrap(), first);
    h.shutdown();
}

#[test]
fn remote_transcript_matches_in_process_env() {
    let h = start();
    let mut remote = RemoteEnv::connect(h.local_addr()).unwrap();
    let mut local = TrafficSignalEnv::new(config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in [0, 77] {
        assert_eq!(remote.reset(Some(seed)).unwrap(), local.reset_with_seed(seed));
        for t in 0..72 {
            let a: Vec<usize> = (0..4).map(|_| rng.random_range(0..2)).collect();
            let want = local.step(&a).unwrap();
            assert_eq!(remote.step(&a).unwrap(), want, "seed {seed} step {t}");
        }
        match remote.step(&[0; 4]) {
            Err(ClientError::Server { code, .. }) => assert_eq!(code, ErrorCode::EpisodeOver),
            other => panic!("{other:?}"),
        }
    }
    h.shutdown();
}

#[test]
fn concurrent_sessions_are_isolated() {
    let h = start();
    let addr = h.local_addr();
    let run = move |actions: [usize; 4]| {
        let mut r = RemoteEnv::connect(addr).unwrap();
        r.reset(Some(9)).unwrap();
        (0..72).map(|_| r.step(&actions).unwrap()).collect::<Vec<_>>()
    };
    let threads: Vec<_> = (0..4)
        .map(|i| std::thread::spawn(move || run(if i % 2 == 0 { [0; 4] } else { [1; 4] })))
        .collect();
    let results: Vec<_> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    // Same seed and actions give the same transcript no matter what the
    // neighbouring sessions do.
    assert_eq!(results[0], results[2]);
    assert_eq!(results[1], results[3]);
    assert_ne!(results[0], results[1]);
    assert_eq!(results[0], run([0; 4]));
    h.shutdown();
}

#[test]
fn shutdown_says_bye_to_live_sessions() {
    let h = start();
    let mut c = Raw::connect(&h);
    assert_eq!(c.send(br#"{"type":"hello"}"#).unwrap()["type"], "spec");
    while h.live_sessions() == 0 {
        std::thread::yield_now();
    }
    h.shutdown();
    assert_eq!(c.recv().unwrap()["type"], "bye");
    assert!(c.recv().is_none());
}

#[test]
fn client_refuses_requests_after_bye() {
    let h = start();
    let mut remote = RemoteEnv::connect(h.local_addr()).unwrap();
    assert_eq!(remote.request(&Request::Bye).unwrap(), Reply::Bye);
    assert!(matches!(remote.reset(None), Err(ClientError::Closed)));
    h.shutdown();
}

#[test]
fn binding_a_taken_port_fails() {
    let h = start();
    assert!(serve(config(), h.local_addr()).is_err());
    h.shutdown();
}
