//! Newline-delimited JSON gateway for the phone console.
//!
//! The scheduler thread owns the [`Simulation`]; client reader threads only
//! parse requests and push them onto a channel. Every transcript record is
//! broadcast to all connected clients, and a new client first receives the
//! full history so it can rebuild its view.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use smstrack_core::{canonical_command_table, Millis, PhoneNumber, SmsBody};

use crate::engine::Simulation;
use crate::scenario::{EventKind, PowerSource};

const POLL_INTERVAL: Duration = Duration::from_millis(5);

/// Requests a client may send, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SendSms { from: String, body: String },
    Power { source: String, on: bool },
    Restart,
    ListCommands,
}

#[derive(Debug, Serialize)]
struct CommandInfo {
    text: &'static str,
    tag: &'static str,
}

/// Parses one client line into a stimulus, or a reason for rejecting it.
pub fn parse_request(line: &str) -> Result<Request, String> {
    let msg: ClientMessage = serde_json::from_str(line).map_err(|e| format!("malformed request: {e}"))?;
    Ok(match msg {
        ClientMessage::SendSms { from, body } => {
            let sender = PhoneNumber::parse(&from).map_err(|e| e.to_string())?;
            let body = SmsBody::new(body).map_err(|e| e.to_string())?;
            Request::Stimulus(EventKind::InboundSms { sender, body })
        }
        ClientMessage::Power { source, on } => {
            let source = match source.as_str() {
                "main" => PowerSource::Main,
                "backup" => PowerSource::Backup,
                other => return Err(format!("unknown power source `{other}`")),
            };
            Request::Stimulus(EventKind::Power { source, on })
        }
        ClientMessage::Restart => Request::Stimulus(EventKind::Restart),
        ClientMessage::ListCommands => Request::ListCommands,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Stimulus(EventKind),
    ListCommands,
}

pub fn error_reply(reason: &str) -> String {
    json!({ "type": "error", "reason": reason }).to_string()
}

pub fn commands_reply() -> String {
    let commands: Vec<CommandInfo> = canonical_command_table()
        .entries()
        .iter()
        .map(|e| CommandInfo {
            text: e.text,
            tag: e.command.tag(),
        })
        .collect();
    json!({ "type": "commands", "commands": commands }).to_string()
}

struct Client {
    id: u64,
    stream: TcpStream,
}

#[derive(Default)]
struct Hub {
    history: Vec<String>,
    clients: Vec<Client>,
    next_id: u64,
}

impl Hub {
    fn broadcast(&mut self, line: &str) {
        self.history.push(line.to_owned());
        self.clients.retain_mut(|c| write_line(&mut c.stream, line).is_ok());
    }

    fn send_to(&mut self, id: u64, line: &str) {
        if let Some(pos) = self.clients.iter().position(|c| c.id == id) {
            if write_line(&mut self.clients[pos].stream, line).is_err() {
                self.clients.remove(pos);
            }
        }
    }

    fn attach(&mut self, mut stream: TcpStream) -> io::Result<u64> {
        for line in &self.history {
            write_line(&mut stream, line)?;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.clients.push(Client { id, stream });
        Ok(id)
    }
}

fn write_line(stream: &mut TcpStream, line: &str) -> io::Result<()> {
    stream.write_all(line.as_bytes())?;
    stream.write_all(b"\n")
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    /// Virtual milliseconds per real millisecond.
    pub speedup: f64,
    /// Stop once the virtual clock reaches this time.
    pub until_ms: Option<Millis>,
    /// Rewrite the session as a batch scenario file after each stimulus.
    pub record_to: Option<PathBuf>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            speedup: 1.0,
            until_ms: None,
            record_to: None,
        }
    }
}

pub struct Gateway {
    listener: TcpListener,
    sim: Simulation,
    options: GatewayOptions,
    stop: Arc<AtomicBool>,
}

impl Gateway {
    pub fn bind(addr: impl ToSocketAddrs, sim: Simulation, options: GatewayOptions) -> io::Result<Self> {
        if !(options.speedup.is_finite() && options.speedup > 0.0) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "speedup must be a positive number",
            ));
        }
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self {
            listener,
            sim,
            options,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Setting the flag makes [`Gateway::serve`] return.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Runs the virtual clock against wall time until stopped, then returns
    /// the simulation so callers can inspect or record it.
    pub fn serve(self) -> io::Result<Simulation> {
        let Gateway {
            listener,
            mut sim,
            options,
            stop,
        } = self;
        let hub = Arc::new(Mutex::new(Hub::default()));
        let (tx, rx) = mpsc::channel::<(u64, Request)>();

        let acceptor = {
            let hub = Arc::clone(&hub);
            let stop = Arc::clone(&stop);
            thread::spawn(move || accept_loop(listener, hub, tx, stop))
        };

        let result = schedule_loop(&mut sim, &options, &hub, &rx, &stop);
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        for c in hub.lock().expect("hub lock").clients.drain(..) {
            let _ = c.stream.shutdown(std::net::Shutdown::Both);
        }
        result.map(|()| sim)
    }
}

fn schedule_loop(
    sim: &mut Simulation,
    options: &GatewayOptions,
    hub: &Mutex<Hub>,
    rx: &Receiver<(u64, Request)>,
    stop: &AtomicBool,
) -> io::Result<()> {
    let started = Instant::now();
    let base = sim.clock();
    let mut sent = 0;
    let mut recorded = usize::MAX;
    loop {
        while let Ok((client, request)) = rx.try_recv() {
            match request {
                Request::Stimulus(kind) => sim.inject(kind),
                Request::ListCommands => hub.lock().expect("hub lock").send_to(client, &commands_reply()),
            }
        }
        let elapsed = started.elapsed().as_secs_f64() * 1000.0 * options.speedup;
        let mut target = base + elapsed as Millis;
        if let Some(until) = options.until_ms {
            target = target.min(until);
        }
        sim.advance_to(target.max(sim.clock()));

        let records = sim.records();
        if records.len() > sent {
            let mut hub = hub.lock().expect("hub lock");
            for r in &records[sent..] {
                hub.broadcast(&r.to_json());
            }
            sent = records.len();
        }
        if let Some(path) = &options.record_to {
            if sim.stimulus_count() != recorded {
                recorded = sim.stimulus_count();
                std::fs::write(path, sim.recording().to_text())?;
            }
        }
        if stop.load(Ordering::SeqCst) || options.until_ms.is_some_and(|u| sim.clock() >= u) {
            return Ok(());
        }
        thread::sleep(POLL_INTERVAL);
    }
}

fn accept_loop(listener: TcpListener, hub: Arc<Mutex<Hub>>, tx: Sender<(u64, Request)>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                if let Err(e) = start_client(stream, &hub, &tx) {
                    eprintln!("gateway: client setup failed: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL_INTERVAL),
            Err(e) => {
                eprintln!("gateway: accept failed: {e}");
                thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

fn start_client(stream: TcpStream, hub: &Arc<Mutex<Hub>>, tx: &Sender<(u64, Request)>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let id = hub.lock().expect("hub lock").attach(stream)?;
    let hub = Arc::clone(hub);
    let tx = tx.clone();
    thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match parse_request(&line) {
                Ok(request) => {
                    if tx.send((id, request)).is_err() {
                        break;
                    }
                }
                Err(reason) => hub.lock().expect("hub lock").send_to(id, &error_reply(&reason)),
            }
        }
    });
    Ok(())
}
