// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! Line-delimited JSON device protocol.
//!
//! Requests: `{"op":"reset"}`, `{"op":"observe"}`,
//! `{"op":"execute","widget_id":..,"action":..,"value":..}`.
//! Responses: `{"ok":true,"state":{..}}` or `{"ok":false,"reason":..}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{ConcreteEvent, Device, DriverError, ExecOutcome, GuiState};
use crate::ir::ActionKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum WireRequest {
    Reset,
    Observe,
    Execute {
        widget_id: String,
        action: ActionKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<GuiState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl WireResponse {
    pub fn state(state: GuiState) -> Self {
        WireResponse {
            ok: true,
            state: Some(state),
            reason: None,
        }
    }

    pub fn failure(reason: impl Into<String>) -> Self {
        WireResponse {
            ok: false,
            state: None,
            reason: Some(reason.into()),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire response serializes")
    }
}

/// Client side of the protocol over any byte stream pair.
pub struct WireDevice {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl WireDevice {
    pub fn from_streams(
        reader: impl std::io::Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        WireDevice {
            reader: Box::new(BufReader::new(reader)),
            writer: Box::new(writer),
            child: None,
        }
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs) -> Result<Self, DriverError> {
        let stream = TcpStream::connect(addr)?;
        let reader = stream.try_clone()?;
        Ok(WireDevice::from_streams(reader, stream))
    }

    /// Spawns `program args..` and speaks the protocol over its stdio.
    pub fn spawn(program: &str, args: &[&str]) -> Result<Self, DriverError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin: ChildStdin = child
            .stdin
            .take()
            .ok_or_else(|| DriverError::Transport("child stdin unavailable".into()))?;
        let stdout: ChildStdout = child
            .stdout
            .take()
            .ok_or_else(|| DriverError::Transport("child stdout unavailable".into()))?;
        let mut dev = WireDevice::from_streams(stdout, stdin);
        dev.child = Some(child);
        Ok(dev)
    }

    fn roundtrip(&mut self, request: &WireRequest) -> Result<WireResponse, DriverError> {
        let line = serde_json::to_string(request).expect("wire request serializes");
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Err(DriverError::Transport("device closed the stream".into()));
        }
        serde_json::from_str(buf.trim_end())
            .map_err(|e| DriverError::Protocol(format!("malformed response: {e}")))
    }

    fn expect_state(&mut self, request: WireRequest) -> Result<GuiState, DriverError> {
        let resp = self.roundtrip(&request)?;
        match (resp.ok, resp.state) {
            (true, Some(state)) => Ok(state),
            (true, None) => Err(DriverError::Protocol("ok response without state".into())),
            (false, _) => Err(DriverError::Protocol(
                resp.reason.unwrap_or_else(|| "request failed".into()),
            )),
        }
    }
}

impl Drop for WireDevice {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Device for WireDevice {
    fn reset(&mut self) -> Result<GuiState, DriverError> {
        self.expect_state(WireRequest::Reset)
    }

    fn observe(&mut self) -> Result<GuiState, DriverError> {
        self.expect_state(WireRequest::Observe)
    }

    fn execute(&mut self, event: &ConcreteEvent) -> Result<ExecOutcome, DriverError> {
        let resp = self.roundtrip(&WireRequest::Execute {
            widget_id: event.widget_id.clone(),
            action: event.action,
            value: event.value.clone(),
        })?;
        match (resp.ok, resp.state) {
            (true, Some(state)) => Ok(ExecOutcome::Ok(state)),
            (true, None) => Err(DriverError::Protocol("ok response without state".into())),
            (false, _) => Ok(ExecOutcome::Rejected(
                resp.reason.unwrap_or_else(|| "rejected".into()),
            )),
        }
    }
}

/// Answers one request line against `device`.
pub fn handle_request_line(device: &mut dyn Device, line: &str) -> WireResponse {
    let request: WireRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return WireResponse::failure(format!("malformed request: {e}")),
    };
    let result = match request {
        WireRequest::Reset => device.reset().map(WireResponse::state),
        WireRequest::Observe => device.observe().map(WireResponse::state),
        WireRequest::Execute {
            widget_id,
            action,
            value,
        } => device.observe().and_then(|state| {
            let Some(widget) = state.widget(&widget_id) else {
                return Ok(WireResponse::failure(format!(
                    "no widget `{widget_id}` in state `{}`",
                    state.state_id
                )));
            };
            let event = ConcreteEvent::on(&state, widget, action, value);
            device.execute(&event).map(|outcome| match outcome {
                ExecOutcome::Ok(s) => WireResponse::state(s),
                ExecOutcome::Rejected(reason) => WireResponse::failure(reason),
            })
        }),
    };
    result.unwrap_or_else(|e| WireResponse::failure(e.to_string()))
}

/// Serves the protocol until the reader reaches end of stream.
pub fn serve(
    device: &mut dyn Device,
    reader: impl BufRead,
    mut writer: impl Write,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_request_line(device, line.trim());
        writer.write_all(resp.to_line().as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
