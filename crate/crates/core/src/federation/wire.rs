//! Newline-delimited JSON transport between the learner and remote owners.
//!
//! One UTF-8 JSON object per line:
//!
//! ```text
//! {"type":"query","round":k,"theta":[...]}
//! {"type":"response","round":k,"q_bar":[...],"n":n_l}
//! {"type":"error","code":"budget_exhausted"|"bad_round","round":k}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::{DataOwner, GradientQuery, OwnerEndpoint, QueryResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BudgetExhausted,
    BadRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Query { round: usize, theta: Vec<f64> },
    Response { round: usize, q_bar: Vec<f64>, n: usize },
    Error { code: ErrorCode, round: usize },
}

impl Message {
    pub fn to_line(&self) -> Result<String> {
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        Ok(line)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line.trim_end())?)
    }
}

impl From<&QueryResponse> for Message {
    fn from(r: &QueryResponse) -> Self {
        Message::Response { round: r.round, q_bar: r.q_bar.clone(), n: r.n }
    }
}

/// Serves one learner connection on `stream` until it closes, then hands the
/// owner back so its spent budget can be inspected.
pub fn serve_connection(mut owner: DataOwner, stream: TcpStream) -> Result<DataOwner> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match Message::from_line(&line)? {
            Message::Query { round, theta } => {
                let query = GradientQuery { round, theta: ModelParams::new(theta)? };
                match owner.respond(&query) {
                    Ok(resp) => Message::from(&resp),
                    Err(Error::BudgetExhausted { .. }) => Message::Error { code: ErrorCode::BudgetExhausted, round },
                    Err(Error::BadRound { .. }) => Message::Error { code: ErrorCode::BadRound, round },
                    Err(other) => return Err(other),
                }
            }
            other => return Err(Error::Protocol(format!("owner expected a query, got {other:?}"))),
        };
        writer.write_all(reply.to_line()?.as_bytes())?;
        writer.flush()?;
    }
    Ok(owner)
}

/// Accepts a single learner connection on `listener` and serves it.
pub fn serve_owner(owner: DataOwner, listener: &TcpListener) -> Result<DataOwner> {
    let (stream, _) = listener.accept()?;
    serve_connection(owner, stream)
}

/// Learner-side handle on an owner reachable over TCP.
#[derive(Debug)]
pub struct RemoteOwner {
    id: usize,
    n: usize,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl RemoteOwner {
    /// `n` is the owner's declared record count; responses carrying a
    /// different weight are rejected.
    pub fn connect<A: ToSocketAddrs>(addr: A, id: usize, n: usize) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self { id, n, reader: BufReader::new(stream), writer })
    }
}

impl OwnerEndpoint for RemoteOwner {
    fn owner_id(&self) -> usize {
        self.id
    }

    fn record_count(&self) -> usize {
        self.n
    }

    fn answer(&mut self, query: &GradientQuery) -> Result<QueryResponse> {
        let msg = Message::Query { round: query.round, theta: query.theta.as_slice().to_vec() };
        self.writer.write_all(msg.to_line()?.as_bytes())?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::MissingResponse { owner: self.id });
        }
        match Message::from_line(&line)? {
            Message::Response { round, q_bar, n } => Ok(QueryResponse { round, q_bar, n }),
            // The wire format carries no horizon; in a sequential protocol a
            // refusal at round k means the horizon was k − 1.
            Message::Error { code: ErrorCode::BudgetExhausted, round } => Err(Error::BudgetExhausted {
                owner: self.id,
                round,
                horizon: round.saturating_sub(1),
            }),
            Message::Error { code: ErrorCode::BadRound, round } => {
                Err(Error::RemoteBadRound { owner: self.id, round })
            }
            other => Err(Error::Protocol(format!("learner expected a response, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_formats() {
        let q = Message::Query { round: 3, theta: vec![0.5, -1.0] };
        assert_eq!(q.to_line().unwrap(), "{\"type\":\"query\",\"round\":3,\"theta\":[0.5,-1.0]}\n");
        let r = Message::Response { round: 3, q_bar: vec![1.25], n: 40 };
        assert_eq!(r.to_line().unwrap(), "{\"type\":\"response\",\"round\":3,\"q_bar\":[1.25],\"n\":40}\n");
        let e = Message::Error { code: ErrorCode::BudgetExhausted, round: 101 };
        assert_eq!(
            e.to_line().unwrap(),
            "{\"type\":\"error\",\"code\":\"budget_exhausted\",\"round\":101}\n"
        );
        let parsed = Message::from_line(r#"{"type":"error","code":"bad_round","round":7}"#).unwrap();
        assert_eq!(parsed, Message::Error { code: ErrorCode::BadRound, round: 7 });
    }

    #[test]
    fn unknown_type_rejected() {
        assert!(Message::from_line(r#"{"type":"hello"}"#).is_err());
    }
}
