//! Blocking newline-delimited TCP client, used by the scenario runner and tests.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use thiserror::Error;
use twin_core::session::Command;

use crate::wire::{decode, encode, AckMsg, DecodeError, Envelope, Message};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("server closed the connection")]
    Closed,
    #[error("undecodable server frame: {0}")]
    Decode(#[from] DecodeError),
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: u64,
    stamp_ms: u64,
}

/// Everything the server sent in response to one command, up to its ack.
#[derive(Debug, Clone)]
pub struct Reply {
    pub messages: Vec<Message>,
    pub ack: AckMsg,
}

impl Reply {
    pub fn error(&self) -> Option<(&str, &str)> {
        self.messages.iter().find_map(|m| match m {
            Message::Error(e) => Some((e.code.as_str(), e.message.as_str())),
            _ => None,
        })
    }
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(120)))?;
        Ok(Client { reader: BufReader::new(stream.try_clone()?), writer: stream, seq: 0, stamp_ms: 0 })
    }

    /// Sends one raw line, bypassing the codec.
    pub fn send_raw(&mut self, line: &[u8]) -> Result<(), ClientError> {
        self.writer.write_all(line)?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    /// Sends a message with the next sequence number and returns that number.
    pub fn send(&mut self, payload: Message) -> Result<u64, ClientError> {
        self.seq += 1;
        self.stamp_ms += 1;
        let line = encode(&Envelope::new(self.seq, self.stamp_ms, payload));
        self.send_raw(line.as_bytes())?;
        Ok(self.seq)
    }

    pub fn recv(&mut self) -> Result<Envelope, ClientError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(ClientError::Closed);
        }
        Ok(decode(line.as_bytes())?)
    }

    /// Sends `cmd` and collects server messages until its ack arrives.
    pub fn request(&mut self, cmd: &Command) -> Result<Reply, ClientError> {
        let seq = self.send(Message::from_command(cmd))?;
        self.collect_until_ack(seq)
    }

    pub fn collect_until_ack(&mut self, seq: u64) -> Result<Reply, ClientError> {
        let mut messages = Vec::new();
        loop {
            match self.recv()?.payload {
                Message::Ack(ack) if ack.command_seq == seq => return Ok(Reply { messages, ack }),
                m => messages.push(m),
            }
        }
    }
}
