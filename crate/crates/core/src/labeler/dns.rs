//! Minimal DNS client for CNAME queries: UDP with TCP fallback on
//! truncation. Only what chain resolution needs; no caching, no DNSSEC.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::time::Duration;

use thiserror::Error;

pub const TYPE_CNAME: u16 = 5;
const CLASS_IN: u16 = 1;

#[derive(Debug, Error)]
pub enum DnsError {
    #[error("dns io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dns timeout")]
    Timeout,
    #[error("dns server failure (rcode {0})")]
    ServerFailure(u8),
    #[error("malformed dns message: {0}")]
    Malformed(&'static str),
    #[error("invalid name {0:?}")]
    InvalidName(String),
}

/// Encode a single-question query for `name` with the given id.
pub fn encode_query(id: u16, name: &str, qtype: u16) -> Result<Vec<u8>, DnsError> {
    let mut buf = Vec::with_capacity(32 + name.len());
    buf.extend_from_slice(&id.to_be_bytes());
    buf.extend_from_slice(&0x0100u16.to_be_bytes()); // RD
    buf.extend_from_slice(&1u16.to_be_bytes()); // QDCOUNT
    buf.extend_from_slice(&[0; 6]); // AN/NS/AR
    for label in name.trim_end_matches('.').split('.') {
        if label.is_empty() || label.len() > 63 {
            return Err(DnsError::InvalidName(name.to_string()));
        }
        buf.push(label.len() as u8);
        buf.extend_from_slice(label.as_bytes());
    }
    buf.push(0);
    buf.extend_from_slice(&qtype.to_be_bytes());
    buf.extend_from_slice(&CLASS_IN.to_be_bytes());
    Ok(buf)
}

fn read_u16(msg: &[u8], pos: usize) -> Result<u16, DnsError> {
    msg.get(pos..pos + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .ok_or(DnsError::Malformed("truncated u16"))
}

/// Decode a (possibly compressed) name starting at `pos`; returns the name
/// and the position after it in the original stream.
fn decode_name(msg: &[u8], mut pos: usize) -> Result<(String, usize), DnsError> {
    let mut labels: Vec<String> = Vec::new();
    let mut jumped_end = None;
    let mut hops = 0;
    loop {
        let len = *msg.get(pos).ok_or(DnsError::Malformed("truncated name"))? as usize;
        if len & 0xC0 == 0xC0 {
            let ptr = (read_u16(msg, pos)? & 0x3FFF) as usize;
            if jumped_end.is_none() {
                jumped_end = Some(pos + 2);
            }
            hops += 1;
            if hops > 32 {
                return Err(DnsError::Malformed("pointer loop"));
            }
            pos = ptr;
        } else if len == 0 {
            let end = jumped_end.unwrap_or(pos + 1);
            return Ok((labels.join("."), end));
        } else {
            let bytes = msg
                .get(pos + 1..pos + 1 + len)
                .ok_or(DnsError::Malformed("truncated label"))?;
            labels.push(String::from_utf8_lossy(bytes).to_ascii_lowercase());
            pos += 1 + len;
        }
    }
}

/// A decoded answer record of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct CnameAnswer {
    pub owner: String,
    pub target: String,
}

#[derive(Debug)]
pub struct Response {
    pub truncated: bool,
    pub rcode: u8,
    pub cnames: Vec<CnameAnswer>,
}

pub fn decode_response(msg: &[u8], expect_id: u16) -> Result<Response, DnsError> {
    if read_u16(msg, 0)? != expect_id {
        return Err(DnsError::Malformed("id mismatch"));
    }
    let flags = read_u16(msg, 2)?;
    let truncated = flags & 0x0200 != 0;
    let rcode = (flags & 0x000F) as u8;
    let qdcount = read_u16(msg, 4)? as usize;
    let ancount = read_u16(msg, 6)? as usize;

    let mut pos = 12;
    for _ in 0..qdcount {
        let (_, next) = decode_name(msg, pos)?;
        pos = next + 4;
    }
    let mut cnames = Vec::new();
    for _ in 0..ancount {
        let (owner, next) = decode_name(msg, pos)?;
        pos = next;
        let rtype = read_u16(msg, pos)?;
        let rdlength = read_u16(msg, pos + 8)? as usize;
        let rdata_pos = pos + 10;
        if rtype == TYPE_CNAME {
            let (target, _) = decode_name(msg, rdata_pos)?;
            cnames.push(CnameAnswer { owner, target });
        }
        pos = rdata_pos + rdlength;
    }
    Ok(Response {
        truncated,
        rcode,
        cnames,
    })
}

/// One CNAME query over UDP, falling back to TCP when truncated.
pub fn query_cname(
    upstream: SocketAddr,
    name: &str,
    id: u16,
    timeout: Duration,
) -> Result<Vec<CnameAnswer>, DnsError> {
    let query = encode_query(id, name, TYPE_CNAME)?;

    let socket = UdpSocket::bind(if upstream.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" })?;
    socket.set_read_timeout(Some(timeout))?;
    socket.send_to(&query, upstream)?;
    let mut buf = [0u8; 4096];
    let len = match socket.recv(&mut buf) {
        Ok(len) => len,
        Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
            return Err(DnsError::Timeout)
        }
        Err(e) => return Err(e.into()),
    };
    let response = decode_response(&buf[..len], id)?;
    let response = if response.truncated {
        query_cname_tcp(upstream, &query, id, timeout)?
    } else {
        response
    };
    match response.rcode {
        0 | 3 => Ok(response.cnames), // NXDOMAIN treated as no chain
        rcode => Err(DnsError::ServerFailure(rcode)),
    }
}

fn query_cname_tcp(
    upstream: SocketAddr,
    query: &[u8],
    id: u16,
    timeout: Duration,
) -> Result<Response, DnsError> {
    let mut stream = TcpStream::connect_timeout(&upstream, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.write_all(&(query.len() as u16).to_be_bytes())?;
    stream.write_all(query)?;
    let mut len_buf = [0u8; 2];
    stream.read_exact(&mut len_buf)?;
    let mut msg = vec![0u8; u16::from_be_bytes(len_buf) as usize];
    stream.read_exact(&mut msg)?;
    decode_response(&msg, id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_round_trip_shape() {
        let q = encode_query(0x1234, "a.example.com", TYPE_CNAME).unwrap();
        assert_eq!(&q[..2], &[0x12, 0x34]);
        // 12 header + 1+1 + 1+7 + 1+3 + 1 root + 4 tail
        assert_eq!(q.len(), 12 + 15 + 4);
    }

    #[test]
    fn rejects_overlong_label() {
        let name = format!("{}.com", "a".repeat(64));
        assert!(matches!(
            encode_query(1, &name, TYPE_CNAME),
            Err(DnsError::InvalidName(_))
        ));
    }

    #[test]
    fn decode_compressed_answer() {
        // Hand-built response: question a.example.com CNAME, one answer
        // with the owner compressed to the question name and target
        // t.tracker.com.
        let mut msg = Vec::new();
        msg.extend_from_slice(&[0x00, 0x01]); // id
        msg.extend_from_slice(&[0x81, 0x80]); // QR RD RA, rcode 0
        msg.extend_from_slice(&[0, 1, 0, 1, 0, 0, 0, 0]);
        let qname_pos = msg.len() as u16;
        for label in ["a", "example", "com"] {
            msg.push(label.len() as u8);
            msg.extend_from_slice(label.as_bytes());
        }
        msg.push(0);
        msg.extend_from_slice(&TYPE_CNAME.to_be_bytes());
        msg.extend_from_slice(&1u16.to_be_bytes());
        // answer
        msg.extend_from_slice(&(0xC000 | qname_pos).to_be_bytes());
        msg.extend_from_slice(&TYPE_CNAME.to_be_bytes());
        msg.extend_from_slice(&1u16.to_be_bytes());
        msg.extend_from_slice(&300u32.to_be_bytes());
        let mut rdata = Vec::new();
        for label in ["t", "tracker", "com"] {
            rdata.push(label.len() as u8);
            rdata.extend_from_slice(label.as_bytes());
        }
        rdata.push(0);
        msg.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        msg.extend_from_slice(&rdata);

        let resp = decode_response(&msg, 1).unwrap();
        assert_eq!(resp.rcode, 0);
        assert_eq!(
            resp.cnames,
            vec![CnameAnswer {
                owner: "a.example.com".into(),
                target: "t.tracker.com".into()
            }]
        );
    }
}
