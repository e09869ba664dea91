//! Classic libpcap captures: Ethernet, IPv4 and TCP, with naive per-direction
//! reassembly and HTTP/1.x framed by Content-Length.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::Serialize;

use super::{u16_be, u32_at, u32_be};
use crate::engine::{AnalysisResult, Arg, DataIdentifier, IdentifyContext, IdentifyError, ScanScope, ViewKind, ViewerHint};

const GLOBAL_HEADER: usize = 24;
const RECORD_HEADER: usize = 16;
const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const PROTO_TCP: u8 = 6;
const MAX_RECORD: usize = 1 << 18;
const METHODS: [&str; 9] = ["GET", "POST", "PUT", "HEAD", "DELETE", "OPTIONS", "PATCH", "CONNECT", "TRACE"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PcapError {
    #[error("bad capture magic")]
    BadMagic,
    #[error("unsupported capture link type {0}")]
    UnsupportedLinkType(u32),
    #[error("truncated global header")]
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StreamKey {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
}

impl StreamKey {
    fn reversed(self) -> Self {
        Self {
            src_ip: self.dst_ip,
            src_port: self.dst_port,
            dst_ip: self.src_ip,
            dst_port: self.src_port,
        }
    }
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}:{}", self.src_ip, self.src_port, self.dst_ip, self.dst_port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HttpExchange {
    pub stream_key: StreamKey,
    pub method: String,
    pub url: String,
    pub host: String,
    pub response_status: Option<u16>,
    #[serde(skip)]
    pub response_body: Vec<u8>,
    pub body_length: usize,
    pub content_length: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PcapListing {
    pub packets: usize,
    pub tcp_payload_bytes: usize,
    pub truncated_packets: usize,
    pub exchanges: Vec<HttpExchange>,
}

struct Segment {
    seq: u32,
    payload: Vec<u8>,
}

#[derive(Default)]
struct Direction {
    first_packet: usize,
    isn: Option<u32>,
    segments: Vec<Segment>,
}

impl Direction {
    /// Segments in sequence order with exact duplicates dropped.
    fn assemble(mut self) -> Vec<u8> {
        let isn = self.isn.unwrap_or(0);
        self.segments.sort_by_key(|s| s.seq.wrapping_sub(isn));
        self.segments.dedup_by(|b, a| a.seq == b.seq && a.payload == b.payload);
        self.segments.into_iter().flat_map(|s| s.payload).collect()
    }
}

/// Extracts `(key, seq, payload)` from one Ethernet frame, if it is TCP over
/// IPv4 and unfragmented.
fn tcp_segment(frame: &[u8]) -> Option<(StreamKey, u32, &[u8])> {
    let mut ethertype = u16_be(frame, 12)?;
    let mut l3 = 14;
    if ethertype == ETHERTYPE_VLAN {
        ethertype = u16_be(frame, 16)?;
        l3 = 18;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return None;
    }
    let ip = frame.get(l3..)?;
    if ip.first()? >> 4 != 4 {
        return None;
    }
    let ihl = (ip[0] & 0x0F) as usize * 4;
    let total = u16_be(ip, 2)? as usize;
    let frag = u16_be(ip, 6)?;
    if ihl < 20 || ip.len() < total || total < ihl || *ip.get(9)? != PROTO_TCP || frag & 0x3FFF != 0 {
        return None;
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let tcp = &ip[ihl..total];
    let data_off = (*tcp.get(12)? >> 4) as usize * 4;
    if data_off < 20 || data_off > tcp.len() {
        return None;
    }
    let key = StreamKey {
        src_ip,
        src_port: u16_be(tcp, 0)?,
        dst_ip,
        dst_port: u16_be(tcp, 2)?,
    };
    Some((key, u32_be(tcp, 4)?, &tcp[data_off..]))
}

struct Message<'a> {
    start_line: String,
    headers: Vec<(String, String)>,
    body: &'a [u8],
    content_length: Option<usize>,
}

impl Message<'_> {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Reads consecutive HTTP messages. Without Content-Length a request has no
/// body and a response runs to the end of the stream.
fn messages(stream: &[u8], is_request: bool) -> Vec<Message<'_>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < stream.len() {
        let rest = &stream[pos..];
        let Some(head_end) = find(rest, b"\r\n\r\n") else { break };
        let head = String::from_utf8_lossy(&rest[..head_end]);
        let mut lines = head.split("\r\n");
        let start_line = lines.next().unwrap_or_default().to_string();
        let headers: Vec<(String, String)> = lines
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let content_length = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("Content-Length"))
            .and_then(|(_, v)| v.parse::<usize>().ok());
        let body_start = head_end + 4;
        let available = rest.len() - body_start;
        let body_len = match content_length {
            Some(n) => n.min(available),
            None if is_request => 0,
            None => available,
        };
        out.push(Message {
            start_line,
            headers,
            body: &rest[body_start..body_start + body_len],
            content_length,
        });
        pos += body_start + body_len;
    }
    out
}

fn is_request_stream(stream: &[u8]) -> bool {
    METHODS.iter().any(|m| stream.starts_with(m.as_bytes()) && stream.get(m.len()) == Some(&b' '))
}

pub fn parse_pcap(data: &[u8]) -> Result<PcapListing, PcapError> {
    let header = data.get(..GLOBAL_HEADER).ok_or(PcapError::Truncated)?;
    let big_endian = match header[..4] {
        [0xD4, 0xC3, 0xB2, 0xA1] | [0x4D, 0x3C, 0xB2, 0xA1] => false,
        [0xA1, 0xB2, 0xC3, 0xD4] | [0xA1, 0xB2, 0x3C, 0x4D] => true,
        _ => return Err(PcapError::BadMagic),
    };
    let read32 = |d: &[u8], off: usize| if big_endian { u32_be(d, off) } else { u32_at(d, off) };
    let link = read32(header, 20).expect("in bounds");
    if link != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(link));
    }

    let mut listing = PcapListing::default();
    let mut directions: BTreeMap<StreamKey, Direction> = BTreeMap::new();
    let mut pos = GLOBAL_HEADER;
    while pos < data.len() {
        let Some(incl) = read32(data, pos + 8).map(|n| n as usize) else {
            listing.truncated_packets += 1;
            break;
        };
        let start = pos + RECORD_HEADER;
        if incl > MAX_RECORD || start + incl > data.len() {
            listing.truncated_packets += 1;
            break;
        }
        let frame = &data[start..start + incl];
        pos = start + incl;
        let index = listing.packets;
        listing.packets += 1;
        let Some((key, seq, payload)) = tcp_segment(frame) else { continue };
        let dir = directions.entry(key).or_insert_with(|| Direction {
            first_packet: index,
            ..Default::default()
        });
        dir.isn.get_or_insert(seq);
        if !payload.is_empty() {
            listing.tcp_payload_bytes += payload.len();
            dir.segments.push(Segment {
                seq,
                payload: payload.to_vec(),
            });
        }
    }

    let mut firsts: Vec<(usize, StreamKey)> = directions.iter().map(|(k, d)| (d.first_packet, *k)).collect();
    firsts.sort();
    let mut streams: BTreeMap<StreamKey, Vec<u8>> =
        directions.into_iter().map(|(k, d)| (k, d.assemble())).collect();

    for (_, key) in firsts {
        let Some(client) = streams.get(&key) else { continue };
        if !is_request_stream(client) {
            continue;
        }
        let client = streams.remove(&key).expect("present");
        let server = streams.remove(&key.reversed()).unwrap_or_default();
        let responses = messages(&server, false);
        for (i, req) in messages(&client, true).into_iter().enumerate() {
            let mut parts = req.start_line.split_whitespace();
            let method = parts.next().unwrap_or_default().to_string();
            let target = parts.next().unwrap_or("/").to_string();
            let host = req.header("Host").unwrap_or_default().to_string();
            let url = if target.starts_with("http://") || host.is_empty() {
                target
            } else {
                format!("http://{host}{target}")
            };
            let resp = responses.get(i);
            let response_status = resp.and_then(|r| r.start_line.split_whitespace().nth(1)?.parse().ok());
            let response_body = resp.map(|r| r.body.to_vec()).unwrap_or_default();
            listing.exchanges.push(HttpExchange {
                stream_key: key,
                method,
                url,
                host,
                response_status,
                body_length: response_body.len(),
                content_length: resp.and_then(|r| r.content_length),
                response_body,
            });
        }
    }
    Ok(listing)
}

/// Last path segment of a URL, without query or fragment.
fn file_name_of(url: &str) -> Option<String> {
    let path = url.split(['?', '#']).next()?;
    let path = path.split_once("://").map_or(path, |(_, rest)| rest.split_once('/').map_or("", |(_, p)| p));
    let name = path.rsplit('/').next()?;
    (!name.is_empty()).then(|| name.to_string())
}

pub struct PcapIdentifier;

impl DataIdentifier for PcapIdentifier {
    fn name(&self) -> &'static str {
        "pcap"
    }

    fn identify(&self, data: &[u8], _cx: &IdentifyContext<'_>) -> Result<AnalysisResult, IdentifyError> {
        let listing = parse_pcap(data).map_err(|e| match e {
            PcapError::UnsupportedLinkType(_) => IdentifyError::Unsupported(e.to_string()),
            _ => IdentifyError::Parse(e.to_string()),
        })?;
        let mut r = AnalysisResult {
            scan: ScanScope::Skip,
            ..Default::default()
        };
        r.viewer_hints.push(ViewerHint::new(ViewKind::Table, "http exchanges"));
        if listing.truncated_packets > 0 {
            r.flag("TruncatedPacket");
        }
        for (i, ex) in listing.exchanges.iter().enumerate() {
            r.fact("HttpRequest", vec![Arg::This, ex.url.clone().into()]);
            if ex.response_body.is_empty() {
                continue;
            }
            let name = file_name_of(&ex.url).unwrap_or_else(|| format!("download-{}", i + 1));
            let child = r.child(name, ex.response_body.clone(), format!("http:{}#{}", ex.stream_key, i + 1));
            r.fact("DownloadedFile", vec![Arg::This, child]);
        }
        Ok(r)
    }

    fn structured(&self, data: &[u8]) -> Result<serde_json::Value, IdentifyError> {
        let listing = parse_pcap(data).map_err(|e| IdentifyError::Parse(e.to_string()))?;
        serde_json::to_value(listing).map_err(|e| IdentifyError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global(link: u32) -> Vec<u8> {
        let mut g = vec![0xD4, 0xC3, 0xB2, 0xA1, 2, 0, 4, 0];
        g.extend_from_slice(&[0; 8]);
        g.extend_from_slice(&65535u32.to_le_bytes());
        g.extend_from_slice(&link.to_le_bytes());
        g
    }

    #[test]
    fn empty_capture() {
        let l = parse_pcap(&global(1)).unwrap();
        assert_eq!(l.packets, 0);
        assert!(l.exchanges.is_empty());
    }

    #[test]
    fn header_errors() {
        assert_eq!(parse_pcap(&global(101)), Err(PcapError::UnsupportedLinkType(101)));
        let mut bad = global(1);
        bad[0] = 0;
        assert_eq!(parse_pcap(&bad), Err(PcapError::BadMagic));
        assert_eq!(parse_pcap(&bad[..10]), Err(PcapError::Truncated));
    }

    #[test]
    fn truncated_record_is_counted() {
        let mut d = global(1);
        d.extend_from_slice(&[0; 8]);
        d.extend_from_slice(&100u32.to_le_bytes());
        d.extend_from_slice(&100u32.to_le_bytes());
        d.extend_from_slice(&[0; 10]);
        assert_eq!(parse_pcap(&d).unwrap().truncated_packets, 1);
    }

    #[test]
    fn http_framing() {
        let stream = b"HTTP/1.1 200 OK\r\nContent-Length: 3\r\n\r\nabcHTTP/1.1 404 Not Found\r\n\r\nrest";
        let m = messages(stream, false);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].body, b"abc");
        assert_eq!(m[1].body, b"rest");
    }

    #[test]
    fn names_from_urls() {
        assert_eq!(file_name_of("http://h/a/update.js?x=1").as_deref(), Some("update.js"));
        assert_eq!(file_name_of("http://h/"), None);
        assert_eq!(file_name_of("/x.bin").as_deref(), Some("x.bin"));
    }
}
