//! Classic little-endian pcap captures of HTTP/1.1 exchanges over Ethernet.

const MSS: usize = 1460;
const SYN: u8 = 0x02;
const ACK: u8 = 0x10;
const PSH_ACK: u8 = 0x18;
const FIN_ACK: u8 = 0x11;

#[derive(Debug, Clone)]
pub struct HttpFlow {
    pub client: ([u8; 4], u16),
    pub server: ([u8; 4], u16),
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

pub fn http_get(host: &str, path: &str) -> Vec<u8> {
    format!("GET {path} HTTP/1.1\r\nHost: {host}\r\nUser-Agent: Mozilla/5.0\r\nAccept: */*\r\n\r\n").into_bytes()
}

pub fn http_response(status: u16, content_type: &str, body: &[u8]) -> Vec<u8> {
    let reason = if status == 200 { "OK" } else { "Status" };
    let mut r = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )
    .into_bytes();
    r.extend_from_slice(body);
    r
}

fn checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum = 0u32;
    let mut odd: Option<u8> = None;
    for chunk in chunks {
        for &b in *chunk {
            match odd.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => odd = Some(b),
            }
        }
    }
    if let Some(hi) = odd {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

struct Writer {
    out: Vec<u8>,
    clock_us: u64,
    ip_id: u16,
}

impl Writer {
    fn segment(&mut self, src: ([u8; 4], u16), dst: ([u8; 4], u16), seq: u32, ack: u32, flags: u8, payload: &[u8]) {
        let mut tcp = vec![0u8; 20];
        tcp[0..2].copy_from_slice(&src.1.to_be_bytes());
        tcp[2..4].copy_from_slice(&dst.1.to_be_bytes());
        tcp[4..8].copy_from_slice(&seq.to_be_bytes());
        tcp[8..12].copy_from_slice(&ack.to_be_bytes());
        tcp[12] = 5 << 4;
        tcp[13] = flags;
        tcp[14..16].copy_from_slice(&64240u16.to_be_bytes());
        let tcp_len = (20 + payload.len()) as u16;
        let mut pseudo = Vec::with_capacity(12);
        pseudo.extend_from_slice(&src.0);
        pseudo.extend_from_slice(&dst.0);
        pseudo.extend_from_slice(&[0, 6]);
        pseudo.extend_from_slice(&tcp_len.to_be_bytes());
        let c = checksum(&[&pseudo, &tcp, payload]);
        tcp[16..18].copy_from_slice(&c.to_be_bytes());

        let mut ip = vec![0u8; 20];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&(20 + tcp_len).to_be_bytes());
        ip[4..6].copy_from_slice(&self.ip_id.to_be_bytes());
        self.ip_id = self.ip_id.wrapping_add(1);
        ip[6] = 0x40; // don't fragment
        ip[8] = 64;
        ip[9] = 6;
        ip[12..16].copy_from_slice(&src.0);
        ip[16..20].copy_from_slice(&dst.0);
        let c = checksum(&[&ip]);
        ip[10..12].copy_from_slice(&c.to_be_bytes());

        let mut frame = Vec::with_capacity(14 + ip.len() + tcp.len() + payload.len());
        frame.extend_from_slice(&[0x00, 0x1C, 0x42, 0x00, 0x00, 0x02]);
        frame.extend_from_slice(&[0x00, 0x1C, 0x42, 0x00, 0x00, 0x01]);
        frame.extend_from_slice(&0x0800u16.to_be_bytes());
        frame.extend_from_slice(&ip);
        frame.extend_from_slice(&tcp);
        frame.extend_from_slice(payload);

        let secs = 1_710_498_600 + self.clock_us / 1_000_000;
        self.out.extend_from_slice(&(secs as u32).to_le_bytes());
        self.out.extend_from_slice(&((self.clock_us % 1_000_000) as u32).to_le_bytes());
        self.out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        self.out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        self.out.extend_from_slice(&frame);
        self.clock_us += 1_500;
    }

    fn stream(&mut self, src: ([u8; 4], u16), dst: ([u8; 4], u16), seq: &mut u32, ack: u32, data: &[u8]) {
        for chunk in data.chunks(MSS) {
            self.segment(src, dst, *seq, ack, PSH_ACK, chunk);
            *seq = seq.wrapping_add(chunk.len() as u32);
        }
    }
}

/// One TCP connection per flow: handshake, request, response, close.
pub fn build_pcap(flows: &[HttpFlow]) -> Vec<u8> {
    let mut w = Writer {
        out: Vec::new(),
        clock_us: 0,
        ip_id: 0x1000,
    };
    w.out.extend_from_slice(&0xA1B2_C3D4u32.to_le_bytes());
    w.out.extend_from_slice(&2u16.to_le_bytes());
    w.out.extend_from_slice(&4u16.to_le_bytes());
    w.out.extend_from_slice(&0u32.to_le_bytes());
    w.out.extend_from_slice(&0u32.to_le_bytes());
    w.out.extend_from_slice(&65535u32.to_le_bytes());
    w.out.extend_from_slice(&1u32.to_le_bytes());
    for (i, f) in flows.iter().enumerate() {
        let (c, s) = (f.client, f.server);
        let mut cseq = 0x1000_0000u32.wrapping_add(i as u32 * 0x0101_0101);
        let mut sseq = 0x7000_0000u32.wrapping_add(i as u32 * 0x0303_0303);
        w.segment(c, s, cseq, 0, SYN, &[]);
        cseq += 1;
        w.segment(s, c, sseq, cseq, SYN | ACK, &[]);
        sseq += 1;
        w.segment(c, s, cseq, sseq, ACK, &[]);
        w.stream(c, s, &mut cseq, sseq, &f.request);
        w.stream(s, c, &mut sseq, cseq, &f.response);
        w.segment(s, c, sseq, cseq, FIN_ACK, &[]);
        w.segment(c, s, cseq, sseq + 1, FIN_ACK, &[]);
    }
    w.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_of_known_header() {
        // Example header from RFC 1071 discussions; checksum field zeroed.
        let h = [
            0x45, 0x00, 0x00, 0x73, 0x00, 0x00, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00, 0xC0, 0xA8, 0x00, 0x01, 0xC0, 0xA8,
            0x00, 0xC7,
        ];
        assert_eq!(checksum(&[&h]), 0xB861);
    }

    #[test]
    fn large_bodies_are_segmented() {
        let flow = HttpFlow {
            client: ([10, 0, 0, 5], 49152),
            server: ([93, 184, 216, 34], 80),
            request: http_get("example.test", "/x"),
            response: http_response(200, "application/octet-stream", &[7u8; 4000]),
        };
        let p = build_pcap(&[flow]);
        assert_eq!(&p[..4], &[0xD4, 0xC3, 0xB2, 0xA1]);
        // 3 handshake + 1 request + 3 response + 2 close
        let mut pos = 24;
        let mut packets = 0;
        while pos < p.len() {
            let incl = u32::from_le_bytes(p[pos + 8..pos + 12].try_into().unwrap()) as usize;
            pos += 16 + incl;
            packets += 1;
        }
        assert_eq!(packets, 9);
    }
}
