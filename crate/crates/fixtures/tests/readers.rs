//! The builders read back through third-party decoders.

use std::io::{Cursor, Read};

use artiscope_fixtures::{build_zip, contracts, dropper, Method, ZipEntrySpec};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;

fn unzip(archive: &[u8], name: &str, password: Option<&str>) -> Vec<u8> {
    let mut z = zip::ZipArchive::new(Cursor::new(archive)).expect("zip crate opens it");
    let mut out = Vec::new();
    match password {
        Some(pw) => z.by_name_decrypt(name, pw.as_bytes()).expect("password accepted").read_to_end(&mut out),
        None => z.by_name(name).expect("entry present").read_to_end(&mut out),
    }
    .expect("entry inflates and its CRC matches");
    out
}

#[test]
fn zip_entries_round_trip() {
    let text = b"alpha beta gamma ".repeat(40);
    let archive = build_zip(
        &[
            ZipEntrySpec::new("stored.txt", text.clone(), Method::Stored),
            ZipEntrySpec::new("deflated.txt", text.clone(), Method::Deflate),
            ZipEntrySpec::new("locked.bin", text.clone(), Method::Deflate).encrypted("hunter2"),
            ZipEntrySpec::new("empty", Vec::new(), Method::Stored),
        ],
        "archive comment",
        7,
    );
    let z = zip::ZipArchive::new(Cursor::new(&archive)).unwrap();
    assert_eq!(z.comment(), b"archive comment");
    assert_eq!(z.len(), 4);
    assert_eq!(unzip(&archive, "stored.txt", None), text);
    assert_eq!(unzip(&archive, "deflated.txt", None), text);
    assert_eq!(unzip(&archive, "locked.bin", Some("hunter2")), text);
    assert!(unzip(&archive, "empty", None).is_empty());

    let mut z = zip::ZipArchive::new(Cursor::new(&archive)).unwrap();
    assert!(z.by_name_decrypt("locked.bin", b"wrong").is_err());
    let e = z.by_name("deflated.txt").unwrap();
    assert_eq!(e.crc32(), crc32fast::hash(&text));
    assert_eq!(e.compression(), zip::CompressionMethod::Deflated);
}

fn mime_attachment(eml: &[u8]) -> Vec<u8> {
    let text = std::str::from_utf8(eml).unwrap();
    let start = text.find("Content-Transfer-Encoding: base64\r\n").expect("base64 part");
    let body = &text[start..];
    let body = &body[body.find("\r\n\r\n").unwrap() + 4..];
    let body = &body[..body.find("\r\n--").unwrap()];
    STANDARD.decode(body.replace("\r\n", "")).unwrap()
}

#[test]
fn contracts_bundle_nests() {
    let c = contracts();
    assert_eq!(mime_attachment(&c.eml), c.zip);
    assert_eq!(unzip(&c.zip, c.pe_name, Some(c.password)), c.pe);
    assert_eq!(&c.pe[..2], b"MZ");
    let e_lfanew = u32::from_le_bytes(c.pe[0x3c..0x40].try_into().unwrap()) as usize;
    assert_eq!(&c.pe[e_lfanew..e_lfanew + 4], b"PE\0\0");
}

/// Concatenated TCP payloads per direction, keyed by (src port, dst port).
fn tcp_streams(pcap: &[u8]) -> std::collections::BTreeMap<(u16, u16), Vec<u8>> {
    assert_eq!(&pcap[..4], &0xA1B2_C3D4u32.to_le_bytes());
    assert_eq!(u32::from_le_bytes(pcap[20..24].try_into().unwrap()), 1, "ethernet");
    let mut streams = std::collections::BTreeMap::<_, Vec<u8>>::new();
    let mut at = 24;
    while at < pcap.len() {
        let caplen = u32::from_le_bytes(pcap[at + 8..at + 12].try_into().unwrap()) as usize;
        let frame = &pcap[at + 16..at + 16 + caplen];
        at += 16 + caplen;
        assert_eq!(&frame[12..14], &[0x08, 0x00]);
        let ip = &frame[14..];
        let ihl = (ip[0] & 0x0f) as usize * 4;
        let total = u16::from_be_bytes([ip[2], ip[3]]) as usize;
        assert_eq!(ip[9], 6, "tcp");
        let tcp = &ip[ihl..total];
        let ports = (u16::from_be_bytes([tcp[0], tcp[1]]), u16::from_be_bytes([tcp[2], tcp[3]]));
        let offset = (tcp[12] >> 4) as usize * 4;
        streams.entry(ports).or_default().extend_from_slice(&tcp[offset..]);
    }
    streams
}

#[test]
fn dropper_bundle_nests() {
    let d = dropper();
    let streams = tcp_streams(&d.pcap);
    let downloads: Vec<&Vec<u8>> = streams.iter().filter(|((src, _), _)| *src == 80).map(|(_, v)| v).collect();
    assert_eq!(downloads.len(), 2);
    assert!(downloads[0].ends_with(&d.script));
    assert!(downloads[1].ends_with(&d.pe));

    assert_eq!(&d.pe[d.overlay_offset..], &d.overlay_zip[..]);
    assert_eq!(unzip(&d.overlay_zip, "config.ini", Some(d.password)), d.config);
    let script = String::from_utf8(d.script.clone()).unwrap();
    let codes = &script[script.find("fromCharCode(").unwrap() + 13..script.find(");").unwrap()];
    let decoded: String = codes.split(',').map(|c| char::from_u32(c.parse().unwrap()).unwrap()).collect();
    assert_eq!(decoded, d.hidden_url);
}
