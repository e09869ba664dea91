use base64::engine::general_purpose::STANDARD;
use base64::Engine;

#[derive(Debug, Clone)]
pub struct AttachmentSpec {
    pub filename: Option<String>,
    pub mime_type: String,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct EmlSpec {
    pub from: String,
    pub to: String,
    pub subject: String,
    pub body: String,
    pub html: Option<String>,
    pub attachments: Vec<AttachmentSpec>,
    pub boundary: String,
}

impl Default for EmlSpec {
    fn default() -> Self {
        Self {
            from: "sender@example.test".into(),
            to: "analyst@example.test".into(),
            subject: "test".into(),
            body: String::new(),
            html: None,
            attachments: Vec::new(),
            boundary: "=_artiscope_boundary_0".into(),
        }
    }
}

/// Base64 wrapped at 76 columns with CRLF, as mail clients emit it.
pub fn base64_lines(data: &[u8]) -> String {
    let enc = STANDARD.encode(data);
    let mut out = String::new();
    for chunk in enc.as_bytes().chunks(76) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
        out.push_str("\r\n");
    }
    out
}

fn crlf(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\n', "\r\n")
}

pub fn build_eml(spec: &EmlSpec) -> Vec<u8> {
    let b = &spec.boundary;
    let mut m = String::new();
    m.push_str(&format!("From: {}\r\n", spec.from));
    m.push_str(&format!("To: {}\r\n", spec.to));
    m.push_str(&format!("Subject: {}\r\n", spec.subject));
    m.push_str("Date: Fri, 15 Mar 2024 10:30:00 +0000\r\n");
    m.push_str("Message-ID: <fixture@example.test>\r\n");
    m.push_str("MIME-Version: 1.0\r\n");
    m.push_str(&format!("Content-Type: multipart/mixed; boundary=\"{b}\"\r\n\r\n"));
    m.push_str("This is a multi-part message in MIME format.\r\n");

    m.push_str(&format!("--{b}\r\n"));
    m.push_str("Content-Type: text/plain; charset=utf-8\r\nContent-Transfer-Encoding: 7bit\r\n\r\n");
    m.push_str(&crlf(&spec.body));
    if !spec.body.ends_with('\n') {
        m.push_str("\r\n");
    }
    if let Some(html) = &spec.html {
        m.push_str(&format!("--{b}\r\n"));
        m.push_str("Content-Type: text/html; charset=utf-8\r\nContent-Transfer-Encoding: base64\r\n\r\n");
        m.push_str(&base64_lines(html.as_bytes()));
    }
    for a in &spec.attachments {
        m.push_str(&format!("--{b}\r\n"));
        match &a.filename {
            Some(name) => {
                m.push_str(&format!("Content-Type: {}; name=\"{name}\"\r\n", a.mime_type));
                m.push_str(&format!("Content-Disposition: attachment; filename=\"{name}\"\r\n"));
            }
            None => {
                m.push_str(&format!("Content-Type: {}\r\n", a.mime_type));
                m.push_str("Content-Disposition: attachment\r\n");
            }
        }
        m.push_str("Content-Transfer-Encoding: base64\r\n\r\n");
        m.push_str(&base64_lines(&a.data));
    }
    m.push_str(&format!("--{b}--\r\n"));
    m.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_at_76() {
        let s = base64_lines(&[0u8; 100]);
        let lines: Vec<&str> = s.split("\r\n").collect();
        assert_eq!(lines[0].len(), 76);
        assert_eq!(lines.last(), Some(&""));
    }

    #[test]
    fn headers_first() {
        let e = build_eml(&EmlSpec {
            subject: "hi".into(),
            ..Default::default()
        });
        let text = String::from_utf8(e).unwrap();
        assert!(text.starts_with("From: sender@example.test\r\n"));
        assert!(text.contains("Subject: hi\r\n"));
        assert!(text.ends_with("--=_artiscope_boundary_0--\r\n"));
    }
}
