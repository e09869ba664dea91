use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{ArtifactId, SessionEvent, Session};
use crate::inference::{DerivationTree, Fact, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    PlainText,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "plain" | "plaintext" | "txt" => Ok(ReportFormat::PlainText),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format {s:?}")),
        }
    }
}

struct Out {
    md: bool,
    buf: String,
}

impl Out {
    fn heading(&mut self, title: &str) {
        if self.md {
            let _ = writeln!(self.buf, "\n## {title}\n");
        } else {
            let _ = writeln!(self.buf, "\n== {title} ==");
        }
    }

    fn item(&mut self, depth: usize, text: &str) {
        let indent = "  ".repeat(depth);
        if self.md {
            let _ = writeln!(self.buf, "{indent}- {text}");
        } else {
            let _ = writeln!(self.buf, "{indent}{text}");
        }
    }

    fn code(&mut self, s: &str) -> String {
        if self.md {
            format!("`{}`", s.replace('`', "'"))
        } else {
            s.to_string()
        }
    }
}

/// A deterministic narrative of the session: artifact tree, findings,
/// suggestions with their derivations, analyst steps and notes.
pub fn export_report(session: &Session, format: ReportFormat) -> String {
    let mut o = Out {
        md: format == ReportFormat::Markdown,
        buf: String::new(),
    };
    let names = |id: ArtifactId| session.display_name(id);
    if o.md {
        let _ = writeln!(o.buf, "# Investigation report: {}", session.id());
    } else {
        let _ = writeln!(o.buf, "Investigation report: {}", session.id());
    }

    o.heading("Artifacts");
    match session.root() {
        None => o.item(0, "(no artifacts)"),
        Some(root) => tree(session, &mut o, root, 0),
    }

    if !session.findings().is_empty() {
        o.heading("Findings");
        if o.md {
            o.buf.push_str("| Kind | Value | Artifact | Offset |\n|---|---|---|---|\n");
            for f in session.findings() {
                let _ = writeln!(
                    o.buf,
                    "| {} | `{}` | {} | {} |",
                    f.kind,
                    f.value.replace('|', "\\|").replace('`', "'"),
                    names(f.source).unwrap_or_default(),
                    f.offset
                );
            }
        } else {
            for f in session.findings() {
                let _ = writeln!(
                    o.buf,
                    "{:<14} {:<50} {} @{}",
                    f.kind,
                    f.value,
                    names(f.source).unwrap_or_default(),
                    f.offset
                );
            }
        }
    }

    o.heading("Suggestions");
    match session.suggestions() {
        Err(e) => o.item(0, &format!("inference failed: {e}")),
        Ok([]) => o.item(0, "(none)"),
        Ok(list) => {
            for s in list {
                o.item(0, &format!("{} [{}]", s.text, s.rule_name));
                for fact in &s.provenance {
                    derivation(session, &mut o, fact, 1);
                }
            }
        }
    }

    let steps: Vec<String> = session
        .log()
        .iter()
        .filter_map(|e| match &e.event {
            SessionEvent::ActionRecorded {
                action, target, params, ..
            } => {
                let params: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let name = names(*target).unwrap_or_else(|| target.to_string());
                Some(format!("#{} {action} on {name} {}", e.seq, params.join(" ")).trim_end().to_string())
            }
            SessionEvent::ChatExchanged {
                exchange, focus, error, ..
            } => {
                let name = names(*focus).unwrap_or_else(|| focus.to_string());
                let status = if error.is_some() { " (failed)" } else { "" };
                Some(format!("#{} {exchange:?} about {name}{status}", e.seq))
            }
            _ => None,
        })
        .collect();
    if !steps.is_empty() {
        o.heading("Analyst steps");
        for s in steps {
            o.item(0, &s);
        }
    }

    if !session.notes().is_empty() {
        o.heading("Notes");
        for n in session.notes() {
            let name = names(n.artifact).unwrap_or_default();
            o.item(0, &format!("{:?} on {name}: {}", n.kind, n.text.replace('\n', " ")));
        }
    }
    o.buf
}

fn tree(session: &Session, o: &mut Out, id: ArtifactId, depth: usize) {
    let Ok(a) = session.artifact(id) else { return };
    let name = o.code(&a.name);
    let line = format!(
        "{} {} [{}, {} bytes] {}",
        a.id,
        name,
        a.content_type,
        a.data.len(),
        a.provenance.describe()
    );
    o.item(depth, &line);
    for &c in session.children(id) {
        tree(session, o, c, depth + 1);
    }
}

fn derivation(session: &Session, o: &mut Out, fact: &Fact, depth: usize) {
    let names = |id: ArtifactId| session.display_name(id);
    if fact.origin == Origin::Derived {
        if let Ok(t) = session.explain(&fact.atom()) {
            render_tree(o, &t, depth, &names);
            return;
        }
    }
    let text = fact.atom().display_with(&names);
    let text = o.code(&text);
    o.item(depth, &format!("{text} ({:?})", fact.origin));
}

fn render_tree(o: &mut Out, t: &DerivationTree, depth: usize, names: &dyn Fn(ArtifactId) -> Option<String>) {
    match t {
        DerivationTree::Leaf { fact } => {
            let text = o.code(&fact.atom().display_with(names));
            o.item(depth, &format!("{text} ({:?})", fact.origin));
        }
        DerivationTree::Node { fact, rule, premises } => {
            let text = o.code(&fact.atom().display_with(names));
            o.item(depth, &format!("{text} by rule {rule}"));
            for p in premises {
                render_tree(o, p, depth + 1, names);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_session() {
        let s = Session::with_defaults("e");
        let r = export_report(&s, ReportFormat::PlainText);
        assert_eq!(r, "Investigation report: e\n\n== Artifacts ==\n(no artifacts)\n\n== Suggestions ==\n(none)\n");
    }

    #[test]
    fn deterministic_and_markdown() {
        let mut s = Session::with_defaults("d");
        s.open("a.txt", b"visit http://bad.example/p now\n".to_vec()).unwrap();
        let md = export_report(&s, ReportFormat::Markdown);
        assert_eq!(md, export_report(&s, ReportFormat::Markdown));
        assert!(md.starts_with("# Investigation report: d\n"));
        assert!(md.contains("| Url | `http://bad.example/p` | a.txt |"), "{md}");
        assert_eq!("md".parse::<ReportFormat>(), Ok(ReportFormat::Markdown));
    }
}
