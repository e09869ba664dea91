//! Plain-text output.

use std::io::Write;

use anyhow::Result;
use artiscope::engine::{EntropyView, HexView, Session, StringsView};
use artiscope::payload::{DerivedPayload, FindingsPayload, SuggestionsPayload, TreePayload};

pub fn tree(out: &mut dyn Write, tree: &TreePayload) -> Result<()> {
    if tree.artifacts.is_empty() {
        writeln!(out, "(no artifacts)")?;
    }
    for a in &tree.artifacts {
        writeln!(
            out,
            "{}{} {} [{}] {} bytes",
            "  ".repeat(a.depth),
            a.id,
            a.name,
            a.content_type,
            a.size
        )?;
    }
    Ok(())
}

pub fn suggestions(out: &mut dyn Write, s: &SuggestionsPayload) -> Result<()> {
    if let Some(e) = &s.error {
        writeln!(out, "inference failed: {e}")?;
        return Ok(());
    }
    if s.suggestions.is_empty() {
        writeln!(out, "no pending suggestions")?;
    }
    for x in &s.suggestions {
        match &x.action {
            Some(action) => writeln!(out, "- {}  [{action}]", x.text)?,
            None => writeln!(out, "- {}", x.text)?,
        }
    }
    Ok(())
}

pub fn findings(out: &mut dyn Write, f: &FindingsPayload) -> Result<()> {
    writeln!(out, "findings:")?;
    if f.findings.is_empty() {
        writeln!(out, "  (none)")?;
    }
    for x in &f.findings {
        writeln!(out, "  {:?} {} ({}+{})", x.kind, x.value, x.source, x.offset)?;
    }
    writeln!(out, "facts:")?;
    for line in &f.facts {
        writeln!(out, "  {:?} {}", line.origin, line.fact)?;
    }
    Ok(())
}

pub fn strings(out: &mut dyn Write, v: &StringsView) -> Result<()> {
    for s in &v.strings {
        writeln!(out, "{:08x} {:?} {}", s.offset, s.encoding, s.value)?;
    }
    Ok(())
}

pub fn hex(out: &mut dyn Write, v: &HexView) -> Result<()> {
    for row in &v.rows {
        writeln!(out, "{}", row.line)?;
    }
    Ok(())
}

pub fn entropy(out: &mut dyn Write, v: &EntropyView) -> Result<()> {
    let p = &v.profile;
    for (i, e) in p.values.iter().enumerate() {
        let mark = if v.high_regions.contains(&i) { " *" } else { "" };
        writeln!(out, "{:08x} {e:.4}{mark}", i * p.stride)?;
    }
    Ok(())
}

pub fn derived(out: &mut dyn Write, session: &Session, d: &DerivedPayload) -> Result<()> {
    for id in &d.outcome.new_artifacts {
        let a = session.artifact(*id)?;
        writeln!(out, "created {} {} [{}] {} bytes", a.id, a.name, a.content_type, a.len())?;
    }
    if d.outcome.new_artifacts.is_empty() {
        writeln!(out, "output already present as {}", d.artifact)?;
    }
    writeln!(out)?;
    suggestions(out, &d.suggestions)
}
