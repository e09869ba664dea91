use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Result};
use artiscope::config::Config;
use artiscope::engine::{ArtifactId, BehavioralAction, Session, TransformKind, TransformRequest};
use artiscope::llm::{self, client_from_config};
use artiscope::payload::{
    ActionPayload, AnalyzePayload, DerivedPayload, FindingsPayload, SuggestionsPayload, TreePayload,
};
use artiscope::store::{self, export_report, ReportFormat};
use serde::Serialize;

use crate::render;
use crate::{Cli, Command, Target};

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn open(path: &Path) -> Result<Session> {
    Ok(store::load(path)?)
}

fn open_target(target: &Target) -> Result<(Session, ArtifactId)> {
    let session = open(&target.session)?;
    let id = ArtifactId::from_str(&target.artifact)?;
    session.artifact(id)?;
    Ok((session, id))
}

/// Views, actions, transforms and chats change the session; write it back.
fn persist(session: &Session, path: &Path) -> Result<()> {
    store::save(session, path)?;
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Analyze { file, save, rules, out: o } => {
            config.rules.extra.extend(rules.iter().map(|p| p.display().to_string()));
            let data = std::fs::read(&file).map_err(|e| anyhow!("cannot read {}: {e}", file.display()))?;
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "upload".to_string());
            let mut session = config.new_session(name.clone())?;
            let outcome = session.open(&name, data)?;
            if let Some(path) = &save {
                persist(&session, path)?;
            }
            if o.json {
                print_json(out, &AnalyzePayload::of(&session, outcome.artifact))
            } else {
                render::tree(out, &TreePayload::of(&session))?;
                writeln!(out)?;
                render::suggestions(out, &SuggestionsPayload::of(&session))
            }
        }
        Command::Tree { session, out: o } => {
            let payload = TreePayload::of(&open(&session)?);
            if o.json {
                print_json(out, &payload)
            } else {
                render::tree(out, &payload)
            }
        }
        Command::Findings { session, out: o } => {
            let payload = FindingsPayload::of(&open(&session)?);
            if o.json {
                print_json(out, &payload)
            } else {
                render::findings(out, &payload)
            }
        }
        Command::Suggestions { session, out: o } => {
            let payload = SuggestionsPayload::of(&open(&session)?);
            if o.json {
                print_json(out, &payload)
            } else {
                render::suggestions(out, &payload)
            }
        }
        Command::Strings { target, min_length, out: o } => {
            let (mut session, id) = open_target(&target)?;
            let view = session.view_strings(id, min_length)?;
            persist(&session, &target.session)?;
            if o.json {
                print_json(out, &view)
            } else {
                render::strings(out, &view)
            }
        }
        Command::Hex {
            target,
            offset,
            length,
            out: o,
        } => {
            let (mut session, id) = open_target(&target)?;
            let view = session.view_hex(id, offset, length)?;
            persist(&session, &target.session)?;
            if o.json {
                print_json(out, &view)
            } else {
                render::hex(out, &view)
            }
        }
        Command::Entropy {
            target,
            window,
            stride,
            out: o,
        } => {
            let (mut session, id) = open_target(&target)?;
            let view = session.view_entropy(id, window, stride)?;
            persist(&session, &target.session)?;
            if o.json {
                print_json(out, &view)
            } else {
                render::entropy(out, &view)
            }
        }
        Command::Transform {
            target,
            kind,
            params,
            out: o,
        } => {
            let (mut session, id) = open_target(&target)?;
            let kind = TransformKind::from_str(&kind).map_err(|e| anyhow!(e))?;
            let request = TransformRequest {
                kind,
                target: id,
                params: params.into_iter().collect(),
            };
            let (artifact, outcome) = session.run_transform(&request)?;
            persist(&session, &target.session)?;
            let payload = DerivedPayload {
                artifact,
                outcome,
                suggestions: SuggestionsPayload::of(&session),
            };
            if o.json {
                print_json(out, &payload)
            } else {
                render::derived(out, &session, &payload)
            }
        }
        Command::Act {
            target,
            action,
            params,
            out: o,
        } => {
            let (mut session, id) = open_target(&target)?;
            let params: BTreeMap<String, String> = params.into_iter().collect();
            let fact = if action.eq_ignore_ascii_case("rename") {
                let name = params
                    .get("name")
                    .ok_or_else(|| anyhow!("Rename requires --param name=<new name>"))?;
                session.apply_rename(id, name)?;
                None
            } else {
                let action = BehavioralAction::from_str(&action).map_err(|e| anyhow!(e))?;
                let fact = session.record_action(action, id, params)?;
                let names = |a| session.display_name(a);
                Some(fact.atom().display_with(&names))
            };
            persist(&session, &target.session)?;
            let payload = ActionPayload {
                fact,
                suggestions: SuggestionsPayload::of(&session),
            };
            if o.json {
                print_json(out, &payload)
            } else {
                match &payload.fact {
                    Some(f) => writeln!(out, "recorded {f}")?,
                    None => writeln!(out, "renamed {id}")?,
                }
                render::suggestions(out, &payload.suggestions)
            }
        }
        Command::Report { session, md } => {
            let format = if md { ReportFormat::Markdown } else { ReportFormat::PlainText };
            out.write_all(export_report(&open(&session)?, format).as_bytes())?;
            Ok(())
        }
        Command::Chat { target, question, out: o } => {
            let (mut session, id) = open_target(&target)?;
            let client = client_from_config(&config.llm)?;
            let result = llm::chat(&mut session, client.as_ref(), &config.llm, id, &question);
            // Failed exchanges are logged too.
            persist(&session, &target.session)?;
            let outcome = result?;
            if o.json {
                print_json(out, &outcome)
            } else {
                writeln!(out, "{}", outcome.reply)?;
                Ok(())
            }
        }
    }
}
