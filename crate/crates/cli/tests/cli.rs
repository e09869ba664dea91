use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn artiscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artiscope"))
        .args(args)
        .current_dir(dir)
        .env_remove("ARTISCOPE_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = artiscope(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(dir: &Path, args: &[&str]) -> Value {
    serde_json::from_str(&ok(dir, args)).unwrap()
}

fn workspace() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let c = artiscope_fixtures::contracts();
    std::fs::write(dir.path().join(c.eml_name), &c.eml).unwrap();
    std::fs::write(dir.path().join("capture.pcap"), artiscope_fixtures::dropper().pcap).unwrap();
    std::fs::write(dir.path().join("empty.bin"), b"").unwrap();
    let path = dir.path().to_path_buf();
    (dir, path)
}

fn id_of(tree: &Value, name: &str) -> String {
    tree["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["name"] == name)
        .unwrap_or_else(|| panic!("no artifact {name}"))["id"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn analyze_then_suggestions_names_the_masquerade() {
    let (_t, dir) = workspace();
    let tree = ok(&dir, &["analyze", "contracts.eml", "--save", "s.gvs"]);
    assert!(tree.contains("    a4 Contracts.pdf.exe [Pe/Magic]"), "{tree}");
    let s = ok(&dir, &["suggestions", "s.gvs"]);
    assert!(s.contains("Inspect imports of Contracts.pdf.exe."), "{s}");
    assert!(s.contains("Try password from email body 'infected' on Contracts.zip."), "{s}");
}

#[test]
fn empty_file_json_has_a_generic_root() {
    let (_t, dir) = workspace();
    let v = json(&dir, &["analyze", "empty.bin", "--json"]);
    assert_eq!(v["root"], "a1");
    assert_eq!(v["tree"]["artifacts"][0]["content_type"]["kind"], "GenericBinary");
    assert_eq!(v["tree"]["artifacts"].as_array().unwrap().len(), 1);
}

#[test]
fn typed_errors_exit_one() {
    let (_t, dir) = workspace();
    ok(&dir, &["analyze", "contracts.eml", "--save", "s.gvs"]);
    let before = std::fs::read(dir.join("s.gvs")).unwrap();
    let out = artiscope(&dir, &["transform", "s.gvs", "a2", "DecodeBase64"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alphabet violation at offset 5"), "{err}");
    assert_eq!(std::fs::read(dir.join("s.gvs")).unwrap(), before);

    let out = artiscope(&dir, &["hex", "s.gvs", "a9"]);
    assert_eq!(out.status.code(), Some(1));
    let out = artiscope(&dir, &["tree", "missing.gvs"]);
    assert_eq!(out.status.code(), Some(1));
    let out = artiscope(&dir, &["analyze", "missing.eml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let (_t, dir) = workspace();
    for args in [&["frobnicate"][..], &["tree"], &["analyze", "x", "--bogus"], &["transform", "s", "a1", "K", "--param", "novalue"]] {
        let out = artiscope(&dir, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with("error: ") && err.contains("--help"), "{args:?}: {err}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn views_are_recorded_in_the_session_file() {
    let (_t, dir) = workspace();
    ok(&dir, &["analyze", "contracts.eml", "--save", "s.gvs"]);
    let review = "Review the extracted strings of Contracts.pdf.exe.";
    assert!(ok(&dir, &["suggestions", "s.gvs"]).contains(review));
    let strings = ok(&dir, &["strings", "s.gvs", "a4"]);
    assert!(strings.contains("SetWindowsHookExA"));
    assert!(!ok(&dir, &["suggestions", "s.gvs"]).contains(review));

    let hex = ok(&dir, &["hex", "s.gvs", "a4", "--length", "16"]);
    assert_eq!(hex, "00000000  4d 5a 90 00 03 00 00 00 04 00 00 00 00 00 00 00  |MZ..............|\n");
    let entropy = json(&dir, &["entropy", "s.gvs", "a4", "--json"]);
    assert_eq!(entropy["artifact"], "a4");

    let log = artiscope::store::load(&dir.join("s.gvs")).unwrap();
    let actions: Vec<String> = log
        .log()
        .iter()
        .filter_map(|e| match &e.event {
            artiscope::engine::SessionEvent::ActionRecorded { action, .. } => Some(action.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(actions, ["ViewedStrings", "ViewedHex", "ViewedEntropy"]);
}

#[test]
fn dropper_walkthrough() {
    let (_t, dir) = workspace();
    let d = artiscope_fixtures::dropper();
    let created = json(&dir, &["analyze", "capture.pcap", "--save", "d.gvs", "--json"]);
    let script = id_of(&created["tree"], "loader.js");
    let overlay = id_of(&created["tree"], &format!("overlay@0x{:x}.zip", d.overlay_offset));

    let decoded = json(&dir, &["transform", "d.gvs", &script, "JsCharCodeDecode", "--json"]);
    assert!(decoded["artifact"].is_string());

    let out = artiscope(&dir, &["transform", "d.gvs", &overlay, "TryArchivePassword", "--param", "password=wrong"]);
    assert_eq!(out.status.code(), Some(1));

    let param = format!("password={}", d.password);
    let text = ok(&dir, &["transform", "d.gvs", &overlay, "TryArchivePassword", "--param", &param]);
    assert!(text.contains("config.ini"), "{text}");

    let findings = ok(&dir, &["findings", "d.gvs"]);
    for want in [d.hidden_url, d.c2_ip, d.wallet, d.registry_key] {
        assert!(findings.contains(want), "{want} missing:\n{findings}");
    }
}

#[test]
fn actions_and_rename() {
    let (_t, dir) = workspace();
    ok(&dir, &["analyze", "contracts.eml", "--save", "s.gvs"]);
    let key = artiscope_fixtures::contracts().registry_key;
    let param = format!("value={key}");
    let out = ok(&dir, &["act", "s.gvs", "a4", "MarkedIoc", "--param", &param]);
    assert!(out.starts_with("recorded MarkedIoc(Contracts.pdf.exe, "), "{out}");
    assert!(!out.contains("Mark HKCU"));

    ok(&dir, &["act", "s.gvs", "a4", "Rename", "--param", "name=keylogger.exe"]);
    assert!(ok(&dir, &["tree", "s.gvs"]).contains("a4 keylogger.exe"));

    let out = artiscope(&dir, &["act", "s.gvs", "a4", "Danced"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_formats() {
    let (_t, dir) = workspace();
    ok(&dir, &["analyze", "contracts.eml", "--save", "s.gvs"]);
    let text = ok(&dir, &["report", "s.gvs"]);
    assert!(text.starts_with("Investigation report: contracts.eml\n"));
    let md = ok(&dir, &["report", "s.gvs", "--md"]);
    assert!(md.contains("Contracts.pdf.exe") && md != text);
    assert_eq!(ok(&dir, &["report", "s.gvs", "--md"]), md);
}

#[test]
fn config_from_flag_and_environment() {
    let (_t, dir) = workspace();
    ok(&dir, &["analyze", "contracts.eml", "--save", "s.gvs"]);
    std::fs::write(dir.join("flag.toml"), "[llm]\nendpoint = \"mock:reply=from the flag\"\n").unwrap();
    std::fs::write(dir.join("env.toml"), "[llm]\nendpoint = \"mock:reply=from the environment\"\n").unwrap();

    assert_eq!(ok(&dir, &["--config", "flag.toml", "chat", "s.gvs", "a4", "why?"]), "from the flag\n");
    let out = Command::new(env!("CARGO_BIN_EXE_artiscope"))
        .args(["chat", "s.gvs", "a4", "why?"])
        .current_dir(&dir)
        .env("ARTISCOPE_CONFIG", "env.toml")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "from the environment\n");

    let chat = json(&dir, &["chat", "s.gvs", "a4", "why?", "--json"]);
    assert!(chat["reply"].as_str().unwrap().starts_with("mock reply "));
    assert!(chat["prompt"].as_str().unwrap().contains("SetWindowsHookExA"));

    std::fs::write(dir.join("bad.toml"), "[llm]\nendpoint = \"mock:fail=model offline\"\n").unwrap();
    let out = artiscope(&dir, &["--config", "bad.toml", "chat", "s.gvs", "a4", "why?"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model offline"));

    std::fs::write(dir.join("broken.toml"), "[nonsense]\n").unwrap();
    let out = artiscope(&dir, &["--config", "broken.toml", "tree", "s.gvs"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn extra_rule_packs() {
    let (_t, dir) = workspace();
    std::fs::write(
        dir.join("extra.rules"),
        "suggest sandbox: when PossibleKeylogger(F)\n    text \"Detonate {F} in the sandbox.\"\n",
    )
    .unwrap();
    let out = ok(&dir, &["analyze", "contracts.eml", "--rules", "extra.rules", "--save", "s.gvs"]);
    assert!(out.contains("Detonate Contracts.pdf.exe in the sandbox."), "{out}");
    assert!(ok(&dir, &["suggestions", "s.gvs"]).contains("Detonate"));

    std::fs::write(dir.join("bad.rules"), "rule broken: X(A) :- .\n").unwrap();
    let out = artiscope(&dir, &["analyze", "contracts.eml", "--rules", "bad.rules"]);
    assert_eq!(out.status.code(), Some(1));
}

fn without_session_id(mut v: Value) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.remove("session_id");
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v
}

#[test]
fn json_output_matches_the_http_api() {
    let (_t, dir) = workspace();
    let eml = artiscope_fixtures::contracts().eml;
    let analyzed = json(&dir, &["analyze", "contracts.eml", "--save", "s.gvs", "--json"]);
    let cli_tree = json(&dir, &["tree", "s.gvs", "--json"]);
    let cli_suggestions = json(&dir, &["suggestions", "s.gvs", "--json"]);
    let cli_findings = json(&dir, &["findings", "s.gvs", "--json"]);

    let rt = tokio::runtime::Runtime::new().unwrap();
    let (api_created, api_tree, api_suggestions, api_findings) = rt.block_on(async {
        let mut config = artiscope::config::Config::default();
        config.server.bind = "127.0.0.1:0".into();
        let server = artiscope_api::Server::bind(config).await.unwrap();
        let base = format!("http://{}", server.local_addr());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = tokio::spawn(server.run(async {
            let _ = rx.await;
        }));
        let c = reqwest::Client::new();
        let form = reqwest::multipart::Form::new()
            .part("file", reqwest::multipart::Part::bytes(eml).file_name("contracts.eml"));
        let created: Value = c.post(format!("{base}/sessions")).multipart(form).send().await.unwrap().json().await.unwrap();
        let get = |p: &str| {
            let url = format!("{base}/sessions/s1/{p}");
            let c = c.clone();
            async move { c.get(url).send().await.unwrap().json::<Value>().await.unwrap() }
        };
        let out = (created, get("tree").await, get("suggestions").await, get("findings").await);
        tx.send(()).unwrap();
        handle.await.unwrap().unwrap();
        out
    });
    assert_eq!(without_session_id(analyzed), without_session_id(api_created));
    assert_eq!(without_session_id(cli_tree), without_session_id(api_tree));
    assert_eq!(without_session_id(cli_suggestions), without_session_id(api_suggestions));
    assert_eq!(without_session_id(cli_findings), without_session_id(api_findings));
}
