use std::net::SocketAddr;
use std::time::Duration;

use artiscope::config::Config;
use artiscope_api::{ServeError, Server};
use reqwest::multipart::{Form, Part};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

struct Running {
    base: String,
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    handle: JoinHandle<Result<(), ServeError>>,
    _data: tempfile::TempDir,
}

impl Running {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.await.unwrap().unwrap();
    }
}

async fn start_with(tweak: impl FnOnce(&mut Config)) -> Running {
    let data = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.server.bind = "127.0.0.1:0".into();
    config.server.data_dir = data.path().display().to_string();
    tweak(&mut config);
    let server = Server::bind(config).await.unwrap();
    let addr = server.local_addr();
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(server.run(async {
        let _ = rx.await;
    }));
    Running {
        base: format!("http://{addr}"),
        addr,
        stop: Some(tx),
        handle,
        _data: data,
    }
}

async fn start() -> Running {
    start_with(|_| {}).await
}

async fn upload(c: &Client, srv: &Running, name: &str, data: Vec<u8>) -> reqwest::Response {
    let form = Form::new().part("file", Part::bytes(data).file_name(name.to_string()));
    c.post(srv.url("/sessions")).multipart(form).send().await.unwrap()
}

async fn upload_ok(c: &Client, srv: &Running, name: &str, data: Vec<u8>) -> Value {
    let r = upload(c, srv, name, data).await;
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json().await.unwrap()
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

fn texts(suggestions: &Value) -> Vec<String> {
    suggestions["suggestions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["text"].as_str().unwrap().to_string())
        .collect()
}

async fn get_json(c: &Client, url: String) -> (StatusCode, Value) {
    let r = c.get(url).send().await.unwrap();
    (r.status(), r.json().await.unwrap())
}

async fn log_len(c: &Client, srv: &Running, sid: &str) -> usize {
    let (_, log) = get_json(c, srv.url(&format!("/sessions/{sid}/log"))).await;
    log["events"].as_array().unwrap().len()
}

#[tokio::test(flavor = "multi_thread")]
async fn health_answers_ok() {
    let srv = start().await;
    let body = reqwest::get(srv.url("/health")).await.unwrap().text().await.unwrap();
    assert_eq!(body, "ok");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn occupied_port_is_a_startup_error() {
    let srv = start().await;
    let mut config = Config::default();
    config.server.bind = srv.addr.to_string();
    match Server::bind(config).await {
        Err(ServeError::Bind { addr, .. }) => assert_eq!(addr, srv.addr.to_string()),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("second bind succeeded"),
    }
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn contracts_upload_and_the_imports_loop() {
    let srv = start().await;
    let c = Client::new();
    let sc = artiscope_fixtures::contracts();
    let created = upload_ok(&c, &srv, sc.eml_name, sc.eml.clone()).await;
    let sid = created["session_id"].as_str().unwrap().to_string();
    let tree = &created["tree"];
    let pe = id_of(tree, sc.pe_name);
    let zip = id_of(tree, sc.zip_name);
    let pe_node = tree["artifacts"].as_array().unwrap().iter().find(|a| a["id"] == pe.as_str()).unwrap();
    assert_eq!(pe_node["parent"], zip.as_str());
    assert_eq!(pe_node["depth"], 2);

    let inspect = format!("Inspect imports of {}.", sc.pe_name);
    assert!(texts(&created["suggestions"]).contains(&inspect));

    let before = log_len(&c, &srv, &sid).await;
    let (status, view) = get_json(&c, srv.url(&format!("/artifacts/{pe}/view?session={sid}&kind=structured"))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(view.to_string().contains("SetWindowsHookExA"));
    assert_eq!(log_len(&c, &srv, &sid).await, before + 1);

    let (_, after) = get_json(&c, srv.url(&format!("/sessions/{sid}/suggestions"))).await;
    assert!(!texts(&after).contains(&inspect));
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn strings_view_clears_its_suggestion_and_lists_imports() {
    let srv = start().await;
    let c = Client::new();
    let sc = artiscope_fixtures::contracts();
    let created = upload_ok(&c, &srv, sc.eml_name, sc.eml).await;
    let sid = created["session_id"].as_str().unwrap();
    let pe = id_of(&created["tree"], sc.pe_name);
    let review = format!("Review the extracted strings of {}.", sc.pe_name);
    assert!(texts(&created["suggestions"]).contains(&review));

    let (status, view) = get_json(&c, srv.url(&format!("/artifacts/{pe}/view?session={sid}&kind=strings"))).await;
    assert_eq!(status, StatusCode::OK);
    let values: Vec<&str> = view["strings"].as_array().unwrap().iter().map(|s| s["value"].as_str().unwrap()).collect();
    assert!(values.contains(&"SetWindowsHookExA"), "{values:?}");

    let (_, after) = get_json(&c, srv.url(&format!("/sessions/{sid}/suggestions"))).await;
    assert!(!texts(&after).contains(&review));
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn hex_rows_and_range_errors() {
    let srv = start().await;
    let c = Client::new();
    let pe = artiscope_fixtures::contracts().pe;
    let size = pe.len();
    let created = upload_ok(&c, &srv, "sample.exe", pe).await;
    let sid = created["session_id"].as_str().unwrap();
    let root = created["root"].as_str().unwrap();

    let (status, view) =
        get_json(&c, srv.url(&format!("/artifacts/{root}/view?session={sid}&kind=hex&offset=0&length=32"))).await;
    assert_eq!(status, StatusCode::OK);
    let line = view["rows"][0]["line"].as_str().unwrap();
    assert!(line.starts_with("00000000  4d 5a "), "{line}");
    assert!(line.ends_with('|') && line.contains("|MZ"), "{line}");
    assert_eq!(view["rows"].as_array().unwrap().len(), 2);

    let before = log_len(&c, &srv, sid).await;
    let (status, err) = get_json(
        &c,
        srv.url(&format!("/artifacts/{root}/view?session={sid}&kind=hex&offset={}&length=16", size + 1)),
    )
    .await;
    assert_eq!(status, StatusCode::RANGE_NOT_SATISFIABLE);
    assert_eq!(err["code"], "Range");
    assert_eq!(log_len(&c, &srv, sid).await, before);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_ids_are_not_found() {
    let srv = start().await;
    let c = Client::new();
    let (status, err) = get_json(&c, srv.url("/sessions/s99/tree")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "NotFound");

    let created = upload_ok(&c, &srv, "x.bin", vec![1, 2, 3]).await;
    let sid = created["session_id"].as_str().unwrap();
    let (status, err) = get_json(&c, srv.url(&format!("/artifacts/a42/view?session={sid}&kind=hex"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "NotFound");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_and_oversized_uploads() {
    let srv = start_with(|c| c.server.max_upload_bytes = 1024).await;
    let c = Client::new();
    let created = upload_ok(&c, &srv, "empty.bin", Vec::new()).await;
    let root = &created["tree"]["artifacts"][0];
    assert_eq!(root["content_type"]["kind"], "GenericBinary");
    assert_eq!(created["tree"]["artifacts"].as_array().unwrap().len(), 1);

    let r = upload(&c, &srv, "big.bin", vec![0u8; 4096]).await;
    assert_eq!(r.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let err: Value = r.json().await.unwrap();
    assert_eq!(err["code"], "Unsupported");

    let (_, list) = get_json(&c, srv.url("/sessions")).await;
    assert_eq!(list["sessions"], json!(["s1"]));
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn dropper_transforms_and_password_errors() {
    let srv = start().await;
    let c = Client::new();
    let d = artiscope_fixtures::dropper();
    let created = upload_ok(&c, &srv, "capture.pcap", d.pcap.clone()).await;
    let sid = created["session_id"].as_str().unwrap();
    let script = id_of(&created["tree"], "loader.js");
    let overlay = id_of(&created["tree"], &format!("overlay@0x{:x}.zip", d.overlay_offset));

    let r = c
        .post(srv.url(&format!("/artifacts/{script}/transform?session={sid}")))
        .json(&json!({"kind": "JsCharCodeDecode"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let decoded: Value = r.json().await.unwrap();
    let child = decoded["artifact"].as_str().unwrap();
    let (_, hex) = get_json(&c, srv.url(&format!("/artifacts/{child}/view?session={sid}&kind=strings"))).await;
    assert!(hex.to_string().contains(d.hidden_url));

    let r = c
        .post(srv.url(&format!("/artifacts/{overlay}/transform?session={sid}")))
        .json(&json!({"kind": "TryArchivePassword", "params": {"password": "nope"}}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let err: Value = r.json().await.unwrap();
    assert_eq!(err["code"], "WrongPassword");

    let r = c
        .post(srv.url(&format!("/artifacts/{overlay}/transform?session={sid}")))
        .json(&json!({"kind": "TryArchivePassword", "params": {"password": d.password}}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);

    let (_, findings) = get_json(&c, srv.url(&format!("/sessions/{sid}/findings"))).await;
    let values: Vec<&str> = findings["findings"].as_array().unwrap().iter().map(|f| f["value"].as_str().unwrap()).collect();
    for want in [d.hidden_url, d.c2_ip, d.wallet, d.registry_key] {
        assert!(values.contains(&want), "{want} missing from {values:?}");
    }

    let r = c
        .post(srv.url(&format!("/artifacts/{script}/transform?session={sid}")))
        .json(&json!({"kind": "Rot13"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn actions_selection_and_rename() {
    let srv = start().await;
    let c = Client::new();
    let pe = artiscope_fixtures::contracts().pe;
    let created = upload_ok(&c, &srv, "sample.exe", pe).await;
    let sid = created["session_id"].as_str().unwrap();
    let root = created["root"].as_str().unwrap();

    let r = c
        .post(srv.url(&format!("/sessions/{sid}/actions")))
        .json(&json!({"action": "Opened", "target": root}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["fact"], "Opened(sample.exe)");

    let r = c
        .post(srv.url(&format!("/sessions/{sid}/actions")))
        .json(&json!({"action": "Rename", "target": root, "params": {"name": "keylogger.exe"}}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);

    let r = c
        .post(srv.url(&format!("/sessions/{sid}/actions")))
        .json(&json!({"action": "Danced", "target": root}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let r = c
        .post(srv.url(&format!("/artifacts/{root}/reanalyze?session={sid}")))
        .json(&json!({"offset": 0, "length": 64, "name": "head.bin"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let derived: Value = r.json().await.unwrap();
    let child = derived["artifact"].as_str().unwrap();

    let (_, tree) = get_json(&c, srv.url(&format!("/sessions/{sid}/tree"))).await;
    assert_eq!(id_of(&tree, "head.bin"), child);
    assert_eq!(id_of(&tree, "keylogger.exe"), root);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn mock_chat_is_deterministic_and_logged() {
    let srv = start().await;
    let c = Client::new();
    let created = upload_ok(&c, &srv, "notes.txt", b"meet at 198.51.100.7 tonight\n".to_vec()).await;
    let sid = created["session_id"].as_str().unwrap();
    let root = created["root"].as_str().unwrap();
    let ask = || {
        c.post(srv.url(&format!("/sessions/{sid}/chat")))
            .json(&json!({"focus": root, "question": "What is this?"}))
            .send()
    };
    let first: Value = ask().await.unwrap().json().await.unwrap();
    let reply = first["reply"].as_str().unwrap();
    assert!(reply.starts_with("mock reply "), "{reply}");
    assert!(first["prompt"].as_str().unwrap().ends_with("QUESTION:\nWhat is this?"));

    let (_, log) = get_json(&c, srv.url(&format!("/sessions/{sid}/log"))).await;
    let chats: Vec<&Value> = log["events"].as_array().unwrap().iter().filter(|e| e["kind"] == "ChatExchanged").collect();
    assert_eq!(chats.len(), 1);
    // The audited prompt is byte-identical to the one returned.
    assert_eq!(chats[0]["payload"]["prompt"], first["prompt"]);
    assert_eq!(chats[0]["payload"]["reply"], first["reply"]);

    let r = c
        .post(srv.url(&format!("/sessions/{sid}/chat")))
        .json(&json!({"focus": root, "auto": "SummarizeFindings"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let summary: Value = r.json().await.unwrap();
    assert_eq!(summary["exchange"], "SummarizeFindings");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn second_chat_while_pending_is_busy() {
    let srv = start_with(|c| c.llm.endpoint = "mock:delay=400".into()).await;
    let c = Client::new();
    let created = upload_ok(&c, &srv, "a.txt", b"hello there analyst\n".to_vec()).await;
    let sid = created["session_id"].as_str().unwrap().to_string();
    let root = created["root"].as_str().unwrap().to_string();
    let url = srv.url(&format!("/sessions/{sid}/chat"));
    let body = json!({"focus": root, "question": "first"});
    let slow = {
        let (c, url, body) = (c.clone(), url.clone(), body.clone());
        tokio::spawn(async move { c.post(url).json(&body).send().await.unwrap().status() })
    };
    tokio::time::sleep(Duration::from_millis(100)).await;
    let r = c.post(&url).json(&body).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    let err: Value = r.json().await.unwrap();
    assert_eq!(err["code"], "Busy");
    assert_eq!(slow.await.unwrap(), StatusCode::OK);

    // Other endpoints stay responsive while a chat is pending.
    let r = c.post(&url).json(&body).send();
    let (tree_status, _) = get_json(&c, srv.url(&format!("/sessions/{sid}/tree"))).await;
    assert_eq!(tree_status, StatusCode::OK);
    assert_eq!(r.await.unwrap().status(), StatusCode::OK);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_waits_for_in_flight_chat() {
    let mut srv = start_with(|c| c.llm.endpoint = "mock:delay=500".into()).await;
    let c = Client::new();
    let created = upload_ok(&c, &srv, "a.txt", b"hello there analyst\n".to_vec()).await;
    let sid = created["session_id"].as_str().unwrap().to_string();
    let root = created["root"].as_str().unwrap().to_string();
    let url = srv.url(&format!("/sessions/{sid}/chat"));
    let pending = tokio::spawn(async move {
        let r = c.post(url).json(&json!({"focus": root, "question": "slow"})).send().await.unwrap();
        (r.status(), r.json::<Value>().await.unwrap())
    });
    tokio::time::sleep(Duration::from_millis(100)).await;
    let _ = srv.stop.take().unwrap().send(());
    let (status, body) = pending.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert!(body["reply"].as_str().unwrap().starts_with("mock reply"));
    tokio::time::timeout(Duration::from_secs(5), &mut srv.handle)
        .await
        .expect("server stops after the request")
        .unwrap()
        .unwrap();
    assert!(Client::new().get(srv.url("/health")).send().await.is_err());
}

#[tokio::test(flavor = "multi_thread")]
async fn save_and_report() {
    let srv = start().await;
    let c = Client::new();
    let sc = artiscope_fixtures::contracts();
    let created = upload_ok(&c, &srv, sc.eml_name, sc.eml).await;
    let sid = created["session_id"].as_str().unwrap();

    let r = c.post(srv.url(&format!("/sessions/{sid}/save"))).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let saved: Value = r.json().await.unwrap();
    let path = saved["path"].as_str().unwrap();
    assert!(path.ends_with(&format!("{sid}.gvs")));
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(saved["bytes"].as_u64().unwrap() as usize, bytes.len());
    let loaded = artiscope::store::load(std::path::Path::new(path)).unwrap();
    assert_eq!(loaded.artifact_count(), 4);

    let r = c.get(srv.url(&format!("/sessions/{sid}/report?format=md"))).send().await.unwrap();
    assert_eq!(r.headers()["content-type"], "text/markdown; charset=utf-8");
    let md = r.text().await.unwrap();
    assert!(md.contains(sc.zip_name) && md.contains(sc.pe_name));
    assert!(md.contains(&format!("Inspect imports of {}.", sc.pe_name)));

    let r = c.get(srv.url(&format!("/sessions/{sid}/report?format=pdf"))).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
    srv.shutdown().await;
}

fn strip_timestamps(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timestamp");
            map.values_mut().for_each(strip_timestamps);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

async fn scripted_run() -> Vec<Value> {
    let srv = start().await;
    let c = Client::new();
    let sc = artiscope_fixtures::contracts();
    let mut bodies = vec![upload_ok(&c, &srv, sc.eml_name, sc.eml).await];
    let pe = id_of(&bodies[0]["tree"], sc.pe_name);
    for path in [
        format!("/artifacts/{pe}/view?session=s1&kind=hex&length=48"),
        format!("/artifacts/{pe}/view?session=s1&kind=structured"),
        "/sessions/s1/suggestions".to_string(),
        "/sessions/s1/tree".to_string(),
        "/sessions/s1/log".to_string(),
    ] {
        bodies.push(get_json(&c, srv.url(&path)).await.1);
    }
    let r = c
        .post(srv.url("/sessions/s1/chat"))
        .json(&json!({"focus": pe, "question": "Is this a keylogger?"}))
        .send()
        .await
        .unwrap();
    bodies.push(r.json().await.unwrap());
    bodies.push(get_json(&c, srv.url("/sessions/s1/log")).await.1);
    srv.shutdown().await;
    bodies.iter_mut().for_each(strip_timestamps);
    bodies
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_request_sequences_give_identical_bodies() {
    assert_eq!(scripted_run().await, scripted_run().await);
}

#[tokio::test(flavor = "multi_thread")]
async fn static_assets_are_served_when_configured() {
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<h1>artiscope</h1>").unwrap();
    let dir = web.path().display().to_string();
    let srv = start_with(move |c| c.server.static_dir = dir).await;
    let body = reqwest::get(srv.url("/index.html")).await.unwrap().text().await.unwrap();
    assert_eq!(body, "<h1>artiscope</h1>");
    assert_eq!(reqwest::get(srv.url("/health")).await.unwrap().text().await.unwrap(), "ok");
    srv.shutdown().await;
}
