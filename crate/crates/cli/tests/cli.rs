use std::path::PathBuf;
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn ctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctl"))
        .args(args)
        .output()
        .unwrap()
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn temp_file(name: &str, contents: &str) -> String {
    let p = std::env::temp_dir().join(format!("ctl-cli-test-{}-{name}", std::process::id()));
    std::fs::write(&p, contents).unwrap();
    p.to_str().unwrap().to_string()
}

async fn api_evaluate(body: String) -> (StatusCode, String) {
    let req = Request::post("/api/evaluate")
        .body(Body::from(body))
        .unwrap();
    let resp = ctl_service::router().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn cli_and_api_agree_on_golden_scenarios() {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios"]
        .iter()
        .collect();
    let mut checked = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cli = ctl(&["evaluate", path.to_str().unwrap(), "--format", "json"]);
        assert!(cli.status.success(), "{}", path.display());
        let (status, api) = api_evaluate(std::fs::read_to_string(&path).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(stdout(&cli), api, "{}", path.display());
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn evaluate_text_report() {
    let o = ctl(&[
        "evaluate",
        &scenario("inference-patch.json"),
        "--rulesets",
        "eu-inference-patch,eu-aiact-literal",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("RULESET"));
    assert!(out.contains("eu-inference-patch"));
    assert!(out.contains("Covered"));
    assert!(!out.contains("eo14110-literal"));
}

#[test]
fn rulesets_all_restores_every_builtin() {
    let o = ctl(&[
        "evaluate",
        &scenario("sb1047-finetune.json"),
        "--rulesets",
        "all",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(
        v.as_object().unwrap().len(),
        ctl_core::rulesets::builtin_rulesets().len()
    );
}

#[test]
fn sweep_and_crossing() {
    let o = ctl(&[
        "sweep",
        &scenario("finetune-fifteen-percent.json"),
        "--rulesets",
        "eo14110-ft15",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 5);

    let o = ctl(&[
        "crossing",
        &scenario("finetune-fifteen-percent.json"),
        "--ruleset",
        "eo14110-ft15",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let c: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let at: ctl_core::Compute = c["value"].as_str().unwrap().parse().unwrap();
    assert!((at.log10() - 1.5e25f64.log10()).abs() <= 1e-3);

    let o = ctl(&[
        "crossing",
        &scenario("finetune-fifteen-percent.json"),
        "--ruleset",
        "eo14110-literal",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(ctl(&[]).status.code(), Some(1));
    assert_eq!(ctl(&["evaluate"]).status.code(), Some(1));
    assert_eq!(
        ctl(&["evaluate", "x.json", "--format", "yaml"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(ctl(&["--help"]).status.code(), Some(0));
    assert_eq!(
        ctl(&["evaluate", "/nonexistent/scenario.json"])
            .status
            .code(),
        Some(2)
    );

    let bad = temp_file("bad.json", "{\"models\": [");
    let o = ctl(&["evaluate", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("SyntaxError"));

    let unknown = temp_file(
        "unknown.json",
        r#"{"models":[{"id":"A"}],"events":[{"kind":"quantize","child":"A"}],"subject":"A"}"#,
    );
    let o = ctl(&["evaluate", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("events[0].kind"));

    let o = ctl(&[
        "evaluate",
        &scenario("expansion.json"),
        "--rulesets",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rulesets_listing() {
    let o = ctl(&["rulesets"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("sb1047-vetoed [CA-State]"));
    let o = ctl(&["rulesets", "--format", "json"]);
    let list: Vec<ctl_core::Ruleset> = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(list, ctl_core::rulesets::builtin_rulesets());
}
