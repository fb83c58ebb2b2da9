use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use zhsnacs::Hierarchy;
use zhsnacs_cli::commands::check_bytes;
use zhsnacs_cli::service::{router, AppState};
use zhsnacs_cli::store::version_token;
use zhsnacs_cli::Config;

fn fixture_text(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name);
    std::fs::read_to_string(p).unwrap()
}

/// ex. (2) with its annotations stripped.
fn bare_ex02() -> String {
    "# doc_id = ex02\n# language = zh\n\n# sent_id = ex2\n\
     1\t他\tPN\t_\t_\t_\t_\t_\n2\t在\tP\t_\t_\t_\t_\t_\n3\t学术\tNN\t_\t_\t_\t_\t_\n\
     4\t上\tLC\t_\t_\t_\t_\t_\n5\t有所作为\tVV\t_\t_\t_\t_\t_\n"
        .to_string()
}

struct Service {
    dir: tempfile::TempDir,
    app: Router,
}

impl Service {
    fn new(files: &[(&str, String)]) -> Service {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in files {
            std::fs::write(dir.path().join(name), text).unwrap();
        }
        let state = AppState::from_config(&Config::new(dir.path())).unwrap();
        Service {
            dir,
            app: router(Arc::new(state)),
        }
    }

    fn standard() -> Service {
        Service::new(&[
            ("ex02.tsv", fixture_text("ex02.tsv")),
            ("three.tsv", fixture_text("ex02_three_annotators.tsv")),
            ("bare.tsv", bare_ex02()),
        ])
    }

    fn file(&self, id: &str) -> String {
        std::fs::read_to_string(self.dir.path().join(format!("{id}.tsv"))).unwrap()
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let builder = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => builder
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => builder.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    async fn version(&self, id: &str) -> String {
        let (_, doc) = self.get(&format!("/documents/{id}")).await;
        doc["version"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn hierarchy_has_fifty_nodes() {
    let s = Service::standard();
    let (status, body) = s.get("/hierarchy").await;
    assert_eq!(status, StatusCode::OK);
    let nodes = body["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 50);
    let topic = nodes.iter().find(|n| n["name"] == "Topic").unwrap();
    assert_eq!(topic["subhierarchy"], "Participant");
    assert_eq!(body["specials"], json!(["DISCOURSE"]));
}

#[tokio::test]
async fn documents_are_listed_and_versioned() {
    let s = Service::new(&[
        ("ex02.tsv", fixture_text("ex02.tsv")),
        ("broken.tsv", "nonsense".to_string()),
        ("notes.txt", "ignored".to_string()),
    ]);
    let (status, list) = s.get("/documents").await;
    assert_eq!(status, StatusCode::OK);
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], "ex02");
    assert_eq!(list[0]["targets"], 2);
    assert_eq!(list[0]["version"], version_token(&fixture_text("ex02.tsv")));

    let (status, doc) = s.get("/documents/ex02").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["document"]["sentences"][0]["tokens"][1]["form"], "在");
    assert_eq!(doc["document"]["annotations"][1]["label"]["construal"]["scene"], "Topic");

    let (status, body) = s.get("/documents/missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn annotating_example_two_reproduces_the_fixture() {
    let s = Service::standard();
    let v0 = s.version("bare").await;
    let (status, body) = s
        .post(
            "/documents/bare/annotations",
            json!({"sentence_id": "ex2", "token_indices": [2], "kind": "coverb",
                   "scene": "Locus", "function": "Locus", "version": v0}),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["target"]["group"], 1);
    assert_eq!(body["target"]["annotator"], "gold");
    let v1 = body["version"].as_str().unwrap().to_string();

    // lower-case labels are canonicalized, the kind is inferred from POS
    let (status, body) = s
        .post(
            "/documents/bare/annotations",
            json!({"sentence_id": "ex2", "token_indices": [4],
                   "scene": "topic", "function": "LOCUS", "version": v1}),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["target"]["kind"], "localizer");

    let golden = fixture_text("ex02.tsv");
    assert_eq!(s.file("bare"), golden);
    assert_eq!(body["version"], version_token(&golden));
}

#[tokio::test]
async fn unknown_label_is_rejected_with_violation() {
    let s = Service::standard();
    let before = s.file("ex02");
    let v = s.version("ex02").await;
    let (status, body) = s
        .post(
            "/documents/ex02/annotations",
            json!({"sentence_id": "ex2", "token_indices": [4], "kind": "localizer",
                   "scene": "Topic", "function": "Nowhere", "version": v}),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["code"], "unknown-label");
    assert_eq!(s.file("ex02"), before);
    assert_eq!(s.version("ex02").await, v);
}

#[tokio::test]
async fn other_invalid_edits_are_rejected() {
    let s = Service::standard();
    let v = s.version("ex02").await;
    let post = |body: Value| s.post("/documents/ex02/annotations", body);

    // overlaps the existing 在 target
    let (status, body) = post(json!({"sentence_id": "ex2", "token_indices": [2, 3],
        "scene": "Locus", "function": "Locus", "version": v})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["code"], "overlap");

    let (status, body) = post(json!({"sentence_id": "nope", "token_indices": [1],
        "scene": "Locus", "function": "Locus", "version": v})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["code"], "unknown-sentence");

    let (status, _) = post(json!({"sentence_id": "ex2", "token_indices": [1], "kind": "coverb",
        "scene": "Locus", "function": "Locus", "version": v})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = post(json!({"sentence_id": "ex2", "token_indices": [1],
        "scene": "DISCOURSE", "function": "Locus", "version": v})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = post(json!({"sentence_id": "ex2", "token_indices": [1],
        "scene": "Locus", "version": v})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, body) = post(json!({"sentence_id": "ex2", "version": v})).await;
    assert!(status.is_client_error());
    assert!(body["error"].is_string());

    let (status, _) = s
        .call(Method::POST, "/documents/ex02/annotations", None)
        .await;
    assert!(status.is_client_error());

    assert_eq!(s.file("ex02"), fixture_text("ex02.tsv"));
}

#[tokio::test]
async fn stale_version_conflicts() {
    let s = Service::standard();
    let v = s.version("ex02").await;
    let edit = |scene: &str, version: &str| {
        json!({"sentence_id": "ex2", "token_indices": [4], "kind": "localizer",
               "scene": scene, "function": "Locus", "annotator": "gold", "version": version})
    };
    let (status, body) = s.post("/documents/ex02/annotations", edit("Locus", &v)).await;
    assert_eq!(status, StatusCode::OK);
    let current = body["version"].clone();
    // relabelling keeps the group
    assert_eq!(body["target"]["group"], 2);

    let (status, body) = s.post("/documents/ex02/annotations", edit("Topic", &v)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["version"], current);
    assert!(s.file("ex02").contains("LOCALIZER\tLocus\tLocus"));

    let (status, _) = s.post("/documents/missing/annotations", edit("Topic", &v)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_on_one_version() {
    let s = Arc::new(Service::standard());
    let v = s.version("bare").await;
    let mut handles = Vec::new();
    for (i, scene) in ["Locus", "Goal", "Source", "Time", "Topic", "Manner"].iter().enumerate() {
        let s = s.clone();
        let v = v.clone();
        let annotator = format!("a{i}");
        let scene = scene.to_string();
        handles.push(tokio::spawn(async move {
            s.post(
                "/documents/bare/annotations",
                json!({"sentence_id": "ex2", "token_indices": [2], "scene": scene,
                       "function": "Locus", "annotator": annotator, "version": v}),
            )
            .await
            .0
        }));
    }
    let mut statuses = Vec::new();
    for h in handles {
        statuses.push(h.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|&&c| c == StatusCode::OK).count(), 1, "{statuses:?}");
    assert_eq!(statuses.iter().filter(|&&c| c == StatusCode::CONFLICT).count(), 5);
    let text = s.file("bare");
    assert_eq!(text.lines().filter(|l| l.contains("\tT1\t")).count(), 1);
    assert!(check_bytes(text.as_bytes(), &Hierarchy::builtin()).is_empty());
}

#[tokio::test]
async fn stored_files_always_validate() {
    let s = Service::standard();
    let h = Hierarchy::builtin();
    let scenes = ["Locus", "Nowhere", "DISCOURSE", "topic", "Goal"];
    let spans: [&[usize]; 5] = [&[1], &[2], &[4], &[2, 4], &[6]];
    let mut accepted = 0;
    for (i, scene) in scenes.iter().enumerate() {
        for (j, span) in spans.iter().enumerate() {
            let v = s.version("bare").await;
            let function = if *scene == "DISCOURSE" { Value::Null } else { json!("Locus") };
            let (status, _) = s
                .post(
                    "/documents/bare/annotations",
                    json!({"sentence_id": "ex2", "token_indices": span, "scene": scene,
                           "function": function, "annotator": format!("a{}", (i + j) % 3),
                           "version": v}),
                )
                .await;
            assert!(status == StatusCode::OK || status == StatusCode::UNPROCESSABLE_ENTITY);
            accepted += usize::from(status == StatusCode::OK);
            assert!(check_bytes(s.file("bare").as_bytes(), &h).is_empty());
        }
    }
    assert!(accepted > 0);
}

#[tokio::test]
async fn validate_endpoint() {
    let s = Service::standard();
    let (status, body) = s.post("/validate", json!({"text": fixture_text("ex02.tsv")})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"valid": true, "problems": []}));

    let bad = fixture_text("ex02.tsv").replace("Topic", "Topik");
    let (_, body) = s.post("/validate", json!({"text": bad})).await;
    assert_eq!(body["valid"], false);
    assert_eq!(body["problems"][0]["code"], "unknown-supersense");
    assert_eq!(body["problems"][0]["line"], 8);

    let (status, _) = s.post("/validate", json!({"txt": ""})).await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn targets_and_stats_endpoints() {
    let s = Service::standard();
    let (status, body) = s.get("/documents/bare/targets").await;
    assert_eq!(status, StatusCode::OK);
    let forms: Vec<&str> = body["candidates"].as_array().unwrap().iter().map(|c| c["form"].as_str().unwrap()).collect();
    assert_eq!(forms, ["在", "上"]);
    assert!(body.get("diff").is_none());

    let (_, body) = s.get("/documents/ex02/targets?annotator=gold").await;
    assert_eq!(body["diff"]["f1"], 1.0);

    let (status, body) = s.get("/documents/ex02/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["report"]["identity"]["same"], 1);
    assert_eq!(body["report"]["identity"]["total"], 2);
    assert_eq!(body["report"]["identity"]["percent"], 50);

    let (_, body) = s.get("/documents/three/stats?annotator=a1").await;
    assert_eq!(body["report"]["identity"]["total"], 2);
    let (status, _) = s.get("/documents/missing/stats").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn iaa_endpoint() {
    let s = Service::standard();
    let (status, body) = s.get("/iaa?doc=three").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["reports"].as_array().unwrap().len(), 3);
    assert_eq!(body["reports"][0]["kappa_mean"], 1.0);

    let (_, body) = s.get("/iaa?doc=three&projection=function&annotators=a1,a2").await;
    assert_eq!(body["reports"].as_array().unwrap().len(), 1);
    assert_eq!(body["reports"][0]["projection"], "function");
    assert_eq!(body["annotators"], json!(["a1", "a2"]));

    assert_eq!(s.get("/iaa?doc=three&projection=vibes").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/iaa").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/iaa?doc=missing").await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.get("/iaa?doc=ex02").await.0, StatusCode::UNPROCESSABLE_ENTITY);
}
