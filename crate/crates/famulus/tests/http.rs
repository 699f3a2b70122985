mod common;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{open, setup, synth_docs, CASE};
use famulus::service::router;
use famulus::synth::SynthSpec;

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
    token: Option<&str>,
) -> (StatusCode, String) {
    let mut builder = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        builder = builder.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let request = match body {
        Some(b) => builder
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(body: &str) -> Value {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("{e}: {body}"))
}

#[tokio::test]
async fn cold_start_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (system, _) = open(setup(dir.path()));
    let app = router(system);

    let (status, body) = call(&app, Method::GET, "/cases/hoffmann", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body)["case_id"], "hoffmann");

    let (status, body) = call(&app, Method::GET, "/cases/nobody", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(parse(&body)["code"], "unknown_case");

    let submission = json!({"user_id": "s1", "text": "Vermutlich Malaria. Daher Hepatitis A."});
    let (status, body) = call(
        &app,
        Method::POST,
        "/cases/hoffmann/submissions",
        Some(submission),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let outcome = parse(&body);
    assert_eq!(outcome["feedback"]["kind"], "default");
    assert_eq!(
        outcome["feedback"]["text"],
        SynthSpec::default().case().default_feedback
    );
    assert_eq!(outcome["task_id"], 1);
    assert!(outcome["processing_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(outcome["model_versions"], json!({}));

    let (status, body) = call(
        &app,
        Method::POST,
        "/cases/hoffmann/submissions",
        Some(json!({"user_id": "s1", "text": "   "})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["code"], "empty_text");

    let (status, body) = call(&app, Method::GET, "/tasks?state=open", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body).as_array().unwrap().len(), 1);

    let span = json!({"layer": "diagnostic_entity", "class": "tropical_disease", "sentence": 0, "token_start": 1, "token_end": 2});
    let (status, _) = call(
        &app,
        Method::POST,
        "/tasks/1/spans",
        Some(span.clone()),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body) = call(&app, Method::POST, "/tasks/1/spans", Some(span), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["code"], "overlap");
    let bad_class = json!({"layer": "diagnostic_entity", "class": "typhus", "sentence": 1, "token_start": 0, "token_end": 1});
    let (status, body) = call(&app, Method::POST, "/tasks/1/spans", Some(bad_class), None).await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::UNPROCESSABLE_ENTITY, json!("unknown_class"))
    );

    let (status, body) = call(&app, Method::GET, "/tasks/1", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let view = parse(&body);
    assert_eq!(view["manual_spans"][0]["text"], "Malaria");
    assert_eq!(view["manual_spans"][0]["char_start"], 11);
    assert_eq!(view["manual_spans"][0]["char_end"], 18);

    let (status, body) = call(&app, Method::POST, "/tasks/1/finalize", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let finalized = parse(&body);
    assert_eq!(finalized["gold_spans"], 1);
    assert_eq!(finalized["retrain"]["status"], "not_needed");
    let (status, body) = call(&app, Method::POST, "/tasks/1/finalize", None, None).await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::CONFLICT, json!("task_finalized"))
    );

    let (status, body) = call(&app, Method::GET, "/tasks?state=open", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(parse(&body).as_array().unwrap().is_empty());
    let (status, body) = call(&app, Method::GET, "/tasks/9", None, None).await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::NOT_FOUND, json!("unknown_task"))
    );

    let (status, body) = call(&app, Method::GET, "/metrics", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let metrics = parse(&body);
    assert_eq!(metrics["phase"], "ColdStart");
    assert_eq!(metrics["finalized_count"], 1);
    assert_eq!(metrics["acceptance_rate"], Value::Null);
    assert!(body.ends_with("}\n"));

    let (status, body) = call(&app, Method::GET, "/admin/model", None, None).await;
    assert_eq!((status, body.as_str()), (StatusCode::OK, "{}"));
}

#[tokio::test]
async fn warm_run_verdicts_and_retrain() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = setup(dir.path());
    config.cold_start_min_docs = 2;
    config.background_retrain = false;
    let (system, clock) = open(config);
    for doc in &synth_docs(9, 2) {
        common::run_one(&system, &clock, doc);
    }
    let app = router(system);
    let (_, body) = call(&app, Method::GET, "/admin/model", None, None).await;
    assert_eq!(
        parse(&body),
        json!({"epistemic_activity": 1, "diagnostic_entity": 1})
    );

    let text = "Vermutlich Hepatitis A nach Reise. Daher Malaria.";
    let (status, body) = call(
        &app,
        Method::POST,
        "/cases/hoffmann/submissions",
        Some(json!({"user_id": "s", "text": text})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let outcome = parse(&body);
    assert_eq!(outcome["feedback"]["kind"], "report");
    assert_eq!(outcome["feedback"]["items"].as_array().unwrap().len(), 5);
    assert_eq!(outcome["model_versions"]["diagnostic_entity"], 1);
    for span in outcome["spans"].as_array().unwrap() {
        let (a, b) = (
            span["char_start"].as_u64().unwrap() as usize,
            span["char_end"].as_u64().unwrap() as usize,
        );
        let slice: String = text.chars().skip(a).take(b - a).collect();
        assert_eq!(span["text"].as_str().unwrap(), slice);
    }
    let task_id = outcome["task_id"].as_u64().unwrap();

    let uri = format!("/tasks/{task_id}/suggestions/1/verdict");
    let (status, _) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"verdict": "accepted"})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"verdict": "rejected"})),
        None,
    )
    .await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::CONFLICT, json!("illegal_transition"))
    );
    let (status, _) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"verdict": "maybe"})),
        None,
    )
    .await;
    assert_eq!(status.as_u16() / 100, 4);
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/tasks/{task_id}/suggestions/99/verdict"),
        Some(json!({"verdict": "accepted"})),
        None,
    )
    .await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::NOT_FOUND, json!("unknown_suggestion"))
    );

    let (status, body) = call(&app, Method::POST, "/admin/retrain", None, None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(parse(&body)["status"], "completed");
    let (_, body) = call(&app, Method::GET, "/admin/model", None, None).await;
    assert_eq!(
        parse(&body),
        json!({"epistemic_activity": 2, "diagnostic_entity": 2})
    );

    let (_, body) = call(&app, Method::GET, "/metrics", None, None).await;
    let metrics = parse(&body);
    assert_eq!(metrics["phase"], "WarmRun");
    assert!(metrics["accepted"].as_u64().unwrap() >= 1);
}

#[tokio::test]
async fn instructor_routes_need_the_token() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = setup(dir.path());
    config.instructor_token = Some("s3cret".into());
    let (system, _) = open(config);
    let app = router(system);
    let submission = json!({"user_id": "s1", "text": "Vermutlich Malaria."});
    let (status, _) = call(
        &app,
        Method::POST,
        "/cases/hoffmann/submissions",
        Some(submission),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    for (method, uri) in [
        (Method::GET, "/tasks"),
        (Method::GET, "/tasks/1"),
        (Method::POST, "/tasks/1/finalize"),
        (Method::POST, "/admin/retrain"),
        (Method::GET, "/admin/model"),
    ] {
        let (status, body) = call(&app, method.clone(), uri, None, None).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{uri}");
        assert_eq!(parse(&body)["code"], "unauthorized");
        let (status, _) = call(&app, method.clone(), uri, None, Some("wrong")).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED, "{uri}");
    }
    let (status, _) = call(&app, Method::GET, "/tasks/1", None, Some("s3cret")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::GET, "/metrics", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::GET, "/cases/hoffmann", None, None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn case_creation_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (system, _) = open(setup(dir.path()));
    let app = router(system);
    let case = json!({
        "case_id": "weber",
        "title": "Husten",
        "case_text": "Herr Weber, 50, hustet seit drei Wochen.",
        "default_feedback": "Tuberkulose.",
        "aspects": [
            {"layer": "diagnostic_entity", "class": "tuberculosis", "relevance": "correct_diagnosis", "display_order": 1}
        ],
        "feedback": [
            {"case_id": "weber", "layer": "diagnostic_entity", "class": "tuberculosis", "status": "covered", "snippet": "Richtig."},
            {"case_id": "weber", "layer": "diagnostic_entity", "class": "tuberculosis", "status": "missing", "snippet": "An Tuberkulose denken."}
        ]
    });
    let (status, body) = call(&app, Method::POST, "/cases", Some(case.clone()), None).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let (status, body) = call(&app, Method::POST, "/cases", Some(case), None).await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::CONFLICT, json!("case_exists"))
    );
    let (status, body) = call(&app, Method::GET, "/cases", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body), json!(["hoffmann", "weber"]));
    let invalid = json!({"case_id": "x", "title": "", "case_text": "", "default_feedback": "", "aspects": []});
    let (status, body) = call(&app, Method::POST, "/cases", Some(invalid), None).await;
    assert_eq!(
        (status, parse(&body)["code"].clone()),
        (StatusCode::UNPROCESSABLE_ENTITY, json!("invalid_case"))
    );
    let (status, _) = call(
        &app,
        Method::POST,
        "/cases",
        Some(json!({"nonsense": true})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(dir.path().join("cases").join("weber.case").exists());
    let _ = CASE;
}

#[tokio::test]
async fn ui_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(
        ui.join("index.html"),
        "<!doctype html><title>famulus</title>",
    )
    .unwrap();
    let mut config = setup(dir.path());
    config.ui_dir = Some(ui);
    let (system, _) = open(config);
    let app = router(system);
    let (status, body) = call(&app, Method::GET, "/ui/index.html", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("famulus"));
}
