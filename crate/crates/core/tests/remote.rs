mod common;

use common::MockServer;
use cultvqa::bundled;
use cultvqa::perception::{fetch_detections, DetectionError, FetchError};
use cultvqa::pipeline::{run_answer, AblationConfig, DetectionSource, Engine, PipelineError};
use cultvqa::progen::{BackendError, GenerationSource, GeneratorBackend, ProgramGenerator, RemoteGenerator};

const ONE_RECORD: &str = r#"{"image_id": "img1", "label": "bánh xèo", "confidence": 0.9, "box": [0.1, 0.1, 0.5, 0.5]}"#;

#[test]
fn detector_returns_records_for_the_image() {
    let server = MockServer::once(200, ONE_RECORD);
    let dets = fetch_detections("img1", &server.url).unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!(dets[0].label, "bánh xèo");
    let request = server.request();
    assert!(request.starts_with("POST "));
    assert!(request.contains(r#""image_id":"img1""#));
}

#[test]
fn detector_server_error_is_a_status_error() {
    let server = MockServer::once(500, "boom");
    assert!(matches!(fetch_detections("img1", &server.url), Err(FetchError::Status(500))));
}

#[test]
fn detector_confidence_out_of_range_is_a_schema_error() {
    let body = ONE_RECORD.replace("0.9", "1.3");
    let server = MockServer::once(200, &body);
    let err = fetch_detections("img1", &server.url).unwrap_err();
    assert!(matches!(err, FetchError::Schema(DetectionError::Confidence { .. })), "{err:?}");
}

#[test]
fn detector_records_for_another_image_are_rejected() {
    let server = MockServer::once(200, ONE_RECORD);
    assert!(matches!(fetch_detections("img2", &server.url), Err(FetchError::Schema(_))));
}

#[test]
fn unreachable_detector_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    assert!(matches!(fetch_detections("img1", &url), Err(FetchError::Transport(_))));
}

#[test]
fn pipeline_answers_from_a_remote_detector() {
    let server = MockServer::once(200, ONE_RECORD);
    let source = DetectionSource::Remote {
        endpoint: server.url.clone(),
    };
    let engine = Engine::new(bundled::starter_kb());
    let out = run_answer(&engine, &source, "img1", "Đây là món gì?", AblationConfig::Full).unwrap();
    assert_eq!(out.answered_entity().as_deref(), Some("banh_xeo"));
}

#[test]
fn remote_generator_sends_prompt_and_key() {
    let program = "r = detect_objects()\\ns = select_region(r, \\\"largest\\\")\\ne = identify_food(s)\\nt = explain_cultural_significance(e)\\na = compose_answer(t)";
    let server = MockServer::once(200, &format!(r#"{{"text": "{program}"}}"#));
    let backend = RemoteGenerator::new(server.url.clone(), Some("secret-token".into()));
    let outcome = ProgramGenerator::default()
        .generate("Đây là món gì?", &["bánh xèo".into()], Some(&backend))
        .unwrap();
    assert_eq!(outcome.source, GenerationSource::Backend);
    assert_eq!(outcome.attempts, 1);
    let request = server.request();
    assert!(request.to_ascii_lowercase().contains("authorization: bearer secret-token"));
    assert!(request.contains("Đây là món gì?"));
}

#[test]
fn generator_failure_falls_back_or_errors_by_policy() {
    let server = MockServer::once(503, "");
    let backend = RemoteGenerator::new(server.url.clone(), None);
    assert!(matches!(backend.complete("p"), Err(BackendError::Status(503))));

    let server = MockServer::once(503, "");
    let backend = RemoteGenerator::new(server.url.clone(), None);
    let outcome = ProgramGenerator::default().generate("q", &[], Some(&backend)).unwrap();
    assert_eq!(outcome.source, GenerationSource::Fallback);

    let server = MockServer::once(503, "");
    let mut engine = Engine::new(bundled::starter_kb());
    engine.backend = Some(Box::new(RemoteGenerator::new(server.url.clone(), None)));
    engine.generator.policy.fallback_on_transport_error = false;
    let source = DetectionSource::Fixtures(bundled::fixtures());
    let err = run_answer(&engine, &source, "banh_xeo_demo", "q", AblationConfig::Full).unwrap_err();
    assert!(matches!(err, PipelineError::Generator(_)));
}
