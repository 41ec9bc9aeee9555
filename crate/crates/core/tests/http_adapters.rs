//! Wire conformance of the HTTP adapters against an in-process server that
//! serves the stub models.

use std::sync::Arc;
use std::thread;

use okret_core::bm25::InvertedIndex;
use okret_core::fixture::{Fixture, DEFAULT_SEED};
use okret_core::genpipeline::http::phrase_to_wire;
use okret_core::genpipeline::http::wire::*;
use okret_core::genpipeline::{run_pipeline, AdapterError, HttpAdapters, ModelAdapters, PipelineConfig, StubAdapters};
use serde::Serialize;
use tiny_http::{Header, Response, Server};

/// Starts a server on an ephemeral port. Paths under `/bad/` answer 400,
/// `/fail/` answer 500 and `/garbage/` return a non-JSON body.
fn serve(stub: StubAdapters) -> String {
    let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
    let port = server.server_addr().to_ip().unwrap().port();
    let stub = Arc::new(stub);
    for _ in 0..4 {
        let (server, stub) = (Arc::clone(&server), Arc::clone(&stub));
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let url = req.url().to_string();
                let (status, payload) = handle(&stub, &url, &body);
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(Response::from_string(payload).with_status_code(status).with_header(header));
            }
        });
    }
    format!("http://127.0.0.1:{port}")
}

fn json<T: Serialize>(v: &T) -> (u16, String) {
    (200, serde_json::to_string(v).unwrap())
}

fn handle(stub: &StubAdapters, url: &str, body: &str) -> (u16, String) {
    if url.starts_with("/bad/") {
        return (400, r#"{"error":"bad request"}"#.into());
    }
    if url.starts_with("/fail/") {
        return (500, r#"{"error":"model crashed"}"#.into());
    }
    if url.starts_with("/garbage/") {
        return (200, "<html>".into());
    }
    match url {
        "/healthz" => (200, "{}".into()),
        "/caption" => {
            let r: CaptionRequest = serde_json::from_str(body).unwrap();
            json(&CaptionResponse { caption: stub.caption(&r.image_ref).unwrap() })
        }
        "/annotate" => {
            let r: AnnotateRequest = serde_json::from_str(body).unwrap();
            let phrases = stub.annotate(&r.text).unwrap();
            json(&AnnotateResponse { phrases: phrases.iter().map(|p| phrase_to_wire(&r.text, p)).collect() })
        }
        "/qg" => {
            let r: QgRequest = serde_json::from_str(body).unwrap();
            match stub.generate_question(&r.passage_hl) {
                Ok(question) => json(&QgResponse { question }),
                Err(e) => (422, serde_json::json!({ "error": e.to_string() }).to_string()),
            }
        }
        "/qa" => {
            let r: QaRequest = serde_json::from_str(body).unwrap();
            json(&QaResponse { answer: stub.answer_question(&r.question, &r.passage).unwrap() })
        }
        _ => (404, "{}".into()),
    }
}

fn fixture_stub(f: &Fixture) -> StubAdapters {
    StubAdapters::with_captions(
        f.images
            .iter()
            .filter_map(|i| i.caption.clone().map(|c| (i.image_id.clone(), c))),
    )
}

#[test]
fn remote_pipeline_matches_in_process_stub() {
    let f = Fixture::generate(DEFAULT_SEED);
    let store = f.store();
    let index = InvertedIndex::build(&store).unwrap();
    let stub = fixture_stub(&f);
    let local = run_pipeline(&f.images, &store, &index, &stub, PipelineConfig::default(), 1).unwrap();

    let remote = HttpAdapters::new(serve(stub));
    remote.health().unwrap();
    let over_wire = run_pipeline(&f.images, &store, &index, &remote, PipelineConfig::default(), 4).unwrap();
    assert_eq!(over_wire.examples, local.examples);
    assert_eq!(over_wire.audit, local.audit);
    assert_eq!(over_wire.report, local.report);
}

#[test]
fn each_endpoint_round_trips() {
    let f = Fixture::generate(DEFAULT_SEED);
    let stub = fixture_stub(&f);
    let remote = HttpAdapters::new(serve(stub.clone()));
    let img = &f.images[0].image_id;
    assert_eq!(remote.caption(img).unwrap(), stub.caption(img).unwrap());
    let text = "Der Bär in Zürich läuft seven feet über die Brücke.";
    assert_eq!(remote.annotate(text).unwrap(), stub.annotate(text).unwrap());
    let hl = "The wall is <hl> seven feet <hl> tall.";
    let q = remote.generate_question(hl).unwrap();
    assert_eq!(q, stub.generate_question(hl).unwrap());
    assert_eq!(
        remote.answer_question(&q, "The wall is seven feet tall.").unwrap(),
        stub.answer_question(&q, "The wall is seven feet tall.").unwrap()
    );
}

#[test]
fn error_statuses_are_classified() {
    let base = serve(StubAdapters::new());
    let bad = HttpAdapters::new(format!("{base}/bad"));
    assert!(matches!(bad.answer_question("q", "p"), Err(AdapterError::Protocol { .. })));
    let fail = HttpAdapters::new(format!("{base}/fail"));
    assert!(matches!(fail.annotate("text"), Err(AdapterError::Failed { .. })));
    let garbage = HttpAdapters::new(format!("{base}/garbage"));
    assert!(matches!(garbage.caption("img"), Err(AdapterError::Protocol { .. })));
    let missing = HttpAdapters::new(format!("{base}/nowhere"));
    assert!(matches!(missing.generate_question("x"), Err(AdapterError::Protocol { .. })));
}

#[test]
fn failing_service_drops_examples_without_aborting() {
    let f = Fixture::generate(DEFAULT_SEED);
    let store = f.store();
    let index = InvertedIndex::build(&store).unwrap();
    let fail = HttpAdapters::new(format!("{}/fail", serve(StubAdapters::new())));
    let out = run_pipeline(&f.images, &store, &index, &fail, PipelineConfig::default(), 2).unwrap();
    assert!(out.examples.is_empty());
    assert_eq!(out.report.images, 20);
}
