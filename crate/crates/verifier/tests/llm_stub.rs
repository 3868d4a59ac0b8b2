//! The chat-completions client against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use appi_verify::llm::{call_model, LlmBackend, LlmClient, LlmConfig};
use appi_verify_core::backend::{AgentBackend, BackendError};
use appi_verify_core::domain::{AgentRole, AgentVerdict, DataTransferAction, StructuredFacts};
use appi_verify_core::prompt::{ChatMessage, PromptPayload};

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn chat_body(content: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Serves `script` in order, one response per connection; the last entry repeats.
fn stub(script: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.trim_end().split_once(':') {
                    headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
                }
            }
            let len = headers.iter().find(|(k, _)| k == "content-length").map_or(0, |(_, v)| v.parse().unwrap());
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen { headers, body });

            let (status, text) = script[n.min(script.len() - 1)].clone();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Stub { url, seen }
}

fn config(url: &str, key_env: &str) -> LlmConfig {
    std::env::set_var(key_env, "sk-test-123");
    LlmConfig {
        endpoint_url: url.to_string(),
        api_key_env: key_env.to_string(),
        backoff_base_secs: 0.0,
        timeout_secs: 5.0,
        ..Default::default()
    }
}

fn payload() -> PromptPayload {
    PromptPayload { messages: vec![ChatMessage::system("S"), ChatMessage::user("U")] }
}

#[test]
fn content_is_passed_through_verbatim() {
    let s = stub(vec![(200, chat_body("  {\"verdict\": \"COMPLIANT\"}\n"))]);
    let client = LlmClient::new(config(&s.url, "APPI_STUB_KEY_A")).unwrap();
    assert_eq!(call_model(&client, &payload()).unwrap(), "  {\"verdict\": \"COMPLIANT\"}\n");
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn request_is_bit_exact_and_authorized() {
    let s = stub(vec![(200, chat_body("ok"))]);
    let client = LlmClient::new(config(&s.url, "APPI_STUB_KEY_B")).unwrap();
    call_model(&client, &payload()).unwrap();
    let seen = s.seen.lock().unwrap()[0].clone();
    let expected = r#"{"model":"gpt-3.5-turbo","messages":[{"role":"system","content":"S"},{"role":"user","content":"U"}],"temperature":0.0}"#;
    assert_eq!(String::from_utf8(seen.body.clone()).unwrap(), expected);
    assert_eq!(seen.body, client.request_body(&payload()));
    assert!(seen.headers.contains(&("authorization".into(), "Bearer sk-test-123".into())));
    assert!(seen.headers.iter().any(|(k, v)| k == "content-type" && v.starts_with("application/json")));
}

#[test]
fn rate_limits_are_retried_until_success() {
    let s = stub(vec![(429, "{}".into()), (429, "{}".into()), (200, chat_body("done"))]);
    let client = LlmClient::new(config(&s.url, "APPI_STUB_KEY_C")).unwrap();
    assert_eq!(call_model(&client, &payload()).unwrap(), "done");
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn persistent_server_errors_exhaust_the_retry_budget() {
    let s = stub(vec![(500, "{\"error\": \"boom\"}".into())]);
    let client = LlmClient::new(config(&s.url, "APPI_STUB_KEY_D")).unwrap();
    match call_model(&client, &payload()) {
        Err(BackendError::Exhausted { attempts, last }) => {
            assert_eq!(attempts, 4);
            assert!(last.contains("500"));
        }
        other => panic!("expected Exhausted, got {other:?}"),
    }
    assert_eq!(s.seen.lock().unwrap().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(vec![(401, "{\"error\": \"bad key\"}".into())]);
    let client = LlmClient::new(config(&s.url, "APPI_STUB_KEY_E")).unwrap();
    assert!(matches!(call_model(&client, &payload()), Err(BackendError::Failed(_))));
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn backend_parses_model_output_into_an_analysis() {
    let s = stub(vec![(200, chat_body("{\"verdict\": \"NON_COMPLIANT\", \"confidence\": 0.8, \"rationale\": \"no consent\"}"))]);
    let backend = LlmBackend::new(config(&s.url, "APPI_STUB_KEY_F")).unwrap();
    let action = DataTransferAction {
        id: "x".into(),
        company_context: "Clinic".into(),
        stated_purpose: "Treatment".into(),
        proposed_operation: "Sell records to an advertiser".into(),
        operational_context: "No consent".into(),
        facts: StructuredFacts::NONE,
    };
    let a = backend.analyze(AgentRole::LegalAnalyst, &action).unwrap();
    assert_eq!(a.verdict, AgentVerdict::NonCompliant);
    assert_eq!(a.confidence, 0.8);
    let body: serde_json::Value = serde_json::from_slice(&s.seen.lock().unwrap()[0].body).unwrap();
    let text = body["messages"].to_string();
    assert!(text.contains("Sell records to an advertiser"));
    assert!(text.contains("Treatment"));
}
