//! The HTTP client against a local stub chat-completions server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use llmrank::grounding::parse_output;
use llmrank::llmclient::{Completer, CompletionRequest, LiveClient, LlmConfig, LlmError};
use llmrank::promptkit::{CandidateSlot, OutputMode, PromptBundle, StrategyKind};
use llmrank::ItemId;

struct Seen {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves one scripted `(status, body)` per connection; a `None` body
/// answers with the prompt's candidate slots in reverse order.
fn stub(script: Vec<(u16, Option<String>)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&buf).unwrap();
            let content = body.unwrap_or_else(|| {
                let prompt = req["messages"][0]["content"].as_str().unwrap();
                let m: usize = prompt
                    .split("there are ")
                    .nth(1)
                    .and_then(|s| s.split(' ').next())
                    .and_then(|s| s.parse().ok())
                    .unwrap();
                let lines: Vec<String> = (0..m).rev().map(|s| s.to_string()).collect();
                serde_json::json!({"choices": [{"message": {"role": "assistant", "content": lines.join("\n")}}]})
                    .to_string()
            });
            let path = request_line.split(' ').nth(1).unwrap_or("").to_string();
            tx.send(Seen { path, auth, body: req }).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{content}",
                content.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), rx)
}

fn bundle() -> PromptBundle {
    PromptBundle {
        user: "u".into(),
        text: "Now there are 4 candidate movies that I can watch next".into(),
        candidate_slots: (0..4)
            .map(|slot| CandidateSlot {
                slot,
                item: ItemId::new(format!("c{slot}")),
                title: format!("T{slot}"),
            })
            .collect(),
        output_mode: OutputMode::Index,
        strategy: StrategyKind::Sequential,
        domain: "movies".into(),
        history: vec![],
    }
}

fn config(endpoint: String, env: &str) -> LlmConfig {
    LlmConfig {
        endpoint_url: endpoint,
        max_retries: 2,
        backoff_ms: 1,
        timeout_secs: 10,
        api_key_env: env.into(),
        ..LlmConfig::default()
    }
}

#[test]
fn answers_parse_into_a_ranking() {
    let (url, rx) = stub(vec![(200, None)]);
    std::env::set_var("LLMRANK_TEST_KEY_A", "sk-test");
    let client = LiveClient::new(config(url, "LLMRANK_TEST_KEY_A")).unwrap();
    assert!(!format!("{client:?}").contains("sk-test"));
    let b = bundle();
    let gt = ItemId::from("c3");
    let out = client
        .complete(&CompletionRequest {
            bundle: &b,
            ground_truth: Some(&gt),
            attempt: 0,
        })
        .unwrap();
    let r = parse_output(&out, &b, Some(&gt));
    assert_eq!(r.slots, [3, 2, 1, 0]);
    assert_eq!(r.gt_rank, Some(0));

    let seen = rx.recv().unwrap();
    assert_eq!(seen.path, "/v1/chat/completions");
    assert_eq!(seen.auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(seen.body["model"], "gpt-3.5-turbo");
    assert_eq!(seen.body["temperature"], 0.2);
    assert_eq!(seen.body["messages"][0]["role"], "user");
    assert_eq!(seen.body["messages"][0]["content"], b.text.as_str());
}

#[test]
fn rate_limits_and_server_errors_are_retried() {
    let (url, rx) = stub(vec![(429, Some("{}".into())), (503, Some("busy".into())), (200, None)]);
    let client = LiveClient::new(config(url, "LLMRANK_TEST_KEY_UNSET")).unwrap();
    let b = bundle();
    let req = CompletionRequest {
        bundle: &b,
        ground_truth: None,
        attempt: 0,
    };
    assert_eq!(client.complete(&req).unwrap(), "3\n2\n1\n0");
    assert_eq!(rx.iter().take(3).count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, rx) = stub(vec![(400, Some("bad model".into()))]);
    let client = LiveClient::new(config(url, "LLMRANK_TEST_KEY_UNSET")).unwrap();
    let b = bundle();
    let err = client
        .complete(&CompletionRequest {
            bundle: &b,
            ground_truth: None,
            attempt: 0,
        })
        .unwrap_err();
    assert!(matches!(&err, LlmError::Status { status: 400, body } if body == "bad model"), "{err}");
    assert_eq!(rx.recv().unwrap().auth, None);
}

#[test]
fn unreachable_endpoint_fails_after_all_attempts() {
    // bind then drop to get a port nothing listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = LiveClient::new(config(format!("http://127.0.0.1:{port}"), "LLMRANK_TEST_KEY_UNSET")).unwrap();
    let b = bundle();
    let err = client
        .complete(&CompletionRequest {
            bundle: &b,
            ground_truth: None,
            attempt: 0,
        })
        .unwrap_err();
    assert!(matches!(err, LlmError::RetriesExhausted { attempts: 3, .. }), "{err}");
}
