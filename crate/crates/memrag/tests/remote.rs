use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use memrag::remote::RemoteGenerator;
use memrag_core::generation::{GenerateError, Generator, Scorer};
use memrag_core::memory::QaPair;
use memrag_core::metrics::Metric;
use memrag_core::generation::{AnswerScorer, SelectedMemory};
use serde_json::{json, Value};

#[derive(Debug)]
struct Seen {
    auth: Option<String>,
    body: Value,
}

/// Serves one canned response per connection, in order, and records each
/// request.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { auth, body: serde_json::from_slice(&buf).unwrap() });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn posts_a_chat_request_and_reads_the_answer() {
    let (url, seen, h) = serve(vec![(200, completion("  Amsterdam next month. "))]);
    let g = RemoteGenerator::new(url, Some("k3y".into()), "test-model", Duration::from_secs(5), 0, 2);
    let answer = g.generate("Where is my boss going?", &["My boss is traveling to Amsterdam next month."]).unwrap();
    h.join().unwrap();
    assert_eq!(answer, "Amsterdam next month.");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer k3y"));
    assert_eq!(seen[0].body["model"], "test-model");
    assert_eq!(seen[0].body["temperature"], 0);
    let prompt = seen[0].body["messages"][1]["content"].as_str().unwrap();
    assert!(prompt.starts_with("Question: Where is my boss going?"));
    assert!(prompt.contains("1. My boss is traveling to Amsterdam next month."));
}

#[test]
fn retries_after_server_errors() {
    let (url, seen, h) = serve(vec![(500, "{}".into()), (200, completion("ok"))]);
    let g = RemoteGenerator::new(url, None, "m", Duration::from_secs(5), 2, 1);
    assert_eq!(g.generate("q", &[]).unwrap(), "ok");
    h.join().unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].auth.is_none());
}

#[test]
fn exhausted_retries_and_empty_answers_are_errors() {
    let (url, _, h) = serve(vec![(503, "{}".into()), (503, "{}".into())]);
    let g = RemoteGenerator::new(url, None, "m", Duration::from_secs(5), 1, 1);
    assert!(matches!(g.generate("q", &[]), Err(GenerateError::Transport { retries: 1, .. })));
    h.join().unwrap();

    let (url, _, h) = serve(vec![(200, completion("   "))]);
    let g = RemoteGenerator::new(url, None, "m", Duration::from_secs(5), 0, 1);
    assert!(matches!(g.generate("q", &[]), Err(GenerateError::EmptyAnswer)));
    h.join().unwrap();
}

#[test]
fn cached_scorer_calls_the_endpoint_once_per_selection() {
    let (url, seen, h) = serve(vec![(200, completion("Amsterdam"))]);
    let g = RemoteGenerator::new(url, None, "m", Duration::from_secs(5), 0, 1);
    let mut scorer = Scorer::cached(&g, Metric::RougeL);
    let qa = QaPair::new("Where?", "Amsterdam", vec!["m1".into()]);
    let sel = [SelectedMemory { id: "m1", text: "Boss goes to Amsterdam." }];
    let (a, s) = scorer.score("u\u{1f}Where?", &qa, &sel).unwrap();
    let (b, t) = scorer.score("u\u{1f}Where?", &qa, &sel).unwrap();
    h.join().unwrap();
    assert_eq!((a.as_str(), s), ("Amsterdam", 100.0));
    assert_eq!((b, t), (a, s));
    assert_eq!(seen.lock().unwrap().len(), 1);
}
