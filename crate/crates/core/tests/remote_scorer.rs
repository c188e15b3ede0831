//! Remote scorer against an in-process HTTP server.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use reflprior::error::Error;
use reflprior::image::ImageF;
use reflprior::intensity::{intensity_prior_report, IntensityConfig};
use reflprior::severity::{
    ordinal_score, restricted_softmax, CategoryLogits, PatchIndex, RemoteScorer, RetryPolicy, Scorer, ScorerConfig,
};
use serde_json::{json, Value};

use common::{chat_reply, logprob_reply, StubServer};

const AT: PatchIndex = PatchIndex { row: 0, col: 0 };

fn config(url: &str) -> ScorerConfig {
    ScorerConfig {
        endpoint_url: url.to_string(),
        model_name: "stub-vision".to_string(),
        timeout_secs: 5,
        ..ScorerConfig::default()
    }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(5),
    }
}

/// Answers severity prompts with fixed logprobs and box prompts with one box.
fn standard_handler(body: &Value) -> (u16, String) {
    if body.get("logprobs").is_some() {
        (200, logprob_reply(&[("Major", -0.2), ("Mid", -1.9), ("None", -4.0), ("banana", -0.1)]))
    } else {
        (200, chat_reply(r#"Here: [{"x0": 0.25, "y0": 0.25, "x1": 0.75, "y1": 0.5}]"#))
    }
}

/// Every 32-pixel patch differs, so none is answered from another's cache entry.
fn scene() -> ImageF {
    ImageF::from_fn(64, 96, 3, |y, x, c| {
        let texture = ((y * 3 + x * 5 + c * 7) % 32) as f64 / 31.0;
        0.5 * texture + (3 * (y / 32) + x / 32) as f64 / 12.0
    })
    .unwrap()
}

#[test]
fn logprobs_become_a_distribution() {
    let server = StubServer::start(|_| (200, logprob_reply(&[("Maj", -0.2), ("mid", -1.9), ("None", -4.0)])));
    let scorer = RemoteScorer::new(config(&server.url()), Some("k".into())).unwrap();
    let d = scorer.score_patch(&ImageF::filled(32, 32, 3, 0.4).unwrap(), AT).unwrap();

    // Unreturned categories sit 10 below the smallest returned logprob.
    let want = restricted_softmax(&CategoryLogits::new([-4.0, -14.0, -1.9, -0.2, -14.0]).unwrap(), 1.0).unwrap();
    for (a, b) in d.probs().iter().zip(want.probs()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(ordinal_score(&d) > 3.5);

    let req = &server.requests()[0];
    assert_eq!(req["model"], "stub-vision");
    assert_eq!(req["max_tokens"], 1);
    assert_eq!(req["logprobs"], true);
    let url = req["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
    assert!(url.starts_with("data:image/png;base64,"));
    assert_eq!(server.headers()[0].get("authorization").map(String::as_str), Some("Bearer k"));
}

#[test]
fn cached_run_sends_no_requests() {
    let server = StubServer::start(standard_handler);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&server.url());
    cfg.cache_path = Some(dir.path().join("cache.jsonl"));
    let img = scene();
    let icfg = IntensityConfig::default();

    let first = RemoteScorer::new(cfg.clone(), Some("k".into())).unwrap();
    let a = intensity_prior_report(&img, &first, &icfg).unwrap();
    let patches = a.grid.rows * a.grid.cols;
    assert_eq!(first.requests_sent(), patches + 1);
    assert_eq!(a.boxes.len(), 1);

    let second = RemoteScorer::new(cfg, Some("k".into())).unwrap();
    let b = intensity_prior_report(&img, &second, &icfg).unwrap();
    assert_eq!(second.requests_sent(), 0);
    assert_eq!(server.hits(), patches + 1);
    assert_eq!(a.boxes, b.boxes);
    for (x, y) in a.prior.data().iter().zip(b.prior.data()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn in_flight_requests_are_bounded() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (l, p) = (live.clone(), peak.clone());
    let server = StubServer::start(move |_| {
        let now = l.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(60));
        l.fetch_sub(1, Ordering::SeqCst);
        (200, logprob_reply(&[("Minor", -0.5)]))
    });
    let mut cfg = config(&server.url());
    cfg.max_in_flight = 2;
    let scorer = RemoteScorer::new(cfg, None).unwrap();
    std::thread::scope(|s| {
        for i in 0..8 {
            let scorer = &scorer;
            s.spawn(move || {
                let patch = ImageF::filled(16, 16, 3, i as f64 / 10.0).unwrap();
                scorer.score_patch(&patch, AT).unwrap();
            });
        }
    });
    assert_eq!(server.hits(), 8);
    assert_eq!(peak.load(Ordering::SeqCst), 2);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = StubServer::start(|_| (503, "overloaded".to_string()));
    let url = server.url();
    let scorer = RemoteScorer::new(config(&url), None).unwrap().with_retry(fast_retry());
    let err = scorer.score_patch(&ImageF::filled(16, 16, 3, 0.5).unwrap(), AT).unwrap_err();
    match &err {
        Error::ScorerUnavailable { endpoint, .. } => assert_eq!(endpoint, &url),
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains(&url));
    assert_eq!(server.hits(), 3);
    assert_eq!(scorer.requests_sent(), 3);
}

#[test]
fn recovers_when_a_retry_succeeds() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let server = StubServer::start(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) == 0 {
            (500, "boom".to_string())
        } else {
            (200, logprob_reply(&[("Critical", -0.01)]))
        }
    });
    let scorer = RemoteScorer::new(config(&server.url()), None).unwrap().with_retry(fast_retry());
    let d = scorer.score_patch(&ImageF::filled(16, 16, 3, 0.5).unwrap(), AT).unwrap();
    assert!(d.probs()[4] > 0.99);
    assert_eq!(server.hits(), 2);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let url = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}/v1/chat/completions", l.local_addr().unwrap())
    };
    let scorer = RemoteScorer::new(config(&url), None).unwrap().with_retry(fast_retry());
    let err = scorer.score_patch(&ImageF::filled(16, 16, 3, 0.5).unwrap(), AT).unwrap_err();
    assert!(matches!(err, Error::ScorerUnavailable { .. }), "{err}");
}

#[test]
fn malformed_replies_are_protocol_errors() {
    let replies = [
        logprob_reply(&[("banana", -0.1), ("the", -2.0)]),
        json!({"choices": [{"message": {"content": "Major"}}]}).to_string(),
        "not json at all".to_string(),
    ];
    for reply in replies {
        let server = StubServer::start(move |_| (200, reply.clone()));
        let scorer = RemoteScorer::new(config(&server.url()), None).unwrap().with_retry(fast_retry());
        let err = scorer.score_patch(&ImageF::filled(16, 16, 3, 0.5).unwrap(), AT).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
        assert_eq!(server.hits(), 1, "protocol errors are not retried");
    }
}

#[test]
fn unparseable_box_reply_means_no_boxes() {
    let server = StubServer::start(|_| (200, chat_reply("I cannot see any reflections.")));
    let scorer = RemoteScorer::new(config(&server.url()), None).unwrap();
    assert!(scorer.detect_reflection_boxes(&scene()).unwrap().is_empty());
}
