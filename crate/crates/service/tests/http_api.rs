//! The /v1 API end to end through the router.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pollaudit_core::engine::{AuditSession, ContestConfig, Schedule, StoppingRule};
use pollaudit_core::exact::{forward_dp, max_risk};
use pollaudit_core::{MethodSpec, SamplingScheme, TrueTally};
use pollaudit_service::{router, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _dir: Option<tempfile::TempDir>,
    store: Arc<Store>,
    app: Router,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let h = Self::at(dir.path());
        Self {
            _dir: Some(dir),
            ..h
        }
    }

    fn at(path: &std::path::Path) -> Self {
        let store = Arc::new(Store::open(path).unwrap());
        Self {
            app: router(store.clone()),
            store,
            _dir: None,
        }
    }

    async fn send(
        &self,
        method: &str,
        uri: &str,
        body: Option<Value>,
        key: Option<&str>,
    ) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        let req = req
            .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send("GET", uri, None, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.send("POST", uri, Some(body), None).await
    }

    async fn create(&self, body: Value) -> String {
        let (status, v) = self.post("/v1/contests", body).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn round(&self, id: &str, seq: u64, bits: &[u8]) -> (StatusCode, Value) {
        self.post(
            &format!("/v1/contests/{id}/rounds"),
            json!({ "sequence_number": seq, "interpretations": bits }),
        )
        .await
    }
}

fn bravo_contest() -> Value {
    json!({
        "scheme": "without-replacement",
        "total_ballots": 1000,
        "method": { "kind": "bravo", "p1": 0.6 },
        "max_sample": 200,
        "upper": 20.0
    })
}

#[tokio::test]
async fn health() {
    let h = Harness::new();
    let (status, v) = h.get("/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({ "status": "ok" }));
}

#[tokio::test]
async fn create_calibrates_to_the_risk_limit() {
    let h = Harness::new();
    let (status, v) = h
        .post(
            "/v1/contests",
            json!({
                "scheme": "without-replacement",
                "total_ballots": 20000,
                "method": { "kind": "bravo", "p1": 0.55 },
                "max_sample": 2000,
                "alpha": 0.05
            }),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let summary = &v["summary"];
    assert_eq!(summary["calibrated"], json!(true));
    assert_eq!(summary["nominal_scale"], json!("risk-limit"));
    let nominal = summary["nominal"].as_f64().unwrap();
    assert!((nominal - 0.053).abs() < 0.0015, "{nominal}");
    assert!(summary["achieved_risk"].as_f64().unwrap() <= 0.05);
    assert_eq!(v["status"], json!("open"));
    assert_eq!(v["next_sequence_number"], json!(1));
}

#[tokio::test]
async fn explicit_threshold_skips_calibration() {
    let h = Harness::new();
    let (status, v) = h.post("/v1/contests", bravo_contest()).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["summary"]["calibrated"], json!(false));
    assert!(v["summary"].get("achieved_risk").is_none());
    assert_eq!(v["summary"]["nominal"], json!(0.05));
    assert_eq!(v["summary"]["rule"]["upper"], json!(20.0));
}

#[tokio::test]
async fn invalid_contests_are_rejected() {
    let h = Harness::new();
    let mut too_many = bravo_contest();
    too_many["max_sample"] = json!(1001);
    let (status, v) = h.post("/v1/contests", too_many).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    assert!(v["error"]["message"].as_str().unwrap().contains("1001"));

    let mut both = bravo_contest();
    both["alpha"] = json!(0.05);
    assert_eq!(
        h.post("/v1/contests", both).await.0,
        StatusCode::BAD_REQUEST
    );

    let mut extra = bravo_contest();
    extra["colour"] = json!("red");
    assert_eq!(
        h.post("/v1/contests", extra).await.0,
        StatusCode::BAD_REQUEST
    );

    let mut bad_method = bravo_contest();
    bad_method["method"] = json!({ "kind": "bravo", "p1": 0.4 });
    assert_eq!(
        h.post("/v1/contests", bad_method).await.0,
        StatusCode::BAD_REQUEST
    );

    let req = Request::builder()
        .method("POST")
        .uri("/v1/contests")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(
        h.app.clone().oneshot(req).await.unwrap().status(),
        StatusCode::BAD_REQUEST
    );
    assert!(h.store.contest_ids().is_empty());
}

#[tokio::test]
async fn infeasible_calibration_is_unprocessable() {
    let h = Harness::new();
    // KMart without replacement depends on draw order, so it has no exact calibration
    let (status, v) = h
        .post(
            "/v1/contests",
            json!({
                "scheme": "without-replacement",
                "total_ballots": 500,
                "method": { "kind": "kmart" },
                "max_sample": 100,
                "alpha": 0.05
            }),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
}

#[tokio::test]
async fn idempotency_key_returns_the_same_contest() {
    let h = Harness::new();
    let (s1, a) = h
        .send("POST", "/v1/contests", Some(bravo_contest()), Some("k-1"))
        .await;
    let (s2, b) = h
        .send("POST", "/v1/contests", Some(bravo_contest()), Some("k-1"))
        .await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_eq!(a, b);
    let mut other = bravo_contest();
    other["upper"] = json!(30.0);
    assert_eq!(
        h.send("POST", "/v1/contests", Some(other), Some("k-1"))
            .await
            .0,
        StatusCode::CONFLICT
    );
    let (_, c) = h
        .send("POST", "/v1/contests", Some(bravo_contest()), None)
        .await;
    assert_ne!(a["id"], c["id"]);
    assert_eq!(h.store.contest_ids().len(), 2);
}

#[tokio::test]
async fn rounds_sequence_retry_and_termination() {
    let h = Harness::new();
    let id = h.create(bravo_contest()).await;

    let (status, first) = h.round(&id, 1, &[1, 0, 1]).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["round"]["decision"], json!("continue"));
    assert_eq!(first["round"]["n"], json!(3));
    assert_eq!(first["round"]["winners"], json!(2));
    assert!(first["round"]["statistic"].as_f64().is_some());

    // a retry of the same round is answered from the log
    let (status, again) = h.round(&id, 1, &[1, 0, 1]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, first);
    assert_eq!(h.round(&id, 1, &[1, 1, 1]).await.0, StatusCode::CONFLICT);
    assert_eq!(h.round(&id, 3, &[1]).await.0, StatusCode::CONFLICT);
    assert_eq!(h.round(&id, 0, &[1]).await.0, StatusCode::CONFLICT);
    assert_eq!(h.round(&id, 2, &[]).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(h.round(&id, 2, &[1, 2]).await.0, StatusCode::BAD_REQUEST);

    // 19 more winners: likelihood ratio well above 20
    let (status, cert) = h.round(&id, 2, &[1; 19]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cert["round"]["decision"], json!("certify"));
    assert_eq!(cert["status"], json!("certified"));
    assert_eq!(h.round(&id, 3, &[1]).await.0, StatusCode::GONE);
    assert_eq!(h.round(&id, 2, &[1; 19]).await, (StatusCode::OK, cert));

    let (status, view) = h.get(&format!("/v1/contests/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["status"], json!("certified"));
    assert_eq!(view["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(view["n"], json!(22));
    assert_eq!(view["next_sequence_number"], json!(3));
}

#[tokio::test]
async fn full_count_at_the_maximum() {
    let h = Harness::new();
    let mut body = bravo_contest();
    body["max_sample"] = json!(10);
    let id = h.create(body).await;
    let (_, v) = h.round(&id, 1, &[1, 0, 1, 0, 1, 0, 1, 0, 1, 0]).await;
    assert_eq!(v["round"]["decision"], json!("full-hand-count"));
    assert_eq!(v["round"]["reason"], json!("max-samples"));
    assert_eq!(v["status"], json!("full-count"));
}

#[tokio::test]
async fn unknown_contest_is_not_found() {
    let h = Harness::new();
    assert_eq!(h.get("/v1/contests/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.round("nope", 1, &[1]).await.0, StatusCode::NOT_FOUND);
    assert_eq!(
        h.get("/v1/contests/nope/projection?round_sizes=1&margins=0.1")
            .await
            .0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn concurrent_duplicate_rounds_append_once() {
    let h = Arc::new(Harness::new());
    let id = h.create(bravo_contest()).await;
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (h, id) = (h.clone(), id.clone());
            tokio::spawn(async move { h.round(&id, 1, &[1, 1, 0, 1]).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, v) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(v);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    let (_, view) = h.get(&format!("/v1/contests/{id}")).await;
    assert_eq!(view["rounds"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn decisions_match_the_engine_and_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let rounds: [&[u8]; 5] = [
        &[1, 0, 1, 1],
        &[0, 0, 1],
        &[1, 1, 0, 1, 0, 1],
        &[1, 0],
        &[1, 1, 1, 1, 1, 0, 1],
    ];
    let body = json!({
        "scheme": "without-replacement",
        "total_ballots": 300,
        "method": { "kind": "bayesian", "prior": { "family": "beta", "a": 1.0, "b": 1.0 } },
        "max_sample": 100,
        "upper": 99.0,
        "lower": 0.02,
        "schedule": { "kind": "increment", "step": 2 }
    });
    let (id, before) = {
        let h = Harness::at(dir.path());
        let id = h.create(body).await;
        let config = ContestConfig {
            scheme: SamplingScheme::without_replacement(300),
            method: MethodSpec::bayesian_beta(1.0, 1.0),
            rule: StoppingRule::new(99.0, 100)
                .with_lower(0.02)
                .with_schedule(Schedule::increment(2)),
        };
        let mut engine = AuditSession::new("x", config).unwrap();
        for (i, bits) in rounds.iter().enumerate() {
            let (status, v) = h.round(&id, i as u64 + 1, bits).await;
            if !engine.status().is_open() {
                assert_eq!(status, StatusCode::GONE);
                continue;
            }
            let expected = engine.append_round(bits).unwrap().verdict;
            assert_eq!(status, StatusCode::OK);
            let round: serde_json::Map<String, Value> = v["round"].as_object().unwrap().clone();
            let decision: pollaudit_core::engine::Decision =
                serde_json::from_value(Value::Object(round)).unwrap();
            assert_eq!(decision, expected.decision, "round {}", i + 1);
        }
        (id.clone(), h.get(&format!("/v1/contests/{id}")).await.1)
    };
    let h = Harness::at(dir.path());
    let (_, after) = h.get(&format!("/v1/contests/{id}")).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn projection_from_the_start_is_unconditional() {
    let h = Harness::new();
    let id = h.create(bravo_contest()).await;
    let (status, v) = h
        .get(&format!(
            "/v1/contests/{id}/projection?round_sizes=0,50,120&margins=0.1,0.3"
        ))
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let scheme = SamplingScheme::without_replacement(1000);
    let method = MethodSpec::bravo(0.6);
    for row in rows {
        let r = row["round_size"].as_u64().unwrap();
        let p = row["certify_probability"].as_f64().unwrap();
        if r == 0 {
            assert_eq!(p, 0.0);
            continue;
        }
        let share = row["share"].as_f64().unwrap();
        let single = StoppingRule::new(20.0, r).with_schedule(Schedule::Points { points: vec![] });
        let direct = forward_dp(&method, &single, &scheme, &TrueTally::share(share))
            .unwrap()
            .power;
        assert!(
            (p - direct).abs() < 1e-13,
            "r={r} share={share}: {p} vs {direct}"
        );
    }
    assert_eq!(rows[0]["margin"], json!(0.1));
    assert_eq!(rows[3]["margin"], json!(0.3));
}

#[tokio::test]
async fn projection_from_an_interior_state_matches_enumeration() {
    let h = Harness::new();
    let id = h
        .create(json!({
            "scheme": "without-replacement",
            "total_ballots": 12,
            "method": { "kind": "bayesian", "prior": { "family": "beta", "a": 1.0, "b": 1.0 } },
            "max_sample": 12,
            "upper": 4.0
        }))
        .await;
    let (_, r) = h.round(&id, 1, &[1, 0, 1]).await;
    assert_eq!(r["round"]["decision"], json!("continue"));
    // margins 1/3 and 2/3 are tallies of 8 and 10 out of 12
    let (status, v) = h
        .get(&format!("/v1/contests/{id}/projection?round_sizes=0,1,3,5,9&margins=0.3333333333333333,0.6666666666666666"))
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let scheme = SamplingScheme::without_replacement(12);
    let method = MethodSpec::bayesian_beta(1.0, 1.0);
    let rule = StoppingRule::new(4.0, 12);
    for row in v["rows"].as_array().unwrap() {
        let r = row["round_size"].as_u64().unwrap();
        let winners = (row["share"].as_f64().unwrap() * 12.0).round() as u64;
        let oracle = common::enumerate_round(&method, &rule, &scheme, winners, (3, 2), r);
        let got = row["certify_probability"].as_f64().unwrap();
        assert!(
            (got - oracle).abs() < 1e-12,
            "T={winners} r={r}: {got} vs {oracle}"
        );
    }
}

#[tokio::test]
async fn projection_rejects_bad_queries_and_closed_contests() {
    let h = Harness::new();
    let id = h.create(bravo_contest()).await;
    for q in [
        "round_sizes=&margins=0.1",
        "round_sizes=5&margins=1.5",
        "round_sizes=x&margins=0.1",
        "margins=0.1",
    ] {
        assert_eq!(
            h.get(&format!("/v1/contests/{id}/projection?{q}")).await.0,
            StatusCode::BAD_REQUEST,
            "{q}"
        );
    }
    h.round(&id, 1, &[1; 20]).await;
    assert_eq!(
        h.get(&format!(
            "/v1/contests/{id}/projection?round_sizes=5&margins=0.1"
        ))
        .await
        .0,
        StatusCode::GONE
    );
}

#[tokio::test]
async fn methods_catalog() {
    let h = Harness::new();
    let (status, v) = h.get("/v1/methods").await;
    assert_eq!(status, StatusCode::OK);
    let kinds: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["kind"].as_str().unwrap())
        .collect();
    for k in [
        "bayesian",
        "bravo",
        "max-bravo",
        "clip-audit",
        "kmart",
        "kaplan-wald",
        "kaplan-markov",
        "kaplan-kolmogorov",
    ] {
        assert!(kinds.contains(&k), "{k}");
    }
    // every example is itself a valid method
    for m in v.as_array().unwrap() {
        let spec: MethodSpec = serde_json::from_value(m["example"].clone()).unwrap();
        spec.validate().unwrap();
    }
}

#[tokio::test]
async fn calibrate_endpoint() {
    let h = Harness::new();
    let (status, v) = h
        .post(
            "/v1/calibrate",
            json!({
                "scheme": "without-replacement",
                "total_ballots": 2000,
                "method": { "kind": "bravo", "p1": 0.6 },
                "max_sample": 300,
                "alpha": 0.1
            }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let h_raw = v["raw_h"].as_f64().unwrap();
    let risk = max_risk(
        &MethodSpec::bravo(0.6),
        &StoppingRule::new(h_raw, 300),
        &SamplingScheme::without_replacement(2000),
    )
    .unwrap();
    assert!(risk <= 0.1);
    assert!((risk - v["achieved_risk"].as_f64().unwrap()).abs() < 1e-15);

    let (status, _) = h
        .post("/v1/calibrate", json!({ "scheme": "with-replacement", "method": { "kind": "bravo", "p1": 0.6 }, "max_sample": 300, "alpha": 1.5 }))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn evaluate_endpoint() {
    let h = Harness::new();
    let rule =
        json!({ "upper": 20.0, "max_sample": 150, "schedule": { "kind": "increment", "step": 5 } });
    let (status, v) = h
        .post(
            "/v1/evaluate",
            json!({
                "scheme": "without-replacement",
                "total_ballots": 1000,
                "method": { "kind": "bravo", "p1": 0.6 },
                "rule": rule,
                "shares": [0.5, 0.6],
                "include_pmf": true
            }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["evaluator"], json!("exact"));
    let scheme = SamplingScheme::without_replacement(1000);
    let rule = StoppingRule::new(20.0, 150).with_schedule(Schedule::increment(5));
    let direct = forward_dp(
        &MethodSpec::bravo(0.6),
        &rule,
        &scheme,
        &TrueTally::share(0.6),
    )
    .unwrap();
    assert_eq!(v["cells"][1]["power"].as_f64().unwrap(), direct.power);
    assert_eq!(
        v["cells"][1]["mean_sample_size"].as_f64().unwrap(),
        direct.mean_sample_size
    );
    assert_eq!(v["cells"][0]["power"], v["max_risk"]);
    assert!(v["cells"][1]["stop_pmf"].as_object().unwrap().len() > 1);

    let kk = json!({
        "scheme": "without-replacement",
        "total_ballots": 1000,
        "method": { "kind": "kaplan-kolmogorov", "gamma": 0.1 },
        "rule": { "upper": 20.0, "max_sample": 100 },
        "shares": [0.6]
    });
    assert_eq!(
        h.post("/v1/evaluate", kk.clone()).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let mut simulated = kk;
    simulated["simulation"] = json!({ "trials": 2000, "seed": 7 });
    let (status, v) = h.post("/v1/evaluate", simulated.clone()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["evaluator"], json!("monte-carlo"));
    assert!(v["cells"][0]["stderr"].is_array());
    assert_eq!(h.post("/v1/evaluate", simulated).await.1, v);
}
