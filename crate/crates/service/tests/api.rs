use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use liftcap_service::{router, SessionStore, Snapshot};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn app() -> Router {
    router(Arc::new(SessionStore::in_memory()))
}

fn small_linear() -> Value {
    json!({
        "template": {"kind": "linear", "force_n": 2000.0, "n_delta": 24, "n_v": 24, "delta_max_m": 0.5, "v_max_mps": 1.5},
        "setup": {"m": 100.0, "m0": 0.0, "c": 0.0, "delta_max": 0.5},
        "t_f_s": 25.0
    })
}

async fn create(app: &Router, body: Value) -> Snapshot {
    let (status, v) = call(app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    serde_json::from_value(v).unwrap()
}

fn sample(s: &Snapshot, i: usize, j: usize) -> f64 {
    s.profile.samples[i * s.profile.n_v + j]
}

#[tokio::test]
async fn linear_template_has_the_documented_shape() {
    let app = app();
    let s = create(&app, small_linear()).await;
    let p = &s.profile;
    for i in 0..p.n_delta {
        for j in 0..p.n_v {
            let v = j as f64 * p.v_max / (p.n_v - 1) as f64;
            assert!((sample(&s, i, j) - 2000.0 * (1.0 - v / 1.5)).abs() < 1e-9);
        }
    }
    assert_eq!(s.revision, 0);
    assert_eq!(s.undo_depth, 0);
    assert!(s.simulation.feasible);
    assert!(s.simulation.max_exertion.reps_completed > 0);
    assert!(s.simulation.minimal_fatigue.reps_completed >= s.simulation.max_exertion.reps_completed);
}

#[tokio::test]
async fn constant_template_and_unknown_session() {
    let app = app();
    let s = create(
        &app,
        json!({"template": {"kind": "constant", "force_n": 1500.0, "n_delta": 8, "n_v": 8}}),
    )
    .await;
    assert!(s.profile.samples.iter().all(|&x| x == 1500.0));
    let (status, _) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::POST, "/sessions/nope/undo", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn uploaded_profile_comes_back_identical() {
    let app = app();
    let n = 10;
    let samples: Vec<f64> = (0..n * n)
        .map(|k| 1800.0 - 3.7 * (k % n) as f64 + 0.1 / (k + 1) as f64)
        .collect();
    let profile = json!({
        "n_delta": n, "n_v": n, "delta_max": 0.5, "v_max": 1.2,
        "samples": samples, "known_mask": vec![false; n * n], "units": "N,m,mps"
    });
    let s = create(&app, json!({"profile": profile})).await;
    let (_, fetched) = call(&app, Method::GET, &format!("/sessions/{}", s.id), None).await;
    assert_eq!(fetched["profile"], profile);
    assert_eq!(fetched["profile"].to_string(), profile.to_string());
}

#[tokio::test]
async fn malformed_creation_is_a_client_error() {
    let app = app();
    let bad_units = json!({"profile": {
        "n_delta": 2, "n_v": 2, "delta_max": 0.5, "v_max": 1.0,
        "samples": [1.0, 1.0, 1.0, 1.0], "known_mask": [false, false, false, false], "units": "lbf,in,ips"
    }});
    let (status, body) = call(&app, Method::POST, "/sessions", Some(bad_units)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("units"));

    let short = json!({"profile": {
        "n_delta": 2, "n_v": 2, "delta_max": 0.5, "v_max": 1.0,
        "samples": [1.0], "known_mask": [false], "units": "N,m,mps"
    }});
    let (status, _) = call(&app, Method::POST, "/sessions", Some(short)).await;
    assert!(status.is_client_error());

    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"template": {"kind": "cubic"}})),
    )
    .await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn bump_then_undo_restores_the_profile_exactly() {
    let app = app();
    let s0 = create(&app, small_linear()).await;
    let uri = format!("/sessions/{}", s0.id);
    let (status, v) = call(
        &app,
        Method::POST,
        &format!("{uri}/bump"),
        Some(json!({"delta_m": 0.2, "v_mps": 0.4, "sign": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let s1: Snapshot = serde_json::from_value(v).unwrap();
    assert_ne!(s1.profile.samples, s0.profile.samples);
    assert_eq!(s1.undo_depth, 1);
    assert_ne!(s1.simulation.id, s0.simulation.id);
    assert_eq!(s1.simulation.id, s1.revision);

    let (status, v) = call(&app, Method::POST, &format!("{uri}/undo"), None).await;
    assert_eq!(status, StatusCode::OK);
    let s2: Snapshot = serde_json::from_value(v).unwrap();
    assert_eq!(s2.profile, s0.profile);
    assert_eq!(s2.undo_depth, 0);
    assert_eq!(s2.simulation.max_exertion, s0.simulation.max_exertion);
    let (status, _) = call(&app, Method::POST, &format!("{uri}/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn sessions_do_not_share_edits() {
    let app = app();
    let a = create(&app, small_linear()).await;
    let b = create(&app, small_linear()).await;
    assert_ne!(a.id, b.id);
    call(
        &app,
        Method::POST,
        &format!("/sessions/{}/bump", a.id),
        Some(json!({"delta_m": 0.1, "v_mps": 0.1, "sign": -1})),
    )
    .await;
    let (_, bv) = call(&app, Method::GET, &format!("/sessions/{}", b.id), None).await;
    let b_now: Snapshot = serde_json::from_value(bv).unwrap();
    assert_eq!(b_now, b);
}

#[tokio::test]
async fn out_of_range_bump_is_rejected_without_change() {
    let app = app();
    let s = create(&app, small_linear()).await;
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/sessions/{}/bump", s.id),
        Some(json!({"delta_m": 0.7, "v_mps": 0.4, "sign": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{}", s.id), None).await;
    assert_eq!(serde_json::from_value::<Snapshot>(v).unwrap(), s);
}

#[tokio::test]
async fn bumps_stay_local() {
    let app = app();
    let mut body = small_linear();
    body["template"]["delta_max_m"] = json!(0.8);
    body["template"]["n_delta"] = json!(33);
    body["template"]["n_v"] = json!(33);
    body["influence"] = json!({"breadth": 0.05, "magnitude_n": 150.0});
    let s0 = create(&app, body).await;
    let uri = format!("/sessions/{}/bump", s0.id);
    call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"delta_m": 0.2, "v_mps": 0.45, "sign": -1})),
    )
    .await;
    let (_, v) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"delta_m": 0.6, "v_mps": 0.6, "sign": 1})),
    )
    .await;
    let s2: Snapshot = serde_json::from_value(v).unwrap();
    let p = &s0.profile;
    let (sd, sv) = (0.05 * p.delta_max, 0.05 * p.v_max);
    let tail = 150.0 * (-4.5f64).exp();
    for i in 0..p.n_delta {
        for j in 0..p.n_v {
            let d = i as f64 * p.delta_max / (p.n_delta - 1) as f64;
            let v = j as f64 * p.v_max / (p.n_v - 1) as f64;
            let far = |c: (f64, f64)| ((d - c.0) / sd).hypot((v - c.1) / sv) > 3.0;
            let change = (sample(&s2, i, j) - sample(&s0, i, j)).abs();
            if far((0.2, 0.45)) && far((0.6, 0.6)) {
                assert!(change <= 2.0 * tail, "({d}, {v}) changed by {change}");
            }
        }
    }
    assert_eq!(s2.undo_depth, 2);
}

#[tokio::test]
async fn raising_the_weak_point_does_not_lower_the_1rm() {
    let app = app();
    let mut body = small_linear();
    body["influence"] = json!({"breadth": 0.1, "magnitude_n": 200.0});
    let s0 = create(&app, body).await;
    // the weakest point of a maximal lift is at its fastest
    let rep = &s0.simulation.max_exertion.reps[0];
    let peak = rep.path.iter().max_by(|a, b| a.v.total_cmp(&b.v)).unwrap();
    let (_, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{}/bump", s0.id),
        Some(json!({"delta_m": peak.delta, "v_mps": peak.v, "sign": 1})),
    )
    .await;
    let s1: Snapshot = serde_json::from_value(v).unwrap();
    assert!(s1.simulation.one_rm_kg.unwrap() >= s0.simulation.one_rm_kg.unwrap());
}

#[tokio::test]
async fn setup_changes_reach_the_simulation() {
    let app = app();
    let s0 = create(&app, small_linear()).await;
    let uri = format!("/sessions/{}/setup", s0.id);

    let (status, v) = call(&app, Method::PATCH, &uri, Some(json!({"m0": 100.0, "c": 0.0}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let balanced: Snapshot = serde_json::from_value(v).unwrap();
    let first = &balanced.simulation.max_exertion.reps[0].path;
    assert!(first[1].v > 0.0, "load should move off the floor at once");
    assert_eq!(balanced.setup.m0, 100.0);

    // damping slows the lift
    let (_, v) = call(&app, Method::PATCH, &uri, Some(json!({"m0": 0.0}))).await;
    let undamped: Snapshot = serde_json::from_value(v).unwrap();
    let (_, v) = call(&app, Method::PATCH, &uri, Some(json!({"c": 200.0}))).await;
    let damped: Snapshot = serde_json::from_value(v).unwrap();
    let peak = |s: &Snapshot| {
        s.simulation.max_exertion.reps[0]
            .path
            .iter()
            .map(|p| p.v)
            .fold(0.0, f64::max)
    };
    assert!(peak(&damped) < peak(&undamped));

    // sweep the load until a single lift is no longer possible
    call(&app, Method::PATCH, &uri, Some(json!({"c": 0.0}))).await;
    let mut flips = None;
    let mut last = true;
    for m in (100..=260).step_by(20) {
        let (_, v) = call(&app, Method::PATCH, &uri, Some(json!({"m": m as f64}))).await;
        let s: Snapshot = serde_json::from_value(v).unwrap();
        if last && !s.simulation.feasible {
            flips = Some(m);
        }
        last = s.simulation.feasible;
    }
    let flip = flips.expect("feasibility never flipped");
    let one_rm = s0.simulation.one_rm_kg.unwrap();
    assert!(
        (flip as f64 - 20.0..=flip as f64).contains(&one_rm.floor()),
        "flip at {flip}, 1RM {one_rm}"
    );
}

#[tokio::test]
async fn invalid_setup_is_rejected_atomically() {
    let app = app();
    let s0 = create(&app, small_linear()).await;
    let uri = format!("/sessions/{}/setup", s0.id);
    for bad in [
        json!({"m": 150.0, "c": -1.0}),
        json!({"delta_max": 0.9}),
        json!({"t_f_s": 0.0}),
        json!({"influence_breadth": 2.0}),
    ] {
        let (status, _) = call(&app, Method::PATCH, &uri, Some(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{}", s0.id), None).await;
    assert_eq!(serde_json::from_value::<Snapshot>(v).unwrap(), s0);
}

#[tokio::test]
async fn snapshot_counts_edits_and_reimports() {
    let app = app();
    let s0 = create(&app, small_linear()).await;
    let base = format!("/sessions/{}", s0.id);
    call(
        &app,
        Method::POST,
        &format!("{base}/bump"),
        Some(json!({"delta_m": 0.3, "v_mps": 0.3, "sign": 1})),
    )
    .await;
    call(&app, Method::PATCH, &format!("{base}/setup"), Some(json!({"m": 110.0}))).await;
    call(
        &app,
        Method::POST,
        &format!("{base}/bump"),
        Some(json!({"delta_m": 0.1, "v_mps": 0.9, "sign": -1})),
    )
    .await;
    let (_, v) = call(&app, Method::GET, &base, None).await;
    let snap: Snapshot = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(snap.revision, 3);
    assert_eq!(snap.undo_depth, 2);

    let (_, sim) = call(&app, Method::GET, &format!("{base}/simulation"), None).await;
    assert_eq!(sim, v["simulation"]);

    let copy = create(&app, v).await;
    assert_eq!(copy.profile, snap.profile);
    assert_eq!(copy.setup, snap.setup);
    assert_eq!(copy.simulation.max_exertion, snap.simulation.max_exertion);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_edits_are_serialized() {
    let app = app();
    let mut body = small_linear();
    body["influence"] = json!({"breadth": 0.1, "magnitude_n": 10.0});
    let s0 = create(&app, body).await;
    let uri = format!("/sessions/{}/bump", s0.id);
    let mut handles = Vec::new();
    for k in 0..8 {
        let app = app.clone();
        let uri = uri.clone();
        handles.push(tokio::spawn(async move {
            call(
                &app,
                Method::POST,
                &uri,
                Some(json!({"delta_m": 0.05 * k as f64, "v_mps": 0.5, "sign": 1})),
            )
            .await
        }));
    }
    let mut revisions = Vec::new();
    for h in handles {
        let (status, v) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        let s: Snapshot = serde_json::from_value(v).unwrap();
        assert_eq!(s.simulation.id, s.revision);
        revisions.push(s.revision);
    }
    revisions.sort();
    assert_eq!(revisions, (1..=8).collect::<Vec<_>>());
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{}", s0.id), None).await;
    let s: Snapshot = serde_json::from_value(v).unwrap();
    assert_eq!(s.undo_depth, 8);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(SessionStore::open(dir.path().to_path_buf()).unwrap()));
    let s0 = create(&app, small_linear()).await;
    let (_, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{}/bump", s0.id),
        Some(json!({"delta_m": 0.2, "v_mps": 0.2, "sign": 1})),
    )
    .await;
    let s1: Snapshot = serde_json::from_value(v).unwrap();
    drop(app);

    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files.len(), 1, "{files:?}");

    let store = Arc::new(SessionStore::open(dir.path().to_path_buf()).unwrap());
    assert_eq!(store.len(), 1);
    let app = router(store);
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{}", s0.id), None).await;
    assert_eq!(serde_json::from_value::<Snapshot>(v).unwrap(), s1);
    let (_, v) = call(&app, Method::POST, &format!("/sessions/{}/undo", s0.id), None).await;
    assert_eq!(serde_json::from_value::<Snapshot>(v).unwrap().profile, s0.profile);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reads_during_an_edit_see_whole_states() {
    let app = app();
    let s0 = create(&app, small_linear()).await;
    let edit = {
        let app = app.clone();
        let uri = format!("/sessions/{}/bump", s0.id);
        tokio::spawn(async move {
            call(
                &app,
                Method::POST,
                &uri,
                Some(json!({"delta_m": 0.25, "v_mps": 0.5, "sign": 1})),
            )
            .await
        })
    };
    let mut seen = Vec::new();
    for _ in 0..20 {
        let (_, v) = call(&app, Method::GET, &format!("/sessions/{}", s0.id), None).await;
        seen.push(serde_json::from_value::<Snapshot>(v).unwrap());
    }
    let (_, v) = edit.await.unwrap();
    let s1: Snapshot = serde_json::from_value(v).unwrap();
    for s in seen {
        assert!(s == s0 || s == s1, "torn snapshot at revision {}", s.revision);
    }
}
