use std::sync::{Arc, Barrier};

use elicit_core::prelude::*;
use elicit_core::serial;
use elicit_core::sim::{replay, SessionArchive};
use elicit_service::{
    CreateSession, QueryStatus, ServiceError, SessionStore, SubmitFeedback,
};

fn problem(m: usize, seed: u64) -> SyntheticProblem {
    generate_synthetic(&SyntheticSpec {
        n: 15,
        m,
        m_star: (m / 3).max(1),
        psi2: 1.0,
        sigma2: 1.0,
        test_size: 200,
        seed,
    })
}

fn request(p: &SyntheticProblem, kind: QueryKind) -> CreateSession {
    CreateSession {
        dataset: p.train.clone(),
        holdout: Some(p.test.clone()),
        hyperparameters: Some(Hyperparameters::synthetic(p.train.m(), (p.train.m() / 3).max(1))),
        ep_config: None,
        feedback_kind: kind,
    }
}

fn answer(p: &SyntheticProblem, kind: QueryKind, feature: usize) -> Feedback {
    let w = p.truth.w[feature];
    match kind {
        QueryKind::Value => Feedback::value(feature, w),
        QueryKind::Relevance => Feedback::relevance(feature, w != 0.0),
    }
}

fn submit(store: &SessionStore, id: &str, revision: u64, fb: Feedback) -> Result<elicit_service::SubmitOutcome, ServiceError> {
    store.submit(id, &SubmitFeedback { revision, feedback: fb })
}

#[test]
fn fresh_session_queries_the_argmax_feature() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(10, 1);
    let req = request(&p, QueryKind::Relevance);
    let h = req.hyperparameters.unwrap();
    let view = store.create(req).unwrap();

    let log = FeedbackLog::new();
    let fit = fit_posterior(&p.train, &log, &h, &EpConfig::default()).unwrap();
    let ranking = select_next_query(&fit.posterior, &p.train, &log, &h, &EpConfig::default(), QueryKind::Relevance).unwrap();
    assert_eq!(view.revision, 0);
    assert_eq!(view.status, QueryStatus::Pending);
    assert_eq!(view.feature, Some(ranking.selected));
    assert_eq!(view.feature_name.as_deref(), Some(p.train.feature_names()[ranking.selected].as_str()));

    let state = store.state(&view.session_id).unwrap();
    assert_eq!(state.mse_history.len(), 1);
    assert_eq!(state.revision, 0);
    assert_eq!(state.mse_on, "holdout");
}

#[test]
fn single_feature_session_asks_about_feature_zero() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(1, 2);
    let view = store.create(request(&p, QueryKind::Value)).unwrap();
    assert_eq!(view.feature, Some(0));
    let out = submit(&store, &view.session_id, 0, answer(&p, QueryKind::Value, 0)).unwrap();
    assert_eq!(out.next.status, QueryStatus::Complete);
    assert_eq!(out.next.feature, None);
}

#[test]
fn invalid_request_persists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(6, 3);
    let mut req = request(&p, QueryKind::Value);
    req.hyperparameters.as_mut().unwrap().pi = 0.4;
    assert!(matches!(store.create(req), Err(ServiceError::Invalid(_))));

    let mut req = request(&p, QueryKind::Value);
    req.holdout = Some(problem(7, 3).test);
    assert!(matches!(store.create(req), Err(ServiceError::Invalid(_))));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn query_and_state_do_not_mutate() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(8, 4);
    let id = store.create(request(&p, QueryKind::Value)).unwrap().session_id;
    let file = dir.path().join(format!("{id}.json"));
    let before_file = std::fs::read(&file).unwrap();
    let before = serde_json::to_vec(&store.state(&id).unwrap()).unwrap();
    let q1 = store.next_query(&id, true).unwrap();
    let q2 = store.next_query(&id, true).unwrap();
    let _ = store.export(&id).unwrap();
    assert_eq!(q1, q2);
    assert_eq!(q1.gains.as_ref().unwrap().len(), 8);
    assert!(store.next_query(&id, false).unwrap().gains.is_none());
    assert_eq!(serde_json::to_vec(&store.state(&id).unwrap()).unwrap(), before);
    assert_eq!(std::fs::read(&file).unwrap(), before_file);
}

#[test]
fn relevance_answer_advances_revision_and_feature() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(8, 5);
    let view = store.create(request(&p, QueryKind::Relevance)).unwrap();
    let first = view.feature.unwrap();
    let out = submit(&store, &view.session_id, 0, answer(&p, QueryKind::Relevance, first)).unwrap();
    assert_eq!(out.revision, 1);
    assert_ne!(out.next.feature, Some(first));
    assert!(out.mse.is_some());
    let state = store.state(&view.session_id).unwrap();
    assert!(state.features[first].queried);
    assert_eq!(state.mse_history.len(), 2);
    assert_eq!(state.mse_history[1], out.mse.unwrap());
}

#[test]
fn stale_wrong_and_mismatched_answers_are_rejected_without_change() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(8, 6);
    let view = store.create(request(&p, QueryKind::Value)).unwrap();
    let id = view.session_id.clone();
    let f = view.feature.unwrap();
    let before = serde_json::to_vec(&store.state(&id).unwrap()).unwrap();

    match submit(&store, &id, 3, answer(&p, QueryKind::Value, f)) {
        Err(ServiceError::Conflict { submitted: 3, current: 0 }) => {}
        other => panic!("expected conflict, got {other:?}"),
    }
    let other = (f + 1) % 8;
    assert!(matches!(
        submit(&store, &id, 0, Feedback::value(other, 1.0)),
        Err(ServiceError::Rejected(_))
    ));
    assert!(matches!(
        submit(&store, &id, 0, Feedback::relevance(f, true)),
        Err(ServiceError::Rejected(_))
    ));
    assert!(matches!(
        submit(&store, &id, 0, Feedback::value(f, f64::NAN)),
        Err(ServiceError::Invalid(_))
    ));
    assert_eq!(serde_json::to_vec(&store.state(&id).unwrap()).unwrap(), before);
}

#[test]
fn uncertain_answer_retires_feature_and_keeps_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(8, 7);
    let view = store.create(request(&p, QueryKind::Relevance)).unwrap();
    let id = view.session_id.clone();
    let f = view.feature.unwrap();
    let before = store.state(&id).unwrap();
    let out = submit(&store, &id, 0, Feedback::uncertain(f)).unwrap();
    let after = store.state(&id).unwrap();
    assert_eq!(out.revision, 1);
    assert_ne!(out.next.feature, Some(f));
    assert_eq!(after.mse_history, vec![before.mse_history[0]; 2]);
    for (a, b) in after.features.iter().zip(&before.features) {
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.inclusion, b.inclusion);
        assert_eq!(a.queried, a.index == f);
    }
}

#[test]
fn exhausted_session_reports_complete() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(4, 8);
    let mut view = store.create(request(&p, QueryKind::Value)).unwrap();
    let id = view.session_id.clone();
    let mut asked = Vec::new();
    while let Some(f) = view.feature {
        asked.push(f);
        view = submit(&store, &id, view.revision, answer(&p, QueryKind::Value, f)).unwrap().next;
    }
    asked.sort();
    assert_eq!(asked, vec![0, 1, 2, 3]);
    assert_eq!(view.status, QueryStatus::Complete);
    assert_eq!(store.next_query(&id, false).unwrap().status, QueryStatus::Complete);
    assert!(matches!(
        submit(&store, &id, 4, Feedback::value(0, 0.0)),
        Err(ServiceError::Rejected(_))
    ));
    assert_eq!(store.state(&id).unwrap().mse_history.len(), 5);
}

#[test]
fn warm_refits_track_cold_refits() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(8, 9);
    let req = request(&p, QueryKind::Value);
    let h = req.hyperparameters.unwrap();
    let mut view = store.create(req).unwrap();
    let id = view.session_id.clone();
    for _ in 0..4 {
        let f = view.feature.unwrap();
        view = submit(&store, &id, view.revision, answer(&p, QueryKind::Value, f)).unwrap().next;
    }
    let state = store.state(&id).unwrap();
    let mut log = FeedbackLog::new();
    for fb in &state.feedback {
        log.push(*fb, 8).unwrap();
    }
    let cold = fit_posterior(&p.train, &log, &h, &EpConfig::default()).unwrap();
    for f in &state.features {
        assert!((f.mean - cold.posterior.m_bar()[f.index]).abs() < 1e-4);
        assert!((f.inclusion - cold.posterior.rho_bar()[f.index]).abs() < 1e-4);
    }
}

#[test]
fn reloaded_session_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem(10, 10);
    let (id, before, query) = {
        let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
        let mut view = store.create(request(&p, QueryKind::Relevance)).unwrap();
        let id = view.session_id.clone();
        for i in 0..5 {
            let f = view.feature.unwrap();
            let fb = if i == 2 { Feedback::uncertain(f) } else { answer(&p, QueryKind::Relevance, f) };
            view = submit(&store, &id, view.revision, fb).unwrap().next;
        }
        let state = serde_json::to_vec(&store.state(&id).unwrap()).unwrap();
        let query = store.next_query(&id, true).unwrap();
        (id, state, query)
    };
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    assert_eq!(serde_json::to_vec(&store.state(&id).unwrap()).unwrap(), before);
    assert_eq!(store.next_query(&id, true).unwrap(), query);

    // The reloaded session keeps going.
    let f = query.feature.unwrap();
    let out = submit(&store, &id, query.revision, answer(&p, QueryKind::Relevance, f)).unwrap();
    assert_eq!(out.revision, 6);
}

#[test]
fn export_replays_to_the_same_history() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    let p = problem(12, 11);
    let mut view = store.create(request(&p, QueryKind::Value)).unwrap();
    let id = view.session_id.clone();
    let fresh = store.export(&id).unwrap();
    assert!(fresh.transcript.is_empty());
    for i in 0..8 {
        let f = view.feature.unwrap();
        let fb = if i % 3 == 1 { Feedback::uncertain(f) } else { answer(&p, QueryKind::Value, f) };
        view = submit(&store, &id, view.revision, fb).unwrap().next;
    }
    let archive = store.export(&id).unwrap();
    assert_eq!(archive.transcript.len(), 8);
    assert_eq!(archive.transcript.last().unwrap().revision, 8);
    let text = serial::to_string(&archive).unwrap();
    let back: SessionArchive = serial::from_str(&text).unwrap();
    let replayed = replay(&back).unwrap();
    assert_eq!(replayed.mse_history, archive.mse_history);
    assert_eq!(replayed.posteriors, archive.posteriors);
}

#[test]
fn concurrent_submissions_accept_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap());
    let p = problem(10, 12);
    let view = store.create(request(&p, QueryKind::Value)).unwrap();
    let f = view.feature.unwrap();
    let fb = answer(&p, QueryKind::Value, f);
    let threads = 8;
    let barrier = Arc::new(Barrier::new(threads));
    let handles: Vec<_> = (0..threads)
        .map(|_| {
            let store = store.clone();
            let barrier = barrier.clone();
            let id = view.session_id.clone();
            std::thread::spawn(move || {
                barrier.wait();
                submit(&store, &id, 0, fb)
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let accepted = results.iter().filter(|r| r.is_ok()).count();
    let conflicts = results
        .iter()
        .filter(|r| matches!(r, Err(ServiceError::Conflict { current: 1, .. })))
        .count();
    assert_eq!(accepted, 1);
    assert_eq!(conflicts, threads - 1);
    let state = store.state(&view.session_id).unwrap();
    assert_eq!(state.revision, 1);
    assert_eq!(state.feedback.len(), 1);
}

#[test]
fn unknown_and_malformed_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path(), Hyperparameters::review_data()).unwrap();
    for id in ["missing", "../etc/passwd", ""] {
        assert!(matches!(store.state(id), Err(ServiceError::NotFound(_))));
    }
}

#[test]
fn default_hyperparameters_apply_when_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let default_h = Hyperparameters::synthetic(6, 2);
    let store = SessionStore::open(dir.path(), default_h).unwrap();
    let p = problem(6, 13);
    let mut req = request(&p, QueryKind::Value);
    req.hyperparameters = None;
    let id = store.create(req).unwrap().session_id;
    assert_eq!(store.export(&id).unwrap().hyperparameters, default_h);
}
