use std::collections::HashSet;
use std::sync::Arc;

use chrono::TimeDelta;
use evocaptcha_core::audio::{load_wav, MixSpec};
use evocaptcha_core::figlet::{bundled_fonts_dir, load_font_dir};
use evocaptcha_service::*;
use proptest::prelude::*;

struct Fixture {
    _dir: tempfile::TempDir,
    config: ServiceConfig,
    time: Arc<ManualTime>,
    service: ChallengeService,
}

fn fixture_with(config: ServiceConfig) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { audit_log: dir.path().join("audit.jsonl"), ..config };
    let time = Arc::new(ManualTime::default());
    let service = ChallengeService::open(&config, ChallengePools::from_config(&config).unwrap(), time.clone()).unwrap();
    Fixture { _dir: dir, config, time, service }
}

fn fixture() -> Fixture {
    fixture_with(ServiceConfig::default())
}

impl Fixture {
    fn truth(&self, token: &str) -> String {
        let t = self.service.inspect(token).unwrap();
        let g = self.service.pools().generate(t.kind, t.seed).unwrap();
        assert_eq!(g.challenge_id, t.challenge_id);
        g.truth
    }

    fn reopen(&self) -> ChallengeService {
        ChallengeService::open(&self.config, ChallengePools::from_config(&self.config).unwrap(), self.time.clone())
            .unwrap()
    }

    fn events(&self) -> Vec<AuditEvent> {
        read_events(&self.config.audit_log).unwrap()
    }
}

const GAUSSIAN_10: ChallengeKind = ChallengeKind::Audio { environment: MixSpec::Gaussian { snr_db: 10.0 } };

#[test]
fn text_asset_is_served_while_pending() {
    let f = fixture();
    let issued = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    assert_eq!(issued.token.len(), 32);
    assert_eq!(issued.asset_url, format!("/v1/asset/{}", issued.token));
    assert_eq!(issued.expires_in, 180);
    assert!(issued.options.is_none());
    let a = f.service.fetch_asset(&issued.token).unwrap();
    assert_eq!(a.media_type, "text/plain; charset=utf-8");
    let text = String::from_utf8(a.bytes.to_vec()).unwrap();
    assert!(text.lines().count() >= 3);
    assert_eq!(f.service.fetch_asset(&issued.token).unwrap(), a);
    assert_eq!(f.service.inspect(&issued.token).unwrap().state, TokenState::Pending);
}

#[test]
fn image_asset_is_png() {
    let f = fixture();
    let issued = f.service.issue(ChallengeKind::AsciiImage, None).unwrap();
    let a = f.service.fetch_asset(&issued.token).unwrap();
    assert_eq!(a.media_type, "image/png");
    assert_eq!(&a.bytes[..8], b"\x89PNG\r\n\x1a\n");
}

#[test]
fn audio_token_records_environment_and_seed() {
    let f = fixture();
    let issued = f.service.issue(GAUSSIAN_10, Some("tag-1")).unwrap();
    let options = issued.options.clone().unwrap();
    assert_eq!(options.len(), 5);
    let t = f.service.inspect(&issued.token).unwrap();
    assert_eq!(t.kind, GAUSSIAN_10);
    let a = f.service.fetch_asset(&issued.token).unwrap();
    assert_eq!(a.media_type, "audio/wav");
    assert!(load_wav(&a.bytes).unwrap().duration_seconds() > 1.0);
    match &f.events()[0] {
        AuditEvent { event: EventKind::Issued { kind, seed, .. }, client_tag, .. } => {
            assert_eq!((*kind, *seed), (GAUSSIAN_10, t.seed));
            assert_eq!(client_tag.as_deref(), Some("tag-1"));
        }
        other => panic!("{other:?}"),
    }
    let truth = f.truth(&issued.token);
    let wrong = ["A", "B", "C", "D", "E"].into_iter().find(|l| *l != truth).unwrap();
    assert!(!f.service.submit(&issued.token, wrong).unwrap().passed);

    let issued = f.service.issue(GAUSSIAN_10, None).unwrap();
    let truth = f.truth(&issued.token);
    assert!(f.service.submit(&issued.token, &format!(" {}. ", truth.to_lowercase())).unwrap().passed);
}

#[test]
fn thousand_issues_are_all_distinct() {
    let f = fixture();
    let mut tokens = HashSet::new();
    let mut ids = HashSet::new();
    let mut answers = HashSet::new();
    for _ in 0..1000 {
        let issued = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
        let t = f.service.inspect(&issued.token).unwrap();
        assert!(tokens.insert(issued.token.clone()));
        assert!(ids.insert(t.challenge_id));
        assert!(answers.insert(f.truth(&issued.token)));
    }
}

#[test]
fn expired_token_never_grades() {
    let f = fixture();
    let issued = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    let truth = f.truth(&issued.token);
    f.time.advance(TimeDelta::seconds(179));
    f.service.fetch_asset(&issued.token).unwrap();
    f.time.advance(TimeDelta::seconds(1));
    assert!(matches!(f.service.fetch_asset(&issued.token), Err(ServiceError::ExpiredToken)));
    assert_eq!(f.service.inspect(&issued.token).unwrap().state, TokenState::Expired);
    assert!(matches!(f.service.submit(&issued.token, &truth), Err(ServiceError::ExpiredToken)));
    let expired: Vec<_> = f.events().into_iter().filter(|e| e.event == EventKind::Expired).collect();
    assert_eq!(expired.len(), 1);
    assert_eq!(f.service.live_stats().expired, 1);
}

#[test]
fn unknown_token() {
    let f = fixture();
    assert!(matches!(f.service.fetch_asset("00"), Err(ServiceError::UnknownToken)));
    assert!(matches!(f.service.submit("00", "x"), Err(ServiceError::UnknownToken)));
}

#[test]
fn one_attempt_per_token() {
    let f = fixture();
    let ok = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    let truth = f.truth(&ok.token);
    let mut spaced: String = truth.to_lowercase().chars().flat_map(|c| [c, ' ']).collect();
    spaced.push('!');
    assert_eq!(f.service.submit(&ok.token, &spaced).unwrap(), SubmitOutcome { passed: true, attempts_remaining: 0 });
    assert_eq!(f.service.inspect(&ok.token).unwrap().state, TokenState::Passed);
    assert!(matches!(f.service.submit(&ok.token, &truth), Err(ServiceError::NoAttemptsLeft)));
    assert!(matches!(f.service.fetch_asset(&ok.token), Err(ServiceError::NoAttemptsLeft)));

    let bad = f.service.issue(ChallengeKind::AsciiImage, None).unwrap();
    let truth = f.truth(&bad.token);
    assert_eq!(f.service.submit(&bad.token, "nope").unwrap(), SubmitOutcome { passed: false, attempts_remaining: 0 });
    assert_eq!(f.service.inspect(&bad.token).unwrap().state, TokenState::Failed);
    assert!(matches!(f.service.submit(&bad.token, &truth), Err(ServiceError::NoAttemptsLeft)));
}

#[test]
fn configurable_attempts() {
    let f = fixture_with(ServiceConfig { attempts: 3, ..ServiceConfig::default() });
    let issued = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    let truth = f.truth(&issued.token);
    assert_eq!(f.service.submit(&issued.token, "X").unwrap(), SubmitOutcome { passed: false, attempts_remaining: 2 });
    assert_eq!(f.service.submit(&issued.token, "Y").unwrap(), SubmitOutcome { passed: false, attempts_remaining: 1 });
    assert_eq!(f.service.inspect(&issued.token).unwrap().state, TokenState::Pending);
    assert_eq!(f.service.submit(&issued.token, &truth).unwrap(), SubmitOutcome { passed: true, attempts_remaining: 0 });
    let s = f.service.live_stats();
    assert_eq!((s.issued, s.passed, s.failed), (1, 1, 2));
}

#[test]
fn audio_needs_a_pool() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { audit_log: dir.path().join("a.jsonl"), ..ServiceConfig::default() };
    let fonts = load_font_dir(&bundled_fonts_dir()).unwrap().fonts;
    let service =
        ChallengeService::open(&config, ChallengePools::ascii_only(fonts), Arc::new(ManualTime::default())).unwrap();
    assert!(!service.audio_available());
    assert!(matches!(service.issue(GAUSSIAN_10, None), Err(ServiceError::PoolUnavailable(_))));
    let missing = ServiceConfig { noise_dir: Some(dir.path().join("none")), ..config };
    assert!(!ChallengePools::from_config(&missing).unwrap().audio_available());
}

fn event(secs: i64, token: &str, event: EventKind) -> AuditEvent {
    AuditEvent {
        timestamp: chrono::DateTime::from_timestamp(1_767_225_600 + secs, 0).unwrap(),
        token: token.into(),
        event,
        client_tag: None,
    }
}

fn issued_event(secs: i64, token: &str) -> AuditEvent {
    event(
        secs,
        token,
        EventKind::Issued {
            challenge_id: format!("c-{token}"),
            kind: ChallengeKind::AsciiText,
            seed: 1,
            ttl_seconds: 180,
            attempts: 1,
            answer: StoredAnswer { salt: "00".into(), digest: "ff".into(), truth: "ABC".into() },
        },
    )
}

#[test]
fn stats_fold() {
    assert_eq!(fold_stats(&[], Window::all()), Stats::default());
    let log = vec![
        issued_event(0, "a"),
        issued_event(1, "b"),
        issued_event(2, "c"),
        event(3, "a", EventKind::AssetFetched),
        event(4, "a", EventKind::Submitted { passed: true, similarity: Some(1.0), latency_ms: 4000 }),
        event(5, "b", EventKind::Submitted { passed: true, similarity: Some(1.0), latency_ms: 4000 }),
        event(6, "c", EventKind::Submitted { passed: false, similarity: Some(0.25), latency_ms: 4000 }),
    ];
    let s = fold_stats(&log, Window::all());
    assert_eq!(s, Stats { issued: 3, passed: 2, failed: 1, expired: 0, mean_similarity_of_failures: Some(0.25) });
    let late = Window { since: Some(log[6].timestamp + TimeDelta::seconds(1)), until: None };
    assert_eq!(fold_stats(&log, late), Stats::default());
    let early = Window { since: None, until: Some(log[3].timestamp) };
    assert_eq!(fold_stats(&log, early).issued, 3);
    assert_eq!(fold_stats(&log, early).passed, 0);
}

#[test]
fn audit_log_is_append_only_and_monotone() {
    let f = fixture();
    let mut before = Vec::new();
    for i in 0..20 {
        let issued = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
        if i % 2 == 0 {
            f.service.fetch_asset(&issued.token).unwrap();
            f.service.submit(&issued.token, "guess").unwrap();
        }
        f.time.advance(TimeDelta::milliseconds(250));
        let now = std::fs::read(&f.config.audit_log).unwrap();
        assert!(now.starts_with(&before));
        before = now;
    }
    let events = f.events();
    assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    assert_eq!(f.service.stats(Window::all()).unwrap(), f.service.live_stats());
}

#[test]
fn restart_rebuilds_tokens_from_the_log() {
    let f = fixture();
    let pending = f.service.issue(ChallengeKind::AsciiImage, None).unwrap();
    let audio = f.service.issue(ChallengeKind::Audio { environment: MixSpec::overlap() }, None).unwrap();
    let passed = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    f.service.submit(&passed.token, &f.truth(&passed.token)).unwrap();
    let short = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    let image_before = f.service.fetch_asset(&pending.token).unwrap();
    let audio_before = f.service.fetch_asset(&audio.token).unwrap();
    let truth = f.truth(&pending.token);

    f.time.advance(TimeDelta::seconds(100));
    let again = f.reopen();
    assert_eq!(again.fetch_asset(&pending.token).unwrap(), image_before);
    assert_eq!(again.fetch_asset(&audio.token).unwrap(), audio_before);
    assert!(matches!(again.submit(&passed.token, "x"), Err(ServiceError::NoAttemptsLeft)));
    assert!(again.submit(&pending.token, &truth).unwrap().passed);
    assert_eq!(again.live_stats(), again.stats(Window::all()).unwrap());
    drop(again);

    f.time.advance(TimeDelta::seconds(100));
    let third = f.reopen();
    assert!(matches!(third.fetch_asset(&short.token), Err(ServiceError::ExpiredToken)));
    assert!(matches!(third.fetch_asset(&audio.token), Err(ServiceError::ExpiredToken)));
    let s = third.live_stats();
    assert_eq!((s.issued, s.passed, s.expired), (4, 2, 2));
    assert_eq!(s, third.stats(Window::all()).unwrap());
}

#[test]
fn sweep_expires_and_forgets() {
    let f = fixture();
    let a = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    let b = f.service.issue(ChallengeKind::AsciiText, None).unwrap();
    f.service.submit(&b.token, "x").unwrap();
    f.time.advance(TimeDelta::seconds(200));
    assert_eq!(f.service.sweep().unwrap(), 1);
    assert_eq!(f.service.inspect(&a.token).unwrap().state, TokenState::Expired);
    f.time.advance(TimeDelta::seconds(200));
    f.service.sweep().unwrap();
    assert!(matches!(f.service.submit(&a.token, "x"), Err(ServiceError::UnknownToken)));
    assert!(matches!(f.service.submit(&b.token, "x"), Err(ServiceError::UnknownToken)));
}

#[test]
fn config_file_and_environment() {
    let cfg = ServiceConfig::from_toml("port = 9000\nttl_seconds = 60\ntts_endpoint = \"http://tts:8020\"\n").unwrap();
    assert_eq!((cfg.port, cfg.ttl_seconds, cfg.attempts), (9000, 60, 1));
    assert!(ServiceConfig::from_toml("prot = 1").is_err());
    let mut cfg = ServiceConfig::default();
    cfg.apply_env([
        ("EVOCAPTCHA_PORT", "7000"),
        ("EVOCAPTCHA_TTL_SECONDS", "30"),
        ("EVOCAPTCHA_ATTEMPTS", "2"),
        ("EVOCAPTCHA_SNR_DB", "5.5"),
        ("EVOCAPTCHA_GAIN_DB", "-3"),
        ("EVOCAPTCHA_NOISE_DIR", "/noise"),
        ("PATH", "/bin"),
    ])
    .unwrap();
    assert_eq!((cfg.port, cfg.ttl_seconds, cfg.attempts), (7000, 30, 2));
    assert_eq!((cfg.default_snr_db, cfg.default_gain_db), (5.5, -3.0));
    assert_eq!(cfg.noise_dir.as_deref(), Some(std::path::Path::new("/noise")));
    assert!(cfg.clone().apply_env([("EVOCAPTCHA_PORT", "many")]).is_err());
    cfg.attempts = 0;
    assert!(cfg.validate().is_err());
}

#[derive(Debug, Clone)]
enum Op {
    Issue,
    Fetch(usize),
    SubmitRight(usize),
    SubmitWrong(usize),
    Advance(i64),
    Sweep,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => Just(Op::Issue),
        2 => (0..8usize).prop_map(Op::Fetch),
        2 => (0..8usize).prop_map(Op::SubmitRight),
        2 => (0..8usize).prop_map(Op::SubmitWrong),
        1 => (1..120i64).prop_map(Op::Advance),
        1 => Just(Op::Sweep),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lifecycle_invariants(ops in proptest::collection::vec(op(), 1..40)) {
        let f = fixture_with(ServiceConfig { attempts: 2, ..ServiceConfig::default() });
        let mut issued: Vec<(String, String, chrono::DateTime<chrono::Utc>)> = Vec::new();
        let mut closed: HashSet<String> = HashSet::new();
        for op in ops {
            let pick = |i: usize| issued.get(i % issued.len().max(1)).cloned();
            match op {
                Op::Issue => {
                    let t = f.service.issue(ChallengeKind::AsciiText, None).unwrap().token;
                    let truth = f.truth(&t);
                    issued.push((t, truth, f.time.now()));
                }
                Op::Fetch(i) => if let Some((t, _, _)) = pick(i) {
                    let _ = f.service.fetch_asset(&t);
                },
                Op::SubmitRight(i) | Op::SubmitWrong(i) => if let Some((t, truth, at)) = pick(i) {
                    let right = matches!(op, Op::SubmitRight(_));
                    let answer = if right { truth } else { "0".to_owned() };
                    let expired = f.time.now() >= at + TimeDelta::seconds(180);
                    match f.service.submit(&t, &answer) {
                        Ok(out) => {
                            prop_assert!(!expired, "graded after TTL");
                            prop_assert!(!closed.contains(&t), "graded a closed token");
                            prop_assert_eq!(out.passed, right);
                            if out.passed || out.attempts_remaining == 0 {
                                closed.insert(t.clone());
                            }
                        }
                        Err(_) => {
                            closed.insert(t.clone());
                        }
                    }
                },
                Op::Advance(s) => f.time.advance(TimeDelta::seconds(s)),
                Op::Sweep => { f.service.sweep().unwrap(); }
            }
        }
        prop_assert_eq!(f.service.stats(Window::all()).unwrap(), f.service.live_stats());
        prop_assert_eq!(f.service.live_stats().issued as usize, issued.len());
    }
}
