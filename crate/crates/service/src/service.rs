//! Token table and challenge lifecycle.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use evocaptcha_core::audio::{save_wav, MixSpec};
use evocaptcha_core::audio_challenge::{
    build_challenge, bundled_noise_bed, bundled_qa_sample, parse_qa_dataset, BuildOptions, ClientOption, HttpTts,
    NoiseBank, QaItem, StubTts, TtsProvider,
};
use evocaptcha_core::challenge::{generate_challenge, GenConfig, RasterSpec};
use evocaptcha_core::figlet::{bundled_fonts_dir, load_font_dir, FigletFont};
use evocaptcha_core::rng::rng_for;
use evocaptcha_core::scoring::{grade_choice, normalize_answer, similarity_ratio, ChoiceLabel};
use parking_lot::{Mutex, RwLock};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{AuditEvent, AuditLog, EventKind, Stats, Window};
use crate::clock::TimeSource;
use crate::config::ServiceConfig;
use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChallengeKind {
    AsciiText,
    AsciiImage,
    Audio { environment: MixSpec },
}

impl ChallengeKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AsciiText => "ascii_text",
            Self::AsciiImage => "ascii_image",
            Self::Audio { .. } => "audio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenState {
    Pending,
    Passed,
    Failed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeToken {
    pub token: String,
    pub challenge_id: String,
    pub kind: ChallengeKind,
    /// Stream seed the challenge was generated from.
    pub seed: u64,
    pub issued_at: DateTime<Utc>,
    pub ttl_seconds: u64,
    pub attempts_remaining: u32,
    pub state: TokenState,
}

impl ChallengeToken {
    pub fn expires_at(&self) -> DateTime<Utc> {
        self.issued_at + TimeDelta::seconds(self.ttl_seconds as i64)
    }
}

/// Salted digest of the normalized answer, plus the normalized answer itself
/// for similarity logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnswer {
    pub salt: String,
    pub digest: String,
    pub truth: String,
}

impl StoredAnswer {
    fn new(truth: String, salt: [u8; 16]) -> Self {
        let salt = hex::encode(salt);
        let digest = digest(&salt, &truth);
        Self { salt, digest, truth }
    }

    fn matches(&self, normalized_guess: &str) -> bool {
        let guess = digest(&self.salt, normalized_guess);
        // Compare every byte so timing does not depend on the prefix.
        guess.len() == self.digest.len()
            && guess.bytes().zip(self.digest.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

fn digest(salt: &str, answer: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0]);
    h.update(answer.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub bytes: Arc<Vec<u8>>,
    pub media_type: &'static str,
}

/// What `issue` hands back; nothing here reveals the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issued {
    pub token: String,
    pub kind: String,
    pub asset_url: String,
    pub expires_in: u64,
    /// The five choices for audio challenges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<ClientOption>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub passed: bool,
    pub attempts_remaining: u32,
}

/// A challenge as generated, before a token is attached.
pub struct Generated {
    pub challenge_id: String,
    pub truth: String,
    pub asset: Asset,
    pub options: Option<Vec<ClientOption>>,
}

struct AudioPool {
    items: Vec<QaItem>,
    bank: NoiseBank,
    tts: Box<dyn TtsProvider>,
    options: BuildOptions,
}

/// Everything needed to generate challenges.
pub struct ChallengePools {
    fonts: Vec<FigletFont>,
    gen: GenConfig,
    raster: RasterSpec,
    audio: Option<AudioPool>,
    rasterize_text: bool,
}

impl ChallengePools {
    pub fn ascii_only(fonts: Vec<FigletFont>) -> Self {
        Self { fonts, gen: GenConfig::default(), raster: RasterSpec::default(), audio: None, rasterize_text: false }
    }

    pub fn with_audio(mut self, items: Vec<QaItem>, bank: NoiseBank, tts: Box<dyn TtsProvider>) -> Self {
        self.audio = Some(AudioPool { items, bank, tts, options: BuildOptions::default() });
        self
    }

    /// Loads fonts, questions and noise beds named by `config`. Audio stays
    /// unavailable when the question set or every noise bed fails to load.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let font_dir = config.font_dir.clone().unwrap_or_else(bundled_fonts_dir);
        let fonts = load_font_dir(&font_dir).map_err(|e| ServiceError::PoolUnavailable(e.to_string()))?.fonts;
        if fonts.is_empty() {
            return Err(ServiceError::PoolUnavailable(format!("no usable fonts in {}", font_dir.display())));
        }
        let mut pools = Self::ascii_only(fonts);
        pools.rasterize_text = config.rasterize_text;
        match load_audio_inputs(config) {
            Ok((items, bank)) => {
                let tts: Box<dyn TtsProvider> = match &config.tts_endpoint {
                    Some(url) => Box::new(HttpTts::new(url.clone())),
                    None => Box::new(StubTts::default()),
                };
                pools = pools.with_audio(items, bank, tts);
            }
            Err(e) => tracing::warn!("audio challenges disabled: {e}"),
        }
        Ok(pools)
    }

    pub fn audio_available(&self) -> bool {
        self.audio.is_some()
    }

    /// Generates the challenge for `kind` from stream 0 of `seed`. The same
    /// inputs give the same challenge.
    pub fn generate(&self, kind: ChallengeKind, seed: u64) -> Result<Generated, ServiceError> {
        let mut rng = rng_for(seed, 0);
        let gen_err = |e: &dyn std::fmt::Display| ServiceError::Generation(e.to_string());
        match kind {
            ChallengeKind::AsciiText | ChallengeKind::AsciiImage => {
                let image = kind == ChallengeKind::AsciiImage;
                let raster = (image || self.rasterize_text).then_some(&self.raster);
                let c = generate_challenge(&mut rng, &self.fonts, &self.gen, raster).map_err(|e| gen_err(&e))?;
                let asset = if image {
                    let png = c.image.ok_or_else(|| ServiceError::Generation("rasterizer returned no image".into()))?;
                    Asset { bytes: Arc::new(png), media_type: "image/png" }
                } else {
                    Asset { bytes: Arc::new(c.art.to_text().into_bytes()), media_type: "text/plain; charset=utf-8" }
                };
                Ok(Generated { challenge_id: c.id, truth: normalize_answer(&c.answer), asset, options: None })
            }
            ChallengeKind::Audio { environment } => {
                let pool = self
                    .audio
                    .as_ref()
                    .ok_or_else(|| ServiceError::PoolUnavailable("no question set or noise bank configured".into()))?;
                let qa = &pool.items[rng.random_range(0..pool.items.len())];
                let c = build_challenge(qa, environment, pool.tts.as_ref(), &pool.bank, &mut rng, &pool.options)
                    .map_err(|e| gen_err(&e))?;
                let clip = c.audio().map_err(|e| gen_err(&e))?;
                let wav = save_wav(clip).map_err(|e| gen_err(&e))?;
                Ok(Generated {
                    challenge_id: c.id.clone(),
                    truth: qa.answer_key.to_string(),
                    asset: Asset { bytes: Arc::new(wav), media_type: "audio/wav" },
                    options: Some(c.client_payload().options),
                })
            }
        }
    }
}

fn load_audio_inputs(config: &ServiceConfig) -> Result<(Vec<QaItem>, NoiseBank), String> {
    let qa_path = config.qa_path.clone().unwrap_or_else(bundled_qa_sample);
    let file = std::fs::File::open(&qa_path).map_err(|e| format!("{}: {e}", qa_path.display()))?;
    let items = parse_qa_dataset(std::io::BufReader::new(file)).map_err(|e| e.to_string())?.items;
    let mut bank = NoiseBank::new(items.clone());
    let beds = match &config.noise_dir {
        Some(dir) => wav_files(dir)?,
        None => vec![bundled_noise_bed()],
    };
    for bed in &beds {
        bank = bank.with_bed_file(bed).map_err(|e| format!("{}: {e}", bed.display()))?;
    }
    if beds.is_empty() {
        return Err("noise bank has no .wav beds".into());
    }
    Ok((items, bank))
}

fn wav_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, String> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    out.sort();
    Ok(out)
}

struct Entry {
    token: ChallengeToken,
    answer: StoredAnswer,
    asset: Option<Asset>,
    options: Option<Vec<ClientOption>>,
    client_tag: Option<String>,
}

/// Issues, serves and grades challenges. Safe to share across threads: the
/// table lock is held only for lookups and inserts, each token has its own
/// lock for state transitions, and the audit log has a single writer.
pub struct ChallengeService {
    ttl_seconds: u64,
    attempts: u32,
    pools: ChallengePools,
    tokens: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    audit: AuditLog,
    time: Arc<dyn TimeSource>,
}

impl ChallengeService {
    /// Opens the audit log and rebuilds the token table from it. Pending
    /// tokens past their TTL are logged as expired; the rest get their
    /// assets regenerated from the recorded seed.
    pub fn open(
        config: &ServiceConfig,
        pools: ChallengePools,
        time: Arc<dyn TimeSource>,
    ) -> Result<Self, ServiceError> {
        config.validate()?;
        let (audit, history) = AuditLog::open(&config.audit_log)?;
        let service = Self {
            ttl_seconds: config.ttl_seconds,
            attempts: config.attempts,
            pools,
            tokens: RwLock::new(HashMap::new()),
            audit,
            time,
        };
        service.replay(&history)?;
        Ok(service)
    }

    fn replay(&self, history: &[AuditEvent]) -> Result<(), ServiceError> {
        let mut table: HashMap<String, Entry> = HashMap::new();
        for e in history {
            match &e.event {
                EventKind::Issued { challenge_id, kind, seed, ttl_seconds, attempts, answer } => {
                    let token = ChallengeToken {
                        token: e.token.clone(),
                        challenge_id: challenge_id.clone(),
                        kind: *kind,
                        seed: *seed,
                        issued_at: e.timestamp,
                        ttl_seconds: *ttl_seconds,
                        attempts_remaining: *attempts,
                        state: TokenState::Pending,
                    };
                    let entry = Entry {
                        token,
                        answer: answer.clone(),
                        asset: None,
                        options: None,
                        client_tag: e.client_tag.clone(),
                    };
                    table.insert(e.token.clone(), entry);
                }
                EventKind::Submitted { passed, .. } => {
                    if let Some(entry) = table.get_mut(&e.token) {
                        let t = &mut entry.token;
                        t.attempts_remaining = t.attempts_remaining.saturating_sub(1);
                        t.state = if *passed {
                            TokenState::Passed
                        } else if t.attempts_remaining == 0 {
                            TokenState::Failed
                        } else {
                            TokenState::Pending
                        };
                    }
                }
                EventKind::Expired => {
                    if let Some(entry) = table.get_mut(&e.token) {
                        entry.token.state = TokenState::Expired;
                    }
                }
                EventKind::AssetFetched => {}
            }
        }
        let now = self.time.now();
        let mut tokens = self.tokens.write();
        for (key, mut entry) in table {
            if entry.token.state == TokenState::Pending {
                if now >= entry.token.expires_at() {
                    entry.token.state = TokenState::Expired;
                    self.audit.append(now, &key, EventKind::Expired, entry.client_tag.as_deref())?;
                } else {
                    let g = self.pools.generate(entry.token.kind, entry.token.seed)?;
                    if g.challenge_id != entry.token.challenge_id || g.truth != entry.answer.truth {
                        return Err(ServiceError::Generation(format!(
                            "token {key} no longer regenerates the same challenge"
                        )));
                    }
                    entry.asset = Some(g.asset);
                    entry.options = g.options;
                }
            }
            tokens.insert(key, Arc::new(Mutex::new(entry)));
        }
        Ok(())
    }

    pub fn ttl_seconds(&self) -> u64 {
        self.ttl_seconds
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn audio_available(&self) -> bool {
        self.pools.audio_available()
    }

    pub fn pools(&self) -> &ChallengePools {
        &self.pools
    }

    /// Generates a fresh challenge and stores it behind a new token.
    pub fn issue(&self, kind: ChallengeKind, client_tag: Option<&str>) -> Result<Issued, ServiceError> {
        let (seed, salt, token_bytes) = {
            let mut rng = rand::rng();
            (rng.random::<u64>(), rng.random::<[u8; 16]>(), rng.random::<[u8; 16]>())
        };
        let generated = self.pools.generate(kind, seed)?;
        let token = hex::encode(token_bytes);
        let now = self.time.now();
        let answer = StoredAnswer::new(generated.truth, salt);
        let record = ChallengeToken {
            token: token.clone(),
            challenge_id: generated.challenge_id.clone(),
            kind,
            seed,
            issued_at: now,
            ttl_seconds: self.ttl_seconds,
            attempts_remaining: self.attempts,
            state: TokenState::Pending,
        };
        let issued = Issued {
            token: token.clone(),
            kind: kind.name().into(),
            asset_url: format!("/v1/asset/{token}"),
            expires_in: self.ttl_seconds,
            options: generated.options.clone(),
        };
        let entry = Arc::new(Mutex::new(Entry {
            token: record,
            answer: answer.clone(),
            asset: Some(generated.asset),
            options: generated.options,
            client_tag: client_tag.map(str::to_owned),
        }));
        // Hold the entry lock until the Issued event is on disk so no other
        // event for this token can precede it.
        let guard = entry.lock();
        {
            let mut tokens = self.tokens.write();
            if tokens.contains_key(&token) {
                return Err(ServiceError::Generation("token collision".into()));
            }
            tokens.insert(token.clone(), entry.clone());
        }
        let event = EventKind::Issued {
            challenge_id: generated.challenge_id,
            kind,
            seed,
            ttl_seconds: self.ttl_seconds,
            attempts: self.attempts,
            answer,
        };
        self.audit.append(now, &token, event, client_tag)?;
        drop(guard);
        Ok(issued)
    }

    fn entry(&self, token: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.tokens.read().get(token).cloned().ok_or(ServiceError::UnknownToken)
    }

    /// Moves a pending token past its TTL to Expired. Returns whether the
    /// token is (now) expired.
    fn check_expiry(&self, entry: &mut Entry, now: DateTime<Utc>) -> Result<bool, ServiceError> {
        match entry.token.state {
            TokenState::Expired => Ok(true),
            TokenState::Pending if now >= entry.token.expires_at() => {
                entry.token.state = TokenState::Expired;
                entry.asset = None;
                self.audit.append(now, &entry.token.token, EventKind::Expired, entry.client_tag.as_deref())?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn fetch_asset(&self, token: &str) -> Result<Asset, ServiceError> {
        let entry = self.entry(token)?;
        let mut e = entry.lock();
        let now = self.time.now();
        if self.check_expiry(&mut e, now)? {
            return Err(ServiceError::ExpiredToken);
        }
        if e.token.state != TokenState::Pending {
            return Err(ServiceError::NoAttemptsLeft);
        }
        let asset = e.asset.clone().ok_or_else(|| ServiceError::Generation("asset missing".into()))?;
        self.audit.append(now, token, EventKind::AssetFetched, e.client_tag.as_deref())?;
        Ok(asset)
    }

    /// The choices of a pending audio challenge.
    pub fn options(&self, token: &str) -> Result<Option<Vec<ClientOption>>, ServiceError> {
        let entry = self.entry(token)?;
        let e = entry.lock();
        Ok(e.options.clone())
    }

    pub fn submit(&self, token: &str, answer: &str) -> Result<SubmitOutcome, ServiceError> {
        let entry = self.entry(token)?;
        let mut e = entry.lock();
        let now = self.time.now();
        if self.check_expiry(&mut e, now)? {
            return Err(ServiceError::ExpiredToken);
        }
        if e.token.state != TokenState::Pending || e.token.attempts_remaining == 0 {
            return Err(ServiceError::NoAttemptsLeft);
        }
        let (passed, similarity) = match e.token.kind {
            ChallengeKind::AsciiText | ChallengeKind::AsciiImage => {
                let guess = normalize_answer(answer);
                (e.answer.matches(&guess), Some(similarity_ratio(&e.answer.truth, &guess)))
            }
            ChallengeKind::Audio { .. } => {
                let truth = e.answer.truth.chars().next().and_then(ChoiceLabel::from_char);
                let passed = truth.is_some_and(|label| {
                    let v = grade_choice(label, answer);
                    v.passed && v.parsed.is_some_and(|c| e.answer.matches(&c.to_string()))
                });
                (passed, None)
            }
        };
        let t = &mut e.token;
        t.attempts_remaining -= 1;
        t.state = if passed {
            TokenState::Passed
        } else if t.attempts_remaining == 0 {
            TokenState::Failed
        } else {
            TokenState::Pending
        };
        if t.state != TokenState::Pending {
            e.asset = None;
        }
        let latency_ms = (now - e.token.issued_at).num_milliseconds().max(0) as u64;
        let attempts_remaining = e.token.attempts_remaining;
        self.audit.append(
            now,
            token,
            EventKind::Submitted { passed, similarity, latency_ms },
            e.client_tag.as_deref(),
        )?;
        Ok(SubmitOutcome { passed, attempts_remaining })
    }

    /// Server-side view of a token.
    pub fn inspect(&self, token: &str) -> Result<ChallengeToken, ServiceError> {
        Ok(self.entry(token)?.lock().token.clone())
    }

    /// Expires overdue pending tokens and forgets tokens that closed more
    /// than one TTL ago. Returns how many tokens expired.
    pub fn sweep(&self) -> Result<usize, ServiceError> {
        let now = self.time.now();
        let entries: Vec<(String, Arc<Mutex<Entry>>)> =
            self.tokens.read().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut expired = 0;
        let mut forget = Vec::new();
        for (key, entry) in entries {
            let mut e = entry.lock();
            if e.token.state == TokenState::Pending && self.check_expiry(&mut e, now)? {
                expired += 1;
            }
            let retire_at = e.token.expires_at() + TimeDelta::seconds(self.ttl_seconds as i64);
            if e.token.state != TokenState::Pending && now >= retire_at {
                forget.push(key);
            }
        }
        let mut tokens = self.tokens.write();
        for key in forget {
            tokens.remove(&key);
        }
        Ok(expired)
    }

    pub fn live_stats(&self) -> Stats {
        self.audit.live_stats()
    }

    pub fn stats(&self, window: Window) -> Result<Stats, ServiceError> {
        self.audit.stats(window)
    }

    /// Window covering the last `seconds` up to now.
    pub fn window_last(&self, seconds: u64) -> Window {
        let now = self.time.now();
        Window { since: Some(now - TimeDelta::seconds(seconds as i64)), until: Some(now + TimeDelta::microseconds(1)) }
    }
}
