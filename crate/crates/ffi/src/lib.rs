//! C ABI over the rating database, credibility rates, confidence intervals
//! and the hallucination score.
//!
//! Every function returns a [`GcStatus`]. On failure a message is kept per
//! thread and can be read with [`gc_last_error_message`]. Strings handed out
//! by the library must be released with [`gc_string_free`]; rating databases
//! with [`gc_rating_db_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use groundcheck::credibility::{agresti_coull_ci, score, FactualityLevel, MetricResult, RatingDb, ScoreCounts};
use groundcheck::groundedness::GroundednessReport;
use groundcheck::transcript::extract_domain;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Undefined = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcFactuality {
    VeryHigh = 0,
    High = 1,
    MostlyFactual = 2,
    Mixed = 3,
    Low = 4,
    VeryLow = 5,
    Satire = 6,
    NotRated = 7,
}

impl From<FactualityLevel> for GcFactuality {
    fn from(level: FactualityLevel) -> Self {
        match level {
            FactualityLevel::VeryHigh => GcFactuality::VeryHigh,
            FactualityLevel::High => GcFactuality::High,
            FactualityLevel::MostlyFactual => GcFactuality::MostlyFactual,
            FactualityLevel::Mixed => GcFactuality::Mixed,
            FactualityLevel::Low => GcFactuality::Low,
            FactualityLevel::VeryLow => GcFactuality::VeryLow,
            FactualityLevel::Satire => GcFactuality::Satire,
            FactualityLevel::NotRated => GcFactuality::NotRated,
        }
    }
}

impl From<GcFactuality> for FactualityLevel {
    fn from(level: GcFactuality) -> Self {
        match level {
            GcFactuality::VeryHigh => FactualityLevel::VeryHigh,
            GcFactuality::High => FactualityLevel::High,
            GcFactuality::MostlyFactual => FactualityLevel::MostlyFactual,
            GcFactuality::Mixed => FactualityLevel::Mixed,
            GcFactuality::Low => FactualityLevel::Low,
            GcFactuality::VeryLow => FactualityLevel::VeryLow,
            GcFactuality::Satire => FactualityLevel::Satire,
            GcFactuality::NotRated => FactualityLevel::NotRated,
        }
    }
}

/// Opaque handle to a loaded rating database.
pub struct GcRatingDb {
    inner: RatingDb,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcRating {
    pub factuality: GcFactuality,
    /// One of -1, -0.5, 0, 0.5, 1.
    pub score: f64,
    /// False for domains without a rating.
    pub classified: bool,
}

/// A rate and its interval. When `defined` is false the other floating
/// point fields are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcMetric {
    pub x: u64,
    pub n: u64,
    pub defined: bool,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<MetricResult> for GcMetric {
    fn from(m: MetricResult) -> Self {
        Self {
            x: m.x,
            n: m.n,
            defined: m.is_defined(),
            rate: m.rate.unwrap_or(f64::NAN),
            ci_low: m.ci_low.unwrap_or(f64::NAN),
            ci_high: m.ci_high.unwrap_or(f64::NAN),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcRates {
    pub credibility: GcMetric,
    pub non_credibility: GcMetric,
    pub neutral: u64,
    pub not_rated: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GcStatus, String);

type Outcome = Result<(), Failure>;

fn fail<T>(status: GcStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> GcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GcStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(GcStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(GcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller passes either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(GcStatus::NullArgument, format!("{what} is null")))
}

fn db_ref<'a>(db: *const GcRatingDb) -> Result<&'a RatingDb, Failure> {
    // SAFETY: non-null handles come from gc_rating_db_load or gc_rating_db_from_csv.
    unsafe { db.as_ref() }
        .map(|d| &d.inner)
        .ok_or_else(|| Failure(GcStatus::NullArgument, "db is null".into()))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a rating CSV file (`domain,factuality,category,origin`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_db` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_rating_db_load(path: *const c_char, out_db: *mut *mut GcRatingDb) -> GcStatus {
    guard(|| {
        let slot = out(out_db, "out_db")?;
        *slot = ptr::null_mut();
        let path = text(path, "path")?;
        let inner = RatingDb::load(path).map_err(|e| {
            let status = match e {
                groundcheck::credibility::RatingError::Io { .. } => GcStatus::Io,
                _ => GcStatus::Parse,
            };
            Failure(status, e.to_string())
        })?;
        *slot = Box::into_raw(Box::new(GcRatingDb { inner }));
        Ok(())
    })
}

/// Parses rating CSV text held in memory.
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out_db` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_rating_db_from_csv(csv: *const c_char, out_db: *mut *mut GcRatingDb) -> GcStatus {
    guard(|| {
        let slot = out(out_db, "out_db")?;
        *slot = ptr::null_mut();
        let csv = text(csv, "csv")?;
        let inner = RatingDb::from_reader(csv.as_bytes()).map_err(|e| Failure(GcStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(GcRatingDb { inner }));
        Ok(())
    })
}

/// Releases a database. Null is ignored.
///
/// # Safety
/// `db` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gc_rating_db_free(db: *mut GcRatingDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Number of rated domains.
///
/// # Safety
/// `db` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_rating_db_len(db: *const GcRatingDb, out_len: *mut usize) -> GcStatus {
    guard(|| {
        *out(out_len, "out_len")? = db_ref(db)?.len();
        Ok(())
    })
}

/// Rating of a domain by exact host, then longest registered suffix.
/// Unknown domains give `NOT_RATED` with status OK.
///
/// # Safety
/// `db` must be a live handle, `domain` NUL-terminated and `out_rating` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_rating_db_lookup(
    db: *const GcRatingDb,
    domain: *const c_char,
    out_rating: *mut GcRating,
) -> GcStatus {
    guard(|| {
        let slot = out(out_rating, "out_rating")?;
        let rating = db_ref(db)?.lookup(text(domain, "domain")?);
        *slot = GcRating {
            factuality: rating.factuality.into(),
            score: rating.score().value(),
            classified: rating.factuality.is_classified(),
        };
        Ok(())
    })
}

/// Numeric credibility score of a factuality level.
///
/// # Safety
/// `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_score(level: GcFactuality, out_score: *mut f64) -> GcStatus {
    guard(|| {
        *out(out_score, "out_score")? = score(level.into()).value();
        Ok(())
    })
}

/// Lowercase host of `url` with a leading `www.` removed. The result must be
/// released with [`gc_string_free`].
///
/// # Safety
/// `url` must be NUL-terminated and `out_domain` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_extract_domain(url: *const c_char, out_domain: *mut *mut c_char) -> GcStatus {
    guard(|| {
        let slot = out(out_domain, "out_domain")?;
        *slot = ptr::null_mut();
        let domain = extract_domain(text(url, "url")?).map_err(|e| Failure(GcStatus::InvalidArgument, e.to_string()))?;
        *slot = CString::new(domain)
            .map_err(|_| Failure(GcStatus::InvalidArgument, "domain contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Agresti–Coull interval for `x` successes out of `n` at `confidence`,
/// clamped to [0, 1].
///
/// # Safety
/// `out_low` and `out_high` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_agresti_coull(
    x: u64,
    n: u64,
    confidence: f64,
    out_low: *mut f64,
    out_high: *mut f64,
) -> GcStatus {
    guard(|| {
        let low = out(out_low, "out_low")?;
        let high = out(out_high, "out_high")?;
        if n == 0 {
            return fail(GcStatus::Undefined, "interval is undefined for n = 0");
        }
        let (lo, hi) =
            agresti_coull_ci(x, n, confidence).map_err(|e| Failure(GcStatus::InvalidArgument, e.to_string()))?;
        *low = lo;
        *high = hi;
        Ok(())
    })
}

/// Credibility and non-credibility rates over cited domains, pooled over
/// classified domains only. Duplicates count once per occurrence.
///
/// # Safety
/// `db` must be a live handle, `domains` an array of `count` NUL-terminated
/// strings (may be null when `count` is 0) and `out_rates` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_credibility_rates(
    db: *const GcRatingDb,
    domains: *const *const c_char,
    count: usize,
    confidence: f64,
    out_rates: *mut GcRates,
) -> GcStatus {
    guard(|| {
        let slot = out(out_rates, "out_rates")?;
        let db = db_ref(db)?;
        if domains.is_null() && count > 0 {
            return fail(GcStatus::NullArgument, "domains is null");
        }
        let mut counts = ScoreCounts::default();
        for i in 0..count {
            counts.add(&db.lookup(text(*domains.add(i), &format!("domains[{i}]"))?));
        }
        let invalid = |e: groundcheck::credibility::IntervalError| Failure(GcStatus::InvalidArgument, e.to_string());
        *slot = GcRates {
            credibility: counts.credibility_rate(confidence).map_err(invalid)?.into(),
            non_credibility: counts.non_credibility_rate(confidence).map_err(invalid)?.into(),
            neutral: counts.neutral,
            not_rated: counts.not_rated,
        };
        Ok(())
    })
}

/// Hallucination score `(unsupported + alpha * undecidable) / sqrt(verifiable)`.
/// `UNDEFINED` when there are no verifiable units.
///
/// # Safety
/// `out_hs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_hallucination_score(
    unsupported: u64,
    undecidable: u64,
    verifiable: u64,
    alpha: f64,
    out_hs: *mut f64,
) -> GcStatus {
    guard(|| {
        let slot = out(out_hs, "out_hs")?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return fail(GcStatus::InvalidArgument, format!("alpha must be in (0, 1), got {alpha}"));
        }
        if unsupported.checked_add(undecidable).is_none_or(|s| s > verifiable) {
            return fail(GcStatus::InvalidArgument, "unsupported + undecidable exceeds verifiable");
        }
        if verifiable == 0 {
            return fail(GcStatus::Undefined, "no verifiable units");
        }
        let (us, ud, v) = (unsupported as usize, undecidable as usize, verifiable as usize);
        let report = GroundednessReport::from_counts(v, v, v - us - ud, 0, 0, us, alpha);
        *slot = report.hs.expect("verifiable > 0");
        Ok(())
    })
}
