//! C ABI for `alrisk`.
//!
//! Pools, proposals and trajectories are opaque handles created by the
//! `*_new`/constructor functions and released with the matching `*_free`.
//! Every fallible function returns an [`AlriskStatus`]; on failure a
//! description is available from [`alrisk_last_error`] on the same thread.
//! Output pointers are only written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use alrisk::oracle::{Enumeration, OracleOptions};
use alrisk::{EstimatorKind, LabeledPool, ProposalRule, ScoreSource, Trajectory, TrajectoryStep};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlriskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidProposal = 3,
    DegenerateProposal = 4,
    Config = 5,
    Consistency = 6,
    Resource = 7,
    Singular = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlriskEstimator {
    Naive = 0,
    Pure = 1,
    Lure = 2,
}

impl From<AlriskEstimator> for EstimatorKind {
    fn from(e: AlriskEstimator) -> Self {
        match e {
            AlriskEstimator::Naive => EstimatorKind::Naive,
            AlriskEstimator::Pure => EstimatorKind::Pure,
            AlriskEstimator::Lure => EstimatorKind::Lure,
        }
    }
}

/// Labelled pool with per-point losses.
pub struct AlriskPool(LabeledPool);

/// Acquisition proposal.
pub struct AlriskProposal(ProposalRule);

/// Sequence of acquisitions with their masses and losses.
pub struct AlriskTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean: Vec<u8> = message.bytes().filter(|&b| b != 0).collect();
    let c = CString::new(clean).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &alrisk::Error) -> AlriskStatus {
    use alrisk::Error;
    match e {
        Error::Argument(_) => AlriskStatus::InvalidArgument,
        Error::Proposal(_) => AlriskStatus::InvalidProposal,
        Error::DegenerateProposal(_) => AlriskStatus::DegenerateProposal,
        Error::Config(_) => AlriskStatus::Config,
        Error::Consistency(_) => AlriskStatus::Consistency,
        Error::Resource(_) => AlriskStatus::Resource,
        Error::Singular(_) => AlriskStatus::Singular,
        Error::Io { .. } | Error::Format { .. } => AlriskStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(alrisk::Error),
}

impl From<alrisk::Error> for Failure {
    fn from(e: alrisk::Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `body`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> FfiResult<()>>(body: F) -> AlriskStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AlriskStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("{what} is null"));
            AlriskStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            AlriskStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// A slice from a pointer and length; a null pointer is accepted when `len == 0`.
unsafe fn array<'a, T>(p: *const T, len: usize, what: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn alrisk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn alrisk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Pool of `n` points with the given losses. Features are the point indices.
///
/// # Safety
/// `losses` must point to `n` doubles and `out_pool` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_pool_from_losses(losses: *const f64, n: usize, out_pool: *mut *mut AlriskPool) -> AlriskStatus {
    guard(|| {
        let losses = array(losses, n, "losses")?.to_vec();
        let slot = out(out_pool, "out_pool")?;
        *slot = boxed(AlriskPool(LabeledPool::from_losses(losses)?));
        Ok(())
    })
}

/// Pool of `n` points with `dim` features each (row-major), labels and
/// optional losses (`losses` may be null).
///
/// # Safety
/// `features` must point to `n * dim` doubles, `labels` to `n` doubles and
/// `losses`, when not null, to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn alrisk_pool_new(
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *const f64,
    losses: *const f64,
    out_pool: *mut *mut AlriskPool,
) -> AlriskStatus {
    guard(|| {
        let flat = array(features, n.saturating_mul(dim), "features")?;
        let features: Vec<Vec<f64>> = if dim == 0 {
            vec![Vec::new(); n]
        } else {
            flat.chunks(dim).map(<[f64]>::to_vec).collect()
        };
        let labels = array(labels, n, "labels")?.to_vec();
        let mut pool = LabeledPool::new(features, labels)?;
        if !losses.is_null() {
            pool = pool.with_losses(array(losses, n, "losses")?.to_vec())?;
        }
        *out(out_pool, "out_pool")? = boxed(AlriskPool(pool));
        Ok(())
    })
}

/// # Safety
/// `pool` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn alrisk_pool_free(pool: *mut AlriskPool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}

/// # Safety
/// `pool` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_pool_len(pool: *const AlriskPool, out_len: *mut usize) -> AlriskStatus {
    guard(|| {
        *out(out_len, "out_len")? = nonnull(pool, "pool")?.0.len();
        Ok(())
    })
}

/// Mean loss over the whole pool.
///
/// # Safety
/// `pool` must be a live handle and `out_risk` writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_pool_empirical_risk(pool: *const AlriskPool, out_risk: *mut f64) -> AlriskStatus {
    guard(|| {
        let risk = alrisk::pool_empirical_risk(&nonnull(pool, "pool")?.0)?;
        *out(out_risk, "out_risk")? = risk;
        Ok(())
    })
}

unsafe fn new_proposal<F>(out_proposal: *mut *mut AlriskProposal, build: F) -> AlriskStatus
where
    F: FnOnce() -> FfiResult<ProposalRule>,
{
    guard(|| {
        let slot = out(out_proposal, "out_proposal")?;
        *slot = boxed(AlriskProposal(build()?));
        Ok(())
    })
}

/// # Safety
/// `out_proposal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_uniform(out_proposal: *mut *mut AlriskProposal) -> AlriskStatus {
    new_proposal(out_proposal, || Ok(ProposalRule::uniform()))
}

/// Masses proportional to `exp(temperature * score)` over one fixed score per
/// pool point.
///
/// # Safety
/// `scores` must point to `n` doubles and `out_proposal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_boltzmann(
    temperature: f64,
    scores: *const f64,
    n: usize,
    out_proposal: *mut *mut AlriskProposal,
) -> AlriskStatus {
    new_proposal(out_proposal, || {
        let scores = array(scores, n, "scores")?.to_vec();
        Ok(ProposalRule::boltzmann(temperature, ScoreSource::Fixed(scores))?)
    })
}

/// Highest fixed score with probability `1 - epsilon`, otherwise uniform.
///
/// # Safety
/// `scores` must point to `n` doubles and `out_proposal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_epsilon_greedy(
    epsilon: f64,
    scores: *const f64,
    n: usize,
    out_proposal: *mut *mut AlriskProposal,
) -> AlriskStatus {
    new_proposal(out_proposal, || {
        let scores = array(scores, n, "scores")?.to_vec();
        Ok(ProposalRule::epsilon_greedy(epsilon, ScoreSource::Fixed(scores))?)
    })
}

/// Masses proportional to the pool losses.
///
/// # Safety
/// `out_proposal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_optimal_loss(out_proposal: *mut *mut AlriskProposal) -> AlriskStatus {
    new_proposal(out_proposal, || Ok(ProposalRule::optimal_loss()))
}

/// Boltzmann over summed squared distances to the acquired points.
///
/// # Safety
/// `out_proposal` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_geometric_boltzmann(beta: f64, out_proposal: *mut *mut AlriskProposal) -> AlriskStatus {
    new_proposal(out_proposal, || Ok(ProposalRule::geometric_boltzmann(beta)?))
}

/// Makes the proposal never propose the given indices.
///
/// # Safety
/// `proposal` must be a live handle and `indices` must point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_set_ignored(proposal: *mut AlriskProposal, indices: *const usize, n: usize) -> AlriskStatus {
    guard(|| {
        let p = out(proposal, "proposal")?;
        let ignored = array(indices, n, "indices")?.to_vec();
        p.0 = p.0.clone().with_ignored(ignored);
        Ok(())
    })
}

/// # Safety
/// `proposal` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn alrisk_proposal_free(proposal: *mut AlriskProposal) {
    if !proposal.is_null() {
        drop(Box::from_raw(proposal));
    }
}

/// Samples `m` acquisitions using stream 0 of `seed`.
///
/// # Safety
/// `pool` and `proposal` must be live handles and `out_trajectory` writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_sample_trajectory(
    pool: *const AlriskPool,
    proposal: *const AlriskProposal,
    m: usize,
    seed: u64,
    out_trajectory: *mut *mut AlriskTrajectory,
) -> AlriskStatus {
    guard(|| {
        let pool = &nonnull(pool, "pool")?.0;
        let proposal = &nonnull(proposal, "proposal")?.0;
        let slot = out(out_trajectory, "out_trajectory")?;
        *slot = boxed(AlriskTrajectory(alrisk::sample_trajectory(pool, proposal, m, seed)?));
        Ok(())
    })
}

/// Trajectory from recorded acquisitions over a pool of `pool_size` points.
///
/// # Safety
/// `indices`, `masses` and `losses` must each point to `m` values and
/// `out_trajectory` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_trajectory_new(
    indices: *const usize,
    masses: *const f64,
    losses: *const f64,
    m: usize,
    pool_size: usize,
    out_trajectory: *mut *mut AlriskTrajectory,
) -> AlriskStatus {
    guard(|| {
        let indices = array(indices, m, "indices")?;
        let masses = array(masses, m, "masses")?;
        let losses = array(losses, m, "losses")?;
        let steps = (0..m)
            .map(|i| TrajectoryStep {
                index: indices[i],
                mass: masses[i],
                loss: losses[i],
            })
            .collect();
        *out(out_trajectory, "out_trajectory")? = boxed(AlriskTrajectory(Trajectory::new(steps, pool_size)));
        Ok(())
    })
}

/// # Safety
/// `trajectory` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_trajectory_len(trajectory: *const AlriskTrajectory, out_len: *mut usize) -> AlriskStatus {
    guard(|| {
        *out(out_len, "out_len")? = nonnull(trajectory, "trajectory")?.0.len();
        Ok(())
    })
}

/// Copies the steps into caller arrays of capacity `capacity`; any of the
/// three arrays may be null to skip it.
///
/// # Safety
/// Non-null arrays must have room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn alrisk_trajectory_steps(
    trajectory: *const AlriskTrajectory,
    indices: *mut usize,
    masses: *mut f64,
    losses: *mut f64,
    capacity: usize,
) -> AlriskStatus {
    guard(|| {
        let t = &nonnull(trajectory, "trajectory")?.0;
        if capacity < t.len() {
            return Err(alrisk::Error::Argument(format!("capacity {capacity} below trajectory length {}", t.len())).into());
        }
        for (i, s) in t.steps().iter().enumerate() {
            if !indices.is_null() {
                *indices.add(i) = s.index;
            }
            if !masses.is_null() {
                *masses.add(i) = s.mass;
            }
            if !losses.is_null() {
                *losses.add(i) = s.loss;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `trajectory` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn alrisk_trajectory_free(trajectory: *mut AlriskTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Evaluates an estimator. `weights`, when not null, receives the per-step
/// weights and must have room for the trajectory length.
///
/// # Safety
/// `trajectory` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_estimate(
    trajectory: *const AlriskTrajectory,
    estimator: AlriskEstimator,
    out_value: *mut f64,
    weights: *mut f64,
) -> AlriskStatus {
    guard(|| {
        let t = &nonnull(trajectory, "trajectory")?.0;
        let risk = alrisk::estimate(estimator.into(), t)?;
        *out(out_value, "out_value")? = risk.value;
        if !weights.is_null() {
            ptr::copy_nonoverlapping(risk.per_point_weights.as_ptr(), weights, risk.per_point_weights.len());
        }
        Ok(())
    })
}

/// Writes the `m` LURE levelling constants for acquisition count `m` and
/// pool size `n` into `out_c`.
///
/// # Safety
/// `out_c` must have room for `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn alrisk_lure_constants(m: usize, n: usize, out_c: *mut f64) -> AlriskStatus {
    guard(|| {
        let c = alrisk::lure_constants(m, n)?.c;
        if out_c.is_null() {
            return Err(Failure::Null("out_c"));
        }
        ptr::copy_nonoverlapping(c.as_ptr(), out_c, c.len());
        Ok(())
    })
}

/// Exact mean and variance of an estimator over every acquisition sequence of
/// length `m`, conditional on the pool.
///
/// # Safety
/// `pool` and `proposal` must be live handles; `out_mean` and `out_variance`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn alrisk_enumerate_moments(
    pool: *const AlriskPool,
    proposal: *const AlriskProposal,
    m: usize,
    estimator: AlriskEstimator,
    out_mean: *mut f64,
    out_variance: *mut f64,
) -> AlriskStatus {
    guard(|| {
        let pool = &nonnull(pool, "pool")?.0;
        let proposal = &nonnull(proposal, "proposal")?.0;
        let moments = Enumeration::new(pool, proposal, m, OracleOptions::default())?.moments(estimator.into())?;
        *out(out_mean, "out_mean")? = moments.mean;
        *out(out_variance, "out_variance")? = moments.variance;
        Ok(())
    })
}
