//! Two ways to wrap a matrix-multiply kernel, and the benchmarks that show
//! the cost of the wrapper.
//!
//! Design 1 prepares its inputs on the calling thread and then hands them to
//! a blocked kernel running on `kernel_threads` threads. Design 2 cuts the
//! rows of `x` into blocks and runs design 1 (single kernel thread) on every
//! block inside an intra-op [`Pool`], so the preparation runs in parallel too.
//!
//! Every output element is accumulated over `k` in ascending order no matter
//! how rows are split, so both designs are bit-identical for any thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::threadpool::{Pool, PoolError};

#[derive(Debug, Error, PartialEq)]
pub enum OpError {
    #[error("matrix of {rows}x{cols} needs {expected} elements, got {got}")]
    BadLength {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix element {index} is not finite")]
    NotFinite { index: usize },
    #[error("cannot multiply {0}x{1} by {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("intra-op pool has been shut down")]
    PoolShutDown,
    #[error("speedup {speedup} is outside [1, {threads}]")]
    SpeedupOutOfRange { speedup: f64, threads: u32 },
    #[error("fitting a serial fraction needs at least 2 threads, got {0}")]
    TooFewThreads(u32),
}

impl From<PoolError> for OpError {
    fn from(_: PoolError) -> Self {
        OpError::PoolShutDown
    }
}

/// Dense row-major `f32` matrix with finite elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Matrix, OpError> {
        if data.len() != rows * cols {
            return Err(OpError::BadLength {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Elements uniform in `[-1, 1)`.
    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }
}

fn check_finite(data: &[f32]) -> Result<(), OpError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(OpError::NotFinite { index }),
        None => Ok(()),
    }
}

fn check_dims(x: &Matrix, w: &Matrix) -> Result<(), OpError> {
    if x.cols != w.rows {
        return Err(OpError::DimensionMismatch(x.rows, x.cols, w.rows, w.cols));
    }
    Ok(())
}

/// Knobs of the operator wrapper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpConfig {
    pub kernel_threads: usize,
    /// Extra checksum sweeps over the packed inputs; raises the serial share.
    pub prep_passes: usize,
}

impl Default for OpConfig {
    fn default() -> Self {
        OpConfig {
            kernel_threads: 1,
            prep_passes: 1,
        }
    }
}

impl OpConfig {
    pub fn with_threads(kernel_threads: usize) -> Self {
        OpConfig {
            kernel_threads,
            ..OpConfig::default()
        }
    }
}

/// Single-threaded preparation: validate, pack into fresh contiguous buffers,
/// then `passes` checksum sweeps that a real framework would spend on layout
/// and shape bookkeeping.
fn prepare(x: &[f32], w: &[f32], passes: usize) -> (Vec<f32>, Vec<f32>) {
    let px = x.to_vec();
    let pw = w.to_vec();
    let mut sum = 0.0f32;
    for _ in 0..passes {
        for v in px.iter().chain(&pw) {
            sum += v.abs();
        }
    }
    std::hint::black_box(sum);
    (px, pw)
}

const I_BLOCK: usize = 32;
const K_BLOCK: usize = 128;
const J_BLOCK: usize = 256;

/// `out` holds whole rows of the product for the matching rows of `x`.
fn kernel_rows(x: &[f32], w: &[f32], out: &mut [f32], k: usize, n: usize) {
    let rows = out.len() / n.max(1);
    for ib in (0..rows).step_by(I_BLOCK) {
        let ie = (ib + I_BLOCK).min(rows);
        for jb in (0..n).step_by(J_BLOCK) {
            let je = (jb + J_BLOCK).min(n);
            for kb in (0..k).step_by(K_BLOCK) {
                let ke = (kb + K_BLOCK).min(k);
                for i in ib..ie {
                    let xrow = &x[i * k + kb..i * k + ke];
                    let orow = &mut out[i * n + jb..i * n + je];
                    for (kk, &a) in (kb..ke).zip(xrow) {
                        let wrow = &w[kk * n + jb..kk * n + je];
                        for (o, &b) in orow.iter_mut().zip(wrow) {
                            *o += a * b;
                        }
                    }
                }
            }
        }
    }
}

fn kernel(x: &[f32], w: &[f32], out: &mut [f32], k: usize, n: usize, threads: usize) {
    let m = out.len() / n.max(1);
    if m == 0 || n == 0 {
        return;
    }
    let threads = threads.clamp(1, m);
    if threads == 1 {
        kernel_rows(x, w, out, k, n);
        return;
    }
    let rows_per = m.div_ceil(threads);
    std::thread::scope(|s| {
        for (xs, os) in x.chunks(rows_per * k.max(1)).zip(out.chunks_mut(rows_per * n)) {
            s.spawn(move || kernel_rows(xs, w, os, k, n));
        }
    });
}

/// Design 1 on the rows of `x` held in `x_rows`, writing into `out`.
fn design1_rows(x_rows: &[f32], w: &Matrix, out: &mut [f32], cfg: OpConfig) {
    let (px, pw) = prepare(x_rows, &w.data, cfg.prep_passes);
    kernel(&px, &pw, out, w.rows, w.cols, cfg.kernel_threads);
}

/// Prepare on the calling thread, then multiply on `cfg.kernel_threads`.
pub fn matmul_design1(x: &Matrix, w: &Matrix, cfg: OpConfig) -> Result<Matrix, OpError> {
    check_dims(x, w)?;
    check_finite(&x.data)?;
    check_finite(&w.data)?;
    let mut out = Matrix::zeros(x.rows, w.cols);
    design1_rows(&x.data, w, &mut out.data, cfg);
    Ok(out)
}

/// Split `x` into one row block per pool worker and run design 1 with one
/// kernel thread on each block; `cfg.kernel_threads` is ignored.
pub fn matmul_design2(x: &Matrix, w: &Matrix, pool: &Pool, cfg: OpConfig) -> Result<Matrix, OpError> {
    check_dims(x, w)?;
    if pool.is_shut_down() {
        return Err(OpError::PoolShutDown);
    }
    let (k, n) = (x.cols, w.cols);
    let mut out = Matrix::zeros(x.rows, n);
    if x.rows == 0 || n == 0 {
        return Ok(out);
    }
    let rows_per = x.rows.div_ceil(pool.size());
    let inner = OpConfig {
        kernel_threads: 1,
        ..cfg
    };
    let mut results: Vec<Result<(), OpError>> = Vec::new();
    pool.scope(|s| {
        let blocks = out.data.chunks_mut(rows_per * n).enumerate();
        results = blocks
            .map(|(b, dst)| {
                let start = b * rows_per * k;
                let x_rows = &x.data[start..start + dst.len() / n * k];
                s.submit(move || {
                    // Each block validates its own inputs, as design 1 does.
                    if check_finite(x_rows).is_ok() && check_finite(&w.data).is_ok() {
                        design1_rows(x_rows, w, dst, inner);
                    }
                })
                .map_err(OpError::from)
            })
            .collect();
    });
    results.into_iter().collect::<Result<(), _>>()?;
    Ok(out)
}

/// Textbook triple loop, for checking the kernels.
pub fn naive_matmul(x: &Matrix, w: &Matrix) -> Result<Matrix, OpError> {
    check_dims(x, w)?;
    let mut out = Matrix::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        for j in 0..w.cols {
            let mut acc = 0.0f32;
            for k in 0..x.cols {
                acc += x.get(i, k) * w.get(k, j);
            }
            out.data[i * w.cols + j] = acc;
        }
    }
    Ok(out)
}

/// Every element of `got` within `rel` of `want`, relative to `|want|`.
pub fn all_close(got: &Matrix, want: &Matrix, rel: f32) -> bool {
    got.rows == want.rows
        && got.cols == want.cols
        && got
            .data
            .iter()
            .zip(&want.data)
            .all(|(a, b)| a == b || (a - b).abs() <= rel * b.abs())
}

/// Predicted speedup on `threads` threads for serial fraction `s`.
pub fn amdahl_speedup(s: f64, threads: u32) -> f64 {
    1.0 / (s + (1.0 - s) / threads as f64)
}

/// Serial fraction that explains `speedup` on `threads` threads.
pub fn fit_amdahl(speedup: f64, threads: u32) -> Result<f64, OpError> {
    if threads < 2 {
        return Err(OpError::TooFewThreads(threads));
    }
    let t = threads as f64;
    if !(1.0..=t).contains(&speedup) {
        return Err(OpError::SpeedupOutOfRange { speedup, threads });
    }
    Ok(((t / speedup - 1.0) / (t - 1.0)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Design {
    #[serde(rename = "design1")]
    One,
    #[serde(rename = "design2")]
    Two,
}

impl Design {
    pub fn as_str(self) -> &'static str {
        match self {
            Design::One => "design1",
            Design::Two => "design2",
        }
    }
}

/// One measurement; `speedup` is relative to design 1 on one thread at the
/// same size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub threads: usize,
    pub design: Design,
    pub latency_us: f64,
    pub speedup: f64,
}

pub const BENCH_CSV_HEADER: &str = "size,threads,design,latency_us,speedup";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.1},{:.4}\n",
            r.size,
            r.threads,
            r.design.as_str(),
            r.latency_us,
            r.speedup
        ));
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median latency of each closure. After one warm-up call each, the
/// closures take turns within every trial (starting point rotated), so slow
/// drift on a shared machine hits all of them alike.
fn time_interleaved(trials: usize, fs: &mut [&mut dyn FnMut()]) -> Vec<f64> {
    for f in fs.iter_mut() {
        f();
    }
    let mut samples = vec![Vec::with_capacity(trials); fs.len()];
    for trial in 0..trials.max(1) {
        for j in 0..fs.len() {
            let i = (trial + j) % fs.len();
            let t = Instant::now();
            fs[i]();
            samples[i].push(t.elapsed().as_secs_f64() * 1e6);
        }
    }
    samples.into_iter().map(median).collect()
}

/// Benchmark settings shared by [`scaling_bench`] and [`design_bench`].
#[derive(Debug, Clone, Copy)]
pub struct BenchSettings {
    pub trials: usize,
    pub seed: u64,
    pub prep_passes: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            trials: 5,
            seed: 0,
            prep_passes: 1,
        }
    }
}

fn inputs(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
    (Matrix::random(n, n, &mut rng), Matrix::random(n, n, &mut rng))
}

/// Design 1 on square `n x n` inputs at 1 and at `threads` kernel threads.
/// Two rows per size: the one-thread baseline and the threaded run.
pub fn scaling_bench(sizes: &[usize], threads: usize, settings: BenchSettings) -> Vec<BenchRow> {
    let threads = threads.max(1);
    let mut rows = Vec::new();
    for &n in sizes {
        let (x, w) = inputs(n, settings.seed);
        let cfg = |kernel_threads| OpConfig {
            kernel_threads,
            prep_passes: settings.prep_passes,
        };
        let mut one = || {
            std::hint::black_box(matmul_design1(&x, &w, cfg(1)).expect("square inputs"));
        };
        let mut many = || {
            std::hint::black_box(matmul_design1(&x, &w, cfg(threads)).expect("square inputs"));
        };
        let lat = if threads > 1 {
            time_interleaved(settings.trials, &mut [&mut one, &mut many])
        } else {
            time_interleaved(settings.trials, &mut [&mut one])
        };
        let base = lat[0];
        rows.push(BenchRow {
            size: n,
            threads: 1,
            design: Design::One,
            latency_us: base,
            speedup: 1.0,
        });
        if let Some(&t) = lat.get(1) {
            rows.push(BenchRow {
                size: n,
                threads,
                design: Design::One,
                latency_us: t,
                speedup: base / t,
            });
        }
    }
    rows
}

/// Design 1 on one thread, design 1 with `threads` kernel threads and
/// design 2 on a pool of `threads` workers, in that order.
pub fn design_bench(n: usize, threads: usize, settings: BenchSettings) -> Result<Vec<BenchRow>, OpError> {
    let threads = threads.max(1);
    let (x, w) = inputs(n, settings.seed);
    let cfg = OpConfig {
        kernel_threads: threads,
        prep_passes: settings.prep_passes,
    };
    let single = OpConfig {
        kernel_threads: 1,
        ..cfg
    };
    let pool = Pool::new(threads)?;
    let mut failed = None;
    let mut base = || {
        std::hint::black_box(matmul_design1(&x, &w, single).expect("square inputs"));
    };
    let mut d1 = || {
        std::hint::black_box(matmul_design1(&x, &w, cfg).expect("square inputs"));
    };
    let mut d2 = || match matmul_design2(&x, &w, &pool, cfg) {
        Ok(m) => {
            std::hint::black_box(m);
        }
        Err(e) => failed = Some(e),
    };
    let lat = time_interleaved(settings.trials, &mut [&mut base, &mut d1, &mut d2]);
    if let Some(e) = failed {
        return Err(e);
    }
    let row = |threads, design, latency_us: f64| BenchRow {
        size: n,
        threads,
        design,
        latency_us,
        speedup: lat[0] / latency_us,
    };
    Ok(vec![
        row(1, Design::One, lat[0]),
        row(threads, Design::One, lat[1]),
        row(threads, Design::Two, lat[2]),
    ])
}
