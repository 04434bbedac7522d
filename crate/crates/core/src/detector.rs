//! Per-sample three-threshold detection cascade over a bank of matched
//! filters.
//!
//! For every input sample and every template the cascade runs:
//!
//! 1. energy gate: unless the trailing moving-average power exceeds `t1`,
//!    the matched filter is not evaluated at all, so an idle medium costs
//!    almost nothing;
//! 2. matched filter and rising-edge metric: the filter output magnitude is
//!    divided by its previous value, and only a ratio above `t2` (a rising
//!    edge of the correlation bell) opens the next stage;
//! 3. Pearson gate: the mean-centered, variance-normalized correlation
//!    magnitude must exceed `t3` to count as a match.
//!
//! Samples passing all three gates are clustered into one
//! [`DetectionEvent`] per correlation bell using a refractory window.
//!
//! Filters in the bank are independent and may be evaluated in parallel
//! over the same read-only input; outputs do not depend on the parallelism.
//! Window statistics use running sums, rebuilt from scratch every 2^16
//! samples and at every emitted event to bound floating-point drift, and
//! the correlation at an event peak is recomputed exactly (two-pass) before
//! the event is emitted.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::iq::{IqSample, SampleStream};
use crate::template::{centered_energy, Template};

type C64 = Complex<f64>;

/// Running window sums are rebuilt from the buffered window this often.
const RECOMPUTE_INTERVAL: usize = 1 << 16;

/// Sub-block size for internal processing; bounds scratch memory on long
/// streams without affecting results.
const SUB_BLOCK: usize = 1 << 20;

/// A window whose variance is below this fraction of its raw power is
/// treated as constant (zero variance): correlation is defined as 0 there
/// rather than amplifying rounding noise.
const VARIANCE_FLOOR: f64 = 1e-12;

/// Thresholds and windowing for the cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Energy gate: mean power over `energy_window` samples must exceed this.
    pub t1: f64,
    /// Matched-filter ratio metric threshold (strictly greater passes).
    pub t2: f64,
    /// Correlation magnitude threshold in (0, 1].
    pub t3: f64,
    /// Moving-average window for the energy gate (samples).
    pub energy_window: usize,
    /// Minimum spacing between events of one template; `None` uses the
    /// template length.
    pub refractory: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            t1: 0.01,
            t2: 1.0,
            t3: 0.8,
            energy_window: 16,
            refractory: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1 >= 0.0) || !self.t1.is_finite() {
            return Err(Error::InvalidConfig(format!("t1 must be >= 0, got {}", self.t1)));
        }
        if !(self.t2 > 0.0) || !self.t2.is_finite() {
            return Err(Error::InvalidConfig(format!("t2 must be > 0, got {}", self.t2)));
        }
        if !(self.t3 > 0.0 && self.t3 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "t3 must be in (0, 1], got {}",
                self.t3
            )));
        }
        if self.energy_window == 0 {
            return Err(Error::InvalidConfig("energy_window must be >= 1".into()));
        }
        if self.refractory == Some(0) {
            return Err(Error::InvalidConfig("refractory must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-sample surfaces for one template, aligned with the input stream.
/// `mf_mag` is zero wherever the energy gate was closed; `corr` is zero
/// unless all three gates passed.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedOutputs {
    pub rss: Vec<f32>,
    pub mf_mag: Vec<f32>,
    pub corr: Vec<f32>,
}

/// One detected packet. `index` is the sample index of the correlation peak,
/// i.e. the last sample of the matched window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub index: usize,
    pub template_id: String,
    pub peak_corr: f64,
    pub peak_mf: f64,
    pub rss: f64,
}

/// Everything a processing run produces.
#[derive(Debug)]
pub struct ProcessOutput {
    /// Per-template traces, in template order; `None` when trace collection
    /// was disabled.
    pub traces: Option<Vec<GatedOutputs>>,
    /// Events from all templates, sorted by (index, template_id).
    pub events: Vec<DetectionEvent>,
    /// Number of matched-filter evaluations per template. The energy gate
    /// exists to keep these counters small on an idle medium.
    pub mf_evals: Vec<u64>,
}

/// Trailing moving-average power, window truncated at the stream start.
pub fn rss(stream: &SampleStream, window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    let mut ring = vec![0.0f64; window];
    let mut sum = 0.0f64;
    let mut out = Vec::with_capacity(stream.len());
    for (i, s) in stream.samples().iter().enumerate() {
        let p = (s.re as f64).powi(2) + (s.im as f64).powi(2);
        let slot = i % window;
        sum += p - ring[slot];
        ring[slot] = p;
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Matched-filter output at sample `i`: the template taps, conjugated,
/// correlated against the window of the last N samples ending at `i`.
/// Inside the warm-up region (`i < N-1`) the output is defined as 0.
pub fn matched_filter(template: &Template, samples: &[IqSample], i: usize) -> C64 {
    let n = template.len();
    assert!(i < samples.len(), "sample index {i} out of range");
    if i + 1 < n {
        return C64::new(0.0, 0.0);
    }
    let w = i + 1 - n;
    let mut acc_re = 0.0f64;
    let mut acc_im = 0.0f64;
    for (tap, x) in template.taps().iter().zip(&samples[w..=i]) {
        let (hr, hi) = (tap.re as f64, tap.im as f64);
        let (xr, xi) = (x.re as f64, x.im as f64);
        acc_re += hr * xr + hi * xi;
        acc_im += hr * xi - hi * xr;
    }
    C64::new(acc_re, acc_im)
}

/// Rising-edge metric on matched-filter magnitudes. Rising from exactly zero
/// passes any threshold (the gate looks for the leading edge of the
/// correlation bell, and 0 -> positive is a rising edge); two zeros in a row
/// yield 0, which fails any positive threshold.
pub fn mf_metric(mf_now: f64, mf_prev: f64) -> f64 {
    if mf_prev == 0.0 {
        if mf_now > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        mf_now / mf_prev
    }
}

/// Pearson correlation between the template taps and a window of equal
/// length: both sides are mean-centered, the product is normalized by both
/// centered energies. |c| is at most 1 (Cauchy-Schwarz) and invariant to
/// any affine transform a*x + b of the window. A zero-variance window
/// yields 0 ("no match possible").
pub fn pearson_corr(template: &Template, window: &[IqSample]) -> C64 {
    let n = template.len();
    assert_eq!(
        window.len(),
        n,
        "window length {} must equal template length {n}",
        window.len()
    );
    let nf = n as f64;
    let mut h_sum = C64::new(0.0, 0.0);
    for t in template.taps() {
        h_sum += C64::new(t.re as f64, t.im as f64);
    }
    let h_cent = centered_energy(template.taps());

    let mut sx = C64::new(0.0, 0.0);
    let mut sxx = 0.0f64;
    let mut mf = C64::new(0.0, 0.0);
    for (tap, x) in template.taps().iter().zip(window) {
        let (hr, hi) = (tap.re as f64, tap.im as f64);
        let (xr, xi) = (x.re as f64, x.im as f64);
        sx += C64::new(xr, xi);
        sxx += xr * xr + xi * xi;
        mf += C64::new(hr * xr + hi * xi, hr * xi - hi * xr);
    }

    let den_x = sxx - sx.norm_sqr() / nf;
    if !(den_x > sxx * VARIANCE_FLOOR) {
        return C64::new(0.0, 0.0);
    }
    let num = mf - sx * h_sum.conj() / nf;
    let mut c = num / (den_x * h_cent).sqrt();
    let mag = c.norm();
    if mag > 1.0 {
        debug_assert!(mag < 1.0 + 1e-6, "|c| = {mag} far above 1");
        c /= mag;
    }
    c
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    index: usize,
    corr: f64,
    mf_mag: f64,
    rss: f64,
}

#[derive(Debug, Clone, Copy)]
struct Gates {
    t1: f64,
    t2: f64,
    t3: f64,
}

/// Streaming state for one template.
#[derive(Debug)]
struct FilterState {
    id: String,
    n: usize,
    refractory: usize,
    taps_re: Vec<f64>,
    taps_im: Vec<f64>,
    h_sum: C64,
    h_cent_energy: f64,
    ring_re: Vec<f64>,
    ring_im: Vec<f64>,
    pos: usize,
    filled: usize,
    sx: C64,
    sxx: f64,
    prev_mf_mag: f64,
    pending: Option<Pending>,
    events: Vec<DetectionEvent>,
    mf_evals: u64,
    trace_mf: Vec<f32>,
    trace_corr: Vec<f32>,
}

impl FilterState {
    fn new(template: &Template, refractory: Option<usize>) -> Self {
        let n = template.len();
        let taps_re: Vec<f64> = template.taps().iter().map(|t| t.re as f64).collect();
        let taps_im: Vec<f64> = template.taps().iter().map(|t| t.im as f64).collect();
        let mut h_sum = C64::new(0.0, 0.0);
        for (&r, &i) in taps_re.iter().zip(&taps_im) {
            h_sum += C64::new(r, i);
        }
        FilterState {
            id: template.id().to_string(),
            n,
            refractory: refractory.unwrap_or(n),
            h_sum,
            h_cent_energy: centered_energy(template.taps()),
            taps_re,
            taps_im,
            ring_re: vec![0.0; n],
            ring_im: vec![0.0; n],
            pos: 0,
            filled: 0,
            sx: C64::new(0.0, 0.0),
            sxx: 0.0,
            prev_mf_mag: 0.0,
            pending: None,
            events: Vec::new(),
            mf_evals: 0,
            trace_mf: Vec::new(),
            trace_corr: Vec::new(),
        }
    }

    fn recompute_sums(&mut self) {
        let mut sx = C64::new(0.0, 0.0);
        let mut sxx = 0.0f64;
        for (&r, &i) in self.ring_re.iter().zip(&self.ring_im) {
            sx += C64::new(r, i);
            sxx += r * r + i * i;
        }
        self.sx = sx;
        self.sxx = sxx;
    }

    /// Matched-filter dot product over the current window, oldest sample
    /// first (so tap j pairs with the j-th oldest sample).
    fn dot_window(&self) -> C64 {
        let k = self.n - self.pos;
        let mut acc_re = 0.0f64;
        let mut acc_im = 0.0f64;
        for j in 0..k {
            let (hr, hi) = (self.taps_re[j], self.taps_im[j]);
            let (xr, xi) = (self.ring_re[self.pos + j], self.ring_im[self.pos + j]);
            acc_re += hr * xr + hi * xi;
            acc_im += hr * xi - hi * xr;
        }
        for j in 0..self.pos {
            let (hr, hi) = (self.taps_re[k + j], self.taps_im[k + j]);
            let (xr, xi) = (self.ring_re[j], self.ring_im[j]);
            acc_re += hr * xr + hi * xi;
            acc_im += hr * xi - hi * xr;
        }
        C64::new(acc_re, acc_im)
    }

    /// Exact two-pass correlation magnitude over the current window.
    fn two_pass_corr_mag(&self) -> f64 {
        let nf = self.n as f64;
        let mut sr = 0.0f64;
        let mut si = 0.0f64;
        let k = self.n - self.pos;
        for j in 0..self.n {
            let slot = if j < k { self.pos + j } else { j - k };
            sr += self.ring_re[slot];
            si += self.ring_im[slot];
        }
        let (mxr, mxi) = (sr / nf, si / nf);
        let h_mean = self.h_sum / nf;

        let mut num_re = 0.0f64;
        let mut num_im = 0.0f64;
        let mut den_x = 0.0f64;
        for j in 0..self.n {
            let slot = if j < k { self.pos + j } else { j - k };
            let xr = self.ring_re[slot] - mxr;
            let xi = self.ring_im[slot] - mxi;
            let hr = self.taps_re[j] - h_mean.re;
            let hi = self.taps_im[j] - h_mean.im;
            num_re += hr * xr + hi * xi;
            num_im += hr * xi - hi * xr;
            den_x += xr * xr + xi * xi;
        }
        if den_x <= 0.0 {
            return 0.0;
        }
        let mag = num_re.hypot(num_im) / (den_x * self.h_cent_energy).sqrt();
        if mag > 1.0 {
            debug_assert!(mag < 1.0 + 1e-6, "|c| = {mag} far above 1");
            1.0
        } else {
            mag
        }
    }

    fn finalize(&mut self, p: Pending) {
        if let Some(last) = self.events.last() {
            debug_assert!(p.index - last.index >= self.refractory);
        }
        self.events.push(DetectionEvent {
            index: p.index,
            template_id: self.id.clone(),
            peak_corr: p.corr,
            peak_mf: p.mf_mag,
            rss: p.rss,
        });
        // Bound running-sum drift at every emitted event.
        self.recompute_sums();
    }

    fn offer_candidate(&mut self, g: usize, mf_mag: f64, rss_v: f64) {
        // The gated value came from running sums; recompute the peak value
        // exactly before it can become an event.
        let exact = self.two_pass_corr_mag();
        let cand = Pending {
            index: g,
            corr: exact,
            mf_mag,
            rss: rss_v,
        };
        match self.pending {
            None => self.pending = Some(cand),
            Some(ref mut p) if g - p.index < self.refractory => {
                // Same correlation bell: keep the best peak.
                if cand.corr > p.corr {
                    *p = cand;
                }
            }
            Some(p) => {
                self.finalize(p);
                self.pending = Some(cand);
            }
        }
    }

    fn walk(&mut self, sub: &[IqSample], rss_vals: &[f64], base: usize, gates: Gates, collect: bool) {
        let nf = self.n as f64;
        for (k, (x, &rss_v)) in sub.iter().zip(rss_vals).enumerate() {
            let g = base + k;
            if g % RECOMPUTE_INTERVAL == 0 && g > 0 {
                self.recompute_sums();
            }

            let xr = x.re as f64;
            let xi = x.im as f64;
            let old_re = self.ring_re[self.pos];
            let old_im = self.ring_im[self.pos];
            self.ring_re[self.pos] = xr;
            self.ring_im[self.pos] = xi;
            self.pos += 1;
            if self.pos == self.n {
                self.pos = 0;
            }
            self.sx += C64::new(xr - old_re, xi - old_im);
            self.sxx += (xr * xr + xi * xi) - (old_re * old_re + old_im * old_im);
            if self.filled < self.n {
                self.filled += 1;
            }

            let mut mf_mag = 0.0f64;
            let mut corr = 0.0f64;
            if self.filled == self.n && rss_v > gates.t1 {
                let mf = self.dot_window();
                self.mf_evals += 1;
                mf_mag = mf.norm();
                if mf_metric(mf_mag, self.prev_mf_mag) > gates.t2 {
                    let den_x = self.sxx - self.sx.norm_sqr() / nf;
                    if den_x > self.sxx * VARIANCE_FLOOR {
                        let num = mf - self.sx * self.h_sum.conj() / nf;
                        let mut c = num.norm() / (den_x * self.h_cent_energy).sqrt();
                        if c > 1.0 {
                            debug_assert!(c < 1.0 + 1e-6, "|c| = {c} far above 1");
                            c = 1.0;
                        }
                        if c > gates.t3 {
                            corr = c;
                        }
                    }
                }
                self.prev_mf_mag = mf_mag;
            } else {
                // Gate closed: the filter output is zero by definition, so
                // the next open sample sees a rising edge from zero.
                self.prev_mf_mag = 0.0;
            }

            if collect {
                self.trace_mf.push(mf_mag as f32);
                self.trace_corr.push(corr as f32);
            }
            if corr > 0.0 {
                self.offer_candidate(g, mf_mag, rss_v);
            }
        }
    }
}

/// Streaming cascade over a bank of templates. Feed chunks of any size; the
/// output is identical to processing the whole stream in one call.
#[derive(Debug)]
pub struct StreamProcessor {
    gates: Gates,
    filters: Vec<FilterState>,
    rss_ring: Vec<f64>,
    rss_sum: f64,
    rss_window: usize,
    rss_scratch: Vec<f64>,
    rss_trace: Vec<f32>,
    global: usize,
    collect_traces: bool,
    parallel: bool,
}

impl StreamProcessor {
    pub fn new(templates: &[Template], cfg: &DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        if templates.is_empty() {
            return Err(Error::InvalidInput("at least one template is required".into()));
        }
        for (i, a) in templates.iter().enumerate() {
            for b in &templates[i + 1..] {
                if a.id() == b.id() {
                    return Err(Error::InvalidInput(format!(
                        "duplicate template id '{}'",
                        a.id()
                    )));
                }
            }
        }
        Ok(StreamProcessor {
            gates: Gates {
                t1: cfg.t1,
                t2: cfg.t2,
                t3: cfg.t3,
            },
            filters: templates
                .iter()
                .map(|t| FilterState::new(t, cfg.refractory))
                .collect(),
            rss_ring: vec![0.0; cfg.energy_window],
            rss_sum: 0.0,
            rss_window: cfg.energy_window,
            rss_scratch: Vec::new(),
            rss_trace: Vec::new(),
            global: 0,
            collect_traces: false,
            parallel: true,
        })
    }

    /// Record per-sample rss/mf/corr traces (costs memory on long streams).
    pub fn collect_traces(mut self, on: bool) -> Self {
        self.collect_traces = on;
        self
    }

    /// Evaluate the template bank on one thread instead of in parallel.
    /// Results are identical either way; without the `parallel` feature this
    /// is a no-op.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn samples_processed(&self) -> usize {
        self.global
    }

    pub fn process_chunk(&mut self, chunk: &[IqSample]) {
        for sub in chunk.chunks(SUB_BLOCK) {
            let mut scratch = std::mem::take(&mut self.rss_scratch);
            scratch.clear();
            scratch.reserve(sub.len());
            for (k, s) in sub.iter().enumerate() {
                let g = self.global + k;
                if g % RECOMPUTE_INTERVAL == 0 && g > 0 {
                    self.rss_sum = self.rss_ring.iter().sum();
                }
                let p = (s.re as f64).powi(2) + (s.im as f64).powi(2);
                let slot = g % self.rss_window;
                self.rss_sum += p - self.rss_ring[slot];
                self.rss_ring[slot] = p;
                scratch.push(self.rss_sum / (g + 1).min(self.rss_window) as f64);
            }
            if self.collect_traces {
                self.rss_trace.extend(scratch.iter().map(|&v| v as f32));
            }

            let base = self.global;
            let gates = self.gates;
            let collect = self.collect_traces;
            run_filters(&mut self.filters, self.parallel, |f| {
                f.walk(sub, &scratch, base, gates, collect)
            });

            self.global += sub.len();
            self.rss_scratch = scratch;
        }
    }

    /// Flush pending event candidates and collect all outputs. Events are
    /// sorted by (index, template_id).
    pub fn finish(mut self) -> ProcessOutput {
        let mut events = Vec::new();
        let mut mf_evals = Vec::with_capacity(self.filters.len());
        let mut traces = self.collect_traces.then(Vec::new);

        for f in &mut self.filters {
            if let Some(p) = f.pending.take() {
                f.finalize(p);
            }
        }
        for f in self.filters {
            events.extend(f.events);
            mf_evals.push(f.mf_evals);
            if let Some(tr) = traces.as_mut() {
                tr.push(GatedOutputs {
                    rss: self.rss_trace.clone(),
                    mf_mag: f.trace_mf,
                    corr: f.trace_corr,
                });
            }
        }
        events.sort_by(|a, b| (a.index, &a.template_id).cmp(&(b.index, &b.template_id)));
        ProcessOutput {
            traces,
            events,
            mf_evals,
        }
    }
}

fn run_filters<F>(filters: &mut [FilterState], parallel: bool, f: F)
where
    F: Fn(&mut FilterState) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallel && filters.len() > 1 {
            filters.par_iter_mut().for_each(f);
            return;
        }
    }
    let _ = parallel;
    filters.iter_mut().for_each(f);
}

/// Run the cascade over a whole stream with traces enabled, returning the
/// per-template surfaces and the merged event list.
pub fn process_stream(
    stream: &SampleStream,
    templates: &[Template],
    cfg: &DetectorConfig,
) -> Result<(Vec<GatedOutputs>, Vec<DetectionEvent>)> {
    let mut p = StreamProcessor::new(templates, cfg)?.collect_traces(true);
    p.process_chunk(stream.samples());
    let out = p.finish();
    Ok((out.traces.expect("traces enabled"), out.events))
}

/// Run the cascade without trace collection (constant memory); returns
/// events and instrumentation.
pub fn detect_stream(
    stream: &SampleStream,
    templates: &[Template],
    cfg: &DetectorConfig,
) -> Result<ProcessOutput> {
    let mut p = StreamProcessor::new(templates, cfg)?;
    p.process_chunk(stream.samples());
    Ok(p.finish())
}
