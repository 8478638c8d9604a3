//! Visual differential pipeline: block-average compression, per-cell
//! change encoding into a memristor array, saliency maps, orientation from
//! afterimage trails and the amplitude spectrum.

pub mod synth;

use std::collections::VecDeque;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::config::Config;
use crate::device::{apply_pulse_train, eigenvalue, resistance, DeviceParams, MemristorState, PulseTrain};
use crate::encoding::{extract_visual, scheme_for, SchemeTable, VisualClass};
use crate::{Error, Result};

/// 8-bit codes map to intensity `code / 100`.
pub const CODE_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionConfig {
    pub cols: usize,
    pub rows: usize,
    pub fps: f64,
    /// Resistance below which a cell is salient (Ω).
    pub binarize_threshold: f64,
    /// Frames a fully salient cell may take to re-enter the high band.
    pub release_bound_frames: usize,
    /// Maps used by the orientation estimate.
    pub orientation_frames: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            cols: 40,
            rows: 25,
            fps: 25.0,
            binarize_threshold: 100_000.0,
            release_bound_frames: 15,
            orientation_frames: 3,
        }
    }
}

impl VisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cols == 0 || self.rows == 0 {
            return Err(Error::config("vision grid must be non-empty"));
        }
        if !(self.fps > 0.0 && self.binarize_threshold > 0.0) {
            return Err(Error::config("fps and binarize_threshold must be positive"));
        }
        if self.orientation_frames < 2 {
            return Err(Error::config("orientation_frames must be at least 2"));
        }
        Ok(())
    }
}

/// Grayscale frame of 8-bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "frame data has {} bytes, expected {width}×{height}",
                data.len()
            )));
        }
        Ok(Frame { width, height, data })
    }

    pub fn filled(width: usize, height: usize, code: u8) -> Self {
        Frame {
            width,
            height,
            data: vec![code; width * height],
        }
    }

    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x] as f64 / CODE_SCALE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
    pub block_w: usize,
    pub block_h: usize,
}

impl GridSpec {
    /// Block size for a `width × height` frame; the grid must divide it
    /// exactly.
    pub fn for_frame(width: usize, height: usize, cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 || !width.is_multiple_of(cols) || !height.is_multiple_of(rows) || width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "{width}×{height} frame does not divide into a {cols}×{rows} grid; \
                 width must be a multiple of {cols} and height a multiple of {rows}"
            )));
        }
        Ok(GridSpec {
            cols,
            rows,
            block_w: width / cols,
            block_h: height / rows,
        })
    }

    pub fn width(&self) -> usize {
        self.cols * self.block_w
    }

    pub fn height(&self) -> usize {
        self.rows * self.block_h
    }

    pub fn cells(&self) -> usize {
        self.cols * self.rows
    }
}

/// Row-major cell intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub cols: usize,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(cols: usize, rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != cols * rows {
            return Err(Error::invalid(format!(
                "grid has {} values, expected {cols}×{rows}",
                values.len()
            )));
        }
        Ok(Grid { cols, rows, values })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Average each `block_w × block_h` block into one cell.
pub fn compress(frame: &Frame, spec: &GridSpec) -> Result<Grid> {
    if frame.width != spec.width() || frame.height != spec.height() {
        return Err(Error::invalid(format!(
            "frame is {}×{} but the grid expects {}×{} ({} blocks of {}×{})",
            frame.width,
            frame.height,
            spec.width(),
            spec.height(),
            spec.cells(),
            spec.block_w,
            spec.block_h
        )));
    }
    if spec.block_h > (u32::MAX / 255) as usize {
        return Err(Error::invalid(format!("block height {} is too large", spec.block_h)));
    }
    let n = (spec.block_w * spec.block_h) as f64 * CODE_SCALE;
    let mut values = Vec::with_capacity(spec.cells());
    let mut columns = vec![0u32; frame.width];
    for band in frame.data.chunks_exact(frame.width * spec.block_h) {
        columns.fill(0);
        for line in band.chunks_exact(frame.width) {
            // cannot wrap: a column sum is at most 255 · block_h
            for (acc, &b) in columns.iter_mut().zip(line) {
                *acc = acc.wrapping_add(u32::from(b));
            }
        }
        values.extend(
            columns
                .chunks_exact(spec.block_w)
                .map(|c| c.iter().map(|&v| u64::from(v)).sum::<u64>() as f64 / n),
        );
    }
    Ok(Grid {
        cols: spec.cols,
        rows: spec.rows,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayState {
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<MemristorState>,
}

impl ArrayState {
    pub fn uniform(cols: usize, rows: usize, state: MemristorState) -> Self {
        ArrayState {
            cols,
            rows,
            cells: vec![state; cols * rows],
        }
    }

    /// Every cell fully OFF.
    pub fn high(cols: usize, rows: usize) -> Self {
        ArrayState::uniform(cols, rows, MemristorState::FULL_OFF)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub cols: usize,
    pub rows: usize,
    pub resistance: Vec<f64>,
    /// 0 = low resistance (salient), 1 = high.
    pub binary: Vec<u8>,
    /// Normalised conductance of each cell.
    pub level: Vec<f64>,
}

impl SaliencyMap {
    pub fn from_resistance(cols: usize, rows: usize, resistance: Vec<f64>, threshold: f64) -> Self {
        let binary = resistance.iter().map(|&r| u8::from(r >= threshold)).collect();
        let (lo, hi) = resistance
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        let level = resistance
            .iter()
            .map(|&r| if hi > lo { (1.0 / r - 1.0 / hi) / (1.0 / lo - 1.0 / hi) } else { 0.0 })
            .collect();
        SaliencyMap {
            cols,
            rows,
            resistance,
            binary,
            level,
        }
    }

    /// Map read back from a 0/1 image; resistance and level are nominal.
    pub fn from_binary(cols: usize, rows: usize, binary: Vec<u8>, threshold: f64) -> Result<Self> {
        if binary.len() != cols * rows || binary.iter().any(|&b| b > 1) {
            return Err(Error::invalid("binary map must hold cols·rows values of 0 or 1"));
        }
        let resistance = binary.iter().map(|&b| if b == 0 { 0.5 * threshold } else { 2.0 * threshold }).collect();
        let level = binary.iter().map(|&b| f64::from(1 - b)).collect();
        Ok(SaliencyMap {
            cols,
            rows,
            resistance,
            binary,
            level,
        })
    }

    fn from_state(state: &ArrayState, params: &DeviceParams, threshold: f64) -> Self {
        let resistance: Vec<f64> = state.cells.iter().map(|s| resistance(*s, params)).collect();
        let binary = resistance.iter().map(|&r| u8::from(r >= threshold)).collect();
        let level = state.cells.iter().map(|s| eigenvalue(*s, params)).collect();
        SaliencyMap {
            cols: state.cols,
            rows: state.rows,
            resistance,
            binary,
            level,
        }
    }

    pub fn is_salient(&self, i: usize) -> bool {
        self.binary[i] == 0
    }

    pub fn salient_count(&self) -> usize {
        self.binary.iter().filter(|b| **b == 0).count()
    }
}

/// Trains applied during one array update.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseLog {
    pub trains: Vec<PulseTrain>,
    pub fast_cells: usize,
}

fn cell_update(
    prev: f64,
    curr: f64,
    state: MemristorState,
    table: &SchemeTable,
    params: &DeviceParams,
) -> Result<(MemristorState, PulseTrain, bool)> {
    let change = extract_visual(prev, curr, table.visual.fast_threshold)?;
    let train = scheme_for(change, resistance(state, params), table)?;
    let next = apply_pulse_train(state, &train, params)?;
    Ok((next, train, change.class == VisualClass::Fast))
}

fn check_shapes(prev: &Grid, curr: &Grid, state: &ArrayState) -> Result<()> {
    if prev.cols != curr.cols
        || prev.rows != curr.rows
        || state.cols != curr.cols
        || state.rows != curr.rows
        || prev.values.len() != state.cells.len()
        || curr.values.len() != state.cells.len()
    {
        return Err(Error::invalid(format!(
            "grid/array mismatch: prev {}×{}, curr {}×{}, array {}×{}",
            prev.cols, prev.rows, curr.cols, curr.rows, state.cols, state.rows
        )));
    }
    Ok(())
}

fn assemble(
    state: &ArrayState,
    results: Vec<(MemristorState, PulseTrain, bool)>,
    params: &DeviceParams,
    threshold: f64,
) -> (ArrayState, SaliencyMap, PulseLog) {
    let fast_cells = results.iter().filter(|r| r.2).count();
    let (cells, trains): (Vec<_>, Vec<_>) = results.into_iter().map(|(s, t, _)| (s, t)).unzip();
    let next = ArrayState {
        cols: state.cols,
        rows: state.rows,
        cells,
    };
    let map = SaliencyMap::from_state(&next, params, threshold);
    (next, map, PulseLog { trains, fast_cells })
}

/// Advance every cell by one frame transition.
pub fn update_array(
    prev: &Grid,
    curr: &Grid,
    state: &ArrayState,
    table: &SchemeTable,
    params: &DeviceParams,
    threshold: f64,
) -> Result<(ArrayState, SaliencyMap, PulseLog)> {
    check_shapes(prev, curr, state)?;
    let results = (0..state.cells.len())
        .map(|i| cell_update(prev.values[i], curr.values[i], state.cells[i], table, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(state, results, params, threshold))
}

/// [`update_array`] with cells spread over the rayon pool.
pub fn update_array_par(
    prev: &Grid,
    curr: &Grid,
    state: &ArrayState,
    table: &SchemeTable,
    params: &DeviceParams,
    threshold: f64,
) -> Result<(ArrayState, SaliencyMap, PulseLog)> {
    check_shapes(prev, curr, state)?;
    let results = (0..state.cells.len())
        .into_par_iter()
        .map(|i| cell_update(prev.values[i], curr.values[i], state.cells[i], table, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(state, results, params, threshold))
}

/// Streaming pipeline: push frames, get one saliency map per transition.
#[derive(Debug, Clone)]
pub struct VisionPipeline {
    cfg: Config,
    spec: Option<GridSpec>,
    prev: Option<Grid>,
    state: ArrayState,
    parallel: bool,
}

impl VisionPipeline {
    pub fn new(cfg: &Config) -> Self {
        VisionPipeline {
            state: ArrayState::high(cfg.vision.cols, cfg.vision.rows),
            cfg: cfg.clone(),
            spec: None,
            prev: None,
            parallel: false,
        }
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn state(&self) -> &ArrayState {
        &self.state
    }

    pub fn spec(&self) -> Option<GridSpec> {
        self.spec
    }

    /// `None` for the first frame, which only primes the pipeline.
    pub fn push(&mut self, frame: &Frame) -> Result<Option<SaliencyMap>> {
        let spec = match self.spec {
            Some(s) => s,
            None => {
                let s = GridSpec::for_frame(frame.width, frame.height, self.cfg.vision.cols, self.cfg.vision.rows)?;
                self.spec = Some(s);
                s
            }
        };
        let grid = compress(frame, &spec)?;
        let Some(prev) = self.prev.replace(grid) else {
            return Ok(None);
        };
        let curr = self.prev.as_ref().expect("just stored");
        let update = if self.parallel { update_array_par } else { update_array };
        let (state, map, _) = update(
            &prev,
            curr,
            &self.state,
            &self.cfg.table,
            &self.cfg.device,
            self.cfg.vision.binarize_threshold,
        )?;
        self.state = state;
        Ok(Some(map))
    }
}

/// Fold the array over consecutive frames from the all-high state.
pub fn run_video(frames: &[Frame], cfg: &Config) -> Result<Vec<SaliencyMap>> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "a video needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mut p = VisionPipeline::new(cfg);
    let mut maps = Vec::with_capacity(frames.len() - 1);
    for f in frames {
        if let Some(m) = p.push(f)? {
            maps.push(m);
        }
    }
    Ok(maps)
}

/// Motion direction from the afterimage trail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    /// Unit vector; x grows rightward (columns), y downward (rows).
    pub dx: f64,
    pub dy: f64,
    /// Centroid displacement in cells.
    pub magnitude: f64,
}

impl Orientation {
    pub fn angle_to(&self, vx: f64, vy: f64) -> f64 {
        let n = (vx * vx + vy * vy).sqrt();
        let cos = ((self.dx * vx + self.dy * vy) / n).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    }
}

fn salient_centroid<'a>(maps: impl Iterator<Item = &'a SaliencyMap>) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for m in maps {
        for i in 0..m.binary.len() {
            if m.is_salient(i) {
                let w = m.level[i];
                sx += w * (i % m.cols) as f64;
                sy += w * (i / m.cols) as f64;
                sw += w;
            }
        }
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

/// Direction from the trail centroid of the older maps toward the
/// conductance-weighted salient centroid of the newest one. `maps` are in
/// time order; `None` without salient cells or without displacement.
pub fn estimate_orientation(maps: &[SaliencyMap]) -> Option<Orientation> {
    let (newest, older) = maps.split_last()?;
    if older.is_empty() {
        return None;
    }
    let (cx, cy) = salient_centroid(std::iter::once(newest))?;
    let (ox, oy) = salient_centroid(older.iter())?;
    let (dx, dy) = (cx - ox, cy - oy);
    let magnitude = (dx * dx + dy * dy).sqrt();
    (magnitude > 1e-9).then(|| Orientation {
        dx: dx / magnitude,
        dy: dy / magnitude,
        magnitude,
    })
}

/// Running orientation over the last `k` maps.
#[derive(Debug, Clone)]
pub struct OrientationTracker {
    k: usize,
    maps: VecDeque<SaliencyMap>,
}

impl OrientationTracker {
    pub fn new(k: usize) -> Self {
        OrientationTracker {
            k: k.max(2),
            maps: VecDeque::with_capacity(k.max(2)),
        }
    }

    pub fn push(&mut self, map: SaliencyMap) -> Option<Orientation> {
        if self.maps.len() == self.k {
            self.maps.pop_front();
        }
        self.maps.push_back(map);
        if self.maps.len() < self.k {
            return None;
        }
        estimate_orientation(self.maps.make_contiguous())
    }
}

/// DC-centred magnitude of the 2-D DFT, row-major.
pub fn amplitude_spectrum(grid: &Grid) -> Vec<f64> {
    let (w, h) = (grid.cols, grid.rows);
    let mut planner = FftPlanner::<f64>::new();
    let mut data: Vec<Complex<f64>> = grid.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let row_fft = planner.plan_fft_forward(w);
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let dst = ((r + h / 2) % h) * w + (c + w / 2) % w;
            out[dst] = data[r * w + c].norm();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn compress_examples() {
        let spec = GridSpec::for_frame(1920, 900, 40, 25).unwrap();
        assert_eq!((spec.block_w, spec.block_h), (48, 36));

        let g = compress(&Frame::filled(1920, 900, 137), &spec).unwrap();
        assert!(g.values.iter().all(|&v| v == 1.37));

        let mut f = Frame::filled(1920, 900, 0);
        for y in 36..72 {
            for x in 96..144 {
                f.data[y * 1920 + x] = 255;
            }
        }
        let g = compress(&f, &spec).unwrap();
        let hot: Vec<usize> = (0..1000).filter(|&i| g.values[i] != 0.0).collect();
        assert_eq!(hot, vec![40 + 2]);
        assert_eq!(g.values[42], 2.55);

        let toy = GridSpec::for_frame(2, 2, 2, 2).unwrap();
        let f = Frame::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(compress(&f, &toy).unwrap().values, vec![0.01, 0.02, 0.03, 0.04]);
    }

    #[test]
    fn compress_rejects_non_dividing() {
        let err = GridSpec::for_frame(1921, 900, 40, 25).unwrap_err();
        assert!(err.to_string().contains("multiple of 40"));
        let spec = GridSpec::for_frame(80, 50, 40, 25).unwrap();
        assert!(compress(&Frame::filled(82, 50, 0), &spec).is_err());
    }

    #[test]
    fn static_grids_stay_high() {
        let c = cfg();
        let g = Grid::new(40, 25, vec![1.0; 1000]).unwrap();
        let s = ArrayState::high(40, 25);
        let (n, map, log) = update_array(&g, &g, &s, &c.table, &c.device, 1e5).unwrap();
        assert_eq!(n, s);
        assert_eq!(map.salient_count(), 0);
        assert_eq!(log.fast_cells, 0);
    }

    #[test]
    fn step_cell_goes_salient_alone() {
        let c = cfg();
        let a = Grid::new(40, 25, vec![0.0; 1000]).unwrap();
        let mut b = a.clone();
        b.values[517] = 2.56;
        let s = ArrayState::high(40, 25);
        let (n, map, log) = update_array(&a, &b, &s, &c.table, &c.device, 1e5).unwrap();
        assert_eq!(log.fast_cells, 1);
        assert!(map.resistance[517] < 1e5);
        assert_eq!(map.salient_count(), 1);
        assert!(n.cells.iter().enumerate().all(|(i, x)| i == 517 || x.x() == 0.0));
    }

    #[test]
    fn released_cell_rises_monotonically() {
        let c = cfg();
        let g = Grid::new(40, 25, vec![0.5; 1000]).unwrap();
        let mut s = ArrayState::uniform(40, 25, MemristorState::FULL_ON);
        let mut last = 0.0;
        let mut frames = None;
        for f in 1..=40 {
            let (n, map, _) = update_array(&g, &g, &s, &c.table, &c.device, 1e5).unwrap();
            let r = map.resistance[0];
            assert!(r >= last);
            last = r;
            s = n;
            if frames.is_none() && r > c.table.bands.high_min {
                frames = Some(f);
            }
        }
        assert!(frames.unwrap() <= c.vision.release_bound_frames);
    }

    #[test]
    fn parallel_matches_sequential() {
        let c = cfg();
        let a = Grid::new(40, 25, (0..1000).map(|i| (i % 7) as f64 * 0.3).collect()).unwrap();
        let b = Grid::new(40, 25, (0..1000).map(|i| (i % 11) as f64 * 0.2).collect()).unwrap();
        let s = ArrayState::uniform(40, 25, MemristorState::new(0.4).unwrap());
        let seq = update_array(&a, &b, &s, &c.table, &c.device, 1e5).unwrap();
        let par = update_array_par(&a, &b, &s, &c.table, &c.device, 1e5).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let c = cfg();
        let a = Grid::new(40, 25, vec![0.0; 1000]).unwrap();
        let b = Grid::new(20, 50, vec![0.0; 1000]).unwrap();
        assert!(update_array(&a, &b, &ArrayState::high(40, 25), &c.table, &c.device, 1e5).is_err());
    }

    #[test]
    fn two_frame_video_is_one_update() {
        let c = cfg();
        let f0 = Frame::filled(80, 50, 0);
        let mut f1 = f0.clone();
        f1.data[0] = 200;
        f1.data[1] = 200;
        f1.data[80] = 200;
        f1.data[81] = 200;
        let maps = run_video(&[f0.clone(), f1.clone()], &c).unwrap();
        assert_eq!(maps.len(), 1);
        let spec = GridSpec::for_frame(80, 50, 40, 25).unwrap();
        let (_, map, _) = update_array(
            &compress(&f0, &spec).unwrap(),
            &compress(&f1, &spec).unwrap(),
            &ArrayState::high(40, 25),
            &c.table,
            &c.device,
            c.vision.binarize_threshold,
        )
        .unwrap();
        assert_eq!(maps[0], map);
        assert!(run_video(&[f0], &c).is_err());
    }

    #[test]
    fn orientation_degenerate_cases() {
        let empty = SaliencyMap::from_resistance(4, 4, vec![3e5; 16], 1e5);
        assert_eq!(estimate_orientation(&[empty.clone(), empty.clone()]), None);
        let mut r = vec![3e5; 16];
        r[5] = 3e4;
        let still = SaliencyMap::from_resistance(4, 4, r, 1e5);
        assert_eq!(estimate_orientation(&[still.clone(), still.clone(), still]), None);
    }

    #[test]
    fn spectrum_examples() {
        let g = Grid::new(40, 25, vec![0.7; 1000]).unwrap();
        let s = amplitude_spectrum(&g);
        let center = 12 * 40 + 20;
        assert!((s[center] - 0.7 * 1000.0).abs() < 1e-9);
        assert!(s.iter().enumerate().all(|(i, &v)| i == center || v.abs() < 1e-9));

        let mut imp = vec![0.0; 1000];
        imp[123] = 1.0;
        let s = amplitude_spectrum(&Grid::new(40, 25, imp).unwrap());
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
