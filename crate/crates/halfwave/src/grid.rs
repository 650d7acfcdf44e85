//! Periodic pseudospectral grids and real fields.
//!
//! The box is `[-L/2, L/2)^N` sampled at `x_j = -L/2 + j L/n`. Axis `N-1` is
//! the fastest varying index. Wavenumbers are kept in FFT order, so index `i`
//! carries `k = i` for `i < n/2` and `k = i - n` otherwise.
//!
//! The Nyquist mode keeps its multiplier `|xi|`; for real data its
//! coefficient is treated as a cosine when a field is evaluated off-grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec;

type C = Complex64;
const ZERO: C = C { re: 0.0, im: 0.0 };

struct Inner {
    dim: usize,
    box_length: f64,
    n: usize,
    cell_volume: f64,
    axis_k: Vec<i64>,
    wavenumbers: Vec<f64>,
    abs_xi: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
}

/// Immutable periodic grid; clones share the precomputed tables.
#[derive(Clone)]
pub struct Grid(Arc<Inner>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.0.dim)
            .field("box_length", &self.0.box_length)
            .field("n", &self.0.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.dim == other.0.dim
                && self.0.n == other.0.n
                && self.0.box_length == other.0.box_length)
    }
}

/// Build a grid; rejects odd or small `n`, nonpositive `L` and `dim` outside {2, 3}.
pub fn make_grid(dim: usize, box_length: f64, n: usize) -> Result<Grid> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::InvalidGrid(format!("box length must be positive, got {box_length}")));
    }
    if n < 8 || n % 2 != 0 {
        return Err(Error::InvalidGrid(format!("points per dimension must be even and >= 8, got {n}")));
    }
    let axis_k: Vec<i64> = (0..n)
        .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
        .collect();
    let wavenumbers: Vec<f64> = axis_k.iter().map(|&k| 2.0 * PI * k as f64 / box_length).collect();
    let total = n.pow(dim as u32);
    let mut abs_xi = vec![0.0; total];
    exec::fill(&mut abs_xi, |i| {
        let mut s = 0.0;
        let mut rem = i;
        for _ in 0..dim {
            let w = wavenumbers[rem % n];
            s += w * w;
            rem /= n;
        }
        s.sqrt()
    });
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let fwd2 = planner.plan_fft_forward(2 * n);
    let inv2 = planner.plan_fft_inverse(2 * n);
    let h = box_length / n as f64;
    Ok(Grid(Arc::new(Inner {
        dim,
        box_length,
        n,
        cell_volume: h.powi(dim as i32),
        axis_k,
        wavenumbers,
        abs_xi,
        fwd,
        inv,
        fwd2,
        inv2,
    })))
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.0.dim
    }
    pub fn box_length(&self) -> f64 {
        self.0.box_length
    }
    pub fn points_per_dim(&self) -> usize {
        self.0.n
    }
    pub fn cell_volume(&self) -> f64 {
        self.0.cell_volume
    }
    /// Grid spacing `L/n`.
    pub fn spacing(&self) -> f64 {
        self.0.box_length / self.0.n as f64
    }
    /// Total number of samples `n^N`.
    pub fn len(&self) -> usize {
        self.0.abs_xi.len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Axis wavenumbers `2 pi k / L` in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.0.wavenumbers
    }
    /// Integer axis modes `k` in FFT order.
    pub fn axis_modes(&self) -> &[i64] {
        &self.0.axis_k
    }
    /// `|xi|` for every mode, flattened like the samples.
    pub fn abs_xi(&self) -> &[f64] {
        &self.0.abs_xi
    }
    pub fn coordinate(&self, j: usize) -> f64 {
        -0.5 * self.0.box_length + j as f64 * self.spacing()
    }
    /// Multi-index of flat sample `i`.
    pub fn multi_index(&self, i: usize, out: &mut [usize]) {
        let n = self.0.n;
        let mut rem = i;
        for a in (0..self.0.dim).rev() {
            out[a] = rem % n;
            rem /= n;
        }
    }
    /// Physical position of flat sample `i`.
    pub fn position(&self, i: usize, out: &mut [f64]) {
        let n = self.0.n;
        let mut rem = i;
        for a in (0..self.0.dim).rev() {
            out[a] = self.coordinate(rem % n);
            rem /= n;
        }
    }
    /// Flat index of the sample mirrored through the box center.
    pub fn mirror_index(&self, i: usize) -> usize {
        let n = self.0.n;
        let mut rem = i;
        let mut out = 0;
        let mut scale = 1;
        for _ in 0..self.0.dim {
            let j = rem % n;
            rem /= n;
            out += ((n - j) % n) * scale;
            scale *= n;
        }
        out
    }
    /// Flat index of the box center `x = 0`.
    pub fn center_index(&self) -> usize {
        let n = self.0.n;
        (0..self.0.dim).fold(0, |acc, _| acc * n + n / 2)
    }

    /// In-place N-dimensional DFT; the inverse includes the `1/n^N` factor.
    pub fn fft(&self, data: &mut [C], inverse: bool) {
        let plan = if inverse { &self.0.inv } else { &self.0.fwd };
        let scratch_len = plan.get_inplace_scratch_len();
        self.apply_lines(data, |line| {
            let mut scratch = vec![ZERO; scratch_len];
            plan.process_with_scratch(line, &mut scratch);
        });
        if inverse {
            let s = 1.0 / data.len() as f64;
            exec::for_each_chunk_mut(data, exec::CHUNK, |_, c| c.iter_mut().for_each(|v| *v *= s));
        }
    }

    /// Apply `op` to every axis line, one axis after another.
    fn apply_lines<F>(&self, data: &mut [C], op: F)
    where
        F: Fn(&mut [C]) + Sync + Send,
    {
        let n = self.0.n;
        let dim = self.0.dim;
        let per_task = (exec::CHUNK / n).max(1);
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                exec::for_each_chunk_mut(data, n * per_task, |_, chunk| {
                    chunk.chunks_mut(n).for_each(&op);
                });
                continue;
            }
            let block = n * stride;
            let mut tmp = vec![ZERO; block];
            for b in data.chunks_mut(block) {
                {
                    let src: &[C] = b;
                    exec::for_each_chunk_mut(&mut tmp, n * per_task, |c, chunk| {
                        for (li, line) in chunk.chunks_mut(n).enumerate() {
                            let r = c * per_task + li;
                            for (j, v) in line.iter_mut().enumerate() {
                                *v = src[j * stride + r];
                            }
                            op(line);
                        }
                    });
                }
                let t: &[C] = &tmp;
                exec::for_each_chunk_mut(b, stride, |j, row| {
                    for (r, v) in row.iter_mut().enumerate() {
                        *v = t[r * n + j];
                    }
                });
            }
        }
    }
}

/// Real samples on a grid.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl Field {
    /// Wrap samples; rejects wrong length and non-finite values.
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Grid) -> Field {
        Field::from_raw(grid, vec![0.0; grid.len()])
    }

    /// Sample `f(x)` at every grid point.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Field
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let dim = grid.dim();
        let mut values = vec![0.0; grid.len()];
        exec::for_each_chunk_mut(&mut values, exec::CHUNK, |c, chunk| {
            let mut x = [0.0; 3];
            for (i, v) in chunk.iter_mut().enumerate() {
                grid.position(c * exec::CHUNK + i, &mut x[..dim]);
                *v = f(&x[..dim]);
            }
        });
        Field::from_raw(grid, values)
    }

    /// Sample a radial profile `f(|x|)`.
    pub fn radial<F>(grid: &Grid, f: F) -> Field
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        Field::from_fn(grid, |x| f(x.iter().map(|v| v * v).sum::<f64>().sqrt()))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map<F>(&self, f: F) -> Field
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let mut out = vec![0.0; self.values.len()];
        let v = &self.values;
        exec::fill(&mut out, |i| f(v[i]));
        Field::from_raw(&self.grid, out)
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.check_same(other)?;
        let (x, y) = (&self.values, &other.values);
        let mut out = vec![0.0; x.len()];
        exec::fill(&mut out, |i| a * x[i] + b * y[i]);
        Ok(Field::from_raw(&self.grid, out))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub(crate) fn check_same(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Largest deviation from the reflection `x -> -x` about the box center.
    pub fn reflection_defect(&self) -> f64 {
        let g = &self.grid;
        let v = &self.values;
        (0..v.len()).map(|i| (v[i] - v[g.mirror_index(i)]).abs()).fold(0.0, f64::max)
    }
}

/// Unnormalized DFT of a field.
pub fn spectrum(u: &Field) -> Vec<C> {
    let mut data: Vec<C> = u.values.iter().map(|&v| C::new(v, 0.0)).collect();
    u.grid.fft(&mut data, false);
    data
}

/// Inverse DFT back to real samples, checking the imaginary residue.
pub fn from_spectrum(grid: &Grid, mut data: Vec<C>) -> Field {
    grid.fft(&mut data, true);
    let (mut im, mut re) = (0.0f64, 0.0f64);
    for c in &data {
        im = im.max(c.im.abs());
        re = re.max(c.re.abs());
    }
    assert!(
        im <= 1e-10 * re.max(f64::MIN_POSITIVE) || im < 1e-300,
        "imaginary residue {im:e} relative to {re:e}"
    );
    Field::from_raw(grid, data.into_iter().map(|c| c.re).collect())
}

/// Multiply the spectrum by a real, even multiplier `m(i)` of the flat mode index.
pub fn apply_multiplier<F>(u: &Field, m: F) -> Field
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut s = spectrum(u);
    exec::for_each_chunk_mut(&mut s, exec::CHUNK, |c, chunk| {
        for (i, v) in chunk.iter_mut().enumerate() {
            *v *= m(c * exec::CHUNK + i);
        }
    });
    from_spectrum(&u.grid, s)
}

/// `F^{-1}(|xi| F u)`.
pub fn sqrt_laplacian(u: &Field) -> Field {
    let xi = u.grid.abs_xi();
    apply_multiplier(u, |i| xi[i])
}

/// `sum |xi| |u_hat|^2` with the quadrature-consistent Parseval factor.
pub fn h_half_seminorm_sq(u: &Field) -> f64 {
    let s = spectrum(u);
    seminorm_from_spectrum(&u.grid, &s)
}

pub(crate) fn seminorm_from_spectrum(grid: &Grid, s: &[C]) -> f64 {
    let xi = grid.abs_xi();
    let sum = exec::chunked_sum(s.len(), |r| r.map(|i| xi[i] * s[i].norm_sqr()).sum());
    sum * grid.cell_volume() / s.len() as f64
}

/// `(sum |u|^p dv)^{1/p}`.
pub fn lp_norm(u: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("lp_norm needs p >= 1, got {p}")));
    }
    Ok(lp_integral(u, p).powf(1.0 / p))
}

/// `sum |u|^p dv`.
pub fn lp_integral(u: &Field, p: f64) -> f64 {
    let v = &u.values;
    let s = if p == 2.0 {
        exec::chunked_sum(v.len(), |r| r.map(|i| v[i] * v[i]).sum())
    } else if p == 4.0 {
        exec::chunked_sum(v.len(), |r| r.map(|i| (v[i] * v[i]) * (v[i] * v[i])).sum())
    } else {
        exec::chunked_sum(v.len(), |r| r.map(|i| v[i].abs().powf(p)).sum())
    };
    s * u.grid.cell_volume()
}

pub fn l2_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_same(v)?;
    let (a, b) = (&u.values, &v.values);
    let s = exec::chunked_sum(a.len(), |r| r.map(|i| a[i] * b[i]).sum());
    Ok(s * u.grid.cell_volume())
}

/// Result of a dilation together with its mass bookkeeping.
#[derive(Clone, Debug)]
pub struct Dilated {
    pub field: Field,
    /// `| ||out||_2 / ||u||_2 - 1 |`.
    pub mass_change: f64,
}

impl Dilated {
    /// True when the mass moved by more than `1e-4` relative.
    pub fn leaked(&self) -> bool {
        self.mass_change > 1e-4
    }
}

/// `t^{N/2} u(t x)` by evaluating the trigonometric interpolant.
///
/// For `t > 1` sample points whose image `t x` falls outside the box are set
/// to zero instead of wrapping onto periodic copies.
pub fn dilate(u: &Field, t: f64) -> Result<Dilated> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!("dilation factor must be positive, got {t}")));
    }
    if t == 1.0 {
        return Ok(Dilated { field: u.clone(), mass_change: 0.0 });
    }
    let grid = &u.grid;
    let n = grid.points_per_dim();
    let mut s = spectrum(u);
    let chirp = Chirp::new(grid, t);
    let scratch_len = grid.0.fwd2.get_inplace_scratch_len().max(grid.0.inv2.get_inplace_scratch_len());
    grid.apply_lines(&mut s, |line| {
        let mut buf = vec![ZERO; 2 * n];
        let mut scratch = vec![ZERO; scratch_len];
        chirp.eval_line(grid, line, &mut buf, &mut scratch);
    });
    let amp = t.powf(grid.dim() as f64 / 2.0);
    let field = Field::from_raw(grid, s.into_iter().map(|c| amp * c.re).collect());
    let m0 = lp_integral(u, 2.0).sqrt();
    let m1 = lp_integral(&field, 2.0).sqrt();
    let mass_change = if m0 > 0.0 { (m1 / m0 - 1.0).abs() } else { 0.0 };
    Ok(Dilated { field, mass_change })
}

/// Bluestein tables for evaluating a coefficient line at the points `t x_j`.
struct Chirp {
    n: usize,
    pre: Vec<C>,
    post: Vec<C>,
    inside: Vec<bool>,
    kernel_hat: Vec<C>,
}

impl Chirp {
    fn new(grid: &Grid, t: f64) -> Chirp {
        let n = grid.points_per_dim();
        let nf = n as f64;
        let half = (n / 2) as i64;
        let phase = |x: f64| C::from_polar(1.0, x);
        // k runs over -n/2..=n/2, stored at K = k + n/2
        let pre: Vec<C> = (0..=n)
            .map(|kk| {
                let k = kk as i64 - half;
                let kf = k as f64;
                let w = if k.abs() == half { 0.5 } else { 1.0 };
                phase(PI * kf * (1.0 - t) + PI * t * kf * kf / nf) * w
            })
            .collect();
        let post: Vec<C> = (0..n)
            .map(|j| {
                let jf = j as f64;
                phase(PI * t * jf * jf / nf) / nf
            })
            .collect();
        let inside: Vec<bool> = (0..n)
            .map(|j| (t * grid.coordinate(j)).abs() <= 0.5 * grid.box_length() * (1.0 + 1e-12))
            .collect();
        let mut kernel: Vec<C> = (0..2 * n)
            .map(|i| {
                let m = i as f64 - half as f64;
                phase(-PI * t * m * m / nf)
            })
            .collect();
        let mut scratch = vec![ZERO; grid.0.fwd2.get_inplace_scratch_len()];
        grid.0.fwd2.process_with_scratch(&mut kernel, &mut scratch);
        Chirp { n, pre, post, inside, kernel_hat: kernel }
    }

    fn eval_line(&self, grid: &Grid, line: &mut [C], buf: &mut [C], scratch: &mut [C]) {
        let n = self.n;
        let half = n / 2;
        buf.iter_mut().for_each(|v| *v = ZERO);
        for kk in 0..=n {
            let k = kk as i64 - half as i64;
            let idx = k.rem_euclid(n as i64) as usize;
            buf[kk] = line[idx] * self.pre[kk];
        }
        grid.0.fwd2.process_with_scratch(buf, scratch);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        grid.0.inv2.process_with_scratch(buf, scratch);
        let norm = 1.0 / (2 * n) as f64;
        for j in 0..n {
            line[j] = if self.inside[j] { buf[j + n] * self.post[j] * norm } else { ZERO };
        }
    }
}

/// Periodic shift `u(x - y)` via Fourier phases.
pub fn translate(u: &Field, y: &[f64]) -> Result<Field> {
    let grid = &u.grid;
    let dim = grid.dim();
    if y.len() != dim || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("translation must be a finite vector of length dim".into()));
    }
    let n = grid.points_per_dim();
    let half = (n / 2) as i64;
    let modes = grid.axis_modes();
    let xi = grid.wavenumbers();
    let factors: Vec<Vec<C>> = (0..dim)
        .map(|a| {
            (0..n)
                .map(|i| {
                    if modes[i] == -half {
                        C::new((xi[i] * y[a]).cos(), 0.0)
                    } else {
                        C::from_polar(1.0, -xi[i] * y[a])
                    }
                })
                .collect()
        })
        .collect();
    let mut s = spectrum(u);
    exec::for_each_chunk_mut(&mut s, exec::CHUNK, |c, chunk| {
        let mut idx = [0usize; 3];
        for (i, v) in chunk.iter_mut().enumerate() {
            grid.multi_index(c * exec::CHUNK + i, &mut idx[..dim]);
            let mut f = C::new(1.0, 0.0);
            for a in 0..dim {
                f *= factors[a][idx[a]];
            }
            *v *= f;
        }
    });
    Ok(from_spectrum(grid, s))
}

/// Trigonometric interpolant of `u` sampled on `target` (same dimension and
/// points per axis). Points outside the source box read zero.
pub fn resample(u: &Field, target: &Grid) -> Result<Field> {
    let src = &u.grid;
    if src.dim() != target.dim() || src.points_per_dim() != target.points_per_dim() {
        return Err(Error::InvalidGrid("resampling needs equal dimension and points per axis".into()));
    }
    let t = target.box_length() / src.box_length();
    if (t - 1.0).abs() < 1e-14 {
        return Ok(Field::from_raw(target, u.values.clone()));
    }
    let d = dilate(u, t)?;
    let scale = t.powf(-(src.dim() as f64) / 2.0);
    Ok(Field::from_raw(target, d.field.values.iter().map(|v| v * scale).collect()))
}

/// Exact periodic shift by whole grid cells: `out[j] = u[j - shift]` per axis.
pub fn roll(u: &Field, shift: &[i64]) -> Result<Field> {
    let grid = &u.grid;
    let dim = grid.dim();
    if shift.len() != dim {
        return Err(Error::InvalidParameter(format!("shift has {} components, grid has {dim}", shift.len())));
    }
    let n = grid.points_per_dim() as i64;
    let mut out = vec![0.0; u.values.len()];
    exec::for_each_chunk_mut(&mut out, exec::CHUNK, |c, chunk| {
        let mut idx = [0usize; 3];
        for (i, v) in chunk.iter_mut().enumerate() {
            grid.multi_index(c * exec::CHUNK + i, &mut idx[..dim]);
            let mut src = 0usize;
            for a in 0..dim {
                src = src * n as usize + (idx[a] as i64 - shift[a]).rem_euclid(n) as usize;
            }
            *v = u.values[src];
        }
    });
    Ok(Field::from_raw(grid, out))
}

/// Band-limited upsampling onto a grid with `factor * n` points per axis.
pub fn upsample(u: &Field, factor: usize) -> Result<Field> {
    let grid = &u.grid;
    let n = grid.points_per_dim();
    let m = factor * n;
    let fine = make_grid(grid.dim(), grid.box_length(), m)?;
    let dim = grid.dim();
    let s = spectrum(u);
    let mut big = vec![ZERO; fine.len()];
    let half = (n / 2) as i64;
    let mut idx = [0usize; 3];
    for (i, v) in s.iter().enumerate() {
        grid.multi_index(i, &mut idx[..dim]);
        // Nyquist coefficients split evenly over +-n/2 in the fine spectrum
        let mut targets: Vec<(usize, f64)> = vec![(0, 1.0)];
        for a in 0..dim {
            let k = grid.axis_modes()[idx[a]];
            let mut next = Vec::with_capacity(targets.len() * 2);
            for &(flat, w) in &targets {
                if k == -half {
                    next.push((flat * m + (m as i64 - half) as usize, 0.5 * w));
                    next.push((flat * m + half as usize, 0.5 * w));
                } else {
                    next.push((flat * m + k.rem_euclid(m as i64) as usize, w));
                }
            }
            targets = next;
        }
        for (flat, w) in targets {
            big[flat] += v * w;
        }
    }
    let scale = (factor as f64).powi(dim as i32);
    big.iter_mut().for_each(|v| *v *= scale);
    Ok(from_spectrum(&fine, big))
}

/// L2 adjoint of [`upsample`]: spectral restriction of a fine-grid field onto
/// `coarse`, whose box must match.
pub fn restrict(fine: &Field, coarse: &Grid) -> Result<Field> {
    let fg = &fine.grid;
    let (n, m, dim) = (coarse.points_per_dim(), fg.points_per_dim(), coarse.dim());
    if fg.dim() != dim || m % n != 0 || (fg.box_length() - coarse.box_length()).abs() > 1e-12 * fg.box_length() {
        return Err(Error::InvalidGrid("restriction needs a refinement of the same box".into()));
    }
    let s = spectrum(fine);
    let half = (n / 2) as i64;
    let mut out = vec![ZERO; coarse.len()];
    exec::for_each_chunk_mut(&mut out, exec::CHUNK, |c, chunk| {
        let mut idx = [0usize; 3];
        for (i, v) in chunk.iter_mut().enumerate() {
            coarse.multi_index(c * exec::CHUNK + i, &mut idx[..dim]);
            let mut sources: [(usize, f64); 8] = [(0, 1.0); 8];
            let mut count = 1;
            for a in 0..dim {
                let k = coarse.axis_modes()[idx[a]];
                let prev = count;
                if k == -half {
                    for j in 0..prev {
                        let (flat, w) = sources[j];
                        sources[j] = (flat * m + (m as i64 - half) as usize, 0.5 * w);
                        sources[prev + j] = (flat * m + half as usize, 0.5 * w);
                    }
                    count = 2 * prev;
                } else {
                    for source in sources.iter_mut().take(prev) {
                        source.0 = source.0 * m + k.rem_euclid(m as i64) as usize;
                    }
                }
            }
            *v = sources[..count].iter().map(|&(flat, w)| s[flat] * w).sum();
        }
    });
    let scale = ((n as f64) / (m as f64)).powi(dim as i32);
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(from_spectrum(coarse, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(g: &Grid) -> Field {
        Field::radial(g, |r| (-r * r / 2.0).exp())
    }

    /// Exact torus seminorm of `amp * exp(-|x|^2 / (2 s2))` in 2D: the lattice
    /// sum of `|xi| |u_hat(xi)|^2 / L^2` with the continuum transform.
    fn lattice_gaussian_seminorm(g: &Grid, amp2: f64, s2: f64) -> f64 {
        let l = g.box_length();
        let kmax = (g.points_per_dim() / 2) as i64;
        let mut sum = 0.0;
        for a in -kmax..kmax {
            for b in -kmax..kmax {
                let xi2 = (2.0 * PI / l).powi(2) * (a * a + b * b) as f64;
                let hat2 = amp2 * (2.0 * PI * s2).powi(2) * (-s2 * xi2).exp();
                sum += xi2.sqrt() * hat2;
            }
        }
        sum / (l * l)
    }

    #[test]
    fn grid_validation() {
        assert!(make_grid(2, 40.0, 255).is_err());
        assert!(make_grid(2, 40.0, 6).is_err());
        assert!(make_grid(4, 40.0, 8).is_err());
        assert!(make_grid(2, -1.0, 8).is_err());
        let g = make_grid(2, 40.0, 256).unwrap();
        assert_eq!(g.cell_volume(), 0.0244140625);
    }

    #[test]
    fn unit_box_wavenumbers() {
        let g = make_grid(2, 2.0 * PI, 8).unwrap();
        let mut w: Vec<f64> = g.wavenumbers().to_vec();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, v) in w.iter().enumerate() {
            assert!((v - (i as f64 - 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_waves() {
        let g = make_grid(2, 2.0 * PI, 16).unwrap();
        let u = Field::from_fn(&g, |x| (3.0 * x[0] + 4.0 * x[1]).cos());
        let v = sqrt_laplacian(&u);
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((5.0 * a - b).abs() < 1e-10);
        }
        let c = Field::from_fn(&g, |_| 2.5);
        assert!(sqrt_laplacian(&c).values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nyquist_checkerboard_keeps_multiplier() {
        let g = make_grid(2, 2.0 * PI, 8).unwrap();
        let u = Field::from_fn(&g, |x| (4.0 * x[0]).cos());
        let v = sqrt_laplacian(&u);
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((4.0 * a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_norms() {
        let g = make_grid(2, 40.0, 256).unwrap();
        let u = gaussian(&g);
        assert!((lp_norm(&u, 2.0).unwrap() - PI.sqrt()).abs() < 1e-12);
        assert!((lp_norm(&u, 4.0).unwrap() - (PI / 2.0).powf(0.25)).abs() < 1e-10);
        let a = h_half_seminorm_sq(&u);
        assert!((a - lattice_gaussian_seminorm(&g, 1.0, 1.0)).abs() < 1e-10 * a);
        // the box only sees the lattice sum, which misses the continuum value by O((2 pi / L)^3)
        let cont = PI.powf(1.5) / 2.0;
        assert!((a / cont - 1.0).abs() < 4e-4);
        let b = l2_inner(&u, &sqrt_laplacian(&u)).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        assert!(lp_norm(&u, 0.5).is_err());
    }

    #[test]
    fn orthogonal_modes() {
        let g = make_grid(2, 2.0 * PI, 16).unwrap();
        let a = Field::from_fn(&g, |x| x[0].cos());
        let b = Field::from_fn(&g, |x| (2.0 * x[0]).cos());
        assert!(l2_inner(&a, &b).unwrap().abs() < 1e-12);
        let other = make_grid(2, 2.0 * PI, 8).unwrap();
        assert!(l2_inner(&a, &Field::zeros(&other)).is_err());
    }

    #[test]
    fn dilation_identity_and_scaling() {
        let g = make_grid(2, 80.0, 512).unwrap();
        let u = gaussian(&g);
        assert_eq!(dilate(&u, 1.0).unwrap().field, u);
        let d = dilate(&u, 2.0).unwrap();
        let m = lp_norm(&u, 2.0).unwrap();
        assert!((lp_norm(&d.field, 2.0).unwrap() - m).abs() < 1e-8 * m);
        let exact = Field::radial(&g, |r| 2.0 * (-2.0 * r * r).exp());
        let err = d
            .field
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        let a1 = h_half_seminorm_sq(&u);
        let a4 = h_half_seminorm_sq(&dilate(&u, 4.0).unwrap().field);
        assert!((a1 / lattice_gaussian_seminorm(&g, 1.0, 1.0) - 1.0).abs() < 1e-10);
        assert!((a4 / lattice_gaussian_seminorm(&g, 16.0, 1.0 / 16.0) - 1.0).abs() < 1e-8);
        assert!((a4 / a1 / 4.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn dilation_flags_leak() {
        let g = make_grid(2, 10.0, 64).unwrap();
        let u = Field::radial(&g, |r| (-r * r / 8.0).exp());
        assert!(dilate(&u, 0.3).unwrap().leaked());
    }

    #[test]
    fn translation_roundtrip() {
        let g = make_grid(2, 40.0, 128).unwrap();
        let u = Field::from_fn(&g, |x| (-(x[0] - 1.0).powi(2) - 0.5 * x[1] * x[1]).exp());
        let y = [2.3, -1.7];
        let v = translate(&u, &y).unwrap();
        let m = lp_norm(&u, 2.0).unwrap();
        assert!((lp_norm(&v, 2.0).unwrap() - m).abs() < 1e-10 * m);
        let w = translate(&v, &[-2.3, 1.7]).unwrap();
        for (a, b) in u.values().iter().zip(w.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let shifted = Field::from_fn(&g, |x| (-(x[0] - 3.3).powi(2) - 0.5 * (x[1] + 1.7).powi(2)).exp());
        for (a, b) in v.values().iter().zip(shifted.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fft_roundtrip_3d() {
        let g = make_grid(3, 10.0, 16).unwrap();
        let u = Field::from_fn(&g, |x| (x[0] - 0.3 * x[1]).sin() * (-x[2] * x[2]).exp());
        let back = from_spectrum(&g, spectrum(&u));
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let v = Field::from_fn(&g, |x| (2.0 * PI * (x[0] + 2.0 * x[2]) / 10.0).cos());
        let lv = sqrt_laplacian(&v);
        let k = 2.0 * PI / 10.0 * 5f64.sqrt();
        for (a, b) in v.values().iter().zip(lv.values()) {
            assert!((k * a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn upsample_interpolates() {
        let g = make_grid(2, 20.0, 64).unwrap();
        let u = gaussian(&g);
        let f = upsample(&u, 2).unwrap();
        let exact = Field::radial(f.grid(), |r| (-r * r / 2.0).exp());
        for (a, b) in f.values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mirror_and_center() {
        let g = make_grid(2, 10.0, 8).unwrap();
        let c = g.center_index();
        let mut x = [0.0; 2];
        g.position(c, &mut x);
        assert_eq!(x, [0.0, 0.0]);
        assert_eq!(g.mirror_index(c), c);
        assert_eq!(g.mirror_index(0), 0);
    }
}
