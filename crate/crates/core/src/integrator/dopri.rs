//! Dormand-Prince 5(4) with FSAL, PI step control and 5th-order dense output.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    pub const fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::new(1e-11, 1e-14)
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment<const N: usize> {
    pub x_old: f64,
    pub h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn x_new(&self) -> f64 {
        self.x_old + self.h
    }

    pub fn lo(&self) -> f64 {
        self.x_old.min(self.x_new())
    }

    pub fn hi(&self) -> f64 {
        self.x_old.max(self.x_new())
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    pub fn eval(&self, x: f64) -> [f64; N] {
        let s = (x - self.x_old) / self.h;
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        std::array::from_fn(|i| c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i]))))
    }

    pub fn eval_derivative(&self, x: f64) -> [f64; N] {
        let s = (x - self.x_old) / self.h;
        let c = &self.coeffs;
        let w3 = 1.0 - 2.0 * s;
        let w4 = s * (2.0 - 3.0 * s);
        let w5 = 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        std::array::from_fn(|i| (c[1][i] + w3 * c[2][i] + w4 * c[3][i] + w5 * c[4][i]) / self.h)
    }

    /// Multiplies the extension by `factor` (linear problems only).
    pub fn scale(&mut self, factor: f64) {
        for row in self.coeffs.iter_mut() {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Reached,
    Stopped,
    StepUnderflow,
    NonFinite,
    MaxSteps,
}

/// What an observer asks the driver to do after an accepted step.
pub enum Control {
    Continue,
    /// Stop at this abscissa inside the last segment.
    StopAt(f64),
    /// Keep the step, then stop.
    StopAfter,
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub x: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
    pub segments: Vec<DenseSegment<N>>,
    pub termination: Termination,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DriverOptions {
    pub max_steps: usize,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self { max_steps: 2_000_000, h_init: None, h_max: None }
    }
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

fn err_norm<const N: usize>(y: &[f64; N], y_new: &[f64; N], err: &[f64; N], tol: Tolerances) -> f64 {
    let mut sum = 0.0;
    for i in 0..N {
        let sk = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
        sum += (err[i] / sk).powi(2);
    }
    (sum / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(
    f: &F,
    x0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    tol: Tolerances,
    h_max: f64,
) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = tol.atol + tol.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(h_max);
    let y1 = axpy(y0, dir * h, &[(1.0, f0)]);
    let f1 = f(x0 + dir * h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = tol.atol + tol.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    (100.0 * h).min(h1).min(h_max)
}

struct Stage<const N: usize> {
    y_new: [f64; N],
    k7: [f64; N],
    err: [f64; N],
    segment: DenseSegment<N>,
}

fn stage<const N: usize, F>(f: &F, x: f64, y: &[f64; N], k1: &[f64; N], hs: f64, x_new: f64) -> Stage<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let y2 = axpy(y, hs, &[(A21, k1)]);
    let k2 = f(x + C2 * hs, &y2);
    let y3 = axpy(y, hs, &[(A31, k1), (A32, &k2)]);
    let k3 = f(x + C3 * hs, &y3);
    let y4 = axpy(y, hs, &[(A41, k1), (A42, &k2), (A43, &k3)]);
    let k4 = f(x + C4 * hs, &y4);
    let y5 = axpy(y, hs, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
    let k5 = f(x + C5 * hs, &y5);
    let y6 = axpy(y, hs, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
    let k6 = f(x_new, &y6);
    let y_new = axpy(y, hs, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(x_new, &y_new);
    let err =
        std::array::from_fn(|i| hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]));
    let mut c = [[0.0; N]; 5];
    for i in 0..N {
        let dy = y_new[i] - y[i];
        let bspl = hs * k1[i] - dy;
        c[0][i] = y[i];
        c[1][i] = dy;
        c[2][i] = bspl;
        c[3][i] = dy - hs * k7[i] - bspl;
        c[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Stage { y_new, k7, err, segment: DenseSegment { x_old: x, h: x_new - x, coeffs: c } }
}

/// Integrates `y' = f(x, y)` from `x0` to `x_end` (either direction).
///
/// `observer` sees every accepted segment together with the new state and
/// may request termination inside it.
pub fn integrate<const N: usize, F, O>(
    f: F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    tol: Tolerances,
    opts: DriverOptions,
    mut observer: O,
) -> Trajectory<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&DenseSegment<N>, &[f64; N]) -> Control,
{
    const SAFETY: f64 = 0.9;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;
    const BETA: f64 = 0.04;
    let expo1 = 0.2 - BETA * 0.75;

    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let span = (x_end - x0).abs();
    let h_max = opts.h_max.unwrap_or(span).min(span).max(f64::MIN_POSITIVE);

    let mut traj = Trajectory {
        x: vec![x0],
        y: vec![y0],
        dy: Vec::new(),
        segments: Vec::new(),
        termination: Termination::Reached,
        evaluations: 0,
    };
    let mut k1 = f(x0, &y0);
    traj.evaluations += 1;
    traj.dy.push(k1);
    if !finite(&y0) || !finite(&k1) {
        traj.termination = Termination::NonFinite;
        return traj;
    }
    if span == 0.0 {
        return traj;
    }

    let mut x = x0;
    let mut y = y0;
    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&f, x0, &y0, &k1, dir, tol, h_max)).abs().min(h_max);
    traj.evaluations += 1;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            traj.termination = Termination::MaxSteps;
            return traj;
        }
        steps += 1;
        let remaining = (x_end - x).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * x.abs().max(1e-300) {
            traj.termination = Termination::StepUnderflow;
            return traj;
        }
        let hs = dir * h;

        let x_new = if last { x_end } else { x + hs };
        let st = stage(&f, x, &y, &k1, hs, x_new);
        traj.evaluations += 6;
        let (y_new, k7) = (st.y_new, st.k7);

        let ok = finite(&y_new) && finite(&k7);
        let err = if ok { err_norm(&y, &y_new, &st.err, tol) } else { f64::INFINITY };

        if err.is_finite() && err <= 1.0 {
            let seg = st.segment;
            let control = observer(&seg, &y_new);
            traj.segments.push(seg);
            match control {
                Control::Continue => {
                    traj.x.push(x_new);
                    traj.y.push(y_new);
                    traj.dy.push(k7);
                }
                Control::StopAfter => {
                    traj.x.push(x_new);
                    traj.y.push(y_new);
                    traj.dy.push(k7);
                    traj.termination = Termination::Stopped;
                    return traj;
                }
                Control::StopAt(xs) => {
                    // land on xs with a fresh step instead of interpolating across it
                    let ys = if (xs - x).abs() > 1e-12 * h {
                        let short = stage(&f, x, &y, &k1, xs - x, xs);
                        traj.evaluations += 6;
                        *traj.segments.last_mut().expect("segment just pushed") = short.segment;
                        traj.dy.push(short.k7);
                        short.y_new
                    } else {
                        let ys = traj.segments.last().expect("segment just pushed").eval(xs);
                        traj.dy.push(f(xs, &ys));
                        traj.evaluations += 1;
                        ys
                    };
                    traj.x.push(xs);
                    traj.y.push(ys);
                    traj.termination = Termination::Stopped;
                    return traj;
                }
            }
            if last {
                traj.termination = Termination::Reached;
                return traj;
            }
            let fac11 = err.max(1e-300).powf(expo1);
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            x = x_new;
            y = y_new;
            k1 = k7;
            h = h_new.min(h_max);
            last_rejected = false;
        } else {
            if !ok && h <= 1e-14 * x.abs().max(1e-300) * 16.0 {
                traj.termination = Termination::NonFinite;
                return traj;
            }
            let shrink = if err.is_finite() { (err.powf(expo1) / SAFETY).min(1.0 / FAC_MIN) } else { 10.0 };
            h /= shrink;
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<F: Fn(f64, &[f64; 2]) -> [f64; 2]>(f: F, x0: f64, y0: [f64; 2], x1: f64, rtol: f64) -> Trajectory<2> {
        integrate(f, x0, y0, x1, Tolerances::new(rtol, 1e-14), DriverOptions::default(), |_, _| Control::Continue)
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let t = run(|_, y| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, 1e-12);
        assert_eq!(t.termination, Termination::Reached);
        let y = t.y.last().unwrap();
        assert!((y[0] - 10f64.sin()).abs() < 1e-10, "{}", y[0] - 10f64.sin());
        assert!((y[1] - 10f64.cos()).abs() < 1e-10);
        assert_eq!(*t.x.last().unwrap(), 10.0);
    }

    #[test]
    fn dense_output_between_nodes() {
        let t = run(|_, y| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, 1e-11);
        for seg in &t.segments {
            for k in 1..8 {
                let x = seg.x_old + seg.h * k as f64 / 8.0;
                let v = seg.eval(x);
                assert!((v[0] - x.sin()).abs() < 1e-9);
                let dv = seg.eval_derivative(x);
                assert!((dv[0] - x.cos()).abs() < 1e-8);
            }
            // endpoints reproduce nodes
            let e = seg.eval(seg.x_new());
            assert!((e[0] - seg.x_new().sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_integration() {
        let t = run(|_, y| [y[1], y[0]], 2.0, [2f64.exp(), 2f64.exp()], 0.0, 1e-12);
        let y = t.y.last().unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11);
        let mid = t.segments[t.segments.len() / 2].clone();
        let x = 0.5 * (mid.x_old + mid.x_new());
        assert!((mid.eval(x)[0] - x.exp()).abs() < 1e-10);
        assert!(mid.lo() < mid.hi());
    }

    #[test]
    fn observer_stop() {
        let t = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            10.0,
            Tolerances::new(1e-12, 1e-14),
            DriverOptions::default(),
            |seg, y| {
                if y[0] < 0.0 {
                    Control::StopAt(seg.x_old + 0.5 * seg.h)
                } else {
                    Control::Continue
                }
            },
        );
        assert_eq!(t.termination, Termination::Stopped);
        assert_eq!(t.x.len(), t.y.len());
        assert_eq!(t.x.len(), t.dy.len());
    }

    #[test]
    fn nonfinite_is_reported() {
        let t = run(|_, y| [y[0] * y[0], 0.0], 0.0, [1.0, 0.0], 2.0, 1e-10);
        assert!(matches!(t.termination, Termination::NonFinite | Termination::StepUnderflow));
    }
}
