//! Model data: nonlocal diffusion law, FitzHugh-Nagumo kinetics, stimulus
//! and initial data, plus numerical checks of the kinetics growth conditions.

use std::f64::consts::PI;

/// Conductivity as a function of the domain integral `J` of the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionLaw {
    /// `max(floor, slope * J)`.
    Linear { slope: f64, floor: f64 },
    Constant { value: f64 },
}

impl DiffusionLaw {
    pub const DEFAULT_FLOOR: f64 = 1e-4;

    pub fn linear(slope: f64) -> Self {
        DiffusionLaw::Linear {
            slope,
            floor: Self::DEFAULT_FLOOR,
        }
    }

    pub fn eval(&self, j: f64) -> f64 {
        match *self {
            DiffusionLaw::Linear { slope, floor } => floor.max(slope * j),
            DiffusionLaw::Constant { value } => value,
        }
    }

    /// Lower bound of the law over all inputs.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            DiffusionLaw::Linear { floor, .. } => floor,
            DiffusionLaw::Constant { value } => value,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            DiffusionLaw::Linear { slope, .. } => slope.abs(),
            DiffusionLaw::Constant { .. } => 0.0,
        }
    }
}

/// Polynomial structure of a reaction term, used to pick exact quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolynomialDegree {
    pub in_v: usize,
    pub in_w: usize,
}

/// Ionic current and gating dynamics.
pub trait Kinetics: Send + Sync {
    fn ionic(&self, v: f64, w: f64) -> f64;
    fn gating(&self, v: f64, w: f64) -> f64;
    /// Degrees of the ionic current, or `None` if it is not polynomial.
    fn ionic_degree(&self) -> Option<PolynomialDegree>;
    /// Degrees of the gating function, or `None` if it is not polynomial.
    fn gating_degree(&self) -> Option<PolynomialDegree>;
}

/// `I_ion(v, w) = -lambda (w - v (1 - v)(v - theta))`, `H(v, w) = a v - b w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhnKinetics {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl FhnKinetics {
    /// The `v`-only part of the ionic current.
    pub fn ionic_v(&self, v: f64) -> f64 {
        self.lambda * v * (1.0 - v) * (v - self.theta)
    }

    /// The `w`-only part of the ionic current.
    pub fn ionic_w(&self, w: f64) -> f64 {
        -self.lambda * w
    }
}

impl Kinetics for FhnKinetics {
    fn ionic(&self, v: f64, w: f64) -> f64 {
        -self.lambda * (w - v * (1.0 - v) * (v - self.theta))
    }

    fn gating(&self, v: f64, w: f64) -> f64 {
        self.a * v - self.b * w
    }

    fn ionic_degree(&self) -> Option<PolynomialDegree> {
        Some(PolynomialDegree { in_v: 3, in_w: 1 })
    }

    fn gating_degree(&self) -> Option<PolynomialDegree> {
        Some(PolynomialDegree { in_v: 1, in_w: 1 })
    }
}

/// Disc-shaped applied current switched on at `t_on` (and off at `t_off`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub t_on: f64,
    pub t_off: f64,
}

impl Stimulus {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        if t >= self.t_on && t < self.t_off && dx * dx + dy * dy < self.radius * self.radius {
            self.amplitude
        } else {
            0.0
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t_on && t < self.t_off
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// Smooth cosine modulation around 1 for both fields.
    Example1,
    /// Radially decaying logistic profile in `v`, `w = 0`.
    Example2,
    /// Quadrant data that seeds a spiral wave.
    Example3,
    Constant { v: f64, w: f64 },
}

impl InitialData {
    pub fn name(&self) -> &'static str {
        match self {
            InitialData::Example1 => "example1",
            InitialData::Example2 => "example2",
            InitialData::Example3 => "example3",
            InitialData::Constant { .. } => "constant",
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            InitialData::Example1 => (
                1.0 + 0.5 * (4.0 * PI * x).cos() * (4.0 * PI * y).cos(),
                1.0 + 0.5 * (8.0 * PI * x).cos() * (8.0 * PI * y).cos(),
            ),
            InitialData::Example2 => {
                let r = (x * x + y * y).sqrt();
                (1.0 - 1.0 / (1.0 + (-50.0 * r - 0.1).exp()), 0.0)
            }
            InitialData::Example3 => {
                // strict inequalities: points on x = 0.5 or y = 0.5 take the zero branch
                let v = if x < 0.5 && y < 0.5 { 1.4 } else { 0.0 };
                let w = if x > 0.5 && y < 0.5 { 0.15 } else { 0.0 };
                (v, w)
            }
            InitialData::Constant { v, w } => (v, w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub diffusion: DiffusionLaw,
    pub kinetics: FhnKinetics,
    pub stimulus: Option<Stimulus>,
    pub initial: InitialData,
}

impl ModelSpec {
    pub fn applied_current(&self, x: f64, y: f64, t: f64) -> f64 {
        self.stimulus.map_or(0.0, |s| s.eval(x, y, t))
    }
}

/// Empirical constants for the growth and monotonicity conditions on the kinetics.
#[derive(Debug, Clone, PartialEq)]
pub struct IonicAssumptionReport {
    /// Threshold above which the quartic lower bound is tested.
    pub v_star: f64,
    /// Smallest `alpha_1` with `|v|^4 / alpha_1 <= |I_1(v) v|` for `|v| >= v_star`; `None` if no finite value works.
    pub alpha1: Option<f64>,
    /// Smallest `alpha_2` with `|I_1(v) v| <= alpha_2 (|v|^4 + 1)` on the sample.
    pub alpha2: f64,
    /// Smallest `alpha_3` with `|I_2(w)| <= alpha_3 (|w| + 1)`.
    pub alpha3: f64,
    /// Smallest `alpha_4` with `|H(v, w)| <= alpha_4 (|v| + |w| + 1)`.
    pub alpha4: f64,
    /// Smallest `C_h >= 0` with `(I_1(z) - I_1(s))(z - s) >= -C_h |z - s|^2` on the sampled pairs.
    pub c_h: f64,
    pub growth_holds: bool,
    /// `I_2` is affine in `w` on the sample.
    pub i2_linear: bool,
}

/// Samples `v, w` on `[-range, range]` and estimates the growth constants.
pub fn check_ionic_assumptions(kinetics: &FhnKinetics, range: f64, samples: usize, v_star: f64) -> IonicAssumptionReport {
    let grid: Vec<f64> = (0..samples)
        .map(|k| -range + 2.0 * range * k as f64 / (samples - 1) as f64)
        .collect();
    let mut min_ratio = f64::INFINITY;
    let mut alpha2: f64 = 0.0;
    for &v in &grid {
        let iv = (kinetics.ionic_v(v) * v).abs();
        alpha2 = alpha2.max(iv / (v.powi(4) + 1.0));
        if v.abs() >= v_star {
            min_ratio = min_ratio.min(iv / v.powi(4));
        }
    }
    let alpha1 = (min_ratio > 0.0 && min_ratio.is_finite()).then(|| 1.0 / min_ratio);

    let mut alpha3: f64 = 0.0;
    let mut i2_linear = true;
    let slope = kinetics.ionic_w(1.0) - kinetics.ionic_w(0.0);
    for &w in &grid {
        alpha3 = alpha3.max(kinetics.ionic_w(w).abs() / (w.abs() + 1.0));
        let affine = kinetics.ionic_w(0.0) + slope * w;
        if (kinetics.ionic_w(w) - affine).abs() > 1e-12 * (1.0 + affine.abs()) {
            i2_linear = false;
        }
    }
    let mut alpha4: f64 = 0.0;
    for &v in &grid {
        for &w in &grid {
            alpha4 = alpha4.max(kinetics.gating(v, w).abs() / (v.abs() + w.abs() + 1.0));
        }
    }
    let mut c_h: f64 = 0.0;
    for (i, &z) in grid.iter().enumerate() {
        for &s in &grid[i + 1..] {
            let q = (kinetics.ionic_v(z) - kinetics.ionic_v(s)) / (z - s);
            c_h = c_h.max(-q);
        }
    }
    IonicAssumptionReport {
        v_star,
        alpha1,
        alpha2,
        alpha3,
        alpha4,
        c_h,
        growth_holds: alpha1.is_some(),
        i2_linear,
    }
}
