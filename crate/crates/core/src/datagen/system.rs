use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State, input and output dimensions of a system or dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
}

/// `ẋ = f(x, u)`, `y = h(x, u)`.
pub trait ContinuousSystem {
    fn name(&self) -> &str;
    fn dims(&self) -> Dims;
    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
}

/// `x(k+1) = f(x(k), u(k))`, `y(k) = h(x(k), u(k))`.
pub trait DiscreteSystem {
    fn name(&self) -> &str;
    fn dims(&self) -> Dims;
    fn sample_time(&self) -> f64;
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
}

type MapFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A continuous-time system assembled from closures.
pub struct FnSystem {
    name: String,
    dims: Dims,
    f: MapFn,
    h: MapFn,
}

impl FnSystem {
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        f: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnSystem {
            name: name.into(),
            dims,
            f: Box::new(f),
            h: Box::new(h),
        }
    }
}

impl ContinuousSystem for FnSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn dims(&self) -> Dims {
        self.dims
    }
    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.f)(x, u)
    }
    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.h)(x, u)
    }
}

/// Classic fourth-order Runge–Kutta discretization with the input held
/// constant over each sampling period.
pub struct Rk4<S> {
    system: S,
    sample_time: f64,
}

pub fn rk4_discretize<S: ContinuousSystem>(system: S, sample_time: f64) -> Result<Rk4<S>> {
    if !(sample_time > 0.0 && sample_time.is_finite()) {
        return Err(Error::Parameter(format!(
            "sample time must be positive, got {sample_time}"
        )));
    }
    Ok(Rk4 {
        system,
        sample_time,
    })
}

impl<S> Rk4<S> {
    pub fn inner(&self) -> &S {
        &self.system
    }
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

impl<S: ContinuousSystem> DiscreteSystem for Rk4<S> {
    fn name(&self) -> &str {
        self.system.name()
    }
    fn dims(&self) -> Dims {
        self.system.dims()
    }
    fn sample_time(&self) -> f64 {
        self.sample_time
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let h = self.sample_time;
        let f = |s: &[f64]| self.system.derivative(s, u);
        let k1 = f(x);
        let k2 = f(&axpy(x, h / 2.0, &k1));
        let k3 = f(&axpy(x, h / 2.0, &k2));
        let k4 = f(&axpy(x, h, &k3));
        (0..x.len())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.system.output(x, u)
    }
}
