//! Per-example update rules. Dot products accumulate in f64; weights are stored as f32.

use crate::vbuffer::VBuffer;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `w += scale * x`, rounding each updated weight to f32.
#[inline]
fn axpy(w: &mut [f32], scale: f64, x: &VBuffer<f32>) {
    match x.indices() {
        Some(idx) => {
            for (&i, &v) in idx.iter().zip(x.values()) {
                let wi = &mut w[i as usize];
                *wi = (*wi as f64 + scale * v as f64) as f32;
            }
        }
        None => {
            for (wi, &v) in w.iter_mut().zip(x.values()) {
                *wi = (*wi as f64 + scale * v as f64) as f32;
            }
        }
    }
}

/// Weights and bias of a linear model under training.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearState {
    pub weights: Vec<f32>,
    pub bias: f32,
}

impl LinearState {
    pub fn zeros(dim: usize) -> Self {
        LinearState {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    #[inline]
    pub fn score(&self, x: &VBuffer<f32>) -> f64 {
        x.dot(&self.weights) + self.bias as f64
    }

    #[inline]
    fn add(&mut self, scale: f64, x: &VBuffer<f32>) {
        axpy(&mut self.weights, scale, x);
        self.bias = (self.bias as f64 + scale) as f32;
    }
}

/// Perceptron with running averages kept lazily: a mistake at step `c` adding `d`
/// to the weights also adds `c * d` to `acc`, so the mean of the weights after each of
/// the `t` steps so far is `((t + 1) * w - acc) / t`.
#[derive(Clone, Debug)]
pub struct PerceptronState {
    current: LinearState,
    acc: Vec<f64>,
    acc_bias: f64,
    steps: u64,
    rate: f64,
}

impl PerceptronState {
    pub fn new(dim: usize, learning_rate: f32) -> Self {
        PerceptronState {
            current: LinearState::zeros(dim),
            acc: vec![0.0; dim],
            acc_bias: 0.0,
            steps: 0,
            rate: learning_rate as f64,
        }
    }

    /// One example with label `positive`. Returns true when the weights changed.
    pub fn step(&mut self, x: &VBuffer<f32>, positive: bool) -> bool {
        self.steps += 1;
        let y = if positive { 1.0 } else { -1.0 };
        if y * self.current.score(x) > 0.0 {
            return false;
        }
        let scale = self.rate * y;
        self.current.add(scale, x);
        let c = self.steps as f64 * scale;
        match x.indices() {
            Some(idx) => {
                for (&i, &v) in idx.iter().zip(x.values()) {
                    self.acc[i as usize] += c * v as f64;
                }
            }
            None => {
                for (a, &v) in self.acc.iter_mut().zip(x.values()) {
                    *a += c * v as f64;
                }
            }
        }
        self.acc_bias += c;
        true
    }

    /// Weights after the most recent step, before averaging.
    pub fn current(&self) -> &LinearState {
        &self.current
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Mean of the weights after each step so far; zeros before any step.
    pub fn averaged(&self) -> LinearState {
        if self.steps == 0 {
            return self.current.clone();
        }
        let t = self.steps as f64;
        let mean = |w: f32, a: f64| (((t + 1.0) * w as f64 - a) / t) as f32;
        LinearState {
            weights: self
                .current
                .weights
                .iter()
                .zip(&self.acc)
                .map(|(&w, &a)| mean(w, a))
                .collect(),
            bias: mean(self.current.bias, self.acc_bias),
        }
    }
}

/// Logistic regression by plain stochastic gradient steps on the log-loss.
#[derive(Clone, Debug)]
pub struct LogisticState {
    pub state: LinearState,
    rate: f64,
}

impl LogisticState {
    pub fn new(dim: usize, learning_rate: f32) -> Self {
        LogisticState {
            state: LinearState::zeros(dim),
            rate: learning_rate as f64,
        }
    }

    pub fn step(&mut self, x: &VBuffer<f32>, positive: bool) {
        let y = if positive { 1.0 } else { 0.0 };
        let p = sigmoid(self.state.score(x));
        self.state.add(self.rate * (y - p), x);
    }
}

/// Least-squares regression by online gradient descent.
#[derive(Clone, Debug)]
pub struct RegressionState {
    pub state: LinearState,
    rate: f64,
}

impl RegressionState {
    pub fn new(dim: usize, learning_rate: f32) -> Self {
        RegressionState {
            state: LinearState::zeros(dim),
            rate: learning_rate as f64,
        }
    }

    pub fn step(&mut self, x: &VBuffer<f32>, y: f64) {
        let err = y - self.state.score(x);
        self.state.add(self.rate * err, x);
    }
}
