//! Adaptive Dormand–Prince 5(4) integrator for autonomous planar systems.

use std::ops::ControlFlow;

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    /// Absolute floor of the error scale. Kept tiny so that solutions decaying
    /// to zero keep relative accuracy.
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-300,
            h_init: 1e-4,
            h_max: 0.05,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub y: Vec<State>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, State) {
        (*self.x.last().unwrap(), *self.y.last().unwrap())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error weights: fifth-order minus embedded fourth-order solution.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Integrate `y' = f(y)` from `x0` towards `x_end` (either direction).
///
/// `observe` sees every accepted node, including the initial one, and may stop
/// the integration early. The returned trajectory contains every node seen.
pub fn integrate<F, O>(
    f: F,
    x0: f64,
    y0: State,
    x_end: f64,
    opts: &OdeOptions,
    mut observe: O,
) -> Trajectory
where
    F: Fn(&State) -> State,
    O: FnMut(f64, &State) -> ControlFlow<()>,
{
    let mut traj = Trajectory::default();
    traj.x.push(x0);
    traj.y.push(y0);
    if observe(x0, &y0).is_break() || x0 == x_end {
        return traj;
    }
    let dir = (x_end - x0).signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = opts.h_init.min(opts.h_max).min((x_end - x0).abs());
    let mut k1 = f(&y);

    for _ in 0..opts.max_steps {
        let remaining = (x_end - x).abs();
        if remaining <= 1e-14 * x_end.abs().max(1.0) {
            break;
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        let k2 = f(&axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&axpy(
            &y,
            hs,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let y_new = axpy(
            &y,
            hs,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(&y_new);

        let mut err: f64 = 0.0;
        for i in 0..2 {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.2;
            if h < 1e-14 {
                break;
            }
            continue;
        }

        if err <= 1.0 {
            x = if last { x_end } else { x + hs };
            y = y_new;
            k1 = k7;
            traj.x.push(x);
            traj.y.push(y);
            if observe(x, &y).is_break() || last {
                break;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * fac).min(opts.h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < 1e-14 {
                break;
            }
        }
    }
    traj
}
