//! Signal phase and timing: light phase, green-window targeting and the
//! velocity window that the speed planner must respect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{passive_accel, VehicleParams};

/// Extra cycles searched beyond `ceil(k / t_cy)` before declaring a stop.
pub const WINDOW_SEARCH_CYCLES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightState {
    Red,
    Green,
}

impl LightState {
    pub fn as_str(self) -> &'static str {
        match self {
            LightState::Red => "red",
            LightState::Green => "green",
        }
    }
}

/// Fixed-time schedule shared by every light: each cycle starts with red.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalTiming {
    pub red: f64,
    pub green: f64,
}

impl Default for SignalTiming {
    fn default() -> Self {
        Self {
            red: 30.0,
            green: 15.0,
        }
    }
}

impl SignalTiming {
    pub fn new(red: f64, green: f64) -> Result<Self> {
        let t = Self { red, green };
        t.validate()?;
        Ok(t)
    }

    pub fn cycle(&self) -> f64 {
        self.red + self.green
    }

    pub fn validate(&self) -> Result<()> {
        if self.red > 0.0 && self.green > 0.0 && self.cycle().is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("signal timing {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corridor {
    pub light_positions: Vec<f64>,
    pub timing: SignalTiming,
    pub v_min: f64,
    pub v_max: f64,
    pub total_length: f64,
}

impl Default for Corridor {
    fn default() -> Self {
        Self::evenly_spaced(500.0, 5000.0, SignalTiming::default(), 0.0, 20.0)
    }
}

impl Corridor {
    /// Lights every `spacing` metres up to and including `total_length`.
    pub fn evenly_spaced(
        spacing: f64,
        total_length: f64,
        timing: SignalTiming,
        v_min: f64,
        v_max: f64,
    ) -> Self {
        let n = (total_length / spacing + 1e-9).floor() as usize;
        Self {
            light_positions: (1..=n).map(|i| i as f64 * spacing).collect(),
            timing,
            v_min,
            v_max,
            total_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        if !(0.0 <= self.v_min && self.v_min < self.v_max) {
            return Err(Error::InvalidParam(format!(
                "speed limits [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        let mut prev = 0.0;
        for &p in &self.light_positions {
            if !(p > prev && p <= self.total_length) {
                return Err(Error::InvalidParam(format!(
                    "light positions must be strictly increasing in (0, {}]",
                    self.total_length
                )));
            }
            prev = p;
        }
        Ok(())
    }

    /// First light strictly downstream of `s`.
    pub fn next_light(&self, s: f64) -> Option<f64> {
        let idx = self.light_positions.partition_point(|&p| p <= s);
        self.light_positions.get(idx).copied()
    }

    /// Window against the nearest downstream light; unconstrained past the
    /// last one.
    pub fn window_at(&self, k: f64, s: f64) -> Result<SpeedWindow> {
        self.window_at_with_margin(k, s, 0.0)
    }

    /// As [`Corridor::window_at`], with every green shortened by `margin`
    /// seconds at both ends.
    pub fn window_at_with_margin(&self, k: f64, s: f64, margin: f64) -> Result<SpeedWindow> {
        match self.next_light(s) {
            Some(light) => velocity_window_with_margin(k, light - s, self, margin),
            None => Ok(SpeedWindow {
                v_target: self.v_max,
                v_lower: self.v_min,
                v_upper: self.v_max,
                window_index: 0,
                light_state: LightState::Green,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedWindow {
    pub v_target: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    /// Cycle index whose green the window targets (its green ends at
    /// `window_index * t_cy`); 0 when there is no light to time.
    pub window_index: u32,
    pub light_state: LightState,
}

impl SpeedWindow {
    pub fn width(&self) -> f64 {
        self.v_upper - self.v_lower
    }
}

/// Red on the closed interval `[0, t_r]` of each cycle, green on `(t_r, t_cy)`.
pub fn light_phase(k: f64, timing: &SignalTiming) -> LightState {
    let m = k.rem_euclid(timing.cycle());
    if m <= timing.red {
        LightState::Red
    } else {
        LightState::Green
    }
}

/// Smallest integer `K_w` with `K_w * t_cy > k`.
pub fn next_window_index(k: f64, timing: &SignalTiming) -> u32 {
    (k / timing.cycle()).floor() as u32 + 1
}

/// Speed that reaches the light at the start of a reachable green window
/// (or `v_max` when the current green can be made).
pub fn target_velocity(k: f64, d_ia: f64, corridor: &Corridor) -> Result<f64> {
    velocity_window(k, d_ia, corridor).map(|w| w.v_target)
}

/// Interval of constant speeds that arrive at the light during a green.
///
/// The first candidate follows the red / green-feasible / green-infeasible
/// branches; if its lower bound exceeds `v_max` the next green is tried, up
/// to `ceil(k / t_cy) + 5` cycles.
pub fn velocity_window(k: f64, d_ia: f64, corridor: &Corridor) -> Result<SpeedWindow> {
    velocity_window_with_margin(k, d_ia, corridor, 0.0)
}

/// Window whose endpoints arrive `margin` seconds inside the green, so that
/// holding either endpoint speed does not land on a phase switch.
pub fn velocity_window_with_margin(
    k: f64,
    d_ia: f64,
    corridor: &Corridor,
    margin: f64,
) -> Result<SpeedWindow> {
    if !(margin >= 0.0 && 2.0 * margin < corridor.timing.green) {
        return Err(Error::InvalidParam(format!(
            "arrival margin {margin} does not fit in the green"
        )));
    }
    if !(k.is_finite() && d_ia.is_finite()) {
        return Err(Error::NonFinite("window inputs"));
    }
    if d_ia <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "distance to light must be positive, got {d_ia}"
        )));
    }
    let timing = &corridor.timing;
    let cy = timing.cycle();
    let phase = light_phase(k, timing);
    let kw = next_window_index(k, timing);
    let kw_max = (k / cy).ceil() as u32 + WINDOW_SEARCH_CYCLES;

    // green j: [start, end] in absolute time; `end_index * cy == end`
    let mut end_index = kw;
    let mut start = match phase {
        LightState::Red => kw as f64 * cy - timing.green,
        LightState::Green => kw as f64 * cy - timing.green,
    };
    loop {
        if end_index > kw_max {
            return Err(Error::InfeasibleWindow {
                searched: end_index - kw,
            });
        }
        let end = end_index as f64 * cy;
        let until_end = end - margin - k;
        if until_end <= 0.0 {
            // the rest of the current green is inside the margin
            start = end_index as f64 * cy + timing.red;
            end_index += 1;
            continue;
        }
        let v_lo = d_ia / until_end;
        let until_start = start + margin - k;
        // at the red/green boundary the window is already open
        let v_hi = if until_start > 0.0 {
            d_ia / until_start
        } else {
            f64::INFINITY
        };
        if v_hi < corridor.v_min {
            // later greens only need slower speeds
            return Err(Error::InfeasibleWindow {
                searched: end_index - kw,
            });
        }
        // v_lo itself arrives on the closed-red boundary, so it must leave room
        if v_lo < corridor.v_max {
            let v_target = v_hi.clamp(corridor.v_min, corridor.v_max);
            let v_lower = v_lo.clamp(corridor.v_min, v_target);
            return Ok(SpeedWindow {
                v_target,
                v_lower,
                v_upper: v_target,
                window_index: end_index,
                light_state: phase,
            });
        }
        start = end_index as f64 * cy + timing.red;
        end_index += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub lower: f64,
    pub upper: f64,
    /// The window cannot be met within `[u_min, u_max]`; the bounds are the
    /// nearest feasible singleton.
    pub window_violation: bool,
}

/// Control range that lands the next velocity inside the window.
pub fn control_bounds(
    window: &SpeedWindow,
    v_prev: f64,
    params: &VehicleParams,
    dt: f64,
) -> ControlBounds {
    bounds_for(window.v_lower, window.v_upper, v_prev, params, dt)
}

pub(crate) fn bounds_for(
    v_lower: f64,
    v_upper: f64,
    v_prev: f64,
    params: &VehicleParams,
    dt: f64,
) -> ControlBounds {
    let p_hat = passive_accel(params, v_prev);
    let u_l = (v_lower - v_prev) / dt - p_hat;
    let u_u = (v_upper - v_prev) / dt - p_hat;
    if u_l > params.u_max {
        return ControlBounds {
            lower: params.u_max,
            upper: params.u_max,
            window_violation: true,
        };
    }
    if u_u < params.u_min {
        return ControlBounds {
            lower: params.u_min,
            upper: params.u_min,
            window_violation: true,
        };
    }
    ControlBounds {
        lower: u_l.max(params.u_min),
        upper: u_u.min(params.u_max),
        window_violation: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> Corridor {
        Corridor::default()
    }

    #[test]
    fn phases() {
        let t = SignalTiming::default();
        assert_eq!(light_phase(10.0, &t), LightState::Red);
        assert_eq!(light_phase(40.0, &t), LightState::Green);
        assert_eq!(light_phase(45.0, &t), LightState::Red);
        assert_eq!(light_phase(30.0, &t), LightState::Red);
        assert_eq!(light_phase(0.0, &t), LightState::Red);
    }

    #[test]
    fn window_indices() {
        let t = SignalTiming::default();
        assert_eq!(next_window_index(0.0, &t), 1);
        assert_eq!(next_window_index(44.9, &t), 1);
        assert_eq!(next_window_index(45.0, &t), 2);
        assert_eq!(next_window_index(100.0, &t), 3);
    }

    #[test]
    fn target_velocity_branches() {
        let c = corridor();
        assert!((target_velocity(0.0, 300.0, &c).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(target_velocity(35.0, 100.0, &c).unwrap(), 20.0);
        assert!((target_velocity(35.0, 400.0, &c).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn window_branches() {
        let c = corridor();
        let w = velocity_window(0.0, 300.0, &c).unwrap();
        assert!((w.v_lower - 300.0 / 45.0).abs() < 1e-12);
        assert!((w.v_upper - 10.0).abs() < 1e-12);
        assert_eq!(w.light_state, LightState::Red);

        let w = velocity_window(35.0, 100.0, &c).unwrap();
        assert!((w.v_lower - 10.0).abs() < 1e-12);
        assert_eq!(w.v_upper, 20.0);

        let w = velocity_window(35.0, 400.0, &c).unwrap();
        assert!((w.v_lower - 400.0 / 55.0).abs() < 1e-12);
        assert!((w.v_upper - 10.0).abs() < 1e-12);
        assert_eq!(w.window_index, 2);
    }

    #[test]
    fn red_boundary_opens_window() {
        // mod == t_r is still red but the green starts now
        let c = corridor();
        let w = velocity_window(30.0, 50.0, &c).unwrap();
        assert_eq!(w.light_state, LightState::Red);
        assert_eq!(w.v_upper, c.v_max);
        assert!((w.v_lower - 50.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn search_moves_to_later_green() {
        // 20 m/s cannot cover 1000 m in 15 s of the first green
        let c = corridor();
        let w = velocity_window(0.0, 1000.0, &c).unwrap();
        assert!(w.v_lower <= c.v_max);
        assert_eq!(w.window_index, 2);
    }

    #[test]
    fn stop_required_when_min_speed_binds() {
        let c = Corridor {
            v_min: 5.0,
            ..corridor()
        };
        // at k=0, 10 m away, green starts at t=30: 0.33 m/s < v_min
        assert!(matches!(
            velocity_window(0.0, 10.0, &c),
            Err(Error::InfeasibleWindow { .. })
        ));
    }

    #[test]
    fn bounds_examples() {
        let p = VehicleParams::default();
        let w = SpeedWindow {
            v_target: 10.0,
            v_lower: 300.0 / 45.0,
            v_upper: 10.0,
            window_index: 1,
            light_state: LightState::Red,
        };
        let raw_l = (w.v_lower - 10.0) / 0.5 - passive_accel(&p, 10.0);
        assert!((raw_l - (-6.5475)).abs() < 1e-3);
        let b = control_bounds(&w, 10.0, &p, 0.5);
        assert_eq!(b.lower, -3.0);
        assert!((b.upper - 0.11915).abs() < 1e-5);
        assert!(!b.window_violation);

        let flat = VehicleParams {
            rolling_coeff: 0.0,
            drag_coeff: 0.0,
            ..p
        };
        let hold = SpeedWindow {
            v_target: 8.0,
            v_lower: 8.0,
            v_upper: 8.0,
            ..w
        };
        let b = control_bounds(&hold, 8.0, &flat, 0.5);
        assert_eq!((b.lower, b.upper), (0.0, 0.0));

        let far = SpeedWindow {
            v_target: 20.0,
            v_lower: 15.0,
            v_upper: 20.0,
            ..w
        };
        let b = control_bounds(&far, 10.0, &p, 0.5);
        assert_eq!((b.lower, b.upper), (p.u_max, p.u_max));
        assert!(b.window_violation);
    }

    #[test]
    fn next_light_lookup() {
        let c = corridor();
        assert_eq!(c.next_light(0.0), Some(500.0));
        assert_eq!(c.next_light(500.0), Some(1000.0));
        assert_eq!(c.next_light(5000.0), None);
        assert_eq!(c.light_positions.len(), 10);
    }

    proptest::proptest! {
        #[test]
        fn phase_is_periodic(k in 0.0f64..1000.0) {
            let t = SignalTiming::default();
            proptest::prop_assert_eq!(light_phase(k, &t), light_phase(k + t.cycle(), &t));
        }

        #[test]
        fn window_nesting(k in 0.0f64..500.0, d in 1.0f64..600.0) {
            let c = corridor();
            if let Ok(w) = velocity_window(k, d, &c) {
                proptest::prop_assert!(c.v_min <= w.v_lower);
                proptest::prop_assert!(w.v_lower <= w.v_target);
                proptest::prop_assert!(w.v_target <= c.v_max);
                proptest::prop_assert_eq!(w.v_upper, w.v_target);
            }
        }
    }
}
