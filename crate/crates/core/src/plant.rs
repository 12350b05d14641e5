//! First-order thermal co-simulation of the conditioned zones: a PTR sensor
//! per zone with fault modes, a duct/vent actuator with fault modes, and a
//! stochastic outside temperature shared by all zones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("unknown zone {0}")]
    UnknownZone(usize),
    #[error("invalid fault mode: {0}")]
    BadFault(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantCoefficients {
    /// Healthy full-airflow conditioning rate.
    pub r_nom_c_per_min: f64,
    pub k_env_per_min: f64,
    /// Bound of one outside random-walk increment.
    pub walk_step_c: f64,
    pub outside_min_c: f64,
    pub outside_max_c: f64,
    pub outside_init_c: f64,
    pub step_ms: u64,
}

impl Default for PlantCoefficients {
    fn default() -> Self {
        PlantCoefficients {
            r_nom_c_per_min: 0.3,
            k_env_per_min: 0.02,
            walk_step_c: 0.05,
            outside_min_c: 10.0,
            outside_max_c: 35.0,
            outside_init_c: 20.0,
            step_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Heat,
    Cool,
    Idle,
}

impl Mode {
    pub fn direction(self) -> f64 {
        match self {
            Mode::Heat => 1.0,
            Mode::Cool => -1.0,
            Mode::Idle => 0.0,
        }
    }

    /// Decodes the integer command used on FB ports (1 heat, -1 cool, 0 idle).
    pub fn from_command(cmd: i64) -> Mode {
        match cmd.signum() {
            1 => Mode::Heat,
            -1 => Mode::Cool,
            _ => Mode::Idle,
        }
    }

    pub fn command(self) -> i64 {
        self.direction() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    /// The electronics report this value regardless of the zone.
    Constant(f64),
    /// Readings are the true value times this factor.
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensorFaultMode {
    #[default]
    None,
    OutOfTolerance { offset_f: f64 },
    ElectronicsBias { bias: BiasKind },
    Intermittent { noise_amp_f: f64, dropout_prob: f64 },
}

impl SensorFaultMode {
    pub fn check(&self) -> Result<(), PlantError> {
        match *self {
            SensorFaultMode::Intermittent { noise_amp_f, dropout_prob } => {
                if !noise_amp_f.is_finite() || noise_amp_f <= 0.0 {
                    return Err(PlantError::BadFault("intermittent noise amplitude must be positive".into()));
                }
                if !(0.0..1.0).contains(&dropout_prob) {
                    return Err(PlantError::BadFault("dropout probability must lie in [0, 1)".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActuatorFaultMode {
    #[default]
    None,
    /// Iced-up duct: no air moves whatever the vent does.
    BlockedDuct,
    /// The vent works but its position sensor is offset.
    MisreportedVent { pos_offset: f64 },
    /// The vent stays at a fixed position.
    StuckVent { pos: f64 },
}

impl ActuatorFaultMode {
    pub fn check(&self) -> Result<(), PlantError> {
        match *self {
            ActuatorFaultMode::StuckVent { pos } if !pos.is_finite() => {
                Err(PlantError::BadFault("stuck vent position must be finite".into()))
            }
            ActuatorFaultMode::MisreportedVent { pos_offset } if !pos_offset.is_finite() => {
                Err(PlantError::BadFault("vent offset must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Zone {
    pub temp_c: f64,
    pub setpoint_c: f64,
    pub mode: Mode,
    /// Actual airflow fraction.
    pub airflow: f64,
    pub reported_vent_pos: f64,
    pub sensor_fault: SensorFaultMode,
    pub actuator_fault: ActuatorFaultMode,
    #[serde(skip)]
    last_good_f: Option<f64>,
}

impl Zone {
    pub fn new(temp_c: f64) -> Self {
        Zone {
            temp_c,
            setpoint_c: 21.0,
            mode: Mode::Idle,
            airflow: 0.0,
            reported_vent_pos: 0.0,
            sensor_fault: SensorFaultMode::None,
            actuator_fault: ActuatorFaultMode::None,
            last_good_f: None,
        }
    }

    fn update_airflow(&mut self) {
        let commanded = if self.mode == Mode::Idle { 0.0 } else { 1.0 };
        let (actual, reported) = match self.actuator_fault {
            ActuatorFaultMode::None => (commanded, commanded),
            ActuatorFaultMode::BlockedDuct => (0.0, commanded),
            ActuatorFaultMode::MisreportedVent { pos_offset } => (commanded, commanded + pos_offset),
            ActuatorFaultMode::StuckVent { pos } => (pos, pos),
        };
        self.airflow = actual.clamp(0.0, 1.0);
        self.reported_vent_pos = reported.clamp(0.0, 1.0);
    }
}

pub fn c_to_f(c: f64) -> f64 {
    c * 9.0 / 5.0 + 32.0
}

pub fn f_to_c(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0
}

/// One sensor reading in °F for a zone whose true temperature is `zone_c`.
/// `last_good` is the most recent reading not produced by a dropout.
pub fn read_sensor_f(
    zone_c: f64,
    fault: &SensorFaultMode,
    last_good: &mut Option<f64>,
    rng: &mut impl Rng,
) -> f64 {
    let truth = c_to_f(zone_c);
    let value = match *fault {
        SensorFaultMode::None => truth,
        SensorFaultMode::OutOfTolerance { offset_f } => truth + offset_f,
        SensorFaultMode::ElectronicsBias { bias: BiasKind::Constant(v) } => v,
        SensorFaultMode::ElectronicsBias { bias: BiasKind::Scale(k) } => truth * k,
        SensorFaultMode::Intermittent { noise_amp_f, dropout_prob } => {
            let dropout = rng.gen::<f64>() < dropout_prob;
            let noise = rng.gen_range(-noise_amp_f..=noise_amp_f);
            if dropout {
                return last_good.unwrap_or(truth) + noise * 5.0;
            }
            truth + noise
        }
    };
    *last_good = Some(value);
    value
}

/// All zones plus the shared environment.
#[derive(Debug, Clone)]
pub struct Plant {
    pub coefficients: PlantCoefficients,
    pub outside_c: f64,
    pub zones: Vec<Zone>,
    pub time_ms: u64,
    seed: u64,
    env_rng: ChaCha8Rng,
    sensor_rng: ChaCha8Rng,
}

impl Plant {
    /// Zones start at the given temperatures. Environment and sensor noise
    /// use separate streams so sampling rate does not perturb the weather.
    pub fn new(coefficients: PlantCoefficients, zone_temps_c: &[f64], seed: u64) -> Self {
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
        env_rng.set_stream(1);
        let mut sensor_rng = ChaCha8Rng::seed_from_u64(seed);
        sensor_rng.set_stream(2);
        let outside_c = coefficients.outside_init_c.clamp(coefficients.outside_min_c, coefficients.outside_max_c);
        Plant {
            coefficients,
            outside_c,
            zones: zone_temps_c.iter().map(|&t| Zone::new(t)).collect(),
            time_ms: 0,
            seed,
            env_rng,
            sensor_rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn zone(&self, z: usize) -> Result<&Zone, PlantError> {
        self.zones.get(z).ok_or(PlantError::UnknownZone(z))
    }

    pub fn zone_mut(&mut self, z: usize) -> Result<&mut Zone, PlantError> {
        self.zones.get_mut(z).ok_or(PlantError::UnknownZone(z))
    }

    /// Advances the thermal state by `dt_ms`. Zones integrate against the
    /// current outside temperature, then the outside takes one walk step.
    pub fn step(&mut self, dt_ms: u64) {
        if dt_ms == 0 {
            return;
        }
        let c = &self.coefficients;
        let dt_min = dt_ms as f64 / 60_000.0;
        for zone in &mut self.zones {
            zone.update_airflow();
            let drift = c.k_env_per_min * (self.outside_c - zone.temp_c);
            let conditioning = c.r_nom_c_per_min * zone.mode.direction() * zone.airflow;
            zone.temp_c += dt_min * (drift + conditioning);
        }
        if c.walk_step_c > 0.0 {
            let delta = self.env_rng.gen_range(-c.walk_step_c..=c.walk_step_c);
            self.outside_c = (self.outside_c + delta).clamp(c.outside_min_c, c.outside_max_c);
        }
        self.time_ms += dt_ms;
    }

    pub fn read_sensor_f(&mut self, z: usize) -> Result<f64, PlantError> {
        let zone = self.zones.get_mut(z).ok_or(PlantError::UnknownZone(z))?;
        Ok(read_sensor_f(zone.temp_c, &zone.sensor_fault, &mut zone.last_good_f, &mut self.sensor_rng))
    }

    pub fn set_mode(&mut self, z: usize, mode: Mode) -> Result<(), PlantError> {
        let zone = self.zone_mut(z)?;
        zone.mode = mode;
        zone.update_airflow();
        Ok(())
    }

    pub fn set_sensor_fault(&mut self, z: usize, mode: SensorFaultMode) -> Result<(), PlantError> {
        mode.check()?;
        self.zone_mut(z)?.sensor_fault = mode;
        Ok(())
    }

    pub fn set_actuator_fault(&mut self, z: usize, mode: ActuatorFaultMode) -> Result<(), PlantError> {
        mode.check()?;
        let zone = self.zone_mut(z)?;
        zone.actuator_fault = mode;
        zone.update_airflow();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(zone_c: f64) -> Plant {
        let coeffs = PlantCoefficients { walk_step_c: 0.0, outside_init_c: zone_c, ..Default::default() };
        Plant::new(coeffs, &[zone_c], 1)
    }

    #[test]
    fn heat_for_one_minute_gains_nominal_rate() {
        let mut p = still(20.0);
        p.set_mode(0, Mode::Heat).unwrap();
        p.step(60_000);
        assert!((p.zones[0].temp_c - 20.3).abs() < 1e-6);
    }

    #[test]
    fn blocked_duct_stops_conditioning() {
        let mut p = still(20.0);
        p.set_mode(0, Mode::Heat).unwrap();
        p.set_actuator_fault(0, ActuatorFaultMode::BlockedDuct).unwrap();
        p.step(60_000);
        assert_eq!(p.zones[0].temp_c, 20.0);
        assert_eq!(p.zones[0].reported_vent_pos, 1.0);
    }

    #[test]
    fn idle_at_equilibrium_holds() {
        let mut p = still(18.5);
        for _ in 0..100 {
            p.step(1000);
        }
        assert_eq!(p.zones[0].temp_c, 18.5);
    }

    #[test]
    fn sensor_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut last = None;
        assert_eq!(read_sensor_f(0.0, &SensorFaultMode::None, &mut last, &mut rng), 32.0);
        let oot = SensorFaultMode::OutOfTolerance { offset_f: 10.0 };
        assert_eq!(read_sensor_f(20.0, &oot, &mut last, &mut rng), 20.0 * 9.0 / 5.0 + 32.0 + 10.0);
        let c = SensorFaultMode::ElectronicsBias { bias: BiasKind::Constant(55.0) };
        assert_eq!(read_sensor_f(20.0, &c, &mut last, &mut rng), 55.0);
    }

    #[test]
    fn intermittent_readings_vary_widely() {
        let mut p = still(20.0);
        p.set_sensor_fault(0, SensorFaultMode::Intermittent { noise_amp_f: 20.0, dropout_prob: 0.3 }).unwrap();
        let xs: Vec<f64> = (0..100).map(|_| p.read_sensor_f(0).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(var.sqrt() > 5.0, "stddev {}", var.sqrt());
    }

    #[test]
    fn fault_parameters_are_checked() {
        let mut p = still(20.0);
        let bad = SensorFaultMode::Intermittent { noise_amp_f: 0.0, dropout_prob: 0.1 };
        assert!(matches!(p.set_sensor_fault(0, bad), Err(PlantError::BadFault(_))));
        let bad = SensorFaultMode::Intermittent { noise_amp_f: 1.0, dropout_prob: 1.0 };
        assert!(p.set_sensor_fault(0, bad).is_err());
        assert_eq!(p.set_mode(3, Mode::Heat), Err(PlantError::UnknownZone(3)));
    }

    #[test]
    fn stuck_vent_airflow_is_clamped() {
        let mut p = still(20.0);
        p.set_actuator_fault(0, ActuatorFaultMode::StuckVent { pos: 1.7 }).unwrap();
        assert_eq!(p.zones[0].airflow, 1.0);
    }

    #[test]
    fn outside_stays_in_band() {
        let coeffs = PlantCoefficients { outside_min_c: 19.0, outside_max_c: 21.0, walk_step_c: 0.5, ..Default::default() };
        let mut p = Plant::new(coeffs, &[20.0], 9);
        for _ in 0..10_000 {
            p.step(1000);
            assert!((19.0..=21.0).contains(&p.outside_c));
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let run = |seed| {
            let mut p = Plant::new(PlantCoefficients::default(), &[20.0, 22.0], seed);
            p.set_sensor_fault(1, SensorFaultMode::Intermittent { noise_amp_f: 3.0, dropout_prob: 0.2 }).unwrap();
            (0..500).map(|_| {
                p.step(1000);
                (p.outside_c, p.read_sensor_f(1).unwrap())
            }).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }
}
