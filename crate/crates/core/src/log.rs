//! JSONL sensor log: one event per line.
//!
//! ```text
//! {"type":"imu","t":0.005,"ax":0.01,"ay":-0.02,"r":0.001}
//! {"type":"steering","t":0.01,"delta":0.0}
//! {"type":"radar","radar_id":0,"t_capture":1.0,"t_receive":1.09,"points":[[12.0,0.1,0.0,-3.2,22.5]]}
//! {"type":"ref_vel","t":0.01,"vx_ref":0.0,"vy_ref":0.0}
//! ```
//!
//! Radar points are `[range, azimuth, elevation, doppler, snr]`. IMU records
//! may carry the optional out-of-plane channels `az`, `wx`, `wy` used by the
//! standstill attitude filter; when absent the vehicle is taken as level.

use std::io::{BufRead, Write};

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::types::{RadarPoint, RadarScan};

#[derive(Debug, Clone, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub r: f64,
    pub az: Option<f64>,
    pub wx: Option<f64>,
    pub wy: Option<f64>,
}

impl ImuSample {
    pub fn planar(t: f64, ax: f64, ay: f64, r: f64) -> Self {
        Self {
            t,
            ax,
            ay,
            r,
            az: None,
            wx: None,
            wy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorEvent {
    Imu(ImuSample),
    Steering { t: f64, delta: f64 },
    Radar(RadarScan),
    ReferenceVelocity { t: f64, vx_ref: f64, vy_ref: f64 },
}

impl SensorEvent {
    /// Time at which the event becomes available to the estimator.
    pub fn arrival_time(&self) -> f64 {
        match self {
            SensorEvent::Imu(s) => s.t,
            SensorEvent::Steering { t, .. } => *t,
            SensorEvent::Radar(scan) => scan.t_receive,
            SensorEvent::ReferenceVelocity { t, .. } => *t,
        }
    }

    /// Time at which the measured quantity was valid.
    pub fn measurement_time(&self) -> f64 {
        match self {
            SensorEvent::Radar(scan) => scan.t_capture,
            other => other.arrival_time(),
        }
    }

    /// Tie-break rank for events sharing an arrival time.
    pub fn order_rank(&self) -> u8 {
        match self {
            SensorEvent::Imu(_) => 0,
            SensorEvent::Steering { .. } => 1,
            SensorEvent::Radar(_) => 2,
            SensorEvent::ReferenceVelocity { .. } => 3,
        }
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Schema(format!("missing field `{name}`")))
}

fn number(obj: &Map<String, Value>, name: &str) -> Result<f64> {
    let v = field(obj, name)?
        .as_f64()
        .ok_or_else(|| Error::Schema(format!("field `{name}` must be a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range(name.to_string()))
    }
}

fn optional_number(obj: &Map<String, Value>, name: &str) -> Result<Option<f64>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => number(obj, name).map(Some),
    }
}

/// Decodes one log record. Unknown fields are ignored.
pub fn parse_event(line: &str) -> Result<SensorEvent> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Schema("record must be a JSON object".into()))?;
    let kind = field(obj, "type")?
        .as_str()
        .ok_or_else(|| Error::Schema("field `type` must be a string".into()))?;
    match kind {
        "imu" => Ok(SensorEvent::Imu(ImuSample {
            t: number(obj, "t")?,
            ax: number(obj, "ax")?,
            ay: number(obj, "ay")?,
            r: number(obj, "r")?,
            az: optional_number(obj, "az")?,
            wx: optional_number(obj, "wx")?,
            wy: optional_number(obj, "wy")?,
        })),
        "steering" => Ok(SensorEvent::Steering {
            t: number(obj, "t")?,
            delta: number(obj, "delta")?,
        }),
        "ref_vel" => Ok(SensorEvent::ReferenceVelocity {
            t: number(obj, "t")?,
            vx_ref: number(obj, "vx_ref")?,
            vy_ref: number(obj, "vy_ref")?,
        }),
        "radar" => {
            let id = field(obj, "radar_id")?
                .as_u64()
                .ok_or_else(|| Error::Schema("field `radar_id` must be a non-negative integer".into()))?;
            let t_capture = number(obj, "t_capture")?;
            let t_receive = number(obj, "t_receive")?;
            if t_receive < t_capture {
                return Err(Error::Range("t_receive".into()));
            }
            let raw = field(obj, "points")?
                .as_array()
                .ok_or_else(|| Error::Schema("field `points` must be an array".into()))?;
            let mut points = Vec::with_capacity(raw.len());
            for (i, p) in raw.iter().enumerate() {
                let arr = p
                    .as_array()
                    .filter(|a| a.len() == 5)
                    .ok_or_else(|| Error::Schema(format!("points[{i}] must be a 5-element array")))?;
                let mut vals = [0.0; 5];
                for (k, v) in arr.iter().enumerate() {
                    let x = v
                        .as_f64()
                        .ok_or_else(|| Error::Schema(format!("points[{i}][{k}] must be a number")))?;
                    if !x.is_finite() {
                        return Err(Error::Range(format!("points[{i}][{k}]")));
                    }
                    vals[k] = x;
                }
                if vals[0] < 0.0 {
                    return Err(Error::Range(format!("points[{i}][0]")));
                }
                points.push(RadarPoint::from_array(vals));
            }
            Ok(SensorEvent::Radar(RadarScan {
                radar_id: id as usize,
                t_capture,
                t_receive,
                points,
            }))
        }
        other => Err(Error::Schema(format!("unknown event type `{other}`"))),
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Encodes one event as a single JSON line (no trailing newline).
pub fn serialize_event(event: &SensorEvent) -> String {
    let mut obj = Map::new();
    match event {
        SensorEvent::Imu(s) => {
            obj.insert("type".into(), "imu".into());
            obj.insert("t".into(), num(s.t));
            obj.insert("ax".into(), num(s.ax));
            obj.insert("ay".into(), num(s.ay));
            obj.insert("r".into(), num(s.r));
            for (name, v) in [("az", s.az), ("wx", s.wx), ("wy", s.wy)] {
                if let Some(v) = v {
                    obj.insert(name.into(), num(v));
                }
            }
        }
        SensorEvent::Steering { t, delta } => {
            obj.insert("type".into(), "steering".into());
            obj.insert("t".into(), num(*t));
            obj.insert("delta".into(), num(*delta));
        }
        SensorEvent::ReferenceVelocity { t, vx_ref, vy_ref } => {
            obj.insert("type".into(), "ref_vel".into());
            obj.insert("t".into(), num(*t));
            obj.insert("vx_ref".into(), num(*vx_ref));
            obj.insert("vy_ref".into(), num(*vy_ref));
        }
        SensorEvent::Radar(scan) => {
            obj.insert("type".into(), "radar".into());
            obj.insert("radar_id".into(), Value::from(scan.radar_id as u64));
            obj.insert("t_capture".into(), num(scan.t_capture));
            obj.insert("t_receive".into(), num(scan.t_receive));
            let pts = scan
                .points
                .iter()
                .map(|p| Value::Array(p.to_array().iter().map(|v| num(*v)).collect()))
                .collect();
            obj.insert("points".into(), Value::Array(pts));
        }
    }
    Value::Object(obj).to_string()
}

/// Reads a whole log, reporting the 1-based line number of the first bad record.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<SensorEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_event(&line).map_err(|e| e.at_line(i + 1))?);
    }
    Ok(out)
}

pub fn write_log<W: Write>(mut w: W, events: &[SensorEvent]) -> Result<()> {
    for e in events {
        writeln!(w, "{}", serialize_event(e))?;
    }
    Ok(())
}

/// Stable sort into arrival order.
pub fn sort_by_arrival(events: &mut [SensorEvent]) {
    events.sort_by(|a, b| {
        a.arrival_time()
            .total_cmp(&b.arrival_time())
            .then(a.order_rank().cmp(&b.order_rank()))
    });
}
