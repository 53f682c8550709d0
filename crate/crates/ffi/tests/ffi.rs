use std::ffi::{CStr, CString};
use std::ptr;

use radgrip::log::{serialize_event, SensorEvent};
use radgrip::mhe::run_events;
use radgrip::simgen::{preset, run_scenario};
use radgrip::VehicleConfig;
use radgrip_ffi::*;

fn new_estimator(cfg: Option<&str>) -> (RgStatus, *mut RgEstimator) {
    let text = cfg.map(|s| CString::new(s).unwrap());
    let mut h = ptr::null_mut();
    let s = unsafe { rg_estimator_new(text.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut h) };
    (s, h)
}

fn drain(h: *mut RgEstimator) -> Vec<RgEstimate> {
    let mut out = Vec::new();
    let mut buf = vec![
        RgEstimate {
            t: 0.0,
            vx: 0.0,
            vy: 0.0,
            r: 0.0,
            bx: 0.0,
            by: 0.0,
            br: 0.0,
            alpha_f: 0.0,
            alpha_r: 0.0,
            Fyf: 0.0,
            Fyr: 0.0,
            BCD_f: 0.0,
            BCD_r: 0.0,
            beta: 0.0,
        };
        64
    ];
    loop {
        let mut n = 0;
        assert_eq!(unsafe { rg_estimator_poll(h, buf.as_mut_ptr(), buf.len(), &mut n) }, RgStatus::Ok);
        if n == 0 {
            return out;
        }
        out.extend_from_slice(&buf[..n]);
    }
}

fn same(a: f64, b: Option<f64>) -> bool {
    match b {
        Some(b) => a == b,
        None => a.is_nan(),
    }
}

#[test]
fn replay_through_the_c_api_matches_the_library() {
    // no wall-clock cap, so parallel test load cannot change the iterates
    let mut cfg = VehicleConfig::default();
    cfg.solver.max_time = 60.0;
    let run = run_scenario(&preset("dlc65", 3, &cfg).unwrap(), &cfg).unwrap();
    let events: Vec<SensorEvent> = run.events.into_iter().filter(|e| e.arrival_time() < 6.0).collect();
    let lib = run_events(&events, &cfg, None).unwrap();

    let (s, h) = new_estimator(Some(&cfg.to_toml_string()));
    assert_eq!(s, RgStatus::Ok);
    for e in &events {
        let status = match e {
            SensorEvent::Imu(i) => unsafe { rg_estimator_push_imu(h, i.t, i.ax, i.ay, i.r) },
            SensorEvent::Radar(scan) => {
                let pts: Vec<RgRadarPoint> = scan
                    .points
                    .iter()
                    .map(|p| RgRadarPoint {
                        range: p.range,
                        azimuth: p.azimuth,
                        elevation: p.elevation,
                        doppler: p.doppler,
                        snr: p.snr,
                    })
                    .collect();
                unsafe {
                    rg_estimator_push_radar(h, scan.radar_id, scan.t_capture, scan.t_receive, pts.as_ptr(), pts.len())
                }
            }
            other => {
                let line = CString::new(serialize_event(other)).unwrap();
                unsafe { rg_estimator_push_record(h, line.as_ptr()) }
            }
        };
        assert_eq!(status, RgStatus::Ok);
    }
    assert_eq!(unsafe { rg_estimator_finish(h) }, RgStatus::Ok);
    let rows = drain(h);
    assert_eq!(rows.len(), lib.rows.len());
    for (c, r) in rows.iter().zip(&lib.rows) {
        assert_eq!((c.t, c.vx, c.vy, c.r), (r.t, r.vx, r.vy, r.r));
        assert!(same(c.alpha_f, r.alpha_f) && same(c.Fyr, r.Fyr) && same(c.beta, r.beta));
    }
    let mut p = [0.0; 12];
    assert_eq!(unsafe { rg_estimator_params(h, p.as_mut_ptr()) }, RgStatus::Ok);
    assert_eq!(p, lib.params.to_array());
    unsafe { rg_estimator_free(h) };
}

#[test]
fn bad_config_is_rejected_with_a_message() {
    let (s, h) = new_estimator(Some("m = -1.0"));
    assert_eq!(s, RgStatus::Config);
    assert!(h.is_null());
    let msg = unsafe { CStr::from_ptr(rg_last_error()) }.to_str().unwrap().to_string();
    assert!(msg.contains('m'), "{msg}");
}

#[test]
fn malformed_record_is_a_parse_error() {
    let (_, h) = new_estimator(None);
    let line = CString::new("{\"type\": \"imu\"}").unwrap();
    assert_eq!(unsafe { rg_estimator_push_record(h, line.as_ptr()) }, RgStatus::Parse);
    unsafe { rg_estimator_free(h) };
}

#[test]
fn null_arguments_are_caught() {
    let (_, h) = new_estimator(None);
    let mut n = 0;
    assert_eq!(unsafe { rg_estimator_new(ptr::null(), ptr::null_mut()) }, RgStatus::NullPointer);
    assert_eq!(unsafe { rg_estimator_pending(h, ptr::null_mut()) }, RgStatus::NullPointer);
    assert_eq!(unsafe { rg_estimator_poll(h, ptr::null_mut(), 4, &mut n) }, RgStatus::NullPointer);
    assert_eq!(unsafe { rg_estimator_poll(h, ptr::null_mut(), 0, &mut n) }, RgStatus::Ok);
    assert_eq!(unsafe { rg_estimator_push_radar(h, 0, 0.0, 0.1, ptr::null(), 3) }, RgStatus::NullPointer);
    assert_eq!(unsafe { rg_estimator_push_radar(h, 0, 0.2, 0.1, ptr::null(), 0) }, RgStatus::InvalidArgument);
    unsafe {
        rg_estimator_free(h);
        rg_estimator_free(ptr::null_mut());
    }
}

#[test]
fn params_can_be_set_only_before_data() {
    let (_, h) = new_estimator(None);
    let p = radgrip::config::nominal_tires().to_array();
    assert_eq!(unsafe { rg_estimator_set_params(h, p.as_ptr()) }, RgStatus::Ok);
    assert_eq!(unsafe { rg_estimator_push_imu(h, 0.0, 0.0, 0.0, 0.0) }, RgStatus::Ok);
    assert_eq!(unsafe { rg_estimator_set_params(h, p.as_ptr()) }, RgStatus::InvalidArgument);
    unsafe { rg_estimator_free(h) };
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/radgrip.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compiles the header as C when a compiler is on the path.
#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"radgrip.h\"\nint main(void) { RgEstimator *h = 0; return rg_estimator_new(0, &h) == RG_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output();
    match out {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler found, skipped"),
    }
}
