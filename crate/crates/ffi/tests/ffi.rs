use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use diffneuro_ffi::*;

fn last_error() -> String {
    let p = dn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn defaults() -> DnDeviceParams {
    let mut p = DnDeviceParams {
        r_on: 0.0,
        r_off: 0.0,
        v_tp: 0.0,
        v_tn: 0.0,
        alpha_p: 0.0,
        alpha_n: 0.0,
        window_exponent: 0.0,
    };
    assert_eq!(unsafe { dn_device_params_default(&mut p) }, DN_OK);
    p
}

#[test]
fn device_calls_match_the_library() {
    let p = defaults();
    let mut r = 0.0;
    assert_eq!(unsafe { dn_resistance(&p, 1.0, &mut r) }, DN_OK);
    assert!((r - p.r_on).abs() < 1e-6);
    assert_eq!(unsafe { dn_resistance(&p, 0.0, &mut r) }, DN_OK);
    assert!((r - p.r_off).abs() < 1e-6);

    let train = DnPulseTrain {
        amplitude: 0.6,
        pulse_width: 10e-6,
        duty_cycle: 0.5,
        count: 20,
    };
    let mut x = 0.0;
    assert_eq!(unsafe { dn_apply_pulse_train(&p, 0.2, &train, &mut x) }, DN_OK);
    let want = diffneuro::device::apply_pulse_train(
        diffneuro::MemristorState::new(0.2).unwrap(),
        &diffneuro::PulseTrain::new(0.6, 10e-6, 0.5, 20).unwrap(),
        &diffneuro::DeviceParams::default(),
    )
    .unwrap();
    assert_eq!(x, want.x());
}

#[test]
fn errors_carry_codes_and_messages() {
    let p = defaults();
    let mut r = 0.0;
    assert_eq!(unsafe { dn_resistance(ptr::null(), 0.5, &mut r) }, DN_ERR_NULL);
    assert!(last_error().contains("params"));
    assert_eq!(unsafe { dn_resistance(&p, 1.5, &mut r) }, DN_ERR_INVALID_INPUT);
    assert!(!last_error().is_empty());

    let bad = DnDeviceParams { r_on: -1.0, ..p };
    assert_eq!(unsafe { dn_resistance(&bad, 0.5, &mut r) }, DN_ERR_INVALID_INPUT);

    assert_eq!(unsafe { dn_resistance(&p, 0.5, &mut r) }, DN_OK);
    assert!(dn_last_error().is_null());

    let doc = CString::new("[device]\nr_on = many\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dn_config_from_text(doc.as_ptr(), &mut cfg) }, DN_ERR_CONFIG);
    assert!(cfg.is_null());
    assert!(last_error().contains("many"));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let under_file = CString::new(file.join("trace.csv").to_str().unwrap()).unwrap();
    let sc = CString::new("[scenario]\nduration_s = 0.01\n").unwrap();
    let mut passed = 0;
    let code = unsafe { dn_scenario_run(ptr::null(), sc.as_ptr(), under_file.as_ptr(), &mut passed) };
    assert_eq!(code, DN_ERR_IO, "{}", last_error());
}

#[test]
fn config_fingerprint_is_stable() {
    let mut a = ptr::null_mut();
    let doc = CString::new("[controller]\npain_gain = 4.5\n").unwrap();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(dn_config_default(&mut a), DN_OK);
        assert_eq!(dn_config_from_text(doc.as_ptr(), &mut b), DN_OK);
        let mut fa = [0 as std::ffi::c_char; 65];
        let mut fb = [0 as std::ffi::c_char; 65];
        assert_eq!(dn_config_fingerprint(a, fa.as_mut_ptr(), fa.len()), DN_OK);
        assert_eq!(dn_config_fingerprint(b, fb.as_mut_ptr(), fb.len()), DN_OK);
        let fa = CStr::from_ptr(fa.as_ptr()).to_str().unwrap().to_string();
        let fb = CStr::from_ptr(fb.as_ptr()).to_str().unwrap().to_string();
        assert_eq!(fa, diffneuro::Config::default().fingerprint());
        assert_ne!(fa, fb);
        let mut small = [0 as std::ffi::c_char; 10];
        assert_eq!(dn_config_fingerprint(a, small.as_mut_ptr(), small.len()), DN_ERR_INVALID_INPUT);
        dn_config_free(a);
        dn_config_free(b);
        dn_config_free(ptr::null_mut());
    }
}

#[test]
fn vision_handle_matches_pipeline() {
    let v = diffneuro::vision::synth::generate(&Default::default(), 4).unwrap();
    let want = diffneuro::vision::run_video(&v.frames, &diffneuro::Config::default()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(dn_vision_new(ptr::null(), &mut h), DN_OK);
        let mut cells = 0;
        assert_eq!(dn_vision_cells(h, &mut cells), DN_OK);
        assert_eq!(cells, 1000);
        let mut map = vec![9u8; cells];
        let mut got = Vec::new();
        for f in &v.frames {
            let mut produced = -1;
            let code = dn_vision_push_frame(h, f.data.as_ptr(), f.width, f.height, map.as_mut_ptr(), map.len(), &mut produced);
            assert_eq!(code, DN_OK);
            if produced == 1 {
                got.push(map.clone());
            }
        }
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g, &w.binary);
        }
        let odd = vec![0u8; 33 * 20];
        let code = dn_vision_push_frame(h, odd.as_ptr(), 33, 20, ptr::null_mut(), 0, ptr::null_mut());
        assert_eq!(code, DN_ERR_INVALID_INPUT);
        dn_vision_free(h);
    }
}

#[test]
fn grasp_handle_matches_scenario_run() {
    let text = "[scenario]\nduration_s = 0.3\nclosed_loop = false\n[events]\n0.0, set, 8.0\n";
    let sc = diffneuro::tactile::GraspScenario::parse(text, "x").unwrap();
    let trace = diffneuro::tactile::run_scenario(&sc, &diffneuro::Config::default()).unwrap();
    let c = CString::new(text).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(dn_grasp_new(ptr::null(), c.as_ptr(), &mut h), DN_OK);
        let mut row = DnGraspRow::default();
        let mut saw_reflex = false;
        for want in &trace.rows {
            assert_eq!(dn_grasp_step(h, &mut row), DN_OK);
            assert_eq!(row.mem_r, want.mem_r);
            assert_eq!(row.gain, want.gain);
            saw_reflex |= row.markers & (1 << 4) != 0;
        }
        assert!(saw_reflex);
        assert_eq!(dn_grasp_step_force(h, 1.0, &mut row), DN_OK);
        assert_eq!(row.force, 1.0);
        assert_eq!(dn_grasp_step_force(h, f64::NAN, &mut row), DN_ERR_INVALID_INPUT);
        dn_grasp_free(h);
    }
}

#[test]
fn scenario_run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let text = CString::new("[scenario]\nduration_s = 0.05\n[markers]\n0.01, pain_reflex\n").unwrap();
    let path = CString::new(csv.to_str().unwrap()).unwrap();
    let mut passed = -1;
    let code = unsafe { dn_scenario_run(ptr::null(), text.as_ptr(), path.as_ptr(), &mut passed) };
    assert_eq!(code, DN_OK);
    assert_eq!(passed, 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 51);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/diffneuro.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["dn_vision_push_frame", "dn_grasp_step_force", "DN_ERR_PANIC", "typedef struct DnGraspLoop DnGraspLoop"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
