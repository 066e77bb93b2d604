use std::ffi::{CStr, CString};
use std::ptr;

use dimix_ffi::*;

const CONFIG: &str = r#"
n = 4
d = 3
samples = 24
topology = "gossip"
noise = "quantizer"
levels = 4
alpha0 = 0.1
nu = 0.25
beta0 = 0.7
mu = 0.75
horizon = 50
seed = 3
"#;

fn last_error() -> String {
    let p = dimix_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn experiment(text: &str) -> *mut DimixExperiment {
    let c = CString::new(text).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { dimix_experiment_new(c.as_ptr(), &mut exp) },
        DimixStatus::Ok
    );
    exp
}

#[test]
fn run_through_handles() {
    let exp = experiment(CONFIG);
    let (mut n, mut d) = (0usize, 0usize);
    unsafe {
        assert_eq!(dimix_experiment_shape(exp, &mut n, &mut d), DimixStatus::Ok);
        assert_eq!((n, d), (4, 3));

        let mut passed = 0;
        assert_eq!(
            dimix_experiment_validate(exp, 40, &mut passed),
            DimixStatus::Ok
        );
        assert_eq!(passed, 1);

        let mut trace = ptr::null_mut();
        assert_eq!(
            dimix_experiment_run(exp, 50, 9, &mut trace),
            DimixStatus::Ok
        );
        assert_eq!(dimix_trace_len(trace), 50);
        assert_eq!(dimix_trace_aborted(trace), 0);

        let mut dist = vec![0.0; 50];
        assert_eq!(
            dimix_trace_metric(trace, DimixMetric::DistOptSq, dist.as_mut_ptr(), dist.len()),
            DimixStatus::Ok
        );
        let mut xs = vec![0.0; 3];
        assert_eq!(
            dimix_experiment_optimum(exp, xs.as_mut_ptr(), 3),
            DimixStatus::Ok
        );
        // X(1) = 0, so the first entry is ‖x*‖².
        let norm: f64 = xs.iter().map(|v| v * v).sum();
        assert!((dist[0] - norm).abs() <= 1e-12 * norm.max(1.0));
        assert!(dist[49] < dist[0]);

        let mut short = vec![0.0; 10];
        assert_eq!(
            dimix_trace_metric(
                trace,
                DimixMetric::LossPooled,
                short.as_mut_ptr(),
                short.len()
            ),
            DimixStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 50"));

        let mut again = ptr::null_mut();
        assert_eq!(
            dimix_experiment_run(exp, 50, 9, &mut again),
            DimixStatus::Ok
        );
        let mut dist2 = vec![0.0; 50];
        dimix_trace_metric(again, DimixMetric::DistOptSq, dist2.as_mut_ptr(), 50);
        assert_eq!(dist, dist2);

        dimix_trace_free(again);
        dimix_trace_free(trace);
        dimix_experiment_free(exp);
    }
}

#[test]
fn config_errors_carry_field_names() {
    let c = CString::new(CONFIG.replace("nu = 0.25", "nu = 1.25")).unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { dimix_experiment_new(c.as_ptr(), &mut exp) },
        DimixStatus::Config
    );
    assert!(exp.is_null());
    assert!(last_error().contains("`nu`"));
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { dimix_experiment_new(ptr::null(), &mut out) },
        DimixStatus::NullPointer
    );
    assert_eq!(unsafe { dimix_trace_len(ptr::null()) }, 0);
    assert_eq!(
        unsafe { dimix_trace_metric(ptr::null(), DimixMetric::LossPooled, ptr::null_mut(), 0) },
        DimixStatus::NullPointer
    );
    unsafe {
        dimix_experiment_free(ptr::null_mut());
        dimix_trace_free(ptr::null_mut());
    }
}

#[test]
fn scalar_entry_points() {
    let mut level = 0u32;
    // t = 0.6 with s = 4 sits between levels 2 and 3; u below the
    // fractional part 0.4 rounds up.
    assert_eq!(
        unsafe { dimix_zeta(0.6, 4, 0.1, &mut level) },
        DimixStatus::Ok
    );
    assert_eq!(level, 3);
    assert_eq!(
        unsafe { dimix_zeta(0.6, 4, 0.9, &mut level) },
        DimixStatus::Ok
    );
    assert_eq!(level, 2);
    assert_eq!(
        unsafe { dimix_zeta(1.5, 4, 0.5, &mut level) },
        DimixStatus::InvalidArgument
    );

    let mut a = 0.0;
    assert_eq!(
        unsafe { dimix_a_constant(2.0, 0.5, 1.0, &mut a) },
        DimixStatus::Ok
    );
    assert!(a.is_finite() && a > 0.0);

    let x = [0.3, -0.4, 0.0];
    let mut q = [0.0; 3];
    assert_eq!(
        unsafe { dimix_quantize(x.as_ptr(), 3, 4, 1, q.as_mut_ptr()) },
        DimixStatus::Ok
    );
    assert_eq!(q[2], 0.0);
    assert!(q[0] >= 0.0 && q[1] <= 0.0);
    assert_eq!(
        unsafe { dimix_quantize(x.as_ptr(), 3, 0, 1, q.as_mut_ptr()) },
        DimixStatus::InvalidArgument
    );

    let mut violations = usize::MAX;
    assert_eq!(
        unsafe { dimix_lemma_suite(5, 20, &mut violations) },
        DimixStatus::Ok
    );
    assert_eq!(violations, 0);
}

#[test]
fn version_matches_core() {
    let v = unsafe { CStr::from_ptr(dimix_version()) }.to_str().unwrap();
    assert_eq!(v, dimix::VERSION);
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dimix.h")).unwrap();
    for name in [
        "dimix_version",
        "dimix_last_error_message",
        "dimix_experiment_new",
        "dimix_experiment_free",
        "dimix_experiment_shape",
        "dimix_experiment_optimum",
        "dimix_experiment_validate",
        "dimix_experiment_run",
        "dimix_trace_free",
        "dimix_trace_len",
        "dimix_trace_aborted",
        "dimix_trace_metric",
        "dimix_quantize",
        "dimix_zeta",
        "dimix_a_constant",
        "dimix_lemma_suite",
        "typedef struct DimixExperiment DimixExperiment",
        "DIMIX_STATUS_BUFFER_TOO_SMALL = 8",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/dimix.h");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler on PATH; header syntax not checked");
        return;
    };
    assert!(status.success());
}
