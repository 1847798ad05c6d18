//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "relayplan.h"

int main(void) {
    double dests[4] = {10.0, 0.0, 3.0, 8.0};
    RpTopology *t = NULL;
    if (rp_topology_new(0.0, 0.0, dests, 2, 1.0, 1.0, 1.0, 2.0, &t) != RP_STATUS_OK) return 10;
    RpPlan *plan = NULL;
    if (rp_centroid_plan(t, &plan) != RP_STATUS_OK) return 11;
    double x = 0.0, y = 0.0;
    if (rp_plan_relay(plan, &x, &y) != RP_STATUS_OK) return 12;
    double rates[2];
    size_t len = 0;
    if (rp_plan_destination_rates(plan, rates, 2, &len) != RP_STATUS_OK || len != 2) return 13;
    if (rp_plan(NULL, &plan) != RP_STATUS_NULL_POINTER) return 14;
    if (rp_last_error() == NULL) return 15;
    printf("%.6f %.6f %.9e\n", x, y, rp_plan_multicast_rate(plan));
    rp_plan_free(plan);
    rp_topology_free(t);
    return 0;
}
"#;

/// `target/<profile>` of the running test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile = profile_dir();
    // test builds only produce the rlib
    let mut build = Command::new(env!("CARGO"));
    build
        .args(["build", "--quiet", "--lib", "-p", "relayplan-ffi", "--target-dir"])
        .arg(profile.parent().unwrap());
    if profile.file_name().is_some_and(|n| n == "release") {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success());
    let lib = profile.join("librelayplan_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let work = std::env::temp_dir().join(format!("relayplan-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&work).unwrap();
    let src = work.join("main.c");
    let bin = work.join("main");
    std::fs::write(&src, PROGRAM).unwrap();

    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is required for this test");
    assert!(status.success());

    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    // hull centroid of (0,0), (10,0), (3,8)
    assert!((fields[0] - 13.0 / 3.0).abs() < 1e-6 && (fields[1] - 8.0 / 3.0).abs() < 1e-6);
    assert!(fields[2] > 0.0);
    std::fs::remove_dir_all(&work).ok();
}
