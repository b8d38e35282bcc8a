//! Compiles and runs a small C program against the generated header and
//! the static library, exercising the ABI from the consumer side.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // target/<profile> two levels up from the test executable
    let mut p = std::env::current_exe().unwrap();
    p.pop(); // deps
    p.pop(); // debug
    p
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    let lib_dir = target_dir();
    let lib = lib_dir.join("libblowlab_capi.a");
    if !lib.exists() {
        // library target not built in this invocation; build it
        let status = Command::new(env!("CARGO"))
            .args(["build", "-p", "blowlab-capi"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert!(lib.exists(), "missing {lib:?}");

    let c_src = r#"
#include "blowlab.h"
#include <stdio.h>
#include <string.h>

int main(void) {
    BlParams *p = bl_params_new();
    if (!p) return 10;
    if (bl_params_set(p, "beta0", 5.0) != BL_STATUS_OK) return 11;
    if (bl_params_validate(p) != BL_STATUS_OK) return 12;

    BlDerived d;
    memset(&d, 0, sizeof d);
    if (bl_derived_compute(p, &d) != BL_STATUS_OK) return 13;
    if (!(d.triangle > 1.66 && d.triangle < 1.67)) return 14;
    if (!d.has_t_upper) return 15;

    BlTrace *t = bl_trace_run(p, 0.0, 1e8, 256);
    if (!t) { fprintf(stderr, "%s\n", bl_last_error()); return 16; }
    size_t n = bl_trace_len(t);
    if (n < 100) return 17;
    double lo = 0, hi = 0;
    if (bl_trace_blowup_bracket(t, &lo, &hi) != BL_STATUS_OK) return 18;
    if (!(lo < hi)) return 19;

    BlCompact *c = bl_compact_build(t, 1e-8);
    if (!c) { fprintf(stderr, "%s\n", bl_last_error()); return 20; }
    BlCompactPoint pt;
    if (bl_compact_point(c, -0.5, &pt) != BL_STATUS_OK) return 21;
    if (!(pt.chi_over_b > 0.0)) return 22;

    bl_compact_free(c);
    bl_trace_free(t);
    bl_params_free(p);
    printf("ok %s\n", bl_version());
    return 0;
}
"#;
    let dir = std::env::temp_dir().join(format!("blowlab_c_smoke_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    let exe = dir.join("smoke");
    std::fs::write(&src, c_src).unwrap();

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let compile = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "cc failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "exit {:?}, stderr: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
