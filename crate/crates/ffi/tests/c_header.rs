use std::process::Command;

const PROGRAM: &str = r#"
#include "genbench.h"
#include <stdio.h>

int main(void) {
    double mean[2] = {0.0, 0.0};
    double cov[4] = {1.0, 0.0, 0.0, 1.0};
    GbGaussianStats *a = NULL;
    double d = 0.0;
    if (gb_stats_from_moments(mean, cov, 2, &a) != GB_STATUS_OK) {
        fprintf(stderr, "%s\n", gb_last_error());
        return 1;
    }
    GbStatus st = gb_frechet_distance(a, a, &d);
    gb_stats_free(a);
    return st == GB_STATUS_OK ? 0 : 1;
}
"#;

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    for (cc, file, std) in [("cc", "t.c", "-std=c99"), ("c++", "t.cpp", "-std=c++11")] {
        if Command::new(cc).arg("--version").output().is_err() {
            eprintln!("{cc} not found; skipping");
            continue;
        }
        let src = dir.path().join(file);
        std::fs::write(&src, PROGRAM).unwrap();
        let out = Command::new(cc)
            .args([std, "-fsyntax-only", "-Wall", "-Werror", "-I", include])
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
