// Kept in its own test binary: it mutates the process environment.

use geflab_cli::{run, EXIT_OK, EXIT_USAGE, WORKERS_ENV};

fn call(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("geflab").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn env_overrides_flag() {
    let args = ["counts", "--r", "1", "--trials", "500", "--workers", "0"];
    std::env::remove_var(WORKERS_ENV);
    assert_eq!(call(&args).0, EXIT_USAGE);

    std::env::set_var(WORKERS_ENV, "3");
    let (code, with_env) = call(&args);
    assert_eq!(code, EXIT_OK);
    std::env::remove_var(WORKERS_ENV);
    let (_, plain) = call(&args[..5]);
    assert_eq!(with_env, plain);

    std::env::set_var(WORKERS_ENV, "many");
    assert_eq!(call(&args[..5]).0, EXIT_USAGE);
    std::env::remove_var(WORKERS_ENV);
}
