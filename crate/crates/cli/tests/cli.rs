use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use simstex_core::denoiser::EchoServer;
use simstex_core::{io, Grid};

fn simstex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simstex"))
        .args(args)
        .env_remove("RUST_LOG")
        .env_remove("SIMSTEX_BRIDGE_ADDR")
        .output()
        .expect("spawn simstex")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn quick_texture(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "texture",
        "--mesh",
        "builtin:sphere",
        "--steps",
        "8",
        "--coarse-resolution",
        "32",
        "--distill-iters",
        "10",
        "--bake-resolution",
        "32",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    simstex(&args)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn texture_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = quick_texture(&out, &["--denoiser", "gaussian:0.5,0.1", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "z0.ltx", "z0.png", "mesh.obj", "texture.png", "field.hgf", "views/view_08.ltx"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m = manifest(&out);
    assert_eq!(m["run"]["sims"]["seed"], 7);
    assert_eq!(m["run"]["distill"]["seed"], 7);
    assert_eq!(m["run"]["denoiser"], "gaussian:0.5,0.1");
    assert_eq!(m["distill"]["iters"], 10);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4 + 9 + 2);
    let z0 = io::load_ltx(&out.join("z0.ltx")).unwrap();
    assert_eq!((z0.height(), z0.width(), z0.channels()), (64, 64, 4));
}

#[test]
fn texture_is_deterministic_and_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let args = ["--denoiser", "gaussian:0.3,0.2", "--no-bake", "--seed", "3"];
    assert!(quick_texture(&a, &args).status.success());
    assert!(quick_texture(&b, &args).status.success());
    let o = simstex(&[
        "texture",
        "--config",
        a.join("manifest.json").to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let za = std::fs::read(a.join("z0.ltx")).unwrap();
    assert_eq!(za, std::fs::read(b.join("z0.ltx")).unwrap());
    assert_eq!(za, std::fs::read(c.join("z0.ltx")).unwrap());
    assert!(!a.join("texture.png").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "mesh": "builtin:quad",
            "denoiser": "zero",
            "no_bake": true,
            "sims": { "seed": 11, "rounds": 1, "schedule": { "S": 6 } }
        })
        .to_string(),
    )
    .unwrap();
    let o = simstex(&["texture", "--config", cfg.to_str().unwrap(), "--seed", "12", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["run"]["sims"]["seed"], 12);
    assert_eq!(m["run"]["sims"]["rounds"], 1);
    assert_eq!(m["run"]["sims"]["schedule"]["S"], 6);
    assert_eq!(m["run"]["mesh"], "builtin:quad");
    assert_eq!(m["pipeline"]["rounds"].as_array().unwrap().len(), 1);
}

#[test]
fn texture_through_echo_bridge() {
    let server = EchoServer::spawn().unwrap();
    let addr = format!("remote:{}", server.addr());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("remote");
    let o = quick_texture(&out, &["--denoiser", &addr]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("texture.png").is_file());
    assert!(manifest(&out)["pipeline"]["denoiser"].as_str().unwrap().contains("remote"));
}

#[test]
fn unreachable_bridge_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = quick_texture(&dir.path().join("x"), &["--denoiser", "remote:127.0.0.1:1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("transport error"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(simstex(&[]).status.code(), Some(1));
    assert_eq!(simstex(&["verify", "everything"]).status.code(), Some(1));
    assert_eq!(simstex(&["texture", "--mesh", "builtin:quad"]).status.code(), Some(1));
    assert_eq!(simstex(&["texture", "--denoiser", "zero"]).status.code(), Some(1));
    assert_eq!(simstex(&["texture", "--mesh", "builtin:quad", "--denoiser", "magic"]).status.code(), Some(1));
    assert_eq!(simstex(&["texture", "--mesh", "builtin:quad", "--denoiser", "remote"]).status.code(), Some(1));
    assert_eq!(simstex(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_adjoint_passes() {
    let o = simstex(&["verify", "adjoint"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
    assert!(stdout.contains("0 failed"), "{stdout}");
}

#[test]
fn render_constant_texture_and_latent_mosaic() {
    let dir = tempfile::tempdir().unwrap();
    let tex = dir.path().join("red.ltx");
    io::save_ltx(&Grid::from_fn(8, 8, 3, |_, _, c| if c == 0 { 1.0 } else { 0.0 }), &tex).unwrap();
    let png = dir.path().join("red.png");
    let o = simstex(&[
        "render", "--texture", tex.to_str().unwrap(), "--mesh", "builtin:sphere", "--camera", "3", "--size", "32", "--out",
        png.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = io::load_png(&png).unwrap();
    assert_eq!((img.height(), img.width()), (32, 32));
    assert_eq!([img.get(16, 16, 0), img.get(16, 16, 1), img.get(16, 16, 2)], [1.0, 0.0, 0.0]);

    let latent = dir.path().join("lat.ltx");
    io::save_ltx(&Grid::from_fn(8, 8, 4, |r, _, c| (r as f32 - 4.0) * (c as f32 + 1.0)), &latent).unwrap();
    let mosaic = dir.path().join("lat.png");
    let o = simstex(&[
        "render", "--texture", latent.to_str().unwrap(), "--mesh", "builtin:quad", "--eye", "0,0,2", "--size",
        "16", "--out", mosaic.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = io::load_png(&mosaic).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (32, 32, 3));
}

#[test]
fn render_missing_texture_fails() {
    let o = simstex(&["render", "--texture", "/nonexistent.ltx", "--mesh", "builtin:quad", "--out", "/tmp/never.png"]);
    assert_eq!(o.status.code(), Some(2));
    let o = simstex(&["render", "--texture", "x.ltx", "--mesh", "builtin:quad", "--out", "y.png", "--fov", "40"]);
    assert_eq!(o.status.code(), Some(1));
}
