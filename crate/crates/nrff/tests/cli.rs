use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nrff::frame_io::load_sequence;
use nrff_core::bitstream::deserialize;
use serde_json::Value;

fn nrff(args: &[&str]) -> Output {
    nrff_env(args, &[])
}

fn nrff_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nrff"));
    cmd.args(args);
    for (k, _) in nrff::settings::KEYS {
        cmd.env_remove(nrff::settings::env_var(k));
    }
    cmd.env_remove(nrff::settings::CONFIG_VAR);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// A 16x16, 10 frame translating texture.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        ok(&nrff(&[
            "synth",
            "translating",
            s(&f.video()),
            "--width",
            "16",
            "--height",
            "16",
            "--frames",
            "10",
        ]));
        f
    }

    fn video(&self) -> PathBuf {
        self.dir.path().join("video")
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn encode(&self, name: &str, extra: &[&str]) -> (PathBuf, Value) {
        let out = self.path(name);
        let video = self.video();
        let mut args = vec!["encode", s(&video), s(&out), "--gop", "5", "--iters", "20"];
        args.extend_from_slice(extra);
        ok(&nrff(&args));
        let report = std::fs::read_to_string(format!("{}.json", out.display())).unwrap();
        (out, serde_json::from_str(&report).unwrap())
    }
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} in {v}"))
}

#[test]
fn encode_report_and_decode_agree() {
    let fx = Fixture::new();
    let (out, report) = fx.encode("single.nrff", &["--mode", "single"]);
    assert_eq!(report["gops"].as_array().unwrap().len(), 2);
    assert_eq!(report["frames"], 10);
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(f(&report, "total_bytes") as usize, bytes.len());
    let bs = deserialize(&bytes).unwrap();
    assert_eq!(bs.gops.len(), 2);

    let dec = fx.path("dec");
    ok(&nrff(&["decode", s(&out), s(&dec), "--format", "png"]));
    assert_eq!(load_sequence(&dec).unwrap().frames.len(), 10);

    // eval works from the float reconstruction, like the report.
    let csv = ok(&nrff(&["eval", s(&out), s(&fx.video())]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("label,bpp,psnr,ssim"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 4);
    let bpp: f64 = row[1].parse().unwrap();
    assert!((bpp - bytes.len() as f64 * 8.0 / (16.0 * 16.0 * 10.0)).abs() < 1e-6);
    let psnr: f64 = row[2].parse().unwrap();
    // The synthetic frames were stored at 8 bits, the trainer saw the same bytes.
    assert!(
        (psnr - f(&report, "psnr")).abs() <= 0.05,
        "{psnr} vs {}",
        report["psnr"]
    );
}

#[test]
fn baseline_matches_total_bytes_and_ratio_is_a_quarter() {
    let fx = Fixture::new();
    let (_, single) = fx.encode("single.nrff", &["--mode", "single", "--split"]);
    let (_, base) = fx.encode("base.nrff", &["--mode", "baseline"]);
    let (a, b) = (f(&single, "total_bytes"), f(&base, "total_bytes"));
    assert!((a - b).abs() / a <= 0.02, "{a} vs {b}");
}

#[test]
fn quarter_ratio_holds_once_width_steps_are_fine() {
    // A 16x16 keyframe affords under 200 parameters, where one step of
    // network width is a third of the budget. From 32x32 up it is not.
    let dir = tempfile::tempdir().unwrap();
    let video = dir.path().join("video");
    ok(&nrff(&["synth", "translating", s(&video), "--frames", "6"]));
    for mode in ["single", "multi"] {
        for split in ["false", "true"] {
            let out = dir.path().join(format!("{mode}{split}.nrff"));
            ok(&nrff(&[
                "encode",
                s(&video),
                s(&out),
                "--gop",
                "3",
                "--iters",
                "1",
                "--mode",
                mode,
                "--split",
                split,
                "--ratio",
                "0.25",
            ]));
            let r: Value =
                serde_json::from_str(&std::fs::read_to_string(format!("{}.json", out.display())).unwrap()).unwrap();
            let ratio = f(&r, "network_bytes") / f(&r, "keyframe_bytes");
            assert!((0.23..=0.27).contains(&ratio), "{mode} split={split}: {ratio}");
        }
    }
}

#[test]
fn png_keyframes_are_bit_exact() {
    let fx = Fixture::new();
    let (out, _) = fx.encode("png.nrff", &["--keyframe-codec", "png", "--mode", "multi"]);
    let dec = fx.path("dec");
    ok(&nrff(&["decode", s(&out), s(&dec), "--format", "png"]));
    let bs = deserialize(&std::fs::read(&out).unwrap()).unwrap();
    let orig = load_sequence(&fx.video()).unwrap().frames;
    let back = load_sequence(&dec).unwrap().frames;
    for g in &bs.gops {
        assert_eq!(back[g.key], orig[g.key], "keyframe {}", g.key);
    }
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    assert_eq!(code(&nrff(&["--help"])), 0);
    assert_eq!(code(&nrff(&["encode", "--help"])), 0);
    assert_eq!(code(&nrff(&["frobnicate"])), 1);
    assert_eq!(code(&nrff(&["encode", s(&fx.video()), s(&fx.path("o")), "--bogus"])), 1);
    assert_eq!(
        code(&nrff(&["encode", s(&fx.video()), s(&fx.path("o")), "--gop", "1"])),
        1
    );
    assert_eq!(
        code(&nrff(&["encode", s(&fx.video()), s(&fx.path("o")), "--mode", "fancy"])),
        1
    );
    assert_eq!(code(&nrff(&["encode", s(&fx.path("missing")), s(&fx.path("o"))])), 2);
    let diverged = nrff(&[
        "encode",
        s(&fx.video()),
        s(&fx.path("o")),
        "--lr",
        "1e30",
        "--iters",
        "5",
    ]);
    assert_eq!(code(&diverged), 3, "{}", String::from_utf8_lossy(&diverged.stderr));
    assert!(String::from_utf8_lossy(&diverged.stderr).contains("diverged"));

    // A future version of the format is a data error.
    let (out, _) = fx.encode("v.nrff", &[]);
    let mut bytes = std::fs::read(&out).unwrap();
    bytes[4] = 99;
    let bad = fx.path("bad.nrff");
    std::fs::write(&bad, &bytes).unwrap();
    let r = nrff(&["decode", s(&bad), s(&fx.path("d"))]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("version"));
    let r = nrff(&["interp", s(&out), s(&fx.path("i.png")), "--time", "12.5"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn reruns_and_job_counts_are_bit_identical() {
    let fx = Fixture::new();
    let (a, ra) = fx.encode("a.nrff", &["--mode", "multi", "--jobs", "1"]);
    let (b, rb) = fx.encode("b.nrff", &["--mode", "multi", "--jobs", "1"]);
    let (c, _) = fx.encode("c.nrff", &["--mode", "multi", "--jobs", "2"]);
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert_eq!(a, std::fs::read(c).unwrap());
    assert_eq!(ra["gops"][0]["losses"], rb["gops"][0]["losses"]);
}

#[test]
fn interp_at_unit_scale_is_decode() {
    let fx = Fixture::new();
    let (out, _) = fx.encode("m.nrff", &["--mode", "multi"]);
    let (dec, up, big) = (fx.path("dec"), fx.path("up"), fx.path("big"));
    ok(&nrff(&["decode", s(&out), s(&dec)]));
    ok(&nrff(&["interp", s(&out), s(&up)]));
    let a = load_sequence(&dec).unwrap().frames;
    assert_eq!(a, load_sequence(&up).unwrap().frames);

    ok(&nrff(&[
        "interp",
        s(&out),
        s(&big),
        "--scale",
        "4",
        "--time",
        "2",
        "--time",
        "2.5",
    ]));
    let b = load_sequence(&big).unwrap().frames;
    assert_eq!(b.len(), 2);
    assert_eq!(b[0].dims(), (64, 64));

    let one = fx.path("mid.png");
    ok(&nrff(&["interp", s(&out), s(&one), "--time", "3.5"]));
    assert!(one.exists());
}

#[test]
fn config_dump_reflects_overrides_and_reparses() {
    let fx = Fixture::new();
    let dump = ok(&nrff_env(
        &["config-dump"],
        &[("NRFF_GOP", "7"), ("NRFF_MODE", "multi")],
    ));
    assert!(dump.contains("gop = 7"), "{dump}");
    assert!(dump.contains("mode = nrff_multi"), "{dump}");
    assert!(dump.contains("NRFF_ITERS"), "{dump}");

    let cfg = fx.path("nrff.conf");
    std::fs::write(&cfg, &dump).unwrap();
    let again = ok(&nrff(&["config-dump", "--config", s(&cfg)]));
    assert_eq!(again, dump);

    // Flags beat the environment, which beats the file.
    let mixed = ok(&nrff_env(
        &["config-dump", "--config", s(&cfg), "--gop", "4"],
        &[("NRFF_GOP", "9")],
    ));
    assert!(mixed.contains("gop = 4"), "{mixed}");
    let env = ok(&nrff_env(&["config-dump", "--config", s(&cfg)], &[("NRFF_GOP", "9")]));
    assert!(env.contains("gop = 9"), "{env}");

    std::fs::write(&cfg, "gop = seven\n").unwrap();
    let r = nrff(&["config-dump", "--config", s(&cfg)]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains(":1"));
}

#[test]
fn external_keyframe_codec_round_trips_through_commands() {
    let fx = Fixture::new();
    let env = [
        ("NRFF_EXTERNAL_ENCODE", "cp {input} {output}"),
        ("NRFF_EXTERNAL_DECODE", "cp {input} {output}"),
    ];
    let out = fx.path("ext.nrff");
    ok(&nrff_env(
        &[
            "encode",
            s(&fx.video()),
            s(&out),
            "--gop",
            "5",
            "--iters",
            "5",
            "--keyframe-codec",
            "external",
        ],
        &env,
    ));
    let dec = fx.path("dec");
    ok(&nrff_env(&["decode", s(&out), s(&dec)], &env));
    let orig = load_sequence(&fx.video()).unwrap().frames;
    let back = load_sequence(&dec).unwrap().frames;
    assert_eq!(back[2], orig[2]);

    let r = nrff(&["decode", s(&out), s(&fx.path("d2"))]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("NRFF_EXTERNAL_DECODE"));
}
