use std::process::Command;

fn vlaconv(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vlaconv"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn header(csv: &str) -> &str {
    csv.lines().next().unwrap_or("")
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("vlaconv-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn bench_csv_schema() {
    let (code, out, err) = vlaconv(&[
        "bench",
        "--size",
        "24,40,16",
        "--repeats",
        "2",
        "--vlen-bits",
        "1024",
        "--lanes",
        "4",
        "--block",
        "16,32,8",
        "--unroll",
        "8",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        header(&out),
        "variant,M,N,K,vlen_bits,lanes,blockM,blockN,blockK,flops,trace_events,wall_ns"
    );
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r.len(), 12);
        assert_eq!(&r[1..4], ["24", "40", "16"]);
        assert_eq!(&r[4..6], ["1024", "4"]);
        assert_eq!(r[9], (2 * 24 * 40 * 16).to_string());
        assert!(r[11].parse::<u64>().unwrap() > 0);
    }
    let six: Vec<_> = rows.iter().filter(|r| r[0] == "6loop").collect();
    assert_eq!(six.len(), 2);
    assert_eq!(&six[0][6..9], ["16", "32", "8"]);
    assert!(six[0][10].parse::<u64>().unwrap() > 0);
}

#[test]
fn model_ai_builtin_and_file() {
    let (code, out, _) = vlaconv(&["model-ai"]);
    assert_eq!(code, 0);
    assert_eq!(header(&out), "layer,M,N,K,ai");
    assert_eq!(out.lines().count(), 15);
    assert!(out.contains("\nL44,1024,361,4608,"));

    let path = tmp("tiny.cfg");
    std::fs::write(
        &path,
        "input 16 16 3\nconv 8 3 1 1 leaky bn\nconv 4 1 1 0 linear\n",
    )
    .unwrap();
    let (code, out, err) = vlaconv(&["model-ai", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(
        lines[1],
        format!(
            "L1,8,256,27,{:.4}",
            2.0 * 8.0 * 256.0 * 27.0 / (4.0 * (8.0 * 256.0 + 27.0 * 256.0 + 8.0 * 27.0))
        )
    );
    assert!(lines[2].starts_with("L2,4,256,8,"));
}

#[test]
fn model_errors_exit_nonzero() {
    let path = tmp("bad.cfg");
    std::fs::write(&path, "input 16 16 3\nconv 8 3 0 1 leaky\n").unwrap();
    let (code, _, err) = vlaconv(&["model-ai", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn sweep_csv_schema_and_order() {
    let (code, out, err) = vlaconv(&[
        "sweep",
        "--gemm",
        "32,256,32",
        "--algorithm",
        "gemm-3loop",
        "--vlen-bits",
        "512,1024",
        "--lanes",
        "4,8",
        "--l2-bytes",
        "65536,262144",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        header(&out),
        "algorithm,vlen_bits,lanes,l2_bytes,l2_miss_rate,compute_cycles,memory_cycles,total_cycles"
    );
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 8);
    let keys: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[1], r[2], r[3])).collect();
    assert_eq!(keys[0], ("512", "4", "65536"));
    assert_eq!(keys[1], ("512", "4", "262144"));
    assert_eq!(keys[2], ("512", "8", "65536"));
    assert_eq!(keys[7], ("1024", "8", "262144"));
    for r in &rows {
        assert_eq!(r[0], "gemm-3loop");
        let miss: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&miss));
        let (c, m, t): (u64, u64, u64) = (
            r[5].parse().unwrap(),
            r[6].parse().unwrap(),
            r[7].parse().unwrap(),
        );
        assert_eq!(t, c.max(m));
    }
}

#[test]
fn winograd_sweep_needs_layers() {
    let (code, _, err) = vlaconv(&["sweep", "--algorithm", "winograd", "--layers", "L5"]);
    assert_eq!(code, 2);
    assert!(err.contains("model file"), "{err}");

    let path = tmp("wino.cfg");
    std::fs::write(&path, "input 20 20 8\nconv 8 3 1 1 leaky bn\n").unwrap();
    let (code, out, err) = vlaconv(&[
        "sweep",
        "--algorithm",
        "winograd",
        "--model",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("winograd,512,8,1048576,"));
}

#[test]
fn trace_round_trips_through_replay() {
    let path = tmp("trace.csv");
    let (code, _, err) = vlaconv(&[
        "trace",
        "--gemm",
        "20,48,12",
        "--algorithm",
        "6loop",
        "--block",
        "16,32,8",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(header(&text), "kind,buffer,offset,bytes,tag");
    assert!(text.lines().count() > 10);
    assert!(text.contains(",prefetch"));

    let (code, out, err) = vlaconv(&["replay", path.to_str().unwrap(), "--l2-bytes", "65536"]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], "level,accesses,hits,misses,miss_rate");
    assert!(lines[1].starts_with("L1,"));
    assert!(lines[2].starts_with("L2,"));
}

#[test]
fn verify_is_deterministic_and_detects_faults() {
    let args = [
        "verify",
        "--seed",
        "11",
        "--gemm-cases",
        "30",
        "--float-cases",
        "10",
        "--winograd-cases",
        "8",
    ];
    let (code, a, _) = vlaconv(&args);
    let (_, b, _) = vlaconv(&args);
    assert_eq!(code, 0, "{a}");
    assert_eq!(a, b);
    assert_eq!(a.lines().filter(|l| l.starts_with("PASS")).count(), 5);

    let mut faulty = args.to_vec();
    faulty.push("--inject-fault");
    let (code, out, _) = vlaconv(&faulty);
    assert_eq!(code, 1);
    assert!(out.contains("FAIL gemm-6loop"), "{out}");
}

#[test]
fn output_flag_writes_file() {
    let path = tmp("ai.csv");
    let (code, out, _) = vlaconv(&["model-ai", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .starts_with("layer,M,N,K,ai\n"));
}

#[test]
fn thread_cap_env() {
    let ok = Command::new(env!("CARGO_BIN_EXE_vlaconv"))
        .args([
            "verify",
            "--gemm-cases",
            "5",
            "--float-cases",
            "2",
            "--winograd-cases",
            "2",
        ])
        .env("VLACONV_THREADS", "1")
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_vlaconv"))
        .args(["model-ai"])
        .env("VLACONV_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn rejects_bad_flags() {
    assert_ne!(vlaconv(&["bench", "--block", "1,2"]).0, 0);
    assert_ne!(vlaconv(&["bench", "--vlen-bits", "100"]).0, 0);
    assert_ne!(vlaconv(&["bench", "--variants", "turbo"]).0, 0);
    assert_ne!(vlaconv(&["sweep", "--algorithm", "fft"]).0, 0);
}

#[test]
fn model_traces_skip_layers_winograd_cannot_run() {
    let model = tmp("mixed.cfg");
    std::fs::write(
        &model,
        "input 16 16 4\nconv 8 3 2 1 leaky bn\nconv 8 3 1 1 leaky\n",
    )
    .unwrap();
    let m = model.to_str().unwrap();

    let (code, wino, err) = vlaconv(&["trace", "--model", m, "--algorithm", "winograd"]);
    assert_eq!(code, 0, "{err}");
    let (_, only_l2, _) = vlaconv(&[
        "trace",
        "--model",
        m,
        "--layers",
        "L2",
        "--algorithm",
        "winograd",
    ]);
    assert_eq!(wino, only_l2);

    let (code, _, err) = vlaconv(&[
        "trace",
        "--model",
        m,
        "--layers",
        "L1",
        "--algorithm",
        "winograd",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("3x3 stride-1"), "{err}");

    let (code, gemm, err) = vlaconv(&["trace", "--model", m, "--algorithm", "gemm-3loop"]);
    assert_eq!(code, 0, "{err}");
    assert!(gemm.lines().count() > 1);
}
