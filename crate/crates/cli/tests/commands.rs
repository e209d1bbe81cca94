use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use ttvr_core::archive::ArchiveWriter;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Project {
    dir: tempfile::TempDir,
}

impl Project {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let script = fixture("mock_script.toml");
        std::fs::write(
            dir.path().join("ttvr.toml"),
            format!(
                "archive_path = \"archive.jsonl\"\n{extra}\n[backend]\nkind = \"mock\"\nscript = {:?}\nretry_backoff_ms = 0\n[checker]\ncommand = \"sh\"\nargs = [\"-c\", \"exit 0\"]\n",
                script.display().to_string()
            ),
        )
        .unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("ttvr.toml")
    }

    fn cmd(&self) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ttvr"));
        c.arg("--config").arg(self.config()).arg("--quiet");
        c.env_remove("TTVR_SERVER").env_remove("TTVR_CONFIG");
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd().args(args).output().unwrap()
    }

    fn run_with_input(&self, args: &[&str], input: &str) -> Output {
        let mut child = self
            .cmd()
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
        child.wait_with_output().unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn describe(o: &Output) -> String {
    format!("status {:?}\nstdout:\n{}\nstderr:\n{}", o.status, stdout(o), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn prove_review_report_summarize() {
    let p = Project::new("");
    let statements = fixture("statements.jsonl");
    let o = p.run(&["prove", statements.to_str().unwrap(), "--max-iterations", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let out = stdout(&o);
    assert!(out.contains("odd-square") && out.contains("PROVED_UNCERTIFIED"), "{out}");
    assert!(out.contains("stubborn") && out.contains("EXHAUSTED"), "{out}");

    let o = p.run_with_input(&["review", "--reviewer", "ann"], "x\nc\nstatement matches\ny\n");
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let out = stdout(&o);
    assert!(out.contains("answer c, n, s or q"), "{out}");
    assert!(out.contains("recorded: VALID"), "{out}");
    assert!(out.contains("1 decided, 0 skipped, 0 left"), "{out}");

    let o = p.run(&["review"]);
    assert!(stdout(&o).contains("no cases awaiting review"));

    let o = p.run(&["report", "--format", "csv"]);
    assert_eq!(
        stdout(&o),
        "item,itn,O/C,P/R,correct?,certified?\nodd-square,1,,P,Y,Y\nstubborn,NA,NA,NA,NA,NA\n"
    );
    let o = p.run(&["summarize", "--json"]);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["traces"], 2);
    assert_eq!(summary["solved"], 1);
}

#[test]
fn skip_and_quit_leave_cases_pending() {
    let p = Project::new("");
    let statements = fixture("statements.jsonl");
    assert_eq!(p.run(&["prove", statements.to_str().unwrap(), "--max-iterations", "1"]).status.code(), Some(0));
    let o = p.run_with_input(&["review"], "s\n");
    assert!(stdout(&o).contains("0 decided, 1 skipped, 0 left"), "{}", describe(&o));
    let o = p.run_with_input(&["review"], "q\n");
    assert!(stdout(&o).contains("0 decided, 0 skipped, 1 left"), "{}", describe(&o));
}

#[test]
fn configuration_errors_exit_2() {
    let p = Project::new("");
    std::fs::write(p.config(), "[run]\nmax_iterations = 0\n").unwrap();
    assert_eq!(p.run(&["summarize"]).status.code(), Some(2));

    let p = Project::new("");
    let bad = p.dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"schema_version\": 1, \"id\": \"x\"}\n").unwrap();
    assert_eq!(p.run(&["prove", bad.to_str().unwrap()]).status.code(), Some(2));
    let statements = fixture("statements.jsonl");
    let o = p.run(&["prove", statements.to_str().unwrap(), "--verifiers", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", describe(&o));
}

#[test]
fn backend_failures_exit_3() {
    let p = Project::new("");
    let script = p.dir.path().join("down.toml");
    std::fs::write(&script, "[[rule]]\nerror = \"GATEWAY\"\n").unwrap();
    let config = std::fs::read_to_string(p.config()).unwrap();
    let config = config.replace(&format!("{:?}", fixture("mock_script.toml").display().to_string()), "\"down.toml\"");
    std::fs::write(p.config(), config).unwrap();
    let statements = fixture("statements.jsonl");
    let o = p.run(&["prove", statements.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", describe(&o));
    assert!(stdout(&o).contains("ABORTED"));

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let o = p.run(&["--server", &url, "summarize"]);
    assert_eq!(o.status.code(), Some(3), "{}", describe(&o));
}

#[test]
fn held_archive_lock_exits_4() {
    let p = Project::new("");
    let _writer = ArchiveWriter::open(p.dir.path().join("archive.jsonl")).unwrap();
    let o = p.run(&["summarize"]);
    assert_eq!(o.status.code(), Some(4), "{}", describe(&o));
}

#[test]
fn research_writes_every_stage() {
    let p = Project::new("");
    let out_dir = p.dir.path().join("out");
    let o = p.run(&[
        "research",
        "divisibility of odd powers",
        "--field",
        "number theory",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    assert!(stdout(&o).contains("3 harvested, 2 kept"), "{}", stdout(&o));
    for f in ["report.json", "candidates.jsonl", "settled.jsonl", "cases.jsonl"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let stages: Vec<String> = std::fs::read_dir(out_dir.join("stages"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(stages.iter().any(|s| s.contains("seeder")), "{stages:?}");
    let reviewer = stages.iter().find(|s| s.contains("literature_reviewer")).unwrap();
    let raw = std::fs::read_to_string(out_dir.join("stages").join(reviewer)).unwrap();
    assert!(raw.contains("Fourth powers"));
    let candidates = std::fs::read_to_string(out_dir.join("candidates.jsonl")).unwrap();
    assert_eq!(candidates.lines().filter(|l| !l.trim().is_empty()).count(), 3);
}

#[test]
fn serve_and_remote_client() {
    let p = Project::new("");
    let mut server = p
        .cmd()
        .args(["serve", "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(server.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_string();

    let statements = fixture("statements.jsonl");
    let remote = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_ttvr"))
            .arg("--server")
            .arg(&url)
            .arg("--quiet")
            .args(args)
            .output()
            .unwrap()
    };
    let o = remote(&["prove", statements.to_str().unwrap(), "--max-iterations", "2", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", describe(&o));
    let result: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(result["kind"], "PROVE");
    // The running service holds the lock, so a local run is refused.
    assert_eq!(p.run(&["summarize"]).status.code(), Some(4));
    let o = remote(&["report", "--format", "table"]);
    assert!(stdout(&o).contains("|itn|"), "{}", describe(&o));

    server.kill().unwrap();
    server.wait().unwrap();
}

/// Answers every request with 502 and echoes the authorization header back,
/// like a misconfigured proxy would.
fn echoing_gateway() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut auth, mut length) = (String::new(), 0usize);
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                } else if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            let _ = std::io::Read::read_exact(&mut reader, &mut body);
            let reply = format!("upstream rejected {auth}");
            let _ = write!(
                stream,
                "HTTP/1.1 502 Bad Gateway\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    url
}

#[test]
fn verbose_logs_redact_the_key() {
    const KEY: &str = "sk-cli-7d2e0b";
    let p = Project::new("");
    let endpoint = echoing_gateway();
    std::fs::write(
        p.config(),
        format!(
            "archive_path = \"archive.jsonl\"\n[backend]\nkind = \"live\"\nendpoint = \"{endpoint}\"\napi_key_env = \"TTVR_CLI_TEST_KEY\"\nretry_backoff_ms = 0\n"
        ),
    )
    .unwrap();
    let statements = fixture("statements.jsonl");
    let o = Command::new(env!("CARGO_BIN_EXE_ttvr"))
        .arg("--config")
        .arg(p.config())
        .arg("--verbose")
        .args(["prove", statements.to_str().unwrap()])
        .env("TTVR_CLI_TEST_KEY", KEY)
        .env_remove("TTVR_SERVER")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", describe(&o));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("[REDACTED]"), "{stderr}");
    assert!(!stderr.contains(KEY) && !stdout(&o).contains(KEY));
    let archive = std::fs::read_to_string(p.dir.path().join("archive.jsonl")).unwrap();
    assert!(archive.contains("ABORTED") && !archive.contains(KEY));
    assert!(!std::fs::read_to_string(p.config()).unwrap().contains(KEY));
}
