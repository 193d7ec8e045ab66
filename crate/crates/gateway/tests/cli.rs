use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_nbguard");

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start(dir: &Path) -> (Server, String) {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let child = Command::new(BIN)
        .args(["serve", "--listen", &format!("127.0.0.1:{port}"), "--data-dir"])
        .arg(dir)
        .env("NBGUARD_ADMIN_SECRET", "admin-pw")
        .spawn()
        .unwrap();
    let server = Server(child);
    let deadline = Instant::now() + Duration::from_secs(30);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        sleep(Duration::from_millis(50));
    }
    (server, format!("http://127.0.0.1:{port}"))
}

fn run(url: &str, id: &str, secret: &str, wallet: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(["--url", url, "--id", id, "--secret", secret, "--wallet"])
        .arg(wallet)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn admin_cli_drives_a_running_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, url) = start(dir.path());
    let admin_wallet = dir.path().join("admin.wallet.json");
    let admin = |args: &[&str]| run(&url, "admin", "admin-pw", &admin_wallet, args);

    ok(admin(&["permissions", "add", "P_FLOW", "flow", "flowmod"]));
    ok(admin(&["roles", "add", "r1", "role", "--permission", "P_FLOW"]));
    let ctrl_wallet = dir.path().join("ctrl1.json");
    ok(admin(&["controllers", "add", "ctrl1", "c", "--permission", "P_FLOW", "--new-secret", "cs", "--wallet-out"]
        .iter()
        .copied()
        .chain([ctrl_wallet.to_str().unwrap()])
        .collect::<Vec<_>>()));
    let app_wallet = dir.path().join("app1.json");
    let created = ok(admin(&["apps", "add", "app1", "a", "--role", "r1", "--new-secret", "as", "--wallet-out", app_wallet.to_str().unwrap()]));
    assert!(created.get("wallet").is_none());

    let token = ok(run(&url, "app1", "as", &app_wallet, &["tokens", "request", "ctrl1"]));
    assert_eq!(token["status"], "NEW");
    let pending = ok(admin(&["tokens", "list", "--status", "NEW"]));
    assert_eq!(pending[0]["id"], token["id"]);
    let issued = ok(admin(&["tokens", "issue", token["id"].as_str().unwrap()]));
    assert_eq!(issued["status"], "ISSUED");

    let ping = ok(run(&url, "ctrl1", "cs", &ctrl_wallet, &["ping"]));
    assert_eq!(ping["action"], "ACCEPT");
    let blocks = ok(admin(&["blocks", "--limit", "1"]));
    assert_eq!(blocks["chainValid"], true);

    let missing = admin(&["apps", "get", "nope"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("404"));
    let denied = run(&url, "app1", "as", &app_wallet, &["apps", "list"]);
    assert!(!denied.status.success());
    let bad_login = run(&url, "app1", "wrong", &app_wallet, &["ping"]);
    assert!(!bad_login.status.success());
    assert!(String::from_utf8_lossy(&bad_login.stderr).contains("401"));
}
