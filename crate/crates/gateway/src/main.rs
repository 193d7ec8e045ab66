use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use nbguard_core::identity::Wallet;
use nbguard_gateway::client::{ClientError, GatewayClient};
use nbguard_gateway::{router, Gateway, GatewayConfig};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "nbguard", version, about = "Northbound AAA gateway and admin client")]
struct Cli {
    #[command(flatten)]
    conn: Conn,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Conn {
    /// Gateway base URL.
    #[arg(long, env = "NBGUARD_URL", default_value = "http://127.0.0.1:8080", global = true)]
    url: String,
    /// Participant id to log in as.
    #[arg(long = "id", env = "NBGUARD_ID", default_value = "admin", global = true)]
    login_id: String,
    #[arg(long = "secret", env = "NBGUARD_SECRET", hide_env_values = true, global = true)]
    login_secret: Option<String>,
    /// Identity card (wallet JSON) of the participant.
    #[arg(long, env = "NBGUARD_WALLET", global = true)]
    wallet: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gateway.
    Serve(Serve),
    /// Check credentials and show the caller's record.
    Ping,
    #[command(subcommand)]
    Tokens(Tokens),
    #[command(subcommand)]
    Apps(Apps),
    #[command(subcommand)]
    Controllers(Controllers),
    #[command(subcommand)]
    Roles(Roles),
    #[command(subcommand)]
    Permissions(Permissions),
    #[command(subcommand)]
    Thresholds(Thresholds),
    Logs {
        #[arg(long)]
        app: Option<String>,
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    Blocks {
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Args)]
struct Serve {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value = "nbguard-data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "admin")]
    admin_id: String,
    #[arg(long, env = "NBGUARD_ADMIN_SECRET", hide_env_values = true)]
    admin_secret: String,
    #[arg(long, default_value_t = 3)]
    peers: usize,
    /// Access token lifetime in seconds.
    #[arg(long, default_value_t = 3600)]
    jwt_ttl: u64,
    #[arg(long, default_value_t = 1200)]
    quota: u32,
    /// Quota window in seconds.
    #[arg(long, default_value_t = 30)]
    quota_window: u64,
}

#[derive(Subcommand)]
enum Tokens {
    List {
        #[arg(long)]
        status: Option<String>,
    },
    Issue { id: String },
    Expire { id: String },
    /// Request a token for a controller (as an application).
    Request { controller: String },
}

#[derive(Args)]
struct Enroll {
    /// Login secret for the new participant; generated if omitted.
    #[arg(long = "new-secret")]
    secret: Option<String>,
    /// Write the new participant's identity card here instead of printing it.
    #[arg(long)]
    wallet_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Apps {
    List,
    Get { id: String },
    Add {
        id: String,
        name: String,
        #[arg(long, default_value = "")]
        role: String,
        #[arg(long)]
        trust: Option<i64>,
        #[command(flatten)]
        enroll: Enroll,
    },
    Update {
        id: String,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        role: Option<String>,
    },
    Remove { id: String },
    /// Set the trust index.
    Trust { id: String, value: i64 },
}

#[derive(Subcommand)]
enum Controllers {
    List,
    Get { id: String },
    Add {
        id: String,
        name: String,
        #[arg(long = "permission")]
        permissions: Vec<String>,
        #[command(flatten)]
        enroll: Enroll,
    },
    Update {
        id: String,
        name: String,
        #[arg(long = "permission")]
        permissions: Vec<String>,
    },
    Remove { id: String },
}

#[derive(Subcommand)]
enum Roles {
    List,
    Get { id: String },
    Add {
        id: String,
        name: String,
        #[arg(long = "permission")]
        permissions: Vec<String>,
        #[arg(long, default_value_t = 0)]
        priority: i64,
    },
    Update {
        id: String,
        name: String,
        #[arg(long = "permission")]
        permissions: Vec<String>,
    },
}

#[derive(Subcommand)]
enum Permissions {
    List,
    Get { id: String },
    Add { id: String, name: String, resource_object: String },
    Remove { id: String },
}

#[derive(Subcommand)]
enum Thresholds {
    List,
    Set { object: String, value: i64 },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => serve(args),
        command => run_client(&cli.conn, command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(args: Serve) -> Result<(), CliError> {
    tracing_subscriber::fmt().init();
    let config = GatewayConfig {
        admin_id: args.admin_id,
        admin_secret: args.admin_secret,
        peer_count: args.peers,
        jwt_lifetime: Duration::from_secs(args.jwt_ttl),
        quota: args.quota,
        quota_window: Duration::from_secs(args.quota_window),
    };
    let gateway = Gateway::open(&args.data_dir, config)?;
    let wallet_path = args.data_dir.join("admin.wallet.json");
    std::fs::write(&wallet_path, serde_json::to_vec_pretty(&gateway.admin_wallet()).expect("serializes"))?;
    tracing::info!(wallet = %wallet_path.display(), height = gateway.ledger().height(), "ledger ready");

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(Arc::new(gateway)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn connect(conn: &Conn) -> Result<GatewayClient, CliError> {
    let secret = conn
        .login_secret
        .as_deref()
        .ok_or_else(|| CliError::Usage("--secret (or NBGUARD_SECRET) is required".into()))?;
    let wallet_path = conn
        .wallet
        .as_ref()
        .ok_or_else(|| CliError::Usage("--wallet (or NBGUARD_WALLET) is required".into()))?;
    let wallet: Wallet = serde_json::from_slice(&std::fs::read(wallet_path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", wallet_path.display())))?;
    let mut client = GatewayClient::new(&conn.url)?;
    client.connect(&conn.login_id, secret, &wallet)?;
    Ok(client)
}

fn query(pairs: &[(&str, Option<String>)]) -> String {
    let parts: Vec<String> = pairs
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}")))
        .collect();
    if parts.is_empty() {
        String::new()
    } else {
        format!("?{}", parts.join("&"))
    }
}

/// Prints an enrollment, moving the identity card to `wallet_out` if given.
fn enrolled(mut value: Value, enroll: &Enroll) -> Result<Value, CliError> {
    if let Some(path) = &enroll.wallet_out {
        let wallet = value.as_object_mut().and_then(|o| o.remove("wallet")).unwrap_or(Value::Null);
        std::fs::write(path, serde_json::to_vec_pretty(&wallet).expect("serializes"))?;
    }
    Ok(value)
}

fn run_client(conn: &Conn, command: Command) -> Result<(), CliError> {
    let c = connect(conn)?;
    let out = match command {
        Command::Serve(_) => unreachable!("handled in main"),
        Command::Ping => c.get("/system/ping")?,
        Command::Tokens(t) => match t {
            Tokens::List { status } => c.get(&format!("/admin/tokens{}", query(&[("status", status)])))?,
            Tokens::Issue { id } => c.post(&format!("/admin/tokens/{id}/issue"), &json!({}))?,
            Tokens::Expire { id } => c.post(&format!("/admin/tokens/{id}/expire"), &json!({}))?,
            Tokens::Request { controller } => c.request_token(&controller)?,
        },
        Command::Apps(a) => match a {
            Apps::List => c.get("/admin/applications")?,
            Apps::Get { id } => c.get(&format!("/admin/applications/{id}"))?,
            Apps::Add { id, name, role, trust, enroll } => {
                let body = json!({ "id": id, "name": name, "roleId": role, "trustIndex": trust, "secret": enroll.secret });
                enrolled(c.post("/admin/applications", &body)?, &enroll)?
            }
            Apps::Update { id, name, role } => {
                c.put(&format!("/admin/applications/{id}"), &json!({ "name": name, "roleId": role }))?
            }
            Apps::Remove { id } => c.delete(&format!("/admin/applications/{id}"))?,
            Apps::Trust { id, value } => {
                c.post(&format!("/admin/applications/{id}/trust"), &json!({ "value": value }))?
            }
        },
        Command::Controllers(k) => match k {
            Controllers::List => c.get("/admin/controllers")?,
            Controllers::Get { id } => c.get(&format!("/admin/controllers/{id}"))?,
            Controllers::Add { id, name, permissions, enroll } => {
                let body = json!({ "id": id, "name": name, "permissions": permissions, "secret": enroll.secret });
                enrolled(c.post("/admin/controllers", &body)?, &enroll)?
            }
            Controllers::Update { id, name, permissions } => c.put(
                &format!("/admin/controllers/{id}"),
                &json!({ "name": name, "permissions": permissions }),
            )?,
            Controllers::Remove { id } => c.delete(&format!("/admin/controllers/{id}"))?,
        },
        Command::Roles(r) => match r {
            Roles::List => c.get("/admin/roles")?,
            Roles::Get { id } => c.get(&format!("/admin/roles/{id}"))?,
            Roles::Add { id, name, permissions, priority } => c.post(
                "/admin/roles",
                &json!({ "id": id, "name": name, "permissions": permissions, "priority": priority }),
            )?,
            Roles::Update { id, name, permissions } => c.put(
                &format!("/admin/roles/{id}"),
                &json!({ "name": name, "permissions": permissions }),
            )?,
        },
        Command::Permissions(p) => match p {
            Permissions::List => c.get("/admin/permissions")?,
            Permissions::Get { id } => c.get(&format!("/admin/permissions/{id}"))?,
            Permissions::Add { id, name, resource_object } => c.post(
                "/admin/permissions",
                &json!({ "id": id, "name": name, "resourceObject": resource_object }),
            )?,
            Permissions::Remove { id } => c.delete(&format!("/admin/permissions/{id}"))?,
        },
        Command::Thresholds(t) => match t {
            Thresholds::List => c.get("/admin/thresholds")?,
            Thresholds::Set { object, value } => {
                c.put(&format!("/admin/thresholds/{object}"), &json!({ "value": value }))?
            }
        },
        Command::Logs { app, controller, limit } => c.get(&format!(
            "/logs{}",
            query(&[
                ("applicationId", app),
                ("controllerId", controller),
                ("limit", limit.map(|l| l.to_string())),
            ])
        ))?,
        Command::Blocks { from, limit } => c.get(&format!(
            "/blocks{}",
            query(&[("from", from.map(|f| f.to_string())), ("limit", limit.map(|l| l.to_string()))])
        ))?,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    Ok(())
}
