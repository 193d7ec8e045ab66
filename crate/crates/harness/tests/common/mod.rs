use std::sync::Arc;

use nbguard_gateway::http::router;
use nbguard_gateway::Gateway;
use tokio::runtime::Runtime;

/// A gateway served on an ephemeral local port until dropped.
pub struct Server {
    pub url: String,
    _runtime: Runtime,
}

pub fn serve(gateway: Arc<Gateway>) -> Server {
    let runtime = Runtime::new().expect("tokio runtime");
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .expect("bind");
    let url = format!("http://{}", listener.local_addr().expect("local addr"));
    runtime.spawn(async move { axum::serve(listener, router(gateway)).await });
    Server { url, _runtime: runtime }
}
