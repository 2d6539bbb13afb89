//! The MCP tool server. Pass `--stdio` to speak newline-delimited JSON-RPC on
//! stdin/stdout; otherwise a scripted session is replayed.

use std::path::PathBuf;
use std::sync::Arc;

use warpbench::ingest::{build_dataset, load_interactions, DedupPolicy, Schema};
use warpbench::models::{fit, Deadline, Family, ModelConfig, ParamValue};
use warpbench::serve::{Aliases, McpServer, Recommender, DEFAULT_PROTOCOL_VERSION};

const SESSION: &[&str] = &[
    r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"protocolVersion":"2024-11-05","capabilities":{},"clientInfo":{"name":"demo","version":"0"}}}"#,
    r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#,
    r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#,
    r#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"recommend","arguments":{"item_sequence":["The Last Harbor (sci-fi)","i6"],"top_k":3}}}"#,
    r#"{"jsonrpc":"2.0","id":4,"method":"tools/call","params":{"name":"recommend","arguments":{"user_id":"ghost"}}}"#,
    r#"{"jsonrpc":"2.0","id":5,"method":"tools/call","params":{"name":"recommend","arguments":{"top_k":-1}}}"#,
    r#"{"jsonrpc":"2.0","id":6,"method":"prompts/list"}"#,
    r#"{not json"#,
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let data = build_dataset(
        load_interactions(&dir.join("ratings.tsv"), &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let knn = ModelConfig::from_params(
        Family::ItemKnn,
        &[("neighbors".to_string(), ParamValue::Int(20))].into(),
    )?;
    let model = fit(&knn, &data, 0, &Deadline::none())?;
    let core = Recommender::from_models(vec![("itemknn".into(), model, PathBuf::from("memory"))], 5, true)?
        .with_aliases(Aliases::load(&dir.join("titles.tsv"))?);
    let server = McpServer::new(Arc::new(core), DEFAULT_PROTOCOL_VERSION);

    if std::env::args().any(|a| a == "--stdio") {
        server.run(std::io::stdin().lock(), std::io::stdout().lock())?;
        return Ok(());
    }
    for line in SESSION {
        println!(">> {line}");
        match server.handle_line(line) {
            Some(reply) => println!("<< {reply}\n"),
            None => println!("   (notification, no reply)\n"),
        }
    }
    Ok(())
}
