//! The REST API over two freshly trained models.
//!
//! Without arguments a few requests are answered in-process. With `--listen <addr>` the
//! same router is served until ctrl-c:
//!
//! ```text
//! curl -s localhost:8080/recommend -d '{"model":"ease","item_sequence":["i1","i4"],"k":3}'
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;
use warpbench::ingest::{build_dataset, load_interactions, DedupPolicy, Schema};
use warpbench::models::{fit, Deadline, Family, ModelConfig, ParamValue};
use warpbench::serve::{router, serve_http, Aliases, Recommender};

fn core() -> Result<Recommender, Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let data = build_dataset(
        load_interactions(&dir.join("ratings.tsv"), &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let ease = ModelConfig::from_params(Family::Ease, &[("l2".to_string(), ParamValue::Real(200.0))].into())?;
    let bpr = ModelConfig::from_params(
        Family::BprMf,
        &[
            ("factors".to_string(), ParamValue::Int(16)),
            ("learning_rate".to_string(), ParamValue::Real(0.05)),
            ("epochs".to_string(), ParamValue::Int(10)),
        ]
        .into(),
    )?;
    let models = vec![
        (
            "ease".to_string(),
            fit(&ease, &data, 0, &Deadline::none())?,
            PathBuf::from("memory"),
        ),
        (
            "bpr".to_string(),
            fit(&bpr, &data, 0, &Deadline::none())?,
            PathBuf::from("memory"),
        ),
    ];
    Ok(Recommender::from_models(models, 5, true)?.with_aliases(Aliases::load(&dir.join("titles.tsv"))?))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let core = Arc::new(core()?);
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("--listen") {
        let addr = args.get(2).map_or("127.0.0.1:8080", String::as_str);
        println!("listening on {addr}");
        serve_http(core, addr).await?;
        return Ok(());
    }

    let app = router(core);
    let requests = [
        ("GET", "/health", ""),
        ("GET", "/models", ""),
        ("POST", "/recommend", r#"{"model":"ease","user_id":"u1","k":3}"#),
        (
            "POST",
            "/recommend",
            r#"{"model":"ease","item_sequence":["The Silent Harbor (drama)","i4"],"k":3}"#,
        ),
        ("POST", "/recommend", r#"{"model":"bpr","item_sequence":["i1"]}"#),
        ("POST", "/recommend", r#"{"model":"ease","user_id":"nobody"}"#),
        ("POST", "/recommend", r#"{"model":"knn","user_id":"u1"}"#),
        ("POST", "/recommend", r#"{"model":"ease","#),
    ];
    for (method, uri, body) in requests {
        let (status, text) = call(&app, method, uri, body).await;
        println!("{method} {uri} {body}\n  -> {status} {text}\n");
    }
    Ok(())
}
