use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{RecommendRequest, Recommender, ServeError};

fn status(e: &ServeError) -> StatusCode {
    match e {
        ServeError::UnknownModel(_) => StatusCode::NOT_FOUND,
        ServeError::UnknownUser(_) | ServeError::NoKnownItems | ServeError::SequenceUnsupported { .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ServeError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServeError::Config(_) | ServeError::Load { .. } | ServeError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status(&self), Json(body)).into_response()
    }
}

async fn recommend(State(core): State<Arc<Recommender>>, body: Bytes) -> Response {
    // parsed by hand so that any malformed body maps to 400
    let req: RecommendRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return ServeError::InvalidRequest(format!("malformed body: {e}")).into_response(),
    };
    match core.recommend(&req) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn models(State(core): State<Arc<Recommender>>) -> Response {
    Json(core.inventory()).into_response()
}

async fn health(State(core): State<Arc<Recommender>>) -> Response {
    Json(json!({
        "status": "ok",
        "engine_version": crate::ENGINE_VERSION,
        "uptime_s": core.uptime_s(),
        "models": core.model_names().len(),
    }))
    .into_response()
}

pub fn router(core: Arc<Recommender>) -> Router {
    Router::new()
        .route("/recommend", post(recommend))
        .route("/models", get(models))
        .route("/health", get(health))
        .with_state(core)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve_http(core: Arc<Recommender>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(core))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    async fn call(core: &Arc<Recommender>, method: &str, uri: &str, body: &str) -> (StatusCode, serde_json::Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_owned()))
            .unwrap();
        let resp = router(Arc::clone(core)).oneshot(req).await.unwrap();
        let code = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (code, serde_json::from_slice(&bytes).unwrap())
    }

    #[tokio::test]
    async fn endpoints_and_status_codes() {
        let core = Arc::new(super::super::tests::core());
        let (c, v) = call(&core, "POST", "/recommend", r#"{"model":"ease","user_id":"u3","k":3}"#).await;
        assert_eq!(c, StatusCode::OK);
        assert_eq!(v["items"].as_array().unwrap().len(), 3);

        let (c, v) = call(&core, "POST", "/recommend", r#"{"model":"nope","user_id":"u3"}"#).await;
        assert_eq!(c, StatusCode::NOT_FOUND);
        assert_eq!(v["error"]["code"], "unknown_model");

        let (c, v) = call(&core, "POST", "/recommend", r#"{"model":"ease","user_id":"ghost"}"#).await;
        assert_eq!(c, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(v["error"]["code"], "unknown_user");

        let (c, _) = call(&core, "POST", "/recommend", "{not json").await;
        assert_eq!(c, StatusCode::BAD_REQUEST);

        let (c, v) = call(&core, "GET", "/models", "").await;
        assert_eq!(c, StatusCode::OK);
        assert_eq!(v.as_array().unwrap().len(), 2);

        let (c, v) = call(&core, "GET", "/health", "").await;
        assert_eq!(c, StatusCode::OK);
        assert_eq!(v["status"], "ok");
    }
}
