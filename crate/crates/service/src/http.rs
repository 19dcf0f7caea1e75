//! `POST /users` registers, `POST /decision` decides. Store work runs on the
//! blocking pool; the async side only parses and routes.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::service::{DecisionRequest, RegisterRequest, Service, ServiceError};
use crate::store::StoreError;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
}

fn error(status: StatusCode, code: &'static str, message: String) -> Response {
    (status, Json(ErrorBody { error: code, message })).into_response()
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        match self {
            ServiceError::Invalid(_) => error(StatusCode::BAD_REQUEST, "invalid_request", message),
            ServiceError::Store(StoreError::NotRegistered(_)) => {
                error(StatusCode::NOT_FOUND, "registration_required", message)
            }
            ServiceError::Store(StoreError::Duplicate(_)) => error(StatusCode::CONFLICT, "duplicate_user", message),
            ServiceError::Store(StoreError::Busy(_)) => {
                let mut r = error(StatusCode::TOO_MANY_REQUESTS, "busy", message);
                r.headers_mut()
                    .insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
                r
            }
            ServiceError::Store(StoreError::Quarantined { .. }) => {
                error(StatusCode::SERVICE_UNAVAILABLE, "quarantined", message)
            }
            ServiceError::Store(_) => {
                tracing::error!(%message, "store failure");
                error(StatusCode::INTERNAL_SERVER_ERROR, "store_failure", message)
            }
        }
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))
}

async fn blocking<T, F>(f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<(StatusCode, T), ServiceError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok((status, body))) => (status, Json(body)).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "worker_panic", e.to_string()),
    }
}

async fn register(State(svc): State<Service>, body: Bytes) -> Response {
    let req: RegisterRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    blocking(move || {
        svc.register_user(&req)?;
        Ok((StatusCode::CREATED, serde_json::json!({ "user_id": req.user_id })))
    })
    .await
}

async fn decision(State(svc): State<Service>, body: Bytes) -> Response {
    let req: DecisionRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    blocking(move || Ok((StatusCode::OK, svc.handle_request(&req)?))).await
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/users", post(register))
        .route("/decision", post(decision))
        .with_state(service)
}

pub async fn serve(service: Service, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %service.store().root().display(), "listening");
    axum::serve(listener, router(service)).await
}
