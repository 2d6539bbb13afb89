use std::io::{BufRead, Write};
use std::sync::Arc;

use serde_json::{json, Value};

use super::{RecommendRequest, Recommender};

pub const DEFAULT_PROTOCOL_VERSION: &str = "2024-11-05";

const PARSE_ERROR: i64 = -32700;
const INVALID_REQUEST: i64 = -32600;
const METHOD_NOT_FOUND: i64 = -32601;
const INVALID_PARAMS: i64 = -32602;

fn error(id: Value, code: i64, message: impl Into<String>) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": { "code": code, "message": message.into() } })
}

fn success(id: Value, result: Value) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "result": result })
}

/// JSON-RPC 2.0 tool server exposing a single `recommend` tool.
pub struct McpServer {
    core: Arc<Recommender>,
    protocol_version: String,
}

impl McpServer {
    pub fn new(core: Arc<Recommender>, protocol_version: &str) -> Self {
        Self {
            core,
            protocol_version: protocol_version.to_owned(),
        }
    }

    fn tool(&self) -> Value {
        let models = self.core.model_names();
        json!({
            "name": "recommend",
            "description": "Rank catalog items for a known user or for a sequence of item IDs or titles.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "model": { "type": "string", "enum": models, "description": "Model to query; optional when one model is served." },
                    "user_id": { "type": "string", "description": "Raw user ID from the training data." },
                    "item_sequence": { "type": "array", "items": { "type": "string" }, "description": "Raw item IDs or display titles." },
                    "top_k": { "type": "integer", "minimum": 1, "default": self.core.default_k() }
                },
                "oneOf": [ { "required": ["user_id"] }, { "required": ["item_sequence"] } ],
                "additionalProperties": false
            }
        })
    }

    /// Handles one newline-delimited message; notifications produce no reply.
    pub fn handle_line(&self, line: &str) -> Option<String> {
        let reply = match serde_json::from_str::<Value>(line) {
            Ok(v) => self.handle(v)?,
            Err(e) => error(Value::Null, PARSE_ERROR, format!("parse error: {e}")),
        };
        Some(reply.to_string())
    }

    pub fn handle(&self, msg: Value) -> Option<Value> {
        let Some(obj) = msg.as_object() else {
            return Some(error(Value::Null, INVALID_REQUEST, "request must be a JSON object"));
        };
        let id = obj.get("id").cloned();
        let method = obj.get("method").and_then(Value::as_str);
        if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") || method.is_none() {
            return Some(error(
                id.unwrap_or(Value::Null),
                INVALID_REQUEST,
                "not a JSON-RPC 2.0 request",
            ));
        }
        // notifications carry no id and get no response
        let id = id?;
        let params = obj.get("params").cloned().unwrap_or(Value::Null);
        Some(match method.expect("checked above") {
            "initialize" => success(
                id,
                json!({
                    "protocolVersion": self.protocol_version,
                    "capabilities": { "tools": { "listChanged": false } },
                    "serverInfo": { "name": "warpbench", "version": env!("CARGO_PKG_VERSION") }
                }),
            ),
            "ping" => success(id, json!({})),
            "tools/list" => success(id, json!({ "tools": [self.tool()] })),
            "tools/call" => self.call(id, params),
            other => error(id, METHOD_NOT_FOUND, format!("method `{other}` not found")),
        })
    }

    fn call(&self, id: Value, params: Value) -> Value {
        let name = params.get("name").and_then(Value::as_str);
        if name != Some("recommend") {
            return error(id, INVALID_PARAMS, format!("unknown tool {:?}", name.unwrap_or("")));
        }
        let args = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
        let req: RecommendRequest = match serde_json::from_value(args) {
            Ok(r) => r,
            Err(e) => return error(id, INVALID_PARAMS, format!("invalid arguments: {e}")),
        };
        match self.core.recommend(&req) {
            Ok(resp) => {
                let structured = serde_json::to_value(&resp).expect("response serializes");
                success(
                    id,
                    json!({
                        "content": [{ "type": "text", "text": structured.to_string() }],
                        "structuredContent": structured,
                        "isError": false
                    }),
                )
            }
            Err(e) if e.code() == "invalid_request" => error(id, INVALID_PARAMS, e.to_string()),
            // domain failures are tool results so an agent can read and react to them
            Err(e) => success(
                id,
                json!({
                    "content": [{ "type": "text", "text": e.to_string() }],
                    "structuredContent": { "error": { "code": e.code(), "message": e.to_string() } },
                    "isError": true
                }),
            ),
        }
    }

    /// Strictly sequential request/response loop until EOF.
    pub fn run<R: BufRead, W: Write>(&self, input: R, mut output: W) -> std::io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(reply) = self.handle_line(&line) {
                writeln!(output, "{reply}")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}
