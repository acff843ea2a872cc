//! Knowledge-graph API access for Tasks 2 and 3.
//!
//! A declarative registry describes the available endpoints as documented
//! functions. The model is prompted with the rendered catalog and asked to
//! emit exactly one positional call (or the word "None"); the reply is
//! parsed leniently — surrounding prose is ignored by scanning for the
//! first known identifier followed by `(` — then validated strictly on
//! arity and argument kinds. Parse and execution failures never abort a
//! sample: the pipeline degrades to web-only context and the failure class
//! is kept for curation.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{AdapterId, ChatRequest, LlmClient, LlmError};
use crate::prompts;
use crate::segmenter::{split_oversize_text, Segment, SegmentOrigin};

/// Argument kind in a function signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    String,
    Number,
    DateString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiParam {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpMethod {
    Get,
    Post,
}

impl Default for HttpMethod {
    fn default() -> Self {
        HttpMethod::Get
    }
}

/// One callable endpoint: signature, human-readable doc, wire binding, and
/// the formatter that turns its responses into segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiFunction {
    pub name: String,
    pub doc: String,
    #[serde(default)]
    pub params: Vec<ApiParam>,
    #[serde(default)]
    pub method: HttpMethod,
    pub endpoint_path: String,
    #[serde(default = "default_formatter")]
    pub formatter: String,
}

fn default_formatter() -> String {
    "generic".to_string()
}

impl ApiFunction {
    fn required_count(&self) -> usize {
        self.params.iter().filter(|p| p.required).count()
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry file {path}: {detail}")]
    Unreadable { path: String, detail: String },
    #[error("registry is empty")]
    Empty,
    #[error("duplicate function name {name:?}")]
    DuplicateName { name: String },
    #[error("function {name:?} lists required parameter {param:?} after an optional one")]
    RequiredAfterOptional { name: String, param: String },
    #[error("function name {name:?} is not a valid identifier")]
    BadName { name: String },
}

/// Validated, immutable function registry.
#[derive(Debug, Clone)]
pub struct ApiRegistry {
    functions: Vec<ApiFunction>,
}

impl ApiRegistry {
    pub fn new(functions: Vec<ApiFunction>) -> Result<Self, RegistryError> {
        if functions.is_empty() {
            return Err(RegistryError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for function in &functions {
            if !is_identifier(&function.name) {
                return Err(RegistryError::BadName {
                    name: function.name.clone(),
                });
            }
            if !seen.insert(function.name.clone()) {
                return Err(RegistryError::DuplicateName {
                    name: function.name.clone(),
                });
            }
            let mut saw_optional = false;
            for param in &function.params {
                if param.required && saw_optional {
                    return Err(RegistryError::RequiredAfterOptional {
                        name: function.name.clone(),
                        param: param.name.clone(),
                    });
                }
                saw_optional |= !param.required;
            }
        }
        Ok(ApiRegistry { functions })
    }

    /// Loads a JSON array of function definitions.
    pub fn from_json_file(path: &std::path::Path) -> Result<Self, RegistryError> {
        let data = std::fs::read_to_string(path).map_err(|e| RegistryError::Unreadable {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let functions: Vec<ApiFunction> =
            serde_json::from_str(&data).map_err(|e| RegistryError::Unreadable {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        ApiRegistry::new(functions)
    }

    pub fn functions(&self) -> &[ApiFunction] {
        &self.functions
    }

    pub fn find(&self, name: &str) -> Option<&ApiFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// A literal argument value.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue {
    Str(String),
    Num(f64),
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            ArgValue::Num(n) => write!(f, "{n}"),
        }
    }
}

/// A parsed, validated call. Equality compares the function and arguments;
/// `raw` is provenance only.
#[derive(Debug, Clone)]
pub struct ApiCall {
    pub function: ApiFunction,
    pub args: Vec<ArgValue>,
    pub raw: String,
}

impl PartialEq for ApiCall {
    fn eq(&self, other: &Self) -> bool {
        self.function == other.function && self.args == other.args
    }
}

/// Canonical single-line rendering: `name(arg1, arg2)`.
pub fn render_call(call: &ApiCall) -> String {
    let args: Vec<String> = call.args.iter().map(ArgValue::to_string).collect();
    format!("{}({})", call.function.name, args.join(", "))
}

/// Deterministic text block listing every function signature and doc, in
/// registry order. Equals the concatenation of its per-function entries.
pub fn render_catalog(registry: &ApiRegistry) -> String {
    registry.functions().iter().map(render_catalog_entry).collect()
}

/// One catalog entry: `name(params)` with optional parameters marked `?`,
/// then the doc, newline-terminated.
pub fn render_catalog_entry(function: &ApiFunction) -> String {
    let params: Vec<String> = function
        .params
        .iter()
        .map(|p| {
            if p.required {
                p.name.clone()
            } else {
                format!("{}?", p.name)
            }
        })
        .collect();
    format!("{}({})\n  {}\n", function.name, params.join(", "), function.doc)
}

/// Asks the model for one call against the registry. Returns the raw model
/// text; parsing is a separate step.
pub async fn generate_call(
    llm: &LlmClient,
    adapter: &AdapterId,
    question: &str,
    query_time: &str,
    registry: &ApiRegistry,
) -> Result<String, LlmError> {
    let prompt = prompts::render_call_prompt(registry, question, query_time);
    let request = ChatRequest::new(adapter.clone(), &prompt).with_max_tokens(128);
    Ok(llm.chat(&request).await?.text)
}

/// Parse outcome: an explicit "no call" or a validated call.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedCall {
    NoCall,
    Call(ApiCall),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CallParseError {
    #[error("no known function call in {raw:?}")]
    UnknownFunction { raw: String },
    #[error("{function} expects {expected_min}..={expected_max} arguments, got {got}")]
    ArityMismatch {
        function: String,
        expected_min: usize,
        expected_max: usize,
        got: usize,
    },
    #[error("bad literal for {function}: {detail}")]
    BadLiteral { function: String, detail: String },
}

/// Parses a model reply into a call. Grammar: `identifier "(" literals ")"`
/// with double/single-quoted strings or bare numbers; prose around the call
/// is ignored. A standalone "None" (any case) is an explicit no-call.
/// Quoted numerics coerce to number parameters; all other kind mismatches
/// are rejected.
pub fn parse_call(raw: &str, registry: &ApiRegistry) -> Result<ParsedCall, CallParseError> {
    let trimmed = raw.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`');
    let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
    if trimmed.eq_ignore_ascii_case("none") {
        return Ok(ParsedCall::NoCall);
    }

    let (function, args_start) =
        find_call_site(raw, registry).ok_or_else(|| CallParseError::UnknownFunction {
            raw: truncate_for_error(raw),
        })?;
    let args = parse_args(&raw[args_start..], &function.name)?;

    let min = function.required_count();
    let max = function.params.len();
    if args.len() < min || args.len() > max {
        return Err(CallParseError::ArityMismatch {
            function: function.name.clone(),
            expected_min: min,
            expected_max: max,
            got: args.len(),
        });
    }

    let mut coerced = Vec::with_capacity(args.len());
    for (arg, param) in args.into_iter().zip(&function.params) {
        let value = match (&param.kind, arg) {
            (ParamKind::String | ParamKind::DateString, ArgValue::Str(s)) => ArgValue::Str(s),
            (ParamKind::Number, ArgValue::Num(n)) => ArgValue::Num(n),
            (ParamKind::Number, ArgValue::Str(s)) => {
                let n: f64 = s.trim().parse().map_err(|_| CallParseError::BadLiteral {
                    function: function.name.clone(),
                    detail: format!("{s:?} is not a number for parameter {}", param.name),
                })?;
                ArgValue::Num(n)
            }
            (ParamKind::String | ParamKind::DateString, ArgValue::Num(n)) => {
                return Err(CallParseError::BadLiteral {
                    function: function.name.clone(),
                    detail: format!("parameter {} expects a quoted string, got {n}", param.name),
                });
            }
        };
        coerced.push(value);
    }

    Ok(ParsedCall::Call(ApiCall {
        function: function.clone(),
        args: coerced,
        raw: raw.to_string(),
    }))
}

fn truncate_for_error(raw: &str) -> String {
    raw.chars().take(120).collect()
}

/// Finds the earliest registry-known identifier followed by `(`. Returns
/// the function and the byte offset just past the opening parenthesis.
fn find_call_site<'r>(raw: &str, registry: &'r ApiRegistry) -> Option<(&'r ApiFunction, usize)> {
    let mut best: Option<(usize, &ApiFunction, usize)> = None;
    for function in registry.functions() {
        let mut from = 0;
        while let Some(offset) = raw[from..].find(&function.name) {
            let start = from + offset;
            let end = start + function.name.len();
            let boundary_before =
                start == 0 || !raw[..start].chars().next_back().is_some_and(is_ident_char);
            let boundary_after = !raw[end..].chars().next().is_some_and(is_ident_char);
            if boundary_before && boundary_after {
                let after = raw[end..].trim_start();
                if after.starts_with('(') {
                    let paren = end + (raw[end..].len() - after.len());
                    let better = match best {
                        None => true,
                        // earliest call site wins; longest name on ties
                        Some((bs, bf, _)) => {
                            start < bs || (start == bs && function.name.len() > bf.name.len())
                        }
                    };
                    if better {
                        best = Some((start, function, paren + 1));
                    }
                    break;
                }
            }
            from = end;
        }
    }
    best.map(|(_, function, args_start)| (function, args_start))
}

/// Parses `literal, literal, ... )`.
fn parse_args(input: &str, function: &str) -> Result<Vec<ArgValue>, CallParseError> {
    let bad = |detail: String| CallParseError::BadLiteral {
        function: function.to_string(),
        detail,
    };
    let mut args = Vec::new();
    let mut rest = input.trim_start();
    if let Some(after) = rest.strip_prefix(')') {
        let _ = after;
        return Ok(args);
    }
    loop {
        rest = rest.trim_start();
        let Some(first) = rest.chars().next() else {
            return Err(bad("unterminated call".to_string()));
        };
        if first == '"' || first == '\'' {
            let mut value = String::new();
            let mut chars = rest.char_indices().skip(1);
            let mut end = None;
            while let Some((i, c)) = chars.next() {
                if c == '\\' {
                    if let Some((_, escaped)) = chars.next() {
                        value.push(escaped);
                    }
                } else if c == first {
                    end = Some(i + c.len_utf8());
                    break;
                } else {
                    value.push(c);
                }
            }
            let end = end.ok_or_else(|| bad("unterminated string literal".to_string()))?;
            args.push(ArgValue::Str(value));
            rest = &rest[end..];
        } else {
            let end = rest
                .find([',', ')'])
                .ok_or_else(|| bad("unterminated call".to_string()))?;
            let literal = rest[..end].trim();
            let n: f64 = literal
                .parse()
                .map_err(|_| bad(format!("{literal:?} is not a literal")))?;
            if !n.is_finite() {
                return Err(bad(format!("{literal:?} is not finite")));
            }
            args.push(ArgValue::Num(n));
            rest = &rest[end..];
        }
        rest = rest.trim_start();
        if let Some(after) = rest.strip_prefix(',') {
            rest = after;
            continue;
        }
        if let Some(_after) = rest.strip_prefix(')') {
            return Ok(args);
        }
        return Err(bad(format!("expected ',' or ')' near {:?}", truncate_for_error(rest))));
    }
}

/// Why a call produced no context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallFailure {
    UnknownFunction,
    ArityMismatch,
    BadLiteral,
    /// Transport-level failure: could not reach the endpoint at all.
    /// Distinguished from HTTP failures because curation aborts on it.
    Unreachable,
    Http4xx,
    Http5xx,
    Timeout,
    BadBody,
}

impl From<&CallParseError> for CallFailure {
    fn from(err: &CallParseError) -> Self {
        match err {
            CallParseError::UnknownFunction { .. } => CallFailure::UnknownFunction,
            CallParseError::ArityMismatch { .. } => CallFailure::ArityMismatch,
            CallParseError::BadLiteral { .. } => CallFailure::BadLiteral,
        }
    }
}

/// End state of one knowledge-graph interaction.
#[derive(Debug, Clone, PartialEq)]
pub enum CallOutcome {
    NoCall,
    Executed { body: Value, segments: Vec<Segment> },
    Failed(CallFailure),
}

impl CallOutcome {
    pub fn segments(&self) -> &[Segment] {
        match self {
            CallOutcome::Executed { segments, .. } => segments,
            _ => &[],
        }
    }

    pub fn is_executed(&self) -> bool {
        matches!(self, CallOutcome::Executed { .. })
    }
}

/// HTTP client for the knowledge-graph service.
#[derive(Debug, Clone)]
pub struct KgClient {
    http: reqwest::Client,
    base_url: String,
    timeout: Duration,
}

impl KgClient {
    pub fn new(base_url: &str, timeout_ms: u64) -> Self {
        KgClient {
            http: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            timeout: Duration::from_millis(timeout_ms),
        }
    }

    /// Executes a validated call. Failures are carried in the outcome,
    /// never thrown: 2xx with a JSON body is `Executed`, anything else is
    /// `Failed` with its class.
    pub async fn execute_call(&self, call: &ApiCall) -> CallOutcome {
        let url = format!("{}{}", self.base_url, call.function.endpoint_path);
        let request = match call.function.method {
            HttpMethod::Get => {
                let pairs: Vec<(String, String)> = call
                    .function
                    .params
                    .iter()
                    .zip(&call.args)
                    .map(|(param, arg)| {
                        let value = match arg {
                            ArgValue::Str(s) => s.clone(),
                            ArgValue::Num(n) => n.to_string(),
                        };
                        (param.name.clone(), value)
                    })
                    .collect();
                self.http.get(&url).query(&pairs)
            }
            HttpMethod::Post => {
                let mut object = serde_json::Map::new();
                for (param, arg) in call.function.params.iter().zip(&call.args) {
                    let value = match arg {
                        ArgValue::Str(s) => Value::String(s.clone()),
                        ArgValue::Num(n) => serde_json::Number::from_f64(*n)
                            .map(Value::Number)
                            .unwrap_or(Value::Null),
                    };
                    object.insert(param.name.clone(), value);
                }
                self.http.post(&url).json(&Value::Object(object))
            }
        };

        let response = match request.timeout(self.timeout).send().await {
            Ok(response) => response,
            Err(e) if e.is_timeout() => return CallOutcome::Failed(CallFailure::Timeout),
            Err(_) => return CallOutcome::Failed(CallFailure::Unreachable),
        };
        let status = response.status();
        if status.is_client_error() {
            return CallOutcome::Failed(CallFailure::Http4xx);
        }
        if !status.is_success() {
            return CallOutcome::Failed(CallFailure::Http5xx);
        }
        match response.json::<Value>().await {
            Ok(body) => CallOutcome::Executed {
                body,
                segments: Vec::new(),
            },
            Err(_) => CallOutcome::Failed(CallFailure::BadBody),
        }
    }
}

/// Renders a response document into `ApiResponse` segments: key paths
/// become `key: value` lines, grouped per top-level key, each group split
/// under the segment threshold. The "object" formatter additionally
/// requires a top-level JSON object.
pub fn format_response(
    body: &Value,
    formatter: &str,
    max_chars: usize,
    doc_index: usize,
) -> Result<Vec<Segment>, CallFailure> {
    if formatter == "object" && !body.is_object() {
        return Err(CallFailure::BadBody);
    }

    let groups: Vec<String> = match body {
        Value::Object(map) => map
            .iter()
            .map(|(key, value)| {
                let mut lines = Vec::new();
                flatten(key, value, &mut lines);
                lines.join("\n")
            })
            .filter(|group| !group.trim().is_empty())
            .collect(),
        other => {
            let mut lines = Vec::new();
            flatten("", other, &mut lines);
            let group = lines.join("\n");
            if group.trim().is_empty() {
                Vec::new()
            } else {
                vec![group]
            }
        }
    };

    let mut segments = Vec::new();
    for (group_index, group) in groups.into_iter().enumerate() {
        if group.chars().count() < max_chars {
            segments.push(Segment::new(
                doc_index,
                group,
                SegmentOrigin::ApiResponse,
                vec![group_index],
            ));
        } else {
            for (ordinal, piece) in split_oversize_text(&group, max_chars).into_iter().enumerate()
            {
                segments.push(Segment::new(
                    doc_index,
                    piece,
                    SegmentOrigin::ApiResponse,
                    vec![group_index, ordinal],
                ));
            }
        }
    }
    Ok(segments)
}

fn flatten(prefix: &str, value: &Value, lines: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (key, child) in map {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten(&path, child, lines);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, lines);
            }
        }
        leaf => {
            let rendered = match leaf {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if prefix.is_empty() {
                lines.push(rendered);
            } else {
                lines.push(format!("{prefix}: {rendered}"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;
    use webrag_testkit::{KgFixture, StubKg};

    pub(crate) fn price_registry() -> ApiRegistry {
        ApiRegistry::new(vec![
            ApiFunction {
                name: "get_price".to_string(),
                doc: "Returns the latest price for a ticker symbol.".to_string(),
                params: vec![ApiParam {
                    name: "symbol".to_string(),
                    kind: ParamKind::String,
                    required: true,
                }],
                method: HttpMethod::Get,
                endpoint_path: "/price".to_string(),
                formatter: "generic".to_string(),
            },
            ApiFunction {
                name: "get_volume".to_string(),
                doc: "Returns trading volume for a symbol over n days.".to_string(),
                params: vec![
                    ApiParam {
                        name: "symbol".to_string(),
                        kind: ParamKind::String,
                        required: true,
                    },
                    ApiParam {
                        name: "days".to_string(),
                        kind: ParamKind::Number,
                        required: false,
                    },
                ],
                method: HttpMethod::Get,
                endpoint_path: "/volume".to_string(),
                formatter: "generic".to_string(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn catalog_lists_functions_in_order_and_concatenates() {
        let registry = price_registry();
        let catalog = render_catalog(&registry);
        assert!(catalog.contains("get_price(symbol)"));
        assert!(catalog.contains("get_volume(symbol, days?)"));
        let by_parts: String = registry.functions().iter().map(render_catalog_entry).collect();
        assert_eq!(catalog, by_parts);
        assert!(catalog.find("get_price").unwrap() < catalog.find("get_volume").unwrap());
    }

    #[test]
    fn parse_standalone_none_is_no_call() {
        let registry = price_registry();
        for raw in ["None", "none", " NONE. ", "\"None\""] {
            assert_eq!(parse_call(raw, &registry).unwrap(), ParsedCall::NoCall);
        }
    }

    #[test]
    fn parse_simple_call() {
        let registry = price_registry();
        let parsed = parse_call("get_price(\"AAPL\")", &registry).unwrap();
        match parsed {
            ParsedCall::Call(call) => {
                assert_eq!(call.function.name, "get_price");
                assert_eq!(call.args, vec![ArgValue::Str("AAPL".to_string())]);
            }
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn parse_ignores_surrounding_prose() {
        let registry = price_registry();
        let parsed =
            parse_call("Sure! I will call get_price(\"AAPL\") right away.", &registry).unwrap();
        assert!(matches!(parsed, ParsedCall::Call(_)));
    }

    #[test]
    fn parse_rejects_arity_violation() {
        let registry = price_registry();
        let err = parse_call("I will call get_price(\"AAPL\", 3) today", &registry).unwrap_err();
        assert!(matches!(err, CallParseError::ArityMismatch { .. }));
    }

    #[test]
    fn parse_rejects_unknown_function() {
        let registry = price_registry();
        let err = parse_call("frobnicate(\"x\")", &registry).unwrap_err();
        assert!(matches!(err, CallParseError::UnknownFunction { .. }));
    }

    #[test]
    fn parse_coerces_quoted_numbers_only_for_number_params() {
        let registry = price_registry();
        let parsed = parse_call("get_volume(\"AAPL\", \"30\")", &registry).unwrap();
        match parsed {
            ParsedCall::Call(call) => {
                assert_eq!(call.args[1], ArgValue::Num(30.0));
            }
            other => panic!("expected call, got {other:?}"),
        }
        let err = parse_call("get_price(42)", &registry).unwrap_err();
        assert!(matches!(err, CallParseError::BadLiteral { .. }));
    }

    #[test]
    fn parse_optional_args_may_be_omitted() {
        let registry = price_registry();
        let parsed = parse_call("get_volume(\"AAPL\")", &registry).unwrap();
        match parsed {
            ParsedCall::Call(call) => assert_eq!(call.args.len(), 1),
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn render_then_parse_round_trips() {
        let registry = price_registry();
        let call = ApiCall {
            function: registry.find("get_volume").unwrap().clone(),
            args: vec![ArgValue::Str("AA\"PL".to_string()), ArgValue::Num(30.5)],
            raw: String::new(),
        };
        let rendered = render_call(&call);
        let reparsed = parse_call(&rendered, &registry).unwrap();
        assert_eq!(reparsed, ParsedCall::Call(call));
    }

    proptest! {
        #[test]
        fn random_calls_round_trip(
            symbol in "[A-Za-z0-9 \\\\\"']{0,12}",
            days in proptest::option::of(-1e6f64..1e6),
        ) {
            let registry = price_registry();
            let mut args = vec![ArgValue::Str(symbol)];
            if let Some(days) = days {
                args.push(ArgValue::Num(days));
            }
            let call = ApiCall {
                function: registry.find("get_volume").unwrap().clone(),
                args,
                raw: String::new(),
            };
            let reparsed = parse_call(&render_call(&call), &registry).unwrap();
            prop_assert_eq!(reparsed, ParsedCall::Call(call));
        }
    }

    #[tokio::test]
    async fn execute_hits_fixture() {
        let stub = StubKg::new(vec![KgFixture::new(
            "/price",
            &["AAPL"],
            json!({"price": 203.51}),
        )])
        .serve(0)
        .await
        .unwrap();
        let client = KgClient::new(&stub.url(), 2_000);
        let registry = price_registry();
        let call = match parse_call("get_price(\"AAPL\")", &registry).unwrap() {
            ParsedCall::Call(call) => call,
            _ => unreachable!(),
        };
        let outcome = client.execute_call(&call).await;
        match &outcome {
            CallOutcome::Executed { body, .. } => assert_eq!(body["price"], json!(203.51)),
            other => panic!("expected Executed, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn execute_unregistered_args_is_http4xx() {
        let stub = StubKg::new(vec![KgFixture::new("/price", &["AAPL"], json!({}))])
            .serve(0)
            .await
            .unwrap();
        let client = KgClient::new(&stub.url(), 2_000);
        let registry = price_registry();
        let call = match parse_call("get_price(\"MSFT\")", &registry).unwrap() {
            ParsedCall::Call(call) => call,
            _ => unreachable!(),
        };
        assert_eq!(
            client.execute_call(&call).await,
            CallOutcome::Failed(CallFailure::Http4xx)
        );
    }

    #[tokio::test]
    async fn execute_times_out_against_slow_fixture() {
        let stub = StubKg::new(vec![KgFixture::new(
            "/price",
            &["AAPL"],
            json!({"price": 1.0}),
        )
        .with_delay(500)])
        .serve(0)
        .await
        .unwrap();
        let client = KgClient::new(&stub.url(), 30);
        let registry = price_registry();
        let call = match parse_call("get_price(\"AAPL\")", &registry).unwrap() {
            ParsedCall::Call(call) => call,
            _ => unreachable!(),
        };
        assert_eq!(
            client.execute_call(&call).await,
            CallOutcome::Failed(CallFailure::Timeout)
        );
    }

    #[tokio::test]
    async fn execute_unreachable_endpoint() {
        let client = KgClient::new("http://127.0.0.1:1", 500);
        let registry = price_registry();
        let call = match parse_call("get_price(\"AAPL\")", &registry).unwrap() {
            ParsedCall::Call(call) => call,
            _ => unreachable!(),
        };
        assert_eq!(
            client.execute_call(&call).await,
            CallOutcome::Failed(CallFailure::Unreachable)
        );
    }

    #[test]
    fn format_empty_object_is_empty() {
        let segments = format_response(&json!({}), "generic", 2000, 0).unwrap();
        assert!(segments.is_empty());
    }

    #[test]
    fn format_flat_object() {
        let segments = format_response(&json!({"price": 203.51}), "generic", 2000, 5).unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].text, "price: 203.51");
        assert_eq!(segments[0].origin, SegmentOrigin::ApiResponse);
        assert_eq!(segments[0].doc_index, 5);
    }

    #[test]
    fn format_nested_body_stays_under_threshold() {
        let items: Vec<Value> = (0..500)
            .map(|i| json!({"name": format!("item-{i}"), "value": i}))
            .collect();
        let body = json!({"items": items, "meta": {"count": 500}});
        let segments = format_response(&body, "generic", 2000, 0).unwrap();
        assert!(!segments.is_empty());
        for segment in &segments {
            assert!(segment.char_len < 2000);
            assert_eq!(segment.origin, SegmentOrigin::ApiResponse);
        }
    }

    #[test]
    fn object_formatter_rejects_non_objects() {
        assert_eq!(
            format_response(&json!([1, 2]), "object", 2000, 0).unwrap_err(),
            CallFailure::BadBody
        );
    }
}
