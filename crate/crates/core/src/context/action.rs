use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const BRANCH_TOOL: &str = "branch";
pub const RETURN_TOOL: &str = "return";
pub const FINISH_TOOL: &str = "finish";

/// What the policy emitted at one step.
///
/// Branch, return and finish calls may also arrive as a raw [`ActionKind::ToolCall`]
/// carrying the tool name; [`ActionKind::normalize`] turns those into the typed
/// variants or reports which required field is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActionKind {
    Reason {
        text: String,
    },
    ToolCall {
        name: String,
        #[serde(default)]
        arguments: Map<String, Value>,
    },
    Branch {
        description: String,
        prompt: String,
    },
    Return {
        message: String,
    },
    Finish {
        answer: String,
        explanation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        confidence: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("tool `{tool}` is missing required field `{field}`")]
    MissingField { tool: &'static str, field: &'static str },
    #[error("tool `{tool}` field `{field}` must be a non-empty string")]
    EmptyField { tool: &'static str, field: &'static str },
}

fn required(args: &Map<String, Value>, tool: &'static str, field: &'static str) -> Result<String, ActionError> {
    match args.get(field) {
        None | Some(Value::Null) => Err(ActionError::MissingField { tool, field }),
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(ActionError::EmptyField { tool, field }),
        Some(other) => Ok(other.to_string()),
    }
}

fn non_empty(text: &str, tool: &'static str, field: &'static str) -> Result<(), ActionError> {
    if text.trim().is_empty() {
        Err(ActionError::EmptyField { tool, field })
    } else {
        Ok(())
    }
}

impl ActionKind {
    pub fn reason(text: impl Into<String>) -> Self {
        Self::Reason { text: text.into() }
    }

    pub fn tool(name: impl Into<String>, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(map) => map,
            _ => Map::new(),
        };
        Self::ToolCall { name: name.into(), arguments }
    }

    pub fn branch(description: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self::Branch { description: description.into(), prompt: prompt.into() }
    }

    pub fn ret(message: impl Into<String>) -> Self {
        Self::Return { message: message.into() }
    }

    pub fn finish(answer: impl Into<String>, explanation: impl Into<String>) -> Self {
        Self::Finish { answer: answer.into(), explanation: explanation.into(), confidence: None }
    }

    /// Short kind label used in traces: the tool name, or `reason`.
    pub fn label(&self) -> &str {
        match self {
            Self::Reason { .. } => "reason",
            Self::ToolCall { name, .. } => name,
            Self::Branch { .. } => BRANCH_TOOL,
            Self::Return { .. } => RETURN_TOOL,
            Self::Finish { .. } => FINISH_TOOL,
        }
    }

    pub fn is_branch(&self) -> bool {
        matches!(self, Self::Branch { .. })
    }

    pub fn is_return(&self) -> bool {
        matches!(self, Self::Return { .. })
    }

    pub fn is_tool_call(&self) -> bool {
        !matches!(self, Self::Reason { .. })
    }

    /// Resolves reserved tool names into typed variants and checks required fields
    /// of the branch/return/finish schemas.
    pub fn normalize(self) -> Result<Self, ActionError> {
        match self {
            Self::ToolCall { name, arguments } => match name.as_str() {
                BRANCH_TOOL => Ok(Self::Branch {
                    description: required(&arguments, BRANCH_TOOL, "description")?,
                    prompt: required(&arguments, BRANCH_TOOL, "prompt")?,
                }),
                RETURN_TOOL => Ok(Self::Return { message: required(&arguments, RETURN_TOOL, "message")? }),
                FINISH_TOOL => Ok(Self::Finish {
                    answer: required(&arguments, FINISH_TOOL, "answer")?,
                    explanation: required(&arguments, FINISH_TOOL, "explanation")?,
                    confidence: arguments.get("confidence").and_then(|v| match v {
                        Value::String(s) => Some(s.clone()),
                        Value::Null => None,
                        other => Some(other.to_string()),
                    }),
                }),
                _ => Ok(Self::ToolCall { name, arguments }),
            },
            Self::Branch { description, prompt } => {
                non_empty(&description, BRANCH_TOOL, "description")?;
                non_empty(&prompt, BRANCH_TOOL, "prompt")?;
                Ok(Self::Branch { description, prompt })
            }
            Self::Return { message } => {
                non_empty(&message, RETURN_TOOL, "message")?;
                Ok(Self::Return { message })
            }
            Self::Finish { answer, explanation, confidence } => {
                // Empty answers are graded as wrong, not rejected.
                Ok(Self::Finish { answer, explanation, confidence })
            }
            reason @ Self::Reason { .. } => Ok(reason),
        }
    }

    /// Canonical text form; its token count is the action's token count.
    pub fn render(&self) -> String {
        fn call(name: &str, fields: &[(&str, &str)]) -> String {
            let body: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{name}({})", body.join(", "))
        }
        match self {
            Self::Reason { text } => text.clone(),
            Self::ToolCall { name, arguments } => {
                let values: Vec<(String, String)> = arguments
                    .iter()
                    .map(|(k, v)| {
                        let v = match v {
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        (k.clone(), v)
                    })
                    .collect();
                let fields: Vec<(&str, &str)> = values.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
                call(name, &fields)
            }
            Self::Branch { description, prompt } => {
                call(BRANCH_TOOL, &[("description", description), ("prompt", prompt)])
            }
            Self::Return { message } => call(RETURN_TOOL, &[("message", message)]),
            Self::Finish { answer, explanation, confidence } => {
                let mut fields = vec![("answer", answer.as_str()), ("explanation", explanation.as_str())];
                if let Some(c) = confidence {
                    fields.push(("confidence", c.as_str()));
                }
                call(FINISH_TOOL, &fields)
            }
        }
    }
}
