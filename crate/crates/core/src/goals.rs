//! Structured proof state, shaped after coq-lsp's `proof/goals` answer.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::lsp::Position;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub names: Vec<String>,
    #[serde(rename = "ty")]
    pub type_text: String,
    #[serde(rename = "def", default, skip_serializing_if = "Option::is_none")]
    pub definition_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    #[serde(rename = "hyps")]
    pub hypotheses: Vec<Hypothesis>,
    #[serde(rename = "ty")]
    pub conclusion: String,
}

impl Goal {
    /// Whether any hypothesis binds `name`.
    pub fn has_hypothesis(&self, name: &str) -> bool {
        self.hypotheses.iter().any(|h| h.names.iter().any(|n| n == name))
    }
}

/// Proof state at a position: foreground goals, the bullet/focus stack,
/// shelved and given-up goals. All empty outside proof mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalAnswer {
    pub position: Position,
    pub goals: Vec<Goal>,
    pub stack: Vec<(Vec<Goal>, Vec<Goal>)>,
    pub shelf: Vec<Goal>,
    pub given_up: Vec<Goal>,
}

impl GoalAnswer {
    pub fn empty(position: Position) -> Self {
        Self { position, goals: vec![], stack: vec![], shelf: vec![], given_up: vec![] }
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
            && self.stack.iter().all(|(l, r)| l.is_empty() && r.is_empty())
            && self.shelf.is_empty()
            && self.given_up.is_empty()
    }

    /// Foreground plus background goals.
    pub fn open_goal_count(&self) -> usize {
        self.goals.len() + self.stack.iter().map(|(l, r)| l.len() + r.len()).sum::<usize>()
    }

    /// Read a `proof/goals` result. A missing or null `goals` member means
    /// the position is not in proof mode.
    pub fn from_response(result: &Value, position: Position) -> Result<Self, String> {
        let Some(goals) = result.get("goals").filter(|g| !g.is_null()) else {
            return Ok(Self::empty(position));
        };
        let list = |key: &str| -> Result<Vec<Goal>, String> {
            match goals.get(key) {
                None | Some(Value::Null) => Ok(vec![]),
                Some(Value::Array(items)) => items.iter().map(parse_goal).collect(),
                Some(other) => Err(format!("`{key}` is not a list: {other}")),
            }
        };
        let mut stack = Vec::new();
        if let Some(Value::Array(frames)) = goals.get("stack") {
            for frame in frames {
                let pair = frame.as_array().filter(|p| p.len() == 2).ok_or("stack frame is not a pair")?;
                let side = |v: &Value| -> Result<Vec<Goal>, String> {
                    v.as_array().ok_or("stack side is not a list")?.iter().map(parse_goal).collect()
                };
                stack.push((side(&pair[0])?, side(&pair[1])?));
            }
        }
        Ok(Self {
            position,
            goals: list("goals")?,
            stack,
            shelf: list("shelf")?,
            given_up: list("given_up")?,
        })
    }
}

fn pp_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_goal(v: &Value) -> Result<Goal, String> {
    let conclusion = v.get("ty").map(pp_text).ok_or("goal without `ty`")?;
    let mut hypotheses = Vec::new();
    if let Some(Value::Array(hyps)) = v.get("hyps") {
        for h in hyps {
            let names: Vec<String> = h
                .get("names")
                .and_then(Value::as_array)
                .ok_or("hypothesis without `names`")?
                .iter()
                .map(pp_text)
                .collect();
            if names.is_empty() {
                return Err("hypothesis with no names".into());
            }
            hypotheses.push(Hypothesis {
                names,
                type_text: h.get("ty").map(pp_text).unwrap_or_default(),
                definition_text: h.get("def").filter(|d| !d.is_null()).map(pp_text),
            });
        }
    }
    Ok(Goal { hypotheses, conclusion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn outside_proof_mode() {
        let ans = GoalAnswer::from_response(&json!({"textDocument": {}, "messages": []}), Position::new(0, 0))
            .unwrap();
        assert!(ans.is_empty());
    }

    #[test]
    fn wire_shape() {
        let wire = json!({
            "goals": {
                "goals": [{"hyps": [{"names": ["l1", "l2"], "ty": "list a"}], "ty": "l1 = l2"}],
                "stack": [[[], [{"hyps": [], "ty": "True"}]]],
                "shelf": [],
                "given_up": []
            }
        });
        let ans = GoalAnswer::from_response(&wire, Position::new(3, 0)).unwrap();
        assert_eq!(ans.goals.len(), 1);
        assert!(ans.goals[0].has_hypothesis("l2"));
        assert_eq!(ans.open_goal_count(), 2);
        let round: GoalAnswer = serde_json::from_value(serde_json::to_value(&ans).unwrap()).unwrap();
        assert_eq!(round, ans);
    }
}
