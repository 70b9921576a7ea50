//! Rule-based RL rewards: the format reward, the strategy reward for
//! All-in-One, and the strategy-plus-flag reward for One-by-One.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metrics::lr;
use crate::parse::{parse_answer, parse_reasoned, Mode, Parsed, Regime};
use crate::strategy::StrategyLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Aio,
    Obo,
}

impl Method {
    pub fn regime(self) -> Regime {
        match self {
            Method::Aio => Regime::Aio,
            Method::Obo => Regime::Obo,
        }
    }
}

/// Scope of the predicted sequence for One-by-One scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OboScope {
    /// Score the single step in `output`.
    #[default]
    Step,
    /// Score `prior_steps` followed by `output` as one utterance.
    Utterance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRequest {
    pub method: Method,
    pub output: String,
    pub ref_strategies: Vec<StrategyLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_flag: Option<bool>,
    #[serde(default)]
    pub reasoning_expected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<OboScope>,
    /// Earlier step outputs of the same utterance (utterance scope only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_steps: Vec<String>,
}

/// A request that is structurally invalid, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

fn field_error(field: &str, message: &str) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

impl RewardRequest {
    pub fn aio(output: impl Into<String>, ref_strategies: Vec<StrategyLabel>, reasoning_expected: bool) -> Self {
        RewardRequest {
            method: Method::Aio,
            output: output.into(),
            ref_strategies,
            ref_flag: None,
            reasoning_expected,
            scope: None,
            prior_steps: Vec::new(),
        }
    }

    pub fn obo(output: impl Into<String>, ref_strategies: Vec<StrategyLabel>, ref_flag: bool, reasoning_expected: bool) -> Self {
        RewardRequest {
            method: Method::Obo,
            ref_flag: Some(ref_flag),
            ..RewardRequest::aio(output, ref_strategies, reasoning_expected)
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.ref_strategies.is_empty() {
            return Err(field_error("ref_strategies", "must not be empty"));
        }
        match self.method {
            Method::Aio => {
                if self.ref_flag.is_some() {
                    return Err(field_error("ref_flag", "only allowed when method is obo"));
                }
                if self.scope.is_some() {
                    return Err(field_error("scope", "only allowed when method is obo"));
                }
                if !self.prior_steps.is_empty() {
                    return Err(field_error("prior_steps", "only allowed when method is obo"));
                }
            }
            Method::Obo => {
                if self.ref_flag.is_none() {
                    return Err(field_error("ref_flag", "required when method is obo"));
                }
                if self.scope.unwrap_or_default() == OboScope::Step && !self.prior_steps.is_empty() {
                    return Err(field_error("prior_steps", "only allowed with utterance scope"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardResult {
    pub format_ok: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag_match: Option<u8>,
    pub reward: f64,
}

const ZERO: RewardResult = RewardResult {
    format_ok: 0,
    lr: None,
    flag_match: None,
    reward: 0.0,
};

fn wire_number(x: f64) -> String {
    format!("{x:.12}")
}

impl RewardResult {
    /// Deterministic JSON encoding with fixed 12-decimal reals.
    pub fn to_wire_json(&self) -> String {
        let mut out = format!("{{\"format_ok\":{}", self.format_ok);
        if let Some(lr) = self.lr {
            out.push_str(&format!(",\"lr\":{}", wire_number(lr)));
        }
        if let Some(flag) = self.flag_match {
            out.push_str(&format!(",\"flag_match\":{flag}"));
        }
        out.push_str(&format!(",\"reward\":{}}}", wire_number(self.reward)));
        out
    }
}

/// Encodes a batch of results as a JSON list in input order.
pub fn batch_to_wire_json(results: &[RewardResult]) -> String {
    let items: Vec<String> = results.iter().map(RewardResult::to_wire_json).collect();
    format!("[{}]", items.join(","))
}

/// Strict parse of one output; reasoning chains are checked but never scored.
fn strict_answer(output: &str, method: Method, reasoning_expected: bool) -> Option<Parsed> {
    if reasoning_expected {
        parse_reasoned(output, method.regime(), Mode::Strict)
            .ok()
            .map(|o| o.value.answer)
    } else {
        parse_answer(output, method.regime(), Mode::Strict).ok().map(|o| o.value)
    }
}

/// 1 iff the output passes strict parsing for its method.
pub fn format_reward(output: &str, method: Method, reasoning_expected: bool) -> u8 {
    u8::from(strict_answer(output, method, reasoning_expected).is_some())
}

/// All-in-One reward: LR of the predicted strategies if well formatted, else 0.
pub fn reward_aio(req: &RewardRequest) -> RewardResult {
    let Some(answer) = strict_answer(&req.output, Method::Aio, req.reasoning_expected) else {
        return ZERO;
    };
    let lr = lr(&answer.strategies(), &req.ref_strategies).unwrap_or(0.0);
    RewardResult {
        format_ok: 1,
        lr: Some(lr),
        flag_match: None,
        reward: lr,
    }
}

/// One-by-One reward: LR plus 1 for a correct stop flag if well formatted, else 0.
pub fn reward_obo(req: &RewardRequest) -> RewardResult {
    let ref_flag = req.ref_flag.unwrap_or(false);
    let mut predicted = Vec::new();
    let steps = match req.scope.unwrap_or_default() {
        OboScope::Step => &[][..],
        OboScope::Utterance => &req.prior_steps[..],
    };
    for step in steps {
        let Some(answer) = strict_answer(step, Method::Obo, req.reasoning_expected) else {
            return ZERO;
        };
        predicted.extend(answer.strategies());
    }
    let Some(last) = strict_answer(&req.output, Method::Obo, req.reasoning_expected) else {
        return ZERO;
    };
    predicted.extend(last.strategies());
    let lr = lr(&predicted, &req.ref_strategies).unwrap_or(0.0);
    let flag_match = u8::from(last.continue_reply() == Some(ref_flag));
    RewardResult {
        format_ok: 1,
        lr: Some(lr),
        flag_match: Some(flag_match),
        reward: lr + f64::from(flag_match),
    }
}

/// Validates and scores a request.
pub fn score(req: &RewardRequest) -> Result<RewardResult, FieldError> {
    req.validate()?;
    Ok(match req.method {
        Method::Aio => reward_aio(req),
        Method::Obo => reward_obo(req),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StrategyResponse;
    use crate::parse::{serialize_aio, serialize_obo, serialize_reasoned};
    use crate::reasoning::ReasoningChain;
    use alloc::string::ToString;
    use alloc::vec;
    use StrategyLabel::{AffirmationAndReassurance as AR, Question as Q};

    fn aio(labels: &[StrategyLabel]) -> String {
        let pairs: Vec<_> = labels.iter().map(|l| StrategyResponse::new(*l, "t").unwrap()).collect();
        serialize_aio(&pairs)
    }

    fn step(label: StrategyLabel, flag: bool) -> String {
        serialize_obo(&StrategyResponse::new(label, "t").unwrap(), flag)
    }

    #[test]
    fn aio_rewards() {
        let r = score(&RewardRequest::aio(aio(&[Q, AR]), vec![Q, AR], false)).unwrap();
        assert_eq!(r.reward, 1.0);
        let r = score(&RewardRequest::aio(aio(&[Q, AR, Q]), vec![Q, AR], false)).unwrap();
        assert!(libm::fabs(r.reward - 2.0 / 3.0) < 1e-9);
        let r = score(&RewardRequest::aio("sure! [..]", vec![Q], false)).unwrap();
        assert_eq!(r, ZERO);
        let prose = format!("Here: {}", aio(&[Q]));
        assert_eq!(format_reward(&prose, Method::Aio, false), 0);
    }

    #[test]
    fn obo_rewards() {
        let r = score(&RewardRequest::obo(step(Q, true), vec![Q], true, false)).unwrap();
        assert_eq!((r.reward, r.flag_match), (2.0, Some(1)));
        let r = score(&RewardRequest::obo(step(Q, false), vec![Q], true, false)).unwrap();
        assert_eq!(r.reward, 1.0);
        let r = score(&RewardRequest::obo(step(AR, true), vec![Q], true, false)).unwrap();
        assert_eq!(r.reward, 1.0);
        let r = score(&RewardRequest::obo("{}", vec![Q], true, false)).unwrap();
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn utterance_scope_concatenates_steps() {
        let mut req = RewardRequest::obo(step(AR, false), vec![Q, AR], false, false);
        req.scope = Some(OboScope::Utterance);
        req.prior_steps = vec![step(Q, true)];
        let r = score(&req).unwrap();
        assert_eq!(r.reward, 2.0);
        req.prior_steps = vec!["bad".into()];
        assert_eq!(score(&req).unwrap(), ZERO);
    }

    #[test]
    fn reasoning_is_required_when_expected_and_never_scored() {
        let chain = ReasoningChain {
            context: "N/A".into(),
            cognition: "N/A".into(),
            emotion: "N/A".into(),
            support_plan: "anything at all".into(),
        };
        let wrapped = serialize_reasoned(&chain, &aio(&[Q]));
        assert_eq!(score(&RewardRequest::aio(wrapped.clone(), vec![Q], true)).unwrap().reward, 1.0);
        assert_eq!(format_reward(&aio(&[Q]), Method::Aio, true), 0);
        assert_eq!(format_reward(&wrapped, Method::Aio, false), 0);
    }

    #[test]
    fn ref_flag_presence_is_checked() {
        let mut req = RewardRequest::obo(step(Q, true), vec![Q], true, false);
        req.ref_flag = None;
        assert_eq!(score(&req).unwrap_err().field, "ref_flag");
        let mut req = RewardRequest::aio(aio(&[Q]), vec![Q], false);
        req.ref_flag = Some(true);
        assert_eq!(score(&req).unwrap_err().field, "ref_flag");
    }

    #[test]
    fn wire_encoding_is_fixed_precision() {
        let r = score(&RewardRequest::aio(aio(&[Q, AR, Q]), vec![Q, AR], false)).unwrap();
        assert_eq!(
            r.to_wire_json(),
            r#"{"format_ok":1,"lr":0.666666666667,"reward":0.666666666667}"#
        );
        assert_eq!(ZERO.to_wire_json(), r#"{"format_ok":0,"reward":0.000000000000}"#);
        let parsed: RewardResult = serde_json::from_str(&r.to_wire_json()).unwrap();
        assert!(libm::fabs(parsed.reward - r.reward) < 1e-12);
    }

    #[test]
    fn request_rejects_unknown_fields() {
        let body = r#"{"method":"aio","output":"x","ref_strategies":["Question"],"bogus":1}"#;
        let err = serde_json::from_str::<RewardRequest>(body).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
