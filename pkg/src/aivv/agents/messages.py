"""Agent outputs and the JSON schemas they must satisfy."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import jsonschema

from ..engine import ALPHA_BOUNDS, EPOCH_BOUNDS, LR_BOUNDS, clamp

REQ_ENG = "req_eng"
FAIL_MGR = "fail_mgr"
SYS_ENG = "sys_eng"
INSPECTOR = "inspector"
TUNER = "tuner"
COUNCIL_ROLES = (REQ_ENG, FAIL_MGR, SYS_ENG)
ROLES = COUNCIL_ROLES + (INSPECTOR, TUNER)

ALPHA_GRID = tuple(round(0.01 * k, 2) for k in range(1, 11))

_vote = {"type": "string", "enum": ["PASS", "FAIL"]}
_conf = {"type": "number", "minimum": 0, "maximum": 1}
_risk = {"type": ["string", "null"], "enum": ["LOW", "MEDIUM", "HIGH", None]}
_gains = {
    "type": "object",
    "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                   for k in ("Kp", "Ti", "Td", "Reference_Max_Velocity")},
    "required": ["Kp", "Ti", "Td", "Reference_Max_Velocity"],
}

SCHEMAS = {
    REQ_ENG: {
        "type": "object",
        "properties": {"vote": _vote, "confidence": _conf, "requirement_section": {"type": "string"},
                       "reasoning": {"type": "string"}, "veto_reason": {"type": ["string", "null"]}},
        "required": ["vote", "confidence", "requirement_section", "reasoning"],
    },
    FAIL_MGR: {
        "type": "object",
        "properties": {"vote": _vote, "risk_level": _risk, "confidence": _conf,
                       "failure_management_assessment": {"type": "object"},
                       "reasoning": {"type": "string"}},
        "required": ["vote", "risk_level", "confidence", "failure_management_assessment", "reasoning"],
    },
    SYS_ENG: {
        "type": "object",
        "properties": {"vote": _vote, "risk_level": _risk, "confidence": _conf,
                       "technical_assessment": {"type": "string"}, "reasoning": {"type": "string"},
                       "tuning_proposal": {"anyOf": [_gains, {"type": "null"}]},
                       "tuning_reasoning": {"type": ["string", "null"]}},
        "required": ["vote", "risk_level", "confidence", "technical_assessment", "reasoning",
                     "tuning_proposal"],
    },
    INSPECTOR: {
        "type": "object",
        "properties": {
            "majority_decision": _vote,
            "pass_votes": {"type": "integer", "minimum": 0, "maximum": 3},
            "fail_votes": {"type": "integer", "minimum": 0, "maximum": 3},
            "action": {"type": "string", "enum": ["RECALIBRATE", "FINE_TUNE", "TRY_BOTH"]},
            "new_alpha": {"type": ["number", "null"]},
            "epochs": {"type": ["integer", "null"]},
            "learning_rate": {"type": ["number", "null"]},
            "reasoning": {"type": "string"},
        },
        "required": ["majority_decision", "pass_votes", "fail_votes", "action", "reasoning"],
    },
    TUNER: {
        "type": "object",
        "properties": {"recommended_alpha": {"type": "number"}, "reasoning": {"type": "string"},
                       "would_pass_at_recommended": {"type": "boolean"}, "confidence": _conf},
        "required": ["recommended_alpha", "reasoning", "would_pass_at_recommended", "confidence"],
    },
}


def validate(role: str, payload: dict) -> None:
    """Raise ``jsonschema.ValidationError`` when ``payload`` breaks the role schema."""
    jsonschema.validate(payload, SCHEMAS[role])


@dataclass
class GainProposal:
    Kp: float
    Ti: float
    Td: float
    Reference_Max_Velocity: float
    triggered_by: tuple = ()
    tuning_reasoning: str = ""
    sample_id: int | None = None

    def params(self) -> dict:
        return {"Kp": self.Kp, "Ti": self.Ti, "Td": self.Td,
                "Reference_Max_Velocity": self.Reference_Max_Velocity}


@dataclass
class AgentVote:
    agent: str
    vote: str
    confidence: float
    reasoning: str
    risk_level: str | None = None
    fields: dict = field(default_factory=dict)
    proposal: GainProposal | None = None
    degraded: bool = False

    def payload(self) -> dict:
        """Role-schema shaped dict (what an HTTP agent would have returned)."""
        out = {"vote": self.vote, "confidence": self.confidence, "reasoning": self.reasoning}
        if self.agent in (FAIL_MGR, SYS_ENG):
            out["risk_level"] = self.risk_level
        out.update(self.fields)
        if self.agent == SYS_ENG:
            out["tuning_proposal"] = self.proposal.params() if self.proposal else None
            out["tuning_reasoning"] = self.proposal.tuning_reasoning if self.proposal else None
        return out

    def summary(self) -> dict:
        return {"agent": self.agent, "vote": self.vote, "confidence": self.confidence,
                "reasoning": self.reasoning, "risk_level": self.risk_level}


@dataclass
class TuningAction:
    action: str
    majority_decision: str
    pass_votes: int
    fail_votes: int
    reasoning: str
    new_alpha: float | None = None
    epochs: int | None = None
    learning_rate: float | None = None
    degraded: bool = False

    def __post_init__(self):
        if self.action not in ("RECALIBRATE", "FINE_TUNE", "TRY_BOTH"):
            raise ValueError(f"unknown tuning action {self.action!r}")
        needs_alpha = self.action in ("RECALIBRATE", "TRY_BOTH")
        needs_train = self.action in ("FINE_TUNE", "TRY_BOTH")
        if needs_alpha and self.new_alpha is None:
            raise ValueError(f"{self.action} requires new_alpha")
        if needs_train and (self.epochs is None or self.learning_rate is None):
            raise ValueError(f"{self.action} requires epochs and learning_rate")
        if self.new_alpha is not None:
            self.new_alpha = float(clamp(float(self.new_alpha), *ALPHA_BOUNDS, name="new_alpha"))
        if self.epochs is not None:
            self.epochs = int(clamp(int(round(self.epochs)), *EPOCH_BOUNDS, name="epochs"))
        if self.learning_rate is not None:
            self.learning_rate = float(clamp(float(self.learning_rate), *LR_BOUNDS, name="learning_rate"))

    @classmethod
    def from_payload(cls, payload: dict, **extra) -> "TuningAction":
        keys = ("action", "majority_decision", "pass_votes", "fail_votes", "reasoning",
                "new_alpha", "epochs", "learning_rate")
        return cls(**{k: payload.get(k) for k in keys}, **extra)

    def payload(self) -> dict:
        d = asdict(self)
        d.pop("degraded")
        return d


@dataclass
class CandidateState:
    new_prediction: float
    new_bound: float
    new_error: float
    new_uncertainty: float
    applied_alpha: float
    passes_reevaluation: bool
    note: str = ""

    def payload(self) -> dict:
        d = asdict(self)
        if not d["note"]:
            d.pop("note")
        return d
