from .backend import DEFAULT_MODELS, HttpBackend, HttpConfig, StubBackend, extract_json, make_backend
from .context import AgentContext, Baseline, FrameMetrics, frame_metrics
from .messages import (ALPHA_GRID, COUNCIL_ROLES, FAIL_MGR, INSPECTOR, REQ_ENG, ROLES, SCHEMAS,
                       SYS_ENG, TUNER, AgentVote, CandidateState, GainProposal, TuningAction,
                       validate)
from .stubs import fail_mgr_vote, inspector_decide, req_eng_vote, sys_eng_vote, tuner_recommend
from .tuner import tuner_apply
