"""What the agents get to see about one escalated sample."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

FRAME_LENGTH = 40
SETTLE_FRACTION = 0.25  # tail share used for the recovery test
FAILURE_EFFECT_FACTOR = 2.0
DRIFT_FACTOR = 1.5
DRIFT_BLOCKS = 4
DRIFT_WINDOW = FRAME_LENGTH // 2


@dataclass
class FrameMetrics:
    peak_deviation: float
    range: float
    oscillation_count: int
    response: str  # CONVERGING | DIVERGING
    current_deviation: float
    drift_rate: float = 0.0


def drift_rate(frame) -> float:
    """Sustained heading rate over the trailing window, zero unless monotone.

    Block medians make a short spike invisible; the rate is the slowest
    block-to-block change, so every block has to keep moving the same way.
    """
    frame = np.asarray(frame, dtype=float)[-DRIFT_WINDOW:]
    if len(frame) < 2 * DRIFT_BLOCKS:
        return 0.0
    blocks = np.array_split(frame, DRIFT_BLOCKS)
    med = np.array([np.median(b) for b in blocks])
    d = np.diff(med) / (len(frame) / DRIFT_BLOCKS)
    if np.all(d > 0) or np.all(d < 0):
        return float(np.sign(d[0]) * np.abs(d).min())
    return 0.0


def _deviation(frame: np.ndarray) -> np.ndarray:
    """Deviation from a robust straight-line trend through the frame.

    Slope is the median of all pairwise slopes and the level the median
    offset, so a spike covering up to about a quarter of the frame does not
    drag the reference.
    """
    n = len(frame)
    t = np.arange(n, dtype=float)
    i, j = np.triu_indices(n, k=1)
    slope = float(np.median((frame[j] - frame[i]) / (j - i)))
    level = float(np.median(frame - slope * t))
    return frame - (level + slope * t)


def frame_metrics(frame, deadband: float = 0.0) -> FrameMetrics:
    frame = np.asarray(frame, dtype=float)
    if len(frame) < 3:
        raise ValueError("frame needs at least 3 values")
    dev = _deviation(frame)
    adev = np.abs(dev)
    peak = float(adev.max())
    # sign changes of the detrended frame, ignoring wiggles inside the deadband
    osc, sign = 0, 0
    for d in dev:
        if abs(d) <= deadband:
            continue
        s = 1 if d > 0 else -1
        if sign and s != sign:
            osc += 1
        sign = s
    settle = max(2, int(round(len(frame) * SETTLE_FRACTION)))
    tail = adev[-settle:]
    growing = np.polyfit(np.arange(settle), tail, 1)[0] > 0
    diverging = bool(growing and adev[-1] >= 0.8 * peak and adev[-1] > deadband)
    return FrameMetrics(peak, float(frame.max() - frame.min()), osc,
                        "DIVERGING" if diverging else "CONVERGING", float(adev[-1]), drift_rate(frame))


@dataclass
class Baseline:
    """Nominal behaviour summarised from the training series."""

    peak: float
    range: float
    oscillation_count: int
    noise_level: float
    yaw_min: float
    yaw_max: float
    per_step_min: float
    per_step_max: float
    max_drift: float = 0.0

    @property
    def max_failure_effect(self) -> float:
        return FAILURE_EFFECT_FACTOR * self.peak

    @property
    def drift_limit(self) -> float:
        # the run must also carry the trend at least two deadbands across the window
        return max(DRIFT_FACTOR * self.max_drift, 2.0 * self.deadband / DRIFT_WINDOW)

    @property
    def deadband(self) -> float:
        return 4.0 * self.noise_level

    @classmethod
    def from_series(cls, yaw, frame_length: int = FRAME_LENGTH, stride: int = 5) -> "Baseline":
        yaw = np.asarray(yaw, dtype=float)
        steps = np.diff(yaw)
        noise = float(np.median(np.abs(steps - np.median(steps)))) / np.sqrt(2) * 1.4826
        peaks, ranges, oscs, drifts = [], [], [], []
        for end in range(frame_length, len(yaw) + 1, stride):
            m = frame_metrics(yaw[end - frame_length:end], 4.0 * noise)
            peaks.append(m.peak_deviation)
            ranges.append(m.range)
            oscs.append(m.oscillation_count)
            drifts.append(abs(m.drift_rate))
        return cls(peak=float(np.max(peaks)), range=float(np.max(ranges)),
                   oscillation_count=int(np.median(oscs)), noise_level=noise,
                   yaw_min=float(yaw.min()), yaw_max=float(yaw.max()),
                   per_step_min=float(steps.min()), per_step_max=float(steps.max()),
                   max_drift=float(np.max(drifts)))

    def summary(self) -> dict:
        return {"peak": self.peak, "range": self.range, "oscillation_count": self.oscillation_count,
                "max_drift": self.max_drift}


@dataclass
class AgentContext:
    sample_id: int
    residual: float
    bound: float
    uncertainty: float
    uncertainty_threshold: float
    prediction: float
    true_value: float
    frame_values: list
    baseline: Baseline
    gains: dict
    alpha: float
    loop: int = 1
    recent_breaches: int = 1
    candidate: dict | None = None
    peer_votes: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frame_values) == 0:
            raise ValueError("frame_values must not be empty")

    @property
    def bound_multiplier(self) -> float:
        return self.residual / self.bound if self.bound > 0 else float("inf")

    @property
    def previous_value(self) -> float:
        fv = self.frame_values
        return float(fv[-2]) if len(fv) > 1 else float(fv[-1])

    def metrics(self) -> FrameMetrics | None:
        if len(self.frame_values) < 3:
            return None
        return frame_metrics(self.frame_values, self.baseline.deadband)

    def to_prompt_dict(self) -> dict:
        """JSON-ready view used as the user message for HTTP agents."""
        m = self.metrics()
        b = self.baseline
        out = {
            "sample_id": self.sample_id,
            "error_magnitude": self.residual,
            "conformal_bound": self.bound,
            "bound_multiplier": self.bound_multiplier,
            "uncertainty": self.uncertainty,
            "uncertainty_threshold": self.uncertainty_threshold,
            "predicted_value": self.prediction,
            "true_value": self.true_value,
            "previous_value": self.previous_value,
            "frame_values": [round(float(v), 4) for v in self.frame_values],
            "frame_baseline_summary": b.summary(),
            "max_failure_effect": b.max_failure_effect,
            "training_bounds": {"yaw_min": b.yaw_min, "yaw_max": b.yaw_max,
                                "per_step_min": b.per_step_min, "per_step_max": b.per_step_max},
            "current_gains": dict(self.gains),
            "alpha": self.alpha,
            "loop": self.loop,
            "recent_breaches": self.recent_breaches,
        }
        if m is not None:
            out["frame_metrics"] = asdict(m)
        if self.candidate is not None:
            out["candidate_state"] = self.candidate
        if self.peer_votes:
            out["peer_findings"] = self.peer_votes
        return out
