"""UUV yaw telemetry surrogate.

A first-order Nomoto plant under a PID heading autopilot with a third-order
reference filter. Measured yaw carries heavy-tailed noise and a slow sensor
drift; faults are injected either on the sensor (electrical spike) or on the
rudder (mechanical damper loss driving the rudder to hardover).
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HARDOVER_RAMP = 0.2  # s for a failed damper to let the rudder reach its stop


class Scenario(str, enum.Enum):
    HOVERING = "hover"
    LAWNMOWER = "lawnmower"
    COMPLEX = "complex"


class NoiseFamily(str, enum.Enum):
    LAPLACE = "laplace"
    STUDENT_T = "student_t"


class FaultKind(str, enum.Enum):
    ELECTRICAL_SPIKE = "spike"
    MECHANICAL_DAMPER = "damper"


@dataclass(frozen=True)
class PIDGains:
    Kp: float = 0.5
    Ti: float = 20.0
    Td: float = 1.0


@dataclass(frozen=True)
class RefFilter:
    max_velocity: float = 10.0  # deg/s
    damping_ratio: float = 1.0
    natural_frequency: float = 2.5  # rad/s


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    n_steps: int = 1400
    nomoto_gain: float = 3.0
    nomoto_time_constant: float = 1.0
    pid: PIDGains = field(default_factory=PIDGains)
    ref_filter: RefFilter = field(default_factory=RefFilter)
    scenario: Scenario = Scenario.HOVERING
    seed: int = 0
    rudder_limit: float = 30.0  # deg

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.nomoto_time_constant <= 0:
            raise ValueError("Nomoto time constant must be positive")
        if self.pid.Kp <= 0 or self.pid.Ti <= 0 or self.pid.Td < 0:
            raise ValueError(f"invalid PID gains {self.pid}")


@dataclass(frozen=True)
class NoiseSpec:
    family: NoiseFamily = NoiseFamily.LAPLACE
    scale: float = 0.3
    drift_rate: float = 0.001  # deg/step
    drift_start: int = 0
    dof: float = 3.0  # Student-t only

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        if self.scale < 0:
            raise ValueError("noise scale must be >= 0")


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    onset: int = 1200
    magnitude: float | None = None
    duration: int = 10  # spike only

    def __post_init__(self):
        object.__setattr__(self, "kind", FaultKind(self.kind))
        if self.magnitude is None:
            default = 15.0 if self.kind is FaultKind.ELECTRICAL_SPIKE else 1.0
            object.__setattr__(self, "magnitude", default)
        if self.kind is FaultKind.MECHANICAL_DAMPER and not 0.0 <= self.magnitude <= 1.0:
            raise ValueError("damper magnitude is a fraction in [0, 1]")
        if self.duration < 1:
            raise ValueError("spike duration must be >= 1")


@dataclass
class TelemetryDataset:
    yaw: np.ndarray
    setpoint: np.ndarray
    fault_mask: np.ndarray
    scenario: Scenario
    seed: int
    true_yaw: np.ndarray | None = None
    config: SimConfig | None = None
    noise: NoiseSpec | None = None
    fault: FaultSpec | None = None
    speed: np.ndarray | None = None

    def __len__(self):
        return len(self.yaw)


@dataclass
class WindowPairs:
    """Sequence-target pairs; ``inputs[i]`` precedes ``targets[i]`` by H steps."""

    inputs: np.ndarray  # (n, W)
    targets: np.ndarray  # (n,)
    raw_index: np.ndarray  # (n,) step index of each target

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, item):
        return WindowPairs(self.inputs[item], self.targets[item], self.raw_index[item])

    @classmethod
    def concat(cls, *parts: "WindowPairs") -> "WindowPairs":
        return cls(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.raw_index for p in parts]),
        )


def generate_reference(scenario, n_steps: int, dt: float = 0.02, seed: int = 0) -> np.ndarray:
    """Yaw setpoint schedule in degrees for a maneuver scenario.

    Hovering holds 0 deg with small heading nudges every 6 s; lawnmower
    alternates +/-15 deg legs every 5 s; the complex mission draws aperiodic
    levels with unequal dwell times from ``seed``.
    """
    scenario = Scenario(scenario)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    t = np.arange(n_steps) * dt
    if scenario is Scenario.HOVERING:
        ref = np.zeros(n_steps)
        nudges = (0.0, 2.0, -1.5, 1.0, -2.0, 0.5)
        for k, level in enumerate(nudges):
            ref[t >= 6.0 * k] = level
        return ref
    if scenario is Scenario.LAWNMOWER:
        leg = np.floor(t / 5.0).astype(int)
        return np.where(leg % 2 == 0, 15.0, -15.0)

    rng = np.random.default_rng([seed, 7919])
    ref = np.empty(n_steps)
    i, level = 0, 0.0
    while i < n_steps:
        dwell = int(rng.integers(int(2.0 / dt), int(5.0 / dt)))
        ref[i:i + dwell] = level
        i += dwell
        step = rng.uniform(8.0, 30.0) * rng.choice([-1.0, 1.0])
        if abs(level + step) > 45.0:
            step = -step
        level = round(level + step, 1)
    return ref


SPEED_RANGE = (0.6, 1.2)  # relative to cruise, survey phase
SPRINT_RANGE = (1.5, 2.0)  # closing transit
SPRINT_START = 0.65  # fraction of the mission
SPEED_DWELL = (3.0, 8.0)  # s
SPEED_LAG = 1.0  # s


def speed_profile(scenario, n_steps: int, dt: float = 0.02, seed: int = 0) -> np.ndarray:
    """Relative forward speed; constant except on the complex mission.

    The complex mission surveys at randomly switching cruise levels, then
    closes with a faster transit the detector never saw in training. The
    vehicle settles to each level through a first-order lag.
    """
    if Scenario(scenario) is not Scenario.COMPLEX:
        return np.ones(n_steps)
    rng = np.random.default_rng([seed, 6007])
    target = np.empty(n_steps)
    sprint = int(SPRINT_START * n_steps)
    i = 0
    while i < n_steps:
        dwell = int(rng.uniform(*SPEED_DWELL) / dt)
        end = min(i + dwell, sprint) if i < sprint else i + dwell
        target[i:end] = rng.uniform(*(SPEED_RANGE if i < sprint else SPRINT_RANGE))
        i = end
    out = np.empty(n_steps)
    u, a = target[0], dt / SPEED_LAG
    for k in range(n_steps):
        u += a * (target[k] - u)
        out[k] = u
    return out


def _sample_noise(noise: NoiseSpec, n: int, rng: np.random.Generator, gain=1.0) -> np.ndarray:
    if noise.scale == 0:
        out = np.zeros(n)
    elif noise.family is NoiseFamily.LAPLACE:
        # inverse-CDF sampling keeps the stream a pure function of the seed
        u = rng.uniform(-0.5, 0.5, size=n)
        out = -noise.scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    else:
        out = noise.scale * rng.standard_t(noise.dof, size=n)
    drift = noise.drift_rate * np.clip(np.arange(n) - noise.drift_start, 0, None)
    # flow noise on the heading sensor grows with speed; the drift does not
    return out * gain + drift


def simulate(config: SimConfig, noise: NoiseSpec | None = None,
             fault: FaultSpec | None = None) -> TelemetryDataset:
    """Run the closed-loop surrogate and return measured yaw with fault labels."""
    noise = noise if noise is not None else NoiseSpec()
    n, dt = config.n_steps, config.dt
    if fault is not None and fault.onset >= n:
        raise ValueError(f"fault onset {fault.onset} beyond series length {n}")
    rng = np.random.default_rng(config.seed)
    setpoint = generate_reference(config.scenario, n, dt, seed=config.seed)
    speed = speed_profile(config.scenario, n, dt, seed=config.seed)
    meas_noise = _sample_noise(noise, n, rng, speed)

    K, T = config.nomoto_gain, config.nomoto_time_constant
    Kp, Ti, Td = config.pid.Kp, config.pid.Ti, config.pid.Td
    rf = config.ref_filter
    w, z = rf.natural_frequency, rf.damping_ratio
    dmax = config.rudder_limit

    psi, r = float(setpoint[0]), 0.0
    psi_d, r_d, a_d = float(setpoint[0]), 0.0, 0.0
    integ = 0.0
    true_yaw = np.empty(n)
    meas = np.empty(n)
    fault_mask = np.zeros(n, dtype=bool)
    spike = np.zeros(n)
    if fault is not None:
        if fault.kind is FaultKind.ELECTRICAL_SPIKE:
            end = min(n, fault.onset + fault.duration)
            spike[fault.onset:end] = fault.magnitude
            fault_mask[fault.onset:end] = True
        else:
            fault_mask[fault.onset:] = True

    for k in range(n):
        y = psi + meas_noise[k] + spike[k]
        true_yaw[k] = psi
        meas[k] = y

        # reference model: third-order low-pass with rate limit
        j_d = w**3 * (setpoint[k] - psi_d) - (2 * z + 1) * w**2 * r_d - (2 * z + 1) * w * a_d
        a_d += dt * j_d
        r_d = float(np.clip(r_d + dt * a_d, -rf.max_velocity, rf.max_velocity))
        psi_d += dt * r_d

        err = psi_d - y
        integ = float(np.clip(integ + dt * err, -dmax * Ti / Kp, dmax * Ti / Kp))
        delta = Kp * (err + integ / Ti + Td * (r_d - r))
        delta = float(np.clip(delta, -dmax, dmax))
        if fault is not None and fault.kind is FaultKind.MECHANICAL_DAMPER and k >= fault.onset:
            # damper gone: the rudder is pulled toward hardover, commands keep
            # only the remaining fraction of authority
            ramp = min(1.0, (k - fault.onset + 1) * dt / HARDOVER_RAMP)
            delta = (1.0 - fault.magnitude) * delta + fault.magnitude * ramp * dmax

        # rudder effectiveness scales with speed
        r += dt * (K * speed[k] * delta - r) / T
        psi += dt * r
        if not (np.isfinite(psi) and np.isfinite(r)):
            raise FloatingPointError(f"non-finite plant state at step {k}")

    return TelemetryDataset(yaw=meas, setpoint=setpoint, fault_mask=fault_mask,
                            scenario=config.scenario, seed=config.seed, true_yaw=true_yaw,
                            config=config, noise=noise, fault=fault, speed=speed)


def window_pairs(series: np.ndarray, W: int = 10, H: int = 2, offset: int = 0) -> WindowPairs:
    """Slide a length-W window over ``series``; target sits H steps past the window end."""
    series = np.asarray(series, dtype=float)
    n = len(series)
    if n < W + H:
        raise ValueError(f"series of length {n} is shorter than W+H={W + H}")
    count = n - W - H + 1
    idx = np.arange(count)[:, None] + np.arange(W)[None, :]
    targets_at = np.arange(count) + W + H - 1
    return WindowPairs(series[idx], series[targets_at], targets_at + offset)


def make_windows(dataset: TelemetryDataset | np.ndarray, W: int = 10, H: int = 2,
                 split_ratio: float = 0.7) -> tuple[WindowPairs, WindowPairs]:
    """Split the raw series first, then window each part independently.

    With 1400 points, a 70/30 split and W=10, H=2 this gives 969 train and
    409 test pairs.
    """
    yaw = dataset.yaw if isinstance(dataset, TelemetryDataset) else np.asarray(dataset)
    cut = int(round(len(yaw) * split_ratio))
    return window_pairs(yaw[:cut], W, H), window_pairs(yaw[cut:], W, H, offset=cut)


def dataset_for(scenario, seed: int, fault: str | None = "default", **overrides) -> TelemetryDataset:
    """Standard dataset per mission: spike faults for hover/lawnmower, damper for the complex mission."""
    scenario = Scenario(scenario)
    if fault == "default":
        fault = "damper" if scenario is Scenario.COMPLEX else "spike"
    spec = FaultSpec(FaultKind(fault)) if fault not in (None, "none") else None
    return simulate(SimConfig(scenario=scenario, seed=seed, **overrides), NoiseSpec(), spec)


def _config_to_json(ds: TelemetryDataset) -> dict:
    def enc(obj):
        if obj is None:
            return None
        d = dataclasses.asdict(obj)
        return json.loads(json.dumps(d, default=lambda v: v.value if isinstance(v, enum.Enum) else str(v)))

    return {"scenario": ds.scenario.value, "seed": ds.seed, "config": enc(ds.config),
            "noise": enc(ds.noise), "fault": enc(ds.fault)}


def save_dataset(ds: TelemetryDataset, path) -> None:
    """CSV (step, yaw, setpoint, fault) plus a ``.json`` sidecar with config and seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "yaw", "setpoint", "fault"])
        for k in range(len(ds)):
            writer.writerow([k, repr(float(ds.yaw[k])), repr(float(ds.setpoint[k])), int(ds.fault_mask[k])])
    path.with_suffix(".json").write_text(json.dumps(_config_to_json(ds), indent=2), encoding="utf-8")


def load_dataset(path) -> TelemetryDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    rows = list(csv.DictReader(path.open(encoding="utf-8")))
    meta = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    fault = None
    if meta.get("fault"):
        f = meta["fault"]
        fault = FaultSpec(FaultKind(f["kind"]), f["onset"], f["magnitude"], f["duration"])
    config = None
    if meta.get("config"):
        c = dict(meta["config"])
        c["pid"] = PIDGains(**c["pid"])
        c["ref_filter"] = RefFilter(**c["ref_filter"])
        config = SimConfig(**c)
    return TelemetryDataset(
        yaw=np.array([float(r["yaw"]) for r in rows]),
        setpoint=np.array([float(r["setpoint"]) for r in rows]),
        fault_mask=np.array([r["fault"] == "1" for r in rows]),
        scenario=Scenario(meta.get("scenario", "hover")),
        seed=int(meta.get("seed", 0)),
        config=config,
        fault=fault,
    )
