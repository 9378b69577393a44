"""Simulate the three missions and cut them into training windows.

The plant is a first-order Nomoto yaw model under PID control with a
rate-limited reference filter. Hovering holds heading with small nudges, the
lawnmower survey alternates +/-15 degree legs every 5 s, and the complex
mission mixes irregular turns with speed changes. Hovering and lawnmower get
a 10-step electrical spike at step 1200; the complex mission loses its
rudder damper there.
"""

import numpy as np

from aivv.telemetry import dataset_for, make_windows

for scenario in ("hover", "lawnmower", "complex"):
    ds = dataset_for(scenario, seed=1)
    err = np.abs(ds.true_yaw - ds.setpoint)
    print(f"{scenario:>9}: yaw in [{ds.yaw.min():7.2f}, {ds.yaw.max():7.2f}] deg, "
          f"fault={ds.fault.kind.value} from step {ds.fault.onset}, "
          f"tracking error before/after fault {err[:1200].max():.2f} / {err[1200:].max():.2f} deg")

# %% the raw series is split 70/30 first, then each part is windowed on its own
train, test = make_windows(dataset_for("hover", seed=1), W=10, H=2)
print(f"\n{len(train)} training pairs, {len(test)} test pairs")
print("first training window :", np.round(train.inputs[0], 2))
print(f"its target (2 steps past the window end, raw index {train.raw_index[0]}):",
      round(float(train.targets[0]), 2))

# test pairs carry their raw index, so fault labels line up with samples
faulty = test.raw_index[np.isin(test.raw_index, np.flatnonzero(dataset_for("hover", 1).fault_mask))]
print("test samples whose target falls inside the spike:", faulty.tolist())
