"""Check a System Engineer gain proposal in closed loop.

The proposal below raises Kp and Td, shortens Ti and lowers the reference
filter's velocity limit. Both runs share the seed and the spike, so any
change in the post-fault peak comes from the gains alone.
"""

from aivv.report import verify_gain_proposal
from aivv.telemetry import FaultSpec, Scenario, SimConfig

proposal = {"Kp": 0.7, "Ti": 15.0, "Td": 1.2, "Reference_Max_Velocity": 9.0}
print(f"{'seed':>4} {'peak before':>12} {'peak after':>11} {'settled':>8}")
for seed in range(5):
    c = verify_gain_proposal(SimConfig(scenario=Scenario.HOVERING, seed=seed), proposal, FaultSpec("spike"))
    print(f"{seed:4d} {c.peak_deviation_before:12.3f} {c.peak_deviation_after:11.3f} "
          f"{str(c.settled_before)[0]}->{str(c.settled_after)[0]:>4}")

# %% a damper failure is another matter: no gain set rescues a jammed rudder
c = verify_gain_proposal(SimConfig(scenario=Scenario.COMPLEX, seed=0), proposal, FaultSpec("damper"))
print(f"\ndamper, complex mission: peak {c.peak_deviation_before:.1f} -> {c.peak_deviation_after:.1f} deg, "
      f"settled {c.settled_before} -> {c.settled_after}")
