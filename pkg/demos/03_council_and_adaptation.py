"""Compare the three pipeline modes on one complex-mission seed.

MathOnly trusts the sentry. MathPlusCouncil lets three role agents (RE, FM
and SE) overturn a flag by majority. Full adds a second round in which an
Inspector chooses an adaptation, a Tuner applies it to a clone of the engine,
and the clone is promoted only if it then passes the same sample. The agents
here are the deterministic stubs, so the run needs no network.
"""

from aivv.orchestrator import EventLog, Mode, PipelineConfig, run_stream
from aivv.engine import build_engine
from aivv.report import build_vv_summary
from aivv.telemetry import dataset_for, make_windows

seed = 3
ds = dataset_for("complex", seed)
train, test = make_windows(ds)
base = build_engine(train, seed=seed)

runs = {}
for mode in Mode:
    events = EventLog()
    metrics, records, pipe = run_stream(base.clone(), ds, train, test, PipelineConfig(mode, seed),
                                        events=events)
    runs[mode] = (metrics, records, events)
    print(f"{mode.value:>8}: accuracy {metrics.accuracy:.3f}  TP={metrics.tp:3d} FP={metrics.fp:3d} "
          f"TN={metrics.tn:3d} FN={metrics.fn:3d}  seed_success={metrics.seed_success}  "
          f"adaptations={metrics.adaptations} promotions={metrics.promotions}")

# %% follow one sample the sentry flagged before the fault through the Full pipeline
metrics, records, events = runs[Mode.FULL]
cleared = next((r for r in records if r.initial["decision"] == "FAIL" and r.label == "PASS"), None)
if cleared is not None:
    print(f"\nsample {cleared.sample_id} (step {cleared.raw_index}, fault={cleared.truth}): "
          f"residual {cleared.initial['residual']:.2f} vs bound {cleared.initial['bound']:.2f}")
    for e in events.events:
        if e["sample_id"] == cleared.sample_id:
            p = e["payload"]
            what = p.get("vote") or p.get("majority_decision") or p.get("action") or p.get("decision") or ""
            if "passes_reevaluation" in p:
                what = f"candidate passes={p['passes_reevaluation']} at alpha={p['applied_alpha']}"
            print(f"  {e['from_agent']:>9} -> {e['to_agent']:<12} {what}")
    print(f"  final label {cleared.label}, engine promoted={cleared.promoted}")

# %% the same event log, summarised per role
print()
print(build_vv_summary(events).render_text())
