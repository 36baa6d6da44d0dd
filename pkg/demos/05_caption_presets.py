"""
The seven-spin presets
======================

Scenario files reproduce the published parameter sets.  A short run is
shown here; pass a step count on the command line for a longer one, e.g.
``python 05_caption_presets.py 20000``.  The realistic preset takes a few
minutes to saturate on one core.
"""
import json
import sys

from fqpol.scenarios import PRESETS, parse_config, run_scenario

n_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300

for name in ("fig-sim2", "fig-sim3", "fig-sim7"):
    scenario = PRESETS[name]["scenario"]
    cfg = parse_config(json.dumps({"scenario": scenario, "preset": name,
                                   "schedule": {"n_steps": n_steps}}))
    res = run_scenario(cfg)
    side = res.sidecar
    print(f"{name}: scenario {scenario}, g = {PRESETS[name]['g']}")
    print(f"   dissipation free: {side['rates']['dissipation_free']}, "
          f"steps run: {side['schedule']['steps_run']} ({side['schedule']['stopped_by']})")
    print(f"   p_up per spin: {[round(x, 4) for x in side['final_p_up_per_spin']]}")
    print(f"   mean: {res.final_p_up:.4f}")
