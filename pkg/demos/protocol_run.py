"""Generate a story, run both strategies for a few seeds and compare curves."""

import sys

from discd.dataset import generate
from discd.protocol import ProtocolConfig, cost_table, mean_curve, run

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
curves = {}
for strategy in ("discd", "random"):
    logs = [run(generate(seed=s), ProtocolConfig(T=40, strategy=strategy, seed=s)) for s in seeds]
    curves[strategy] = mean_curve(logs)

print("round  discd  random")
for t in range(0, 41, 5):
    print(f"{t:5d}  {curves['discd'][t]:.3f}  {curves['random'][t]:.3f}")

for row in cost_table(curves["discd"], ProtocolConfig()):
    print(row)
