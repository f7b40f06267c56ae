"""How path length and chain draws affect the normalizing-constant ratio estimate.

Compares estimates against exact enumeration on 4-node graphs, for distant
parameter pairs (where a direct importance sample breaks down) and for
proposal-sized moves (where every path length agrees).
"""

import numpy as np

from dpmergm.graph import Graph
from dpmergm.ratio import RatioConfig, estimate_log_ratio, make_path
from dpmergm.simulate import exact_log_normalizer
from dpmergm.stats import ModelSpec

spec = ModelSpec.of("edges", "triangles")
template = Graph.empty(4)
rng = np.random.default_rng(0)
mu0 = np.array([-3.0, 0.0])


def median_error(pairs, m1, m2):
    errs = []
    for r, (a, b) in enumerate(pairs):
        exact = exact_log_normalizer(spec, b, 4) - exact_log_normalizer(spec, a, 4)
        est = estimate_log_ratio(spec, make_path(a, b, m1), None, template, RatioConfig(m1, m2), seed=r)
        errs.append(abs(est - exact))
    return np.median(errs)


distant = [(rng.normal(mu0, 4.0), rng.normal(mu0, 4.0)) for _ in range(20)]
close = []
for _ in range(20):
    a = rng.normal(mu0, 1.0)
    close.append((a, a + rng.normal(scale=0.05, size=2)))

for name, pairs in (("distant pairs", distant), ("proposal-sized moves", close)):
    print(f"\nmedian |log error|, {name}")
    print("  m1 \\ m2 " + "".join(f"{m2:>10d}" for m2 in (10, 100, 1000)))
    for m1 in (0, 2, 5, 10):
        row = "".join(f"{median_error(pairs, m1, m2):10.4f}" for m2 in (10, 100, 1000))
        print(f"  {m1:>7d} {row}")
