"""Wall time of one H|psi> update as the chain grows by one qubit at a time."""
from qsv.pipelines import time_apply

prev = None
for n in range(16, 22):
    r = time_apply(n, 1, repetitions=3)
    ratio = "" if prev is None else f"  x{r['min_s'] / prev:.2f}"
    print(f"N={n}: {1e3 * r['min_s']:8.2f} ms  padding ratio {r['cost']['padding_ratio']:.2f}{ratio}")
    prev = r["min_s"]
