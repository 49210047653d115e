"""Nested accounting: allocation inside Poisson subsampling inside composition.

The same pipeline is also reachable from the shell:

    pld-accounting preamble --sigma 2 --t 16 --k 2 --sampling-rate 0.5 --epochs 1 --alpha 1e-2
"""

from pld_accounting.core import TightnessParams
from pld_accounting.pipeline import preamble_spec, run_pipeline

params = TightnessParams(1e-2, 1e-10)
for sigma in (1.0, 2.0, 4.0):
    report = run_pipeline(preamble_spec(sigma, 16, 2, 0.5, 2, params, epsilons=[1.0], deltas=[1e-5]))
    d = report["delta_of_epsilon"][0]
    e = report["epsilon_of_delta"][0]
    print(f"sigma={sigma}: delta(1.0) in [{d['delta_lower']:.3e}, {d['delta_upper']:.3e}], "
          f"eps(1e-5) in [{e['epsilon_lower']:.4f}, {e['epsilon_upper']:.4f}]")
