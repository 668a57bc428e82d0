"""
Choosing between the finite and infinite partition regimes
==========================================================

The three-phase workflow: a pilot chain in each regime alone, pseudopriors
fitted to the pilots, then one chain that jumps between regimes. The share
of sweeps spent in the finite regime gives the Bayes factor.

Run with ``python3 demos/regime_selection.py`` (well under a minute).
"""

from dataclasses import replace

import numpy as np

from dagsbm import PriorConfig, TuningConfig, bayes_factor, fit_pseudopriors, generate_planted, run_chain

g, _ = generate_planted(90, 3, within=0.6, between=0.03, seed=1)
priors = PriorConfig(p_r1=0.5)

# phase 1 and 2: pilots in each regime
pilot = TuningConfig(burn_in=500, iterations=1500, seed=1)
finite = run_chain(g, priors, pilot, mode="finite")
infinite = run_chain(g, priors, pilot, mode="infinite")
print(f"finite pilot:   mean gamma {np.mean([r.gamma for r in finite]):.3f}, mean k {np.mean([r.k for r in finite]):.1f}")
print(f"infinite pilot: mean alpha {np.mean([r.alpha for r in infinite]):.3f}, mean theta {np.mean([r.theta for r in infinite]):.3f}")

# moment-matched pseudopriors stand in for the parameters of the regime not visited
pseudo = fit_pseudopriors(finite, infinite, priors)
print("pseudopriors:", pseudo.to_dict())

# phase 3: regime selection. When one regime fits much better the chain
# never leaves it, so P(r=1) is lowered by trial until both are visited;
# the Bayes factor corrects for whichever prior odds were used
for p_r1 in (0.5, 0.05, 0.005, 0.0005):
    priors = replace(priors, p_r1=p_r1)
    select = run_chain(g, priors, TuningConfig(burn_in=300, iterations=2000, seed=2), mode="select", pseudo=pseudo)
    p1 = np.mean([r.regime for r in select])
    print(f"P(r=1) = {p_r1:<7} -> P(r=1 | Y) = {p1:.4f}")
    if 0.05 < p1 < 0.95:
        break
print(f"B_10 = {bayes_factor(p1, p_r1):.1f} in favour of the finite regime")
