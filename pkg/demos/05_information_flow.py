"""
Deterministic processing never adds information
===============================================

On small discrete joints the mutual information with a target Z can only
fall along X -> H -> O -> Y, and a second observation splits exactly by
the chain rule.
"""

import numpy as np

from evafuse.infoflow import (
    DeterministicMap,
    random_chain_rule_trials,
    random_dpi_trials,
    random_joint,
    verify_chain_rule,
    verify_dpi_chain,
)

rng = np.random.default_rng(5)

# %% One chain, printed step by step (nats)
j = random_joint(rng, {"Z": 4, "X": 8}, concentration=0.3)
res = verify_dpi_chain(j, DeterministicMap.random(rng, 8, 6), DeterministicMap.random(rng, 6, 4),
                       DeterministicMap.random(rng, 4, 3))
for name, val in res.values.items():
    print(f"I(Z;{name}) = {val:.4f}")
print("ordering holds:", res.holds)

# %% The chain rule on a random three-variable joint
c = verify_chain_rule(random_joint(rng, {"Z": 3, "O1": 4, "O2": 4}))
print(f"I(Z;O1,O2)={c.joint:.4f} = I(Z;O1)={c.first:.4f} + I(Z;O2|O1)={c.conditional:.4f}"
      f"  (residual {c.residual:.1e})")

# %% Many trials
print(sum(r.holds for r in random_dpi_trials(200)), "/ 200 chains ordered")
print("max chain-rule residual:", max(r.residual for r in random_chain_rule_trials(200)))
