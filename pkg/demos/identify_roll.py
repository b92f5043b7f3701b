# Identify T_d and tau from two relay tests, then see how noise spreads the estimate
from mrftid import (
    PriorKnowledge,
    TestObservation,
    generate_ufm,
    identify_single_test,
    identify_two_freq,
    monte_carlo,
    soiptd,
    solve_limit_cycle,
)
from mrftid.mrft import MrftConfig

truth = soiptd(K=0.14 * 1.42, T_p=0.1, T_d=1 / 1.42, tau=0.06)
manifolds = {b: generate_ufm(b) for b in (-0.4, -0.7)}

# Observed oscillation frequencies (here from the exact solver)
cycles = {b: solve_limit_cycle(truth, MrftConfig(b)) for b in manifolds}
obs = [TestObservation(b, c.frequency_hz, 1.0, c.amplitude) for b, c in cycles.items()]

prior = PriorKnowledge(T_p=0.1)  # propulsion lag from a bench step test
r = identify_two_freq(obs, prior, manifolds)
print(f"two tests:  T_d = {r.T_d:.4f}  tau = {r.tau:.4f}")

# One test plus the amplitude needs the gain
r1 = identify_single_test(obs[1], PriorKnowledge(T_p=0.1, K=0.14 * 1.42), manifolds)
print(f"one test:   T_d = {r1.T_d:.4f}  tau = {r1.tau:.4f}")

# 3% multiplicative noise on every measured quantity
for label, o, p in (("two tests", obs, prior), ("one test", [obs[1]], PriorKnowledge(0.1, K=0.14 * 1.42))):
    st = monte_carlo(o, p, manifolds, 0.03, n=200, seed=3).stats
    print(f"{label:10}  T_d {st['T_d']['mean']:.3f} +- {st['T_d']['std']:.3f}"
          f"  tau {st['tau']['mean']:.4f}  failed draws {st['n_failed']}")
