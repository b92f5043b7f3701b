# Unit-frequency manifold: which (T_d, tau) pairs oscillate at 1 Hz for a given T_p
import numpy as np

from mrftid import GridSpec, generate_ufm, scale_manifold, slice_at_tp

# A coarse grid keeps this quick; the library default is finer.
grid = GridSpec(tp_range=(0.005, 0.5), td_range=(0.05, 20.0), n_tp=20, n_td=40)
man = generate_ufm(-0.7, grid)
print(f"{man.n_feasible} of {man.tau.size} cells oscillate at 1 Hz")

# tau shrinks as the drag time constant grows: more lag must come from elsewhere
s = slice_at_tp(man, 0.1)
for td in (0.1, 0.5, 1.0, 5.0):
    print(f"T_d = {td:4}  tau = {s.at(td):.4f}  amplitude = {s.at(td, 'amp'):.5f}")

# Observing 2 Hz instead just rescales the time axes by 1/2
fast = scale_manifold(man, 2.0)
print(np.allclose(fast.tau, man.tau / 2, equal_nan=True))
