# Fitting a first-order-plus-delay model to a noisy thrust step
import numpy as np

from mrftid import fit_step_response

rng = np.random.default_rng(0)
t = np.arange(-0.1, 0.4, 1e-3)  # 1 kHz load cell, step at t = 0
T_p, tau_p = 0.0499, 0.0203
f = 2.0 + 3.5 * np.where(t >= tau_p, 1 - np.exp(-(t - tau_p) / T_p), 0.0)
f += rng.normal(0, 0.035, t.size)

fit = fit_step_response(t, f)
print(fit)
print(f"T_p {fit.T_p:.4f} (true {T_p}), tau_p {fit.tau_p:.4f} (true {tau_p})")

# residuals should look like the injected noise
print(np.std(f - fit.model(t)))
