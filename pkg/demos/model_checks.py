"""
Checking the dynamic model
==========================

Runs the property suite the ``softarm check`` command prints: inertia
positive definiteness, the skew structure of ``Mdot - 2C``, gravity as the
gradient of the potential, energy conservation, and the integrator order.
Then shows how a hysteresis state responds to a back-and-forth motion.
"""

import numpy as np

from softarm import DynamicParameters, Model, QuadratureSettings, RobotGeometry
from softarm.checks import format_table, run_checks

geo = RobotGeometry()
params = DynamicParameters()
quad = QuadratureSettings()

print(format_table(run_checks(geo, params, quad, quick=True)))

model = Model(geo, params, quad)
q = np.array([0.01, 0.02, 0.03])
M, G, _ = model.inertia_gravity(q)
print("\nM(q) =\n", np.round(M, 5))
print("G(q) =", np.round(G, 5), "N")
print("eigenvalues of M:", np.round(np.linalg.eigvalsh(M), 5))

# Bouc-Wen state under a sinusoidal elongation, explicit Euler on a fine grid
dt = 1e-4
t = np.arange(0, 4 * np.pi, dt)
x = 0.02 * np.sin(t)
xd = 0.02 * np.cos(t)
h = np.zeros_like(t)
a, b, g = params.alpha_h, params.beta_h, params.gamma_h
for k in range(len(t) - 1):
    h[k + 1] = h[k] + dt * xd[k] * (a - (b * np.sign(xd[k] * h[k]) + g) * abs(h[k]))
up = (xd > 0) & (np.abs(x) < 1e-4) & (t > 2 * np.pi)
down = (xd < 0) & (np.abs(x) < 1e-4) & (t > 2 * np.pi)
print(f"\nhysteresis at x = 0 on the second cycle: rising {h[up].mean():.4f}, falling {h[down].mean():.4f}")
