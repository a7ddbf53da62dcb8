"""
Arc kinematics of one section
=============================

Walks from actuator elongations to arc parameters and the tip, then back
through the closed-form inverse. Ends with the lattice the string encoders
impose on measured elongations.
"""

import numpy as np

from softarm import RobotGeometry, config_from_actuator, inverse_kinematics, pose_at, tip_position
from softarm.kinematics import elongation_from_pulses, pulses_from_elongation

geo = RobotGeometry()

# A generic bend: the longest actuator sits on the outside of the arc
l = np.array([0.01, 0.02, 0.03])
arc = config_from_actuator(geo, l)
print(f"l = {l} m")
print(f"  s = {arc.s:.6g}  phi = {arc.phi:.6g} rad  lam = {arc.lam:.6g} m  theta = {np.degrees(arc.theta):.2f} deg")

# backbone samples, base to tip
for xi in np.linspace(0, 1, 5):
    p = pose_at(geo, arc, xi).translation
    print(f"  xi = {xi:.2f}: {np.round(p * 1e3, 3)} mm")

# Start of the reference circle and back again
P = np.array([0.0, 0.05, 0.19])
l_ik = inverse_kinematics(geo, P)
print(f"\nIK({P.tolist()}) -> l = {np.round(l_ik, 6)} m")
print(f"  FK(IK(P)) - P = {tip_position(geo, l_ik) - P}")

# Equal elongations give a straight section; tiny differences bend it slightly
print("\nnear the straight configuration:")
for ds in (1e-3, 1e-5, 1e-7):
    p = tip_position(geo, [0.0, ds, 0.0])
    print(f"  l2 = {ds:g}: lateral tip offset {np.hypot(p[0], p[1]):.3e} m")

# Encoders count quarter pulses of a 600 ppr wheel on a 1 cm rotor
counts = pulses_from_elongation(geo, l_ik)
print(f"\nencoder step {geo.encoder_step * 1e6:.3f} um; counts {counts.tolist()}")
print(f"  quantisation error {np.abs(elongation_from_pulses(geo, np.array(counts)) - l_ik).max() * 1e6:.3f} um")
