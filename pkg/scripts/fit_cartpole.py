"""Recover cart-pole parameters from the published discrete linear model.

Prints the fitted parameters and the per-entry relative error of the
resulting linearization. The values are committed as CartPoleParams defaults.
"""
import numpy as np

from phydrl import reference as ref
from phydrl.cartpole import fit_linearization, linearized_model

p = fit_linearization(ref.A, ref.B)
print(f"cart_mass        = {p.cart_mass:.5f}")
print(f"pole_mass        = {p.pole_mass:.5f}")
print(f"pole_half_length = {p.pole_half_length:.5f}")
print(f"gravity          = {p.gravity}")
plant = linearized_model(p)
for name, fit, pub in (("A", plant.A, ref.A), ("B", plant.B, ref.B)):
    nz = pub != 0
    err = np.abs(fit[nz] - pub[nz]) / np.abs(pub[nz])
    print(f"{name}: max relative error over nonzero entries {err.max():.2e}")
