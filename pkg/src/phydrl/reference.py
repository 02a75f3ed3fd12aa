"""Reference cart-pole model and design matrices, as published (rounded)."""
import numpy as np

from .safety_geometry import SafetySet

# Forward-Euler discretization of the friction-free linearization, dt = 1/30 s.
A = np.array([
    [1.0, 0.0333, 0.0, 0.0],
    [0.0, 1.0, -0.0565, 0.0],
    [0.0, 0.0, 1.0, 0.0333],
    [0.0, 0.0, 0.8980, 1.0],
])
B = np.array([[0.0], [0.0334], [0.0], [-0.0783]])

Q = np.array([
    [0.66951866, -0.69181711, -0.27609583, 0.55776279],
    [-0.69181711, 9.86247186, 0.1240829, -12.4011146],
    [-0.27609583, 0.1240829, 0.66034399, -2.76789607],
    [0.55776279, -12.4011146, -2.76789607, 32.32280039],
])
R = np.array([[-6.40770185, -18.97723676, 6.10235911, 31.03838284]])

P = np.array([
    [4.6074554, 1.49740096, 5.80266046, 0.99189224],
    [1.49740096, 0.81703147, 2.61779592, 0.51179642],
    [5.80266046, 2.61779592, 11.29182733, 1.87117709],
    [0.99189224, 0.51179642, 1.87117709, 0.37041435],
])
F = np.array([[8.25691599, 6.76016534, 40.12484514, 6.84742553]])
A_BAR = np.array([
    [1.0, 0.03333333, 0.0, 0.0],
    [0.27592037, 1.22590363, 1.2843559, 0.2288196],
    [0.0, 0.0, 1.0, 0.03333333],
    [-0.64668827, -0.52946156, -2.24458365, 0.46370415],
])

ALPHA = 0.98
ACTION_BOUND = 16.0
X_BOUND = 0.9
THETA_BOUND = 0.8


def cartpole_safety_set() -> SafetySet:
    """``|x| <= 0.9`` and ``|theta| <= 0.8`` on the state ``[x, v, theta, omega]``."""
    D = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    bound = np.array([X_BOUND, THETA_BOUND])
    return SafetySet(D, np.zeros(2), bound, -bound)
