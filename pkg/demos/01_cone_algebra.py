"""Light cones, the hyperbolic norm and the Legendre pair (L, H).

Run: python demos/01_cone_algebra.py
"""

import numpy as np

from lorlab.cone import PExponent, classify, f_norm, hamiltonian, hamiltonian_hessian, lagrangian, legendre_check

eta = np.diag([1.0, -1.0])

# Every vector falls into one causal class.  Only future-directed causal
# vectors get a finite norm; everything else maps to the -inf sentinel.
for v in ([2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [-1.0, 0.0]):
    print(f"v = {v}: {classify(v, eta).value:12s} |v|_F = {f_norm(v, eta)}")

# The exponent p < 1 fixes the Hamiltonian H(w) = -(1/p)|w|^p and its
# conjugate q = p/(p-1) fixes the Lagrangian L(v) = -(1/q)|v|^q.
pq = PExponent(0.5)
print(f"\np = {pq.p}, q = {pq.q}")
print("L(2,1) =", lagrangian([2.0, 1.0], pq, eta).value, " H(2,1) =", hamiltonian([2.0, 1.0], pq, eta).value)

# D^2 H is positive definite inside the dual cone: this is what makes the
# p-d'Alembertian elliptic on future-directed functions.  At rest the
# eigenvalues are 1 - p and 1, so ellipticity degenerates as p -> 1.
for p in (0.5, 0.9, 0.99):
    _, lam = hamiltonian_hessian([1.0, 0.0], PExponent(p), eta)
    print(f"p = {p}: eigenvalues of D^2H at w = (1, 0): {np.round(lam, 6)}")

# Momentum and velocity are inverse maps; the round trip is exact to rounding.
v = np.array([1.7, -0.4])
print("\nLegendre round-trip residual:", legendre_check(v, pq, eta))
