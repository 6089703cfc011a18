"""
Bregman iteration and the method of multipliers
===============================================

For a linear constraint the two-step Bregman iteration and the augmented
Lagrangian method produce the same iterates, with lambda = alpha * b.
"""

import numpy as np

from socpgo.soc import LinearBregmanProblem, solve_linear_bregman

rng = np.random.default_rng(3)
m, s = 6, 2
A = rng.normal(size=(m, m))
p = LinearBregmanProblem(A @ A.T + np.eye(m), rng.normal(size=m), rng.normal(size=(s, m)),
                         rng.normal(size=s), alpha=2.0)

x_breg = solve_linear_bregman(p, 30)

# method of multipliers, written out by hand
lam = np.zeros(s)
x_mom = []
H = p.Q + p.alpha * p.K.T @ p.K
for k in range(30):
    x = np.linalg.solve(H, p.alpha * p.K.T @ p.f - p.K.T @ lam - p.c)
    lam += p.alpha * (p.K @ x - p.f)
    x_mom.append(x)

print("max difference of the iterates:", np.abs(x_breg - np.array(x_mom)).max())
print("constraint violation |Kx - f| by iteration:")
for k in (0, 4, 9, 29):
    print(f"  {k + 1:2d}: {np.linalg.norm(p.K @ x_breg[k] - p.f):.2e}")

# the simplest case: J = |x|^2, K = I, first iterate alpha f / (2 + alpha)
f = np.array([1.0, -2.0, 0.5])
tr = solve_linear_bregman(LinearBregmanProblem(2 * np.eye(3), np.zeros(3), np.eye(3), f), 50)
print("\nfirst iterate", tr[0], " last", tr[-1])
