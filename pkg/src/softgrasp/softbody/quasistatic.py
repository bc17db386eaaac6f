"""Quasi-static equilibrium solve and the configuration Jacobian dq/dl.

Newton's method on the total energy with backtracking line search; the
Hessian gets an adaptive Tikhonov shift (doubling from 1e-8) whenever it
is not positive definite, so steps are always descent directions.

The tendon rest lengths enter the equilibrium map l -> q*(l); its
derivative follows from the implicit function theorem:
dq/dl = -H^{-1} d2E/(dq dl), evaluated at the equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from softgrasp.errors import DivergenceError
from softgrasp.softbody import fem
from softgrasp.softbody.mesh import SoftBodyMesh

GRAD_TOL = 1e-8
MAX_ITERS = 200
_LAM_BASE = 1e-8
_LAM_MAX = 1e12


@dataclass
class QuasistaticResult:
    positions: np.ndarray
    iterations: int
    residual: float  # |grad E|_inf at the solution
    energy: float


def _regularized_solve(h: np.ndarray, rhs: np.ndarray, lam_hint: float = 0.0):
    """Solve h x = rhs after shifting h to positive definite if needed.

    The shift is the smallest value in {0} U {1e-8 * 2^k} whose Cholesky
    factorization succeeds. Positive definiteness is monotone in the
    shift, so the scan may start from a hint (e.g. the previous accepted
    shift) and still return that same smallest value.
    """
    eye = np.eye(h.shape[0])

    def factor(lam):
        try:
            return np.linalg.cholesky(h + lam * eye if lam else h)
        except np.linalg.LinAlgError:
            return None

    lam, chol = 0.0, factor(0.0)
    if chol is None:
        k = 0
        if lam_hint > 0.0:
            k = max(0, int(round(np.log2(lam_hint / _LAM_BASE))))
        lam = _LAM_BASE * 2.0 ** k
        chol = factor(lam)
        if chol is None:  # walk up to the first success
            while chol is None:
                k += 1
                lam = _LAM_BASE * 2.0 ** k
                if lam > _LAM_MAX:
                    raise DivergenceError(
                        "Hessian regularization exceeded 1e12") from None
                chol = factor(lam)
        else:  # walk down to the smallest success
            while k > 0:
                lower = factor(_LAM_BASE * 2.0 ** (k - 1))
                if lower is None:
                    break
                k -= 1
                lam, chol = _LAM_BASE * 2.0 ** k, lower
    x = solve_triangular(chol, rhs, lower=True)
    return solve_triangular(chol, x, lower=True, trans='T'), lam


def solve_quasistatic(mesh: SoftBodyMesh, l, q_guess: np.ndarray | None = None,
                      gravity_on: bool = False, base_pose=None,
                      tol: float = GRAD_TOL,
                      max_iters: int = MAX_ITERS) -> QuasistaticResult:
    """Minimize total energy over node positions; raises on non-convergence."""
    q = (mesh.rest_positions if q_guess is None else q_guess).copy()
    if not np.isfinite(q).all():
        raise DivergenceError("non-finite initial guess")

    def energy(qq):
        return fem.total_energy(mesh, qq, l, base_pose, gravity_on)

    e = energy(q)
    grad = -fem.forces(mesh, q, l, base_pose, gravity_on).ravel()
    res = float(np.abs(grad).max())
    best_q, best_res = q.copy(), res
    stalls = 0
    lam = 0.0
    for it in range(max_iters):
        if res < tol:
            return QuasistaticResult(q, it, res, e)

        h = fem.hessian(mesh, q, l, base_pose)
        dq, lam = _regularized_solve(h, -grad, lam_hint=lam)
        descent = float(grad @ dq)
        if descent >= 0.0:  # fall back to steepest descent
            dq = -grad / max(np.abs(grad).max(), 1.0)
            descent = float(grad @ dq)

        if res < 1e-5:
            # polish mode: near the minimum the per-step energy decrement
            # falls below float resolution of the total energy, so Armijo
            # cannot certify descent; plain Newton still contracts the
            # gradient, which is what the tolerance is measured on
            q = q + dq.reshape(-1, 3)
            e = energy(q)
        else:
            step, accepted = 1.0, False
            for _ in range(60):
                q_new = q + step * dq.reshape(-1, 3)
                e_new = energy(q_new)
                if e_new <= e + 1e-4 * step * descent:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                raise DivergenceError("line search failed",
                                      residual=res, iterations=it)
            q, e = q_new, e_new

        prev = res
        grad = -fem.forces(mesh, q, l, base_pose, gravity_on).ravel()
        res = float(np.abs(grad).max())
        if res < best_res:
            best_q, best_res = q.copy(), res
        stalls = stalls + 1 if res >= prev else 0
        if stalls >= 5:
            break

    if best_res < tol:
        return QuasistaticResult(best_q, max_iters, best_res, energy(best_q))
    raise DivergenceError(
        f"no convergence, |grad|_inf = {best_res:.3e}",
        residual=best_res, iterations=max_iters)


def configuration_jacobian(mesh: SoftBodyMesh, q_star: np.ndarray, l,
                           gravity_on: bool = False,
                           base_pose=None) -> np.ndarray:
    """dq/dl at an equilibrium, shape (3N, 4).

    Requires |grad E|_inf < 1e-6 at q_star; the gravity/base arguments must
    match the ones the equilibrium was solved with.
    """
    grad = -fem.forces(mesh, q_star, l, base_pose, gravity_on).ravel()
    res = float(np.abs(grad).max())
    if res >= 1e-6:
        raise ValueError(
            f"configuration_jacobian needs an equilibrium; |grad|_inf = {res:.3e}")
    h = fem.hessian(mesh, q_star, l, base_pose)
    coupling = fem.length_coupling(mesh, q_star, l)
    sol, _ = _regularized_solve(h, -coupling)
    return sol
