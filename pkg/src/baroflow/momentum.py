"""Galerkin momentum balance and the coupled fixed-point time step.

Each implicit step solves, for every basis field w_j,

    int rho' u'.w_j - int rho u.w_j
      = dt [ int ( rho' u' x u' : grad w_j + p(rho') div w_j - S' : grad w_j )
             - eps int (grad rho' . grad) u' . w_j + int f . w_j ]

with S' the (mollified) stress at the new strain.  The outer Picard loop
alternates the linear density solve with the n-dimensional Newton solve of
this system at frozen density; after convergence one final density re-solve
and Newton polish leave both residuals at solver precision so the ledgers
close.
"""

import numpy as np

from .continuity import ContinuitySolver
from .errors import AdvanceAborted, NewtonError, StepRejection
from .state import DiscreteState, StepRecord, Trajectory


class MomentumSolver:
    def __init__(
        self,
        model,
        picard_tol=1e-12,
        max_picard=60,
        newton_tol=1e-13,
        max_newton=40,
    ):
        self.model = model
        self.picard_tol = float(picard_tol)
        self.max_picard = int(max_picard)
        self.newton_tol = float(newton_tol)
        self.max_newton = int(max_newton)
        self.continuity = ContinuitySolver(model.domain, model.boundary, model.eps)

    # residual assembly ------------------------------------------------------
    def residual(self, rho_new, coeffs_new, rho_old, coeffs_old, dt, t_new):
        m = self.model
        dom = m.domain
        W = dom.W
        u_new = m.velocity(coeffs_new)
        u_old = m.velocity(coeffs_old)
        basis = m.basis

        time_term = np.einsum(
            "xy,xy,xya,nxya->n", W, rho_new, u_new, basis.values
        ) - np.einsum("xy,xy,xya,nxya->n", W, rho_old, u_old, basis.values)

        wrho = W * rho_new
        conv = np.einsum(
            "xy,xya,xyb,nxyab->n", wrho, u_new, u_new, basis.grads
        )
        pres = np.einsum("xy,xy,nxy->n", W, m.law.pressure(rho_new), basis.divs)
        stress = m.potential.gradient(m.strain(coeffs_new))
        visc = np.einsum("xy,xyab,nxyab->n", W, stress, basis.grads)
        grad_rho = np.stack([dom.dx1(rho_new), dom.dx2(rho_new)], axis=-1)
        grad_u = m.velocity_gradient(coeffs_new)
        drag = np.einsum("xyb,xyab->xya", grad_rho, grad_u)
        eps_term = m.eps * np.einsum("xy,xya,nxya->n", W, drag, basis.values)

        rhs = conv + pres - visc - eps_term
        force = m.force_at(t_new)
        if force is not None:
            rhs = rhs + np.einsum("xy,xya,nxya->n", W, force, basis.values)
        return time_term - dt * rhs

    def momentum_residual(self, state, state_prev, dt):
        """Residual vector of the implicit balance between two states."""
        return self.residual(
            state.rho, state.coeffs, state_prev.rho, state_prev.coeffs, dt, state.t
        )

    # Newton solve at frozen density ------------------------------------------
    def _newton(self, rho_new, rho_old, coeffs_old, c_init, dt, t_new, scale):
        c = c_init.copy()
        n = c.size
        res = self.residual(rho_new, c, rho_old, coeffs_old, dt, t_new)
        tol = self.newton_tol * scale
        for _ in range(self.max_newton):
            norm = float(np.abs(res).max()) if n else 0.0
            if norm <= tol or n == 0:
                return c, norm
            jac = np.empty((n, n))
            for i in range(n):
                h = 1e-7 * (1.0 + abs(c[i]))
                cp = c.copy()
                cp[i] += h
                jac[:, i] = (
                    self.residual(rho_new, cp, rho_old, coeffs_old, dt, t_new) - res
                ) / h
            try:
                delta = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError as exc:
                raise NewtonError(
                    f"singular momentum Jacobian: {exc}", residual_norm=norm
                ) from exc
            # damped update
            step = 1.0
            for _ in range(10):
                cand = c + step * delta
                rnew = self.residual(rho_new, cand, rho_old, coeffs_old, dt, t_new)
                if float(np.abs(rnew).max()) < norm or norm <= tol:
                    c, res = cand, rnew
                    break
                step /= 2.0
            else:
                raise NewtonError(
                    "momentum Newton stalled (no descent direction)",
                    residual_norm=norm,
                )
        norm = float(np.abs(res).max())
        if norm > tol:
            raise NewtonError(
                f"momentum Newton did not converge (residual {norm:.3e}, "
                f"tolerance {tol:.3e})",
                residual_norm=norm,
                iterations=self.max_newton,
            )
        return c, norm

    # coupled step ------------------------------------------------------------
    def fixed_point_step(self, state, dt, tol=None, max_iter=None):
        """One implicit step of the coupled system via Picard iteration."""
        m = self.model
        tol = self.picard_tol if tol is None else float(tol)
        max_iter = self.max_picard if max_iter is None else int(max_iter)
        t_new = state.t + dt
        source = m.mass_source_at(t_new)
        u0 = m.velocity(state.coeffs)
        scale = max(
            1.0,
            m.domain.integrate(
                state.rho * (1.0 + np.einsum("xya,xya->xy", u0, u0))
                + np.abs(m.law.potential(state.rho))
            ),
        )

        c = state.coeffs.copy()
        history = []
        converged = False
        rho_new = None
        for _ in range(max_iter):
            rho_new, _ = self.continuity.step(state.rho, m.velocity(c), dt, source)
            c_new, _ = self._newton(
                rho_new, state.rho, state.coeffs, c, dt, t_new, scale
            )
            delta = float(np.abs(c_new - c).max()) if c.size else 0.0
            history.append(delta)
            c = c_new
            if delta <= tol * max(1.0, float(np.abs(c).max()) if c.size else 1.0):
                converged = True
                break
        if not converged:
            raise StepRejection(
                f"fixed-point iteration did not contract within {max_iter} sweeps",
                suggested_dt=dt / 2.0,
                diagnostics={"update_history": history},
            )
        # final consistency: re-solve density with the accepted velocity, then
        # polish the coefficients once so both residuals close simultaneously.
        rho_new, dres = self.continuity.step(state.rho, m.velocity(c), dt, source)
        c, newton_norm = self._newton(
            rho_new, state.rho, state.coeffs, c, dt, t_new, scale
        )
        rho_new, dres = self.continuity.step(state.rho, m.velocity(c), dt, source)

        new_state = DiscreteState(rho=rho_new, coeffs=c, t=t_new)
        g1, g2 = m.domain.dx1(rho_new), m.domain.dx2(rho_new)
        record = StepRecord(
            t0=state.t,
            t1=t_new,
            dt=dt,
            picard_iterations=len(history),
            newton_residual=newton_norm,
            density_solve_residual=dres,
            mass_ledger_residual=self.continuity.mass_ledger_residual(
                state.rho, rho_new, dt, source
            ),
            min_rho=float(rho_new.min()),
            max_rho=float(rho_new.max()),
            eps_grad_rho_sq=m.eps * m.domain.integrate(g1 * g1 + g2 * g2),
            div_u_norm=m.div_velocity_norm(c),
        )
        return new_state, record

    def advance(self, initial, t_final, dt, tol=None, max_iter=None):
        """March to t_final; aborts carry the partial trajectory."""
        traj = Trajectory(self.model, states=[initial.copy()], records=[])
        if t_final <= initial.t:
            return traj
        n_steps = int(round((t_final - initial.t) / dt))
        state = initial
        for _ in range(n_steps):
            try:
                state, record = self.fixed_point_step(state, dt, tol, max_iter)
            except (StepRejection, NewtonError) as exc:
                raise AdvanceAborted(
                    f"time marching aborted at t = {state.t:.6g}: {exc}",
                    partial=traj,
                    cause=exc,
                ) from exc
            traj.states.append(state)
            traj.records.append(record)
        return traj


def advance(model, initial, t_final, dt, **solver_kwargs):
    return MomentumSolver(model, **solver_kwargs).advance(initial, t_final, dt)
