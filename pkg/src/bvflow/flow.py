"""Flow maps of catalog fields: ensemble integration, pushforward
densities, and conformance checks.

Two solver methods:

``rk4_event``
    Classical fixed-step RK4 inside a smooth piece.  For strip fields
    every step is screened against the jump surfaces; a sign change of
    the signed level value triggers bisection of the step down to
    ``event_tol``, a transversality check of the one-sided traces, and a
    restart on the receiving side.  Tangential or opposing traces raise
    :class:`NonTransversalCrossingError` (the trajectory would slide or
    split; for field E backward in time this is the expected outcome).

``explicit_exact``
    Closed-form flows, available for B (separable 1-D dynamics), C and D
    (piecewise translations), and E forward in time, where the flow
    implements the sticking selection at the compressive interface so
    the near-incompressibility violation can be observed.  Field A has
    no elementary flow.

The log-Jacobian  log J(t, x) = int_0^t div^a b(X(s, x)) ds  is carried
along every trajectory.  J(t, .) is exactly the density of the measure
X(-t, .)_# lambda (the mu of the discrepancy machinery), evaluated at
the trajectory's own starting point, so sampling exp(log J) on a uniform
initial grid gives the density field with no scattered-data step.

Trajectories are independent and all operations are vectorized numpy
with fixed reduction order, so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import catalog
from .catalog import PiecewiseField, get_field
from .torus import torus_distance, wrap_coords, wrap_half

__all__ = [
    "FlowSolverConfig",
    "FlowEnsemble",
    "DensityField",
    "NonTransversalCrossingError",
    "RunawayTrajectoryError",
    "integrate_flow",
    "density_from_flow",
    "pushforward_histogram",
    "check_group_property",
    "check_ode_residual",
    "export_csv",
    "collision_branch_maps",
    "ExactFlowMap",
    "InterpolatedFlowMap",
    "DirectFlowMap",
    "make_flow_map",
]

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class NonTransversalCrossingError(RuntimeError):
    """A trajectory met a jump surface it cannot cross unambiguously."""

    def __init__(self, field_id, point, detail=""):
        self.field_id = field_id
        self.point = np.asarray(point, dtype=float)
        msg = (
            f"field {field_id}: non-transversal crossing at "
            f"{np.round(self.point, 6).tolist()}"
        )
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class RunawayTrajectoryError(RuntimeError):
    """A trajectory exceeded the configured crossing budget."""


@dataclass(frozen=True)
class FlowSolverConfig:
    """Solver parameters; ``event_tol`` bounds the level value at a located
    crossing and must not exceed the step."""

    step: float = 1e-3
    method: str = "rk4_event"
    event_tol: float = 1e-12
    max_crossings: int = 1000

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.event_tol <= 0 or self.event_tol > self.step:
            raise ValueError("event_tol must satisfy 0 < event_tol <= step")
        if self.method not in ("rk4_event", "explicit_exact"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class FlowEnsemble:
    """Trajectories of one field from a set of initial points.

    positions are wrapped onto the torus; displacements are the
    unwrapped X(t, x) - x (smooth periodic in x for smooth fields, which
    is what the interpolating flow maps consume).
    """

    field_id: str
    config: FlowSolverConfig
    initial_points: np.ndarray  # (M, 2)
    times: np.ndarray  # (T,)
    positions: np.ndarray  # (T, M, 2)
    displacements: np.ndarray  # (T, M, 2)
    log_jacobian: np.ndarray  # (T, M)

    def time_index(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-12))[0]
        if idx.size == 0:
            raise KeyError(f"time {t} not stored in ensemble (times {self.times})")
        return int(idx[0])


@dataclass
class DensityField:
    """Density samples mu(t, .) at explicit sample points."""

    time: float
    points: np.ndarray  # (M, 2)
    values: np.ndarray  # (M,)
    bins: int | None = None

    def total_mass(self) -> float:
        """Mean over the (uniform) sample points, i.e. int mu d lambda."""
        return float(np.mean(self.values))


# ---------------------------------------------------------------------------
# RK4 with event handling
# ---------------------------------------------------------------------------


def _rk4_step(fld: PiecewiseField, y, logj, h, piece=None):
    """One RK4 step of the augmented system (y, log J), step h (signed).

    With ``piece`` set, the stages evaluate that piece's smooth
    extension instead of selecting by position.  This is how steps that
    end on a jump surface are computed: the k4 stage of a mixed step
    would otherwise sample the far side of the surface and pollute the
    tangential components at O(h) whenever the endpoint rounds across.
    """
    if piece is None:
        def rhs(state):
            w = wrap_coords(state)
            return fld.eval_many(w), fld.divergence_many(w)
    else:
        pc = fld.pieces[piece]

        def rhs(state):
            w = wrap_coords(state)
            return pc.b(w), np.trace(pc.jacobian(w), axis1=-2, axis2=-1)

    k1, d1 = rhs(y)
    k2, d2 = rhs(y + 0.5 * h * k1)
    k3, d3 = rhs(y + 0.5 * h * k2)
    k4, d4 = rhs(y + h * k3)
    y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    logj_new = logj + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return y_new, logj_new


def _levels(fld: PiecewiseField, y):
    """Signed level values of every jump surface, shape (J, M)."""
    return np.stack(
        [
            wrap_half(y @ np.asarray(j.normal_int, dtype=float) - j.offset)
            for j in fld.jumps
        ],
        axis=0,
    )


def _nudge_initial_points(fld: PiecewiseField, y):
    """Push initial points sitting exactly on a surface 1e-9 along eta."""
    if not fld.jumps:
        return y
    moved = 0
    for jump in fld.jumps:
        lv = jump.level(wrap_coords(y))
        mask = np.abs(lv) <= catalog.TAU_SIGMA
        if mask.any():
            y = y.copy()
            y[mask] += 1e-9 * np.asarray(jump.eta)
            moved += int(mask.sum())
    if moved:
        logger.info(
            "field %s: perturbed %d initial point(s) off the jump set by 1e-9",
            fld.id,
            moved,
        )
    return y


# ---------------------------------------------------------------------------
# exact flows
# ---------------------------------------------------------------------------


def _exact_b_position(x1, t):
    """First coordinate of field B's flow; x2 is untouched.

    tan(pi x(t)) = tan(pi x(0)) exp(2 pi t) separately on (0, 1/2) and
    (1/2, 1); 0 and 1/2 are fixed points.
    """
    u = np.mod(np.asarray(x1, dtype=float), 1.0)
    upper = u > 0.5
    val = np.arctan(np.tan(np.pi * u) * np.exp(TWO_PI * t)) / np.pi
    out = np.where(upper, 1.0 + val, val)
    # exact fixed points stay put (tan is finite garbage at 0.5 + eps scale)
    fixed = np.minimum(np.abs(u), np.minimum(np.abs(u - 0.5), np.abs(u - 1.0))) < 1e-14
    return np.where(fixed, u, out)


def _exact_b_logj(x1, x1_t, t):
    """log J for field B: J = sin(2 pi x(t)) / sin(2 pi x(0)) off the fixed
    points, exp(+-2 pi t) at them."""
    u = np.mod(np.asarray(x1, dtype=float), 1.0)
    s0 = np.sin(TWO_PI * u)
    st = np.sin(TWO_PI * np.asarray(x1_t, dtype=float))
    near_fixed = np.abs(s0) < 1e-9
    safe_s0 = np.where(near_fixed, 1.0, s0)
    safe_st = np.where(near_fixed, 1.0, st)
    ratio = np.log(np.abs(safe_st / safe_s0))
    at_fixed = TWO_PI * t * np.sign(np.cos(TWO_PI * u))
    return np.where(near_fixed, at_fixed, ratio)


def _exact_displacement(fld: PiecewiseField, pts, t: float):
    """Unwrapped displacement X(t, x) - x and log J for the exact flows."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m = pts.shape[0]
    disp = np.zeros_like(pts)
    logj = np.zeros(m)
    if fld.id == "B":
        x1t = _exact_b_position(pts[:, 0], t)
        # unwrapped: trajectories never leave their half-interval
        disp[:, 0] = x1t - np.mod(pts[:, 0], 1.0)
        logj = _exact_b_logj(pts[:, 0], x1t, t)
    elif fld.id in ("C", "D"):
        piece = fld.piece_index(wrap_coords(pts))
        direction = np.where(
            piece[:, None] == 0,
            np.asarray(fld.pieces[0].b(np.zeros((1, 2))))[0],
            np.asarray(fld.pieces[1].b(np.zeros((1, 2))))[0],
        )
        disp = t * direction
    elif fld.id == "E":
        if t < 0:
            bad = wrap_coords(pts[0])
            raise NonTransversalCrossingError(
                "E", bad, "backward trajectories converge into the jump set"
            )
        s = np.mod(pts[:, 0], 1.0)
        left = s < 0.5
        hit = np.where(left, 0.5 - s, s - 0.5)
        move = np.minimum(t, hit)
        disp[:, 0] = np.where(left, move, -move)
    elif fld.id == "A":
        raise ValueError("field A has no closed-form flow; use rk4_event")
    else:
        raise ValueError(f"no exact flow for field {fld.id!r}")
    return disp, logj


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def integrate_flow(fld: PiecewiseField, cfg: FlowSolverConfig, initial_points,
                   times) -> FlowEnsemble:
    """Integrate the flow of ``fld`` from each initial point.

    ``times`` must contain 0; positive and negative output times are
    reached by forward and backward chains from 0.
    """
    pts0 = np.atleast_2d(np.asarray(initial_points, dtype=float))
    pts0 = wrap_coords(pts0)
    times = np.asarray(sorted(float(t) for t in times))
    if not np.any(np.isclose(times, 0.0, atol=1e-15)):
        raise ValueError("times must include 0")
    m = pts0.shape[0]
    t_count = times.size
    positions = np.empty((t_count, m, 2))
    displacements = np.empty((t_count, m, 2))
    log_jacobian = np.empty((t_count, m))

    if cfg.method == "explicit_exact":
        for k, t in enumerate(times):
            disp, logj = _exact_displacement(fld, pts0, float(t))
            displacements[k] = disp
            positions[k] = wrap_coords(pts0 + disp)
            log_jacobian[k] = logj
        return FlowEnsemble(fld.id, cfg, pts0, times, positions, displacements,
                            log_jacobian)

    # rk4_event: forward chain over nonnegative times, backward over negatives
    y0 = _nudge_initial_points(fld, pts0.copy())
    order = np.argsort(times)
    zero_idx = int(np.nonzero(np.isclose(times, 0.0, atol=1e-15))[0][0])

    def run_chain(target_indices):
        y = y0.copy()
        logj = np.zeros(m)
        crossings = np.zeros(m, dtype=int)
        t_now = 0.0
        for k in target_indices:
            t_target = float(times[k])
            y, logj = _advance(fld, cfg, y, logj, t_target - t_now, crossings)
            t_now = t_target
            displacements[k] = y - y0
            positions[k] = wrap_coords(y)
            log_jacobian[k] = logj

    displacements[zero_idx] = 0.0
    positions[zero_idx] = wrap_coords(y0)
    log_jacobian[zero_idx] = 0.0
    run_chain([k for k in order if times[k] > 0])
    run_chain([k for k in reversed(order) if times[k] < 0])
    return FlowEnsemble(fld.id, cfg, pts0, times, positions, displacements,
                        log_jacobian)


def _advance(fld, cfg, y, logj, duration, crossings):
    """Advance (y, logj) by signed ``duration`` with event handling.

    Two event triggers per surface: a sign change of the level value
    (ordinary crossing), and a "capture" where the step makes almost no
    normal progress while sitting within reach of the surface; the
    latter is how an attractive (sliding) interface manifests under RK4,
    whose stages straddle the surface and cancel.  Both triggers locate
    the first touch by bisection and then check transversality of the
    one-sided traces.
    """
    if abs(duration) < 1e-15:
        return y, logj
    sgn = 1.0 if duration > 0 else -1.0
    remaining = abs(duration)
    while remaining > 1e-13:
        h = sgn * min(cfg.step, remaining)
        if not fld.has_jumps:
            y, logj = _rk4_step(fld, y, logj, h)
            remaining -= abs(h)
            continue
        lev0 = _levels(fld, y)
        y_try, logj_try = _rk4_step(fld, y, logj, h)
        lev1 = _levels(fld, y_try)
        # sign change through zero, or an exact/near landing on the
        # surface (a step boundary can coincide with the crossing time)
        crossed = (
            ((np.sign(lev0) * np.sign(lev1) < 0) | (np.abs(lev1) <= cfg.event_tol))
            & (np.abs(lev1 - lev0) < 0.25)
            & (np.abs(lev0) > cfg.event_tol)
        )
        bvals = fld.eval_many(wrap_coords(y))
        stalled = np.zeros_like(crossed)
        for j, jmp in enumerate(fld.jumps):
            n = np.asarray(jmp.normal_int, dtype=float)
            v_n = (bvals @ n) * np.sign(h)  # normal speed in time direction
            toward = (-np.sign(lev0[j])) * v_n > 1e-14
            within_reach = np.abs(lev0[j]) <= 2.0 * abs(h) * np.abs(v_n)
            no_progress = np.abs(lev1[j] - lev0[j]) < 0.5 * abs(h) * np.abs(v_n)
            stalled[j] = (~crossed[j]) & toward & within_reach & no_progress
        events = crossed | stalled
        hit = events.any(axis=0)
        if not hit.any():
            y, logj = y_try, logj_try
            remaining -= abs(h)
            continue
        consumed = _resolve_crossings(fld, cfg, y, logj, h, hit, events, crossings)
        remaining -= consumed
    return y, logj


def _resolve_crossings(fld, cfg, y, logj, h, hit, crossed, crossings):
    """Advance crossing points to just past the interface; others take the
    full step.  Mutates y, logj, crossings in place; returns the time
    consumed (the earliest crossing's fraction of h, so non-crossing
    points are re-stepped consistently next round).

    For simplicity every point is advanced only up to the earliest
    crossing time among the hit points, which keeps the whole ensemble
    time-synchronized; the non-crossing points simply take a shorter RK4
    step (same order of accuracy).
    """
    idx = np.nonzero(hit)[0]
    surf = [int(np.nonzero(crossed[:, i])[0][0]) for i in idx]
    pieces = fld.piece_index(wrap_coords(y[idx]))
    # scalar first-touch bisection per event point (they are few), on the
    # arriving piece's smooth extension
    fractions = np.empty(idx.size)
    for j, i in enumerate(idx):
        jmp = fld.jumps[surf[j]]
        n = np.asarray(jmp.normal_int, dtype=float)
        fa = float(wrap_half(y[i] @ n - jmp.offset))
        a, b = 0.0, 1.0
        for _ in range(80):
            mfrac = 0.5 * (a + b)
            y_f, _ = _rk4_step(
                fld, y[i : i + 1], logj[i : i + 1], h * mfrac, piece=int(pieces[j])
            )
            fm = float(wrap_half(y_f[0] @ n - jmp.offset))
            reached = abs(fm) <= cfg.event_tol or np.sign(fm) != np.sign(fa)
            if reached:
                b = mfrac
                if abs(fm) <= cfg.event_tol:
                    break
            else:
                a = mfrac
        fractions[j] = b
    t_frac = float(fractions.min())
    # advance every point by the same fraction of h
    y_new, logj_new = _rk4_step(fld, y, logj, h * t_frac)
    arrived = np.zeros(y.shape[0], dtype=bool)
    arrived[idx[fractions <= t_frac + 1e-12]] = True
    for i in np.nonzero(arrived)[0]:
        j = int(np.nonzero(idx == i)[0][0])
        jmp = fld.jumps[surf[j]]
        n = np.asarray(jmp.normal_int, dtype=float)
        nn = float(n @ n)
        # redo the arriving point's step on its own piece
        y_i, logj_i = _rk4_step(
            fld, y[i : i + 1], logj[i : i + 1], h * t_frac, piece=int(pieces[j])
        )
        y_new[i], logj_new[i] = y_i[0], logj_i[0]
        lv = float(wrap_half(y_new[i] @ n - jmp.offset))
        direction = np.sign(float(wrap_half(y[i] @ n - jmp.offset)) * -1.0)
        # traces on both sides of the surface at the crossing point
        x_surf = y_new[i] - lv * n / nn
        probe = 2.0 * cfg.event_tol
        b_from = fld.eval_many(wrap_coords(x_surf - direction * probe * n / nn))[0]
        b_to = fld.eval_many(wrap_coords(x_surf + direction * probe * n / nn))[0]
        sgn_t = np.sign(h)  # time direction
        v_from = sgn_t * float(b_from @ n) * direction
        v_to = sgn_t * float(b_to @ n) * direction
        if v_from <= 1e-10 or v_to <= 1e-10:
            raise NonTransversalCrossingError(
                fld.id,
                wrap_coords(x_surf),
                "one-sided normal speeds "
                f"{float(b_from @ n):.3g} / {float(b_to @ n):.3g}",
            )
        crossings[i] += 1
        if crossings[i] > cfg.max_crossings:
            raise RunawayTrajectoryError(
                f"field {fld.id}: trajectory exceeded {cfg.max_crossings} crossings"
            )
        # place just on the receiving side
        y_new[i] = x_surf + direction * probe * n / nn
    y[:] = y_new
    logj[:] = logj_new
    return abs(h) * t_frac


def density_from_flow(ensemble: FlowEnsemble, t: float) -> DensityField:
    """mu(t, .), the density of X(-t, .)_# lambda, sampled on the
    ensemble's initial grid.

    Uses the identity mu(t, y) = det DX(t, .)(y) = exp(log J(t, y)) along
    the forward trajectory started at y, so the samples live exactly at
    the uniform initial points and the mass invariant
    int mu d lambda = 1 is a contentful check (mean of the values).
    """
    k = ensemble.time_index(t)
    return DensityField(
        time=t,
        points=ensemble.initial_points.copy(),
        values=np.exp(ensemble.log_jacobian[k]),
    )


def pushforward_histogram(ensemble: FlowEnsemble, t: float, bins: int) -> DensityField:
    """Bin-count density estimate of (flow to time t)_# lambda.

    Empty bins report density 0, which is exactly the near-
    incompressibility violation flag for field E.
    """
    k = ensemble.time_index(t)
    pos = ensemble.positions[k]
    ij = np.clip((pos * bins).astype(int), 0, bins - 1)
    flat = ij[:, 0] * bins + ij[:, 1]
    counts = np.bincount(flat, minlength=bins * bins).astype(float)
    density = counts * (bins * bins) / pos.shape[0]
    axis = (np.arange(bins) + 0.5) / bins
    centers = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    return DensityField(time=t, points=centers, values=density, bins=bins)


def check_group_property(ensemble: FlowEnsemble, s: float, t: float,
                         max_points: int = 512) -> float:
    """sup over sample points of d(X(t, X(s, x)), X(s+t, x)) on the torus."""
    fld = get_field(ensemble.field_id)
    pts = ensemble.initial_points
    if pts.shape[0] > max_points:
        stride = pts.shape[0] // max_points
        pts = pts[::stride]
    e_s = integrate_flow(fld, ensemble.config, pts, [0.0, s])
    mid = e_s.positions[e_s.time_index(s)]
    e_t = integrate_flow(fld, ensemble.config, mid, [0.0, t])
    two_step = e_t.positions[e_t.time_index(t)]
    e_st = integrate_flow(fld, ensemble.config, pts, [0.0, s + t])
    direct = e_st.positions[e_st.time_index(s + t)]
    return float(np.max(torus_distance(two_step, direct)))


def check_ode_residual(ensemble: FlowEnsemble, x, t: float) -> float:
    """Torus distance between X(t, x) and x + int_0^t b(X(s, x)) ds.

    The trajectory is re-integrated densely (every solver step stored)
    and the integral evaluated by the trapezoid rule in s.
    """
    fld = get_field(ensemble.field_id)
    cfg = ensemble.config
    x = np.asarray(x, dtype=float).reshape(1, 2)
    n_steps = max(1, int(np.ceil(abs(t) / cfg.step)))
    s_grid = np.linspace(0.0, t, n_steps + 1)
    ens = integrate_flow(fld, cfg, x, list(s_grid))
    pos = np.stack([ens.positions[ens.time_index(si), 0] for si in s_grid])
    bvals = fld.eval_many(pos)
    integral = np.trapezoid(bvals, x=s_grid, axis=0)
    end = ens.positions[ens.time_index(t), 0]
    return float(torus_distance(end, wrap_coords(x[0] + integral)))


def export_csv(ensemble: FlowEnsemble, path) -> None:
    """Write snapshots as CSV: t, x0_1..x0_N, x_1..x_N, logJ."""
    dim = ensemble.initial_points.shape[1]
    cols = (
        ["t"]
        + [f"x0_{i+1}" for i in range(dim)]
        + [f"x_{i+1}" for i in range(dim)]
        + ["logJ"]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for k, t in enumerate(ensemble.times):
            for i in range(ensemble.initial_points.shape[0]):
                row = (
                    [t]
                    + list(ensemble.initial_points[i])
                    + list(ensemble.positions[k, i])
                    + [ensemble.log_jacobian[k, i]]
                )
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def collision_branch_maps(points, t: float):
    """Two backward-branch composites for field E at time t < 1/2.

    Forward, the sticky flow collapses the band |x1 - 1/2| <= t onto the
    interface; a backward branch from the collision point is a genuine
    solution of the reversed dynamics into either strip, and the collided
    state retains no memory of its origin side.  Composing forward
    collapse with each branch gives two maps that agree off the band and
    differ by the torus distance min(2t, 1-2t) on it, so their L^1
    separation is 2t * min(2t, 1-2t): the constructed witness that
    field E admits no unambiguous backward flow.

    Returns (z_left, z_right), both wrapped (M, 2) arrays.
    """
    if not 0.0 < t < 0.5:
        raise ValueError("branch construction needs 0 < t < 1/2")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.mod(pts[:, 0], 1.0)
    collided = np.abs(s - 0.5) <= t
    z_left = pts.copy()
    z_right = pts.copy()
    z_left[collided, 0] = 0.5 - t
    z_right[collided, 0] = 0.5 + t
    return wrap_coords(z_left), wrap_coords(z_right)


# ---------------------------------------------------------------------------
# flow maps (arbitrary-point evaluation for the functionals)
# ---------------------------------------------------------------------------


class ExactFlowMap:
    """Closed-form flow map; supports fields B, C, D and E (forward).

    ``begin_batch`` caches the time-independent part of the closed forms
    (the tangent of the initial coordinate for B, the piece selection for
    C/D) so the quadrature engines can sweep many times over one point
    set cheaply.
    """

    def __init__(self, fld: PiecewiseField):
        if fld.id == "A":
            raise ValueError("field A has no closed-form flow map")
        self.field = fld
        self._batch = None

    def begin_batch(self, pts) -> None:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        fld = self.field
        if fld.id == "B":
            u = np.mod(pts[:, 0], 1.0)
            fixed = (
                np.minimum(np.abs(u), np.minimum(np.abs(u - 0.5), np.abs(u - 1.0)))
                < 1e-14
            )
            self._batch = (pts, ("B", u, np.tan(np.pi * u), u > 0.5, fixed))
        elif fld.id in ("C", "D"):
            piece = fld.piece_index(wrap_coords(pts))
            direction = np.where(
                piece[:, None] == 0,
                np.asarray(fld.pieces[0].b(np.zeros((1, 2))))[0],
                np.asarray(fld.pieces[1].b(np.zeros((1, 2))))[0],
            )
            self._batch = (pts, ("S", direction))
        else:
            self._batch = None

    def end_batch(self) -> None:
        self._batch = None
        self._b_x1t = None

    def _batched(self, pts):
        if self._batch is None:
            return None
        cached_pts, data = self._batch
        if cached_pts.shape != np.shape(pts) or cached_pts is not pts:
            return None
        return data

    def _b_position_batched(self, t, data):
        _, u, tan_u, upper, fixed = data
        key = round(float(t), 14)
        cached = getattr(self, "_b_x1t", None)
        if cached is not None and cached[0] == key:
            return cached[1]
        val = np.arctan(tan_u * np.exp(TWO_PI * t)) / np.pi
        x1t = np.where(upper, 1.0 + val, val)
        x1t = np.where(fixed, u, x1t)
        self._b_x1t = (key, x1t)
        return x1t

    def displacement(self, t: float, pts) -> np.ndarray:
        data = self._batched(pts)
        if data is None:
            disp, _ = _exact_displacement(self.field, pts, t)
            return disp
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        disp = np.zeros_like(pts)
        if data[0] == "B":
            disp[:, 0] = self._b_position_batched(t, data) - data[1]
        else:
            disp = t * data[1]
        return disp

    def position(self, t: float, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return wrap_coords(pts + self.displacement(t, pts))

    def log_jacobian(self, t: float, pts) -> np.ndarray:
        data = self._batched(pts)
        if data is not None and data[0] == "B":
            return _exact_b_logj(data[1], self._b_position_batched(t, data), t)
        _, logj = _exact_displacement(self.field, pts, t)
        return logj

    def density(self, t: float, pts) -> np.ndarray:
        """mu(t, .) = exp(log J(t, .)) at the query points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        data = self._batched(pts)
        if data is not None and data[0] == "S":
            return np.ones(pts.shape[0])
        return np.exp(self.log_jacobian(t, pts))

    def interpolation_error(self, t: float):
        return 0.0, 0.0


class InterpolatedFlowMap:
    """Flow map for smooth fields: RK4 on a periodic grid plus periodic
    cubic-spline interpolation of the displacement and log-Jacobian.

    The displacement X(t, x) - x is smooth and periodic in x, so it
    interpolates cleanly across the torus seam; positions themselves
    would not.  ``interpolation_error`` integrates a pseudo-random
    sample of query points directly and reports the worst deviation,
    which the functionals fold into their reported error bounds.
    """

    def __init__(self, fld: PiecewiseField, cfg: FlowSolverConfig | None = None,
                 grid_n: int = 192):
        if fld.has_jumps:
            raise ValueError(
                "interpolated flow maps require a smooth field; "
                f"field {fld.id} has jump surfaces"
            )
        self.field = fld
        self.config = cfg or FlowSolverConfig()
        self.grid_n = grid_n
        axis = np.arange(grid_n) / grid_n
        self._grid = np.stack(
            np.meshgrid(axis, axis, indexing="ij"), axis=-1
        ).reshape(-1, 2)
        self._coeffs: dict = {}

    def prepare(self, times) -> None:
        """Integrate the grid ensemble through all requested times at once."""
        todo = sorted({round(float(t), 12) for t in times} - set(self._coeffs))
        if not todo:
            return
        ens = integrate_flow(self.field, self.config, self._grid, todo + [0.0])
        n = self.grid_n
        for t in todo:
            k = ens.time_index(t)
            disp = ens.displacements[k].reshape(n, n, 2)
            logj = ens.log_jacobian[k].reshape(n, n)
            self._coeffs[t] = tuple(
                ndimage.spline_filter(a, order=3, mode="grid-wrap")
                for a in (disp[:, :, 0], disp[:, :, 1], logj)
            )

    def _lookup(self, t: float):
        key = round(float(t), 12)
        if key not in self._coeffs:
            self.prepare([key])
        return self._coeffs[key]

    def _interp(self, coeff, pts):
        coords = (np.mod(pts, 1.0) * self.grid_n).T
        return ndimage.map_coordinates(
            coeff, coords, order=3, mode="grid-wrap", prefilter=False
        )

    def displacement(self, t: float, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c0, c1, _ = self._lookup(t)
        return np.stack([self._interp(c0, pts), self._interp(c1, pts)], axis=-1)

    def position(self, t: float, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return wrap_coords(pts + self.displacement(t, pts))

    def log_jacobian(self, t: float, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        _, _, cj = self._lookup(t)
        return self._interp(cj, pts)

    def density(self, t: float, pts) -> np.ndarray:
        return np.exp(self.log_jacobian(t, pts))

    def interpolation_error(self, t: float, n_sample: int = 128, seed: int = 7):
        """(max position error, max log J error) against direct integration.

        Deterministic (seeded sample) and memoized per time.
        """
        key = (round(float(t), 12), n_sample, seed)
        cache = getattr(self, "_err_cache", None)
        if cache is None:
            cache = self._err_cache = {}
        if key in cache:
            return cache[key]
        rng = np.random.default_rng(seed)
        pts = rng.random((n_sample, 2))
        ens = integrate_flow(self.field, self.config, pts, [0.0, t])
        k = ens.time_index(t)
        pos_err = np.max(
            np.linalg.norm(
                self.displacement(t, pts) - ens.displacements[k], axis=-1
            )
        )
        logj_err = np.max(np.abs(self.log_jacobian(t, pts) - ens.log_jacobian[k]))
        cache[key] = (float(pos_err), float(logj_err))
        return cache[key]


class DirectFlowMap:
    """Flow map that integrates the query points on demand with rk4_event.

    No interpolation: every call runs the solver from t = 0 on exactly
    the requested points, so the only error is the solver's.  Intended
    for x-grid-sized query sets (the L^1 discrepancy and Gronwall
    machinery); the pair-grid functionals use the interpolated map
    instead.  The last few (time, points) results are memoized.
    """

    def __init__(self, fld: PiecewiseField, cfg: FlowSolverConfig | None = None):
        self.field = fld
        self.config = cfg or FlowSolverConfig()
        self._cache: dict = {}

    def _solve(self, t: float, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        key = (round(float(t), 12), id(pts), pts.shape[0])
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ens = integrate_flow(self.field, self.config, pts, [0.0, t])
        k = ens.time_index(t)
        out = (ens.displacements[k], ens.log_jacobian[k])
        if len(self._cache) > 12:
            self._cache.clear()
        self._cache[key] = out
        return out

    def displacement(self, t: float, pts) -> np.ndarray:
        return self._solve(t, pts)[0]

    def position(self, t: float, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return wrap_coords(pts + self.displacement(t, pts))

    def log_jacobian(self, t: float, pts) -> np.ndarray:
        return self._solve(t, pts)[1]

    def density(self, t: float, pts) -> np.ndarray:
        return np.exp(self.log_jacobian(t, pts))

    def interpolation_error(self, t: float):
        return 0.0, 0.0


def make_flow_map(fld: PiecewiseField, method: str = "auto",
                  cfg: FlowSolverConfig | None = None, grid_n: int = 192):
    """Build a flow map for the field.

    Strip fields always use the exact map (their flows are exact and
    interpolation across jumps would be wrong).  Smooth fields use the
    closed form when one exists (B) unless ``method='rk4_event'`` forces
    the interpolated numerical map; field A is always numerical.
    """
    if fld.has_jumps:
        return ExactFlowMap(fld)
    if method == "explicit_exact" or (method == "auto" and fld.id == "B"):
        if fld.id == "A":
            raise ValueError("field A has no closed-form flow map")
        return ExactFlowMap(fld)
    return InterpolatedFlowMap(fld, cfg, grid_n)
