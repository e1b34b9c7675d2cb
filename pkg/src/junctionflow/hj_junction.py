"""Junction Hamilton-Jacobi value function via straight / dwell path families.

The value u^A(x, t) is the infimum of the path cost over two families that
exhaust the minimizers:

  F1  straight legs (y, 0) -> (x, t) staying on one closed side of 0;
  F2  a leg (y, 0) -> (0, a), a stay at the junction on [a, b] paying
      -integral(A, a, b), then a leg (0, b) -> (x, t).

Writing I(t) for the running integral of A, the dwell cost splits as
Phi(a) + Psi(b) with Phi(a) = G(a) + I(a) and Psi(b) = W(b) - I(b), where
G(a) is the cheapest straight approach to (0, a) and W(b) the exit-leg cost.
The search over 0 <= a <= b <= t therefore reduces to a prefix-minimum scan
over a candidate grid (uniform plus the control breakpoints and the per-x
onset of the free exit), followed by local refinement from three seeds. All
inner y-minimizations are exact per linear piece of the datum, so every
candidate is a true path cost and the reported value is always an upper
bound of the infimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .controls import Control
from .flux_models import Hamiltonian, InitialData, JunctionModel, ModelError

MOST_AT_ZERO = "MostAtZero"
LEAST_AT_ZERO = "LeastAtZero"

TIE_SCALE = 1e-8
COARSE_N = 65
REFINE_ROUNDS = 10
REFINE_SHRINK = 0.2
REFINE_POINTS = 7
PREFIX_SEEDS = 3  # best prefix-paired candidate per tercile of [0, t]
DIAG_SEEDS = 2  # best degenerate a = b candidate per half of [0, t]
SEED_COUNT = PREFIX_SEEDS + DIAG_SEEDS
CONTROL_RANGE_TOL = 1e-9


class SolverError(ValueError):
    """Evaluation outside the contract (bad times, meshes, controls)."""


@dataclass(frozen=True)
class Mesh:
    """Rectangular space-time grid with strictly increasing axes."""

    xs: np.ndarray
    ts: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ts = np.asarray(self.ts, dtype=float)
        if xs.ndim != 1 or ts.ndim != 1 or len(xs) < 1 or len(ts) < 1:
            raise SolverError("mesh axes must be non-empty 1-d arrays")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ts) <= 0):
            raise SolverError("mesh axes must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ts", ts)

    @classmethod
    def regular(cls, xmin, xmax, nx, tmax, nt, tmin=0.0) -> "Mesh":
        return cls(np.linspace(xmin, xmax, nx), np.linspace(tmin, tmax, nt))


@dataclass(frozen=True)
class TrajectoryDescriptor:
    """Minimizing path in reduced form: straight leg or dwell triple (y, a, b)."""

    x: float
    t: float
    kind: str  # "straight" | "dwell"
    y: float
    cost: float
    a: Optional[float] = None
    b: Optional[float] = None

    @property
    def dwells(self) -> bool:
        return self.kind == "dwell"

    def dwells_at(self, s: float) -> bool:
        return self.dwells and self.a <= s <= self.b

    def recompute_cost(self, model: JunctionModel, u0: InitialData, A: Control) -> float:
        """Re-assemble the path cost from its parts."""
        if self.kind == "straight":
            H = model.side(self.y if self.x == 0 else self.x)
            return float(H.leg_cost(self.x - self.y, self.t) + u0.eval(self.y))
        first = 0.0 if self.a == 0 else float(
            model.side(self.y).leg_cost(-self.y, self.a) + u0.eval(self.y)
        )
        stay = -(A.cumulative(self.b) - A.cumulative(self.a))
        last = 0.0 if self.b == self.t else float(
            model.side(self.x).leg_cost(self.x, self.t - self.b)
        )
        return first + stay + last


@dataclass(frozen=True)
class ValueField:
    """u^A sampled on a mesh, u[i, j] = u(xs[i], ts[j])."""

    xs: np.ndarray
    ts: np.ndarray
    u: np.ndarray
    control_id: str = ""
    model_id: str = ""

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,t,u\n")
            for j, t in enumerate(self.ts):
                for i, x in enumerate(self.xs):
                    fh.write(f"{x:.17g},{t:.17g},{self.u[i, j]:.17g}\n")


class Evaluator:
    """Reusable u^A evaluator for one (model, datum, control) triple."""

    def __init__(self, model: JunctionModel, u0: InitialData, A: Control):
        rl, rr = u0.capacities
        if abs(rl - model.left.R) > 1e-12 or abs(rr - model.right.R) > 1e-12:
            raise ModelError("initial datum capacities do not match the model")
        if not A.restricted_values_ok(model.A0, tol=CONTROL_RANGE_TOL):
            raise SolverError(
                f"control values must lie in [{model.A0}, 0]; got {A.values}"
            )
        self.model = model
        self.u0 = u0
        self.A = A
        lo, hi, q, yref, uref = u0.pieces()
        self._pieces = {}
        for side, (s_lo, s_hi) in ((-1, (-np.inf, 0.0)), (1, (0.0, np.inf))):
            keep = np.maximum(lo, s_lo) <= np.minimum(hi, s_hi)
            H = model.left if side < 0 else model.right
            self._pieces[side] = dict(
                lo=np.maximum(lo, s_lo)[keep],
                hi=np.minimum(hi, s_hi)[keep],
                q=q[keep],
                yref=yref[keep],
                uref=uref[keep],
                alpha=np.asarray(H.slope_for_cost_slope(q[keep]), dtype=float),
            )

    # ---- straight family ---------------------------------------------------

    def _side_min(self, side: int, xe, dt, need_y=False):
        """Exact min over y in the side's pieces of leg(xe - y, dt) + u0(y)."""
        P = self._pieces[side]
        H = self.model.left if side < 0 else self.model.right
        xe_b, dt_b = np.broadcast_arrays(
            np.asarray(xe, dtype=float), np.asarray(dt, dtype=float)
        )
        shape = xe_b.shape
        xe_f = xe_b.reshape(-1)
        dt_f = dt_b.reshape(-1)
        y = xe_f[None, :] - dt_f[None, :] * P["alpha"][:, None]
        yc = np.clip(y, P["lo"][:, None], P["hi"][:, None])
        vals = (
            H.leg_cost(xe_f[None, :] - yc, dt_f[None, :])
            + P["uref"][:, None]
            + P["q"][:, None] * (yc - P["yref"][:, None])
        )
        best = np.min(vals, axis=0)
        if not need_y:
            return best.reshape(shape), None
        ybest = yc[np.argmin(vals, axis=0), np.arange(vals.shape[1])]
        return best.reshape(shape), ybest.reshape(shape)

    def straight_value(self, x, t, need_y=False):
        """F1: cheapest one-sided straight leg into (x, t)."""
        x = np.asarray(x, dtype=float)
        vl, yl = self._side_min(-1, x, t, need_y)
        vr, yr = self._side_min(1, x, t, need_y)
        x_b = np.broadcast_arrays(x, np.asarray(t, dtype=float))[0]
        vl = np.where(x_b <= 0, vl, np.inf)
        vr = np.where(x_b >= 0, vr, np.inf)
        out = np.minimum(vl, vr)
        if not need_y:
            return out, None
        return out, np.where(vl <= vr, yl, yr)

    def approach_cost(self, a, need_y=False):
        """G(a): cheapest straight approach to the junction point (0, a)."""
        a = np.asarray(a, dtype=float)
        vl, yl = self._side_min(-1, np.zeros_like(a), a, need_y)
        vr, yr = self._side_min(1, np.zeros_like(a), a, need_y)
        out = np.minimum(vl, vr)
        if not need_y:
            return out, None
        return out, np.where(vl <= vr, yl, yr)

    def exit_cost(self, x, t, b):
        """W(b): exit leg (0, b) -> (x, t); for x = 0 only b = t is admissible."""
        x, t, b = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(t, dtype=float), np.asarray(b, dtype=float)
        )
        s = t - b
        wl = self.model.left.leg_cost(x, s)
        wr = self.model.right.leg_cost(x, s)
        w = np.where(x < 0, wl, wr)
        return np.where(x == 0, np.where(s == 0.0, 0.0, np.inf), w)

    # ---- dwell family --------------------------------------------------------

    def _phi_on(self, a):
        g, _ = self.approach_cost(a)
        return g + self.A.cumulative(a)

    def _psi_on(self, x, t, b):
        return self.exit_cost(x, t, b) - self.A.cumulative(b)

    def _base_grids(self, ts):
        """Per-row candidate grids on [0, t]: uniform + control breakpoints."""
        inner = np.asarray([s for s in self.A.times[1:-1]], dtype=float)
        nb = COARSE_N + len(inner)
        base = np.empty((len(ts), nb))
        for r, t in enumerate(ts):
            pts = np.linspace(0.0, t, COARSE_N)
            cut = inner[inner < t]
            grid = np.unique(np.concatenate([pts, cut])) if len(cut) else pts
            base[r, : len(grid)] = grid
            base[r, len(grid) :] = t  # pad with duplicates of t
        return base

    def dwell_batch(self, xs, ts, need_candidates=False):
        """min over 0 <= a <= b <= t of Phi(a) + Psi(b) for every (t, x) pair.

        Returns arrays shaped (Nr, Nx); all rows share the x axis.
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        nr, nx = len(ts), len(xs)
        base = self._base_grids(ts)  # (Nr, NB)
        nb = base.shape[1]
        phi = self._phi_on(base)
        M = np.minimum.accumulate(phi, axis=1)
        am = np.zeros((nr, nb), dtype=int)
        rows = np.arange(nr)
        for j in range(1, nb):  # prefix argmin, first index on ties
            prev = am[:, j - 1]
            better = phi[:, j] < phi[rows, prev]
            am[:, j] = np.where(better, j, prev)
        a_of = np.take_along_axis(base, am, axis=1)

        psi = self._psi_on(xs[None, :, None], ts[:, None, None], base[:, None, :])
        d = psi + M[:, None, :]

        # per-x extra candidate: onset of the flat exit leg
        onset = np.where(
            xs[None, :] > 0,
            ts[:, None] - xs[None, :] / self.model.right.dh0,
            np.where(xs[None, :] < 0, ts[:, None] - xs[None, :] / self.model.left.dhr, ts[:, None]),
        )
        b_e = np.clip(onset, 0.0, ts[:, None])
        idx_e = np.empty((nr, nx), dtype=int)
        for r in range(nr):
            idx_e[r] = np.clip(np.searchsorted(base[r], b_e[r], side="right") - 1, 0, nb - 1)
        d_e = self._psi_on(xs[None, :], ts[:, None], b_e) + np.take_along_axis(M, idx_e, axis=1)
        a_e = np.take_along_axis(a_of, idx_e, axis=1)

        # seeds: best prefix-paired candidate per tercile, plus the best
        # degenerate a = b candidate per half (kinked crossing paths live on
        # the diagonal, where the grid prefix-argmin can mispair a with b)
        d_diag = psi + phi[:, None, :]
        seeds_a = np.empty((nr, nx, SEED_COUNT))
        seeds_b = np.empty((nr, nx, SEED_COUNT))
        seeds_v = np.full((nr, nx, SEED_COUNT), np.inf)
        frac = base / np.maximum(ts[:, None], 1e-300)
        base_b = np.broadcast_to(base[:, None, :], d.shape)
        for s in range(PREFIX_SEEDS):
            lo_f, hi_f = s / PREFIX_SEEDS, (s + 1) / PREFIX_SEEDS
            sel = (frac >= lo_f) & ((frac <= hi_f) | (s == PREFIX_SEEDS - 1))
            dd = np.where(sel[:, None, :], d, np.inf)
            j = np.argmin(dd, axis=2)
            seeds_v[:, :, s] = np.take_along_axis(dd, j[:, :, None], axis=2)[:, :, 0]
            seeds_b[:, :, s] = np.take_along_axis(base_b, j[:, :, None], axis=2)[:, :, 0]
            seeds_a[:, :, s] = np.take_along_axis(
                np.broadcast_to(a_of[:, None, :], d.shape), j[:, :, None], axis=2
            )[:, :, 0]
        for s in range(DIAG_SEEDS):
            lo_f, hi_f = s / DIAG_SEEDS, (s + 1) / DIAG_SEEDS
            sel = (frac >= lo_f) & ((frac <= hi_f) | (s == DIAG_SEEDS - 1))
            dd = np.where(sel[:, None, :], d_diag, np.inf)
            j = np.argmin(dd, axis=2)
            k = PREFIX_SEEDS + s
            seeds_v[:, :, k] = np.take_along_axis(dd, j[:, :, None], axis=2)[:, :, 0]
            seeds_b[:, :, k] = np.take_along_axis(base_b, j[:, :, None], axis=2)[:, :, 0]
            seeds_a[:, :, k] = seeds_b[:, :, k]
        e_slot = np.clip((b_e / np.maximum(ts[:, None], 1e-300)) * PREFIX_SEEDS,
                         0, PREFIX_SEEDS - 1).astype(int)
        for s in range(PREFIX_SEEDS):
            mask = (e_slot == s) & (d_e < seeds_v[:, :, s])
            seeds_v[:, :, s] = np.where(mask, d_e, seeds_v[:, :, s])
            seeds_b[:, :, s] = np.where(mask, b_e, seeds_b[:, :, s])
            seeds_a[:, :, s] = np.where(mask, a_e, seeds_a[:, :, s])
        bad = ~np.isfinite(seeds_v)
        seeds_v = np.where(bad, np.broadcast_to(d.min(axis=2)[:, :, None], seeds_v.shape), seeds_v)
        seeds_a = np.where(bad, 0.0, seeds_a)
        seeds_b = np.where(bad, 0.0, seeds_b)

        # joint local refinement around every seed
        offs = np.linspace(-1.0, 1.0, REFINE_POINTS)
        h = (ts / (COARSE_N - 1))[:, None, None, None]
        t_clip = ts[:, None, None, None]
        x_b = xs[None, :, None, None, None]
        t_b = ts[:, None, None, None, None]
        for _ in range(REFINE_ROUNDS):
            a_c = np.clip(seeds_a[..., None] + h * offs, 0.0, t_clip)
            b_c = np.clip(seeds_b[..., None] + h * offs, 0.0, t_clip)
            phi_c = self._phi_on(a_c)[..., :, None]
            psi_c = self._psi_on(x_b, t_b, b_c[..., None, :])
            tot = np.where(a_c[..., :, None] <= b_c[..., None, :], phi_c + psi_c, np.inf)
            flat = tot.reshape(nr, nx, SEED_COUNT, -1)
            j = np.argmin(flat, axis=3)
            vnew = np.take_along_axis(flat, j[..., None], axis=3)[..., 0]
            anew = np.take_along_axis(a_c, (j // REFINE_POINTS)[..., None], axis=3)[..., 0]
            bnew = np.take_along_axis(b_c, (j % REFINE_POINTS)[..., None], axis=3)[..., 0]
            better = vnew < seeds_v
            seeds_v = np.where(better, vnew, seeds_v)
            seeds_a = np.where(better, anew, seeds_a)
            seeds_b = np.where(better, bnew, seeds_b)
            h = h * REFINE_SHRINK
        pick = np.argmin(seeds_v, axis=2)
        take = lambda arr: np.take_along_axis(arr, pick[..., None], axis=2)[..., 0]
        out = dict(value=take(seeds_v), a=take(seeds_a), b=take(seeds_b))
        if need_candidates:
            out.update(base=base, phi=phi, prefix_min=M, prefix_arg=a_of, d=d, d_extra=d_e, b_extra=b_e)
        return out

    # ---- values ----------------------------------------------------------------

    def value_rows(self, xs, ts):
        """u^A on the product grid xs x ts, shape (Nx, Nr); ts > 0."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        f1, _ = self.straight_value(xs[None, :], ts[:, None])
        dw = self.dwell_batch(xs, ts)
        return np.minimum(f1, dw["value"]).T

    def value(self, x: float, t: float):
        """u^A(x, t) along with an achieving descriptor."""
        self._check_time(t)
        xs = np.array([float(x)])
        f1, y1 = self.straight_value(xs, t, need_y=True)
        dw = self.dwell_batch(xs, np.array([t]))
        vd = float(dw["value"][0, 0])
        if vd < float(f1[0]):
            a, b = float(dw["a"][0, 0]), float(dw["b"][0, 0])
            a, y = self._dwell_start(a)
            best = TrajectoryDescriptor(float(x), float(t), "dwell", y, vd, a, b)
        else:
            best = TrajectoryDescriptor(float(x), float(t), "straight", float(y1[0]), float(f1[0]))
        return min(float(f1[0]), vd), best

    def _dwell_start(self, a: float):
        """First-leg start point; degenerate hovers at the junction snap to a = 0."""
        if a <= 0.0:
            return 0.0, 0.0
        g, y = self.approach_cost(np.array([a]), need_y=True)
        y = float(y[0])
        if abs(y) <= 1e-12:
            return 0.0, 0.0
        return a, y

    def _check_time(self, t: float):
        if t <= 0.0:
            raise SolverError(f"t must be positive, got {t}")
        if t > self.A.horizon + 1e-12:
            raise SolverError(f"t = {t} beyond the control horizon {self.A.horizon}")

    # ---- trajectory selection ----------------------------------------------------

    def trajectory_row(self, xs, t: float, select: str):
        """Per-x descriptors under the documented tie rule.

        Among candidates within the tie band the dwell end b is maximized
        first; MostAtZero then minimizes the dwell start a and prefers
        dwelling over a tied straight line, LeastAtZero maximizes a and
        prefers a tied straight line.
        """
        if select not in (MOST_AT_ZERO, LEAST_AT_ZERO):
            raise SolverError(f"unknown selector {select!r}")
        self._check_time(t)
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        nx = len(xs)
        f1, y1 = self.straight_value(xs, t, need_y=True)
        dw = self.dwell_batch(xs, np.array([t]), need_candidates=True)
        vd = dw["value"][0]
        v = np.minimum(f1, vd)
        tie = TIE_SCALE * (1.0 + np.abs(v))
        thresh = v + tie
        dwell_in = vd <= thresh
        straight_in = f1 <= thresh
        use_dwell = dwell_in if select == MOST_AT_ZERO else ~straight_in

        base = dw["base"][0]
        phi = dw["phi"][0]
        M = dw["prefix_min"][0]
        d = dw["d"][0]  # (Nx, NB)

        feas = d <= thresh[:, None]
        b_grid = np.where(feas, base[None, :], -np.inf).max(axis=1)
        b_ex = np.where(dw["d_extra"][0] <= thresh, dw["b_extra"][0], -np.inf)
        b_sel = np.maximum(np.maximum(b_grid, b_ex), np.where(dwell_in, dw["b"][0], -np.inf))
        b_sel = np.clip(b_sel, 0.0, t)

        # expand b upward to the edge of the tie plateau
        lo = b_sel.copy()
        hi = np.full(nx, t)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            idx = np.clip(np.searchsorted(base, mid, side="right") - 1, 0, len(base) - 1)
            ok = self._psi_on(xs, t, mid) + M[idx] <= thresh
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        b_sel = np.maximum(b_sel, lo)

        psi_sel = self._psi_on(xs, t, b_sel)
        budget = thresh - psi_sel
        a_sel = self._select_a_row(base, phi, b_sel, budget, dw["a"][0], select)
        cost = self._phi_on(a_sel) + psi_sel

        out = []
        for i in range(nx):
            if use_dwell[i]:
                a, y = self._dwell_start(float(a_sel[i]))
                out.append(
                    TrajectoryDescriptor(
                        float(xs[i]), t, "dwell", y, float(cost[i]), a, float(b_sel[i])
                    )
                )
            else:
                out.append(
                    TrajectoryDescriptor(float(xs[i]), t, "straight", float(y1[i]), float(f1[i]))
                )
        return out, v

    def _select_a_row(self, base, phi, b_sel, budget, a_fallback, select):
        """Vectorized pick of the dwell start on the candidate grid + edge polish."""
        nb = len(base)
        nx = len(b_sel)
        feas = (base[None, :] <= b_sel[:, None]) & (phi[None, :] <= budget[:, None])
        any_feas = feas.any(axis=1)
        if select == MOST_AT_ZERO:
            j = np.argmax(feas, axis=1)  # first feasible index
            lo = np.where(j > 0, base[np.maximum(j - 1, 0)], 0.0)
            hi = base[j]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ok = self._phi_on(mid) <= budget
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, mid)
            a = hi
        else:
            j = nb - 1 - np.argmax(feas[:, ::-1], axis=1)  # last feasible index
            lo = base[j]
            nxt = base[np.minimum(j + 1, nb - 1)]
            hi = np.minimum(np.where(j + 1 < nb, nxt, b_sel), b_sel)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ok = self._phi_on(mid) <= budget
                lo = np.where(ok, mid, lo)
                hi = np.where(ok, hi, mid)
            a = lo
        return np.where(any_feas, a, np.minimum(a_fallback, b_sel))


# ---- module-level operations -------------------------------------------------


def value(model, u0, A, x, t):
    """u^A(x, t) and a best descriptor (straight or dwell)."""
    ev = Evaluator(model, u0, A)
    return ev.value(x, t)


def _grid_block(ev: Evaluator, xs, ts_block):
    out = np.empty((len(xs), len(ts_block)))
    pos = ts_block > 0
    if np.any(pos):
        out[:, pos] = ev.value_rows(xs, ts_block[pos])
    if np.any(~pos):
        out[:, ~pos] = np.asarray(ev.u0.eval(xs), dtype=float)[:, None]
    return out


def value_grid(model, u0, A, mesh: Mesh, workers: int = 1) -> ValueField:
    """u^A on the mesh; deterministic for any worker count."""
    ev = Evaluator(model, u0, A)
    ts = mesh.ts
    if len(ts) and ts[-1] > A.horizon + 1e-12:
        raise SolverError("mesh extends beyond the control horizon")
    if len(ts) and ts[0] < 0:
        raise SolverError("mesh times must be nonnegative")
    blocks = _split_blocks(len(ts), workers)
    if len(blocks) <= 1:
        u = _grid_block(ev, mesh.xs, ts)
    else:
        from ._util import parallel_starmap

        parts = parallel_starmap(
            _grid_block, [(ev, mesh.xs, ts[lo:hi]) for lo, hi in blocks], workers
        )
        u = np.concatenate(parts, axis=1)
    return ValueField(mesh.xs, ts, u, control_id=A.ident(), model_id=model.ident())


def _split_blocks(n, workers):
    if workers <= 1 or n < 2 * workers:
        return [(0, n)]
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def optimal_trajectory(model, u0, A, x, t, select: str) -> TrajectoryDescriptor:
    """Best descriptor under the MostAtZero / LeastAtZero tie rule."""
    ev = Evaluator(model, u0, A)
    descs, _ = ev.trajectory_row(np.array([float(x)]), float(t), select)
    return descs[0]


def trajectory_field(model, u0, A, mesh: Mesh, select: str, workers: int = 1):
    """Descriptor data for every mesh node: (is_dwell, a, b, value) arrays."""
    ev = Evaluator(model, u0, A)
    args = [(ev, mesh.xs, float(t), select) for t in mesh.ts]
    if workers <= 1 or len(args) < 4:
        rows = [_traj_row(*a) for a in args]
    else:
        from ._util import parallel_starmap

        rows = parallel_starmap(_traj_row, args, workers)
    is_dwell = np.stack([r[0] for r in rows], axis=1)
    a = np.stack([r[1] for r in rows], axis=1)
    b = np.stack([r[2] for r in rows], axis=1)
    val = np.stack([r[3] for r in rows], axis=1)
    return dict(is_dwell=is_dwell, a=a, b=b, value=val)


def _traj_row(ev, xs, t, select):
    if t == 0.0:
        z = np.zeros(len(xs))
        return z.astype(bool), z + np.nan, z + np.nan, np.asarray(ev.u0.eval(xs), dtype=float)
    descs, v = ev.trajectory_row(xs, t, select)
    is_dwell = np.array([d.dwells for d in descs])
    a = np.array([d.a if d.dwells else np.nan for d in descs])
    b = np.array([d.b if d.dwells else np.nan for d in descs])
    return is_dwell, a, b, v


def _dp_side_step(H: Hamiltonian, nodes, V, targets, dt):
    """One backward step restricted to one side: min over piecewise-linear V.

    The step value is min_y [V~(y) + leg(target - y, dt)] with V~ the linear
    interpolant of V between the side's nodes; the per-cell minimum is exact
    because the objective is convex in y on each cell.
    """
    lo, hi = nodes[:-1], nodes[1:]
    vlo = V[:-1]
    m = np.diff(V) / np.diff(nodes)
    alpha = np.asarray(H.slope_for_cost_slope(np.clip(m, -H.R, 0.0)), dtype=float)
    y = targets[None, :] - dt * alpha[:, None]
    yc = np.clip(y, lo[:, None], hi[:, None])
    cand = (
        vlo[:, None]
        + m[:, None] * (yc - lo[:, None])
        + H.leg_cost(targets[None, :] - yc, dt)
    )
    return np.min(cand, axis=0)


def brute_force_field(model, u0, A, t, lattice=(200, 200), domain=None, pad=1.05):
    """DP oracle on the whole lattice: (nodes, times, V), V[i, k] ~ u(nodes[i], times[k]).

    Paths are piecewise linear with vertices at lattice times, positions
    interpolated between lattice abscissae; they change sign only through
    the zero node, where parking costs -integral(A). First-order accurate.
    """
    nx, nt = lattice
    if nx < 8 or nt < 8:
        raise SolverError("lattice must be at least 8x8")
    if t <= 0 or t > A.horizon + 1e-12:
        raise SolverError(f"t = {t} outside (0, {A.horizon}]")
    Hl, Hr = model.left, model.right
    reach_l = max(Hl.dh0, Hr.dh0)
    reach_r = max(-Hl.dhr, -Hr.dhr)
    if domain is None:
        domain = (-pad * reach_l * t, pad * reach_r * t)
    nodes = np.unique(np.concatenate([np.linspace(domain[0], domain[1], nx), [0.0]]))
    iz = int(np.searchsorted(nodes, 0.0))
    ts = np.linspace(0.0, t, nt + 1)
    dt = ts[1] - ts[0]
    V = np.asarray(u0.eval(nodes), dtype=float)
    out = np.empty((len(nodes), nt + 1))
    out[:, 0] = V
    left, right = nodes[: iz + 1], nodes[iz:]
    for k in range(nt):
        park = -(A.cumulative(ts[k + 1]) - A.cumulative(ts[k]))
        vl = _dp_side_step(Hl, left, V[: iz + 1], left, dt)
        vr = _dp_side_step(Hr, right, V[iz:], right, dt)
        new = np.empty_like(V)
        new[:iz] = vl[:-1]
        new[iz + 1 :] = vr[1:]
        new[iz] = min(vl[-1], vr[0], V[iz] + park)
        V = new
        out[:, k + 1] = V
    return nodes, ts, out


def brute_force_value(model, u0, A, x, t, lattice=(200, 200)) -> float:
    """Independent lattice-path oracle for a single point; see brute_force_field."""
    Hl, Hr = model.left, model.right
    reach_l = max(Hl.dh0, Hr.dh0)
    reach_r = max(-Hl.dhr, -Hr.dhr)
    domain = (min(0.0, x) - 1.05 * reach_l * t, max(0.0, x) + 1.05 * reach_r * t)
    nodes, _, V = brute_force_field(model, u0, A, t, lattice, domain=domain)
    return float(np.interp(float(x), nodes, V[:, -1]))


def junction_trace(field: ValueField):
    """(t, u(0-, t), u(0+, t)) by one-sided extrapolation from two columns."""
    xs = field.xs
    zero = np.where(np.abs(xs) <= 1e-12)[0]
    if not len(zero):
        raise SolverError("mesh has no x = 0 column")
    i0 = int(zero[0])
    if i0 < 2 or i0 > len(xs) - 3:
        raise SolverError("need two mesh columns on each side of x = 0")

    def extrap(i_near, i_far):
        xn, xf = xs[i_near], xs[i_far]
        return field.u[i_near, :] + (field.u[i_near, :] - field.u[i_far, :]) * (0.0 - xn) / (xn - xf)

    left = extrap(i0 - 1, i0 - 2)
    right = extrap(i0 + 1, i0 + 2)
    return np.column_stack([field.ts, left, right])


def junction_values(model, u0, A, ts):
    """u^A(0, t) for each requested time (direct evaluation, no extrapolation)."""
    ev = Evaluator(model, u0, A)
    ts = np.asarray(ts, dtype=float)
    out = np.zeros(len(ts))
    pos = ts > 0
    if np.any(pos):
        out[pos] = ev.value_rows(np.array([0.0]), ts[pos])[0]
    return out


def gradient_audit(field: ValueField, model: JunctionModel, tol_factor: float = 3.0):
    """Check the discrete gradient bounds u_x in [-R, 0], u_t in [0, f_max].

    Difference quotients of the exact value satisfy the bounds with no
    slack; the tolerance only absorbs solver error. Quotient pairs that
    straddle x = 0 use the weaker of the two side bounds.
    """
    xs, ts, u = field.xs, field.ts, field.u
    lip = max(model.left.R, model.right.R, model.left.f_max, model.right.f_max)
    report = dict(max_violation_x=0.0, max_violation_t=0.0, tol_x=0.0, tol_t=0.0)
    if len(xs) > 1:
        dx = np.diff(xs)[:, None]
        qx = np.diff(u, axis=0) / dx
        tol = tol_factor * float(np.max(np.diff(xs))) * lip
        r_of = np.where(
            xs[1:] <= 0,
            model.left.R,
            np.where(xs[:-1] >= 0, model.right.R, max(model.left.R, model.right.R)),
        )[:, None]
        viol = np.maximum(qx - tol, -(qx + r_of) - tol)
        report["max_violation_x"] = float(max(0.0, viol.max()))
        report["tol_x"] = tol
    if len(ts) > 1:
        dt = np.diff(ts)[None, :]
        qt = np.diff(u, axis=1) / dt
        tol = tol_factor * float(np.max(np.diff(ts))) * lip
        fmax = np.where(
            xs < 0,
            model.left.f_max,
            np.where(xs > 0, model.right.f_max, max(model.left.f_max, model.right.f_max)),
        )[:, None]
        viol = np.maximum(qt - fmax - tol, -qt - tol)
        report["max_violation_t"] = float(max(0.0, viol.max()))
        report["tol_t"] = tol
    report["ok"] = report["max_violation_x"] <= 0.0 and report["max_violation_t"] <= 0.0
    return report
