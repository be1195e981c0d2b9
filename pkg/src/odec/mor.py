"""POD-DEIM reduction of ODE blocks.

The reduced block evolves ``xr = V_k.T x`` through

    xr' = N f(A_m xr + b_m) + Z_r u,

where ``A_m`` holds the rows of ``A V_k`` at the DEIM interpolation points,
``b_m`` the matching bias entries, ``Z_r = V_k.T Z`` and
``N = V_k.T U_m (P.T U_m)^-1`` (pseudoinverse when oversampling). Only
``m + o`` activations are evaluated per right-hand-side call.

Interpolation points are 0-based array indices throughout the code and files.
"""

from dataclasses import dataclass, replace
import hashlib
import logging

import numpy as np

from . import matcore
from .errors import DegeneracyError, DimensionError, RankError
from .ode import OdeBlock, _add_input, _check_activation, activate
from .snapshots import encode_snapshots
from .zoo import Linear, ModelSpec, OdeLayer, RnnSpec

log = logging.getLogger(__name__)

#: tolerance for the build-time consistency check of ``N``
N_CHECK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DeimSelection:
    """Interpolation points chosen for the basis ``basis`` (n x m)."""

    points: np.ndarray
    basis: np.ndarray
    oversample: int = 0

    @property
    def m(self):
        return self.basis.shape[1]

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def P(self):
        """Selection matrix ``[e_p1, ..., e_p(m+o)]`` of shape n x (m+o)."""
        P = np.zeros((self.n, len(self.points)))
        P[self.points, np.arange(len(self.points))] = 1.0
        return P

    @property
    def PtU(self):
        return self.basis[self.points]

    def coefficient_map(self):
        """``(P.T U)^-1`` for plain DEIM, ``(P.T U)^+`` when oversampled."""
        if self.oversample == 0:
            return matcore.solve_linear(self.PtU, np.eye(self.m))
        ptu = self.PtU
        cond = matcore.condition_number(ptu)
        if not cond <= matcore.COND_LIMIT:
            raise DegeneracyError(f"oversampled P^T U is ill-conditioned ({cond:.3e})")
        return matcore.pseudo_inverse(ptu)

    def interpolator(self):
        """n x (m+o) matrix mapping sampled values ``f[points]`` to the approximation of ``f``."""
        return self.basis @ self.coefficient_map()

    def approximate(self, f):
        f = np.asarray(f, dtype=np.float64)
        return self.interpolator() @ f[self.points]


def deim_select(U):
    """Greedy DEIM interpolation points for the columns of ``U``.

    The first point is the largest-magnitude entry of ``u_1``; each further
    point is where the interpolation residual of the next basis vector,
    given the points so far, is largest. Ties go to the lowest index.

    Raises
    ------
    RankError
        ``U`` has linearly dependent columns.
    DegeneracyError
        ``P.T U`` became singular; ``iteration`` is the 1-based step.
    """
    U = matcore.as_matrix(U, "U")
    n, m = U.shape
    if m > n:
        raise RankError(f"cannot pick {m} points in dimension {n}")
    rank = matcore.numerical_rank(np.linalg.svd(U, compute_uv=False), U.shape)
    if rank < m:
        raise RankError(f"DEIM basis is rank-deficient: rank {rank} < {m} columns")
    points = [int(np.argmax(np.abs(U[:, 0])))]
    for l in range(1, m):
        try:
            c = matcore.solve_linear(U[points, :l], U[points, l])
        except DegeneracyError as exc:
            raise DegeneracyError(f"{exc} at DEIM iteration {l + 1}", iteration=l + 1) from None
        residual = np.abs(U[:, l] - U[:, :l] @ c)
        nxt = int(np.argmax(residual))
        if nxt in points:
            raise DegeneracyError(
                f"DEIM iteration {l + 1} re-selected index {nxt}: residual vanished",
                iteration=l + 1,
            )
        points.append(nxt)
    cond = matcore.condition_number(U[points])
    if not cond <= matcore.COND_LIMIT:
        raise DegeneracyError(f"final P^T U is ill-conditioned ({cond:.3e})", iteration=m)
    return DeimSelection(np.array(points, dtype=np.int64), U, 0)


def odeim_select(U, o, candidates=None):
    """DEIM points plus ``o`` oversampling points.

    The first ``m`` points come from :func:`deim_select`. Each extra point is
    the argmax, over indices not yet chosen, of a least-squares residual
    fitted on the current points with the pseudoinverse:

    * if ``candidates`` (n x c) is given, the residual of candidate column
      ``j mod c`` against the span of ``U`` (typically the next singular
      vectors of the nonlinearity snapshots);
    * otherwise the leave-one-out residual of ``u_(j mod m)`` against the
      remaining columns of ``U``.

    ``o=0`` returns exactly the :func:`deim_select` result.
    """
    base = deim_select(U)
    if o == 0:
        return base
    U = base.basis
    n, m = U.shape
    if o < 0 or m + o > n:
        raise RankError(f"m + o = {m + o} sampling points exceed dimension {n}")
    if candidates is not None:
        candidates = matcore.as_matrix(candidates, "candidates")
        if candidates.shape[0] != n:
            raise DimensionError("candidate vectors must have the basis length")
    points = list(base.points)
    for j in range(o):
        if candidates is not None:
            target, fit = candidates[:, j % candidates.shape[1]], U
        else:
            l = j % m
            target, fit = U[:, l], np.delete(U, l, axis=1)
        if fit.shape[1]:
            coef = matcore.pseudo_inverse(fit[points]) @ target[points]
            residual = np.abs(target - fit @ coef)
        else:
            residual = np.abs(target)
        residual[points] = -np.inf
        points.append(int(np.argmax(residual)))
    return DeimSelection(np.array(points, dtype=np.int64), U, o)


def deim_error_bound(U, selection, f):
    """``||(P.T U)^-1||_2 * ||(I - U U.T) f||_2``: bound on the DEIM error for orthonormal ``U``."""
    if selection.oversample:
        raise ValueError("the bound is stated for plain DEIM (o = 0)")
    U = np.asarray(U, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    inv_norm = np.linalg.norm(selection.coefficient_map(), 2)
    return float(inv_norm * np.linalg.norm(f - U @ (U.T @ f)))


@dataclass(frozen=True, eq=False)
class MorArtifacts:
    V: np.ndarray
    selection: DeimSelection
    N: np.ndarray

    @property
    def k(self):
        return self.V.shape[1]

    @property
    def m(self):
        return self.selection.m

    @property
    def o(self):
        return self.selection.oversample


def build_artifacts(V, selection):
    """Precompute ``N = V.T U (P.T U)^{-1 or +}`` and check ``N P.T U = V.T U``."""
    V = matcore.as_matrix(V, "V")
    if V.shape[0] != selection.n:
        raise DimensionError("POD and DEIM bases live in different dimensions")
    VtU = V.T @ selection.basis
    N = VtU @ selection.coefficient_map()
    err = np.linalg.norm(N @ selection.PtU - VtU)
    if err > N_CHECK_TOL * max(1.0, np.linalg.norm(VtU)):
        raise DegeneracyError(f"interpolation matrix check failed (residual {err:.3e})")
    return MorArtifacts(V, selection, N)


@dataclass(frozen=True, eq=False)
class ReducedOdeBlock:
    """``xr' = N f(A_m xr + b_m) + Z_r u`` in a k-dimensional subspace."""

    A_m: np.ndarray
    b_m: np.ndarray
    Z_r: np.ndarray
    N: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        A_m = np.asarray(self.A_m, dtype=np.float64)
        b_m = np.asarray(self.b_m, dtype=np.float64)
        N = np.asarray(self.N, dtype=np.float64)
        if b_m.shape != (A_m.shape[0],) or N.shape != (A_m.shape[1], A_m.shape[0]):
            raise DimensionError(
                f"inconsistent reduced block: A_m {A_m.shape}, b_m {b_m.shape}, N {N.shape}"
            )
        object.__setattr__(self, "A_m", A_m)
        object.__setattr__(self, "b_m", b_m)
        object.__setattr__(self, "N", N)
        if self.Z_r is not None:
            Z_r = np.asarray(self.Z_r, dtype=np.float64)
            if Z_r.shape[0] != A_m.shape[1]:
                raise DimensionError("Z_r rows must equal the reduced dimension")
            object.__setattr__(self, "Z_r", Z_r)
        _check_activation(self.activation)

    @property
    def dim(self):
        return self.A_m.shape[1]

    @property
    def samples(self):
        return self.A_m.shape[0]

    @property
    def input_dim(self):
        return 0 if self.Z_r is None else self.Z_r.shape[1]

    @property
    def n_params(self):
        return self.A_m.size + self.N.size

    def nonlinearity(self, x):
        return activate(self.activation, x @ self.A_m.T + self.b_m)

    def rhs(self, x, u=None):
        return _add_input(self.nonlinearity(x) @ self.N.T, self.Z_r, u)


def assemble_rom(block, V, selection):
    """Reduced block for a full :class:`OdeBlock`, basis ``V`` and DEIM selection."""
    if not isinstance(block, OdeBlock):
        raise TypeError("POD-DEIM reduction needs a full-order OdeBlock")
    art = build_artifacts(V, selection)
    p = selection.points
    A_m = block.A[p] @ art.V
    Z_r = None if block.Z is None else art.V.T @ block.Z
    return ReducedOdeBlock(A_m, block.b[p].copy(), Z_r, art.N, block.activation)


def reduced_rhs(rb, x, u=None):
    return rb.rhs(np.asarray(x, dtype=np.float64), u)


def _check_rank(name, M, dim, sv):
    bound = min(M.shape)
    rank = matcore.numerical_rank(sv, M.shape)
    if not 1 <= dim <= bound:
        raise RankError(f"{name} dimension {dim} outside [1, {bound}]")
    if dim > rank:
        raise RankError(f"{name} dimension {dim} exceeds numerical rank {rank} of the snapshots")


def snapshot_digest(snapshots):
    return hashlib.sha256(encode_snapshots(snapshots)).hexdigest()


def reduce_model(model, snapshots, k, m=None, o=0, fold=False):
    """Replace the model's ODE block by its POD-DEIM reduced counterpart.

    Projection layers ``V_k.T`` and ``V_k`` are inserted around the reduced
    block. With ``fold=True`` they are multiplied into adjacent linear layers
    where possible; a nonlinear neighbour (max-pool, ReLU) keeps the explicit
    projection. Works for :class:`ModelSpec` and :class:`RnnSpec`; the result
    carries a ``mor`` section describing the reduction.
    """
    m = k if m is None else m
    X, F = snapshots.X, snapshots.F
    n = X.shape[0]
    block = model.block
    if not isinstance(block, OdeBlock) or block.dim != n:
        raise DimensionError("snapshots do not match the model's ODE block")
    if m + o > n:
        raise RankError(f"m + o = {m + o} sampling points exceed dimension {n}")
    sx = matcore.svd(X)
    _check_rank("POD", X, k, sx.singular_values)
    sf = matcore.svd(F)
    _check_rank("DEIM", F, m, sf.singular_values)
    V = sx.left[:, :k]
    cand = sf.left[:, m : m + o] if o and sf.rank_bound >= m + o else None
    selection = odeim_select(sf.left[:, :m], o, candidates=cand)
    rb = assemble_rom(block, V, selection)
    section = {
        "method": "pod-deim",
        "k": int(k),
        "m": int(m),
        "o": int(o),
        "fold": bool(fold),
        "index_base": 0,
        "points": [int(p) for p in selection.points],
        "snapshots_sha256": snapshot_digest(snapshots),
    }
    log.info("POD-DEIM reduction n=%d -> k=%d, m+o=%d", n, k, m + o)
    if isinstance(model, RnnSpec):
        if fold:
            ro = model.readout
            readout = type(ro)(ro.W @ V, ro.b, ro.role)
            return replace(model, block=rb, readout=readout, lift=None,
                           sections={**model.sections, "mor": section})
        return replace(model, block=rb, lift=V, sections={**model.sections, "mor": section})
    return model.with_layers(_wrap_layers(model, rb, V, fold), mor=section)


def _wrap_layers(model, rb, V, fold):
    j = model.ode_index
    layers = list(model.layers)
    k = V.shape[1]
    ode = OdeLayer(rb, model.ode_layer.solver)
    before, after = layers[:j], layers[j + 1 :]
    prev = before[-1] if before else None
    if fold and prev is not None and prev.kind == "linear":
        before[-1] = Linear(V.T @ prev.W, V.T @ prev.b, prev.role)
    else:
        before.append(Linear(V.T.copy(), np.zeros(k), "project_in"))
    nxt = after[0]
    if fold and nxt.kind in ("linear", "readout"):
        after[0] = type(nxt)(nxt.W @ V, nxt.b, nxt.role)
    else:
        after.insert(0, Linear(V.copy(), np.zeros(V.shape[0]), "project_out"))
    return before + [ode] + after
