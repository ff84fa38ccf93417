"""Exact block-matrix functional calculus for covariant Schroedinger operators.

The operator H acts on sections f in C^{n * rank} and is self-adjoint for the
weighted inner product <f, g>_m = sum_x (f(x), g(x)) m(x).  All spectral work
is done on the similar matrix S = D^{1/2} H D^{-1/2} (D = diag(m) (x) I),
which is Hermitian in the standard inner product.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .bundle import (
    BundleData,
    min_spec_potential,
    scalar_bundle,
    trivial_bundle,
    validate_bundle,
)
from .errors import (
    EmptySubset,
    NegativeTime,
    NonPositiveTime,
    SingularSystem,
    SpectralConditionViolated,
    UnsupportedQ,
    ValidationFailed,
)
from .graph import VertexSubset, WeightedGraph

HERMITIAN_TOL = 1e-10


@dataclass(eq=False)
class OperatorMatrix:
    """Dense block matrix of H on the vertex set ``support``.

    ``support`` lists parent-graph vertex indices (all of them for the full
    operator, a subset for Dirichlet restrictions).  Sections handed to the
    operator are ``(len(support), rank)`` arrays in that order.
    """

    graph: WeightedGraph
    rank: int
    support: tuple[int, ...]
    H: np.ndarray
    _spec: tuple | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def measure(self) -> np.ndarray:
        return self.graph.measure[list(self.support)]

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def dim(self) -> int:
        return self.size * self.rank

    def _dhalf(self) -> np.ndarray:
        return np.repeat(np.sqrt(self.measure), self.rank)

    @property
    def S(self) -> np.ndarray:
        d = self._dhalf()
        return d[:, None] * self.H / d[None, :]

    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors of S."""
        if self._spec is None:
            with self._lock:
                if self._spec is None:
                    S = self.S
                    defect = np.linalg.norm(S - S.conj().T, 2) if S.size else 0.0
                    if defect > HERMITIAN_TOL * max(1.0, np.linalg.norm(S, 2)):
                        raise ValidationFailed(f"symmetrised operator not Hermitian (defect {defect:.3g})")
                    lam, W = np.linalg.eigh(0.5 * (S + S.conj().T))
                    self._spec = (lam, W)
        return self._spec

    def min_eigenvalue(self) -> float:
        return float(self.spectrum()[0][0])

    def block(self, x, y) -> np.ndarray:
        nu = self.rank
        i, j = self.local(x), self.local(y)
        return self.H[i * nu : (i + 1) * nu, j * nu : (j + 1) * nu]

    def local(self, x) -> int:
        """Position of a vertex (id or parent index) inside ``support``."""
        i = self.graph.idx(x)
        try:
            return self.support.index(i)
        except ValueError:
            raise EmptySubset(f"vertex {self.graph.vertices[i]!r} not in operator support") from None

    def apply(self, f) -> np.ndarray:
        f = _as_section(f, self.size, self.rank)
        return (self.H @ f.reshape(-1)).reshape(self.size, self.rank)

    def semigroup_matrix(self, t: float) -> np.ndarray:
        """e^{-tH} as an (n*rank)^2 matrix acting on flattened sections."""
        if t < 0:
            raise NegativeTime(f"t = {t} < 0")
        lam, W = self.spectrum()
        d = self._dhalf()
        E = (W * np.exp(-t * lam)) @ W.conj().T
        return E / d[:, None] * d[None, :]


def _as_section(f, n, nu) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    if f.ndim == 1 and nu == 1:
        f = f[:, None]
    if f.shape != (n, nu):
        raise ValueError(f"section has shape {f.shape}, expected {(n, nu)}")
    return f


def _blocks(g: WeightedGraph, bundle: BundleData, support: list[int]) -> np.ndarray:
    nu = bundle.rank
    pos = {i: k for k, i in enumerate(support)}
    H = np.zeros((len(support) * nu, len(support) * nu), dtype=complex)
    degm = g.degm()
    eye = np.eye(nu)
    for k, i in enumerate(support):
        H[k * nu : (k + 1) * nu, k * nu : (k + 1) * nu] = degm[i] * eye + bundle.potential[i]
        for j, b in g.neighbours[i]:
            if j in pos:
                l = pos[j]
                # H[x][y] = -(b(x,y)/m(x)) Phi_{y,x}
                H[k * nu : (k + 1) * nu, l * nu : (l + 1) * nu] = -(b / g.measure[i]) * bundle.phi(j, i)
    return H


def _check(g, bundle, tol):
    if bundle.graph is not g and bundle.graph != g:
        raise ValidationFailed("bundle is defined over a different graph")
    report = validate_bundle(g, bundle, tol)
    if not report.passed:
        raise ValidationFailed("; ".join(report.failures()))


def assemble(g: WeightedGraph, bundle: BundleData, tol: float = 1e-10) -> OperatorMatrix:
    """Block matrix of H_{Phi,V} on the whole graph."""
    _check(g, bundle, tol)
    support = list(range(g.n))
    return OperatorMatrix(g, bundle.rank, tuple(support), _blocks(g, bundle, support))


def dirichlet_operator(g: WeightedGraph, bundle: BundleData, U: VertexSubset, tol: float = 1e-10) -> OperatorMatrix:
    """Restriction H^{(U)} killed on exit from U.

    The diagonal keeps the full degree deg_m(x) (summed over all of X); only
    off-diagonal blocks with both endpoints in U survive.
    """
    if U is None or len(U) == 0:
        raise EmptySubset("Dirichlet subset must be nonempty")
    _check(g, bundle, tol)
    support = U.sorted_indices()
    return OperatorMatrix(g, bundle.rank, tuple(support), _blocks(g, bundle, support))


def free_scalar_operator(g: WeightedGraph) -> OperatorMatrix:
    """The free scalar operator H = H_{0,0}."""
    return assemble(g, trivial_bundle(g, 1))


def scalar_operator(g: WeightedGraph, w) -> OperatorMatrix:
    """Scalar H_{0,w} with real potential w."""
    return assemble(g, scalar_bundle(g, w))


def apply_semigroup(op: OperatorMatrix, t: float, f) -> np.ndarray:
    """e^{-tH} f."""
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    f = _as_section(f, op.size, op.rank)
    if t == 0:
        return f.copy()
    lam, W = op.spectrum()
    d = op._dhalf()
    g = W.conj().T @ (d * f.reshape(-1))
    out = (W @ (np.exp(-t * lam) * g)) / d
    return out.reshape(op.size, op.rank)


@dataclass
class KernelMatrix:
    """Integral kernel blocks K[x, y] in Hom(F_y, F_x) with respect to m."""

    K: np.ndarray  # (n, n, rank, rank)
    measure: np.ndarray

    def __call__(self, x: int, y: int) -> np.ndarray:
        return self.K[x, y]

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=complex)
        if f.ndim == 1:
            f = f[:, None]
        return np.einsum("xyij,yj,y->xi", self.K, f, self.measure)

    def diagonal_traces(self) -> np.ndarray:
        return np.einsum("xxii->x", self.K).real


def heat_kernel(op: OperatorMatrix, t: float) -> KernelMatrix:
    """Kernel of e^{-tH}: K(x, y) = e^{-tH}[x][y] / m(y)."""
    E = op.semigroup_matrix(t)
    n, nu = op.size, op.rank
    K = E.reshape(n, nu, n, nu).transpose(0, 2, 1, 3) / op.measure[None, :, None, None]
    return KernelMatrix(K, op.measure)


def resolvent_power(op: OperatorMatrix, lam: complex, k: int, f) -> np.ndarray:
    """(H + lam)^{-k} f by k successive linear solves.

    Requires Re(lam) > -min spec(H) so that H + lam is invertible with the
    Laplace-transform representation available.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    lmin = op.min_eigenvalue()
    if not np.real(lam) > -lmin:
        raise SpectralConditionViolated(f"Re(lambda) = {np.real(lam)} does not exceed -min spec(H) = {-lmin}")
    f = _as_section(f, op.size, op.rank)
    d = op._dhalf()
    A = op.S + lam * np.eye(op.dim)
    u = d * f.reshape(-1)
    try:
        for _ in range(k):
            u = np.linalg.solve(A, u)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return (u / d).reshape(op.size, op.rank)


def trace_semigroup(op: OperatorMatrix, t: float) -> float:
    """tr e^{-tH} = sum_x tr_x(K(x, x)) m(x), via the spectrum of S."""
    if not t > 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    lam, _ = op.spectrum()
    return float(np.sum(np.exp(-t * lam)))


def free_heat_diagonal(g: WeightedGraph, t: float) -> np.ndarray:
    """p(t, x, x) of the free scalar operator."""
    return heat_kernel(free_scalar_operator(g), t).K[:, :, 0, 0].diagonal().real.copy()


def golden_thompson_rhs(g: WeightedGraph, bundle: BundleData, t: float) -> tuple[float, float]:
    """Right-hand sides of the trace bounds.

    ``tight``  = sum_x p(t,x,x) tr_x(e^{-tV(x)}) m(x)
    ``rank_scaled`` = rank * sum_x p(t,x,x) e^{-t w(x)} m(x),  w = min spec V
    """
    if not t > 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    p = free_heat_diagonal(g, t)
    lam, _ = bundle.potential_eigh()
    tight = float(np.sum(p * np.exp(-t * lam).sum(axis=1) * g.measure))
    w = lam[:, 0]
    scaled = float(bundle.rank * np.sum(p * np.exp(-t * w) * g.measure))
    return tight, scaled


def inner_m(f1, f2, measure) -> complex:
    """<f1, f2>_m, linear in the first argument."""
    f1 = np.asarray(f1, dtype=complex)
    f2 = np.asarray(f2, dtype=complex)
    f1 = f1[:, None] if f1.ndim == 1 else f1
    f2 = f2[:, None] if f2.ndim == 1 else f2
    if f1.shape != f2.shape:
        raise ValueError(f"section shapes differ: {f1.shape} vs {f2.shape}")
    return complex(np.sum(measure * np.sum(f1 * f2.conj(), axis=1)))


def quadratic_form(g: WeightedGraph, bundle: BundleData, f1, f2) -> complex:
    """Q_{Phi,V}(f1, f2) summed literally over ordered neighbour pairs."""
    nu = bundle.rank
    f1 = _as_section(f1, g.n, nu)
    f2 = _as_section(f2, g.n, nu)
    total = 0.0 + 0.0j
    for i in range(g.n):
        for j, b in g.neighbours[i]:
            P = bundle.phi(j, i)
            d1 = f1[i] - P @ f1[j]
            d2 = f2[i] - P @ f2[j]
            total += 0.5 * b * np.vdot(d2, d1)
    for i in range(g.n):
        total += np.vdot(f2[i], bundle.potential[i] @ f1[i]) * g.measure[i]
    return complex(total)


# ---------------------------------------------------------------------------
# l^2 -> l^q operator norms


def _norm_2_to_inf(T: np.ndarray, measure: np.ndarray, nu: int) -> float:
    n = measure.size
    A = T / np.repeat(np.sqrt(measure), nu)[None, :]
    return max(np.linalg.norm(A[i * nu : (i + 1) * nu], 2) for i in range(n))


def _mixed_norm(z: np.ndarray, n: int, nu: int, q: float) -> float:
    fib = np.linalg.norm(z.reshape(n, nu), axis=1)
    return float(np.sum(fib**q) ** (1 / q))


def _norm_2_to_q_power(T, measure, nu, q, restarts=8, iters=500, seed=0) -> float:
    """Lower estimate of ||T||_{m;2,q} by the nonlinear power method."""
    n = measure.size
    d = np.repeat(np.sqrt(measure), nu)
    wq = np.repeat(measure ** (1.0 / q), nu)
    A = wq[:, None] * T / d[None, :]
    rng = np.random.default_rng(seed)
    _, _, Vh = np.linalg.svd(A)
    starts = [Vh[0].conj()] + [
        rng.standard_normal(A.shape[1]) + 1j * rng.standard_normal(A.shape[1]) for _ in range(restarts)
    ]
    best = 0.0
    for v in starts:
        v = v / np.linalg.norm(v)
        val = 0.0
        for _ in range(iters):
            z = A @ v
            fib = np.linalg.norm(z.reshape(n, nu), axis=1)
            psi = (np.repeat(fib ** (q - 2), nu) * z) if q != 2 else z
            u = A.conj().T @ psi
            nu_ = np.linalg.norm(u)
            if nu_ == 0:
                break
            v = u / nu_
            new = _mixed_norm(A @ v, n, nu, q)
            if abs(new - val) <= 1e-14 * max(1.0, new):
                val = new
                break
            val = new
        best = max(best, val)
    return best


def operator_norm_2_q(op: OperatorMatrix, T: np.ndarray, q: float) -> tuple[float, float]:
    """(estimate, rigorous upper bound) for ||T||_{m;2,q}.

    Exact for q = 2 and q = inf (estimate == bound).  For 2 < q < inf the
    estimate comes from the nonlinear power method and the bound from
    Riesz-Thorin interpolation between the two exact endpoints.
    """
    m = op.measure
    nu = op.rank
    d = np.repeat(np.sqrt(m), nu)
    n2 = float(np.linalg.norm(d[:, None] * T / d[None, :], 2))
    if q == 2:
        return n2, n2
    ninf = float(_norm_2_to_inf(T, m, nu))
    if q == np.inf:
        return ninf, ninf
    theta = 2.0 / q
    upper = n2**theta * ninf ** (1 - theta)
    est = _norm_2_to_q_power(T, m, nu, q)
    return min(est, upper), upper


@dataclass
class LpReport:
    q: float
    t: float
    norm: float
    norm_upper: float
    heat_sup: float  # C(t) = max p(t, x, y)
    delta: float
    kato_constant: float
    bound: float
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.norm <= self.bound * (1 + self.tolerance) + self.tolerance


def heat_sup(free_op: OperatorMatrix, t: float) -> float:
    """C(t) = max_{x,y} p(t, x, y) of the free scalar kernel."""
    return float(heat_kernel(free_op, t).K[:, :, 0, 0].real.max())


def lp_norm_check(
    op: OperatorMatrix,
    scalar_free_op: OperatorMatrix,
    t: float,
    q: float,
    delta: float,
    kato_constant: float,
) -> LpReport:
    """Compare ||e^{-tH}||_{m;2,q} with delta e^{t C} C(t)^{1/2 - 1/q}."""
    if not t > 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    if not (q == np.inf or 2 <= q < np.inf):
        raise UnsupportedQ(f"q = {q} outside [2, inf]")
    T = op.semigroup_matrix(t)
    est, upper = operator_norm_2_q(op, T, q)
    Ct = heat_sup(scalar_free_op, t)
    expo = 0.5 - (0.0 if q == np.inf else 1.0 / q)
    bound = delta * np.exp(t * kato_constant) * Ct**expo
    return LpReport(q, t, est, upper, Ct, delta, kato_constant, float(bound))


def comparison_potential(bundle: BundleData) -> np.ndarray:
    return min_spec_potential(bundle)


def restrict(f, U: VertexSubset) -> np.ndarray:
    f = np.asarray(f)
    return f[U.sorted_indices()]


def extend(f_local, U: VertexSubset) -> np.ndarray:
    """Zero extension of a section on U to the whole graph."""
    f_local = np.asarray(f_local)
    out = np.zeros((U.graph.n,) + f_local.shape[1:], dtype=f_local.dtype)
    out[U.sorted_indices()] = f_local
    return out
