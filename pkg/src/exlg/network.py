"""Gossip topologies, mixing matrices, and assumption validation.

A mixing matrix is built from a graph Laplacian as W = I - delta * L, then
smoothed to W~ = h*I + (1-h)*W with h in (0, 1/2].  U = W~ - W = h(I - W)
carries the dual update in the generalized sampler; its PSD square root and
the spectral summary feed the theory module.

Assumption checks mirror the standing assumptions on the mixing pair: W
doubly stochastic with positive diagonal, spectra inside (-1, 1] and (0, 1],
(I + W)/2 >= W~ >= W in the PSD order, and null(U) = span(1) exactly when
the graph is connected and h > 0.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .linalg import SymMatrix, mix_apply, psd_sqrt, sym_eig

__all__ = [
    "TOPOLOGY_KINDS",
    "Topology",
    "MixingSet",
    "SpectralSummary",
    "CheckResult",
    "ValidationReport",
    "fully_connected",
    "ring",
    "star",
    "disconnected",
    "custom",
    "make_topology",
    "topology_from_file",
    "laplacian",
    "draw_delta",
    "build_w",
    "build_w_tilde",
    "build_mixing_set",
    "validate_assumptions",
]

TOPOLOGY_KINDS = (
    "fully-connected",
    "ring",
    "star",
    "disconnected",
    "custom",
)

# Null-space dimension counts eigenvalues of U below this times
# max(1, ||U||_2); connectivity uses the same floor on the Laplacian gap.
_NULL_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class Topology:
    """An undirected graph over n >= 2 agents.

    ``adjacency`` is a 0/1 symmetric matrix with zero diagonal; for the
    star, agent 0 is the hub.
    """

    kind: str
    n: int
    adjacency: np.ndarray

    def __post_init__(self):
        if self.kind not in TOPOLOGY_KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.n < 2:
            raise ValueError(f"need at least 2 agents, got {self.n}")
        a = np.asarray(self.adjacency)
        if a.shape != (self.n, self.n):
            raise ValueError(
                f"adjacency shape {a.shape} does not match n={self.n}"
            )
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero (no self loops)")
        a = a.astype(float)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)


def fully_connected(n: int) -> Topology:
    a = np.ones((n, n)) - np.eye(n)
    return Topology(kind="fully-connected", n=n, adjacency=a)


def ring(n: int) -> Topology:
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = 1.0
        a[(i + 1) % n, i] = 1.0
    return Topology(kind="ring", n=n, adjacency=a)


def star(n: int) -> Topology:
    """Star with agent 0 as the hub."""
    a = np.zeros((n, n))
    a[0, 1:] = 1.0
    a[1:, 0] = 1.0
    return Topology(kind="star", n=n, adjacency=a)


def disconnected(n: int) -> Topology:
    return Topology(kind="disconnected", n=n, adjacency=np.zeros((n, n)))


def custom(adjacency) -> Topology:
    a = np.asarray(adjacency, dtype=float)
    return Topology(kind="custom", n=a.shape[0], adjacency=a)


def make_topology(kind: str, n: int) -> Topology:
    builders = {
        "fully-connected": fully_connected,
        "ring": ring,
        "star": star,
        "disconnected": disconnected,
    }
    if kind not in builders:
        raise ValueError(
            f"topology kind {kind!r} needs an adjacency file "
            f"(or is unknown); built-ins: {sorted(builders)}"
        )
    return builders[kind](n)


def topology_from_file(path) -> Topology:
    """Read a custom adjacency: first line N, then N rows of N 0/1 entries."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"adjacency file {path} is empty")
    try:
        n = int(lines[0])
    except ValueError:
        raise ValueError(
            f"adjacency file {path}: first line must be the agent count, "
            f"got {lines[0]!r}"
        ) from None
    if len(lines) != n + 1:
        raise ValueError(
            f"adjacency file {path}: expected {n} rows after the count, "
            f"got {len(lines) - 1}"
        )
    rows = []
    for ln in lines[1:]:
        rows.append([float(tok) for tok in ln.replace(",", " ").split()])
    a = np.asarray(rows)
    if a.shape != (n, n):
        raise ValueError(
            f"adjacency file {path}: row lengths {a.shape} do not form "
            f"an {n}x{n} matrix"
        )
    return custom(a)


def laplacian(top: Topology) -> np.ndarray:
    a = top.adjacency
    return np.diag(a.sum(axis=1)) - a


def draw_delta(top: Topology, seed: int) -> float:
    """Default step into the Laplacian: uniform on (0.05, 0.95)/lambda_max."""
    lap = laplacian(top)
    lam_max = float(sym_eig(lap).values[-1])
    if lam_max <= 0.0:
        # Edgeless graph: L = 0 and W = I for any delta.
        return 1.0
    rng = np.random.default_rng(seed)
    return float(rng.uniform(0.05, 0.95)) / lam_max


def build_w(
    top: Topology, delta: float | None = None, seed: int | None = None
) -> np.ndarray:
    """W = I - delta * L.  ``delta`` must lie in (0, 2/lambda_max(L))."""
    lap = laplacian(top)
    lam_max = float(sym_eig(lap).values[-1])
    if delta is None:
        if seed is None:
            raise ValueError("build_w needs either an explicit delta or a seed")
        delta = draw_delta(top, seed)
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if lam_max > 0.0 and delta >= 2.0 / lam_max:
        raise ValueError(
            f"delta={delta} outside (0, {2.0 / lam_max:.6g}) for this graph "
            f"(lambda_max(L)={lam_max:.6g}); W would leave the unit ball"
        )
    return np.eye(top.n) - delta * lap


def build_w_tilde(
    w: np.ndarray, h: float, de_sgld_mode: bool = False
) -> np.ndarray:
    """W~ = h*I + (1-h)*W with h in (0, 1/2]; h = 0 only in de-sgld mode."""
    w = np.asarray(w, dtype=float)
    if de_sgld_mode:
        if h != 0.0:
            raise ValueError("de-sgld mode fixes h = 0")
        return w.copy()
    if not 0.0 < h <= 0.5:
        raise ValueError(f"h must lie in (0, 1/2], got {h}")
    return h * np.eye(w.shape[0]) + (1.0 - h) * w


@dataclasses.dataclass(frozen=True)
class SpectralSummary:
    """Edge eigenvalues and contraction factors of the mixing pair.

    ``lam2_*`` is the second-largest eigenvalue, ``lamN_*`` the smallest.
    gammabar_w = max(|lam2_w|, |lamN_w|), gammabar_wt likewise for W~, and
    gammabar_iw = max(1 - |lam2_w|, 1 - |lamN_w|) (the literal printed
    form, not the edge eigenvalues of I - W).
    """

    lam2_w: float
    lamN_w: float
    lam2_wt: float
    lamN_wt: float
    gammabar_w: float
    gammabar_iw: float
    gammabar_wt: float


@dataclasses.dataclass(frozen=True)
class MixingSet:
    """The full mixing bundle one sampler run needs."""

    topology: Topology
    w: np.ndarray
    w_tilde: np.ndarray
    u: np.ndarray
    u_sqrt: np.ndarray
    h: float
    delta: float
    spectral: SpectralSummary
    connected: bool

    @property
    def n(self) -> int:
        return self.topology.n


def _spectral_summary(w: np.ndarray, w_tilde: np.ndarray) -> SpectralSummary:
    wv = sym_eig(w).values
    wtv = sym_eig(w_tilde).values
    lam2_w, lamN_w = float(wv[-2]), float(wv[0])
    lam2_wt, lamN_wt = float(wtv[-2]), float(wtv[0])
    return SpectralSummary(
        lam2_w=lam2_w,
        lamN_w=lamN_w,
        lam2_wt=lam2_wt,
        lamN_wt=lamN_wt,
        gammabar_w=max(abs(lam2_w), abs(lamN_w)),
        gammabar_iw=max(1.0 - abs(lam2_w), 1.0 - abs(lamN_w)),
        gammabar_wt=max(abs(lam2_wt), abs(lamN_wt)),
    )


def build_mixing_set(
    top: Topology,
    h: float,
    delta: float | None = None,
    seed: int | None = None,
    de_sgld_mode: bool = False,
) -> MixingSet:
    if delta is None:
        delta = draw_delta(top, seed if seed is not None else 0)
    w = build_w(top, delta=delta)
    w_tilde = build_w_tilde(w, h, de_sgld_mode=de_sgld_mode)
    # U = W~ - W = h*(I - W); the scaled form avoids the cancellation the
    # literal difference suffers once h is small (entries h*O(1) computed
    # from O(1) inputs), which otherwise leaves U with eps-level negative
    # eigenvalues that break the PSD root.
    u = h * (np.eye(top.n) - w)
    u = (u + u.T) / 2.0
    u_sqrt = psd_sqrt(SymMatrix(u))
    lap_gap = float(sym_eig(laplacian(top)).values[1])
    return MixingSet(
        topology=top,
        w=w,
        w_tilde=w_tilde,
        u=u,
        u_sqrt=u_sqrt,
        h=h,
        delta=delta,
        spectral=_spectral_summary(w, w_tilde),
        connected=lap_gap > _NULL_TOL,
    )


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    magnitude: float
    detail: str


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> tuple:
        return tuple(c for c in self.checks if not c.passed)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            out.append(f"[{tag}] {c.name}: {c.detail}")
        return out


def validate_assumptions(ms: MixingSet) -> ValidationReport:
    """Check the standing mixing-matrix assumptions, one result per clause."""
    n = ms.n
    checks: list[CheckResult] = []

    def add(name, passed, magnitude, detail):
        checks.append(
            CheckResult(
                name=name,
                passed=bool(passed),
                magnitude=float(magnitude),
                detail=detail,
            )
        )

    row_dev = float(np.max(np.abs(ms.w.sum(axis=1) - 1.0)))
    col_dev = float(np.max(np.abs(ms.w.sum(axis=0) - 1.0)))
    dev = max(row_dev, col_dev)
    add(
        "doubly-stochastic",
        dev <= 1e-12,
        dev,
        f"max row/col sum deviation {dev:.3e} (tol 1e-12)",
    )

    diag_min = float(np.min(np.diag(ms.w)))
    add(
        "diagonal-positive",
        diag_min > 0.0,
        diag_min,
        f"min W_ii = {diag_min:.6g}",
    )

    off = ms.w[~np.eye(n, dtype=bool)]
    off_min = float(off.min()) if off.size else 0.0
    add(
        "offdiagonal-nonnegative",
        off_min >= -1e-12,
        off_min,
        f"min W_ij (i != j) = {off_min:.6g}",
    )

    wv = sym_eig(ms.w).values
    lo, hi = float(wv[0]), float(wv[-1])
    add(
        "w-spectrum",
        lo > -1.0 + 1e-12 and hi <= 1.0 + 1e-12,
        max(-1.0 - lo, hi - 1.0),
        f"eig(W) in [{lo:.6g}, {hi:.6g}], required within (-1, 1]",
    )

    wtv = sym_eig(ms.w_tilde).values
    wt_lo = float(wtv[0])
    add(
        "wt-positive-definite",
        wt_lo > 0.0,
        wt_lo,
        f"min eig(W~) = {wt_lo:.6g}, required > 0",
    )

    upper = (np.eye(n) + ms.w) / 2.0 - ms.w_tilde
    upper_min = float(sym_eig(upper).values[0])
    add(
        "psd-order-upper",
        upper_min >= -1e-10,
        upper_min,
        f"min eig((I+W)/2 - W~) = {upper_min:.3e} (>= -1e-10)",
    )

    lower_min = float(sym_eig(ms.u).values[0])
    add(
        "psd-order-lower",
        lower_min >= -1e-10,
        lower_min,
        f"min eig(W~ - W) = {lower_min:.3e} (>= -1e-10)",
    )

    uv = sym_eig(ms.u).values
    u_norm = max(1.0, float(np.max(np.abs(uv))))
    null_dim = int(np.sum(uv < _NULL_TOL * u_norm))
    add(
        "null-space",
        null_dim == 1,
        null_dim,
        f"dim null(U) = {null_dim}, required exactly 1 (span of ones)",
    )

    ones = np.ones(n) / np.sqrt(n)
    resid = float(np.max(np.abs(mix_apply(ms.u, ones[:, None]))))
    add(
        "ones-in-null",
        resid <= 1e-10,
        resid,
        f"max |U 1|/sqrt(n) = {resid:.3e} (<= 1e-10)",
    )

    return ValidationReport(checks=tuple(checks))
