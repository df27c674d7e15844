"""Simulation scenarios with structured covariances and their population truth.

Five scenarios are provided:

``S1``  Gaussian, diagonal covariance with two spikes, class 2 covariance
        twice that of class 1.
``S2``  Gaussian, block-diagonal with two intraclass-correlation blocks and
        a slowly decaying correlation block.
``S3``  The ``S2`` structure with larger blocks and standardized chi-square
        (1 d.f.) coordinates in the eigenbasis.
``S4``  A three-component Gaussian mixture, ``n1 = ceil(p^(2/5))``.
``S5``  The same mixture, ``n1 = ceil(p^(3/5))``.

In every scenario ``n2 = 2 n1`` and two leading eigen-directions per class are
taken as the spikes. Covariances are kept in structured form: the intraclass
block is rank one plus identity, and only correlation blocks are dense.

Random draws come from counter-based Philox streams keyed by ``(seed,
replication)``, so replications can be computed in any order or in parallel
and still give identical results.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.special import ndtr

from ._validation import ConfigurationError

__all__ = [
    "IntraclassBlock",
    "OmegaBlock",
    "DiagonalBlock",
    "BlockCovariance",
    "MixtureCovariance",
    "ScenarioSpec",
    "PopulationTruth",
    "Sampler",
    "SCENARIOS",
    "ceil_root",
    "rng_for",
    "build_intraclass",
    "build_omega",
    "make_scenario",
    "oracle_deltas",
    "asymptotic_error",
    "trace_product",
]

SCENARIOS = ("S1", "S2", "S3", "S4", "S5")


def ceil_root(p, num, den):
    """Exact ``ceil(p ** (num / den))`` for positive integers, free of rounding."""
    target = p**num
    m = max(0, int(round(target ** (1.0 / den))) - 2)
    while m**den < target:
        m += 1
    return m


def rng_for(seed, replication):
    """Independent generator for one replication of one seeded experiment."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


# -- covariance building blocks ---------------------------------------------------------


class IntraclassBlock:
    """``scale * (I_t + 1 1^T) / 2``, stored as rank one plus identity."""

    def __init__(self, t, scale=1.0):
        if t < 1:
            raise ConfigurationError(f"block size must be >= 1, got {t}")
        self.t = int(t)
        self.scale = float(scale)

    def matmul(self, V):
        return self.scale * (V + V.sum(axis=0, keepdims=True)) / 2.0

    def rows(self, i0, i1):
        out = np.full((i1 - i0, self.t), self.scale / 2.0)
        out[np.arange(i1 - i0), np.arange(i0, i1)] += self.scale / 2.0
        return out

    def trace(self):
        return self.scale * self.t

    def trace_sq(self):
        # entries: diagonal 1, off-diagonal 1/2
        t = self.t
        return self.scale**2 * (t + t * (t - 1) / 4.0)

    def _householder(self, V):
        # reflection mapping e_1 to the unit ones vector
        t = self.t
        w = np.full(t, 1.0 / math.sqrt(t))
        w[0] -= 1.0
        norm2 = w @ w
        if norm2 == 0:
            return V
        return V - np.outer(w, (2.0 / norm2) * (w @ V))

    def eigvals(self):
        lam = np.full(self.t, self.scale / 2.0)
        lam[0] = self.scale * (self.t + 1) / 2.0
        return lam

    def factor(self, Z):
        """``H diag(sqrt(lam)) Z`` with ``H`` an orthonormal eigenbasis."""
        return self._householder(np.sqrt(self.eigvals())[:, None] * Z)

    def leading(self, k):
        k = min(k, self.t)
        E = np.zeros((self.t, k))
        E[np.arange(k), np.arange(k)] = 1.0
        return self.eigvals()[:k], self._householder(E)


@lru_cache(maxsize=16)
def _omega_dense(t, rho):
    r = np.arange(1, t + 1)
    b = np.sqrt(0.5 + r / (t + 1))
    lag = np.abs(np.subtract.outer(r, r)) ** (1.0 / 3.0)
    M = np.outer(b, b) * rho**lag
    M.flags.writeable = False
    return M


@lru_cache(maxsize=16)
def _omega_eigh(t, rho):
    w, V = np.linalg.eigh(_omega_dense(t, rho))
    order = np.argsort(w)[::-1]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(t)])
    w.flags.writeable = False
    V.flags.writeable = False
    return w, V


class OmegaBlock:
    """``scale * B R B`` with ``R_ij = rho ** (|i - j| ** (1/3))`` and
    ``B = diag(sqrt(0.5 + r / (t + 1)))``. Dense and cached per ``(t, rho)``."""

    def __init__(self, t, rho, scale=1.0):
        if t < 1:
            raise ConfigurationError(f"block size must be >= 1, got {t}")
        if not abs(rho) < 1:
            raise ConfigurationError(f"|rho| must be < 1, got {rho}")
        self.t = int(t)
        self.rho = float(rho)
        self.scale = float(scale)

    @property
    def dense(self):
        return _omega_dense(self.t, self.rho)

    def matmul(self, V):
        return self.scale * (self.dense @ V)

    def rows(self, i0, i1):
        return self.scale * self.dense[i0:i1]

    def trace(self):
        return self.scale * float(np.trace(self.dense))

    def trace_sq(self):
        return self.scale**2 * float(np.sum(self.dense * self.dense))

    def eigvals(self):
        return self.scale * _omega_eigh(self.t, self.rho)[0]

    def factor(self, Z):
        w, V = _omega_eigh(self.t, self.rho)
        return V @ (np.sqrt(self.scale * w)[:, None] * Z)

    def leading(self, k):
        w, V = _omega_eigh(self.t, self.rho)
        return self.scale * w[:k], V[:, :k]


class DiagonalBlock:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)
        self.t = self.values.shape[0]

    def matmul(self, V):
        return self.values[:, None] * V

    def rows(self, i0, i1):
        out = np.zeros((i1 - i0, self.t))
        out[np.arange(i1 - i0), np.arange(i0, i1)] = self.values[i0:i1]
        return out

    def trace(self):
        return float(self.values.sum())

    def trace_sq(self):
        return float(np.sum(self.values**2))

    def eigvals(self):
        return self.values

    def factor(self, Z):
        return np.sqrt(self.values)[:, None] * Z

    def leading(self, k):
        order = np.argsort(-self.values, kind="stable")[:k]
        E = np.zeros((self.t, len(order)))
        E[order, np.arange(len(order))] = 1.0
        return self.values[order], E


def build_intraclass(t):
    """Intraclass correlation block ``(I_t + 1 1^T) / 2``."""
    return IntraclassBlock(t)


def build_omega(t, rho):
    """Correlation block ``B (rho ** |i-j|^(1/3)) B``."""
    return OmegaBlock(t, rho)


class BlockCovariance:
    """Block-diagonal covariance assembled from structured blocks."""

    def __init__(self, blocks):
        self.blocks = list(blocks)
        sizes = [b.t for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.p = int(self.offsets[-1])

    @property
    def is_diagonal(self):
        return all(isinstance(b, DiagonalBlock) for b in self.blocks)

    def diag(self):
        return np.concatenate([np.diag(b.rows(0, b.t)) if not isinstance(b, DiagonalBlock)
                               else b.values for b in self.blocks])

    def matmul(self, V):
        V = np.asarray(V, dtype=np.float64)
        out = np.empty_like(V)
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out[lo:hi] = b.matmul(V[lo:hi])
        return out

    def rows(self, i0, i1):
        out = np.zeros((i1 - i0, self.p))
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            a, z = max(i0, lo), min(i1, hi)
            if a < z:
                out[a - i0 : z - i0, lo:hi] = b.rows(a - lo, z - lo)
        return out

    def dense(self):
        return self.rows(0, self.p)

    def trace(self):
        return float(sum(b.trace() for b in self.blocks))

    def trace_sq(self):
        return float(sum(b.trace_sq() for b in self.blocks))

    def quad(self, v):
        v = np.asarray(v, dtype=np.float64)
        return float(v @ self.matmul(v[:, None])[:, 0])

    def factor(self, Z):
        out = np.empty_like(Z)
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out[lo:hi] = b.factor(Z[lo:hi])
        return out

    def leading_eigpairs(self, k):
        vals, vecs = [], []
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            lam, E = b.leading(k)
            for j in range(len(lam)):
                v = np.zeros(self.p)
                v[lo:hi] = E[:, j]
                vals.append(lam[j])
                vecs.append(v)
        order = np.argsort(-np.asarray(vals), kind="stable")[:k]
        return np.asarray(vals)[order], np.column_stack([vecs[i] for i in order])


class MixtureCovariance:
    """Covariance of an equal-weight Gaussian mixture sharing one ``OmegaBlock``.

    ``Sigma = (1/9) sum_{l<l'} (m_l - m_l')(m_l - m_l')^T + Omega``.
    """

    def __init__(self, omega, component_means):
        self.omega = omega
        self.component_means = np.asarray(component_means, dtype=np.float64)
        self.p = omega.t
        M = self.component_means
        L = len(M)
        diffs = [(M[a] - M[b]) for a in range(L) for b in range(a + 1, L)]
        self.low_rank = np.column_stack(diffs) / 3.0

    @property
    def is_diagonal(self):
        return False

    def matmul(self, V):
        V = np.asarray(V, dtype=np.float64)
        return self.omega.matmul(V) + self.low_rank @ (self.low_rank.T @ V)

    def rows(self, i0, i1):
        return self.omega.rows(i0, i1) + self.low_rank[i0:i1] @ self.low_rank.T

    def dense(self):
        return self.rows(0, self.p)

    def diag(self):
        return np.diag(self.omega.dense) * self.omega.scale + np.sum(self.low_rank**2, axis=1)

    def trace(self):
        return self.omega.trace() + float(np.sum(self.low_rank**2))

    def trace_sq(self):
        L = self.low_rank
        G = L.T @ L
        return (self.omega.trace_sq() + 2.0 * float(np.sum(L * self.omega.matmul(L)))
                + float(np.sum(G * G)))

    def quad(self, v):
        v = np.asarray(v, dtype=np.float64)
        return float(v @ self.matmul(v[:, None])[:, 0])

    def leading_eigpairs(self, k):
        op = LinearOperator((self.p, self.p), matvec=lambda v: self.matmul(v[:, None])[:, 0],
                            dtype=np.float64)
        w, V = eigsh(op, k=k, which="LA", v0=np.ones(self.p), tol=1e-12)
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
        idx = np.argmax(np.abs(V), axis=0)
        return w, V * np.sign(V[idx, np.arange(V.shape[1])])


def trace_product(a, b, chunk=512):
    """``tr(A B)`` for two structured symmetric covariances of equal size."""
    if a.is_diagonal and b.is_diagonal:
        return float(np.sum(a.diag() * b.diag()))
    if a is b:
        return a.trace_sq()
    total = 0.0
    for i0 in range(0, a.p, chunk):
        i1 = min(a.p, i0 + chunk)
        total += float(np.sum(a.rows(i0, i1) * b.rows(i0, i1)))
    return total


# -- projector algebra ------------------------------------------------------------------


class _LowRank:
    """``C D C^T`` with ``C`` of shape (p, m)."""

    def __init__(self, C, D):
        self.C = C
        self.D = D

    def apply(self, Y):
        return self.C @ (self.D @ (self.C.T @ Y))


def _projector_part(*Hs_and_weights):
    # the L in A = I - L, for A = sum_i w_i (I - H_i H_i^T) with sum w_i = 1
    Cs, ds = [], []
    for H, wgt in Hs_and_weights:
        Cs.append(H)
        ds.extend([wgt] * H.shape[1])
    C = np.column_stack(Cs) if Cs else np.zeros((0, 0))
    return _LowRank(C, np.diag(ds))


def _trace_chain(factors):
    """Trace of a product whose factors are covariances or ``I - L`` projectors.

    Each projector is expanded as ``I - L``; terms with a low-rank factor are
    evaluated by cycling that factor to the front and pushing its thin basis
    through the remaining factors.
    """
    proj_idx = [i for i, f in enumerate(factors) if isinstance(f, _LowRank)]
    total = 0.0
    for mask in range(1 << len(proj_idx)):
        kept, sign = [], 1.0
        chosen = {proj_idx[b] for b in range(len(proj_idx)) if mask >> b & 1}
        for i, f in enumerate(factors):
            if isinstance(f, _LowRank):
                if i in chosen:
                    if f.C.shape[1] == 0:
                        sign = 0.0
                    kept.append(f)
                    sign = -sign
            else:
                kept.append(f)
        if sign == 0.0:
            continue
        lr = [i for i, f in enumerate(kept) if isinstance(f, _LowRank)]
        if not lr:
            covs = kept
            if len(covs) == 1:
                val = covs[0].trace()
            elif len(covs) == 2:
                val = trace_product(covs[0], covs[1])
            else:
                raise NotImplementedError("products of more than two covariances")
        else:
            s = lr[0]
            rot = kept[s:] + kept[:s]
            first = rot[0]
            Y = first.C
            for f in reversed(rot[1:]):
                Y = f.apply(Y) if isinstance(f, _LowRank) else f.matmul(Y)
            val = float(np.trace(first.D @ (first.C.T @ Y)))
        total += sign * val
    return total


def _apply_projector(L, v):
    return v - L.apply(v[:, None])[:, 0] if L.C.shape[1] else v


# -- scenarios ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    p: int
    seed: int = 0
    replications: int = 2000

    def __post_init__(self):
        sid = self.id.upper()
        if sid not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.id!r}; expected one of {SCENARIOS}")
        object.__setattr__(self, "id", sid)
        if self.p < 32:
            raise ConfigurationError(f"p must be >= 32, got {self.p}")


@dataclass(frozen=True)
class PopulationTruth:
    """Known population quantities for one scenario.

    The ``delta_*`` fields and error rates are filled by :func:`oracle_deltas`
    (they depend on the sample sizes).
    """

    mu1: np.ndarray
    mu2: np.ndarray
    cov1: object
    cov2: object
    lam1: np.ndarray
    lam2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    n1: int
    n2: int
    delta: float
    delta_a: float
    delta_o: Optional[tuple] = None
    delta_i: Optional[tuple] = None
    delta_oa: Optional[tuple] = None
    delta_ia: Optional[tuple] = None
    edot: Optional[tuple] = None
    edot_a: Optional[tuple] = None

    @property
    def k(self):
        return (self.H1.shape[1], self.H2.shape[1])

    @property
    def p(self):
        return self.mu1.shape[0]


class Sampler:
    """Draws p x n samples for either class of a scenario."""

    def __init__(self, spec, truth, kind, mixture_means=None):
        self.spec = spec
        self.truth = truth
        self.kind = kind
        self._mixture_means = mixture_means

    def draw(self, cls, n, rng):
        t = self.truth
        mu = t.mu1 if cls == 1 else t.mu2
        cov = t.cov1 if cls == 1 else t.cov2
        p = t.p
        if self.kind == "gauss":
            Z = rng.standard_normal((p, n))
            return cov.factor(Z) + mu[:, None]
        if self.kind == "chisq":
            Z = (rng.chisquare(1.0, size=(p, n)) - 1.0) / math.sqrt(2.0)
            return cov.factor(Z) + mu[:, None]
        # equal-weight mixture, recentred to have mean mu
        means = self._mixture_means[cls - 1]
        comp = rng.integers(0, means.shape[0], size=n)
        Z = rng.standard_normal((p, n))
        Y = cov.omega.factor(Z) + means[comp].T
        return Y - means.mean(axis=0)[:, None] + mu[:, None]

    def replication(self, rep):
        """Training samples and one test point per class for replication ``rep``."""
        rng = rng_for(self.spec.seed, rep)
        X1 = self.draw(1, self.truth.n1, rng)
        X2 = self.draw(2, self.truth.n2, rng)
        x01 = self.draw(1, 1, rng)[:, 0]
        x02 = self.draw(2, 1, rng)[:, 0]
        return X1, X2, x01, x02


def _mu2_pm(p):
    # last 2*ceil(p^(3/5)/2) entries: +1 then -1
    m = 1
    while (2 * m) ** 5 < p**3:
        m += 1
    mu = np.zeros(p)
    mu[p - 2 * m : p - m] = 1.0
    mu[p - m :] = -1.0
    return mu


def make_scenario(spec):
    """Build the population truth and a seeded sampler for a scenario.

    Returns
    -------
    (PopulationTruth, Sampler)
        The truth already carries the delta quantities and asymptotic error
        rates for the scenario's sample sizes.
    """
    p = spec.p
    sid = spec.id
    mixture_means = None
    if sid == "S1":
        n1 = ceil_root(p, 2, 5)
        d = np.ones(p)
        d[0] = p ** (2.0 / 3.0)
        d[1] = p ** 0.5
        cov1 = BlockCovariance([DiagonalBlock(d)])
        cov2 = BlockCovariance([DiagonalBlock(2.0 * d)])
        mu1 = np.zeros(p)
        mu2 = np.zeros(p)
        mu2[p - ceil_root(p, 1, 2):] = 1.0
        kind = "gauss"
    elif sid in ("S2", "S3"):
        n1 = ceil_root(p, 1, 2)
        if sid == "S2":
            a, b = ceil_root(p, 2, 3), ceil_root(p, 1, 2)
        else:
            a, b = -(-p // 3), -(-p // 9)
        covs = []
        for mult, c in ((1, 1.0), (2, 1.3)):
            t3 = p - mult * a - mult * b
            if t3 < 1:
                raise ConfigurationError(f"p={p} is too small for scenario {sid} block sizes")
            covs.append(BlockCovariance([IntraclassBlock(mult * a), IntraclassBlock(mult * b),
                                         OmegaBlock(t3, 0.3, c)]))
        cov1, cov2 = covs
        mu1, mu2 = np.zeros(p), _mu2_pm(p)
        kind = "gauss" if sid == "S2" else "chisq"
    else:
        n1 = ceil_root(p, 2, 5) if sid == "S4" else ceil_root(p, 3, 5)
        q1 = (ceil_root(p, 2, 3), 2 * ceil_root(p, 2, 3))
        q2 = (2 * ceil_root(p, 1, 2), ceil_root(p, 1, 2))
        covs, mixture_means = [], []
        for i, rho in ((0, 0.3), (1, 0.5)):
            if q1[i] + q2[i] > p:
                raise ConfigurationError(f"p={p} is too small for scenario {sid}")
            M = np.zeros((3, p))
            M[0, : q1[i]] = math.sqrt(3.0)
            M[1, q1[i] : q1[i] + q2[i]] = math.sqrt(3.0)
            mixture_means.append(M)
            covs.append(MixtureCovariance(OmegaBlock(p, rho), M))
        cov1, cov2 = covs
        mu1, mu2 = np.zeros(p), _mu2_pm(p)
        kind = "mixture"

    n2 = 2 * n1
    lam1, H1 = cov1.leading_eigpairs(2)
    lam2, H2 = cov2.leading_eigpairs(2)
    L1 = _projector_part((H1, 1.0))
    L2 = _projector_part((H2, 1.0))
    mu_a = _apply_projector(L1, mu1) - _apply_projector(L2, mu2)
    truth = PopulationTruth(
        mu1=mu1, mu2=mu2, cov1=cov1, cov2=cov2, lam1=lam1, lam2=lam2, H1=H1, H2=H2,
        n1=n1, n2=n2, delta=float(np.sum((mu1 - mu2) ** 2)), delta_a=float(mu_a @ mu_a),
    )
    truth = oracle_deltas(truth, n1, n2)
    return truth, Sampler(spec, truth, kind, mixture_means)


def oracle_deltas(truth, n1, n2):
    """Standard deviations of the distance statistics under the population truth.

    Fills ``delta_o``, ``delta_i`` (untransformed statistic), ``delta_oa``,
    ``delta_ia`` (oracle transformed statistic), and the asymptotic error rates
    ``edot[i] = Phi(-Delta / (2 delta_i))`` and
    ``edot_a[i] = Phi(-Delta_A / (2 delta_{i,A}))``, each as a (class 1,
    class 2) pair. All traces go through the k-dimensional eigenbases.
    """
    covs = (truth.cov1, truth.cov2)
    mus = (truth.mu1, truth.mu2)
    ns = (int(n1), int(n2))
    Hs = (truth.H1, truth.H2)
    L = tuple(_projector_part((H, 1.0)) for H in Hs)
    L_star = _projector_part((Hs[0], 0.5), (Hs[1], 0.5))
    mu = mus[0] - mus[1]

    tr_sq = tuple(c.trace_sq() for c in covs)
    tr_12 = trace_product(covs[0], covs[1])
    tail = sum(tr_sq[l] / (2 * ns[l] * (ns[l] - 1)) for l in range(2))
    tr_sq_a = tuple(_trace_chain([L[l], covs[l], L[l], L[l], covs[l], L[l]]) for l in range(2))
    tail_a = sum(tr_sq_a[l] / (2 * ns[l] * (ns[l] - 1)) for l in range(2))

    a_mu = tuple(_apply_projector(L[i], mus[i]) for i in range(2))
    mu_a = a_mu[0] - a_mu[1]

    def quad_proj(Lp, cov, v):
        w = _apply_projector(Lp, v)
        return cov.quad(w)

    d_o, d_i, d_oa, d_ia = [], [], [], []
    for i in range(2):
        j = 1 - i
        do2 = tr_sq[i] / ns[i] + tr_12 / ns[j] + tail
        di2 = do2 + covs[i].quad(mu) + covs[j].quad(mu) / ns[j]
        t_same = _trace_chain([L_star, covs[i], L_star, L[i], covs[i], L[i]])
        t_other = _trace_chain([L_star, covs[i], L_star, L[j], covs[j], L[j]])
        doa2 = t_same / ns[i] + t_other / ns[j] + tail_a
        a12_mu = _apply_projector(L[0], mus[i]) - _apply_projector(L[1], mus[i])
        dia2 = (doa2 + quad_proj(L_star, covs[i], mu_a)
                + quad_proj(L[i], covs[i], a12_mu) / (4 * ns[i])
                + quad_proj(L[j], covs[j], mu_a - a12_mu / 2.0) / ns[j])
        d_o.append(math.sqrt(do2))
        d_i.append(math.sqrt(di2))
        d_oa.append(math.sqrt(max(doa2, 0.0)))
        d_ia.append(math.sqrt(max(dia2, 0.0)))

    delta_a = float(mu_a @ mu_a)
    return replace(
        truth,
        n1=ns[0],
        n2=ns[1],
        delta_a=delta_a,
        delta_o=tuple(d_o),
        delta_i=tuple(d_i),
        delta_oa=tuple(d_oa),
        delta_ia=tuple(d_ia),
        edot=tuple(asymptotic_error(truth.delta, d) for d in d_i),
        edot_a=tuple(asymptotic_error(delta_a, d) for d in d_ia),
    )


def asymptotic_error(delta, delta_denom):
    """Normal-approximation error rate ``Phi(-delta / (2 * delta_denom))``."""
    if not delta_denom > 0:
        raise ConfigurationError(f"delta_denom must be positive, got {delta_denom}")
    return float(ndtr(-delta / (2.0 * delta_denom)))
