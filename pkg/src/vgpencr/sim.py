"""Seeded generators for the three simulation designs.

Every generator returns ``(train, test)``. The test set is an independent
draw from the same process, expanded with the training basis. Group
indices are 0-based in memory and 1-based in files.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import SplineBasisSpec, bspline_spec, expand_varying_coefficient_design, natural_cubic_spec
from .errors import GTooSmallError, KTooSmallError
from .grouped_model import GroupedDesign, GroupSpec

SCENARIOS = ("gam", "categorical", "varying")


@dataclass
class SimTruth:
    active_groups: frozenset
    scenario: str
    sigma_true: float = 1.0
    beta0: np.ndarray | None = None
    functions: list | None = None  # varying-coefficient truths, one callable per group

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "active_groups": sorted(int(g) + 1 for g in self.active_groups),
            "sigma_true": self.sigma_true,
        }
        if self.beta0 is not None:
            out["beta0"] = [float(b) for b in self.beta0]
        return out


@dataclass
class SimDataset:
    y_raw: np.ndarray
    design: GroupedDesign
    raw_covariates: np.ndarray
    truth: SimTruth
    seed: int
    signal: np.ndarray  # noiseless mean response
    bases: list = field(default_factory=list)  # SplineBasisSpec per group (or one shared)
    subjects: np.ndarray | None = None
    times: np.ndarray | None = None

    @property
    def G(self) -> int:
        return self.design.spec.G


def _rngs(seed):
    return np.random.default_rng([int(seed), 0]), np.random.default_rng([int(seed), 1])


# --- additive model ------------------------------------------------------------


def gam_signal(z: np.ndarray) -> np.ndarray:
    return 5.0 * np.sin(np.pi * z[:, 0]) + 2.5 * (z[:, 2] ** 2 - 0.5) + np.exp(z[:, 3]) + 3.0 * z[:, 4]


def _gam_draw(rng, n, G, noise_sd):
    z = rng.uniform(0.0, 1.0, size=(n, G))
    mean = gam_signal(z)
    return z, mean, mean + noise_sd * rng.standard_normal(n)


def gen_gam(n: int = 200, G: int = 50, seed: int = 0, n_test: int = 200, dim: int = 4, noise_sd: float = 1.0):
    """Additive model: 5 sin(pi z1) + 2.5 (z3^2 - 0.5) + exp(z4) + 3 z5 + noise."""
    if G < 5:
        raise GTooSmallError(f"the additive design needs G >= 5, got {G}")
    r_train, r_test = _rngs(seed)
    z, mean, y = _gam_draw(r_train, n, G, noise_sd)
    zt, mean_t, yt = _gam_draw(r_test, n_test, G, noise_sd)
    bases = [natural_cubic_spec(z[:, g], dim) for g in range(G)]
    spec = GroupSpec((dim,) * G)

    def expand(zz):
        return np.hstack([b.evaluate(zz[:, g]) for g, b in enumerate(bases)])

    truth = SimTruth(frozenset({0, 2, 3, 4}), "gam", noise_sd)
    train = SimDataset(y, GroupedDesign(expand(z), spec), z, truth, seed, mean, bases)
    test = SimDataset(yt, GroupedDesign(expand(zt), spec), zt, truth, seed, mean_t, bases)
    return train, test


# --- categorical predictors ----------------------------------------------------

CAT_PROBS = {0: (0.3, 0.65, 0.05), 2: (0.2, 0.5, 0.3), 3: (0.5, 0.2, 0.3)}
UNIFORM3 = (1 / 3, 1 / 3, 1 / 3)


def categorical_signal(z: np.ndarray) -> np.ndarray:
    z1, z2 = z[:, 0], z[:, 1]
    return (
        2.0 * (z1 == 2) - 1.0 * (z1 == 3) + 4.5 * (z2 == 2) + 5.0 * (z2 == 3)
        + 1.5 * ((z1 == 2) & (z2 == 2)) - 3.5 * ((z1 == 2) & (z2 == 3))
        + 2.0 * ((z1 == 3) & (z2 == 2)) + 4.0 * ((z1 == 3) & (z2 == 3))
    )


def categorical_design(z: np.ndarray) -> tuple[np.ndarray, GroupSpec]:
    """Reference-coded main effects (2 columns each, level 1 dropped), then
    all pairwise interactions (4 columns each) in lexicographic pair order."""
    n, K = z.shape
    dummies = [np.column_stack([z[:, k] == 2, z[:, k] == 3]).astype(float) for k in range(K)]
    cols = list(dummies)
    for j, k in itertools.combinations(range(K), 2):
        cols.append(np.einsum("na,nb->nab", dummies[j], dummies[k]).reshape(n, 4))
    sizes = (2,) * K + (4,) * (K * (K - 1) // 2)
    return np.hstack(cols), GroupSpec(sizes)


def interaction_group(j: int, k: int, K: int) -> int:
    """0-based group index of the (j, k) interaction, j < k."""
    return K + list(itertools.combinations(range(K), 2)).index((j, k))


def categorical_beta0(K: int) -> np.ndarray:
    _, spec = categorical_design(np.ones((1, K), dtype=int))
    beta = np.zeros(spec.p)
    beta[spec.slice(0)] = (2.0, -1.0)
    beta[spec.slice(1)] = (4.5, 5.0)
    beta[spec.slice(interaction_group(0, 1, K))] = (1.5, -3.5, 2.0, 4.0)
    return beta


def _cat_draw(rng, n, K, noise_sd):
    z = np.empty((n, K), dtype=int)
    for k in range(K):
        z[:, k] = rng.choice(3, size=n, p=CAT_PROBS.get(k, UNIFORM3)) + 1
    mean = categorical_signal(z)
    return z, mean, mean + noise_sd * rng.standard_normal(n)


def gen_categorical(n: int = 200, K: int = 10, seed: int = 0, n_test: int = 200, noise_sd: float = 1.0):
    if K < 3:
        raise KTooSmallError(f"the categorical design needs K >= 3, got {K}")
    r_train, r_test = _rngs(seed)
    z, mean, y = _cat_draw(r_train, n, K, noise_sd)
    zt, mean_t, yt = _cat_draw(r_test, n_test, K, noise_sd)
    X, spec = categorical_design(z)
    Xt, _ = categorical_design(zt)
    truth = SimTruth(
        frozenset({0, 1, interaction_group(0, 1, K)}), "categorical", noise_sd, beta0=categorical_beta0(K)
    )
    train = SimDataset(y, GroupedDesign(X, spec), z, truth, seed, mean)
    test = SimDataset(yt, GroupedDesign(Xt, spec), zt, truth, seed, mean_t)
    return train, test


# --- varying coefficients --------------------------------------------------------

VC_TIMES = np.arange(1, 21, dtype=float)
VC_SKIP = 0.6
VC_DOMAIN = (0.0, 20.5)
TAIL_RHO = 0.5


def vc_true_functions(G: int) -> list:
    fs: list[Callable] = [
        lambda t: 10.0 * np.sin(np.pi * t / 15.0),
        lambda t: -0.6 * t + 6.0,
        lambda t: -1.0 + 2.0 * np.sin(np.pi * (t - 25.0) / 8.0),
        lambda t: 1.0 + 2.0 * np.cos(np.pi * (t - 25.0) / 15.0),
        lambda t: 2.0 + 10.0 / (1.0 + np.exp(10.0 - t)),
        lambda t: np.full_like(np.asarray(t, dtype=float), -5.0),
    ]
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    return fs + [zero] * (G - 6)


def _subject_times(rng):
    while True:
        keep = rng.uniform(size=VC_TIMES.size) >= VC_SKIP
        if keep.any():
            t = VC_TIMES[keep]
            return t + rng.uniform(-0.5, 0.5, size=t.size)


def _tail_covariates(rng, t: np.ndarray, k: int) -> np.ndarray:
    """k independent Gaussian series on times t with corr 0.5^|t - s|.

    Markov construction: x_j = rho^dt x_{j-1} + sqrt(1 - rho^(2 dt)) e_j.
    """
    x = np.empty((t.size, k))
    x[0] = rng.standard_normal(k)
    for j in range(1, t.size):
        a = TAIL_RHO ** (t[j] - t[j - 1])
        x[j] = a * x[j - 1] + np.sqrt(1.0 - a * a) * rng.standard_normal(k)
    return x


def _vc_draw(rng, n, G, noise_sd):
    subj, times, xs = [], [], []
    for i in range(n):
        t = _subject_times(rng)
        m = t.size
        x = np.empty((m, G))
        x[:, 0] = rng.uniform(t / 10.0, 2.0 + t / 10.0)
        sd = np.sqrt((1.0 + x[:, 0]) / (2.0 + x[:, 0]))
        x[:, 1:5] = rng.standard_normal((m, 4)) * sd[:, None]
        x[:, 5] = rng.normal(1.5 * np.exp(t / 40.0), 1.0)
        if G > 6:
            x[:, 6:] = _tail_covariates(rng, t, G - 6)
        subj.append(np.full(m, i))
        times.append(t)
        xs.append(x)
    subj = np.concatenate(subj)
    times = np.concatenate(times)
    X = np.vstack(xs)
    fs = vc_true_functions(G)
    B0 = np.column_stack([f(times) for f in fs])
    mean = np.sum(X * B0, axis=1)
    y = mean + noise_sd * rng.standard_normal(mean.size)
    return subj, times, X, mean, y


def _vc_dataset(subj, times, X, mean, y, G, d, spec, truth, seed):
    obs = [(int(subj[k]), float(times[k]), X[k]) for k in range(len(y))]
    design, order, spec = expand_varying_coefficient_design(obs, G, d, spec.domain, spec)
    return SimDataset(
        y[order], design, X[order], truth, seed, mean[order], [spec], subj[order], times[order]
    )


def gen_varying_coeff(n: int = 50, G: int = 30, seed: int = 0, d: int = 8, noise_sd: float = 1.0):
    """Varying-coefficient panel; rows ordered by subject then time."""
    if G < 6:
        raise GTooSmallError(f"the varying-coefficient design needs G >= 6, got {G}")
    r_train, r_test = _rngs(seed)
    spec = bspline_spec(d, VC_DOMAIN)
    truth = SimTruth(frozenset(range(6)), "varying", noise_sd, functions=vc_true_functions(G))
    train = _vc_dataset(*_vc_draw(r_train, n, G, noise_sd), G, d, spec, truth, seed)
    test = _vc_dataset(*_vc_draw(r_test, n, G, noise_sd), G, d, spec, truth, seed)
    return train, test


def generate(scenario: str, seed: int, n: int | None = None, size: int | None = None, **kw):
    """Dispatch by scenario name; ``size`` is G (gam, varying) or K (categorical)."""
    if scenario == "gam":
        return gen_gam(n or 200, size or 50, seed, **kw)
    if scenario in ("categorical", "cat"):
        return gen_categorical(n or 200, size or 10, seed, **kw)
    if scenario in ("varying", "vc"):
        return gen_varying_coeff(n or 50, size or 30, seed, **kw)
    raise ValueError(f"unknown scenario {scenario!r}")
